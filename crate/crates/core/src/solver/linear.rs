//! Symmetric positive-definite 5-point-stencil systems on a tensor grid,
//! solved by conjugate gradients with an IC(0) preconditioner.
//!
//! Nodes are indexed with y fastest (`k = ix*ny + iy`). Dirichlet nodes are
//! kept in the system as identity rows with zeroed links, which preserves
//! symmetry and the regular stencil structure.

/// Coefficient storage for A = diag + symmetric links to (k, k+1) and
/// (k, k+ny). Link arrays have length n; entries that would cross the grid
/// edge are zero.
pub struct StencilMatrix {
    pub ny: usize,
    pub diag: Vec<f64>,
    /// Link between k and k+1 (next y node in the same column).
    pub link_y: Vec<f64>,
    /// Link between k and k+ny (same row, next column).
    pub link_x: Vec<f64>,
}

impl StencilMatrix {
    pub fn zeros(n: usize, ny: usize) -> Self {
        Self {
            ny,
            diag: vec![0.0; n],
            link_y: vec![0.0; n],
            link_x: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// y = A·x.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        let ny = self.ny;
        for k in 0..n {
            let mut acc = self.diag[k] * x[k];
            if self.link_y[k] != 0.0 {
                acc += self.link_y[k] * x[k + 1];
            }
            if k > 0 && self.link_y[k - 1] != 0.0 {
                acc += self.link_y[k - 1] * x[k - 1];
            }
            if k + ny < n && self.link_x[k] != 0.0 {
                acc += self.link_x[k] * x[k + ny];
            }
            if k >= ny && self.link_x[k - ny] != 0.0 {
                acc += self.link_x[k - ny] * x[k - ny];
            }
            y[k] = acc;
        }
    }
}

/// IC(0) factor sharing the stencil sparsity: A ≈ L·Lᵀ.
pub struct IcFactor {
    ny: usize,
    inv_d: Vec<f64>,
    l_y: Vec<f64>,
    l_x: Vec<f64>,
}

impl IcFactor {
    /// Incomplete Cholesky without fill-in. For the M-matrices produced by
    /// the Poisson discretization the pivots stay positive; if one does not
    /// (degenerate row), it falls back to the diagonal.
    pub fn build(a: &StencilMatrix) -> Self {
        let n = a.n();
        let ny = a.ny;
        let mut d = vec![0.0; n];
        let mut l_y = vec![0.0; n];
        let mut l_x = vec![0.0; n];
        for k in 0..n {
            let mut v = a.diag[k];
            if k > 0 {
                v -= l_y[k - 1] * l_y[k - 1];
            }
            if k >= ny {
                v -= l_x[k - ny] * l_x[k - ny];
            }
            if v <= 0.0 {
                v = a.diag[k].max(1e-300);
            }
            let dk = v.sqrt();
            d[k] = dk;
            if a.link_y[k] != 0.0 {
                l_y[k] = a.link_y[k] / dk;
            }
            if a.link_x[k] != 0.0 {
                l_x[k] = a.link_x[k] / dk;
            }
        }
        Self {
            ny,
            inv_d: d.iter().map(|&x| 1.0 / x).collect(),
            l_y,
            l_x,
        }
    }

    /// z = (L·Lᵀ)⁻¹ r.
    pub fn apply(&self, r: &[f64], z: &mut [f64], scratch: &mut [f64]) {
        let n = r.len();
        let ny = self.ny;
        // Forward: L w = r.
        for k in 0..n {
            let mut v = r[k];
            if k > 0 {
                v -= self.l_y[k - 1] * scratch[k - 1];
            }
            if k >= ny {
                v -= self.l_x[k - ny] * scratch[k - ny];
            }
            scratch[k] = v * self.inv_d[k];
        }
        // Backward: Lᵀ z = w.
        for k in (0..n).rev() {
            let mut v = scratch[k];
            if k + 1 < n {
                v -= self.l_y[k] * z[k + 1];
            }
            if k + ny < n {
                v -= self.l_x[k] * z[k + ny];
            }
            z[k] = v * self.inv_d[k];
        }
    }
}

/// Reusable CG workspace.
pub struct CgWorkspace {
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    scratch: Vec<f64>,
}

impl CgWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            r: vec![0.0; n],
            z: vec![0.0; n],
            p: vec![0.0; n],
            ap: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for A x = b, starting from x (often zero).
/// Returns the iteration count; stops on ‖r‖ ≤ rtol·‖b‖.
pub fn pcg(
    a: &StencilMatrix,
    b: &[f64],
    x: &mut [f64],
    ws: &mut CgWorkspace,
    rtol: f64,
    max_iter: usize,
) -> usize {
    let n = a.n();
    let pre = IcFactor::build(a);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return 0;
    }
    let tol = rtol * bnorm;

    a.mul(x, &mut ws.ap);
    for k in 0..n {
        ws.r[k] = b[k] - ws.ap[k];
    }
    pre.apply(&ws.r, &mut ws.z, &mut ws.scratch);
    ws.p.copy_from_slice(&ws.z);
    let mut rz = dot(&ws.r, &ws.z);

    for it in 0..max_iter {
        if dot(&ws.r, &ws.r).sqrt() <= tol {
            return it;
        }
        a.mul(&ws.p, &mut ws.ap);
        let pap = dot(&ws.p, &ws.ap);
        if pap <= 0.0 {
            return it; // numerically exhausted
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * ws.p[k];
            ws.r[k] -= alpha * ws.ap[k];
        }
        pre.apply(&ws.r, &mut ws.z, &mut ws.scratch);
        let rz_new = dot(&ws.r, &ws.z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            ws.p[k] = ws.z[k] + beta * ws.p[k];
        }
    }
    max_iter
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2D Laplacian with unit spacing and Dirichlet identity border rows.
    fn laplace_system(nx: usize, ny: usize) -> StencilMatrix {
        let n = nx * ny;
        let mut a = StencilMatrix::zeros(n, ny);
        let interior = |ix: usize, iy: usize| ix > 0 && ix < nx - 1 && iy > 0 && iy < ny - 1;
        for ix in 0..nx {
            for iy in 0..ny {
                let k = ix * ny + iy;
                if interior(ix, iy) {
                    a.diag[k] = 4.0;
                    if interior(ix, iy + 1) {
                        a.link_y[k] = -1.0;
                    }
                    if interior(ix + 1, iy) {
                        a.link_x[k] = -1.0;
                    }
                } else {
                    a.diag[k] = 1.0;
                }
            }
        }
        a
    }

    #[test]
    fn pcg_solves_laplace() {
        let (nx, ny) = (24, 17);
        let a = laplace_system(nx, ny);
        let n = nx * ny;
        // Manufactured solution.
        let want: Vec<f64> = (0..n).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let mut b = vec![0.0; n];
        a.mul(&want, &mut b);
        let mut x = vec![0.0; n];
        let mut ws = CgWorkspace::new(n);
        let iters = pcg(&a, &b, &mut x, &mut ws, 1e-12, 10 * n);
        assert!(iters < 10 * n);
        let err = x
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max err {err} after {iters} iters");
    }

    #[test]
    fn ic_preconditioner_is_spd_application() {
        let a = laplace_system(10, 10);
        let pre = IcFactor::build(&a);
        let n = a.n();
        let mut scratch = vec![0.0; n];
        let r: Vec<f64> = (0..n).map(|k| (k % 7) as f64 - 3.0).collect();
        let mut z = vec![0.0; n];
        pre.apply(&r, &mut z, &mut scratch);
        assert!(z.iter().all(|v| v.is_finite()));
        // M⁻¹ is positive definite: rᵀ M⁻¹ r > 0 for r ≠ 0.
        assert!(dot(&r, &z) > 0.0);
    }
}
