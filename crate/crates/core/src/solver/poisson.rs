//! Damped-Newton solution of the nonlinear Poisson equation
//! ∇·(ε∇ψ) = −q(p − n + N_D − N_A) at stepped reverse bias.
//!
//! Carriers are Boltzmann terms referenced to region-wise quasi-Fermi
//! levels: electrons to the cathode (φ_n = bias), holes in the anode and
//! drift to the grounded anode contact (φ_p = 0), and holes in each floating
//! guard ring to the ring's own level, re-evaluated between Newton solves
//! until fixed-point. Box integration on the tensor grid yields a symmetric
//! M-matrix Jacobian solved with IC(0)-preconditioned CG.

use crate::constants::{Q_C, UM_TO_CM};
use crate::device::{DeviceGeometry, DopingMap, MaterialConfig, RegionTag};

use super::linear::{CgWorkspace, StencilMatrix};
use super::{FieldSolution, SolverError};

/// Carrier densities above this are clamped (their ψ-derivative drops to
/// zero); converged solutions never sit at the clamp.
const DENSITY_CAP_PER_CM3: f64 = 1.0e25;

/// CG relative tolerance — tight so Newton updates stay effectively exact
/// and the ramp is deterministic.
const CG_RTOL: f64 = 1.0e-12;

const LINE_SEARCH_MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Converged when the largest applied node update is below this (V).
    pub tol_v: f64,
    pub max_iter: usize,
    /// Floating-ring level fixed point: convergence tolerance (V) and cap.
    pub ring_tol_v: f64,
    pub ring_max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol_v: 1.0e-6,
            max_iter: 50,
            ring_tol_v: 1.0e-4,
            ring_max_iter: 30,
        }
    }
}

/// Assembled discrete problem for one structure + material. Reused across
/// bias steps; owns its workspaces, so one instance per execution context.
pub struct PoissonProblem {
    pub nx: usize,
    pub ny: usize,
    /// Node coordinates (µm kept for reporting; cm used internally).
    pub xs_um: Vec<f64>,
    pub ys_um: Vec<f64>,
    xs_cm: Vec<f64>,
    ys_cm: Vec<f64>,
    /// Net doping per node (1/cm³).
    net: Vec<f64>,
    /// Flux conductances ε·Δs/h on the links (F units fold in ε).
    g_y: Vec<f64>,
    g_x: Vec<f64>,
    /// Control-volume area per node (cm²).
    area: Vec<f64>,
    /// Dirichlet flags and bias-independent boundary values; cathode nodes
    /// additionally shift by the applied bias.
    dirichlet: Vec<bool>,
    bc_base: Vec<f64>,
    bc_cathode: Vec<bool>,
    /// Hole quasi-Fermi reference: 0 = anode/drift (contact-tied), r ≥ 1 =
    /// floating ring r.
    p_ref: Vec<u32>,
    /// Per ring: core nodes and their vt·ln(N_A/n_i) offsets for the
    /// floating-level rule.
    ring_cores: Vec<Vec<(usize, f64)>>,
    n_rings: usize,
    // Material scalars.
    vt: f64,
    n_i: f64,
    eps: f64,
    ln_cap: f64,
    // Scratch.
    ws: CgWorkspace,
    matrix: StencilMatrix,
    resid: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
}

impl PoissonProblem {
    pub fn new(geom: &DeviceGeometry, doping: &DopingMap, mat: &MaterialConfig) -> Self {
        let nx = geom.nx();
        let ny = geom.ny();
        let n = nx * ny;
        let xs_cm: Vec<f64> = geom.xs_um.iter().map(|x| x * UM_TO_CM).collect();
        let ys_cm: Vec<f64> = geom.ys_um.iter().map(|y| y * UM_TO_CM).collect();
        let eps = mat.eps_f_per_cm();
        let vt = mat.vt();
        let n_i = mat.n_i_per_cm3;

        // Control-volume half-spans.
        let span = |c: &[f64], i: usize| -> f64 {
            let left = if i > 0 { 0.5 * (c[i] - c[i - 1]) } else { 0.0 };
            let right = if i + 1 < c.len() {
                0.5 * (c[i + 1] - c[i])
            } else {
                0.0
            };
            left + right
        };
        let cvx: Vec<f64> = (0..nx).map(|i| span(&xs_cm, i)).collect();
        let cvy: Vec<f64> = (0..ny).map(|i| span(&ys_cm, i)).collect();

        let mut area = vec![0.0; n];
        let mut g_y = vec![0.0; n];
        let mut g_x = vec![0.0; n];
        for ix in 0..nx {
            for iy in 0..ny {
                let k = ix * ny + iy;
                area[k] = cvx[ix] * cvy[iy];
                if iy + 1 < ny {
                    g_y[k] = eps * cvx[ix] / (ys_cm[iy + 1] - ys_cm[iy]);
                }
                if ix + 1 < nx {
                    g_x[k] = eps * cvy[iy] / (xs_cm[ix + 1] - xs_cm[ix]);
                }
            }
        }

        // Boundary conditions: the anode contact covers the top surface for
        // x ≤ anode_contact_x_max, the cathode the whole bottom; everything
        // else is homogeneous Neumann (symmetry plane, passivated top,
        // right edge), which box integration provides by construction.
        let mut dirichlet = vec![false; n];
        let mut bc_base = vec![0.0; n];
        let mut bc_cathode = vec![false; n];
        let contact_x = geom.anode_contact_x_max_um + 1e-9;
        for ix in 0..nx {
            if geom.xs_um[ix] <= contact_x {
                let k = ix * ny;
                dirichlet[k] = true;
                bc_base[k] = vt * (doping.net_per_cm3[k] / (2.0 * n_i)).asinh();
            }
            let k = ix * ny + (ny - 1);
            dirichlet[k] = true;
            bc_cathode[k] = true;
            bc_base[k] = vt * (doping.net_per_cm3[k] / (2.0 * n_i)).asinh();
        }

        let n_rings = doping.n_rings as usize;
        let mut p_ref = vec![0u32; n];
        let mut peak_acceptor = vec![0.0f64; n_rings];
        for k in 0..n {
            if let RegionTag::Ring(r) = doping.tags[k] {
                p_ref[k] = r;
                let na = -doping.net_per_cm3[k];
                if na > peak_acceptor[(r - 1) as usize] {
                    peak_acceptor[(r - 1) as usize] = na;
                }
            }
        }
        // Core nodes: within each ring's p-footprint, at ≥ half the ring's
        // own acceptor peak. The floating level is the min over the core of
        // ψ + vt·ln(N_A/n_i), which caps holes at the local acceptor level.
        let mut ring_cores: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rings];
        for k in 0..n {
            if let RegionTag::Ring(r) = doping.tags[k] {
                let na = -doping.net_per_cm3[k];
                if na >= 0.5 * peak_acceptor[(r - 1) as usize] && na > 0.0 {
                    ring_cores[(r - 1) as usize].push((k, vt * (na / n_i).ln()));
                }
            }
        }

        Self {
            nx,
            ny,
            xs_um: geom.xs_um.clone(),
            ys_um: geom.ys_um.clone(),
            xs_cm,
            ys_cm,
            net: doping.net_per_cm3.clone(),
            g_y,
            g_x,
            area,
            dirichlet,
            bc_base,
            bc_cathode,
            p_ref,
            ring_cores,
            n_rings,
            vt,
            n_i,
            eps,
            ln_cap: (DENSITY_CAP_PER_CM3 / n_i).ln(),
            ws: CgWorkspace::new(n),
            matrix: StencilMatrix::zeros(n, ny),
            resid: vec![0.0; n],
            delta: vec![0.0; n],
            trial: vec![0.0; n],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    /// Charge-neutral initial guess: each node at its reference quasi-Fermi
    /// level shifted by the neutral band offset.
    fn neutral_psi(&self, bias: f64, ring_levels: &[f64]) -> Vec<f64> {
        let n = self.n_nodes();
        let mut psi = vec![0.0; n];
        for k in 0..n {
            let net = self.net[k];
            let phi = if net >= 0.0 {
                bias
            } else {
                let r = self.p_ref[k];
                if r == 0 {
                    0.0
                } else {
                    ring_levels[(r - 1) as usize]
                }
            };
            psi[k] = phi + self.vt * (net / (2.0 * self.n_i)).asinh();
        }
        psi
    }

    fn apply_bcs(&self, psi: &mut [f64], bias: f64) {
        for k in 0..psi.len() {
            if self.dirichlet[k] {
                psi[k] = self.bc_base[k] + if self.bc_cathode[k] { bias } else { 0.0 };
            }
        }
    }

    /// Carrier density and its ψ-derivative factor (d/dψ = ±val/vt, zero at
    /// the clamp).
    #[inline]
    fn boltzmann(&self, u: f64) -> (f64, f64) {
        if u >= self.ln_cap {
            (DENSITY_CAP_PER_CM3, 0.0)
        } else if u < -700.0 {
            (0.0, 0.0)
        } else {
            let v = self.n_i * u.exp();
            (v, v / self.vt)
        }
    }

    /// Residual F and its 2-norm. F = Σ g·(ψ_k − ψ_nb) − q·A·(p − n + N).
    fn residual(&self, psi: &[f64], bias: f64, ring_levels: &[f64], out: &mut [f64]) -> f64 {
        let n = self.n_nodes();
        let ny = self.ny;
        let mut norm2 = 0.0;
        for k in 0..n {
            if self.dirichlet[k] {
                out[k] = 0.0;
                continue;
            }
            let mut flux = 0.0;
            if k % ny + 1 < ny {
                flux += self.g_y[k] * (psi[k] - psi[k + 1]);
            }
            if k % ny > 0 {
                flux += self.g_y[k - 1] * (psi[k] - psi[k - 1]);
            }
            if k + ny < n {
                flux += self.g_x[k] * (psi[k] - psi[k + ny]);
            }
            if k >= ny {
                flux += self.g_x[k - ny] * (psi[k] - psi[k - ny]);
            }
            let phi_p = match self.p_ref[k] {
                0 => 0.0,
                r => ring_levels[(r - 1) as usize],
            };
            let (p, _) = self.boltzmann((phi_p - psi[k]) / self.vt);
            let (nn, _) = self.boltzmann((psi[k] - bias) / self.vt);
            let f = flux - Q_C * self.area[k] * (p - nn + self.net[k]);
            out[k] = f;
            norm2 += f * f;
        }
        norm2.sqrt()
    }

    fn assemble_jacobian(&mut self, psi: &[f64], bias: f64, ring_levels: &[f64]) {
        let n = self.n_nodes();
        let ny = self.ny;
        for k in 0..n {
            if self.dirichlet[k] {
                self.matrix.diag[k] = 1.0;
                self.matrix.link_y[k] = 0.0;
                self.matrix.link_x[k] = 0.0;
                continue;
            }
            let mut diag = 0.0;
            if k % ny + 1 < ny {
                diag += self.g_y[k];
                // Zero links to Dirichlet neighbors keep the system symmetric
                // with identity rows; their contribution stays in F.
                self.matrix.link_y[k] = if self.dirichlet[k + 1] {
                    0.0
                } else {
                    -self.g_y[k]
                };
            } else {
                self.matrix.link_y[k] = 0.0;
            }
            if k % ny > 0 {
                diag += self.g_y[k - 1];
            }
            if k + ny < n {
                diag += self.g_x[k];
                self.matrix.link_x[k] = if self.dirichlet[k + ny] {
                    0.0
                } else {
                    -self.g_x[k]
                };
            } else {
                self.matrix.link_x[k] = 0.0;
            }
            if k >= ny {
                diag += self.g_x[k - ny];
            }
            let phi_p = match self.p_ref[k] {
                0 => 0.0,
                r => ring_levels[(r - 1) as usize],
            };
            let (_, dp) = self.boltzmann((phi_p - psi[k]) / self.vt);
            let (_, dn) = self.boltzmann((psi[k] - bias) / self.vt);
            diag += Q_C * self.area[k] * (dp + dn);
            self.matrix.diag[k] = diag;
        }
        // Fix row-side links of Dirichlet nodes' predecessors.
        for k in 0..n {
            if self.dirichlet[k] {
                if k > 0 {
                    self.matrix.link_y[k - 1] = 0.0;
                }
                if k >= ny {
                    self.matrix.link_x[k - ny] = 0.0;
                }
            }
        }
    }

    /// Damped Newton at fixed quasi-Fermi levels. Returns iterations used.
    fn newton(
        &mut self,
        psi: &mut Vec<f64>,
        bias: f64,
        ring_levels: &[f64],
        opts: &NewtonOptions,
    ) -> Result<usize, SolverError> {
        let n = self.n_nodes();
        self.apply_bcs(psi, bias);
        let mut resid = std::mem::take(&mut self.resid);
        let mut delta = std::mem::take(&mut self.delta);
        let mut trial = std::mem::take(&mut self.trial);
        let mut result = Err(SolverError::NewtonDiverged {
            bias_v: bias,
            iterations: opts.max_iter,
        });
        let mut fnorm = self.residual(psi, bias, ring_levels, &mut resid);
        for iter in 0..opts.max_iter {
            self.assemble_jacobian(psi, bias, ring_levels);
            for r in resid.iter_mut() {
                *r = -*r;
            }
            delta.fill(0.0);
            let mut ws = std::mem::replace(&mut self.ws, CgWorkspace::new(0));
            super::linear::pcg(&self.matrix, &resid, &mut delta, &mut ws, CG_RTOL, 20 * n);
            self.ws = ws;

            // Line search: halve on residual-norm increase.
            let mut t = 1.0;
            let mut accepted_norm = fnorm;
            for ls in 0..=LINE_SEARCH_MAX_HALVINGS {
                for k in 0..n {
                    trial[k] = psi[k] + t * delta[k];
                }
                let tn = self.residual(&trial, bias, ring_levels, &mut resid);
                if tn < fnorm || ls == LINE_SEARCH_MAX_HALVINGS {
                    accepted_norm = tn;
                    break;
                }
                t *= 0.5;
            }
            std::mem::swap(psi, &mut trial);
            fnorm = accepted_norm;

            let max_update = delta.iter().fold(0.0f64, |m, d| m.max((t * d).abs()));
            if max_update < opts.tol_v {
                result = Ok(iter + 1);
                break;
            }
            if !fnorm.is_finite() {
                result = Err(SolverError::NewtonDiverged {
                    bias_v: bias,
                    iterations: iter + 1,
                });
                break;
            }
        }
        // Residual was reused as RHS; recompute state vectors ownership.
        self.resid = resid;
        self.delta = delta;
        self.trial = trial;
        result
    }

    fn updated_ring_levels(&self, psi: &[f64], current: &[f64]) -> Vec<f64> {
        (0..self.n_rings)
            .map(|r| {
                let core = &self.ring_cores[r];
                if core.is_empty() {
                    return current[r];
                }
                core.iter()
                    .map(|&(k, offset)| psi[k] + offset)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Solve at one bias with the floating-ring fixed point. `init` supplies
    /// a warm start (previous ψ and ring levels).
    pub fn solve_at_bias(
        &mut self,
        bias: f64,
        init: Option<(&[f64], &[f64])>,
        opts: &NewtonOptions,
    ) -> Result<(Vec<f64>, Vec<f64>, usize), SolverError> {
        let (mut psi, mut levels) = match init {
            Some((p, l)) => (p.to_vec(), l.to_vec()),
            None => {
                let levels = vec![0.0; self.n_rings];
                (self.neutral_psi(bias, &levels), levels)
            }
        };
        let mut total_iters = 0;
        for _outer in 0..opts.ring_max_iter {
            total_iters += self.newton(&mut psi, bias, &levels, opts)?;
            if self.n_rings == 0 {
                return Ok((psi, levels, total_iters));
            }
            let new_levels = self.updated_ring_levels(&psi, &levels);
            let delta = levels
                .iter()
                .zip(&new_levels)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            levels = new_levels;
            if delta < opts.ring_tol_v {
                return Ok((psi, levels, total_iters));
            }
        }
        Err(SolverError::NewtonDiverged {
            bias_v: bias,
            iterations: total_iters,
        })
    }

    /// Cold starts at high bias walk an internal bias ladder; warm starts
    /// solve directly. Deterministic either way.
    pub fn solve_with_continuation(
        &mut self,
        bias: f64,
        init: Option<(&[f64], &[f64])>,
        opts: &NewtonOptions,
    ) -> Result<(Vec<f64>, Vec<f64>, usize), SolverError> {
        match self.solve_at_bias(bias, init, opts) {
            Ok(r) => Ok(r),
            Err(first_err) => {
                if init.is_some() || bias <= 1.0 {
                    return Err(first_err);
                }
                let mut state: Option<(Vec<f64>, Vec<f64>)> = None;
                let mut iters = 0;
                let mut b = 0.0;
                let mut step = (bias / 16.0).max(0.5);
                while b < bias {
                    let next = (b + step).min(bias);
                    let init_ref = state
                        .as_ref()
                        .map(|(p, l)| (p.as_slice(), l.as_slice()));
                    match self.solve_at_bias(next, init_ref, opts) {
                        Ok((p, l, it)) => {
                            iters += it;
                            state = Some((p, l));
                            b = next;
                        }
                        Err(e) => {
                            step *= 0.5;
                            if step < 1e-3 * bias.max(1.0) {
                                return Err(e);
                            }
                        }
                    }
                }
                let (p, l) = state.expect("ladder reached target bias");
                Ok((p, l, iters))
            }
        }
    }

    /// Per-node field magnitude from the discrete potential gradient. Each
    /// component takes the adjacent edge difference of larger magnitude,
    /// which keeps the sharp one-sided junction value.
    pub fn field_magnitude(&self, psi: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut e = vec![0.0; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                let k = ix * ny + iy;
                let mut ex: f64 = 0.0;
                if ix > 0 {
                    let v = (psi[k] - psi[k - ny]) / (self.xs_cm[ix] - self.xs_cm[ix - 1]);
                    if v.abs() > ex.abs() {
                        ex = v;
                    }
                }
                if ix + 1 < nx {
                    let v = (psi[k + ny] - psi[k]) / (self.xs_cm[ix + 1] - self.xs_cm[ix]);
                    if v.abs() > ex.abs() {
                        ex = v;
                    }
                }
                let mut ey: f64 = 0.0;
                if iy > 0 {
                    let v = (psi[k] - psi[k - 1]) / (self.ys_cm[iy] - self.ys_cm[iy - 1]);
                    if v.abs() > ey.abs() {
                        ey = v;
                    }
                }
                if iy + 1 < ny {
                    let v = (psi[k + 1] - psi[k]) / (self.ys_cm[iy + 1] - self.ys_cm[iy]);
                    if v.abs() > ey.abs() {
                        ey = v;
                    }
                }
                e[k] = (ex * ex + ey * ey).sqrt();
            }
        }
        e
    }

    pub fn solution_from(
        &self,
        bias: f64,
        psi: Vec<f64>,
        ring_levels: Vec<f64>,
        newton_iterations: usize,
    ) -> FieldSolution {
        let e = self.field_magnitude(&psi);
        let (mut peak, mut peak_k) = (0.0, 0);
        for (k, &v) in e.iter().enumerate() {
            if v > peak {
                peak = v;
                peak_k = k;
            }
        }
        FieldSolution {
            bias_v: bias,
            psi_v: psi,
            e_v_per_cm: e,
            peak_field_v_per_cm: peak,
            peak_ix: peak_k / self.ny,
            peak_iy: peak_k % self.ny,
            newton_iterations,
            ring_levels_v: ring_levels,
        }
    }

    /// Dopant charge density setting the deep-drift field slope q·N_D/ε.
    pub fn drift_field_slope(&self, n_d_per_cm3: f64) -> f64 {
        Q_C * n_d_per_cm3 / self.eps
    }
}

/// Public single-solve entry: damped Newton at one reverse bias.
pub fn solve_poisson(
    geom: &DeviceGeometry,
    doping: &DopingMap,
    mat: &MaterialConfig,
    bias_v: f64,
    warm_start: Option<&FieldSolution>,
    opts: &NewtonOptions,
) -> Result<FieldSolution, SolverError> {
    assert!(bias_v >= 0.0, "reverse bias must be non-negative");
    let mut problem = PoissonProblem::new(geom, doping, mat);
    let init = warm_start.map(|s| (s.psi_v.as_slice(), s.ring_levels_v.as_slice()));
    let (psi, levels, iters) = problem.solve_with_continuation(bias_v, init, opts)?;
    Ok(problem.solution_from(bias_v, psi, levels, iters))
}
