//! Device construction: design vector, material, grid, and doping map.
//!
//! A design is five guard-ring variables (S, W, D, N, σ). `build_structure`
//! turns a design into a half-device (symmetry plane through the anode
//! center) on a graded tensor-product grid with a smoothed doping map:
//! acceptor boxes whose lateral and bottom edges roll off with an
//! erf-convolved profile of standard deviation σ, abrupt at the top surface.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{KB_J_PER_K, Q_C};
use crate::mesh::{self, AxisSpec, FineWindow};

// ---------------------------------------------------------------------------
// Design vector
// ---------------------------------------------------------------------------

/// The five guard-ring design variables. Lengths in µm, `n_rings` unitless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    /// Spacing between rings (and anode→first ring), µm.
    pub s_um: f64,
    /// Ring width, µm.
    pub w_um: f64,
    /// Ring junction depth, µm.
    pub d_um: f64,
    /// Ring count.
    pub n_rings: u32,
    /// Junction-gradient standard deviation, µm.
    pub sigma_um: f64,
}

impl DesignVector {
    pub fn new(s_um: f64, w_um: f64, d_um: f64, n_rings: u32, sigma_um: f64) -> Self {
        Self {
            s_um,
            w_um,
            d_um,
            n_rings,
            sigma_um,
        }
    }

    /// Feature layout used by datasets, surrogates, and optimizers.
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.s_um,
            self.w_um,
            self.d_um,
            self.n_rings as f64,
            self.sigma_um,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            s_um: a[0],
            w_um: a[1],
            d_um: a[2],
            n_rings: a[3].round().max(0.0) as u32,
            sigma_um: a[4],
        }
    }
}

/// Hard bounds of the design space: S, W ∈ [0.25, 5] µm, D ∈ [0.01, 1] µm,
/// N ∈ {0..32}, σ ∈ [0.01, 0.1] µm.
pub const S_RANGE: (f64, f64) = (0.25, 5.0);
pub const W_RANGE: (f64, f64) = (0.25, 5.0);
pub const D_RANGE: (f64, f64) = (0.01, 1.0);
pub const N_RANGE: (u32, u32) = (0, 32);
pub const SIGMA_RANGE: (f64, f64) = (0.01, 0.1);

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("{field} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("point ({x_um}, {y_um}) outside domain")]
    OutOfDomain { x_um: f64, y_um: f64 },
    #[error("mesh: {0}")]
    Mesh(String),
}

/// Check the design-space bounds; returns the vector unchanged if valid.
/// The first violated bound (in S, W, D, N, σ order) is reported.
pub fn validate_design(dv: &DesignVector) -> Result<DesignVector, DeviceError> {
    let checks = [
        ("s_um", dv.s_um, S_RANGE.0, S_RANGE.1),
        ("w_um", dv.w_um, W_RANGE.0, W_RANGE.1),
        ("d_um", dv.d_um, D_RANGE.0, D_RANGE.1),
        (
            "n_rings",
            dv.n_rings as f64,
            N_RANGE.0 as f64,
            N_RANGE.1 as f64,
        ),
        ("sigma_um", dv.sigma_um, SIGMA_RANGE.0, SIGMA_RANGE.1),
    ];
    for (field, value, lo, hi) in checks {
        if !(value >= lo && value <= hi) {
            return Err(DeviceError::OutOfBounds {
                field,
                value,
                lo,
                hi,
            });
        }
    }
    Ok(*dv)
}

// ---------------------------------------------------------------------------
// Material
// ---------------------------------------------------------------------------

/// Material parameters (GaN defaults).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    /// Relative permittivity.
    pub eps_r: f64,
    /// Critical field for the fast breakdown criterion (V/cm).
    pub e_crit_v_per_cm: f64,
    /// Chynoweth ionization pre-factor a (1/cm).
    pub alpha_a_per_cm: f64,
    /// Chynoweth ionization exponent field b (V/cm).
    pub alpha_b_v_per_cm: f64,
    /// Intrinsic carrier density (1/cm³).
    pub n_i_per_cm3: f64,
    /// Lattice temperature (K).
    pub temperature_k: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            eps_r: 8.9,
            e_crit_v_per_cm: 3.3e6,
            alpha_a_per_cm: 2.9e8,
            alpha_b_v_per_cm: 3.4e7,
            n_i_per_cm3: 1.9e-10,
            temperature_k: 300.0,
        }
    }
}

impl MaterialConfig {
    /// Thermal voltage kT/q (V).
    pub fn vt(&self) -> f64 {
        KB_J_PER_K * self.temperature_k / Q_C
    }

    /// Absolute permittivity (F/cm).
    pub fn eps_f_per_cm(&self) -> f64 {
        self.eps_r * crate::constants::EPS0_F_PER_CM
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("eps_r", self.eps_r),
            ("e_crit_v_per_cm", self.e_crit_v_per_cm),
            ("alpha_a_per_cm", self.alpha_a_per_cm),
            ("alpha_b_v_per_cm", self.alpha_b_v_per_cm),
            ("n_i_per_cm3", self.n_i_per_cm3),
            ("temperature_k", self.temperature_k),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("material.{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Geometry options
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOptions {
    /// Spacing inside junction windows (µm). Must be ≤ 0.05.
    pub fine_spacing_um: f64,
    /// Far-field spacing cap (µm). Must be ≤ 1.
    pub max_spacing_um: f64,
    /// Adjacent-cell growth ratio.
    pub growth_ratio: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            fine_spacing_um: 0.05,
            max_spacing_um: 1.0,
            growth_ratio: 1.3,
        }
    }
}

/// Geometry options not part of the design vector. The anode half-width and
/// depth are configurable defaults; they are echoed into every run manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryOptions {
    pub anode_half_width_um: f64,
    pub anode_depth_um: f64,
    pub drift_thickness_um: f64,
    /// Drift n-type background (1/cm³).
    pub drift_doping_per_cm3: f64,
    /// Acceptor plateau density in anode and ring cores (1/cm³).
    pub acceptor_peak_per_cm3: f64,
    /// Right-edge margin beyond the last ring is max(this, sigma_margin_mult·σ).
    pub edge_margin_min_um: f64,
    pub sigma_margin_mult: f64,
    pub grid: GridOptions,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            anode_half_width_um: 5.0,
            anode_depth_um: 0.5,
            drift_thickness_um: 10.0,
            drift_doping_per_cm3: 1.0e16,
            acceptor_peak_per_cm3: 1.0e19,
            edge_margin_min_um: 5.0,
            sigma_margin_mult: 10.0,
            grid: GridOptions::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Geometry + doping map
// ---------------------------------------------------------------------------

/// Region affiliation of a grid node, used for hole quasi-Fermi referencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionTag {
    Drift,
    Anode,
    Ring(u32),
}

/// Discretized half-device. x runs from the symmetry plane (0) to the right
/// edge; y runs from the top surface (0) down to the cathode.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGeometry {
    /// Grid line coordinates (µm), strictly increasing.
    pub xs_um: Vec<f64>,
    pub ys_um: Vec<f64>,
    /// Top-surface Dirichlet anode contact spans x ∈ [0, this]; the rest of
    /// the top, the symmetry plane, and the right edge are Neumann. The
    /// bottom (y = max) is the cathode contact.
    pub anode_contact_x_max_um: f64,
    pub anode_half_width_um: f64,
    pub anode_depth_um: f64,
    pub drift_thickness_um: f64,
    pub domain_width_um: f64,
    pub domain_depth_um: f64,
}

impl DeviceGeometry {
    pub fn nx(&self) -> usize {
        self.xs_um.len()
    }
    pub fn ny(&self) -> usize {
        self.ys_um.len()
    }
    pub fn node_count(&self) -> usize {
        self.nx() * self.ny()
    }
    /// Node index with y fastest.
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ny() + iy
    }
}

/// Net doping (N_D − N_A, 1/cm³) per node plus region tags.
#[derive(Debug, Clone, PartialEq)]
pub struct DopingMap {
    pub xs_um: Vec<f64>,
    pub ys_um: Vec<f64>,
    /// Net doping per node, index ix*ny + iy.
    pub net_per_cm3: Vec<f64>,
    pub tags: Vec<RegionTag>,
    pub n_rings: u32,
}

impl DopingMap {
    pub fn nx(&self) -> usize {
        self.xs_um.len()
    }
    pub fn ny(&self) -> usize {
        self.ys_um.len()
    }
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        ix * self.ys_um.len() + iy
    }
}

/// One acceptor box with its erf edge roll-off.
#[derive(Debug, Clone, Copy)]
struct AcceptorBox {
    x_lo: f64,
    x_hi: f64,
    depth: f64,
    tag: RegionTag,
}

impl AcceptorBox {
    /// Normalized profile in [0, 1]: erf-convolved box laterally and on the
    /// bottom edge, abrupt at the top surface (y = 0).
    fn profile(&self, x: f64, y: f64, sigma: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        let s = sigma * std::f64::consts::SQRT_2;
        let lat = 0.5 * (erf((x - self.x_lo) / s) - erf((x - self.x_hi) / s));
        let vert = 0.5 * erfc((y - self.depth) / s);
        (lat * vert).clamp(0.0, 1.0)
    }
}

/// Lateral placement of ring `i` (1-based): left edge A + i·S + (i−1)·W.
pub fn ring_span(anode_half_width: f64, s: f64, w: f64, i: u32) -> (f64, f64) {
    let i = i as f64;
    let left = anode_half_width + i * s + (i - 1.0) * w;
    (left, left + w)
}

/// Build the half-device grid and doping map for a validated design.
///
/// Deterministic: identical (dv, opts) produce bit-identical outputs.
pub fn build_structure(
    dv: &DesignVector,
    opts: &GeometryOptions,
) -> Result<(DeviceGeometry, DopingMap), DeviceError> {
    validate_design(dv)?;
    let a = opts.anode_half_width_um;
    let sigma = dv.sigma_um;

    let mut boxes = vec![AcceptorBox {
        x_lo: -a, // mirror image across the symmetry plane keeps x=0 flat
        x_hi: a,
        depth: opts.anode_depth_um,
        tag: RegionTag::Anode,
    }];
    for i in 1..=dv.n_rings {
        let (lo, hi) = ring_span(a, dv.s_um, dv.w_um, i);
        boxes.push(AcceptorBox {
            x_lo: lo,
            x_hi: hi,
            depth: dv.d_um,
            tag: RegionTag::Ring(i),
        });
    }

    let last_right = boxes.last().unwrap().x_hi;
    let margin = opts.edge_margin_min_um.max(opts.sigma_margin_mult * sigma);
    let width = last_right + margin;
    let max_depth = boxes.iter().map(|b| b.depth).fold(0.0, f64::max);
    let depth = opts.anode_depth_um + opts.drift_thickness_um;

    // Junction-resolving windows: x-spacing is refined across each vertical
    // box edge, y-spacing over the whole junction depth range. Window reach
    // is d + 3σ from the junction line.
    let grid = &opts.grid;
    if grid.fine_spacing_um > 0.05 + 1e-12 {
        return Err(DeviceError::GridTooCoarse(format!(
            "fine_spacing_um {} exceeds the 0.05 µm junction-window bound",
            grid.fine_spacing_um
        )));
    }
    if grid.max_spacing_um > 1.0 + 1e-12 {
        return Err(DeviceError::GridTooCoarse(format!(
            "max_spacing_um {} exceeds the 1 µm bound",
            grid.max_spacing_um
        )));
    }

    let mut x_anchors = vec![a];
    let mut x_windows = Vec::new();
    for b in &boxes {
        let reach = b.depth + 3.0 * sigma;
        for e in [b.x_lo, b.x_hi] {
            if e <= 0.0 {
                continue; // mirror-image edge of the anode box
            }
            x_anchors.push(e);
            x_windows.push(FineWindow {
                lo: (e - reach).max(0.0),
                hi: (e + reach).min(width),
                spacing: grid.fine_spacing_um,
            });
        }
    }
    let xs = mesh::build_axis(&AxisSpec {
        length: width,
        anchors: x_anchors,
        windows: x_windows.clone(),
        max_spacing: grid.max_spacing_um,
        growth_ratio: grid.growth_ratio,
    })
    .map_err(|e| DeviceError::Mesh(e.to_string()))?;

    let y_fine_hi = (max_depth + 3.0 * sigma).min(depth);
    let y_windows = vec![FineWindow {
        lo: 0.0,
        hi: y_fine_hi,
        spacing: grid.fine_spacing_um,
    }];
    let ys = mesh::build_axis(&AxisSpec {
        length: depth,
        anchors: vec![opts.anode_depth_um, dv.d_um, y_fine_hi],
        windows: y_windows.clone(),
        max_spacing: grid.max_spacing_um,
        growth_ratio: grid.growth_ratio,
    })
    .map_err(|e| DeviceError::Mesh(e.to_string()))?;

    for (axis, windows) in [(&xs, &x_windows), (&ys, &y_windows)] {
        let audit = mesh::audit_axis(axis, windows, grid.max_spacing_um);
        if !audit.monotone || !audit.max_spacing_ok
            || audit.max_window_spacing_seen > grid.fine_spacing_um * (1.0 + 1e-9)
        {
            return Err(DeviceError::GridTooCoarse(format!(
                "axis audit failed: {audit:?}"
            )));
        }
    }

    let geom = DeviceGeometry {
        xs_um: xs,
        ys_um: ys,
        anode_contact_x_max_um: a,
        anode_half_width_um: a,
        anode_depth_um: opts.anode_depth_um,
        drift_thickness_um: opts.drift_thickness_um,
        domain_width_um: width,
        domain_depth_um: depth,
    };

    let (nx, ny) = (geom.nx(), geom.ny());
    let mut net = vec![0.0; nx * ny];
    let mut tags = vec![RegionTag::Drift; nx * ny];
    let peak = opts.acceptor_peak_per_cm3;
    for (ix, &x) in geom.xs_um.iter().enumerate() {
        for (iy, &y) in geom.ys_um.iter().enumerate() {
            // Acceptor boxes compose by max so plateaus stay exactly at the
            // peak density even when roll-off skirts overlap.
            let mut acceptor = 0.0;
            let mut tag = RegionTag::Drift;
            for b in &boxes {
                let v = peak * b.profile(x, y, sigma);
                if v > acceptor {
                    acceptor = v;
                    tag = b.tag;
                }
            }
            let idx = geom.idx(ix, iy);
            net[idx] = opts.drift_doping_per_cm3 - acceptor;
            if net[idx] < 0.0 {
                tags[idx] = tag;
            }
        }
    }

    let map = DopingMap {
        xs_um: geom.xs_um.clone(),
        ys_um: geom.ys_um.clone(),
        net_per_cm3: net,
        tags,
        n_rings: dv.n_rings,
    };
    Ok((geom, map))
}

/// Bilinear point evaluation of the net doping.
pub fn doping_at(map: &DopingMap, x_um: f64, y_um: f64) -> Result<f64, DeviceError> {
    let xs = &map.xs_um;
    let ys = &map.ys_um;
    if x_um < xs[0] || x_um > *xs.last().unwrap() || y_um < ys[0] || y_um > *ys.last().unwrap() {
        return Err(DeviceError::OutOfDomain { x_um, y_um });
    }
    let ix = cell_index(xs, x_um);
    let iy = cell_index(ys, y_um);
    let tx = (x_um - xs[ix]) / (xs[ix + 1] - xs[ix]);
    let ty = (y_um - ys[iy]) / (ys[iy + 1] - ys[iy]);
    let v00 = map.net_per_cm3[map.idx(ix, iy)];
    let v01 = map.net_per_cm3[map.idx(ix, iy + 1)];
    let v10 = map.net_per_cm3[map.idx(ix + 1, iy)];
    let v11 = map.net_per_cm3[map.idx(ix + 1, iy + 1)];
    Ok(v00 * (1.0 - tx) * (1.0 - ty)
        + v10 * tx * (1.0 - ty)
        + v01 * (1.0 - tx) * ty
        + v11 * tx * ty)
}

fn cell_index(axis: &[f64], v: f64) -> usize {
    let n = axis.len();
    let i = axis.partition_point(|&a| a <= v);
    i.clamp(1, n - 1) - 1
}

/// Ideal 1D p⁺/n⁻ diode (abrupt junction) on a degenerate two-column grid
/// with Neumann sides; the whole top surface is the anode contact. Serves as
/// the theoretical-limit anchor for breakdown calibration.
pub fn build_ideal_1d(opts: &GeometryOptions) -> (DeviceGeometry, DopingMap) {
    let p_depth = opts.anode_depth_um;
    let depth = p_depth + opts.drift_thickness_um;
    let width = 1.0;

    let fine = (opts.grid.fine_spacing_um * 0.2).min(0.01);
    let ys = mesh::build_axis(&AxisSpec {
        length: depth,
        anchors: vec![p_depth],
        windows: vec![FineWindow {
            lo: (p_depth - 0.3).max(0.0),
            hi: p_depth + 0.3,
            spacing: fine,
        }],
        max_spacing: opts.grid.max_spacing_um.min(0.25),
        growth_ratio: opts.grid.growth_ratio,
    })
    .expect("1D axis construction cannot fail for positive dimensions");

    let geom = DeviceGeometry {
        xs_um: vec![0.0, width],
        ys_um: ys,
        anode_contact_x_max_um: width,
        anode_half_width_um: width,
        anode_depth_um: p_depth,
        drift_thickness_um: opts.drift_thickness_um,
        domain_width_um: width,
        domain_depth_um: depth,
    };

    let ny = geom.ny();
    let mut net = vec![0.0; 2 * ny];
    let mut tags = vec![RegionTag::Drift; 2 * ny];
    for ix in 0..2 {
        for (iy, &y) in geom.ys_um.iter().enumerate() {
            let idx = geom.idx(ix, iy);
            if y < p_depth {
                net[idx] = -opts.acceptor_peak_per_cm3;
                tags[idx] = RegionTag::Anode;
            } else {
                net[idx] = opts.drift_doping_per_cm3;
            }
        }
    }
    let map = DopingMap {
        xs_um: geom.xs_um.clone(),
        ys_um: geom.ys_um.clone(),
        net_per_cm3: net,
        tags,
        n_rings: 0,
    };
    (geom, map)
}

// ---------------------------------------------------------------------------
// Error function (Abramowitz & Stegun 7.1.26, |err| < 1.5e-7)
// ---------------------------------------------------------------------------

pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

pub fn erfc(x: f64) -> f64 {
    1.0 - erf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_design() -> DesignVector {
        DesignVector::new(1.385, 3.49, 0.85, 30, 0.097)
    }

    #[test]
    fn validate_accepts_paper_design() {
        assert!(validate_design(&paper_design()).is_ok());
    }

    #[test]
    fn validate_accepts_lower_corner() {
        let dv = DesignVector::new(0.25, 0.25, 0.01, 0, 0.01);
        assert_eq!(validate_design(&dv).unwrap(), dv);
    }

    #[test]
    fn validate_rejects_oversized_spacing() {
        let dv = DesignVector::new(6.0, 1.0, 0.5, 4, 0.05);
        match validate_design(&dv) {
            Err(DeviceError::OutOfBounds { field, .. }) => assert_eq!(field, "s_um"),
            other => panic!("expected OutOfBounds(s_um), got {other:?}"),
        }
    }

    #[test]
    fn ring_placement_arithmetic() {
        // N=7, S=W=1, A=5: ring 1 left edge at 6, ring 7 right edge at 19.
        assert_eq!(ring_span(5.0, 1.0, 1.0, 1).0, 6.0);
        assert_eq!(ring_span(5.0, 1.0, 1.0, 7).1, 19.0);
    }

    #[test]
    fn no_rings_means_anode_only() {
        let dv = DesignVector::new(1.0, 1.0, 0.5, 0, 0.05);
        let (_, map) = build_structure(&dv, &GeometryOptions::default()).unwrap();
        assert!(map.tags.iter().all(|t| !matches!(t, RegionTag::Ring(_))));
        assert!(map.tags.iter().any(|t| matches!(t, RegionTag::Anode)));
    }

    #[test]
    fn erf_rolloff_at_three_sigma() {
        // Normalized profile beyond a lateral edge: 0.5·erfc(3/√2) ≈ 1.35e-3,
        // comfortably below 1.2% of the peak.
        let b = AcceptorBox {
            x_lo: 0.0,
            x_hi: 2.0,
            depth: 0.5,
            tag: RegionTag::Anode,
        };
        let sigma = 0.05;
        let v = b.profile(2.0 + 3.0 * sigma, 0.0, sigma);
        let expected = 0.5 * erfc(3.0 / std::f64::consts::SQRT_2);
        assert!((v - expected).abs() < 2e-7, "v={v} expected={expected}");
        assert!(v <= 0.012);
    }

    #[test]
    fn doping_background_and_anode_core() {
        let dv = DesignVector::new(2.0, 2.0, 0.5, 2, 0.05);
        let opts = GeometryOptions::default();
        let (_, map) = build_structure(&dv, &opts).unwrap();
        // Deep in the drift: exactly the n-type background.
        let deep = doping_at(&map, 1.0, 8.0).unwrap();
        assert_eq!(deep, 1.0e16);
        // Center of the anode core: ≈ −1e19 net (offset by the 1e16
        // background).
        let core = doping_at(&map, 0.5, 0.2).unwrap();
        assert!((core + 1.0e19).abs() / 1.0e19 < 1.5e-3, "core = {core:e}");
    }

    #[test]
    fn doping_at_matches_nodes_exactly() {
        let dv = DesignVector::new(1.0, 1.0, 0.3, 1, 0.05);
        let (geom, map) = build_structure(&dv, &GeometryOptions::default()).unwrap();
        for &(ix, iy) in &[(0usize, 0usize), (3, 5), (geom.nx() - 1, geom.ny() - 1)] {
            let v = doping_at(&map, geom.xs_um[ix], geom.ys_um[iy]).unwrap();
            assert_eq!(v, map.net_per_cm3[map.idx(ix, iy)]);
        }
    }

    #[test]
    fn doping_out_of_domain() {
        let dv = DesignVector::new(1.0, 1.0, 0.3, 0, 0.05);
        let (_, map) = build_structure(&dv, &GeometryOptions::default()).unwrap();
        assert!(matches!(
            doping_at(&map, -1.0, 1.0),
            Err(DeviceError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn ideal_1d_profile() {
        let opts = GeometryOptions::default();
        let (geom, map) = build_ideal_1d(&opts);
        assert!(geom.domain_depth_um >= 10.0);
        // Net doping sign changes exactly once along a column.
        let ny = geom.ny();
        let col: Vec<f64> = (0..ny).map(|iy| map.net_per_cm3[map.idx(0, iy)]).collect();
        let flips = col
            .windows(2)
            .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
            .count();
        assert_eq!(flips, 1);
    }

    #[test]
    fn structure_deterministic() {
        let dv = paper_design();
        let opts = GeometryOptions::default();
        let (g1, m1) = build_structure(&dv, &opts).unwrap();
        let (g2, m2) = build_structure(&dv, &opts).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(m1, m2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Ring i left edge − ring (i−1) right edge = S exactly.
        #[test]
        fn placement_gap_is_s(
            s in 0.25f64..5.0, w in 0.25f64..5.0, n in 2u32..=8,
        ) {
            for i in 2..=n {
                let prev = ring_span(5.0, s, w, i - 1);
                let cur = ring_span(5.0, s, w, i);
                prop_assert!((cur.0 - prev.1 - s).abs() < 1e-9);
            }
        }

        /// Acceptor profile of a ring is mirror-symmetric about its centerline
        /// and non-increasing with outward distance from the edge.
        #[test]
        fn ring_profile_symmetric_monotone(
            w in 0.25f64..5.0, d in 0.01f64..1.0, sigma in 0.01f64..0.1,
            off in 0.0f64..3.0, y in 0.0f64..0.5,
        ) {
            let b = AcceptorBox { x_lo: 10.0, x_hi: 10.0 + w, depth: d, tag: RegionTag::Ring(1) };
            let c = 10.0 + 0.5 * w;
            let left = b.profile(c - off, y * d, sigma);
            let right = b.profile(c + off, y * d, sigma);
            prop_assert!((left - right).abs() < 1e-12);
            // Monotone outward from the right edge.
            let v1 = b.profile(10.0 + w + off, y * d, sigma);
            let v2 = b.profile(10.0 + w + off + 0.1, y * d, sigma);
            prop_assert!(v2 <= v1 + 1e-15);
        }
    }
}
