//! Graded tensor-product grid axes.
//!
//! An axis is generated from a set of anchor coordinates (which become grid
//! lines exactly) and fine-spacing windows around junctions. Between windows
//! the spacing grows geometrically, capped at `max_spacing`.
//!
//! The target spacing field is
//! `t(x) = min(max_spacing, min_w(h_w + (ratio - 1) * dist(x, w)))`,
//! which bounds the ratio of adjacent cell sizes by `ratio` as long as each
//! step advances by the local target.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineWindow {
    pub lo: f64,
    pub hi: f64,
    pub spacing: f64,
}

#[derive(Debug, Clone)]
pub struct AxisSpec {
    /// Total extent; the axis spans [0, length].
    pub length: f64,
    /// Coordinates that must coincide with grid lines (0 and length implied).
    pub anchors: Vec<f64>,
    pub windows: Vec<FineWindow>,
    pub max_spacing: f64,
    /// Adjacent-cell growth ratio bound, > 1.
    pub growth_ratio: f64,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("axis length must be positive, got {0}")]
    BadLength(f64),
    #[error("spacing parameters must be positive (max_spacing {max_spacing}, window spacing {window_spacing})")]
    BadSpacing { max_spacing: f64, window_spacing: f64 },
    #[error("growth ratio must exceed 1, got {0}")]
    BadRatio(f64),
}

/// Coordinates are deduplicated within this absolute tolerance (µm scale).
const DEDUP_TOL: f64 = 1e-9;

impl AxisSpec {
    fn target_spacing(&self, x: f64) -> f64 {
        let mut t = self.max_spacing;
        let g = self.growth_ratio - 1.0;
        for w in &self.windows {
            let d = if x < w.lo {
                w.lo - x
            } else if x > w.hi {
                x - w.hi
            } else {
                0.0
            };
            t = t.min(w.spacing + g * d);
        }
        t.max(1e-7)
    }
}

/// Build a strictly increasing axis honoring anchors, windows, and caps.
pub fn build_axis(spec: &AxisSpec) -> Result<Vec<f64>, MeshError> {
    if !(spec.length > 0.0) {
        return Err(MeshError::BadLength(spec.length));
    }
    if !(spec.max_spacing > 0.0) || spec.windows.iter().any(|w| !(w.spacing > 0.0)) {
        return Err(MeshError::BadSpacing {
            max_spacing: spec.max_spacing,
            window_spacing: spec
                .windows
                .iter()
                .map(|w| w.spacing)
                .fold(f64::INFINITY, f64::min),
        });
    }
    if !(spec.growth_ratio > 1.0) {
        return Err(MeshError::BadRatio(spec.growth_ratio));
    }

    let mut breaks: Vec<f64> = vec![0.0, spec.length];
    breaks.extend(
        spec.anchors
            .iter()
            .copied()
            .filter(|&a| a > DEDUP_TOL && a < spec.length - DEDUP_TOL),
    );
    // Window edges too, so spacing transitions start on a grid line.
    for w in &spec.windows {
        for e in [w.lo, w.hi] {
            if e > DEDUP_TOL && e < spec.length - DEDUP_TOL {
                breaks.push(e);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);

    let mut axis = Vec::with_capacity(256);
    axis.push(breaks[0]);
    for seg in breaks.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        fill_segment(spec, a, b, &mut axis);
        axis.push(b);
    }
    Ok(axis)
}

/// Append the interior nodes of segment (a, b) to `out`.
///
/// Spacings are collected greedily from the target field, then uniformly
/// shrunk to land exactly on `b`; shrinking never violates the caps.
fn fill_segment(spec: &AxisSpec, a: f64, b: f64, out: &mut Vec<f64>) {
    let len = b - a;
    let mut spacings: Vec<f64> = Vec::new();
    let mut cum = 0.0;
    while cum < len {
        let s = spec.target_spacing(a + cum);
        spacings.push(s);
        cum += s;
        if spacings.len() > 4_000_000 {
            break; // guards against pathological window configs
        }
    }
    if spacings.len() <= 1 {
        return;
    }
    let scale = len / cum;
    let mut x = a;
    for s in &spacings[..spacings.len() - 1] {
        x += s * scale;
        out.push(x);
    }
}

/// Largest spacing on the axis, and largest spacing whose cell midpoint lies
/// inside any window (for invariant auditing).
pub fn audit_axis(axis: &[f64], windows: &[FineWindow], max_spacing: f64) -> AxisAudit {
    let mut max_seen: f64 = 0.0;
    let mut max_in_window: f64 = 0.0;
    let mut monotone = true;
    for seg in axis.windows(2) {
        let h = seg[1] - seg[0];
        if h <= 0.0 {
            monotone = false;
        }
        max_seen = max_seen.max(h);
        let mid = 0.5 * (seg[0] + seg[1]);
        for w in windows {
            if mid >= w.lo && mid <= w.hi && h > max_in_window {
                max_in_window = h;
            }
        }
    }
    AxisAudit {
        monotone,
        max_spacing_seen: max_seen,
        max_window_spacing_seen: max_in_window,
        max_spacing_ok: max_seen <= max_spacing * (1.0 + 1e-9),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AxisAudit {
    pub monotone: bool,
    pub max_spacing_seen: f64,
    pub max_window_spacing_seen: f64,
    pub max_spacing_ok: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(length: f64, windows: Vec<FineWindow>) -> AxisSpec {
        AxisSpec {
            length,
            anchors: vec![],
            windows,
            max_spacing: 1.0,
            growth_ratio: 1.3,
        }
    }

    #[test]
    fn anchors_are_grid_lines() {
        let mut s = spec(10.0, vec![]);
        s.anchors = vec![2.5, 7.25];
        let axis = build_axis(&s).unwrap();
        for a in [0.0, 2.5, 7.25, 10.0] {
            assert!(
                axis.iter().any(|&x| (x - a).abs() < 1e-12),
                "anchor {a} missing"
            );
        }
    }

    #[test]
    fn windows_respected() {
        let s = spec(
            20.0,
            vec![FineWindow {
                lo: 4.0,
                hi: 6.0,
                spacing: 0.05,
            }],
        );
        let axis = build_axis(&s).unwrap();
        let audit = audit_axis(&axis, &s.windows, s.max_spacing);
        assert!(audit.monotone);
        assert!(audit.max_spacing_ok, "max spacing {}", audit.max_spacing_seen);
        assert!(
            audit.max_window_spacing_seen <= 0.05 * (1.0 + 1e-9),
            "window spacing {}",
            audit.max_window_spacing_seen
        );
    }

    #[test]
    fn growth_bounded_between_uniform_regions() {
        let s = spec(
            30.0,
            vec![FineWindow {
                lo: 0.0,
                hi: 1.0,
                spacing: 0.02,
            }],
        );
        let axis = build_axis(&s).unwrap();
        for seg in axis.windows(3) {
            let h0 = seg[1] - seg[0];
            let h1 = seg[2] - seg[1];
            let r = (h1 / h0).max(h0 / h1);
            assert!(r < 1.75, "adjacent ratio {r} too large");
        }
    }

    #[test]
    fn short_segments_survive() {
        let mut s = spec(1.0, vec![]);
        s.anchors = vec![0.499999, 0.5000001, 0.7];
        let axis = build_axis(&s).unwrap();
        for seg in axis.windows(2) {
            assert!(seg[1] > seg[0]);
        }
    }

    #[test]
    fn deterministic() {
        let s = spec(
            25.0,
            vec![FineWindow {
                lo: 3.0,
                hi: 4.5,
                spacing: 0.05,
            }],
        );
        assert_eq!(build_axis(&s).unwrap(), build_axis(&s).unwrap());
    }
}
