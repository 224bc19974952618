//! Action variables (area functions) for the model singularities.
//!
//! All areas are integrals of g dx dy over explicitly described regions with
//! g > 0 giving positive actions; the section region is signed so that the
//! h < 0 part above the H = 0 curve counts positive. Epsilon is always an
//! explicit parameter.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonians::{ModelHamiltonian, TAU};
use crate::quadrature::{integrate_region, inside_swallow_tail, QuadConfig, Region};

/// Default section half-width.
pub const DEFAULT_EPS: f64 = 0.5;

/// (1/2pi) integral of g over {x^2 + y^2 <= h}.
pub fn elliptic_action(g: &dyn Fn(f64, f64) -> f64, h: f64, cfg: &QuadConfig) -> Result<f64> {
    if h < 0.0 {
        return Err(Error::InvalidParameter { reason: format!("elliptic action needs h >= 0, got {h}") });
    }
    Ok(integrate_region(g, Region::EllipticDisk { h }, cfg)?.value / TAU)
}

/// (1/2pi) integral of g over {|y| <= x <= sqrt(h + y^2), |y| <= eps}.
pub fn hyperbolic_quadrant_action(
    g: &dyn Fn(f64, f64) -> f64,
    h: f64,
    eps: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    Ok(integrate_region(g, Region::HyperbolicQuadrant { h, eps }, cfg)?.value / TAU)
}

/// Signed (1/2pi) integral of g over the region between the H = 0 and H = h
/// levels of x^2 - y^3, bounded by the sections x = +-eps.
pub fn cusp_section_action(
    g: &dyn Fn(f64, f64) -> f64,
    h: f64,
    eps: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    Ok(integrate_region(g, Region::CuspSection { h, eps }, cfg)?.value / TAU)
}

/// (1/2pi) integral of g over the compact component bounded by the vanishing
/// loop of x^2 - y^3 + lambda y at level h; requires (h, lambda) in the
/// swallow-tail domain.
pub fn vanishing_cycle_action(
    g: &dyn Fn(f64, f64, f64) -> f64,
    h: f64,
    lambda: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    if !inside_swallow_tail(h, lambda) {
        return Err(Error::OutsideSwallowTail { h, lambda });
    }
    let g2 = |x: f64, y: f64| g(x, y, lambda);
    Ok(integrate_region(&g2, Region::VanishingLoop { h, lambda }, cfg)?.value / TAU)
}

/// Separatrix-lobe action: the limit of the vanishing-cycle action at the
/// saddle level, taken as h -> h_s from below by extrapolation in the gap.
///
/// The gap expansion is L - c1 d ln(1/d) - c2 d + O(d^{3/2}); three nodes on
/// a halving sequence determine L.
pub fn sep_lobe_action(g: &dyn Fn(f64, f64, f64) -> f64, lambda: f64, cfg: &QuadConfig) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter { reason: format!("lobe needs lambda > 0, got {lambda}") });
    }
    let hs = ModelHamiltonian::saddle_level(lambda);
    let d0 = (1e-5 * hs).max(1e-12);
    let mut nodes = Vec::new();
    for k in 0..3 {
        let d = d0 / (4.0f64).powi(k);
        let v = vanishing_cycle_action(g, hs - d, lambda, cfg)?;
        nodes.push((d, v));
    }
    log_richardson(&nodes).ok_or(Error::RankDeficient { pivot: 0.0 })
}

/// Extrapolate v(d) = L - c1 d ln(1/d) - c2 d to d = 0 from three nodes.
pub(crate) fn log_richardson(nodes: &[(f64, f64)]) -> Option<f64> {
    let mut m = [[0.0f64; 4]; 3];
    for (i, (d, v)) in nodes.iter().take(3).enumerate() {
        m[i][0] = 1.0;
        m[i][1] = d * (1.0 / d).ln();
        m[i][2] = *d;
        m[i][3] = *v;
    }
    solve3(&mut m).map(|sol| sol[0])
}

fn solve3(m: &mut [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())?;
        m.swap(col, piv);
        if m[col][col].abs() < 1e-300 {
            return None;
        }
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Region kind for a sampled action profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionKind {
    Elliptic,
    HyperbolicQuadrant { eps: f64 },
    CuspSection { eps: f64 },
    VanishingCycle,
    SepLobe,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::Elliptic => "elliptic",
            ActionKind::HyperbolicQuadrant { .. } => "hyperbolic-quadrant",
            ActionKind::CuspSection { .. } => "cusp-section",
            ActionKind::VanishingCycle => "vanishing-cycle",
            ActionKind::SepLobe => "sep-lobe",
        }
    }

    pub fn eps(&self) -> Option<f64> {
        match self {
            ActionKind::HyperbolicQuadrant { eps } | ActionKind::CuspSection { eps } => Some(*eps),
            _ => None,
        }
    }
}

/// One grid node: h and, where the kind needs it, lambda.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridPoint {
    pub h: f64,
    pub lambda: Option<f64>,
}

/// Sampled action values over a parameter grid.
#[derive(Debug, Clone, Serialize)]
pub struct ActionProfile {
    pub kind: String,
    pub eps: Option<f64>,
    pub density: String,
    pub grid: Vec<GridPoint>,
    pub values: Vec<f64>,
}

impl ActionProfile {
    /// CSV with header (kind, eps, grid columns, value); '.' decimal,
    /// '\n' line endings, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let has_lambda = self.grid.iter().any(|p| p.lambda.is_some());
        let mut out = String::new();
        if has_lambda {
            out.push_str("kind,eps,h,lambda,value\n");
        } else {
            out.push_str("kind,eps,h,value\n");
        }
        for (p, v) in self.grid.iter().zip(&self.values) {
            let eps = self.eps.map(fmt_f64).unwrap_or_default();
            if has_lambda {
                let l = p.lambda.map(fmt_f64).unwrap_or_default();
                out.push_str(&format!("{},{},{},{},{}\n", self.kind, eps, fmt_f64(p.h), l, fmt_f64(*v)));
            } else {
                out.push_str(&format!("{},{},{},{}\n", self.kind, eps, fmt_f64(p.h), fmt_f64(*v)));
            }
        }
        out
    }
}

/// 17 significant digits, deterministic.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Element-wise action evaluation over a grid; errors carry the grid index.
pub fn action_profile(
    kind: ActionKind,
    g: &dyn Fn(f64, f64, f64) -> f64,
    density_name: &str,
    grid: &[GridPoint],
    cfg: &QuadConfig,
) -> Result<ActionProfile> {
    let mut values = Vec::with_capacity(grid.len());
    for (index, pt) in grid.iter().enumerate() {
        let lambda = pt.lambda.unwrap_or(0.0);
        let g2 = |x: f64, y: f64| g(x, y, lambda);
        let value = match kind {
            ActionKind::Elliptic => elliptic_action(&g2, pt.h, cfg),
            ActionKind::HyperbolicQuadrant { eps } => hyperbolic_quadrant_action(&g2, pt.h, eps, cfg),
            ActionKind::CuspSection { eps } => cusp_section_action(&g2, pt.h, eps, cfg),
            ActionKind::VanishingCycle => {
                let l = pt.lambda.ok_or(Error::InvalidParameter {
                    reason: "vanishing-cycle grid points need lambda".into(),
                });
                l.and_then(|l| vanishing_cycle_action(g, pt.h, l, cfg))
            }
            ActionKind::SepLobe => {
                let l = pt.lambda.ok_or(Error::InvalidParameter {
                    reason: "sep-lobe grid points need lambda".into(),
                });
                l.and_then(|l| sep_lobe_action(g, l, cfg))
            }
        }
        .map_err(|e| Error::AtGridIndex { index, source: Box::new(e) })?;
        values.push(value);
    }
    Ok(ActionProfile {
        kind: kind.name().to_string(),
        eps: kind.eps(),
        density: density_name.to_string(),
        grid: grid.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::Branch;
    use crate::quadrature::gauss_legendre;

    const CFG: QuadConfig = QuadConfig { tol: 1e-11, max_levels: 12 };

    #[test]
    fn elliptic_examples() {
        // g = 1: I(h) = h/2
        for h in [0.1, 0.2, 0.5] {
            let v = elliptic_action(&|_, _| 1.0, h, &CFG).unwrap();
            assert!((v - h / 2.0).abs() < 1e-11, "{v}");
        }
        // g = y^2, h = 1: I = 1/8 (polar oracle I(h) = h^2/8)
        let v = elliptic_action(&|_, y| y * y, 1.0, &CFG).unwrap();
        assert!((v - 0.125).abs() < 1e-10, "{v}");
        // odd density integrates to zero
        let v = elliptic_action(&|x, _| x, 0.7, &CFG).unwrap();
        assert!(v.abs() < 1e-11);
        // negative h rejected
        assert!(elliptic_action(&|_, _| 1.0, -0.1, &CFG).is_err());
    }

    #[test]
    fn elliptic_scaling() {
        // I(ch) = c I(h) for g = 1
        let i1 = elliptic_action(&|_, _| 1.0, 0.08, &CFG).unwrap();
        let i3 = elliptic_action(&|_, _| 1.0, 0.24, &CFG).unwrap();
        assert!((i3 - 3.0 * i1).abs() < 1e-11);
    }

    #[test]
    fn hyperbolic_examples() {
        let v = hyperbolic_quadrant_action(&|_, _| 1.0, 0.0, 1.0, &CFG).unwrap();
        assert_eq!(v, 0.0);
        // closed form: (sqrt2 + asinh 1 - 1) / 2pi
        let exact = (2.0f64.sqrt() + 1.0f64.asinh() - 1.0) / TAU;
        let v = hyperbolic_quadrant_action(&|_, _| 1.0, 1.0, 1.0, &CFG).unwrap();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        // odd in y
        let v = hyperbolic_quadrant_action(&|_, y| y, 0.5, 1.0, &CFG).unwrap();
        assert!(v.abs() < 1e-11);
    }

    #[test]
    fn cusp_section_examples() {
        let v = cusp_section_action(&|_, _| 1.0, 0.0, 1.0, &CFG).unwrap();
        assert_eq!(v, 0.0);
        let v = cusp_section_action(&|_, _| 1.0, -1.0, 1.0, &CFG).unwrap();
        assert!((v - 0.15749).abs() < 5e-5, "{v}");
        assert!(v > 0.0);
    }

    #[test]
    fn cusp_section_stokes_boundary_term() {
        // For g the move density of u = x^3 y, the section action equals the
        // boundary term (1/2pi) (int over the two section pieces of u dH).
        let model = ModelHamiltonian::Cusp;
        let u = |x: f64, y: f64| x * x * x * y;
        let g = move |x: f64, y: f64| {
            let ux = 3.0 * x * x * y;
            let uy = x * x * x;
            ux * model.h_y(x, y, 0.0) - uy * model.h_x(x, y, 0.0)
        };
        let h = -0.5;
        let eps = 1.0;
        let lhs = cusp_section_action(&g, h, eps, &CFG).unwrap();

        // counterclockwise boundary: up the right section, down the left
        let y0 = (eps * eps).cbrt();
        let y1 = (eps * eps - h).cbrt();
        let right = gauss_legendre(&|y| u(eps, y) * (-3.0 * y * y), y0, y1);
        let left = gauss_legendre(&|y| u(-eps, y) * (-3.0 * y * y), y1, y0);
        let rhs = (right + left) / TAU;
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn vanishing_examples() {
        let v = vanishing_cycle_action(&|_, _, _| 1.0, 0.0, 1.0, &CFG).unwrap();
        assert!((v - 0.15255).abs() < 5e-5, "{v}");
        assert!(vanishing_cycle_action(&|_, _, _| 1.0, 1.0, 0.5, &CFG).is_err());
    }

    #[test]
    fn vanishing_scaling_exponent() {
        // I(0, lambda) = C lambda^{5/4}: log-log slope 1.25
        let mut logs = Vec::new();
        for k in 0..6 {
            let lambda = 1.0 / (2.0f64).powi(k);
            let v = vanishing_cycle_action(&|_, _, _| 1.0, 0.0, lambda, &CFG).unwrap();
            logs.push((lambda.ln(), v.ln()));
        }
        let slope = fit_slope(&logs);
        assert!((slope - 1.25).abs() < 1e-3, "slope {slope}");
    }

    fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn vanishing_move_invariance() {
        // g0 versus g0 + (u_x H_y - u_y H_x) for polynomial u: equal actions
        let model = ModelHamiltonian::CuspFamily;
        let g0 = |_: f64, _: f64, _: f64| 1.0;
        let with_move = move |x: f64, y: f64, l: f64| {
            // u = x^3 y + x y^2
            let ux = 3.0 * x * x * y + y * y;
            let uy = x * x * x + 2.0 * x * y;
            1.0 + ux * model.h_y(x, y, l) - uy * model.h_x(x, y, l)
        };
        for (h, l) in [(0.0, 1.0), (0.1, 0.9), (-0.2, 0.8)] {
            let a = vanishing_cycle_action(&g0, h, l, &CFG).unwrap();
            let b = vanishing_cycle_action(&with_move, h, l, &CFG).unwrap();
            assert!((a - b).abs() < 1e-9, "({h},{l}): {a} vs {b}");
        }
    }

    #[test]
    fn monotone_in_h() {
        let g = |_: f64, _: f64| 1.0;
        let dh = 1e-4;
        for h in [0.05, 0.1, 0.3] {
            let lo = elliptic_action(&g, h - dh, &CFG).unwrap();
            let hi = elliptic_action(&g, h + dh, &CFG).unwrap();
            assert!(hi > lo);
        }
        let g3 = |_: f64, _: f64, _: f64| 1.0;
        for h in [-0.1, 0.0, 0.1] {
            let lo = vanishing_cycle_action(&g3, h - dh, 1.0, &CFG).unwrap();
            let hi = vanishing_cycle_action(&g3, h + dh, 1.0, &CFG).unwrap();
            assert!(hi > lo, "h={h}");
        }
    }

    #[test]
    fn sep_lobe_matches_saddle_oracle() {
        // oracle: direct quadrature at the saddle level, both turning points
        // singular; the lobe of x^2 - y^3 + lambda y at h_s has
        // q(y) = (y - y0)^2 (y - s1) with y0 = sqrt(lambda/3), s1 = -2 y0.
        let lambda = 1.0;
        let y0 = (lambda / 3.0f64).sqrt();
        let s1 = -2.0 * y0;
        let core = |y: f64| 2.0 * (y0 - y) * (y - s1).max(0.0).sqrt();
        let oracle_ts = crate::quadrature::integrate_ts(&core, s1, y0, &CFG).unwrap();
        let lobe = sep_lobe_action(&|_, _, _| 1.0, lambda, &CFG).unwrap();
        assert!((lobe - oracle_ts / TAU).abs() < 1e-7, "{lobe} vs {}", oracle_ts / TAU);
    }

    #[test]
    fn sep_lobe_scaling_derivative_exponent() {
        // model family: lobe(lambda) = A lambda^{5/4}; finite-difference
        // derivative fits a + a' lambda^{1/4} with a = 0, exponent 1/4.
        let mut pts = Vec::new();
        for k in 0..6 {
            let lambda = 0.8 / (2.0f64).powi(k);
            let d = 1e-4 * lambda;
            let lo = sep_lobe_action(&|_, _, _| 1.0, lambda - d, &CFG).unwrap();
            let hi = sep_lobe_action(&|_, _, _| 1.0, lambda + d, &CFG).unwrap();
            pts.push((lambda.ln(), ((hi - lo) / (2.0 * d)).ln()));
        }
        let slope = fit_slope(&pts);
        assert!((slope - 0.25).abs() < 0.01, "slope {slope}");
    }

    #[test]
    fn sep_lobe_vanishes_at_cusp() {
        let tiny = sep_lobe_action(&|_, _, _| 1.0, 1e-4, &CFG).unwrap();
        assert!(tiny.abs() < 1e-5, "{tiny}");
    }

    #[test]
    fn profile_elliptic() {
        let grid = [GridPoint { h: 0.1, lambda: None }, GridPoint { h: 0.2, lambda: None }];
        let p = action_profile(ActionKind::Elliptic, &|_, _, _| 1.0, "1", &grid, &CFG).unwrap();
        assert!((p.values[0] - 0.05).abs() < 1e-10);
        assert!((p.values[1] - 0.10).abs() < 1e-10);
        let csv = p.to_csv();
        assert!(csv.starts_with("kind,eps,h,value\n"));
    }

    #[test]
    fn profile_vanishing_monotone_in_lambda() {
        let grid: Vec<GridPoint> = (1..=5)
            .map(|k| GridPoint { h: 0.0, lambda: Some(0.2 * k as f64) })
            .collect();
        let p = action_profile(ActionKind::VanishingCycle, &|_, _, _| 1.0, "1", &grid, &CFG).unwrap();
        for w in p.values.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn profile_empty_grid() {
        let p = action_profile(ActionKind::Elliptic, &|_, _, _| 1.0, "1", &[], &CFG).unwrap();
        assert!(p.values.is_empty());
    }

    #[test]
    fn profile_error_carries_index() {
        let grid = [
            GridPoint { h: 0.0, lambda: Some(1.0) },
            GridPoint { h: 9.0, lambda: Some(1.0) },
        ];
        let err = action_profile(ActionKind::VanishingCycle, &|_, _, _| 1.0, "1", &grid, &CFG)
            .unwrap_err();
        assert!(matches!(err, Error::AtGridIndex { index: 1, .. }));
    }

    #[test]
    fn branch_helpers_cover_loop() {
        // sanity: Lower < Upper on the loop interior
        let lo = ModelHamiltonian::CuspFamily.level_branch(0.3, 0.0, 1.0, Branch::Lower).unwrap();
        let hi = ModelHamiltonian::CuspFamily.level_branch(0.3, 0.0, 1.0, Branch::Upper).unwrap();
        assert!(lo < hi);
    }
}
