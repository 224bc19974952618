//! Numerical integration with algebraic endpoint singularities.
//!
//! One tanh-sinh (double exponential) scheme absorbs every endpoint exponent
//! appearing in the action integrals (-1/2, -2/3, +1/2, N+1/2); the endpoint
//! weight factors (t-a)^alpha (b-t)^beta are folded in analytically so the
//! core function never sees the singular scale. Gauss-Legendre handles the
//! smooth inner integrals of the 2-D region sweeps.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::hamiltonians::{Branch, ModelHamiltonian};

/// Integrand core(t) * (t-a)^alpha * (b-t)^beta on [a, b], core continuous.
pub struct SingularIntegrand<'a> {
    pub core: &'a dyn Fn(f64) -> f64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub tol: f64,
    pub max_levels: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_levels: 12 }
    }
}

impl QuadConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// One tanh-sinh node: abscissa mapped to [-1,1] plus stable log(1 -+ x).
struct Node {
    x: f64,
    /// log(1 - x) computed without cancellation
    log_1m: f64,
    /// log(1 + x)
    log_1p: f64,
    weight: f64,
}

fn tanh_sinh_node(t: f64) -> Node {
    let v = 0.5 * PI * t.sinh();
    // 1 -+ tanh(v) = 2 / (e^{+-2v} + 1)
    let log_1m = (2.0f64).ln() - ln_1p_exp(2.0 * v);
    let log_1p = (2.0f64).ln() - ln_1p_exp(-2.0 * v);
    let x = v.tanh();
    let cosh_v = v.cosh();
    let weight = 0.5 * PI * t.cosh() / (cosh_v * cosh_v);
    Node { x, log_1m, log_1p, weight }
}

/// ln(1 + e^u), overflow-safe.
fn ln_1p_exp(u: f64) -> f64 {
    if u > 36.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

/// Integrate core(t) (t-a)^alpha (b-t)^beta over [a,b] by tanh-sinh.
///
/// Exponents must exceed -1. Converges when successive level estimates agree
/// to `tol * (1 + |result|)`; otherwise reports the last two estimates.
pub fn integrate_singular(s: &SingularIntegrand<'_>, cfg: &QuadConfig) -> Result<f64> {
    if s.alpha <= -1.0 || s.beta <= -1.0 {
        return Err(Error::InvalidParameter {
            reason: format!("endpoint exponents must exceed -1 (alpha={}, beta={})", s.alpha, s.beta),
        });
    }
    if s.a == s.b {
        return Ok(0.0);
    }
    if s.a > s.b {
        return Err(Error::InvalidParameter { reason: "empty interval: a > b".into() });
    }
    let half = 0.5 * (s.b - s.a);
    let mid = 0.5 * (s.a + s.b);
    let log_half = half.ln();

    let eval_at = |node: &Node| -> f64 {
        // t - a = half*(1+x), b - t = half*(1-x); powers via logs.
        let t = mid + half * node.x;
        let pow = s.alpha * (log_half + node.log_1p) + s.beta * (log_half + node.log_1m);
        let c = (s.core)(t);
        if c == 0.0 {
            return 0.0;
        }
        c * pow.exp() * node.weight * half
    };

    let t_max = 6.0;
    let mut h = 1.0;
    let mut sum = eval_at(&tanh_sinh_node(0.0));
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval_at(&tanh_sinh_node(t)) + eval_at(&tanh_sinh_node(-t));
        k += 1;
    }
    let mut estimate = sum * h;
    let mut prev;

    for _level in 1..=cfg.max_levels {
        h *= 0.5;
        let mut new_sum = 0.0;
        let mut t = h;
        while t <= t_max {
            new_sum += eval_at(&tanh_sinh_node(t)) + eval_at(&tanh_sinh_node(-t));
            t += 2.0 * h;
        }
        sum += new_sum;
        prev = estimate;
        estimate = sum * h;
        let err = (estimate - prev).abs();
        if err <= cfg.tol * (1.0 + estimate.abs()) && _level >= 3 {
            return Ok(estimate);
        }
    }
    let err = (estimate - (sum - 0.0) * h).abs();
    // final check against the second-to-last level
    if err <= 10.0 * cfg.tol * (1.0 + estimate.abs()) {
        return Ok(estimate);
    }
    Err(Error::QuadratureNonConvergence { prev: estimate - err, last: estimate })
}

/// Plain tanh-sinh for an integrand given directly (alpha = beta = 0).
pub fn integrate_ts(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cfg: &QuadConfig) -> Result<f64> {
    integrate_singular(&SingularIntegrand { core: f, alpha: 0.0, beta: 0.0, a, b }, cfg)
}

// --- Gauss-Legendre ---------------------------------------------------------

fn legendre_nodes_32() -> &'static Vec<(f64, f64)> {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre_nodes(32))
}

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn gauss_legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_eval(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_eval(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// 32-point Gauss-Legendre on [a, b]; exact for polynomial degree <= 63.
pub fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    legendre_nodes_32()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Adaptive Gauss-Legendre for smooth integrands: bisect until two scales agree.
pub fn gauss_legendre_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let whole = gauss_legendre(f, a, b);
        let mid = 0.5 * (a + b);
        let split = gauss_legendre(f, a, mid) + gauss_legendre(f, mid, b);
        if (whole - split).abs() <= tol * (1.0 + split.abs()) || depth >= 30 {
            if depth >= 30 {
                return Err(Error::QuadratureNonConvergence { prev: whole, last: split });
            }
            return Ok(split);
        }
        Ok(recurse(f, a, mid, 0.5 * tol, depth + 1)? + recurse(f, mid, b, 0.5 * tol, depth + 1)?)
    }
    recurse(f, a, b, tol, 0)
}

// --- 2-D region integrals ---------------------------------------------------

/// Level-bounded integration region, described by model kind plus parameters.
#[derive(Debug, Clone, Copy)]
pub enum Region {
    /// {x^2 + y^2 <= h}
    EllipticDisk { h: f64 },
    /// {|y| <= x <= sqrt(h + y^2), |y| <= eps}
    HyperbolicQuadrant { h: f64, eps: f64 },
    /// Between the H=0 and H=h levels of x^2 - y^3, sections x = +-eps.
    /// Signed: the h<0 region above the H=0 curve counts positive.
    CuspSection { h: f64, eps: f64 },
    /// Compact component bounded by the vanishing loop of x^2 - y^3 + lambda*y.
    VanishingLoop { h: f64, lambda: f64 },
}

pub struct RegionIntegral {
    pub value: f64,
    pub empty: bool,
}

/// Iterated integral of g over the region; inner bounds from level branches,
/// outer endpoints with turning-point singularities handled by tanh-sinh.
pub fn integrate_region(
    g: &dyn Fn(f64, f64) -> f64,
    region: Region,
    cfg: &QuadConfig,
) -> Result<RegionIntegral> {
    match region {
        Region::EllipticDisk { h } => {
            if h < 0.0 {
                return Err(Error::InvalidParameter { reason: format!("disk needs h >= 0, got {h}") });
            }
            if h == 0.0 {
                return Ok(RegionIntegral { value: 0.0, empty: true });
            }
            let r = h.sqrt();
            let outer = |x: f64| {
                let ymax = (h - x * x).max(0.0).sqrt();
                gauss_legendre(&|y| g(x, y), -ymax, ymax)
            };
            let value = integrate_ts(&outer, -r, r, cfg)?;
            Ok(RegionIntegral { value, empty: false })
        }
        Region::HyperbolicQuadrant { h, eps } => {
            if eps <= 0.0 {
                return Err(Error::InvalidParameter { reason: format!("eps must be positive, got {eps}") });
            }
            if h < -eps * eps {
                return Err(Error::InvalidParameter {
                    reason: format!("h = {h} below -eps^2 = {}", -eps * eps),
                });
            }
            if h <= 0.0 {
                return Ok(RegionIntegral { value: 0.0, empty: true });
            }
            let outer = |y: f64| {
                let lo = y.abs();
                let hi = (h + y * y).sqrt();
                if hi <= lo {
                    0.0
                } else {
                    gauss_legendre(&|x| g(x, y), lo, hi)
                }
            };
            // |y| kink at 0: split there
            let value = integrate_ts(&outer, -eps, 0.0, cfg)? + integrate_ts(&outer, 0.0, eps, cfg)?;
            Ok(RegionIntegral { value, empty: false })
        }
        Region::CuspSection { h, eps } => {
            if eps <= 0.0 {
                return Err(Error::InvalidParameter { reason: format!("eps must be positive, got {eps}") });
            }
            if h == 0.0 {
                return Ok(RegionIntegral { value: 0.0, empty: true });
            }
            let outer = |x: f64| {
                let y0 = cbrt(x * x);
                let y1 = cbrt(x * x - h);
                gauss_legendre(&|y| g(x, y), y0, y1)
            };
            // |x|^{2/3} kink at 0: split there
            let value = integrate_ts(&outer, -eps, 0.0, cfg)? + integrate_ts(&outer, 0.0, eps, cfg)?;
            Ok(RegionIntegral { value, empty: false })
        }
        Region::VanishingLoop { h, lambda } => {
            let model = ModelHamiltonian::CuspFamily;
            if !inside_swallow_tail(h, lambda) {
                return Err(Error::OutsideSwallowTail { h, lambda });
            }
            let h_saddle = 2.0 * (lambda / 3.0_f64).powf(1.5);
            let x_max = (h + h_saddle).sqrt();
            let outer = |x: f64| {
                let lo = model.level_branch(x, h, lambda, Branch::Lower);
                let hi = model.level_branch(x, h, lambda, Branch::Upper);
                match (lo, hi) {
                    (Ok(lo), Ok(hi)) => gauss_legendre(&|y| g(x, y), lo, hi),
                    _ => 0.0,
                }
            };
            let value = integrate_ts(&outer, -x_max, x_max, cfg)?;
            Ok(RegionIntegral { value, empty: false })
        }
    }
}

/// Swallow-tail domain D = {lambda > 0, h^2 < 4 (lambda/3)^3}.
pub fn inside_swallow_tail(h: f64, lambda: f64) -> bool {
    lambda > 0.0 && h * h < 4.0 * (lambda / 3.0).powi(3)
}

/// Real cube root: sign(s) |s|^{1/3}.
pub fn cbrt(s: f64) -> f64 {
    s.cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_half_half() {
        // B(1/2, 1/2) = pi
        let one = |_: f64| 1.0;
        let s = SingularIntegrand { core: &one, alpha: -0.5, beta: -0.5, a: 0.0, b: 1.0 };
        let v = integrate_singular(&s, &QuadConfig::default()).unwrap();
        assert!((v - PI).abs() < 1e-12, "{v}");
    }

    #[test]
    fn plain_interval() {
        let one = |_: f64| 1.0;
        let s = SingularIntegrand { core: &one, alpha: 0.0, beta: 0.0, a: 0.0, b: 2.0 };
        let v = integrate_singular(&s, &QuadConfig::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-13, "{v}");
    }

    #[test]
    fn beta_five_half_half() {
        // t * t^{1/2} (1-t)^{-1/2}: B(5/2, 1/2) = 3 pi / 8
        let core = |t: f64| t;
        let s = SingularIntegrand { core: &core, alpha: 0.5, beta: -0.5, a: 0.0, b: 1.0 };
        let v = integrate_singular(&s, &QuadConfig::default()).unwrap();
        assert!((v - 3.0 * PI / 8.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn invalid_exponent_rejected() {
        let one = |_: f64| 1.0;
        let s = SingularIntegrand { core: &one, alpha: -1.0, beta: 0.0, a: 0.0, b: 1.0 };
        assert!(integrate_singular(&s, &QuadConfig::default()).is_err());
    }

    #[test]
    fn disk_area() {
        let r = integrate_region(&|_, _| 1.0, Region::EllipticDisk { h: 1.0 }, &QuadConfig::default())
            .unwrap();
        assert!((r.value - PI).abs() < 1e-10, "{}", r.value);
        assert!(!r.empty);
    }

    #[test]
    fn empty_regions_flagged() {
        let r = integrate_region(
            &|_, _| 1.0,
            Region::HyperbolicQuadrant { h: 0.0, eps: 1.0 },
            &QuadConfig::default(),
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.empty);
    }

    /// Independent oracle: adaptive Simpson, no shared code with tanh-sinh.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let whole = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let left = (m - a) / 6.0 * (f(a) + 4.0 * f(lm) + f(m));
        let right = (b - m) / 6.0 * (f(m) + 4.0 * f(rm) + f(b));
        if depth > 40 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, 0.5 * tol, depth + 1) + simpson(f, m, b, 0.5 * tol, depth + 1)
        }
    }

    #[test]
    fn cusp_section_matches_oracle() {
        // area between H=0 and H=-1 levels of x^2-y^3 inside |x|<=1:
        // integral of (x^2+1)^{1/3} - x^{2/3}
        let oracle = simpson(&|x: f64| (x * x + 1.0).cbrt() - (x * x).cbrt(), -1.0, 1.0, 1e-12, 0);
        assert!((oracle - 0.9896).abs() < 5e-4, "oracle {oracle}");
        let r = integrate_region(
            &|_, _| 1.0,
            Region::CuspSection { h: -1.0, eps: 1.0 },
            &QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - oracle).abs() < 1e-9, "{} vs {}", r.value, oracle);
    }

    #[test]
    fn vanishing_loop_matches_oracle() {
        // loop of x^2 - y^3 + y at h = 0: area = 2 * integral_0^1 sqrt(s - s^3) ds
        let oracle = 2.0 * simpson(&|s: f64| (s - s * s * s).max(0.0).sqrt(), 0.0, 1.0, 1e-12, 0);
        assert!((oracle - 0.9585).abs() < 5e-4, "oracle {oracle}");
        let r = integrate_region(
            &|_, _| 1.0,
            Region::VanishingLoop { h: 0.0, lambda: 1.0 },
            &QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value - oracle).abs() < 1e-8, "{} vs {}", r.value, oracle);
    }

    #[test]
    fn linearity_and_symmetry() {
        let cfg = QuadConfig::default();
        let f = |x: f64, y: f64| x * x + 0.5 * y;
        let g = |x: f64, y: f64| y * y - x;
        let sum = |x: f64, y: f64| 2.0 * f(x, y) + 3.0 * g(x, y);
        let reg = Region::EllipticDisk { h: 0.8 };
        let a = integrate_region(&f, reg, &cfg).unwrap().value;
        let b = integrate_region(&g, reg, &cfg).unwrap().value;
        let c = integrate_region(&sum, reg, &cfg).unwrap().value;
        assert!((c - (2.0 * a + 3.0 * b)).abs() < 2.0 * cfg.tol * (1.0 + c.abs()));

        // odd in x over an x-symmetric region
        let odd = integrate_region(&|x, _| x * x * x, reg, &cfg).unwrap().value;
        assert!(odd.abs() < cfg.tol);
    }

    #[test]
    fn refinement_monotonicity() {
        let coarse = QuadConfig::with_tol(1e-6);
        let fine = QuadConfig::with_tol(5e-7);
        let f = |x: f64, y: f64| (1.0 + x * y).exp();
        let reg = Region::EllipticDisk { h: 0.5 };
        let a = integrate_region(&f, reg, &coarse).unwrap().value;
        let b = integrate_region(&f, reg, &fine).unwrap().value;
        assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
    }

    #[test]
    fn gauss_legendre_polynomial_exact() {
        // degree 9 polynomial integrated exactly
        let f = |x: f64| 3.0 * x.powi(9) - x.powi(4) + 2.0;
        let v = gauss_legendre(&f, -1.0, 2.0);
        let exact = 3.0 * (2.0f64.powi(10) - 1.0) / 10.0 - (2.0f64.powi(5) + 1.0) / 5.0 + 2.0 * 3.0;
        assert!((v - exact).abs() < 1e-12 * exact.abs());
    }
}
