//! The fixed model Hamiltonian families and their level-curve geometry,
//! plus the right-left model system built from a two-variable germ.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::ode::Rk45;
use crate::series::{parse, TruncatedSeries};

pub const TAU: f64 = std::f64::consts::TAU;

/// One of the model families: x^2+y^2, x^2-y^2, x^2-y^3, x^2-y^3+lambda*y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelHamiltonian {
    Elliptic,
    Hyperbolic,
    Cusp,
    CuspFamily,
}

/// Component selector for level sets.
///
/// Elliptic/Hyperbolic: `Upper`/`Lower` pick the sign of y. CuspFamily inside
/// the swallow-tail: `Lower`/`Upper` are the bottom and top edges of the
/// vanishing loop, `Outer` the unbounded branch. The cusp level set is a
/// single unbounded graph, addressed as `Outer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Upper,
    Outer,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Branch::Lower => "lower",
            Branch::Upper => "upper",
            Branch::Outer => "outer",
        };
        write!(f, "{name}")
    }
}

impl ModelHamiltonian {
    pub fn name(&self) -> &'static str {
        match self {
            ModelHamiltonian::Elliptic => "elliptic",
            ModelHamiltonian::Hyperbolic => "hyperbolic",
            ModelHamiltonian::Cusp => "cusp",
            ModelHamiltonian::CuspFamily => "cusp-family",
        }
    }

    pub fn uses_lambda(&self) -> bool {
        matches!(self, ModelHamiltonian::CuspFamily)
    }

    pub fn h(&self, x: f64, y: f64, lambda: f64) -> f64 {
        match self {
            ModelHamiltonian::Elliptic => x * x + y * y,
            ModelHamiltonian::Hyperbolic => x * x - y * y,
            ModelHamiltonian::Cusp => x * x - y * y * y,
            ModelHamiltonian::CuspFamily => x * x - y * y * y + lambda * y,
        }
    }

    pub fn h_x(&self, x: f64, _y: f64, _lambda: f64) -> f64 {
        2.0 * x
    }

    pub fn h_y(&self, _x: f64, y: f64, lambda: f64) -> f64 {
        match self {
            ModelHamiltonian::Elliptic => 2.0 * y,
            ModelHamiltonian::Hyperbolic => -2.0 * y,
            ModelHamiltonian::Cusp => -3.0 * y * y,
            ModelHamiltonian::CuspFamily => -3.0 * y * y + lambda,
        }
    }

    /// H as an exact series over `vars` (which must contain x, y and, for the
    /// family, lambda).
    pub fn h_series(&self, vars: &[&str], order: u32) -> Result<TruncatedSeries> {
        let expr = match self {
            ModelHamiltonian::Elliptic => "x^2 + y^2",
            ModelHamiltonian::Hyperbolic => "x^2 - y^2",
            ModelHamiltonian::Cusp => "x^2 - y^3",
            ModelHamiltonian::CuspFamily => "x^2 - y^3 + lambda*y",
        };
        parse(expr, vars, order)
    }

    /// f(y) in H = x^2 + f(y).
    pub fn f_of_y(&self, vars: &[&str], order: u32) -> Result<TruncatedSeries> {
        let expr = match self {
            ModelHamiltonian::Elliptic => "y^2",
            ModelHamiltonian::Hyperbolic => "-y^2",
            ModelHamiltonian::Cusp => "-y^3",
            ModelHamiltonian::CuspFamily => "-y^3 + lambda*y",
        };
        parse(expr, vars, order)
    }

    /// Saddle value of the family: H at (0, +sqrt(lambda/3)).
    pub fn saddle_level(lambda: f64) -> f64 {
        2.0 * (lambda / 3.0).max(0.0).powf(1.5)
    }

    /// Solve H(x, y, lambda) = h for y on the requested branch.
    pub fn level_branch(&self, x: f64, h: f64, lambda: f64, branch: Branch) -> Result<f64> {
        let fail = |b: Branch| Error::NoRealBranch { branch: b.to_string(), x, h, lambda };
        let y = match self {
            ModelHamiltonian::Elliptic => {
                let s = h - x * x;
                if s < 0.0 {
                    return Err(fail(branch));
                }
                match branch {
                    Branch::Upper => s.sqrt(),
                    Branch::Lower => -s.sqrt(),
                    Branch::Outer => return Err(fail(branch)),
                }
            }
            ModelHamiltonian::Hyperbolic => {
                let s = x * x - h;
                if s < 0.0 {
                    return Err(fail(branch));
                }
                match branch {
                    Branch::Upper => s.sqrt(),
                    Branch::Lower => -s.sqrt(),
                    Branch::Outer => return Err(fail(branch)),
                }
            }
            ModelHamiltonian::Cusp => match branch {
                Branch::Outer => (x * x - h).cbrt(),
                other => return Err(fail(other)),
            },
            ModelHamiltonian::CuspFamily => {
                let roots = cubic_level_roots(lambda, x * x - h);
                match (branch, roots) {
                    (Branch::Lower, CubicRoots::Three(r, _, _)) => r,
                    (Branch::Upper, CubicRoots::Three(_, r, _)) => r,
                    (Branch::Outer, CubicRoots::Three(_, _, r)) => r,
                    (Branch::Outer, CubicRoots::One(r)) => r,
                    (b, CubicRoots::One(_)) => return Err(fail(b)),
                }
            }
        };
        Ok(self.polish_level(x, y, h, lambda))
    }

    /// Newton refinement of a level solution in y.
    fn polish_level(&self, x: f64, mut y: f64, h: f64, lambda: f64) -> f64 {
        for _ in 0..4 {
            let r = self.h(x, y, lambda) - h;
            let d = self.h_y(x, y, lambda);
            if d.abs() < 1e-14 {
                break;
            }
            let step = r / d;
            y -= step;
            if step.abs() < 1e-16 * (1.0 + y.abs()) {
                break;
            }
        }
        y
    }
}

/// Real roots of y^3 - lambda*y - d = 0, ascending.
pub enum CubicRoots {
    One(f64),
    Three(f64, f64, f64),
}

pub fn cubic_level_roots(lambda: f64, d: f64) -> CubicRoots {
    let p = -lambda;
    let q = -d;
    let polish = |mut t: f64| {
        for _ in 0..8 {
            let f = t * t * t + p * t + q;
            let df = 3.0 * t * t + p;
            if df.abs() < 1e-300 {
                break;
            }
            let step = f / df;
            t -= step;
            if step.abs() <= 1e-16 * (1.0 + t.abs()) {
                break;
            }
        }
        t
    };
    let disc = -4.0 * p * p * p - 27.0 * q * q;
    if lambda > 0.0 && disc > 0.0 {
        let m = (lambda / 3.0).sqrt();
        let w = (d / (2.0 * m * m * m)).clamp(-1.0, 1.0);
        let theta = w.acos();
        let root = |k: f64| 2.0 * m * (theta / 3.0 - k * std::f64::consts::TAU / 3.0).cos();
        let (r0, r1, r2) = (polish(root(0.0)), polish(root(1.0)), polish(root(2.0)));
        let mut rs = [r0, r1, r2];
        rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        CubicRoots::Three(rs[0], rs[1], rs[2])
    } else {
        // Cardano, stable variant
        let t = if p == 0.0 {
            (-q).cbrt()
        } else {
            let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
            let u = if q >= 0.0 { (-q / 2.0 - s).cbrt() } else { (-q / 2.0 + s).cbrt() };
            if u.abs() > 1e-300 {
                u - p / (3.0 * u)
            } else {
                0.0
            }
        };
        CubicRoots::One(polish(t))
    }
}

/// Trace the level component of the cusp family through (x, y) in the -y
/// direction until it meets the y-axis; returns that axis ordinate f, so that
/// H(0, f, lambda) = H(x, y, lambda).
///
/// Continuation is predictor-corrector along the curve with the step bounded
/// by a curvature estimate, crossing of {x = 0} located by bisection on the
/// step, and the endpoint polished against the exact level cubic.
pub fn trace_to_axis(x: f64, y: f64, lambda: f64, chart_radius: f64) -> Result<f64> {
    let model = ModelHamiltonian::CuspFamily;
    if x == 0.0 {
        return Ok(y);
    }
    let h = model.h(x, y, lambda);
    let sign = x.signum();

    let mut px = x;
    let mut py = y;
    let tol = 1e-14 * (1.0 + h.abs());
    let correct = |cx: f64, cy: f64| -> (f64, f64) {
        let mut ux = cx;
        let mut uy = cy;
        for _ in 0..12 {
            let r = model.h(ux, uy, lambda) - h;
            if r.abs() <= tol {
                break;
            }
            let gx = model.h_x(ux, uy, lambda);
            let gy = model.h_y(ux, uy, lambda);
            let g2 = gx * gx + gy * gy;
            if g2 < 1e-28 {
                break;
            }
            ux -= r * gx / g2;
            uy -= r * gy / g2;
        }
        (ux, uy)
    };

    let mut steps = 0u32;
    loop {
        steps += 1;
        if steps > 400_000 {
            return Err(Error::PathNotConnected { x, y });
        }
        if px.abs() > chart_radius || py.abs() > chart_radius {
            return Err(Error::PathNotConnected { x, y });
        }
        let gx = model.h_x(px, py, lambda);
        let gy = model.h_y(px, py, lambda);
        let norm = (gx * gx + gy * gy).sqrt();
        if norm < 1e-13 {
            // sitting on a critical point; critical points lie on the axis
            return Ok(py);
        }
        // tangent oriented toward decreasing y on this side
        let (tx, ty) = (sign * gy / norm, -sign * gx / norm);
        // curvature of the level curve
        let (hxx, hxy) = (2.0, 0.0);
        let hyy = -6.0 * py;
        let kappa = (hxx * gy * gy - 2.0 * hxy * gx * gy + hyy * gx * gx).abs() / norm.powi(3);
        let ds = (0.2 / (1.0 + 3.0 * kappa)).clamp(1e-6, 0.05);

        let (nx, ny) = correct(px + ds * tx, py + ds * ty);
        if nx.signum() != px.signum() || nx == 0.0 {
            // crossing of the axis inside this step: bisect on step length
            let mut lo = 0.0;
            let mut hi = ds;
            let mut axis_y = ny;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let (mx, my) = correct(px + mid * tx, py + mid * ty);
                if mx.signum() != px.signum() || mx == 0.0 {
                    hi = mid;
                    axis_y = my;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            return Ok(nearest_axis_root(lambda, h, axis_y));
        }
        px = nx;
        py = ny;
    }
}

/// Root of t^3 - lambda t + h = 0 (the level's axis ordinates) nearest `guess`.
fn nearest_axis_root(lambda: f64, h: f64, guess: f64) -> f64 {
    match cubic_level_roots(lambda, -h) {
        CubicRoots::One(r) => r,
        CubicRoots::Three(a, b, c) => {
            let mut best = a;
            for r in [b, c] {
                if (r - guess).abs() < (best - guess).abs() {
                    best = r;
                }
            }
            best
        }
    }
}

// --- Right-left model system -------------------------------------------------

pub const GERM_VARS: [&str; 2] = ["Htilde", "Jtilde"];

/// Germ J(Htilde, Jtilde) with J(0,0) = 0 and dJ/dJtilde(0,0) > 0; drives the
/// glued model system whose 2 pi-periodic integral it becomes.
#[derive(Debug, Clone)]
pub struct GermJ {
    series: TruncatedSeries,
    d_h: TruncatedSeries,
    d_j: TruncatedSeries,
}

impl GermJ {
    pub fn new(series: TruncatedSeries) -> Result<Self> {
        if series.vars() != GERM_VARS {
            return Err(Error::InvalidGerm {
                reason: format!("germ variables must be {GERM_VARS:?}, got {:?}", series.vars()),
            });
        }
        if !series.coefficient(&[0, 0]).is_zero() {
            return Err(Error::InvalidGerm { reason: "J(0,0) must vanish".into() });
        }
        let lin = series.coefficient(&[0, 1]);
        if !lin.is_positive() {
            return Err(Error::InvalidGerm {
                reason: format!("dJ/dJtilde(0,0) must be positive, got {lin}"),
            });
        }
        let d_h = series.partial("Htilde")?;
        let d_j = series.partial("Jtilde")?;
        Ok(Self { series, d_h, d_j })
    }

    pub fn parse(expr: &str, order: u32) -> Result<Self> {
        Self::new(parse(expr, &GERM_VARS, order)?)
    }

    pub fn series(&self) -> &TruncatedSeries {
        &self.series
    }

    pub fn d_h(&self, h: f64, j: f64) -> f64 {
        self.d_h.eval_f64(&[h, j])
    }

    pub fn d_j(&self, h: f64, j: f64) -> f64 {
        self.d_j.eval_f64(&[h, j])
    }
}

impl TryFrom<TruncatedSeries> for GermJ {
    type Error = Error;
    fn try_from(series: TruncatedSeries) -> Result<Self> {
        Self::new(series)
    }
}

fn model_h(x: f64, y: f64, lambda: f64) -> f64 {
    ModelHamiltonian::CuspFamily.h(x, y, lambda)
}

/// Period of the model circle action through the point:
/// T = 2 pi dJ/dJtilde (Htilde(pt), Jtilde(pt)).
pub fn model_period(germ: &GermJ, point: (f64, f64, f64)) -> f64 {
    let (x, y, lambda) = point;
    TAU * germ.d_j(model_h(x, y, lambda), lambda)
}

/// Flow the Hamiltonian vector field of J(Htilde, Jtilde) from the section
/// {mu = 0} until the glued section {mu = T(x, y, lambda)}; the returned time
/// certifies the 2 pi-periodicity of the glued model.
///
/// The (x, y) part advances along the plane field of Htilde at rate
/// dJ/dHtilde while the fiber coordinate mu advances at the angular rate
/// dJ/dJtilde, both re-evaluated from the current point, so the hit time is
/// 2 pi exactly when Htilde is transported invariantly.
pub fn model_return_time(germ: &GermJ, start: (f64, f64, f64), chart_radius: f64) -> Result<f64> {
    let (x0, y0, lambda) = start;
    let rhs = |s: &[f64], out: &mut [f64]| {
        let (x, y, mu) = (s[0], s[1], s[2]);
        let _ = mu;
        let h = model_h(x, y, lambda);
        let jh = germ.d_h(h, lambda);
        let jj = germ.d_j(h, lambda);
        out[0] = jh * (3.0 * y * y - lambda);
        out[1] = jh * 2.0 * x;
        out[2] = jj;
    };
    let section = |s: &[f64]| {
        let t = TAU * germ.d_j(model_h(s[0], s[1], lambda), lambda);
        s[2] - t
    };
    let rk = Rk45 { tol: 1e-12, h_init: 1e-3, h_min: 1e-13, h_max: 0.1 };
    let (t, state) = rk.integrate_to_event(&rhs, &[x0, y0, 0.0], &section, 4.0 * TAU)?;
    if state[0].abs() > chart_radius || state[1].abs() > chart_radius {
        return Err(Error::ChartEscape { x: state[0], y: state[1], radius: chart_radius });
    }
    Ok(t)
}
