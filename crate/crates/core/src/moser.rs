//! Explicit solutions of the transport equation du ^ dH = g dx ^ dy,
//! flow-based verification of the induced diffeomorphism, and the smoothness
//! diagnostics that shadow the area-function hypothesis.

use std::collections::HashMap;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::hamiltonians::{trace_to_axis, ModelHamiltonian};
use crate::ode::Rk45;
use crate::quadrature::{integrate_ts, QuadConfig};
use crate::series::{CompiledPoly, TruncatedSeries};

/// Locus on which the transported u vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// u = 0 on the section {x = x0} (x0 = 0 gives the y-axis condition).
    SectionX(f64),
    /// u = 0 on {y = 0}.
    AxisY,
}

/// Evaluator for u solving u_x H_y - u_y H_x = g, backed by level-curve
/// quadrature: u(Q) = -sigma * int g/|grad H| ds along the level component
/// from Q (traced in direction sigma) to the initial-condition locus.
///
/// Evaluations are memoized; the cache is synchronized, results do not depend
/// on evaluation order.
pub struct TransportSolution {
    model: ModelHamiltonian,
    g: CompiledPoly,
    /// maps each density variable to its slot in (x, y, lambda)
    slots: Vec<usize>,
    ic: InitialCondition,
    chart_radius: f64,
    cache: Mutex<HashMap<(u64, u64, u64), f64>>,
}

impl TransportSolution {
    pub fn model(&self) -> ModelHamiltonian {
        self.model
    }

    /// u at (x, y) with the family parameter fixed to `lambda`.
    pub fn eval(&self, x: f64, y: f64, lambda: f64) -> Result<f64> {
        let key = (x.to_bits(), y.to_bits(), lambda.to_bits());
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = self.eval_uncached(x, y, lambda)?;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }

    fn g_at(&self, x: f64, y: f64, lambda: f64) -> f64 {
        let coords = [x, y, lambda, 0.0];
        let mut buf = [0.0f64; 4];
        for (i, &s) in self.slots.iter().enumerate() {
            buf[i] = coords[s];
        }
        self.g.eval(&buf[..self.slots.len()])
    }

    fn eval_uncached(&self, x: f64, y: f64, lambda: f64) -> Result<f64> {
        // already on the locus
        match self.ic {
            InitialCondition::SectionX(x0) if x == x0 => return Ok(0.0),
            InitialCondition::AxisY if y == 0.0 => return Ok(0.0),
            _ => {}
        }
        let model = self.model;
        let h0 = model.h(x, y, lambda);
        let radius = self.chart_radius;

        // preferred direction: initially shrink the distance to the locus
        let tangent = |px: f64, py: f64| {
            let gx = model.h_x(px, py, lambda);
            let gy = model.h_y(px, py, lambda);
            let n = (gx * gx + gy * gy).sqrt();
            (gy / n, -gx / n)
        };
        let (tx0, ty0) = tangent(x, y);
        let toward = match self.ic {
            InitialCondition::SectionX(x0) => (x0 - x) * tx0,
            InitialCondition::AxisY => -y * ty0,
        };
        let first: f64 = if toward >= 0.0 { 1.0 } else { -1.0 };

        // acc = int_Q^P0 du/ds ds = u(P0) - u(Q) = -u(Q), whatever the direction
        for sigma in [first, -first] {
            match self.trace(x, y, lambda, h0, sigma, radius) {
                Ok(acc) => return Ok(-acc),
                Err(Error::NoSectionCrossing { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::PathNotConnected { x, y })
    }

    /// Arclength trace in direction sigma until the locus; returns the
    /// accumulated integral of g/|grad H| ds. Level drift is suppressed by a
    /// feedback term along grad H.
    fn trace(&self, x: f64, y: f64, lambda: f64, h0: f64, sigma: f64, radius: f64) -> Result<f64> {
        let model = self.model;
        let rhs = |s: &[f64], out: &mut [f64]| {
            let (px, py) = (s[0], s[1]);
            let gx = model.h_x(px, py, lambda);
            let gy = model.h_y(px, py, lambda);
            let n2 = gx * gx + gy * gy;
            let n = n2.sqrt().max(1e-300);
            let drift = model.h(px, py, lambda) - h0;
            out[0] = sigma * gy / n - 4.0 * drift * gx / n2;
            out[1] = -sigma * gx / n - 4.0 * drift * gy / n2;
            out[2] = sigma * self.g_at(px, py, lambda) / n;
        };
        let event = |s: &[f64]| match self.ic {
            InitialCondition::SectionX(x0) => s[0] - x0,
            InitialCondition::AxisY => s[1],
        };
        let rk = Rk45 { tol: 1e-12, h_init: 1e-3, h_min: 1e-13, h_max: 0.05 };
        let s_max = 16.0 * radius;
        let (_, state) = rk.integrate_to_event(&rhs, &[x, y, 0.0], &event, s_max)?;
        if state[0].abs() > radius || state[1].abs() > radius {
            return Err(Error::ChartEscape { x: state[0], y: state[1], radius });
        }
        Ok(state[2])
    }
}

/// Build the transport evaluator for the density g (a polynomial over
/// (x, y[, lambda])) with the given vanishing locus.
pub fn transport_solve(
    model: ModelHamiltonian,
    g: &TruncatedSeries,
    ic: InitialCondition,
) -> Result<TransportSolution> {
    g.var_index("x")?;
    g.var_index("y")?;
    if model.uses_lambda() {
        g.var_index("lambda")?;
    }
    let slots = g
        .vars()
        .iter()
        .map(|v| match v.as_str() {
            "x" => 0,
            "y" => 1,
            "lambda" => 2,
            _ => 3,
        })
        .collect();
    Ok(TransportSolution {
        model,
        g: g.compile(),
        slots,
        ic,
        chart_radius: 6.0,
        cache: Mutex::new(HashMap::new()),
    })
}

// --- Parametric transport (cusp family) --------------------------------------

/// Gate configuration for the area-function hypothesis check.
#[derive(Debug, Clone, Copy)]
pub struct HypothesisGate {
    pub grid: (usize, usize),
    pub lambda_max: f64,
    pub tol: f64,
}

impl Default for HypothesisGate {
    fn default() -> Self {
        Self { grid: (16, 16), lambda_max: 0.5, tol: 1e-8 }
    }
}

/// u = sum_k a_k x^{2k+1} + remainder for the cusp family, built from the
/// coefficient recursion (2k+1)(lambda - 3y^2) a_k = g_k + 2 d/dy a_{k-1}
/// plus the sign(x) level-integral remainder with the trace-to-axis lower
/// limit. Construction refuses densities whose vanishing-cycle action does
/// not vanish on the swallow-tail domain.
pub struct ParametricTransport {
    u_poly: TruncatedSeries,
    g1: TruncatedSeries,
    u_poly_c: CompiledPoly,
    g1_c: CompiledPoly,
    slots: Vec<usize>,
    n: u32,
    quad: QuadConfig,
    cache: Mutex<HashMap<(u64, u64, u64), f64>>,
}

pub fn parametric_transport(
    g: &TruncatedSeries,
    n: u32,
    gate: &HypothesisGate,
) -> Result<ParametricTransport> {
    if !g.is_even_in("x")? {
        return Err(Error::OddPartPresent);
    }
    let vars: Vec<&str> = g.vars().iter().map(String::as_str).collect();
    if !vars.contains(&"lambda") {
        return Err(Error::UnknownVariable { var: "lambda".into() });
    }

    // hypothesis: vanishing-cycle action of g vanishes on a log-spaced grid
    let quad = QuadConfig::with_tol(1e-11);
    let (nl, nh) = gate.grid;
    let g_fn = |x: f64, y: f64, l: f64| {
        let mut point = Vec::with_capacity(vars.len());
        for v in g.vars() {
            point.push(match v.as_str() {
                "x" => x,
                "y" => y,
                "lambda" => l,
                _ => 0.0,
            });
        }
        g.eval_f64(&point)
    };
    for i in 0..nl {
        let lambda = gate.lambda_max * (2.0f64).powf(-(i as f64) / 2.0);
        let hs = ModelHamiltonian::saddle_level(lambda);
        for k in 0..nh {
            let frac = 0.9 * (2.0f64).powf(-(k as f64 / 2.0));
            let h = if k % 2 == 0 { hs * frac } else { -hs * frac };
            let action = crate::actions::vanishing_cycle_action(&g_fn, h, lambda, &quad)?;
            if action.abs() > gate.tol {
                return Err(Error::HypothesisViolated {
                    max_abs: action.abs(),
                    h,
                    lambda,
                    tol: gate.tol,
                });
            }
        }
    }

    // Taylor split and the exact coefficient recursion
    let xi = g.var_index("x")?;
    let work_order = 2 * g.degree() + 6;
    let gw = g.lift_order(work_order.max(g.order()));
    let slice = |s: &TruncatedSeries, k: u32| -> TruncatedSeries {
        let kept: Vec<(Vec<u32>, BigRational)> = s
            .terms()
            .filter(|(e, _)| e[xi] == 2 * k)
            .map(|(e, c)| {
                let mut e = e.clone();
                e[xi] = 0;
                (e, c.clone())
            })
            .collect();
        TruncatedSeries::from_terms(&vars, s.order(), kept)
    };
    let pivot = crate::series::parse("3*y^2", &vars, work_order)?;
    let two = BigRational::from(BigInt::from(2));
    let mut u_poly = TruncatedSeries::zero(&vars, work_order);
    let mut a_prev = TruncatedSeries::zero(&vars, work_order);
    for k in 0..=n {
        let gk = slice(&gw, k);
        let feed = a_prev.partial("y")?.scale(&two);
        let ord = gk.order().max(feed.order()).max(work_order);
        let rk = gk.lift_order(ord).add(&feed.lift_order(ord))?;
        // exact divisibility is the algebraic face of the hypothesis
        let ck = rk.substitute("lambda", &pivot.lift_order(rk.order()))?;
        if !ck.is_zero() {
            return Err(Error::InexactDivision {
                divisor: "lambda - 3y^2".into(),
                remainder: ck.to_string(),
            });
        }
        let q = rk.divide_by_linear("lambda", &pivot.lift_order(rk.order()))?;
        let ak = q.scale(&BigRational::new(BigInt::from(1), BigInt::from(2 * i64::from(k) + 1)));
        let xk = TruncatedSeries::var(&vars, ak.order().max(work_order), "x")?.pow(2 * k + 1)?;
        let ord = u_poly.order().max(ak.order()).max(xk.order());
        u_poly = u_poly.lift_order(ord).add(&ak.lift_order(ord).mul(&xk.lift_order(ord))?)?;
        a_prev = ak;
    }

    // leftover = g - D(u_poly), divisible by x^{2n+2}
    let delta = crate::moves::move_density(&u_poly, ModelHamiltonian::CuspFamily)?;
    let ord = gw.order().max(delta.degree()).max(gw.degree());
    let leftover = gw.lift_order(ord).sub(&delta.lift_order(ord))?;
    let g1 = divide_x_power(&leftover, xi, 2 * n + 2)?;

    let slots = u_poly
        .vars()
        .iter()
        .map(|v| match v.as_str() {
            "x" => 0,
            "y" => 1,
            "lambda" => 2,
            _ => 3,
        })
        .collect();
    Ok(ParametricTransport {
        u_poly_c: u_poly.compile(),
        g1_c: g1.compile(),
        u_poly,
        g1,
        slots,
        n,
        quad: QuadConfig::with_tol(1e-13),
        cache: Mutex::new(HashMap::new()),
    })
}

fn divide_x_power(s: &TruncatedSeries, xi: usize, power: u32) -> Result<TruncatedSeries> {
    let vars: Vec<&str> = s.vars().iter().map(String::as_str).collect();
    let mut terms = Vec::new();
    for (exp, c) in s.terms() {
        if exp[xi] < power {
            return Err(Error::InexactDivision {
                divisor: format!("x^{power}"),
                remainder: s.to_string(),
            });
        }
        let mut e = exp.clone();
        e[xi] -= power;
        terms.push((e, c.clone()));
    }
    Ok(TruncatedSeries::from_terms(&vars, s.order(), terms))
}

impl ParametricTransport {
    pub fn polynomial_part(&self) -> &TruncatedSeries {
        &self.u_poly
    }

    pub fn remainder_cofactor(&self) -> &TruncatedSeries {
        &self.g1
    }

    /// u(x, y, lambda): the odd polynomial part plus the sign(x) remainder
    /// integral along the level component down to the y-axis.
    pub fn eval(&self, x: f64, y: f64, lambda: f64) -> Result<f64> {
        let key = (x.to_bits(), y.to_bits(), lambda.to_bits());
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let poly = self.u_poly_c.eval(&self.point(x, y, lambda));
        let rem = if x == 0.0 || self.g1.is_zero() {
            0.0
        } else {
            let h = ModelHamiltonian::CuspFamily.h(x, y, lambda);
            let f_star = trace_to_axis(x, y, lambda, 8.0)?;
            let np = self.n as f64 + 0.5;
            let integrand = |t: f64| {
                let q = (h + t * t * t - lambda * t).max(0.0);
                let core = self.g1_c.eval(&self.point(q.sqrt(), t, lambda));
                q.powf(np) * core
            };
            let (a, b) = if f_star <= y { (f_star, y) } else { (y, f_star) };
            let sign_range = if f_star <= y { 1.0 } else { -1.0 };
            let integral = integrate_ts(&integrand, a, b, &self.quad)?;
            -0.5 * x.signum() * sign_range * integral
        };
        let v = poly + rem;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }

    fn point(&self, x: f64, y: f64, lambda: f64) -> [f64; 3] {
        let coords = [x, y, lambda, 0.0];
        let mut buf = [0.0f64; 3];
        for (i, &s) in self.slots.iter().enumerate() {
            buf[i] = coords[s];
        }
        buf
    }
}

// --- Flow verification --------------------------------------------------------

/// Time-u(Q) map of the Hamiltonian flow of H with respect to g1 dx ^ dy
/// (field (H_y, -H_x)/g1). Preserves H along the way.
pub fn flow_time_map(
    g1: &dyn Fn(f64, f64) -> f64,
    model: ModelHamiltonian,
    lambda: f64,
    time: f64,
    q: (f64, f64),
    chart_radius: f64,
) -> Result<(f64, f64)> {
    let rhs = |s: &[f64], out: &mut [f64]| {
        let (x, y) = (s[0], s[1]);
        let d = g1(x, y);
        out[0] = model.h_y(x, y, lambda) / d;
        out[1] = -model.h_x(x, y, lambda) / d;
    };
    let rk = Rk45 { tol: 1e-12, h_init: 1e-3, h_min: 1e-14, h_max: 0.05 };
    let segments = 8;
    let mut state = vec![q.0, q.1];
    for _ in 0..segments {
        state = rk.integrate(&rhs, &state, time / segments as f64)?;
        if state[0].abs() > chart_radius || state[1].abs() > chart_radius {
            return Err(Error::ChartEscape { x: state[0], y: state[1], radius: chart_radius });
        }
    }
    Ok((state[0], state[1]))
}

/// max over samples of |g1(Phi(Q)) det DPhi(Q) - g0(Q)|, with DPhi from
/// central differences (step 1e-5, Richardson-improved).
pub fn pullback_residual(
    g0: &dyn Fn(f64, f64) -> f64,
    g1: &dyn Fn(f64, f64) -> f64,
    u: &dyn Fn(f64, f64) -> Result<f64>,
    model: ModelHamiltonian,
    lambda: f64,
    samples: &[(f64, f64)],
) -> Result<f64> {
    let phi = |x: f64, y: f64| -> Result<(f64, f64)> {
        let t = u(x, y)?;
        flow_time_map(g1, model, lambda, t, (x, y), 8.0)
    };
    let mut worst: f64 = 0.0;
    for &(x, y) in samples {
        let image = phi(x, y)?;
        let jac = |step: f64| -> Result<[f64; 4]> {
            let xp = phi(x + step, y)?;
            let xm = phi(x - step, y)?;
            let yp = phi(x, y + step)?;
            let ym = phi(x, y - step)?;
            Ok([
                (xp.0 - xm.0) / (2.0 * step),
                (yp.0 - ym.0) / (2.0 * step),
                (xp.1 - xm.1) / (2.0 * step),
                (yp.1 - ym.1) / (2.0 * step),
            ])
        };
        let coarse = jac(1e-5)?;
        let fine = jac(5e-6)?;
        let mut improved = [0.0; 4];
        for i in 0..4 {
            improved[i] = (4.0 * fine[i] - coarse[i]) / 3.0;
        }
        let det = improved[0] * improved[3] - improved[1] * improved[2];
        let residual = (g1(image.0, image.1) * det - g0(x, y)).abs();
        worst = worst.max(residual);
    }
    Ok(worst)
}

// --- Singular-part fit ---------------------------------------------------------

/// Least-squares fit of samples (h, value), h < 0, to
/// c * (-h)^gamma + polynomial(h) of the given degree.
/// Returns (c, rms residual).
pub fn singular_part_fit(
    samples: &[(f64, f64)],
    gamma: f64,
    poly_degree: usize,
) -> Result<(f64, f64)> {
    if samples.len() < 8 {
        return Err(Error::InvalidParameter {
            reason: format!("need at least 8 samples, got {}", samples.len()),
        });
    }
    let cols = poly_degree + 2;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(h, _)| {
            let mut row = Vec::with_capacity(cols);
            row.push((-h).powf(gamma));
            for p in 0..=poly_degree {
                row.push(h.powi(p as i32));
            }
            row
        })
        .collect();
    let rhs: Vec<f64> = samples.iter().map(|&(_, v)| v).collect();
    let sol = lstsq(&rows, &rhs)?;
    let mut ss = 0.0;
    for (row, &v) in rows.iter().zip(&rhs) {
        let fit: f64 = row.iter().zip(&sol).map(|(a, b)| a * b).sum();
        ss += (fit - v) * (fit - v);
    }
    Ok((sol[0], (ss / samples.len() as f64).sqrt()))
}

/// Normal-equations least squares with partial pivoting.
pub(crate) fn lstsq(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rows[0].len();
    let mut ata = vec![vec![0.0f64; n + 1]; n];
    for (row, &b) in rows.iter().zip(rhs) {
        for i in 0..n {
            for j in 0..n {
                ata[i][j] += row[i] * row[j];
            }
            ata[i][n] += row[i] * b;
        }
    }
    let scale: f64 = ata.iter().map(|r| r[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| ata[a][col].abs().partial_cmp(&ata[b][col].abs()).unwrap())
            .unwrap();
        ata.swap(col, piv);
        let p = ata[col][col];
        if p.abs() < 1e-14 * scale.max(1e-300) {
            return Err(Error::RankDeficient { pivot: p });
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = ata[row][col] / p;
            for k in col..=n {
                ata[row][k] -= f * ata[col][k];
            }
        }
    }
    Ok((0..n).map(|i| ata[i][n] / ata[i][i]).collect())
}

// --- Finite-difference diagnostics ---------------------------------------------

/// 5-point central derivative of a fallible function.
pub fn fd_derivative(f: &dyn Fn(f64) -> Result<f64>, x: f64, step: f64) -> Result<f64> {
    Ok(
        (-f(x + 2.0 * step)? + 8.0 * f(x + step)? - 8.0 * f(x - step)? + f(x - 2.0 * step)?)
            / (12.0 * step),
    )
}

/// Max PDE residual |u_x H_y - u_y H_x - g| over sample points, derivatives of
/// u by 5-point stencils.
pub fn pde_residual(
    u: &dyn Fn(f64, f64) -> Result<f64>,
    g: &dyn Fn(f64, f64) -> f64,
    model: ModelHamiltonian,
    lambda: f64,
    samples: &[(f64, f64)],
    step: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(x, y) in samples {
        let ux = fd_derivative(&|t| u(t, y), x, step)?;
        let uy = fd_derivative(&|t| u(x, t), y, step)?;
        let r = ux * model.h_y(x, y, lambda) - uy * model.h_x(x, y, lambda) - g(x, y);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// One-sided Taylor fits of u along the line y = y_line where it crosses the
/// separatrix level {H = h_s}; jump[k] estimates the discontinuity of the
/// k-th x-derivative there.
///
/// Both sides are fitted on mirrored node sets with one degree of headroom
/// beyond the highest requested order, so the leading even-order fit bias of
/// a genuinely smooth u cancels in the difference.
pub struct ContinuityDiagnostic {
    /// |jump of d^k u / dx^k| for k = 0..=max_order.
    pub jumps: Vec<f64>,
    /// x where the probe line crosses the separatrix level.
    pub crossing: f64,
}

pub fn separatrix_continuity(
    u: &dyn Fn(f64, f64, f64) -> Result<f64>,
    lambda: f64,
    y_line: f64,
    max_order: usize,
    delta0: f64,
) -> Result<ContinuityDiagnostic> {
    let hs = ModelHamiltonian::saddle_level(lambda);
    let offset = y_line * y_line * y_line - lambda * y_line;
    let x2 = hs - offset;
    if x2 <= 0.0 {
        return Err(Error::InvalidParameter {
            reason: format!("probe line y = {y_line} misses the separatrix level"),
        });
    }
    let x_star = x2.sqrt();
    let psi = |x: f64| -> Result<f64> { u(x, y_line, lambda) };

    let n_nodes = 8;
    let degree = max_order + 1;
    // fit in the scaled offset (x - x_star)/delta0; unscale afterwards
    let fit_side = |side: f64| -> Result<Vec<f64>> {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n_nodes {
            let hat = side * (0.2 + 0.8 * i as f64 / (n_nodes - 1) as f64);
            let mut row = Vec::with_capacity(degree + 1);
            for p in 0..=degree {
                row.push(hat.powi(p as i32));
            }
            rows.push(row);
            rhs.push(psi(x_star + hat * delta0)?);
        }
        let scaled = lstsq(&rows, &rhs)?;
        Ok(scaled
            .into_iter()
            .enumerate()
            .map(|(p, c)| c / delta0.powi(p as i32))
            .collect())
    };
    let plus = fit_side(1.0)?;
    let minus = fit_side(-1.0)?;
    let mut jumps = Vec::with_capacity(max_order + 1);
    let mut factorial = 1.0f64;
    for k in 0..=max_order {
        if k > 0 {
            factorial *= k as f64;
        }
        jumps.push(factorial * (plus[k] - minus[k]).abs());
    }
    Ok(ContinuityDiagnostic { jumps, crossing: x_star })
}
