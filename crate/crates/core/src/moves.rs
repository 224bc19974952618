//! Symplectic u-moves and the exact normal-form reductions.
//!
//! The sign convention is fixed once for the whole crate:
//! a u-move sends g to g - (u_x H_y - u_y H_x). Generator coefficients are
//! never hardcoded; every elimination derives the scale from the exact move
//! density of the generator, so reductions stay correct by construction.
//! All arithmetic here is exact rational.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::ModelHamiltonian;
use crate::series::TruncatedSeries;

/// Coefficient of a 2-form g dx^dy, with optional dlambda-part coefficients
/// A, B carried through moves unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub g: TruncatedSeries,
    pub a: Option<TruncatedSeries>,
    pub b: Option<TruncatedSeries>,
}

impl Density {
    pub fn new(g: TruncatedSeries) -> Self {
        Self { g, a: None, b: None }
    }
}

impl From<TruncatedSeries> for Density {
    fn from(g: TruncatedSeries) -> Self {
        Self::new(g)
    }
}

/// One applied move; `after.g = before.g - (u_x H_y - u_y H_x)` exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoveRecord {
    pub u: TruncatedSeries,
    pub model: String,
    pub before: Density,
    pub after: Density,
}

/// Replayable list of moves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub model: String,
    pub steps: Vec<TruncatedSeries>,
}

impl Transcript {
    /// Re-apply every step in order; the end density must be reproducible.
    pub fn replay(&self, model: ModelHamiltonian, start: &Density) -> Result<Density> {
        let mut d = start.clone();
        for u in &self.steps {
            d = apply_move(&d, u, model)?.after;
        }
        Ok(d)
    }
}

/// The move density u_x H_y - u_y H_x, exact (order lifted as needed).
pub fn move_density(u: &TruncatedSeries, model: ModelHamiltonian) -> Result<TruncatedSeries> {
    let vars: Vec<&str> = u.vars().iter().map(String::as_str).collect();
    if model.uses_lambda() && !vars.contains(&"lambda") {
        return Err(Error::UnknownVariable { var: "lambda".into() });
    }
    let order = u.degree() + 3;
    let u = u.lift_order(order.max(u.order().min(crate::series::UNBOUNDED - 4)));
    let h = model.h_series(&vars, order)?;
    let hx = h.partial("x")?.lift_order(order);
    let hy = h.partial("y")?.lift_order(order);
    let ux = u.partial("x")?.lift_order(order);
    let uy = u.partial("y")?.lift_order(order);
    ux.mul(&hy)?.sub(&uy.mul(&hx)?)
}

/// Apply the u-move to a density. The result order is raised far enough that
/// the move identity holds exactly in rational arithmetic.
pub fn apply_move(d: &Density, u: &TruncatedSeries, model: ModelHamiltonian) -> Result<MoveRecord> {
    if d.g.vars() != u.vars() {
        return Err(Error::VariableMismatch {
            left: d.g.vars().to_vec(),
            right: u.vars().to_vec(),
        });
    }
    let delta = move_density(u, model)?;
    let order = d.g.order().max(d.g.degree()).max(delta.degree());
    let g_after = d.g.lift_order(order).sub(&delta.truncate(order))?;
    let before = Density { g: d.g.clone(), a: d.a.clone(), b: d.b.clone() };
    let after = Density { g: g_after, a: d.a.clone(), b: d.b.clone() };
    Ok(MoveRecord { u: u.clone(), model: model.name().to_string(), before, after })
}

/// Remove the odd-in-x part of a density by one closed-form move.
///
/// For H = x^2 + f(y) the odd part x g1(x^2, y[, lambda]) is killed by
/// u = utilde(H, y[, lambda]) with utilde(h, y) = -(1/2) int_0^y g1(h - f(t), t) dt.
pub fn kill_odd_part(d: &Density, model: ModelHamiltonian) -> Result<(Density, TruncatedSeries)> {
    let vars: Vec<&str> = d.g.vars().iter().map(String::as_str).collect();
    if model.uses_lambda() && !vars.contains(&"lambda") {
        return Err(Error::UnknownVariable { var: "lambda".into() });
    }
    let (even, odd) = d.g.parity_split("x")?;
    if odd.is_zero() {
        let u = TruncatedSeries::zero(&vars, d.g.order());
        return Ok((Density { g: even, a: d.a.clone(), b: d.b.clone() }, u));
    }

    // g1 = odd / x
    let g1 = shift_var_down(&odd, "x")?;

    // move to variables (.., "H"), substitute x^2 -> H - f(y)
    let mut ext_vars: Vec<&str> = vars.clone();
    ext_vars.push("H");
    let work_order = 3 * (d.g.degree() + 2);
    let g1e = g1.extend_vars(&ext_vars)?.lift_order(work_order);
    let f = model.f_of_y(&ext_vars, work_order)?;
    let h_var = TruncatedSeries::var(&ext_vars, work_order, "H")?;
    let x2_repl = h_var.sub(&f)?;
    let g1_level = substitute_square(&g1e, "x", &x2_repl)?;

    // utilde = -(1/2) int dy, then h -> H(x, y[, lambda])
    let utilde = g1_level.integrate("y")?.scale(&BigRational::new(BigInt::from(-1), BigInt::from(2)));
    let h_of_xy = model.h_series(&ext_vars, utilde.order())?;
    let u_ext = utilde.substitute("H", &h_of_xy)?;
    let u = drop_var(&u_ext, "H")?;

    let rec = apply_move(d, &u, model)?;
    debug_assert!(rec.after.g.parity_split("x").unwrap().1.is_zero());
    Ok((rec.after, u))
}

/// Divide by one power of `var` (every term must contain it).
fn shift_var_down(s: &TruncatedSeries, var: &str) -> Result<TruncatedSeries> {
    let idx = s.var_index(var)?;
    let vars: Vec<&str> = s.vars().iter().map(String::as_str).collect();
    let mut terms = Vec::new();
    for (exp, c) in s.terms() {
        if exp[idx] == 0 {
            return Err(Error::InvalidParameter {
                reason: format!("term without `{var}` in odd part"),
            });
        }
        let mut e = exp.clone();
        e[idx] -= 1;
        terms.push((e, c.clone()));
    }
    Ok(TruncatedSeries::from_terms(&vars, s.order(), terms))
}

/// Substitute var^2 -> repl in a series even in `var`.
fn substitute_square(
    s: &TruncatedSeries,
    var: &str,
    repl: &TruncatedSeries,
) -> Result<TruncatedSeries> {
    let idx = s.var_index(var)?;
    let vars: Vec<&str> = s.vars().iter().map(String::as_str).collect();
    let order = s.order().max(repl.order());
    let mut acc = TruncatedSeries::zero(&vars, order);
    for (exp, c) in s.terms() {
        let k = exp[idx];
        if k % 2 != 0 {
            return Err(Error::OddPartPresent);
        }
        let mut e = exp.clone();
        e[idx] = 0;
        let mono = TruncatedSeries::from_terms(&vars, order, [(e, c.clone())]);
        acc = acc.add(&mono.mul(&repl.lift_order(order).pow(k / 2)?)?)?;
    }
    Ok(acc)
}

/// Remove a variable whose exponent is zero in every term.
fn drop_var(s: &TruncatedSeries, var: &str) -> Result<TruncatedSeries> {
    let idx = s.var_index(var)?;
    let vars: Vec<&str> = s
        .vars()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, v)| v.as_str())
        .collect();
    let mut terms = Vec::new();
    for (exp, c) in s.terms() {
        if exp[idx] != 0 {
            return Err(Error::InvalidParameter { reason: format!("residual `{var}` power") });
        }
        let e: Vec<u32> = exp
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, k)| *k)
            .collect();
        terms.push((e, c.clone()));
    }
    Ok(TruncatedSeries::from_terms(&vars, s.order(), terms))
}

/// Result of a normal-form reduction.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub density: Density,
    pub u: TruncatedSeries,
    pub transcript: Transcript,
    /// Pure-y coefficients d_i (index i = power of y) up to the requested n.
    pub d_coeffs: Vec<BigRational>,
}

/// Kill a target monomial of `g` using the generator `u_gen`; returns the
/// scaled generator and updates g. The scale is read off the generator's own
/// exact move density, so it is valid for every model and sign convention.
fn eliminate_with(
    g: &mut TruncatedSeries,
    u_gen: &TruncatedSeries,
    target: &[u32],
    model: ModelHamiltonian,
) -> Result<TruncatedSeries> {
    let delta = move_density(u_gen, model)?;
    let coeff = delta.coefficient(target);
    assert!(!coeff.is_zero(), "generator misses its target");
    let c = g.coefficient(target);
    // after = g - s*delta with s = c / coeff zeroes the target
    let s = c / coeff;
    let order = g.order().max(delta.degree());
    *g = g.lift_order(order).sub(&delta.scale(&s).truncate(order))?;
    Ok(u_gen.scale(&s))
}

/// Elliptic (and, with `Hyperbolic`, hyperbolic) normal-form reduction:
/// transforms an even density to  sum d_i y^{2i} (i <= n)  +  R(x^2, y^2) y^{2(n+1)}.
///
/// Generators x^{2j-1} y^{2i+1} move mass from x^{2j} y^{2i} to
/// x^{2j-2} y^{2i+2} at fixed total degree, so the cascade is exact and
/// terminates with j = 0 or inside the remainder.
pub fn elliptic_reduce(d: &Density, n: u32, model: ModelHamiltonian) -> Result<Reduction> {
    if !matches!(model, ModelHamiltonian::Elliptic | ModelHamiltonian::Hyperbolic) {
        return Err(Error::InvalidParameter {
            reason: format!("elliptic_reduce expects the elliptic or hyperbolic model, got {}", model.name()),
        });
    }
    let needed = 2 * (n + 1) + 2 * (n + 2);
    if d.g.order() < needed {
        return Err(Error::InsufficientOrder { order: d.g.order(), needed });
    }
    if !d.g.is_even_in("x")? || !d.g.is_even_in("y")? {
        return Err(Error::OddPartPresent);
    }
    let vars: Vec<&str> = d.g.vars().iter().map(String::as_str).collect();
    let (xi, yi) = (d.g.var_index("x")?, d.g.var_index("y")?);
    let mut g = d.g.clone();
    let mut u_total = TruncatedSeries::zero(&vars, g.order());
    let mut steps = Vec::new();

    loop {
        // offending: x^{2j} y^{2i} with j >= 1 and 2i < 2(n+1)
        let mut targets: Vec<Vec<u32>> = g
            .terms()
            .filter(|(e, _)| e[xi] >= 2 && e[yi] < 2 * (n + 1))
            .map(|(e, _)| e.clone())
            .collect();
        if targets.is_empty() {
            break;
        }
        targets.sort_by(|a, b| {
            let (da, db) = (a.iter().sum::<u32>(), b.iter().sum::<u32>());
            db.cmp(&da).then(a.cmp(b))
        });
        let t = &targets[0];
        let mut gen_exp = t.clone();
        gen_exp[xi] -= 1; // x^{2j-1}
        gen_exp[yi] += 1; // y^{2i+1}
        let u_gen = TruncatedSeries::from_terms(&vars, g.order(), [(gen_exp, BigRational::one())]);
        let step = eliminate_with(&mut g, &u_gen, t, model)?;
        u_total = u_total.lift_order(u_total.order().max(step.order())).add(&step.lift_order(u_total.order().max(step.order())))?;
        steps.push(step);
    }

    let d_coeffs = (0..=n)
        .map(|i| {
            let mut e = vec![0u32; vars.len()];
            e[yi] = 2 * i;
            g.coefficient(&e)
        })
        .collect();
    Ok(Reduction {
        density: Density { g, a: d.a.clone(), b: d.b.clone() },
        u: u_total,
        transcript: Transcript { model: model.name().to_string(), steps },
        d_coeffs,
    })
}

/// Cusp normal-form reduction: transforms an even-in-x density to
/// sum d_i y^i (i <= n) + R(x^2, y) y^{n+1}  with d_i = 0 for i = 2 + 3k.
///
/// Terms with y-power in class 2 mod 3 descend (x-degree up, y-degree down 3)
/// and die at y^2 against a pure odd-x generator; other classes ascend to
/// pure y-powers. Pure y^{2+3k} is eliminated at every represented degree.
pub fn cusp_reduce(d: &Density, n: u32) -> Result<Reduction> {
    let model = ModelHamiltonian::Cusp;
    if !d.g.is_even_in("x")? {
        return Err(Error::OddPartPresent);
    }
    let needed = (n + 1).max(d.g.degree());
    if d.g.order() < needed {
        return Err(Error::InsufficientOrder { order: d.g.order(), needed });
    }
    let vars: Vec<&str> = d.g.vars().iter().map(String::as_str).collect();
    let (xi, yi) = (d.g.var_index("x")?, d.g.var_index("y")?);
    // descent raises the x-degree; total degree never grows past 3/2 of input
    let work_order = 2 * d.g.degree().max(n + 1) + 4;
    let mut g = d.g.lift_order(work_order.max(d.g.order()));
    let mut u_total = TruncatedSeries::zero(&vars, g.order());
    let mut steps = Vec::new();

    loop {
        let offending = |e: &Vec<u32>| -> bool {
            let (jx, i) = (e[xi], e[yi]);
            if jx >= 2 && i <= n {
                return true;
            }
            jx == 0 && i % 3 == 2
        };
        let mut targets: Vec<Vec<u32>> =
            g.terms().filter(|(e, _)| offending(e)).map(|(e, _)| e.clone()).collect();
        if targets.is_empty() {
            break;
        }
        targets.sort_by(|a, b| {
            let (da, db) = (a.iter().sum::<u32>(), b.iter().sum::<u32>());
            db.cmp(&da).then(a.cmp(b))
        });
        let t = targets[0].clone();
        let mut gen_exp = t.clone();
        if t[yi] % 3 == 2 {
            // descend: u = x^{2j+1} y^{i-2}
            gen_exp[xi] += 1;
            gen_exp[yi] -= 2;
        } else {
            // ascend: u = x^{2j-1} y^{i+1}
            gen_exp[xi] -= 1;
            gen_exp[yi] += 1;
        }
        let u_gen = TruncatedSeries::from_terms(&vars, g.order(), [(gen_exp, BigRational::one())]);
        let step = eliminate_with(&mut g, &u_gen, &t, model)?;
        let ord = u_total.order().max(step.order());
        u_total = u_total.lift_order(ord).add(&step.lift_order(ord))?;
        steps.push(step);
    }

    let d_coeffs = (0..=n)
        .map(|i| {
            let mut e = vec![0u32; vars.len()];
            e[yi] = i;
            g.coefficient(&e)
        })
        .collect();
    Ok(Reduction {
        density: Density { g, a: d.a.clone(), b: d.b.clone() },
        u: u_total,
        transcript: Transcript { model: model.name().to_string(), steps },
        d_coeffs,
    })
}

/// The parabolic normal-form invariant: c(x^2, y) with the odd cofactor b.
///
/// Contract: applying the move u = -x b to g yields exactly c, i.e.
/// sign*g + (v_x H_y - v_y H_x) = c for v = x b and H the cusp family.
#[derive(Debug, Clone, Serialize)]
pub struct CInvariant {
    pub b: TruncatedSeries,
    pub c: TruncatedSeries,
    pub sign: i8,
}

/// Certificate |b_m| <= max(constant, 1) * radius^{|m|} over stored terms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthCertificate {
    pub radius: f64,
    pub constant: f64,
}

pub fn growth_certificate(b: &TruncatedSeries) -> GrowthCertificate {
    let mut radius = 1.0f64;
    let mut constant = 0.0f64;
    for (exp, c) in b.terms() {
        let deg: u32 = exp.iter().sum();
        let mag = rational_abs_f64(c);
        if deg == 0 {
            constant = mag;
        } else {
            radius = radius.max(mag.powf(1.0 / deg as f64));
        }
    }
    GrowthCertificate { radius, constant }
}

fn rational_abs_f64(c: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    c.abs().to_f64().unwrap_or(f64::INFINITY)
}

/// Solve the coefficient recursion
///   g_k - 2 d/dy b_{k-1} = (2k+1)(3y^2 - lambda) b_k + c_k(y)
/// exactly, extracting c_k by the pivot substitution lambda := 3y^2 and b_k
/// by exact division; the division remainder is asserted to vanish.
///
/// Output is sign-normalized so that c(0,0) > 0 whenever g(0,0,0) != 0.
pub fn parabolic_c_recursion(d: &Density) -> Result<CInvariant> {
    if !d.g.is_even_in("x")? {
        return Err(Error::OddPartPresent);
    }
    let mut g = d.g.clone();
    if g.var_index("lambda").is_err() {
        let mut vars: Vec<&str> = g.vars().iter().map(String::as_str).collect();
        vars.push("lambda");
        g = g.extend_vars(&vars)?;
    }
    let vars: Vec<&str> = g.vars().iter().map(String::as_str).collect();
    let xi = g.var_index("x")?;
    let work_order = 2 * g.degree() + 6;
    let g = g.lift_order(work_order.max(g.order()));

    // split into x^{2k} slices g_k(y, lambda)
    let max_k = g.terms().map(|(e, _)| e[xi] / 2).max().unwrap_or(0);
    let slice = |s: &TruncatedSeries, k: u32| -> Result<TruncatedSeries> {
        let kept: Vec<(Vec<u32>, BigRational)> = s
            .terms()
            .filter(|(e, _)| e[xi] == 2 * k)
            .map(|(e, c)| {
                let mut e = e.clone();
                e[xi] = 0;
                (e, c.clone())
            })
            .collect();
        Ok(TruncatedSeries::from_terms(&vars, s.order(), kept))
    };

    let pivot = crate::series::parse("3*y^2", &vars, work_order)?;
    let two = BigRational::from(BigInt::from(2));

    let mut b = TruncatedSeries::zero(&vars, work_order);
    let mut c = TruncatedSeries::zero(&vars, work_order);
    let mut b_prev = TruncatedSeries::zero(&vars, work_order);
    let mut k = 0u32;
    loop {
        let gk = slice(&g, k)?;
        let feed = b_prev.partial("y")?.scale(&two);
        let ord = gk.order().max(feed.order()).max(work_order);
        let rk = gk.lift_order(ord).sub(&feed.lift_order(ord))?;
        if rk.is_zero() && k > max_k {
            break;
        }
        // c_k = r_k at lambda = 3y^2
        let ck = rk.substitute("lambda", &pivot.lift_order(rk.order()))?;
        // (2k+1)(3y^2-lambda) b_k = r_k - c_k ; divide by -(lambda - 3y^2)
        let ord = rk.order().max(ck.order());
        let num = rk.lift_order(ord).sub(&ck.lift_order(ord))?;
        let q = num.divide_by_linear("lambda", &pivot.lift_order(ord))?;
        let bk = q.scale(&BigRational::new(BigInt::from(-1), BigInt::from(2 * i64::from(k) + 1)));

        let xk = TruncatedSeries::var(&vars, bk.order().max(work_order), "x")?.pow(2 * k)?;
        let ordb = b.order().max(bk.order()).max(xk.order());
        b = b.lift_order(ordb).add(&bk.lift_order(ordb).mul(&xk.lift_order(ordb))?)?;
        let ordc = c.order().max(ck.order()).max(xk.order());
        c = c.lift_order(ordc).add(&ck.lift_order(ordc).mul(&xk.lift_order(ordc))?)?;
        b_prev = bk;
        k += 1;
        if k > 4 * (max_k + 2) + g.degree() {
            break; // safety; polynomial inputs terminate well before this
        }
    }

    // c must not involve lambda; assert and project to (x, y)
    debug_assert!(c.terms().all(|(e, _)| e[c.var_index("lambda").unwrap()] == 0));

    // sign normalization: replacing x by -x flips g, b, c
    let c00 = c.coefficient(&vec![0u32; vars.len()]);
    let sign: i8 = if c00.is_negative() { -1 } else { 1 };
    if sign < 0 {
        b = b.neg();
        c = c.neg();
    }
    Ok(CInvariant { b, c, sign })
}
