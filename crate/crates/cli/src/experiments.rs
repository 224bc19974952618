//! Experiment runners: each consumes a validated config, writes deterministic
//! artifacts into the output directory, and returns a one-line summary.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use cuspidal::abel::{abel_forward, abel_invert, elliptic_normal_form_f, SampledFunction};
use cuspidal::actions::{
    action_profile, cusp_section_action, fmt_f64, ActionKind, GridPoint,
};
use cuspidal::hamiltonians::{model_period, model_return_time, GermJ, ModelHamiltonian, TAU};
use cuspidal::moser::{
    parametric_transport, pde_residual, pullback_residual, separatrix_continuity,
    singular_part_fit, transport_solve, HypothesisGate, InitialCondition,
};
use cuspidal::moves::{
    apply_move, cusp_reduce, elliptic_reduce, growth_certificate, kill_odd_part, move_density,
    parabolic_c_recursion, Density,
};
use cuspidal::pendulum::{
    affine_equivalent, critical_values, flap_geometry, BifurcationDiagram, FlapGeometry,
};
use cuspidal::quadrature::QuadConfig;
use cuspidal::series::{parse, TruncatedSeries};

use crate::config::{Config, FamilyName, ModelName, MoserMode, ProfileKind};
use crate::svg::Canvas;

const XY: [&str; 2] = ["x", "y"];
const XYL: [&str; 3] = ["x", "y", "lambda"];

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_artifact(dir, name, &text)
}

fn density_fn(series: &TruncatedSeries) -> impl Fn(f64, f64, f64) -> f64 + '_ {
    let idx: Vec<usize> = series
        .vars()
        .iter()
        .map(|v| match v.as_str() {
            "x" => 0,
            "y" => 1,
            _ => 2,
        })
        .collect();
    move |x, y, l| {
        let point: Vec<f64> = idx.iter().map(|&i| [x, y, l][i]).collect();
        series.eval_f64(&point)
    }
}

pub fn run(config: &Config, out: &Path) -> Result<String> {
    match config {
        Config::ActionProfile { kind, g, h_grid, lambda_grid, eps, order } => {
            run_action_profile(*kind, g, h_grid, lambda_grid, *eps, *order, out)
        }
        Config::MoserSolve {
            mode,
            model,
            g0,
            u0,
            g,
            n,
            gamma,
            poly_degree,
            lambda,
            samples,
            seed,
            order,
        } => match mode {
            MoserMode::Roundtrip => run_moser_roundtrip(
                model.unwrap(),
                g0.as_ref().unwrap(),
                u0.as_ref().unwrap(),
                *lambda,
                *samples,
                *seed,
                *order,
                out,
            ),
            MoserMode::Parametric => {
                run_moser_parametric(g.as_ref().unwrap(), n.unwrap_or(3), out)
            }
            MoserMode::SingularFit => run_singular_fit(
                g0.as_deref().unwrap_or("1"),
                gamma.unwrap(),
                *poly_degree,
                *order,
                out,
            ),
        },
        Config::NormalForm { family, g, n, with_f, order } => {
            run_normal_form(*family, g, *n, *with_f, *order, out)
        }
        Config::CuspInvariant { g, order } => run_cusp_invariant(g, *order, out),
        Config::AbelRoundtrip { g, iprime, h_max, grid, order } => {
            run_abel(g.as_deref(), iprime.as_deref(), *h_max, *grid, *order, out)
        }
        Config::PendulumDiagram { j_min, j_max, samples } => {
            run_pendulum_diagram(*j_min, *j_max, *samples, out)
        }
        Config::FlapAffine { resolution, samples, transform, tol } => {
            run_flap_affine(*resolution, *samples, transform.as_ref().map(|t| (t.sign, t.k, t.shift)), *tol, out)
        }
        Config::ModelPeriod { germ, order, starts, random_starts, seed } => {
            run_model_period(germ, *order, starts, *random_starts, *seed, out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_action_profile(
    kind: ProfileKind,
    g_expr: &str,
    h_grid: &[f64],
    lambda_grid: &[f64],
    eps: f64,
    order: u32,
    out: &Path,
) -> Result<String> {
    let g = parse(g_expr, &XYL, order)?;
    let gf = density_fn(&g);
    let cfg = QuadConfig::default();
    let (action_kind, grid): (ActionKind, Vec<GridPoint>) = match kind {
        ProfileKind::Elliptic => (
            ActionKind::Elliptic,
            h_grid.iter().map(|&h| GridPoint { h, lambda: None }).collect(),
        ),
        ProfileKind::HyperbolicQuadrant => (
            ActionKind::HyperbolicQuadrant { eps },
            h_grid.iter().map(|&h| GridPoint { h, lambda: None }).collect(),
        ),
        ProfileKind::CuspSection => (
            ActionKind::CuspSection { eps },
            h_grid.iter().map(|&h| GridPoint { h, lambda: None }).collect(),
        ),
        ProfileKind::VanishingCycle => {
            let hs = if h_grid.is_empty() { vec![0.0] } else { h_grid.to_vec() };
            let grid = lambda_grid
                .iter()
                .flat_map(|&l| hs.iter().map(move |&h| GridPoint { h, lambda: Some(l) }))
                .collect();
            (ActionKind::VanishingCycle, grid)
        }
        ProfileKind::SepLobe => (
            ActionKind::SepLobe,
            lambda_grid.iter().map(|&l| GridPoint { h: 0.0, lambda: Some(l) }).collect(),
        ),
    };
    // grid sweeps parallelize; output ordering stays deterministic
    let chunks: Vec<_> = grid
        .par_iter()
        .map(|pt| action_profile(action_kind, &gf, g_expr, std::slice::from_ref(pt), &cfg))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut profile = action_profile(action_kind, &gf, g_expr, &[], &cfg)?;
    for c in chunks {
        profile.grid.extend(c.grid);
        profile.values.extend(c.values);
    }
    write_artifact(out, "action_profile.csv", &profile.to_csv())?;
    Ok(format!(
        "action-profile {}: {} values -> action_profile.csv",
        profile.kind,
        profile.values.len()
    ))
}

#[derive(Serialize)]
struct RoundtripReport {
    model: String,
    g0: String,
    u0: String,
    lambda: f64,
    residuals: Vec<f64>,
    max_residual: f64,
    pullback_residual: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_moser_roundtrip(
    model: ModelName,
    g0_expr: &str,
    u0_expr: &str,
    lambda: f64,
    samples: usize,
    seed: u64,
    order: u32,
    out: &Path,
) -> Result<String> {
    let model = model.to_model();
    let g0 = parse(g0_expr, &XYL, order)?;
    let u0 = parse(u0_expr, &XYL, order)?;
    let rec = apply_move(&Density::new(g0.clone()), &u0, model)?;
    let g1 = rec.after.g.clone();
    let diff = move_density(&u0, model)?;
    let ic = match model {
        ModelHamiltonian::Elliptic => InitialCondition::AxisY,
        ModelHamiltonian::CuspFamily => InitialCondition::SectionX(0.0),
        _ => InitialCondition::SectionX(-0.8),
    };
    let sol = transport_solve(model, &diff, ic)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_region(model, lambda, &mut rng, samples);
    let gd = density_fn(&diff);
    let g0f = density_fn(&g0);
    let g1f = density_fn(&g1);

    let mut residuals = Vec::with_capacity(pts.len());
    for &(x, y) in &pts {
        let r = pde_residual(
            &|a, b| sol.eval(a, b, lambda),
            &|a, b| gd(a, b, lambda),
            model,
            lambda,
            &[(x, y)],
            1e-3,
        )?;
        residuals.push(r);
    }
    let max_residual = residuals.iter().cloned().fold(0.0f64, f64::max);
    let pull = pullback_residual(
        &|a, b| g0f(a, b, lambda),
        &|a, b| g1f(a, b, lambda),
        &|a, b| sol.eval(a, b, lambda),
        model,
        lambda,
        &pts[..pts.len().min(10)],
    )?;
    let report = RoundtripReport {
        model: model.name().to_string(),
        g0: g0_expr.to_string(),
        u0: u0_expr.to_string(),
        lambda,
        residuals,
        max_residual,
        pullback_residual: pull,
    };
    write_json(out, "moser_roundtrip.json", &report)?;
    Ok(format!(
        "moser-solve roundtrip on {}: residual {:.3e}, pull-back {:.3e} -> moser_roundtrip.json",
        model.name(),
        max_residual,
        pull
    ))
}

fn sample_region(
    model: ModelHamiltonian,
    lambda: f64,
    rng: &mut ChaCha8Rng,
    n: usize,
) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        match model {
            ModelHamiltonian::Elliptic => {
                let r: f64 = rng.gen_range(0.4..0.8);
                let th: f64 = rng.gen_range(0.3..1.2);
                pts.push((r * th.cos(), r * th.sin()));
            }
            ModelHamiltonian::Hyperbolic => {
                let h: f64 = rng.gen_range(-0.5..-0.15);
                let x: f64 = rng.gen_range(-0.5..0.5);
                pts.push((x, (x * x - h).sqrt()));
            }
            ModelHamiltonian::Cusp => {
                let h: f64 = rng.gen_range(-0.6..-0.2);
                let x: f64 = rng.gen_range(-0.5..0.5);
                pts.push((x, (x * x - h).cbrt()));
            }
            ModelHamiltonian::CuspFamily => {
                let hs = ModelHamiltonian::saddle_level(lambda);
                let h = rng.gen_range(0.2 * hs..0.8 * hs);
                let y0 = (lambda / 3.0f64).sqrt();
                let y = rng.gen_range(1.6 * y0..2.2 * y0);
                let x2 = h + y * y * y - lambda * y;
                if x2 < 0.04 {
                    continue;
                }
                pts.push((if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * x2.sqrt(), y));
            }
        }
    }
    pts
}

#[derive(Serialize)]
struct ParametricReport {
    u_polynomial: String,
    remainder_cofactor: String,
    continuity_jumps: Vec<f64>,
}

fn run_moser_parametric(g_expr: &str, n: u32, out: &Path) -> Result<String> {
    let g = parse(g_expr, &XYL, 2 * n + 10)?;
    let pt = parametric_transport(&g, n, &HypothesisGate::default())?;
    let lambda = 2.7;
    let y_line = 1.15 * (lambda / 3.0f64).sqrt();
    let diag = separatrix_continuity(&|x, y, l| pt.eval(x, y, l), lambda, y_line, 4, 0.025)?;
    let report = ParametricReport {
        u_polynomial: pt.polynomial_part().to_string(),
        remainder_cofactor: pt.remainder_cofactor().to_string(),
        continuity_jumps: diag.jumps.clone(),
    };
    write_json(out, "moser_parametric.json", &report)?;
    Ok(format!(
        "moser-solve parametric: accepted, max continuity jump {:.3e} -> moser_parametric.json",
        diag.jumps.iter().cloned().fold(0.0f64, f64::max)
    ))
}

#[derive(Serialize)]
struct SingularFitReport {
    gamma: f64,
    poly_degree: usize,
    samples: Vec<(f64, f64)>,
    coefficient: f64,
    residual_rms: f64,
}

fn run_singular_fit(
    g_expr: &str,
    gamma: f64,
    poly_degree: usize,
    order: u32,
    out: &Path,
) -> Result<String> {
    let g = parse(g_expr, &XY, order)?;
    let gf = move |x: f64, y: f64| g.eval_f64(&[x, y]);
    let cfg = QuadConfig::with_tol(1e-12);
    // dI/dh of the section action on a dyadic grid approaching 0^-
    let samples: Vec<(f64, f64)> = (0..10)
        .map(|k| {
            let h = -0.1 / (2.0f64).powi(k);
            let d = 1e-4 * h.abs();
            let hi = cusp_section_action(&gf, h + d, 1.0, &cfg)?;
            let lo = cusp_section_action(&gf, h - d, 1.0, &cfg)?;
            Ok((h, (hi - lo) / (2.0 * d)))
        })
        .collect::<cuspidal::Result<_>>()?;
    let (c, rms) = singular_part_fit(&samples, gamma, poly_degree)?;
    let report = SingularFitReport { gamma, poly_degree, samples, coefficient: c, residual_rms: rms };
    write_json(out, "singular_fit.json", &report)?;
    Ok(format!(
        "moser-solve singular-fit: c = {c:.6e} at gamma = {gamma} -> singular_fit.json"
    ))
}

#[derive(Serialize)]
struct NormalFormReport {
    family: String,
    d_coefficients: Vec<String>,
    normal_form: String,
    kill_odd_u: String,
    reduction_u: String,
    transcript_steps: usize,
}

fn run_normal_form(
    family: FamilyName,
    g_expr: &str,
    n: u32,
    with_f: bool,
    order: u32,
    out: &Path,
) -> Result<String> {
    let g = parse(g_expr, &XY, order)?;
    let (model, name) = match family {
        FamilyName::Elliptic => (ModelHamiltonian::Elliptic, "elliptic"),
        FamilyName::Hyperbolic => (ModelHamiltonian::Hyperbolic, "hyperbolic"),
        FamilyName::Cusp => (ModelHamiltonian::Cusp, "cusp"),
    };
    let (even, u_kill) = kill_odd_part(&Density::new(g.clone()), model)?;
    let reduction = match family {
        FamilyName::Cusp => cusp_reduce(&even, n)?,
        _ => elliptic_reduce(&even, n, model)?,
    };
    let report = NormalFormReport {
        family: name.to_string(),
        d_coefficients: reduction.d_coeffs.iter().map(|d| d.to_string()).collect(),
        normal_form: reduction.density.g.to_string(),
        kill_odd_u: u_kill.to_string(),
        reduction_u: reduction.u.to_string(),
        transcript_steps: reduction.transcript.steps.len(),
    };
    write_json(out, "normal_form.json", &report)?;
    let mut transcript = serde_json::to_string_pretty(&reduction.transcript)?;
    transcript.push('\n');
    write_artifact(out, "transcript.json", &transcript)?;
    if with_f {
        let gf = move |x: f64, y: f64| g.eval_f64(&[x, y]);
        let f = elliptic_normal_form_f(&gf, 0.25, 257, &QuadConfig::default())?;
        write_artifact(out, "f_invariant.csv", &f.to_csv())?;
    }
    Ok(format!(
        "normal-form {}: {} reduction steps -> normal_form.json",
        name, report.transcript_steps
    ))
}

#[derive(Serialize)]
struct CuspInvariantReport {
    b: String,
    c: String,
    sign: i8,
    growth_radius: f64,
    growth_constant: f64,
    /// c is computed for the preliminary coordinates in which g is given;
    /// its dependence on that choice is outside this computation.
    coordinate_convention: String,
}

fn run_cusp_invariant(g_expr: &str, order: u32, out: &Path) -> Result<String> {
    let g = parse(g_expr, &XYL, order)?;
    let inv = parabolic_c_recursion(&Density::new(g))?;
    let cert = growth_certificate(&inv.b);
    let report = CuspInvariantReport {
        b: inv.b.to_string(),
        c: inv.c.to_string(),
        sign: inv.sign,
        growth_radius: cert.radius,
        growth_constant: cert.constant,
        coordinate_convention: "fixed preliminary coordinates (x, y, lambda) as given".to_string(),
    };
    write_json(out, "cusp_invariant.json", &report)?;
    Ok(format!("cusp-invariant: c = {} -> cusp_invariant.json", report.c))
}

#[derive(Serialize)]
struct AbelReport {
    source: String,
    sup_roundtrip_error: f64,
}

fn run_abel(
    g_expr: Option<&str>,
    iprime_expr: Option<&str>,
    h_max: f64,
    grid: usize,
    order: u32,
    out: &Path,
) -> Result<String> {
    let cfg = QuadConfig::with_tol(1e-12);
    let (f, iprime, source): (SampledFunction, SampledFunction, String) = if let Some(expr) = g_expr
    {
        let g = parse(expr, &XY, order)?;
        let gf = move |x: f64, y: f64| g.eval_f64(&[x, y]);
        let f = elliptic_normal_form_f(&gf, h_max, grid, &cfg)?;
        // independent forward check needs I'(h); rebuild it from the action
        let mut action = Vec::with_capacity(grid);
        for i in 0..grid {
            let h = h_max * i as f64 / (grid - 1) as f64;
            let v = if h == 0.0 {
                0.0
            } else {
                cuspidal::actions::elliptic_action(&gf, h, &cfg)?
            };
            action.push(v);
        }
        let ip = differentiate_uniform(&action, h_max / (grid - 1) as f64);
        let ipf = SampledFunction { grid: f.grid.clone(), values: ip };
        (f, ipf, format!("density {expr}"))
    } else {
        let expr = iprime_expr.unwrap();
        let ip_series = parse(expr, &["h"], order)?;
        let ipf = SampledFunction::uniform(0.0, h_max, grid, &|h| ip_series.eval_f64(&[h]));
        let f = abel_invert(&ipf)?;
        (f, ipf, format!("iprime {expr}"))
    };
    let mut worst: f64 = 0.0;
    for (idx, &h) in iprime.grid.iter().enumerate().skip(8).step_by(16) {
        let fwd = abel_forward(&|t| f.eval(t), h, &cfg)?;
        worst = worst.max((fwd - iprime.values[idx]).abs());
    }
    write_artifact(out, "f_invariant.csv", &f.to_csv())?;
    write_json(out, "abel_report.json", &AbelReport { source, sup_roundtrip_error: worst })?;
    Ok(format!("abel-roundtrip: sup error {worst:.3e} -> f_invariant.csv, abel_report.json"))
}

fn differentiate_uniform(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i < 2 {
                (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3]
                    - 3.0 * v[i + 4])
                    / (12.0 * h)
            } else if i >= n - 2 {
                (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3]
                    + 3.0 * v[i - 4])
                    / (12.0 * h)
            } else {
                (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h)
            }
        })
        .collect()
}

fn run_pendulum_diagram(j_min: f64, j_max: f64, samples: usize, out: &Path) -> Result<String> {
    let grid: Vec<f64> = (0..samples)
        .map(|i| j_min + (j_max - j_min) * i as f64 / (samples - 1) as f64)
        .collect();
    let diagram = critical_values(&grid)?;
    write_artifact(out, "branches.csv", &branches_csv(&diagram))?;
    write_json(out, "diagram.json", &diagram)?;
    write_artifact(out, "diagram.svg", &diagram_svg(&diagram))?;
    Ok(format!(
        "pendulum-diagram: {} cusps, {} branches -> branches.csv, diagram.json, diagram.svg",
        diagram.cusps.len(),
        diagram.branches.len()
    ))
}

fn branches_csv(diagram: &BifurcationDiagram) -> String {
    let mut out = String::from("branch,j,h,z\n");
    for curve in &diagram.branches {
        let name = format!("{:?}", curve.kind);
        for p in &curve.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                name,
                fmt_f64(p.j),
                fmt_f64(p.h),
                fmt_f64(p.z)
            ));
        }
    }
    for c in &diagram.cusps {
        out.push_str(&format!("Cusp,{},{},{}\n", fmt_f64(c.lambda), fmt_f64(c.h), fmt_f64(c.z)));
    }
    for e in &diagram.ee_points {
        out.push_str(&format!(
            "EllipticElliptic,{},{},{}\n",
            fmt_f64(e.j),
            fmt_f64(e.h),
            fmt_f64(e.z)
        ));
    }
    out
}

fn diagram_svg(diagram: &BifurcationDiagram) -> String {
    let mut xs = vec![0.0f64];
    let mut ys = vec![0.0f64];
    for c in &diagram.branches {
        for p in &c.points {
            xs.push(p.j);
            ys.push(p.h);
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let mut canvas = Canvas::new((x0, x1), (y0, y1));

    // flap shading: region between the flap elliptic edge and the hyperbolic edge
    if diagram.cusps.len() == 2 {
        let mut poly: Vec<(f64, f64)> = Vec::new();
        if let Some(ell) = diagram.branches.iter().find(|b| matches!(b.kind, cuspidal::pendulum::BranchKind::EllipticFlap)) {
            poly.extend(ell.points.iter().map(|p| (p.j, p.h)));
        }
        if let Some(hy) = diagram.branches.iter().find(|b| matches!(b.kind, cuspidal::pendulum::BranchKind::Hyperbolic)) {
            poly.extend(hy.points.iter().rev().map(|p| (p.j, p.h)));
        }
        canvas.polygon(&poly, "gray", 0.35);
    }
    for curve in &diagram.branches {
        let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.j, p.h)).collect();
        let color = match curve.kind {
            cuspidal::pendulum::BranchKind::EllipticOuter => "#1f77b4",
            cuspidal::pendulum::BranchKind::EllipticFlap => "#2ca02c",
            cuspidal::pendulum::BranchKind::Hyperbolic => "#d62728",
        };
        canvas.polyline(&pts, color, 1.5);
    }
    for c in &diagram.cusps {
        canvas.point(c.lambda, c.h, 4.0, "black");
    }
    for e in &diagram.ee_points {
        canvas.point(e.j, e.h, 3.0, "#9467bd");
    }
    canvas.label(x0, y1, "critical values (j, h)");
    canvas.finish("bifurcation diagram")
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let pad = 0.05 * (hi - lo).max(1e-9);
    (lo - pad, hi + pad)
}

#[derive(Serialize)]
struct AffineReport {
    self_check: cuspidal::pendulum::AffineDecision,
    planted: Option<PlantedReport>,
}

#[derive(Serialize)]
struct PlantedReport {
    applied: (i8, i32, f64),
    decision: cuspidal::pendulum::AffineDecision,
}

fn run_flap_affine(
    resolution: usize,
    samples: usize,
    transform: Option<(i8, i32, f64)>,
    tol: f64,
    out: &Path,
) -> Result<String> {
    let grid: Vec<f64> = (0..samples)
        .map(|i| -0.6 + 1.2 * i as f64 / (samples - 1) as f64)
        .collect();
    let diagram = critical_values(&grid)?;
    let flap = flap_geometry(&diagram, resolution)?;
    write_json(out, "flap.json", &flap)?;
    write_artifact(out, "flap.svg", &flap_svg(&flap))?;

    let self_check = affine_equivalent(&flap, &flap, tol)?;
    let planted = match transform {
        Some((sign, k, shift)) => {
            let moved = flap.transformed(sign, k, shift);
            let decision = affine_equivalent(&flap, &moved, tol)?;
            Some(PlantedReport { applied: (sign, k, shift), decision })
        }
        None => None,
    };
    let summary = format!(
        "flap-affine: self {} , planted witness {} -> flap.json, affine.json, flap.svg",
        if self_check.equivalent { "equivalent" } else { "separated" },
        planted
            .as_ref()
            .and_then(|p| p.decision.witness.as_ref())
            .map(|w| format!("({}, {}, {:.6})", w.sign, w.k, w.shift))
            .unwrap_or_else(|| "n/a".to_string()),
    );
    write_json(out, "affine.json", &AffineReport { self_check, planted })?;
    Ok(summary)
}

fn flap_svg(flap: &FlapGeometry) -> String {
    // two stacked panels: the flap image and the cut base image
    let l0 = flap.lambda1;
    let l1 = flap.lambda2;
    let max_i = flap
        .s2
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(flap.grid.iter().map(|l| l.max(0.0)).fold(0.0, f64::max));
    let mut canvas = Canvas::new((l0, l1), (-0.4 * max_i, 2.2 * max_i));

    // top panel: flap image between max(0, lambda) and S2 - S1, shifted up
    let shift = 1.2 * max_i;
    let mut upper: Vec<(f64, f64)> = Vec::new();
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for (i, &l) in flap.grid.iter().enumerate() {
        lower.push((l, l.max(0.0) + shift));
        upper.push((l, flap.flap_upper(i) + shift));
    }
    let mut region = lower.clone();
    region.extend(upper.iter().rev());
    canvas.polygon(&region, "gray", 0.35);
    canvas.polyline(&lower, "#1f77b4", 1.2);
    canvas.polyline(&upper, "#2ca02c", 1.2);
    canvas.label(l0, 2.1 * max_i, "flap image (Iring, lambda)");

    // bottom panel: base hole between max(0,lambda)+S1 and S2
    let mut hole_lo: Vec<(f64, f64)> = Vec::new();
    let mut hole_hi: Vec<(f64, f64)> = Vec::new();
    for (i, &l) in flap.grid.iter().enumerate() {
        hole_lo.push((l, flap.hole_lower(i) - shift));
        hole_hi.push((l, flap.hole_upper(i) - shift));
    }
    let mut hole = hole_lo.clone();
    hole.extend(hole_hi.iter().rev());
    canvas.polygon(&hole, "#d62728", 0.25);
    canvas.polyline(&hole_lo, "#d62728", 1.2);
    canvas.polyline(&hole_hi, "#d62728", 1.2);
    canvas.label(l0, -0.35 * max_i, "cut base image: plane minus hole");
    canvas.finish("flap affine images")
}

#[derive(Serialize)]
struct PeriodSample {
    start: [f64; 3],
    period: f64,
    return_time: f64,
    deviation_from_2pi: f64,
}

#[derive(Serialize)]
struct PeriodReport {
    germ: String,
    samples: Vec<PeriodSample>,
    worst_deviation: f64,
}

fn run_model_period(
    germ_expr: &str,
    order: u32,
    starts: &[[f64; 3]],
    random_starts: usize,
    seed: u64,
    out: &Path,
) -> Result<String> {
    let germ = GermJ::parse(germ_expr, order)?;
    let mut all = starts.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_starts {
        all.push([
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.1..0.1),
            rng.gen_range(-0.08..0.08),
        ]);
    }
    let mut samples = Vec::with_capacity(all.len());
    let mut worst: f64 = 0.0;
    for s in all {
        let period = model_period(&germ, (s[0], s[1], s[2]));
        let rt = model_return_time(&germ, (s[0], s[1], s[2]), 2.0)?;
        let dev = (rt - TAU).abs();
        worst = worst.max(dev);
        samples.push(PeriodSample { start: s, period, return_time: rt, deviation_from_2pi: dev });
    }
    let report = PeriodReport { germ: germ_expr.to_string(), samples, worst_deviation: worst };
    write_json(out, "model_period.json", &report)?;
    Ok(format!(
        "model-period: worst |return - 2pi| = {worst:.3e} -> model_period.json"
    ))
}
