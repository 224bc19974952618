//! Abel-type transforms linking elliptic action data to the normal-form
//! density f.
//!
//! Forward: I'(h) = (1/2pi) int_0^h f(t) t^{-1/2} (h-t)^{-1/2} dt.
//! Inverse: the classical differentiated half-integral, computed in the
//! substituted form Psi(t) = int_0^1 I'(t(1-w^2)) dw, f = 2 Psi + 4 t Psi',
//! which removes every square-root factor from the numerics.

use crate::error::{Error, Result};
use crate::hamiltonians::TAU;
use crate::quadrature::{
    gauss_legendre, integrate_region, integrate_singular, QuadConfig, Region, SingularIntegrand,
};

/// Function sampled on a uniform grid, cubic interpolation between nodes.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn uniform(a: f64, b: f64, n: usize, f: &dyn Fn(f64) -> f64) -> Self {
        let grid: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect();
        let values = grid.iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn step(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    /// Cubic (4-point Lagrange) interpolation; extrapolates at the ends.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.grid.len();
        let h = self.step();
        let pos = (t - self.grid[0]) / h;
        let i = (pos.floor() as isize).clamp(1, n as isize - 3) as usize;
        let base = i - 1;
        let mut acc = 0.0;
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (t - self.grid[base + b]) / (self.grid[base + a] - self.grid[base + b]);
                }
            }
            acc += l * self.values[base + a];
        }
        acc
    }

    /// Two-column CSV (t, f), 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f\n");
        for (t, v) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{t:.16e},{v:.16e}\n"));
        }
        out
    }

    pub fn sup_distance(&self, other: &SampledFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// I'(h) = (1/2pi) int_0^h f(t) / (sqrt t sqrt(h-t)) dt.
pub fn abel_forward(f: &dyn Fn(f64) -> f64, h: f64, cfg: &QuadConfig) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::InvalidParameter { reason: format!("abel_forward needs h > 0, got {h}") });
    }
    let v = integrate_singular(
        &SingularIntegrand { core: f, alpha: -0.5, beta: -0.5, a: 0.0, b: h },
        cfg,
    )?;
    Ok(v / TAU)
}

/// Unique continuous solution f of abel_forward(f) = I', from samples of I'.
///
/// Differentiation of the half-integral transform is the ill-conditioned
/// step; it is performed by fixed 5-point stencils on the uniform grid, with
/// a noise check comparing against the 3-point estimate.
pub fn abel_invert(iprime: &SampledFunction) -> Result<SampledFunction> {
    let n = iprime.grid.len();
    if n < 9 {
        return Err(Error::InvalidParameter { reason: "need at least 9 samples".into() });
    }
    // Psi(t) = int_0^1 I'(t (1 - w^2)) dw
    let psi_of = |t: f64| gauss_legendre(&|w| iprime.eval(t * (1.0 - w * w)), 0.0, 1.0);
    let psi: Vec<f64> = iprime.grid.iter().map(|&t| psi_of(t)).collect();
    let h = iprime.step();

    let d5 = stencil_derivatives(&psi, h);
    let d3 = three_point_derivatives(&psi, h);
    let scale = psi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let condition = d5
        .iter()
        .zip(&d3)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / (scale / h);
    if condition > 0.05 {
        return Err(Error::NoisyInput { condition });
    }

    let values: Vec<f64> = iprime
        .grid
        .iter()
        .zip(psi.iter().zip(&d5))
        .map(|(&t, (p, dp))| 2.0 * p + 4.0 * t * dp)
        .collect();
    Ok(SampledFunction { grid: iprime.grid.clone(), values })
}

/// 5-point stencils on a uniform grid; one-sided at the boundaries.
fn stencil_derivatives(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = if i < 2 {
            (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3] - 3.0 * v[i + 4])
                / (12.0 * h)
        } else if i >= n - 2 {
            (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3] + 3.0 * v[i - 4])
                / (12.0 * h)
        } else {
            (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * h)
        };
    }
    out
}

fn three_point_derivatives(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = if i == 0 {
            (v[1] - v[0]) / h
        } else if i == n - 1 {
            (v[n - 1] - v[n - 2]) / h
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * h)
        };
    }
    out
}

/// Default discretization of the invariant pipeline.
pub const DEFAULT_H_MAX: f64 = 0.25;
pub const DEFAULT_GRID: usize = 257;

/// Recover the elliptic normal-form density f from a density g:
/// sample I(h), differentiate by 5-point stencils, Abel-invert.
pub fn elliptic_normal_form_f(
    g: &dyn Fn(f64, f64) -> f64,
    h_max: f64,
    n: usize,
    cfg: &QuadConfig,
) -> Result<SampledFunction> {
    let grid: Vec<f64> = (0..n).map(|i| h_max * i as f64 / (n - 1) as f64).collect();
    let mut action = Vec::with_capacity(n);
    for &h in &grid {
        let v = if h == 0.0 {
            0.0
        } else {
            integrate_region(g, Region::EllipticDisk { h }, cfg)?.value / TAU
        };
        action.push(v);
    }
    let h = h_max / (n - 1) as f64;
    let iprime = SampledFunction { grid, values: stencil_derivatives(&action, h) };
    abel_invert(&iprime)
}
