//! Adaptive Runge-Kutta integration with event location.
//!
//! Dormand-Prince 5(4) with step control on the embedded error estimate;
//! section crossings are located by bisection on the step, re-integrating the
//! shortened substep each time.

use crate::error::{Error, Result};

/// Right-hand side: writes dy/dt into `out`.
pub type Rhs<'a> = &'a dyn Fn(&[f64], &mut [f64]);

#[derive(Debug, Clone, Copy)]
pub struct Rk45 {
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Rk45 {
    fn default() -> Self {
        Self { tol: 1e-10, h_init: 1e-3, h_min: 1e-12, h_max: 0.25 }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Rk45 {
    /// One attempted step of size h; returns (y_new, error_norm).
    fn step(&self, rhs: Rhs<'_>, y: &[f64], h: f64) -> (Vec<f64>, f64) {
        let n = y.len();
        let mut k = vec![vec![0.0; n]; 7];
        rhs(y, &mut k[0]);
        let mut tmp = vec![0.0; n];
        for (i, row) in A.iter().enumerate() {
            for (j, t) in tmp.iter_mut().enumerate() {
                let mut acc = y[j];
                for (l, kl) in k.iter().enumerate().take(i + 1) {
                    acc += h * row[l] * kl[j];
                }
                *t = acc;
            }
            let (head, tail) = k.split_at_mut(i + 1);
            let _ = head;
            rhs(&tmp, &mut tail[0]);
        }
        let mut y5 = vec![0.0; n];
        let mut err = 0.0f64;
        for j in 0..n {
            let mut v5 = y[j];
            let mut v4 = y[j];
            for (l, kl) in k.iter().enumerate() {
                v5 += h * B5[l] * kl[j];
                v4 += h * B4[l] * kl[j];
            }
            y5[j] = v5;
            let scale = 1.0 + y[j].abs().max(v5.abs());
            err = err.max(((v5 - v4) / scale).abs());
        }
        (y5, err)
    }

    /// Integrate from `y0` for exactly `t_total` (sign allowed to be negative).
    pub fn integrate(&self, rhs: Rhs<'_>, y0: &[f64], t_total: f64) -> Result<Vec<f64>> {
        let dir = if t_total < 0.0 { -1.0 } else { 1.0 };
        let rhs_dir = |y: &[f64], out: &mut [f64]| {
            rhs(y, out);
            for v in out.iter_mut() {
                *v *= dir;
            }
        };
        let mut remaining = t_total.abs();
        let mut y = y0.to_vec();
        let mut h = self.h_init.min(remaining.max(self.h_min));
        while remaining > 0.0 {
            h = h.min(remaining).min(self.h_max);
            let (y_new, err) = self.step(&rhs_dir, &y, h);
            if err <= self.tol || h <= self.h_min {
                remaining -= h;
                y = y_new;
            }
            let factor = if err > 0.0 { 0.9 * (self.tol / err).powf(0.2) } else { 2.0 };
            h = (h * factor.clamp(0.2, 2.5)).max(self.h_min);
        }
        Ok(y)
    }

    /// Integrate forward until `event` changes sign from its initial value.
    /// Returns the crossing time and state. Fails after `t_max`.
    pub fn integrate_to_event(
        &self,
        rhs: Rhs<'_>,
        y0: &[f64],
        event: &dyn Fn(&[f64]) -> f64,
        t_max: f64,
    ) -> Result<(f64, Vec<f64>)> {
        let mut t = 0.0;
        let mut y = y0.to_vec();
        let mut h = self.h_init;
        let s0 = event(&y).signum();
        while t < t_max {
            h = h.min(self.h_max).min(t_max - t);
            let (y_new, err) = self.step(rhs, &y, h);
            if err <= self.tol || h <= self.h_min {
                if event(&y_new).signum() != s0 {
                    // bisect on the substep, re-integrating from (t, y)
                    let mut lo = 0.0;
                    let mut hi = h;
                    let mut y_hi = y_new.clone();
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let y_mid = self.integrate(rhs, &y, mid)?;
                        if event(&y_mid).signum() != s0 {
                            hi = mid;
                            y_hi = y_mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo < 1e-15 * (1.0 + t) {
                            break;
                        }
                    }
                    return Ok((t + hi, y_hi));
                }
                t += h;
                y = y_new;
            }
            let factor = if err > 0.0 { 0.9 * (self.tol / err).powf(0.2) } else { 2.0 };
            h = (h * factor.clamp(0.2, 2.5)).max(self.h_min);
        }
        Err(Error::NoSectionCrossing { t_max })
    }
}
