//! Sturm sequences for certified real-root counting of rational polynomials.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

/// Dense polynomial, index = degree.
pub type Poly = Vec<BigRational>;

pub fn eval(p: &[BigRational], x: &BigRational) -> BigRational {
    let mut acc = BigRational::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub fn derivative(p: &[BigRational]) -> Poly {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c * BigRational::from(BigInt::from(k)))
        .collect()
}

fn trim(mut p: Poly) -> Poly {
    while p.last().map(|c| c.is_zero()).unwrap_or(false) {
        p.pop();
    }
    p
}

/// Remainder of a by b (b nonzero).
fn rem(a: &[BigRational], b: &[BigRational]) -> Poly {
    let mut r: Poly = a.to_vec();
    let db = b.len() - 1;
    let lead = &b[db];
    while r.len() > db && r.len() >= 1 {
        let dr = r.len() - 1;
        if dr < db {
            break;
        }
        let f = &r[dr] / lead;
        for k in 0..=db {
            let idx = dr - db + k;
            let delta = &f * &b[k];
            r[idx] -= delta;
        }
        r = trim(r);
        if r.is_empty() {
            break;
        }
    }
    r
}

/// Sturm chain of p.
pub fn chain(p: &[BigRational]) -> Vec<Poly> {
    let mut out = vec![trim(p.to_vec())];
    let d = derivative(p);
    if trim(d.clone()).is_empty() {
        return out;
    }
    out.push(trim(d));
    loop {
        let n = out.len();
        let r = rem(&out[n - 2], &out[n - 1]);
        if r.is_empty() {
            break;
        }
        out.push(r.iter().map(|c| -c).collect());
    }
    out
}

fn variations(chain: &[Poly], x: &BigRational) -> usize {
    let mut count = 0;
    let mut last: Option<bool> = None;
    for p in chain {
        let v = eval(p, x);
        if v.is_zero() {
            continue;
        }
        let s = v.is_positive();
        if let Some(prev) = last {
            if prev != s {
                count += 1;
            }
        }
        last = Some(s);
    }
    count
}

/// Number of distinct real roots of p in the half-open interval (a, b].
pub fn count_roots(chain: &[Poly], a: &BigRational, b: &BigRational) -> usize {
    variations(chain, a).saturating_sub(variations(chain, b))
}
