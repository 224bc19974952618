//! The quadratic spherical pendulum: symplectic reduction, bifurcation
//! diagram, flap geometry, and integer affine structure comparison.
//!
//! Phase space is T*S^2 with H = |p|^2/2 + V(z), V = z - z^2, and the angular
//! momentum J = x p_y - y p_x. Reduction at J = j leaves the one degree of
//! freedom system H_red = (1 - z^2) p_z^2 / 2 + W_j(z) with
//! W_j = j^2 / (2(1 - z^2)) + V(z).

use num_rational::BigRational;
use num_traits::FromPrimitive;
use serde::Serialize;

use crate::actions::log_richardson;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_singular, QuadConfig, SingularIntegrand};
use crate::sturm;

/// Below this |j|, the well minima sit within floating-point distance of the
/// poles and the reduced data is evaluated in its j = 0 (pole-ended) form;
/// the neglected action correction is O(j^2 log j).
pub const J_POLE_EPS: f64 = 1e-6;

pub fn potential(z: f64) -> f64 {
    z - z * z
}

/// Reduced one degree of freedom system at momentum j.
#[derive(Debug, Clone, Copy)]
pub struct ReducedSystem {
    pub j: f64,
}

impl ReducedSystem {
    pub fn new(j: f64) -> Self {
        Self { j }
    }

    pub fn w(&self, z: f64) -> f64 {
        self.j * self.j / (2.0 * (1.0 - z * z)) + potential(z)
    }

    pub fn w_prime(&self, z: f64) -> f64 {
        let s = 1.0 - z * z;
        self.j * self.j * z / (s * s) + 1.0 - 2.0 * z
    }

    pub fn w_second(&self, z: f64) -> f64 {
        let s = 1.0 - z * z;
        self.j * self.j * (1.0 + 3.0 * z * z) / (s * s * s) - 2.0
    }

    pub fn h_red(&self, z: f64, pz: f64) -> f64 {
        0.5 * (1.0 - z * z) * pz * pz + self.w(z)
    }
}

/// Embed a reduced point into T*S^2: position on the sphere at longitude phi,
/// momentum p = p_z grad(z) + j grad(phi).
pub fn embed_point(z: f64, phi: f64, pz: f64, j: f64) -> ([f64; 3], [f64; 3]) {
    let rho = (1.0 - z * z).sqrt();
    let r = [rho * phi.cos(), rho * phi.sin(), z];
    // grad z = e_z - z r, grad phi = (-sin, cos, 0)/rho
    let gz = [-z * r[0], -z * r[1], 1.0 - z * z];
    let gphi = [-phi.sin() / rho, phi.cos() / rho, 0.0];
    let p = [
        pz * gz[0] + j * gphi[0],
        pz * gz[1] + j * gphi[1],
        pz * gz[2] + j * gphi[2],
    ];
    (r, p)
}

pub fn full_energy(r: &[f64; 3], p: &[f64; 3]) -> f64 {
    0.5 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) + potential(r[2])
}

pub fn full_momentum(r: &[f64; 3], p: &[f64; 3]) -> f64 {
    r[0] * p[1] - r[1] * p[0]
}

// --- certified critical points ------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CritKind {
    Min,
    Max,
}

/// Numerator of W_j'(z): P(z) = j^2 z + (1 - 2z)(1 - z^2)^2, exact in j^2.
fn w_prime_numerator(j2: &BigRational) -> Vec<BigRational> {
    use crate::series::rational;
    // (1-2z)(1-z^2)^2 = 1 - 2z - 2z^2 + 4z^3 + z^4 - 2z^5
    vec![
        rational(1, 1),
        rational(-2, 1) + j2,
        rational(-2, 1),
        rational(4, 1),
        rational(1, 1),
        rational(-2, 1),
    ]
}

/// All critical points of W_j on (-1, 1) with certified count (Sturm) and
/// f64 Newton polish. Results are memoized per j.
pub fn certified_critical_points(j: f64) -> Result<Vec<(f64, CritKind)>> {
    use std::collections::HashMap;
    use std::sync::Mutex;
    static CACHE: Mutex<Option<HashMap<u64, Vec<(f64, CritKind)>>>> = Mutex::new(None);
    if let Some(hit) = CACHE
        .lock()
        .unwrap()
        .get_or_insert_with(HashMap::new)
        .get(&j.to_bits())
    {
        return Ok(hit.clone());
    }
    let out = certified_critical_points_uncached(j)?;
    CACHE
        .lock()
        .unwrap()
        .get_or_insert_with(HashMap::new)
        .insert(j.to_bits(), out.clone());
    Ok(out)
}

fn certified_critical_points_uncached(j: f64) -> Result<Vec<(f64, CritKind)>> {
    let sys = ReducedSystem::new(j);
    if j.abs() < J_POLE_EPS {
        // W_0' = 1 - 2z
        return Ok(vec![(0.5, CritKind::Max)]);
    }
    let j_exact = BigRational::from_f64(j)
        .ok_or(Error::RootIsolation { j, reason: "non-finite j".into() })?;
    let j2 = &j_exact * &j_exact;
    let poly = w_prime_numerator(&j2);
    let ch = sturm::chain(&poly);
    let one = BigRational::from_f64(1.0).unwrap();
    let mut intervals = vec![(-one.clone(), one.clone())];
    let mut roots = Vec::new();
    while let Some((a, b)) = intervals.pop() {
        let n = sturm::count_roots(&ch, &a, &b);
        if n == 0 {
            continue;
        }
        let width = &b - &a;
        if n == 1 && width < BigRational::from_f64(1e-4).unwrap() {
            let mut z = (rational_to_f64(&a) + rational_to_f64(&b)) / 2.0;
            for _ in 0..60 {
                let d = sys.w_second(z);
                if d.abs() < 1e-300 {
                    break;
                }
                let step = sys.w_prime(z) / d;
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            roots.push(z);
            continue;
        }
        let mid = (&a + &b) / BigRational::from_f64(2.0).unwrap();
        intervals.push((a, mid.clone()));
        intervals.push((mid, b));
    }
    roots.sort_by(|p, q| p.partial_cmp(q).unwrap());
    Ok(roots
        .into_iter()
        .map(|z| {
            let kind = if sys.w_second(z) > 0.0 { CritKind::Min } else { CritKind::Max };
            (z, kind)
        })
        .collect())
}

fn rational_to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

// --- bifurcation diagram -------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchPoint {
    pub j: f64,
    pub h: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchKind {
    EllipticOuter,
    EllipticFlap,
    Hyperbolic,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchCurve {
    pub kind: BranchKind,
    pub points: Vec<BranchPoint>,
}

/// Parabolic orbit: a double critical point of W_j.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CuspPoint {
    pub lambda: f64,
    pub h: f64,
    pub z: f64,
}

/// Elliptic-elliptic equilibrium (a pole of the sphere at j = 0).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EePoint {
    pub j: f64,
    pub h: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcationDiagram {
    pub branches: Vec<BranchCurve>,
    pub cusps: Vec<CuspPoint>,
    pub ee_points: Vec<EePoint>,
    /// The elliptic-elliptic vertex joining the two flap elliptic families.
    pub flap_vertex: Option<EePoint>,
}

/// Critical-value branches over the momentum grid, with cusps located by
/// certified count bisection plus a 2-D Newton polish on (W', W'') = 0.
pub fn critical_values(j_grid: &[f64]) -> Result<BifurcationDiagram> {
    let mut outer = Vec::new();
    let mut flap = Vec::new();
    let mut hyper = Vec::new();
    let mut counts: Vec<(f64, usize)> = Vec::new();

    let mut grid = j_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for &j in &grid {
        let sys = ReducedSystem::new(j);
        let crit = certified_critical_points(j)?;
        counts.push((j, crit.len()));
        if j.abs() < J_POLE_EPS {
            hyper.push(BranchPoint { j, h: 0.25, z: 0.5 });
            outer.push(BranchPoint { j, h: potential(-1.0), z: -1.0 });
            continue;
        }
        match crit.len() {
            1 => {
                let (z, kind) = crit[0];
                if kind != CritKind::Min {
                    return Err(Error::RootIsolation {
                        j,
                        reason: "single critical point is not a minimum".into(),
                    });
                }
                outer.push(BranchPoint { j, h: sys.w(z), z });
            }
            3 => {
                let kinds: Vec<CritKind> = crit.iter().map(|c| c.1).collect();
                if kinds != [CritKind::Min, CritKind::Max, CritKind::Min] {
                    return Err(Error::RootIsolation {
                        j,
                        reason: format!("unexpected critical pattern {kinds:?}"),
                    });
                }
                outer.push(BranchPoint { j, h: sys.w(crit[0].0), z: crit[0].0 });
                hyper.push(BranchPoint { j, h: sys.w(crit[1].0), z: crit[1].0 });
                flap.push(BranchPoint { j, h: sys.w(crit[2].0), z: crit[2].0 });
            }
            n => {
                return Err(Error::RootIsolation { j, reason: format!("{n} critical points") });
            }
        }
    }

    // cusps: transitions of the certified count along the grid
    let mut cusps = Vec::new();
    for w in counts.windows(2) {
        let ((ja, na), (jb, nb)) = (w[0], w[1]);
        let (na, nb) = (na.max(1), nb.max(1));
        // treat j = 0 as carrying the 3-point structure (poles supply the minima)
        let na = if ja.abs() < J_POLE_EPS { 3 } else { na };
        let nb = if jb.abs() < J_POLE_EPS { 3 } else { nb };
        if na != nb {
            cusps.push(locate_cusp(ja, jb)?);
        }
    }
    cusps.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());

    let ee_points = vec![
        EePoint { j: 0.0, h: potential(-1.0), z: -1.0 },
        EePoint { j: 0.0, h: potential(1.0), z: 1.0 },
    ];
    let flap_vertex = if cusps.len() == 2 {
        Some(EePoint { j: 0.0, h: potential(1.0), z: 1.0 })
    } else {
        None
    };

    Ok(BifurcationDiagram {
        branches: vec![
            BranchCurve { kind: BranchKind::EllipticOuter, points: outer },
            BranchCurve { kind: BranchKind::Hyperbolic, points: hyper },
            BranchCurve { kind: BranchKind::EllipticFlap, points: flap },
        ],
        cusps,
        ee_points,
        flap_vertex,
    })
}

/// Bisect on j between different certified counts, then polish the double
/// root of W' with Newton on (W', W'').
fn locate_cusp(mut ja: f64, mut jb: f64) -> Result<CuspPoint> {
    let count_of = |j: f64| -> Result<usize> { Ok(certified_critical_points(j)?.len()) };
    let na = count_of(ja)?;
    for _ in 0..60 {
        let mid = 0.5 * (ja + jb);
        if mid == ja || mid == jb {
            break;
        }
        if count_of(mid)? == na {
            ja = mid;
        } else {
            jb = mid;
        }
    }
    // starting z: midpoint of the merging pair on the 3-count side
    let three_side = if count_of(ja)? == 3 { ja } else { jb };
    let crit = certified_critical_points(three_side)?;
    let mut z = if crit.len() == 3 {
        0.5 * (crit[1].0 + crit[2].0)
    } else {
        crit[0].0
    };
    let mut j = 0.5 * (ja + jb);
    for _ in 0..80 {
        let sys = ReducedSystem::new(j);
        let s = 1.0 - z * z;
        let f1 = sys.w_prime(z);
        let f2 = sys.w_second(z);
        // Jacobian of (W', W'') in (z, j)
        let a11 = f2 + 2.0; // d W'/dz = W'' ... keep exact: W'' itself
        let _ = a11;
        let dw1_dz = sys.w_second(z);
        let dw1_dj = 2.0 * j * z / (s * s);
        let dw2_dz = 12.0 * j * j * z * (1.0 + z * z) / (s * s * s * s);
        let dw2_dj = 2.0 * j * (1.0 + 3.0 * z * z) / (s * s * s);
        let det = dw1_dz * dw2_dj - dw1_dj * dw2_dz;
        if det.abs() < 1e-300 {
            break;
        }
        let dz = (f1 * dw2_dj - f2 * dw1_dj) / det;
        let dj = (dw1_dz * f2 - dw2_dz * f1) / det;
        z -= dz;
        j -= dj;
        if dz.abs() + dj.abs() < 1e-15 {
            break;
        }
    }
    let sys = ReducedSystem::new(j);
    Ok(CuspPoint { lambda: j, h: sys.w(z), z })
}

// --- reduced actions ------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cycle {
    Outer,
    FlapUpper,
    FlapLower,
}

impl std::fmt::Display for Cycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Cycle::Outer => "outer",
            Cycle::FlapUpper => "flap-upper",
            Cycle::FlapLower => "flap-lower",
        };
        write!(f, "{s}")
    }
}

/// R(z) = (h - W_j(z)) (1 - z^2) written as the quartic
/// -z^4 + z^3 + (1-h) z^2 - z + (h - j^2/2).
fn quartic_r(j: f64, h: f64, z: f64) -> f64 {
    (h - z + z * z) * (1.0 - z * z) - 0.5 * j * j
}

fn quartic_r_prime(h: f64, z: f64) -> f64 {
    (2.0 * z - 1.0) * (1.0 - z * z) - 2.0 * z * (h - z + z * z)
}

fn bisect_turning(j: f64, h: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut flo = quartic_r(j, h, lo);
    if flo == 0.0 {
        return Ok(lo);
    }
    let fhi = quartic_r(j, h, hi);
    if flo.signum() == fhi.signum() {
        return Err(Error::InvalidParameter {
            reason: format!("no turning point bracket in [{lo}, {hi}] (j={j}, h={h})"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = quartic_r(j, h, mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..6 {
        let d = quartic_r_prime(h, z);
        if d.abs() < 1e-300 {
            break;
        }
        let step = quartic_r(j, h, z) / d;
        z -= step;
        if !(lo - 1e-12..=hi + 1e-12).contains(&z) {
            z = 0.5 * (lo + hi);
            break;
        }
        if step.abs() < 1e-17 {
            break;
        }
    }
    Ok(z)
}

/// One well piece: integrate sqrt(2 R)/(1-z^2) between two simple roots of R,
/// with the pole-ended exponents switching to -1/2.
fn well_integral(
    j: f64,
    h: f64,
    z_a: f64,
    z_b: f64,
    pole_left: bool,
    pole_right: bool,
    split_at: Option<f64>,
    cfg: &QuadConfig,
) -> Result<f64> {
    // deflate R = (z - z_a)(z_b - z) Q, Q = z^2 + b z + c from matching
    // the z^3 and z^2 coefficients
    let s = z_a + z_b;
    let p = z_a * z_b;
    let b = s - 1.0;
    let c = s * (s - 1.0) - p - 1.0 + h;
    let q = move |t: f64| (t * t + b * t + c).max(0.0);
    debug_assert!(
        {
            let probe = 0.5 * (z_a + z_b);
            let r_direct = quartic_r(j, h, probe);
            let r_defl = (probe - z_a) * (z_b - probe) * (probe * probe + b * probe + c);
            (r_direct - r_defl).abs() <= 1e-8 * (1.0 + r_direct.abs())
        },
        "deflation mismatch"
    );

    let alpha = if pole_left { -0.5 } else { 0.5 };
    let beta = if pole_right { -0.5 } else { 0.5 };
    let core = move |t: f64| {
        let mut v = (2.0 * q(t)).sqrt();
        if !pole_left {
            // weight supplies (t - z_a)^{1/2}; denominator keeps 1/(1+t)
            v /= 1.0 + t;
        }
        if !pole_right {
            v /= 1.0 - t;
        }
        v
    };

    let mut total = 0.0;
    match split_at {
        Some(zm) if zm > z_a && zm < z_b => {
            // the far-endpoint weight moves into the core on each piece
            let left = |t: f64| core(t) * (z_b - t).max(0.0).powf(beta);
            let right = |t: f64| core(t) * (t - z_a).max(0.0).powf(alpha);
            total += integrate_singular(
                &SingularIntegrand { core: &left, alpha, beta: 0.0, a: z_a, b: zm },
                cfg,
            )?;
            total += integrate_singular(
                &SingularIntegrand { core: &right, alpha: 0.0, beta, a: zm, b: z_b },
                cfg,
            )?;
        }
        _ => {
            total += integrate_singular(
                &SingularIntegrand { core: &core, alpha, beta, a: z_a, b: z_b },
                cfg,
            )?;
        }
    }
    Ok(total)
}

/// Mineur-Arnold action of the selected cycle:
/// (1/pi) int sqrt(2 (h - W_j)/(1 - z^2)) dz between turning points.
pub fn reduced_action(j: f64, h: f64, cycle: Cycle) -> Result<f64> {
    let cfg = QuadConfig { tol: 1e-12, max_levels: 14 };
    let sys = ReducedSystem::new(j);
    let crit = certified_critical_points(j)?;
    let absent = || Error::CycleAbsent { cycle: cycle.to_string(), h, j };

    // pole-ended wells occur near j = 0 where R(+-1) = -j^2/2 vanishes
    let at_pole = j.abs() < J_POLE_EPS;

    let (z_a, z_b, pole_l, pole_r, split) = match (cycle, crit.len(), at_pole) {
        (Cycle::Outer, 1, false) => {
            let z1 = crit[0].0;
            if h <= sys.w(z1) {
                return Err(absent());
            }
            (bisect_turning(j, h, -1.0, z1)?, bisect_turning(j, h, z1, 1.0)?, false, false, None)
        }
        (Cycle::Outer, 3, false) => {
            let (z1, z2, z3) = (crit[0].0, crit[1].0, crit[2].0);
            if h <= sys.w(z2) {
                return Err(absent());
            }
            (
                bisect_turning(j, h, -1.0, z1)?,
                bisect_turning(j, h, z3, 1.0)?,
                false,
                false,
                Some(z2),
            )
        }
        (Cycle::FlapLower, 3, false) => {
            let (z1, z2) = (crit[0].0, crit[1].0);
            if h <= sys.w(z1) || h >= sys.w(z2) {
                return Err(absent());
            }
            (bisect_turning(j, h, -1.0, z1)?, bisect_turning(j, h, z1, z2)?, false, false, None)
        }
        (Cycle::FlapUpper, 3, false) => {
            let (z2, z3) = (crit[1].0, crit[2].0);
            if h <= sys.w(z3) || h >= sys.w(z2) {
                return Err(absent());
            }
            (bisect_turning(j, h, z2, z3)?, bisect_turning(j, h, z3, 1.0)?, false, false, None)
        }
        // j = 0: the single interior critical point is the maximum at 1/2;
        // wells end at the poles
        (Cycle::FlapLower, 1, true) => {
            let z2 = crit[0].0;
            if h >= sys.w(z2) || h <= potential(-1.0) {
                return Err(absent());
            }
            (-1.0, bisect_turning(j, h, -1.0 + 1e-9, z2)?, true, false, None)
        }
        (Cycle::FlapUpper, 1, true) => {
            let z2 = crit[0].0;
            if h >= sys.w(z2) || h <= potential(1.0) {
                return Err(absent());
            }
            (bisect_turning(j, h, z2, 1.0 - 1e-9)?, 1.0, false, true, None)
        }
        (Cycle::Outer, 1, true) => {
            let z2 = crit[0].0;
            if h <= sys.w(z2) {
                return Err(absent());
            }
            (-1.0, 1.0, true, true, Some(z2))
        }
        _ => return Err(absent()),
    };
    let v = well_integral(j, h, z_a, z_b, pole_l, pole_r, split, &cfg)?;
    Ok(v / std::f64::consts::PI)
}

/// Separatrix-lobe action: the h -> h_hyp limit of a flap sub-cycle action,
/// extrapolated on a halving gap sequence.
pub fn lobe_action(j: f64, cycle: Cycle) -> Result<f64> {
    let crit = certified_critical_points(j)?;
    let sys = ReducedSystem::new(j);
    let (h_top, h_bottom) = match (crit.len(), j.abs() < J_POLE_EPS) {
        (3, false) => {
            let top = sys.w(crit[1].0);
            let bottom = match cycle {
                Cycle::FlapLower => sys.w(crit[0].0),
                Cycle::FlapUpper => sys.w(crit[2].0),
                Cycle::Outer => return Err(Error::InvalidParameter {
                    reason: "lobe_action needs a flap sub-cycle".into(),
                }),
            };
            (top, bottom)
        }
        (1, true) => {
            let top = sys.w(crit[0].0);
            let bottom = match cycle {
                Cycle::FlapLower => potential(-1.0),
                Cycle::FlapUpper => potential(1.0),
                Cycle::Outer => return Err(Error::InvalidParameter {
                    reason: "lobe_action needs a flap sub-cycle".into(),
                }),
            };
            (top, bottom)
        }
        _ => return Err(Error::CycleAbsent { cycle: cycle.to_string(), h: f64::NAN, j }),
    };
    let depth = h_top - h_bottom;
    let d0 = 1e-4 * depth;
    let mut nodes = Vec::new();
    for k in 0..3 {
        let d = d0 / (2.0f64).powi(k);
        nodes.push((d, reduced_action(j, h_top - d, cycle)?));
    }
    log_richardson(&nodes).ok_or(Error::RankDeficient { pivot: 0.0 })
}

// --- flap geometry ---------------------------------------------------------------

/// Flap edge data and the affine images of the two base strata.
///
/// S1 = (deep lobe) - max(0, lambda), S2 = (deep lobe) + (shallow lobe); the
/// flap image is {max(0,lambda) <= I <= S2 - S1} and the cut base image is the
/// plane minus {max(0,lambda) + S1 <= I <= S2}.
#[derive(Debug, Clone, Serialize)]
pub struct FlapGeometry {
    pub lambda1: f64,
    pub lambda2: f64,
    /// (j, h) of the elliptic-elliptic vertex.
    pub ee: (f64, f64),
    pub grid: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub h_hyp: Vec<f64>,
    /// Dyadic second differences of S1 approaching lambda1 and of S2
    /// approaching lambda2 (coarse to fine).
    pub second_diff_s1_at_l1: Vec<f64>,
    pub second_diff_s2_at_l2: Vec<f64>,
}

impl FlapGeometry {
    /// Lower edge of the cut-base hole at grid index i.
    pub fn hole_lower(&self, i: usize) -> f64 {
        self.grid[i].max(0.0) + self.s1[i]
    }

    /// Upper edge of the hole.
    pub fn hole_upper(&self, i: usize) -> f64 {
        self.s2[i]
    }

    /// Upper boundary of the flap image (lower boundary is max(0, lambda)).
    pub fn flap_upper(&self, i: usize) -> f64 {
        self.s2[i] - self.s1[i]
    }

    /// Image of this geometry under I -> sign*I + k*J + shift.
    pub fn transformed(&self, sign: i8, k: i32, shift: f64) -> FlapGeometry {
        let mut out = self.clone();
        for (i, &l) in self.grid.iter().enumerate() {
            let lo = self.hole_lower(i);
            let hi = self.hole_upper(i);
            let (nlo, nhi) = if sign >= 0 {
                (lo + k as f64 * l + shift, hi + k as f64 * l + shift)
            } else {
                (-hi + k as f64 * l + shift, -lo + k as f64 * l + shift)
            };
            out.s1[i] = nlo - l.max(0.0);
            out.s2[i] = nhi;
        }
        out
    }
}

/// Sample the flap edges over [lambda1, lambda2] with dyadic tails at the
/// cusps, and run the endpoint curvature diagnostic.
pub fn flap_geometry(diagram: &BifurcationDiagram, resolution: usize) -> Result<FlapGeometry> {
    if diagram.cusps.len() != 2 || diagram.flap_vertex.is_none() {
        return Err(Error::NoFlap);
    }
    let l1 = diagram.cusps[0].lambda;
    let l2 = diagram.cusps[1].lambda;
    let span = l2 - l1;
    let margin = 1e-3 * span;

    let mut grid: Vec<f64> = (0..resolution)
        .map(|i| l1 + margin + (span - 2.0 * margin) * i as f64 / (resolution - 1) as f64)
        .collect();
    // dyadic tails reach ~1e-5 of each cusp so the lobe merge is visible
    for k in 0..=13 {
        let d = span / 8.0 * (2.0f64).powi(-k);
        grid.push(l1 + d);
        grid.push(l2 - d);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * span);

    let mut s1 = Vec::with_capacity(grid.len());
    let mut s2 = Vec::with_capacity(grid.len());
    let mut h_hyp = Vec::with_capacity(grid.len());
    for &l in &grid {
        let (a, b, h) = flap_edges(l)?;
        s1.push(a);
        s2.push(b);
        h_hyp.push(h);
    }

    // endpoint curvature: dyadic second differences, coarse to fine
    let base = span / 8.0;
    let mut d2_s1 = Vec::new();
    let mut d2_s2 = Vec::new();
    for k in 0..6 {
        let s = base * (2.0f64).powi(-k);
        let v = |l: f64| -> Result<f64> { Ok(flap_edges(l)?.0) };
        let w = |l: f64| -> Result<f64> { Ok(flap_edges(l)?.1) };
        d2_s1.push((v(l1 + s)? - 2.0 * v(l1 + 2.0 * s)? + v(l1 + 3.0 * s)?) / (s * s));
        d2_s2.push((w(l2 - s)? - 2.0 * w(l2 - 2.0 * s)? + w(l2 - 3.0 * s)?) / (s * s));
    }

    let ee = diagram.flap_vertex.as_ref().map(|p| (p.j, p.h)).unwrap();
    Ok(FlapGeometry {
        lambda1: l1,
        lambda2: l2,
        ee,
        grid,
        s1,
        s2,
        h_hyp,
        second_diff_s1_at_l1: d2_s1,
        second_diff_s2_at_l2: d2_s2,
    })
}

/// (S1, S2, h_hyp) at one lambda.
fn flap_edges(lambda: f64) -> Result<(f64, f64, f64)> {
    let crit = certified_critical_points(lambda)?;
    let sys = ReducedSystem::new(lambda);
    let h = match (crit.len(), lambda.abs() < J_POLE_EPS) {
        (3, false) => sys.w(crit[1].0),
        (1, true) => sys.w(crit[0].0),
        _ => return Err(Error::NoFlap),
    };
    let deep = lobe_action(lambda, Cycle::FlapLower)?;
    let shallow = lobe_action(lambda, Cycle::FlapUpper)?;
    Ok((deep - lambda.max(0.0), deep + shallow, h))
}

// --- affine comparison -------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AffineWitness {
    pub sign: i8,
    pub k: i32,
    pub shift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AffineDecision {
    pub equivalent: bool,
    pub witness: Option<AffineWitness>,
    pub max_deviation: f64,
    pub separating: Option<String>,
}

const K_BOUND: i32 = 8;

/// Decide whether two flap geometries match under I -> +-I + kJ + shift
/// (J is pinned by 2pi-periodicity, so lambda ranges must agree).
pub fn affine_equivalent(a: &FlapGeometry, b: &FlapGeometry, tol: f64) -> Result<AffineDecision> {
    let scale = (a.lambda2 - a.lambda1).abs().max(1e-12);
    if (a.lambda1 - b.lambda1).abs() > tol.max(1e-9) * scale.max(1.0)
        || (a.lambda2 - b.lambda2).abs() > tol.max(1e-9) * scale.max(1.0)
    {
        return Err(Error::IncomparableRanges {
            a0: a.lambda1,
            a1: a.lambda2,
            b0: b.lambda1,
            b1: b.lambda2,
        });
    }
    // compare on a's interior grid, away from the pinched cusps
    let interior: Vec<usize> = (0..a.grid.len())
        .filter(|&i| {
            let l = a.grid[i];
            l > a.lambda1 + 0.05 * scale && l < a.lambda2 - 0.05 * scale
        })
        .collect();
    let b_lower = |l: f64| interp(&b.grid, &b.s1, l) + l.max(0.0);
    let b_upper = |l: f64| interp(&b.grid, &b.s2, l);

    let mut best: Option<(AffineWitness, f64)> = None;
    for sign in [1i8, -1] {
        for k in -K_BOUND..=K_BOUND {
            // estimate the shift from the mean offset of the lower boundary
            let mut offset = 0.0;
            for &i in &interior {
                let l = a.grid[i];
                let src = if sign > 0 { a.hole_lower(i) } else { -a.hole_upper(i) };
                offset += b_lower(l) - (src + k as f64 * l);
            }
            let shift = offset / interior.len() as f64;
            let mut dev: f64 = 0.0;
            for &i in &interior {
                let l = a.grid[i];
                let (lo, hi) = if sign > 0 {
                    (a.hole_lower(i), a.hole_upper(i))
                } else {
                    (-a.hole_upper(i), -a.hole_lower(i))
                };
                dev = dev.max((lo + k as f64 * l + shift - b_lower(l)).abs());
                dev = dev.max((hi + k as f64 * l + shift - b_upper(l)).abs());
            }
            if best.as_ref().map(|(_, d)| dev < *d).unwrap_or(true) {
                best = Some((AffineWitness { sign, k, shift }, dev));
            }
        }
    }
    let (witness, max_deviation) = best.unwrap();
    if max_deviation <= tol {
        Ok(AffineDecision {
            equivalent: true,
            witness: Some(witness),
            max_deviation,
            separating: None,
        })
    } else {
        // the edge-height profile S2 - S1 - max(0,lambda) is transform-invariant
        let mut profile_gap: f64 = 0.0;
        for &i in &interior {
            let l = a.grid[i];
            let ha = a.hole_upper(i) - a.hole_lower(i);
            let hb = b_upper(l) - b_lower(l);
            profile_gap = profile_gap.max((ha - hb).abs());
        }
        Ok(AffineDecision {
            equivalent: false,
            witness: None,
            max_deviation,
            separating: Some(format!(
                "edge-height profile S2-S1 deviates by {profile_gap:.3e} (transform-invariant)"
            )),
        })
    }
}

fn interp(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[n - 1] {
        return values[n - 1];
    }
    let mut i = grid.partition_point(|&g| g < x);
    i = i.clamp(1, n - 1);
    let t = (x - grid[i - 1]) / (grid[i] - grid[i - 1]);
    values[i - 1] * (1.0 - t) + values[i] * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::TAU;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reduction_monte_carlo() {
        // points assembled on {H = h, J = j} land on {H_red = h}: the full
        // 3-D energy evaluates to the reduced one, and constraints hold.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..500 {
            let j: f64 = rng.gen_range(-0.8..0.8);
            let z: f64 = rng.gen_range(-0.95..0.95);
            let pz: f64 = rng.gen_range(-2.0..2.0);
            let phi: f64 = rng.gen_range(0.0..TAU);
            let sys = ReducedSystem::new(j);
            let h = sys.h_red(z, pz);
            let (r, p) = embed_point(z, phi, pz, j);
            assert!((r[0] * r[0] + r[1] * r[1] + r[2] * r[2] - 1.0).abs() < 1e-12);
            assert!((r[0] * p[0] + r[1] * p[1] + r[2] * p[2]).abs() < 1e-12);
            assert!((full_momentum(&r, &p) - j).abs() < 1e-12);
            assert!((full_energy(&r, &p) - h).abs() < 1e-9, "reduction mismatch");
        }
    }

    #[test]
    fn critical_points_j_zero_and_large() {
        // j = 0: max of V at z = 1/2, value 1/4; poles carry 0 and -2
        let crit = certified_critical_points(0.0).unwrap();
        assert_eq!(crit.len(), 1);
        assert!((crit[0].0 - 0.5).abs() < 1e-14);
        assert_eq!(crit[0].1, CritKind::Max);
        assert!((ReducedSystem::new(0.0).w(0.5) - 0.25).abs() < 1e-14);
        assert_eq!(potential(1.0), 0.0);
        assert_eq!(potential(-1.0), -2.0);

        // large j: single branch, W convex
        let crit = certified_critical_points(2.0).unwrap();
        assert_eq!(crit.len(), 1);
        assert_eq!(crit[0].1, CritKind::Min);
    }

    #[test]
    fn diagram_has_two_cusps_and_vertex() {
        let grid: Vec<f64> = (0..=60).map(|i| -0.6 + 0.02 * i as f64).collect();
        let d = critical_values(&grid).unwrap();
        assert_eq!(d.cusps.len(), 2, "{:?}", d.cusps);
        assert!(d.flap_vertex.is_some());
        let l2 = d.cusps[1].lambda;
        assert!((d.cusps[0].lambda + l2).abs() < 1e-10, "symmetric cusps");
        // cusp satisfies W' = W'' = 0
        let sys = ReducedSystem::new(l2);
        assert!(sys.w_prime(d.cusps[1].z).abs() < 1e-9);
        assert!(sys.w_second(d.cusps[1].z).abs() < 1e-9);
    }

    #[test]
    fn action_collapses_at_well_bottom() {
        let j = 0.2;
        let crit = certified_critical_points(j).unwrap();
        let sys = ReducedSystem::new(j);
        let h0 = sys.w(crit[0].0);
        let a = reduced_action(j, h0 + 1e-6, Cycle::FlapLower)
            .or_else(|_| reduced_action(j, h0 + 1e-6, Cycle::Outer))
            .unwrap();
        assert!(a > 0.0 && a < 1e-3, "{a}");
    }

    #[test]
    fn action_monotone_in_h() {
        for (j, cycle) in [(0.2, Cycle::FlapLower), (0.2, Cycle::FlapUpper), (0.5, Cycle::Outer)] {
            let crit = certified_critical_points(j).unwrap();
            let sys = ReducedSystem::new(j);
            let (lo, hi) = match cycle {
                Cycle::FlapLower => (sys.w(crit[0].0), sys.w(crit[1].0)),
                Cycle::FlapUpper => (sys.w(crit[2].0), sys.w(crit[1].0)),
                Cycle::Outer => {
                    let base = if crit.len() == 3 { sys.w(crit[1].0) } else { sys.w(crit[0].0) };
                    (base, base + 0.8)
                }
            };
            let dh = 1e-5 * (hi - lo);
            for f in [0.3, 0.6, 0.9] {
                let h = lo + f * (hi - lo);
                let a = reduced_action(j, h - dh, cycle).unwrap();
                let b = reduced_action(j, h + dh, cycle).unwrap();
                assert!(b > a, "({j}, {h}, {cycle})");
            }
        }
    }

    #[test]
    fn action_additivity_at_figure_eight() {
        let j = 0.25;
        let crit = certified_critical_points(j).unwrap();
        let hs = ReducedSystem::new(j).w(crit[1].0);
        let delta = 1e-9;
        let outer = reduced_action(j, hs + delta, Cycle::Outer).unwrap();
        let lower = reduced_action(j, hs - delta, Cycle::FlapLower).unwrap();
        let upper = reduced_action(j, hs - delta, Cycle::FlapUpper).unwrap();
        assert!(
            (outer - lower - upper).abs() < 1e-7,
            "additivity: {outer} vs {} + {}",
            lower,
            upper
        );
    }

    #[test]
    fn cycle_absent_errors() {
        assert!(matches!(
            reduced_action(0.2, -5.0, Cycle::FlapLower),
            Err(Error::CycleAbsent { .. })
        ));
    }

    #[test]
    fn j_zero_wells_work() {
        // deep well at j = 0 is pole-ended; action still finite and monotone
        let a = reduced_action(0.0, 0.0, Cycle::FlapLower).unwrap();
        let b = reduced_action(0.0, 0.1, Cycle::FlapLower).unwrap();
        assert!(a > 0.0 && b > a, "{a} {b}");
        let u = reduced_action(0.0, 0.1, Cycle::FlapUpper).unwrap();
        assert!(u > 0.0 && u < a);
    }

    fn demo_diagram() -> BifurcationDiagram {
        let grid: Vec<f64> = (0..=48).map(|i| -0.6 + 0.025 * i as f64).collect();
        critical_values(&grid).unwrap()
    }

    fn demo_flap() -> &'static FlapGeometry {
        use std::sync::OnceLock;
        static FLAP: OnceLock<FlapGeometry> = OnceLock::new();
        FLAP.get_or_init(|| flap_geometry(&demo_diagram(), 17).unwrap())
    }

    #[test]
    fn flap_geometry_invariants() {
        let flap = demo_flap();
        // lobes merge at the left cusp: S1(l1) = S2(l1)
        let near_l1 = 0usize;
        assert!(
            (flap.s1[near_l1] - flap.s2[near_l1]).abs() < 1e-6,
            "{} vs {}",
            flap.s1[near_l1],
            flap.s2[near_l1]
        );
        // strictly inside: max(0,l) + S1 < S2
        for (i, &l) in flap.grid.iter().enumerate() {
            if l > flap.lambda1 + 0.05 && l < flap.lambda2 - 0.05 {
                assert!(l.max(0.0) + flap.s1[i] < flap.s2[i], "slice {i}");
            }
        }
        // second differences positive and growing at both cusps
        for w in flap.second_diff_s1_at_l1.windows(2) {
            assert!(w[1] > w[0] && w[1] > 0.0, "{:?}", flap.second_diff_s1_at_l1);
        }
        for w in flap.second_diff_s2_at_l2.windows(2) {
            assert!(w[1] > w[0] && w[1] > 0.0, "{:?}", flap.second_diff_s2_at_l2);
        }
    }

    #[test]
    fn flap_image_matches_action_scan() {
        // the lambda-slice of the flap image: shallow-well actions range over
        // (0, S2 - S1 - max(0,lambda)]
        let flap = demo_flap();
        let idx = flap.grid.len() / 2;
        let l = flap.grid[idx];
        let height = flap.flap_upper(idx) - l.max(0.0);
        let crit = certified_critical_points(l).unwrap();
        let sys = ReducedSystem::new(l);
        let (h_lo, h_hi) = if l.abs() < J_POLE_EPS {
            (potential(1.0), sys.w(crit[0].0))
        } else {
            (sys.w(crit[2].0), sys.w(crit[1].0))
        };
        let mut max_seen: f64 = 0.0;
        for f in [0.2, 0.5, 0.8, 0.999] {
            let h = h_lo + f * (h_hi - h_lo);
            max_seen = max_seen.max(reduced_action(l, h, Cycle::FlapUpper).unwrap());
        }
        assert!(max_seen <= height + 1e-6);
        assert!(max_seen > 0.9 * height, "{max_seen} vs {height}");
    }

    #[test]
    fn affine_self_and_planted() {
        let flap = demo_flap();
        let dec = affine_equivalent(flap, flap, 1e-9).unwrap();
        assert!(dec.equivalent);
        let w = dec.witness.unwrap();
        assert_eq!((w.sign, w.k), (1, 0));
        assert!(w.shift.abs() < 1e-10);

        let planted = flap.transformed(1, 2, 5.0);
        let dec = affine_equivalent(flap, &planted, 1e-9).unwrap();
        assert!(dec.equivalent);
        let w = dec.witness.unwrap();
        assert_eq!((w.sign, w.k), (1, 2));
        assert!((w.shift - 5.0).abs() < 1e-9, "{}", w.shift);

        let mirrored = flap.transformed(-1, -1, 0.25);
        let dec = affine_equivalent(flap, &mirrored, 1e-9).unwrap();
        assert!(dec.equivalent);
        let w = dec.witness.unwrap();
        assert_eq!((w.sign, w.k), (-1, -1));
        assert!((w.shift - 0.25).abs() < 1e-9);
    }

    #[test]
    fn affine_detects_mismatch() {
        let flap = demo_flap();
        let mut scaled = flap.clone();
        for v in scaled.s2.iter_mut() {
            *v *= 1.3; // breaks the S2 - S1 profile
        }
        let dec = affine_equivalent(flap, &scaled, 1e-6).unwrap();
        assert!(!dec.equivalent);
        assert!(dec.separating.is_some());
    }
}
