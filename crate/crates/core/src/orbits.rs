//! Periodic orbits of prescribed period and lattice type, found by damped
//! Newton multistart on `F^k(z) − z − m` and classified by their multipliers.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};
use crate::map::LiftedMap;
use crate::torus::{reduce, torus_distance, LatticeVector, LiftPoint, TorusPoint};

/// Roots closer than this on the torus are the same point.
pub const DEDUP_RADIUS: f64 = 1e-7;
/// Half-width of the marginal band around |trace| = 2.
pub const TRACE_BAND: f64 = 1e-8;
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitClass {
    Hyperbolic,
    Elliptic,
    ParabolicMarginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multipliers {
    /// Real pair, the one of larger modulus first.
    Real([f64; 2]),
    /// `re ± i·im` with `im > 0`.
    Complex { re: f64, im: f64 },
}

impl Multipliers {
    pub fn product(&self) -> f64 {
        match *self {
            Multipliers::Real([a, b]) => a * b,
            Multipliers::Complex { re, im } => re * re + im * im,
        }
    }
}

/// Unit eigenvectors of a hyperbolic orbit, each with its first nonzero
/// component positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenframe {
    pub unstable: [f64; 2],
    pub stable: [f64; 2],
}

impl Eigenframe {
    pub fn unstable(&self) -> LiftPoint {
        LiftPoint::new(self.unstable[0], self.unstable[1])
    }

    pub fn stable(&self) -> LiftPoint {
        LiftPoint::new(self.stable[0], self.stable[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub base: TorusPoint,
    pub period: u32,
    #[serde(rename = "type")]
    pub lattice_type: LatticeVector,
    /// Orbit points in dynamical order starting from `base`.
    pub points: Vec<TorusPoint>,
    pub residual: f64,
    pub trace: f64,
    pub multipliers: Multipliers,
    pub eigenframe: Option<Eigenframe>,
    pub class: OrbitClass,
}

impl PeriodicOrbit {
    pub fn is_hyperbolic(&self) -> bool {
        self.class == OrbitClass::Hyperbolic
    }

    /// The expanding multiplier of a hyperbolic orbit.
    pub fn unstable_multiplier(&self) -> Option<f64> {
        match (self.class, self.multipliers) {
            (OrbitClass::Hyperbolic, Multipliers::Real([a, _])) => Some(a),
            _ => None,
        }
    }
}

/// Product of the Jacobians along `k` steps from `z`, and the endpoint.
pub fn orbit_jacobian(f: &LiftedMap, z: &LiftPoint, k: u32) -> Result<(LiftPoint, Matrix2<f64>)> {
    let mut p = *z;
    let mut j = Matrix2::identity();
    for _ in 0..k {
        let (q, d) = f.evaluate_with_jacobian(&p)?;
        j = d * j;
        p = q;
    }
    Ok((p, j))
}

fn orient(v: LiftPoint) -> [f64; 2] {
    let v = v.normalize();
    let flip = if v.x != 0.0 { v.x < 0.0 } else { v.y < 0.0 };
    if flip {
        [-v.x, -v.y]
    } else {
        [v.x, v.y]
    }
}

fn eigenvector(a: &Matrix2<f64>, lambda: f64) -> LiftPoint {
    // rows of A − λI are both orthogonal to the eigenvector; use the longer one
    let r1 = LiftPoint::new(a[(0, 0)] - lambda, a[(0, 1)]);
    let r2 = LiftPoint::new(a[(1, 0)], a[(1, 1)] - lambda);
    let r = if r1.norm() >= r2.norm() { r1 } else { r2 };
    if r.norm() == 0.0 {
        return LiftPoint::new(1.0, 0.0);
    }
    LiftPoint::new(-r.y, r.x)
}

/// Multipliers, class and eigenframe of a 2×2 monodromy matrix.
pub fn classify_matrix(a: &Matrix2<f64>) -> (f64, Multipliers, Option<Eigenframe>, OrbitClass) {
    let tr = a.trace();
    let det = a.determinant();
    let disc = tr * tr - 4.0 * det;
    if tr.abs() > 2.0 + TRACE_BAND && disc > 0.0 {
        // stable quadratic roots: the large one directly, the small one via the product
        let big = 0.5 * (tr + tr.signum() * disc.sqrt());
        let small = det / big;
        let frame = Eigenframe { unstable: orient(eigenvector(a, big)), stable: orient(eigenvector(a, small)) };
        return (tr, Multipliers::Real([big, small]), Some(frame), OrbitClass::Hyperbolic);
    }
    let multipliers = if disc < 0.0 {
        Multipliers::Complex { re: 0.5 * tr, im: 0.5 * (-disc).sqrt() }
    } else {
        let s = disc.sqrt();
        let (a1, a2) = (0.5 * (tr + s), 0.5 * (tr - s));
        if a1.abs() >= a2.abs() {
            Multipliers::Real([a1, a2])
        } else {
            Multipliers::Real([a2, a1])
        }
    };
    let class = if tr.abs() < 2.0 - TRACE_BAND { OrbitClass::Elliptic } else { OrbitClass::ParabolicMarginal };
    (tr, multipliers, None, class)
}

/// Recomputes residual, multipliers, class and eigenframe of an orbit from `f`.
pub fn classify(orbit: &PeriodicOrbit, f: &LiftedMap) -> Result<PeriodicOrbit> {
    let z = orbit.base.lift();
    let (end, a) = orbit_jacobian(f, &z, orbit.period)?;
    let residual = (end - z - orbit.lattice_type.as_lift()).norm();
    let (trace, multipliers, eigenframe, class) = classify_matrix(&a);
    Ok(PeriodicOrbit { residual, trace, multipliers, eigenframe, class, ..orbit.clone() })
}

struct RootMap<'a> {
    f: &'a LiftedMap,
    k: u32,
    m: LiftPoint,
}

impl RootMap<'_> {
    fn eval(&self, z: &LiftPoint) -> Result<(LiftPoint, Matrix2<f64>)> {
        let (end, j) = orbit_jacobian(self.f, z, self.k)?;
        Ok((end - z - self.m, j - Matrix2::identity()))
    }

    fn residual(&self, z: &LiftPoint) -> Result<LiftPoint> {
        let mut p = *z;
        for _ in 0..self.k {
            p = self.f.evaluate_lift(&p)?;
        }
        Ok(p - z - self.m)
    }
}

enum SeedOutcome {
    Root(LiftPoint),
    /// The seed is already a root of an identity-like root map.
    Degenerate,
    Failed,
}

fn newton_step(r: &LiftPoint, j: &Matrix2<f64>) -> LiftPoint {
    if j.determinant().abs() > 1e-14 * (1.0 + j.norm_squared()) {
        if let Some(inv) = j.try_inverse() {
            return -(inv * r);
        }
    }
    // Levenberg step for a (nearly) singular root Jacobian
    let mu = 1e-10 + 1e-6 * r.norm();
    let jt = j.transpose();
    (jt * j + Matrix2::identity() * mu).try_inverse().map(|m| -(m * jt * r)).unwrap_or_else(LiftPoint::zeros)
}

fn solve_seed(root: &RootMap<'_>, seed: LiftPoint, tol: f64) -> Result<SeedOutcome> {
    let mut z = seed;
    let (mut r, mut j) = root.eval(&z)?;
    if r.norm() < tol && j.amax() < 1e-9 {
        return Ok(SeedOutcome::Degenerate);
    }
    for _ in 0..MAX_NEWTON {
        let norm2 = r.norm_squared();
        if norm2.sqrt() < tol {
            return Ok(SeedOutcome::Root(z));
        }
        let dz = newton_step(&r, &j);
        if !dz.iter().all(|v| v.is_finite()) || dz.norm() == 0.0 {
            return Ok(SeedOutcome::Failed);
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let trial = z + dz * t;
            let rt = root.residual(&trial)?;
            if rt.norm_squared() <= (1.0 - 1e-4 * t) * norm2 {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some(next) => z = next,
            None => return Ok(SeedOutcome::Failed),
        }
        (r, j) = root.eval(&z)?;
    }
    Ok(if r.norm() < tol { SeedOutcome::Root(z) } else { SeedOutcome::Failed })
}

/// A few Newton steps that only accept residual decreases.
fn polish(root: &RootMap<'_>, z: LiftPoint) -> Result<(LiftPoint, f64)> {
    let mut z = z;
    let mut res = root.residual(&z)?.norm();
    for _ in 0..4 {
        let (r, j) = root.eval(&z)?;
        let trial = z + newton_step(&r, &j);
        let rt = root.residual(&trial)?.norm();
        if !(rt < res) {
            break;
        }
        z = trial;
        res = rt;
    }
    Ok((z, res))
}

fn snap(v: f64) -> f64 {
    if v > 1.0 - 1e-9 {
        0.0
    } else {
        v
    }
}

fn canonical_key(p: &TorusPoint) -> (f64, f64) {
    (snap(p.x()), snap(p.y()))
}

fn key_less(a: (f64, f64), b: (f64, f64)) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    if (a.0 - b.0).abs() > 1e-9 {
        a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal)
    } else {
        a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal)
    }
}

fn build_orbit(f: &LiftedMap, root: &RootMap<'_>, z: LiftPoint) -> Result<PeriodicOrbit> {
    let k = root.k;
    let mut pts = Vec::with_capacity(k as usize);
    let mut p = z;
    for _ in 0..k {
        pts.push(reduce(&p)?);
        p = f.evaluate_lift(&p)?;
    }
    let start = (0..pts.len())
        .min_by(|&a, &b| key_less(canonical_key(&pts[a]), canonical_key(&pts[b])))
        .unwrap_or(0);
    let (base_lift, _) = polish(root, {
        let (x, y) = canonical_key(&pts[start]);
        LiftPoint::new(x, y)
    })?;
    let base = reduce(&base_lift)?;
    let base = TorusPoint::new(snap(base.x()), snap(base.y()))?;
    let mut points = Vec::with_capacity(k as usize);
    let mut p = base.lift();
    for _ in 0..k {
        points.push(reduce(&p)?);
        p = f.evaluate_lift(&p)?;
    }
    let draft = PeriodicOrbit {
        base,
        period: k,
        lattice_type: LatticeVector::new(root.m.x as i64, root.m.y as i64),
        points,
        residual: 0.0,
        trace: 0.0,
        multipliers: Multipliers::Real([1.0, 1.0]),
        eigenframe: None,
        class: OrbitClass::ParabolicMarginal,
    };
    classify(&draft, f)
}

/// Periodic orbits with `F^k(z) = z + m`, found from a `grid_n × grid_n`
/// grid of seeds at cell centers and returned in canonical order.
pub fn find_periodic_orbits(
    f: &LiftedMap,
    k: u32,
    m: LatticeVector,
    grid_n: usize,
    tol: f64,
) -> Result<Vec<PeriodicOrbit>> {
    if k == 0 || grid_n == 0 {
        return Err(TangleError::InvalidParameter("period and grid size must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(TangleError::InvalidParameter("root tolerance must be positive".into()));
    }
    let root = RootMap { f, k, m: m.as_lift() };
    let seeds: Vec<LiftPoint> = (0..grid_n * grid_n)
        .map(|i| {
            let (r, c) = (i / grid_n, i % grid_n);
            LiftPoint::new((c as f64 + 0.5) / grid_n as f64, (r as f64 + 0.5) / grid_n as f64)
        })
        .collect();
    let outcomes = solve_all(&root, &seeds, tol)?;
    if outcomes.iter().all(|o| matches!(o, SeedOutcome::Degenerate)) {
        return Err(TangleError::DegenerateRootMap);
    }

    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for outcome in outcomes {
        let SeedOutcome::Root(z) = outcome else { continue };
        let zp = reduce(&z)?.lift();
        if orbits.iter().any(|o| o.points.iter().any(|q| torus_distance(&q.lift(), &zp) < DEDUP_RADIUS)) {
            continue;
        }
        let orbit = build_orbit(f, &root, z)?;
        if orbits.iter().any(|o| torus_distance(&o.base.lift(), &orbit.base.lift()) < DEDUP_RADIUS) {
            continue;
        }
        orbits.push(orbit);
    }
    orbits.sort_by(|a, b| key_less(canonical_key(&a.base), canonical_key(&b.base)));
    Ok(orbits)
}

#[cfg(feature = "parallel")]
fn solve_all(root: &RootMap<'_>, seeds: &[LiftPoint], tol: f64) -> Result<Vec<SeedOutcome>> {
    use rayon::prelude::*;
    seeds.par_iter().map(|s| solve_seed(root, *s, tol)).collect()
}

#[cfg(not(feature = "parallel"))]
fn solve_all(root: &RootMap<'_>, seeds: &[LiftPoint], tol: f64) -> Result<Vec<SeedOutcome>> {
    seeds.iter().map(|s| solve_seed(root, *s, tol)).collect()
}
