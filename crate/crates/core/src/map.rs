//! Area-preserving torus maps homotopic to the identity, represented by an
//! expression tree over their lifts.
//!
//! Every factor is equivariant, `F(z + v) = F(z) + v` for integer `v`, and
//! provides its Jacobian in closed form or through variational integration,
//! so compositions carry exact chain-rule derivatives.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};
use crate::hamiltonian::{flow, HamiltonianSpec};
use crate::perturb::{NudgeSpec, TunerSpec};
use crate::torus::LiftPoint;

const INVERSE_MAX_ITERS: usize = 100;
const INVERSE_TOL: f64 = 1e-12;

/// One harmonic `cos·cos(2πks) + sin·sin(2πks)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A 1-periodic trigonometric polynomial used as a shear displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TwistProfile {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
}

impl TwistProfile {
    pub fn constant(mean: f64) -> Self {
        Self { mean, harmonics: Vec::new() }
    }

    /// `mean + amplitude·sin(2πs)/(2π)`, whose derivative at 0 is `amplitude`.
    pub fn sine(amplitude: f64, mean: f64) -> Self {
        Self { mean, harmonics: vec![Harmonic { k: 1, cos: 0.0, sin: amplitude / TAU }] }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.mean
            + self
                .harmonics
                .iter()
                .map(|h| {
                    let (sn, cs) = (TAU * h.k as f64 * s).sin_cos();
                    h.cos * cs + h.sin * sn
                })
                .sum::<f64>()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|h| {
                let w = TAU * h.k as f64;
                let (sn, cs) = (w * s).sin_cos();
                w * (h.sin * cs - h.cos * sn)
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(TangleError::InvalidParameter("profile mean must be finite".into()));
        }
        for h in &self.harmonics {
            if h.k == 0 || !h.cos.is_finite() || !h.sin.is_finite() {
                return Err(TangleError::InvalidParameter(format!("bad harmonic {h:?}")));
            }
        }
        Ok(())
    }
}

/// Descriptor tree of a lifted map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapExpr {
    Identity,
    Translation { dx: f64, dy: f64 },
    /// `(x + p(y), y)`
    ShearX { profile: TwistProfile },
    /// `(x, y + q(x))`
    ShearY { profile: TwistProfile },
    /// `(x + p(y), y + q(x + p(y)))`
    DoubleTwist { p: TwistProfile, q: TwistProfile },
    /// `outer ∘ inner`
    Compose { outer: Box<MapExpr>, inner: Box<MapExpr> },
    Iterate { map: Box<MapExpr>, times: u32 },
    Inverse { map: Box<MapExpr> },
    FluxTuner { spec: TunerSpec },
    Nudge { spec: NudgeSpec, steps: u32 },
    Stroboscopic { hamiltonian: HamiltonianSpec, steps: u32 },
}

impl MapExpr {
    fn validate(&self) -> Result<()> {
        match self {
            MapExpr::Identity => Ok(()),
            MapExpr::Translation { dx, dy } => {
                if dx.is_finite() && dy.is_finite() {
                    Ok(())
                } else {
                    Err(TangleError::InvalidParameter("translation must be finite".into()))
                }
            }
            MapExpr::ShearX { profile } | MapExpr::ShearY { profile } => profile.validate(),
            MapExpr::DoubleTwist { p, q } => {
                p.validate()?;
                q.validate()
            }
            MapExpr::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            MapExpr::Iterate { map, times } => {
                if *times == 0 {
                    return Err(TangleError::InvalidParameter("iterate count must be positive".into()));
                }
                map.validate()
            }
            MapExpr::Inverse { map } => map.validate(),
            MapExpr::FluxTuner { spec } => spec.validate(),
            MapExpr::Nudge { spec, steps } => {
                if *steps == 0 {
                    return Err(TangleError::InvalidParameter("nudge steps must be positive".into()));
                }
                spec.validate()
            }
            MapExpr::Stroboscopic { steps, .. } => {
                if *steps == 0 {
                    return Err(TangleError::InvalidParameter("integrator steps must be positive".into()));
                }
                Ok(())
            }
        }
    }

    fn has_integrated(&self) -> bool {
        match self {
            MapExpr::Nudge { .. } | MapExpr::Stroboscopic { .. } => true,
            MapExpr::Compose { outer, inner } => outer.has_integrated() || inner.has_integrated(),
            MapExpr::Iterate { map, .. } | MapExpr::Inverse { map } => map.has_integrated(),
            _ => false,
        }
    }

    fn apply(&self, z: &LiftPoint) -> Result<LiftPoint> {
        Ok(match self {
            MapExpr::Identity => *z,
            MapExpr::Translation { dx, dy } => LiftPoint::new(z.x + dx, z.y + dy),
            MapExpr::ShearX { profile } => LiftPoint::new(z.x + profile.value(z.y), z.y),
            MapExpr::ShearY { profile } => LiftPoint::new(z.x, z.y + profile.value(z.x)),
            MapExpr::DoubleTwist { p, q } => {
                let x = z.x + p.value(z.y);
                LiftPoint::new(x, z.y + q.value(x))
            }
            MapExpr::Compose { outer, inner } => outer.apply(&inner.apply(z)?)?,
            MapExpr::Iterate { map, times } => {
                let mut p = *z;
                for _ in 0..*times {
                    p = map.apply(&p)?;
                }
                p
            }
            MapExpr::Inverse { map } => invert(map, z)?,
            MapExpr::FluxTuner { spec } => spec.apply(z),
            MapExpr::Nudge { spec, steps } => spec.apply(z, *steps, None)?,
            MapExpr::Stroboscopic { hamiltonian, steps } => flow(hamiltonian, z, 0.0, 1.0, *steps, None)?,
        })
    }

    fn apply_jac(&self, z: &LiftPoint) -> Result<(LiftPoint, Matrix2<f64>)> {
        Ok(match self {
            MapExpr::Identity => (*z, Matrix2::identity()),
            MapExpr::Translation { dx, dy } => (LiftPoint::new(z.x + dx, z.y + dy), Matrix2::identity()),
            MapExpr::ShearX { profile } => {
                (LiftPoint::new(z.x + profile.value(z.y), z.y), Matrix2::new(1.0, profile.derivative(z.y), 0.0, 1.0))
            }
            MapExpr::ShearY { profile } => {
                (LiftPoint::new(z.x, z.y + profile.value(z.x)), Matrix2::new(1.0, 0.0, profile.derivative(z.x), 1.0))
            }
            MapExpr::DoubleTwist { p, q } => {
                let dp = p.derivative(z.y);
                let x = z.x + p.value(z.y);
                let dq = q.derivative(x);
                let jp = Matrix2::new(1.0, dp, 0.0, 1.0);
                let jq = Matrix2::new(1.0, 0.0, dq, 1.0);
                (LiftPoint::new(x, z.y + q.value(x)), jq * jp)
            }
            MapExpr::Compose { outer, inner } => {
                let (w, ji) = inner.apply_jac(z)?;
                let (v, jo) = outer.apply_jac(&w)?;
                (v, jo * ji)
            }
            MapExpr::Iterate { map, times } => {
                let mut p = *z;
                let mut j = Matrix2::identity();
                for _ in 0..*times {
                    let (q, jq) = map.apply_jac(&p)?;
                    p = q;
                    j = jq * j;
                }
                (p, j)
            }
            MapExpr::Inverse { map } => {
                let pre = invert(map, z)?;
                let (_, j) = map.apply_jac(&pre)?;
                let inv = j.try_inverse().ok_or(TangleError::NoConvergence {
                    what: "inverse Jacobian",
                    iterations: 0,
                    residual: f64::NAN,
                })?;
                (pre, inv)
            }
            MapExpr::FluxTuner { spec } => spec.apply_jac(z),
            MapExpr::Nudge { spec, steps } => {
                let mut j = Matrix2::identity();
                let p = spec.apply(z, *steps, Some(&mut j))?;
                (p, j)
            }
            MapExpr::Stroboscopic { hamiltonian, steps } => {
                let mut j = Matrix2::identity();
                let p = flow(hamiltonian, z, 0.0, 1.0, *steps, Some(&mut j))?;
                (p, j)
            }
        })
    }
}

/// Factor-by-factor inverse; closed form where the factor has one, damped
/// Newton otherwise.
fn invert(e: &MapExpr, w: &LiftPoint) -> Result<LiftPoint> {
    Ok(match e {
        MapExpr::Identity => *w,
        MapExpr::Translation { dx, dy } => LiftPoint::new(w.x - dx, w.y - dy),
        MapExpr::ShearX { profile } => LiftPoint::new(w.x - profile.value(w.y), w.y),
        MapExpr::ShearY { profile } => LiftPoint::new(w.x, w.y - profile.value(w.x)),
        MapExpr::DoubleTwist { p, q } => {
            let y = w.y - q.value(w.x);
            LiftPoint::new(w.x - p.value(y), y)
        }
        MapExpr::Compose { outer, inner } => invert(inner, &invert(outer, w)?)?,
        MapExpr::Iterate { map, times } => {
            let mut p = *w;
            for _ in 0..*times {
                p = invert(map, &p)?;
            }
            p
        }
        MapExpr::Inverse { map } => map.apply(w)?,
        MapExpr::FluxTuner { spec } => spec.invert(w),
        MapExpr::Nudge { .. } | MapExpr::Stroboscopic { .. } => newton_inverse(e, w, *w)?,
    })
}

/// Damped Newton with step halving on `F(z) − w`, seeded at `seed`.
fn newton_inverse(e: &MapExpr, w: &LiftPoint, seed: LiftPoint) -> Result<LiftPoint> {
    let tol = INVERSE_TOL * (1.0 + w.amax());
    let mut z = seed;
    let mut r = e.apply(&z)? - w;
    for _ in 0..INVERSE_MAX_ITERS {
        if r.norm() < tol {
            return Ok(z);
        }
        let (_, j) = e.apply_jac(&z)?;
        let step = j.lu().solve(&r).ok_or(TangleError::NoConvergence {
            what: "inverse_point",
            iterations: 0,
            residual: r.norm(),
        })?;
        let mut alpha = 1.0;
        loop {
            let cand = z - step * alpha;
            let rc = e.apply(&cand)? - w;
            if rc.norm() < r.norm() || alpha < 1e-10 {
                z = cand;
                r = rc;
                break;
            }
            alpha *= 0.5;
        }
    }
    if r.norm() < tol {
        Ok(z)
    } else {
        Err(TangleError::NoConvergence { what: "inverse_point", iterations: INVERSE_MAX_ITERS, residual: r.norm() })
    }
}

/// A lifted torus map. Cheap to clone; the descriptor is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LiftedMap {
    expr: Arc<MapExpr>,
}

impl LiftedMap {
    pub fn from_expr(expr: MapExpr) -> Self {
        Self { expr: Arc::new(expr) }
    }

    /// Parses and validates a descriptor.
    pub fn try_from_expr(expr: MapExpr) -> Result<Self> {
        expr.validate()?;
        Ok(Self::from_expr(expr))
    }

    pub fn expr(&self) -> &MapExpr {
        &self.expr
    }

    pub fn identity() -> Self {
        Self::from_expr(MapExpr::Identity)
    }

    pub fn is_identity(&self) -> bool {
        matches!(*self.expr, MapExpr::Identity)
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self::from_expr(MapExpr::Translation { dx, dy })
    }

    pub fn shear_x(profile: TwistProfile) -> Self {
        Self::from_expr(MapExpr::ShearX { profile })
    }

    pub fn shear_y(profile: TwistProfile) -> Self {
        Self::from_expr(MapExpr::ShearY { profile })
    }

    pub fn double_twist(p: TwistProfile, q: TwistProfile) -> Self {
        Self::from_expr(MapExpr::DoubleTwist { p, q })
    }

    /// Double twist with `p(y) = mean_p + K sin(2πy)/(2π)` and
    /// `q(x) = mean_q + L sin(2πx)/(2π)`. Its Jacobian at the origin is
    /// `[[1, K], [L, 1 + KL]]` when the means vanish.
    pub fn double_twist_sine(k: f64, l: f64, mean_p: f64, mean_q: f64) -> Self {
        Self::double_twist(TwistProfile::sine(k, mean_p), TwistProfile::sine(l, mean_q))
    }

    /// `g ∘ f`.
    pub fn compose(g: &LiftedMap, f: &LiftedMap) -> Self {
        match (&*g.expr, &*f.expr) {
            (MapExpr::Identity, _) => f.clone(),
            (_, MapExpr::Identity) => g.clone(),
            (MapExpr::Translation { dx: a, dy: b }, MapExpr::Translation { dx: c, dy: d }) => {
                Self::translation(a + c, b + d)
            }
            _ => Self::from_expr(MapExpr::Compose {
                outer: Box::new((*g.expr).clone()),
                inner: Box::new((*f.expr).clone()),
            }),
        }
    }

    /// `f^k` for `k ≥ 1`.
    pub fn iterate(f: &LiftedMap, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(TangleError::InvalidParameter("iterate count must be positive".into()));
        }
        if k == 1 {
            return Ok(f.clone());
        }
        Ok(match &*f.expr {
            MapExpr::Identity => f.clone(),
            MapExpr::Translation { dx, dy } => Self::translation(dx * k as f64, dy * k as f64),
            MapExpr::Iterate { map, times } => {
                Self::from_expr(MapExpr::Iterate { map: map.clone(), times: times * k })
            }
            e => Self::from_expr(MapExpr::Iterate { map: Box::new(e.clone()), times: k }),
        })
    }

    pub fn inverse(f: &LiftedMap) -> Self {
        match &*f.expr {
            MapExpr::Identity => f.clone(),
            MapExpr::Translation { dx, dy } => Self::translation(-dx, -dy),
            MapExpr::Inverse { map } => Self::from_expr((**map).clone()),
            e => Self::from_expr(MapExpr::Inverse { map: Box::new(e.clone()) }),
        }
    }

    /// Whether any factor is evaluated by numerical integration.
    pub fn has_integrated_factors(&self) -> bool {
        self.expr.has_integrated()
    }

    pub fn evaluate_lift(&self, z: &LiftPoint) -> Result<LiftPoint> {
        if !z.x.is_finite() || !z.y.is_finite() {
            return Err(TangleError::NonFinite(z.x, z.y));
        }
        self.expr.apply(z)
    }

    pub fn jacobian(&self, z: &LiftPoint) -> Result<Matrix2<f64>> {
        Ok(self.evaluate_with_jacobian(z)?.1)
    }

    pub fn evaluate_with_jacobian(&self, z: &LiftPoint) -> Result<(LiftPoint, Matrix2<f64>)> {
        if !z.x.is_finite() || !z.y.is_finite() {
            return Err(TangleError::NonFinite(z.x, z.y));
        }
        self.expr.apply_jac(z)
    }

    /// Solves `F(z) = w`, returning `z` with `|F(z) − w| < 1e-12·(1 + |w|)`.
    pub fn inverse_point(&self, w: &LiftPoint) -> Result<LiftPoint> {
        if !w.x.is_finite() || !w.y.is_finite() {
            return Err(TangleError::NonFinite(w.x, w.y));
        }
        let tol = INVERSE_TOL * (1.0 + w.amax());
        let z = invert(&self.expr, w)?;
        if (self.expr.apply(&z)? - w).norm() < tol {
            return Ok(z);
        }
        newton_inverse(&self.expr, w, z)
    }
}

/// Sampling audit of the two defining invariants of a lifted map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapAudit {
    pub max_equivariance_error: f64,
    pub max_det_error: f64,
}

/// Checks `F(z + v) = F(z) + v` and `det DF = 1` on the given samples.
pub fn audit_map(f: &LiftedMap, samples: &[(LiftPoint, crate::torus::LatticeVector)]) -> Result<MapAudit> {
    let mut eq: f64 = 0.0;
    let mut det: f64 = 0.0;
    for (z, v) in samples {
        let (fz, j) = f.evaluate_with_jacobian(z)?;
        let fzv = f.evaluate_lift(&(z + v.as_lift()))?;
        eq = eq.max((fzv - fz - v.as_lift()).amax());
        det = det.max((j.determinant() - 1.0).abs());
    }
    Ok(MapAudit { max_equivariance_error: eq, max_det_error: det })
}
