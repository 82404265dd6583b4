//! Time-periodic Hamiltonians on T² × S¹ and their implicit-midpoint flows.
//!
//! Sign convention: ẋ = ∂H/∂y, ẏ = −∂H/∂x. The time period is fixed at 1.

use std::f64::consts::TAU;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};
use crate::map::{LiftedMap, MapExpr};
use crate::torus::LiftPoint;

/// Default number of implicit-midpoint steps per unit time.
pub const DEFAULT_STEPS: u32 = 256;

/// Absolute tolerance of the inner midpoint solve.
const INNER_TOL: f64 = 1e-13;
const FIXED_POINT_ITERS: usize = 60;
const NEWTON_ITERS: usize = 30;

/// Velocity field of a (possibly time-dependent) planar system together with
/// its spatial derivative.
pub trait VectorField {
    fn velocity(&self, z: &LiftPoint, t: f64) -> LiftPoint;
    fn velocity_jacobian(&self, z: &LiftPoint, t: f64) -> Matrix2<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrigKind {
    #[default]
    Cos,
    Sin,
}

/// `cos(2π·freq·s)` or `sin(2π·freq·s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Trig {
    #[serde(default)]
    pub kind: TrigKind,
    #[serde(default)]
    pub freq: u32,
}

impl Trig {
    pub const ONE: Trig = Trig { kind: TrigKind::Cos, freq: 0 };

    pub fn cos(freq: u32) -> Self {
        Self { kind: TrigKind::Cos, freq }
    }

    pub fn sin(freq: u32) -> Self {
        Self { kind: TrigKind::Sin, freq }
    }

    /// Value and first two derivatives at `s`.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        let w = TAU * self.freq as f64;
        let (sn, cs) = (w * s).sin_cos();
        match self.kind {
            TrigKind::Cos => (cs, -w * sn, -w * w * cs),
            TrigKind::Sin => (sn, w * cs, -w * w * sn),
        }
    }

    fn value(&self, s: f64) -> f64 {
        let w = TAU * self.freq as f64;
        match self.kind {
            TrigKind::Cos => (w * s).cos(),
            TrigKind::Sin => (w * s).sin(),
        }
    }
}

/// One term `coeff · X(x) · Y(y) · T(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianTerm {
    pub coeff: f64,
    #[serde(default)]
    pub x: Trig,
    #[serde(default)]
    pub y: Trig,
    #[serde(default)]
    pub t: Trig,
}

/// A 1-periodic Hamiltonian given as a finite sum of trigonometric monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub terms: Vec<HamiltonianTerm>,
}

impl HamiltonianSpec {
    pub fn new(terms: Vec<HamiltonianTerm>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `cos(2πy)/(2π)`: an autonomous shear, time-1 map `(x − sin 2πy, y)`.
    pub fn shear_y() -> Self {
        Self::new(vec![HamiltonianTerm { coeff: 1.0 / TAU, x: Trig::ONE, y: Trig::cos(1), t: Trig::ONE }])
    }

    /// `cos(2πx)cos(2πy)sin(2πt)`: pulsating cellular flow.
    pub fn cellular_pulse() -> Self {
        Self::new(vec![HamiltonianTerm { coeff: 1.0, x: Trig::cos(1), y: Trig::cos(1), t: Trig::sin(1) }])
    }

    /// A mixed autonomous/periodic Hamiltonian with a hyperbolic fixed point.
    pub fn pendulum_kicked() -> Self {
        Self::new(vec![
            HamiltonianTerm { coeff: 0.12, x: Trig::ONE, y: Trig::cos(1), t: Trig::ONE },
            HamiltonianTerm { coeff: 0.10, x: Trig::cos(1), y: Trig::ONE, t: Trig::ONE },
            HamiltonianTerm { coeff: 0.05, x: Trig::sin(1), y: Trig::sin(1), t: Trig::cos(1) },
        ])
    }

    /// The Hamiltonians used for the zero-flux audit.
    pub fn builtins() -> Vec<(&'static str, HamiltonianSpec)> {
        vec![
            ("shear_y", Self::shear_y()),
            ("cellular_pulse", Self::cellular_pulse()),
            ("pendulum_kicked", Self::pendulum_kicked()),
        ]
    }

    pub fn value(&self, z: &LiftPoint, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.coeff * term.x.value(z.x) * term.y.value(z.y) * term.t.value(t))
            .sum()
    }

    /// (H, ∂H/∂x, ∂H/∂y, ∂²H/∂x², ∂²H/∂x∂y, ∂²H/∂y²)
    fn derivatives(&self, z: &LiftPoint, t: f64) -> [f64; 6] {
        let mut out = [0.0; 6];
        for term in &self.terms {
            let (x0, x1, x2) = term.x.eval(z.x);
            let (y0, y1, y2) = term.y.eval(z.y);
            let c = term.coeff * term.t.value(t);
            out[0] += c * x0 * y0;
            out[1] += c * x1 * y0;
            out[2] += c * x0 * y1;
            out[3] += c * x2 * y0;
            out[4] += c * x1 * y1;
            out[5] += c * x0 * y2;
        }
        out
    }
}

impl VectorField for HamiltonianSpec {
    fn velocity(&self, z: &LiftPoint, t: f64) -> LiftPoint {
        let d = self.derivatives(z, t);
        LiftPoint::new(d[2], -d[1])
    }

    fn velocity_jacobian(&self, z: &LiftPoint, t: f64) -> Matrix2<f64> {
        let d = self.derivatives(z, t);
        Matrix2::new(d[4], d[5], -d[3], -d[4])
    }
}

/// One implicit-midpoint step `z₁ = z₀ + h·V((z₀ + z₁)/2, t + h/2)`.
/// When `jac` is given it is advanced by the exact derivative of the step.
pub fn midpoint_step<V: VectorField + ?Sized>(
    field: &V,
    z0: &LiftPoint,
    t: f64,
    h: f64,
    jac: Option<&mut Matrix2<f64>>,
) -> Result<LiftPoint> {
    let tm = t + 0.5 * h;
    let half = 0.5 * h;
    let mut m = *z0;
    let mut v = field.velocity(&m, tm);
    let mut converged = false;
    for _ in 0..FIXED_POINT_ITERS {
        let next = z0 + v * half;
        let delta = (next - m).amax();
        m = next;
        v = field.velocity(&m, tm);
        if delta <= INNER_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        // Newton on G(m) = m − z₀ − (h/2)·V(m)
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_ITERS {
            let g = m - z0 - v * half;
            residual = g.amax();
            if residual <= INNER_TOL {
                converged = true;
                break;
            }
            let dg = Matrix2::identity() - field.velocity_jacobian(&m, tm) * half;
            let step = dg.lu().solve(&g).ok_or(TangleError::NoConvergence {
                what: "implicit midpoint solve",
                iterations: 0,
                residual,
            })?;
            m -= step;
            v = field.velocity(&m, tm);
        }
        if !converged {
            return Err(TangleError::NoConvergence {
                what: "implicit midpoint solve",
                iterations: FIXED_POINT_ITERS + NEWTON_ITERS,
                residual,
            });
        }
    }
    if let Some(j) = jac {
        let a = field.velocity_jacobian(&m, tm) * half;
        let lhs = Matrix2::identity() - a;
        let rhs = (Matrix2::identity() + a) * *j;
        *j = lhs.lu().solve(&rhs).ok_or(TangleError::NoConvergence {
            what: "variational step",
            iterations: 0,
            residual: f64::NAN,
        })?;
    }
    Ok(z0 + v * h)
}

pub(crate) fn flow<V: VectorField + ?Sized>(
    field: &V,
    z: &LiftPoint,
    t0: f64,
    t1: f64,
    steps: u32,
    mut jac: Option<&mut Matrix2<f64>>,
) -> Result<LiftPoint> {
    if steps == 0 {
        return Err(TangleError::InvalidParameter("steps must be positive".into()));
    }
    let h = (t1 - t0) / steps as f64;
    let mut p = *z;
    for i in 0..steps {
        let t = t0 + h * i as f64;
        p = midpoint_step(field, &p, t, h, jac.as_deref_mut())?;
    }
    Ok(p)
}

/// Endpoint of the implicit-midpoint trajectory from `(z, t0)` to time `t1`.
pub fn integrate_flow(h: &HamiltonianSpec, z: &LiftPoint, t0: f64, t1: f64, steps: u32) -> Result<LiftPoint> {
    flow(h, z, t0, t1, steps, None)
}

/// Endpoint together with the variational Jacobian.
pub fn integrate_flow_with_jacobian(
    h: &HamiltonianSpec,
    z: &LiftPoint,
    t0: f64,
    t1: f64,
    steps: u32,
) -> Result<(LiftPoint, Matrix2<f64>)> {
    let mut j = Matrix2::identity();
    let p = flow(h, z, t0, t1, steps, Some(&mut j))?;
    Ok((p, j))
}

/// The time-1 map of `h` as a map factor.
pub fn stroboscopic_map(h: &HamiltonianSpec, steps: u32) -> Result<LiftedMap> {
    if steps == 0 {
        return Err(TangleError::InvalidParameter("steps must be positive".into()));
    }
    if h.terms.iter().all(|t| t.coeff == 0.0) {
        return Ok(LiftedMap::identity());
    }
    Ok(LiftedMap::from_expr(MapExpr::Stroboscopic { hamiltonian: h.clone(), steps }))
}
