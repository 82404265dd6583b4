//! Constructive area-preserving perturbations: a tube shear that moves the
//! flux across one generator, and a compactly supported Hamiltonian nudge
//! that carries one point to a nearby target.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};
use crate::flux::{centered_mod1, flux_vector_with, FluxSettings, FluxVector};
use crate::hamiltonian::{flow, VectorField};
use crate::map::{LiftedMap, MapExpr};
use crate::torus::{torus_displacement, LiftPoint, TorusPoint};

/// Default half-width of the tuner tubes built by [`rationalize_flux`].
pub const DEFAULT_TUBE_HALF_WIDTH: f64 = 0.2;
pub const DEFAULT_NUDGE_STEPS: u32 = 64;

/// Flat bump `β(t) = exp(1 − 1/(1 − (t/δ)²))` on (−δ, δ), zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpProfile {
    pub half_width: f64,
}

impl BumpProfile {
    pub fn new(half_width: f64) -> Result<Self> {
        let b = Self { half_width };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(TangleError::InvalidParameter("bump half-width must be positive".into()));
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let u = t / self.half_width;
        let s = 1.0 - u * u;
        if s <= 0.0 {
            return 0.0;
        }
        (1.0 - 1.0 / s).exp()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let u = t / self.half_width;
        let s = 1.0 - u * u;
        if s <= 0.0 {
            return 0.0;
        }
        let b = (1.0 - 1.0 / s).exp();
        if b == 0.0 {
            return 0.0;
        }
        -b * 2.0 * u / (self.half_width * s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// Tube around the horizontal loop; shears along x.
    A,
    /// Tube around the vertical loop; shears along y.
    B,
}

/// Shear `(θ, t) ↦ (θ + ε·β(t), t)` in a tube around one generator loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerSpec {
    pub generator: Generator,
    pub epsilon: f64,
    pub tube: BumpProfile,
    /// Transverse coordinate of the tube axis.
    #[serde(default)]
    pub tube_center: f64,
}

impl TunerSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        self.tube.validate()?;
        if 2.0 * self.tube.half_width >= 1.0 {
            return Err(TangleError::Precondition(format!(
                "tube too wide: 2·delta = {} must be < 1",
                2.0 * self.tube.half_width
            )));
        }
        if !self.epsilon.is_finite() || !self.tube_center.is_finite() {
            return Err(TangleError::InvalidParameter("tuner parameters must be finite".into()));
        }
        Ok(())
    }

    fn offset(&self, s: f64) -> f64 {
        let d = s - self.tube_center;
        d - d.round()
    }

    pub(crate) fn apply(&self, z: &LiftPoint) -> LiftPoint {
        match self.generator {
            Generator::A => LiftPoint::new(z.x + self.epsilon * self.tube.value(self.offset(z.y)), z.y),
            Generator::B => LiftPoint::new(z.x, z.y + self.epsilon * self.tube.value(self.offset(z.x))),
        }
    }

    pub(crate) fn apply_jac(&self, z: &LiftPoint) -> (LiftPoint, Matrix2<f64>) {
        let p = self.apply(z);
        let j = match self.generator {
            Generator::A => Matrix2::new(1.0, self.epsilon * self.tube.derivative(self.offset(z.y)), 0.0, 1.0),
            Generator::B => Matrix2::new(1.0, 0.0, self.epsilon * self.tube.derivative(self.offset(z.x)), 1.0),
        };
        (p, j)
    }

    pub(crate) fn invert(&self, w: &LiftPoint) -> LiftPoint {
        match self.generator {
            Generator::A => LiftPoint::new(w.x - self.epsilon * self.tube.value(self.offset(w.y)), w.y),
            Generator::B => LiftPoint::new(w.x, w.y - self.epsilon * self.tube.value(self.offset(w.x))),
        }
    }
}

/// The tube shear as a map factor.
pub fn flux_tuner(spec: TunerSpec) -> Result<LiftedMap> {
    spec.validate()?;
    if spec.epsilon == 0.0 {
        return Ok(LiftedMap::identity());
    }
    Ok(LiftedMap::from_expr(MapExpr::FluxTuner { spec }))
}

/// Nearest rational `p/q` (mod 1) with `1 ≤ q ≤ max_den`, ties to the smaller denominator.
pub fn nearest_rational(v: f64, max_den: u32) -> (i64, u32) {
    let mut best = (0i64, 1u32, f64::INFINITY);
    for q in 1..=max_den.max(1) {
        let p = (v * q as f64).round() as i64;
        let err = (v - p as f64 / q as f64).abs();
        if err < best.2 - 1e-15 {
            best = (p, q, err);
        }
    }
    (best.0, best.1)
}

/// Result of [`rationalize_flux`].
#[derive(Debug, Clone, Serialize)]
pub struct Rationalized {
    pub map: LiftedMap,
    pub flux: FluxVector,
    pub target: [f64; 2],
    /// Epsilons of the tuner around b₁ (moves phi_a) and around a₁ (moves phi_b).
    pub epsilons: [f64; 2],
}

/// Composes `f` with tuners on both generators so each flux component
/// lands on its nearest rational with denominator at most `max_den`.
pub fn rationalize_flux(f: &LiftedMap, max_den: u32) -> Result<Rationalized> {
    rationalize_flux_with(f, max_den, DEFAULT_TUBE_HALF_WIDTH, &FluxSettings::for_map(f))
}

pub fn rationalize_flux_with(
    f: &LiftedMap,
    max_den: u32,
    half_width: f64,
    settings: &FluxSettings,
) -> Result<Rationalized> {
    if max_den == 0 {
        return Err(TangleError::InvalidParameter("denominator bound must be at least 1".into()));
    }
    let tube = BumpProfile::new(half_width)?;
    let base = flux_vector_with(f, settings)?;
    let target_of = |v: f64| {
        let (p, q) = nearest_rational(v, max_den);
        (p as f64 / q as f64).rem_euclid(1.0)
    };
    let target = [target_of(base.phi_a), target_of(base.phi_b)];

    // phi_a responds to the b-tube, phi_b to the a-tube; one component at a time
    let eps_b = solve_epsilon(f, Generator::B, tube, target[0], settings, |fv| fv.phi_a)?;
    let tuner_b = flux_tuner(TunerSpec { generator: Generator::B, epsilon: eps_b, tube, tube_center: 0.5 })?;
    let stage = LiftedMap::compose(f, &tuner_b);
    let eps_a = solve_epsilon(&stage, Generator::A, tube, target[1], settings, |fv| fv.phi_b)?;
    let tuner_a = flux_tuner(TunerSpec { generator: Generator::A, epsilon: eps_a, tube, tube_center: 0.5 })?;
    let map = LiftedMap::compose(&stage, &tuner_a);

    let flux = flux_vector_with(&map, settings)?;
    let miss = centered_mod1(flux.phi_a - target[0]).abs().max(centered_mod1(flux.phi_b - target[1]).abs());
    if miss > 1e-6 {
        return Err(TangleError::FluxTargetMissed {
            measured_a: flux.phi_a,
            measured_b: flux.phi_b,
            target_a: target[0],
            target_b: target[1],
        });
    }
    Ok(Rationalized { map, flux, target, epsilons: [eps_b, eps_a] })
}

/// Smallest-|ε| tuner parameter putting `component(flux(f ∘ h_ε))` on `target`.
///
/// The response of the flux to ε is linear with slope `∫β`; the slope is
/// measured once on the bare tuner to locate a bracket of width 1e-4 around
/// the solution, which is then bisected on the measured flux.
fn solve_epsilon(
    f: &LiftedMap,
    generator: Generator,
    tube: BumpProfile,
    target: f64,
    settings: &FluxSettings,
    component: impl Fn(&FluxVector) -> f64,
) -> Result<f64> {
    let measure = |eps: f64| -> Result<f64> {
        let h = flux_tuner(TunerSpec { generator, epsilon: eps, tube, tube_center: 0.5 })?;
        let fv = flux_vector_with(&LiftedMap::compose(f, &h), settings)?;
        Ok(centered_mod1(component(&fv) - target))
    };
    let r0 = measure(0.0)?;
    if r0.abs() <= 1e-13 {
        return Ok(0.0);
    }
    let unit = flux_tuner(TunerSpec { generator, epsilon: 1.0, tube, tube_center: 0.5 })?;
    let unit_flux = flux_vector_with(&unit, settings)?;
    let slope = match generator {
        Generator::B => unit_flux.representative[0],
        Generator::A => unit_flux.representative[1],
    };
    let guess = -r0 / slope;
    let step = 1e-4;
    let mut lo = guess - step;
    let mut hi = guess + step;
    let mut rlo = measure(lo)?;
    let mut rhi = measure(hi)?;
    let mut widen = 0;
    while rlo.signum() == rhi.signum() {
        widen += 1;
        if widen > 20 {
            return Err(TangleError::NoConvergence { what: "tuner bracket", iterations: widen, residual: rlo.abs() });
        }
        lo -= step * widen as f64;
        hi += step * widen as f64;
        rlo = measure(lo)?;
        rhi = measure(hi)?;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let rm = measure(mid)?;
        if rm.abs() <= 1e-13 || (hi - lo) <= 1e-15 * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if rm.signum() == rlo.signum() {
            lo = mid;
            rlo = rm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A compactly supported nudge carrying `center` to `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NudgeSpec {
    pub center: TorusPoint,
    pub target: TorusPoint,
    pub radius: f64,
    #[serde(default = "default_core")]
    pub core_fraction: f64,
}

fn default_core() -> f64 {
    0.5
}

impl NudgeSpec {
    pub fn new(center: TorusPoint, target: TorusPoint, radius: f64) -> Self {
        Self { center, target, radius, core_fraction: default_core() }
    }

    pub fn displacement(&self) -> LiftPoint {
        torus_displacement(&self.target.lift(), &self.center.lift())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius < 0.5) {
            return Err(TangleError::InvalidParameter(format!("nudge radius {} must lie in (0, 0.5)", self.radius)));
        }
        if !(self.core_fraction > 0.0 && self.core_fraction < 1.0) {
            return Err(TangleError::InvalidParameter("core fraction must lie in (0, 1)".into()));
        }
        let v = self.displacement().norm();
        if v >= self.core_fraction * self.radius {
            return Err(TangleError::Precondition(format!(
                "displacement {v} does not fit in the flat core of radius {}",
                self.core_fraction * self.radius
            )));
        }
        Ok(())
    }

    fn local(&self, z: &LiftPoint) -> LiftPoint {
        torus_displacement(z, &self.center.lift())
    }

    pub(crate) fn apply(&self, z: &LiftPoint, steps: u32, jac: Option<&mut Matrix2<f64>>) -> Result<LiftPoint> {
        if self.local(z).norm() >= self.radius {
            return Ok(*z);
        }
        flow(&NudgeField::new(self), z, 0.0, 1.0, steps, jac)
    }
}

/// Smooth transition from 1 (s ≥ 1) to 0 (s ≤ 0), flat at both ends.
fn smooth_step(s: f64) -> (f64, f64, f64) {
    if s <= 5e-3 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 - 5e-3 {
        return (1.0, 0.0, 0.0);
    }
    let h = 1.0 / (1.0 - s) - 1.0 / s;
    let h1 = 1.0 / ((1.0 - s) * (1.0 - s)) + 1.0 / (s * s);
    let h2 = 2.0 / ((1.0 - s) * (1.0 - s) * (1.0 - s)) - 2.0 / (s * s * s);
    let sig = 1.0 / (1.0 + (-h).exp());
    let d1 = sig * (1.0 - sig);
    let d2 = d1 * (1.0 - 2.0 * sig);
    (sig, d1 * h1, d2 * h1 * h1 + d1 * h2)
}

/// Field of `H(z) = χ(|z − c|)·(v_x (y − c_y) − v_y (x − c_x))`, equal to the
/// constant `v` on the flat core and zero outside the support ball.
struct NudgeField {
    center: LiftPoint,
    v: LiftPoint,
    core: f64,
    radius: f64,
}

impl NudgeField {
    fn new(spec: &NudgeSpec) -> Self {
        Self {
            center: spec.center.lift(),
            v: spec.displacement(),
            core: spec.core_fraction * spec.radius,
            radius: spec.radius,
        }
    }

    /// χ, χ', χ'' as functions of r.
    fn cutoff(&self, r: f64) -> (f64, f64, f64) {
        if r <= self.core {
            return (1.0, 0.0, 0.0);
        }
        if r >= self.radius {
            return (0.0, 0.0, 0.0);
        }
        let w = self.radius - self.core;
        let (c, c1, c2) = smooth_step((self.radius - r) / w);
        (c, -c1 / w, c2 / (w * w))
    }
}

impl VectorField for NudgeField {
    fn velocity(&self, z: &LiftPoint, _t: f64) -> LiftPoint {
        let d = torus_displacement(z, &self.center);
        let r = d.norm();
        let (chi, chi1, _) = self.cutoff(r);
        if chi == 0.0 && chi1 == 0.0 {
            return LiftPoint::zeros();
        }
        let lin = self.v.x * d.y - self.v.y * d.x;
        let (ux, uy) = if r > 0.0 { (d.x / r, d.y / r) } else { (0.0, 0.0) };
        let hx = chi1 * ux * lin - chi * self.v.y;
        let hy = chi1 * uy * lin + chi * self.v.x;
        LiftPoint::new(hy, -hx)
    }

    fn velocity_jacobian(&self, z: &LiftPoint, _t: f64) -> Matrix2<f64> {
        let d = torus_displacement(z, &self.center);
        let r = d.norm();
        let (_, chi1, chi2) = self.cutoff(r);
        if r <= self.core || r >= self.radius {
            return Matrix2::zeros();
        }
        let lin = self.v.x * d.y - self.v.y * d.x;
        let u = d / r;
        let grad_l = LiftPoint::new(-self.v.y, self.v.x);
        let grad_chi = u * chi1;
        let uu = u * u.transpose();
        let hess_chi = uu * chi2 + (Matrix2::identity() - uu) * (chi1 / r);
        let hess = hess_chi * lin + grad_chi * grad_l.transpose() + grad_l * grad_chi.transpose();
        // V = (H_y, −H_x)
        Matrix2::new(hess[(1, 0)], hess[(1, 1)], -hess[(0, 0)], -hess[(0, 1)])
    }
}

/// Time-1 map of the nudge Hamiltonian.
pub fn local_nudge(spec: NudgeSpec, integrator_steps: u32) -> Result<LiftedMap> {
    spec.validate()?;
    if integrator_steps == 0 {
        return Err(TangleError::InvalidParameter("integrator steps must be positive".into()));
    }
    if spec.displacement().norm() == 0.0 {
        return Ok(LiftedMap::identity());
    }
    Ok(LiftedMap::from_expr(MapExpr::Nudge { spec, steps: integrator_steps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{flux_across_curve, flux_vector};
    use crate::torus::ClosedCurve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bump_integral_oracle(delta: f64) -> f64 {
        // composite Simpson with 20000 panels on (−δ, δ)
        let n = 20000;
        let h = 2.0 * delta / n as f64;
        let b = BumpProfile { half_width: delta };
        let mut s = 0.0;
        for i in 0..=n {
            let t = -delta + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * b.value(t);
        }
        s * h / 3.0
    }

    #[test]
    fn bump_shape() {
        let b = BumpProfile::new(0.1).unwrap();
        assert_eq!(b.value(0.1), 0.0);
        assert_eq!(b.value(-0.1), 0.0);
        assert_eq!(b.value(0.0), 1.0);
        assert!(b.value(0.0999) > 0.0 || b.value(0.099) > 0.0);
        assert_eq!(b.derivative(0.1), 0.0);
        assert!(b.derivative(0.0999999).abs() < 1e-100);
        let h = 1e-7;
        for &t in &[-0.07, -0.02, 0.03, 0.08] {
            let fd = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
            assert!((fd - b.derivative(t)).abs() < 1e-6 * b.derivative(t).abs().max(1.0));
        }
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let t = flux_tuner(TunerSpec { generator: Generator::B, epsilon: 0.0, tube: BumpProfile { half_width: 0.1 }, tube_center: 0.3 }).unwrap();
        assert!(t.is_identity());
    }

    #[test]
    fn tuner_flux_matches_bump_integral() {
        let delta = 0.15;
        let eps = 0.05;
        let h = flux_tuner(TunerSpec { generator: Generator::B, epsilon: eps, tube: BumpProfile { half_width: delta }, tube_center: 0.4 }).unwrap();
        let oracle = eps * bump_integral_oracle(delta);
        let fa = flux_across_curve(&h, &ClosedCurve::generator_a(), 512).unwrap();
        assert!((fa - oracle).abs() < 1e-8, "{fa} vs {oracle}");
        let fb = flux_across_curve(&h, &ClosedCurve::generator_b(), 512).unwrap();
        assert_eq!(fb, 0.0);
    }

    #[test]
    fn tube_too_wide_rejected() {
        let r = flux_tuner(TunerSpec { generator: Generator::A, epsilon: 0.1, tube: BumpProfile { half_width: 0.5 }, tube_center: 0.0 });
        assert!(matches!(r, Err(TangleError::Precondition(_))));
    }

    #[test]
    fn tuner_is_identity_outside_tube() {
        let spec = TunerSpec { generator: Generator::A, epsilon: 0.3, tube: BumpProfile { half_width: 0.1 }, tube_center: 0.25 };
        let h = flux_tuner(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let z = LiftPoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let off = z.y - 0.25 - (z.y - 0.25).round();
            if off.abs() >= 0.1 {
                let w = h.evaluate_lift(&z).unwrap();
                assert_eq!(w.x.to_bits(), z.x.to_bits());
                assert_eq!(w.y.to_bits(), z.y.to_bits());
            }
        }
    }

    #[test]
    fn nearest_rationals() {
        assert_eq!(nearest_rational(0.49, 4), (1, 2));
        assert_eq!(nearest_rational(0.26, 4), (1, 4));
        assert_eq!(nearest_rational(0.02, 4), (0, 1));
        assert_eq!(nearest_rational(0.97, 3), (1, 1));
    }

    #[test]
    fn rationalize_translation() {
        let f = LiftedMap::translation(0.26, 0.49);
        let r = rationalize_flux(&f, 4).unwrap();
        assert_eq!(r.target, [0.5, 0.25]);
        assert!((r.flux.phi_a - 0.5).abs() < 1e-6);
        assert!((r.flux.phi_b - 0.25).abs() < 1e-6);
    }

    #[test]
    fn rationalize_zero_flux_is_noop() {
        let f = LiftedMap::double_twist_sine(1.0, 1.0, 0.0, 0.0);
        let r = rationalize_flux(&f, 5).unwrap();
        assert_eq!(r.epsilons, [0.0, 0.0]);
        assert_eq!(r.map, f);
    }

    #[test]
    fn nudge_moves_center_only() {
        let spec = NudgeSpec::new(TorusPoint::new(0.3, 0.6).unwrap(), TorusPoint::new(0.315, 0.613).unwrap(), 0.1);
        let g = local_nudge(spec, DEFAULT_NUDGE_STEPS).unwrap();
        let moved = g.evaluate_lift(&LiftPoint::new(0.3, 0.6)).unwrap();
        assert!((moved - LiftPoint::new(0.315, 0.613)).norm() < 1e-10);
        let far = LiftPoint::new(0.45, 0.6);
        assert_eq!(g.evaluate_lift(&far).unwrap(), far);
        let fv = flux_vector(&g).unwrap();
        assert!(fv.phi_a.min(1.0 - fv.phi_a) < 1e-9 && fv.phi_b.min(1.0 - fv.phi_b) < 1e-9);
    }

    #[test]
    fn nudge_precondition() {
        let spec = NudgeSpec::new(TorusPoint::new(0.3, 0.6).unwrap(), TorusPoint::new(0.38, 0.6).unwrap(), 0.1);
        assert!(matches!(local_nudge(spec, 32), Err(TangleError::Precondition(_))));
        let same = NudgeSpec::new(TorusPoint::new(0.3, 0.6).unwrap(), TorusPoint::new(0.3, 0.6).unwrap(), 0.1);
        assert!(local_nudge(same, 32).unwrap().is_identity());
    }

    #[test]
    fn nudge_field_jacobian_matches_differences() {
        let spec = NudgeSpec::new(TorusPoint::new(0.5, 0.5).unwrap(), TorusPoint::new(0.52, 0.49).unwrap(), 0.1);
        let field = NudgeField::new(&spec);
        let h = 1e-7;
        for &(x, y) in &[(0.57, 0.5), (0.5, 0.43), (0.55, 0.56), (0.44, 0.47)] {
            let z = LiftPoint::new(x, y);
            let a = field.velocity_jacobian(&z, 0.0);
            let dx = (field.velocity(&(z + LiftPoint::new(h, 0.0)), 0.0) - field.velocity(&(z - LiftPoint::new(h, 0.0)), 0.0)) / (2.0 * h);
            let dy = (field.velocity(&(z + LiftPoint::new(0.0, h)), 0.0) - field.velocity(&(z - LiftPoint::new(0.0, h)), 0.0)) / (2.0 * h);
            let fd = Matrix2::from_columns(&[dx, dy]);
            assert!((fd - a).amax() < 1e-5 * a.amax().max(1e-3), "{fd} vs {a}");
            assert!(a.trace().abs() < 1e-12);
        }
    }
}
