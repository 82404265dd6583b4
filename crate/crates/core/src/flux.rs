//! Flux across closed curves, the mean rotation vector, and the flux vector.
//!
//! Two independent routes are computed and cross-checked: the area swept
//! between a generator loop and its image, and the fundamental-domain
//! average of the lift displacement `F(z) − z`.
//!
//! Sign convention: `flux_across_curve(f, l)` is the area carried across `l`
//! from its right-hand side to its left-hand side. For the horizontal
//! generator a₁ (traversed in +x) this is upward transport. The flux vector
//! reports `phi_a` as the flux across a₁ and `phi_b` as the flux across b₁
//! measured left-to-right, so that `(phi_a, phi_b) ≡ (ry, rx) mod 1`.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Result, TangleError};
use crate::map::LiftedMap;
use crate::torus::{ClosedCurve, LiftPoint, CLASS_TOL};

/// Values within this distance of 1 are reported as 0 after reduction.
pub const MOD1_BAND: f64 = 1e-9;

pub const DEFAULT_CURVE_VERTICES: usize = 512;
pub const DEFAULT_ROTATION_GRID: usize = 512;
pub const DUALITY_TOL: f64 = 1e-6;

const SEGMENT_TOL: f64 = 1e-14;
const MAX_DEPTH: u32 = 40;
// integrated factors carry solver noise near 1e-13 that bisection cannot remove
const SEGMENT_TOL_INTEGRATED: f64 = 1e-11;
const MAX_DEPTH_INTEGRATED: u32 = 16;

// 5-point Gauss–Legendre on [0, 1]
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668_004,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_44,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSettings {
    /// Minimum number of vertices of a curve before it is mapped.
    pub curve_vertices: usize,
    /// Side of the midpoint grid used for the rotation vector.
    pub rotation_grid: usize,
    /// Coarser grid used for the Richardson-style consistency check.
    pub check_grid: usize,
    /// The rotation grid is doubled up to this size while the two grids
    /// differ by more than a quarter of `duality_tol`.
    pub max_rotation_grid: usize,
    pub duality_tol: f64,
}

impl Default for FluxSettings {
    fn default() -> Self {
        Self {
            curve_vertices: DEFAULT_CURVE_VERTICES,
            rotation_grid: DEFAULT_ROTATION_GRID,
            check_grid: DEFAULT_ROTATION_GRID / 2,
            max_rotation_grid: DEFAULT_ROTATION_GRID,
            duality_tol: DUALITY_TOL,
        }
    }
}

impl FluxSettings {
    /// Defaults, with coarser starting grids when the map contains
    /// numerically integrated factors.
    pub fn for_map(f: &LiftedMap) -> Self {
        if f.has_integrated_factors() {
            Self { curve_vertices: 64, rotation_grid: 64, check_grid: 32, ..Self::default() }
        } else {
            Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationVector {
    pub rx: f64,
    pub ry: f64,
}

/// Rotation vector with the difference against a coarser grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationEstimate {
    pub rotation: RotationVector,
    pub grid: usize,
    pub check_grid: usize,
    /// Max-norm difference between the two grids.
    pub grid_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxVector {
    pub phi_a: f64,
    pub phi_b: f64,
    /// Unreduced swept areas for the chosen lift; lift-dependent up to integers.
    pub representative: [f64; 2],
}

/// Both flux routes and their agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxReport {
    pub flux: FluxVector,
    pub rotation: RotationEstimate,
    pub method_agreement: bool,
    /// Largest mod-1 discrepancy between the two routes.
    pub discrepancy: f64,
}

/// Reduces to [0, 1), reporting values within [`MOD1_BAND`] of 1 as 0.
pub fn reduce_mod1(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 - MOD1_BAND {
        0.0
    } else {
        r
    }
}

/// Distance between two reals on R/Z.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = a - b;
    (d - d.round()).abs()
}

/// Signed representative of `v mod 1` in [−½, ½).
pub fn centered_mod1(v: f64) -> f64 {
    v - v.round()
}

/// ∫ (X − ox) dY along the image of the segment `a → b`, adaptively.
fn image_segment_integral(f: &LiftedMap, a: &LiftPoint, b: &LiftPoint, ox: f64) -> Result<f64> {
    let d = b - a;
    let (seg_tol, max_depth) = if f.has_integrated_factors() {
        (SEGMENT_TOL_INTEGRATED, MAX_DEPTH_INTEGRATED)
    } else {
        (SEGMENT_TOL, MAX_DEPTH)
    };
    let gl = |s0: f64, s1: f64| -> Result<f64> {
        let w = s1 - s0;
        let mut acc = 0.0;
        for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            let p = a + d * (s0 + w * node);
            let (img, j) = f.evaluate_with_jacobian(&p)?;
            let dy = (j * d).y;
            acc += weight * (img.x - ox) * dy;
        }
        Ok(acc * w)
    };
    // explicit stack to avoid deep recursion on folded images
    let mut total = 0.0;
    let mut stack = vec![(0.0, 1.0, gl(0.0, 1.0)?, 0u32)];
    while let Some((s0, s1, whole, depth)) = stack.pop() {
        let mid = 0.5 * (s0 + s1);
        let left = gl(s0, mid)?;
        let right = gl(mid, s1)?;
        let tol = seg_tol * (s1 - s0).max(1e-6);
        if (left + right - whole).abs() <= tol.max(1e-16 * whole.abs()) || depth >= max_depth {
            total += left + right;
        } else {
            stack.push((mid, s1, right, depth + 1));
            stack.push((s0, mid, left, depth + 1));
        }
    }
    Ok(total)
}

fn straight_integral(a: &LiftPoint, b: &LiftPoint, ox: f64) -> f64 {
    0.5 * ((a.x - ox) + (b.x - ox)) * (b.y - a.y)
}

/// Area enclosed by `l − f(l)` with straight connectors between
/// corresponding endpoints, without reduction.
pub fn swept_area(f: &LiftedMap, l: &ClosedCurve, n_refine: usize) -> Result<f64> {
    let curve = l.refined(n_refine.max(2));
    let v = curve.vertices();
    let first = v[0];
    let last = v[v.len() - 1];
    let f_first = f.evaluate_lift(&first)?;
    let f_last = f.evaluate_lift(&last)?;
    let class = curve.class().as_lift();
    let image_disp = f_last - f_first;
    if (image_disp - class).amax() > CLASS_TOL {
        return Err(TangleError::ClassMismatch {
            dx: image_disp.x,
            dy: image_disp.y,
            m: curve.class().m,
            n: curve.class().n,
        });
    }
    let ox = first.x;
    let along_curve: f64 = v.windows(2).map(|w| straight_integral(&w[0], &w[1], ox)).sum();
    let segments: Vec<(LiftPoint, LiftPoint)> = v.windows(2).map(|w| (w[0], w[1])).collect();
    let pieces = map_segments(&segments, |(a, b)| image_segment_integral(f, a, b, ox))?;
    let along_image = pairwise_sum(&pieces);
    Ok(along_curve + straight_integral(&last, &f_last, ox) - along_image + straight_integral(&f_first, &first, ox))
}

#[cfg(feature = "parallel")]
fn map_segments<T: Sync, F>(items: &[T], op: F) -> Result<Vec<f64>>
where
    F: Fn(&T) -> Result<f64> + Sync + Send,
{
    items.par_iter().map(op).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_segments<T, F>(items: &[T], op: F) -> Result<Vec<f64>>
where
    F: Fn(&T) -> Result<f64>,
{
    items.iter().map(op).collect()
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Flux across `l`, reduced mod 1.
pub fn flux_across_curve(f: &LiftedMap, l: &ClosedCurve, n_refine: usize) -> Result<f64> {
    Ok(reduce_mod1(swept_area(f, l, n_refine)?))
}

/// Fundamental-domain average of `F(z) − z` on a `grid_n × grid_n`
/// midpoint grid.
pub fn mean_rotation_vector(f: &LiftedMap, grid_n: usize) -> Result<RotationVector> {
    if grid_n < 2 {
        return Err(TangleError::InvalidParameter("rotation grid must be at least 2".into()));
    }
    let h = 1.0 / grid_n as f64;
    let rows: Vec<usize> = (0..grid_n).collect();
    let row_sum = |i: &usize| -> Result<(f64, f64)> {
        let y = (*i as f64 + 0.5) * h;
        let mut dx = Vec::with_capacity(grid_n);
        let mut dy = Vec::with_capacity(grid_n);
        for j in 0..grid_n {
            let z = LiftPoint::new((j as f64 + 0.5) * h, y);
            let d = f.evaluate_lift(&z)? - z;
            dx.push(d.x);
            dy.push(d.y);
        }
        Ok((pairwise_sum(&dx), pairwise_sum(&dy)))
    };
    #[cfg(feature = "parallel")]
    let sums: Vec<(f64, f64)> = rows.par_iter().map(row_sum).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let sums: Vec<(f64, f64)> = rows.iter().map(row_sum).collect::<Result<_>>()?;
    let sx: Vec<f64> = sums.iter().map(|s| s.0).collect();
    let sy: Vec<f64> = sums.iter().map(|s| s.1).collect();
    let n2 = (grid_n * grid_n) as f64;
    Ok(RotationVector { rx: pairwise_sum(&sx) / n2, ry: pairwise_sum(&sy) / n2 })
}

/// Rotation vector on `grid` with a consistency check on `check_grid`.
pub fn rotation_estimate(f: &LiftedMap, grid: usize, check_grid: usize) -> Result<RotationEstimate> {
    let fine = mean_rotation_vector(f, grid)?;
    let coarse = mean_rotation_vector(f, check_grid)?;
    let grid_delta = (fine.rx - coarse.rx).abs().max((fine.ry - coarse.ry).abs());
    Ok(RotationEstimate { rotation: fine, grid, check_grid, grid_delta })
}

/// Swept-area flux vector and rotation vector, with their agreement.
pub fn flux_report(f: &LiftedMap, settings: &FluxSettings) -> Result<FluxReport> {
    let area_a = swept_area(f, &ClosedCurve::generator_a(), settings.curve_vertices)?;
    let area_b = -swept_area(f, &ClosedCurve::generator_b(), settings.curve_vertices)?;
    let flux = FluxVector { phi_a: reduce_mod1(area_a), phi_b: reduce_mod1(area_b), representative: [area_a, area_b] };
    let mut rotation = rotation_estimate(f, settings.rotation_grid, settings.check_grid)?;
    while rotation.grid_delta > 0.25 * settings.duality_tol && rotation.grid < settings.max_rotation_grid {
        let grid = rotation.grid * 2;
        let fine = mean_rotation_vector(f, grid)?;
        let grid_delta = (fine.rx - rotation.rotation.rx).abs().max((fine.ry - rotation.rotation.ry).abs());
        rotation = RotationEstimate { rotation: fine, grid, check_grid: rotation.grid, grid_delta };
    }
    let discrepancy = circular_distance(flux.phi_a, rotation.rotation.ry)
        .max(circular_distance(flux.phi_b, rotation.rotation.rx));
    Ok(FluxReport { flux, rotation, method_agreement: discrepancy <= settings.duality_tol, discrepancy })
}

/// Flux vector with default settings for `f`; errors if the two routes disagree.
pub fn flux_vector(f: &LiftedMap) -> Result<FluxVector> {
    flux_vector_with(f, &FluxSettings::for_map(f))
}

pub fn flux_vector_with(f: &LiftedMap, settings: &FluxSettings) -> Result<FluxVector> {
    let report = flux_report(f, settings)?;
    if !report.method_agreement {
        return Err(TangleError::DualityMismatch {
            phi_a: report.flux.phi_a,
            phi_b: report.flux.phi_b,
            rx: report.rotation.rotation.rx,
            ry: report.rotation.rotation.ry,
        });
    }
    Ok(report.flux)
}

/// Mod-1 distance between two flux vectors.
pub fn flux_distance(a: &FluxVector, b: &FluxVector) -> f64 {
    circular_distance(a.phi_a, b.phi_a).max(circular_distance(a.phi_b, b.phi_b))
}
