//! Browser bindings for a handful of tanglekit operations on the double
//! twist map. Every export returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tanglekit::torus::reduce;
use tanglekit::{
    find_periodic_orbits, flux_report, grow_branch, BranchKind, BranchSign, FluxSettings, GrowthSettings,
    LatticeVector, LiftedMap, OrbitClass, Result,
};

/// Cap on the polyline handed to the page; longer branches are thinned.
const MAX_POINTS: usize = 20_000;

fn twist(k: f64, l: f64, mean_p: f64, mean_q: f64) -> LiftedMap {
    LiftedMap::double_twist_sine(k, l, mean_p, mean_q)
}

#[derive(Serialize)]
struct FluxOut {
    phi_a: f64,
    phi_b: f64,
    rotation: [f64; 2],
    discrepancy: f64,
}

#[derive(Serialize)]
struct OrbitOut {
    x: f64,
    y: f64,
    hyperbolic: bool,
    trace: f64,
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    tanglekit::io::to_json(v)
}

pub fn flux_json(k: f64, l: f64, mean_p: f64, mean_q: f64) -> Result<String> {
    let f = twist(k, l, mean_p, mean_q);
    let settings = FluxSettings { curve_vertices: 256, rotation_grid: 128, check_grid: 64, ..FluxSettings::default() };
    let r = flux_report(&f, &settings)?;
    to_json(&FluxOut {
        phi_a: r.flux.phi_a,
        phi_b: r.flux.phi_b,
        rotation: [r.rotation.rotation.rx, r.rotation.rotation.ry],
        discrepancy: r.discrepancy,
    })
}

pub fn fixed_points_json(k: f64, l: f64, mean_p: f64, mean_q: f64, period: u32) -> Result<String> {
    let f = twist(k, l, mean_p, mean_q);
    let orbits = find_periodic_orbits(&f, period, LatticeVector::ZERO, 12, 1e-12)?;
    let out: Vec<OrbitOut> = orbits
        .iter()
        .flat_map(|o| {
            o.points.iter().map(move |p| OrbitOut {
                x: p.x(),
                y: p.y(),
                hyperbolic: o.class == OrbitClass::Hyperbolic,
                trace: o.trace,
            })
        })
        .collect();
    to_json(&out)
}

/// Unstable (or stable) branch of the first hyperbolic fixed point, as
/// points on the unit square; consecutive points more than ½ apart
/// straddle a wrap.
pub fn branch_json(k: f64, l: f64, mean_p: f64, mean_q: f64, unstable: bool, length: f64) -> Result<String> {
    let f = twist(k, l, mean_p, mean_q);
    let orbits = find_periodic_orbits(&f, 1, LatticeVector::ZERO, 12, 1e-12)?;
    let Some(o) = orbits.into_iter().find(|o| o.class == OrbitClass::Hyperbolic) else {
        return Ok("[]".into());
    };
    let kind = if unstable { BranchKind::Unstable } else { BranchKind::Stable };
    let b = grow_branch(&o, kind, BranchSign::Plus, &GrowthSettings::with_length(length.min(20.0)), &f)?;
    let stride = b.polyline.len().div_ceil(MAX_POINTS).max(1);
    let mut pts = Vec::with_capacity(b.polyline.len() / stride + 1);
    for (i, z) in b.polyline.iter().enumerate() {
        if i % stride == 0 || i + 1 == b.polyline.len() {
            let t = reduce(z)?;
            pts.push([t.x(), t.y()]);
        }
    }
    to_json(&pts)
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// `{phi_a, phi_b, rotation, discrepancy}` of the double twist with
/// amplitudes `k`, `l` and drifts `mean_p`, `mean_q`.
#[wasm_bindgen]
pub fn flux(k: f64, l: f64, mean_p: f64, mean_q: f64) -> std::result::Result<String, JsError> {
    js(flux_json(k, l, mean_p, mean_q))
}

#[wasm_bindgen]
pub fn periodic_points(k: f64, l: f64, mean_p: f64, mean_q: f64, period: u32) -> std::result::Result<String, JsError> {
    js(fixed_points_json(k, l, mean_p, mean_q, period))
}

#[wasm_bindgen]
pub fn manifold(k: f64, l: f64, mean_p: f64, mean_q: f64, unstable: bool, length: f64) -> std::result::Result<String, JsError> {
    js(branch_json(k, l, mean_p, mean_q, unstable, length))
}
