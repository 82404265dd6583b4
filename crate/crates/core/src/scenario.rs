//! Scenario documents: a map (or Hamiltonian), a list of operations and an
//! output directory. Running one writes `summary.json` and per-stage CSVs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::error::TangleError;
use crate::flux::{centered_mod1, flux_report, FluxSettings};
use crate::hamiltonian::{stroboscopic_map, HamiltonianSpec, DEFAULT_STEPS};
use crate::io;
use crate::manifold::{branch_invariance_residual, grow_all_branches, BranchKind, BranchSign, GrowthSettings, ManifoldBranch};
use crate::map::{audit_map, LiftedMap, MapExpr};
use crate::orbits::{find_periodic_orbits, PeriodicOrbit, DEFAULT_ROOT_TOL};
use crate::perturb::{local_nudge, rationalize_flux_with, NudgeSpec, DEFAULT_NUDGE_STEPS, DEFAULT_TUBE_HALF_WIDTH};
use crate::tangle::{accumulation_report, find_crossings, wedge_entries, WedgeRegion};
use crate::torus::{torus_distance, LatticeVector, LiftPoint, TorusPoint};

/// Crossings at a larger angle than this count as transversal in summaries.
pub const TRANSVERSAL_ANGLE: f64 = 1e-3;

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[("zero_flux_tangle", include_str!("../data/zero_flux_tangle.json"))];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Inline map descriptor.
    #[serde(default)]
    pub map: Option<MapExpr>,
    /// Map document, relative to the scenario file.
    #[serde(default)]
    pub map_file: Option<PathBuf>,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianSpec>,
    #[serde(default)]
    pub hamiltonian_file: Option<PathBuf>,
    #[serde(default = "default_steps")]
    pub hamiltonian_steps: u32,
    #[serde(default)]
    pub operations: Vec<Operation>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_steps() -> u32 {
    DEFAULT_STEPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_root_tol")]
    pub root: f64,
    #[serde(default = "default_duality_tol")]
    pub duality: f64,
    #[serde(default)]
    pub max_spacing: Option<f64>,
    #[serde(default)]
    pub max_turn: Option<f64>,
}

fn default_root_tol() -> f64 {
    DEFAULT_ROOT_TOL
}

fn default_duality_tol() -> f64 {
    crate::flux::DUALITY_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { root: default_root_tol(), duality: default_duality_tol(), max_spacing: None, max_turn: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    #[default]
    Eigen,
    Adapted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Operation {
    Flux {
        /// Random points for the equivariance and determinant audit.
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Orbits {
        #[serde(default = "one")]
        period: u32,
        #[serde(default, rename = "type")]
        lattice_type: [i64; 2],
        #[serde(default = "default_grid")]
        grid: usize,
    },
    Manifold {
        #[serde(default)]
        orbit_index: usize,
        #[serde(default = "default_length")]
        length: f64,
    },
    Tangle {
        #[serde(default = "plus")]
        unstable: BranchSign,
        #[serde(default = "plus")]
        stable: BranchSign,
        #[serde(default = "default_exclude")]
        exclude: f64,
        #[serde(default)]
        accumulation_radius: Option<f64>,
    },
    Wedge {
        eta: f64,
        delta: f64,
        #[serde(default = "plus")]
        sign: BranchSign,
        #[serde(default)]
        chart: ChartKind,
        #[serde(default)]
        class_filter: Option<[i64; 2]>,
    },
    Perturb(PerturbOp),
    HamiltonianAudit {
        #[serde(default = "default_steps")]
        steps: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbOp {
    Rationalize {
        denominator: u32,
        #[serde(default = "default_half_width")]
        half_width: f64,
    },
    Nudge {
        center: [f64; 2],
        target: [f64; 2],
        radius: f64,
        #[serde(default = "default_nudge_steps")]
        steps: u32,
    },
}

fn default_samples() -> usize {
    100
}
fn one() -> u32 {
    1
}
fn default_grid() -> usize {
    16
}
fn default_length() -> f64 {
    30.0
}
fn plus() -> BranchSign {
    BranchSign::Plus
}
fn default_exclude() -> f64 {
    1e-3
}
fn default_half_width() -> f64 {
    DEFAULT_TUBE_HALF_WIDTH
}
fn default_nudge_steps() -> u32 {
    DEFAULT_NUDGE_STEPS
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Flux { .. } => "flux",
            Operation::Orbits { .. } => "orbits",
            Operation::Manifold { .. } => "manifold",
            Operation::Tangle { .. } => "tangle",
            Operation::Wedge { .. } => "wedge",
            Operation::Perturb(_) => "perturb",
            Operation::HamiltonianAudit { .. } => "hamiltonian-audit",
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {index} ({stage}) failed: {source}")]
    Stage {
        index: usize,
        stage: &'static str,
        #[source]
        source: TangleError,
    },
}

impl ScenarioError {
    /// 2 for configuration errors, 1 for a failed stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Stage { .. } => 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks sources and the stage order without running anything.
    pub fn validate(&self, base_dir: &Path) -> Result<(), ScenarioError> {
        if self.map.is_some() && self.map_file.is_some() {
            return Err(config_err("give either map or map_file, not both"));
        }
        if self.hamiltonian.is_some() && self.hamiltonian_file.is_some() {
            return Err(config_err("give either hamiltonian or hamiltonian_file, not both"));
        }
        for p in self.map_file.iter().chain(&self.hamiltonian_file) {
            let full = base_dir.join(p);
            if !full.is_file() {
                return Err(config_err(format!("file not found: {}", full.display())));
            }
        }
        if self.hamiltonian_steps == 0 {
            return Err(config_err("hamiltonian_steps must be positive"));
        }
        let has_h = self.hamiltonian.is_some() || self.hamiltonian_file.is_some();
        let has_map = has_h || self.map.is_some() || self.map_file.is_some();
        let (mut orbits, mut branches) = (false, false);
        for (i, op) in self.operations.iter().enumerate() {
            let need = |ok: bool, what: &str| {
                if ok {
                    Ok(())
                } else {
                    Err(config_err(format!("operation {i} ({}) needs {what}", op.name())))
                }
            };
            match op {
                Operation::HamiltonianAudit { .. } => need(has_h, "a hamiltonian")?,
                _ => need(has_map, "a map or hamiltonian")?,
            }
            match op {
                Operation::Orbits { .. } => orbits = true,
                Operation::Manifold { .. } => {
                    need(orbits, "an earlier orbits operation")?;
                    branches = true;
                }
                Operation::Tangle { .. } | Operation::Wedge { .. } => {
                    need(branches, "an earlier manifold operation")?
                }
                Operation::Perturb(_) => {
                    // later stages see the perturbed map, so earlier results are stale
                    orbits = false;
                    branches = false;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub op: &'static str,
    pub status: &'static str,
    pub result: Value,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: Option<String>,
    pub seed: u64,
    pub timestamp: u64,
    pub status: &'static str,
    pub stages: Vec<StageRecord>,
}

struct State {
    map: LiftedMap,
    hamiltonian: Option<HamiltonianSpec>,
    orbits: Vec<PeriodicOrbit>,
    /// The orbit the branches belong to and `[u+, u−, s+, s−]`.
    branches: Option<(usize, Vec<ManifoldBranch>)>,
}

struct Stage<'a> {
    index: usize,
    out: &'a Path,
    artifacts: Vec<String>,
}

impl Stage<'_> {
    fn write(&mut self, suffix: &str, contents: &str) -> crate::Result<()> {
        let name = format!("{:02}-{suffix}", self.index);
        io::write_text(&self.out.join(&name), contents)?;
        self.artifacts.push(name);
        Ok(())
    }
}

fn to_value<T: Serialize>(v: &T) -> crate::Result<Value> {
    serde_json::to_value(v).map_err(|e| TangleError::parse("summary", e))
}

fn branch_label(b: &ManifoldBranch) -> String {
    format!("{}{}", b.kind, b.sign)
}

fn pick(branches: &[ManifoldBranch], kind: BranchKind, sign: BranchSign) -> &ManifoldBranch {
    branches.iter().find(|b| b.kind == kind && b.sign == sign).expect("all four branches are grown")
}

fn growth_settings(tol: &Tolerances, length: f64) -> GrowthSettings {
    let mut s = GrowthSettings::with_length(length);
    if let Some(v) = tol.max_spacing {
        s.max_spacing = v;
    }
    if let Some(v) = tol.max_turn {
        s.max_turn = v;
    }
    s
}

fn run_op(op: &Operation, cfg: &ScenarioConfig, st: &mut State, stage: &mut Stage) -> crate::Result<Value> {
    let tol = &cfg.tolerances;
    match op {
        Operation::Flux { samples } => {
            let settings = FluxSettings { duality_tol: tol.duality, ..FluxSettings::for_map(&st.map) };
            let report = flux_report(&st.map, &settings)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(stage.index as u64));
            let pts: Vec<(LiftPoint, LatticeVector)> = (0..*samples)
                .map(|_| {
                    let z = LiftPoint::new(rng.gen::<f64>(), rng.gen::<f64>());
                    (z, LatticeVector::new(rng.gen_range(-3..=3), rng.gen_range(-3..=3)))
                })
                .collect();
            let audit = audit_map(&st.map, &pts)?;
            Ok(json!({
                "phi_a": report.flux.phi_a,
                "phi_b": report.flux.phi_b,
                "rotation": [report.rotation.rotation.rx, report.rotation.rotation.ry],
                "method_agreement": report.method_agreement,
                "discrepancy": report.discrepancy,
                "representative": report.flux.representative,
                "audit": to_value(&audit)?,
            }))
        }
        Operation::Orbits { period, lattice_type, grid } => {
            let m = LatticeVector::new(lattice_type[0], lattice_type[1]);
            st.orbits = find_periodic_orbits(&st.map, *period, m, *grid, tol.root)?;
            st.branches = None;
            let mut csv = String::from("base_x,base_y,period,type_m,type_n,residual,trace,class\n");
            for o in &st.orbits {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{:?}\n",
                    io::fmt_f64(o.base.x()),
                    io::fmt_f64(o.base.y()),
                    o.period,
                    o.lattice_type.m,
                    o.lattice_type.n,
                    io::fmt_f64(o.residual),
                    io::fmt_f64(o.trace),
                    o.class
                ));
            }
            stage.write("orbits.csv", &csv)?;
            Ok(json!({ "count": st.orbits.len(), "orbits": to_value(&st.orbits)? }))
        }
        Operation::Manifold { orbit_index, length } => {
            let orbit = st.orbits.get(*orbit_index).ok_or_else(|| {
                TangleError::InvalidParameter(format!("orbit index {orbit_index} out of range ({} orbits)", st.orbits.len()))
            })?;
            let branches = grow_all_branches(orbit, &growth_settings(tol, *length), &st.map)?;
            let mut rows = Vec::new();
            for b in &branches {
                let label = branch_label(b);
                stage.write(&format!("branch-{}.csv", label.replace('+', "plus").replace('-', "minus")), &io::branch_csv(b))?;
                let r = branch_invariance_residual(b, &st.map)?;
                rows.push(json!({
                    "branch": label,
                    "vertices": b.polyline.len(),
                    "length": b.length(),
                    "domains": b.domain_starts.len(),
                    "status": to_value(&b.status)?,
                    "unresolved_segments": b.unresolved_segments,
                    "invariance_residual": r.value,
                    "residual_vacuous": r.vacuous,
                }));
            }
            st.branches = Some((*orbit_index, branches));
            Ok(json!({ "orbit_index": orbit_index, "branches": rows }))
        }
        Operation::Tangle { unstable, stable, exclude, accumulation_radius } => {
            let (orbit_index, branches) = st.branches.as_ref().expect("validated");
            let bu = pick(branches, BranchKind::Unstable, *unstable);
            let bs = pick(branches, BranchKind::Stable, *stable);
            let report = find_crossings(bu, bs, *exclude)?;
            stage.write("crossings.csv", &io::crossings_csv(&report.crossings))?;
            let angles = report.crossings.iter().map(|c| c.angle);
            let mut out = json!({
                "orbit_index": orbit_index,
                "unstable": branch_label(bu),
                "stable": branch_label(bs),
                "crossings": report.crossings.len(),
                "transversal": report.transversal_count(TRANSVERSAL_ANGLE),
                "suspects": report.suspects.len(),
                "max_angle": angles.clone().fold(0.0, f64::max),
                "first": report.crossings.first().map(to_value).transpose()?,
            });
            if let Some(r) = accumulation_radius {
                out["accumulation"] = to_value(&accumulation_report(branches, *r)?)?;
            }
            Ok(out)
        }
        Operation::Wedge { eta, delta, sign, chart, class_filter } => {
            let (_, branches) = st.branches.as_ref().expect("validated");
            let bu = pick(branches, BranchKind::Unstable, *sign);
            let orbit = &bu.orbit;
            let w = match chart {
                ChartKind::Eigen => WedgeRegion::new(orbit, *eta, *delta)?,
                ChartKind::Adapted => WedgeRegion::adapted(orbit, branches, *eta, *delta)?,
            };
            let filter = class_filter.map(|c| LatticeVector::new(c[0], c[1]));
            let seq = wedge_entries(bu, &w, filter)?;
            stage.write("entries.csv", &io::entries_csv(&seq))?;
            Ok(json!({
                "branch": branch_label(bu),
                "count": seq.entries.len(),
                "chart_x": seq.chart_x(),
                "strictly_decreasing": seq.strictly_decreasing_x(),
                "single_class": seq.single_class(),
                "decay_ratio": seq.decay_ratio(),
                "filtered_out": seq.filtered_out,
                "diagnostic": seq.diagnostic,
            }))
        }
        Operation::Perturb(PerturbOp::Rationalize { denominator, half_width }) => {
            let settings = FluxSettings { duality_tol: tol.duality, ..FluxSettings::for_map(&st.map) };
            let r = rationalize_flux_with(&st.map, *denominator, *half_width, &settings)?;
            stage.write("map.json", &io::to_json_pretty(&r.map)?)?;
            st.map = r.map.clone();
            st.orbits.clear();
            st.branches = None;
            Ok(json!({ "target": r.target, "flux": [r.flux.phi_a, r.flux.phi_b], "epsilons": r.epsilons }))
        }
        Operation::Perturb(PerturbOp::Nudge { center, target, radius, steps }) => {
            let spec = NudgeSpec::new(TorusPoint::new(center[0], center[1])?, TorusPoint::new(target[0], target[1])?, *radius);
            let nudge = local_nudge(spec, *steps)?;
            let moved = nudge.evaluate_lift(&spec.center.lift())?;
            let hit = torus_distance(&moved, &spec.target.lift());
            let composed = LiftedMap::compose(&nudge, &st.map);
            // orbits whose points all avoid the support must survive unchanged
            let mut shifts = Vec::new();
            for o in &st.orbits {
                let clear = o.points.iter().all(|p| p.distance(&spec.center) >= *radius);
                if clear {
                    let mut worst: f64 = 0.0;
                    for p in &o.points {
                        let a = st.map.evaluate_lift(&p.lift())?;
                        let b = composed.evaluate_lift(&p.lift())?;
                        worst = worst.max((a - b).amax());
                    }
                    shifts.push(worst);
                }
            }
            stage.write("map.json", &io::to_json_pretty(&composed)?)?;
            st.map = composed;
            st.orbits.clear();
            st.branches = None;
            Ok(json!({ "target_error": hit, "off_support_orbits": shifts.len(), "off_support_shift": shifts.iter().cloned().fold(0.0, f64::max) }))
        }
        Operation::HamiltonianAudit { steps } => {
            let h = st.hamiltonian.as_ref().expect("validated");
            let norm = |steps: u32| -> crate::Result<f64> {
                let f = stroboscopic_map(h, steps)?;
                let r = flux_report(&f, &FluxSettings::for_map(&f))?;
                Ok(centered_mod1(r.flux.phi_a).hypot(centered_mod1(r.flux.phi_b)))
            };
            let (coarse, fine) = (norm(*steps)?, norm(2 * steps)?);
            Ok(json!({ "steps": steps, "flux_norm": coarse, "flux_norm_doubled": fine, "decreases": fine <= coarse }))
        }
    }
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Validates and runs a scenario. Relative file references resolve against
/// `base_dir`; `out` overrides the configured output directory. The summary
/// is written even when a stage fails.
pub fn run_scenario(cfg: &ScenarioConfig, base_dir: &Path, out: Option<&Path>) -> Result<Summary, ScenarioError> {
    cfg.validate(base_dir)?;
    let out_dir = match (out, &cfg.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => base_dir.join(d),
        (None, None) => base_dir.join("out"),
    };
    let load_err = |e: TangleError| config_err(e.to_string());
    let hamiltonian = match (&cfg.hamiltonian, &cfg.hamiltonian_file) {
        (Some(h), _) => Some(h.clone()),
        (None, Some(p)) => Some(io::load_hamiltonian(&base_dir.join(p)).map_err(load_err)?),
        (None, None) => None,
    };
    let map = match (&cfg.map, &cfg.map_file, &hamiltonian) {
        (Some(e), _, _) => LiftedMap::try_from_expr(e.clone()).map_err(load_err)?,
        (None, Some(p), _) => io::load_map(&base_dir.join(p)).map_err(load_err)?,
        (None, None, Some(h)) => stroboscopic_map(h, cfg.hamiltonian_steps).map_err(load_err)?,
        (None, None, None) => LiftedMap::identity(),
    };
    let mut st = State { map, hamiltonian, orbits: Vec::new(), branches: None };
    let mut summary =
        Summary { scenario: cfg.name.clone(), seed: cfg.seed, timestamp: now(), status: "ok", stages: Vec::new() };
    let mut failure = None;
    for (index, op) in cfg.operations.iter().enumerate() {
        let mut stage = Stage { index, out: &out_dir, artifacts: Vec::new() };
        let outcome = run_op(op, cfg, &mut st, &mut stage);
        let (status, result, error) = match outcome {
            Ok(v) => ("ok", v, None),
            Err(e) => ("error", Value::Null, Some(e)),
        };
        summary.stages.push(StageRecord {
            index,
            op: op.name(),
            status,
            result,
            artifacts: stage.artifacts,
            error: error.as_ref().map(|e| e.to_string()),
        });
        if let Some(source) = error {
            summary.status = "failed";
            failure = Some(ScenarioError::Stage { index, stage: op.name(), source });
            break;
        }
    }
    let text = io::to_json_pretty(&summary).map_err(|e| ScenarioError::Stage { index: usize::MAX, stage: "summary", source: e })?;
    io::write_text(&out_dir.join("summary.json"), &text)
        .map_err(|e| ScenarioError::Stage { index: cfg.operations.len(), stage: "summary", source: e })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}
