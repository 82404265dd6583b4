use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use tanglekit::flux::{centered_mod1, flux_across_curve, flux_report, rotation_estimate, FluxSettings};
use tanglekit::hamiltonian::{HamiltonianSpec, DEFAULT_STEPS};
use tanglekit::io;
use tanglekit::manifold::{branch_invariance_residual, grow_all_branches, grow_branch};
use tanglekit::map::audit_map;
use tanglekit::orbits::{find_periodic_orbits, PeriodicOrbit, DEFAULT_ROOT_TOL};
use tanglekit::perturb::{local_nudge, rationalize_flux_with, DEFAULT_NUDGE_STEPS, DEFAULT_TUBE_HALF_WIDTH};
use tanglekit::scenario::{self, ScenarioConfig, TRANSVERSAL_ANGLE};
use tanglekit::tangle::{find_crossings, wedge_entries, WedgeRegion};
use tanglekit::{
    stroboscopic_map, BranchKind, BranchSign, GrowthSettings, LatticeVector, LiftPoint, LiftedMap, NudgeSpec,
    ScenarioError, TangleError, TorusPoint,
};

#[derive(Parser)]
#[command(name = "tanglekit", version, about = "Flux, periodic orbits and homoclinic tangles of torus maps")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Map descriptor (JSON).
    #[arg(long, global = true, conflicts_with = "hamiltonian")]
    map: Option<PathBuf>,
    /// Hamiltonian (JSON); its time-1 map is used as the map.
    #[arg(long, global = true)]
    hamiltonian: Option<PathBuf>,
    /// Integrator steps per unit time for Hamiltonian maps.
    #[arg(long, global = true, default_value_t = DEFAULT_STEPS)]
    steps: u32,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Root tolerance for periodic orbits.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Flux vector by swept area, checked against the rotation vector.
    Flux {
        /// Also report the flux across this curve (CSV).
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        vertices: usize,
    },
    /// Mean rotation vector on a midpoint grid.
    Rotation {
        #[arg(long, default_value_t = 512)]
        grid: usize,
    },
    /// Periodic orbits with F^k(z) = z + m.
    Orbits(OrbitArgs),
    /// Grow one manifold branch and write it as CSV.
    Manifold {
        #[command(flatten)]
        orbit: OrbitArgs,
        #[arg(long, default_value_t = 0)]
        orbit_index: usize,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum, default_value = "+")]
        sign: SignArg,
        #[arg(long = "Lmax", default_value_t = 50.0)]
        l_max: f64,
    },
    /// Crossings between an unstable and a stable branch.
    Tangle {
        #[command(flatten)]
        orbit: OrbitArgs,
        #[arg(long, default_value_t = 0)]
        orbit_index: usize,
        #[arg(long = "Lmax", default_value_t = 30.0)]
        l_max: f64,
        #[arg(long, default_value_t = 1e-3)]
        exclude: f64,
        #[arg(long, value_enum, default_value = "+")]
        unstable_sign: SignArg,
        #[arg(long, value_enum, default_value = "+")]
        stable_sign: SignArg,
    },
    /// Entries of an unstable branch into the wedge region.
    Wedge {
        #[command(flatten)]
        orbit: OrbitArgs,
        #[arg(long, default_value_t = 0)]
        orbit_index: usize,
        #[arg(long = "Lmax", default_value_t = 40.0)]
        l_max: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value = "+")]
        sign: SignArg,
        /// Straighten the chart with the local manifolds.
        #[arg(long)]
        adapted: bool,
        /// Keep only entries of this loop class, as `m,n`.
        #[arg(long, value_parser = parse_pair_i64, allow_hyphen_values = true)]
        class: Option<(i64, i64)>,
    },
    /// Constructive perturbations.
    Perturb {
        #[command(subcommand)]
        action: PerturbAction,
    },
    /// Zero-flux audit of a Hamiltonian's time-1 map.
    Hamiltonian {
        /// Audit a builtin instead of `--hamiltonian`.
        #[arg(long)]
        builtin: Option<String>,
    },
    /// Run a scenario file, or a bundled scenario by name.
    Scenario {
        scenario: Option<String>,
        /// List bundled scenarios.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Subcommand)]
enum PerturbAction {
    /// Compose with flux tuners so the flux becomes rational.
    Rationalize {
        #[arg(long)]
        denominator: u32,
        #[arg(long, default_value_t = DEFAULT_TUBE_HALF_WIDTH)]
        half_width: f64,
    },
    /// A compactly supported nudge carrying `center` to `target`.
    Nudge {
        #[arg(long, value_parser = parse_pair_f64, allow_hyphen_values = true)]
        center: (f64, f64),
        #[arg(long, value_parser = parse_pair_f64, allow_hyphen_values = true)]
        target: (f64, f64),
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_NUDGE_STEPS)]
        nudge_steps: u32,
    },
}

#[derive(Args)]
struct OrbitArgs {
    #[arg(long, default_value_t = 1)]
    period: u32,
    /// Lattice type `m,n`.
    #[arg(long = "type", value_parser = parse_pair_i64, allow_hyphen_values = true, default_value = "0,0")]
    lattice_type: (i64, i64),
    /// Seeds per side of the search grid.
    #[arg(long, default_value_t = 16)]
    grid: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    U,
    S,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    #[value(name = "+", alias = "plus")]
    Plus,
    #[value(name = "-", alias = "minus")]
    Minus,
}

impl From<SignArg> for BranchSign {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Plus => BranchSign::Plus,
            SignArg::Minus => BranchSign::Minus,
        }
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("bad number `{v}`"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_pair_i64(s: &str) -> Result<(i64, i64), String> {
    parse_pair(s)
}

fn parse_pair_f64(s: &str) -> Result<(f64, f64), String> {
    parse_pair(s)
}

/// Errors that should exit with status 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn load_err(e: TangleError) -> anyhow::Error {
    match e {
        TangleError::Io { .. } | TangleError::Parse { .. } | TangleError::InvalidParameter(_) => config(e.to_string()),
        other => other.into(),
    }
}

impl Global {
    fn hamiltonian_spec(&self) -> anyhow::Result<Option<HamiltonianSpec>> {
        self.hamiltonian.as_deref().map(io::load_hamiltonian).transpose().map_err(load_err)
    }

    fn load_map(&self) -> anyhow::Result<LiftedMap> {
        if let Some(p) = &self.map {
            return io::load_map(p).map_err(load_err);
        }
        match self.hamiltonian_spec()? {
            Some(h) => stroboscopic_map(&h, self.steps).map_err(load_err),
            None => Err(config("a map is required: pass --map <file> or --hamiltonian <file>")),
        }
    }

    fn root_tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_ROOT_TOL)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.out_dir().join(name);
        io::write_text(&path, contents)?;
        Ok(path)
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    print!("{}", io::to_json_pretty(v)?);
    Ok(())
}

fn select_orbit(g: &Global, f: &LiftedMap, args: &OrbitArgs, index: usize) -> anyhow::Result<PeriodicOrbit> {
    let m = LatticeVector::new(args.lattice_type.0, args.lattice_type.1);
    let orbits = find_periodic_orbits(f, args.period, m, args.grid, g.root_tol())?;
    let n = orbits.len();
    orbits.into_iter().nth(index).ok_or_else(|| anyhow!("orbit index {index} out of range ({n} orbits found)"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Flux { curve, vertices } => {
            let f = g.load_map()?;
            let settings = FluxSettings { curve_vertices: *vertices, ..FluxSettings::for_map(&f) };
            let r = flux_report(&f, &settings)?;
            let mut out = json!({
                "phi_a": r.flux.phi_a,
                "phi_b": r.flux.phi_b,
                "rotation": [r.rotation.rotation.rx, r.rotation.rotation.ry],
                "method_agreement": r.method_agreement,
                "discrepancy": r.discrepancy,
            });
            if let Some(p) = curve {
                let c = io::load_curve(p).map_err(load_err)?;
                out["curve_flux"] = json!(flux_across_curve(&f, &c, *vertices)?);
            }
            print_json(&out)
        }
        Command::Rotation { grid } => {
            let f = g.load_map()?;
            let r = rotation_estimate(&f, *grid, (*grid / 2).max(2))?;
            print_json(&json!({ "rx": r.rotation.rx, "ry": r.rotation.ry, "grid": r.grid, "grid_delta": r.grid_delta }))
        }
        Command::Orbits(args) => {
            let f = g.load_map()?;
            let m = LatticeVector::new(args.lattice_type.0, args.lattice_type.1);
            print_json(&find_periodic_orbits(&f, args.period, m, args.grid, g.root_tol())?)
        }
        Command::Manifold { orbit, orbit_index, kind, sign, l_max } => {
            let f = g.load_map()?;
            let o = select_orbit(g, &f, orbit, *orbit_index)?;
            let kind = match kind {
                KindArg::U => BranchKind::Unstable,
                KindArg::S => BranchKind::Stable,
            };
            let b = grow_branch(&o, kind, (*sign).into(), &GrowthSettings::with_length(*l_max), &f)?;
            let label = format!("{}{}", b.kind, match b.sign {
                BranchSign::Plus => "plus",
                BranchSign::Minus => "minus",
            });
            let path = g.write(&format!("branch-{label}.csv"), &io::branch_csv(&b))?;
            let r = branch_invariance_residual(&b, &f)?;
            print_json(&json!({
                "csv": path,
                "vertices": b.polyline.len(),
                "length": b.length(),
                "domains": b.domain_starts.len(),
                "status": b.status,
                "invariance_residual": r.value,
            }))
        }
        Command::Tangle { orbit, orbit_index, l_max, exclude, unstable_sign, stable_sign } => {
            let f = g.load_map()?;
            let o = select_orbit(g, &f, orbit, *orbit_index)?;
            let settings = GrowthSettings::with_length(*l_max);
            let bu = grow_branch(&o, BranchKind::Unstable, (*unstable_sign).into(), &settings, &f)?;
            let bs = grow_branch(&o, BranchKind::Stable, (*stable_sign).into(), &settings, &f)?;
            let report = find_crossings(&bu, &bs, *exclude)?;
            let csv = g.write("crossings.csv", &io::crossings_csv(&report.crossings))?;
            let json_path = g.write("crossings.json", &io::to_json_pretty(&report)?)?;
            print_json(&json!({
                "crossings": report.crossings.len(),
                "transversal": report.transversal_count(TRANSVERSAL_ANGLE),
                "suspects": report.suspects.len(),
                "csv": csv,
                "json": json_path,
            }))
        }
        Command::Wedge { orbit, orbit_index, l_max, eta, delta, sign, adapted, class } => {
            let f = g.load_map()?;
            let o = select_orbit(g, &f, orbit, *orbit_index)?;
            let settings = GrowthSettings::with_length(*l_max);
            let sign: BranchSign = (*sign).into();
            let (w, bu) = if *adapted {
                let all = grow_all_branches(&o, &settings, &f)?;
                let w = WedgeRegion::adapted(&o, &all, *eta, *delta)?;
                let bu = all.into_iter().find(|b| b.kind == BranchKind::Unstable && b.sign == sign).expect("grown");
                (w, bu)
            } else {
                (WedgeRegion::new(&o, *eta, *delta)?, grow_branch(&o, BranchKind::Unstable, sign, &settings, &f)?)
            };
            let seq = wedge_entries(&bu, &w, class.map(|(m, n)| LatticeVector::new(m, n)))?;
            g.write("entries.csv", &io::entries_csv(&seq))?;
            print_json(&json!({
                "entries": seq.entries,
                "strictly_decreasing": seq.strictly_decreasing_x(),
                "single_class": seq.single_class(),
                "decay_ratio": seq.decay_ratio(),
                "diagnostic": seq.diagnostic,
            }))
        }
        Command::Perturb { action } => match action {
            PerturbAction::Rationalize { denominator, half_width } => {
                let f = g.load_map()?;
                let r = rationalize_flux_with(&f, *denominator, *half_width, &FluxSettings::for_map(&f))?;
                let path = g.write("rationalized_map.json", &io::to_json_pretty(&r.map)?)?;
                print_json(&json!({
                    "map": path,
                    "target": r.target,
                    "flux": [r.flux.phi_a, r.flux.phi_b],
                    "epsilons": r.epsilons,
                }))
            }
            PerturbAction::Nudge { center, target, radius, nudge_steps } => {
                let spec = NudgeSpec::new(TorusPoint::new(center.0, center.1)?, TorusPoint::new(target.0, target.1)?, *radius);
                let nudge = local_nudge(spec, *nudge_steps).map_err(load_err)?;
                let moved = nudge.evaluate_lift(&spec.center.lift())?;
                let map = match (&g.map, &g.hamiltonian) {
                    (None, None) => nudge.clone(),
                    _ => LiftedMap::compose(&nudge, &g.load_map()?),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                let annulus: Vec<(LiftPoint, LatticeVector)> = (0..100)
                    .map(|_| {
                        let (r, a) = (radius * (0.5 + 0.5 * rng.gen::<f64>()), std::f64::consts::TAU * rng.gen::<f64>());
                        (spec.center.lift() + LiftPoint::new(r * a.cos(), r * a.sin()), LatticeVector::ZERO)
                    })
                    .collect();
                let audit = audit_map(&nudge, &annulus)?;
                let path = g.write("nudged_map.json", &io::to_json_pretty(&map)?)?;
                print_json(&json!({
                    "map": path,
                    "image_of_center": [moved.x, moved.y],
                    "target_error": tanglekit::torus::torus_distance(&moved, &spec.target.lift()),
                    "max_det_error": audit.max_det_error,
                }))
            }
        },
        Command::Hamiltonian { builtin } => {
            let specs: Vec<(String, HamiltonianSpec)> = match (builtin, g.hamiltonian_spec()?) {
                (Some(name), _) => {
                    let h = HamiltonianSpec::builtins()
                        .into_iter()
                        .find(|(n, _)| n == name)
                        .ok_or_else(|| config(format!("unknown builtin Hamiltonian `{name}`")))?;
                    vec![(h.0.to_string(), h.1)]
                }
                (None, Some(h)) => vec![("file".to_string(), h)],
                (None, None) => HamiltonianSpec::builtins().into_iter().map(|(n, h)| (n.to_string(), h)).collect(),
            };
            let mut rows = Vec::new();
            for (name, h) in specs {
                let norm = |steps: u32| -> anyhow::Result<f64> {
                    let f = stroboscopic_map(&h, steps)?;
                    let r = flux_report(&f, &FluxSettings::for_map(&f))?;
                    Ok(centered_mod1(r.flux.phi_a).hypot(centered_mod1(r.flux.phi_b)))
                };
                let (coarse, fine) = (norm(g.steps)?, norm(2 * g.steps)?);
                rows.push(json!({ "name": name, "steps": g.steps, "flux_norm": coarse, "flux_norm_doubled": fine }));
            }
            print_json(&rows)
        }
        Command::Scenario { scenario, list } => {
            if *list {
                for (name, _) in scenario::BUNDLED {
                    println!("{name}");
                }
                return Ok(());
            }
            let Some(arg) = scenario else {
                bail!(config("give a scenario file or bundled name"));
            };
            let (cfg, base) = if Path::new(arg).exists() {
                let base = Path::new(arg).parent().map(Path::to_path_buf).unwrap_or_default();
                (ScenarioConfig::load(Path::new(arg))?, base)
            } else if let Some(text) = scenario::bundled(arg) {
                (ScenarioConfig::from_json(text)?, PathBuf::from("."))
            } else {
                bail!(ScenarioError::Config(format!("scenario not found: {arg}")));
            };
            let mut cfg = cfg;
            if let Some(t) = g.tol {
                cfg.tolerances.root = t;
            }
            let summary = scenario::run_scenario(&cfg, &base, g.out.as_deref())?;
            eprintln!("{} stages ok", summary.stages.len());
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(s) = e.downcast_ref::<ScenarioError>() {
        return s.exit_code() as u8;
    }
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}
