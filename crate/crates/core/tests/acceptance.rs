//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints one PASS/FAIL line; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tanglekit::flux::{centered_mod1, circular_distance, flux_across_curve, flux_report, swept_area, FluxSettings};
use tanglekit::manifold::{branch_invariance_residual, grow_all_branches};
use tanglekit::orbits::Multipliers;
use tanglekit::perturb::{flux_tuner, rationalize_flux, BumpProfile, Generator, DEFAULT_NUDGE_STEPS};
use tanglekit::scenario::{self, ScenarioConfig};
use tanglekit::tangle::{find_crossings, torus_distance_to_polyline, wedge_entries, WedgeRegion};
use tanglekit::torus::{curve_class, polyline_intersection_count, reduce, torus_distance};
use tanglekit::{
    find_periodic_orbits, local_nudge, stroboscopic_map, BranchKind, BranchSign, ClosedCurve, GrowthSettings,
    HamiltonianSpec, LatticeVector, LiftPoint, LiftedMap, ManifoldBranch, NudgeSpec, PeriodicOrbit,
    TorusPoint, TunerSpec, TwistProfile,
};

type Outcome = (bool, String);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn p(x: f64, y: f64) -> LiftPoint {
    LiftPoint::new(x, y)
}

fn random_profile(rng: &mut ChaCha8Rng, amp: f64) -> TwistProfile {
    let mut t = TwistProfile::sine(amp, rng.gen::<f64>());
    t.harmonics.push(tanglekit::map::Harmonic {
        k: 2,
        cos: 0.02 * (rng.gen::<f64>() - 0.5),
        sin: 0.02 * (rng.gen::<f64>() - 0.5),
    });
    t
}

fn random_twist(rng: &mut ChaCha8Rng) -> LiftedMap {
    let kp = rng.gen_range(0.2..0.9);
    let kq = rng.gen_range(0.2..0.9);
    LiftedMap::double_twist(random_profile(rng, kp), random_profile(rng, kq))
}

fn flux_pair(f: &LiftedMap, settings: &FluxSettings) -> [f64; 2] {
    let r = flux_report(f, settings).unwrap();
    [r.flux.phi_a, r.flux.phi_b]
}

fn double_twist() -> LiftedMap {
    LiftedMap::double_twist_sine(1.0, 1.0, 0.0, 0.0)
}

fn origin_orbit(f: &LiftedMap) -> PeriodicOrbit {
    find_periodic_orbits(f, 1, LatticeVector::ZERO, 16, 1e-12)
        .unwrap()
        .into_iter()
        .find(|o| o.base.x() == 0.0 && o.base.y() == 0.0)
        .expect("fixed point at the origin")
}

fn branch(bs: &[ManifoldBranch], kind: BranchKind, sign: BranchSign) -> &ManifoldBranch {
    bs.iter().find(|b| b.kind == kind && b.sign == sign).unwrap()
}

fn c1_flux_additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let settings = FluxSettings::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..5 {
        let f = random_twist(&mut rng);
        let base = flux_pair(&f, &settings);
        for k in [2u32, 3, 5, 8] {
            let fk = flux_pair(&LiftedMap::iterate(&f, k).unwrap(), &settings);
            for i in 0..2 {
                worst = worst.max(circular_distance(fk[i], k as f64 * base[i]));
            }
            cases += 1;
        }
    }
    (worst < 1e-6, format!("max |flux(f^k) - k flux(f)| mod 1 = {worst:.2e} over {cases} cases"))
}

fn wavy(class: LatticeVector, offset: f64, phase: f64, n: usize) -> ClosedCurve {
    let v: Vec<LiftPoint> = (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            let w = offset + 0.15 * (std::f64::consts::TAU * s + phase).sin() + 0.05 * (2.0 * std::f64::consts::TAU * s).sin();
            if class.m == 1 {
                p(s, w)
            } else {
                p(w, s)
            }
        })
        .collect();
    ClosedCurve::new(v, class).unwrap()
}

fn c2_homology_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f = random_twist(&mut rng);
        for class in [LatticeVector::new(1, 0), LatticeVector::new(0, 1)] {
            let straight = ClosedCurve::straight(LiftPoint::zeros(), class, 1).unwrap();
            let curvy = wavy(class, rng.gen::<f64>(), rng.gen::<f64>() * 6.0, 400);
            let a = flux_across_curve(&f, &straight, 512).unwrap();
            let b = flux_across_curve(&f, &curvy, 512).unwrap();
            worst = worst.max(circular_distance(a, b));
        }
    }
    (worst < 1e-6, format!("max straight/wavy flux difference = {worst:.2e} over 10 pairs"))
}

fn builtin_families() -> Vec<(&'static str, LiftedMap)> {
    let tube = BumpProfile::new(0.2).unwrap();
    let tuner_a = flux_tuner(TunerSpec { generator: Generator::A, epsilon: 0.07, tube, tube_center: 0.3 }).unwrap();
    let tuner_b = flux_tuner(TunerSpec { generator: Generator::B, epsilon: -0.05, tube, tube_center: 0.6 }).unwrap();
    let nudge = local_nudge(
        NudgeSpec::new(TorusPoint::new(0.3, 0.6).unwrap(), TorusPoint::new(0.315, 0.613).unwrap(), 0.1),
        DEFAULT_NUDGE_STEPS,
    )
    .unwrap();
    vec![
        ("identity", LiftedMap::identity()),
        ("translation", LiftedMap::translation(0.13, 0.71)),
        ("shear_x", LiftedMap::shear_x(TwistProfile::sine(0.7, 0.2))),
        ("shear_y", LiftedMap::shear_y(TwistProfile::sine(0.4, 0.45))),
        ("double_twist", double_twist()),
        ("double_twist_drift", LiftedMap::double_twist_sine(0.8, 1.3, 0.26, 0.49)),
        ("tuner_a", tuner_a.clone()),
        ("tuner_b", tuner_b),
        ("twist_with_tuner", LiftedMap::compose(&tuner_a, &double_twist())),
        ("nudge", nudge),
        ("stroboscopic", stroboscopic_map(&HamiltonianSpec::cellular_pulse(), 256).unwrap()),
    ]
}

fn c3_duality() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_name = "";
    let mut count = 0;
    for (name, f) in builtin_families() {
        let base = FluxSettings::for_map(&f);
        let finer = FluxSettings {
            curve_vertices: 2 * base.curve_vertices,
            rotation_grid: 2 * base.rotation_grid.min(256),
            check_grid: base.rotation_grid.min(256),
            ..base
        };
        for s in [base, finer] {
            let r = flux_report(&f, &s).unwrap();
            count += 1;
            if r.discrepancy > worst {
                worst = r.discrepancy;
                worst_name = name;
            }
        }
    }
    (worst < 1e-6, format!("max swept-area vs rotation discrepancy = {worst:.2e} ({worst_name}) over {count} runs"))
}

/// Below this the flux of a time-1 map is indistinguishable from round-off.
const ROUNDOFF_FLOOR: f64 = 1e-12;

fn c4_hamiltonian_zero_flux() -> Outcome {
    let norm = |h: &HamiltonianSpec, steps: u32| {
        let f = stroboscopic_map(h, steps).unwrap();
        let v = flux_pair(&f, &FluxSettings::for_map(&f));
        centered_mod1(v[0]).hypot(centered_mod1(v[1]))
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, h) in HamiltonianSpec::builtins() {
        let (a, b) = (norm(&h, 256), norm(&h, 512));
        let decreases = b < a || a.max(b) < ROUNDOFF_FLOOR;
        ok &= a < 1e-6 && decreases;
        parts.push(format!("{name} {a:.1e}->{b:.1e}"));
    }
    (ok, format!("|flux| at 256->512 steps: {} (round-off floor {ROUNDOFF_FLOOR:.0e})", parts.join(", ")))
}

fn bump_integral(delta: f64) -> f64 {
    // composite Simpson, 20000 panels
    let n = 20000;
    let h = 2.0 * delta / n as f64;
    let b = BumpProfile::new(delta).unwrap();
    let mut s = 0.0;
    for i in 0..=n {
        let t = -delta + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * b.value(t);
    }
    s * h / 3.0
}

fn c5_tuner_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_twist(&mut rng);
    let delta = 0.2;
    let integral = bump_integral(delta);
    let flux = |g: &LiftedMap| -> [f64; 2] {
        [
            swept_area(g, &ClosedCurve::generator_a(), 512).unwrap(),
            -swept_area(g, &ClosedCurve::generator_b(), 512).unwrap(),
        ]
    };
    let base = flux(&f);
    let (mut shift_err, mut cross_err): (f64, f64) = (0.0, 0.0);
    for eps in [1e-3, 1e-2, 1e-1] {
        // B shears along y and moves phi_a; A shears along x and moves phi_b
        for (gen, moved) in [(Generator::B, 0usize), (Generator::A, 1usize)] {
            let h = flux_tuner(TunerSpec { generator: gen, epsilon: eps, tube: BumpProfile::new(delta).unwrap(), tube_center: 0.35 }).unwrap();
            let got = flux(&LiftedMap::compose(&f, &h));
            shift_err = shift_err.max((centered_mod1(got[moved] - base[moved]) - eps * integral).abs());
            cross_err = cross_err.max(centered_mod1(got[1 - moved] - base[1 - moved]).abs());
        }
    }
    let mut target_err: f64 = 0.0;
    for q in [2u32, 3, 4, 8] {
        let g = random_twist(&mut rng);
        let r = rationalize_flux(&g, q).unwrap();
        let v = flux_pair(&r.map, &FluxSettings::for_map(&r.map));
        for (got, want) in v.iter().zip(r.target) {
            target_err = target_err.max(circular_distance(*got, want));
        }
    }
    (
        shift_err < 1e-8 && cross_err < 1e-10 && target_err < 1e-6,
        format!("shift error {shift_err:.1e}, other component {cross_err:.1e}, rational target error {target_err:.1e}"),
    )
}

fn c6_orbit() -> Outcome {
    let o = origin_orbit(&double_twist());
    let s5 = 5f64.sqrt();
    let (big, small) = match o.multipliers {
        Multipliers::Real([a, b]) => (a, b),
        _ => return (false, "origin is not hyperbolic".into()),
    };
    let err = (big - (3.0 + s5) / 2.0).abs().max((small - (3.0 - s5) / 2.0).abs());
    (o.residual < 1e-11 && err < 1e-9, format!("residual {:.1e}, multiplier error {err:.1e}", o.residual))
}

fn bound_violations(b: &ManifoldBranch) -> (usize, usize) {
    let v = &b.polyline;
    let spacing = v.windows(2).filter(|w| (w[1] - w[0]).norm() > b.settings.max_spacing).count();
    let turning = v
        .windows(3)
        .filter(|w| {
            let (d0, d1) = (w[1] - w[0], w[2] - w[1]);
            let ang = (d0.x * d1.y - d0.y * d1.x).atan2(d0.dot(&d1)).abs();
            ang > b.settings.max_turn
        })
        .count();
    (spacing, turning)
}

fn c7_manifolds(f: &LiftedMap, bs: &[ManifoldBranch]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for b in bs {
        let (sp, tu) = bound_violations(b);
        let r = branch_invariance_residual(b, f).unwrap();
        ok &= sp == 0 && tu == 0 && !r.vacuous && r.value < 1e-5 && b.length() >= 30.0 - 1e-9;
        parts.push(format!("{}{} {} vertices residual {:.1e}", b.kind, b.sign, b.polyline.len(), r.value));
        if sp + tu > 0 {
            parts.push(format!("{sp} spacing/{tu} angle violations"));
        }
    }
    (ok, parts.join("; "))
}

/// All crossings between two polyline prefixes on the torus, by testing
/// every segment pair against every nearby lattice translate.
fn brute_force_crossings(u: &ManifoldBranch, nu: usize, s: &ManifoldBranch, ns: usize, center: &LiftPoint, exclude: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for i in 0..nu {
        let (a0, a1) = (u.polyline[i], u.polyline[i + 1]);
        let da = a1 - a0;
        for j in 0..ns {
            let (b0, b1) = (s.polyline[j], s.polyline[j + 1]);
            let db = b1 - b0;
            let den = da.x * db.y - da.y * db.x;
            if den == 0.0 {
                continue;
            }
            let base = (a0 - b0).map(f64::round);
            for mx in -1..=1 {
                for my in -1..=1 {
                    let shift = base + p(mx as f64, my as f64);
                    let r = b0 + shift - a0;
                    let t = (r.x * db.y - r.y * db.x) / den;
                    let w = (r.x * da.y - r.y * da.x) / den;
                    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&w) {
                        let x = a0 + da * t;
                        if torus_distance(&x, center) < exclude {
                            continue;
                        }
                        out.push((u.arclen[i] + t * da.norm(), s.arclen[j] + w * db.norm()));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    out
}

fn prefix_segments(b: &ManifoldBranch, length: f64) -> usize {
    b.arclen.partition_point(|&s| s <= length).saturating_sub(1)
}

fn c8_homoclinic(f: &LiftedMap, bs: &[ManifoldBranch]) -> Outcome {
    let exclude = 1e-3;
    let bu = branch(bs, BranchKind::Unstable, BranchSign::Plus);
    let bsb = branch(bs, BranchKind::Stable, BranchSign::Plus);
    let report = find_crossings(bu, bsb, exclude).unwrap();
    let transversal: Vec<_> = report.crossings.iter().filter(|c| c.angle > 1e-3).collect();

    let prefix = 2.5;
    let (nu, ns) = (prefix_segments(bu, prefix), prefix_segments(bsb, prefix));
    let oracle = brute_force_crossings(bu, nu, bsb, ns, &bu.base(), exclude);
    let mut reported: Vec<(f64, f64)> = report
        .crossings
        .iter()
        .chain(&report.suspects)
        .filter(|c| c.u_segment < nu && c.s_segment < ns)
        .map(|c| (c.u_param, c.s_param))
        .collect();
    reported.sort_by(|a, b| a.0.total_cmp(&b.0));
    let matched = oracle.len() == reported.len()
        && oracle.iter().zip(&reported).all(|(a, b)| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);

    let finv = LiftedMap::inverse(f);
    let (mut fwd, mut bwd): (f64, f64) = (0.0, 0.0);
    let mut iterated = 0;
    for c in transversal.iter().take(25) {
        let Some(z0) = c.manifold_lift() else { continue };
        let (mut zf, mut zb) = (z0, z0);
        for _ in 0..10 {
            zf = f.evaluate_lift(&zf).unwrap();
            zb = finv.evaluate_lift(&zb).unwrap();
        }
        fwd = fwd.max(torus_distance_to_polyline(&bsb.polyline, &zf));
        bwd = bwd.max(torus_distance_to_polyline(&bu.polyline, &zb));
        iterated += 1;
    }
    (
        !transversal.is_empty() && !oracle.is_empty() && matched && iterated > 0 && fwd < 1e-3 && bwd < 1e-3,
        format!(
            "{} transversal crossings; brute force on {prefix}-prefixes {} vs reported {} ({}); 10-step iterates of {iterated}: stable {fwd:.1e}, unstable {bwd:.1e}",
            transversal.len(),
            oracle.len(),
            reported.len(),
            if matched { "match" } else { "MISMATCH" }
        ),
    )
}

fn c9_wedge(f: &LiftedMap, o: &PeriodicOrbit) -> Outcome {
    let bs = grow_all_branches(o, &GrowthSettings::with_length(40.0), f).unwrap();
    let w = WedgeRegion::new(o, 0.05, 0.01).unwrap();
    let mut ok = false;
    let mut parts = Vec::new();
    for sign in [BranchSign::Plus, BranchSign::Minus] {
        let seq = wedge_entries(branch(&bs, BranchKind::Unstable, sign), &w, None).unwrap();
        let ratio = seq.decay_ratio();
        let pass = seq.entries.len() >= 3
            && seq.single_class()
            && seq.strictly_decreasing_x()
            && ratio.is_some_and(|r| r < 0.5);
        ok |= pass;
        let xs: Vec<String> = seq.chart_x().iter().map(|x| format!("{x:.2e}")).collect();
        parts.push(format!(
            "u{sign}: {} entries, decreasing {}, single class {}, last/first {} [x = {}]",
            seq.entries.len(),
            seq.strictly_decreasing_x(),
            seq.single_class(),
            ratio.map_or("n/a".into(), |r| format!("{r:.3}")),
            xs.join(" ")
        ));
    }
    (ok, parts.join("; "))
}

fn random_loop(rng: &mut ChaCha8Rng, class: LatticeVector) -> ClosedCurve {
    let n = rng.gen_range(3..24);
    let o = p(rng.gen(), rng.gen());
    let v: Vec<LiftPoint> = if class == LatticeVector::ZERO {
        // a small polygon around o
        let r = rng.gen_range(0.05..0.3);
        (0..=n)
            .map(|i| {
                let t = std::f64::consts::TAU * (i % n) as f64 / n as f64;
                o + p(r * t.cos(), r * t.sin())
            })
            .collect()
    } else {
        (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                let jitter = if i == 0 || i == n { p(0.0, 0.0) } else { p(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)) };
                o + class.as_lift() * s + jitter
            })
            .collect()
    };
    ClosedCurve::new(v, class).unwrap()
}

fn random_class(rng: &mut ChaCha8Rng) -> LatticeVector {
    LatticeVector::new(rng.gen_range(-2..=2), rng.gen_range(-2..=2))
}

fn c10_intersections() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut homologous_bad = 0;
    let mut lattice_bad = 0;
    for _ in 0..50 {
        let c = random_class(&mut rng);
        let (a, b) = (random_loop(&mut rng, c), random_loop(&mut rng, c));
        if polyline_intersection_count(&a, &b).unwrap() != 0 {
            homologous_bad += 1;
        }
    }
    let mut done = 0;
    while done < 50 {
        let (c1, c2) = (random_class(&mut rng), random_class(&mut rng));
        if c1 == c2 {
            continue;
        }
        let (a, b) = (random_loop(&mut rng, c1), random_loop(&mut rng, c2));
        let (k1, k2) = (curve_class(&a).unwrap(), curve_class(&b).unwrap());
        if polyline_intersection_count(&a, &b).unwrap() != k1.m * k2.n - k1.n * k2.m {
            lattice_bad += 1;
        }
        done += 1;
    }
    (
        homologous_bad == 0 && lattice_bad == 0,
        format!("{homologous_bad}/50 homologous pairs with nonzero count, {lattice_bad}/50 non-homologous mismatches"),
    )
}

fn c11_nudge() -> Outcome {
    let (center, target, radius) = (p(0.3, 0.6), p(0.315, 0.613), 0.1);
    let spec = NudgeSpec::new(reduce(&center).unwrap(), reduce(&target).unwrap(), radius);
    let g = local_nudge(spec, DEFAULT_NUDGE_STEPS).unwrap();
    let hit = (g.evaluate_lift(&center).unwrap() - target).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut moved_outside = 0;
    let mut tested = 0;
    while tested < 1000 {
        let z = p(rng.gen_range(-2.0..3.0), rng.gen_range(-2.0..3.0));
        if torus_distance(&z, &center) < radius {
            continue;
        }
        if g.evaluate_lift(&z).unwrap() != z {
            moved_outside += 1;
        }
        tested += 1;
    }
    let mut det_err: f64 = 0.0;
    for _ in 0..100 {
        let (r, a) = (radius * rng.gen_range(0.5..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let j = g.jacobian(&(center + p(r * a.cos(), r * a.sin()))).unwrap();
        det_err = det_err.max((j.determinant() - 1.0).abs());
    }
    let f = double_twist();
    let composed = LiftedMap::compose(&g, &f);
    let before = find_periodic_orbits(&f, 1, LatticeVector::ZERO, 16, 1e-12).unwrap();
    let after = find_periodic_orbits(&composed, 1, LatticeVector::ZERO, 16, 1e-12).unwrap();
    let mut orbit_shift: f64 = 0.0;
    let mut checked = 0;
    for o in before.iter().filter(|o| torus_distance(&o.base.lift(), &center) > radius) {
        let d = after
            .iter()
            .map(|a| torus_distance(&a.base.lift(), &o.base.lift()))
            .fold(f64::INFINITY, f64::min);
        orbit_shift = orbit_shift.max(d);
        checked += 1;
    }
    (
        hit < 1e-10 && moved_outside == 0 && det_err < 1e-8 && checked > 0 && orbit_shift < 1e-11,
        format!(
            "target error {hit:.1e}; {moved_outside}/1000 outside points moved; det error {det_err:.1e}; {checked} off-support orbits shifted by {orbit_shift:.1e}"
        ),
    )
}

fn run_in_pool(threads: usize, cfg: &ScenarioConfig, out: &Path) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| scenario::run_scenario(cfg, Path::new("."), Some(out))).unwrap();
}

fn snapshot(dir: &Path) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let mut text = std::fs::read_to_string(&path).unwrap();
        if path.file_name().unwrap() == "summary.json" {
            text = text.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n");
        }
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), text);
    }
    files
}

fn c12_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, text) in scenario::BUNDLED {
        let cfg = ScenarioConfig::from_json(text).unwrap();
        let runs: Vec<_> = [1usize, 3, 1]
            .iter()
            .enumerate()
            .map(|(i, &threads)| {
                let out = tmp.path().join(format!("{name}-{i}"));
                run_in_pool(threads, &cfg, &out);
                snapshot(&out)
            })
            .collect();
        let same = runs.windows(2).all(|w| w[0] == w[1]);
        ok &= same && runs[0].contains_key("summary.json");
        parts.push(format!("{name}: {} files, runs with 1/3/1 threads {}", runs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    (ok, parts.join("; "))
}

fn main() {
    let start = Instant::now();
    let f = double_twist();
    let o = origin_orbit(&f);
    let branches = grow_all_branches(&o, &GrowthSettings::with_length(30.0), &f).unwrap();
    let criteria: Vec<Criterion> = vec![
        ("flux additivity", Box::new(c1_flux_additivity)),
        ("homology invariance", Box::new(c2_homology_invariance)),
        ("flux-rotation duality", Box::new(c3_duality)),
        ("hamiltonian zero flux", Box::new(c4_hamiltonian_zero_flux)),
        ("tuner calibration", Box::new(c5_tuner_calibration)),
        ("hyperbolic orbit", Box::new(c6_orbit)),
        ("manifold validity", Box::new(|| c7_manifolds(&f, &branches))),
        ("homoclinic crossings", Box::new(|| c8_homoclinic(&f, &branches))),
        ("wedge sequence", Box::new(|| c9_wedge(&f, &o))),
        ("intersection numbers", Box::new(c10_intersections)),
        ("nudge contract", Box::new(c11_nudge)),
        ("determinism", Box::new(c12_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, i + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
