use tanglekit::orbits::Multipliers;
use tanglekit::tangle::torus_distance_to_polyline;
use tanglekit::torus::torus_distance;
use tanglekit::{
    accumulation_report, find_crossings, find_periodic_orbits, first_return, grow_all_branches, grow_branch,
    BranchKind, BranchSign, GrowthSettings, LatticeVector, LiftPoint, LiftedMap, OrbitClass, PeriodicOrbit,
};

fn twist() -> LiftedMap {
    LiftedMap::double_twist_sine(1.0, 1.0, 0.0, 0.0)
}

fn origin(f: &LiftedMap) -> PeriodicOrbit {
    find_periodic_orbits(f, 1, LatticeVector::ZERO, 16, 1e-12)
        .unwrap()
        .into_iter()
        .find(|o| o.base.lift().norm() < 1e-12)
        .unwrap()
}

#[test]
fn fixed_points_of_the_double_twist() {
    let f = twist();
    let orbits = find_periodic_orbits(&f, 1, LatticeVector::ZERO, 16, 1e-12).unwrap();
    // sin(2πx) = sin(2πy) = 0 gives four fixed points
    assert_eq!(orbits.len(), 4);
    for o in &orbits {
        assert!(o.residual < 1e-11);
        assert!((o.multipliers.product() - 1.0).abs() < 1e-10);
        let w = f.evaluate_lift(&o.base.lift()).unwrap();
        assert!(torus_distance(&w, &o.base.lift()) < 1e-11);
    }
    let hyperbolic = orbits.iter().filter(|o| o.class == OrbitClass::Hyperbolic).count();
    assert_eq!(hyperbolic, 2);
}

#[test]
fn period_two_orbits_close_up() {
    let f = twist();
    for o in find_periodic_orbits(&f, 2, LatticeVector::ZERO, 12, 1e-12).unwrap() {
        assert_eq!(o.points.len(), 2);
        let back = f.evaluate_lift(&o.points[1].lift()).unwrap();
        assert!(torus_distance(&back, &o.points[0].lift()) < 1e-10);
        if let Multipliers::Real([a, b]) = o.multipliers {
            assert!(a.abs() >= b.abs());
        }
    }
}

#[test]
fn orbits_with_a_lattice_type_translate() {
    let f = LiftedMap::double_twist_sine(0.6, 0.6, 1.0, 0.0);
    let orbits = find_periodic_orbits(&f, 1, LatticeVector::new(1, 0), 8, 1e-12).unwrap();
    assert!(!orbits.is_empty());
    for o in orbits {
        let w = f.evaluate_lift(&o.base.lift()).unwrap();
        assert!((w - o.base.lift() - LiftPoint::new(1.0, 0.0)).amax() < 1e-10);
    }
}

#[test]
fn unstable_branch_is_the_stable_branch_of_the_inverse() {
    let f = twist();
    let finv = LiftedMap::inverse(&f);
    let settings = GrowthSettings::with_length(5.0);
    let u = grow_branch(&origin(&f), BranchKind::Unstable, BranchSign::Plus, &settings, &f).unwrap();
    let s = grow_branch(&origin(&finv), BranchKind::Stable, BranchSign::Plus, &settings, &finv).unwrap();
    let bound = 2.0 * settings.max_spacing;
    for (z, len) in u.polyline.iter().zip(&u.arclen) {
        if *len < 4.9 {
            assert!(torus_distance_to_polyline(&s.polyline, z) < bound, "at arclength {len}");
        }
    }
}

#[test]
fn branches_leave_along_their_eigenvectors() {
    let f = twist();
    let o = origin(&f);
    let frame = o.eigenframe.unwrap();
    for b in grow_all_branches(&o, &GrowthSettings::with_length(1.0), &f).unwrap() {
        let e = match b.kind {
            BranchKind::Unstable => frame.unstable(),
            BranchKind::Stable => frame.stable(),
        };
        let d = b.direction().normalize();
        assert!((d - e * b.sign.factor()).norm() < 1e-6);
        assert!(b.arclen.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn reported_crossings_lie_on_both_branches() {
    let f = twist();
    let o = origin(&f);
    let settings = GrowthSettings::with_length(6.0);
    let u = grow_branch(&o, BranchKind::Unstable, BranchSign::Plus, &settings, &f).unwrap();
    let s = grow_branch(&o, BranchKind::Stable, BranchSign::Minus, &settings, &f).unwrap();
    let report = find_crossings(&u, &s, 1e-3).unwrap();
    assert!(!report.crossings.is_empty());
    for c in report.crossings.iter().chain(&report.suspects) {
        let z = c.lift_point();
        assert!(torus_distance_to_polyline(&u.polyline, &z) < 1e-12);
        assert!(torus_distance_to_polyline(&s.polyline, &z) < 1e-12);
        assert!(torus_distance(&z, &o.base.lift()) >= 1e-3);
        assert!((u.point_at(c.u_param) - z).norm() < 1e-9);
        assert!(c.angle >= 0.0 && c.angle <= std::f64::consts::FRAC_PI_2 + 1e-12);
    }
    assert!(report.crossings.windows(2).all(|w| w[0].u_param <= w[1].u_param));
}

#[test]
fn branches_accumulate_on_each_other() {
    let f = twist();
    let o = origin(&f);
    let branches = grow_all_branches(&o, &GrowthSettings::with_length(8.0), &f).unwrap();
    let r = accumulation_report(&branches, 0.05).unwrap();
    assert_eq!(r.labels.len(), 4);
    let (_, _, d) = r.closest_pair.unwrap();
    assert!(d < 1e-3);
}

#[test]
fn points_near_a_fixed_point_return_immediately() {
    let f = twist();
    let o = origin(&f);
    let (j, _) = first_return(&f, &o.base, 1e-6, 5).unwrap().unwrap();
    assert_eq!(j, 1);
}
