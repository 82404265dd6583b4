//! Homoclinic crossings between branches, wedge-region entry sequences,
//! accumulation distances between branches and recurrence returns.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};
use crate::manifold::{BranchKind, ManifoldBranch};
use crate::map::LiftedMap;
use crate::orbits::PeriodicOrbit;
use crate::spatial::{cross, point_segment_distance, segment_distance, segment_intersection, to_unit_square, TorusIndex, OFFSETS};
use crate::torus::{reduce, torus_displacement, torus_distance, LatticeVector, LiftPoint, TorusPoint};

/// Crossings at a smaller angle than this are reported as suspect tangencies.
pub const TANGENCY_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub point: TorusPoint,
    /// Lift of the crossing on the unstable branch.
    pub lift: [f64; 2],
    pub u_param: f64,
    pub s_param: f64,
    pub u_segment: usize,
    pub s_segment: usize,
    /// Acute angle between the two segment directions.
    pub angle: f64,
    /// Sign of `u_dir × s_dir`.
    pub orient: i8,
    pub u_dir: [f64; 2],
    pub s_dir: [f64; 2],
    /// Unstable-branch lift minus stable-branch lift of the crossing.
    pub lattice_offset: LatticeVector,
    /// The crossing of the invariant curves themselves, on the unstable
    /// branch's lift, when both branches carry generators.
    pub manifold_point: Option<[f64; 2]>,
}

impl Crossing {
    pub fn lift_point(&self) -> LiftPoint {
        LiftPoint::new(self.lift[0], self.lift[1])
    }

    pub fn manifold_lift(&self) -> Option<LiftPoint> {
        self.manifold_point.map(|p| LiftPoint::new(p[0], p[1]))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub crossings: Vec<Crossing>,
    /// Near-tangent crossings, kept apart rather than dropped.
    pub suspects: Vec<Crossing>,
}

impl CrossingReport {
    pub fn transversal_count(&self, min_angle: f64) -> usize {
        self.crossings.iter().filter(|c| c.angle > min_angle).count()
    }
}

fn max_segment(points: &[LiftPoint]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max)
}

/// Transverse crossings of the torus projections of two branches, away
/// from the orbit point, sorted by arc length along `bu`.
pub fn find_crossings(bu: &ManifoldBranch, bs: &ManifoldBranch, exclude_radius: f64) -> Result<CrossingReport> {
    if !(exclude_radius > 0.0) {
        return Err(TangleError::InvalidParameter("exclusion radius must be positive".into()));
    }
    let (pu, ps) = (&bu.polyline, &bs.polyline);
    if pu.len() < 2 || ps.len() < 2 {
        return Ok(CrossingReport::default());
    }
    let cell = bu.settings.max_spacing.max(max_segment(ps));
    let index = TorusIndex::new(ps, 0..ps.len() - 1, cell);
    let centers: Vec<LiftPoint> = bu.orbit.points.iter().map(|p| p.lift()).collect();

    let per_segment = |i: usize| -> Result<Vec<Crossing>> {
        let (a, b) = to_unit_square(&pu[i], &pu[i + 1]);
        let shift_a = pu[i] - a;
        let mut out = Vec::new();
        for (j, p, q) in index.candidates(&a, &b, 0) {
            let shift_p = ps[j] - p;
            for (ox, oy) in OFFSETS {
                let v = LiftPoint::new(ox, oy);
                let Some((t, u)) = segment_intersection(&a, &b, &(p + v), &(q + v)) else { continue };
                let x = a + (b - a) * t;
                if centers.iter().any(|c| torus_distance(&x, c) < exclude_radius) {
                    continue;
                }
                let du = b - a;
                let ds = q - p;
                let angle = cross(&du, &ds).abs().atan2(du.dot(&ds).abs());
                let lift_u = x + shift_a;
                let lift_s = x - v + shift_p;
                let c = Crossing {
                    point: reduce(&x)?,
                    lift: [lift_u.x, lift_u.y],
                    u_param: bu.arclen[i] + t * (bu.arclen[i + 1] - bu.arclen[i]),
                    s_param: bs.arclen[j] + u * (bs.arclen[j + 1] - bs.arclen[j]),
                    u_segment: i,
                    s_segment: j,
                    angle,
                    orient: if cross(&du, &ds) >= 0.0 { 1 } else { -1 },
                    u_dir: unit(du),
                    s_dir: unit(ds),
                    lattice_offset: LatticeVector::nearest(&(lift_u - lift_s)),
                    manifold_point: None,
                };
                out.push(refine_on_manifolds(bu, bs, c, t, u)?);
            }
        }
        Ok(out)
    };
    let found: Vec<Vec<Crossing>> = segments_map(pu.len() - 1, per_segment)?;
    let mut all: Vec<Crossing> = found.into_iter().flatten().collect();
    all.sort_by(|a, b| a.u_param.total_cmp(&b.u_param).then(a.s_param.total_cmp(&b.s_param)));
    // a crossing through a shared vertex is seen from two segment pairs
    all.dedup_by(|b, a| (a.u_param - b.u_param).abs() < 1e-12 && (a.s_param - b.s_param).abs() < 1e-12);
    let (crossings, suspects) = all.into_iter().partition(|c| c.angle >= TANGENCY_ANGLE);
    Ok(CrossingReport { crossings, suspects })
}

#[cfg(feature = "parallel")]
fn segments_map<T: Send>(n: usize, op: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(op).collect()
}

#[cfg(not(feature = "parallel"))]
fn segments_map<T>(n: usize, op: impl Fn(usize) -> Result<T>) -> Result<Vec<T>> {
    (0..n).map(op).collect()
}

fn unit(v: LiftPoint) -> [f64; 2] {
    let n = v.norm();
    [v.x / n, v.y / n]
}

/// Newton iteration on the invariant curves spanned by the two crossing
/// segments, with chord directions as the Jacobian.
fn refine_on_manifolds(bu: &ManifoldBranch, bs: &ManifoldBranch, mut c: Crossing, t0: f64, u0: f64) -> Result<Crossing> {
    if bu.generator.is_none() || bs.generator.is_none() {
        return Ok(c);
    }
    let (i, j) = (c.u_segment, c.s_segment);
    let du = bu.polyline[i + 1] - bu.polyline[i];
    let ds = bs.polyline[j + 1] - bs.polyline[j];
    let offset = c.lattice_offset.as_lift();
    let jac = Matrix2::from_columns(&[du, -ds]);
    let Some(jinv) = jac.try_inverse() else { return Ok(c) };
    let (mut t, mut u) = (t0, u0);
    for _ in 0..30 {
        let zu = bu.curve_point(i, t)?;
        let zs = bs.curve_point(j, u)? + offset;
        let r = zu - zs;
        if r.norm() < 1e-14 {
            break;
        }
        let step = jinv * r;
        t -= step.x;
        u -= step.y;
        if !(t.is_finite() && u.is_finite()) || !(-1.0..=2.0).contains(&t) || !(-1.0..=2.0).contains(&u) {
            return Ok(c);
        }
    }
    let z = bu.curve_point(i, t)?;
    c.manifold_point = Some([z.x, z.y]);
    Ok(c)
}

/// Wedge region `{xy ≤ δη, 0 ≤ x ≤ η, 0 ≤ y ≤ η}` in a chart at a hyperbolic
/// orbit point with `x` along `e_u` and `y` along `e_s`.
///
/// The plain chart is the eigenbasis. The adapted chart additionally
/// measures `x` from the local stable manifold and `y` from the local
/// unstable manifold, so both manifolds are chart axes as in the
/// linearizing coordinates of the hyperbolic point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeRegion {
    pub eta: f64,
    pub delta: f64,
    pub center: [f64; 2],
    pub e_u: [f64; 2],
    pub e_s: [f64; 2],
    /// Local stable manifold as eigenbasis samples `(y, x)`, sorted by `y`.
    #[serde(default)]
    pub stable_graph: Vec<[f64; 2]>,
    /// Local unstable manifold as eigenbasis samples `(x, y)`, sorted by `x`.
    #[serde(default)]
    pub unstable_graph: Vec<[f64; 2]>,
}

fn interpolate(graph: &[[f64; 2]], s: f64) -> f64 {
    if graph.is_empty() {
        return 0.0;
    }
    let i = graph.partition_point(|g| g[0] < s);
    if i == 0 {
        return graph[0][1];
    }
    if i == graph.len() {
        return graph[i - 1][1];
    }
    let (a, b) = (graph[i - 1], graph[i]);
    a[1] + (b[1] - a[1]) * (s - a[0]) / (b[0] - a[0])
}

impl WedgeRegion {
    pub fn new(orbit: &PeriodicOrbit, eta: f64, delta: f64) -> Result<Self> {
        if !(eta > 0.0 && delta > 0.0 && delta < eta && eta < 0.25) {
            return Err(TangleError::InvalidParameter(format!("wedge needs 0 < delta < eta < 0.25, got {delta}, {eta}")));
        }
        let frame = orbit
            .eigenframe
            .ok_or_else(|| TangleError::NotHyperbolic("wedge chart needs an eigenframe".into()))?;
        Ok(Self {
            eta,
            delta,
            center: [orbit.base.x(), orbit.base.y()],
            e_u: frame.unstable,
            e_s: frame.stable,
            stable_graph: Vec::new(),
            unstable_graph: Vec::new(),
        })
    }

    /// Chart straightened by the local parts (out to `2η`) of the given
    /// branches, which must include a stable and an unstable one.
    pub fn adapted(orbit: &PeriodicOrbit, branches: &[ManifoldBranch], eta: f64, delta: f64) -> Result<Self> {
        let mut w = Self::new(orbit, eta, delta)?;
        let mut stable = vec![[0.0, 0.0]];
        let mut unstable = vec![[0.0, 0.0]];
        for b in branches {
            if torus_distance(&b.base(), &w.center()) > 1e-9 {
                return Err(TangleError::InvalidParameter("branch belongs to a different orbit".into()));
            }
            let target = match b.kind {
                BranchKind::Stable => &mut stable,
                BranchKind::Unstable => &mut unstable,
            };
            let mut last = 0.0f64;
            for z in &b.polyline[1..] {
                let c = w.eigen_chart(z);
                let (own, across) = match b.kind {
                    BranchKind::Stable => (c.y, c.x),
                    BranchKind::Unstable => (c.x, c.y),
                };
                if own.abs() > 2.0 * eta || own.abs() <= last {
                    break;
                }
                last = own.abs();
                target.push([own, across]);
            }
        }
        if stable.len() < 2 || unstable.len() < 2 {
            return Err(TangleError::InvalidParameter("adapted chart needs a stable and an unstable branch".into()));
        }
        for g in [&mut stable, &mut unstable] {
            g.sort_by(|a, b| a[0].total_cmp(&b[0]));
            g.dedup_by(|a, b| a[0] == b[0]);
        }
        w.stable_graph = stable;
        w.unstable_graph = unstable;
        Ok(w)
    }

    pub fn center(&self) -> LiftPoint {
        LiftPoint::new(self.center[0], self.center[1])
    }

    /// Eigenbasis coordinates of the torus displacement from the center.
    pub fn eigen_chart(&self, z: &LiftPoint) -> LiftPoint {
        let b = Matrix2::new(self.e_u[0], self.e_s[0], self.e_u[1], self.e_s[1]);
        let d = torus_displacement(z, &self.center());
        b.try_inverse().map(|bi| bi * d).unwrap_or(d)
    }

    /// Chart coordinates of the torus point under `z`.
    pub fn chart(&self, z: &LiftPoint) -> LiftPoint {
        let c = self.eigen_chart(z);
        if self.stable_graph.is_empty() {
            return c;
        }
        LiftPoint::new(c.x - interpolate(&self.stable_graph, c.y), c.y - interpolate(&self.unstable_graph, c.x))
    }

    pub fn contains_chart(&self, c: &LiftPoint) -> bool {
        c.x >= 0.0 && c.y >= 0.0 && c.x <= self.eta && c.y <= self.eta && c.x * c.y <= self.delta * self.eta
    }

    /// Lattice class of the loop that follows the branch lift from the
    /// center to `z` and closes along the chart segment back to the center.
    pub fn loop_class(&self, z: &LiftPoint) -> LatticeVector {
        let d = torus_displacement(z, &self.center());
        LatticeVector::nearest(&(z - self.center() - d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WedgeEntry {
    pub arclen: f64,
    pub chart: [f64; 2],
    pub lift: [f64; 2],
    pub class: LatticeVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySequence {
    pub entries: Vec<WedgeEntry>,
    /// Entries rejected by the class filter.
    pub filtered_out: usize,
    pub diagnostic: Option<String>,
}

impl EntrySequence {
    pub fn chart_x(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.chart[0]).collect()
    }

    pub fn strictly_decreasing_x(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].chart[0] < w[0].chart[0])
    }

    pub fn single_class(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].class == w[1].class)
    }

    /// Last over first chart-x, the finite proxy for convergence to the axis.
    pub fn decay_ratio(&self) -> Option<f64> {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) if self.entries.len() >= 2 && a.chart[0] > 0.0 => Some(b.chart[0] / a.chart[0]),
            _ => None,
        }
    }
}

/// Walks an unstable branch and records each entry into the wedge across
/// the line `y = η` (with `0 ≤ x ≤ δ`) that follows an excursion outside.
pub fn wedge_entries(bu: &ManifoldBranch, w: &WedgeRegion, class_filter: Option<LatticeVector>) -> Result<EntrySequence> {
    if bu.kind != BranchKind::Unstable {
        return Err(TangleError::InvalidParameter("wedge entries need an unstable branch".into()));
    }
    if torus_distance(&bu.base(), &w.center()) > 1e-9 {
        return Err(TangleError::InvalidParameter("wedge is not centered on the branch's orbit point".into()));
    }
    let pts = &bu.polyline;
    let charts: Vec<LiftPoint> = pts.iter().map(|z| w.chart(z)).collect();
    let mut entries = Vec::new();
    let mut filtered_out = 0;
    let mut outside = false;
    for i in 0..pts.len() - 1 {
        let (c0, c1) = (charts[i], charts[i + 1]);
        let inside_next = w.contains_chart(&c1);
        if !inside_next {
            outside = true;
            continue;
        }
        if !outside {
            continue;
        }
        outside = false;
        // chart jumps mean the segment wrapped far from the center
        if (c1 - c0).norm() > 0.25 || !(c0.y > w.eta && c1.y <= w.eta) {
            continue;
        }
        let t_lin = (c0.y - w.eta) / (c0.y - c1.y);
        let t = secant_on_line(bu, w, i, t_lin, c0.y, c1.y)?;
        let z = bu.curve_point(i, t)?;
        let c = w.chart(&z);
        if !(c.x >= 0.0 && c.x <= w.delta) {
            continue;
        }
        let class = w.loop_class(&z);
        if class_filter.is_some_and(|f| f != class) {
            filtered_out += 1;
            continue;
        }
        entries.push(WedgeEntry {
            arclen: bu.arclen[i] + t * (bu.arclen[i + 1] - bu.arclen[i]),
            chart: [c.x, c.y],
            lift: [z.x, z.y],
            class,
        });
    }
    let diagnostic = if entries.is_empty() {
        Some(format!("branch never re-enters the wedge within arc length {}", bu.length()))
    } else {
        None
    };
    Ok(EntrySequence { entries, filtered_out, diagnostic })
}

/// One secant step for `chart_y(curve(t)) = η` from the linear estimate.
fn secant_on_line(bu: &ManifoldBranch, w: &WedgeRegion, i: usize, t_lin: f64, y0: f64, y1: f64) -> Result<f64> {
    let y_lin = w.chart(&bu.curve_point(i, t_lin)?).y - w.eta;
    if y_lin == 0.0 {
        return Ok(t_lin);
    }
    // pair the estimate with the endpoint on the other side of the line
    let (t_end, y_end) = if y_lin > 0.0 { (1.0, y1 - w.eta) } else { (0.0, y0 - w.eta) };
    let t = t_lin - y_lin * (t_lin - t_end) / (y_lin - y_end);
    Ok(if t.is_finite() { t.clamp(0.0, 1.0) } else { t_lin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulationReport {
    pub labels: Vec<String>,
    pub distances: Vec<Vec<f64>>,
    /// Closest unstable/stable pair `(i, j, distance)`.
    pub closest_pair: Option<(usize, usize, f64)>,
}

/// Minimal torus distances between the branches, ignoring everything
/// within `radius` of the orbit.
pub fn accumulation_report(branches: &[ManifoldBranch], radius: f64) -> Result<AccumulationReport> {
    if branches.is_empty() {
        return Err(TangleError::InvalidParameter("no branches".into()));
    }
    let base = branches[0].base();
    if branches.iter().any(|b| torus_distance(&b.base(), &base) > 1e-9) {
        return Err(TangleError::InvalidParameter("branches belong to different orbits".into()));
    }
    let centers: Vec<LiftPoint> = branches[0].orbit.points.iter().map(|p| p.lift()).collect();
    let kept: Vec<Vec<usize>> = branches
        .iter()
        .map(|b| {
            (0..b.polyline.len().saturating_sub(1))
                .filter(|&i| {
                    centers.iter().all(|c| {
                        torus_distance(&b.polyline[i], c) >= radius && torus_distance(&b.polyline[i + 1], c) >= radius
                    })
                })
                .collect()
        })
        .collect();
    let n = branches.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    let dist = |&(i, j): &(usize, usize)| polyline_distance(&branches[i].polyline, &kept[i], &branches[j].polyline, &kept[j]);
    #[cfg(feature = "parallel")]
    let values: Vec<f64> = {
        use rayon::prelude::*;
        pairs.par_iter().map(dist).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<f64> = pairs.iter().map(dist).collect();

    let mut distances = vec![vec![0.0; n]; n];
    for (&(i, j), &d) in pairs.iter().zip(&values) {
        distances[i][j] = d;
        distances[j][i] = d;
    }
    let mut closest_pair: Option<(usize, usize, f64)> = None;
    for &(i, j) in &pairs {
        if branches[i].kind != branches[j].kind {
            let d = distances[i][j];
            if closest_pair.is_none_or(|c| d < c.2) {
                closest_pair = Some((i, j, d));
            }
        }
    }
    let labels = branches.iter().map(|b| format!("{}{}", b.kind, b.sign)).collect();
    Ok(AccumulationReport { labels, distances, closest_pair })
}

/// Minimal torus distance between selected segments of two polylines.
fn polyline_distance(a: &[LiftPoint], ia: &[usize], b: &[LiftPoint], ib: &[usize]) -> f64 {
    if ia.is_empty() || ib.is_empty() {
        return f64::INFINITY;
    }
    let seg = ia.iter().map(|&i| (a[i + 1] - a[i]).norm()).chain(ib.iter().map(|&i| (b[i + 1] - b[i]).norm())).fold(0.0, f64::max);
    for cell in [seg.max(1e-4), 1.0 / 64.0, 1.0 / 8.0, 0.5] {
        let index = TorusIndex::new(b, ib.iter().copied(), cell);
        let mut best = f64::INFINITY;
        for &i in ia {
            let (p, q) = to_unit_square(&a[i], &a[i + 1]);
            for (_, r, s) in index.candidates(&p, &q, 1) {
                for (ox, oy) in OFFSETS {
                    let v = LiftPoint::new(ox, oy);
                    best = best.min(segment_distance(&p, &q, &(r + v), &(s + v)));
                }
            }
        }
        // a closer segment would have shared a padded cell
        if best <= index.cell_size() {
            return best;
        }
    }
    f64::INFINITY
}

/// Torus distance from `q` to a polyline.
pub fn torus_distance_to_polyline(points: &[LiftPoint], q: &LiftPoint) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let shift = q - torus_displacement(q, &w[0]) - w[0];
            point_segment_distance(&(q - shift), &w[0], &w[1]).0
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest `j ≤ max_iter` with `f^j(q)` within `r` of `q` on the torus.
pub fn first_return(f: &LiftedMap, q: &TorusPoint, r: f64, max_iter: u32) -> Result<Option<(u32, TorusPoint)>> {
    if !(r > 0.0) {
        return Err(TangleError::InvalidParameter("return radius must be positive".into()));
    }
    let start = q.lift();
    let mut z = start;
    for j in 1..=max_iter {
        z = f.evaluate_lift(&z)?;
        // keep the orbit near the unit square so precision does not drift
        let rz = reduce(&z)?;
        z = rz.lift();
        if torus_distance(&z, &start) < r {
            return Ok(Some((j, rz)));
        }
    }
    Ok(None)
}
