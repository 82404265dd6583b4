//! Stable and unstable branches of hyperbolic periodic orbits, grown as
//! adaptive polylines in lift coordinates.
//!
//! A branch is parametrized by fundamental domains: a seed segment from
//! `P₁ = base ± d₀e` to its image, and its successive images under the step
//! map (`F^k − m` for unstable branches, its inverse for stable ones). Vertex
//! `(n, σ)` is the `n`-th image of the seed point at parameter σ, so new
//! vertices are always computed from the seed, never interpolated.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};
use crate::map::LiftedMap;
use crate::orbits::{Multipliers, PeriodicOrbit};
use crate::spatial::{cross, LiftIndex};
use crate::torus::{LatticeVector, LiftPoint};

/// Smallest σ gap that will still be split.
const MIN_SIGMA_GAP: f64 = 1e-13;
/// Safety cap on the number of fundamental domains.
const MAX_DOMAINS: usize = 10_000;
pub const RESIDUAL_STATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl BranchSign {
    pub fn factor(self) -> f64 {
        match self {
            BranchSign::Plus => 1.0,
            BranchSign::Minus => -1.0,
        }
    }
}

impl std::fmt::Display for BranchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BranchKind::Stable => "s",
            BranchKind::Unstable => "u",
        })
    }
}

impl std::fmt::Display for BranchSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BranchSign::Plus => "+",
            BranchSign::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSettings {
    pub d0: f64,
    pub max_spacing: f64,
    pub max_turn: f64,
    /// Bound on the estimated distance between a segment and the curve it spans.
    pub chord_tol: f64,
    pub max_length: f64,
    pub max_vertices: usize,
}

impl Default for GrowthSettings {
    fn default() -> Self {
        Self { d0: 1e-7, max_spacing: 1e-3, max_turn: 0.3, chord_tol: 5e-7, max_length: 50.0, max_vertices: 2_000_000 }
    }
}

impl GrowthSettings {
    pub fn with_length(max_length: f64) -> Self {
        Self { max_length, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.d0, self.max_spacing, self.max_turn, self.chord_tol, self.max_length]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && self.max_vertices >= 3;
        if ok {
            Ok(())
        } else {
            Err(TangleError::InvalidParameter("growth settings must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthStatus {
    /// Arc length reached `max_length`; the last domain is cut there.
    LengthReached,
    /// Vertex budget exhausted first; the branch is partial.
    VertexLimit,
    /// Domain cap reached without reaching the length target.
    DomainLimit,
}

/// The map advancing a branch by one fundamental domain, and its seed.
#[derive(Debug, Clone)]
pub struct BranchGenerator {
    pub step: LiftedMap,
    pub p1: LiftPoint,
    pub seed_end: LiftPoint,
}

impl BranchGenerator {
    pub fn seed(&self, sigma: f64) -> LiftPoint {
        if sigma == 1.0 {
            return self.seed_end;
        }
        self.p1 * (1.0 - sigma) + self.seed_end * sigma
    }

    /// Vertex at parameter σ of domain `n`.
    pub fn point(&self, domain: u32, sigma: f64) -> Result<LiftPoint> {
        let mut z = self.seed(sigma);
        for _ in 0..domain {
            z = self.step.evaluate_lift(&z)?;
        }
        Ok(z)
    }
}

#[derive(Debug, Clone)]
pub struct ManifoldBranch {
    pub orbit: PeriodicOrbit,
    pub kind: BranchKind,
    pub sign: BranchSign,
    pub settings: GrowthSettings,
    /// Iterates of the map per step; twice the orbit period when the
    /// multipliers are negative.
    pub step_period: u32,
    pub step_shift: LatticeVector,
    pub period_doubled: bool,
    pub polyline: Vec<LiftPoint>,
    pub arclen: Vec<f64>,
    /// Fundamental domain and seed parameter of each vertex after the first.
    pub domain: Vec<u32>,
    pub sigma: Vec<f64>,
    /// Vertex index where each domain starts.
    pub domain_starts: Vec<usize>,
    /// The last domain stops short of σ = 1.
    pub last_domain_truncated: bool,
    pub status: GrowthStatus,
    /// Segments left above a bound because their σ gap hit the floor.
    pub unresolved_segments: usize,
    pub generator: Option<BranchGenerator>,
}

impl ManifoldBranch {
    pub fn base(&self) -> LiftPoint {
        self.polyline[0]
    }

    pub fn length(&self) -> f64 {
        *self.arclen.last().unwrap_or(&0.0)
    }

    pub fn segment_count(&self) -> usize {
        self.polyline.len().saturating_sub(1)
    }

    pub fn direction(&self) -> LiftPoint {
        self.polyline[1] - self.polyline[0]
    }

    /// Point at arc length `s` along the polyline.
    pub fn point_at(&self, s: f64) -> LiftPoint {
        let (i, t) = self.locate(s);
        self.polyline[i] + (self.polyline[i + 1] - self.polyline[i]) * t
    }

    /// Segment index and fraction at arc length `s`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.polyline.len();
        let s = s.clamp(0.0, self.length());
        let i = match self.arclen.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let len = self.arclen[i + 1] - self.arclen[i];
        let t = if len > 0.0 { ((s - self.arclen[i]) / len).clamp(0.0, 1.0) } else { 0.0 };
        (i, t)
    }

    /// Point of the invariant curve spanned by segment `i` at fraction `t`,
    /// evaluated from the seed. Segments on the eigenline and branches without
    /// a generator fall back to the chord.
    pub fn curve_point(&self, i: usize, t: f64) -> Result<LiftPoint> {
        let chord = self.polyline[i] + (self.polyline[i + 1] - self.polyline[i]) * t;
        let Some(gen) = &self.generator else { return Ok(chord) };
        if i == 0 {
            return Ok(chord);
        }
        let (d0, d1) = (self.domain[i - 1], self.domain[i]);
        let (s0, s1) = (self.sigma[i - 1], self.sigma[i]);
        if d0 == d1 {
            gen.point(d0, s0 + (s1 - s0) * t)
        } else {
            // vertex i closes domain d0 and is also (d1, 0)
            gen.point(d1, s1 * t)
        }
    }
}

fn turn(a: &LiftPoint, b: &LiftPoint, c: &LiftPoint) -> f64 {
    let (u, v) = (b - a, c - b);
    cross(&u, &v).abs().atan2(u.dot(&v))
}

/// Builds the step map and the iterate count it represents.
pub fn step_map(orbit: &PeriodicOrbit, kind: BranchKind, f: &LiftedMap) -> Result<(LiftedMap, u32, LatticeVector, bool)> {
    let negative = matches!(orbit.multipliers, Multipliers::Real([a, _]) if a < 0.0);
    let (period, shift) = if negative {
        (orbit.period * 2, orbit.lattice_type.scale(2))
    } else {
        (orbit.period, orbit.lattice_type)
    };
    let forward = LiftedMap::compose(
        &LiftedMap::translation(-(shift.m as f64), -(shift.n as f64)),
        &LiftedMap::iterate(f, period)?,
    );
    let step = match kind {
        BranchKind::Unstable => forward,
        BranchKind::Stable => LiftedMap::inverse(&forward),
    };
    Ok((step, period, shift, negative))
}

struct Domain {
    sigma: Vec<f64>,
    pts: Vec<LiftPoint>,
}

struct Trace {
    polyline: Vec<LiftPoint>,
    arclen: Vec<f64>,
    domain: Vec<u32>,
    sigma: Vec<f64>,
    domain_starts: Vec<usize>,
}

impl Trace {
    /// Appends domain `n`, dropping its first vertex (shared with the previous
    /// domain) when `n > 0`; stops early at the length or vertex limit.
    fn flush(&mut self, d: &Domain, n: u32, s: &GrowthSettings) -> Option<GrowthStatus> {
        let skip = usize::from(n > 0);
        self.domain_starts.push(self.polyline.len() - skip);
        for i in skip..d.pts.len() {
            let last = *self.polyline.last().unwrap();
            let len = self.arclen.last().unwrap() + (d.pts[i] - last).norm();
            self.polyline.push(d.pts[i]);
            self.arclen.push(len);
            self.domain.push(n);
            self.sigma.push(d.sigma[i]);
            if len >= s.max_length {
                return Some(GrowthStatus::LengthReached);
            }
            if self.polyline.len() >= s.max_vertices {
                return Some(GrowthStatus::VertexLimit);
            }
        }
        None
    }
}

struct Grower<'a> {
    gen: &'a BranchGenerator,
    s: &'a GrowthSettings,
    unresolved: usize,
}

impl Grower<'_> {
    /// Splits segments of `cur` (domain `n`) until spacing, turning and chord
    /// bounds hold, including the turn at the junction with `prev`.
    fn refine(&mut self, n: u32, cur: &mut Domain, mut prev: Option<&mut Domain>, budget: usize) -> Result<()> {
        loop {
            if cur.pts.len() > budget {
                return Ok(());
            }
            let m = cur.pts.len();
            let mut split = vec![false; m - 1];
            let mut split_prev = false;
            let mut theta = vec![0.0f64; m];
            for i in 1..m - 1 {
                theta[i] = turn(&cur.pts[i - 1], &cur.pts[i], &cur.pts[i + 1]);
            }
            if let Some(p) = prev.as_deref() {
                let k = p.pts.len();
                if k >= 2 && m >= 2 {
                    theta[0] = turn(&p.pts[k - 2], &cur.pts[0], &cur.pts[1]);
                    if theta[0] > self.s.max_turn {
                        split[0] = true;
                        split_prev = p.sigma[k - 1] - p.sigma[k - 2] > MIN_SIGMA_GAP;
                    }
                }
            }
            for i in 0..m - 1 {
                let len = (cur.pts[i + 1] - cur.pts[i]).norm();
                let sag = 0.25 * len * theta[i].max(theta[i + 1]);
                if len > self.s.max_spacing || sag > self.s.chord_tol {
                    split[i] = true;
                }
                if i > 0 && theta[i] > self.s.max_turn {
                    split[i - 1] = true;
                    split[i] = true;
                }
            }
            let mut any = false;
            for (i, flag) in split.iter_mut().enumerate() {
                if *flag && cur.sigma[i + 1] - cur.sigma[i] <= MIN_SIGMA_GAP {
                    *flag = false;
                    self.unresolved += 1;
                }
                any |= *flag;
            }
            if split_prev {
                let p = prev.as_deref_mut().unwrap();
                let k = p.pts.len();
                let mid = 0.5 * (p.sigma[k - 2] + p.sigma[k - 1]);
                let q = self.gen.point(n - 1, mid)?;
                p.sigma.insert(k - 1, mid);
                p.pts.insert(k - 1, q);
                any = true;
            }
            if !any {
                return Ok(());
            }
            let mut sigma = Vec::with_capacity(m * 2);
            let mut pts = Vec::with_capacity(m * 2);
            for i in 0..m {
                sigma.push(cur.sigma[i]);
                pts.push(cur.pts[i]);
                if i + 1 < m && split[i] {
                    let mid = 0.5 * (cur.sigma[i] + cur.sigma[i + 1]);
                    sigma.push(mid);
                    pts.push(self.gen.point(n, mid)?);
                }
            }
            cur.sigma = sigma;
            cur.pts = pts;
        }
    }
}

/// Grows one branch of a hyperbolic orbit.
pub fn grow_branch(
    orbit: &PeriodicOrbit,
    kind: BranchKind,
    sign: BranchSign,
    settings: &GrowthSettings,
    f: &LiftedMap,
) -> Result<ManifoldBranch> {
    settings.validate()?;
    let frame = match (orbit.is_hyperbolic(), orbit.eigenframe) {
        (true, Some(fr)) => fr,
        _ => return Err(TangleError::NotHyperbolic(format!("orbit at {:?} is {:?}", orbit.base, orbit.class))),
    };
    let (step, step_period, step_shift, period_doubled) = step_map(orbit, kind, f)?;
    let e = match kind {
        BranchKind::Unstable => frame.unstable(),
        BranchKind::Stable => frame.stable(),
    };
    let base = orbit.base.lift();
    let p1 = base + e * (settings.d0 * sign.factor());
    let seed_end = step.evaluate_lift(&p1)?;
    let gen = BranchGenerator { step, p1, seed_end };
    let mut grower = Grower { gen: &gen, s: settings, unresolved: 0 };

    let mut out = Trace { polyline: vec![base], arclen: vec![0.0], domain: Vec::new(), sigma: Vec::new(), domain_starts: Vec::new() };
    let mut cur = Domain { sigma: vec![0.0, 1.0], pts: vec![p1, seed_end] };
    grower.refine(0, &mut cur, None, settings.max_vertices)?;
    let mut n: u32 = 0;
    let status = loop {
        // the next domain is refined before the current one is flushed, so the
        // junction check may still split the current domain's last segment
        let next = if (n as usize) + 1 < MAX_DOMAINS {
            let mut next = Domain {
                sigma: cur.sigma.clone(),
                pts: cur.pts.iter().map(|z| gen.step.evaluate_lift(z)).collect::<Result<_>>()?,
            };
            let budget = settings.max_vertices.saturating_sub(out.polyline.len() + cur.pts.len()) + 2;
            grower.refine(n + 1, &mut next, Some(&mut cur), budget)?;
            Some(next)
        } else {
            None
        };
        if let Some(st) = out.flush(&cur, n, settings) {
            break st;
        }
        match next {
            Some(d) => {
                cur = d;
                n += 1;
            }
            None => break GrowthStatus::DomainLimit,
        }
    };
    let truncated = out.sigma.last().is_some_and(|s| *s < 1.0);
    let Trace { polyline, arclen, domain: domain_of, sigma: sigma_of, domain_starts } = out;

    Ok(ManifoldBranch {
        orbit: orbit.clone(),
        kind,
        sign,
        settings: *settings,
        step_period,
        step_shift,
        period_doubled,
        polyline,
        arclen,
        domain: domain_of,
        sigma: sigma_of,
        domain_starts,
        last_domain_truncated: truncated,
        status,
        unresolved_segments: grower.unresolved,
        generator: Some(gen),
    })
}

/// Grows `B_u^+, B_u^−, B_s^+, B_s^−` of one orbit.
pub fn grow_all_branches(orbit: &PeriodicOrbit, settings: &GrowthSettings, f: &LiftedMap) -> Result<Vec<ManifoldBranch>> {
    let specs = [
        (BranchKind::Unstable, BranchSign::Plus),
        (BranchKind::Unstable, BranchSign::Minus),
        (BranchKind::Stable, BranchSign::Plus),
        (BranchKind::Stable, BranchSign::Minus),
    ];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        specs.par_iter().map(|&(k, s)| grow_branch(orbit, k, s, settings, f)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        specs.iter().map(|&(k, s)| grow_branch(orbit, k, s, settings, f)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceResidual {
    pub value: f64,
    /// No part of the branch has its image inside the computed extent.
    pub vacuous: bool,
    pub stations: usize,
}

/// Largest distance from the image of a branch point to the branch, over
/// evenly spaced arc-length stations whose images lie within the computed
/// extent (everything before the outermost fundamental domain).
pub fn branch_invariance_residual(b: &ManifoldBranch, f: &LiftedMap) -> Result<InvarianceResidual> {
    let (step, ..) = step_map(&b.orbit, b.kind, f)?;
    let limit = image_covered_length(b);
    if !(limit > 0.0) || b.polyline.len() < 3 {
        return Ok(InvarianceResidual { value: 0.0, vacuous: true, stations: 0 });
    }
    let index = LiftIndex::new(&b.polyline, b.settings.max_spacing);
    let mut worst: f64 = 0.0;
    for j in 0..RESIDUAL_STATIONS {
        let s = limit * (j as f64 + 0.5) / RESIDUAL_STATIONS as f64;
        let z = b.point_at(s);
        let w = step.evaluate_lift(&z)?;
        let (d, ..) = index.nearest(&w, 10.0 * b.settings.max_spacing).expect("branch has segments");
        worst = worst.max(d);
    }
    Ok(InvarianceResidual { value: worst, vacuous: false, stations: RESIDUAL_STATIONS })
}

/// Arc length up to which the step image of the branch is itself computed.
fn image_covered_length(b: &ManifoldBranch) -> f64 {
    let nd = b.domain_starts.len();
    if nd < 2 {
        return 0.0;
    }
    let last = (nd - 1) as u32;
    let cut = *b.sigma.last().unwrap();
    // last vertex of domain `last − 1` whose σ does not exceed the cut
    let start = b.domain_starts[nd - 2];
    let end = b.domain_starts[nd - 1];
    let mut best = None;
    for v in start.max(1)..=end {
        if b.domain[v - 1] == last - 1 && b.sigma[v - 1] <= cut {
            best = Some(v);
        }
    }
    match best {
        Some(v) => b.arclen[v],
        None => b.arclen[start],
    }
}
