//! Torus and plane arithmetic: covering projection, lattice classes, closed
//! curves stored in lift coordinates, signed areas and algebraic
//! intersection numbers.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TangleError};

/// A point of the universal cover R².
pub type LiftPoint = Vector2<f64>;

/// Tolerance used when checking that a closed curve's endpoint displacement
/// is an integer vector.
pub const CLASS_TOL: f64 = 1e-9;

/// Offset used to push exact-touch configurations into general position.
const TOUCH_OFFSET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        reduce(&LiftPoint::new(x, y))
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn lift(&self) -> LiftPoint {
        LiftPoint::new(self.x, self.y)
    }

    /// Distance in the flat torus metric.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_displacement(&self.lift(), &other.lift()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeVector {
    pub m: i64,
    pub n: i64,
}

impl LatticeVector {
    pub const ZERO: LatticeVector = LatticeVector { m: 0, n: 0 };

    pub const fn new(m: i64, n: i64) -> Self {
        Self { m, n }
    }

    pub fn as_lift(&self) -> LiftPoint {
        LiftPoint::new(self.m as f64, self.n as f64)
    }

    /// Algebraic intersection pairing `m₁n₂ − n₁m₂`.
    pub fn pairing(&self, other: &LatticeVector) -> i64 {
        self.m * other.n - self.n * other.m
    }

    /// Nearest lattice vector to a real displacement.
    pub fn nearest(v: &LiftPoint) -> Self {
        Self { m: v.x.round() as i64, n: v.y.round() as i64 }
    }

    pub fn scale(&self, k: i64) -> Self {
        Self { m: self.m * k, n: self.n * k }
    }
}

impl std::ops::Add for LatticeVector {
    type Output = LatticeVector;
    fn add(self, rhs: Self) -> Self {
        LatticeVector::new(self.m + rhs.m, self.n + rhs.n)
    }
}

impl std::fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.m, self.n)
    }
}

fn reduce_component(v: f64) -> f64 {
    let r = v - v.floor();
    // v slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Covering projection R² → T².
pub fn reduce(p: &LiftPoint) -> Result<TorusPoint> {
    if !p.x.is_finite() || !p.y.is_finite() {
        return Err(TangleError::NonFinite(p.x, p.y));
    }
    Ok(TorusPoint { x: reduce_component(p.x), y: reduce_component(p.y) })
}

/// Shortest displacement `a − b` modulo Z², components in [−½, ½].
pub fn torus_displacement(a: &LiftPoint, b: &LiftPoint) -> LiftPoint {
    let d = a - b;
    LiftPoint::new(d.x - d.x.round(), d.y - d.y.round())
}

pub fn torus_distance(a: &LiftPoint, b: &LiftPoint) -> f64 {
    torus_displacement(a, b).norm()
}

/// An oriented closed curve on the torus, stored as a polyline in the lift
/// whose last vertex is the first vertex translated by the curve's class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    vertices: Vec<LiftPoint>,
    class: LatticeVector,
}

impl ClosedCurve {
    /// Builds a curve from lift vertices `P₀..P_N` and a declared class. The
    /// last vertex must equal `P₀ + class` to within [`CLASS_TOL`]; it is
    /// then snapped so the identity holds exactly.
    pub fn new(mut vertices: Vec<LiftPoint>, class: LatticeVector) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(TangleError::MalformedCurve(format!(
                "need at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(TangleError::NonFinite(p.x, p.y));
        }
        for (i, w) in vertices.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(TangleError::MalformedCurve(format!(
                    "consecutive vertices {i} and {} coincide",
                    i + 1
                )));
            }
        }
        let d = vertices[vertices.len() - 1] - vertices[0];
        let c = class.as_lift();
        if (d - c).amax() > CLASS_TOL {
            return Err(TangleError::ClassMismatch { dx: d.x, dy: d.y, m: class.m, n: class.n });
        }
        let last = vertices.len() - 1;
        vertices[last] = vertices[0] + c;
        Ok(Self { vertices, class })
    }

    /// Infers the class by rounding the endpoint displacement.
    pub fn from_vertices(vertices: Vec<LiftPoint>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(TangleError::MalformedCurve("need at least 2 vertices".into()));
        }
        let d = vertices[vertices.len() - 1] - vertices[0];
        Self::new(vertices, LatticeVector::nearest(&d))
    }

    /// Straight loop from `origin` to `origin + class`, split into `segments` pieces.
    pub fn straight(origin: LiftPoint, class: LatticeVector, segments: usize) -> Result<Self> {
        let segments = segments.max(1);
        let c = class.as_lift();
        let vertices = (0..=segments).map(|i| origin + c * (i as f64 / segments as f64)).collect();
        Self::new(vertices, class)
    }

    /// The horizontal generator a₁: y = 0, traversed in +x.
    pub fn generator_a() -> Self {
        Self::straight(LiftPoint::zeros(), LatticeVector::new(1, 0), 1).expect("static curve")
    }

    /// The vertical generator b₁: x = 0, traversed in +y.
    pub fn generator_b() -> Self {
        Self::straight(LiftPoint::zeros(), LatticeVector::new(0, 1), 1).expect("static curve")
    }

    pub fn vertices(&self) -> &[LiftPoint] {
        &self.vertices
    }

    pub fn class(&self) -> LatticeVector {
        self.class
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn reversed(&self) -> Self {
        let vertices = self.vertices.iter().rev().copied().collect();
        Self { vertices, class: LatticeVector::new(-self.class.m, -self.class.n) }
    }

    /// Same curve translated by a real offset.
    pub fn translated(&self, by: &LiftPoint) -> Self {
        Self { vertices: self.vertices.iter().map(|p| p + by).collect(), class: self.class }
    }

    /// Subdivides segments by arc length so the curve has at least
    /// `min_vertices` vertices. Original vertices are kept.
    pub fn refined(&self, min_vertices: usize) -> Self {
        let segs = self.segment_count();
        if self.vertices.len() >= min_vertices {
            return self.clone();
        }
        let total = self.length();
        let target = (min_vertices - 1).max(segs);
        let mut out = Vec::with_capacity(target + segs + 1);
        out.push(self.vertices[0]);
        for w in self.vertices.windows(2) {
            let len = (w[1] - w[0]).norm();
            let pieces = ((len / total * target as f64).round() as usize).max(1);
            for j in 1..=pieces {
                out.push(w[0] + (w[1] - w[0]) * (j as f64 / pieces as f64));
            }
        }
        let last = out.len() - 1;
        out[last] = out[0] + self.class.as_lift();
        Self { vertices: out, class: self.class }
    }
}

/// Class of a closed curve, re-derived from its vertices.
pub fn curve_class(c: &ClosedCurve) -> Result<LatticeVector> {
    let v = c.vertices();
    let d = v[v.len() - 1] - v[0];
    let class = LatticeVector::nearest(&d);
    if (d - class.as_lift()).amax() > CLASS_TOL || class != c.class {
        return Err(TangleError::ClassMismatch { dx: d.x, dy: d.y, m: c.class.m, n: c.class.n });
    }
    Ok(class)
}

/// Shoelace area of a closed lift polygon given without the repeated last vertex.
pub fn shoelace(points: &[LiftPoint]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let origin = points[0];
    let mut acc = 0.0;
    for i in 0..points.len() {
        let a = points[i] - origin;
        let b = points[(i + 1) % points.len()] - origin;
        acc += a.x * b.y - a.y * b.x;
    }
    0.5 * acc
}

/// Signed (counter-clockwise positive) area enclosed by a null-homologous curve.
pub fn signed_area(c: &ClosedCurve) -> Result<f64> {
    let class = curve_class(c)?;
    if class != LatticeVector::ZERO {
        return Err(TangleError::EssentialCurve(class.m, class.n));
    }
    let v = c.vertices();
    Ok(shoelace(&v[..v.len() - 1]))
}

fn cross(a: &LiftPoint, b: &LiftPoint) -> f64 {
    a.x * b.y - a.y * b.x
}

enum Touch {
    Clean(i64),
    Degenerate(LiftPoint),
}

/// Signed transverse crossings between the torus projections of two closed
/// curves, counting each crossing once via half-open segment parameters.
fn polyline_crossings(c1: &ClosedCurve, c2: &ClosedCurve) -> Touch {
    let a = c1.vertices();
    let b = c2.vertices();
    let mut count = 0i64;
    for i in 0..a.len() - 1 {
        let (p0, p1) = (a[i], a[i + 1]);
        let da = p1 - p0;
        let (amin, amax) = (p0.inf(&p1), p0.sup(&p1));
        for j in 0..b.len() - 1 {
            let (q0, q1) = (b[j], b[j + 1]);
            let db = q1 - q0;
            let (bmin, bmax) = (q0.inf(&q1), q0.sup(&q1));
            // lattice shifts v with (segment b + v) overlapping segment a's box
            let mlo = (amin.x - bmax.x).ceil() as i64;
            let mhi = (amax.x - bmin.x).floor() as i64;
            let nlo = (amin.y - bmax.y).ceil() as i64;
            let nhi = (amax.y - bmin.y).floor() as i64;
            for m in mlo..=mhi {
                for n in nlo..=nhi {
                    let shift = LiftPoint::new(m as f64, n as f64);
                    let r = q0 + shift - p0;
                    let denom = cross(&da, &db);
                    let scale = da.norm() * db.norm();
                    if denom.abs() <= 1e-14 * scale {
                        // parallel: only matters if collinear and overlapping
                        if cross(&r, &da).abs() <= 1e-14 * da.norm() * (r.norm() + 1.0) {
                            let t0 = r.dot(&da) / da.norm_squared();
                            let t1 = (r + db).dot(&da) / da.norm_squared();
                            if t0.max(t1) >= 0.0 && t0.min(t1) <= 1.0 {
                                return Touch::Degenerate(LiftPoint::new(-da.y, da.x).normalize());
                            }
                        }
                        continue;
                    }
                    let t = cross(&r, &db) / denom;
                    let u = cross(&r, &da) / denom;
                    let eps = 1e-13;
                    if t < -eps || t > 1.0 + eps || u < -eps || u > 1.0 + eps {
                        continue;
                    }
                    let near_end = |s: f64| s.abs() <= eps || (s - 1.0).abs() <= eps;
                    if near_end(t) || near_end(u) {
                        return Touch::Degenerate(LiftPoint::new(-db.y, db.x).normalize());
                    }
                    count += if denom > 0.0 { 1 } else { -1 };
                }
            }
        }
    }
    Touch::Clean(count)
}

/// Signed count of transverse crossings between the projections of two
/// closed curves. Touching configurations are resolved by translating `c2`
/// by a tiny slanted offset.
pub fn polyline_intersection_count(c1: &ClosedCurve, c2: &ClosedCurve) -> Result<i64> {
    let mut moved = c2.clone();
    for attempt in 0..8 {
        match polyline_crossings(c1, &moved) {
            Touch::Clean(k) => return Ok(k),
            Touch::Degenerate(normal) => {
                // move off the touch along the normal plus an irrational slant so
                // endpoints on either curve cannot stay aligned
                let slant = LiftPoint::new(0.618_033_988_749_895, 0.414_213_562_373_095);
                let shift = (normal + slant) * (TOUCH_OFFSET * f64::powi(2.0, attempt));
                moved = c2.translated(&shift);
            }
        }
    }
    Err(TangleError::MalformedCurve("could not resolve degenerate crossing configuration".into()))
}

/// Algebraic intersection number of two closed curves. The lattice pairing
/// of the classes is returned after checking it against
/// [`polyline_intersection_count`].
pub fn intersection_number(c1: &ClosedCurve, c2: &ClosedCurve) -> Result<i64> {
    let lattice = curve_class(c1)?.pairing(&curve_class(c2)?);
    let polyline = polyline_intersection_count(c1, c2)?;
    if polyline != lattice {
        return Err(TangleError::IntersectionMismatch { polyline, lattice });
    }
    Ok(lattice)
}
