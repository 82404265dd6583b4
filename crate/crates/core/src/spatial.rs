//! Segment geometry and uniform-grid indices over polylines, in the lift and
//! on the torus.

use std::collections::HashMap;

use crate::torus::LiftPoint;

#[inline]
pub fn cross(a: &LiftPoint, b: &LiftPoint) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Parameters `(t, u)` of the crossing `p0 + t(p1−p0) = q0 + u(q1−q0)`, both
/// in [0, 1]; `None` for disjoint or parallel segments.
pub fn segment_intersection(p0: &LiftPoint, p1: &LiftPoint, q0: &LiftPoint, q1: &LiftPoint) -> Option<(f64, f64)> {
    let dp = p1 - p0;
    let dq = q1 - q0;
    let denom = cross(&dp, &dq);
    if denom == 0.0 {
        return None;
    }
    let r = q0 - p0;
    let t = cross(&r, &dq) / denom;
    let u = cross(&r, &dp) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Distance from `p` to segment `ab` and the parameter of the closest point.
pub fn point_segment_distance(p: &LiftPoint, a: &LiftPoint, b: &LiftPoint) -> (f64, f64) {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) };
    ((a + d * t - p).norm(), t)
}

pub fn segment_distance(p0: &LiftPoint, p1: &LiftPoint, q0: &LiftPoint, q1: &LiftPoint) -> f64 {
    if segment_intersection(p0, p1, q0, q1).is_some() {
        return 0.0;
    }
    point_segment_distance(p0, q0, q1)
        .0
        .min(point_segment_distance(p1, q0, q1).0)
        .min(point_segment_distance(q0, p0, p1).0)
        .min(point_segment_distance(q1, p0, p1).0)
}

fn cell_of(v: f64, size: f64) -> i64 {
    (v / size).floor() as i64
}

/// Grid over the segments of a polyline in lift coordinates.
pub struct LiftIndex<'a> {
    points: &'a [LiftPoint],
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl<'a> LiftIndex<'a> {
    pub fn new(points: &'a [LiftPoint], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for i in 0..points.len().saturating_sub(1) {
            let (lo, hi) = (points[i].inf(&points[i + 1]), points[i].sup(&points[i + 1]));
            for cx in cell_of(lo.x, cell)..=cell_of(hi.x, cell) {
                for cy in cell_of(lo.y, cell)..=cell_of(hi.y, cell) {
                    cells.entry((cx, cy)).or_default().push(i as u32);
                }
            }
        }
        Self { points, cell, cells }
    }

    /// Nearest segment to `q` as `(distance, segment, t)`, searching rings of
    /// cells out to `max_radius` and falling back to a full scan.
    pub fn nearest(&self, q: &LiftPoint, max_radius: f64) -> Option<(f64, usize, f64)> {
        if self.points.len() < 2 {
            return None;
        }
        let (cx, cy) = (cell_of(q.x, self.cell), cell_of(q.y, self.cell));
        let max_ring = (max_radius / self.cell).ceil().max(1.0) as i64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut ring = 0i64;
        while ring <= max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    if let Some(segs) = self.cells.get(&(cx + dx, cy + dy)) {
                        for &s in segs {
                            let s = s as usize;
                            let (d, t) = point_segment_distance(q, &self.points[s], &self.points[s + 1]);
                            if best.is_none_or(|b| d < b.0 || (d == b.0 && s < b.1)) {
                                best = Some((d, s, t));
                            }
                        }
                    }
                }
            }
            // anything in ring r+1 is at least r·cell away
            if let Some(b) = best {
                if b.0 <= ring as f64 * self.cell {
                    return best;
                }
            }
            ring += 1;
        }
        if best.is_some() {
            return best;
        }
        (0..self.points.len() - 1)
            .map(|s| {
                let (d, t) = point_segment_distance(q, &self.points[s], &self.points[s + 1]);
                (d, s, t)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Grid over polyline segments projected to the torus. Each segment is
/// stored translated so its first endpoint lies in the unit square.
pub struct TorusIndex {
    segments: Vec<(LiftPoint, LiftPoint)>,
    ids: Vec<usize>,
    n: i64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

pub fn to_unit_square(a: &LiftPoint, b: &LiftPoint) -> (LiftPoint, LiftPoint) {
    let shift = LiftPoint::new(a.x.floor(), a.y.floor());
    (a - shift, b - shift)
}

/// The nine lattice offsets relating two segments whose first endpoints lie
/// in the unit square.
pub const OFFSETS: [(f64, f64); 9] =
    [(-1.0, -1.0), (-1.0, 0.0), (-1.0, 1.0), (0.0, -1.0), (0.0, 0.0), (0.0, 1.0), (1.0, -1.0), (1.0, 0.0), (1.0, 1.0)];

impl TorusIndex {
    /// Indexes segments `(points[i], points[i+1])` for `i` in `ids`, with
    /// cell size at least `cell` (rounded to divide 1).
    pub fn new(points: &[LiftPoint], ids: impl IntoIterator<Item = usize>, cell: f64) -> Self {
        let n = ((1.0 / cell).floor() as i64).clamp(1, 4096);
        let mut out = Self { segments: Vec::new(), ids: Vec::new(), n, cells: HashMap::new() };
        for i in ids {
            let (a, b) = to_unit_square(&points[i], &points[i + 1]);
            let k = out.segments.len() as u32;
            for c in out.cells_of(&a.inf(&b), &a.sup(&b), 0) {
                out.cells.entry(c).or_default().push(k);
            }
            out.segments.push((a, b));
            out.ids.push(i);
        }
        out
    }

    fn cells_of(&self, lo: &LiftPoint, hi: &LiftPoint, pad: i64) -> Vec<(i64, i64)> {
        let size = 1.0 / self.n as f64;
        let (x0, x1) = (cell_of(lo.x, size) - pad, cell_of(hi.x, size) + pad);
        let (y0, y1) = (cell_of(lo.y, size) - pad, cell_of(hi.y, size) + pad);
        let mut out = Vec::new();
        for cx in x0..=x1.min(x0 + self.n - 1) {
            for cy in y0..=y1.min(y0 + self.n - 1) {
                out.push((cx.rem_euclid(self.n), cy.rem_euclid(self.n)));
            }
        }
        out
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Indexed segments whose cells meet the box of `(a, b)` padded by `pad`
    /// cells, as `(original index, unit-square segment)`, each once and in
    /// increasing index order.
    pub fn candidates(&self, a: &LiftPoint, b: &LiftPoint, pad: i64) -> Vec<(usize, LiftPoint, LiftPoint)> {
        let mut ks: Vec<u32> = Vec::new();
        for c in self.cells_of(&a.inf(b), &a.sup(b), pad) {
            if let Some(v) = self.cells.get(&c) {
                ks.extend_from_slice(v);
            }
        }
        ks.sort_unstable();
        ks.dedup();
        ks.into_iter()
            .map(|k| {
                let (p, q) = self.segments[k as usize];
                (self.ids[k as usize], p, q)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> LiftPoint {
        LiftPoint::new(x, y)
    }

    #[test]
    fn crossing_parameters() {
        let (t, u) = segment_intersection(&p(0.0, 0.0), &p(1.0, 0.0), &p(0.25, -1.0), &p(0.25, 1.0)).unwrap();
        assert_eq!((t, u), (0.25, 0.5));
        assert!(segment_intersection(&p(0.0, 0.0), &p(1.0, 0.0), &p(0.0, 1.0), &p(1.0, 1.0)).is_none());
        assert!(segment_intersection(&p(0.0, 0.0), &p(1.0, 0.0), &p(2.0, -1.0), &p(2.0, 1.0)).is_none());
    }

    #[test]
    fn distances() {
        assert_eq!(point_segment_distance(&p(0.5, 1.0), &p(0.0, 0.0), &p(1.0, 0.0)), (1.0, 0.5));
        assert_eq!(point_segment_distance(&p(2.0, 0.0), &p(0.0, 0.0), &p(1.0, 0.0)), (1.0, 1.0));
        assert_eq!(segment_distance(&p(0.0, 0.0), &p(1.0, 0.0), &p(0.0, 2.0), &p(1.0, 3.0)), 2.0);
    }

    #[test]
    fn lift_index_matches_scan() {
        let pts: Vec<LiftPoint> = (0..500).map(|i| {
            let s = i as f64 * 0.01;
            p(s.cos() * (1.0 + 0.1 * s), s.sin() * (1.0 + 0.1 * s))
        }).collect();
        let idx = LiftIndex::new(&pts, 0.02);
        for q in [p(0.3, 0.2), p(-1.0, 0.5), p(5.0, 5.0), p(1.02, 0.0)] {
            let got = idx.nearest(&q, 0.05).unwrap();
            let scan = (0..pts.len() - 1)
                .map(|s| point_segment_distance(&q, &pts[s], &pts[s + 1]).0)
                .fold(f64::INFINITY, f64::min);
            assert!((got.0 - scan).abs() < 1e-15, "{q:?}: {} vs {scan}", got.0);
        }
    }

    #[test]
    fn torus_index_wraps() {
        let pts = vec![p(0.999, 0.5), p(1.001, 0.5)];
        let idx = TorusIndex::new(&pts, [0], 0.1);
        let c = idx.candidates(&p(0.0, 0.45), &p(0.0, 0.55), 0);
        assert_eq!(c.len(), 1);
        let c = idx.candidates(&p(0.95, 0.45), &p(0.99, 0.55), 0);
        assert_eq!(c.len(), 1);
    }
}
