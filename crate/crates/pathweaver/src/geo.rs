//! Planar geometry primitives shared across the crate.
//!
//! All computation happens in a region-local planar frame (meters, x east,
//! y north) obtained from WGS84 lon/lat by an equirectangular projection
//! about a fixed anchor.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A point (or free vector) in the local planar frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product `self × o`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            Vec2::new(0.0, 0.0)
        } else {
            self.scale(1.0 / n)
        }
    }

    /// Unit vector rotated 90° clockwise (to the right of travel direction).
    pub fn right_normal(self) -> Vec2 {
        let u = self.normalized();
        Vec2::new(u.y, -u.x)
    }

    /// Bearing in degrees clockwise from north (+y), in [0, 360).
    pub fn bearing_deg(self) -> f64 {
        let b = self.x.atan2(self.y).to_degrees();
        if b < 0.0 {
            b + 360.0
        } else {
            b
        }
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self.add(o.sub(self).scale(t))
    }
}

/// Longitude/latitude in degrees (WGS84).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Equirectangular projection about a fixed anchor.
///
/// x = R · Δlon · cos(lat₀), y = R · Δlat. Adequate for intersection-scale
/// regions (< a few km), invertible everywhere away from the poles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    pub anchor: LonLat,
}

impl LocalProjection {
    pub fn new(anchor: LonLat) -> Self {
        Self { anchor }
    }

    pub fn project(&self, p: LonLat) -> Vec2 {
        let coslat = self.anchor.lat.to_radians().cos();
        Vec2::new(
            EARTH_RADIUS_M * (p.lon - self.anchor.lon).to_radians() * coslat,
            EARTH_RADIUS_M * (p.lat - self.anchor.lat).to_radians(),
        )
    }

    pub fn unproject(&self, p: Vec2) -> LonLat {
        let coslat = self.anchor.lat.to_radians().cos();
        LonLat::new(
            self.anchor.lon + (p.x / (EARTH_RADIUS_M * coslat)).to_degrees(),
            self.anchor.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
        )
    }
}

/// Axis-aligned bounding rectangle in local meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bbox {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bbox {
    pub fn empty() -> Self {
        Self {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn include(&mut self, p: Vec2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Vec2>) -> Self {
        let mut b = Self::empty();
        for p in pts {
            b.include(*p);
        }
        b
    }

    pub fn expanded(&self, m: f64) -> Bbox {
        Bbox {
            min: Vec2::new(self.min.x - m, self.min.y - m),
            max: Vec2::new(self.max.x + m, self.max.y + m),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }
}

/// Total polyline length.
pub fn polyline_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Point at arc length `s` along the polyline, clamped to its endpoints.
pub fn point_at_arclength(pts: &[Vec2], s: f64) -> Vec2 {
    debug_assert!(pts.len() >= 2);
    if s <= 0.0 {
        return pts[0];
    }
    let mut rem = s;
    for w in pts.windows(2) {
        let seg = w[0].dist(w[1]);
        if rem <= seg && seg > 0.0 {
            return w[0].lerp(w[1], rem / seg);
        }
        rem -= seg;
    }
    *pts.last().unwrap()
}

/// Unit direction of the polyline at arc length `s`.
pub fn direction_at_arclength(pts: &[Vec2], s: f64) -> Vec2 {
    debug_assert!(pts.len() >= 2);
    let mut rem = s.max(0.0);
    for w in pts.windows(2) {
        let seg = w[0].dist(w[1]);
        if rem <= seg && seg > 0.0 {
            return w[1].sub(w[0]).normalized();
        }
        rem -= seg;
    }
    let n = pts.len();
    pts[n - 1].sub(pts[n - 2]).normalized()
}

/// Nearest point on segment a-b to p, with the parameter t in [0,1].
pub fn nearest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> (Vec2, f64) {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    (a.add(ab.scale(t)), t)
}

/// Distance from p to the polyline.
pub fn dist_to_polyline(p: Vec2, pts: &[Vec2]) -> f64 {
    pts.windows(2)
        .map(|w| nearest_on_segment(p, w[0], w[1]).0.dist(p))
        .fold(f64::INFINITY, f64::min)
}

/// Nearest point on the polyline to p, with the arc length at that point.
pub fn nearest_on_polyline(p: Vec2, pts: &[Vec2]) -> (Vec2, f64) {
    let mut best = (pts[0], 0.0);
    let mut best_d = f64::INFINITY;
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let (q, t) = nearest_on_segment(p, w[0], w[1]);
        let d = q.dist(p);
        let seg = w[0].dist(w[1]);
        if d < best_d {
            best_d = d;
            best = (q, acc + t * seg);
        }
        acc += seg;
    }
    best
}

/// Proper + endpoint intersection of segments p1-p2 and p3-p4.
///
/// Returns the intersection point when the open interiors cross or one
/// endpoint lies on the other segment. Collinear overlap returns None.
pub fn segment_intersection(p1: Vec2, p2: Vec2, p3: Vec2, p4: Vec2) -> Option<Vec2> {
    let r = p2.sub(p1);
    let s = p4.sub(p3);
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let qp = p3.sub(p1);
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(p1.add(r.scale(t)))
    } else {
        None
    }
}

/// Strictly-interior segment crossing (excludes shared endpoints within eps).
pub fn segments_cross_strict(p1: Vec2, p2: Vec2, p3: Vec2, p4: Vec2, eps: f64) -> bool {
    match segment_intersection(p1, p2, p3, p4) {
        None => false,
        Some(x) => {
            x.dist(p1) > eps && x.dist(p2) > eps && x.dist(p3) > eps && x.dist(p4) > eps
        }
    }
}

/// Shoelace signed area of a ring (last point implicitly joins the first).
/// Positive for counterclockwise in the x-east / y-north frame.
pub fn signed_area(ring: &[Vec2]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        a += p.cross(q);
    }
    a * 0.5
}

/// Even-odd point-in-polygon, strict interior: boundary points are outside.
pub fn point_in_polygon(p: Vec2, ring: &[Vec2]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    // Boundary check first so the crossing count below never has to resolve
    // on-edge ambiguity.
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let (q, _) = nearest_on_segment(p, a, b);
        if q.dist(p) < 1e-12 {
            return false;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < xint {
                inside = !inside;
            }
        }
    }
    inside
}

/// True when no two non-adjacent ring segments intersect.
pub fn ring_is_simple(ring: &[Vec2]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a1 = ring[i];
        let a2 = ring[(i + 1) % n];
        for j in (i + 1)..n {
            // skip adjacent segments (shared vertex)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            if segment_intersection(a1, a2, ring[j], ring[(j + 1) % n]).is_some() {
                return false;
            }
        }
    }
    true
}

/// Clip a convex polygon by the half-plane `{ p : n·p <= d }` (Sutherland–Hodgman step).
pub fn clip_halfplane(poly: &[Vec2], normal: Vec2, d: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let cur = poly[i];
        let nxt = poly[(i + 1) % n];
        let cin = normal.dot(cur) <= d;
        let nin = normal.dot(nxt) <= d;
        if cin {
            out.push(cur);
        }
        if cin != nin {
            let fc = normal.dot(cur);
            let fn_ = normal.dot(nxt);
            let t = (d - fc) / (fn_ - fc);
            out.push(cur.lerp(nxt, t));
        }
    }
    out
}

/// Clip segment a-b to a convex polygon; returns the retained sub-segment.
pub fn clip_segment_to_convex(a: Vec2, b: Vec2, poly: &[Vec2]) -> Option<(Vec2, Vec2)> {
    // Cyrus–Beck against each edge's inward half-plane. Polygon must be CCW.
    let n = poly.len();
    let d = b.sub(a);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for i in 0..n {
        let e0 = poly[i];
        let e1 = poly[(i + 1) % n];
        let edge = e1.sub(e0);
        // inward normal for CCW polygon
        let normal = Vec2::new(-edge.y, edge.x);
        let num = normal.dot(a.sub(e0));
        let den = normal.dot(d);
        if den.abs() < 1e-15 {
            if num < 0.0 {
                return None; // parallel and outside
            }
            continue;
        }
        let t = -num / den;
        if den > 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((a.lerp(b, t0), a.lerp(b, t1)))
}

/// Densify a polyline so that no segment exceeds `step` in length.
/// Returns midpoint samples with their lengths: (sample point, step length).
pub fn densified_samples(pts: &[Vec2], step: f64) -> Vec<(Vec2, f64)> {
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let len = w[0].dist(w[1]);
        if len == 0.0 {
            continue;
        }
        let k = (len / step).ceil().max(1.0) as usize;
        let sub = len / k as f64;
        for i in 0..k {
            let t = (i as f64 + 0.5) / k as f64;
            out.push((w[0].lerp(w[1], t), sub));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_round_trips() {
        let proj = LocalProjection::new(LonLat::new(-122.3, 47.6));
        for &(lon, lat) in &[(-122.301, 47.601), (-122.29, 47.59), (-122.3, 47.6)] {
            let p = LonLat::new(lon, lat);
            let back = proj.unproject(proj.project(p));
            assert!((back.lon - lon).abs() < 1e-9);
            assert!((back.lat - lat).abs() < 1e-9);
        }
    }

    #[test]
    fn bearing_cardinals() {
        assert!((Vec2::new(0.0, 1.0).bearing_deg() - 0.0).abs() < 1e-12);
        assert!((Vec2::new(1.0, 0.0).bearing_deg() - 90.0).abs() < 1e-12);
        assert!((Vec2::new(0.0, -1.0).bearing_deg() - 180.0).abs() < 1e-12);
        assert!((Vec2::new(-1.0, 0.0).bearing_deg() - 270.0).abs() < 1e-12);
    }

    #[test]
    fn signed_area_orientation() {
        let ccw = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!((signed_area(&ccw) - 1.0).abs() < 1e-12);
        let cw: Vec<Vec2> = ccw.iter().rev().cloned().collect();
        assert!((signed_area(&cw) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_in_polygon_strictness() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &sq));
        assert!(!point_in_polygon(Vec2::new(0.0, 1.0), &sq)); // on boundary
        assert!(!point_in_polygon(Vec2::new(3.0, 1.0), &sq));
    }

    #[test]
    fn segment_clip_to_square() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        let (a, b) =
            clip_segment_to_convex(Vec2::new(-1.0, 1.0), Vec2::new(3.0, 1.0), &sq).unwrap();
        assert!(a.dist(Vec2::new(0.0, 1.0)) < 1e-12);
        assert!(b.dist(Vec2::new(2.0, 1.0)) < 1e-12);
        assert!(
            clip_segment_to_convex(Vec2::new(-1.0, 3.0), Vec2::new(3.0, 3.0), &sq).is_none()
        );
    }

    #[test]
    fn arclength_walks() {
        let pl = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)];
        assert!((polyline_length(&pl) - 20.0).abs() < 1e-12);
        assert!(point_at_arclength(&pl, 15.0).dist(Vec2::new(10.0, 5.0)) < 1e-12);
        assert!(direction_at_arclength(&pl, 15.0).dist(Vec2::new(0.0, 1.0)) < 1e-12);
    }
}
