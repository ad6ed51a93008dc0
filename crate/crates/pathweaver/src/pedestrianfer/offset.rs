//! Right-side polyline offsetting with miter/round joins and loop trimming.
//!
//! Each directed ring segment is shifted to its right by the offset
//! distance. Right turns are joined by intersecting the adjacent offset
//! lines; left turns get a miter up to 2x the offset, then a round join
//! sampled at <= 15 degree steps (dead-end U-turns become round caps).
//! Self-intersection loops produced at reflex corners are trimmed away.

use crate::geo::{segment_intersection, segments_cross_strict, signed_area, Vec2};
use crate::street::HalfEdgeId;

const ROUND_STEP_DEG: f64 = 15.0;

/// Provenance of one offset-ring segment.
#[derive(Debug, Clone, Copy)]
pub struct SegSource {
    pub half_edge: HalfEdgeId,
    /// True for join/cap arc segments (no single street side).
    pub join: bool,
}

/// A closed offset ring; segment i runs points[i] -> points[(i+1) % n].
#[derive(Debug, Clone)]
pub struct OffsetRing {
    pub points: Vec<Vec2>,
    pub sources: Vec<SegSource>,
}

impl OffsetRing {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_self_intersections(&self) -> bool {
        find_self_intersection(&self.points).is_some()
    }
}

fn line_intersect(p: Vec2, u: Vec2, q: Vec2, v: Vec2) -> Option<Vec2> {
    let denom = u.cross(v);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = q.sub(p).cross(v) / denom;
    Some(p.add(u.scale(t)))
}

/// Offsets a closed ring to the right of its traversal direction.
///
/// `dist` gives the per-segment offset distance (same length as `sources`).
/// Returns None when the offset degenerates (the curve collapses, e.g. the
/// offset exceeds the face inradius for an interior ring).
pub fn offset_ring(
    ring: &[Vec2],
    sources: &[HalfEdgeId],
    dist: &[f64],
    min_seg_len: f64,
) -> Option<OffsetRing> {
    assert_eq!(ring.len(), sources.len());
    assert_eq!(ring.len(), dist.len());

    // Drop zero-length input segments.
    let mut pts: Vec<Vec2> = Vec::with_capacity(ring.len());
    let mut srcs: Vec<HalfEdgeId> = Vec::new();
    let mut ds: Vec<f64> = Vec::new();
    for i in 0..ring.len() {
        let a = ring[i];
        let b = ring[(i + 1) % ring.len()];
        if a.dist(b) > 1e-9 {
            pts.push(a);
            srcs.push(sources[i]);
            ds.push(dist[i]);
        }
    }
    let n = pts.len();
    if n < 2 {
        return None;
    }

    let dir: Vec<Vec2> = (0..n)
        .map(|i| pts[(i + 1) % n].sub(pts[i]).normalized())
        .collect();
    let nrm: Vec<Vec2> = dir.iter().map(|d| d.right_normal()).collect();

    let input_area = signed_area(&pts);

    let mut out_pts: Vec<Vec2> = Vec::new();
    let mut out_src: Vec<SegSource> = Vec::new();
    // expected travel direction of the straight segment starting at each point
    let mut out_dir: Vec<Option<Vec2>> = Vec::new();

    for i in 0..n {
        let p = (i + n - 1) % n; // previous segment
        let v = pts[i];
        let end_prev = v.add(nrm[p].scale(ds[p]));
        let start_next = v.add(nrm[i].scale(ds[i]));
        let turn = dir[p].cross(dir[i]);

        if end_prev.dist(start_next) < 1e-9 {
            out_pts.push(start_next);
            out_src.push(SegSource { half_edge: srcs[i], join: false });
            out_dir.push(Some(dir[i]));
            continue;
        }

        if turn < -1e-12 {
            // Right turn: adjacent offset lines cross on the inside.
            let x = line_intersect(end_prev, dir[p], start_next, dir[i])
                .unwrap_or(start_next);
            out_pts.push(x);
            out_src.push(SegSource { half_edge: srcs[i], join: false });
            out_dir.push(Some(dir[i]));
            continue;
        }

        // Left turn or U-turn: miter within limit, else round join.
        let limit = 2.0 * ds[p].max(ds[i]);
        if let Some(x) = line_intersect(end_prev, dir[p], start_next, dir[i]) {
            if turn > 1e-12 && x.dist(v) <= limit {
                out_pts.push(x);
                out_src.push(SegSource { half_edge: srcs[i], join: false });
                out_dir.push(Some(dir[i]));
                continue;
            }
        }
        let a0 = nrm[p].y.atan2(nrm[p].x);
        let a1 = nrm[i].y.atan2(nrm[i].x);
        let mut sweep = a1 - a0;
        while sweep <= 1e-12 {
            sweep += std::f64::consts::TAU;
        }
        let steps = (sweep.to_degrees() / ROUND_STEP_DEG).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let ang = a0 + sweep * t;
            let r = ds[p] + (ds[i] - ds[p]) * t;
            out_pts.push(v.add(Vec2::new(ang.cos(), ang.sin()).scale(r)));
            out_src.push(SegSource { half_edge: srcs[i], join: k < steps });
            out_dir.push(if k < steps { None } else { Some(dir[i]) });
        }
    }

    // Inward offset past the face inradius inverts the curve: the straight
    // offset segments come out running against their source direction.
    // Checked before trimming, while indices still align.
    if input_area < 0.0 {
        let m = out_pts.len();
        let mut net_forward = 0.0;
        for k in 0..m {
            if let Some(d) = out_dir[k] {
                net_forward += out_pts[(k + 1) % m].sub(out_pts[k]).dot(d);
            }
        }
        if net_forward <= 0.0 {
            return None;
        }
    }

    let mut result = OffsetRing { points: out_pts, sources: out_src };
    trim_loops(&mut result);
    collapse_short_segments(&mut result, min_seg_len);

    if result.points.len() < 3 {
        return None;
    }
    // Interior (clockwise) rings must stay clockwise after inward offset;
    // a sign flip means the offset exceeded the face inradius.
    if input_area < 0.0 && signed_area(&result.points) >= 0.0 {
        return None;
    }
    Some(result)
}

fn find_self_intersection(pts: &[Vec2]) -> Option<(usize, usize, Vec2)> {
    let n = pts.len();
    for i in 0..n {
        let a1 = pts[i];
        let a2 = pts[(i + 1) % n];
        for j in (i + 1)..n {
            // skip cyclically adjacent segments
            if (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            if segments_cross_strict(a1, a2, pts[j], pts[(j + 1) % n], 1e-9) {
                let x = segment_intersection(a1, a2, pts[j], pts[(j + 1) % n]).unwrap();
                return Some((i, j, x));
            }
        }
    }
    None
}

/// Removes the smaller enclosed loop at each self-intersection.
fn trim_loops(ring: &mut OffsetRing) {
    for _ in 0..1000 {
        let Some((i, j, x)) = find_self_intersection(&ring.points) else {
            return;
        };
        let n = ring.points.len();
        // Loop A: x -> points[i+1 ..= j] -> x
        let mut loop_a = vec![x];
        loop_a.extend_from_slice(&ring.points[i + 1..=j]);
        // Loop B: the complement
        let mut loop_b = vec![x];
        loop_b.extend_from_slice(&ring.points[j + 1..]);
        loop_b.extend_from_slice(&ring.points[..=i]);
        let area_a = signed_area(&loop_a).abs();
        let area_b = signed_area(&loop_b).abs();

        if area_a <= area_b {
            // keep complement: points[0..=i], x, points[j+1..]
            let mut pts = Vec::with_capacity(n - (j - i) + 1);
            let mut srcs = Vec::with_capacity(pts.capacity());
            pts.extend_from_slice(&ring.points[..=i]);
            srcs.extend_from_slice(&ring.sources[..=i]);
            pts.push(x);
            srcs.push(ring.sources[j]); // x -> points[j+1] is the tail of segment j
            if j + 1 < n {
                pts.extend_from_slice(&ring.points[j + 1..]);
                srcs.extend_from_slice(&ring.sources[j + 1..]);
            }
            ring.points = pts;
            ring.sources = srcs;
        } else {
            // keep the enclosed loop: x, points[i+1..=j]
            let mut pts = Vec::with_capacity(j - i + 1);
            let mut srcs = Vec::with_capacity(pts.capacity());
            pts.push(x);
            srcs.push(ring.sources[i]); // x -> points[i+1] is the tail of segment i
            pts.extend_from_slice(&ring.points[i + 1..=j]);
            srcs.extend_from_slice(&ring.sources[i + 1..=j]);
            // last stored source covers points[j] -> x (head of segment j): already srcs[j-i]
            ring.points = pts;
            ring.sources = srcs;
        }
    }
}

fn collapse_short_segments(ring: &mut OffsetRing, min_len: f64) {
    if min_len <= 0.0 {
        return;
    }
    let mut pts: Vec<Vec2> = Vec::with_capacity(ring.points.len());
    let mut srcs: Vec<SegSource> = Vec::with_capacity(ring.sources.len());
    for i in 0..ring.points.len() {
        let p = ring.points[i];
        if let Some(last) = pts.last() {
            if last.dist(p) < min_len {
                continue;
            }
        }
        pts.push(p);
        srcs.push(ring.sources[i]);
    }
    // close-up: last point too close to first
    while pts.len() > 3 && pts.last().unwrap().dist(pts[0]) < min_len {
        pts.pop();
        srcs.pop();
    }
    ring.points = pts;
    ring.sources = srcs;
}
