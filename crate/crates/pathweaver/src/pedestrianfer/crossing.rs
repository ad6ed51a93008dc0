//! Crossing candidate generation, cost-based selection, and curb splitting.

use crate::geo::{
    self, point_at_arclength, polyline_length, segment_intersection, segments_cross_strict, Vec2,
};
use crate::street::{EdgeId, NodeId, StreetNetwork};

/// An open or closed sidewalk polyline in local meters.
#[derive(Debug, Clone)]
pub struct SidewalkPiece {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl SidewalkPiece {
    pub fn length(&self) -> f64 {
        let mut len = polyline_length(&self.points);
        if self.closed {
            len += self.points.last().unwrap().dist(self.points[0]);
        }
        len
    }

    /// Vertices including the closing repeat for closed pieces.
    pub fn walk_points(&self) -> Vec<Vec2> {
        let mut pts = self.points.clone();
        if self.closed {
            pts.push(self.points[0]);
        }
        pts
    }
}

/// Where a crossing hooks onto a sidewalk piece.
#[derive(Debug, Clone, Copy)]
pub struct Attachment {
    pub piece: usize,
    pub arclen: f64,
    pub point: Vec2,
}

#[derive(Debug, Clone)]
pub struct CrossingCandidate {
    pub street: EdgeId,
    pub sample_point: Vec2,
    pub street_dir: Vec2,
    pub left: Attachment,
    pub right: Attachment,
    pub dist_to_intersection_m: f64,
    pub length_m: f64,
    pub angle_dev_deg: f64,
}

impl CrossingCandidate {
    pub fn cost(&self, weights: (f64, f64, f64)) -> f64 {
        weights.0 * self.dist_to_intersection_m
            + weights.1 * self.length_m
            + weights.2 * self.angle_dev_deg
    }
}

/// Nearest point of `piece` strictly on one side of the street axis through
/// `q` with direction `dir` (`side` = +1 left, -1 right).
fn nearest_on_side(
    q: Vec2,
    dir: Vec2,
    side: f64,
    piece_idx: usize,
    piece: &SidewalkPiece,
    max_dist: f64,
) -> Option<Attachment> {
    let pts = piece.walk_points();
    let side_of = |p: Vec2| side * dir.cross(p.sub(q));
    let mut best: Option<(f64, Attachment)> = None;
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg = a.dist(b);
        if seg == 0.0 {
            continue;
        }
        let (fa, fb) = (side_of(a), side_of(b));
        // clip the segment to the requested side of the axis
        let (t0, t1) = if fa >= 0.0 && fb >= 0.0 {
            (0.0, 1.0)
        } else if fa < 0.0 && fb < 0.0 {
            acc += seg;
            continue;
        } else {
            let tc = fa / (fa - fb);
            if fa >= 0.0 {
                (0.0, tc)
            } else {
                (tc, 1.0)
            }
        };
        let ca = a.lerp(b, t0);
        let cb = a.lerp(b, t1);
        let (p, t) = geo::nearest_on_segment(q, ca, cb);
        let d = p.dist(q);
        if d <= max_dist && best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            let tt = t0 + t * (t1 - t0);
            best = Some((
                d,
                Attachment { piece: piece_idx, arclen: acc + tt * seg, point: p },
            ));
        }
        acc += seg;
    }
    best.map(|(_, a)| a)
}

/// Sampling/selection parameters for crossing generation.
#[derive(Debug, Clone, Copy)]
pub struct CrossingConfig {
    pub sample_start_m: f64,
    pub sample_step_m: f64,
    pub sample_max_m: f64,
    pub search_radius_m: f64,
    pub weights: (f64, f64, f64),
}

impl Default for CrossingConfig {
    fn default() -> Self {
        Self {
            sample_start_m: 2.0,
            sample_step_m: 2.0,
            sample_max_m: 25.0,
            search_radius_m: 40.0,
            weights: (1.0, 1.0, 0.5),
        }
    }
}

fn candidate_at(
    s: f64,
    street: EdgeId,
    geom: &[Vec2],
    net: &StreetNetwork,
    pieces: &[SidewalkPiece],
    cfg: &CrossingConfig,
) -> Option<CrossingCandidate> {
    let q = point_at_arclength(geom, s);
    let dir = geo::direction_at_arclength(geom, s);
    let left = pieces
        .iter()
        .enumerate()
        .filter_map(|(i, p)| nearest_on_side(q, dir, 1.0, i, p, cfg.search_radius_m))
        .min_by(|a, b| a.point.dist(q).partial_cmp(&b.point.dist(q)).unwrap())?;
    let right = pieces
        .iter()
        .enumerate()
        .filter_map(|(i, p)| nearest_on_side(q, dir, -1.0, i, p, cfg.search_radius_m))
        .min_by(|a, b| a.point.dist(q).partial_cmp(&b.point.dist(q)).unwrap())?;

    let line = right.point.sub(left.point);
    if line.norm() < 1e-9 {
        return None;
    }
    // reject candidates cutting through any *other* street centerline
    for e in &net.edges {
        if e.id == street {
            continue;
        }
        for w in e.geometry.windows(2) {
            if segments_cross_strict(left.point, right.point, w[0], w[1], 1e-9) {
                return None;
            }
        }
    }
    let cosang = (line.normalized().dot(dir)).abs().clamp(0.0, 1.0);
    let angle_between = cosang.acos().to_degrees(); // in [0, 90]
    let angle_dev = (90.0 - angle_between).abs();
    Some(CrossingCandidate {
        street,
        sample_point: q,
        street_dir: dir,
        left,
        right,
        dist_to_intersection_m: s,
        length_m: line.norm(),
        angle_dev_deg: angle_dev,
    })
}

/// Candidate crossings for one street incident to an intersection node.
///
/// Samples arc lengths s0, s0+step, ... up to sample_max (and within the
/// street), attaching the nearest left- and right-side sidewalk points.
pub fn generate_crossing_candidates(
    intersection: NodeId,
    street: EdgeId,
    net: &StreetNetwork,
    pieces: &[SidewalkPiece],
    cfg: &CrossingConfig,
) -> Vec<CrossingCandidate> {
    let edge = net.edge(street);
    let mut geom = edge.geometry.clone();
    if edge.endpoints.1 == intersection {
        geom.reverse();
    } else {
        debug_assert_eq!(edge.endpoints.0, intersection);
    }
    let len = polyline_length(&geom);
    let mut out = Vec::new();
    let mut s = cfg.sample_start_m;
    while s <= cfg.sample_max_m && s < len {
        if let Some(c) = candidate_at(s, street, &geom, net, pieces, cfg) {
            out.push(c);
        }
        s += cfg.sample_step_m;
    }
    out
}

/// Candidate anchored at a marked crossing point: the point is projected
/// onto the street and the nearest sidewalk attachments are used directly.
pub fn marked_candidate(
    intersection: NodeId,
    street: EdgeId,
    marked: Vec2,
    net: &StreetNetwork,
    pieces: &[SidewalkPiece],
    cfg: &CrossingConfig,
) -> Option<CrossingCandidate> {
    let edge = net.edge(street);
    let mut geom = edge.geometry.clone();
    if edge.endpoints.1 == intersection {
        geom.reverse();
    }
    let (_, s) = geo::nearest_on_polyline(marked, &geom);
    candidate_at(s, street, &geom, net, pieces, cfg)
}

/// Cost-minimizing candidate; ties broken by smaller distance, then index.
pub fn select_crossing<'a>(
    cands: &'a [CrossingCandidate],
    weights: (f64, f64, f64),
) -> Option<&'a CrossingCandidate> {
    let mut best: Option<(usize, &CrossingCandidate)> = None;
    for (i, c) in cands.iter().enumerate() {
        match best {
            None => best = Some((i, c)),
            Some((_, b)) => {
                let (cb, cc) = (b.cost(weights), c.cost(weights));
                if cc < cb
                    || (cc == cb && c.dist_to_intersection_m < b.dist_to_intersection_m)
                {
                    best = Some((i, c));
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Geometry of a crossing after curb splitting.
#[derive(Debug, Clone)]
pub enum CrossingSplit {
    Split {
        left_curb: Vec2,
        right_curb: Vec2,
        midpoint: Vec2,
    },
    /// Crossing shorter than 2x the setback: emit a single unsplit edge.
    TooShort,
}

/// Places curbs `setback` meters in from each end and a midpoint where the
/// crossing line meets the street centerline.
pub fn split_crossing(
    left: Vec2,
    right: Vec2,
    street_geometry: &[Vec2],
    curb_setback_m: f64,
) -> CrossingSplit {
    let length = left.dist(right);
    if length <= 2.0 * curb_setback_m {
        return CrossingSplit::TooShort;
    }
    let dir = right.sub(left).normalized();
    let left_curb = left.add(dir.scale(curb_setback_m));
    let right_curb = right.sub(dir.scale(curb_setback_m));
    let midpoint = street_geometry
        .windows(2)
        .find_map(|w| segment_intersection(left, right, w[0], w[1]))
        .unwrap_or_else(|| left.lerp(right, 0.5));
    CrossingSplit::Split { left_curb, right_curb, midpoint }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(dist: f64, len: f64, dev: f64) -> CrossingCandidate {
        let a = Attachment { piece: 0, arclen: 0.0, point: Vec2::new(0.0, 0.0) };
        CrossingCandidate {
            street: EdgeId(0),
            sample_point: Vec2::new(0.0, 0.0),
            street_dir: Vec2::new(0.0, 1.0),
            left: a,
            right: a,
            dist_to_intersection_m: dist,
            length_m: len,
            angle_dev_deg: dev,
        }
    }

    #[test]
    fn closer_candidate_dominates() {
        let cands = vec![cand(10.0, 8.0, 5.0), cand(2.0, 8.0, 5.0)];
        let sel = select_crossing(&cands, (1.0, 1.0, 0.5)).unwrap();
        assert_eq!(sel.dist_to_intersection_m, 2.0);
    }

    #[test]
    fn hand_computed_linear_combination() {
        // costs with w = (1, 1, 0.5): 2+10+15 = 27 vs 6+8+0 = 14
        let cands = vec![cand(2.0, 10.0, 30.0), cand(6.0, 8.0, 0.0)];
        let sel = select_crossing(&cands, (1.0, 1.0, 0.5)).unwrap();
        assert_eq!(sel.dist_to_intersection_m, 6.0);
    }

    #[test]
    fn argmin_invariant_under_weight_rescaling() {
        let cands = vec![cand(2.0, 10.0, 30.0), cand(6.0, 8.0, 0.0), cand(4.0, 9.0, 10.0)];
        for scale in [0.1, 1.0, 7.5, 1000.0] {
            let w = (1.0 * scale, 1.0 * scale, 0.5 * scale);
            let sel = select_crossing(&cands, w).unwrap();
            assert_eq!(sel.dist_to_intersection_m, 6.0);
        }
    }

    #[test]
    fn empty_candidates_yield_none() {
        assert!(select_crossing(&[], (1.0, 1.0, 0.5)).is_none());
    }

    #[test]
    fn split_ten_meter_crossing() {
        let street = [Vec2::new(5.0, -10.0), Vec2::new(5.0, 10.0)];
        let split = split_crossing(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), &street, 1.5);
        match split {
            CrossingSplit::Split { left_curb, right_curb, midpoint } => {
                assert!(left_curb.dist(Vec2::new(1.5, 0.0)) < 1e-9);
                assert!(right_curb.dist(Vec2::new(8.5, 0.0)) < 1e-9);
                assert!(midpoint.dist(Vec2::new(5.0, 0.0)) < 1e-6);
                // 1.5 m links, 3.5 m crossing halves
                assert!((left_curb.dist(midpoint) - 3.5).abs() < 1e-6);
            }
            CrossingSplit::TooShort => panic!("should split"),
        }
    }

    #[test]
    fn too_short_crossing_falls_back() {
        let street = [Vec2::new(1.25, -10.0), Vec2::new(1.25, 10.0)];
        let split = split_crossing(Vec2::new(0.0, 0.0), Vec2::new(2.5, 0.0), &street, 1.5);
        assert!(matches!(split, CrossingSplit::TooShort));
    }

    #[test]
    fn midpoint_on_centerline_for_oblique_street() {
        let street = [Vec2::new(4.0, -10.0), Vec2::new(6.0, 10.0)];
        let split = split_crossing(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), &street, 1.5);
        if let CrossingSplit::Split { midpoint, .. } = split {
            assert!(geo::dist_to_polyline(midpoint, &street) < 1e-6);
        } else {
            panic!("should split");
        }
    }
}
