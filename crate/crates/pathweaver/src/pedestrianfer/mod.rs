//! Pedestrian graph hypothesis from street centerlines: right-hand-turn
//! faces, offset sidewalks, cost-selected crossings, and curb splitting.

pub mod crossing;
pub mod faces;
pub mod offset;

use std::collections::HashMap;

use thiserror::Error;

use crate::geo::{point_at_arclength, polyline_length, Vec2};
use crate::pedgraph::{CurbState, EdgeKind, NodeKind, PedNodeId, PedestrianGraph, Provenance};
use crate::street::{
    build_directed, find_intersections, EdgeId, StreetError, StreetNetwork,
};

pub use crossing::{
    generate_crossing_candidates, marked_candidate, select_crossing, split_crossing, Attachment,
    CrossingCandidate, CrossingConfig, CrossingSplit, SidewalkPiece,
};
pub use faces::{enumerate_rht_faces, ClosedPath};
pub use offset::{offset_ring, OffsetRing, SegSource};

/// Whether sidewalks are hypothesized everywhere or only where the input
/// data flags them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Full,
    Metadata,
}

#[derive(Debug, Clone)]
pub struct PedestrianferConfig {
    pub regime: Regime,
    /// Default sidewalk offset when the edge carries none.
    pub offset_m: f64,
    /// Minimum emitted offset segment length.
    pub min_seg_len_m: f64,
    pub crossing: CrossingConfig,
    pub curb_setback_m: f64,
    pub min_intersection_degree: usize,
}

impl Default for PedestrianferConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Full,
            offset_m: 4.0,
            min_seg_len_m: 0.5,
            crossing: CrossingConfig::default(),
            curb_setback_m: 1.5,
            min_intersection_degree: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum HypothesizeError {
    #[error(transparent)]
    Street(#[from] StreetError),
}

/// Offsets one closed path and slices the ring by regime into sidewalk pieces.
/// Returns (pieces, degenerate) where degenerate flags a collapsed offset.
pub fn offset_sidewalk(
    path: &ClosedPath,
    net: &StreetNetwork,
    cfg: &PedestrianferConfig,
) -> (Vec<SidewalkPiece>, bool) {
    let dist: Vec<f64> = path
        .ring_sources
        .iter()
        .map(|h| {
            net.edge(h.edge())
                .sidewalk_meta
                .and_then(|m| m.offset_m)
                .unwrap_or(cfg.offset_m)
        })
        .collect();
    let Some(ring) = offset_ring(&path.ring, &path.ring_sources, &dist, cfg.min_seg_len_m)
    else {
        return (Vec::new(), true);
    };

    let keep: Vec<bool> = match cfg.regime {
        Regime::Full => vec![true; ring.sources.len()],
        Regime::Metadata => {
            let n = ring.sources.len();
            let straight_keep = |s: &SegSource| {
                let meta = net.edge(s.half_edge.edge()).sidewalk_meta;
                match meta {
                    None => false,
                    // forward half-edge offsets to the street's right side
                    Some(m) => {
                        if s.half_edge.is_forward() {
                            m.right
                        } else {
                            m.left
                        }
                    }
                }
            };
            (0..n)
                .map(|i| {
                    let s = ring.sources[i];
                    if !s.join {
                        return straight_keep(&s);
                    }
                    // join arcs survive only between two kept straight runs
                    let prev = (0..n)
                        .map(|k| (i + n - 1 - k) % n)
                        .find(|&j| !ring.sources[j].join);
                    let next = (0..n).map(|k| (i + 1 + k) % n).find(|&j| !ring.sources[j].join);
                    match (prev, next) {
                        (Some(p), Some(q)) => {
                            straight_keep(&ring.sources[p]) && straight_keep(&ring.sources[q])
                        }
                        _ => false,
                    }
                })
                .collect()
        }
    };
    (slice_ring(&ring, &keep), false)
}

fn slice_ring(ring: &OffsetRing, keep: &[bool]) -> Vec<SidewalkPiece> {
    let n = ring.points.len();
    if keep.iter().all(|&k| k) {
        return vec![SidewalkPiece { points: ring.points.clone(), closed: true }];
    }
    if keep.iter().all(|&k| !k) {
        return Vec::new();
    }
    let mut pieces = Vec::new();
    // run starts where a kept segment follows a dropped one
    for start in 0..n {
        if keep[start] && !keep[(start + n - 1) % n] {
            let mut pts = vec![ring.points[start]];
            let mut i = start;
            while keep[i] {
                pts.push(ring.points[(i + 1) % n]);
                i = (i + 1) % n;
            }
            if pts.len() >= 2 {
                pieces.push(SidewalkPiece { points: pts, closed: false });
            }
        }
    }
    pieces
}

fn sub_polyline(piece: &SidewalkPiece, t0: f64, mut t1: f64) -> Vec<Vec2> {
    let walk = piece.walk_points();
    let total = polyline_length(&walk);
    if piece.closed && t1 <= t0 + 1e-9 {
        t1 += total; // wrap-around arc, unrolled past the ring start
    }
    let mut out = vec![point_at_arclength(&walk, t0 % total.max(1e-12))];
    // interior vertices, unrolled once for wrap-around
    let mut acc = 0.0;
    let mut verts: Vec<(f64, Vec2)> = Vec::new();
    for w in walk.windows(2) {
        acc += w[0].dist(w[1]);
        verts.push((acc, w[1]));
    }
    if piece.closed {
        let extend: Vec<(f64, Vec2)> = verts.iter().map(|&(t, p)| (t + total, p)).collect();
        verts.extend(extend);
    }
    for &(t, p) in &verts {
        if t > t0 + 1e-9 && t < t1 - 1e-9 {
            out.push(p);
        }
    }
    let end = if piece.closed {
        point_at_arclength(&walk, t1 % total.max(1e-12))
    } else {
        point_at_arclength(&walk, t1.min(total))
    };
    out.push(end);
    out
}

#[derive(Debug, Clone)]
struct SelectedCrossing {
    street: EdgeId,
    cand: CrossingCandidate,
}

fn quantize(t: f64) -> i64 {
    (t / 1e-3).round() as i64
}

/// Full Pedestrianfer pass: sidewalks, crossings, curbs. All elements are
/// tagged `hypothesized`.
pub fn hypothesize(
    net: &StreetNetwork,
    cfg: &PedestrianferConfig,
) -> Result<PedestrianGraph, HypothesizeError> {
    let dg = build_directed(net)?;
    let paths = enumerate_rht_faces(&dg, net);

    let mut pieces: Vec<SidewalkPiece> = Vec::new();
    for path in &paths {
        let (mut p, _degenerate) = offset_sidewalk(path, net, cfg);
        pieces.append(&mut p);
    }

    // One crossing per incident street per intersection; marked crossing
    // points override the cost-based sampling for their street.
    let mut selected: Vec<SelectedCrossing> = Vec::new();
    for v in find_intersections(net, cfg.min_intersection_degree) {
        for street in net.incident_edges(v) {
            let edge = net.edge(street);
            let mut geom = edge.geometry.clone();
            if edge.endpoints.1 == v {
                geom.reverse();
            }
            let len = polyline_length(&geom);
            let marked_here: Vec<Vec2> = edge
                .marked_crossings
                .iter()
                .copied()
                .filter(|p| {
                    let (_, s) = crate::geo::nearest_on_polyline(*p, &geom);
                    s <= len / 2.0
                })
                .collect();
            if !marked_here.is_empty() {
                for m in marked_here {
                    if let Some(c) = marked_candidate(v, street, m, net, &pieces, &cfg.crossing)
                    {
                        selected.push(SelectedCrossing { street, cand: c });
                    }
                }
            } else {
                let cands =
                    generate_crossing_candidates(v, street, net, &pieces, &cfg.crossing);
                if let Some(c) = select_crossing(&cands, cfg.crossing.weights) {
                    selected.push(SelectedCrossing { street, cand: c.clone() });
                }
            }
        }
    }

    // Split sidewalk pieces at attachment arc lengths, registering endpoint
    // nodes so crossings can wire onto them.
    let mut graph = PedestrianGraph::new(net.anchor);
    let mut attach_ts: Vec<Vec<f64>> = vec![Vec::new(); pieces.len()];
    for sc in &selected {
        attach_ts[sc.cand.left.piece].push(sc.cand.left.arclen);
        attach_ts[sc.cand.right.piece].push(sc.cand.right.arclen);
    }
    let mut node_at: HashMap<(usize, i64), PedNodeId> = HashMap::new();
    for (pi, piece) in pieces.iter().enumerate() {
        let mut ts = attach_ts[pi].clone();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| quantize(*a) == quantize(*b));
        let mut register = |t: f64, graph: &mut PedestrianGraph| {
            let p = point_at_arclength(&piece.walk_points(), t);
            let id = graph.add_node(p, NodeKind::SidewalkEndpoint, None, Provenance::Hypothesized);
            node_at.insert((pi, quantize(t)), id);
            id
        };
        if piece.closed {
            if ts.is_empty() {
                let n0 = register(0.0, &mut graph);
                let geom = piece.walk_points();
                graph.add_edge((n0, n0), EdgeKind::Sidewalk, geom, Provenance::Hypothesized);
                continue;
            }
            let k = ts.len();
            let ids: Vec<PedNodeId> = ts.iter().map(|&t| register(t, &mut graph)).collect();
            for i in 0..k {
                let (t0, t1) = (ts[i], ts[(i + 1) % k]);
                let geom = sub_polyline(piece, t0, t1);
                if polyline_length(&geom) > 1e-9 {
                    graph.add_edge(
                        (ids[i], ids[(i + 1) % k]),
                        EdgeKind::Sidewalk,
                        geom,
                        Provenance::Hypothesized,
                    );
                }
            }
        } else {
            let total = piece.length();
            let mut full = vec![0.0];
            full.extend(ts.iter().copied());
            full.push(total);
            full.dedup_by(|a, b| quantize(*a) == quantize(*b));
            let ids: Vec<PedNodeId> = full.iter().map(|&t| register(t, &mut graph)).collect();
            for i in 0..full.len() - 1 {
                let geom = sub_polyline(piece, full[i], full[i + 1]);
                if polyline_length(&geom) > 1e-9 {
                    graph.add_edge(
                        (ids[i], ids[i + 1]),
                        EdgeKind::Sidewalk,
                        geom,
                        Provenance::Hypothesized,
                    );
                }
            }
        }
    }

    // Assemble crossings: 2 links + 2 crossing halves per split crossing.
    for sc in &selected {
        let left_id = node_at[&(sc.cand.left.piece, quantize(sc.cand.left.arclen))];
        let right_id = node_at[&(sc.cand.right.piece, quantize(sc.cand.right.arclen))];
        let left_p = graph.node(left_id).local_xy;
        let right_p = graph.node(right_id).local_xy;
        if left_id == right_id {
            continue; // both sides collapsed onto one node; no crossing possible
        }
        let street_geom = &net.edge(sc.street).geometry;
        match split_crossing(left_p, right_p, street_geom, cfg.curb_setback_m) {
            CrossingSplit::Split { left_curb, right_curb, midpoint } => {
                let lc = graph.add_node(
                    left_curb,
                    NodeKind::Curb,
                    Some(CurbState::Unknown),
                    Provenance::Hypothesized,
                );
                let rc = graph.add_node(
                    right_curb,
                    NodeKind::Curb,
                    Some(CurbState::Unknown),
                    Provenance::Hypothesized,
                );
                let mid = graph.add_node(
                    midpoint,
                    NodeKind::CrossingMidpoint,
                    None,
                    Provenance::Hypothesized,
                );
                graph.add_edge(
                    (left_id, lc),
                    EdgeKind::Link,
                    vec![left_p, left_curb],
                    Provenance::Hypothesized,
                );
                graph.add_edge(
                    (right_id, rc),
                    EdgeKind::Link,
                    vec![right_p, right_curb],
                    Provenance::Hypothesized,
                );
                graph.add_edge(
                    (lc, mid),
                    EdgeKind::Crossing,
                    vec![left_curb, midpoint],
                    Provenance::Hypothesized,
                );
                graph.add_edge(
                    (rc, mid),
                    EdgeKind::Crossing,
                    vec![right_curb, midpoint],
                    Provenance::Hypothesized,
                );
            }
            CrossingSplit::TooShort => {
                let id = graph.add_edge(
                    (left_id, right_id),
                    EdgeKind::Crossing,
                    vec![left_p, right_p],
                    Provenance::Hypothesized,
                );
                graph.edges[id.0].flagged = true;
            }
        }
    }

    Ok(graph)
}
