//! Corner-polygon optimization against the corner_bulb probability plane:
//! constrained SPSA over per-corner affine warps, mean-probability pruning,
//! graph rebuild, and edge confidence annotation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geo::{ring_is_simple, LonLat, Vec2};
use crate::pedgraph::{EdgeKind, NodeKind, PedEdge, PedNodeId, PedestrianGraph, Provenance};
use crate::raster::{pixels_in_polygon, ProbabilityRaster, RasterError};
use crate::street::{find_intersections, NodeId, StreetNetwork};

pub const CORNER_BULB_CLASS: &str = "corner_bulb";

/// The sidewalk-endpoint and curb nodes of one street corner, ordered
/// counterclockwise about their centroid.
#[derive(Debug, Clone)]
pub struct CornerGroup {
    pub intersection: NodeId,
    pub node_ids: Vec<PedNodeId>,
    /// False for groups with fewer than 3 nodes; they are never optimized.
    pub optimizable: bool,
}

impl CornerGroup {
    pub fn polygon(&self, g: &PedestrianGraph) -> Vec<Vec2> {
        self.node_ids.iter().map(|id| g.node(*id).local_xy).collect()
    }
}

/// Affine warp in pixel coordinates, applied about the group centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t1: f64,
    pub t2: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0, c: 0.0, d: 1.0, t1: 0.0, t2: 0.0 }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn as_vec(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.t1, self.t2]
    }

    pub fn from_vec(v: [f64; 6]) -> Self {
        Self { a: v[0], b: v[1], c: v[2], d: v[3], t1: v[4], t2: v[5] }
    }

    /// Scales the matrix part so |det| stays within [lo, hi].
    pub fn clamp_det(&mut self, lo: f64, hi: f64) {
        let det = self.det().abs();
        if det < 1e-9 {
            // unrecoverable collapse; reset the matrix part
            *self = Self { t1: self.t1, t2: self.t2, ..Self::identity() };
            return;
        }
        let scale = if det < lo {
            (lo / det).sqrt()
        } else if det > hi {
            (hi / det).sqrt()
        } else {
            return;
        };
        self.a *= scale;
        self.b *= scale;
        self.c *= scale;
        self.d *= scale;
    }
}

#[derive(Debug, Clone)]
pub struct SpsaConfig {
    pub iterations: usize,
    pub a: f64,
    pub c: f64,
    pub a_stability: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Perturbation/step scale applied to the four matrix coordinates
    /// relative to the translation coordinates. Matrix entries are
    /// dimensionless while translations are in pixels, so an unscaled
    /// perturbation of +-c would dwarf the polygon; see spsa_optimize.
    pub matrix_scale: f64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            a: 50.0,
            c: 2.0,
            a_stability: 10.0,
            alpha: 0.602,
            gamma: 0.101,
            seed: 0,
            matrix_scale: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    pub spsa: SpsaConfig,
    pub prune_threshold: f64,
    pub confidence_buffer_m: f64,
    /// Corners whose identity-warp score falls below this are left
    /// unoptimized (but kept).
    pub s_min: f64,
    /// Re-check mu_p with the optimized warp and drop late failures.
    pub recheck_after_optimize: bool,
    pub group_radius_m: f64,
    pub min_intersection_degree: usize,
    pub det_bounds: (f64, f64),
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            spsa: SpsaConfig::default(),
            prune_threshold: 0.3,
            confidence_buffer_m: 1.0,
            s_min: 0.0,
            recheck_after_optimize: false,
            group_radius_m: 30.0,
            min_intersection_degree: 3,
            det_bounds: (0.25, 4.0),
        }
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("inputs use different local frames: anchors {0:?} vs {1:?}")]
    AnchorMismatch(LonLat, LonLat),
    #[error("corner decision references unknown node {0}")]
    UnknownNode(usize),
}

/// Partitions the corner-candidate nodes around one intersection into groups
/// by the angular sector between consecutive incident streets.
pub fn group_corner_nodes(
    g: &PedestrianGraph,
    intersection: NodeId,
    net: &StreetNetwork,
    radius_m: f64,
) -> Vec<CornerGroup> {
    let streets = net.incident_edges(intersection);
    if streets.len() < 2 {
        return Vec::new();
    }
    let center = net.node(intersection).local_xy;
    // bearing of each street leaving the intersection
    let mut bearings: Vec<f64> = streets
        .iter()
        .map(|&e| {
            let edge = net.edge(e);
            let dir = if edge.endpoints.0 == intersection {
                edge.geometry[1].sub(edge.geometry[0])
            } else {
                edge.geometry[edge.geometry.len() - 2]
                    .sub(edge.geometry[edge.geometry.len() - 1])
            };
            dir.bearing_deg()
        })
        .collect();
    bearings.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bearings.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let k = bearings.len();
    if k < 2 {
        return Vec::new();
    }

    let mut sector_nodes: Vec<Vec<PedNodeId>> = vec![Vec::new(); k];
    for n in &g.nodes {
        if !matches!(n.kind, NodeKind::SidewalkEndpoint | NodeKind::Curb) {
            continue;
        }
        let off = n.local_xy.sub(center);
        if off.norm() > radius_m || off.norm() < 1e-9 {
            continue;
        }
        let bearing = off.bearing_deg();
        // sector i spans [bearings[i], bearings[i+1]) going clockwise
        let mut si = k - 1;
        for i in 0..k {
            let lo = bearings[i];
            let hi = bearings[(i + 1) % k];
            let span = (hi - lo).rem_euclid(360.0);
            let rel = (bearing - lo).rem_euclid(360.0);
            let span = if span == 0.0 { 360.0 } else { span };
            if rel < span {
                si = i;
                break;
            }
        }
        sector_nodes[si].push(n.id);
    }

    let mut out = Vec::new();
    for ids in sector_nodes {
        if ids.is_empty() {
            continue;
        }
        let pts: Vec<Vec2> = ids.iter().map(|id| g.node(*id).local_xy).collect();
        let cx = pts.iter().fold(Vec2::new(0.0, 0.0), |s, p| s.add(*p)).scale(1.0 / pts.len() as f64);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        // ascending math angle = counterclockwise
        order.sort_by(|&i, &j| {
            let ai = (pts[i].y - cx.y).atan2(pts[i].x - cx.x);
            let aj = (pts[j].y - cx.y).atan2(pts[j].x - cx.x);
            ai.partial_cmp(&aj).unwrap().then(ids[i].cmp(&ids[j]))
        });
        let node_ids: Vec<PedNodeId> = order.into_iter().map(|i| ids[i]).collect();
        let optimizable = node_ids.len() >= 3;
        out.push(CornerGroup { intersection, node_ids, optimizable });
    }
    out
}

/// Warps the group polygon (pixel coordinates, about its centroid) and
/// projects every warped point into the open raster bounds.
pub fn warp_polygon_px(
    poly_world: &[Vec2],
    theta: &AffineParams,
    r: &ProbabilityRaster,
) -> Vec<Vec2> {
    let px: Vec<Vec2> = poly_world
        .iter()
        .map(|p| {
            let (c, rr) = r.world_to_pixel(*p);
            Vec2::new(c, rr)
        })
        .collect();
    let n = px.len() as f64;
    let cx = px.iter().fold(Vec2::new(0.0, 0.0), |s, p| s.add(*p)).scale(1.0 / n);
    let eps = 1e-6;
    px.iter()
        .map(|p| {
            let q = p.sub(cx);
            let warped = Vec2::new(
                theta.a * q.x + theta.b * q.y + cx.x + theta.t1,
                theta.c * q.x + theta.d * q.y + cx.y + theta.t2,
            );
            Vec2::new(
                warped.x.clamp(eps, r.width as f64 - eps),
                warped.y.clamp(eps, r.height as f64 - eps),
            )
        })
        .collect()
}

/// Sum of corner_bulb probabilities over pixels strictly inside the warped
/// polygon, plus the pixel count. A self-intersecting warp scores (0, 0).
pub fn polygon_score(
    poly_world: &[Vec2],
    theta: &AffineParams,
    r: &ProbabilityRaster,
) -> Result<(f64, usize), RasterError> {
    r.class_index(CORNER_BULB_CLASS)?;
    if poly_world.len() < 3 {
        return Ok((0.0, 0));
    }
    let warped_px = warp_polygon_px(poly_world, theta, r);
    if !ring_is_simple(&warped_px) {
        return Ok((0.0, 0));
    }
    let world: Vec<Vec2> = warped_px.iter().map(|p| r.pixel_to_world(p.x, p.y)).collect();
    let samples = pixels_in_polygon(r, &world, CORNER_BULB_CLASS)?;
    let g: f64 = samples.iter().map(|s| s.p).sum();
    Ok((g, samples.len()))
}

/// mu_p = g / m, or 0 when no pixels are covered.
pub fn mean_polygon_probability(
    poly_world: &[Vec2],
    theta: &AffineParams,
    r: &ProbabilityRaster,
) -> Result<f64, RasterError> {
    let (g, m) = polygon_score(poly_world, theta, r)?;
    Ok(if m == 0 { 0.0 } else { g / m as f64 })
}

/// SPSA maximization of the polygon score over theta, starting at identity.
///
/// Returns the best-seen theta and the per-iteration score trace. The four
/// matrix coordinates are perturbed and stepped at `matrix_scale` times the
/// translation scale: translations are in pixels while matrix entries are
/// dimensionless, and an unscaled +-c perturbation of the matrix would throw
/// every evaluation into degenerate territory and kill the gradient signal.
pub fn spsa_optimize(
    poly_world: &[Vec2],
    r: &ProbabilityRaster,
    cfg: &SpsaConfig,
    det_bounds: (f64, f64),
    seed: u64,
) -> Result<(AffineParams, Vec<f64>), RasterError> {
    r.class_index(CORNER_BULB_CLASS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = [
        cfg.matrix_scale,
        cfg.matrix_scale,
        cfg.matrix_scale,
        cfg.matrix_scale,
        1.0,
        1.0,
    ];

    let mut theta = AffineParams::identity();
    let (mut best_g, m_id) = polygon_score(poly_world, &theta, r)?;
    let mut best_theta = theta;
    let mut trace = Vec::with_capacity(cfg.iterations);
    // normalize the gradient by the polygon's pixel coverage so the step
    // size is comparable between small corner triangles and large bulbs
    let norm = m_id.max(1) as f64;

    for k in 0..cfg.iterations {
        let ak = cfg.a / ((k as f64) + 1.0 + cfg.a_stability).powf(cfg.alpha);
        let ck = cfg.c / ((k as f64) + 1.0).powf(cfg.gamma);
        let delta: [f64; 6] = std::array::from_fn(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 });

        let mut plus = theta.as_vec();
        let mut minus = theta.as_vec();
        for i in 0..6 {
            plus[i] += ck * delta[i] * scales[i];
            minus[i] -= ck * delta[i] * scales[i];
        }
        let (gp, _) = polygon_score(poly_world, &AffineParams::from_vec(plus), r)?;
        let (gm, _) = polygon_score(poly_world, &AffineParams::from_vec(minus), r)?;

        let mut v = theta.as_vec();
        for i in 0..6 {
            // ascent on g; gradient estimate uses the same per-coordinate scale
            let ghat = (gp - gm) / (norm * 2.0 * ck * delta[i] * scales[i]);
            v[i] += ak * ghat * scales[i] * scales[i];
        }
        theta = AffineParams::from_vec(v);
        theta.clamp_det(det_bounds.0, det_bounds.1);

        let (g_now, _) = polygon_score(poly_world, &theta, r)?;
        trace.push(g_now);
        if g_now > best_g {
            best_g = g_now;
            best_theta = theta;
        }
    }
    Ok((best_theta, trace))
}

/// What refinement decided for one corner group.
#[derive(Debug, Clone)]
pub enum CornerDecision {
    /// New world positions per node, in group order.
    Keep { positions: Vec<Vec2> },
    Drop,
}

#[derive(Debug, Clone)]
pub struct CornerOutcome {
    pub group: CornerGroup,
    pub decision: CornerDecision,
    pub mu_p: f64,
}

/// Applies corner decisions: drops pruned corners (removing their nodes,
/// incident links, and whole crossings), moves kept corners to optimized
/// positions, splices sidewalks through removed endpoints, and recomputes
/// crossing midpoints.
pub fn prune_and_rebuild(
    g: &PedestrianGraph,
    outcomes: &[CornerOutcome],
) -> Result<PedestrianGraph, RefineError> {
    let n_nodes = g.nodes.len();
    for o in outcomes {
        for id in &o.group.node_ids {
            if id.0 >= n_nodes {
                return Err(RefineError::UnknownNode(id.0));
            }
        }
    }

    let mut removed_node = vec![false; n_nodes];
    let mut new_pos: Vec<Option<Vec2>> = vec![None; n_nodes];
    for o in outcomes {
        match &o.decision {
            CornerDecision::Drop => {
                for id in &o.group.node_ids {
                    removed_node[id.0] = true;
                }
            }
            CornerDecision::Keep { positions } => {
                for (id, p) in o.group.node_ids.iter().zip(positions.iter()) {
                    new_pos[id.0] = Some(*p);
                }
            }
        }
    }

    let mut removed_edge = vec![false; g.edges.len()];
    for e in &g.edges {
        if removed_node[e.endpoints.0 .0] || removed_node[e.endpoints.1 .0] {
            removed_edge[e.id.0] = true;
        }
    }

    // A crossing dies whole: when one half goes, the midpoint and the other
    // half go too.
    let mut changed = true;
    while changed {
        changed = false;
        for e in &g.edges {
            if e.kind != EdgeKind::Crossing || !removed_edge[e.id.0] {
                continue;
            }
            for &nid in [e.endpoints.0, e.endpoints.1].iter() {
                if g.node(nid).kind == NodeKind::CrossingMidpoint && !removed_node[nid.0] {
                    removed_node[nid.0] = true;
                    changed = true;
                }
            }
        }
        for e in &g.edges {
            if !removed_edge[e.id.0]
                && (removed_node[e.endpoints.0 .0] || removed_node[e.endpoints.1 .0])
            {
                removed_edge[e.id.0] = true;
                changed = true;
            }
        }
    }

    // Splice sidewalk pairs that met at a removed endpoint.
    let mut spliced: Vec<PedEdge> = Vec::new();
    let mut consumed = vec![false; g.edges.len()];
    for nid in 0..n_nodes {
        if !removed_node[nid] || g.nodes[nid].kind != NodeKind::SidewalkEndpoint {
            continue;
        }
        let incident: Vec<&PedEdge> = g
            .edges
            .iter()
            .filter(|e| {
                e.kind == EdgeKind::Sidewalk
                    && !consumed[e.id.0]
                    && (e.endpoints.0 .0 == nid || e.endpoints.1 .0 == nid)
            })
            .collect();
        if incident.len() == 2 {
            let (ea, eb) = (incident[0], incident[1]);
            // orient both away from the removed node, then join them
            let orient = |e: &PedEdge| -> (PedNodeId, Vec<Vec2>) {
                if e.endpoints.0 .0 == nid {
                    (e.endpoints.1, e.geometry.clone())
                } else {
                    let mut gg = e.geometry.clone();
                    gg.reverse();
                    (e.endpoints.0, gg)
                }
            };
            let (na, mut ga) = orient(ea);
            let (nb, gb) = orient(eb);
            ga.reverse(); // now runs na -> removed node
            let mut geom = ga;
            geom.extend_from_slice(&gb[1..]);
            consumed[ea.id.0] = true;
            consumed[eb.id.0] = true;
            spliced.push(PedEdge {
                id: ea.id, // placeholder; reassigned on copy
                endpoints: (na, nb),
                kind: EdgeKind::Sidewalk,
                geometry: geom,
                confidence: None,
                provenance: ea.provenance,
                flagged: ea.flagged || eb.flagged,
            });
        }
    }

    // Copy surviving nodes with optimized positions.
    let mut out = PedestrianGraph::new(g.anchor);
    let mut id_map: Vec<Option<PedNodeId>> = vec![None; n_nodes];
    for n in &g.nodes {
        if removed_node[n.id.0] {
            continue;
        }
        let (pos, prov) = match new_pos[n.id.0] {
            Some(p) => (p, Provenance::Optimized),
            None => (n.local_xy, n.provenance),
        };
        let id = PedNodeId(out.nodes.len());
        out.nodes.push(crate::pedgraph::PedNode {
            id,
            local_xy: pos,
            kind: n.kind,
            curb_state: n.curb_state,
            provenance: prov,
        });
        id_map[n.id.0] = Some(id);
    }

    let push_edge = |e: &PedEdge, out: &mut PedestrianGraph| {
        let (Some(a), Some(b)) = (id_map[e.endpoints.0 .0], id_map[e.endpoints.1 .0]) else {
            return;
        };
        let moved = new_pos[e.endpoints.0 .0].is_some() || new_pos[e.endpoints.1 .0].is_some();
        let geometry = match e.kind {
            // links and crossings are short; rebuild as straight lines
            EdgeKind::Link | EdgeKind::Crossing if moved => {
                vec![out.node(a).local_xy, out.node(b).local_xy]
            }
            // sidewalks keep their interior shape, re-anchored at the ends
            EdgeKind::Sidewalk if moved => {
                let mut gg = e.geometry.clone();
                if !gg.is_empty() {
                    gg[0] = out.node(a).local_xy;
                    let last = gg.len() - 1;
                    gg[last] = out.node(b).local_xy;
                }
                gg
            }
            _ => e.geometry.clone(),
        };
        let id = out.add_edge((a, b), e.kind, geometry, e.provenance);
        out.edges[id.0].flagged = e.flagged;
        out.edges[id.0].confidence = e.confidence;
    };

    for e in &g.edges {
        if removed_edge[e.id.0] || consumed[e.id.0] {
            continue;
        }
        push_edge(e, &mut out);
    }
    for e in &spliced {
        push_edge(e, &mut out);
    }

    // Recompute crossing midpoints from their (possibly moved) curbs.
    let inc = out.incidence();
    for n in 0..out.nodes.len() {
        if out.nodes[n].kind != NodeKind::CrossingMidpoint {
            continue;
        }
        let curbs: Vec<Vec2> = inc[n]
            .iter()
            .filter_map(|eid| {
                let e = out.edge(*eid);
                if e.kind != EdgeKind::Crossing {
                    return None;
                }
                let other = if e.endpoints.0 .0 == n { e.endpoints.1 } else { e.endpoints.0 };
                Some(out.node(other).local_xy)
            })
            .collect();
        if curbs.len() == 2 {
            out.nodes[n].local_xy = curbs[0].lerp(curbs[1], 0.5);
        }
    }
    // Normalize crossing/link geometry to match node positions exactly.
    for ei in 0..out.edges.len() {
        let e = &out.edges[ei];
        if matches!(e.kind, EdgeKind::Crossing | EdgeKind::Link) {
            let a = out.nodes[e.endpoints.0 .0].local_xy;
            let b = out.nodes[e.endpoints.1 .0].local_xy;
            out.edges[ei].geometry = vec![a, b];
        }
    }

    Ok(out)
}

/// Mean probability of the edge's raster class over a buffered corridor
/// polygon around its geometry. Zero covered pixels scores 0 (flagged by
/// the caller).
pub fn edge_confidence(
    e: &PedEdge,
    r: &ProbabilityRaster,
    buffer_m: f64,
) -> Result<f64, RasterError> {
    let class = match e.kind {
        EdgeKind::Sidewalk => "sidewalk",
        // no link class exists in the raster; links live on crossings
        EdgeKind::Crossing | EdgeKind::Link => "crossing",
    };
    let ci = r.class_index(class)?;
    let poly = buffer_polyline(&e.geometry, buffer_m);
    if poly.len() < 3 {
        return Ok(0.0);
    }
    let samples = pixels_in_polygon(r, &poly, class)?;
    let _ = ci;
    if samples.is_empty() {
        return Ok(0.0);
    }
    Ok(samples.iter().map(|s| s.p).sum::<f64>() / samples.len() as f64)
}

/// Flat-capped buffer polygon: left offsets forward, right offsets backward.
pub fn buffer_polyline(pts: &[Vec2], buffer_m: f64) -> Vec<Vec2> {
    if pts.len() < 2 {
        return Vec::new();
    }
    let n = pts.len();
    let seg_normal = |i: usize| -> Vec2 {
        pts[i + 1].sub(pts[i]).normalized().right_normal().scale(-1.0) // left normal
    };
    let vertex_normal = |i: usize| -> Vec2 {
        if i == 0 {
            seg_normal(0)
        } else if i == n - 1 {
            seg_normal(n - 2)
        } else {
            let avg = seg_normal(i - 1).add(seg_normal(i));
            if avg.norm() < 1e-9 {
                seg_normal(i)
            } else {
                avg.normalized()
            }
        }
    };
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let nm = vertex_normal(i);
        left.push(pts[i].add(nm.scale(buffer_m)));
        right.push(pts[i].sub(nm.scale(buffer_m)));
    }
    right.reverse();
    left.extend(right);
    left
}

/// End-to-end refinement: group corners at every intersection, prune by
/// initial mean probability, SPSA-optimize survivors, rebuild the graph,
/// and annotate every edge with confidence.
pub fn refine_graph(
    hypo: &PedestrianGraph,
    r: &ProbabilityRaster,
    net: &StreetNetwork,
    cfg: &RefineConfig,
) -> Result<PedestrianGraph, RefineError> {
    if (hypo.anchor.lon - r.anchor.lon).abs() > 1e-12
        || (hypo.anchor.lat - r.anchor.lat).abs() > 1e-12
    {
        return Err(RefineError::AnchorMismatch(hypo.anchor, r.anchor));
    }
    if (hypo.anchor.lon - net.anchor.lon).abs() > 1e-12
        || (hypo.anchor.lat - net.anchor.lat).abs() > 1e-12
    {
        return Err(RefineError::AnchorMismatch(hypo.anchor, net.anchor));
    }
    r.class_index(CORNER_BULB_CLASS)?;

    let mut outcomes: Vec<CornerOutcome> = Vec::new();
    let mut corner_id: u64 = 0;
    for v in find_intersections(net, cfg.min_intersection_degree) {
        for group in group_corner_nodes(hypo, v, net, cfg.group_radius_m) {
            let this_id = corner_id;
            corner_id += 1;
            if !group.optimizable {
                continue; // skipped and left as hypothesized
            }
            let poly = group.polygon(hypo);
            let identity = AffineParams::identity();
            let mu0 = mean_polygon_probability(&poly, &identity, r)?;
            if mu0 < cfg.prune_threshold {
                // falsely hypothesized: removed without optimizing
                outcomes.push(CornerOutcome {
                    group,
                    decision: CornerDecision::Drop,
                    mu_p: mu0,
                });
                continue;
            }
            let (g0, _) = polygon_score(&poly, &identity, r)?;
            if g0 < cfg.s_min {
                continue; // kept unoptimized
            }
            let seed = cfg.spsa.seed ^ this_id;
            let (theta, _trace) =
                spsa_optimize(&poly, r, &cfg.spsa, cfg.det_bounds, seed)?;
            if cfg.recheck_after_optimize {
                let mu1 = mean_polygon_probability(&poly, &theta, r)?;
                if mu1 < cfg.prune_threshold {
                    outcomes.push(CornerOutcome {
                        group,
                        decision: CornerDecision::Drop,
                        mu_p: mu1,
                    });
                    continue;
                }
            }
            let warped_px = warp_polygon_px(&poly, &theta, r);
            let positions: Vec<Vec2> =
                warped_px.iter().map(|p| r.pixel_to_world(p.x, p.y)).collect();
            outcomes.push(CornerOutcome {
                group,
                decision: CornerDecision::Keep { positions },
                mu_p: mu0,
            });
        }
    }

    let mut out = prune_and_rebuild(hypo, &outcomes)?;
    for ei in 0..out.edges.len() {
        let conf = edge_confidence(&out.edges[ei], r, cfg.confidence_buffer_m)?;
        out.edges[ei].confidence = Some(conf);
        if conf == 0.0 && out.edges[ei].geometry.len() >= 2 {
            // zero covered pixels: resolution too coarse for this edge
            let samples_empty = {
                let poly = buffer_polyline(&out.edges[ei].geometry, cfg.confidence_buffer_m);
                poly.len() < 3
                    || pixels_in_polygon(r, &poly, "sidewalk").map(|s| s.is_empty()).unwrap_or(true)
            };
            if samples_empty {
                out.edges[ei].flagged = true;
            }
        }
    }
    Ok(out)
}
