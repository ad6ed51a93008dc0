//! Routability evaluation: Voronoi partition of the evaluation area,
//! per-cell boundary-pair traversability Jaccard, connected-component and
//! betweenness summaries, segment edge-retrieval F1, and global stats.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::geo::{
    clip_halfplane, clip_segment_to_convex, dist_to_polyline, point_at_arclength,
    polyline_length, signed_area, Bbox, Vec2,
};
use crate::pedgraph::PedestrianGraph;

pub const SITE_MERGE_TOL_M: f64 = 1e-6;
pub const BOUNDARY_TOUCH_TOL_M: f64 = 1e-6;
pub const EDGE_SAMPLE_STEP_M: f64 = 0.25;

/// One bounded Voronoi cell. `polygon` is counterclockwise; boundary segment
/// `i` runs polygon[i] -> polygon[(i+1) % n].
#[derive(Debug, Clone, Serialize)]
pub struct VoronoiCell {
    pub id: usize,
    pub site: Vec2,
    pub polygon: Vec<Vec2>,
}

impl VoronoiCell {
    pub fn boundary_segment(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.polygon.len();
        (self.polygon[i], self.polygon[(i + 1) % n])
    }

    pub fn boundary_count(&self) -> usize {
        self.polygon.len()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.polygon).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VoronoiPartition {
    pub bbox: Bbox,
    pub cells: Vec<VoronoiCell>,
}

/// Clips each site's cell out of the bbox by half-plane intersection against
/// every other site. Sites closer than SITE_MERGE_TOL_M are merged.
pub fn voronoi_partition(sites: &[Vec2], bbox: Bbox) -> VoronoiPartition {
    let mut merged: Vec<Vec2> = Vec::new();
    for s in sites {
        if !merged.iter().any(|m| m.dist(*s) < SITE_MERGE_TOL_M) {
            merged.push(*s);
        }
    }
    let mut cells = Vec::with_capacity(merged.len());
    for (i, &site) in merged.iter().enumerate() {
        let mut poly: Vec<Vec2> = bbox.corners().to_vec();
        for (j, &other) in merged.iter().enumerate() {
            if i == j {
                continue;
            }
            // keep the side of the perpendicular bisector nearer to `site`
            let normal = other.sub(site);
            let mid = site.lerp(other, 0.5);
            poly = clip_halfplane(&poly, normal, normal.dot(mid));
            if poly.len() < 3 {
                break;
            }
        }
        cells.push(VoronoiCell { id: i, site, polygon: poly });
    }
    VoronoiPartition { bbox, cells }
}

/// Unordered pairs of boundary-segment indices connected by the graph
/// within one cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraversablePairSet {
    pub cell: usize,
    pub pairs: BTreeSet<(usize, usize)>,
}

/// Graph clipped to one convex cell: merged endpoints, segment list, and the
/// connected component of each point.
struct ClippedSubgraph {
    points: Vec<Vec2>,
    segments: Vec<(usize, usize)>,
    component: Vec<usize>,
    n_components: usize,
}

fn clip_graph_to_cell(g: &PedestrianGraph, cell: &VoronoiCell) -> ClippedSubgraph {
    let mut points: Vec<Vec2> = Vec::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let point_id = |p: Vec2, points: &mut Vec<Vec2>| -> usize {
        for (i, q) in points.iter().enumerate() {
            if q.dist(p) < BOUNDARY_TOUCH_TOL_M {
                return i;
            }
        }
        points.push(p);
        points.len() - 1
    };
    if cell.polygon.len() >= 3 {
        for e in &g.edges {
            for w in e.geometry.windows(2) {
                if let Some((a, b)) = clip_segment_to_convex(w[0], w[1], &cell.polygon) {
                    if a.dist(b) < BOUNDARY_TOUCH_TOL_M {
                        continue;
                    }
                    let ia = point_id(a, &mut points);
                    let ib = point_id(b, &mut points);
                    segments.push((ia, ib));
                }
            }
        }
    }
    // union-find over merged points
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for &(a, b) in &segments {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut component = vec![usize::MAX; points.len()];
    let mut n_components = 0;
    for i in 0..points.len() {
        let r = find(&mut parent, i);
        if component[r] == usize::MAX {
            component[r] = n_components;
            n_components += 1;
        }
        component[i] = component[r];
    }
    ClippedSubgraph { points, segments, component, n_components }
}

fn dist_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    crate::geo::nearest_on_segment(p, a, b).0.dist(p)
}

/// Boundary-segment pairs of `cell` connected by some component of `g`
/// clipped to the cell.
pub fn traversable_pairs(g: &PedestrianGraph, cell: &VoronoiCell) -> TraversablePairSet {
    let sub = clip_graph_to_cell(g, cell);
    let nb = cell.boundary_count();
    // boundary segments touched per component
    let mut touched: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sub.n_components];
    for (pi, p) in sub.points.iter().enumerate() {
        for bi in 0..nb {
            let (a, b) = cell.boundary_segment(bi);
            if dist_to_segment(*p, a, b) <= BOUNDARY_TOUCH_TOL_M {
                touched[sub.component[pi]].insert(bi);
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for t in &touched {
        let list: Vec<usize> = t.iter().copied().collect();
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                pairs.insert((list[i], list[j]));
            }
        }
    }
    TraversablePairSet { cell: cell.id, pairs }
}

pub fn jaccard(a: &BTreeSet<(usize, usize)>, b: &BTreeSet<(usize, usize)>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0; // mutual absence of traversal is perfect agreement
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

/// Per-cell Jaccard of boundary-pair sets, plus the mean over cells.
pub fn traversability_similarity(
    pred: &PedestrianGraph,
    truth: &PedestrianGraph,
    part: &VoronoiPartition,
) -> (Vec<f64>, f64) {
    let scores: Vec<f64> = part
        .cells
        .iter()
        .map(|c| {
            let p = traversable_pairs(pred, c);
            let t = traversable_pairs(truth, c);
            jaccard(&p.pairs, &t.pairs)
        })
        .collect();
    let mean = if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    (scores, mean)
}

/// Node betweenness over an unweighted undirected graph given as an
/// adjacency list, normalized per component by (n-1)(n-2)/2 where n is the
/// component size. Nodes in components with n < 3 score 0.
pub fn betweenness_centrality(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut bc = vec![0.0f64; n];
    // Brandes' accumulation over BFS shortest-path DAGs
    for s in 0..n {
        let mut stack = Vec::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![i64::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut q = VecDeque::new();
        q.push_back(s);
        while let Some(v) = q.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == i64::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // each undirected pair was counted from both endpoints
    for v in bc.iter_mut() {
        *v /= 2.0;
    }
    // per-component normalization
    let mut comp = vec![usize::MAX; n];
    let mut comp_size = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let c = comp_size.len();
        let mut size = 0usize;
        let mut q = VecDeque::new();
        comp[s] = c;
        q.push_back(s);
        while let Some(v) = q.pop_front() {
            size += 1;
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = c;
                    q.push_back(w);
                }
            }
        }
        comp_size.push(size);
    }
    for v in 0..n {
        let sz = comp_size[comp[v]];
        if sz < 3 {
            bc[v] = 0.0;
        } else {
            bc[v] /= (sz - 1) as f64 * (sz - 2) as f64 / 2.0;
        }
    }
    bc
}

fn cell_adjacency(sub: &ClippedSubgraph) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); sub.points.len()];
    for &(a, b) in &sub.segments {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    adj
}

/// Adjacency of the graph clipped to one cell, for external cross-checks of
/// the centrality computation.
pub fn clipped_cell_adjacency(g: &PedestrianGraph, cell: &VoronoiCell) -> Vec<Vec<usize>> {
    cell_adjacency(&clip_graph_to_cell(g, cell))
}

/// Mean connected-component count and mean node betweenness per cell.
/// Empty cells contribute (0, 0); cells with fewer than 3 nodes contribute
/// betweenness 0.
pub fn local_cc_bc(g: &PedestrianGraph, part: &VoronoiPartition) -> (f64, f64) {
    let mut cc_sum = 0.0;
    let mut bc_sum = 0.0;
    for cell in &part.cells {
        let sub = clip_graph_to_cell(g, cell);
        cc_sum += sub.n_components as f64;
        if sub.points.len() >= 3 {
            let bc = betweenness_centrality(&cell_adjacency(&sub));
            bc_sum += bc.iter().sum::<f64>() / bc.len() as f64;
        }
    }
    let n = part.cells.len().max(1) as f64;
    (cc_sum / n, bc_sum / n)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeRetrieval {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a side had zero total length, making its ratio undefined
    /// (reported as 0).
    pub degenerate: bool,
}

fn matched_length(of: &PedestrianGraph, against: &PedestrianGraph, tol_m: f64) -> (f64, f64) {
    let truth_lines: Vec<&Vec<Vec2>> = against
        .edges
        .iter()
        .filter(|e| e.geometry.len() >= 2)
        .map(|e| &e.geometry)
        .collect();
    let mut total = 0.0;
    let mut matched = 0.0;
    for e in &of.edges {
        if e.geometry.len() < 2 {
            continue;
        }
        let len = polyline_length(&e.geometry);
        if len == 0.0 {
            continue;
        }
        total += len;
        let k = (len / EDGE_SAMPLE_STEP_M).ceil().max(1.0) as usize;
        let step = len / k as f64;
        let mut hit = 0usize;
        for i in 0..k {
            let p = point_at_arclength(&e.geometry, (i as f64 + 0.5) * step);
            if truth_lines.iter().any(|l| dist_to_polyline(p, l) <= tol_m) {
                hit += 1;
            }
        }
        matched += len * hit as f64 / k as f64;
    }
    (matched, total)
}

/// Length-weighted precision/recall/F1 of `pred` against `truth` with a
/// symmetric distance buffer, estimated by midpoint sampling every 0.25 m.
pub fn edge_retrieval_f1(
    pred: &PedestrianGraph,
    truth: &PedestrianGraph,
    tol_m: f64,
) -> EdgeRetrieval {
    let (pm, pt) = matched_length(pred, truth, tol_m);
    let (tm, tt) = matched_length(truth, pred, tol_m);
    let degenerate = pt == 0.0 || tt == 0.0;
    let precision = if pt == 0.0 { 0.0 } else { pm / pt };
    let recall = if tt == 0.0 { 0.0 } else { tm / tt };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    EdgeRetrieval { precision, recall, f1, degenerate }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlobalStats {
    pub nodes: usize,
    pub edges: usize,
    pub avg_degree: f64,
}

pub fn global_stats(g: &PedestrianGraph) -> GlobalStats {
    let nodes = g.nodes.len();
    let edges = g.edges.len();
    let avg_degree = if nodes == 0 { 0.0 } else { 2.0 * edges as f64 / nodes as f64 };
    GlobalStats { nodes, edges, avg_degree }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub pred_stats: GlobalStats,
    pub truth_stats: GlobalStats,
    pub per_cell_similarity: Vec<f64>,
    pub traversability_mean: f64,
    pub pred_avg_cc: f64,
    pub pred_avg_bc: f64,
    pub truth_avg_cc: f64,
    pub truth_avg_bc: f64,
    pub edge_retrieval: EdgeRetrieval,
}

impl EvalReport {
    /// Two-row comparison table, one line per graph.
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>10} {:>8} {:>8} {:>8}\n",
            "graph", "nodes", "edges", "avg deg", "avg CC", "avg BC", "TS"
        ));
        s.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>10.3} {:>8.3} {:>8.4} {:>8.3}\n",
            "predicted",
            self.pred_stats.nodes,
            self.pred_stats.edges,
            self.pred_stats.avg_degree,
            self.pred_avg_cc,
            self.pred_avg_bc,
            self.traversability_mean,
        ));
        s.push_str(&format!(
            "{:<12} {:>8} {:>8} {:>10.3} {:>8.3} {:>8.4} {:>8}\n",
            "truth",
            self.truth_stats.nodes,
            self.truth_stats.edges,
            self.truth_stats.avg_degree,
            self.truth_avg_cc,
            self.truth_avg_bc,
            "-",
        ));
        s.push_str(&format!(
            "edge retrieval: precision {:.3}  recall {:.3}  F1 {:.3}{}\n",
            self.edge_retrieval.precision,
            self.edge_retrieval.recall,
            self.edge_retrieval.f1,
            if self.edge_retrieval.degenerate { "  (degenerate input)" } else { "" },
        ));
        s
    }
}

/// Runs the full metric suite over a shared partition.
pub fn evaluate(
    pred: &PedestrianGraph,
    truth: &PedestrianGraph,
    part: &VoronoiPartition,
    tol_m: f64,
) -> EvalReport {
    let (per_cell_similarity, traversability_mean) =
        traversability_similarity(pred, truth, part);
    let (pred_avg_cc, pred_avg_bc) = local_cc_bc(pred, part);
    let (truth_avg_cc, truth_avg_bc) = local_cc_bc(truth, part);
    EvalReport {
        pred_stats: global_stats(pred),
        truth_stats: global_stats(truth),
        per_cell_similarity,
        traversability_mean,
        pred_avg_cc,
        pred_avg_bc,
        truth_avg_cc,
        truth_avg_bc,
        edge_retrieval: edge_retrieval_f1(pred, truth, tol_m),
    }
}
