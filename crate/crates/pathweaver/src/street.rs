//! Street centerline model: GeoJSON ingest, node merging, local projection,
//! and the directed half-edge representation used for face traversal.

use std::collections::HashMap;

use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{Bbox, LocalProjection, LonLat, Vec2};

/// Merge tolerance for shared endpoints, degrees (~1 cm).
pub const NODE_MERGE_TOL_DEG: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfEdgeId(pub usize);

impl HalfEdgeId {
    pub fn twin(self) -> HalfEdgeId {
        HalfEdgeId(self.0 ^ 1)
    }

    pub fn edge(self) -> EdgeId {
        EdgeId(self.0 >> 1)
    }

    /// True when this half-edge follows the stored edge geometry direction.
    pub fn is_forward(self) -> bool {
        self.0 & 1 == 0
    }
}

#[derive(Debug, Clone)]
pub struct StreetNode {
    pub id: NodeId,
    pub position: LonLat,
    pub local_xy: Vec2,
}

/// Per-side sidewalk metadata flags from the input data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidewalkMeta {
    pub left: bool,
    pub right: bool,
    pub offset_m: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StreetEdge {
    pub id: EdgeId,
    pub endpoints: (NodeId, NodeId),
    /// Polyline in local meters, first/last vertices at the endpoint nodes.
    pub geometry: Vec<Vec2>,
    pub sidewalk_meta: Option<SidewalkMeta>,
    pub marked_crossings: Vec<Vec2>,
}

impl StreetEdge {
    pub fn length(&self) -> f64 {
        crate::geo::polyline_length(&self.geometry)
    }
}

#[derive(Debug, Clone)]
pub struct StreetNetwork {
    pub nodes: Vec<StreetNode>,
    pub edges: Vec<StreetEdge>,
    pub anchor: LonLat,
    pub bbox: Bbox,
}

#[derive(Debug, Error)]
pub enum StreetError {
    #[error("GeoJSON parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema error at feature {index}: {message}")]
    Schema { index: usize, message: String },
    #[error("empty input: no LineString features")]
    Empty,
    #[error("degenerate input: duplicate parallel edge between the same node pair (edges {0:?} and {1:?})")]
    DuplicateEdge(EdgeId, EdgeId),
    #[error("zero-length edge at feature {0}")]
    ZeroLength(usize),
}

impl StreetNetwork {
    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(self.anchor)
    }

    pub fn node(&self, id: NodeId) -> &StreetNode {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &StreetEdge {
        &self.edges[id.0]
    }

    /// Undirected degree of a node.
    pub fn degree(&self, id: NodeId) -> usize {
        self.edges
            .iter()
            .filter(|e| e.endpoints.0 == id || e.endpoints.1 == id)
            .count()
    }

    /// Edges incident to a node.
    pub fn incident_edges(&self, id: NodeId) -> Vec<EdgeId> {
        self.edges
            .iter()
            .filter(|e| e.endpoints.0 == id || e.endpoints.1 == id)
            .map(|e| e.id)
            .collect()
    }

    /// Serializes back to the input GeoJSON schema.
    pub fn to_geojson(&self) -> Value {
        let proj = self.projection();
        let features: Vec<Value> = self
            .edges
            .iter()
            .map(|e| {
                let coords: Vec<Value> = e
                    .geometry
                    .iter()
                    .map(|p| {
                        let ll = proj.unproject(*p);
                        json!([ll.lon, ll.lat])
                    })
                    .collect();
                let mut props = serde_json::Map::new();
                if let Some(m) = &e.sidewalk_meta {
                    props.insert("sidewalk_left".into(), json!(m.left));
                    props.insert("sidewalk_right".into(), json!(m.right));
                    if let Some(off) = m.offset_m {
                        props.insert("sidewalk_offset_m".into(), json!(off));
                    }
                }
                if !e.marked_crossings.is_empty() {
                    let pts: Vec<Value> = e
                        .marked_crossings
                        .iter()
                        .map(|p| {
                            let ll = proj.unproject(*p);
                            json!([ll.lon, ll.lat])
                        })
                        .collect();
                    props.insert("marked_crossings".into(), Value::Array(pts));
                }
                json!({
                    "type": "Feature",
                    "geometry": { "type": "LineString", "coordinates": coords },
                    "properties": Value::Object(props),
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }
}

fn parse_lonlat(v: &Value, index: usize) -> Result<LonLat, StreetError> {
    let arr = v.as_array().ok_or_else(|| StreetError::Schema {
        index,
        message: "coordinate is not an array".into(),
    })?;
    if arr.len() < 2 {
        return Err(StreetError::Schema {
            index,
            message: "coordinate has fewer than 2 components".into(),
        });
    }
    let lon = arr[0].as_f64().ok_or_else(|| StreetError::Schema {
        index,
        message: "non-numeric longitude".into(),
    })?;
    let lat = arr[1].as_f64().ok_or_else(|| StreetError::Schema {
        index,
        message: "non-numeric latitude".into(),
    })?;
    let ll = LonLat::new(lon, lat);
    if !ll.is_valid() {
        return Err(StreetError::Schema {
            index,
            message: format!("coordinate out of range: [{lon}, {lat}]"),
        });
    }
    Ok(ll)
}

/// Loads a street network from a GeoJSON FeatureCollection of LineStrings.
///
/// Shared endpoints within [`NODE_MERGE_TOL_DEG`] are merged into one node.
/// The local frame anchor is the centroid of all vertices.
pub fn load_street_network(source: &str) -> Result<StreetNetwork, StreetError> {
    let doc: Value = serde_json::from_str(source)?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(StreetError::Empty)?;
    if features.is_empty() {
        return Err(StreetError::Empty);
    }

    // First pass: parse geometries and optional properties.
    struct RawEdge {
        coords: Vec<LonLat>,
        meta: Option<SidewalkMeta>,
        marked: Vec<LonLat>,
    }
    let mut raw = Vec::with_capacity(features.len());
    for (index, f) in features.iter().enumerate() {
        let geom = f.get("geometry").ok_or_else(|| StreetError::Schema {
            index,
            message: "feature missing geometry".into(),
        })?;
        let gtype = geom.get("type").and_then(Value::as_str).unwrap_or("");
        if gtype != "LineString" {
            return Err(StreetError::Schema {
                index,
                message: format!("expected LineString, got {gtype:?}"),
            });
        }
        let coords = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| StreetError::Schema {
                index,
                message: "LineString missing coordinates".into(),
            })?;
        if coords.len() < 2 {
            return Err(StreetError::Schema {
                index,
                message: "LineString needs at least 2 vertices".into(),
            });
        }
        let coords: Vec<LonLat> = coords
            .iter()
            .map(|c| parse_lonlat(c, index))
            .collect::<Result<_, _>>()?;

        let props = f.get("properties").cloned().unwrap_or(Value::Null);
        let left = props.get("sidewalk_left").and_then(Value::as_bool);
        let right = props.get("sidewalk_right").and_then(Value::as_bool);
        let offset_m = props.get("sidewalk_offset_m").and_then(Value::as_f64);
        if let Some(off) = offset_m {
            if off <= 0.0 {
                return Err(StreetError::Schema {
                    index,
                    message: format!("sidewalk_offset_m must be > 0, got {off}"),
                });
            }
        }
        let meta = if left.is_some() || right.is_some() || offset_m.is_some() {
            Some(SidewalkMeta {
                left: left.unwrap_or(false),
                right: right.unwrap_or(false),
                offset_m,
            })
        } else {
            None
        };
        let marked = match props.get("marked_crossings").and_then(Value::as_array) {
            Some(arr) => arr
                .iter()
                .map(|c| parse_lonlat(c, index))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        raw.push(RawEdge { coords, meta, marked });
    }

    // Anchor = centroid of all vertices.
    let mut sum = (0.0, 0.0);
    let mut count = 0usize;
    for e in &raw {
        for c in &e.coords {
            sum.0 += c.lon;
            sum.1 += c.lat;
            count += 1;
        }
    }
    let anchor = LonLat::new(sum.0 / count as f64, sum.1 / count as f64);
    let proj = LocalProjection::new(anchor);

    // Merge endpoints within tolerance. Quantized grid keyed lookup with
    // neighbor-cell probing keeps this deterministic and near-linear.
    let mut nodes: Vec<StreetNode> = Vec::new();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let quant = |ll: LonLat| {
        (
            (ll.lon / NODE_MERGE_TOL_DEG).round() as i64,
            (ll.lat / NODE_MERGE_TOL_DEG).round() as i64,
        )
    };
    let mut node_for = |ll: LonLat, nodes: &mut Vec<StreetNode>| -> NodeId {
        let (qx, qy) = quant(ll);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = grid.get(&(qx + dx, qy + dy)) {
                    for &i in ids {
                        let n = &nodes[i];
                        if (n.position.lon - ll.lon).abs() <= NODE_MERGE_TOL_DEG
                            && (n.position.lat - ll.lat).abs() <= NODE_MERGE_TOL_DEG
                        {
                            return NodeId(i);
                        }
                    }
                }
            }
        }
        let id = NodeId(nodes.len());
        nodes.push(StreetNode {
            id,
            position: ll,
            local_xy: proj.project(ll),
        });
        grid.entry((qx, qy)).or_default().push(id.0);
        id
    };

    let mut edges: Vec<StreetEdge> = Vec::new();
    for (index, e) in raw.iter().enumerate() {
        let a = node_for(e.coords[0], &mut nodes);
        let b = node_for(*e.coords.last().unwrap(), &mut nodes);
        let geometry: Vec<Vec2> = e.coords.iter().map(|c| proj.project(*c)).collect();
        if crate::geo::polyline_length(&geometry) <= 0.0 || (a == b && e.coords.len() == 2) {
            return Err(StreetError::ZeroLength(index));
        }
        edges.push(StreetEdge {
            id: EdgeId(index),
            endpoints: (a, b),
            geometry,
            sidewalk_meta: e.meta,
            marked_crossings: e.marked.iter().map(|c| proj.project(*c)).collect(),
        });
    }

    let mut bbox = Bbox::empty();
    for e in &edges {
        for p in &e.geometry {
            bbox.include(*p);
        }
    }

    Ok(StreetNetwork { nodes, edges, anchor, bbox })
}

/// Nodes with undirected degree >= `min_degree`, sorted by id.
pub fn find_intersections(net: &StreetNetwork, min_degree: usize) -> Vec<NodeId> {
    let mut deg = vec![0usize; net.nodes.len()];
    for e in &net.edges {
        deg[e.endpoints.0 .0] += 1;
        deg[e.endpoints.1 .0] += 1;
    }
    let mut out: Vec<NodeId> = deg
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= min_degree)
        .map(|(i, _)| NodeId(i))
        .collect();
    out.sort();
    out
}

/// One directed half-edge of the planar street graph.
#[derive(Debug, Clone)]
pub struct HalfEdge {
    pub id: HalfEdgeId,
    pub origin: NodeId,
    pub target: NodeId,
    /// Bearing of the first geometry segment at the origin, degrees CW from north.
    pub bearing_deg: f64,
    /// Successor under right-hand face traversal.
    pub next_in_face: HalfEdgeId,
}

/// Directed half-edge view of a street network with face-traversal links.
#[derive(Debug, Clone)]
pub struct DirectedStreetGraph {
    pub half_edges: Vec<HalfEdge>,
    /// Outgoing half-edges per node, sorted by bearing (ties by edge id).
    pub outgoing: Vec<Vec<HalfEdgeId>>,
}

impl DirectedStreetGraph {
    pub fn half_edge(&self, id: HalfEdgeId) -> &HalfEdge {
        &self.half_edges[id.0]
    }

    /// Geometry of a half-edge in travel direction.
    pub fn geometry<'a>(&self, net: &'a StreetNetwork, id: HalfEdgeId) -> Vec<Vec2> {
        let edge = net.edge(id.edge());
        if id.is_forward() {
            edge.geometry.clone()
        } else {
            let mut g = edge.geometry.clone();
            g.reverse();
            g
        }
    }
}

fn half_edge_bearing(net: &StreetNetwork, id: HalfEdgeId) -> f64 {
    let edge = net.edge(id.edge());
    let g = &edge.geometry;
    let dir = if id.is_forward() {
        g[1].sub(g[0])
    } else {
        g[g.len() - 2].sub(g[g.len() - 1])
    };
    dir.bearing_deg()
}

/// Builds the half-edge graph with right-hand-traversal `next_in_face` links.
///
/// At the target node of `h`, the successor is the outgoing half-edge whose
/// bearing follows the reversed bearing of `h` (= the bearing of its twin)
/// in clockwise order — the sharpest available right turn.
pub fn build_directed(net: &StreetNetwork) -> Result<DirectedStreetGraph, StreetError> {
    // Reject duplicate parallel edges with identical geometry.
    let mut seen: HashMap<(NodeId, NodeId), Vec<EdgeId>> = HashMap::new();
    for e in &net.edges {
        let key = if e.endpoints.0 <= e.endpoints.1 {
            e.endpoints
        } else {
            (e.endpoints.1, e.endpoints.0)
        };
        let bucket = seen.entry(key).or_default();
        for &other in bucket.iter() {
            let o = net.edge(other);
            let same = o.geometry.len() == e.geometry.len()
                && o.geometry
                    .iter()
                    .zip(e.geometry.iter())
                    .all(|(a, b)| a.dist(*b) < 1e-9);
            let rev_same = o.geometry.len() == e.geometry.len()
                && o.geometry
                    .iter()
                    .rev()
                    .zip(e.geometry.iter())
                    .all(|(a, b)| a.dist(*b) < 1e-9);
            if same || rev_same {
                return Err(StreetError::DuplicateEdge(other, e.id));
            }
        }
        bucket.push(e.id);
    }

    let n_half = net.edges.len() * 2;
    let mut half_edges: Vec<HalfEdge> = Vec::with_capacity(n_half);
    for e in &net.edges {
        let fwd = HalfEdgeId(e.id.0 * 2);
        let bwd = HalfEdgeId(e.id.0 * 2 + 1);
        half_edges.push(HalfEdge {
            id: fwd,
            origin: e.endpoints.0,
            target: e.endpoints.1,
            bearing_deg: half_edge_bearing(net, fwd),
            next_in_face: fwd, // fixed up below
        });
        half_edges.push(HalfEdge {
            id: bwd,
            origin: e.endpoints.1,
            target: e.endpoints.0,
            bearing_deg: half_edge_bearing(net, bwd),
            next_in_face: bwd,
        });
    }

    let mut outgoing: Vec<Vec<HalfEdgeId>> = vec![Vec::new(); net.nodes.len()];
    for h in &half_edges {
        outgoing[h.origin.0].push(h.id);
    }
    for list in &mut outgoing {
        list.sort_by(|a, b| {
            let ba = half_edges[a.0].bearing_deg;
            let bb = half_edges[b.0].bearing_deg;
            ba.partial_cmp(&bb)
                .unwrap()
                .then_with(|| a.edge().cmp(&b.edge()))
        });
    }

    for h_idx in 0..n_half {
        let h = HalfEdgeId(h_idx);
        let at = half_edges[h_idx].target;
        let list = &outgoing[at.0];
        let twin = h.twin();
        let pos = list
            .iter()
            .position(|&x| x == twin)
            .expect("twin must be outgoing at target node");
        // Bearings ascend clockwise, so the sharpest right turn from the
        // incoming direction is the entry just before the twin.
        let next = list[(pos + list.len() - 1) % list.len()];
        half_edges[h_idx].next_in_face = next;
    }

    Ok(DirectedStreetGraph { half_edges, outgoing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn shared_endpoint_merge() {
        let g = fixture::geojson_from_segments(&[
            vec![(0.0, 0.0), (100.0, 0.0)],
            vec![(100.0, 0.0), (200.0, 0.0)],
        ]);
        let net = load_street_network(&g).unwrap();
        assert_eq!(net.nodes.len(), 3);
        assert_eq!(net.edges.len(), 2);
    }

    #[test]
    fn plus_cross_degrees() {
        let net = load_street_network(&fixture::plus_fixture(100.0)).unwrap();
        assert_eq!(net.nodes.len(), 5);
        assert_eq!(net.edges.len(), 4);
        let ints = find_intersections(&net, 3);
        assert_eq!(ints.len(), 1);
        assert_eq!(net.degree(ints[0]), 4);
    }

    #[test]
    fn grid_counts_match_closed_form() {
        for (m, n) in [(2, 2), (3, 3), (4, 5)] {
            let net = load_street_network(&fixture::grid_fixture(m, n, 100.0)).unwrap();
            assert_eq!(net.nodes.len(), m * n);
            assert_eq!(net.edges.len(), m * (n - 1) + n * (m - 1));
        }
    }

    #[test]
    fn three_by_three_intersections() {
        let net = load_street_network(&fixture::grid_fixture(3, 3, 100.0)).unwrap();
        let ints = find_intersections(&net, 3);
        assert_eq!(ints.len(), 5);
        let deg4 = ints.iter().filter(|&&n| net.degree(n) == 4).count();
        assert_eq!(deg4, 1);
    }

    #[test]
    fn single_segment_no_intersections() {
        let g = fixture::geojson_from_segments(&[vec![(0.0, 0.0), (100.0, 0.0)]]);
        let net = load_street_network(&g).unwrap();
        assert!(find_intersections(&net, 3).is_empty());
    }

    #[test]
    fn rejects_non_linestring() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[0,0]},"properties":{}}
        ]}"#;
        match load_street_network(doc) {
            Err(StreetError::Schema { index: 0, .. }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(matches!(
            load_street_network(r#"{"type":"FeatureCollection","features":[]}"#),
            Err(StreetError::Empty)
        ));
        assert!(matches!(load_street_network("not json"), Err(StreetError::Parse(_))));
    }

    #[test]
    fn rejects_duplicate_parallel_edges() {
        let g = fixture::geojson_from_segments(&[
            vec![(0.0, 0.0), (100.0, 0.0)],
            vec![(0.0, 0.0), (100.0, 0.0)],
        ]);
        let net = load_street_network(&g).unwrap();
        assert!(matches!(build_directed(&net), Err(StreetError::DuplicateEdge(_, _))));
    }

    #[test]
    fn twin_involution_and_single_edge_face() {
        let g = fixture::geojson_from_segments(&[vec![(0.0, 0.0), (100.0, 0.0)]]);
        let net = load_street_network(&g).unwrap();
        let dg = build_directed(&net).unwrap();
        assert_eq!(dg.half_edges.len(), 2);
        for h in &dg.half_edges {
            assert_eq!(h.id.twin().twin(), h.id);
        }
        // one face of length 2: A->B then B->A
        let h = HalfEdgeId(0);
        let n1 = dg.half_edge(h).next_in_face;
        assert_eq!(n1, h.twin());
        assert_eq!(dg.half_edge(n1).next_in_face, h);
    }

    #[test]
    fn geojson_round_trip() {
        let net = load_street_network(&fixture::grid_fixture(3, 4, 100.0)).unwrap();
        let written = net.to_geojson().to_string();
        let reloaded = load_street_network(&written).unwrap();
        assert_eq!(reloaded.nodes.len(), net.nodes.len());
        assert_eq!(reloaded.edges.len(), net.edges.len());
        for (a, b) in net.edges.iter().zip(reloaded.edges.iter()) {
            let pa = net.projection();
            let pb = reloaded.projection();
            for (ga, gb) in a.geometry.iter().zip(b.geometry.iter()) {
                let la = pa.unproject(*ga);
                let lb = pb.unproject(*gb);
                assert!((la.lon - lb.lon).abs() < 1e-9);
                assert!((la.lat - lb.lat).abs() < 1e-9);
            }
        }
    }
}
