//! The typed pedestrian graph (sidewalks, crossings, links, curbs) and its
//! GeoJSON serialization with OpenSidewalks-style tagging.

use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{LocalProjection, LonLat, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PedNodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PedEdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    SidewalkEndpoint,
    Curb,
    CrossingMidpoint,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::SidewalkEndpoint => "sidewalk_endpoint",
            NodeKind::Curb => "curb",
            NodeKind::CrossingMidpoint => "crossing_midpoint",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sidewalk_endpoint" => Some(NodeKind::SidewalkEndpoint),
            "curb" => Some(NodeKind::Curb),
            "crossing_midpoint" => Some(NodeKind::CrossingMidpoint),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurbState {
    Raised,
    Lowered,
    Unknown,
}

impl CurbState {
    pub fn as_str(self) -> &'static str {
        match self {
            CurbState::Raised => "raised",
            CurbState::Lowered => "lowered",
            CurbState::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raised" => Some(CurbState::Raised),
            "lowered" => Some(CurbState::Lowered),
            "unknown" => Some(CurbState::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Sidewalk,
    Crossing,
    Link,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Sidewalk => "sidewalk",
            EdgeKind::Crossing => "crossing",
            EdgeKind::Link => "link",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sidewalk" => Some(EdgeKind::Sidewalk),
            "crossing" => Some(EdgeKind::Crossing),
            "link" => Some(EdgeKind::Link),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Hypothesized,
    Optimized,
    HumanEdited,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Hypothesized => "hypothesized",
            Provenance::Optimized => "optimized",
            Provenance::HumanEdited => "human_edited",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hypothesized" => Some(Provenance::Hypothesized),
            "optimized" => Some(Provenance::Optimized),
            "human_edited" => Some(Provenance::HumanEdited),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PedNode {
    pub id: PedNodeId,
    pub local_xy: Vec2,
    pub kind: NodeKind,
    pub curb_state: Option<CurbState>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone)]
pub struct PedEdge {
    pub id: PedEdgeId,
    pub endpoints: (PedNodeId, PedNodeId),
    pub kind: EdgeKind,
    pub geometry: Vec<Vec2>,
    pub confidence: Option<f64>,
    pub provenance: Provenance,
    /// Set when a construction fell back (e.g. an unsplit too-short crossing).
    pub flagged: bool,
}

impl PedEdge {
    pub fn length(&self) -> f64 {
        crate::geo::polyline_length(&self.geometry)
    }
}

#[derive(Debug, Clone)]
pub struct PedestrianGraph {
    pub nodes: Vec<PedNode>,
    pub edges: Vec<PedEdge>,
    pub anchor: LonLat,
}

#[derive(Debug, Error)]
pub enum PedGraphError {
    #[error("GeoJSON parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("graph schema error at feature {index}: {message}")]
    Schema { index: usize, message: String },
    #[error("dangling edge endpoint: edge {0:?} references missing node {1}")]
    Dangling(PedEdgeId, usize),
    #[error("duplicate node position at {0:?} for kind {1}")]
    DuplicateNode(Vec2, &'static str),
}

impl PedestrianGraph {
    pub fn new(anchor: LonLat) -> Self {
        Self { nodes: Vec::new(), edges: Vec::new(), anchor }
    }

    pub fn node(&self, id: PedNodeId) -> &PedNode {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: PedEdgeId) -> &PedEdge {
        &self.edges[id.0]
    }

    /// Adds a node, reusing an existing one of the same kind within 1e-3 m.
    pub fn add_node(
        &mut self,
        xy: Vec2,
        kind: NodeKind,
        curb_state: Option<CurbState>,
        provenance: Provenance,
    ) -> PedNodeId {
        for n in &self.nodes {
            if n.kind == kind && n.local_xy.dist(xy) < 1e-3 {
                return n.id;
            }
        }
        let id = PedNodeId(self.nodes.len());
        self.nodes.push(PedNode { id, local_xy: xy, kind, curb_state, provenance });
        id
    }

    pub fn add_edge(
        &mut self,
        endpoints: (PedNodeId, PedNodeId),
        kind: EdgeKind,
        geometry: Vec<Vec2>,
        provenance: Provenance,
    ) -> PedEdgeId {
        let id = PedEdgeId(self.edges.len());
        self.edges.push(PedEdge {
            id,
            endpoints,
            kind,
            geometry,
            confidence: None,
            provenance,
            flagged: false,
        });
        id
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &PedEdge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &PedNode> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Edge ids incident to each node.
    pub fn incidence(&self) -> Vec<Vec<PedEdgeId>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            inc[e.endpoints.0 .0].push(e.id);
            if e.endpoints.1 != e.endpoints.0 {
                inc[e.endpoints.1 .0].push(e.id);
            }
        }
        inc
    }

    pub fn total_length_of_kind(&self, kind: EdgeKind) -> f64 {
        self.edges_of_kind(kind).map(|e| e.length()).sum()
    }

    pub fn to_geojson(&self) -> Value {
        let proj = LocalProjection::new(self.anchor);
        let mut features: Vec<Value> = Vec::with_capacity(self.nodes.len() + self.edges.len());
        for n in &self.nodes {
            let ll = proj.unproject(n.local_xy);
            let mut props = serde_json::Map::new();
            props.insert("id".into(), json!(n.id.0));
            props.insert("kind".into(), json!(n.kind.as_str()));
            if let Some(cs) = n.curb_state {
                props.insert("kerb".into(), json!(cs.as_str()));
            }
            props.insert("provenance".into(), json!(n.provenance.as_str()));
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [ll.lon, ll.lat] },
                "properties": Value::Object(props),
            }));
        }
        for e in &self.edges {
            let coords: Vec<Value> = e
                .geometry
                .iter()
                .map(|p| {
                    let ll = proj.unproject(*p);
                    json!([ll.lon, ll.lat])
                })
                .collect();
            let mut props = serde_json::Map::new();
            props.insert("id".into(), json!(e.id.0));
            props.insert("footway".into(), json!(e.kind.as_str()));
            if let Some(c) = e.confidence {
                props.insert("confidence".into(), json!(c));
            }
            props.insert("provenance".into(), json!(e.provenance.as_str()));
            props.insert("src".into(), json!(e.endpoints.0 .0));
            props.insert("dst".into(), json!(e.endpoints.1 .0));
            if e.flagged {
                props.insert("flagged".into(), json!(true));
            }
            features.push(json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": Value::Object(props),
            }));
        }
        json!({
            "type": "FeatureCollection",
            "anchor": [self.anchor.lon, self.anchor.lat],
            "features": features,
        })
    }

    pub fn from_geojson(source: &str) -> Result<Self, PedGraphError> {
        let doc: Value = serde_json::from_str(source)?;
        let anchor = doc
            .get("anchor")
            .and_then(Value::as_array)
            .and_then(|a| Some(LonLat::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?)))
            .ok_or_else(|| PedGraphError::Schema {
                index: 0,
                message: "missing top-level anchor".into(),
            })?;
        let proj = LocalProjection::new(anchor);
        let mut graph = PedestrianGraph::new(anchor);
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();

        // Two passes: nodes first (edges reference node ids).
        let mut id_map: std::collections::HashMap<usize, PedNodeId> = Default::default();
        for (index, f) in features.iter().enumerate() {
            let gtype = f
                .pointer("/geometry/type")
                .and_then(Value::as_str)
                .unwrap_or("");
            if gtype != "Point" {
                continue;
            }
            let props = f.get("properties").cloned().unwrap_or(Value::Null);
            let raw_id =
                props.get("id").and_then(Value::as_u64).ok_or_else(|| PedGraphError::Schema {
                    index,
                    message: "node missing id".into(),
                })? as usize;
            let kind = props
                .get("kind")
                .and_then(Value::as_str)
                .and_then(NodeKind::parse)
                .ok_or_else(|| PedGraphError::Schema {
                    index,
                    message: "node missing/unknown kind".into(),
                })?;
            let curb_state =
                props.get("kerb").and_then(Value::as_str).and_then(CurbState::parse);
            let provenance = props
                .get("provenance")
                .and_then(Value::as_str)
                .and_then(Provenance::parse)
                .unwrap_or(Provenance::Hypothesized);
            let coords =
                f.pointer("/geometry/coordinates").and_then(Value::as_array).ok_or_else(
                    || PedGraphError::Schema { index, message: "node missing coordinates".into() },
                )?;
            let ll = LonLat::new(
                coords[0].as_f64().unwrap_or(f64::NAN),
                coords[1].as_f64().unwrap_or(f64::NAN),
            );
            let id = PedNodeId(graph.nodes.len());
            graph.nodes.push(PedNode {
                id,
                local_xy: proj.project(ll),
                kind,
                curb_state,
                provenance,
            });
            id_map.insert(raw_id, id);
        }

        for (index, f) in features.iter().enumerate() {
            let gtype = f
                .pointer("/geometry/type")
                .and_then(Value::as_str)
                .unwrap_or("");
            if gtype != "LineString" {
                continue;
            }
            let props = f.get("properties").cloned().unwrap_or(Value::Null);
            let kind = props
                .get("footway")
                .and_then(Value::as_str)
                .and_then(EdgeKind::parse)
                .ok_or_else(|| PedGraphError::Schema {
                    index,
                    message: "edge missing/unknown footway".into(),
                })?;
            let src = props.get("src").and_then(Value::as_u64).ok_or_else(|| {
                PedGraphError::Schema { index, message: "edge missing src".into() }
            })? as usize;
            let dst = props.get("dst").and_then(Value::as_u64).ok_or_else(|| {
                PedGraphError::Schema { index, message: "edge missing dst".into() }
            })? as usize;
            let eid = PedEdgeId(graph.edges.len());
            let a = *id_map.get(&src).ok_or(PedGraphError::Dangling(eid, src))?;
            let b = *id_map.get(&dst).ok_or(PedGraphError::Dangling(eid, dst))?;
            let coords = f
                .pointer("/geometry/coordinates")
                .and_then(Value::as_array)
                .ok_or_else(|| PedGraphError::Schema {
                    index,
                    message: "edge missing coordinates".into(),
                })?;
            let geometry: Vec<Vec2> = coords
                .iter()
                .map(|c| {
                    let a = c.as_array().unwrap();
                    proj.project(LonLat::new(
                        a[0].as_f64().unwrap_or(f64::NAN),
                        a[1].as_f64().unwrap_or(f64::NAN),
                    ))
                })
                .collect();
            graph.edges.push(PedEdge {
                id: eid,
                endpoints: (a, b),
                kind,
                geometry,
                confidence: props.get("confidence").and_then(Value::as_f64),
                provenance: props
                    .get("provenance")
                    .and_then(Value::as_str)
                    .and_then(Provenance::parse)
                    .unwrap_or(Provenance::Hypothesized),
                flagged: props.get("flagged").and_then(Value::as_bool).unwrap_or(false),
            });
        }
        Ok(graph)
    }
}
