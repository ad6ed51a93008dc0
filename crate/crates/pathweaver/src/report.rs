//! Report shapes: per-area generation statistics and the two comparison
//! table formats (routability rows and county-scale generation rows).

use serde::{Deserialize, Serialize};

use crate::pedgraph::{EdgeKind, NodeKind, PedestrianGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaStats {
    pub sidewalk_count: usize,
    pub sidewalk_length_m: f64,
    pub crossing_count: usize,
    pub crossing_length_m: f64,
    pub intersection_count: usize,
}

impl AreaStats {
    pub fn of_graph(g: &PedestrianGraph, intersection_count: usize) -> Self {
        Self {
            sidewalk_count: g.edges_of_kind(EdgeKind::Sidewalk).count(),
            sidewalk_length_m: g.total_length_of_kind(EdgeKind::Sidewalk),
            crossing_count: g.edges_of_kind(EdgeKind::Crossing).count(),
            crossing_length_m: g.total_length_of_kind(EdgeKind::Crossing),
            intersection_count,
        }
    }

    pub fn curb_count(g: &PedestrianGraph) -> usize {
        g.nodes_of_kind(NodeKind::Curb).count()
    }
}

/// One row of the routability comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutabilityRow {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub avg_degree: f64,
    pub avg_cc: f64,
    pub avg_bc: f64,
    pub traversability: f64,
}

/// One row of the generation-statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub name: String,
    pub sidewalk_count: usize,
    pub sidewalk_length_m: f64,
    pub crossing_count: usize,
    pub crossing_length_m: f64,
}

impl From<(&str, &AreaStats)> for GenerationRow {
    fn from((name, s): (&str, &AreaStats)) -> Self {
        Self {
            name: name.to_string(),
            sidewalk_count: s.sidewalk_count,
            sidewalk_length_m: s.sidewalk_length_m,
            crossing_count: s.crossing_count,
            crossing_length_m: s.crossing_length_m,
        }
    }
}

/// Published ground-truth reference row used as a format fixture.
pub fn routability_reference_rows() -> Vec<RoutabilityRow> {
    vec![RoutabilityRow {
        name: "argyle-ground-truth".into(),
        nodes: 7576,
        edges: 8331,
        avg_degree: 2.0 * 8331.0 / 7576.0,
        avg_cc: 1.0,
        avg_bc: 0.0,
        traversability: 1.0,
    }]
}

/// Published county-scale reference row used as a format fixture.
pub fn generation_reference_rows() -> Vec<GenerationRow> {
    vec![GenerationRow {
        name: "king-county".into(),
        sidewalk_count: 249_683,
        sidewalk_length_m: 15_850_008.0,
        crossing_count: 0,
        crossing_length_m: 0.0,
    }]
}

/// Lengths are rounded to whole meters in the table; JSON keeps full
/// precision.
pub fn render_generation_table(rows: &[GenerationRow]) -> String {
    let mut s = format!(
        "{:<24} {:>12} {:>14} {:>12} {:>14}\n",
        "area", "sidewalks", "sw length m", "crossings", "cr length m"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<24} {:>12} {:>14} {:>12} {:>14}\n",
            r.name,
            r.sidewalk_count,
            r.sidewalk_length_m.round() as i64,
            r.crossing_count,
            r.crossing_length_m.round() as i64,
        ));
    }
    s
}

pub fn render_routability_table(rows: &[RoutabilityRow]) -> String {
    let mut s = format!(
        "{:<24} {:>8} {:>8} {:>9} {:>8} {:>8} {:>6}\n",
        "graph", "nodes", "edges", "avg deg", "avg CC", "avg BC", "TS"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<24} {:>8} {:>8} {:>9.3} {:>8.3} {:>8.4} {:>6.2}\n",
            r.name, r.nodes, r.edges, r.avg_degree, r.avg_cc, r.avg_bc, r.traversability,
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::pedestrianfer::{hypothesize, PedestrianferConfig};
    use crate::street::{find_intersections, load_street_network};

    #[test]
    fn area_stats_counts_plus_fixture() {
        let net = load_street_network(&fixture::plus_fixture(100.0)).unwrap();
        let g = hypothesize(&net, &PedestrianferConfig::default()).unwrap();
        let s = AreaStats::of_graph(&g, find_intersections(&net, 3).len());
        assert_eq!(s.intersection_count, 1);
        assert_eq!(s.crossing_count, 8);
        assert!(s.sidewalk_count >= 4);
        assert!(s.sidewalk_length_m > 0.0 && s.crossing_length_m > 0.0);
        let json = serde_json::to_string(&s).unwrap();
        let back: AreaStats = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn reference_rows_render_and_parse() {
        let rows = generation_reference_rows();
        let table = render_generation_table(&rows);
        assert!(table.contains("king-county"));
        assert!(table.contains("249683"));
        assert!(table.contains("15850008"));

        let rr = routability_reference_rows();
        let table = render_routability_table(&rr);
        assert!(table.contains("7576"));
        assert!(table.contains("8331"));
        // avg degree follows the standard 2|E|/|N| definition
        assert!(table.contains("2.199"));

        let json = serde_json::to_string(&rr).unwrap();
        let back: Vec<RoutabilityRow> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rr);
    }
}
