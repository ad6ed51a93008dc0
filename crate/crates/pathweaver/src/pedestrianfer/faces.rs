//! Right-hand-turn closed path enumeration over the directed street graph.
//!
//! Following `next_in_face` (sharpest right turn at every node) partitions
//! the half-edge set into closed walks. Bounded faces come out clockwise
//! (negative shoelace area in the x-east / y-north frame), the unbounded
//! face counterclockwise.

use crate::geo::{signed_area, Vec2};
use crate::street::{DirectedStreetGraph, HalfEdgeId, StreetNetwork};

#[derive(Debug, Clone)]
pub struct ClosedPath {
    /// Half-edges of the walk, in traversal order.
    pub walk: Vec<HalfEdgeId>,
    /// Concatenated walk geometry (one point per vertex, no closing repeat).
    pub ring: Vec<Vec2>,
    /// Source half-edge per ring segment (ring[i] -> ring[i+1 mod n]).
    pub ring_sources: Vec<HalfEdgeId>,
    /// True for bounded (block-interior) faces.
    pub interior: bool,
}

impl ClosedPath {
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.ring)
    }
}

/// Partitions all half-edges into right-hand-turn closed paths.
///
/// Walks are ordered by their smallest half-edge id; each walk starts at
/// that half-edge.
pub fn enumerate_rht_faces(g: &DirectedStreetGraph, net: &StreetNetwork) -> Vec<ClosedPath> {
    let n = g.half_edges.len();
    let mut visited = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut walk = Vec::new();
        let mut ring = Vec::new();
        let mut ring_sources = Vec::new();
        let mut h = HalfEdgeId(start);
        loop {
            visited[h.0] = true;
            walk.push(h);
            let geom = g.geometry(net, h);
            for i in 0..geom.len() - 1 {
                ring.push(geom[i]);
                ring_sources.push(h);
            }
            h = g.half_edge(h).next_in_face;
            if h.0 == start {
                break;
            }
        }
        let interior = signed_area(&ring) < 0.0;
        out.push(ClosedPath { walk, ring, ring_sources, interior });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::street::{build_directed, load_street_network};

    fn faces_of(geojson: &str) -> (Vec<ClosedPath>, StreetNetwork) {
        let net = load_street_network(geojson).unwrap();
        let dg = build_directed(&net).unwrap();
        let f = enumerate_rht_faces(&dg, &net);
        (f, net)
    }

    #[test]
    fn single_edge_one_outer_walk() {
        let (faces, _) =
            faces_of(&fixture::geojson_from_segments(&[vec![(0.0, 0.0), (100.0, 0.0)]]));
        assert_eq!(faces.len(), 1);
        assert_eq!(faces[0].walk.len(), 2);
        assert!(!faces[0].interior);
    }

    #[test]
    fn unit_square_two_walks() {
        let (faces, _) = faces_of(&fixture::grid_fixture(2, 2, 100.0));
        assert_eq!(faces.len(), 2);
        let interior: Vec<_> = faces.iter().filter(|f| f.interior).collect();
        assert_eq!(interior.len(), 1);
        assert!((interior[0].signed_area().abs() - 1.0e4).abs() < 1.0);
    }

    #[test]
    fn grid_interior_face_counts() {
        for (m, n) in [(2, 3), (3, 3), (4, 6), (5, 5)] {
            let (faces, net) = faces_of(&fixture::grid_fixture(m, n, 100.0));
            let interior = faces.iter().filter(|f| f.interior).count();
            assert_eq!(interior, (m - 1) * (n - 1), "grid {m}x{n}");
            // Euler cross-check on the fixture: F = E - V + 2 (connected planar),
            // counting the outer face.
            let euler_faces = net.edges.len() - net.nodes.len() + 2;
            assert_eq!(faces.len(), euler_faces);
        }
    }

    #[test]
    fn triangle_two_faces() {
        let g = fixture::geojson_from_segments(&[
            vec![(0.0, 0.0), (100.0, 0.0)],
            vec![(100.0, 0.0), (50.0, 80.0)],
            vec![(50.0, 80.0), (0.0, 0.0)],
        ]);
        let (faces, _) = faces_of(&g);
        assert_eq!(faces.len(), 2);
        assert_eq!(faces.iter().map(|f| f.walk.len()).sum::<usize>(), 6);
    }

    #[test]
    fn walks_partition_half_edges() {
        let (faces, net) = faces_of(&fixture::grid_fixture(4, 4, 100.0));
        let total: usize = faces.iter().map(|f| f.walk.len()).sum();
        assert_eq!(total, net.edges.len() * 2);
        let mut seen = std::collections::HashSet::new();
        for f in &faces {
            for h in &f.walk {
                assert!(seen.insert(*h), "half-edge {h:?} in two walks");
            }
        }
    }
}
