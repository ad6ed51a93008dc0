//! Synthetic street-network fixtures used by tests, the acceptance suite,
//! and the `task simulate` subcommand.
//!
//! Fixtures are specified in meters on a local plane and converted to WGS84
//! GeoJSON around a fixed anchor, so loading them through the normal ingest
//! path reproduces the intended local geometry to sub-millimeter accuracy.

use crate::geo::{LocalProjection, LonLat, Vec2};

/// Anchor all fixtures share (Seattle-ish; nothing depends on the value).
pub const FIXTURE_ANCHOR: LonLat = LonLat::new(-122.3, 47.6);

fn projection() -> LocalProjection {
    LocalProjection::new(FIXTURE_ANCHOR)
}

/// GeoJSON FeatureCollection of LineStrings from segments given in meters.
pub fn geojson_from_segments(segments: &[Vec<(f64, f64)>]) -> String {
    geojson_from_segments_with_props(segments, &[])
}

/// Same, with per-feature extra properties as raw JSON objects
/// (index-aligned; missing entries get empty properties).
pub fn geojson_from_segments_with_props(
    segments: &[Vec<(f64, f64)>],
    props: &[serde_json::Value],
) -> String {
    let proj = projection();
    let features: Vec<serde_json::Value> = segments
        .iter()
        .enumerate()
        .map(|(i, seg)| {
            let coords: Vec<serde_json::Value> = seg
                .iter()
                .map(|&(x, y)| {
                    let ll = proj.unproject(Vec2::new(x, y));
                    serde_json::json!([ll.lon, ll.lat])
                })
                .collect();
            let p = props.get(i).cloned().unwrap_or(serde_json::json!({}));
            serde_json::json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": coords },
                "properties": p,
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features }).to_string()
}

/// m×n grid of streets with `spacing` meters between adjacent nodes.
/// m rows, n columns; every segment is one street edge.
pub fn grid_fixture(m: usize, n: usize, spacing: f64) -> String {
    let mut segments = Vec::new();
    for r in 0..m {
        for c in 0..n {
            let x = c as f64 * spacing;
            let y = r as f64 * spacing;
            if c + 1 < n {
                segments.push(vec![(x, y), (x + spacing, y)]);
            }
            if r + 1 < m {
                segments.push(vec![(x, y), (x, y + spacing)]);
            }
        }
    }
    geojson_from_segments(&segments)
}

/// Four streets meeting at the origin ("+" cross), each `arm` meters long.
pub fn plus_fixture(arm: f64) -> String {
    geojson_from_segments(&[
        vec![(0.0, 0.0), (0.0, arm)],
        vec![(0.0, 0.0), (arm, 0.0)],
        vec![(0.0, 0.0), (0.0, -arm)],
        vec![(0.0, 0.0), (-arm, 0.0)],
    ])
}

/// T-intersection: through street west-east plus a south stem.
pub fn tee_fixture(arm: f64) -> String {
    geojson_from_segments(&[
        vec![(0.0, 0.0), (-arm, 0.0)],
        vec![(0.0, 0.0), (arm, 0.0)],
        vec![(0.0, 0.0), (0.0, -arm)],
    ])
}

/// Convex position jitter applied to interior grid nodes, deterministic in `seed`.
/// Used by property tests over "random planar grids"; jitter is kept below
/// spacing/4 so planarity and edge ordering survive.
pub fn jittered_grid_fixture(m: usize, n: usize, spacing: f64, seed: u64) -> String {
    let mut jitter = vec![vec![(0.0, 0.0); n]; m];
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for r in 1..m.saturating_sub(1) {
        for c in 1..n.saturating_sub(1) {
            jitter[r][c] = (next() * spacing * 0.4, next() * spacing * 0.4);
        }
    }
    let pos = |r: usize, c: usize| {
        (
            c as f64 * spacing + jitter[r][c].0,
            r as f64 * spacing + jitter[r][c].1,
        )
    };
    let mut segments = Vec::new();
    for r in 0..m {
        for c in 0..n {
            if c + 1 < n {
                segments.push(vec![pos(r, c), pos(r, c + 1)]);
            }
            if r + 1 < m {
                segments.push(vec![pos(r, c), pos(r + 1, c)]);
            }
        }
    }
    geojson_from_segments(&segments)
}
