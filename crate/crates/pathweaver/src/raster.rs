//! Geo-referenced per-class probability rasters: the PPR1 container format,
//! pixel/world transforms, polygon sampling, and synthetic mask generation.
//!
//! PPR1 layout: one ASCII magic line `PPR1`, one JSON header line
//! `{width, height, classes, transform:[a,b,c,d,e,f], crs:"local-meters",
//! anchor:[lon,lat]}`, then per-class planes of little-endian f32 values,
//! row-major, in class order.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{point_in_polygon, signed_area, LonLat, Vec2};
use crate::pedgraph::{EdgeKind, NodeKind, PedestrianGraph};

pub const DEFAULT_CLASSES: [&str; 4] = ["background", "sidewalk", "corner_bulb", "crossing"];
pub const SIMPLEX_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("raster {width}x{height} exceeds the maximum dimension {max}")]
    Size { width: usize, height: usize, max: usize },
    #[error("raster has no class named {0:?}")]
    MissingClass(String),
}

/// One sampled pixel: its grid index and the probability of the queried class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub col: usize,
    pub row: usize,
    pub p: f64,
}

#[derive(Debug, Clone)]
pub struct ProbabilityRaster {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<String>,
    /// Affine pixel -> local meters: x = a*col + b*row + c, y = d*col + e*row + f.
    /// Integer (col,row) are pixel centers.
    pub transform: [f64; 6],
    pub anchor: LonLat,
    /// Row-major plane per class.
    pub planes: Vec<Vec<f32>>,
}

impl ProbabilityRaster {
    /// All-background raster with the default class set.
    pub fn background(
        width: usize,
        height: usize,
        transform: [f64; 6],
        anchor: LonLat,
    ) -> Self {
        let mut planes = vec![vec![0.0f32; width * height]; DEFAULT_CLASSES.len()];
        planes[0] = vec![1.0f32; width * height];
        Self {
            width,
            height,
            classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
            transform,
            anchor,
            planes,
        }
    }

    pub fn class_index(&self, name: &str) -> Result<usize, RasterError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| RasterError::MissingClass(name.to_string()))
    }

    pub fn plane(&self, class: usize) -> &[f32] {
        &self.planes[class]
    }

    pub fn value(&self, class: usize, col: usize, row: usize) -> f32 {
        self.planes[class][row * self.width + col]
    }

    pub fn det(&self) -> f64 {
        let [a, b, _, d, e, _] = self.transform;
        a * e - b * d
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> Vec2 {
        let [a, b, c, d, e, f] = self.transform;
        Vec2::new(a * col + b * row + c, d * col + e * row + f)
    }

    pub fn world_to_pixel(&self, xy: Vec2) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.transform;
        let det = a * e - b * d;
        let (x, y) = (xy.x - c, xy.y - f);
        ((e * x - b * y) / det, (a * y - d * x) / det)
    }

    fn expected_len(&self) -> usize {
        self.width * self.height
    }

    /// Validates dimensions, finiteness, and the per-pixel simplex invariant.
    /// `base_offset` anchors reported byte offsets at the start of the planes.
    fn validate(&self, base_offset: usize) -> Result<(), RasterError> {
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::Format {
                offset: 0,
                message: format!("degenerate dimensions {}x{}", self.width, self.height),
            });
        }
        if self.det().abs() < 1e-12 {
            return Err(RasterError::Format {
                offset: 0,
                message: "transform is not invertible".into(),
            });
        }
        if self.planes.len() != self.classes.len() {
            return Err(RasterError::Format {
                offset: 0,
                message: format!(
                    "{} planes for {} classes",
                    self.planes.len(),
                    self.classes.len()
                ),
            });
        }
        let n = self.expected_len();
        for (ci, plane) in self.planes.iter().enumerate() {
            if plane.len() != n {
                return Err(RasterError::Format {
                    offset: base_offset + ci * n * 4,
                    message: format!("plane {ci} has {} values, expected {n}", plane.len()),
                });
            }
            for (i, &v) in plane.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(RasterError::Format {
                        offset: base_offset + (ci * n + i) * 4,
                        message: format!("non-probability value {v} in class {ci}"),
                    });
                }
            }
        }
        for i in 0..n {
            let sum: f64 = self.planes.iter().map(|p| p[i] as f64).sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(RasterError::Format {
                    offset: base_offset + i * 4,
                    message: format!("pixel {i} probabilities sum to {sum}"),
                });
            }
        }
        Ok(())
    }

    fn header_json(&self) -> Value {
        json!({
            "width": self.width,
            "height": self.height,
            "classes": self.classes,
            "transform": self.transform,
            "crs": "local-meters",
            "anchor": [self.anchor.lon, self.anchor.lat],
        })
    }

    pub fn write_bytes(&self) -> Result<Vec<u8>, RasterError> {
        self.validate(0)?;
        let mut out = Vec::new();
        out.extend_from_slice(b"PPR1\n");
        out.extend_from_slice(self.header_json().to_string().as_bytes());
        out.push(b'\n');
        for plane in &self.planes {
            for v in plane {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(out)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.write_bytes()?)?;
        Ok(())
    }

    pub fn read_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() < 5 || &bytes[..5] != b"PPR1\n" {
            return Err(RasterError::Format {
                offset: 0,
                message: "missing PPR1 magic line".into(),
            });
        }
        let header_end = bytes[5..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| 5 + p)
            .ok_or(RasterError::Format {
                offset: 5,
                message: "unterminated header line".into(),
            })?;
        let header: Value = serde_json::from_slice(&bytes[5..header_end]).map_err(|e| {
            RasterError::Format { offset: 5, message: format!("bad header JSON: {e}") }
        })?;
        let get_usize = |k: &str| -> Result<usize, RasterError> {
            header
                .get(k)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| RasterError::Format {
                    offset: 5,
                    message: format!("header missing {k}"),
                })
        };
        let width = get_usize("width")?;
        let height = get_usize("height")?;
        let classes: Vec<String> = header
            .get("classes")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default();
        if classes.is_empty() {
            return Err(RasterError::Format {
                offset: 5,
                message: "header missing classes".into(),
            });
        }
        let tvec: Vec<f64> = header
            .get("transform")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        if tvec.len() != 6 {
            return Err(RasterError::Format {
                offset: 5,
                message: "header transform must have 6 coefficients".into(),
            });
        }
        let anchor = header
            .get("anchor")
            .and_then(Value::as_array)
            .and_then(|a| Some(LonLat::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?)))
            .ok_or(RasterError::Format {
                offset: 5,
                message: "header missing anchor".into(),
            })?;

        let data_start = header_end + 1;
        let n = width * height;
        let need = data_start + classes.len() * n * 4;
        if bytes.len() < need {
            return Err(RasterError::Format {
                offset: bytes.len(),
                message: format!("truncated planes: {} bytes, need {need}", bytes.len()),
            });
        }
        let mut planes = Vec::with_capacity(classes.len());
        for ci in 0..classes.len() {
            let mut plane = Vec::with_capacity(n);
            for i in 0..n {
                let at = data_start + (ci * n + i) * 4;
                let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
                plane.push(v);
            }
            planes.push(plane);
        }
        let raster = ProbabilityRaster {
            width,
            height,
            classes,
            transform: tvec.try_into().unwrap(),
            anchor,
            planes,
        };
        raster.validate(data_start)?;
        Ok(raster)
    }

    pub fn read_file(path: &Path) -> Result<Self, RasterError> {
        Self::read_bytes(&std::fs::read(path)?)
    }
}

/// Samples every pixel whose center lies strictly inside `poly` (local
/// meters), in row-major scan order.
pub fn pixels_in_polygon(
    r: &ProbabilityRaster,
    poly: &[Vec2],
    class: &str,
) -> Result<Vec<PixelSample>, RasterError> {
    let ci = r.class_index(class)?;
    if poly.len() < 3 {
        return Ok(Vec::new());
    }
    // degenerate: polygon smaller than one pixel
    if signed_area(poly).abs() < r.det().abs() {
        return Ok(Vec::new());
    }
    // affine maps preserve containment, so test in pixel space
    let ppoly: Vec<Vec2> = poly
        .iter()
        .map(|p| {
            let (c, rr) = r.world_to_pixel(*p);
            Vec2::new(c, rr)
        })
        .collect();
    let (mut min_c, mut max_c) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_r, mut max_r) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &ppoly {
        min_c = min_c.min(p.x);
        max_c = max_c.max(p.x);
        min_r = min_r.min(p.y);
        max_r = max_r.max(p.y);
    }
    let c0 = min_c.ceil().max(0.0) as i64;
    let c1 = max_c.floor().min(r.width as f64 - 1.0) as i64;
    let r0 = min_r.ceil().max(0.0) as i64;
    let r1 = max_r.floor().min(r.height as f64 - 1.0) as i64;
    let mut out = Vec::new();
    for row in r0..=r1 {
        for col in c0..=c1 {
            if point_in_polygon(Vec2::new(col as f64, row as f64), &ppoly) {
                out.push(PixelSample {
                    col: col as usize,
                    row: row as usize,
                    p: r.value(ci, col as usize, row as usize) as f64,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MaskConfig {
    pub resolution_m_per_px: f64,
    pub sidewalk_width_m: f64,
    pub crossing_width_m: f64,
    pub corner_dilation_m: f64,
    pub blur_sigma_px: f64,
    pub max_dimension_px: usize,
    pub padding_m: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            resolution_m_per_px: 0.3,
            sidewalk_width_m: 2.0,
            crossing_width_m: 3.0,
            corner_dilation_m: 2.0,
            blur_sigma_px: 2.0,
            max_dimension_px: 8192,
            padding_m: 6.0,
        }
    }
}

fn fill_corridor(
    plane: &mut [f32],
    r: &RasterFrame,
    polyline: &[Vec2],
    half_width: f64,
) {
    for w in polyline.windows(2) {
        let (a, b) = (w[0], w[1]);
        let min = Vec2::new(a.x.min(b.x) - half_width, a.y.min(b.y) - half_width);
        let max = Vec2::new(a.x.max(b.x) + half_width, a.y.max(b.y) + half_width);
        let (c_lo, r_hi) = r.pixel_of(min);
        let (c_hi, r_lo) = r.pixel_of(max);
        for row in r_lo.max(0)..=r_hi.min(r.height as i64 - 1) {
            for col in c_lo.max(0)..=c_hi.min(r.width as i64 - 1) {
                if row < 0 || col < 0 {
                    continue;
                }
                let p = r.center(col, row);
                let (np, _) = crate::geo::nearest_on_segment(p, a, b);
                if np.dist(p) <= half_width {
                    plane[(row as usize) * r.width + col as usize] = 1.0;
                }
            }
        }
    }
}

/// Helper carrying the synthesis grid geometry.
struct RasterFrame {
    width: usize,
    height: usize,
    transform: [f64; 6],
}

impl RasterFrame {
    fn center(&self, col: i64, row: i64) -> Vec2 {
        let [a, b, c, d, e, f] = self.transform;
        Vec2::new(
            a * col as f64 + b * row as f64 + c,
            d * col as f64 + e * row as f64 + f,
        )
    }

    fn pixel_of(&self, xy: Vec2) -> (i64, i64) {
        let [a, _, c, _, e, f] = self.transform;
        (((xy.x - c) / a).round() as i64, ((xy.y - f) / e).round() as i64)
    }
}

fn dist_to_convex_hull(p: Vec2, hull: &[Vec2]) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => p.dist(hull[0]),
        2 => {
            let (np, _) = crate::geo::nearest_on_segment(p, hull[0], hull[1]);
            np.dist(p)
        }
        _ => {
            if point_in_polygon(p, hull) {
                return 0.0;
            }
            let mut closed = hull.to_vec();
            closed.push(hull[0]);
            crate::geo::dist_to_polyline(p, &closed)
        }
    }
}

/// Andrew's monotone chain, CCW hull without repeated first point.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup_by(|a, b| a.dist(*b) < 1e-12);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| a.sub(o).cross(b.sub(o));
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Groups curb and sidewalk-endpoint nodes that belong to one street corner:
/// connected components over link edges and short sidewalk edges.
pub fn corner_node_clusters(graph: &PedestrianGraph, max_sidewalk_len_m: f64) -> Vec<Vec<Vec2>> {
    let mut parent: Vec<usize> = (0..graph.nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
            r
        } else {
            i
        }
    }
    for e in &graph.edges {
        let joinable = match e.kind {
            EdgeKind::Link => true,
            EdgeKind::Sidewalk => e.length() <= max_sidewalk_len_m,
            EdgeKind::Crossing => false,
        };
        if joinable {
            let (a, b) = (e.endpoints.0 .0, e.endpoints.1 .0);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    }
    let mut groups: HashMap<usize, (Vec<Vec2>, bool)> = HashMap::new();
    for n in &graph.nodes {
        if matches!(n.kind, NodeKind::Curb | NodeKind::SidewalkEndpoint) {
            let r = find(&mut parent, n.id.0);
            let entry = groups.entry(r).or_default();
            entry.0.push(n.local_xy);
            entry.1 |= n.kind == NodeKind::Curb;
        }
    }
    // a corner must involve at least one curb; plain sidewalk chains don't count
    let mut out: Vec<Vec<Vec2>> = groups
        .into_values()
        .filter(|(g, has_curb)| g.len() >= 2 && *has_curb)
        .map(|(g, _)| g)
        .collect();
    out.sort_by(|a, b| {
        (a[0].x, a[0].y)
            .partial_cmp(&(b[0].x, b[0].y))
            .unwrap()
    });
    out
}

fn gaussian_blur(plane: &mut [f32], width: usize, height: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for k in -radius..=radius {
        kernel.push((-0.5 * (k as f64 / sigma).powi(2)).exp());
    }
    let ksum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= ksum;
    }
    // horizontal pass with edge clamping, then vertical
    let mut tmp = vec![0.0f32; plane.len()];
    for row in 0..height as i64 {
        for col in 0..width as i64 {
            let mut acc = 0.0f64;
            for (ki, kv) in kernel.iter().enumerate() {
                let c = (col + ki as i64 - radius).clamp(0, width as i64 - 1);
                acc += *kv * plane[(row as usize) * width + c as usize] as f64;
            }
            tmp[(row as usize) * width + col as usize] = acc as f32;
        }
    }
    for row in 0..height as i64 {
        for col in 0..width as i64 {
            let mut acc = 0.0f64;
            for (ki, kv) in kernel.iter().enumerate() {
                let rr = (row + ki as i64 - radius).clamp(0, height as i64 - 1);
                acc += *kv * tmp[(rr as usize) * width + col as usize] as f64;
            }
            plane[(row as usize) * width + col as usize] = acc as f32;
        }
    }
}

/// Rasterizes a ground-truth graph into a synthetic probability mask.
///
/// Sidewalk and crossing edges become value-1 corridors in their planes
/// (link edges count toward the crossing plane), corner node groups become
/// dilated convex hulls in the corner_bulb plane. Planes are then blurred
/// and renormalized to the simplex with background absorbing the remainder.
pub fn synthesize_mask(
    truth: &PedestrianGraph,
    cfg: &MaskConfig,
) -> Result<ProbabilityRaster, RasterError> {
    let res = cfg.resolution_m_per_px;
    assert!(res > 0.0, "resolution must be positive");

    let mut bbox = crate::geo::Bbox::empty();
    for n in &truth.nodes {
        bbox.include(n.local_xy);
    }
    for e in &truth.edges {
        for p in &e.geometry {
            bbox.include(*p);
        }
    }
    if truth.nodes.is_empty() && truth.edges.is_empty() {
        let t = [res, 0.0, 0.0, 0.0, -res, 0.0];
        return Ok(ProbabilityRaster::background(1, 1, t, truth.anchor));
    }

    let pad = (cfg.padding_m / res).ceil() * res;
    let width = (((bbox.max.x - bbox.min.x) + 2.0 * pad) / res).ceil() as usize;
    let height = (((bbox.max.y - bbox.min.y) + 2.0 * pad) / res).ceil() as usize;
    let (width, height) = (width.max(1), height.max(1));
    if width > cfg.max_dimension_px || height > cfg.max_dimension_px {
        return Err(RasterError::Size { width, height, max: cfg.max_dimension_px });
    }
    // pixel (0,0) center is half a pixel in from the padded corner
    let transform = [
        res,
        0.0,
        bbox.min.x - pad + res / 2.0,
        0.0,
        -res,
        bbox.max.y + pad - res / 2.0,
    ];
    let frame = RasterFrame { width, height, transform };

    let n = width * height;
    let mut sidewalk = vec![0.0f32; n];
    let mut corner = vec![0.0f32; n];
    let mut crossing = vec![0.0f32; n];

    for e in &truth.edges {
        match e.kind {
            EdgeKind::Sidewalk => {
                fill_corridor(&mut sidewalk, &frame, &e.geometry, cfg.sidewalk_width_m / 2.0)
            }
            EdgeKind::Crossing | EdgeKind::Link => {
                fill_corridor(&mut crossing, &frame, &e.geometry, cfg.crossing_width_m / 2.0)
            }
        }
    }

    for cluster in corner_node_clusters(truth, 15.0) {
        let hull = convex_hull(&cluster);
        let mut hbox = crate::geo::Bbox::empty();
        for p in &hull {
            hbox.include(*p);
        }
        let d = cfg.corner_dilation_m;
        let (c_lo, r_hi) = frame.pixel_of(Vec2::new(hbox.min.x - d, hbox.min.y - d));
        let (c_hi, r_lo) = frame.pixel_of(Vec2::new(hbox.max.x + d, hbox.max.y + d));
        for row in r_lo.max(0)..=r_hi.min(height as i64 - 1) {
            for col in c_lo.max(0)..=c_hi.min(width as i64 - 1) {
                if row < 0 || col < 0 {
                    continue;
                }
                let p = frame.center(col, row);
                if dist_to_convex_hull(p, &hull) <= d {
                    corner[(row as usize) * width + col as usize] = 1.0;
                }
            }
        }
    }

    gaussian_blur(&mut sidewalk, width, height, cfg.blur_sigma_px);
    gaussian_blur(&mut corner, width, height, cfg.blur_sigma_px);
    gaussian_blur(&mut crossing, width, height, cfg.blur_sigma_px);

    let mut background = vec![0.0f32; n];
    for i in 0..n {
        let total = sidewalk[i] as f64 + corner[i] as f64 + crossing[i] as f64;
        if total > 1.0 {
            sidewalk[i] = (sidewalk[i] as f64 / total) as f32;
            corner[i] = (corner[i] as f64 / total) as f32;
            crossing[i] = (crossing[i] as f64 / total) as f32;
        }
        let fg = (sidewalk[i] as f64 + corner[i] as f64 + crossing[i] as f64).min(1.0);
        background[i] = (1.0 - fg) as f32;
    }

    Ok(ProbabilityRaster {
        width,
        height,
        classes: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
        transform,
        anchor: truth.anchor,
        planes: vec![background, sidewalk, corner, crossing],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pedgraph::{NodeKind, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_raster(width: usize, height: usize) -> ProbabilityRaster {
        ProbabilityRaster::background(
            width,
            height,
            [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            LonLat::new(0.0, 0.0),
        )
    }

    fn random_simplex_raster(width: usize, height: usize, seed: u64) -> ProbabilityRaster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = identity_raster(width, height);
        for i in 0..width * height {
            let raw: Vec<f32> = (0..4).map(|_| rng.gen_range(0.01f32..1.0)).collect();
            // normalize in f32 exactly as stored so the sum stays within tolerance
            let sum: f32 = raw.iter().sum();
            for (ci, v) in raw.iter().enumerate() {
                r.planes[ci][i] = v / sum;
            }
        }
        r
    }

    #[test]
    fn one_pixel_round_trip() {
        let r = identity_raster(1, 1);
        let bytes = r.write_bytes().unwrap();
        let back = ProbabilityRaster::read_bytes(&bytes).unwrap();
        assert_eq!(back.width, 1);
        assert_eq!(back.planes, r.planes);
        assert_eq!(back.write_bytes().unwrap(), bytes);
    }

    #[test]
    fn random_raster_round_trips_bitwise() {
        for seed in [1u64, 7, 42] {
            let r = random_simplex_raster(64, 64, seed);
            let bytes = r.write_bytes().unwrap();
            let back = ProbabilityRaster::read_bytes(&bytes).unwrap();
            for (a, b) in r.planes.iter().zip(back.planes.iter()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            assert_eq!(back.transform, r.transform);
            assert_eq!(back.classes, r.classes);
        }
    }

    #[test]
    fn nan_plane_rejected_on_write() {
        let mut r = identity_raster(2, 2);
        r.planes[1][3] = f32::NAN;
        match r.write_bytes() {
            Err(RasterError::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn magic_mismatch_and_truncation() {
        let r = identity_raster(4, 4);
        let mut bytes = r.write_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            ProbabilityRaster::read_bytes(&bad),
            Err(RasterError::Format { offset: 0, .. })
        ));
        bytes.truncate(bytes.len() - 10);
        match ProbabilityRaster::read_bytes(&bytes) {
            Err(RasterError::Format { offset, .. }) => assert_eq!(offset, bytes.len()),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn broken_simplex_rejected_on_read() {
        let mut r = identity_raster(2, 2);
        r.planes[0][2] = 0.5; // sum now 0.5 at pixel 2
        // bypass write validation by assembling bytes manually
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"PPR1\n");
        bytes.extend_from_slice(r.header_json().to_string().as_bytes());
        bytes.push(b'\n');
        for plane in &r.planes {
            for v in plane {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        assert!(matches!(
            ProbabilityRaster::read_bytes(&bytes),
            Err(RasterError::Format { .. })
        ));
    }

    #[test]
    fn world_pixel_round_trip_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut r = identity_raster(8, 8);
            loop {
                r.transform = [
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-100.0..100.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-100.0..100.0),
                ];
                if r.det().abs() > 0.1 {
                    break;
                }
            }
            for _ in 0..10 {
                let p = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
                let (c, rr) = r.world_to_pixel(p);
                let back = r.pixel_to_world(c, rr);
                assert!(back.dist(p) < 1e-9);
            }
        }
    }

    #[test]
    fn scale_transform_world_to_pixel() {
        let mut r = identity_raster(16, 16);
        r.transform = [0.5, 0.0, 0.0, 0.0, 0.5, 0.0];
        let (c, rr) = r.world_to_pixel(Vec2::new(4.0, 4.0));
        assert!((c - 8.0).abs() < 1e-12 && (rr - 8.0).abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_square_pixel_count() {
        let r = identity_raster(16, 16);
        // strictly-inside centers of (1.5,1.5)-(5.5,5.5) are cols/rows 2..=5
        let poly = [
            Vec2::new(1.5, 1.5),
            Vec2::new(5.5, 1.5),
            Vec2::new(5.5, 5.5),
            Vec2::new(1.5, 5.5),
        ];
        let samples = pixels_in_polygon(&r, &poly, "background").unwrap();
        assert_eq!(samples.len(), 16);
        // row-major scan order
        assert_eq!((samples[0].col, samples[0].row), (2, 2));
        assert_eq!((samples[15].col, samples[15].row), (5, 5));
    }

    #[test]
    fn polygon_outside_bounds_is_empty() {
        let r = identity_raster(8, 8);
        let poly = [Vec2::new(100.0, 100.0), Vec2::new(110.0, 100.0), Vec2::new(105.0, 110.0)];
        assert!(pixels_in_polygon(&r, &poly, "background").unwrap().is_empty());
    }

    #[test]
    fn pixels_in_polygon_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let r = identity_raster(32, 32);
        for _ in 0..100 {
            // random convex polygon: hull of random points
            let pts: Vec<Vec2> = (0..8)
                .map(|_| Vec2::new(rng.gen_range(-5.0..36.0), rng.gen_range(-5.0..36.0)))
                .collect();
            let hull = convex_hull(&pts);
            if hull.len() < 3 {
                continue;
            }
            let fast = pixels_in_polygon(&r, &hull, "background").unwrap();
            let mut slow = Vec::new();
            for row in 0..32usize {
                for col in 0..32usize {
                    if point_in_polygon(Vec2::new(col as f64, row as f64), &hull) {
                        slow.push((col, row));
                    }
                }
            }
            let fast_idx: Vec<(usize, usize)> = fast.iter().map(|s| (s.col, s.row)).collect();
            assert_eq!(fast_idx, slow);
        }
    }

    #[test]
    fn empty_graph_is_all_background() {
        let g = PedestrianGraph::new(LonLat::new(0.0, 0.0));
        let r = synthesize_mask(&g, &MaskConfig::default()).unwrap();
        let bg = r.class_index("background").unwrap();
        assert!(r.planes[bg].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn straight_sidewalk_corridor_exact() {
        let mut g = PedestrianGraph::new(LonLat::new(0.0, 0.0));
        let a = g.add_node(Vec2::new(0.0, 0.0), NodeKind::SidewalkEndpoint, None, Provenance::Hypothesized);
        let b = g.add_node(Vec2::new(10.0, 0.0), NodeKind::SidewalkEndpoint, None, Provenance::Hypothesized);
        g.add_edge(
            (a, b),
            EdgeKind::Sidewalk,
            vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)],
            Provenance::Hypothesized,
        );
        let cfg = MaskConfig {
            resolution_m_per_px: 0.5,
            sidewalk_width_m: 2.0,
            blur_sigma_px: 0.0,
            ..Default::default()
        };
        let r = synthesize_mask(&g, &cfg).unwrap();
        let sw = r.class_index("sidewalk").unwrap();
        // the corridor is exactly 4 pixels tall in every column it covers
        let mut per_col = vec![0usize; r.width];
        for row in 0..r.height {
            for col in 0..r.width {
                let v = r.value(sw, col, row);
                assert!(v == 0.0 || v == 1.0);
                if v == 1.0 {
                    per_col[col] += 1;
                }
            }
        }
        // interior columns (past the rounded end caps) are exactly 4 px tall
        let mut interior = Vec::new();
        for col in 0..r.width {
            let x = r.pixel_to_world(col as f64, 0.0).x;
            if x > 1.0 && x < 9.0 {
                interior.push(per_col[col]);
            }
        }
        assert!(!interior.is_empty());
        assert!(interior.iter().all(|&c| c == 4), "column heights {interior:?}");
    }

    #[test]
    fn synthesized_mask_keeps_simplex_after_blur() {
        let net = crate::street::load_street_network(&crate::fixture::plus_fixture(60.0)).unwrap();
        let g = crate::pedestrianfer::hypothesize(
            &net,
            &crate::pedestrianfer::PedestrianferConfig::default(),
        )
        .unwrap();
        let r = synthesize_mask(&g, &MaskConfig::default()).unwrap();
        for i in 0..r.width * r.height {
            let sum: f64 = r.planes.iter().map(|p| p[i] as f64).sum();
            assert!((sum - 1.0).abs() <= SIMPLEX_TOL, "pixel {i} sums to {sum}");
        }
        // crossing corridor present near the center
        let cr = r.class_index("crossing").unwrap();
        assert!(r.planes[cr].iter().any(|&v| v > 0.5));
    }

    #[test]
    fn convex_hull_of_square_plus_inner_point() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 4.0),
            Vec2::new(0.0, 4.0),
            Vec2::new(2.0, 2.0),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(signed_area(&hull) > 0.0);
    }
}
