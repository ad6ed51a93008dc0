//! End-to-end orchestration: the generation pipeline (load streets,
//! hypothesize, refine against a mask, serialize) and evaluation runs.
//! Every error is labeled with the stage and input path that produced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{evaluate, voronoi_partition, EvalReport};
use crate::pedestrianfer::{hypothesize, PedestrianferConfig, Regime};
use crate::pedgraph::PedestrianGraph;
use crate::raster::{synthesize_mask, MaskConfig, ProbabilityRaster};
use crate::refine::{refine_graph, RefineConfig};
use crate::report::AreaStats;
use crate::street::{find_intersections, load_street_network, StreetNetwork};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub streets: PathBuf,
    /// Probability raster to refine against. When absent, a mask is
    /// synthesized from the hypothesized graph itself.
    pub mask: Option<PathBuf>,
    pub out_graph: PathBuf,
    pub out_stats: Option<PathBuf>,
    /// "full" or "metadata".
    pub regime: String,
    pub offset_m: f64,
    pub prune_threshold: f64,
    pub spsa_iterations: usize,
    pub seed: u64,
    pub resolution_m_per_px: f64,
    pub tol_m: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            streets: PathBuf::new(),
            mask: None,
            out_graph: PathBuf::new(),
            out_stats: None,
            regime: "full".into(),
            offset_m: 4.0,
            prune_threshold: 0.3,
            spsa_iterations: 200,
            seed: 0,
            resolution_m_per_px: 0.3,
            tol_m: 3.0,
        }
    }
}

impl PipelineConfig {
    pub fn pedestrianfer(&self) -> Result<PedestrianferConfig, PipelineError> {
        let regime = match self.regime.as_str() {
            "full" => Regime::Full,
            "metadata" => Regime::Metadata,
            other => {
                return Err(PipelineError::validation(
                    "config",
                    format!("unknown regime {other:?}; expected \"full\" or \"metadata\""),
                ))
            }
        };
        Ok(PedestrianferConfig { regime, offset_m: self.offset_m, ..Default::default() })
    }

    pub fn refine(&self) -> RefineConfig {
        let mut cfg = RefineConfig::default();
        cfg.prune_threshold = self.prune_threshold;
        cfg.spsa.iterations = self.spsa_iterations;
        cfg.spsa.seed = self.seed;
        cfg
    }

    pub fn mask_cfg(&self) -> MaskConfig {
        MaskConfig { resolution_m_per_px: self.resolution_m_per_px, ..Default::default() }
    }
}

#[derive(Debug, Error)]
#[error("{stage}{}: {message}", path.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
pub struct PipelineError {
    pub stage: &'static str,
    pub path: Option<PathBuf>,
    pub message: String,
    /// True when the failure is bad input rather than a stage fault.
    pub validation: bool,
}

impl PipelineError {
    fn stage(stage: &'static str, path: Option<&Path>, message: impl ToString) -> Self {
        Self {
            stage,
            path: path.map(Path::to_path_buf),
            message: message.to_string(),
            validation: false,
        }
    }

    pub fn validation(stage: &'static str, message: impl ToString) -> Self {
        Self { stage, path: None, message: message.to_string(), validation: true }
    }
}

fn read_text(stage: &'static str, path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::stage(stage, Some(path), e))
}

pub fn load_streets(path: &Path) -> Result<StreetNetwork, PipelineError> {
    let text = read_text("load-streets", path)?;
    load_street_network(&text).map_err(|e| PipelineError::stage("load-streets", Some(path), e))
}

pub fn load_graph(path: &Path) -> Result<PedestrianGraph, PipelineError> {
    let text = read_text("load-graph", path)?;
    PedestrianGraph::from_geojson(&text)
        .map_err(|e| PipelineError::stage("load-graph", Some(path), e))
}

#[derive(Debug)]
pub struct ProphetOutput {
    pub graph: PedestrianGraph,
    pub stats: AreaStats,
    /// Serialized graph exactly as written to out_graph.
    pub graph_bytes: Vec<u8>,
}

/// Full generation run: load -> hypothesize -> mask -> refine -> serialize.
pub fn run_prophet(cfg: &PipelineConfig) -> Result<ProphetOutput, PipelineError> {
    let net = load_streets(&cfg.streets)?;
    let hypo = hypothesize(&net, &cfg.pedestrianfer()?)
        .map_err(|e| PipelineError::stage("hypothesize", Some(&cfg.streets), e))?;
    let mask: ProbabilityRaster = match &cfg.mask {
        Some(path) => ProbabilityRaster::read_file(path)
            .map_err(|e| PipelineError::stage("load-mask", Some(path), e))?,
        None => synthesize_mask(&hypo, &cfg.mask_cfg())
            .map_err(|e| PipelineError::stage("synthesize-mask", Some(&cfg.streets), e))?,
    };
    let refined = refine_graph(&hypo, &mask, &net, &cfg.refine())
        .map_err(|e| PipelineError::stage("refine", Some(&cfg.streets), e))?;
    let stats = AreaStats::of_graph(&refined, find_intersections(&net, 3).len());

    let mut graph_bytes = refined.to_geojson().to_string().into_bytes();
    graph_bytes.push(b'\n');
    std::fs::write(&cfg.out_graph, &graph_bytes)
        .map_err(|e| PipelineError::stage("serialize", Some(&cfg.out_graph), e))?;
    if let Some(out) = &cfg.out_stats {
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        std::fs::write(out, json).map_err(|e| PipelineError::stage("serialize", Some(out), e))?;
    }
    Ok(ProphetOutput { graph: refined, stats, graph_bytes })
}

/// Evaluation run: partition from street intersections, metric suite,
/// JSON report plus rendered table.
pub fn run_eval(
    pred_path: &Path,
    truth_path: &Path,
    streets_path: &Path,
    tol_m: f64,
    report_path: Option<&Path>,
) -> Result<(EvalReport, String), PipelineError> {
    let pred = load_graph(pred_path)?;
    let truth = load_graph(truth_path)?;
    let net = load_streets(streets_path)?;
    for (name, anchor) in [("pred", pred.anchor), ("truth", truth.anchor)] {
        if (anchor.lon - net.anchor.lon).abs() > 1e-9 || (anchor.lat - net.anchor.lat).abs() > 1e-9
        {
            return Err(PipelineError::validation(
                "eval",
                format!("{name} graph anchor {anchor:?} differs from streets anchor {:?}", net.anchor),
            ));
        }
    }
    let sites: Vec<crate::geo::Vec2> = find_intersections(&net, 3)
        .iter()
        .map(|&v| net.node(v).local_xy)
        .collect();
    if sites.is_empty() {
        return Err(PipelineError::validation("eval", "streets contain no intersections"));
    }
    let mut bbox = crate::geo::Bbox::empty();
    for n in pred.nodes.iter().chain(truth.nodes.iter()) {
        bbox.include(n.local_xy);
    }
    for s in &sites {
        bbox.include(*s);
    }
    let part = voronoi_partition(&sites, bbox.expanded(10.0));
    let report = evaluate(&pred, &truth, &part, tol_m);
    let table = report.text_table();
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report).expect("report serialize");
        std::fs::write(path, json)
            .map_err(|e| PipelineError::stage("write-report", Some(path), e))?;
    }
    Ok((report, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::pedgraph::EdgeKind;

    fn write_fixture(dir: &Path, name: &str, content: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    fn grid_cfg(dir: &Path) -> PipelineConfig {
        let streets = write_fixture(dir, "streets.geojson", &fixture::grid_fixture(3, 3, 80.0));
        PipelineConfig {
            streets,
            out_graph: dir.join("graph.geojson"),
            out_stats: Some(dir.join("stats.json")),
            spsa_iterations: 25,
            ..Default::default()
        }
    }

    #[test]
    fn prophet_grid_self_mask_produces_expected_elements() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = grid_cfg(dir.path());
        let out = run_prophet(&cfg).unwrap();
        // 3x3 grid has 4 degree-3 and 1 degree-4 intersections
        assert_eq!(out.stats.intersection_count, 5);
        assert!(out.stats.crossing_count > 0);
        assert!(out.stats.sidewalk_count > 0);
        assert!(out.graph.edges_of_kind(EdgeKind::Link).count() > 0);
        // outputs landed on disk and parse back
        let reloaded = load_graph(&cfg.out_graph).unwrap();
        assert_eq!(reloaded.nodes.len(), out.graph.nodes.len());
        let stats: AreaStats =
            serde_json::from_str(&std::fs::read_to_string(cfg.out_stats.unwrap()).unwrap())
                .unwrap();
        assert_eq!(stats, out.stats);
    }

    #[test]
    fn prophet_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = grid_cfg(dir.path());
        let a = run_prophet(&cfg).unwrap();
        let b = run_prophet(&cfg).unwrap();
        assert_eq!(a.graph_bytes, b.graph_bytes);
    }

    #[test]
    fn missing_streets_is_stage_labeled() {
        let cfg = PipelineConfig {
            streets: PathBuf::from("/nonexistent/streets.geojson"),
            out_graph: PathBuf::from("/tmp/out.geojson"),
            ..Default::default()
        };
        let err = run_prophet(&cfg).unwrap_err();
        assert_eq!(err.stage, "load-streets");
        assert!(err.to_string().contains("/nonexistent/streets.geojson"));
    }

    #[test]
    fn bad_regime_is_validation_error() {
        let cfg = PipelineConfig { regime: "bogus".into(), ..Default::default() };
        let err = cfg.pedestrianfer().unwrap_err();
        assert!(err.validation);
    }

    #[test]
    fn eval_self_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = grid_cfg(dir.path());
        run_prophet(&cfg).unwrap();
        let report_path = dir.path().join("report.json");
        let (report, table) = run_eval(
            &cfg.out_graph,
            &cfg.out_graph,
            &cfg.streets,
            3.0,
            Some(&report_path),
        )
        .unwrap();
        assert_eq!(report.traversability_mean, 1.0);
        assert_eq!(report.edge_retrieval.f1, 1.0);
        assert!(table.contains("edge retrieval"));
        assert!(report_path.exists());
    }

    #[test]
    fn eval_pred_missing_crossing_scores_lower() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = grid_cfg(dir.path());
        let out = run_prophet(&cfg).unwrap();
        // drop every crossing and link from pred so the street sides
        // disconnect and the removed geometry falls outside the buffer
        let mut pred = crate::pedgraph::PedestrianGraph::new(out.graph.anchor);
        let mut map = std::collections::HashMap::new();
        for n in &out.graph.nodes {
            map.insert(n.id, pred.add_node(n.local_xy, n.kind, n.curb_state, n.provenance));
        }
        for e in &out.graph.edges {
            if !matches!(e.kind, EdgeKind::Crossing | EdgeKind::Link) {
                pred.add_edge(
                    (map[&e.endpoints.0], map[&e.endpoints.1]),
                    e.kind,
                    e.geometry.clone(),
                    e.provenance,
                );
            }
        }
        let pred_path = dir.path().join("pred.geojson");
        std::fs::write(&pred_path, pred.to_geojson().to_string()).unwrap();
        let (report, _) =
            run_eval(&pred_path, &cfg.out_graph, &cfg.streets, 3.0, None).unwrap();
        assert!(report.traversability_mean < 1.0);
        assert!(report.edge_retrieval.recall < 1.0);
    }

    #[test]
    fn eval_empty_pred_flags_f1() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = grid_cfg(dir.path());
        let out = run_prophet(&cfg).unwrap();
        let empty = crate::pedgraph::PedestrianGraph::new(out.graph.anchor);
        let pred_path = dir.path().join("empty.geojson");
        std::fs::write(&pred_path, empty.to_geojson().to_string()).unwrap();
        let (report, _) =
            run_eval(&pred_path, &cfg.out_graph, &cfg.streets, 3.0, None).unwrap();
        assert_eq!(report.edge_retrieval.f1, 0.0);
        assert!(report.edge_retrieval.degenerate);
        assert!(report.traversability_mean < 1.0);
    }
}
