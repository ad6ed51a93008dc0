//! Command-line interface. Exit codes: 0 success, 2 validation error
//! (bad arguments or malformed input), 3 stage failure.

use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::geo::LonLat;
use crate::pedestrianfer::hypothesize;
use crate::pedgraph::PedestrianGraph;
use crate::pipeline::{
    load_graph, load_streets, run_eval, run_prophet, PipelineConfig, PipelineError,
};
use crate::raster::{synthesize_mask, MaskConfig, ProbabilityRaster};
use crate::refine::refine_graph;
use crate::report::{render_generation_table, AreaStats, GenerationRow};
use crate::street::find_intersections;
use crate::tasking::{
    partition_project, replay_log, serve, Clock, Project, SystemClock, TaskRegion, TaskService,
};

#[derive(Parser)]
#[command(name = "pathweaver", version, about = "Pedestrian pathway graph tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct ConfigArgs {
    /// JSON pipeline config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    streets: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    out_stats: Option<PathBuf>,
    /// "full" or "metadata".
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    offset_m: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution_m_per_px: Option<f64>,
    #[arg(long)]
    tol_m: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    PipelineError::validation("config", format!("{}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    PipelineError::validation("config", format!("{}: {e}", path.display()))
                })?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.streets {
            cfg.streets = v.clone();
        }
        if let Some(v) = &self.mask {
            cfg.mask = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out_graph = v.clone();
        }
        if let Some(v) = &self.out_stats {
            cfg.out_stats = Some(v.clone());
        }
        if let Some(v) = &self.regime {
            cfg.regime = v.clone();
        }
        if let Some(v) = self.offset_m {
            cfg.offset_m = v;
        }
        if let Some(v) = self.threshold {
            cfg.prune_threshold = v;
        }
        if let Some(v) = self.iterations {
            cfg.spsa_iterations = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.resolution_m_per_px {
            cfg.resolution_m_per_px = v;
        }
        if let Some(v) = self.tol_m {
            cfg.tol_m = v;
        }
        if cfg.streets.as_os_str().is_empty() {
            return Err(PipelineError::validation("config", "--streets is required"));
        }
        Ok(cfg)
    }

    /// Synth reads a graph rather than streets, so waive that requirement.
    fn resolve_for_synth(&self) -> Result<PipelineConfig, PipelineError> {
        let mut args = self.clone();
        if args.streets.is_none() {
            args.streets = Some(PathBuf::from("unused"));
        }
        args.resolve()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the optimistic pedestrian graph from street centerlines.
    /// With --refine, continue through mask refinement (the full pipeline).
    Hypothesize {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run the full pipeline: refine against --mask (or a
        /// self-synthesized mask when --mask is absent).
        #[arg(long)]
        refine: bool,
    },
    /// Refine an existing graph against a probability raster.
    Refine {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Hypothesized graph to refine.
        #[arg(long)]
        graph: PathBuf,
    },
    /// Synthesize a probability raster from a graph.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        graph: PathBuf,
    },
    /// Evaluate a predicted graph against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        streets: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        tol_m: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Task provisioning: partition, serve, or simulate.
    Task {
        #[command(subcommand)]
        cmd: TaskCommand,
    },
    /// Area statistics for a generated graph.
    Stats {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        streets: Option<PathBuf>,
        /// Append the published reference row for format comparison.
        #[arg(long)]
        reference: bool,
    },
}

#[derive(Subcommand)]
enum TaskCommand {
    /// Partition a project disc into intersection tasks.
    Partition {
        #[arg(long)]
        streets: PathBuf,
        /// "lon,lat"; defaults to the network anchor.
        #[arg(long)]
        center: Option<String>,
        #[arg(long, default_value_t = crate::tasking::DEFAULT_PROJECT_RADIUS_M)]
        radius_m: f64,
        #[arg(long, default_value = "project")]
        project_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the line-JSON lock protocol over TCP.
    Serve {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7177")]
        addr: String,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Drive seeded scripted clients against an in-process service and
    /// verify replay.
    Simulate {
        #[arg(long)]
        project: PathBuf,
        #[arg(long, default_value_t = 10)]
        clients: usize,
        #[arg(long, default_value_t = 50)]
        ops: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// 2 = validation error, 3 = stage failure.
fn error_code(e: &PipelineError) -> i32 {
    if e.validation {
        2
    } else {
        3
    }
}

pub fn cli_main() -> ! {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(error_code(&e));
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Hypothesize { cfg, refine } => {
            let cfg = cfg.resolve()?;
            if cfg.out_graph.as_os_str().is_empty() {
                return Err(PipelineError::validation("config", "--out is required"));
            }
            if refine {
                let out = run_prophet(&cfg)?;
                println!("{}", render_generation_table(&[(&"generated"[..], &out.stats).into()]));
            } else {
                let net = load_streets(&cfg.streets)?;
                let g = hypothesize(&net, &cfg.pedestrianfer()?).map_err(|e| {
                    PipelineError::validation("hypothesize", e.to_string())
                })?;
                write_graph(&g, &cfg.out_graph)?;
                let stats = AreaStats::of_graph(&g, find_intersections(&net, 3).len());
                println!("{}", render_generation_table(&[(&"hypothesized"[..], &stats).into()]));
            }
            Ok(())
        }
        Command::Refine { cfg, graph } => {
            let cfg = cfg.resolve()?;
            if cfg.out_graph.as_os_str().is_empty() {
                return Err(PipelineError::validation("config", "--out is required"));
            }
            let hypo = load_graph(&graph)?;
            let net = load_streets(&cfg.streets)?;
            let mask = match &cfg.mask {
                Some(p) => ProbabilityRaster::read_file(p)
                    .map_err(|e| PipelineError::validation("load-mask", e.to_string()))?,
                None => return Err(PipelineError::validation("config", "--mask is required")),
            };
            let refined = refine_graph(&hypo, &mask, &net, &cfg.refine())
                .map_err(|e| stage_err("refine", e))?;
            write_graph(&refined, &cfg.out_graph)
        }
        Command::Synth { cfg, graph } => {
            let cfg = cfg.resolve_for_synth()?;
            let g = load_graph(&graph)?;
            let mask_cfg = MaskConfig {
                resolution_m_per_px: cfg.resolution_m_per_px,
                ..Default::default()
            };
            let mask = synthesize_mask(&g, &mask_cfg).map_err(|e| stage_err("synth", e))?;
            if cfg.out_graph.as_os_str().is_empty() {
                return Err(PipelineError::validation("config", "--out is required"));
            }
            mask.write_file(&cfg.out_graph).map_err(|e| stage_err("synth", e))
        }
        Command::Eval { pred, truth, streets, tol_m, report } => {
            let (_, table) = run_eval(&pred, &truth, &streets, tol_m, report.as_deref())?;
            print!("{table}");
            Ok(())
        }
        Command::Task { cmd } => run_task(cmd),
        Command::Stats { graph, streets, reference } => {
            let g = load_graph(&graph)?;
            let intersections = match streets {
                Some(p) => find_intersections(&load_streets(&p)?, 3).len(),
                None => 0,
            };
            let stats = AreaStats::of_graph(&g, intersections);
            let mut rows: Vec<GenerationRow> =
                vec![(&*graph.display().to_string(), &stats).into()];
            if reference {
                rows.extend(crate::report::generation_reference_rows());
            }
            print!("{}", render_generation_table(&rows));
            Ok(())
        }
    }
}

fn stage_err(stage: &'static str, e: impl ToString) -> PipelineError {
    PipelineError::validation(stage, e.to_string()).into_stage()
}

impl PipelineError {
    fn into_stage(mut self) -> Self {
        self.validation = false;
        self
    }
}

fn write_graph(g: &PedestrianGraph, path: &std::path::Path) -> Result<(), PipelineError> {
    let mut bytes = g.to_geojson().to_string().into_bytes();
    bytes.push(b'\n');
    std::fs::write(path, bytes)
        .map_err(|e| PipelineError::validation("serialize", format!("{}: {e}", path.display())))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ProjectFile {
    project: Project,
    tasks: Vec<TaskRegion>,
}

fn run_task(cmd: TaskCommand) -> Result<(), PipelineError> {
    match cmd {
        TaskCommand::Partition { streets, center, radius_m, project_id, out } => {
            let net = load_streets(&streets)?;
            let center = match center {
                Some(s) => parse_lonlat(&s)?,
                None => net.anchor,
            };
            let (project, tasks) =
                partition_project(&net, &project_id, center, radius_m, 3)
                    .map_err(|e| PipelineError::validation("partition", e.to_string()))?;
            let file = ProjectFile { project, tasks };
            std::fs::write(&out, serde_json::to_string_pretty(&file).unwrap())
                .map_err(|e| stage_err("partition", e))?;
            println!("{} tasks written to {}", file.tasks.len(), out.display());
            Ok(())
        }
        TaskCommand::Serve { project, addr, log } => {
            let file = read_project(&project)?;
            let clock: Arc<dyn Clock> = Arc::new(SystemClock);
            let mut svc = TaskService::new(file.tasks, clock);
            if let Some(path) = log {
                svc = svc.with_log_file(path);
            }
            let listener = TcpListener::bind(&addr).map_err(|e| stage_err("serve", e))?;
            println!("serving {} on {addr}", file.project.id);
            serve(listener, Arc::new(Mutex::new(svc))).map_err(|e| stage_err("serve", e))
        }
        TaskCommand::Simulate { project, clients, ops, seed } => {
            let file = read_project(&project)?;
            let baseline = file.tasks.clone();
            let clock: Arc<dyn Clock> = Arc::new(SystemClock);
            let mut svc = TaskService::new(file.tasks, clock);
            let task_ids: Vec<String> = svc.tasks.keys().cloned().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tokens: Vec<Option<crate::tasking::LockToken>> = vec![None; clients];
            let mut granted = 0usize;
            let mut rejected = 0usize;
            let mut committed = 0usize;
            for _ in 0..ops {
                let c = rng.gen_range(0..clients);
                let client = format!("client-{c}");
                match &tokens[c] {
                    None => {
                        let t = &task_ids[rng.gen_range(0..task_ids.len())];
                        match svc.acquire_lock(&client, t) {
                            Ok(tok) => {
                                tokens[c] = Some(tok);
                                granted += 1;
                            }
                            Err(_) => rejected += 1,
                        }
                    }
                    Some(tok) => {
                        if rng.gen::<bool>() {
                            let comment = crate::tasking::TaskComment {
                                completion_status: crate::tasking::CompletionStatus::Complete,
                                imagery_ok: true,
                                continue_next: true,
                                free_text: String::new(),
                            };
                            if svc.commit_task(tok, json!({}), comment).is_ok() {
                                committed += 1;
                            }
                        } else {
                            let _ = svc.relinquish_lock(tok);
                        }
                        tokens[c] = None;
                    }
                }
            }
            let replayed = replay_log(baseline, &svc.log)
                .map_err(|e| stage_err("simulate", e))?;
            assert_eq!(replayed, svc.snapshot(), "replay diverged from live state");
            println!(
                "{ops} ops: {granted} locks granted, {rejected} rejected, {committed} commits; replay consistent"
            );
            Ok(())
        }
    }
}

fn read_project(path: &std::path::Path) -> Result<ProjectFile, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::validation("project", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::validation("project", format!("{}: {e}", path.display())))
}

fn parse_lonlat(s: &str) -> Result<LonLat, PipelineError> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |v: &str| v.trim().parse::<f64>();
    match parts.as_slice() {
        [lon, lat] => match (parse(lon), parse(lat)) {
            (Ok(lon), Ok(lat)) => Ok(LonLat::new(lon, lat)),
            _ => Err(PipelineError::validation("args", format!("bad --center {s:?}"))),
        },
        _ => Err(PipelineError::validation("args", format!("bad --center {s:?}"))),
    }
}
