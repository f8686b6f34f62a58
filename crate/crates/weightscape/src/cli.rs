//! Command-line interface. Flags override the config file, which overrides
//! built-in defaults; `WEIGHTSCAPE_*` environment variables sit between the
//! file and the flags.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use weightscape_core::interpret::{
    ablation_experiment, conserved_weights, input_relevance, ConservedWeightReport,
};
use weightscape_core::landscape::parse_label;
use weightscape_core::rng::derive_seed;
use weightscape_core::{DisconnectivityGraph, LandscapeDatabase};

use crate::config::{DataSource, RunConfig};
use crate::emit::{emit_graph, GraphFormat};
use crate::error::{Error, Result};
use crate::explore::{explore, ExploreOptions, Problem};
use crate::{fsutil, report, store, table};

#[derive(Debug, Parser)]
#[command(
    name = "weightscape",
    version,
    about = "Map the loss landscape of small classifiers and find the weights that matter"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for databases, graphs and reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Print a JSON summary on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Basin-hop for minima, then connect them through transition states.
    Explore(ExploreArgs),
    /// Build the disconnectivity graph of a database.
    Graph(GraphArgs),
    /// Find the conserved weights of a group of minima.
    Analyze(AnalyzeArgs),
    /// Shuffle a group's conserved weights and compare against random controls.
    Ablate(AblateArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Uniform points on the unit square labelled by tile parity.
    Checkerboard {
        #[arg(long)]
        samples: Option<usize>,
        /// Tiles per axis.
        #[arg(long)]
        tiles: Option<usize>,
        /// Probability of flipping a label.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DbArg {
    /// Landscape database (default: OUT_DIR/landscape.json).
    #[arg(long, value_name = "FILE")]
    pub db: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub db: DbArg,
    /// Continue an interrupted run instead of starting over.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub db: DbArg,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Output formats, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "svg")]
    pub format: Vec<GraphFormat>,
    /// Output path without extension (default: OUT_DIR/graph).
    #[arg(long, value_name = "STEM")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    #[command(flatten)]
    pub db: DbArg,
    /// Group label LEVEL_NODE, as printed by `graph` (default: the deepest
    /// group holding the global minimum with at least
    /// `analysis.min_group_size` members).
    #[arg(long)]
    pub group: Option<String>,
    /// Conservation threshold on the standard deviation.
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub group: GroupArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    #[arg(long)]
    pub trials: Option<usize>,
}

/// Loads the config and applies the global flags.
fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn db_path(cfg: &RunConfig, arg: &DbArg) -> PathBuf {
    arg.db
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("landscape.json"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_out(cli: &Cli, text: &str, json: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let body = if cli.json {
        serde_json::to_string_pretty(json).expect("summary serializes") + "\n"
    } else {
        text.to_string()
    };
    out.write_all(body.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Dataset(DatasetCommand::Checkerboard {
            samples,
            tiles,
            noise,
            out,
        }) => {
            cfg.dataset.source = DataSource::Checkerboard;
            if let Some(v) = samples {
                cfg.dataset.samples = *v;
            }
            if let Some(v) = tiles {
                cfg.dataset.tiles = *v;
            }
            if let Some(v) = noise {
                cfg.dataset.noise = *v;
            }
            if cfg.dataset.tiles == 0 {
                return Err(Error::Usage("--tiles must be at least 1".into()));
            }
            let d = &cfg.dataset;
            let seed = cfg.dataset_seed();
            let ds = weightscape_core::data::gen_checkerboard(d.samples, d.tiles, d.noise, seed)?
                .with_feature_names(vec!["x".into(), "y".into()])?;
            table::save_csv(out, &ds)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                out: &'a Path,
                rows: usize,
                tiles: usize,
                seed: u64,
            }
            let s = Summary {
                out,
                rows: ds.len(),
                tiles: d.tiles,
                seed,
            };
            print_out(
                cli,
                &format!("wrote {} rows to {}\n", s.rows, out.display()),
                &s,
            )
        }
        Command::Explore(args) => {
            cfg.validate()?;
            ensure_dir(&cfg.out_dir)?;
            let problem = Problem::from_config(&cfg)?;
            let path = db_path(&cfg, &args.db);
            let mut opts = ExploreOptions {
                resume: args.resume,
                ..Default::default()
            };
            if let Some(w) = cli.workers {
                opts.workers = w.max(1);
            }
            let (_, summary) = explore(&cfg, &problem, &path, opts, |line| eprintln!("{line}"))?;
            print_out(
                cli,
                &(report::summary_text(&summary) + &format!("database {}\n", path.display())),
                &summary,
            )
        }
        Command::Graph(args) => {
            if let Some(l) = args.levels {
                cfg.graph.n_levels = l;
            }
            let path = db_path(&cfg, &args.db);
            let db = store::load_db(&path)?;
            let graph = db.build_disconnectivity(cfg.graph.n_levels)?;
            let stem = args
                .out
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("graph"));
            if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
                ensure_dir(parent)?;
            }
            let mut formats = args.format.clone();
            formats.sort();
            formats.dedup();
            let mut files = Vec::new();
            for f in formats {
                let mut file = stem.clone().into_os_string();
                file.push(".");
                file.push(f.extension());
                let file = PathBuf::from(file);
                fsutil::write_atomic(&file, emit_graph(&graph, &db, f).as_bytes())?;
                files.push(file);
            }
            let roster = roster(&graph);
            let mut text = String::new();
            for (label, members) in &roster {
                text.push_str(&format!("{label}\t{members}\n"));
            }
            for f in &files {
                text.push_str(&format!("wrote {}\n", f.display()));
            }
            #[derive(Serialize)]
            struct Summary {
                files: Vec<PathBuf>,
                levels: usize,
                e_top: f64,
                e_bottom: f64,
                groups: Vec<(String, usize)>,
            }
            print_out(
                cli,
                &text,
                &Summary {
                    files,
                    levels: graph.n_levels,
                    e_top: graph.e_top,
                    e_bottom: graph.e_bottom,
                    groups: roster,
                },
            )
        }
        Command::Analyze(AnalyzeArgs { group }) => {
            let (db, report) = analyze(&mut cfg, group)?;
            let names = dataset_names(&cfg);
            let relevance = input_relevance(&report, db.arch());
            if report.trivially_conserved {
                eprintln!("warning: group {} has a single minimum, so every weight is trivially conserved", report.group_label);
            }
            ensure_dir(&cfg.out_dir)?;
            let stem = cfg
                .out_dir
                .join(format!("conserved_{}", report.group_label));
            let json = report::conserved_json(&report, &relevance, names.as_deref());
            let text = report::conserved_text(&report, &relevance, names.as_deref());
            fsutil::write_atomic(&stem.with_extension("json"), json.as_bytes())?;
            fsutil::write_atomic(&stem.with_extension("txt"), text.as_bytes())?;
            let value: serde_json::Value = serde_json::from_str(&json).expect("just serialized");
            print_out(cli, &text, &value)
        }
        Command::Ablate(args) => {
            if let Some(t) = args.trials {
                cfg.analysis.trials = t;
            }
            let (db, conserved) = analyze(&mut cfg, &args.group)?;
            if conserved.conserved.is_empty() {
                return Err(Error::Runtime(format!(
                    "group {} has no conserved weights at n = {}; try a larger --n",
                    conserved.group_label, conserved.sigma_threshold
                )));
            }
            let n_params = conserved.conserved.len();
            if 2 * n_params > db.arch().parameter_count() {
                return Err(Error::Usage(format!(
                    "group {} conserves {n_params} of {} weights at n = {}; a disjoint control set needs at least as many others, try a smaller --n",
                    conserved.group_label,
                    db.arch().parameter_count(),
                    conserved.sigma_threshold
                )));
            }
            let problem = Problem::from_config(&cfg)?;
            let obj = problem.objective()?;
            let seed = derive_seed(cfg.seed, "ablation");
            let rep = ablation_experiment(&obj, &db, &conserved, cfg.analysis.trials, seed)?;
            ensure_dir(&cfg.out_dir)?;
            let json = report::ablation_json(&rep);
            fsutil::write_atomic(
                &cfg.out_dir
                    .join(format!("ablation_{}.json", rep.group_label)),
                json.as_bytes(),
            )?;
            let value: serde_json::Value = serde_json::from_str(&json).expect("just serialized");
            print_out(cli, &report::ablation_text(&rep), &value)
        }
    }
}

fn roster(graph: &DisconnectivityGraph) -> Vec<(String, usize)> {
    graph
        .nodes
        .iter()
        .map(|n| (n.label(), n.members.len()))
        .collect()
}

fn analyze(
    cfg: &mut RunConfig,
    args: &GroupArgs,
) -> Result<(LandscapeDatabase, ConservedWeightReport)> {
    if let Some(n) = args.n {
        cfg.analysis.sigma_threshold = n;
    }
    if let Some(l) = args.levels {
        cfg.graph.n_levels = l;
    }
    let db = store::load_db(&db_path(cfg, &args.db))?;
    let graph = db.build_disconnectivity(cfg.graph.n_levels)?;
    let (level, index) = match &args.group {
        Some(label) => {
            let labels = || {
                roster(&graph)
                    .into_iter()
                    .map(|(l, m)| format!("{l} ({m})"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let (level, index) = parse_label(label)
                .map_err(|e| Error::Usage(format!("{e}; available: {}", labels())))?;
            if graph.node(level, index).is_none() {
                return Err(Error::Usage(format!(
                    "no group {label} in a {}-level graph; available: {}",
                    graph.n_levels,
                    labels()
                )));
            }
            (level, index)
        }
        None => {
            let best = db
                .global_minimum()
                .expect("graph built from a non-empty db")
                .id;
            let node = graph
                .deepest_group_of(best, cfg.analysis.min_group_size)
                .ok_or_else(|| {
                    Error::Runtime(format!(
                        "minimum {best} shares no group with {} or more minima; pass --group",
                        cfg.analysis.min_group_size
                    ))
                })?;
            (node.level, node.index)
        }
    };
    let report = conserved_weights(&db, &graph, level, index, cfg.analysis.sigma_threshold)?;
    Ok((db, report))
}

/// Feature names of a CSV dataset, read from its header only.
fn dataset_names(cfg: &RunConfig) -> Option<Vec<String>> {
    let d = &cfg.dataset;
    if d.source != DataSource::Csv || !d.has_header {
        return None;
    }
    let ds = table::load_csv(d.path.as_ref()?, &d.csv_options()).ok()?;
    ds.feature_names().map(<[String]>::to_vec)
}
