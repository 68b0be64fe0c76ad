//! Command-line front end.
//!
//! Exit codes: `0` success, `1` a sweep finished with failed grid points,
//! `2` invalid input or configuration, `3` the sampler or an output writer
//! failed. Human-readable messages go to stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyze::{self, FdrCutoff, RecoveryMetrics};
use crate::config::{normalize_key, parse_list, ConfigFile};
use crate::copula::CountMatrix;
use crate::error::Error;
use crate::graph::Adjacency;
use crate::sampler::{run_chains, Hyperparameters, ModelData, RunSummary, SamplerConfig, Variant};
use crate::simulate::{self, MarginalSpec, ScenarioConfig};
use crate::trace;
use crate::tree::{normalize_to_unit_depth, read_newick, tree_correlation, tree_distance, with_rank_lengths, PhyloTree};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

pub const WORKERS_ENV: &str = "PHYLOBCG_WORKERS";

pub const FIT_SUMMARY: &str = "summary.json";
pub const FIT_EDGES: &str = "edges.csv";
pub const FIT_COMMUNITIES: &str = "communities.csv";
pub const FIT_POSITIONS: &str = "positions.csv";
pub const FIT_TRACE: &str = "trace.bin";
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Parser)]
#[command(name = "phylobcg", version, about = "Tree-informed Bayesian copula graphical models for microbial count data")]
pub struct Cli {
    /// Worker threads for chains and replicates (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,

    /// Print one progress line per finished unit of work to stdout.
    #[arg(long, global = true)]
    pub progress: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a network to a count table.
    Fit(FitArgs),
    /// Simulate scenario bundles.
    Simulate(SimulateArgs),
    /// Score fitted networks against simulated truth.
    Evaluate(EvaluateArgs),
    /// Write the correlation and distance matrices of a tree.
    Tree(TreeArgs),
    /// One-at-a-time hyperparameter sensitivity sweep.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SamplerArgs {
    /// phylo, oracle, dist or flat.
    #[arg(long)]
    pub variant: Option<String>,
    /// Total iterations including burn-in.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Slab-to-spike variance ratio.
    #[arg(long = "h")]
    pub h: Option<f64>,
    /// Exponential rate on the diagonal of the concentration matrix.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Latent dimension.
    #[arg(long = "L")]
    pub latent_dim: Option<usize>,
    #[arg(long = "a-sigma")]
    pub a_sigma: Option<f64>,
    #[arg(long = "b-sigma")]
    pub b_sigma: Option<f64>,
    #[arg(long = "a-v0")]
    pub a_v0: Option<f64>,
    #[arg(long = "b-v0")]
    pub b_v0: Option<f64>,
    /// Number of true edges; fixes the oracle inclusion probability.
    #[arg(long = "oracle-edge-count")]
    pub oracle_edge_count: Option<usize>,
    /// Visit concentration-matrix columns in a random order each sweep.
    #[arg(long = "random-column-order")]
    pub random_column_order: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Count CSV: header of taxon names, first column sample ids.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Newick tree over the taxa.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Scenario bundle directory supplying counts, tree and (for oracle) the edge count.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Comma-separated branch lengths per taxonomic rank level, replacing the tree's own.
    #[arg(long = "rank-lengths")]
    pub rank_lengths: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Target posterior expected FDR.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the binary trace of retained draws.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Diffusion variance of the latent positions.
    #[arg(long = "sigma-sq")]
    pub sigma_sq: Option<f64>,
    #[arg(long = "L")]
    pub latent_dim: Option<usize>,
    /// G-Wishart shape b (degrees of freedom b + p - 1).
    #[arg(long = "gwishart-shape")]
    pub gwishart_shape: Option<f64>,
    #[arg(long = "gwishart-sweeps")]
    pub gwishart_sweeps: Option<usize>,
    /// Reference count CSV whose columns supply the marginals.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Range of the zero-inflation mass, e.g. `0.2,0.7`.
    #[arg(long = "zero-mass")]
    pub zero_mass: Option<String>,
    #[arg(long = "nb-size")]
    pub nb_size: Option<f64>,
    #[arg(long = "nb-mean")]
    pub nb_mean: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory of replicate directories, each holding the true edges and a fit subdirectory.
    #[arg(long)]
    pub runs: PathBuf,
    /// Name of the fit subdirectory inside each replicate.
    #[arg(long = "fit-name", default_value = "fit")]
    pub fit_name: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long = "rank-lengths")]
    pub rank_lengths: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Labelled 0/1 matrix of true edges for recovery metrics.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Grid axis `name=v1,v2,...`; repeatable; replaces the same axis from the config file.
    #[arg(long = "grid")]
    pub grid: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Failed(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Failed(_) => EXIT_FAILED,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Failed(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> Failure {
    Failure::Failed(e.to_string())
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parse arguments, run the subcommand and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(invalid("--workers must be at least 1"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(failed)?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.progress),
        Command::Simulate(a) => cmd_simulate(a, cli.progress),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Tree(a) => cmd_tree(a),
        Command::Sweep(a) => cmd_sweep(a, cli.progress),
    })
}

fn load_config(path: &Option<PathBuf>, allowed: &[&str]) -> CliResult<ConfigFile> {
    let cfg = match path {
        Some(p) => ConfigFile::read(p).map_err(invalid)?,
        None => ConfigFile::default(),
    };
    cfg.check_keys(allowed).map_err(invalid)?;
    Ok(cfg)
}

fn pick<T: std::str::FromStr>(flag: Option<T>, cfg: &ConfigFile, key: &str) -> CliResult<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key).map_err(invalid),
    }
}

fn pick_path(flag: &Option<PathBuf>, cfg: &ConfigFile, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.get_str(key).map(PathBuf::from))
}

const SAMPLER_KEYS: &[&str] = &[
    "variant",
    "iterations",
    "burn_in",
    "thin",
    "chains",
    "seed",
    "h",
    "lambda",
    "l",
    "a_sigma",
    "b_sigma",
    "a_v0",
    "b_v0",
    "oracle_edge_count",
    "random_column_order",
];
const DATA_KEYS: &[&str] = &["counts", "tree", "bundle", "rank_lengths"];

fn allowed_keys(extra: &[&'static str]) -> Vec<&'static str> {
    SAMPLER_KEYS.iter().chain(DATA_KEYS).chain(extra).copied().collect()
}

/// Merge flags, config file and defaults into a sampler configuration.
pub fn resolve_sampler(a: &SamplerArgs, cfg: &ConfigFile) -> CliResult<SamplerConfig> {
    let d = SamplerConfig::default();
    let dh = Hyperparameters::default();
    let variant = match a.variant.clone().or_else(|| cfg.get_str("variant").map(str::to_string)) {
        Some(v) => v.parse::<Variant>().map_err(invalid)?,
        None => d.variant,
    };
    let random_column_order = a.random_column_order || cfg.get::<bool>("random_column_order").map_err(invalid)?.unwrap_or(false);
    let c = SamplerConfig {
        variant,
        iterations: pick(a.iterations, cfg, "iterations")?.unwrap_or(d.iterations),
        burn_in: pick(a.burn_in, cfg, "burn_in")?.unwrap_or(d.burn_in),
        thin: pick(a.thin, cfg, "thin")?.unwrap_or(d.thin),
        chains: pick(a.chains, cfg, "chains")?.unwrap_or(d.chains),
        seed: pick(a.seed, cfg, "seed")?.unwrap_or(d.seed),
        chain_seeds: None,
        hyper: Hyperparameters {
            a_sigma: pick(a.a_sigma, cfg, "a_sigma")?.unwrap_or(dh.a_sigma),
            b_sigma: pick(a.b_sigma, cfg, "b_sigma")?.unwrap_or(dh.b_sigma),
            a_v: pick(a.a_v0, cfg, "a_v0")?.unwrap_or(dh.a_v),
            b_v: pick(a.b_v0, cfg, "b_v0")?.unwrap_or(dh.b_v),
            h: pick(a.h, cfg, "h")?.unwrap_or(dh.h),
            lambda: pick(a.lambda, cfg, "lambda")?.unwrap_or(dh.lambda),
            latent_dim: pick(a.latent_dim, cfg, "l")?.unwrap_or(dh.latent_dim),
        },
        oracle_edge_count: pick(a.oracle_edge_count, cfg, "oracle_edge_count")?,
        random_column_order,
        store_omega_trace: false,
    };
    Ok(c)
}

/// Count table and tree ready for fitting.
pub struct Inputs {
    pub counts: CountMatrix,
    pub tree: Option<PhyloTree>,
    pub counts_path: PathBuf,
    pub tree_path: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
}

fn load_tree(path: &Path, rank_lengths: Option<&str>) -> CliResult<PhyloTree> {
    let tree = read_newick(path).map_err(invalid)?;
    match rank_lengths {
        Some(s) => {
            let lengths = parse_list(s).map_err(|e| invalid(format!("--rank-lengths: {e}")))?;
            with_rank_lengths(&tree, &lengths).map_err(invalid)
        }
        None => Ok(tree),
    }
}

fn load_inputs(a: &DataArgs, cfg: &ConfigFile) -> CliResult<Inputs> {
    let bundle = pick_path(&a.bundle, cfg, "bundle");
    let counts_path = pick_path(&a.counts, cfg, "counts")
        .or_else(|| bundle.as_ref().map(|b| b.join(simulate::BUNDLE_COUNTS)))
        .ok_or_else(|| invalid("--counts is required"))?;
    let tree_path = pick_path(&a.tree, cfg, "tree").or_else(|| bundle.as_ref().map(|b| b.join(simulate::BUNDLE_TREE)));
    let rank_lengths = a.rank_lengths.clone().or_else(|| cfg.get_str("rank_lengths").map(str::to_string));
    let counts = CountMatrix::read_csv(&counts_path).map_err(invalid)?;
    let tree = match &tree_path {
        Some(p) => Some(load_tree(p, rank_lengths.as_deref())?),
        None => None,
    };
    Ok(Inputs { counts, tree, counts_path, tree_path, bundle })
}

fn finalize_sampler(mut config: SamplerConfig, inputs: &Inputs) -> CliResult<SamplerConfig> {
    if config.variant.needs_tree() && inputs.tree.is_none() {
        return Err(invalid(format!("the {} variant needs a tree: pass --tree", config.variant)));
    }
    if config.variant == Variant::Oracle && config.oracle_edge_count.is_none() {
        if let Some(b) = &inputs.bundle {
            let m = simulate::read_manifest(b).map_err(invalid)?;
            config.oracle_edge_count = Some(m.true_edge_count);
        } else {
            return Err(invalid("the oracle variant needs --oracle-edge-count"));
        }
    }
    config.validate().map_err(invalid)?;
    Ok(config)
}

/// Machine-readable record of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub alpha: f64,
    pub cutoff: f64,
    pub fdr: f64,
    pub fdr_achieved: bool,
    pub selected_edges: usize,
    pub clustering_coefficient: f64,
    pub communities: usize,
    pub counts: String,
    pub tree: Option<String>,
    pub run: RunSummary,
}

/// What a fit produced, for callers that keep going (sweeps).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub summary: FitSummary,
    pub labels: Vec<String>,
    pub selected: Adjacency,
}

/// Run the sampler, select edges and write every fit output into `out`.
pub fn fit_and_write(
    config: &SamplerConfig,
    inputs: &Inputs,
    alpha: f64,
    out: &Path,
    write_trace: bool,
) -> CliResult<FitResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let data = ModelData::new(&inputs.counts, inputs.tree.as_ref()).map_err(invalid)?;
    let output = run_chains(config, &data).map_err(failed)?;
    let summary = &output.summary;
    let labels = summary.labels.clone();
    let p = labels.len();
    let (edges, cut) = match analyze::select_edges(&summary.pi_hat, alpha) {
        Ok(s) => (s.edges, s.cutoff),
        Err(Error::Degenerate(_)) => {
            log::warn!("every posterior inclusion probability is zero; selecting no edges");
            (Adjacency::empty(p), FdrCutoff { cutoff: 0.0, fdr: 0.0, selected: 0, achieved: true })
        }
        Err(e) => return Err(failed(e)),
    };
    let partial = analyze::partial_correlations(&summary.omega_hat).map_err(failed)?;
    let communities = analyze::detect_communities(&edges);
    let rows = analyze::edge_rows(&labels, &summary.pi_hat, &partial, &edges);
    analyze::write_edge_list(&out.join(FIT_EDGES), &rows).map_err(failed)?;
    analyze::write_communities(&out.join(FIT_COMMUNITIES), &labels, &communities).map_err(failed)?;
    if let Some(t) = &summary.latent_mean {
        analyze::write_positions(&out.join(FIT_POSITIONS), &labels, t).map_err(failed)?;
    }
    if write_trace {
        trace::write_trace(&out.join(FIT_TRACE), p, &output.traces).map_err(failed)?;
    }
    let fit = FitSummary {
        alpha,
        cutoff: cut.cutoff,
        fdr: cut.fdr,
        fdr_achieved: cut.achieved,
        selected_edges: edges.edge_count(),
        clustering_coefficient: analyze::clustering_coefficient(&edges),
        communities: communities.iter().max().map_or(0, |m| m + 1),
        counts: inputs.counts_path.display().to_string(),
        tree: inputs.tree_path.as_ref().map(|t| t.display().to_string()),
        run: output.run_summary(),
    };
    crate::io::write_json(&out.join(FIT_SUMMARY), &fit).map_err(failed)?;
    Ok(FitResult { summary: fit, labels, selected: edges })
}

fn cmd_fit(a: &FitArgs, progress: bool) -> CliResult<i32> {
    let cfg = load_config(&a.config, &allowed_keys(&["alpha", "out", "trace"]))?;
    let inputs = load_inputs(&a.data, &cfg)?;
    let config = finalize_sampler(resolve_sampler(&a.sampler, &cfg)?, &inputs)?;
    let alpha = pick(a.alpha, &cfg, "alpha")?.unwrap_or(DEFAULT_ALPHA);
    let out = pick_path(&a.out, &cfg, "out").ok_or_else(|| invalid("--out is required"))?;
    let write_trace = a.trace || cfg.get::<bool>("trace").map_err(invalid)?.unwrap_or(false);
    let res = fit_and_write(&config, &inputs, alpha, &out, write_trace)?;
    if progress {
        println!("fit: {} edges selected at cutoff {}", res.summary.selected_edges, res.summary.cutoff);
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(a: &SimulateArgs, progress: bool) -> CliResult<i32> {
    let cfg = load_config(
        &a.config,
        &[
            "p",
            "n",
            "replicates",
            "seed",
            "sigma_sq",
            "l",
            "gwishart_shape",
            "gwishart_sweeps",
            "reference",
            "zero_mass",
            "nb_size",
            "nb_mean",
            "out",
        ],
    )?;
    let d = ScenarioConfig::default();
    let MarginalSpec::ZeroInflatedNb { zero_mass: dz, size: ds, mean: dm } = MarginalSpec::default() else {
        unreachable!()
    };
    let reference = pick_path(&a.reference, &cfg, "reference");
    let marginals = match reference {
        Some(path) => MarginalSpec::Reference(CountMatrix::read_csv(&path).map_err(invalid)?),
        None => {
            let zero_mass = match a.zero_mass.clone().or_else(|| cfg.get_str("zero_mass").map(str::to_string)) {
                Some(s) => match parse_list(&s).map_err(invalid)?.as_slice() {
                    &[lo, hi] => (lo, hi),
                    _ => return Err(invalid("--zero-mass takes two values `lo,hi`")),
                },
                None => dz,
            };
            MarginalSpec::ZeroInflatedNb {
                zero_mass,
                size: pick(a.nb_size, &cfg, "nb_size")?.unwrap_or(ds),
                mean: pick(a.nb_mean, &cfg, "nb_mean")?.unwrap_or(dm),
            }
        }
    };
    let sc = ScenarioConfig {
        p: pick(a.p, &cfg, "p")?.unwrap_or(d.p),
        n: pick(a.n, &cfg, "n")?.unwrap_or(d.n),
        sigma_sq: pick(a.sigma_sq, &cfg, "sigma_sq")?.unwrap_or(d.sigma_sq),
        latent_dim: pick(a.latent_dim, &cfg, "l")?.unwrap_or(d.latent_dim),
        gwishart_shape: pick(a.gwishart_shape, &cfg, "gwishart_shape")?.unwrap_or(d.gwishart_shape),
        gwishart_sweeps: pick(a.gwishart_sweeps, &cfg, "gwishart_sweeps")?.unwrap_or(d.gwishart_sweeps),
        marginals,
    };
    let replicates = pick(a.replicates, &cfg, "replicates")?.unwrap_or(1);
    let seed = pick(a.seed, &cfg, "seed")?.unwrap_or(1);
    let out = pick_path(&a.out, &cfg, "out").ok_or_else(|| invalid("--out is required"))?;
    if sc.p < 2 {
        return Err(invalid(format!("--p must be at least 2 (a tree needs two terminals), got {}", sc.p)));
    }
    if sc.n < 2 {
        return Err(invalid(format!("--n must be at least 2, got {}", sc.n)));
    }
    if replicates == 0 {
        return Err(invalid("--replicates must be at least 1"));
    }
    if !(sc.sigma_sq > 0.0) || !(sc.gwishart_shape > 0.0) || sc.latent_dim == 0 || sc.gwishart_sweeps == 0 {
        return Err(invalid("sigma-sq, gwishart-shape, L and gwishart-sweeps must be positive"));
    }
    if let MarginalSpec::Reference(r) = &sc.marginals {
        if r.ncols() == 0 {
            return Err(invalid("reference table has no columns"));
        }
    }
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let s = simulate::simulate_scenario(&sc, seed, r).map_err(invalid)?;
            simulate::write_bundle(&out.join(replicate_dir_name(r, replicates)), &s).map_err(failed)?;
            if progress {
                println!("simulate: replicate {r} done");
            }
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;
    Ok(EXIT_OK)
}

/// `rep_000`, `rep_001`, ...
pub fn replicate_dir_name(r: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(3);
    format!("rep_{r:0width$}")
}

/// Recovery statistics of one fitted replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub replicate: String,
    #[serde(flatten)]
    pub recovery: RecoveryMetrics,
    /// Fraction of selected edges that are false, 0 when nothing is selected.
    pub fdr: f64,
    pub clustering_estimated: f64,
    pub clustering_true: f64,
}

impl ReplicateMetrics {
    pub const METRICS: [&'static str; 5] = ["mcc", "tpr", "fpr", "fdr", "clustering_estimated"];

    pub fn value(&self, metric: &str) -> f64 {
        match metric {
            "mcc" => self.recovery.mcc,
            "tpr" => self.recovery.tpr,
            "fpr" => self.recovery.fpr,
            "fdr" => self.fdr,
            "clustering_estimated" => self.clustering_estimated,
            _ => f64::NAN,
        }
    }
}

pub fn score_replicate(name: &str, truth_path: &Path, edges_path: &Path) -> CliResult<ReplicateMetrics> {
    if !truth_path.exists() {
        return Err(invalid(format!("{} not found", truth_path.display())));
    }
    if !edges_path.exists() {
        return Err(invalid(format!("{} not found", edges_path.display())));
    }
    let (labels, truth) = simulate::read_edges_matrix(truth_path).map_err(invalid)?;
    let rows = analyze::read_edge_list(edges_path).map_err(invalid)?;
    let mut seen: Vec<&str> = rows.iter().flat_map(|r| [r.taxon_a.as_str(), r.taxon_b.as_str()]).collect();
    seen.sort_unstable();
    seen.dedup();
    let mut expected: Vec<&str> = labels.iter().map(String::as_str).collect();
    expected.sort_unstable();
    if seen != expected || rows.len() != crate::graph::num_pairs(labels.len()) {
        return Err(invalid(format!(
            "{}: taxa do not match those of {}",
            edges_path.display(),
            truth_path.display()
        )));
    }
    let estimate = analyze::selected_from_rows(&labels, &rows).map_err(invalid)?;
    let recovery = analyze::recovery_metrics(&estimate, &truth).map_err(invalid)?;
    let positives = recovery.tp + recovery.fp;
    Ok(ReplicateMetrics {
        replicate: name.to_string(),
        fdr: if positives == 0 { 0.0 } else { recovery.fp as f64 / positives as f64 },
        clustering_estimated: analyze::clustering_coefficient(&estimate),
        clustering_true: analyze::clustering_coefficient(&truth),
        recovery,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub two_se: f64,
    pub replicates: usize,
}

pub fn aggregate(metrics: &[ReplicateMetrics]) -> Vec<AggregateRow> {
    ReplicateMetrics::METRICS
        .iter()
        .map(|&m| {
            let v: Vec<f64> = metrics.iter().map(|r| r.value(m)).collect();
            let (mean, se) = analyze::mean_and_se(&v);
            AggregateRow { metric: m.to_string(), mean, se, two_se: 2.0 * se, replicates: v.len() }
        })
        .collect()
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const METRICS_DIR: &str = "metrics";

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<i32> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&a.runs)
        .map_err(|e| invalid(format!("{}: {e}", a.runs.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(invalid(format!("{}: no replicate directories", a.runs.display())));
    }
    let metrics = dirs
        .iter()
        .map(|d| {
            let name = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            score_replicate(&name, &d.join(simulate::BUNDLE_EDGES), &d.join(&a.fit_name).join(FIT_EDGES))
        })
        .collect::<CliResult<Vec<_>>>()?;
    for m in &metrics {
        crate::io::write_json(&a.out.join(METRICS_DIR).join(format!("{}.json", m.replicate)), m).map_err(failed)?;
    }
    write_aggregate(&a.out.join(AGGREGATE_FILE), &aggregate(&metrics)).map_err(failed)?;
    Ok(EXIT_OK)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(crate::io::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate(path: &Path) -> crate::Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub const TREE_CORRELATION: &str = "correlation.csv";
pub const TREE_DISTANCE: &str = "distance.csv";
pub const TREE_NORMALIZED: &str = "tree.nwk";

fn cmd_tree(a: &TreeArgs) -> CliResult<i32> {
    let tree = load_tree(&a.tree, a.rank_lengths.as_deref())?;
    let unit = normalize_to_unit_depth(&tree).map_err(invalid)?;
    let h = tree_correlation(&unit).map_err(invalid)?;
    let d = tree_distance(&unit).map_err(invalid)?;
    h.write_csv(&a.out.join(TREE_CORRELATION)).map_err(failed)?;
    d.write_csv(&a.out.join(TREE_DISTANCE)).map_err(failed)?;
    let nwk = a.out.join(TREE_NORMALIZED);
    std::fs::write(&nwk, format!("{}\n", unit.to_newick())).map_err(|e| failed(Error::io(&nwk, e)))?;
    Ok(EXIT_OK)
}

/// Hyperparameters a sweep axis may vary. `sigma_prior` and `v0_prior` set
/// both inverse-gamma parameters at once.
pub const SWEEP_AXES: &[&str] = &["h", "lambda", "sigma_prior", "v0_prior", "a_sigma", "b_sigma", "a_v0", "b_v0"];

pub fn apply_axis(hyper: &mut Hyperparameters, axis: &str, value: f64) -> crate::Result<()> {
    match axis {
        "h" => hyper.h = value,
        "lambda" => hyper.lambda = value,
        "sigma_prior" => (hyper.a_sigma, hyper.b_sigma) = (value, value),
        "v0_prior" => (hyper.a_v, hyper.b_v) = (value, value),
        "a_sigma" => hyper.a_sigma = value,
        "b_sigma" => hyper.b_sigma = value,
        "a_v0" => hyper.a_v = value,
        "b_v0" => hyper.b_v = value,
        other => {
            return Err(Error::invalid(format!(
                "unknown sweep axis `{other}` (expected one of {})",
                SWEEP_AXES.join(", ")
            )))
        }
    }
    Ok(())
}

/// Grid axes from the config file, with `--grid` flags replacing axes of the same name.
pub fn resolve_grid(flags: &[String], cfg: &ConfigFile) -> CliResult<Vec<(String, Vec<f64>)>> {
    let mut grid: Vec<(String, Vec<f64>)> = cfg.grid().to_vec();
    for g in flags {
        let (name, values) = g
            .split_once('=')
            .ok_or_else(|| invalid(format!("--grid `{g}`: expected name=v1,v2,...")))?;
        let name = normalize_key(name);
        let values = parse_list(values).map_err(|e| invalid(format!("--grid `{g}`: {e}")))?;
        match grid.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = values,
            None => grid.push((name, values)),
        }
    }
    for (name, _) in &grid {
        if !SWEEP_AXES.contains(&name.as_str()) {
            return Err(invalid(format!("unknown sweep axis `{name}` (expected one of {})", SWEEP_AXES.join(", "))));
        }
    }
    if grid.iter().all(|(_, v)| v.is_empty()) {
        return Err(invalid("the sweep grid is empty"));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub status: String,
    pub cutoff: Option<f64>,
    pub fdr: Option<f64>,
    pub selected_edges: Option<usize>,
    pub clustering: Option<f64>,
    pub mcc: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_FILE: &str = "sweep.csv";

fn cmd_sweep(a: &SweepArgs, progress: bool) -> CliResult<i32> {
    let cfg = load_config(&a.config, &allowed_keys(&["alpha", "out", "truth"]))?;
    let grid = resolve_grid(&a.grid, &cfg)?;
    let inputs = load_inputs(&a.data, &cfg)?;
    let base = finalize_sampler(resolve_sampler(&a.sampler, &cfg)?, &inputs)?;
    let alpha = pick(a.alpha, &cfg, "alpha")?.unwrap_or(DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    let out = pick_path(&a.out, &cfg, "out").ok_or_else(|| invalid("--out is required"))?;
    let truth_path = pick_path(&a.truth, &cfg, "truth")
        .or_else(|| inputs.bundle.as_ref().map(|b| b.join(simulate::BUNDLE_EDGES)));
    let truth = match &truth_path {
        Some(p) => Some(simulate::read_edges_matrix(p).map_err(invalid)?),
        None => None,
    };

    let mut rows = Vec::new();
    let mut any_failed = false;
    for (axis, values) in &grid {
        for (i, &value) in values.iter().enumerate() {
            let mut config = base.clone();
            let attempt = apply_axis(&mut config.hyper, axis, value)
                .and_then(|_| config.validate())
                .map_err(invalid)
                .and_then(|_| fit_and_write(&config, &inputs, alpha, &out.join(format!("{axis}_{i}")), false))
                .and_then(|fit| match &truth {
                    Some((labels, t)) => {
                        let est = reorder_selected(&fit, labels).map_err(invalid)?;
                        let m = analyze::recovery_metrics(&est, t).map_err(invalid)?;
                        Ok((fit, Some(m)))
                    }
                    None => Ok((fit, None)),
                });
            let row = match attempt {
                Ok((fit, m)) => SweepRow {
                    parameter: axis.clone(),
                    value,
                    status: "ok".into(),
                    cutoff: Some(fit.summary.cutoff),
                    fdr: Some(fit.summary.fdr),
                    selected_edges: Some(fit.summary.selected_edges),
                    clustering: Some(fit.summary.clustering_coefficient),
                    mcc: m.as_ref().map(|m| m.mcc),
                    tpr: m.as_ref().map(|m| m.tpr),
                    fpr: m.as_ref().map(|m| m.fpr),
                    error: None,
                },
                Err(f) => {
                    any_failed = true;
                    eprintln!("sweep: {axis}={value} failed: {}", f.message());
                    SweepRow {
                        parameter: axis.clone(),
                        value,
                        status: "failed".into(),
                        cutoff: None,
                        fdr: None,
                        selected_edges: None,
                        clustering: None,
                        mcc: None,
                        tpr: None,
                        fpr: None,
                        error: Some(f.message().to_string()),
                    }
                }
            };
            if progress {
                println!("sweep: {axis}={value} {}", row.status);
            }
            rows.push(row);
        }
    }
    write_sweep(&out.join(SWEEP_FILE), &rows).map_err(failed)?;
    Ok(if any_failed { EXIT_PARTIAL } else { EXIT_OK })
}

fn reorder_selected(fit: &FitResult, labels: &[String]) -> crate::Result<Adjacency> {
    let idx: Vec<usize> = labels
        .iter()
        .map(|l| {
            fit.labels
                .iter()
                .position(|f| f == l)
                .ok_or_else(|| Error::invalid(format!("true-edge taxon `{l}` was not fitted")))
        })
        .collect::<crate::Result<_>>()?;
    if idx.len() != fit.labels.len() {
        return Err(Error::invalid("true-edge taxa differ from the fitted taxa"));
    }
    let mut e = Adjacency::empty(labels.len());
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate().skip(a + 1) {
            e.set(a, b, fit.selected.get(ia, ib));
        }
    }
    Ok(e)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> crate::Result<()> {
    let mut w = csv::Writer::from_writer(crate::io::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sweep(path: &Path) -> crate::Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
