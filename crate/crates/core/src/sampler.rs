//! Gibbs sampler orchestration: one full sweep per iteration over the latent
//! copula scores, the concentration matrix and graph, and the edge prior,
//! with burn-in, thinning and independent parallel chains.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{fit_ecdf, latent_observed, CountMatrix, EcdfTransform, LatentState, ObservedLatent};
use crate::error::{Error, Result};
use crate::graph::{num_pairs, upper_pairs, Adjacency};
use crate::graph_prior::{EdgeRule, GraphState};
use crate::phylo_latent::{decay_probs, neutral_decay_rate, DistDecay, LatentPositions, TreePrecision};
use crate::stats;
use crate::tree::{normalize_to_unit_depth, tree_correlation, tree_distance, PhyloTree};

pub const INITIAL_SPIKE_VARIANCE: f64 = 0.01;
pub const TRACKED_OMEGA_PAIRS: usize = 10;

/// How edge inclusion probabilities are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Probit of inner products of latent positions diffused along the tree.
    Phylo,
    /// Constant probability equal to the true edge density.
    Oracle,
    /// `exp(-gamma d_jk)` on patristic distances.
    Dist,
    /// Constant probability 1/2, ignoring the tree.
    Flat,
}

impl Variant {
    pub fn needs_tree(self) -> bool {
        matches!(self, Variant::Phylo | Variant::Dist)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Phylo => "phylo",
            Variant::Oracle => "oracle",
            Variant::Dist => "dist",
            Variant::Flat => "flat",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phylo" | "phylobcg" => Ok(Variant::Phylo),
            "oracle" => Ok(Variant::Oracle),
            "dist" => Ok(Variant::Dist),
            "flat" => Ok(Variant::Flat),
            other => Err(Error::invalid(format!(
                "unknown variant `{other}` (expected phylo, oracle, dist or flat)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_v: f64,
    pub b_v: f64,
    pub h: f64,
    pub lambda: f64,
    pub latent_dim: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { a_sigma: 0.001, b_sigma: 0.001, a_v: 0.001, b_v: 0.001, h: 2500.0, lambda: 1.0, latent_dim: 2 }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_v0", self.a_v),
            ("b_v0", self.b_v),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.h > 1.0) || !self.h.is_finite() {
            return Err(Error::invalid(format!("h must exceed 1, got {}", self.h)));
        }
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent dimension L must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub variant: Variant,
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Explicit per-chain seeds; defaults to `seed + c`.
    pub chain_seeds: Option<Vec<u64>>,
    pub hyper: Hyperparameters,
    pub oracle_edge_count: Option<usize>,
    /// Visit the columns of `Omega` in a fresh random order every sweep.
    pub random_column_order: bool,
    /// Keep every retained `Omega` (upper triangle) in the trace.
    pub store_omega_trace: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Phylo,
            iterations: 5500,
            burn_in: 500,
            thin: 1,
            chains: 1,
            seed: 1,
            chain_seeds: None,
            hyper: Hyperparameters::default(),
            oracle_edge_count: None,
            random_column_order: false,
            store_omega_trace: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.chains == 0 {
            return Err(Error::invalid("iterations, thin and chains must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.variant == Variant::Oracle && self.oracle_edge_count.is_none() {
            return Err(Error::invalid("the oracle variant needs an oracle edge count"));
        }
        self.hyper.validate()?;
        let seeds = self.chain_seeds();
        if seeds.len() != self.chains {
            return Err(Error::invalid(format!(
                "{} chain seeds given for {} chains",
                seeds.len(),
                self.chains
            )));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("chains must not share a seed"));
        }
        Ok(())
    }

    pub fn chain_seeds(&self) -> Vec<u64> {
        match &self.chain_seeds {
            Some(s) => s.clone(),
            None => (0..self.chains as u64).map(|c| self.seed.wrapping_add(c)).collect(),
        }
    }

    /// Draws kept per chain: post-burn-in iteration `k` (1-based) is kept
    /// when `k % thin == 0`.
    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    fn is_retained(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in) % self.thin == 0
    }
}

/// Immutable inputs shared by all chains.
#[derive(Debug, Clone)]
pub struct ModelData {
    labels: Vec<String>,
    observed: ObservedLatent,
    ecdf: EcdfTransform,
    tree: Option<Arc<TreePrecision>>,
    distance: Option<Arc<DMatrix<f64>>>,
}

impl ModelData {
    /// Validate counts and, when given, align the tree to the count columns.
    /// Trees that are not unit depth are normalized first.
    pub fn new(counts: &CountMatrix, tree: Option<&PhyloTree>) -> Result<Self> {
        let labels = counts.col_ids().to_vec();
        let ecdf = fit_ecdf(counts)?;
        let observed = latent_observed(counts, &ecdf)?;
        let (tree_prec, distance) = match tree {
            None => (None, None),
            Some(t) => {
                let t = if t.is_unit_depth() { t.clone() } else { normalize_to_unit_depth(t)? };
                let h = tree_correlation(&t)?.reordered(&labels)?;
                let d = tree_distance(&t)?.reordered(&labels)?;
                (Some(Arc::new(TreePrecision::new(&h)?)), Some(Arc::new(d.d)))
            }
        };
        Ok(Self { labels, observed, ecdf, tree: tree_prec, distance })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_samples(&self) -> usize {
        self.observed.n
    }

    pub fn num_taxa(&self) -> usize {
        self.observed.p
    }

    pub fn has_tree(&self) -> bool {
        self.tree.is_some()
    }
}

/// Edge prior state of one chain.
#[derive(Debug, Clone)]
pub enum EdgePrior {
    Phylo(LatentPositions),
    Fixed(f64),
    Dist { decay: DistDecay, distance: Arc<DMatrix<f64>> },
}

/// Complete state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub latent: Option<LatentState>,
    pub graph: GraphState,
    pub prior: EdgePrior,
    /// Current inclusion probabilities (zero diagonal).
    pub pi: DMatrix<f64>,
    pub hyper: Hyperparameters,
    pub edge_rule: EdgeRule,
    pub random_column_order: bool,
}

impl ChainState {
    pub fn new(graph: GraphState, prior: EdgePrior, hyper: Hyperparameters) -> Self {
        let pi = prior_probs(&prior, graph.dim());
        Self { latent: None, graph, prior, pi, hyper, edge_rule: EdgeRule::Exact, random_column_order: false }
    }

    fn initialize(config: &SamplerConfig, data: &ModelData, rng: &mut ChaCha8Rng) -> Result<Self> {
        let p = data.num_taxa();
        let hyper = config.hyper;
        let prior = match config.variant {
            Variant::Phylo => {
                let tree = data.tree.clone().ok_or_else(|| Error::invalid("the phylo variant needs a tree"))?;
                EdgePrior::Phylo(LatentPositions::initialize(hyper.latent_dim, tree, rng)?)
            }
            Variant::Dist => {
                let distance = data.distance.clone().ok_or_else(|| Error::invalid("the dist variant needs a tree"))?;
                EdgePrior::Dist { decay: DistDecay::new(neutral_decay_rate(&distance))?, distance }
            }
            Variant::Oracle => {
                let count = config
                    .oracle_edge_count
                    .ok_or_else(|| Error::invalid("the oracle variant needs an oracle edge count"))?;
                EdgePrior::Fixed(oracle_probability(count, p)?)
            }
            Variant::Flat => EdgePrior::Fixed(0.5),
        };
        let graph = GraphState::new(p, INITIAL_SPIKE_VARIANCE, hyper.h, hyper.lambda)?;
        let mut state = Self::new(graph, prior, hyper);
        state.latent = Some(LatentState::initialize(&data.observed, &data.ecdf)?);
        state.random_column_order = config.random_column_order;
        Ok(state)
    }

    /// Column sweep of `Omega`, then edges, then the spike variance.
    pub fn update_graph(&mut self, scatter: &DMatrix<f64>, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut order: Vec<usize> = (0..self.graph.dim()).collect();
        if self.random_column_order {
            order.shuffle(rng);
        }
        self.graph.sweep_omega(scatter, n_samples, &order, rng)?;
        self.graph.sample_edges_with(&self.pi, self.edge_rule, rng);
        self.graph.sample_spike_variance(self.hyper.a_v, self.hyper.b_v, rng);
        Ok(())
    }

    /// Update the edge-prior parameters given the current graph and refresh
    /// the inclusion probabilities.
    pub fn update_edge_prior(&mut self, adapt: bool, rng: &mut ChaCha8Rng) -> Result<()> {
        match &mut self.prior {
            EdgePrior::Phylo(lp) => {
                for j in 0..lp.num_taxa() {
                    lp.sample_position(j, &self.graph.edges, rng)?;
                }
                lp.sample_tree_scale(self.hyper.a_sigma, self.hyper.b_sigma, rng);
            }
            EdgePrior::Fixed(_) => return Ok(()),
            EdgePrior::Dist { decay, distance } => {
                decay.step(&self.graph.edges, distance, adapt, rng)?;
            }
        }
        self.pi = prior_probs(&self.prior, self.graph.dim());
        Ok(())
    }

    /// One full iteration on count data.
    pub fn step(&mut self, adapt: bool, rng: &mut ChaCha8Rng, times: &mut PhaseTimes) -> Result<()> {
        let t0 = Instant::now();
        let latent = self
            .latent
            .as_mut()
            .ok_or_else(|| Error::invalid("chain has no latent copula state"))?;
        latent.sample_truncated_z(&self.graph.omega, rng)?;
        latent.sample_thresholds(rng)?;
        if cfg!(debug_assertions) {
            latent.check_invariants()?;
        }
        let scatter = latent.scatter();
        let n = latent.nrows();
        let t1 = Instant::now();
        self.update_graph(&scatter, n, rng)?;
        let t2 = Instant::now();
        self.update_edge_prior(adapt, rng)?;
        let t3 = Instant::now();
        times.latent_secs += (t1 - t0).as_secs_f64();
        times.graph_secs += (t2 - t1).as_secs_f64();
        times.prior_secs += (t3 - t2).as_secs_f64();
        Ok(())
    }

    pub fn sigma_sq(&self) -> Option<f64> {
        match &self.prior {
            EdgePrior::Phylo(lp) => Some(lp.sigma_sq),
            _ => None,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match &self.prior {
            EdgePrior::Dist { decay, .. } => Some(decay.gamma),
            _ => None,
        }
    }
}

fn prior_probs(prior: &EdgePrior, p: usize) -> DMatrix<f64> {
    match prior {
        EdgePrior::Phylo(lp) => lp.inclusion_probs(),
        EdgePrior::Fixed(pi) => {
            let mut m = DMatrix::from_element(p, p, *pi);
            m.fill_diagonal(0.0);
            m
        }
        EdgePrior::Dist { decay, distance } => decay_probs(distance, decay.gamma),
    }
}

/// `count / C(p, 2)`, required to lie strictly inside `(0, 1)`.
pub fn oracle_probability(count: usize, p: usize) -> Result<f64> {
    let pairs = num_pairs(p);
    if count == 0 || count >= pairs {
        return Err(Error::invalid(format!(
            "oracle edge count must be between 1 and {} for {p} taxa, got {count}",
            pairs.saturating_sub(1)
        )));
    }
    Ok(count as f64 / pairs as f64)
}

/// Wall-clock seconds spent in each block of the sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub latent_secs: f64,
    pub graph_secs: f64,
    pub prior_secs: f64,
}

/// Retained output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub seed: u64,
    pub retained: usize,
    /// Packed upper-triangle adjacency per retained draw.
    pub edges: Vec<Vec<u8>>,
    pub sigma_sq: Vec<f64>,
    pub v0_sq: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Values of the tracked `omega_jk` per retained draw.
    pub omega_tracked: Vec<Vec<f64>>,
    /// Upper triangle (diagonal included) per retained draw, when requested.
    pub omega_trace: Vec<Vec<f64>>,
    pub edge_sum: DMatrix<f64>,
    pub omega_sum: DMatrix<f64>,
    pub position_sum: Option<DMatrix<f64>>,
    pub dist_acceptance: Option<f64>,
}

/// Pairs whose `omega_jk` traces feed the convergence diagnostic; chosen from
/// the base seed so that every chain tracks the same pairs.
pub fn tracked_pairs(p: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = upper_pairs(p).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a11);
    pairs.shuffle(&mut rng);
    pairs.truncate(TRACKED_OMEGA_PAIRS);
    pairs.sort_unstable();
    pairs
}

/// Run one chain from the given seed.
pub fn run_chain(config: &SamplerConfig, data: &ModelData, seed: u64) -> Result<(ChainTrace, PhaseTimes)> {
    config.validate()?;
    let p = data.num_taxa();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ChainState::initialize(config, data, &mut rng)?;
    let tracked = tracked_pairs(p, config.seed);
    let keep = config.retained_per_chain();
    let mut trace = ChainTrace {
        seed,
        retained: 0,
        edges: Vec::with_capacity(keep),
        sigma_sq: Vec::new(),
        v0_sq: Vec::with_capacity(keep),
        gamma: Vec::new(),
        omega_tracked: vec![Vec::with_capacity(keep); tracked.len()],
        omega_trace: Vec::new(),
        edge_sum: DMatrix::zeros(p, p),
        omega_sum: DMatrix::zeros(p, p),
        position_sum: None,
        dist_acceptance: None,
    };
    let mut times = PhaseTimes::default();
    for it in 1..=config.iterations {
        state
            .step(it <= config.burn_in, &mut rng, &mut times)
            .map_err(|e| Error::AtIteration { iteration: it, source: Box::new(e) })?;
        if !config.is_retained(it) {
            continue;
        }
        trace.retained += 1;
        let g = &state.graph;
        trace.edges.push(g.edges.pack());
        trace.v0_sq.push(g.v0_sq);
        for (a, &(j, k)) in tracked.iter().enumerate() {
            trace.omega_tracked[a].push(g.omega[(j, k)]);
        }
        for (j, k) in g.edges.edges() {
            trace.edge_sum[(j, k)] += 1.0;
            trace.edge_sum[(k, j)] += 1.0;
        }
        trace.omega_sum += &g.omega;
        if config.store_omega_trace {
            trace.omega_trace.push((0..p).flat_map(|j| (j..p).map(move |k| (j, k))).map(|(j, k)| g.omega[(j, k)]).collect());
        }
        if let Some(s) = state.sigma_sq() {
            trace.sigma_sq.push(s);
        }
        if let Some(gm) = state.gamma() {
            trace.gamma.push(gm);
        }
        if let EdgePrior::Phylo(lp) = &state.prior {
            match &mut trace.position_sum {
                Some(sum) => *sum += &lp.t,
                None => trace.position_sum = Some(lp.t.clone()),
            }
        }
    }
    if let EdgePrior::Dist { decay, .. } = &state.prior {
        trace.dist_acceptance = Some(decay.accepted as f64 / decay.proposed.max(1) as f64);
    }
    Ok((trace, times))
}

/// Posterior means pooled over all retained draws of all chains.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub labels: Vec<String>,
    pub pi_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    pub retained: usize,
    /// Mean latent positions (`L x p`), phylo variant only. Rotations are not
    /// aligned across draws.
    pub latent_mean: Option<DMatrix<f64>>,
}

impl PosteriorSummary {
    pub fn from_traces(labels: &[String], traces: &[ChainTrace]) -> Result<Self> {
        let p = labels.len();
        let retained: usize = traces.iter().map(|t| t.retained).sum();
        if retained == 0 {
            return Err(Error::invalid("no retained draws"));
        }
        let mut edge_sum = DMatrix::zeros(p, p);
        let mut omega_sum = DMatrix::zeros(p, p);
        let mut pos_sum: Option<DMatrix<f64>> = None;
        for t in traces {
            edge_sum += &t.edge_sum;
            omega_sum += &t.omega_sum;
            if let Some(s) = &t.position_sum {
                pos_sum = Some(match pos_sum {
                    Some(acc) => acc + s,
                    None => s.clone(),
                });
            }
        }
        let r = retained as f64;
        let omega_hat = omega_sum / r;
        Ok(Self {
            labels: labels.to_vec(),
            pi_hat: edge_sum / r,
            omega_hat: (&omega_hat + omega_hat.transpose()) * 0.5,
            retained,
            latent_mean: pos_sum.map(|s| s / r),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaRhat {
    pub row: usize,
    pub col: usize,
    pub rhat: f64,
}

/// Potential scale reduction factors across chains (absent with one chain).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat_sigma_sq: Option<f64>,
    pub rhat_v0_sq: Option<f64>,
    pub rhat_gamma: Option<f64>,
    pub rhat_omega: Vec<OmegaRhat>,
}

impl Diagnostics {
    pub fn from_traces(traces: &[ChainTrace], tracked: &[(usize, usize)]) -> Self {
        if traces.len() < 2 {
            return Self::default();
        }
        let collect = |f: &dyn Fn(&ChainTrace) -> &Vec<f64>| -> Option<f64> {
            let chains: Vec<Vec<f64>> = traces.iter().map(|t| f(t).clone()).collect();
            if chains.iter().any(|c| c.len() < 2) {
                None
            } else {
                Some(stats::rhat(&chains))
            }
        };
        Self {
            rhat_sigma_sq: collect(&|t| &t.sigma_sq),
            rhat_v0_sq: collect(&|t| &t.v0_sq),
            rhat_gamma: collect(&|t| &t.gamma),
            rhat_omega: tracked
                .iter()
                .enumerate()
                .filter_map(|(a, &(row, col))| {
                    collect(&|t| &t.omega_tracked[a]).map(|rhat| OmegaRhat { row, col, rhat })
                })
                .collect(),
        }
    }
}

/// Everything produced by a multi-chain run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SamplerConfig,
    pub summary: PosteriorSummary,
    pub traces: Vec<ChainTrace>,
    pub times: Vec<PhaseTimes>,
    pub diagnostics: Diagnostics,
    pub num_samples: usize,
}

/// Machine-readable record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SamplerConfig,
    pub num_samples: usize,
    pub num_taxa: usize,
    pub chain_seeds: Vec<u64>,
    pub retained_per_chain: Vec<usize>,
    pub retained_total: usize,
    pub diagnostics: Diagnostics,
    pub wall_clock: Vec<PhaseTimes>,
    pub dist_acceptance: Option<Vec<f64>>,
}

impl RunOutput {
    pub fn run_summary(&self) -> RunSummary {
        let acc: Vec<f64> = self.traces.iter().filter_map(|t| t.dist_acceptance).collect();
        RunSummary {
            config: self.config.clone(),
            num_samples: self.num_samples,
            num_taxa: self.summary.labels.len(),
            chain_seeds: self.traces.iter().map(|t| t.seed).collect(),
            retained_per_chain: self.traces.iter().map(|t| t.retained).collect(),
            retained_total: self.summary.retained,
            diagnostics: self.diagnostics.clone(),
            wall_clock: self.times.clone(),
            dist_acceptance: if acc.is_empty() { None } else { Some(acc) },
        }
    }
}

/// Run all chains concurrently and pool them. Results do not depend on how
/// the chains are scheduled.
pub fn run_chains(config: &SamplerConfig, data: &ModelData) -> Result<RunOutput> {
    config.validate()?;
    if config.variant.needs_tree() && !data.has_tree() {
        return Err(Error::invalid(format!("the {} variant needs a tree", config.variant)));
    }
    let seeds = config.chain_seeds();
    let results: Vec<Result<(ChainTrace, PhaseTimes)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &s)| run_chain(config, data, s).map_err(|e| Error::InChain { chain: c, source: Box::new(e) }))
        .collect();
    let mut traces = Vec::with_capacity(seeds.len());
    let mut times = Vec::with_capacity(seeds.len());
    for r in results {
        let (t, tm) = r?;
        traces.push(t);
        times.push(tm);
    }
    let summary = PosteriorSummary::from_traces(data.labels(), &traces)?;
    let diagnostics = Diagnostics::from_traces(&traces, &tracked_pairs(data.num_taxa(), config.seed));
    Ok(RunOutput { config: config.clone(), summary, traces, times, diagnostics, num_samples: data.num_samples() })
}

/// Unpack the retained adjacency draws of a trace.
pub fn unpack_edges(p: usize, trace: &ChainTrace) -> Result<Vec<Adjacency>> {
    trace.edges.iter().map(|b| Adjacency::unpack(p, b)).collect()
}
