//! Joint-distribution self-test of the sampler.
//!
//! Two simulators target the same joint law of parameters and data. The
//! marginal-conditional one draws parameters from the prior directly. The
//! successive-conditional one alternates sampler sweeps (parameters given
//! data) with fresh data given parameters. If every conditional update is
//! correct, both produce the same parameter marginals. Data are taken as
//! fully observed latent scores, so the copula layer is not exercised here.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{upper_pairs, Adjacency};
use crate::graph_prior::{EdgeRule, GraphState};
use crate::normal;
use crate::phylo_latent::{DistDecay, LatentPositions, TreePrecision};
use crate::sampler::{oracle_probability, ChainState, EdgePrior, Hyperparameters, Variant};
use crate::stats;
use crate::tree::{tree_correlation, tree_distance, PhyloTree};

#[derive(Debug, Clone)]
pub struct GewekeConfig {
    pub variant: Variant,
    pub n: usize,
    pub reps: usize,
    /// Sampler sweeps between data refreshes in the successive simulator.
    pub inner_sweeps: usize,
    pub hyper: Hyperparameters,
    pub oracle_edge_count: usize,
    pub edge_rule: EdgeRule,
    pub seed: u64,
}

impl GewekeConfig {
    /// Proper, moderately informative hyperparameters under which every
    /// tracked moment is finite.
    pub fn small(variant: Variant, reps: usize, seed: u64) -> Self {
        Self {
            variant,
            n: 10,
            reps,
            inner_sweeps: 10,
            hyper: Hyperparameters { a_sigma: 4.0, b_sigma: 3.0, a_v: 4.0, b_v: 0.03, h: 50.0, lambda: 1.0, latent_dim: 2 },
            oracle_edge_count: 1,
            edge_rule: EdgeRule::Exact,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GewekeStat {
    pub name: String,
    pub prior_mean: f64,
    pub prior_se: f64,
    pub chain_mean: f64,
    pub chain_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GewekeReport {
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }
}

struct PriorModel {
    variant: Variant,
    hyper: Hyperparameters,
    tree: Arc<TreePrecision>,
    h_chol: DMatrix<f64>,
    distance: Arc<DMatrix<f64>>,
    fixed_pi: f64,
}

impl PriorModel {
    fn new(cfg: &GewekeConfig, tree: &PhyloTree) -> Result<Self> {
        let h = tree_correlation(tree)?;
        let p = h.dim();
        let fixed_pi = match cfg.variant {
            Variant::Oracle => oracle_probability(cfg.oracle_edge_count, p)?,
            _ => 0.5,
        };
        let h_chol = h.h.clone().cholesky().ok_or_else(|| Error::not_pd("tree correlation"))?.l();
        Ok(Self {
            variant: cfg.variant,
            hyper: cfg.hyper,
            tree: Arc::new(TreePrecision::new(&h)?),
            h_chol,
            distance: Arc::new(tree_distance(tree)?.d),
            fixed_pi,
        })
    }

    /// Exact draw from the joint prior by rejection on positive definiteness.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState> {
        let hp = &self.hyper;
        let p = self.tree.dim();
        for _ in 0..100_000 {
            let prior = match self.variant {
                Variant::Phylo => {
                    let sigma_sq = normal::inverse_gamma(hp.a_sigma, hp.b_sigma, rng);
                    let eps = DMatrix::from_fn(p, hp.latent_dim, |_, _| normal::std_normal(rng));
                    let t = (&self.h_chol * eps).transpose() * sigma_sq.sqrt();
                    EdgePrior::Phylo(LatentPositions::new(t, sigma_sq, self.tree.clone())?)
                }
                Variant::Dist => {
                    let gamma: f64 = Exp::new(1.0).unwrap().sample(rng);
                    EdgePrior::Dist { decay: DistDecay::new(gamma)?, distance: self.distance.clone() }
                }
                Variant::Oracle | Variant::Flat => EdgePrior::Fixed(self.fixed_pi),
            };
            let placeholder = GraphState::new(p, 1.0, hp.h, hp.lambda)?;
            let mut state = ChainState::new(placeholder, prior, *hp);
            let mut edges = Adjacency::empty(p);
            for (j, k) in upper_pairs(p) {
                edges.set(j, k, rng.random::<f64>() < state.pi[(j, k)]);
            }
            let v0_sq = normal::inverse_gamma(hp.a_v, hp.b_v, rng);
            let mut omega = DMatrix::zeros(p, p);
            let diag = Exp::new(hp.lambda / 2.0).unwrap();
            for j in 0..p {
                omega[(j, j)] = diag.sample(rng);
            }
            for (j, k) in upper_pairs(p) {
                let var = if edges.get(j, k) { hp.h * v0_sq } else { v0_sq };
                let w = var.sqrt() * normal::std_normal(rng);
                omega[(j, k)] = w;
                omega[(k, j)] = w;
            }
            if omega.clone().cholesky().is_none() {
                continue;
            }
            state.graph = GraphState::from_parts(omega, edges, v0_sq, hp.h, hp.lambda)?;
            return Ok(state);
        }
        Err(Error::Degenerate("prior rejection sampler never produced a positive definite draw".into()))
    }

    fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["omega_01", "omega_02", "omega_12", "omega_00", "omega_11", "omega_01^2", "e_01", "e_02", "e_12", "log_v0_sq"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        match self.variant {
            Variant::Phylo => names.extend(["sigma_sq".to_string(), "pi_01".to_string()]),
            Variant::Dist => names.extend(["gamma".to_string(), "pi_01".to_string()]),
            _ => {}
        }
        names
    }

    fn statistics(&self, s: &ChainState) -> Vec<f64> {
        let w = &s.graph.omega;
        let e = |j, k| s.graph.edges.get(j, k) as u8 as f64;
        let mut out = vec![
            w[(0, 1)],
            w[(0, 2)],
            w[(1, 2)],
            w[(0, 0)],
            w[(1, 1)],
            w[(0, 1)] * w[(0, 1)],
            e(0, 1),
            e(0, 2),
            e(1, 2),
            s.graph.v0_sq.ln(),
        ];
        match self.variant {
            Variant::Phylo => out.extend([s.sigma_sq().unwrap(), s.pi[(0, 1)]]),
            Variant::Dist => out.extend([s.gamma().unwrap(), s.pi[(0, 1)]]),
            _ => {}
        }
        out
    }
}

/// Scatter of `n` rows drawn from `N(0, Omega^-1)`.
fn simulate_scatter<R: Rng + ?Sized>(omega: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = omega.nrows();
    let l = omega.clone().cholesky().ok_or_else(|| Error::not_pd("omega during data refresh"))?.l();
    let eps = DMatrix::from_fn(p, n, |_, _| normal::std_normal(rng));
    // columns of L^-T eps have covariance Omega^-1
    let z = l.transpose().solve_upper_triangular(&eps).ok_or_else(|| Error::not_pd("omega factor"))?;
    Ok(&z * z.transpose())
}

/// Compare both simulators on the three-taxon `tree`.
pub fn geweke_joint_test(cfg: &GewekeConfig, tree: &PhyloTree) -> Result<GewekeReport> {
    if cfg.reps == 0 {
        return Ok(GewekeReport::default());
    }
    let model = PriorModel::new(cfg, tree)?;
    if model.tree.dim() != 3 {
        return Err(Error::invalid("the joint test tracks a three-taxon model"));
    }
    let names = model.names();
    let k = names.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut marginal = vec![Vec::with_capacity(cfg.reps); k];
    for _ in 0..cfg.reps {
        let s = model.draw(&mut rng)?;
        for (col, v) in marginal.iter_mut().zip(model.statistics(&s)) {
            col.push(v);
        }
    }

    let mut successive = vec![Vec::with_capacity(cfg.reps); k];
    let mut state = model.draw(&mut rng)?;
    state.edge_rule = cfg.edge_rule;
    let mut scatter = simulate_scatter(&state.graph.omega, cfg.n, &mut rng)?;
    for _ in 0..cfg.reps {
        for _ in 0..cfg.inner_sweeps.max(1) {
            state.update_graph(&scatter, cfg.n, &mut rng)?;
            state.update_edge_prior(false, &mut rng)?;
        }
        scatter = simulate_scatter(&state.graph.omega, cfg.n, &mut rng)?;
        for (col, v) in successive.iter_mut().zip(model.statistics(&state)) {
            col.push(v);
        }
    }

    let stats = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let (m, c) = (&marginal[i], &successive[i]);
            let prior_mean = stats::mean(m);
            let prior_se = (stats::sample_variance(m) / m.len() as f64).sqrt();
            let chain_mean = stats::mean(c);
            let chain_se = stats::batch_means_se(c);
            let z = (chain_mean - prior_mean) / (prior_se * prior_se + chain_se * chain_se).sqrt();
            GewekeStat { name, prior_mean, prior_se, chain_mean, chain_se, z }
        })
        .collect();
    Ok(GewekeReport { stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_newick;

    #[test]
    fn zero_reps_empty_report() {
        let tree = parse_newick("((t1:0.6,t2:0.6):0.4,t3:1);").unwrap();
        let r = geweke_joint_test(&GewekeConfig::small(Variant::Phylo, 0, 1), &tree).unwrap();
        assert!(r.stats.is_empty());
    }

    #[test]
    fn short_run_reports_all_stats() {
        let tree = parse_newick("((t1:0.6,t2:0.6):0.4,t3:1);").unwrap();
        let r = geweke_joint_test(&GewekeConfig::small(Variant::Dist, 50, 1), &tree).unwrap();
        assert_eq!(r.stats.len(), 12);
        assert!(r.stats.iter().all(|s| s.z.is_finite()));
    }
}
