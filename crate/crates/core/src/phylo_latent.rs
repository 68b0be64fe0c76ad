//! Latent positions on the tree and the edge inclusion probabilities they
//! induce.
//!
//! Each row `t^l` of the `L x p` position matrix `T` is `N_p(0, sigma^2 H)`
//! where `H` is the tree correlation matrix, and `pi_jk = Phi(t_j . t_k)`.
//! Positions are updated one taxon at a time with the probit augmentation
//! `y_kj ~ N(t_k . t_j, 1)` truncated to the sign given by `e_kj`.
//!
//! The distance baseline replaces the positions by `pi_jk = exp(-gamma d_jk)`
//! with an `Exp(1)` prior on `gamma`; see [`DistDecay`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{upper_pairs, Adjacency};
use crate::normal::{self, TruncatedNormal, Truncation};
use crate::tree::TreeCorrelation;

pub const DEFAULT_LATENT_DIM: usize = 2;
pub const INITIAL_POSITION_SD: f64 = 0.1;

/// Largest double strictly below one.
const PI_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Inverse tree correlation, computed once and shared read-only.
#[derive(Debug, Clone)]
pub struct TreePrecision {
    pub labels: Vec<String>,
    pub precision: DMatrix<f64>,
}

impl TreePrecision {
    pub fn new(h: &TreeCorrelation) -> Result<Self> {
        let chol = h
            .h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::not_pd("tree correlation matrix is singular"))?;
        let inv = chol.inverse();
        Ok(Self { labels: h.labels.clone(), precision: (&inv + inv.transpose()) * 0.5 })
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }
}

/// `N_L(mean, variance * I_L)` conditional prior of one column of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPrior {
    pub mean: DVector<f64>,
    pub variance: f64,
}

impl ConditionalPrior {
    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::identity(self.mean.len(), self.mean.len()) * self.variance
    }
}

#[derive(Debug, Clone)]
pub struct LatentPositions {
    /// `L x p`; column `j` is the position of taxon `j`.
    pub t: DMatrix<f64>,
    pub sigma_sq: f64,
    tree: Arc<TreePrecision>,
}

impl LatentPositions {
    pub fn new(t: DMatrix<f64>, sigma_sq: f64, tree: Arc<TreePrecision>) -> Result<Self> {
        if t.ncols() != tree.dim() {
            return Err(Error::invalid(format!(
                "positions have {} columns but the tree has {} terminals",
                t.ncols(),
                tree.dim()
            )));
        }
        if !(sigma_sq > 0.0) {
            return Err(Error::invalid("sigma^2 must be positive"));
        }
        Ok(Self { t, sigma_sq, tree })
    }

    /// Entries i.i.d. `N(0, 0.01)`, `sigma^2 = 1`.
    pub fn initialize<R: Rng + ?Sized>(latent_dim: usize, tree: Arc<TreePrecision>, rng: &mut R) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        let p = tree.dim();
        let t = DMatrix::from_fn(latent_dim, p, |_, _| INITIAL_POSITION_SD * normal::std_normal(rng));
        Self::new(t, 1.0, tree)
    }

    pub fn latent_dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn num_taxa(&self) -> usize {
        self.t.ncols()
    }

    pub fn tree(&self) -> &TreePrecision {
        &self.tree
    }

    /// Conditional of `t_j` given the other columns under
    /// `vec(T) ~ N(0, sigma^2 H (x) I_L)`. With `P = H^-1` this is
    /// `mean = -sum_k P_jk t_k / P_jj`, `variance = sigma^2 / P_jj`.
    pub fn conditional_prior(&self, j: usize) -> ConditionalPrior {
        let prec = &self.tree.precision;
        let pjj = prec[(j, j)];
        let mut mean = DVector::zeros(self.latent_dim());
        for k in (0..self.num_taxa()).filter(|&k| k != j) {
            mean.axpy(-prec[(j, k)] / pjj, &self.t.column(k), 1.0);
        }
        ConditionalPrior { mean, variance: self.sigma_sq / pjj }
    }

    /// Redraw `t_j` given the adjacency through the probit augmentation.
    pub fn sample_position<R: Rng + ?Sized>(&mut self, j: usize, edges: &Adjacency, rng: &mut R) -> Result<()> {
        let l = self.latent_dim();
        let p = self.num_taxa();
        let prior = self.conditional_prior(j);
        let tj = self.t.column(j).clone_owned();

        // precision = T_-j T_-j^T + I / psi, linear = T_-j y + theta / psi
        let mut precision = DMatrix::identity(l, l) / prior.variance;
        let mut linear = &prior.mean / prior.variance;
        for k in (0..p).filter(|&k| k != j) {
            let tk = self.t.column(k);
            let mean = tk.dot(&tj);
            let truncation = if edges.get(j, k) { Truncation::Above(0.0) } else { Truncation::Below(0.0) };
            let y = TruncatedNormal::new(mean, 1.0, truncation).sample(rng);
            precision.ger(1.0, &tk, &tk, 1.0);
            linear.axpy(y, &tk, 1.0);
        }
        let chol = precision
            .cholesky()
            .ok_or_else(|| Error::not_pd(format!("position update for taxon {j}")))?;
        let center = chol.solve(&linear);
        let z = DVector::from_fn(l, |_, _| normal::std_normal(rng));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::not_pd(format!("position update for taxon {j}")))?;
        self.t.set_column(j, &(center + noise));
        Ok(())
    }

    /// Shape and rate of the inverse-gamma conditional of `sigma^2`.
    pub fn tree_scale_conditional(&self, a_sigma: f64, b_sigma: f64) -> (f64, f64) {
        let shape = (self.num_taxa() * self.latent_dim()) as f64 / 2.0 + a_sigma;
        // tr(T P T^T)
        let quad = (&self.t * &self.tree.precision).component_mul(&self.t).sum();
        (shape, quad / 2.0 + b_sigma)
    }

    pub fn sample_tree_scale<R: Rng + ?Sized>(&mut self, a_sigma: f64, b_sigma: f64, rng: &mut R) {
        let (shape, rate) = self.tree_scale_conditional(a_sigma, b_sigma);
        self.sigma_sq = normal::inverse_gamma(shape, rate, rng);
    }

    pub fn inclusion_probs(&self) -> DMatrix<f64> {
        inclusion_probs(&self.t)
    }
}

/// `pi_jk = Phi(t_j . t_k)`, kept inside `(0, 1)`; zero diagonal.
pub fn inclusion_probs(t: &DMatrix<f64>) -> DMatrix<f64> {
    let p = t.ncols();
    let gram = t.transpose() * t;
    let mut pi = DMatrix::zeros(p, p);
    for (j, k) in upper_pairs(p) {
        let v = normal::cdf(gram[(j, k)]).clamp(f64::MIN_POSITIVE, PI_MAX);
        pi[(j, k)] = v;
        pi[(k, j)] = v;
    }
    pi
}

/// Distance-decay inclusion probabilities `pi_jk = exp(-gamma d_jk)`, kept
/// inside `(0, 1)` wherever `d_jk > 0`.
pub fn decay_probs(d: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let p = d.nrows();
    let mut pi = DMatrix::zeros(p, p);
    for (j, k) in upper_pairs(p) {
        let v = (-gamma * d[(j, k)]).exp().clamp(f64::MIN_POSITIVE, PI_MAX);
        pi[(j, k)] = v;
        pi[(k, j)] = v;
    }
    pi
}

/// Decay rate of the distance baseline with its random-walk Metropolis state.
#[derive(Debug, Clone, PartialEq)]
pub struct DistDecay {
    pub gamma: f64,
    /// Proposal standard deviation on `log gamma`.
    pub step: f64,
    window_accepted: usize,
    window_proposed: usize,
    pub accepted: usize,
    pub proposed: usize,
}

pub const DIST_INITIAL_STEP: f64 = 0.5;
pub const DIST_ADAPT_WINDOW: usize = 50;
pub const DIST_TARGET_ACCEPTANCE: (f64, f64) = (0.30, 0.45);

impl DistDecay {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            gamma,
            step: DIST_INITIAL_STEP,
            window_accepted: 0,
            window_proposed: 0,
            accepted: 0,
            proposed: 0,
        })
    }

    /// One Metropolis-Hastings step. With `adapt` set, the step size is
    /// rescaled after every window of proposals.
    pub fn step<R: Rng + ?Sized>(&mut self, edges: &Adjacency, d: &DMatrix<f64>, adapt: bool, rng: &mut R) -> Result<bool> {
        if !(self.gamma > 0.0) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        check_decay_support(edges, d)?;
        let current = dist_log_target(self.gamma, edges, d);
        let proposal = self.gamma * (self.step * normal::std_normal(rng)).exp();
        let candidate = dist_log_target(proposal, edges, d);
        // log-scale walk: Jacobian gamma'/gamma
        let log_ratio = candidate - current + proposal.ln() - self.gamma.ln();
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        if accept {
            self.gamma = proposal;
        }
        self.proposed += 1;
        self.accepted += accept as usize;
        if adapt {
            self.window_proposed += 1;
            self.window_accepted += accept as usize;
            if self.window_proposed == DIST_ADAPT_WINDOW {
                let rate = self.window_accepted as f64 / DIST_ADAPT_WINDOW as f64;
                if rate < DIST_TARGET_ACCEPTANCE.0 {
                    self.step *= 0.8;
                } else if rate > DIST_TARGET_ACCEPTANCE.1 {
                    self.step *= 1.25;
                }
                self.window_proposed = 0;
                self.window_accepted = 0;
            }
        }
        Ok(accept)
    }
}

/// Decay rate at which the mean inclusion probability over all pairs is 1/2,
/// the distance analogue of starting the latent positions near the origin.
pub fn neutral_decay_rate(d: &DMatrix<f64>) -> f64 {
    let dists: Vec<f64> = upper_pairs(d.nrows()).map(|(j, k)| d[(j, k)]).collect();
    if dists.is_empty() || dists.iter().all(|&x| x <= 0.0) {
        return 1.0;
    }
    let mean_pi = |g: f64| dists.iter().map(|&x| (-g * x).exp()).sum::<f64>() / dists.len() as f64;
    let (mut lo, mut hi) = (1e-8f64, 1e8f64);
    if mean_pi(hi) > 0.5 {
        return 1.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mean_pi(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

fn check_decay_support(edges: &Adjacency, d: &DMatrix<f64>) -> Result<()> {
    for (j, k) in upper_pairs(edges.dim()) {
        if !edges.get(j, k) && d[(j, k)] <= 0.0 {
            return Err(Error::Degenerate(format!(
                "taxa {j} and {k} are at distance zero but not connected; the decay model gives them probability one"
            )));
        }
    }
    Ok(())
}

/// Unnormalized log posterior of `gamma` under an `Exp(1)` prior.
pub fn dist_log_target(gamma: f64, edges: &Adjacency, d: &DMatrix<f64>) -> f64 {
    if !(gamma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = -gamma;
    for (j, k) in upper_pairs(edges.dim()) {
        let x = gamma * d[(j, k)];
        lp += if edges.get(j, k) { -x } else { (-(-x).exp_m1()).ln() };
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree_from(h: DMatrix<f64>) -> Arc<TreePrecision> {
        let labels = (0..h.nrows()).map(|i| format!("t{}", i + 1)).collect();
        Arc::new(TreePrecision::new(&TreeCorrelation { labels, h }).unwrap())
    }

    fn example_h4() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.55, 0.2, 0.2, 0.55, 1.0, 0.2, 0.2, 0.2, 0.2, 1.0, 0.85, 0.2, 0.2, 0.85, 1.0],
        )
    }

    /// Dense conditional of block `j` of a Gaussian vector with covariance
    /// `sigma^2 H (x) I_L`, computed on the full `pL x pL` matrix.
    fn dense_conditional(h: &DMatrix<f64>, sigma_sq: f64, t: &DMatrix<f64>, j: usize) -> (DVector<f64>, DMatrix<f64>) {
        let (l, p) = t.shape();
        let psi = h.kronecker(&DMatrix::identity(l, l)) * sigma_sq;
        let own: Vec<usize> = (j * l..(j + 1) * l).collect();
        let rest: Vec<usize> = (0..p * l).filter(|i| !own.contains(i)).collect();
        let pick = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| psi[(r[a], c[b])]);
        let vec_t = DVector::from_column_slice(t.as_slice());
        let t_rest = DVector::from_iterator(rest.len(), rest.iter().map(|&i| vec_t[i]));
        let s_jr = pick(&own, &rest);
        let s_rr_inv = pick(&rest, &rest).try_inverse().unwrap();
        let mean = &s_jr * &s_rr_inv * t_rest;
        let cov = pick(&own, &own) - &s_jr * s_rr_inv * s_jr.transpose();
        (mean, cov)
    }

    #[test]
    fn identity_tree_prior_is_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lp = LatentPositions::initialize(2, tree_from(DMatrix::identity(3, 3)), &mut rng).unwrap();
        lp.sigma_sq = 1.7;
        let c = lp.conditional_prior(1);
        assert_eq!(c.mean, DVector::zeros(2));
        assert!((c.variance - 1.7).abs() < 1e-12);
    }

    #[test]
    fn two_taxa_conditional() {
        let rho = 0.6;
        let h = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let t = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 1.1, 0.25]);
        let lp = LatentPositions::new(t.clone(), 2.0, tree_from(h)).unwrap();
        let c = lp.conditional_prior(0);
        assert!((&c.mean - t.column(1) * rho).amax() < 1e-12);
        assert!((c.variance - 2.0 * (1.0 - rho * rho)).abs() < 1e-12);
    }

    #[test]
    fn conditional_matches_dense_oracle() {
        let h = example_h4();
        let t = DMatrix::from_row_slice(2, 4, &[0.3, -0.2, 0.9, 0.1, -0.5, 0.7, 0.05, 1.3]);
        let lp = LatentPositions::new(t.clone(), 1.3, tree_from(h.clone())).unwrap();
        for j in 0..4 {
            let c = lp.conditional_prior(j);
            let (mean, cov) = dense_conditional(&h, 1.3, &t, j);
            assert!((&c.mean - mean).amax() < 1e-9);
            assert!((c.covariance() - cov).amax() < 1e-9);
        }
    }

    #[test]
    fn tree_scale_matches_dense_oracle() {
        let h = example_h4();
        let t = DMatrix::from_row_slice(2, 4, &[0.3, -0.2, 0.9, 0.1, -0.5, 0.7, 0.05, 1.3]);
        let lp = LatentPositions::new(t.clone(), 1.0, tree_from(h.clone())).unwrap();
        let (shape, rate) = lp.tree_scale_conditional(0.5, 0.25);
        let dense = h.kronecker(&DMatrix::identity(2, 2)).try_inverse().unwrap();
        let v = DVector::from_column_slice(t.as_slice());
        let quad = (v.transpose() * dense * &v)[(0, 0)];
        assert!((rate - (quad / 2.0 + 0.25)).abs() < 1e-9);
        assert_eq!(shape, 4.5);
    }

    #[test]
    fn tree_scale_simple_cases() {
        let lp = LatentPositions::new(DMatrix::from_element(2, 1, 1.0), 1.0, tree_from(DMatrix::identity(1, 1))).unwrap();
        assert_eq!(lp.tree_scale_conditional(0.1, 0.2), (1.1, 1.2));
        let lp = LatentPositions::new(DMatrix::zeros(2, 4), 1.0, tree_from(example_h4())).unwrap();
        assert_eq!(lp.tree_scale_conditional(0.1, 0.2), (4.1, 0.2));
    }

    #[test]
    fn probit_probabilities() {
        let pi = inclusion_probs(&DMatrix::zeros(2, 3));
        assert!(upper_pairs(3).all(|(j, k)| pi[(j, k)] == 0.5));
        let a = 1.6449f64.sqrt() / 2.0f64.sqrt();
        let pi = inclusion_probs(&DMatrix::from_row_slice(2, 2, &[a, a, a, a]));
        assert!((pi[(0, 1)] - 0.95).abs() < 1e-4);
        let orth = inclusion_probs(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(orth[(0, 1)], 0.5);
        let sat = inclusion_probs(&DMatrix::from_row_slice(1, 2, &[100.0, 100.0]));
        assert!(sat[(0, 1)] < 1.0 && sat[(0, 1)] > 0.0);
        let sat = inclusion_probs(&DMatrix::from_row_slice(1, 2, &[100.0, -100.0]));
        assert!(sat[(0, 1)] > 0.0);
    }

    #[test]
    fn rotation_leaves_probabilities_unchanged() {
        let t = DMatrix::from_row_slice(2, 3, &[0.3, -0.2, 0.9, -0.5, 0.7, 0.05]);
        // exact orthogonal maps: a signed permutation
        let q = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_eq!(inclusion_probs(&t), inclusion_probs(&(&q * &t)));
        let (s, c) = 0.7f64.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!((inclusion_probs(&t) - inclusion_probs(&(r * &t))).amax() < 1e-14);
    }

    #[test]
    fn zero_positions_give_prior_conditional() {
        // with T_-j = 0 the update is a draw from the conditional prior
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = tree_from(example_h4());
        let edges = Adjacency::complete(4);
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            let mut lp = LatentPositions::new(DMatrix::zeros(1, 4), 0.8, tree.clone()).unwrap();
            lp.sample_position(2, &edges, &mut rng).unwrap();
            draws.push(lp.t[(0, 2)]);
        }
        let var = 0.8 / tree.precision[(2, 2)];
        let ks = stats::ks_statistic(&draws, |x| normal::cdf(x / var.sqrt()));
        assert!(ks < 0.015, "{ks}");
    }

    #[test]
    fn probit_augmentation_two_taxa() {
        // e ~ Bern(Phi(t1 t2)) alternated with position updates keeps the prior
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut lp = LatentPositions::new(DMatrix::from_row_slice(1, 2, &[0.5, 0.5]), 1.0, tree_from(DMatrix::identity(2, 2))).unwrap();
        let mut edges = Adjacency::empty(2);
        let (mut e_draws, mut sq, mut prod) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..100_000 {
            let pi = lp.inclusion_probs()[(0, 1)];
            edges.set(0, 1, rng.random::<f64>() < pi);
            lp.sample_position(0, &edges, &mut rng).unwrap();
            lp.sample_position(1, &edges, &mut rng).unwrap();
            e_draws.push(edges.get(0, 1) as u8 as f64);
            sq.push(lp.t[(0, 0)].powi(2));
            prod.push((lp.t[(0, 0)] * lp.t[(0, 1)]).abs());
        }
        // prior: P(e=1) = 1/2, E t^2 = 1, E|t1 t2| = 2/pi
        let checks = [(e_draws, 0.5), (sq, 1.0), (prod, 2.0 / std::f64::consts::PI)];
        for (x, target) in checks {
            let z = (stats::mean(&x) - target) / stats::batch_means_se(&x);
            assert!(z.abs() < 3.0, "z = {z}");
        }
    }

    #[test]
    fn positions_follow_edge_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lp = LatentPositions::initialize(2, tree_from(example_h4()), &mut rng).unwrap();
        let edges = Adjacency::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        for _ in 0..500 {
            for j in 0..4 {
                lp.sample_position(j, &edges, &mut rng).unwrap();
            }
            lp.sample_tree_scale(1.0, 1.0, &mut rng);
        }
        let pi = lp.inclusion_probs();
        assert!(pi[(0, 1)] > 0.5 && pi[(2, 3)] > 0.5);
        assert!(pi[(0, 2)] < 0.5 && pi[(1, 3)] < 0.5);
    }

    #[test]
    fn dist_complete_graph_is_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, 1.0, 0.4, 0.0, 0.8, 1.0, 0.8, 0.0]);
        let edges = Adjacency::complete(3);
        let mut g = DistDecay::new(1.0).unwrap();
        for _ in 0..2000 {
            g.step(&edges, &d, true, &mut rng).unwrap();
        }
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                g.step(&edges, &d, false, &mut rng).unwrap();
                g.gamma
            })
            .collect();
        let target = 1.0 / (1.0 + 2.2);
        let z = (stats::mean(&draws) - target) / stats::batch_means_se(&draws);
        assert!(z.abs() < 3.0, "mean {} z {z}", stats::mean(&draws));
        let rate = g.accepted as f64 / g.proposed as f64;
        assert!(rate > 0.2 && rate < 0.6, "{rate}");
    }

    #[test]
    fn dist_empty_graph_prefers_fast_decay() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let d = DMatrix::from_fn(4, 4, |j, k| if j == k { 0.0 } else { 3.0 });
        let edges = Adjacency::empty(4);
        let mut g = DistDecay::new(1.0).unwrap();
        let draws: Vec<f64> = (0..50_000)
            .map(|i| {
                g.step(&edges, &d, i < 5000, &mut rng).unwrap();
                g.gamma
            })
            .skip(5000)
            .collect();
        assert!(stats::mean(&draws) > 1.2, "{}", stats::mean(&draws));
    }

    #[test]
    fn dist_impossible_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DMatrix::zeros(3, 3);
        let mut edges = Adjacency::complete(3);
        edges.set(0, 2, false);
        let mut g = DistDecay::new(1.0).unwrap();
        assert!(matches!(g.step(&edges, &d, false, &mut rng), Err(Error::Degenerate(_))));
        assert!(DistDecay::new(0.0).is_err());
        assert!(DistDecay::new(-1.0).is_err());
    }

    #[test]
    fn neutral_rate_halves_mean_probability() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, 1.0, 0.4, 0.0, 0.8, 1.0, 0.8, 0.0]);
        let g = neutral_decay_rate(&d);
        let m = ((-g * 0.4).exp() + (-g * 1.0).exp() + (-g * 0.8).exp()) / 3.0;
        assert!((m - 0.5).abs() < 1e-10);
        let uniform = DMatrix::from_fn(4, 4, |j, k| if j == k { 0.0 } else { 2.0 });
        assert!((neutral_decay_rate(&uniform) - 2f64.ln() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn decay_probabilities_bounded() {
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 1e-30, 1e-30, 0.0]);
        let pi = decay_probs(&d, 1.0);
        assert!(pi[(0, 1)] < 1.0);
        let pi = decay_probs(&(d * 1e33), 1.0);
        assert!(pi[(0, 1)] > 0.0);
    }
}
