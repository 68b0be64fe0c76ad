//! Spike-and-slab prior on the concentration matrix with block Gibbs updates
//! for `Omega`, the adjacency `E` and the spike variance `v0^2`.
//!
//! Off-diagonal `omega_jk` is `N(0, v0^2)` when `e_jk = 0` and `N(0, h v0^2)`
//! when `e_jk = 1`; diagonals are `Exp(lambda / 2)`. The edge prior carries
//! the normalizing constant of the `Omega` prior, so the full conditional of
//! each `e_jk` is a plain Bernoulli.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{upper_pairs, Adjacency};
use crate::normal;

/// Edge full-conditional rule. `DropSlabScale` omits the `1/sqrt(h)` factor of
/// the slab density and exists only to check that sampler self-tests detect a
/// broken update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeRule {
    #[default]
    Exact,
    DropSlabScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub omega: DMatrix<f64>,
    /// Cached `Omega^-1`, kept in step with `omega`.
    sigma: DMatrix<f64>,
    pub edges: Adjacency,
    pub v0_sq: f64,
    pub h: f64,
    pub lambda: f64,
}

/// Gaussian conditional of an off-diagonal column and Gamma conditional of
/// the Schur complement for one column update.
#[derive(Debug, Clone)]
pub struct ColumnConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl GraphState {
    /// `Omega = I`, empty graph.
    pub fn new(p: usize, v0_sq: f64, h: f64, lambda: f64) -> Result<Self> {
        Self::from_parts(DMatrix::identity(p, p), Adjacency::empty(p), v0_sq, h, lambda)
    }

    pub fn from_parts(omega: DMatrix<f64>, edges: Adjacency, v0_sq: f64, h: f64, lambda: f64) -> Result<Self> {
        if !(v0_sq > 0.0) || !(h > 1.0) || !(lambda > 0.0) {
            return Err(Error::invalid(format!(
                "need v0^2 > 0, h > 1, lambda > 0 (got {v0_sq}, {h}, {lambda})"
            )));
        }
        if edges.dim() != omega.nrows() {
            return Err(Error::invalid("adjacency and omega dimensions differ"));
        }
        let sigma = invert_spd(&omega, "omega")?;
        Ok(Self { omega, sigma, edges, v0_sq, h, lambda })
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    fn slab_var(&self, j: usize, k: usize) -> f64 {
        if self.edges.get(j, k) {
            self.h * self.v0_sq
        } else {
            self.v0_sq
        }
    }

    /// Full conditional of column `col` given the rest of `Omega`.
    pub fn column_conditional(&self, scatter: &DMatrix<f64>, n_samples: usize, col: usize) -> Result<ColumnConditional> {
        let p = self.dim();
        let rest: Vec<usize> = (0..p).filter(|&k| k != col).collect();
        let omega11_inv = self.omega11_inverse(col, &rest);
        let s22 = scatter[(col, col)];
        let scale = s22 + self.lambda;
        let mut precision = &omega11_inv * scale;
        for (a, &k) in rest.iter().enumerate() {
            precision[(a, a)] += 1.0 / self.slab_var(col, k);
        }
        let s12 = DVector::from_iterator(rest.len(), rest.iter().map(|&k| scatter[(k, col)]));
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::not_pd(format!("column {col} conditional precision")))?;
        let mean = -chol.solve(&s12);
        Ok(ColumnConditional {
            mean,
            precision,
            gamma_shape: n_samples as f64 / 2.0 + 1.0,
            gamma_rate: scale / 2.0,
        })
    }

    fn omega11_inverse(&self, col: usize, rest: &[usize]) -> DMatrix<f64> {
        let s22 = self.sigma[(col, col)];
        DMatrix::from_fn(rest.len(), rest.len(), |a, b| {
            let (i, k) = (rest[a], rest[b]);
            self.sigma[(i, k)] - self.sigma[(i, col)] * self.sigma[(k, col)] / s22
        })
    }

    /// Redraw column `col` of `Omega` (off-diagonals and diagonal) and update
    /// the cached inverse by a rank-one correction.
    pub fn update_omega_column<R: Rng + ?Sized>(
        &mut self,
        scatter: &DMatrix<f64>,
        n_samples: usize,
        col: usize,
        rng: &mut R,
    ) -> Result<()> {
        let p = self.dim();
        let rest: Vec<usize> = (0..p).filter(|&k| k != col).collect();
        let cond = self.column_conditional(scatter, n_samples, col)?;
        let chol = cond
            .precision
            .cholesky()
            .ok_or_else(|| Error::not_pd(format!("column {col} conditional precision")))?;
        // u = mean + L^-T z where precision = L L^T
        let z = DVector::from_fn(rest.len(), |_, _| normal::std_normal(rng));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::not_pd(format!("column {col} triangular solve")))?;
        let u = cond.mean + noise;
        let v = normal::gamma(cond.gamma_shape, cond.gamma_rate, rng);

        let omega11_inv = self.omega11_inverse(col, &rest);
        let w = &omega11_inv * &u;
        let omega22 = v + u.dot(&w);
        for (a, &k) in rest.iter().enumerate() {
            self.omega[(k, col)] = u[a];
            self.omega[(col, k)] = u[a];
        }
        self.omega[(col, col)] = omega22;

        for (a, &i) in rest.iter().enumerate() {
            for (b, &k) in rest.iter().enumerate() {
                self.sigma[(i, k)] = omega11_inv[(a, b)] + w[a] * w[b] / v;
            }
            self.sigma[(i, col)] = -w[a] / v;
            self.sigma[(col, i)] = -w[a] / v;
        }
        self.sigma[(col, col)] = 1.0 / v;
        Ok(())
    }

    /// Update every column in `order`, then refresh the inverse from scratch.
    /// Fails if `Omega` no longer admits a Cholesky factorization.
    pub fn sweep_omega<R: Rng + ?Sized>(
        &mut self,
        scatter: &DMatrix<f64>,
        n_samples: usize,
        order: &[usize],
        rng: &mut R,
    ) -> Result<()> {
        for &col in order {
            self.update_omega_column(scatter, n_samples, col, rng)?;
        }
        self.refresh_inverse()
    }

    pub fn refresh_inverse(&mut self) -> Result<()> {
        self.sigma = invert_spd(&self.omega, "omega after sweep")?;
        Ok(())
    }

    /// `P(e_jk = 1 | Omega, v0^2)` for one pair.
    pub fn edge_probability(&self, omega_jk: f64, pi: f64, rule: EdgeRule) -> f64 {
        edge_probability(omega_jk, self.v0_sq, self.h, pi, rule)
    }

    pub fn sample_edges<R: Rng + ?Sized>(&mut self, pi: &DMatrix<f64>, rng: &mut R) {
        self.sample_edges_with(pi, EdgeRule::Exact, rng)
    }

    pub fn sample_edges_with<R: Rng + ?Sized>(&mut self, pi: &DMatrix<f64>, rule: EdgeRule, rng: &mut R) {
        for (j, k) in upper_pairs(self.dim()) {
            let prob = self.edge_probability(self.omega[(j, k)], pi[(j, k)], rule);
            let e = rng.random::<f64>() < prob;
            self.edges.set(j, k, e);
        }
    }

    /// Shape and rate of the inverse-gamma full conditional of `v0^2`.
    pub fn spike_variance_conditional(&self, a_v: f64, b_v: f64) -> (f64, f64) {
        let p = self.dim() as f64;
        let shape = p * (p - 1.0) / 4.0 + a_v;
        let rate = upper_pairs(self.dim())
            .map(|(j, k)| {
                let w = self.omega[(j, k)];
                let scale = if self.edges.get(j, k) { self.h } else { 1.0 };
                w * w / (2.0 * scale)
            })
            .sum::<f64>()
            + b_v;
        (shape, rate)
    }

    pub fn sample_spike_variance<R: Rng + ?Sized>(&mut self, a_v: f64, b_v: f64, rng: &mut R) {
        let (shape, rate) = self.spike_variance_conditional(a_v, b_v);
        self.v0_sq = normal::inverse_gamma(shape, rate, rng);
    }
}

pub fn edge_probability(omega_jk: f64, v0_sq: f64, h: f64, pi: f64, rule: EdgeRule) -> f64 {
    if pi <= 0.0 {
        return 0.0;
    }
    if pi >= 1.0 {
        return 1.0;
    }
    let mut slab = normal::ln_pdf(omega_jk, 0.0, h * v0_sq) + pi.ln();
    if rule == EdgeRule::DropSlabScale {
        slab += 0.5 * h.ln();
    }
    let spike = normal::ln_pdf(omega_jk, 0.0, v0_sq) + (-pi).ln_1p();
    1.0 / (1.0 + (spike - slab).exp())
}

pub(crate) fn invert_spd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::not_pd(format!("{what} failed Cholesky factorization")))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn edge_probability_at_zero() {
        let p = edge_probability(0.0, 0.01, 2500.0, 0.5, EdgeRule::Exact);
        assert!((p - 1.0 / 51.0).abs() < 1e-12, "{p}");
        let big = edge_probability(1.0, 1e-4, 2500.0, 0.5, EdgeRule::Exact);
        assert!(big > 1.0 - 1e-12);
        let excluded = edge_probability(0.0, 0.01, 2500.0, 1e-300, EdgeRule::Exact);
        assert!(excluded < 1e-200);
        assert_eq!(edge_probability(5.0, 0.01, 2500.0, 0.0, EdgeRule::Exact), 0.0);
    }

    #[test]
    fn corrupted_rule_differs() {
        let p = edge_probability(0.0, 0.01, 2500.0, 0.5, EdgeRule::DropSlabScale);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edge_frequency_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let omega = DMatrix::from_row_slice(2, 2, &[1.0, 0.03, 0.03, 1.0]);
        let mut g = GraphState::from_parts(omega, Adjacency::empty(2), 0.0004, 50.0, 1.0).unwrap();
        let pi = DMatrix::from_element(2, 2, 0.3);
        let prob = g.edge_probability(0.03, 0.3, EdgeRule::Exact);
        let reps = 100_000;
        let mut hits = 0;
        for _ in 0..reps {
            g.sample_edges(&pi, &mut rng);
            hits += g.edges.get(0, 1) as usize;
        }
        let freq = hits as f64 / reps as f64;
        let se = (prob * (1.0 - prob) / reps as f64).sqrt();
        assert!((freq - prob).abs() < 3.0 * se, "freq {freq} prob {prob}");
    }

    #[test]
    fn spike_variance_rate() {
        let omega = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.2, 0.1, 2.0, 0.3, 0.2, 0.3, 2.0]);
        let edges = Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let g = GraphState::from_parts(omega, edges, 0.01, 2500.0, 1.0).unwrap();
        let (shape, rate) = g.spike_variance_conditional(0.001, 0.001);
        let expect = 0.01 / (2.0 * 2500.0) + 0.04 / 2.0 + 0.09 / (2.0 * 2500.0) + 0.001;
        assert!((shape - (1.5 + 0.001)).abs() < 1e-15);
        assert!((rate - expect).abs() < 1e-15);
    }

    #[test]
    fn spike_variance_empty() {
        let g = GraphState::new(2, 0.01, 2500.0, 1.0).unwrap();
        let (shape, rate) = g.spike_variance_conditional(0.001, 0.001);
        assert!((shape - 0.501).abs() < 1e-15);
        assert_eq!(rate, 0.001);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = g;
        for _ in 0..1000 {
            g.sample_spike_variance(0.001, 0.001, &mut rng);
            assert!(g.v0_sq > 0.0 && g.v0_sq.ln().is_finite());
        }
    }

    #[test]
    fn gamma_moment_single_sample() {
        // one observation: shape 1/2 + 1, rate (s22 + lambda)/2 = 1
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GraphState::new(2, 0.01, 2500.0, 1.0).unwrap();
        let scatter = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let c = g.column_conditional(&scatter, 1, 1).unwrap();
        assert_eq!(c.gamma_shape, 1.5);
        assert_eq!(c.gamma_rate, 1.0);
        let n = 100_000;
        let m = (0..n).map(|_| normal::gamma(c.gamma_shape, c.gamma_rate, &mut rng)).sum::<f64>() / n as f64;
        assert!((m - 1.5).abs() < 0.02);
    }

    #[test]
    fn zero_scatter_centers_at_zero() {
        let g = GraphState::new(3, 0.01, 2500.0, 1.0).unwrap();
        let c = g.column_conditional(&DMatrix::zeros(3, 3), 0, 0).unwrap();
        assert!(c.mean.amax() == 0.0);
        assert_eq!(c.gamma_shape, 1.0);
    }

    #[test]
    fn p2_column_matches_closed_form() {
        // with omega_11 fixed, omega_12 | rest ~ N(-c s12, c), c = 1/((s22+l)/w11 + 1/v12)
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let omega = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.0]);
        let edges = Adjacency::from_edges(2, &[(0, 1)]).unwrap();
        let mut g = GraphState::from_parts(omega, edges, 0.02, 50.0, 1.0).unwrap();
        let scatter = DMatrix::from_row_slice(2, 2, &[4.0, -1.2, -1.2, 3.0]);
        let c = 1.0 / ((3.0 + 1.0) / 1.5 + 1.0 / (50.0 * 0.02));
        let mean = c * 1.2;
        let reps = 10_000;
        let mut draws: Vec<f64> = (0..reps)
            .map(|_| {
                g.update_omega_column(&scatter, 5, 1, &mut rng).unwrap();
                assert_eq!(g.omega[(0, 0)], 1.5);
                g.omega[(0, 1)]
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal::cdf((x - mean) / c.sqrt());
                (f - i as f64 / reps as f64).abs().max(((i + 1) as f64 / reps as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn sweep_keeps_inverse_in_sync() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = GraphState::new(5, 0.01, 50.0, 1.0).unwrap();
        let z = DMatrix::from_fn(30, 5, |_, _| normal::std_normal(&mut rng));
        let s = z.transpose() * &z;
        for _ in 0..20 {
            for col in 0..5 {
                g.update_omega_column(&s, 30, col, &mut rng).unwrap();
                let err = (&g.omega * g.sigma() - DMatrix::identity(5, 5)).amax();
                assert!(err < 1e-8, "{err}");
                assert!(g.omega.clone().cholesky().is_some());
            }
            g.sample_edges(&DMatrix::from_element(5, 5, 0.5), &mut rng);
            g.sample_spike_variance(1.0, 0.01, &mut rng);
        }
    }
}
