//! Synthetic scenarios: random trees, latent positions diffused along them,
//! graphs drawn from the positions, sparse concentration matrices on those
//! graphs, and zero-inflated counts through a Gaussian copula.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{fit_ecdf, CountMatrix, EcdfTransform};
use crate::error::{Error, Result};
use crate::graph::{upper_pairs, Adjacency};
use crate::io::{read_json, read_labelled_matrix, write_json, write_labelled_matrix};
use crate::normal;
use crate::phylo_latent::inclusion_probs;
use crate::tree::{tree_correlation, Node, PhyloTree};

pub const GWISHART_SWEEPS: usize = 200;

/// Random binary ultrametric tree of unit depth with terminals `t1..tp`.
///
/// Split times are `p - 1` sorted uniforms on `(0, 1)`. The root sits at
/// time 0 with a single lineage; each split time divides a uniformly chosen
/// living lineage in two. All lineages end at time 1. Labels are assigned to
/// terminals in random order.
pub fn random_tree<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Result<PhyloTree> {
    if p < 2 {
        return Err(Error::TooFewTerminals(p));
    }
    let mut times: Vec<f64> = (0..p - 1)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        })
        .collect();
    times.sort_by(f64::total_cmp);

    let mut nodes = vec![Node { parent: None, children: vec![], branch_length: 0.0, label: None }];
    let mut height = vec![0.0];
    // node at which each living lineage currently starts
    let mut lineages = vec![0usize];
    for &t in &times {
        let pick = if lineages.len() == 1 { 0 } else { rng.random_range(0..lineages.len()) };
        let parent = lineages[pick];
        let id = nodes.len();
        nodes.push(Node { parent: Some(parent), children: vec![], branch_length: t - height[parent], label: None });
        height.push(t);
        nodes[parent].children.push(id);
        lineages[pick] = id;
        lineages.push(id);
    }
    let mut labels: Vec<usize> = (1..=p).collect();
    labels.shuffle(rng);
    for (slot, &parent) in lineages.iter().enumerate() {
        let id = nodes.len();
        nodes.push(Node {
            parent: Some(parent),
            children: vec![],
            branch_length: 1.0 - height[parent],
            label: Some(format!("t{}", labels[slot])),
        });
        nodes[parent].children.push(id);
    }
    PhyloTree::from_nodes(nodes, 0)
}

/// Terminal labels `t1..tp` in numeric order when the tree uses that scheme,
/// otherwise the tree's own terminal order.
fn canonical_labels(tree: &PhyloTree) -> Vec<String> {
    let mut labels = tree.terminal_labels();
    let key = |s: &String| s.strip_prefix('t').and_then(|r| r.parse::<usize>().ok());
    if labels.iter().all(|l| key(l).is_some()) {
        labels.sort_by_key(|l| key(l).unwrap());
    }
    labels
}

/// `L x p` positions with rows i.i.d. `N_p(0, sigma^2 H)`; columns follow
/// `labels`.
pub fn diffusion_positions<R: Rng + ?Sized>(
    tree: &PhyloTree,
    labels: &[String],
    sigma_sq: f64,
    latent_dim: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(sigma_sq > 0.0) {
        return Err(Error::invalid(format!("sigma^2 must be positive, got {sigma_sq}")));
    }
    let h = tree_correlation(tree)?.reordered(labels)?;
    let p = h.dim();
    let l = h.h.cholesky().ok_or_else(|| Error::not_pd("tree correlation has no Cholesky factor"))?.l();
    let eps = DMatrix::from_fn(p, latent_dim, |_, _| normal::std_normal(rng));
    Ok((l * eps).transpose() * sigma_sq.sqrt())
}

/// Independent `Bernoulli(Phi(t_j . t_k))` edges.
pub fn graph_from_positions<R: Rng + ?Sized>(t: &DMatrix<f64>, rng: &mut R) -> Adjacency {
    let p = t.ncols();
    let pi = inclusion_probs(t);
    let mut e = Adjacency::empty(p);
    for (j, k) in upper_pairs(p) {
        e.set(j, k, rng.random::<f64>() < pi[(j, k)]);
    }
    e
}

/// Draw from the G-Wishart distribution with identity scale on the graph
/// `edges`, with density proportional to
/// `|Omega|^((df - p - 1)/2) exp(-tr(Omega)/2)` over positive definite
/// matrices whose off-diagonal zeros follow the non-edges. On the complete
/// graph this is `Wishart(df, I)`; every diagonal of a graph without edges is
/// `chi^2` with `df - p + 1` degrees of freedom.
///
/// Each of `sweeps` Gibbs sweeps redraws every column: the free
/// off-diagonals (neighbours) from their Gaussian conditional and the Schur
/// complement from its Gamma conditional, so the zero pattern is exact by
/// construction.
pub fn gwishart_sample<R: Rng + ?Sized>(edges: &Adjacency, df: f64, sweeps: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = edges.dim();
    let b = df - p as f64 + 1.0;
    if !(b > 0.0) {
        return Err(Error::invalid(format!("G-Wishart needs df > p - 1 (df = {df}, p = {p})")));
    }
    let mut omega = DMatrix::<f64>::identity(p, p);
    let mut sigma = DMatrix::<f64>::identity(p, p);
    for sweep in 0..sweeps.max(1) {
        for j in 0..p {
            let rest: Vec<usize> = (0..p).filter(|&k| k != j).collect();
            let s22 = sigma[(j, j)];
            let o11_inv = DMatrix::from_fn(p - 1, p - 1, |a, c| {
                let (i, k) = (rest[a], rest[c]);
                sigma[(i, k)] - sigma[(i, j)] * sigma[(k, j)] / s22
            });
            let nbr: Vec<usize> = (0..p - 1).filter(|&a| edges.get(j, rest[a])).collect();
            let mut u = DVector::zeros(p - 1);
            if !nbr.is_empty() {
                let prec = DMatrix::from_fn(nbr.len(), nbr.len(), |a, c| o11_inv[(nbr[a], nbr[c])]);
                let chol = prec.cholesky().ok_or_else(|| Error::not_pd(format!("G-Wishart column {j}")))?;
                let z = DVector::from_fn(nbr.len(), |_, _| normal::std_normal(rng));
                let draw = chol
                    .l()
                    .transpose()
                    .solve_upper_triangular(&z)
                    .ok_or_else(|| Error::not_pd(format!("G-Wishart column {j}")))?;
                for (a, &idx) in nbr.iter().enumerate() {
                    u[idx] = draw[a];
                }
            }
            let v = normal::gamma(b / 2.0, 0.5, rng);
            let w = &o11_inv * &u;
            for (a, &k) in rest.iter().enumerate() {
                omega[(k, j)] = u[a];
                omega[(j, k)] = u[a];
            }
            omega[(j, j)] = v + u.dot(&w);
            for (a, &i) in rest.iter().enumerate() {
                for (c, &k) in rest.iter().enumerate() {
                    sigma[(i, k)] = o11_inv[(a, c)] + w[a] * w[c] / v;
                }
                sigma[(i, j)] = -w[a] / v;
                sigma[(j, i)] = -w[a] / v;
            }
            sigma[(j, j)] = 1.0 / v;
        }
        let chol = omega
            .clone()
            .cholesky()
            .ok_or_else(|| Error::not_pd(format!("G-Wishart draw lost positive definiteness at sweep {sweep}")))?;
        sigma = chol.inverse();
    }
    Ok(omega)
}

/// Marginal distributions used to turn latent scores into counts.
#[derive(Debug, Clone)]
pub enum Marginals {
    /// Generalized inverse of reference ECDFs; `columns[j]` is the reference
    /// column feeding simulated column `j`.
    Reference { ecdf: EcdfTransform, columns: Vec<usize> },
    /// Zero-inflated negative binomial per column.
    ZeroInflatedNb(Vec<Zinb>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zinb {
    pub zero_mass: f64,
    pub size: f64,
    pub mean: f64,
}

impl Zinb {
    pub fn new(zero_mass: f64, size: f64, mean: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&zero_mass) || !(size > 0.0) || !(mean > 0.0) {
            return Err(Error::invalid(format!(
                "zero-inflated NB needs zero mass in [0,1), size > 0, mean > 0 (got {zero_mass}, {size}, {mean})"
            )));
        }
        Ok(Self { zero_mass, size, mean })
    }

    /// Smallest count `c` with `F(c) >= u`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let q = self.size / (self.size + self.mean);
        let mut pmf = q.powf(self.size);
        let mut cdf = self.zero_mass + (1.0 - self.zero_mass) * pmf;
        let mut c = 0.0;
        while cdf < u && c < 1e9 {
            pmf *= (c + self.size) / (c + 1.0) * (1.0 - q);
            c += 1.0;
            let next = cdf + (1.0 - self.zero_mass) * pmf;
            if next == cdf && pmf < 1e-300 {
                break;
            }
            cdf = next;
        }
        c
    }
}

impl Marginals {
    /// Reference marginals with columns assigned uniformly at random.
    pub fn from_reference<R: Rng + ?Sized>(reference: &CountMatrix, p: usize, rng: &mut R) -> Result<Self> {
        let ecdf = fit_ecdf(reference)?;
        if let Some(j) = (0..ecdf.ncols()).find(|&j| ecdf.is_constant(j)) {
            return Err(Error::invalid(format!(
                "reference column `{}` has zero variance",
                reference.col_ids()[j]
            )));
        }
        let columns = (0..p).map(|_| rng.random_range(0..ecdf.ncols())).collect();
        Ok(Marginals::Reference { ecdf, columns })
    }

    fn num_columns(&self) -> usize {
        match self {
            Marginals::Reference { columns, .. } => columns.len(),
            Marginals::ZeroInflatedNb(v) => v.len(),
        }
    }

    fn inverse(&self, j: usize, u: f64) -> f64 {
        match self {
            Marginals::Reference { ecdf, columns } => ecdf.inverse(columns[j], u),
            Marginals::ZeroInflatedNb(v) => v[j].inverse_cdf(u),
        }
    }
}

/// Rows `z_i ~ N_p(0, Omega^-1)` pushed through `x_ij = F_j^-1(Phi(z_ij))`.
pub fn synthetic_counts<R: Rng + ?Sized>(
    omega: &DMatrix<f64>,
    marginals: &Marginals,
    n: usize,
    labels: &[String],
    rng: &mut R,
) -> Result<CountMatrix> {
    let p = omega.nrows();
    if marginals.num_columns() != p || labels.len() != p {
        return Err(Error::invalid("marginals, labels and omega disagree on the number of taxa"));
    }
    let l = omega.clone().cholesky().ok_or_else(|| Error::not_pd("omega"))?.l();
    let lt = l.transpose();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let eps = DVector::from_fn(p, |_, _| normal::std_normal(rng));
        let z = lt.solve_upper_triangular(&eps).ok_or_else(|| Error::not_pd("omega factor"))?;
        for j in 0..p {
            x[(i, j)] = marginals.inverse(j, normal::cdf(z[j]));
        }
    }
    let rows = (1..=n).map(|i| format!("s{i}")).collect();
    CountMatrix::new(x, rows, labels.to_vec())
}

/// How the count marginals of a scenario are produced.
#[derive(Debug, Clone)]
pub enum MarginalSpec {
    Reference(CountMatrix),
    /// Zero mass drawn uniformly from `zero_mass` per column.
    ZeroInflatedNb { zero_mass: (f64, f64), size: f64, mean: f64 },
}

impl Default for MarginalSpec {
    fn default() -> Self {
        MarginalSpec::ZeroInflatedNb { zero_mass: (0.2, 0.7), size: 1.0, mean: 50.0 }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub p: usize,
    pub n: usize,
    pub sigma_sq: f64,
    pub latent_dim: usize,
    /// G-Wishart shape in the `|Omega|^((b-2)/2)` parametrization; the
    /// Wishart degrees of freedom are `b + p - 1`.
    pub gwishart_shape: f64,
    pub gwishart_sweeps: usize,
    pub marginals: MarginalSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            p: 50,
            n: 106,
            sigma_sq: 3.0,
            latent_dim: 2,
            gwishart_shape: 4.0,
            gwishart_sweeps: GWISHART_SWEEPS,
            marginals: MarginalSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub base_seed: u64,
    pub replicate: usize,
    pub seed: u64,
    pub p: usize,
    pub n: usize,
    pub sigma_sq: f64,
    pub latent_dim: usize,
    pub gwishart_shape: f64,
    pub gwishart_df: f64,
    pub gwishart_sweeps: usize,
    pub true_edge_count: usize,
    pub marginals: String,
    /// Reference column feeding each simulated taxon, when reference
    /// marginals are used.
    pub reference_columns: Option<Vec<String>>,
    pub zinb: Option<Vec<Zinb>>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub tree: PhyloTree,
    pub labels: Vec<String>,
    pub positions: DMatrix<f64>,
    pub edges: Adjacency,
    pub omega: DMatrix<f64>,
    pub counts: CountMatrix,
    pub manifest: Manifest,
}

/// Seed of replicate `r` under `base_seed`.
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replicate as u64 + 1);
    rng.random()
}

pub fn simulate_scenario(cfg: &ScenarioConfig, base_seed: u64, replicate: usize) -> Result<Scenario> {
    if cfg.p < 2 {
        return Err(Error::TooFewTerminals(cfg.p));
    }
    if cfg.n < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    if cfg.latent_dim == 0 {
        return Err(Error::invalid("latent dimension must be at least 1"));
    }
    let seed = replicate_seed(base_seed, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = random_tree(cfg.p, &mut rng)?;
    let labels = canonical_labels(&tree);
    let positions = diffusion_positions(&tree, &labels, cfg.sigma_sq, cfg.latent_dim, &mut rng)?;
    let edges = graph_from_positions(&positions, &mut rng);
    let df = cfg.gwishart_shape + cfg.p as f64 - 1.0;
    let omega = gwishart_sample(&edges, df, cfg.gwishart_sweeps, &mut rng)?;
    let (marginals, reference_columns, zinb, desc) = match &cfg.marginals {
        MarginalSpec::Reference(reference) => {
            let m = Marginals::from_reference(reference, cfg.p, &mut rng)?;
            let names = match &m {
                Marginals::Reference { columns, .. } => columns.iter().map(|&c| reference.col_ids()[c].clone()).collect(),
                _ => unreachable!(),
            };
            (m, Some(names), None, "reference".to_string())
        }
        MarginalSpec::ZeroInflatedNb { zero_mass, size, mean } => {
            let (lo, hi) = *zero_mass;
            if !(0.0 <= lo && lo <= hi && hi < 1.0) {
                return Err(Error::invalid(format!("zero-mass range ({lo}, {hi}) must lie in [0, 1)")));
            }
            let params = (0..cfg.p)
                .map(|_| Zinb::new(lo + (hi - lo) * rng.random::<f64>(), *size, *mean))
                .collect::<Result<Vec<_>>>()?;
            (Marginals::ZeroInflatedNb(params.clone()), None, Some(params), "zinb".to_string())
        }
    };
    let counts = synthetic_counts(&omega, &marginals, cfg.n, &labels, &mut rng)?;
    let manifest = Manifest {
        base_seed,
        replicate,
        seed,
        p: cfg.p,
        n: cfg.n,
        sigma_sq: cfg.sigma_sq,
        latent_dim: cfg.latent_dim,
        gwishart_shape: cfg.gwishart_shape,
        gwishart_df: df,
        gwishart_sweeps: cfg.gwishart_sweeps,
        true_edge_count: edges.edge_count(),
        marginals: desc,
        reference_columns,
        zinb,
    };
    Ok(Scenario { tree, labels, positions, edges, omega, counts, manifest })
}

pub const BUNDLE_TREE: &str = "tree.nwk";
pub const BUNDLE_EDGES: &str = "true_edges.csv";
pub const BUNDLE_OMEGA: &str = "omega_true.csv";
pub const BUNDLE_COUNTS: &str = "counts.csv";
pub const BUNDLE_MANIFEST: &str = "manifest.json";

pub fn write_bundle(dir: &Path, s: &Scenario) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tree_path = dir.join(BUNDLE_TREE);
    std::fs::write(&tree_path, format!("{}\n", s.tree.to_newick())).map_err(|e| Error::io(&tree_path, e))?;
    write_edges_matrix(&dir.join(BUNDLE_EDGES), &s.labels, &s.edges)?;
    write_labelled_matrix(&dir.join(BUNDLE_OMEGA), &s.labels, &s.omega)?;
    s.counts.write_csv(&dir.join(BUNDLE_COUNTS))?;
    write_json(&dir.join(BUNDLE_MANIFEST), &s.manifest)
}

pub fn write_edges_matrix(path: &Path, labels: &[String], edges: &Adjacency) -> Result<()> {
    write_labelled_matrix(path, labels, &edges.to_matrix())
}

/// Labelled 0/1 adjacency matrix.
pub fn read_edges_matrix(path: &Path) -> Result<(Vec<String>, Adjacency)> {
    let (labels, m) = read_labelled_matrix(path)?;
    if m.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("{}: adjacency entries must be 0 or 1", path.display())));
    }
    Ok((labels, Adjacency::from_matrix(&m)?))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(BUNDLE_MANIFEST))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use crate::tree::parse_newick;

    #[test]
    fn two_taxon_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let split: Vec<f64> = (0..2000)
            .map(|_| {
                let t = random_tree(2, &mut rng).unwrap();
                let h = tree_correlation(&t).unwrap();
                h.h[(0, 1)]
            })
            .collect();
        assert!(split.iter().all(|&s| s > 0.0 && s < 1.0));
        let ks = stats::ks_statistic(&split, |x| x);
        assert!(ks < 0.04, "{ks}");
    }

    #[test]
    fn fifty_taxon_tree_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tree(50, &mut rng).unwrap();
        assert_eq!(t.num_terminals(), 50);
        assert!(t.is_unit_depth());
        let heights = t.heights();
        let internal: Vec<usize> = (0..t.len()).filter(|&u| !t.nodes()[u].is_terminal() && u != t.root()).collect();
        assert_eq!(internal.len(), 49);
        assert!(internal.iter().all(|&u| heights[u] > 0.0 && heights[u] < 1.0));
        assert!(internal.iter().all(|&u| t.nodes()[u].children.len() == 2));
        let mut labels = t.terminal_labels();
        labels.sort();
        let mut expect: Vec<String> = (1..=50).map(|i| format!("t{i}")).collect();
        expect.sort();
        assert_eq!(labels, expect);
        let again = random_tree(50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(t, again);
        assert!(random_tree(1, &mut rng).is_err());
    }

    #[test]
    fn star_tree_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = parse_newick("(a:1,b:1,c:1);").unwrap();
        let labels = tree.terminal_labels();
        let draws: Vec<DMatrix<f64>> = (0..10_000)
            .map(|_| diffusion_positions(&tree, &labels, 2.0, 1, &mut rng).unwrap())
            .collect();
        for j in 0..3 {
            for k in 0..3 {
                let c = draws.iter().map(|t| t[(0, j)] * t[(0, k)]).sum::<f64>() / draws.len() as f64;
                let expect = if j == k { 2.0 } else { 0.0 };
                assert!((c - expect).abs() < 0.1, "{j}{k} {c}");
            }
        }
        assert!(diffusion_positions(&tree, &labels, 0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn fig2_tree_positions_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tree = parse_newick("(((t1:0.45,t3:0.45):0.35,(t2:0.15,t4:0.15):0.65):0.2);").unwrap();
        let labels: Vec<String> = ["t1", "t2", "t3", "t4"].iter().map(|s| s.to_string()).collect();
        let (a, b): (Vec<f64>, Vec<f64>) = (0..10_000)
            .map(|_| {
                let t = diffusion_positions(&tree, &labels, 1.0, 1, &mut rng).unwrap();
                (t[(0, 1)], t[(0, 3)])
            })
            .unzip();
        let (ma, mb) = (stats::mean(&a), stats::mean(&b));
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let corr = cov / (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() * b.iter().map(|y| (y - mb).powi(2)).sum::<f64>()).sqrt();
        assert!((corr - 0.85).abs() < 0.02, "{corr}");
    }

    #[test]
    fn graph_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = 3.0f64.sqrt();
        let t = DMatrix::from_row_slice(1, 3, &[r, r, -r]);
        let (mut strong, mut anti) = (0usize, 0usize);
        let reps = 10_000;
        for _ in 0..reps {
            let e = graph_from_positions(&t, &mut rng);
            strong += e.get(0, 1) as usize;
            anti += e.get(0, 2) as usize;
        }
        let phi3 = normal::cdf(3.0);
        let se = (phi3 * (1.0 - phi3) / reps as f64).sqrt();
        assert!((strong as f64 / reps as f64 - phi3).abs() < 4.0 * se + 1e-4);
        assert!((anti as f64 / reps as f64 - (1.0 - phi3)).abs() < 4.0 * se + 1e-4);
        let zero = DMatrix::zeros(2, 10);
        let total: usize = (0..400).map(|_| graph_from_positions(&zero, &mut rng).edge_count()).sum();
        assert!((total as f64 / 400.0 - 22.5).abs() < 0.5);
    }

    #[test]
    fn gwishart_patterns() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let empty = gwishart_sample(&Adjacency::empty(4), 4.0 + 3.0, 20, &mut rng).unwrap();
        for (j, k) in upper_pairs(4) {
            assert_eq!(empty[(j, k)], 0.0);
            assert_eq!(empty[(k, j)], 0.0);
        }
        let one = Adjacency::from_edges(2, &[(0, 1)]).unwrap();
        let w = gwishart_sample(&one, 5.0, 20, &mut rng).unwrap();
        assert!(w[(0, 1)] != 0.0);
        let sparse = Adjacency::from_edges(6, &[(0, 1), (1, 2), (3, 5)]).unwrap();
        let w = gwishart_sample(&sparse, 9.0, 50, &mut rng).unwrap();
        for (j, k) in upper_pairs(6) {
            assert_eq!(w[(j, k)] != 0.0, sparse.get(j, k));
        }
        assert!(w.cholesky().is_some());
        assert!(gwishart_sample(&sparse, 5.0, 10, &mut rng).is_err());
    }

    #[test]
    fn gwishart_empty_diagonal_is_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..5000)
            .map(|_| gwishart_sample(&Adjacency::empty(3), 4.0 + 2.0, 1, &mut rng).unwrap()[(1, 1)])
            .collect();
        assert!((stats::mean(&draws) - 4.0).abs() < 0.15);
        assert!((stats::sample_variance(&draws) - 8.0).abs() < 0.8);
    }

    #[test]
    fn reference_generalized_inverse() {
        let reference = CountMatrix::from_values(DMatrix::from_column_slice(3, 2, &[0.0, 0.0, 5.0, 1.0, 2.0, 3.0])).unwrap();
        let m = Marginals::Reference { ecdf: fit_ecdf(&reference).unwrap(), columns: vec![0] };
        assert_eq!(m.inverse(0, 0.3), 0.0);
        assert_eq!(m.inverse(0, 0.5), 0.0);
        assert_eq!(m.inverse(0, 0.51), 5.0);
        assert_eq!(m.inverse(0, 0.75), 5.0);
        assert_eq!(m.inverse(0, 0.99), 5.0);
        let constant = CountMatrix::from_values(DMatrix::from_column_slice(3, 1, &[2.0, 2.0, 2.0])).unwrap();
        assert!(Marginals::from_reference(&constant, 2, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn zinb_inverse() {
        let z = Zinb::new(0.4, 2.0, 10.0).unwrap();
        assert_eq!(z.inverse_cdf(0.3), 0.0);
        // P(X = 0) = 0.4 + 0.6 (1/6)^2
        let f0 = 0.4 + 0.6 / 36.0;
        assert_eq!(z.inverse_cdf(f0), 0.0);
        assert_eq!(z.inverse_cdf(f0 + 1e-9), 1.0);
        assert!(z.inverse_cdf(0.999) > 30.0);
        assert!(Zinb::new(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn independent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let marg = Marginals::ZeroInflatedNb(vec![Zinb::new(0.3, 1.0, 20.0).unwrap(); 2]);
        let labels = vec!["a".to_string(), "b".to_string()];
        let x = synthetic_counts(&DMatrix::identity(2, 2), &marg, 4000, &labels, &mut rng).unwrap();
        let v = x.values();
        let mut concord = 0i64;
        let mut total = 0i64;
        for i in 0..1000 {
            for k in i + 1..1000 {
                let s = (v[(i, 0)] - v[(k, 0)]).signum() * (v[(i, 1)] - v[(k, 1)]).signum();
                concord += s as i64;
                total += 1;
            }
        }
        assert!((concord as f64 / total as f64).abs() < 0.05);
        let zeros = (0..4000).filter(|&i| v[(i, 0)] == 0.0).count() as f64 / 4000.0;
        let expect = 0.3 + 0.7 / 21.0;
        assert!((zeros - expect).abs() < 0.03);
    }

    #[test]
    fn scenario_respects_pattern_and_is_deterministic() {
        let cfg = ScenarioConfig { p: 8, n: 40, gwishart_sweeps: 20, ..Default::default() };
        let a = simulate_scenario(&cfg, 9, 0).unwrap();
        let b = simulate_scenario(&cfg, 9, 0).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.omega, b.omega);
        for (j, k) in upper_pairs(8) {
            assert_eq!(a.omega[(j, k)] != 0.0, a.edges.get(j, k));
        }
        assert_eq!(a.labels, (1..=8).map(|i| format!("t{i}")).collect::<Vec<_>>());
        let c = simulate_scenario(&cfg, 9, 1).unwrap();
        assert_ne!(a.manifest.seed, c.manifest.seed);
    }

    #[test]
    fn bundle_roundtrip() {
        let cfg = ScenarioConfig { p: 5, n: 20, gwishart_sweeps: 10, ..Default::default() };
        let s = simulate_scenario(&cfg, 3, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &s).unwrap();
        let (labels, e) = read_edges_matrix(&dir.path().join(BUNDLE_EDGES)).unwrap();
        assert_eq!(labels, s.labels);
        assert_eq!(e, s.edges);
        assert_eq!(read_manifest(dir.path()).unwrap(), s.manifest);
        let counts = CountMatrix::read_csv(&dir.path().join(BUNDLE_COUNTS)).unwrap();
        assert_eq!(counts, s.counts);
        let tree = crate::tree::read_newick(&dir.path().join(BUNDLE_TREE)).unwrap();
        let h1 = tree_correlation(&tree).unwrap().reordered(&s.labels).unwrap();
        let h2 = tree_correlation(&s.tree).unwrap().reordered(&s.labels).unwrap();
        assert!((h1.h - h2.h).amax() < 1e-12);
    }
}
