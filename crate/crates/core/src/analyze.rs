//! Posterior summaries turned into graphs and graph statistics.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{upper_pairs, Adjacency};
use crate::io::{create, fmt_sig};

pub use crate::sampler::PosteriorSummary;

/// Result of the posterior expected FDR search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrCutoff {
    /// Edges with `pi_hat > cutoff` are selected.
    pub cutoff: f64,
    /// Posterior expected FDR of that selection.
    pub fdr: f64,
    pub selected: usize,
    /// False when no cutoff reaches the target and the strictest non-empty
    /// selection is returned instead.
    pub achieved: bool,
}

/// `(cutoff, fdr, selected)` for every candidate cutoff with a non-empty
/// selection, in increasing cutoff order. Candidates are 0 and the distinct
/// values of `pi_hat`.
pub fn fdr_scan(pi_hat: &[f64]) -> Vec<(f64, f64, usize)> {
    let mut desc: Vec<f64> = pi_hat.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    // prefix sums over the descending order: selecting the top m entries
    let mut prefix = Vec::with_capacity(desc.len() + 1);
    prefix.push(0.0);
    for &v in &desc {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut candidates: Vec<f64> = pi_hat.iter().copied().chain(std::iter::once(0.0)).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates
        .into_iter()
        .filter_map(|c| {
            let m = desc.partition_point(|&v| v > c);
            (m > 0).then(|| (c, (m as f64 - prefix[m]) / m as f64, m))
        })
        .collect()
}

/// Smallest cutoff whose posterior expected FDR
/// `sum (1 - pi) 1(pi > c) / sum 1(pi > c)` is at most `alpha`.
pub fn fdr_cutoff(pi_hat: &[f64], alpha: f64) -> Result<FdrCutoff> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if pi_hat.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("inclusion probabilities must lie in [0, 1]"));
    }
    let scan = fdr_scan(pi_hat);
    let Some(&last) = scan.last() else {
        return Err(Error::Degenerate("every cutoff selects an empty graph".into()));
    };
    let mut prev = f64::INFINITY;
    for &(c, fdr, m) in &scan {
        debug_assert!(fdr <= prev + 1e-12, "posterior FDR increased along the scan");
        prev = fdr;
        if fdr <= alpha {
            return Ok(FdrCutoff { cutoff: c, fdr, selected: m, achieved: true });
        }
    }
    Ok(FdrCutoff { cutoff: last.0, fdr: last.1, selected: last.2, achieved: false })
}

/// Selected graph with the cutoff that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedGraph {
    pub edges: Adjacency,
    pub alpha: f64,
    pub cutoff: FdrCutoff,
}

pub fn select_edges(pi_hat: &DMatrix<f64>, alpha: f64) -> Result<SelectedGraph> {
    let p = pi_hat.nrows();
    let values: Vec<f64> = upper_pairs(p).map(|(j, k)| pi_hat[(j, k)]).collect();
    let cutoff = fdr_cutoff(&values, alpha)?;
    let mut edges = Adjacency::empty(p);
    for (j, k) in upper_pairs(p) {
        edges.set(j, k, pi_hat[(j, k)] > cutoff.cutoff);
    }
    Ok(SelectedGraph { edges, alpha, cutoff })
}

/// `rho_jk = -omega_jk / sqrt(omega_jj omega_kk)` with unit diagonal.
pub fn partial_correlations(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = omega.nrows();
    if let Some(j) = (0..p).find(|&j| !(omega[(j, j)] > 0.0)) {
        return Err(Error::invalid(format!("diagonal entry {j} of omega is not positive")));
    }
    let s: Vec<f64> = (0..p).map(|j| omega[(j, j)].sqrt()).collect();
    let mut rho = DMatrix::identity(p, p);
    for (j, k) in upper_pairs(p) {
        let mut r = -0.5 * (omega[(j, k)] + omega[(k, j)]) / (s[j] * s[k]);
        if r.abs() > 1.0 {
            log::warn!("partial correlation {r} for pair ({j}, {k}) clipped to [-1, 1]");
            r = r.clamp(-1.0, 1.0);
        }
        rho[(j, k)] = r;
        rho[(k, j)] = r;
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub mcc: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Confusion counts over the upper triangle. Undefined ratios (a zero
/// denominator) are reported as 0.
pub fn recovery_metrics(estimate: &Adjacency, truth: &Adjacency) -> Result<RecoveryMetrics> {
    if estimate.dim() != truth.dim() {
        return Err(Error::invalid("estimated and true graphs have different sizes"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (j, k) in upper_pairs(truth.dim()) {
        match (estimate.get(j, k), truth.get(j, k)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let f = |x: usize| x as f64;
    let denom = f(tp + fp) * f(tp + fn_) * f(tn + fp) * f(tn + fn_);
    let mcc = if denom == 0.0 {
        log::warn!("MCC denominator is zero; reporting 0");
        0.0
    } else {
        (f(tp) * f(tn) - f(fp) * f(fn_)) / denom.sqrt()
    };
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { f(a) / f(b) };
    Ok(RecoveryMetrics { mcc, tpr: ratio(tp, tp + fn_), fpr: ratio(fp, fp + tn), tp, fp, tn, fn_ })
}

/// `3 x triangles / connected triples`, 0 without connected triples.
pub fn clustering_coefficient(e: &Adjacency) -> f64 {
    let p = e.dim();
    let mut closed = 0usize;
    let mut triples = 0usize;
    for v in 0..p {
        let nb: Vec<usize> = e.neighbors(v).collect();
        let d = nb.len();
        triples += d * d.saturating_sub(1) / 2;
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                closed += e.get(x, y) as usize;
            }
        }
    }
    // each triangle is closed at each of its three vertices
    if triples == 0 {
        0.0
    } else {
        closed as f64 / triples as f64
    }
}

/// Shortest-path edge betweenness (Brandes), each unordered pair of
/// endpoints counted once.
pub fn edge_betweenness(e: &Adjacency) -> DMatrix<f64> {
    let p = e.dim();
    let adj: Vec<Vec<usize>> = (0..p).map(|v| e.neighbors(v).collect()).collect();
    let mut bet = DMatrix::zeros(p, p);
    for s in 0..p {
        let mut stack = Vec::with_capacity(p);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); p];
        let mut sigma = vec![0.0f64; p];
        let mut dist = vec![usize::MAX; p];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; p];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                bet[(v, w)] += c;
                bet[(w, v)] += c;
                delta[v] += c;
            }
        }
    }
    // every source-target pair was visited from both ends
    bet / 2.0
}

/// Connected components labelled by first appearance.
pub fn components(e: &Adjacency) -> Vec<usize> {
    let p = e.dim();
    let mut label = vec![usize::MAX; p];
    let mut next = 0;
    for s in 0..p {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for w in e.neighbors(v) {
                if label[w] == usize::MAX {
                    label[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    label
}

/// Newman-Girvan modularity of `labels` on graph `e`.
pub fn modularity(e: &Adjacency, labels: &[usize]) -> f64 {
    let m = e.edge_count() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = e.dim();
    let deg: Vec<f64> = (0..p).map(|v| e.degree(v) as f64).collect();
    let mut q = 0.0;
    for i in 0..p {
        for j in 0..p {
            if labels[i] == labels[j] {
                let a = if e.get(i, j) { 1.0 } else { 0.0 };
                q += a - deg[i] * deg[j] / (2.0 * m);
            }
        }
    }
    q / (2.0 * m)
}

/// Girvan-Newman divisive clustering. Edges of maximal betweenness are
/// removed (all tied edges at once) until none remain; the partition into
/// connected components with the highest modularity on the original graph
/// is returned. Isolated taxa form their own communities. Labels follow
/// first appearance in node order.
pub fn detect_communities(e: &Adjacency) -> Vec<usize> {
    let mut work = e.clone();
    let mut best = components(&work);
    let mut best_q = modularity(e, &best);
    while work.edge_count() > 0 {
        let bet = edge_betweenness(&work);
        let top = work.edges().iter().map(|&(j, k)| bet[(j, k)]).fold(0.0, f64::max);
        for (j, k) in work.edges() {
            if bet[(j, k)] >= top * (1.0 - 1e-9) {
                work.set(j, k, false);
            }
        }
        let labels = components(&work);
        let q = modularity(e, &labels);
        if q > best_q + 1e-12 {
            best_q = q;
            best = labels;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub taxon_a: String,
    pub taxon_b: String,
    pub pi_hat: f64,
    pub partial_corr: f64,
    pub selected: u8,
}

/// One row per unordered taxon pair.
pub fn edge_rows(labels: &[String], pi_hat: &DMatrix<f64>, partial: &DMatrix<f64>, selected: &Adjacency) -> Vec<EdgeRow> {
    upper_pairs(labels.len())
        .map(|(j, k)| EdgeRow {
            taxon_a: labels[j].clone(),
            taxon_b: labels[k].clone(),
            pi_hat: pi_hat[(j, k)],
            partial_corr: partial[(j, k)],
            selected: selected.get(j, k) as u8,
        })
        .collect()
}

pub fn write_edge_list(path: &Path, rows: &[EdgeRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["taxon_a", "taxon_b", "pi_hat", "partial_corr", "selected"])?;
    for r in rows {
        w.write_record([
            r.taxon_a.as_str(),
            r.taxon_b.as_str(),
            &fmt_sig(r.pi_hat, 12),
            &fmt_sig(r.partial_corr, 12),
            &r.selected.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_edge_list(path: &Path) -> Result<Vec<EdgeRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<EdgeRow>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| r.selected > 1) {
        return Err(Error::invalid(format!("{}: selected must be 0 or 1, got {}", path.display(), bad.selected)));
    }
    Ok(rows)
}

/// Selected graph encoded by an edge list, on the given label order.
pub fn selected_from_rows(labels: &[String], rows: &[EdgeRow]) -> Result<Adjacency> {
    let index = |name: &str| {
        labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::invalid(format!("taxon `{name}` is not among the known labels")))
    };
    let mut e = Adjacency::empty(labels.len());
    for r in rows {
        let (j, k) = (index(&r.taxon_a)?, index(&r.taxon_b)?);
        if r.selected == 1 {
            e.set(j, k, true);
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityRow {
    pub taxon: String,
    pub community_id: usize,
}

pub fn write_communities(path: &Path, labels: &[String], communities: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for (taxon, &community_id) in labels.iter().zip(communities) {
        w.serialize(CommunityRow { taxon: taxon.clone(), community_id })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_communities(path: &Path) -> Result<Vec<CommunityRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// `L x p` matrix with a taxon header row.
pub fn write_positions(path: &Path, labels: &[String], t: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(labels)?;
    for l in 0..t.nrows() {
        w.write_record((0..t.ncols()).map(|j| fmt_sig(t[(l, j)], 12)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_positions(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        for v in rec?.iter() {
            values.push(v.parse::<f64>().map_err(|_| Error::invalid(format!("{}: bad number `{v}`", path.display())))?);
        }
        rows += 1;
    }
    Ok((labels.clone(), DMatrix::from_row_slice(rows, labels.len(), &values)))
}

/// Sample mean and its standard error (sample sd over `sqrt(n)`).
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let mean = crate::stats::mean(x);
    if x.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (crate::stats::sample_variance(x) / x.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fdr_worked_example() {
        let c = fdr_cutoff(&[0.9, 0.8, 0.6], 0.2).unwrap();
        assert_eq!(c.cutoff, 0.6);
        assert!((c.fdr - 0.15).abs() < 1e-15);
        assert_eq!(c.selected, 2);
        assert!(c.achieved);
        let scan = fdr_scan(&[0.9, 0.8, 0.6]);
        assert!((scan[0].1 - 0.7 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fdr_all_certain() {
        let c = fdr_cutoff(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(c.cutoff, 0.0);
        assert_eq!(c.fdr, 0.0);
        assert_eq!(c.selected, 3);
    }

    #[test]
    fn fdr_not_achieved_and_empty() {
        let c = fdr_cutoff(&[0.3, 0.2, 0.0], 0.1).unwrap();
        assert!(!c.achieved);
        assert_eq!(c.cutoff, 0.2);
        assert_eq!(c.selected, 1);
        assert!((c.fdr - 0.7).abs() < 1e-15);
        assert!(matches!(fdr_cutoff(&[0.0, 0.0], 0.1), Err(Error::Degenerate(_))));
        assert!(fdr_cutoff(&[0.5], 1.0).is_err());
    }

    #[test]
    fn partial_correlation_examples() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert!((partial_correlations(&w).unwrap()[(0, 1)] - 0.5).abs() < 1e-15);
        assert!((partial_correlations(&(w * 4.0)).unwrap()[(0, 1)] - 0.5).abs() < 1e-15);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0, 0.5]));
        assert_eq!(partial_correlations(&d).unwrap(), DMatrix::identity(3, 3));
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.1, 1.0]);
        assert!(partial_correlations(&bad).is_err());
    }

    #[test]
    fn mcc_examples() {
        let truth = Adjacency::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let m = recovery_metrics(&truth, &truth).unwrap();
        assert_eq!((m.mcc, m.tpr, m.fpr), (1.0, 1.0, 0.0));
        assert!((recovery_metrics(&truth.complement(), &truth).unwrap().mcc + 1.0).abs() < 1e-15);
        // TP=2, FP=1, FN=1, TN=6 on 5 taxa
        let truth = Adjacency::from_edges(5, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let est = Adjacency::from_edges(5, &[(0, 1), (0, 2), (3, 4)]).unwrap();
        let m = recovery_metrics(&est, &truth).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 6));
        assert!((m.mcc - 11.0 / 21.0).abs() < 1e-15);
        let empty = recovery_metrics(&Adjacency::empty(3), &Adjacency::empty(3)).unwrap();
        assert_eq!(empty.mcc, 0.0);
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(clustering_coefficient(&Adjacency::complete(3)), 1.0);
        assert_eq!(clustering_coefficient(&Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap()), 0.0);
        let cycle = Adjacency::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(clustering_coefficient(&cycle), 0.0);
        assert_eq!(clustering_coefficient(&Adjacency::empty(5)), 0.0);
        let paw = Adjacency::from_edges(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        assert!((clustering_coefficient(&paw) - 3.0 / 5.0).abs() < 1e-15);
    }

    fn two_triangles() -> Adjacency {
        Adjacency::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap()
    }

    #[test]
    fn communities_of_components() {
        assert_eq!(detect_communities(&two_triangles()), vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(detect_communities(&Adjacency::empty(4)), vec![0, 1, 2, 3]);
    }

    #[test]
    fn bridge_is_removed_first() {
        let mut g = two_triangles();
        g.set(2, 3, true);
        let bet = edge_betweenness(&g);
        assert!((bet[(2, 3)] - 9.0).abs() < 1e-12);
        let top = g.edges().iter().map(|&(j, k)| bet[(j, k)]).fold(0.0, f64::max);
        assert_eq!(top, bet[(2, 3)]);
        assert_eq!(detect_communities(&g), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn file_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<String> = ["a", "b,c", "d"].iter().map(|s| s.to_string()).collect();
        let pi = DMatrix::from_row_slice(3, 3, &[0.0, 0.9, 0.1, 0.9, 0.0, 1.0 / 3.0, 0.1, 1.0 / 3.0, 0.0]);
        let rho = DMatrix::from_row_slice(3, 3, &[1.0, -0.25, 0.0, -0.25, 1.0, 0.1, 0.0, 0.1, 1.0]);
        let sel = Adjacency::from_edges(3, &[(0, 1)]).unwrap();
        let rows = edge_rows(&labels, &pi, &rho, &sel);
        let path = dir.path().join("edges.csv");
        write_edge_list(&path, &rows).unwrap();
        let back = read_edge_list(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.taxon_a, b.taxon_a);
            assert!((a.pi_hat - b.pi_hat).abs() < 1e-12);
            assert_eq!(a.selected, b.selected);
        }
        assert_eq!(selected_from_rows(&labels, &back).unwrap(), sel);

        let cpath = dir.path().join("communities.csv");
        write_communities(&cpath, &labels, &[0, 0, 1]).unwrap();
        let c = read_communities(&cpath).unwrap();
        assert_eq!(c[1], CommunityRow { taxon: "b,c".into(), community_id: 0 });

        let ppath = dir.path().join("positions.csv");
        let t = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 2.0, 0.0, 1e-7, 3.0]);
        write_positions(&ppath, &labels, &t).unwrap();
        let (l2, t2) = read_positions(&ppath).unwrap();
        assert_eq!(l2, labels);
        assert!((t - t2).amax() < 1e-15);
    }

    #[test]
    fn aggregate_se() {
        let (m, se) = mean_and_se(&[0.4, 0.6]);
        assert!((m - 0.5).abs() < 1e-15);
        assert!((se - 0.1).abs() < 1e-12);
        assert_eq!(mean_and_se(&[1.0, 1.0, 1.0]), (1.0, 0.0));
    }
}
