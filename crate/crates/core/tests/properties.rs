use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phylobcg::analyze::{detect_communities, fdr_scan, partial_correlations, recovery_metrics};
use phylobcg::graph::Adjacency;
use phylobcg::tree::{normalize_to_unit_depth, parse_newick, tree_correlation, tree_distance, Node, PhyloTree};

/// Random rooted tree with `p` terminals, 2 or 3 children per split and
/// positive branch lengths; labels include characters that need quoting.
fn random_tree(p: usize, seed: u64) -> PhyloTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![Node { parent: None, children: vec![], branch_length: 0.0, label: None }];
    let mut leaves = vec![0usize];
    while leaves.len() < p {
        let at = rng.random_range(0..leaves.len());
        let u = leaves.swap_remove(at);
        let k = if leaves.len() + 3 <= p && rng.random::<f64>() < 0.3 { 3 } else { 2 };
        for _ in 0..k {
            let id = nodes.len();
            nodes.push(Node { parent: Some(u), children: vec![], branch_length: rng.random_range(0.01..2.0), label: None });
            nodes[u].children.push(id);
            leaves.push(id);
        }
    }
    for (i, &leaf) in leaves.iter().enumerate() {
        nodes[leaf].label = Some(if i % 3 == 0 { format!("taxon {i}") } else if i % 3 == 1 { format!("t'{i}") } else { format!("t{i}") });
    }
    PhyloTree::from_nodes(nodes, 0).unwrap()
}

fn root_heights(t: &PhyloTree) -> Vec<f64> {
    let nodes = t.nodes();
    (0..nodes.len())
        .map(|mut u| {
            let mut h = 0.0;
            while let Some(p) = nodes[u].parent {
                h += nodes[u].branch_length;
                u = p;
            }
            h
        })
        .collect()
}

fn ancestors(t: &PhyloTree, mut u: usize) -> Vec<usize> {
    let mut out = vec![u];
    while let Some(p) = t.nodes()[u].parent {
        out.push(p);
        u = p;
    }
    out
}

fn brute_force_mrca_height(t: &PhyloTree, heights: &[f64], a: usize, b: usize) -> f64 {
    let up_a = ancestors(t, a);
    let m = ancestors(t, b).into_iter().find(|x| up_a.contains(x)).unwrap();
    heights[m]
}

fn terminal_index(t: &PhyloTree, label: &str) -> usize {
    t.terminals()
        .into_iter()
        .find(|&u| t.nodes()[u].label.as_deref() == Some(label))
        .unwrap()
}

fn spd(p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(p, p) * 0.3
}

fn random_graph(p: usize, density: f64, rng: &mut ChaCha8Rng) -> Adjacency {
    let mut a = Adjacency::empty(p);
    for j in 0..p {
        for k in j + 1..p {
            a.set(j, k, rng.random::<f64>() < density);
        }
    }
    a
}

fn shuffled(p: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

/// Canonical form of a partition: for each node, the smallest member of its block.
fn partition_key(labels: &[usize]) -> Vec<usize> {
    (0..labels.len())
        .map(|j| (0..labels.len()).find(|&k| labels[k] == labels[j]).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn newick_roundtrip(p in 2usize..25, seed in any::<u64>()) {
        let t = random_tree(p, seed);
        let back = parse_newick(&t.to_newick()).unwrap();
        prop_assert_eq!(back.terminal_labels(), t.terminal_labels());
        prop_assert_eq!(back.len(), t.len());
        let (h0, h1) = (root_heights(&t), root_heights(&back));
        for label in t.terminal_labels() {
            let (a, b) = (terminal_index(&t, &label), terminal_index(&back, &label));
            prop_assert!((h0[a] - h1[b]).abs() <= 1e-12);
            prop_assert_eq!(ancestors(&t, a).len(), ancestors(&back, b).len());
        }
    }

    #[test]
    fn correlation_matches_brute_force_and_is_psd(p in 2usize..20, seed in any::<u64>()) {
        let t = normalize_to_unit_depth(&random_tree(p, seed)).unwrap();
        let c = tree_correlation(&t).unwrap();
        let heights = root_heights(&t);
        for (i, a) in c.labels.iter().enumerate() {
            for (j, b) in c.labels.iter().enumerate() {
                let want = if i == j { 1.0 } else {
                    brute_force_mrca_height(&t, &heights, terminal_index(&t, a), terminal_index(&t, b))
                };
                prop_assert!((c.h[(i, j)] - want).abs() <= 1e-9, "H[{i},{j}] = {} vs {want}", c.h[(i, j)]);
            }
        }
        let min_eig = c.h.clone().symmetric_eigenvalues().min();
        prop_assert!(min_eig >= -1e-10);
    }

    #[test]
    fn distance_is_twice_one_minus_correlation(p in 2usize..20, seed in any::<u64>()) {
        let t = normalize_to_unit_depth(&random_tree(p, seed)).unwrap();
        let c = tree_correlation(&t).unwrap();
        let d = tree_distance(&t).unwrap();
        prop_assert_eq!(&c.labels, &d.labels);
        for i in 0..p {
            for j in 0..p {
                prop_assert!((d.d[(i, j)] - 2.0 * (1.0 - c.h[(i, j)])).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn posterior_fdr_nonincreasing_in_cutoff(pi in prop::collection::vec(0.0f64..=1.0, 1..80)) {
        let scan = fdr_scan(&pi);
        for w in scan.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            prop_assert!(w[1].1 <= w[0].1 + 1e-12);
            prop_assert!(w[1].2 < w[0].2);
        }
    }

    #[test]
    fn partial_correlations_ignore_scaling(p in 2usize..8, seed in any::<u64>(), scales in prop::collection::vec(0.1f64..10.0, 8)) {
        let omega = spd(p, seed);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(p, scales.iter().take(p).copied()));
        let a = partial_correlations(&omega).unwrap();
        let b = partial_correlations(&(&d * &omega * &d)).unwrap();
        prop_assert!((a - b).abs().max() <= 1e-10);
    }

    #[test]
    fn metrics_invariant_to_relabelling(p in 2usize..15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = random_graph(p, 0.3, &mut rng);
        let truth = random_graph(p, 0.3, &mut rng);
        let perm = shuffled(p, &mut rng);
        let m0 = recovery_metrics(&est, &truth).unwrap();
        let m1 = recovery_metrics(&est.permuted(&perm), &truth.permuted(&perm)).unwrap();
        prop_assert_eq!((m0.tp, m0.fp, m0.tn, m0.fn_), (m1.tp, m1.fp, m1.tn, m1.fn_));
        prop_assert!((m0.mcc - m1.mcc).abs() <= 1e-12);
    }

    #[test]
    fn communities_invariant_to_permutation(p in 2usize..14, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(p, 0.25, &mut rng);
        let perm = shuffled(p, &mut rng);
        let base = detect_communities(&g);
        let moved = detect_communities(&g.permuted(&perm));
        let pulled: Vec<usize> = (0..p).map(|j| moved[perm[j]]).collect();
        prop_assert_eq!(partition_key(&base), partition_key(&pulled));
    }
}
