//! Rooted phylogenetic trees: Newick ingestion, unit-depth normalization and
//! the diffusion-process correlation and distance matrices between terminals.
//!
//! A Brownian motion started at the root and run until time 1 along every
//! lineage gives terminal covariances equal to the height of the most recent
//! common ancestor. [`tree_correlation`] returns that matrix `H`;
//! [`tree_distance`] returns the patristic distance `D`, and on a unit-depth
//! ultrametric tree `D = 2(1 - H)`.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;

/// Branch length assumed when the Newick text omits one.
pub const DEFAULT_BRANCH_LENGTH: f64 = 1.0;

/// Tolerance used when checking that terminals sit at depth 1.
pub const UNIT_DEPTH_TOL: f64 = 1e-9;

const PSD_GUARD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Length of the branch leading into this node (ignored for the root).
    pub branch_length: f64,
    pub label: Option<String>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// Arena-backed rooted tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloTree {
    nodes: Vec<Node>,
    root: usize,
}

impl PhyloTree {
    /// Build from an arena, checking the structural invariants.
    pub fn from_nodes(nodes: Vec<Node>, root: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyTree);
        }
        if root >= nodes.len() || nodes[root].parent.is_some() {
            return Err(Error::invalid("root index is not a parentless node"));
        }
        let mut seen_parentless = 0;
        for (i, n) in nodes.iter().enumerate() {
            match n.parent {
                None => seen_parentless += 1,
                Some(p) => {
                    if p >= nodes.len() || !nodes[p].children.contains(&i) {
                        return Err(Error::invalid(format!("node {i} has an inconsistent parent link")));
                    }
                }
            }
            if !(n.branch_length >= 0.0) || !n.branch_length.is_finite() {
                return Err(Error::invalid(format!(
                    "node {i} has invalid branch length {}",
                    n.branch_length
                )));
            }
            for &c in &n.children {
                if c >= nodes.len() || nodes[c].parent != Some(i) {
                    return Err(Error::invalid(format!("node {i} has an inconsistent child link")));
                }
            }
        }
        if seen_parentless != 1 {
            return Err(Error::invalid("tree must have exactly one root"));
        }
        let tree = Self { nodes, root };
        let mut labels = HashSet::new();
        for t in tree.terminals() {
            let label = tree.nodes[t].label.as_deref().unwrap_or("");
            if label.is_empty() {
                return Err(Error::invalid("terminal with empty label"));
            }
            if !labels.insert(label.to_string()) {
                return Err(Error::DuplicateLabel(label.to_string()));
            }
        }
        // every node reachable from the root exactly once
        if tree.preorder().len() != tree.nodes.len() {
            return Err(Error::invalid("tree contains nodes unreachable from the root"));
        }
        Ok(tree)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node indices in depth-first preorder from the root.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            order.push(u);
            for &c in self.nodes[u].children.iter().rev() {
                stack.push(c);
            }
        }
        order
    }

    /// Terminal node indices in preorder (the canonical terminal ordering).
    pub fn terminals(&self) -> Vec<usize> {
        self.preorder()
            .into_iter()
            .filter(|&u| self.nodes[u].is_terminal())
            .collect()
    }

    pub fn terminal_labels(&self) -> Vec<String> {
        self.terminals()
            .into_iter()
            .map(|t| self.nodes[t].label.clone().unwrap_or_default())
            .collect()
    }

    pub fn num_terminals(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_terminal()).count()
    }

    /// Distance from the root for every node, indexed like `nodes()`.
    pub fn heights(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.nodes.len()];
        for u in self.preorder() {
            if let Some(p) = self.nodes[u].parent {
                h[u] = h[p] + self.nodes[u].branch_length;
            }
        }
        h
    }

    /// Number of edges from the root for every node.
    pub fn levels(&self) -> Vec<usize> {
        let mut lv = vec![0; self.nodes.len()];
        for u in self.preorder() {
            if let Some(p) = self.nodes[u].parent {
                lv[u] = lv[p] + 1;
            }
        }
        lv
    }

    pub fn is_unit_depth(&self) -> bool {
        let h = self.heights();
        self.terminals()
            .iter()
            .all(|&t| (h[t] - 1.0).abs() <= UNIT_DEPTH_TOL)
    }

    /// Serialize to a single Newick statement. Branch lengths are written with
    /// shortest round-trip precision.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_node(self.root, &mut out);
        out.push(';');
        out
    }

    fn write_node(&self, u: usize, out: &mut String) {
        let node = &self.nodes[u];
        if !node.children.is_empty() {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_node(c, out);
            }
            out.push(')');
        }
        if let Some(label) = &node.label {
            out.push_str(&quote_label(label));
        }
        if u != self.root || node.branch_length != 0.0 {
            out.push(':');
            out.push_str(&format!("{:?}", node.branch_length));
        }
    }

    /// Most recent common ancestor of two nodes.
    pub fn mrca(&self, a: usize, b: usize) -> usize {
        let mut ancestors = HashSet::new();
        let mut u = Some(a);
        while let Some(x) = u {
            ancestors.insert(x);
            u = self.nodes[x].parent;
        }
        let mut v = b;
        loop {
            if ancestors.contains(&v) {
                return v;
            }
            v = self.nodes[v]
                .parent
                .expect("nodes of one tree share the root");
        }
    }
}

fn quote_label(label: &str) -> String {
    let needs_quote = label
        .chars()
        .any(|c| c.is_whitespace() || "()[]':;,".contains(c));
    if needs_quote {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

struct NewickParser<'a> {
    text: &'a [u8],
    src: &'a str,
    pos: usize,
    nodes: Vec<Node>,
    root_length_given: bool,
}

impl<'a> NewickParser<'a> {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::NewickSyntax {
            offset,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn skip_ws(&mut self) -> Result<()> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c != b']') {
                        self.pos += 1;
                    }
                    if self.peek().is_none() {
                        return Err(self.err(start, "unterminated comment"));
                    }
                    self.pos += 1;
                }
                _ => return Ok(()),
            }
        }
    }

    fn subtree(&mut self, parent: Option<usize>) -> Result<usize> {
        self.skip_ws()?;
        let id = self.nodes.len();
        self.nodes.push(Node {
            parent,
            children: Vec::new(),
            branch_length: DEFAULT_BRANCH_LENGTH,
            label: None,
        });
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                let child = self.subtree(Some(id))?;
                self.nodes[id].children.push(child);
                self.skip_ws()?;
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => {
                        return Err(self.err(
                            self.pos,
                            format!("unexpected `{}`, expected ',' or ')'", c as char),
                        ))
                    }
                    None => return Err(self.err(self.pos, "unexpected end of input, expected ',' or ')'")),
                }
            }
        }
        self.skip_ws()?;
        let label_start = self.pos;
        let label = self.label()?;
        if self.nodes[id].children.is_empty() && label.as_deref().unwrap_or("").is_empty() {
            return Err(self.err(label_start, "terminal node without a label"));
        }
        self.nodes[id].label = label;
        self.skip_ws()?;
        if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_ws()?;
            let start = self.pos;
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_digit() || b"+-.eE".contains(&c))
            {
                self.pos += 1;
            }
            let raw = &self.src[start..self.pos];
            let len: f64 = raw
                .parse()
                .map_err(|_| self.err(start, format!("invalid branch length `{raw}`")))?;
            if !(len >= 0.0) || !len.is_finite() {
                return Err(self.err(start, format!("negative or non-finite branch length `{raw}`")));
            }
            self.nodes[id].branch_length = len;
            if parent.is_none() {
                self.root_length_given = true;
            }
        }
        Ok(id)
    }

    fn label(&mut self) -> Result<Option<String>> {
        if self.peek() == Some(b'\'') {
            let start = self.pos;
            self.pos += 1;
            let mut s = String::new();
            loop {
                match self.peek() {
                    None => return Err(self.err(start, "unterminated quoted label")),
                    Some(b'\'') => {
                        if self.text.get(self.pos + 1) == Some(&b'\'') {
                            s.push('\'');
                            self.pos += 2;
                        } else {
                            self.pos += 1;
                            break;
                        }
                    }
                    Some(_) => {
                        let ch = self.src[self.pos..].chars().next().unwrap();
                        s.push(ch);
                        self.pos += ch.len_utf8();
                    }
                }
            }
            return Ok(Some(s));
        }
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || b"()[]':;,".contains(&c) {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            Ok(None)
        } else {
            Ok(Some(self.src[start..self.pos].to_string()))
        }
    }
}

/// Parse a single Newick statement terminated by `;`.
pub fn parse_newick(text: &str) -> Result<PhyloTree> {
    let mut p = NewickParser {
        text: text.as_bytes(),
        src: text,
        pos: 0,
        nodes: Vec::new(),
        root_length_given: false,
    };
    p.skip_ws()?;
    match p.peek() {
        None | Some(b';') => return Err(Error::EmptyTree),
        _ => {}
    }
    let root = p.subtree(None)?;
    p.skip_ws()?;
    match p.peek() {
        Some(b';') => p.pos += 1,
        Some(b')') => return Err(p.err(p.pos, "unbalanced ')'")),
        Some(c) => return Err(p.err(p.pos, format!("unexpected `{}`, expected ';'", c as char))),
        None => return Err(p.err(p.pos, "missing terminating ';'")),
    }
    p.skip_ws()?;
    if p.pos != text.len() {
        return Err(p.err(p.pos, "trailing characters after ';'"));
    }
    // The root's own branch length carries no information about terminals.
    if !p.root_length_given {
        p.nodes[root].branch_length = 0.0;
    }
    PhyloTree::from_nodes(p.nodes, root)
}

pub fn read_newick(path: &Path) -> Result<PhyloTree> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_newick(&text)
}

/// Rescale so that every root-to-terminal path has length 1.
///
/// Ultrametric trees are scaled uniformly. For non-ultrametric trees each
/// node's height is divided by the depth of its deepest descendant terminal,
/// which rescales every lineage to end at 1 while keeping heights monotone
/// along paths.
pub fn normalize_to_unit_depth(tree: &PhyloTree) -> Result<PhyloTree> {
    let h = tree.heights();
    let n = tree.len();
    let mut deepest = vec![f64::NEG_INFINITY; n];
    let order = tree.preorder();
    for &u in order.iter().rev() {
        let node = &tree.nodes[u];
        if node.is_terminal() {
            if h[u] <= 0.0 {
                return Err(Error::ZeroDepth(node.label.clone().unwrap_or_default()));
            }
            deepest[u] = h[u];
        }
        if let Some(p) = node.parent {
            deepest[p] = deepest[p].max(deepest[u]);
        }
    }
    let scaled: Vec<f64> = (0..n)
        .map(|u| {
            if tree.nodes[u].is_terminal() {
                1.0
            } else {
                (h[u] / deepest[u]).clamp(0.0, 1.0)
            }
        })
        .collect();
    let mut nodes = tree.nodes.clone();
    for u in 0..n {
        nodes[u].branch_length = match nodes[u].parent {
            None => 0.0,
            Some(p) => (scaled[u] - scaled[p]).max(0.0),
        };
    }
    Ok(PhyloTree { nodes, root: tree.root })
}

/// Assign branch lengths from taxonomic rank levels.
///
/// `rank_lengths[d]` is the length of every branch from level `d` to level
/// `d + 1` (the root is level 0). Terminal branches are stretched so that all
/// terminals sit at the full depth, which keeps the tree ultrametric. Missing
/// trailing entries default to 1.
pub fn with_rank_lengths(tree: &PhyloTree, rank_lengths: &[f64]) -> Result<PhyloTree> {
    if rank_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("rank lengths must be positive and finite"));
    }
    let levels = tree.levels();
    let max_level = tree
        .terminals()
        .iter()
        .map(|&t| levels[t])
        .max()
        .unwrap_or(0);
    let seg = |d: usize| rank_lengths.get(d).copied().unwrap_or(1.0);
    let mut cum = vec![0.0; max_level + 1];
    for d in 1..=max_level {
        cum[d] = cum[d - 1] + seg(d - 1);
    }
    let total = cum[max_level];
    let mut nodes = tree.nodes.clone();
    for u in 0..nodes.len() {
        let Some(p) = nodes[u].parent else {
            nodes[u].branch_length = 0.0;
            continue;
        };
        let child_h = if nodes[u].is_terminal() { total } else { cum[levels[u]] };
        nodes[u].branch_length = child_h - cum[levels[p]];
    }
    Ok(PhyloTree { nodes, root: tree.root })
}

/// Diffusion-process correlation matrix over terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCorrelation {
    pub labels: Vec<String>,
    pub h: DMatrix<f64>,
}

/// Patristic distance matrix over terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDistance {
    pub labels: Vec<String>,
    pub d: DMatrix<f64>,
}

impl TreeCorrelation {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_labelled_matrix(path, &self.labels, &self.h)
    }
}

impl TreeDistance {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        io::write_labelled_matrix(path, &self.labels, &self.d)
    }

    /// Restrict/reorder to the given labels.
    pub fn reordered(&self, labels: &[String]) -> Result<TreeDistance> {
        let idx = reorder_index(&self.labels, labels)?;
        let d = DMatrix::from_fn(labels.len(), labels.len(), |i, j| self.d[(idx[i], idx[j])]);
        Ok(TreeDistance { labels: labels.to_vec(), d })
    }
}

impl TreeCorrelation {
    /// Restrict/reorder to the given labels. The result is a principal
    /// submatrix, so it stays PSD.
    pub fn reordered(&self, labels: &[String]) -> Result<TreeCorrelation> {
        let idx = reorder_index(&self.labels, labels)?;
        let h = DMatrix::from_fn(labels.len(), labels.len(), |i, j| self.h[(idx[i], idx[j])]);
        Ok(TreeCorrelation { labels: labels.to_vec(), h })
    }
}

fn reorder_index(have: &[String], want: &[String]) -> Result<Vec<usize>> {
    want.iter()
        .map(|w| {
            have.iter()
                .position(|h| h == w)
                .ok_or_else(|| Error::invalid(format!("taxon `{w}` not found among tree terminals")))
        })
        .collect()
}

/// Pairwise MRCA heights, computed in one pass over internal nodes.
fn mrca_heights(tree: &PhyloTree) -> (Vec<String>, Vec<f64>, DMatrix<f64>) {
    let terminals = tree.terminals();
    let p = terminals.len();
    let mut pos = vec![usize::MAX; tree.len()];
    for (i, &t) in terminals.iter().enumerate() {
        pos[t] = i;
    }
    let h = tree.heights();
    let mut m = DMatrix::zeros(p, p);
    // leaf sets below each node, built bottom-up
    let mut below: Vec<Vec<usize>> = vec![Vec::new(); tree.len()];
    for &u in tree.preorder().iter().rev() {
        let node = &tree.nodes[u];
        if node.is_terminal() {
            below[u].push(pos[u]);
            m[(pos[u], pos[u])] = h[u];
            continue;
        }
        let mut acc: Vec<usize> = Vec::new();
        for &c in &node.children {
            let part = std::mem::take(&mut below[c]);
            for &a in &acc {
                for &b in &part {
                    m[(a, b)] = h[u];
                    m[(b, a)] = h[u];
                }
            }
            acc.extend(part);
        }
        below[u] = acc;
    }
    let depths = terminals.iter().map(|&t| h[t]).collect();
    (tree.terminal_labels(), depths, m)
}

/// `H[j,k]` = height of the MRCA of terminals `j` and `k` on a unit-depth tree.
pub fn tree_correlation(tree: &PhyloTree) -> Result<TreeCorrelation> {
    let p = tree.num_terminals();
    if p < 2 {
        return Err(Error::TooFewTerminals(p));
    }
    if !tree.is_unit_depth() {
        return Err(Error::invalid(
            "tree must be normalized to unit depth before computing correlations",
        ));
    }
    let (labels, _, mut h) = mrca_heights(tree);
    for i in 0..p {
        h[(i, i)] = 1.0;
    }
    psd_guard(&mut h)?;
    Ok(TreeCorrelation { labels, h })
}

/// Rounding can push the smallest eigenvalue slightly below zero; nudge the
/// diagonal and restore the unit diagonal in that case.
fn psd_guard(h: &mut DMatrix<f64>) -> Result<()> {
    let min_eig = h
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_GUARD {
        return Err(Error::not_pd(format!(
            "tree correlation has eigenvalue {min_eig:e}"
        )));
    }
    if min_eig < 0.0 {
        let p = h.nrows();
        for i in 0..p {
            h[(i, i)] += PSD_GUARD;
        }
        let d: Vec<f64> = (0..p).map(|i| h[(i, i)].sqrt()).collect();
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] /= d[i] * d[j];
            }
        }
    }
    Ok(())
}

/// `D[j,k]` = branch-length sum from `j` and `k` to their MRCA.
pub fn tree_distance(tree: &PhyloTree) -> Result<TreeDistance> {
    let p = tree.num_terminals();
    if p < 2 {
        return Err(Error::TooFewTerminals(p));
    }
    let (labels, depth, m) = mrca_heights(tree);
    let d = DMatrix::from_fn(p, p, |j, k| {
        if j == k {
            0.0
        } else {
            (depth[j] - m[(j, k)]) + (depth[k] - m[(j, k)])
        }
    });
    Ok(TreeDistance { labels, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "((t1:0.45,t3:0.45):0.55,(t2:0.15,t4:0.15):0.85);";

    /// The four-taxon example: t2 splits from t1 at 0.2, then t3 from t1 at
    /// 0.55 and t4 from t2 at 0.85.
    fn fig2() -> PhyloTree {
        parse_newick("(((t1:0.45,t3:0.45):0.35,(t2:0.15,t4:0.15):0.65):0.2);").unwrap()
    }

    fn by_label(c: &TreeCorrelation, a: &str, b: &str) -> f64 {
        let i = c.labels.iter().position(|l| l == a).unwrap();
        let j = c.labels.iter().position(|l| l == b).unwrap();
        c.h[(i, j)]
    }

    #[test]
    fn parse_minimal() {
        let t = parse_newick("(A:1,B:1);").unwrap();
        assert_eq!(t.terminal_labels(), vec!["A", "B"]);
        assert_eq!(t.nodes()[t.root()].children.len(), 2);
        let h = t.heights();
        for term in t.terminals() {
            assert_eq!(h[term], 1.0);
        }
    }

    #[test]
    fn parse_nested_depths() {
        let t = parse_newick("((A:0.8,B:0.8):0.2,C:1.0);").unwrap();
        let h = t.heights();
        for term in t.terminals() {
            assert!((h[term] - 1.0).abs() < 1e-12);
        }
        let ts = t.terminals();
        assert!((h[t.mrca(ts[0], ts[1])] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn parse_errors() {
        match parse_newick("(A:1,B:1") {
            Err(Error::NewickSyntax { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_newick(""), Err(Error::EmptyTree)));
        assert!(matches!(parse_newick("  ;"), Err(Error::EmptyTree)));
        assert!(matches!(parse_newick("(A,A);"), Err(Error::DuplicateLabel(l)) if l == "A"));
        assert!(matches!(parse_newick("(A:1,B:1));"), Err(Error::NewickSyntax { offset: 9, .. })));
        assert!(matches!(parse_newick("(A:x,B);"), Err(Error::NewickSyntax { offset: 3, .. })));
        assert!(matches!(parse_newick("(A:-1,B);"), Err(Error::NewickSyntax { .. })));
        assert!(matches!(parse_newick("(,B);"), Err(Error::NewickSyntax { .. })));
    }

    #[test]
    fn parse_quoted_and_defaults() {
        let t = parse_newick("('Genus one','it''s' [comment], C)root;").unwrap();
        assert_eq!(t.terminal_labels(), vec!["Genus one", "it's", "C"]);
        let h = t.heights();
        assert!(t.terminals().iter().all(|&x| h[x] == DEFAULT_BRANCH_LENGTH));
        assert_eq!(t.nodes()[t.root()].label.as_deref(), Some("root"));
    }

    #[test]
    fn normalize_uniform_scaling() {
        let t = parse_newick("((A:1,B:1):1,C:2);").unwrap();
        let n = normalize_to_unit_depth(&t).unwrap();
        let orig: Vec<f64> = t.nodes().iter().map(|x| x.branch_length).collect();
        for (node, o) in n.nodes().iter().zip(orig) {
            if node.parent.is_some() {
                assert!((node.branch_length - o / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalize_fig2_unchanged() {
        let t = fig2();
        let n = normalize_to_unit_depth(&t).unwrap();
        for (a, b) in t.nodes().iter().zip(n.nodes()) {
            if a.parent.is_some() {
                assert!((a.branch_length - b.branch_length).abs() < 1e-12);
            }
        }
        assert!(n.is_unit_depth());
    }

    #[test]
    fn normalize_non_ultrametric() {
        let t = parse_newick("(A:1,B:2);").unwrap();
        let n = normalize_to_unit_depth(&t).unwrap();
        assert!(n.is_unit_depth());
        let c = tree_correlation(&n).unwrap();
        assert_eq!(c.h[(0, 1)], 0.0);
    }

    #[test]
    fn normalize_zero_depth() {
        let t = parse_newick("(A:0,B:1);").unwrap();
        assert!(matches!(normalize_to_unit_depth(&t), Err(Error::ZeroDepth(l)) if l == "A"));
    }

    #[test]
    fn fig2_correlation() {
        let c = tree_correlation(&fig2()).unwrap();
        assert!((by_label(&c, "t1", "t3") - 0.55).abs() < 1e-12);
        assert!((by_label(&c, "t2", "t4") - 0.85).abs() < 1e-12);
        for (a, b) in [("t1", "t2"), ("t1", "t4"), ("t2", "t3"), ("t3", "t4")] {
            assert!((by_label(&c, a, b) - 0.2).abs() < 1e-12);
        }
        for i in 0..4 {
            assert_eq!(c.h[(i, i)], 1.0);
        }
        // same tree written without a root stem gives MRCA height 0 at the top split
        let flat = tree_correlation(&parse_newick(FIG2).unwrap()).unwrap();
        assert_eq!(by_label(&flat, "t1", "t2"), 0.0);
    }

    #[test]
    fn star_tree_identity() {
        let t = parse_newick("(A:1,B:1,C:1,D:1);").unwrap();
        let c = tree_correlation(&t).unwrap();
        assert_eq!(c.h, DMatrix::identity(4, 4));
        let d = tree_distance(&t).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.d[(i, j)], if i == j { 0.0 } else { 2.0 });
            }
        }
    }

    #[test]
    fn hand_traversal_example() {
        let t = parse_newick("(A:0.3,(B:0.2,C:0.2):0.1);").unwrap();
        let n = normalize_to_unit_depth(&t).unwrap();
        let c = tree_correlation(&n).unwrap();
        // MRCA(B,C) at raw height 0.1 of total depth 0.3
        assert!((by_label(&c, "B", "C") - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(by_label(&c, "A", "B"), 0.0);
    }

    #[test]
    fn distance_fig2() {
        let t = fig2();
        let d = tree_distance(&t).unwrap();
        let i = d.labels.iter().position(|l| l == "t1").unwrap();
        let j = d.labels.iter().position(|l| l == "t3").unwrap();
        assert!((d.d[(i, j)] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn too_few_terminals() {
        let t = parse_newick("(A:1);").unwrap();
        assert!(matches!(tree_correlation(&t), Err(Error::TooFewTerminals(1))));
        assert!(matches!(tree_distance(&t), Err(Error::TooFewTerminals(1))));
    }

    #[test]
    fn rank_lengths_make_ultrametric() {
        // genus C hangs directly off the phylum level
        let t = parse_newick("(((A,B)f1)o1,C);").unwrap();
        let r = with_rank_lengths(&t, &[1.0, 2.0, 1.0]).unwrap();
        let h = r.heights();
        for term in r.terminals() {
            assert!((h[term] - 4.0).abs() < 1e-12);
        }
        let n = normalize_to_unit_depth(&r).unwrap();
        let c = tree_correlation(&n).unwrap();
        assert!((by_label(&c, "A", "B") - 0.75).abs() < 1e-12);
        assert_eq!(by_label(&c, "A", "C"), 0.0);
    }

    #[test]
    fn newick_roundtrip_exact() {
        let t = fig2();
        let back = parse_newick(&t.to_newick()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn correlation_requires_normalized() {
        let t = parse_newick("(A:2,B:2);").unwrap();
        assert!(matches!(tree_correlation(&t), Err(Error::InvalidInput(_))));
    }
}
