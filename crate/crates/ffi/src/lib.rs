//! C interface to `phylobcg`.
//!
//! Every function returns a [`PbcgStatus`]; on failure the message is kept per
//! thread and read with [`pbcg_last_error`]. Objects cross the boundary as
//! opaque handles that the caller releases with the matching `_free`
//! function. Matrices are dense, row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use phylobcg::analyze::{self, partial_correlations};
use phylobcg::copula::CountMatrix;
use phylobcg::sampler::{run_chains, Hyperparameters, ModelData, PosteriorSummary, SamplerConfig, Variant};
use phylobcg::tree::{normalize_to_unit_depth, parse_newick, tree_correlation, tree_distance, PhyloTree};
use phylobcg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbcgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    NotPositiveDefinite = 4,
    Degenerate = 5,
    Io = 6,
    BufferTooSmall = 7,
    Sampler = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbcgVariant {
    Phylo = 0,
    Oracle = 1,
    Dist = 2,
    Flat = 3,
}

/// Sampler settings; fill with [`pbcg_fit_options_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PbcgFitOptions {
    pub variant: PbcgVariant,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_v0: f64,
    pub b_v0: f64,
    pub h: f64,
    pub lambda: f64,
    pub latent_dim: usize,
    /// Required for the oracle variant, ignored otherwise.
    pub oracle_edge_count: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PbcgFdrResult {
    pub cutoff: f64,
    pub fdr: f64,
    pub selected: usize,
    /// 1 when the target was reached, 0 when the strictest selection is returned instead.
    pub achieved: u8,
}

/// Parsed tree, rescaled to unit root-to-tip depth.
pub struct PbcgTree {
    tree: PhyloTree,
    labels: Vec<CString>,
}

/// Posterior summary of a fitted model.
pub struct PbcgFit {
    summary: PosteriorSummary,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PbcgStatus {
    match e {
        Error::NewickSyntax { .. } | Error::Csv(_) | Error::Json(_) => PbcgStatus::Parse,
        Error::NotPositiveDefinite(_) => PbcgStatus::NotPositiveDefinite,
        Error::Degenerate(_) => PbcgStatus::Degenerate,
        Error::Io { .. } => PbcgStatus::Io,
        Error::AtIteration { .. } | Error::InChain { .. } | Error::InvariantViolation(_) => PbcgStatus::Sampler,
        _ => PbcgStatus::InvalidInput,
    }
}

fn fail(status: PbcgStatus, msg: impl AsRef<str>) -> PbcgStatus {
    set_error(msg.as_ref());
    status
}

fn guard(f: impl FnOnce() -> Result<(), PbcgStatus>) -> PbcgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PbcgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(PbcgStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: phylobcg::Result<T>) -> Result<T, PbcgStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), PbcgStatus> {
    if p.is_null() {
        Err(fail(PbcgStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, PbcgStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PbcgStatus::InvalidInput, format!("`{name}` is not valid UTF-8")))
}

unsafe fn copy_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), PbcgStatus> {
    non_null(out, "out")?;
    let need = m.nrows() * m.ncols();
    if len < need {
        return Err(fail(PbcgStatus::BufferTooSmall, format!("buffer holds {len} values, {need} needed")));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

fn to_cstrings(labels: &[String]) -> Vec<CString> {
    labels.iter().map(|l| CString::new(l.replace('\0', " ")).unwrap_or_default()).collect()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn pbcg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pbcg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a Newick string and rescale it to unit depth.
///
/// # Safety
/// `newick` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pbcg_tree_parse(newick: *const c_char, out: *mut *mut PbcgTree) -> PbcgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = c_str(newick, "newick")?;
        let tree = lift(parse_newick(text).and_then(|t| normalize_to_unit_depth(&t)))?;
        let labels = to_cstrings(&tree.terminal_labels());
        *out = Box::into_raw(Box::new(PbcgTree { tree, labels }));
        Ok(())
    })
}

/// # Safety
/// `tree` must come from [`pbcg_tree_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pbcg_tree_free(tree: *mut PbcgTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// # Safety
/// `tree` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pbcg_tree_num_terminals(tree: *const PbcgTree, out: *mut usize) -> PbcgStatus {
    guard(|| {
        non_null(tree, "tree")?;
        non_null(out, "out")?;
        *out = (*tree).labels.len();
        Ok(())
    })
}

/// Label of terminal `index`, owned by the tree handle.
///
/// # Safety
/// `tree` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pbcg_tree_label(tree: *const PbcgTree, index: usize, out: *mut *const c_char) -> PbcgStatus {
    guard(|| {
        non_null(tree, "tree")?;
        non_null(out, "out")?;
        let labels = &(*tree).labels;
        let l = labels
            .get(index)
            .ok_or_else(|| fail(PbcgStatus::InvalidInput, format!("index {index} out of range ({} terminals)", labels.len())))?;
        *out = l.as_ptr();
        Ok(())
    })
}

/// Tree correlation matrix `H` (`p x p`) in terminal order.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pbcg_tree_correlation(tree: *const PbcgTree, out: *mut f64, len: usize) -> PbcgStatus {
    guard(|| {
        non_null(tree, "tree")?;
        let h = lift(tree_correlation(&(*tree).tree))?;
        copy_matrix(&h.h, out, len)
    })
}

/// Patristic distance matrix (`p x p`) in terminal order.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pbcg_tree_distance(tree: *const PbcgTree, out: *mut f64, len: usize) -> PbcgStatus {
    guard(|| {
        non_null(tree, "tree")?;
        let d = lift(tree_distance(&(*tree).tree))?;
        copy_matrix(&d.d, out, len)
    })
}

/// Smallest cutoff whose posterior expected FDR is at most `alpha`.
///
/// # Safety
/// `pi_hat` must hold `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fdr_cutoff(pi_hat: *const f64, len: usize, alpha: f64, out: *mut PbcgFdrResult) -> PbcgStatus {
    guard(|| {
        non_null(out, "out")?;
        let values: &[f64] = if len == 0 {
            &[]
        } else {
            non_null(pi_hat, "pi_hat")?;
            std::slice::from_raw_parts(pi_hat, len)
        };
        let c = lift(analyze::fdr_cutoff(values, alpha))?;
        *out = PbcgFdrResult { cutoff: c.cutoff, fdr: c.fdr, selected: c.selected, achieved: c.achieved as u8 };
        Ok(())
    })
}

/// Defaults: phylo variant, 5500 iterations with 500 burn-in, one chain.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_options_default(out: *mut PbcgFitOptions) -> PbcgStatus {
    guard(|| {
        non_null(out, "out")?;
        let c = SamplerConfig::default();
        let h = Hyperparameters::default();
        *out = PbcgFitOptions {
            variant: PbcgVariant::Phylo,
            iterations: c.iterations,
            burn_in: c.burn_in,
            thin: c.thin,
            chains: c.chains,
            seed: c.seed,
            a_sigma: h.a_sigma,
            b_sigma: h.b_sigma,
            a_v0: h.a_v,
            b_v0: h.b_v,
            h: h.h,
            lambda: h.lambda,
            latent_dim: h.latent_dim,
            oracle_edge_count: 0,
        };
        Ok(())
    })
}

fn sampler_config(o: &PbcgFitOptions) -> SamplerConfig {
    let variant = match o.variant {
        PbcgVariant::Phylo => Variant::Phylo,
        PbcgVariant::Oracle => Variant::Oracle,
        PbcgVariant::Dist => Variant::Dist,
        PbcgVariant::Flat => Variant::Flat,
    };
    SamplerConfig {
        variant,
        iterations: o.iterations,
        burn_in: o.burn_in,
        thin: o.thin,
        chains: o.chains,
        seed: o.seed,
        hyper: Hyperparameters {
            a_sigma: o.a_sigma,
            b_sigma: o.b_sigma,
            a_v: o.a_v0,
            b_v: o.b_v0,
            h: o.h,
            lambda: o.lambda,
            latent_dim: o.latent_dim,
        },
        oracle_edge_count: (variant == Variant::Oracle).then_some(o.oracle_edge_count),
        ..SamplerConfig::default()
    }
}

/// Fit the model to an `n x p` row-major count matrix.
///
/// `labels` names the `p` columns and may be null when no tree is given; with
/// a tree every label must be one of its terminals.
///
/// # Safety
/// `counts` must hold `n * p` doubles, `labels` (if not null) `p` strings,
/// `tree` must be null or a live tree handle, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit(
    counts: *const f64,
    n: usize,
    p: usize,
    labels: *const *const c_char,
    tree: *const PbcgTree,
    options: *const PbcgFitOptions,
    out: *mut *mut PbcgFit,
) -> PbcgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(counts, "counts")?;
        non_null(options, "options")?;
        let values = DMatrix::from_row_slice(n, p, std::slice::from_raw_parts(counts, n * p));
        let matrix = if labels.is_null() {
            lift(CountMatrix::from_values(values))?
        } else {
            let names = std::slice::from_raw_parts(labels, p)
                .iter()
                .map(|&s| c_str(s, "labels").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = (0..n).map(|i| format!("s{}", i + 1)).collect();
            lift(CountMatrix::new(values, rows, names))?
        };
        let t = if tree.is_null() { None } else { Some(&(*tree).tree) };
        let config = sampler_config(&*options);
        let data = lift(ModelData::new(&matrix, t))?;
        let output = run_chains(&config, &data).map_err(|e| {
            let status = match e {
                Error::InvalidInput(_) => PbcgStatus::InvalidInput,
                _ => PbcgStatus::Sampler,
            };
            fail(status, e.to_string())
        })?;
        let labels = to_cstrings(&output.summary.labels);
        *out = Box::into_raw(Box::new(PbcgFit { summary: output.summary, labels }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`pbcg_fit`] or be null.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_free(fit: *mut PbcgFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_num_taxa(fit: *const PbcgFit, out: *mut usize) -> PbcgStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(out, "out")?;
        *out = (*fit).labels.len();
        Ok(())
    })
}

/// Label of fitted taxon `index`, owned by the fit handle.
///
/// # Safety
/// `fit` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_label(fit: *const PbcgFit, index: usize, out: *mut *const c_char) -> PbcgStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(out, "out")?;
        let labels = &(*fit).labels;
        let l = labels
            .get(index)
            .ok_or_else(|| fail(PbcgStatus::InvalidInput, format!("index {index} out of range ({} taxa)", labels.len())))?;
        *out = l.as_ptr();
        Ok(())
    })
}

/// Posterior edge inclusion probabilities (`p x p`).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_pi_hat(fit: *const PbcgFit, out: *mut f64, len: usize) -> PbcgStatus {
    guard(|| {
        non_null(fit, "fit")?;
        copy_matrix(&(*fit).summary.pi_hat, out, len)
    })
}

/// Partial correlations of the posterior mean concentration matrix (`p x p`).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_partial_correlations(fit: *const PbcgFit, out: *mut f64, len: usize) -> PbcgStatus {
    guard(|| {
        non_null(fit, "fit")?;
        let rho = lift(partial_correlations(&(*fit).summary.omega_hat))?;
        copy_matrix(&rho, out, len)
    })
}

/// Select edges at posterior expected FDR `alpha`, writing a `p x p` 0/1
/// adjacency and the cutoff.
///
/// # Safety
/// `adjacency` must hold `len` bytes and `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pbcg_fit_select(
    fit: *const PbcgFit,
    alpha: f64,
    adjacency: *mut u8,
    len: usize,
    result: *mut PbcgFdrResult,
) -> PbcgStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(adjacency, "adjacency")?;
        non_null(result, "result")?;
        let p = (*fit).labels.len();
        if len < p * p {
            return Err(fail(PbcgStatus::BufferTooSmall, format!("buffer holds {len} bytes, {} needed", p * p)));
        }
        let sel = lift(analyze::select_edges(&(*fit).summary.pi_hat, alpha))?;
        let dst = std::slice::from_raw_parts_mut(adjacency, p * p);
        for i in 0..p {
            for j in 0..p {
                dst[i * p + j] = sel.edges.get(i, j) as u8;
            }
        }
        let c = sel.cutoff;
        *result = PbcgFdrResult { cutoff: c.cutoff, fdr: c.fdr, selected: c.selected, achieved: c.achieved as u8 };
        Ok(())
    })
}
