//! C ABI over the `scce` library.
//!
//! Every fallible function returns a [`ScceStatus`]. On failure the message is
//! retrievable with [`scce_last_error_message`] on the same thread, and output
//! pointers are left untouched. Objects are opaque handles that must be
//! released with their matching `*_free` function. Matrices cross the
//! boundary as row-major `double` buffers sized by the caller; the `*_dims`
//! functions report the required shapes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use scce::embedding::{Embedder, EigenspaceEstimate};
use scce::estimator::{estimate_covariances, estimate_scores, CovarianceEstimate, ScoreEstimate};
use scce::generator::{connectivity_from_spectrum, membership_from_sizes, sample_network, sizes_from_proportions};
use scce::inference::{confidence_interval, holm_procedure, pair_test};
use scce::model::SymKxK;
use scce::{BlockModelSpec, MultiLayerNetwork, ScceError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    InvalidNetwork = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Io = 7,
    Panic = 8,
}

/// Embedding used by [`scce_embed`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScceMethod {
    /// Bias-adjusted sum of squared adjacency matrices.
    Aggregate = 0,
    /// Multiple adjacency spectral embedding baseline.
    Mase = 1,
}

/// Block model specification.
pub struct ScceModel {
    spec: BlockModelSpec,
}

/// Multi-layer binary network.
pub struct ScceNetwork {
    net: MultiLayerNetwork,
}

/// Estimated common eigenspace.
pub struct ScceEmbedding {
    emb: EigenspaceEstimate,
}

/// Per-layer score matrices with their plug-in covariances.
pub struct ScceScores {
    scores: ScoreEstimate,
    covs: Vec<CovarianceEstimate>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: ScceStatus,
    message: String,
}

impl Failure {
    fn new(status: ScceStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<ScceError> for Failure {
    fn from(e: ScceError) -> Self {
        let status = match &e {
            ScceError::InvalidSpec(_) | ScceError::EmptyCommunity(_) | ScceError::ProbabilityOutOfRange { .. } => {
                ScceStatus::InvalidModel
            }
            ScceError::InvalidNetwork(_) => ScceStatus::InvalidNetwork,
            ScceError::EigenNonConvergence { .. }
            | ScceError::RankDeficientAlignment { .. }
            | ScceError::Factorization(_) => ScceStatus::Numerical,
            ScceError::Io(_) | ScceError::Csv(_) | ScceError::Json(_) | ScceError::Parse { .. } => ScceStatus::Io,
            _ => ScceStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ScceStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.status
        }
        Err(_) => {
            set_last_error("internal panic");
            ScceStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(ScceStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(ScceStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if len < needed {
        return Err(Failure::new(
            ScceStatus::BufferTooSmall,
            format!("`{name}` holds {len} values, {needed} required"),
        ));
    }
    if p.is_null() {
        return Err(Failure::new(ScceStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write<T>(p: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::new(ScceStatus::NullPointer, format!("`{name}` is null")));
    }
    p.write(value);
    Ok(())
}

fn copy_row_major(m: &DMatrix<f64>, buf: &mut [f64]) {
    let c = m.ncols();
    for (idx, v) in buf.iter_mut().enumerate() {
        *v = m[(idx / c, idx % c)];
    }
}

/// Message of the last failure on the calling thread, or an empty string.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn scce_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn scce_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Block model from explicit parts. `membership` has `n` entries in
/// `0..k`; `connectivity` holds `num_layers` row-major `k x k` matrices;
/// `psi` is null for a plain SBM or has `n` entries.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_model_new(
    k: usize,
    n: usize,
    membership: *const usize,
    num_layers: usize,
    connectivity: *const f64,
    rho: f64,
    psi: *const f64,
    out: *mut *mut ScceModel,
) -> ScceStatus {
    guard(|| {
        let membership = slice(membership, n, "membership")?.to_vec();
        let cells = slice(connectivity, num_layers * k * k, "connectivity")?;
        let blocks = cells
            .chunks(k * k)
            .map(|c| SymKxK::from_row_slice(k, c))
            .collect::<scce::Result<Vec<_>>>()?;
        let psi = if psi.is_null() { None } else { Some(slice(psi, n, "psi")?.to_vec()) };
        let spec = BlockModelSpec::new(k, membership, blocks, rho, psi)?;
        spec.validate_probabilities()?;
        write(out, Box::into_raw(Box::new(ScceModel { spec })), "out")
    })
}

/// Two-regime K = 3 design: layers `0..L/2` use connectivity with spectrum
/// `first`, the rest `second`, over the fixed simulation basis. Community
/// sizes follow `proportions` (3 entries).
///
/// # Safety
/// `proportions`, `first` and `second` must point to 3 values; `psi` is null
/// or points to `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_model_two_regime(
    n: usize,
    num_layers: usize,
    rho: f64,
    proportions: *const f64,
    first: *const f64,
    second: *const f64,
    psi: *const f64,
    out: *mut *mut ScceModel,
) -> ScceStatus {
    guard(|| {
        let props = slice(proportions, 3, "proportions")?;
        let spectrum = |p: *const f64, name: &str| -> Result<[f64; 3], Failure> {
            let s = slice(p, 3, name)?;
            Ok([s[0], s[1], s[2]])
        };
        let (b1, b2) = (
            connectivity_from_spectrum(spectrum(first, "first")?),
            connectivity_from_spectrum(spectrum(second, "second")?),
        );
        let psi = if psi.is_null() { None } else { Some(slice(psi, n, "psi")?.to_vec()) };
        let spec = scce::generator::two_regime_spec(n, props, num_layers, rho, &b1, &b2, psi)?;
        spec.validate_probabilities()?;
        write(out, Box::into_raw(Box::new(ScceModel { spec })), "out")
    })
}

/// Community sizes for `n` nodes split by `proportions`, written to `sizes`
/// (`k` entries), and the matching contiguous membership to `membership`
/// (`n` entries) when non-null.
///
/// # Safety
/// `proportions` and `sizes` must hold `k` values; `membership` is null or
/// holds `n` values.
#[no_mangle]
pub unsafe extern "C" fn scce_community_sizes(
    n: usize,
    k: usize,
    proportions: *const f64,
    sizes: *mut usize,
    membership: *mut usize,
) -> ScceStatus {
    guard(|| {
        let s = sizes_from_proportions(n, slice(proportions, k, "proportions")?)?;
        if sizes.is_null() {
            return Err(Failure::new(ScceStatus::NullPointer, "`sizes` is null"));
        }
        std::slice::from_raw_parts_mut(sizes, k).copy_from_slice(&s);
        if !membership.is_null() {
            std::slice::from_raw_parts_mut(membership, n).copy_from_slice(&membership_from_sizes(&s));
        }
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn scce_model_free(model: *mut ScceModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Samples one network; identical `(model, seed)` give identical networks.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_network_sample(
    model: *const ScceModel,
    seed: u64,
    out: *mut *mut ScceNetwork,
) -> ScceStatus {
    guard(|| {
        let net = sample_network(&deref(model, "model")?.spec, seed)?;
        write(out, Box::into_raw(Box::new(ScceNetwork { net })), "out")
    })
}

/// Network from `num_edges` `(layer, i, j)` triples stored flat in `edges`.
///
/// # Safety
/// `edges` must hold `3 * num_edges` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_network_from_edges(
    n: usize,
    num_layers: usize,
    edges: *const usize,
    num_edges: usize,
    out: *mut *mut ScceNetwork,
) -> ScceStatus {
    guard(|| {
        let flat = slice(edges, 3 * num_edges, "edges")?;
        let net = MultiLayerNetwork::from_edges(n, num_layers, flat.chunks(3).map(|e| (e[0], e[1], e[2])))?;
        write(out, Box::into_raw(Box::new(ScceNetwork { net })), "out")
    })
}

/// # Safety
/// `network` must be a live handle; `n` and `num_layers` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_network_dims(
    network: *const ScceNetwork,
    n: *mut usize,
    num_layers: *mut usize,
) -> ScceStatus {
    guard(|| {
        let net = &deref(network, "network")?.net;
        write(n, net.n(), "n")?;
        write(num_layers, net.num_layers(), "num_layers")
    })
}

/// Number of edges in one layer.
///
/// # Safety
/// `network` must be a live handle; `edges` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_network_edge_count(
    network: *const ScceNetwork,
    layer: usize,
    edges: *mut usize,
) -> ScceStatus {
    guard(|| {
        let net = &deref(network, "network")?.net;
        if layer >= net.num_layers() {
            return Err(Failure::new(ScceStatus::InvalidArgument, format!("layer {layer} out of range")));
        }
        write(edges, net.layer(layer).edge_count(), "edges")
    })
}

/// # Safety
/// `network` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scce_network_free(network: *mut ScceNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// # Safety
/// `network` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_embed(
    network: *const ScceNetwork,
    k: usize,
    method: ScceMethod,
    out: *mut *mut ScceEmbedding,
) -> ScceStatus {
    guard(|| {
        let embedder = match method {
            ScceMethod::Aggregate => Embedder::SCCE,
            ScceMethod::Mase => Embedder::MASE,
        };
        let emb = embedder.embed(&deref(network, "network")?.net, k)?;
        write(out, Box::into_raw(Box::new(ScceEmbedding { emb })), "out")
    })
}

/// # Safety
/// `embedding` must be a live handle; `n` and `k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_embedding_dims(
    embedding: *const ScceEmbedding,
    n: *mut usize,
    k: *mut usize,
) -> ScceStatus {
    guard(|| {
        let emb = &deref(embedding, "embedding")?.emb;
        write(n, emb.n(), "n")?;
        write(k, emb.k(), "k")
    })
}

/// Row-major `n x k` basis.
///
/// # Safety
/// `embedding` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn scce_embedding_basis(
    embedding: *const ScceEmbedding,
    buf: *mut f64,
    len: usize,
) -> ScceStatus {
    guard(|| {
        let b = deref(embedding, "embedding")?.emb.basis();
        copy_row_major(b, out_slice(buf, len, b.len(), "buf")?);
        Ok(())
    })
}

/// # Safety
/// `embedding` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scce_embedding_free(embedding: *mut ScceEmbedding) {
    if !embedding.is_null() {
        drop(Box::from_raw(embedding));
    }
}

/// Score matrices `Uhat^T A_l Uhat` and plug-in covariances for every layer.
///
/// # Safety
/// `network` and `embedding` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_estimate(
    network: *const ScceNetwork,
    embedding: *const ScceEmbedding,
    out: *mut *mut ScceScores,
) -> ScceStatus {
    guard(|| {
        let net = &deref(network, "network")?.net;
        let emb = &deref(embedding, "embedding")?.emb;
        let scores = estimate_scores(net, emb)?;
        let covs = estimate_covariances(emb, &scores)?;
        write(out, Box::into_raw(Box::new(ScceScores { scores, covs })), "out")
    })
}

/// Layer count, `K`, and covariance side `K (K + 1) / 2`.
///
/// # Safety
/// `scores` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_scores_dims(
    scores: *const ScceScores,
    num_layers: *mut usize,
    k: *mut usize,
    cov_dim: *mut usize,
) -> ScceStatus {
    guard(|| {
        let s = deref(scores, "scores")?;
        write(num_layers, s.scores.num_layers(), "num_layers")?;
        write(k, s.scores.k(), "k")?;
        write(cov_dim, scce::model::vec_dim(s.scores.k()), "cov_dim")
    })
}

fn check_layer(s: &ScceScores, layer: usize) -> Result<(), Failure> {
    if layer >= s.scores.num_layers() {
        return Err(Failure::new(ScceStatus::InvalidArgument, format!("layer {layer} out of range")));
    }
    Ok(())
}

/// Row-major `K x K` score matrix of `layer`.
///
/// # Safety
/// `scores` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn scce_scores_matrix(
    scores: *const ScceScores,
    layer: usize,
    buf: *mut f64,
    len: usize,
) -> ScceStatus {
    guard(|| {
        let s = deref(scores, "scores")?;
        check_layer(s, layer)?;
        let m = s.scores.score(layer).matrix();
        copy_row_major(m, out_slice(buf, len, m.len(), "buf")?);
        Ok(())
    })
}

/// Row-major plug-in covariance of the upper-triangular vectorization of
/// layer `layer`.
///
/// # Safety
/// `scores` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn scce_scores_covariance(
    scores: *const ScceScores,
    layer: usize,
    buf: *mut f64,
    len: usize,
) -> ScceStatus {
    guard(|| {
        let s = deref(scores, "scores")?;
        check_layer(s, layer)?;
        let m = s.covs[layer].matrix();
        copy_row_major(m, out_slice(buf, len, m.len(), "buf")?);
        Ok(())
    })
}

/// Level `1 - alpha` interval for entry `(s, t)` (1-based, `s <= t`).
///
/// # Safety
/// `scores` must be a live handle; `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_confidence_interval(
    scores: *const ScceScores,
    layer: usize,
    s: usize,
    t: usize,
    alpha: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> ScceStatus {
    guard(|| {
        let sc = deref(scores, "scores")?;
        check_layer(sc, layer)?;
        let ci = confidence_interval(&sc.scores, &sc.covs[layer], layer, s, t, alpha)?;
        write(lower, ci.lower(), "lower")?;
        write(upper, ci.upper(), "upper")
    })
}

/// Homogeneity test of layers `k` and `l` with `null_samples` Gaussian draws.
///
/// # Safety
/// `scores` must be a live handle; `statistic` and `p_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn scce_pair_test(
    scores: *const ScceScores,
    k: usize,
    l: usize,
    null_samples: usize,
    seed: u64,
    statistic: *mut f64,
    p_value: *mut f64,
) -> ScceStatus {
    guard(|| {
        let s = deref(scores, "scores")?;
        let r = pair_test(&s.scores, &s.covs, k, l, null_samples, seed)?;
        write(statistic, r.statistic, "statistic")?;
        write(p_value, r.p_value, "p_value")
    })
}

/// Holm step-down over all pairs. `p_values` lists the `L (L - 1) / 2`
/// p-values in lexicographic pair order `(0,1), (0,2), ..., (L-2,L-1)`;
/// `decisions` receives a row-major `L x L` matrix with 1 for rejection.
///
/// # Safety
/// `p_values` must hold `L (L - 1) / 2` values and `decisions` `L * L` bytes.
#[no_mangle]
pub unsafe extern "C" fn scce_holm(
    num_layers: usize,
    p_values: *const f64,
    alpha: f64,
    decisions: *mut u8,
) -> ScceStatus {
    guard(|| {
        let m = num_layers * num_layers.saturating_sub(1) / 2;
        let p = slice(p_values, m, "p_values")?;
        let mut it = p.iter();
        let mut entries = Vec::with_capacity(m);
        for k in 0..num_layers {
            for l in (k + 1)..num_layers {
                entries.push((k, l, *it.next().unwrap_or(&f64::NAN)));
            }
        }
        let outcome = holm_procedure(num_layers, &entries, alpha)?;
        if decisions.is_null() {
            return Err(Failure::new(ScceStatus::NullPointer, "`decisions` is null"));
        }
        let out = std::slice::from_raw_parts_mut(decisions, num_layers * num_layers);
        for (k, row) in outcome.decisions.iter().enumerate() {
            for (l, &d) in row.iter().enumerate() {
                out[k * num_layers + l] = d as u8;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `scores` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn scce_scores_free(scores: *mut ScceScores) {
    if !scores.is_null() {
        drop(Box::from_raw(scores));
    }
}
