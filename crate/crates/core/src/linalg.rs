//! Dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, ScceError};

/// Ranking used to pick "leading" eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenvalueOrder {
    /// Largest `|lambda|` first.
    Magnitude,
    /// Largest `lambda` first.
    Algebraic,
}

pub(crate) fn eigen_by_magnitude(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    eigen_ordered(m, EigenvalueOrder::Magnitude)
}

/// Full symmetric eigendecomposition with eigenpairs ranked by `order`.
/// Ties keep the solver's index order.
pub(crate) fn eigen_ordered(m: DMatrix<f64>, order: EigenvalueOrder) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    let max_iterations = 100 * dim.max(10);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, max_iterations)
        .ok_or(ScceError::EigenNonConvergence { dim, max_iterations })?;
    let key = |v: f64| match order {
        EigenvalueOrder::Magnitude => v.abs(),
        EigenvalueOrder::Algebraic => v,
    };
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| {
        key(eig.eigenvalues[b])
            .total_cmp(&key(eig.eigenvalues[a]))
            .then(a.cmp(&b))
    });
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok((values, vectors))
}

const LANCZOS_MIN_DIM: usize = 64;
const LANCZOS_CHECK_EVERY: usize = 8;
const LANCZOS_RTOL: f64 = 1e-10;

/// The `k` eigenpairs of largest `|lambda|` (same ranking as
/// [`eigen_by_magnitude`]). Uses Lanczos with full reorthogonalization from a
/// fixed start vector and accepts once the `k + 1` leading Ritz pairs have
/// residual `<= 1e-10 ||m||_F`; otherwise, or on breakdown, falls back to the
/// dense solver.
pub(crate) fn leading_by_magnitude(m: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let scale = m.norm();
    if n < LANCZOS_MIN_DIM || 4 * k + 16 > n || scale == 0.0 {
        return dense_leading(m, k);
    }
    match lanczos_leading(m, k, LANCZOS_RTOL * scale) {
        Some(r) => Ok(r),
        None => dense_leading(m, k),
    }
}

fn dense_leading(m: &DMatrix<f64>, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (mut values, vectors) = eigen_by_magnitude(m.clone())?;
    values.truncate(k);
    Ok((values, vectors.columns(0, k).into_owned()))
}

fn lanczos_leading(m: &DMatrix<f64>, k: usize, tol: f64) -> Option<(Vec<f64>, DMatrix<f64>)> {
    use nalgebra::DVector;
    use rand::Rng;

    let n = m.nrows();
    let max_steps = n.min(20 * k + 300);
    let mut q = DMatrix::<f64>::zeros(n, max_steps);
    let mut rng = crate::rng::stream(0x1A4C_205E, 0);
    let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    v /= v.norm();
    q.set_column(0, &v);
    let (mut alpha, mut beta) = (Vec::with_capacity(max_steps), Vec::with_capacity(max_steps));
    let mut w = DVector::<f64>::zeros(n);
    for j in 0..max_steps {
        w.gemv(1.0, m, &q.column(j), 0.0);
        let a = q.column(j).dot(&w);
        alpha.push(a);
        // two passes of classical Gram-Schmidt against every previous vector
        for _ in 0..2 {
            let basis = q.columns(0, j + 1);
            let coeffs = basis.tr_mul(&w);
            w.gemv(-1.0, &basis, &coeffs, 1.0);
        }
        let b = w.norm();
        let steps = j + 1;
        if steps >= 2 * k + 2 && (steps % LANCZOS_CHECK_EVERY == 0 || steps == max_steps) {
            if let Some(r) = ritz_leading(&q.columns(0, steps), &alpha, &beta, b, k, tol) {
                return Some(r);
            }
        }
        if steps == max_steps || b <= tol {
            return None;
        }
        beta.push(b);
        q.set_column(j + 1, &(&w / b));
    }
    None
}

fn ritz_leading(
    basis: &nalgebra::DMatrixView<f64>,
    alpha: &[f64],
    beta: &[f64],
    last_beta: f64,
    k: usize,
    tol: f64,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| match r.abs_diff(c) {
        0 => alpha[r],
        1 => beta[r.min(c)],
        _ => 0.0,
    });
    let (values, s) = eigen_by_magnitude(t).ok()?;
    if (0..=k).any(|i| last_beta * s[(m - 1, i)].abs() > tol) {
        return None;
    }
    Some((values[..k].to_vec(), basis * s.columns(0, k)))
}

/// Flips column signs so the largest-magnitude entry of every column is
/// non-negative (first such entry on ties).
pub(crate) fn apply_sign_convention(m: &mut DMatrix<f64>) {
    for c in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..m.nrows() {
            let a = m[(r, c)].abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if m[(best, c)] < 0.0 {
            m.column_mut(c).neg_mut();
        }
    }
}

/// Floors negative eigenvalues at zero. Returns the input untouched when it
/// is already positive semidefinite.
pub(crate) fn psd_repair(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or(
        ScceError::Factorization("eigendecomposition of covariance did not converge".into()),
    )?;
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return Ok(m);
    }
    let floored = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// Symmetric square root `S^{1/2}` of a positive semidefinite matrix, after
/// adding `jitter` to the diagonal.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    let shifted = m + DMatrix::identity(d, d) * jitter;
    let eig = SymmetricEigen::try_new(shifted, f64::EPSILON, 0)
        .ok_or(ScceError::Factorization("eigendecomposition did not converge".into()))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(ScceError::Factorization("non-finite eigenvalue".into()));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Inverse symmetric square root `S^{-1/2}`; fails on non-positive spectra.
pub(crate) fn inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(ScceError::Factorization("eigendecomposition did not converge".into()))?;
    if let Some(v) = eig.eigenvalues.iter().find(|&&v| v <= 0.0) {
        return Err(ScceError::Factorization(format!(
            "matrix is not positive definite (eigenvalue {v:e})"
        )));
    }
    let inv = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}
