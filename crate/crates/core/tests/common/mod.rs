#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scce::rng::keyed;

/// One-sample Kolmogorov-Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn rng(keys: &[u64]) -> ChaCha8Rng {
    keyed(0x7E57_0001, keys)
}

/// Column-orthonormal `n x k` matrix from a Gram-Schmidt pass over uniform
/// draws.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    m.qr().q().columns(0, k).into_owned()
}

/// Covariance of `vec(U^T G U)` by direct summation over ordered index
/// quadruples: `Cov(x_ab, x_cd) = sum_{i != j} (U_ia U_jb)(U_ic U_jd + U_jc U_id) w_ij`,
/// where `x = U^T G U` and `G` has independent entries above the diagonal
/// with variance `w_ij` and zero diagonal.
pub fn brute_force_covariance(u: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = (u.nrows(), u.ncols());
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|t| (0..=t).map(move |s| (s, t))).collect();
    let d = pairs.len();
    let mut sigma = DMatrix::zeros(d, d);
    for (p, &(a, b)) in pairs.iter().enumerate() {
        for (q, &(c, e)) in pairs.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    acc += u[(i, a)] * u[(j, b)] * (u[(i, c)] * u[(j, e)] + u[(j, c)] * u[(i, e)]) * w[(i, j)];
                }
            }
            sigma[(p, q)] = acc;
        }
    }
    sigma
}

/// Best `||A - R||_F` over `O(2)` by scanning rotations and reflections on a
/// grid, then refining around the best angle.
pub fn grid_search_o2(a: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let rot = |th: f64, reflect: bool| {
        let (s, c) = th.sin_cos();
        if reflect {
            DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
        } else {
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
        }
    };
    let mut best = (f64::INFINITY, 0.0, false);
    for reflect in [false, true] {
        let steps = 20_000;
        for i in 0..steps {
            let th = i as f64 * std::f64::consts::TAU / steps as f64;
            let r = (a - rot(th, reflect)).norm();
            if r < best.0 {
                best = (r, th, reflect);
            }
        }
    }
    let (mut lo, mut hi) = (best.1 - 1e-3, best.1 + 1e-3);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if (a - rot(m1, best.2)).norm() < (a - rot(m2, best.2)).norm() {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let th = (lo + hi) / 2.0;
    let r = rot(th, best.2);
    ((a - &r).norm(), r)
}
