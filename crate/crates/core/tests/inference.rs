mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use scce::embedding::EmbeddingMethod;
use scce::estimator::{CovarianceEstimate, ScoreEstimate};
use scce::inference::{confidence_interval, holm_procedure, normal_quantile, pair_test};
use scce::model::{devectorize, SymKxK, VecUT};

use common::{ks_p_value, ks_statistic, rng};

fn base_covariance() -> DMatrix<f64> {
    let a = DMatrix::from_fn(6, 6, |i, j| ((i * 5 + j * 3) % 7) as f64 / 7.0 - 0.4);
    &a * a.transpose() * 0.05 + DMatrix::identity(6, 6) * 0.01
}

fn two_layer(first: SymKxK, cov: &DMatrix<f64>) -> (ScoreEstimate, Vec<CovarianceEstimate>) {
    let scores = ScoreEstimate::new(vec![first, SymKxK::zeros(3)], EmbeddingMethod::Aggregate);
    let covs = (0..2)
        .map(|l| CovarianceEstimate::new(cov * 0.5, l).unwrap())
        .collect();
    (scores, covs)
}

#[test]
fn pair_test_p_values_are_uniform_under_the_null() {
    let sigma = base_covariance();
    let root = sigma.clone().cholesky().unwrap().l();
    let mut r = rng(&[31]);
    let p: Vec<f64> = (0..400)
        .map(|i| {
            let z = DVector::from_fn(6, |_, _| r.sample::<f64, _>(StandardNormal));
            let v = VecUT::new(3, &root * z).unwrap();
            let (scores, covs) = two_layer(devectorize(&v, 3).unwrap(), &sigma);
            pair_test(&scores, &covs, 0, 1, 999, i).unwrap().p_value
        })
        .collect();
    let pv = ks_p_value(ks_statistic(&p, |x| x.clamp(0.0, 1.0)), p.len());
    assert!(pv > 0.01, "KS p = {pv}");
}

#[test]
fn identical_scores_give_p_one_and_far_scores_give_the_floor() {
    let sigma = base_covariance();
    let (scores, covs) = two_layer(SymKxK::zeros(3), &sigma);
    let same = pair_test(&scores, &covs, 0, 1, 499, 7).unwrap();
    assert_eq!(same.statistic, 0.0);
    assert_eq!(same.p_value, 1.0);
    let far = SymKxK::from_row_slice(3, &[50.0, 0.0, 0.0, 0.0, 50.0, 0.0, 0.0, 0.0, 50.0]).unwrap();
    let (scores, covs) = two_layer(far, &sigma);
    assert_eq!(pair_test(&scores, &covs, 0, 1, 499, 7).unwrap().p_value, 1.0 / 500.0);
}

#[test]
fn interval_half_width_is_normal_quantile_times_sd() {
    let sigma = base_covariance();
    let m = SymKxK::from_row_slice(3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]).unwrap();
    let (scores, covs) = two_layer(m, &sigma);
    // vec order: (1,1) (1,2) (2,2) (1,3) (2,3) (3,3)
    let ci = confidence_interval(&scores, &covs[0], 0, 2, 3, 0.05).unwrap();
    assert_eq!(ci.center, 5.0);
    let expected = normal_quantile(0.975) * (0.5 * sigma[(4, 4)]).sqrt();
    assert!((ci.half_width - expected).abs() < 1e-14);
    assert!(ci.covers(5.0) && !ci.covers(5.0 + 1.01 * expected));
    assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    assert!(confidence_interval(&scores, &covs[0], 0, 3, 2, 0.05).is_err());
    assert!(confidence_interval(&scores, &covs[1], 0, 1, 1, 0.05).is_err());
}

fn pairs(layers: usize, ps: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let mut it = ps.iter();
    for k in 0..layers {
        for l in (k + 1)..layers {
            out.push((k, l, *it.next().unwrap()));
        }
    }
    out
}

proptest! {
    #[test]
    fn holm_rejections_form_a_prefix_and_grow_with_alpha(
        layers in 2usize..8,
        raw in prop::collection::vec(1e-6f64..1.0, 28),
        a1 in 0.001f64..0.2,
        a2 in 0.001f64..0.2,
    ) {
        let p = pairs(layers, &raw);
        let (lo, hi) = (a1.min(a2), a1.max(a2));
        let small = holm_procedure(layers, &p, lo).unwrap();
        let large = holm_procedure(layers, &p, hi).unwrap();
        let m = p.len();
        let rejected: Vec<bool> = small.steps.iter().map(|s| s.rejected).collect();
        let first_accept = rejected.iter().position(|r| !r).unwrap_or(m);
        prop_assert!(rejected[first_accept..].iter().all(|r| !r));
        prop_assert!(small.steps.windows(2).all(|w| w[0].p_value <= w[1].p_value));
        for k in 0..layers {
            prop_assert!(!small.decisions[k][k]);
            for l in 0..layers {
                prop_assert_eq!(small.decisions[k][l], small.decisions[l][k]);
                prop_assert!(!small.decisions[k][l] || large.decisions[k][l]);
            }
        }
        // Holm rejects everything Bonferroni rejects
        for &(k, l, pv) in &p {
            if pv <= lo / m as f64 {
                prop_assert!(small.decisions[k][l]);
            }
        }
    }
}

#[test]
fn holm_rejects_malformed_inputs() {
    assert!(holm_procedure(3, &[(0, 1, 0.1), (0, 2, 0.1)], 0.05).is_err());
    assert!(holm_procedure(3, &[(0, 1, 0.1), (1, 0, 0.1), (1, 2, 0.1)], 0.05).is_err());
    assert!(holm_procedure(3, &[(0, 1, 0.0), (0, 2, 0.1), (1, 2, 0.1)], 0.05).is_err());
    assert!(holm_procedure(3, &[(0, 1, 0.1), (0, 2, 0.1), (1, 2, 0.1)], 1.5).is_err());
}
