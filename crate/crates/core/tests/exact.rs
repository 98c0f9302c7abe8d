use nalgebra::{DMatrix, DVector};
use slm_core::exact::*;
use slm_core::linear_model::generate_instance;
use slm_core::rng::stream;
use slm_core::scalar_channel::{scalar_mi, scalar_mmse};
use slm_core::stats::McEstimate;
use slm_core::Prior;

#[test]
fn weights_normalize_for_flagship_instances() {
    let p = Prior::bernoulli_gaussian(0.0, 1e6, 0.2).unwrap();
    for seed in 0..5 {
        let inst = generate_instance(&p, 12, 18, seed).unwrap();
        let post = support_posterior(&inst, &p).unwrap();
        assert_eq!(post.len(), 1 << 12);
        assert!((post.weight_sum() - 1.0).abs() < 1e-10);
        for m in exact_marginals(&post) {
            assert!((0.0..=1.0).contains(&m.gamma) && m.variance >= 0.0);
        }
    }
}

#[test]
fn antipodal_codebook_is_the_binary_channel() {
    let book = Codebook::new(DMatrix::from_row_slice(2, 1, &[-1.0, 1.0])).unwrap();
    let p = Prior::binary();
    for snr in [0.3, 1.0, 3.0] {
        let est = codebook_mmse_mi(&book, snr, 20_000, 8).unwrap();
        let m = scalar_mmse(&p, snr).unwrap();
        let i = scalar_mi(&p, snr).unwrap();
        assert!((est.mmse.mean - m).abs() < 3.0 * est.mmse.std_err, "snr {snr}: {:?} vs {m}", est.mmse);
        assert!((est.mi.mean - i).abs() < 3.0 * est.mi.std_err, "snr {snr}: {:?} vs {i}", est.mi);
    }
}

#[test]
fn gaussian_prior_mmse_matches_linear_formula() {
    let p = Prior::gaussian(0.0, 1.0).unwrap();
    let (n, m, trials) = (5, 4, 3000);
    let mc = exact_mmse_mc(&p, n, m, trials, 21).unwrap();
    // independent draws: tr (I + A^T A)^{-1} / N
    let traces: Vec<f64> = (0..trials)
        .map(|t| {
            let a = slm_core::linear_model::sample_matrix(m, n, &mut stream(1000 + t as u64, 0));
            let k = DMatrix::identity(n, n) + a.transpose() * &a;
            k.try_inverse().unwrap().trace() / n as f64
        })
        .collect();
    let oracle = McEstimate::from_samples(&traces);
    let se = mc.std_err.hypot(oracle.std_err);
    assert!((mc.mean - oracle.mean).abs() < 3.0 * se, "{mc:?} vs {oracle:?}");
}

#[test]
fn roc_curves_are_monotone_with_fixed_endpoints() {
    let p = Prior::bernoulli_gaussian(0.0, 1.0, 0.3).unwrap();
    let inst = generate_instance(&p, 12, 10, 4).unwrap();
    let gammas: Vec<f64> = exact_marginals(&support_posterior(&inst, &p).unwrap()).iter().map(|m| m.gamma).collect();
    let truth: Vec<bool> = inst.x_true.iter().map(|&x| x != 0.0).collect();
    let roc = detection_roc(&gammas, &truth, &uniform_thresholds(512)).unwrap();
    let first = roc.first().unwrap();
    assert_eq!((first.lambda, first.fpr, first.tpr), (0.0, Some(1.0), Some(1.0)));
    for w in roc.windows(2) {
        assert!(w[1].fpr <= w[0].fpr && w[1].tpr <= w[0].tpr);
    }
    let csv = roc_table(&roc).to_csv();
    assert!(csv.starts_with("lambda,fpr,tpr\n"));
    // a sample with no positives has an undefined true-positive rate
    let none = detection_roc(&[0.2, 0.7], &[false, false], &[0.5]).unwrap();
    assert_eq!(none[0].tpr, None);
    assert!(roc_table(&none).to_csv().contains(",NA"));
}

#[test]
fn random_codebook_sandwich() {
    let book = Codebook::random_gaussian(64, 8, &mut stream(3, 0)).unwrap();
    let grid = [0.0, 0.5, 1.0, 2.0, 3.0];
    let check = good_code_check(&book, 4.0, &grid, &[0.0, 0.05, 0.2], 4000, 6).unwrap();
    assert_eq!(check.violations(), 0, "{check:?}");
    for &s in &grid {
        let (lo, hi) = good_code_bounds(4.0, 0.0, s).unwrap();
        assert_eq!(lo, hi);
    }
}

#[test]
fn posterior_mean_agrees_with_direct_bayes() {
    // exhaustive sum over supports written out independently for N = 3
    let p = Prior::bernoulli_gaussian(0.5, 2.0, 0.4).unwrap();
    let inst = generate_instance(&p, 3, 2, 12).unwrap();
    let post = MixturePosterior::compute(&inst.a, &inst.y, &iid(&p, 3)).unwrap();
    let (mut z, mut mean) = (0.0, DVector::zeros(3));
    for mask in 0..8usize {
        let on: Vec<usize> = (0..3).filter(|j| mask >> j & 1 == 1).collect();
        let prior_w: f64 = (0..3).map(|j| if mask >> j & 1 == 1 { 0.4 } else { 0.6 }).product();
        let mut mu = DVector::zeros(3);
        let mut cov = DMatrix::zeros(3, 3);
        for &j in &on {
            mu[j] = 0.5;
            cov[(j, j)] = 2.0;
        }
        let s = DMatrix::identity(2, 2) + &inst.a * &cov * inst.a.transpose();
        let r = &inst.y - &inst.a * &mu;
        let s_inv = s.clone().try_inverse().unwrap();
        let lik = (-0.5 * (r.transpose() * &s_inv * &r)[0]).exp() / s.determinant().sqrt();
        let cond = &mu + &cov * inst.a.transpose() * &s_inv * &r;
        z += prior_w * lik;
        mean += prior_w * lik * cond;
    }
    mean /= z;
    assert!((post.mean() - mean).amax() < 1e-12);
}
