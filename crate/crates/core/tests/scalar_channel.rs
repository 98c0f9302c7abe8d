use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use slm_core::rng::stream;
use slm_core::scalar_channel::*;
use slm_core::Prior;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (y - mean).powi(2) / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Monte Carlo over `chunks * per_chunk` draws of `(X, Y)` for a Bernoulli-
/// Gaussian law, with the posterior written out from Bayes' rule.
fn bg_monte_carlo(mu: f64, s2: f64, g: f64, s: f64, chunks: u64, per_chunk: usize) -> (Vec<f64>, Vec<f64>) {
    let rs = s.sqrt();
    let per: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(99, c);
            (0..per_chunk).map(move |_| {
                let on = rng.random::<f64>() < g;
                let x = if on { mu + s2.sqrt() * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
                let y = rs * x + rng.sample::<f64, _>(StandardNormal);
                let l0 = (1.0 - g).ln() + log_normal_pdf(y, 0.0, 1.0);
                let l1 = g.ln() + log_normal_pdf(y, rs * mu, 1.0 + s * s2);
                let top = l0.max(l1);
                let log_py = top + ((l0 - top).exp() + (l1 - top).exp()).ln();
                let p1 = (l1 - log_py).exp();
                let slab_mean = mu + rs * s2 / (1.0 + s * s2) * (y - rs * mu);
                let err = (x - p1 * slab_mean).powi(2);
                let log_lik = log_normal_pdf(y, rs * x, 1.0);
                (err, log_lik - log_py)
            })
        })
        .collect();
    per.into_iter().unzip()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn prior_moment_examples() {
    let m = prior_moments(&Prior::bernoulli_gaussian(0.0, 1e6, 0.2).unwrap());
    assert_eq!(m.variance, 2e5);
    let g = prior_moments(&Prior::gaussian(0.0, 1.0).unwrap());
    assert_eq!((g.mean, g.variance, g.fourth_moment), (0.0, 1.0, 3.0));
    let b = prior_moments(&Prior::binary());
    assert_eq!((b.mean, b.variance, b.fourth_moment), (0.0, 1.0, 1.0));
    let p = Prior::bernoulli_gaussian(0.7, 2.0, 0.3).unwrap();
    let m = prior_moments(&p);
    assert!((m.mean - 0.21).abs() < 1e-15);
    assert!((m.variance - (0.3 * 0.7 * 0.49 + 0.6)).abs() < 1e-14);
}

#[test]
fn bg_posterior_examples() {
    let p = Prior::bernoulli_gaussian(0.0, 1.0, 0.2).unwrap();
    let zero = bg_posterior_update(&p, 1.0, 0.0).unwrap();
    assert!((zero.gamma_n - 1.0 / (1.0 + 4.0 * 2f64.sqrt())).abs() < 1e-15);
    // two-density Bayes ratio
    let y: f64 = 5.0;
    let on = 0.2 * (-y * y / 4.0).exp() / 2f64.sqrt();
    let off = 0.8 * (-y * y / 2.0).exp();
    let five = bg_posterior_update(&p, 1.0, y).unwrap();
    assert!((five.gamma_n - on / (on + off)).abs() < 1e-12);
    assert!((five.mu_n - 2.5).abs() < 1e-15 && (five.sigma2_n - 0.5).abs() < 1e-15);
    let same = bg_posterior_update(&p, 0.0, 3.0).unwrap();
    assert_eq!((same.mu_n, same.sigma2_n, same.gamma_n), (0.0, 1.0, 0.2));
    // the exponent would overflow in linear arithmetic
    let wide = Prior::bernoulli_gaussian(0.0, 1e6, 0.2).unwrap();
    let far = bg_posterior_update(&wide, 1.0, 1e3).unwrap();
    assert_eq!(far.gamma_n, 1.0);
}

#[test]
fn gaussian_closed_forms() {
    for (mean, var) in [(0.0, 1.0), (2.0, 0.25), (-1.0, 7.0)] {
        let p = Prior::gaussian(mean, var).unwrap();
        for s in [0.0, 0.01, 0.5, 1.0, 3.0, 100.0] {
            assert!((scalar_mmse(&p, s).unwrap() - var / (1.0 + s * var)).abs() < 1e-9);
            assert!((scalar_mi(&p, s).unwrap() - 0.5 * (s * var).ln_1p()).abs() < 1e-9);
        }
    }
    // the generic quadrature path agrees with the closed form
    let near = Prior::BernoulliGaussian { mu: 0.5, sigma2: 3.0, gamma: 1.0 - 1e-15 };
    let exact = Prior::gaussian(0.5, 3.0).unwrap();
    for s in [0.1, 1.0, 10.0] {
        assert!((scalar_mmse(&near, s).unwrap() - scalar_mmse(&exact, s).unwrap()).abs() < 1e-9);
        assert!((scalar_mi(&near, s).unwrap() - scalar_mi(&exact, s).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn mmse_matches_monte_carlo() {
    let p = Prior::bernoulli_gaussian(0.0, 1.0, 0.5).unwrap();
    let (errs, _) = bg_monte_carlo(0.0, 1.0, 0.5, 2.0, 64, 50_000);
    let (m, se) = mean_se(&errs);
    let q = scalar_mmse(&p, 2.0).unwrap();
    assert!((q - m).abs() < 3.0 * se, "quadrature {q} vs MC {m} ± {se}");
}

#[test]
fn mutual_information_matches_monte_carlo() {
    for (mu, s2, g, s) in [(0.0, 1.0, 0.5, 1.0), (0.0, 1e6, 0.2, 1e-4), (1.0, 1.0, 0.3, 2.0)] {
        let p = Prior::bernoulli_gaussian(mu, s2, g).unwrap();
        let (_, lr) = bg_monte_carlo(mu, s2, g, s, 32, 50_000);
        let (m, se) = mean_se(&lr);
        let q = scalar_mi(&p, s).unwrap();
        assert!((q - m).abs() < 3.0 * se, "BG({mu},{s2},{g}) s={s}: quadrature {q} vs MC {m} ± {se}");
    }
}

#[test]
fn immse_on_builtin_priors() {
    let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
    let sparse = check_immse(&Prior::bernoulli_gaussian(0.0, 1.0, 0.2).unwrap(), &grid).unwrap();
    assert!(sparse.max_deviation < 1e-3, "{sparse:?}");
    for (name, p) in builtin_priors() {
        if name == "flagship" {
            continue;
        }
        let c = check_immse(&p, &grid).unwrap();
        assert!(c.max_deviation < 1e-3, "{name}: {c:?}");
    }
}

#[test]
fn k_transform_is_non_decreasing() {
    let grid: Vec<f64> = (0..50).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 49.0)).collect();
    for (name, p) in builtin_priors() {
        let k: Vec<f64> = grid.iter().map(|&s| k_transform(&p, s).map_err(|e| format!("{name} s={s}: {e}")).unwrap()).collect();
        for (i, w) in k.windows(2).enumerate() {
            assert!(w[1] >= w[0] - 1e-6, "{name}: k drops from {} to {} at s={}", w[0], w[1], grid[i + 1]);
        }
    }
    let p = Prior::bernoulli_gaussian(0.0, 1.0, 0.5).unwrap();
    assert!(k_transform(&p, 0.1).unwrap() <= k_transform(&p, 1.0).unwrap());
}

#[test]
fn gaussian_law_is_extremal() {
    let grid = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0];
    for (name, p) in builtin_priors() {
        let z = Prior::gaussian(p.mean(), p.variance()).unwrap();
        for &s in &grid {
            assert!(scalar_mmse(&p, s).unwrap() <= scalar_mmse(&z, s).unwrap() + 1e-12, "{name} at {s}");
            assert!(scalar_mi(&p, s).unwrap() <= scalar_mi(&z, s).unwrap() + 1e-12, "{name} at {s}");
        }
    }
}

#[test]
fn curves_have_the_right_shape() {
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
    for (name, p) in builtin_priors() {
        let c = ScalarCurve::compute(&p, &grid).unwrap();
        assert!(c.shape_violation() < 1e-9, "{name}: {}", c.shape_violation());
    }
    let c = ScalarCurve::compute(&Prior::binary(), &[0.0, 1.0]).unwrap();
    assert!(c.to_table().to_csv().starts_with("s,I,M\n0,0,1\n"));
    assert!(ScalarCurve::compute(&Prior::binary(), &[1.0, 0.5]).is_err());
}

#[test]
fn single_precision_instantiation() {
    let p = ScalarPrior::<f32>::bernoulli_gaussian(0.0, 1.0, 0.2).unwrap();
    let m32 = scalar_mmse(&p, 1.0f32).unwrap();
    let m64 = scalar_mmse(&Prior::bernoulli_gaussian(0.0, 1.0, 0.2).unwrap(), 1.0).unwrap();
    assert!((m32 as f64 - m64).abs() < 1e-5);
}
