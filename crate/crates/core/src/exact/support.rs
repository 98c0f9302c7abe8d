//! Bernoulli-Gaussian support posteriors, detection curves and exact-MMSE Monte Carlo.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linear_model::{sample_instance, LinearModelInstance};
use crate::rng::stream;
use crate::scalar_channel::ScalarPrior;
use crate::stats::McEstimate;
use crate::table::{format_f64, Table};

use super::mixture::{iid, MixturePosterior};

/// Posterior over supports `u in {0, 1}^N`; assignment `i` has support
/// [`MixturePosterior::support`]`(i)`.
pub type SupportPosterior = MixturePosterior;

/// Exact posterior for a Bernoulli-Gaussian instance (`N <= 20`).
pub fn support_posterior(instance: &LinearModelInstance, prior: &ScalarPrior<f64>) -> Result<SupportPosterior> {
    if !prior.is_bernoulli_gaussian() {
        return Err(Error::InvalidPrior("support posterior needs a Bernoulli-Gaussian prior".into()));
    }
    MixturePosterior::compute(&instance.a, &instance.y, &iid(prior, instance.n()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactMarginal {
    pub mean: f64,
    pub variance: f64,
    /// `P(x_n != 0 | y, A)`.
    pub gamma: f64,
}

pub fn exact_marginals(posterior: &MixturePosterior) -> Vec<ExactMarginal> {
    (0..posterior.dim())
        .map(|j| ExactMarginal {
            mean: posterior.mean()[j],
            variance: posterior.covariance()[(j, j)].max(0.0),
            gamma: posterior.inclusion()[j],
        })
        .collect()
}

/// Monte Carlo estimate of `(1/N) E||x - E[x | y, A]||^2` over fresh instances;
/// trial `t` draws from stream `(seed, t)`.
pub fn exact_mmse_mc(prior: &ScalarPrior<f64>, n: usize, m: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("need N >= 1 and trials >= 1".into()));
    }
    if m == 0 {
        return Ok(McEstimate::exact(prior.variance()));
    }
    let priors = iid(prior, n);
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = sample_instance(prior, n, m, &mut stream(seed, t as u64), seed)?;
            let post = MixturePosterior::compute(&inst.a, &inst.y, &priors)?;
            Ok((post.mean() - &inst.x_true).norm_squared() / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_samples(&errors))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub lambda: f64,
    /// `None` when there are no true negatives to rate against.
    pub fpr: Option<f64>,
    /// `None` when there are no true positives to rate against.
    pub tpr: Option<f64>,
}

/// Declares `n` active when `gamma_n >= lambda` and scores against the true support.
pub fn detection_roc(gammas: &[f64], truth: &[bool], thresholds: &[f64]) -> Result<Vec<RocPoint>> {
    if gammas.len() != truth.len() {
        return Err(Error::Dimension(format!("{} inclusion probabilities vs {} labels", gammas.len(), truth.len())));
    }
    if gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::InvalidArgument("inclusion probabilities must lie in [0, 1]".into()));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    Ok(thresholds
        .iter()
        .map(|&lambda| {
            let (mut tp, mut fp) = (0usize, 0usize);
            for (&g, &t) in gammas.iter().zip(truth) {
                if g >= lambda {
                    if t {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            RocPoint {
                lambda,
                fpr: (neg > 0).then(|| fp as f64 / neg as f64),
                tpr: (pos > 0).then(|| tp as f64 / pos as f64),
            }
        })
        .collect())
}

/// `count` thresholds spread uniformly over `[0, 1]`.
pub fn uniform_thresholds(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

/// Columns `lambda,fpr,tpr`; undefined rates are written as `NA`.
pub fn roc_table(points: &[RocPoint]) -> Table {
    let mut t = Table::new(&["lambda", "fpr", "tpr"]);
    let cell = |v: Option<f64>| v.map(format_f64).unwrap_or_else(|| "NA".into());
    for p in points {
        t.push(vec![format_f64(p.lambda), cell(p.fpr), cell(p.tpr)]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_model::generate_instance;

    #[test]
    fn roc_endpoints_and_separation() {
        let g = [0.9, 0.8, 0.1, 0.0];
        let t = [true, true, false, false];
        let r = detection_roc(&g, &t, &[0.0, 0.5, 1.5]).unwrap();
        assert_eq!((r[0].fpr, r[0].tpr), (Some(1.0), Some(1.0)));
        assert_eq!((r[1].fpr, r[1].tpr), (Some(0.0), Some(1.0)));
        assert_eq!((r[2].fpr, r[2].tpr), (Some(0.0), Some(0.0)));
        let r = detection_roc(&g, &[true; 4], &[0.5]).unwrap();
        assert_eq!(r[0].fpr, None);
        assert!(detection_roc(&[1.2], &[true], &[0.5]).is_err());
    }

    #[test]
    fn symmetric_instance_has_equal_inclusions() {
        // identical columns make the entries exchangeable
        let p = ScalarPrior::bernoulli_gaussian(0.0, 1.0, 0.3).unwrap();
        let mut inst = generate_instance(&p, 3, 4, 0).unwrap();
        let col = inst.a.column(0).clone_owned();
        for j in 0..3 {
            inst.a.set_column(j, &col);
        }
        let post = support_posterior(&inst, &p).unwrap();
        let m = exact_marginals(&post);
        assert!((m[0].gamma - m[1].gamma).abs() < 1e-12 && (m[1].gamma - m[2].gamma).abs() < 1e-12);
    }

    #[test]
    fn near_certain_inclusion() {
        let p = ScalarPrior::bernoulli_gaussian(0.0, 1.0, 1.0 - 1e-12).unwrap();
        let inst = generate_instance(&p, 4, 3, 1).unwrap();
        let post = support_posterior(&inst, &p).unwrap();
        let full = (0..post.len()).find(|&i| post.support(i).iter().all(|&b| b)).unwrap();
        assert!(post.log_weights()[full].exp() > 1.0 - 1e-9);
    }

    #[test]
    fn mmse_without_observations_is_variance() {
        let p = ScalarPrior::bernoulli_gaussian(0.0, 100.0, 0.2).unwrap();
        let e = exact_mmse_mc(&p, 5, 0, 10, 0).unwrap();
        assert_eq!((e.mean, e.std_err), (20.0, 0.0));
    }
}
