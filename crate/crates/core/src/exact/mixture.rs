//! Exact posterior of `y = A x + w`, `w ~ N(0, I)`, under a product prior whose
//! entries are finite Gaussian mixtures.
//!
//! Conditioning on the component label of every entry leaves a linear-Gaussian
//! model, so the posterior is a mixture over all label assignments. For one
//! assignment with means `mu`, variances `d` and active set `a = {n : d_n > 0}`,
//! put `B = A_a diag(sqrt(d_a))` and `K = I_k + B^T B`. Then
//!
//! ```text
//! log p(y | labels) = -(M log 2pi + log det K + e^T e - (B^T e)^T K^{-1} B^T e) / 2,  e = y - A mu
//! E[x_a | y, labels]   = mu_a + sqrt(d_a) K^{-1} B^T e
//! Cov[x_a | y, labels] = diag(sqrt(d_a)) K^{-1} diag(sqrt(d_a))
//! ```
//!
//! which only factors `k x k` matrices (`k <= N`) instead of `M x M` ones and
//! stays well conditioned for slab variances of 1e6.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::log_sum_exp;
use crate::scalar_channel::{MixtureComponent, ScalarPrior};

/// Largest number of label assignments that will be enumerated.
pub const ENUMERATION_LIMIT: u128 = 1 << 20;

const CHUNK: usize = 1024;

/// Number of label assignments of a product prior.
pub fn assignment_count(priors: &[ScalarPrior<f64>]) -> u128 {
    priors.iter().map(|p| p.components().len() as u128).product()
}

/// `N` copies of one prior.
pub fn iid(prior: &ScalarPrior<f64>, n: usize) -> Vec<ScalarPrior<f64>> {
    vec![prior.clone(); n]
}

/// Exact posterior as a weighted list of Gaussian components.
#[derive(Debug, Clone)]
pub struct MixturePosterior {
    comps: Vec<Vec<MixtureComponent<f64>>>,
    /// Normalized log weights `log p(labels | y, A)`, one per assignment.
    log_weights: Vec<f64>,
    /// Conditional means, `N` values per assignment.
    means: Vec<f64>,
    log_evidence: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    inclusion: DVector<f64>,
}

struct Conditional {
    log_joint: f64,
    mean: DVector<f64>,
    /// Active indices and the covariance block on them.
    active: Vec<usize>,
    cov: DMatrix<f64>,
}

fn decode(mut index: usize, radix: &[usize], labels: &mut [usize]) {
    for (l, &r) in labels.iter_mut().zip(radix) {
        *l = index % r;
        index /= r;
    }
}

fn conditional(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    comps: &[Vec<MixtureComponent<f64>>],
    labels: &[usize],
    want_cov: bool,
) -> Result<Conditional> {
    let (m, n) = a.shape();
    let mut mu = DVector::zeros(n);
    let mut log_prior = 0.0;
    let mut active = Vec::new();
    for (j, (&l, cs)) in labels.iter().zip(comps).enumerate() {
        let c = cs[l];
        mu[j] = c.mean;
        log_prior += c.weight.ln();
        if c.variance > 0.0 {
            active.push(j);
        }
    }
    let e = y - a * &mu;
    let k = active.len();
    let sd: Vec<f64> = active.iter().map(|&j| comps[j][labels[j]].variance.sqrt()).collect();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    if k == 0 {
        return Ok(Conditional {
            log_joint: log_prior - m as f64 * half_log_2pi - 0.5 * e.norm_squared(),
            mean: mu,
            active,
            cov: DMatrix::zeros(0, 0),
        });
    }
    let b = DMatrix::from_fn(m, k, |i, c| a[(i, active[c])] * sd[c]);
    let mut gram = b.tr_mul(&b);
    for i in 0..k {
        gram[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(gram).ok_or_else(|| Error::RankDeficient("I + B^T B not positive definite".into()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().take(k).map(|d| d.ln()).sum::<f64>();
    let bte = b.tr_mul(&e);
    let u = chol.solve(&bte);
    let quad = e.norm_squared() - bte.dot(&u);
    let mut mean = mu;
    for (c, &j) in active.iter().enumerate() {
        mean[j] += sd[c] * u[c];
    }
    let cov = if want_cov {
        let inv = chol.inverse();
        DMatrix::from_fn(k, k, |r, c| sd[r] * inv[(r, c)] * sd[c])
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(Conditional {
        log_joint: log_prior - m as f64 * half_log_2pi - 0.5 * (log_det + quad),
        mean,
        active,
        cov,
    })
}

impl MixturePosterior {
    /// Enumerates every label assignment; `A` may have zero rows.
    pub fn compute(a: &DMatrix<f64>, y: &DVector<f64>, priors: &[ScalarPrior<f64>]) -> Result<Self> {
        let (m, n) = a.shape();
        if priors.len() != n || y.len() != m {
            return Err(Error::Dimension(format!(
                "A is {m}x{n}, y has {} entries, {} priors given",
                y.len(),
                priors.len()
            )));
        }
        let count = assignment_count(priors);
        if count > ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard { count, limit: ENUMERATION_LIMIT });
        }
        let count = count as usize;
        let comps: Vec<Vec<MixtureComponent<f64>>> = priors.iter().map(|p| p.components()).collect();
        let radix: Vec<usize> = comps.iter().map(|c| c.len()).collect();

        // pass 1: weights and conditional means
        let first: Vec<(f64, DVector<f64>)> = (0..count)
            .into_par_iter()
            .map_init(
                || vec![0; n],
                |labels, i| {
                    decode(i, &radix, labels);
                    conditional(a, y, &comps, labels, false).map(|c| (c.log_joint, c.mean))
                },
            )
            .collect::<Result<_>>()?;
        let log_joint: Vec<f64> = first.iter().map(|(l, _)| *l).collect();
        let log_evidence = log_sum_exp(&log_joint);
        if !log_evidence.is_finite() {
            return Err(Error::NonFinite("mixture posterior evidence"));
        }
        let log_weights: Vec<f64> = log_joint.iter().map(|l| l - log_evidence).collect();
        let mut means = Vec::with_capacity(count * n);
        let mut mean = DVector::zeros(n);
        let mut inclusion: DVector<f64> = DVector::zeros(n);
        let mut labels = vec![0; n];
        for (i, ((_, mu), lw)) in first.iter().zip(&log_weights).enumerate() {
            let w = lw.exp();
            means.extend(mu.iter());
            mean.axpy(w, mu, 1.0);
            decode(i, &radix, &mut labels);
            for j in 0..n {
                if comps[j][labels[j]].nonzero {
                    inclusion[j] += w;
                }
            }
        }

        // pass 2: law of total covariance, accumulated in fixed chunks so the
        // summation order does not depend on scheduling
        let partials: Vec<DMatrix<f64>> = (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut acc = DMatrix::zeros(n, n);
                let mut labels = vec![0; n];
                for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(count) {
                    let w = log_weights[i].exp();
                    if w == 0.0 {
                        continue;
                    }
                    decode(i, &radix, &mut labels);
                    let c = conditional(a, y, &comps, &labels, true)?;
                    for (r, &jr) in c.active.iter().enumerate() {
                        for (s, &js) in c.active.iter().enumerate() {
                            acc[(jr, js)] += w * c.cov[(r, s)];
                        }
                    }
                    let d = &c.mean - &mean;
                    acc.ger(w, &d, &d, 1.0);
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut covariance = DMatrix::zeros(n, n);
        for p in &partials {
            covariance += p;
        }
        // exact symmetry
        covariance = (&covariance + covariance.transpose()) * 0.5;

        Ok(Self { comps, log_weights, means, log_evidence, mean, covariance, inclusion: inclusion.map(|g: f64| g.min(1.0)) })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    /// `log p(y | A)`.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.log_weights.iter().map(|l| l.exp()).sum()
    }

    /// Component label of every entry for assignment `i`.
    pub fn labels(&self, i: usize) -> Vec<usize> {
        let radix: Vec<usize> = self.comps.iter().map(|c| c.len()).collect();
        let mut labels = vec![0; self.dim()];
        decode(i, &radix, &mut labels);
        labels
    }

    /// Nonzero pattern of assignment `i` (the support for Bernoulli-Gaussian priors).
    pub fn support(&self, i: usize) -> Vec<bool> {
        self.labels(i).iter().zip(&self.comps).map(|(&l, c)| c[l].nonzero).collect()
    }

    pub fn component_mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `P(x_n != 0 | y, A)`.
    pub fn inclusion(&self) -> &DVector<f64> {
        &self.inclusion
    }

    /// `tr Cov(x | y, A)`.
    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_logpdf(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let m = y.len() as f64;
        let chol = Cholesky::new(cov.clone()).unwrap();
        let ld = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + ld + y.dot(&chol.solve(y)))
    }

    #[test]
    fn two_entry_weights_match_direct_bayes() {
        // direct M x M evaluation of N(mu A u, I + s2 A_u A_u^T) per support
        let a = DMatrix::from_row_slice(3, 2, &[0.3, -0.7, 1.1, 0.2, -0.4, 0.9]);
        let y = DVector::from_vec(vec![0.5, -1.2, 2.0]);
        let (mu, s2, g) = (0.4, 2.0, 0.5);
        let p = ScalarPrior::bernoulli_gaussian(mu, s2, g).unwrap();
        let post = MixturePosterior::compute(&a, &y, &iid(&p, 2)).unwrap();
        let mut direct = Vec::new();
        for i in 0..4 {
            let u = post.support(i);
            let au = DMatrix::from_fn(3, 2, |r, c| if u[c] { a[(r, c)] } else { 0.0 });
            let mean = &au * DVector::from_element(2, mu);
            let cov = DMatrix::identity(3, 3) + &au * au.transpose() * s2;
            direct.push(normal_logpdf(&(&y - mean), &cov) + 2.0 * 0.5f64.ln());
        }
        let z = log_sum_exp(&direct);
        for i in 0..4 {
            assert!((post.log_weights()[i] - (direct[i] - z)).abs() < 1e-12);
        }
        assert!((post.log_evidence() - z).abs() < 1e-12);
        assert!((post.weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_returns_prior() {
        let p = ScalarPrior::bernoulli_gaussian(1.0, 2.0, 0.3).unwrap();
        let post = MixturePosterior::compute(&DMatrix::zeros(4, 3), &DVector::from_element(4, 0.7), &iid(&p, 3)).unwrap();
        for i in 0..post.len() {
            let k = post.support(i).iter().filter(|&&b| b).count() as i32;
            let prior_w = 0.3f64.powi(k) * 0.7f64.powi(3 - k);
            assert!((post.log_weights()[i].exp() - prior_w).abs() < 1e-12);
        }
        for j in 0..3 {
            assert!((post.mean()[j] - p.mean()).abs() < 1e-12);
            assert!((post.covariance()[(j, j)] - p.variance()).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_prior_matches_linear_conditioning() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.3, -1.0, 0.8]);
        let y = DVector::from_vec(vec![0.4, -0.9]);
        let p = ScalarPrior::gaussian(0.0, 2.0).unwrap();
        let post = MixturePosterior::compute(&a, &y, &iid(&p, 3)).unwrap();
        let prec = DMatrix::identity(3, 3) * 0.5 + a.transpose() * &a;
        let cov = prec.clone().try_inverse().unwrap();
        let mean = &cov * a.transpose() * &y;
        assert!((post.mean() - mean).amax() < 1e-12);
        assert!((post.covariance() - cov).amax() < 1e-12);
    }

    #[test]
    fn empty_observation() {
        let p = ScalarPrior::<f64>::binary();
        let post = MixturePosterior::compute(&DMatrix::zeros(0, 2), &DVector::zeros(0), &iid(&p, 2)).unwrap();
        assert_eq!(post.log_evidence(), 0.0);
        assert!((post.trace() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn guard() {
        let p = ScalarPrior::<f64>::binary();
        let r = MixturePosterior::compute(&DMatrix::zeros(1, 21), &DVector::zeros(1), &iid(&p, 21));
        assert!(matches!(r, Err(Error::EnumerationGuard { .. })));
    }
}
