//! Finite codebooks on the vector Gaussian channel `Y = sqrt(snr) X + W`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{log_sum_exp, Real};
use crate::rng::stream;
use crate::stats::McEstimate;

/// Largest codebook accepted by [`codebook_mmse_mi`].
pub const CODEBOOK_LIMIT: usize = 1 << 16;

/// `L` codewords in `R^N`, used with equal probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// One codeword per row (`L x N`).
    codewords: DMatrix<f64>,
}

impl Codebook {
    pub fn new(codewords: DMatrix<f64>) -> Result<Self> {
        let (l, n) = codewords.shape();
        if l == 0 || n == 0 {
            return Err(Error::InvalidArgument("codebook needs at least one codeword of positive length".into()));
        }
        if l > CODEBOOK_LIMIT {
            return Err(Error::EnumerationGuard { count: l as u128, limit: CODEBOOK_LIMIT as u128 });
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codeword"));
        }
        Ok(Self { codewords })
    }

    /// `L` iid standard Gaussian codewords rescaled to average power exactly 1.
    pub fn random_gaussian<R: Rng + ?Sized>(l: usize, n: usize, rng: &mut R) -> Result<Self> {
        let mut c = DMatrix::zeros(l, n);
        for i in 0..l {
            for j in 0..n {
                c[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut book = Self::new(c)?;
        let p = book.power();
        book.codewords /= p.sqrt();
        Ok(book)
    }

    pub fn len(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.codewords.ncols()
    }

    pub fn codewords(&self) -> &DMatrix<f64> {
        &self.codewords
    }

    /// `(1/N) E||X||^2` under the uniform codeword law.
    pub fn power(&self) -> f64 {
        self.codewords.norm_squared() / (self.len() * self.dim()) as f64
    }

    pub fn is_power_constrained(&self) -> bool {
        self.power() <= 1.0 + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookEstimate {
    /// Per-dimension MMSE.
    pub mmse: McEstimate,
    /// Per-dimension mutual information (nats).
    pub mi: McEstimate,
}

/// Monte Carlo `M_X(snr)` and `I_X(snr)` with the posterior over codewords
/// computed exactly. Trial `t` draws `(J, W)` from stream `(seed, t)`, so calls
/// that share a seed use common random numbers across snr values.
///
/// The MMSE uses the posterior trace `E[tr Cov(X | Y)] / N`, which has the same
/// mean as the squared error of the posterior mean and a smaller variance.
pub fn codebook_mmse_mi(codebook: &Codebook, snr: f64, trials: usize, seed: u64) -> Result<CodebookEstimate> {
    if !(snr >= 0.0) || !snr.is_finite() {
        return Err(Error::InvalidArgument(format!("snr must be finite and >= 0 (got {snr})")));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    let (l, n) = codebook.codewords.shape();
    let rs = snr.sqrt();
    let log_l = (l as f64).ln();
    let samples: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let j = rng.random_range(0..l);
            let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = codebook.codewords.row(j).transpose() * rs + w;
            let loglik: Vec<f64> = (0..l)
                .map(|i| -0.5 * (&y - codebook.codewords.row(i).transpose() * rs).norm_squared())
                .collect();
            let lse = log_sum_exp(&loglik);
            let post: Vec<f64> = loglik.iter().map(|v| (v - lse).exp()).collect();
            let mut mean = DVector::zeros(n);
            for (i, &p) in post.iter().enumerate() {
                mean.axpy(p, &codebook.codewords.row(i).transpose(), 1.0);
            }
            let spread: f64 = post
                .iter()
                .enumerate()
                .map(|(i, &p)| p * (codebook.codewords.row(i).transpose() - &mean).norm_squared())
                .sum();
            (spread / n as f64, (loglik[j] - (lse - log_l)) / n as f64)
        })
        .collect();
    let (mmse, mi): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    Ok(CodebookEstimate { mmse: McEstimate::from_samples(&mmse), mi: McEstimate::from_samples(&mi) })
}

/// MMSE sandwich `(lower, upper)` at `s` for any law with average power at most
/// 1 whose information at `snr` is within `eps` nats of `log(1 + snr) / 2`:
/// `exp(-2 eps) / (1 + s) - (1 - exp(-2 eps)) / (snr - s) <= M(s) <= 1 / (1 + s)`.
pub fn good_code_bounds<T: Real>(snr: T, eps: T, s: T) -> Result<(T, T)> {
    if !(s >= T::zero()) || !(s < snr) {
        return Err(Error::InvalidArgument(format!("need 0 <= s < snr (got s={s}, snr={snr})")));
    }
    if !(eps >= T::zero()) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0 (got {eps})")));
    }
    let upper = T::one() / (T::one() + s);
    let decay = (T::lit(-2.0) * eps).exp();
    let lower = decay * upper - (T::one() - decay) / (snr - s);
    Ok((lower, upper))
}

/// One `(s, eps)` cell of a sandwich check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichRow {
    pub s: f64,
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub mmse: McEstimate,
    /// True when the measured MMSE lies in `[lower, upper]` up to 3 standard errors.
    pub holds: bool,
}

/// Result of checking the MMSE sandwich on one codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCheck {
    pub snr: f64,
    pub mi_at_snr: McEstimate,
    /// Smallest `eps` compatible with the measured information: `log(1+snr)/2 - I`.
    pub eps_min: f64,
    pub rows: Vec<SandwichRow>,
}

impl SandwichCheck {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds).count()
    }
}

/// Measures the codebook's information at `snr`, then for each `eps` offset
/// `d` the bounds at `eps = eps_min + 3 se(I) + d` are compared with the
/// measured MMSE at every `s` in `s_grid`. The `3 se(I)` margin keeps the
/// information hypothesis valid despite Monte Carlo error in `I`.
pub fn good_code_check(
    codebook: &Codebook,
    snr: f64,
    s_grid: &[f64],
    eps_offsets: &[f64],
    trials: usize,
    seed: u64,
) -> Result<SandwichCheck> {
    if !codebook.is_power_constrained() {
        return Err(Error::InvalidArgument(format!("codebook power {} exceeds 1", codebook.power())));
    }
    let at_snr = codebook_mmse_mi(codebook, snr, trials, seed)?;
    let eps_min = (0.5 * snr.ln_1p() - at_snr.mi.mean).max(0.0);
    let mut rows = Vec::new();
    for &s in s_grid {
        let est = codebook_mmse_mi(codebook, s, trials, seed)?.mmse;
        for &d in eps_offsets {
            let eps = eps_min + 3.0 * at_snr.mi.std_err + d;
            let (lower, upper) = good_code_bounds(snr, eps, s)?;
            let slack = 3.0 * est.std_err;
            rows.push(SandwichRow {
                s,
                eps,
                lower,
                upper,
                mmse: est,
                holds: est.mean + slack >= lower && est.mean - slack <= upper,
            });
        }
    }
    Ok(SandwichCheck { snr, mi_at_snr: at_snr.mi, eps_min, rows })
}
