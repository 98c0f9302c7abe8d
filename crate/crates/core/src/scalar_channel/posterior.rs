use crate::error::{Error, Result};
use crate::real::Real;

use super::prior::{MixtureComponent, ScalarPrior};

/// Parameters of a Bernoulli-Gaussian posterior `BG(mu_n, sigma2_n, gamma_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgPosteriorParams<T> {
    pub mu_n: T,
    pub sigma2_n: T,
    /// Posterior inclusion probability `P(X != 0 | y)`.
    pub gamma_n: T,
}

impl<T: Real> BgPosteriorParams<T> {
    pub fn mean(&self) -> T {
        self.gamma_n * self.mu_n
    }

    pub fn variance(&self) -> T {
        let g = self.gamma_n;
        g * (T::one() - g) * self.mu_n * self.mu_n + g * self.sigma2_n
    }
}

/// Closed-form BG posterior for `y = sqrt(s) x + w`, `w ~ N(0, 1)`.
///
/// The inclusion odds are evaluated in the log domain; the exponent overflows
/// in linear arithmetic once `s * sigma2 * y^2` is a few hundred.
pub fn bg_posterior_update<T: Real>(prior: &ScalarPrior<T>, s: T, y: T) -> Result<BgPosteriorParams<T>> {
    let (mu, sigma2, gamma) = match prior {
        ScalarPrior::BernoulliGaussian { mu, sigma2, gamma } => (*mu, *sigma2, *gamma),
        _ => return Err(Error::InvalidPrior("bg_posterior_update needs a Bernoulli-Gaussian prior".into())),
    };
    if !(s >= T::zero()) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("snr must be finite and >= 0 (got {s})")));
    }
    let two = T::lit(2.0);
    let rs = s.sqrt();
    let u = T::one() + s * sigma2;
    let mu_n = mu + rs * sigma2 / u * (y - rs * mu);
    let sigma2_n = sigma2 / u;
    let exponent = (s * mu * mu - two * rs * mu * y - s * sigma2 * y * y) / (two * u);
    let log_odds_zero = ((T::one() - gamma) / gamma).ln() + T::lit(0.5) * u.ln() + exponent;
    let gamma_n = logistic_complement(log_odds_zero);
    if !mu_n.is_finite() || !gamma_n.is_finite() {
        return Err(Error::NonFinite("bg_posterior_update"));
    }
    Ok(BgPosteriorParams { mu_n, sigma2_n, gamma_n })
}

/// `1 / (1 + exp(t))` without overflow.
#[inline]
fn logistic_complement<T: Real>(t: T) -> T {
    if t > T::zero() {
        let e = (-t).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + t.exp())
    }
}

/// Posterior summary of `X` given one scalar channel output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarPosterior<T> {
    pub mean: T,
    pub variance: T,
    /// `P(X != 0 | y)`.
    pub inclusion: T,
    /// `log p(y)`.
    pub log_density: T,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ChannelComponent<T> {
    pub log_weight: T,
    pub weight: T,
    pub center: T,
    pub out_var: T,
    /// `s * v_k`
    pub snr_var: T,
    pub log_norm: T,
    pub prior_mean: T,
    pub gain: T,
    pub post_var: T,
    pub nonzero: bool,
}

/// Mixture prior seen through `y = sqrt(s) x + w` at a fixed `s`.
#[derive(Debug, Clone)]
pub struct ScalarChannel<T> {
    pub(crate) s: T,
    pub(crate) comps: Vec<ChannelComponent<T>>,
}

impl<T: Real> ScalarChannel<T> {
    pub fn new(prior: &ScalarPrior<T>, s: T) -> Result<Self> {
        if !(s >= T::zero()) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("snr must be finite and >= 0 (got {s})")));
        }
        let rs = s.sqrt();
        let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
        let comps = prior
            .components()
            .into_iter()
            .map(|MixtureComponent { weight, mean, variance, nonzero }| {
                let out_var = T::one() + s * variance;
                ChannelComponent {
                    log_weight: weight.ln(),
                    weight,
                    center: rs * mean,
                    out_var,
                    snr_var: s * variance,
                    log_norm: -half_log_2pi - T::lit(0.5) * out_var.ln(),
                    prior_mean: mean,
                    gain: rs * variance / out_var,
                    post_var: variance / out_var,
                    nonzero,
                }
            })
            .collect();
        Ok(Self { s, comps })
    }

    pub fn snr(&self) -> T {
        self.s
    }

    #[inline]
    pub(crate) fn log_joint(&self, k: usize, y: T) -> T {
        let c = &self.comps[k];
        let d = y - c.center;
        c.log_weight + c.log_norm - T::lit(0.5) * d * d / c.out_var
    }

    pub fn log_density(&self, y: T) -> T {
        let m = (0..self.comps.len()).fold(T::neg_infinity(), |m, k| m.max(self.log_joint(k, y)));
        let s = (0..self.comps.len()).fold(T::zero(), |s, k| s + (self.log_joint(k, y) - m).exp());
        m + s.ln()
    }

    pub fn posterior(&self, y: T) -> ScalarPosterior<T> {
        let log_density = self.log_density(y);
        let mut mean = T::zero();
        let mut inclusion = T::zero();
        for (k, c) in self.comps.iter().enumerate() {
            let r = (self.log_joint(k, y) - log_density).exp();
            mean = mean + r * (c.prior_mean + c.gain * (y - c.center));
            if c.nonzero {
                inclusion = inclusion + r;
            }
        }
        let mut variance = T::zero();
        for (k, c) in self.comps.iter().enumerate() {
            let r = (self.log_joint(k, y) - log_density).exp();
            let d = c.prior_mean + c.gain * (y - c.center) - mean;
            variance = variance + r * (c.post_var + d * d);
        }
        ScalarPosterior { mean, variance, inclusion: inclusion.min(T::one()), log_density }
    }

    /// `sum_k r_k(y) log r_k(y)` over the component responsibilities.
    pub(crate) fn neg_label_entropy(&self, y: T) -> T {
        let ld = self.log_density(y);
        (0..self.comps.len()).fold(T::zero(), |acc, k| {
            let lr = self.log_joint(k, y) - ld;
            let r = lr.exp();
            if r > T::zero() {
                acc + r * lr
            } else {
                acc
            }
        })
    }
}
