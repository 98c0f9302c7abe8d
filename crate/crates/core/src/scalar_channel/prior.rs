use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::real::Real;

/// Univariate signal law `p_X`.
///
/// All three families are finite Gaussian mixtures; [`ScalarPrior::components`]
/// exposes that form and every posterior computation in the crate runs on it.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarPrior<T> {
    Gaussian { mean: T, variance: T },
    /// `(1 - gamma) * delta_0 + gamma * N(mu, sigma2)`
    BernoulliGaussian { mu: T, sigma2: T, gamma: T },
    FiniteAtoms { atoms: Vec<T>, weights: Vec<T> },
}

/// One Gaussian component (`variance == 0` is a point mass).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: T,
    pub variance: T,
    /// False only for a point mass at zero.
    pub nonzero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorMoments<T> {
    pub mean: T,
    pub variance: T,
    /// Raw fourth moment `E[X^4]`.
    pub fourth_moment: T,
}

impl<T: Real> ScalarPrior<T> {
    pub fn gaussian(mean: T, variance: T) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance < T::zero() {
            return Err(Error::InvalidPrior(format!(
                "gaussian needs finite mean and variance >= 0 (got {mean}, {variance})"
            )));
        }
        Ok(Self::Gaussian { mean, variance })
    }

    pub fn bernoulli_gaussian(mu: T, sigma2: T, gamma: T) -> Result<Self> {
        if !mu.is_finite() || !sigma2.is_finite() || sigma2 < T::zero() {
            return Err(Error::InvalidPrior(format!(
                "bernoulli-gaussian needs finite mu and sigma2 >= 0 (got {mu}, {sigma2})"
            )));
        }
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::InvalidPrior(format!(
                "bernoulli-gaussian inclusion probability must lie in (0, 1) (got {gamma})"
            )));
        }
        Ok(Self::BernoulliGaussian { mu, sigma2, gamma })
    }

    pub fn finite_atoms(atoms: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidPrior(format!(
                "finite prior needs matching non-empty atoms/weights (got {} and {})",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidPrior("atoms must be finite".into()));
        }
        if weights.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidPrior("weights must be finite and nonnegative".into()));
        }
        let total = weights.iter().fold(T::zero(), |s, &w| s + w);
        if (total - T::one()).abs() > T::tol(1e-12) {
            return Err(Error::InvalidPrior(format!("weights sum to {total}, not 1")));
        }
        Ok(Self::FiniteAtoms { atoms, weights })
    }

    /// Uniform prior on `{-1, +1}`.
    pub fn binary() -> Self {
        Self::FiniteAtoms {
            atoms: vec![-T::one(), T::one()],
            weights: vec![T::lit(0.5), T::lit(0.5)],
        }
    }

    pub fn components(&self) -> Vec<MixtureComponent<T>> {
        match self {
            Self::Gaussian { mean, variance } => vec![MixtureComponent {
                weight: T::one(),
                mean: *mean,
                variance: *variance,
                nonzero: !(mean.is_zero() && variance.is_zero()),
            }],
            Self::BernoulliGaussian { mu, sigma2, gamma } => vec![
                MixtureComponent { weight: T::one() - *gamma, mean: T::zero(), variance: T::zero(), nonzero: false },
                MixtureComponent {
                    weight: *gamma,
                    mean: *mu,
                    variance: *sigma2,
                    nonzero: !(mu.is_zero() && sigma2.is_zero()),
                },
            ],
            Self::FiniteAtoms { atoms, weights } => atoms
                .iter()
                .zip(weights)
                .filter(|(_, w)| **w > T::zero())
                .map(|(&a, &w)| MixtureComponent { weight: w, mean: a, variance: T::zero(), nonzero: !a.is_zero() })
                .collect(),
        }
    }

    pub fn moments(&self) -> PriorMoments<T> {
        match self {
            Self::BernoulliGaussian { mu, sigma2, gamma } => {
                let (m, s2, g) = (*mu, *sigma2, *gamma);
                let six = T::lit(6.0);
                let three = T::lit(3.0);
                PriorMoments {
                    mean: g * m,
                    variance: g * (T::one() - g) * m * m + g * s2,
                    fourth_moment: g * (m.powi(4) + six * m * m * s2 + three * s2 * s2),
                }
            }
            _ => {
                let comps = self.components();
                let mean = comps.iter().fold(T::zero(), |s, c| s + c.weight * c.mean);
                let variance = comps
                    .iter()
                    .fold(T::zero(), |s, c| s + c.weight * (c.variance + (c.mean - mean).powi(2)));
                let fourth_moment = comps.iter().fold(T::zero(), |s, c| {
                    let (m, v) = (c.mean, c.variance);
                    s + c.weight * (m.powi(4) + T::lit(6.0) * m * m * v + T::lit(3.0) * v * v)
                });
                PriorMoments { mean, variance, fourth_moment }
            }
        }
    }

    pub fn mean(&self) -> T {
        self.moments().mean
    }

    pub fn variance(&self) -> T {
        self.moments().variance
    }

    pub fn is_bernoulli_gaussian(&self) -> bool {
        matches!(self, Self::BernoulliGaussian { .. })
    }

    /// Draws one value. Always consumes one uniform and one normal variate so
    /// that the stream position does not depend on the outcome.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        let z = T::lit(z);
        match self {
            Self::Gaussian { mean, variance } => *mean + variance.sqrt() * z,
            Self::BernoulliGaussian { mu, sigma2, gamma } => {
                if u < gamma.as_f64() {
                    *mu + sigma2.sqrt() * z
                } else {
                    T::zero()
                }
            }
            Self::FiniteAtoms { atoms, weights } => {
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w.as_f64();
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("non-empty atoms")
            }
        }
    }
}
