//! Scalar Gaussian channel `Y = sqrt(s) X + W`: priors, posteriors, and the
//! MMSE / mutual-information functionals every other module builds on.
//! Information is measured in nats throughout.

mod curve;
mod functionals;
mod posterior;
mod prior;

pub use curve::ScalarCurve;
pub use functionals::{check_immse, expect_over_output, k_transform, scalar_mi, scalar_mmse, ImmseCheck};
pub use posterior::{bg_posterior_update, BgPosteriorParams, ScalarChannel, ScalarPosterior};
pub use prior::{MixtureComponent, PriorMoments, ScalarPrior};

/// `(mean, variance, E[X^4])`.
pub fn prior_moments<T: crate::Real>(prior: &ScalarPrior<T>) -> PriorMoments<T> {
    prior.moments()
}

/// Named priors used by the acceptance checks and accepted by name on the
/// command line. `flagship` is the wide-slab sparse law with a phase transition.
pub fn builtin_priors() -> Vec<(&'static str, ScalarPrior<f64>)> {
    let bg = |mu, sigma2, gamma| ScalarPrior::BernoulliGaussian { mu, sigma2, gamma };
    vec![
        ("gaussian", ScalarPrior::Gaussian { mean: 0.0, variance: 1.0 }),
        ("binary", ScalarPrior::binary()),
        ("sparse", bg(0.0, 1.0, 0.2)),
        ("half-sparse", bg(0.0, 1.0, 0.5)),
        ("wide", bg(0.0, 10.0, 0.3)),
        ("shifted", bg(1.0, 1.0, 0.3)),
        ("flagship", bg(0.0, 1e6, 0.2)),
        ("ternary", ScalarPrior::FiniteAtoms { atoms: vec![-1.0, 0.0, 1.0], weights: vec![0.25, 0.5, 0.25] }),
    ]
}

/// Looks up a [`builtin_priors`] entry.
pub fn builtin_prior(name: &str) -> Option<ScalarPrior<f64>> {
    builtin_priors().into_iter().find(|(n, _)| *n == name).map(|(_, p)| p)
}
