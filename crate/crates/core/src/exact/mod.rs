//! Ground-truth posteriors by exhaustive enumeration: product mixture priors
//! on the linear model, Bernoulli-Gaussian support posteriors, detection
//! curves and finite codebooks on the vector Gaussian channel.

mod codebook;
mod mixture;
mod support;

pub use codebook::{
    codebook_mmse_mi, good_code_bounds, good_code_check, Codebook, CodebookEstimate, SandwichCheck, SandwichRow,
    CODEBOOK_LIMIT,
};
pub use mixture::{assignment_count, iid, MixturePosterior, ENUMERATION_LIMIT};
pub use support::{
    detection_roc, exact_marginals, exact_mmse_mc, roc_table, support_posterior, uniform_thresholds, ExactMarginal,
    RocPoint, SupportPosterior,
};
