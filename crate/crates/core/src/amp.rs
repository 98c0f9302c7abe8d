//! Approximate message passing with the Bayes-optimal separable denoiser.
//!
//! With `A_ij ~ N(0, 1/N)` the recursion is
//!
//! ```text
//! r_t     = x_t + (N/M) A^T z_t
//! tau2_t  = (N/M) (1 + <Var(X | r_{t-1})>),   tau2_0 = (N/M) (1 + Var(X))
//! x_{t+1} = E[X | r_t]                     (scalar channel at snr 1/tau2_t)
//! z_{t+1} = y - A x_{t+1} + (N/M) z_t <Var(X | r_t)> / tau2_t
//! ```
//!
//! so `tau2_t` follows `(N/M)(1 + M_t)` and state evolution reads
//! `M_{t+1} = M_X(delta / (1 + M_t))`. The Onsager term uses the exact
//! denoiser derivative `d E[X | r] / d r = Var(X | r) / tau2`. The effective
//! noise can instead be measured from the residual, or tracked per entry
//! (see [`TauEstimate`]).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linear_model::{matvec, matvec_t, LinearModelInstance};
use crate::scalar_channel::{bg_posterior_update, BgPosteriorParams, ScalarChannel, ScalarPosterior, ScalarPrior};
use crate::table::{format_f64, Table};

/// How the effective noise variance of the pseudo-data is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauEstimate {
    /// `(N/M) ||z||^2 / M` from the Onsager-corrected residual.
    Residual,
    /// `(N/M) (1 + <Var(X | r)>)` from the previous denoising step.
    PosteriorVariance,
    /// Per-entry variances through the squared matrix entries (the GAMP form).
    /// Reduces to `PosteriorVariance` when all rows and columns have their
    /// expected norms, and is markedly more accurate for small `N`.
    PerEntry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpSettings {
    pub max_iter: usize,
    /// Stop once `||x_{t+1} - x_t|| / max(||x_{t+1}||, tiny) < tol`.
    pub tol: f64,
    /// Weight on the previous estimate, in `[0, 1)`.
    pub damping: f64,
    pub tau_estimate: TauEstimate,
}

impl Default for AmpSettings {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8, damping: 0.0, tau_estimate: TauEstimate::PosteriorVariance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpIteration {
    pub iter: usize,
    /// Effective noise variance of the pseudo-data fed to the denoiser.
    pub tau2: f64,
    /// `||x_hat - x_true||^2 / N` after denoising (NaN without ground truth).
    pub avg_sq_error: f64,
    /// Average marginal posterior variance after denoising.
    pub avg_post_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpOutput {
    pub x_hat: DVector<f64>,
    /// Per-entry marginal approximations at the final pseudo-data.
    pub marginals: Vec<ScalarPosterior<f64>>,
    /// Closed-form Bernoulli-Gaussian marginals when the prior is BG.
    pub bg_marginals: Option<Vec<BgPosteriorParams<f64>>>,
    /// Final pseudo-data and its noise variance.
    pub pseudo_data: DVector<f64>,
    pub trace: Vec<AmpIteration>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when `tau2` exceeded 1e3 times its initial value.
    pub diverged: bool,
}

impl AmpOutput {
    pub fn tau_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.tau2).collect()
    }

    pub fn inclusion(&self) -> Vec<f64> {
        self.marginals.iter().map(|p| p.inclusion).collect()
    }

    /// Columns `iter,tau2,avg_sq_error,avg_post_var`.
    pub fn trace_table(&self) -> Table {
        let mut t = Table::new(&["iter", "tau2", "avg_sq_error", "avg_post_var"]);
        for r in &self.trace {
            t.push(vec![r.iter.to_string(), format_f64(r.tau2), format_f64(r.avg_sq_error), format_f64(r.avg_post_var)]);
        }
        t
    }

    /// Columns `n,mu,sigma2,gamma,x_true`. For non-BG priors `mu`/`sigma2` are
    /// the marginal mean and variance.
    pub fn marginals_table(&self, x_true: &DVector<f64>) -> Table {
        let mut t = Table::new(&["n", "mu", "sigma2", "gamma", "x_true"]);
        for (n, p) in self.marginals.iter().enumerate() {
            let (mu, s2, g) = match &self.bg_marginals {
                Some(bg) => (bg[n].mu_n, bg[n].sigma2_n, bg[n].gamma_n),
                None => (p.mean, p.variance, p.inclusion),
            };
            t.push(vec![n.to_string(), format_f64(mu), format_f64(s2), format_f64(g), format_f64(x_true[n])]);
        }
        t
    }
}

fn denoise(channel: &ScalarChannel<f64>, r: &DVector<f64>, tau: f64) -> Vec<ScalarPosterior<f64>> {
    r.iter().map(|&rn| channel.posterior(rn / tau)).collect()
}

fn average<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    (0..n).map(f).sum::<f64>() / n as f64
}

/// Runs AMP from the uninformative start `x = E[X]`, `tau2 = (N/M)(1 + Var(X))`.
pub fn amp_run(instance: &LinearModelInstance, prior: &ScalarPrior<f64>, settings: AmpSettings) -> Result<AmpOutput> {
    if !(0.0..1.0).contains(&settings.damping) {
        return Err(Error::InvalidArgument(format!("damping must lie in [0, 1) (got {})", settings.damping)));
    }
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(Error::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
    }
    if settings.tau_estimate == TauEstimate::PerEntry {
        return gamp_run(instance, prior, settings);
    }
    let (m, n) = instance.a.shape();
    let ratio = n as f64 / m as f64;
    let a = &instance.a;
    let y = &instance.y;
    let x_true = &instance.x_true;
    let var = prior.variance();

    let mut x = DVector::from_element(n, prior.mean());
    let mut z = y - matvec(a, &x);
    let tau2_start = ratio * (1.0 + var);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut last: Option<(Vec<ScalarPosterior<f64>>, DVector<f64>, f64)> = None;
    let mut prev_var = var;

    for t in 0..settings.max_iter {
        let tau2 = match settings.tau_estimate {
            TauEstimate::Residual => ratio * z.norm_squared() / m as f64,
            TauEstimate::PosteriorVariance | TauEstimate::PerEntry => ratio * (1.0 + prev_var),
        };
        if !tau2.is_finite() {
            diverged = true;
            break;
        }
        if tau2 > 1e3 * tau2_start {
            diverged = true;
        }
        let tau = tau2.sqrt();
        let r = &x + matvec_t(a, &z) * ratio;
        let channel = ScalarChannel::new(prior, 1.0 / tau2)?;
        let post = denoise(&channel, &r, tau);
        let mut x_new = DVector::from_iterator(n, post.iter().map(|p| p.mean));
        let avg_var = average(n, |i| post[i].variance);
        if settings.damping > 0.0 {
            x_new = &x_new * (1.0 - settings.damping) + &x * settings.damping;
        }
        trace.push(AmpIteration {
            iter: t,
            tau2,
            avg_sq_error: (&x_new - x_true).norm_squared() / n as f64,
            avg_post_var: avg_var,
        });
        let change = (&x_new - &x).norm() / x_new.norm().max(f64::MIN_POSITIVE);
        let onsager = &z * (ratio * avg_var / tau2);
        z = y - matvec(a, &x_new) + onsager;
        x = x_new;
        prev_var = avg_var;
        last = Some((post, r, tau2));
        if diverged {
            break;
        }
        if change < settings.tol {
            converged = true;
            break;
        }
    }

    let (marginals, pseudo_data, tau2) = last.ok_or(Error::NonFinite("amp_run: no iteration completed"))?;
    let bg_marginals = if prior.is_bernoulli_gaussian() {
        let s = 1.0 / tau2;
        let tau = tau2.sqrt();
        Some(pseudo_data.iter().map(|&rn| bg_posterior_update(prior, s, rn / tau)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(AmpOutput {
        x_hat: x,
        marginals,
        bg_marginals,
        pseudo_data,
        iterations: trace.len(),
        trace,
        converged,
        diverged,
    })
}

/// GAMP recursion for the Gaussian output channel with unit noise:
///
/// ```text
/// v_p = A^2 v_x,       p = A x - v_p * s
/// s   = (y - p) / (v_p + 1),   v_s = 1 / (v_p + 1)
/// v_r = 1 / ((A^2)^T v_s),     r = x + v_r * A^T s
/// x, v_x = posterior mean and variance of X given r at noise v_r
/// ```
///
/// The trace reports the average of `v_r` as `tau2`.
fn gamp_run(instance: &LinearModelInstance, prior: &ScalarPrior<f64>, settings: AmpSettings) -> Result<AmpOutput> {
    let (m, n) = instance.a.shape();
    let a = &instance.a;
    let a2 = a.map(|v| v * v);
    let y = &instance.y;
    let x_true = &instance.x_true;
    let mut x = DVector::from_element(n, prior.mean());
    let mut vx = DVector::from_element(n, prior.variance());
    let mut s_hat = DVector::zeros(m);
    let tau2_start = n as f64 / m as f64 * (1.0 + prior.variance());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    let mut last = None;

    for t in 0..settings.max_iter {
        let vp = matvec(&a2, &vx);
        let p = matvec(a, &x) - vp.component_mul(&s_hat);
        let vs = vp.map(|v| 1.0 / (v + 1.0));
        s_hat = (y - p).component_mul(&vs);
        let vr = matvec_t(&a2, &vs).map(|v| 1.0 / v);
        let r = &x + vr.component_mul(&matvec_t(a, &s_hat));
        if vr.iter().any(|v| !v.is_finite()) || r.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        let tau2 = vr.mean();
        if tau2 > 1e3 * tau2_start {
            diverged = true;
        }
        let post: Vec<ScalarPosterior<f64>> = (0..n)
            .map(|i| {
                let ch = ScalarChannel::new(prior, 1.0 / vr[i])?;
                Ok(ch.posterior(r[i] / vr[i].sqrt()))
            })
            .collect::<Result<_>>()?;
        let mut x_new = DVector::from_iterator(n, post.iter().map(|q| q.mean));
        let vx_new = DVector::from_iterator(n, post.iter().map(|q| q.variance));
        if settings.damping > 0.0 {
            x_new = &x_new * (1.0 - settings.damping) + &x * settings.damping;
        }
        trace.push(AmpIteration {
            iter: t,
            tau2,
            avg_sq_error: (&x_new - x_true).norm_squared() / n as f64,
            avg_post_var: vx_new.mean(),
        });
        let change = (&x_new - &x).norm() / x_new.norm().max(f64::MIN_POSITIVE);
        x = x_new;
        vx = vx_new;
        last = Some((post, r, vr));
        if diverged {
            break;
        }
        if change < settings.tol {
            converged = true;
            break;
        }
    }

    let (marginals, pseudo_data, vr) = last.ok_or(Error::NonFinite("amp_run: no iteration completed"))?;
    let bg_marginals = if prior.is_bernoulli_gaussian() {
        Some(
            (0..n)
                .map(|i| bg_posterior_update(prior, 1.0 / vr[i], pseudo_data[i] / vr[i].sqrt()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(AmpOutput {
        x_hat: x,
        marginals,
        bg_marginals,
        pseudo_data,
        iterations: trace.len(),
        trace,
        converged,
        diverged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpDiagnostics {
    pub avg_sq_error: f64,
    pub avg_posterior_variance: f64,
}

/// Average squared error of the marginal means and average marginal variance.
pub fn amp_diagnostics(output: &AmpOutput, x_true: &DVector<f64>) -> Result<AmpDiagnostics> {
    let n = output.marginals.len();
    if n != x_true.len() || n == 0 {
        return Err(Error::Dimension(format!("{} marginals vs {} true entries", n, x_true.len())));
    }
    Ok(AmpDiagnostics {
        avg_sq_error: average(n, |i| (output.marginals[i].mean - x_true[i]).powi(2)),
        avg_posterior_variance: average(n, |i| output.marginals[i].variance),
    })
}

/// `(<a, x_hat>, sum_n a_n^2 Var_n + 1)` for a new measurement vector `a`.
pub fn predict_new_observation(output: &AmpOutput, a_new: &DVector<f64>) -> Result<(f64, f64)> {
    if a_new.len() != output.marginals.len() {
        return Err(Error::Dimension(format!("a_new has {} entries, model has {}", a_new.len(), output.marginals.len())));
    }
    let y_hat = output.marginals.iter().zip(a_new.iter()).map(|(p, a)| a * p.mean).sum();
    let var = output.marginals.iter().zip(a_new.iter()).map(|(p, a)| a * a * p.variance).sum::<f64>() + 1.0;
    Ok((y_hat, var))
}
