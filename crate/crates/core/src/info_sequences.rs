//! Information and MMSE sequences of the standard linear model with iid
//! Gaussian measurement vectors, estimated by Monte Carlo over instances.
//!
//! For a finite-support prior the marginal `p(y^m | A^m)` is a finite sum over
//! the `|S|^N` signal values, so every trial evaluates
//!
//! ```text
//! I_m sample = log p(y^m | x, A^m) - log p(y^m | A^m)
//! M_m sample = tr Cov(x | y^m, A^m) / N
//! ```
//!
//! exactly for all prefixes `m = 0..M` of one draw. Averages over trials are
//! unbiased for `I_m` and `M_m`; the prefixes of one draw share randomness, so
//! differences in `m` are far less noisy than the sequences themselves.
//! Standard errors of derived statistics are delete-one jackknife errors over
//! trials.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{iid, MixturePosterior, ENUMERATION_LIMIT};
use crate::linear_model::sample_instance;
use crate::real::log_sum_exp;
use crate::rng::stream;
use crate::scalar_channel::ScalarPrior;
use crate::stats::{jackknife_se, McEstimate};
use crate::table::{format_f64, Table};

/// Absolute slack for checks whose statistic is exactly zero up to rounding.
const ROUNDING: f64 = 1e-12;

/// Identifies the instances a sequence estimate was computed from; estimates
/// with equal tags saw the same draws and their errors are paired.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTag {
    pub prior: ScalarPrior<f64>,
    pub n: usize,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct InfoSequenceEstimate {
    /// `I_0..I_M` in nats; `I_0 = 0`.
    pub i: Vec<f64>,
    /// `I'_m = I_{m+1} - I_m`, `m = 0..M-1`.
    pub i_prime: Vec<f64>,
    /// `I''_m = I'_{m+1} - I'_m`, `m = 0..M-2`.
    pub i_dprime: Vec<f64>,
    pub std_err: Vec<f64>,
    pub i_prime_se: Vec<f64>,
    pub i_dprime_se: Vec<f64>,
    pub trials: usize,
    pub tag: RunTag,
    /// `samples[m][t]`: the `I_m` sample of trial `t`.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MmseSequenceEstimate {
    /// Per-dimension `M_0..M_M`; `M_0 = Var(X)`.
    pub m: Vec<f64>,
    pub std_err: Vec<f64>,
    pub trials: usize,
    pub tag: RunTag,
    pub samples: Vec<Vec<f64>>,
}

/// Every per-trial statistic of one sequence run.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub info: InfoSequenceEstimate,
    pub mmse: MmseSequenceEstimate,
    /// `(1/N^2) E||Cov(x | y^m, A^m)||_F^2` for `m = 0..M`.
    pub msc: Vec<McEstimate>,
}

/// Enumerated signal values of an iid finite-support prior.
struct SupportGrid {
    n: usize,
    points: Vec<f64>,
    log_prior: Vec<f64>,
}

impl SupportGrid {
    fn new(prior: &ScalarPrior<f64>, n: usize) -> Result<Self> {
        let ScalarPrior::FiniteAtoms { atoms, weights } = prior else {
            return Err(Error::InvalidPrior(
                "sequence estimates need a finite-support prior; discretize continuous laws first".into(),
            ));
        };
        let support: Vec<(f64, f64)> =
            atoms.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(&a, &w)| (a, w.ln())).collect();
        let count = (support.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if count > ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard { count, limit: ENUMERATION_LIMIT });
        }
        let count = count as usize;
        let mut points = Vec::with_capacity(count * n);
        let mut log_prior = Vec::with_capacity(count);
        for mut idx in 0..count {
            let mut lp = 0.0;
            for _ in 0..n {
                let (a, lw) = support[idx % support.len()];
                points.push(a);
                lp += lw;
                idx /= support.len();
            }
            log_prior.push(lp);
        }
        Ok(Self { n, points, log_prior })
    }

    fn len(&self) -> usize {
        self.log_prior.len()
    }

    fn point(&self, p: usize) -> &[f64] {
        &self.points[p * self.n..(p + 1) * self.n]
    }
}

struct TrialSequence {
    info: Vec<f64>,
    mmse: Vec<f64>,
    msc: Vec<f64>,
}

fn run_trial(grid: &SupportGrid, prior: &ScalarPrior<f64>, steps: usize, seed: u64, t: usize) -> Result<TrialSequence> {
    let n = grid.n;
    let inst = sample_instance(prior, n, steps, &mut stream(seed, t as u64), seed)?;
    let mut ll = vec![0.0; grid.len()];
    let mut ll_true = 0.0;
    let mut out = TrialSequence {
        info: Vec::with_capacity(steps + 1),
        mmse: Vec::with_capacity(steps + 1),
        msc: Vec::with_capacity(steps + 1),
    };
    let mut logw = vec![0.0; grid.len()];
    for m in 0..=steps {
        if m > 0 {
            let row = inst.a.row(m - 1);
            let ym = inst.y[m - 1];
            for (p, l) in ll.iter_mut().enumerate() {
                let pred: f64 = grid.point(p).iter().zip(row.iter()).map(|(x, a)| x * a).sum();
                *l -= 0.5 * (ym - pred).powi(2);
            }
            ll_true -= 0.5 * inst.w[m - 1].powi(2);
        }
        for (lw, (lp, l)) in logw.iter_mut().zip(grid.log_prior.iter().zip(&ll)) {
            *lw = lp + l;
        }
        let log_marginal = log_sum_exp(&logw);
        let mut mean = vec![0.0; n];
        let mut second = DMatrix::<f64>::zeros(n, n);
        for (p, lw) in logw.iter().enumerate() {
            let w = (lw - log_marginal).exp();
            if w == 0.0 {
                continue;
            }
            let x = grid.point(p);
            for j in 0..n {
                mean[j] += w * x[j];
                for k in 0..=j {
                    second[(j, k)] += w * x[j] * x[k];
                }
            }
        }
        let mut trace = 0.0;
        let mut frob = 0.0;
        for j in 0..n {
            for k in 0..=j {
                let c = second[(j, k)] - mean[j] * mean[k];
                if j == k {
                    trace += c;
                    frob += c * c;
                } else {
                    frob += 2.0 * c * c;
                }
            }
        }
        out.info.push(if m == 0 { 0.0 } else { ll_true - log_marginal });
        out.mmse.push(if m == 0 { prior.variance() } else { trace.max(0.0) / n as f64 });
        out.msc.push(frob / (n * n) as f64);
    }
    Ok(out)
}

fn check_sizes(n: usize, trials: usize) -> Result<()> {
    if n == 0 || trials < 2 {
        return Err(Error::InvalidArgument(format!("need N >= 1 and at least 2 trials (got N={n}, trials={trials})")));
    }
    Ok(())
}

fn column_means(cols: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    cols.iter()
        .map(|c| {
            let e = McEstimate::from_samples(c);
            (e.mean, e.std_err)
        })
        .unzip()
}

/// Runs `trials` instances with `N` unknowns and `steps` measurements each;
/// trial `t` draws from stream `(seed, t)`.
pub fn estimate_sequences(prior: &ScalarPrior<f64>, n: usize, steps: usize, trials: usize, seed: u64) -> Result<SequenceRun> {
    check_sizes(n, trials)?;
    let grid = SupportGrid::new(prior, n)?;
    let per_trial: Vec<TrialSequence> =
        (0..trials).into_par_iter().map(|t| run_trial(&grid, prior, steps, seed, t)).collect::<Result<_>>()?;
    let transpose = |f: fn(&TrialSequence) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..=steps).map(|m| per_trial.iter().map(|tr| f(tr)[m]).collect()).collect()
    };
    let info_samples = transpose(|t| &t.info);
    let mmse_samples = transpose(|t| &t.mmse);
    let msc_samples = transpose(|t| &t.msc);
    let tag = RunTag { prior: prior.clone(), n, steps, trials, seed };

    let (i, std_err) = column_means(&info_samples);
    let i_prime: Vec<f64> = i.windows(2).map(|w| w[1] - w[0]).collect();
    let i_dprime: Vec<f64> = i_prime.windows(2).map(|w| w[1] - w[0]).collect();
    let i_prime_se = (0..steps)
        .map(|m| jackknife_se(&[&info_samples[m + 1], &info_samples[m]], |v| v[0] - v[1]))
        .collect();
    let i_dprime_se = (0..steps.saturating_sub(1))
        .map(|m| {
            jackknife_se(&[&info_samples[m + 2], &info_samples[m + 1], &info_samples[m]], |v| v[0] - 2.0 * v[1] + v[2])
        })
        .collect();
    let info = InfoSequenceEstimate {
        i,
        i_prime,
        i_dprime,
        std_err,
        i_prime_se,
        i_dprime_se,
        trials,
        tag: tag.clone(),
        samples: info_samples,
    };
    let (m, mse) = column_means(&mmse_samples);
    let mmse = MmseSequenceEstimate { m, std_err: mse, trials, tag, samples: mmse_samples };
    let msc = msc_samples.iter().map(|c| McEstimate::from_samples(c)).collect();
    Ok(SequenceRun { info, mmse, msc })
}

/// `I_0..I_M` for an iid finite-support prior.
pub fn estimate_info_sequence(
    prior: &ScalarPrior<f64>,
    n: usize,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<InfoSequenceEstimate> {
    Ok(estimate_sequences(prior, n, steps, trials, seed)?.info)
}

/// `M_0..M_M` for an iid finite-support prior (posterior-trace estimator).
pub fn estimate_mmse_sequence(
    prior: &ScalarPrior<f64>,
    n: usize,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<MmseSequenceEstimate> {
    Ok(estimate_sequences(prior, n, steps, trials, seed)?.mmse)
}

impl SequenceRun {
    /// Columns `m,I,I_se,Iprime,Idprime,M,M_se,msc`; differences past the end are `NA`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["m", "I", "I_se", "Iprime", "Idprime", "M", "M_se", "msc"]);
        let opt = |v: Option<&f64>| v.map_or_else(|| "NA".to_string(), |x| format_f64(*x));
        for m in 0..self.info.i.len() {
            t.push(vec![
                m.to_string(),
                format_f64(self.info.i[m]),
                format_f64(self.info.std_err[m]),
                opt(self.info.i_prime.get(m)),
                opt(self.info.i_dprime.get(m)),
                format_f64(self.mmse.m[m]),
                format_f64(self.mmse.std_err[m]),
                format_f64(self.msc[m].mean),
            ]);
        }
        t
    }
}

/// Jackknife error of `f` over info columns followed by mmse columns; paired
/// runs are resampled jointly, independent runs contribute in quadrature.
fn combined_se<F: Fn(&[f64]) -> f64>(info_cols: &[&[f64]], mmse_cols: &[&[f64]], paired: bool, f: F) -> f64 {
    if paired {
        let all: Vec<&[f64]> = info_cols.iter().chain(mmse_cols).copied().collect();
        return jackknife_se(&all, f);
    }
    let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    let info_means: Vec<f64> = info_cols.iter().map(|c| mean(c)).collect();
    let mmse_means: Vec<f64> = mmse_cols.iter().map(|c| mean(c)).collect();
    let se_info = if info_cols.is_empty() {
        0.0
    } else {
        jackknife_se(info_cols, |v| f(&[v, &mmse_means[..]].concat()))
    };
    let se_mmse = if mmse_cols.is_empty() {
        0.0
    } else {
        jackknife_se(mmse_cols, |v| f(&[&info_means[..], v].concat()))
    };
    se_info.hypot(se_mmse)
}

/// Worst case of a family of one-sided checks `statistic <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceCheck {
    /// Largest `statistic - 3 se`; the check passes iff this is `<= 0`.
    pub worst: f64,
    /// Index (`m`, or `k * (M + 1) + m` for pair checks) attaining `worst`.
    pub worst_at: usize,
    /// Number of entries with `statistic > 3 se`.
    pub violations: usize,
    /// Number of entries checked.
    pub checked: usize,
}

impl SequenceCheck {
    fn new() -> Self {
        Self { worst: f64::NEG_INFINITY, worst_at: 0, violations: 0, checked: 0 }
    }

    fn record(&mut self, at: usize, statistic: f64, se: f64) {
        let margin = statistic - 3.0 * se;
        self.checked += 1;
        if margin > ROUNDING {
            self.violations += 1;
        }
        if margin > self.worst {
            self.worst = margin;
            self.worst_at = at;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `I'_{m+1} <= I'_m` for every `m`, i.e. `I''_m <= 0`.
pub fn check_theorem_monotone(est: &InfoSequenceEstimate) -> SequenceCheck {
    let mut c = SequenceCheck::new();
    for (m, (&d, &se)) in est.i_dprime.iter().zip(&est.i_dprime_se).enumerate() {
        c.record(m, d, se);
    }
    c
}

fn paired(info: &InfoSequenceEstimate, mmse: &MmseSequenceEstimate) -> Result<bool> {
    if info.i.len() != mmse.m.len() {
        return Err(Error::Dimension(format!(
            "information sequence has {} entries, MMSE sequence {}",
            info.i.len(),
            mmse.m.len()
        )));
    }
    Ok(info.tag == mmse.tag)
}

/// `I'_m <= log(1 + M_m) / 2` for every `m`.
pub fn check_theorem_ip_ub(info: &InfoSequenceEstimate, mmse: &MmseSequenceEstimate) -> Result<SequenceCheck> {
    let paired = paired(info, mmse)?;
    let mut c = SequenceCheck::new();
    for m in 0..info.i_prime.len() {
        let stat = |v: &[f64]| v[0] - v[1] - 0.5 * v[2].ln_1p();
        let se = combined_se(&[&info.samples[m + 1], &info.samples[m]], &[&mmse.samples[m]], paired, stat);
        c.record(m, stat(&[info.i[m + 1], info.i[m], mmse.m[m]]), se);
    }
    Ok(c)
}

/// One instance of the MMSE lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseBoundCheck {
    pub k: usize,
    pub m: usize,
    /// `M_k`.
    pub mmse: f64,
    /// `exp((2 I_m - k log(1 + M_0)) / (m - k)) - 1`.
    pub bound: f64,
    pub std_err: f64,
    pub holds: bool,
}

/// `M_k >= exp((2 I_m - k log(1 + M_0)) / (m - k)) - 1` within 3 standard errors.
pub fn check_theorem_mmse_lb(
    info: &InfoSequenceEstimate,
    mmse: &MmseSequenceEstimate,
    k: usize,
    m: usize,
) -> Result<MmseBoundCheck> {
    let paired = paired(info, mmse)?;
    if k >= m || m >= info.i.len() {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= k < m <= {} (got k={k}, m={m})",
            info.i.len() - 1
        )));
    }
    let log_m0 = mmse.m[0].ln_1p();
    let bound_of = |im: f64| ((2.0 * im - k as f64 * log_m0) / (m - k) as f64).exp() - 1.0;
    let stat = |v: &[f64]| bound_of(v[0]) - v[1];
    let se = combined_se(&[&info.samples[m]], &[&mmse.samples[k]], paired, stat);
    let bound = bound_of(info.i[m]);
    let holds = bound - mmse.m[k] - 3.0 * se <= ROUNDING;
    Ok(MmseBoundCheck { k, m, mmse: mmse.m[k], bound, std_err: se, holds })
}

/// The MMSE lower bound over every pair `0 <= k < m <= M`.
pub fn check_theorem_mmse_lb_all(info: &InfoSequenceEstimate, mmse: &MmseSequenceEstimate) -> Result<SequenceCheck> {
    let len = info.i.len();
    let mut c = SequenceCheck::new();
    for m in 1..len {
        for k in 0..m {
            let r = check_theorem_mmse_lb(info, mmse, k, m)?;
            c.record(k * len + m, r.bound - r.mmse, r.std_err);
        }
    }
    Ok(c)
}

/// Cardinality bound on large second differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardBoundCheck {
    pub threshold: f64,
    /// `#{m : |I''_m| >= T}` from the point estimates.
    pub count: usize,
    /// `#{m : |I''_m| - 3 se >= T}`, the entries that clear `T` beyond sampling error.
    pub significant_count: usize,
    /// `(I_1 + 3 se(I_1)) / T`.
    pub bound: f64,
    pub holds: bool,
}

/// `#{m : |I''_m| >= T} <= I_1 / T`, with sampling slack on both sides.
pub fn check_card_bound(info: &InfoSequenceEstimate, threshold: f64) -> Result<CardBoundCheck> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be positive and finite (got {threshold})")));
    }
    let count = info.i_dprime.iter().filter(|d| d.abs() >= threshold).count();
    let significant_count =
        info.i_dprime.iter().zip(&info.i_dprime_se).filter(|(d, se)| d.abs() - 3.0 * **se >= threshold).count();
    let (i1, se1) = match (info.i.get(1), info.std_err.get(1)) {
        (Some(&i), Some(&s)) => (i, s),
        _ => (0.0, 0.0),
    };
    let bound = (i1 + 3.0 * se1) / threshold;
    Ok(CardBoundCheck { threshold, count, significant_count, bound, holds: significant_count as f64 <= bound })
}

/// Mean-squared posterior covariance and its three-term eigenvalue split
/// `E||C||_F^2 = N (E L)^2 + N Var(L) + sum_n E(L_n - L)^2`, `L` the mean eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceStats {
    pub n: usize,
    pub trials: usize,
    /// `(1/N^2) E||Cov||_F^2`.
    pub msc: McEstimate,
    /// `E||Cov||_F^2` from the matrix entries.
    pub frobenius: f64,
    /// `(1/N) E tr Cov`.
    pub mmse: McEstimate,
    pub mean_term: f64,
    pub variance_term: f64,
    pub spread_term: f64,
    /// `N^2 E[X^4]`, the upper end of the covariance sandwich.
    pub upper_bound: f64,
}

impl CovarianceStats {
    /// Sum of the three decomposition terms.
    pub fn decomposition_total(&self) -> f64 {
        self.mean_term + self.variance_term + self.spread_term
    }

    /// `(1/N) (E tr Cov)^2 <= E||Cov||_F^2 <= N^2 E[X^4]`.
    pub fn sandwich_holds(&self) -> bool {
        let lower = self.n as f64 * self.mmse.mean.powi(2);
        let slack = ROUNDING * self.frobenius.max(1.0);
        lower <= self.frobenius + slack && self.frobenius <= self.upper_bound + slack
    }
}

/// Statistics of a set of posterior covariance matrices (one per trial).
pub fn covariance_stats(covariances: &[DMatrix<f64>], fourth_moment: f64) -> Result<CovarianceStats> {
    let Some(first) = covariances.first() else {
        return Err(Error::InvalidArgument("no covariance matrices".into()));
    };
    let n = first.nrows();
    if n == 0 || covariances.iter().any(|c| c.shape() != (n, n)) {
        return Err(Error::Dimension("covariances must be square, non-empty and of equal size".into()));
    }
    let nf = n as f64;
    let mut frob = Vec::with_capacity(covariances.len());
    let mut lbar = Vec::with_capacity(covariances.len());
    let mut spread = Vec::with_capacity(covariances.len());
    for c in covariances {
        frob.push(c.norm_squared());
        let eig = SymmetricEigen::new(c.clone()).eigenvalues;
        let mean = eig.sum() / nf;
        lbar.push(mean);
        spread.push(eig.iter().map(|l| (l - mean).powi(2)).sum::<f64>());
    }
    let t = covariances.len() as f64;
    let avg = |v: &[f64]| v.iter().sum::<f64>() / t;
    let lbar_mean = avg(&lbar);
    let lbar_var = lbar.iter().map(|l| (l - lbar_mean).powi(2)).sum::<f64>() / t;
    let frob_scaled: Vec<f64> = frob.iter().map(|f| f / (nf * nf)).collect();
    Ok(CovarianceStats {
        n,
        trials: covariances.len(),
        msc: McEstimate::from_samples(&frob_scaled),
        frobenius: avg(&frob),
        mmse: McEstimate::from_samples(&lbar),
        mean_term: nf * lbar_mean * lbar_mean,
        variance_term: nf * lbar_var,
        spread_term: avg(&spread),
        upper_bound: nf * nf * fourth_moment,
    })
}

/// Exact posterior covariances of `trials` instances with `m` measurements,
/// summarized by [`covariance_stats`]; trial `t` draws from stream `(seed, t)`.
pub fn mean_squared_covariance(
    prior: &ScalarPrior<f64>,
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<CovarianceStats> {
    check_sizes(n, trials)?;
    let priors = iid(prior, n);
    let covs: Vec<DMatrix<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = sample_instance(prior, n, m, &mut stream(seed, t as u64), seed)?;
            Ok(MixturePosterior::compute(&inst.a, &inst.y, &priors)?.covariance().clone())
        })
        .collect::<Result<_>>()?;
    covariance_stats(&covs, prior.moments().fourth_moment)
}

/// Sampled conditional MMSE function `M_{X|Y}(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMmse {
    pub s: Vec<f64>,
    /// `(1/N) E||x - E[x | y, z(s)]||^2` per grid point.
    pub mmse: Vec<McEstimate>,
    /// Finite-difference slope per grid point (forward at the first point,
    /// backward at the last, central in between).
    pub derivative: Vec<McEstimate>,
    /// `-(1/N) E||Cov(x | y)||_F^2`, present when the grid starts at `s = 0`.
    pub slope_at_zero: Option<McEstimate>,
    /// Per-trial `derivative[0] - slope_at_zero`, present with it.
    pub slope_gap: Option<McEstimate>,
}

impl ConditionalMmse {
    /// Largest increase `M(s_{i+1}) - M(s_i) - 3 se` over the grid; `<= 0` means non-increasing.
    pub fn worst_increase(&self) -> f64 {
        self.mmse
            .windows(2)
            .map(|w| w[1].mean - w[0].mean - 3.0 * w[0].std_err.hypot(w[1].std_err))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Augments each trial `(x, A, y)` with `z(s) = sqrt(s) x + w'` and evaluates
/// the exact posterior trace on the grid. All grid points share the draw of
/// `w'` and each trial averages `w'` with its antithetic `-w'`.
pub fn conditional_mmse_function(
    prior: &ScalarPrior<f64>,
    n: usize,
    m: usize,
    s_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ConditionalMmse> {
    check_sizes(n, trials)?;
    if s_grid.len() < 2 || s_grid[0] < 0.0 || s_grid.windows(2).any(|w| !(w[1] > w[0])) || !s_grid[s_grid.len() - 1].is_finite() {
        return Err(Error::InvalidArgument("snr grid must be ascending, nonnegative and have at least 2 points".into()));
    }
    let priors = iid(prior, n);
    let nf = n as f64;
    let per_trial: Vec<(Vec<f64>, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let inst = sample_instance(prior, n, m, &mut rng, seed)?;
            let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let base = MixturePosterior::compute(&inst.a, &inst.y, &priors)?;
            let slope0 = -base.covariance().norm_squared() / nf;
            let mut a_aug = DMatrix::zeros(m + n, n);
            a_aug.rows_mut(0, m).copy_from(&inst.a);
            let mut y_aug = nalgebra::DVector::zeros(m + n);
            y_aug.rows_mut(0, m).copy_from(&inst.y);
            let values = s_grid
                .iter()
                .map(|&s| {
                    if s == 0.0 {
                        return Ok(base.trace() / nf);
                    }
                    let rs = s.sqrt();
                    for j in 0..n {
                        a_aug[(m + j, j)] = rs;
                    }
                    let mut total = 0.0;
                    for sign in [1.0, -1.0] {
                        for j in 0..n {
                            y_aug[m + j] = rs * inst.x_true[j] + sign * noise[j];
                        }
                        total += MixturePosterior::compute(&a_aug, &y_aug, &priors)?.trace();
                    }
                    Ok(total / (2.0 * nf))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((values, slope0))
        })
        .collect::<Result<_>>()?;

    let g = s_grid.len();
    let column = |i: usize| -> Vec<f64> { per_trial.iter().map(|(v, _)| v[i]).collect() };
    let mmse = (0..g).map(|i| McEstimate::from_samples(&column(i))).collect();
    let slope = |v: &[f64], i: usize| -> f64 {
        let (lo, hi) = if i == 0 { (0, 1) } else if i == g - 1 { (g - 2, g - 1) } else { (i - 1, i + 1) };
        (v[hi] - v[lo]) / (s_grid[hi] - s_grid[lo])
    };
    let derivative =
        (0..g).map(|i| McEstimate::from_samples(&per_trial.iter().map(|(v, _)| slope(v, i)).collect::<Vec<_>>())).collect();
    let (slope_at_zero, slope_gap) = if s_grid[0] == 0.0 {
        let s0: Vec<f64> = per_trial.iter().map(|(_, s)| *s).collect();
        let gap: Vec<f64> = per_trial.iter().map(|(v, s)| slope(v, 0) - s).collect();
        (Some(McEstimate::from_samples(&s0)), Some(McEstimate::from_samples(&gap)))
    } else {
        (None, None)
    };
    Ok(ConditionalMmse { s: s_grid.to_vec(), mmse, derivative, slope_at_zero, slope_gap })
}

/// Finite-support stand-in for a continuous prior with matched low moments:
/// a Bernoulli-Gaussian law becomes its spike plus a 4-point Gauss–Hermite
/// slab (5 atoms, first seven moments exact); a Gaussian law becomes its
/// 5-point Gauss–Hermite rule (first nine moments exact). Finite priors are
/// returned unchanged.
pub fn discretize(prior: &ScalarPrior<f64>) -> Result<ScalarPrior<f64>> {
    match prior {
        ScalarPrior::FiniteAtoms { .. } => Ok(prior.clone()),
        ScalarPrior::Gaussian { mean, variance } => {
            let sd = variance.sqrt();
            let r10 = 10f64.sqrt();
            let (n1, n2) = ((5.0 - r10).sqrt(), (5.0 + r10).sqrt());
            let (w1, w2) = ((7.0 + 2.0 * r10) / 60.0, (7.0 - 2.0 * r10) / 60.0);
            ScalarPrior::finite_atoms(
                vec![mean - sd * n2, mean - sd * n1, *mean, mean + sd * n1, mean + sd * n2],
                vec![w2, w1, 8.0 / 15.0, w1, w2],
            )
        }
        ScalarPrior::BernoulliGaussian { mu, sigma2, gamma } => {
            let sd = sigma2.sqrt();
            let r6 = 6f64.sqrt();
            let (n1, n2) = ((3.0 - r6).sqrt(), (3.0 + r6).sqrt());
            let (w1, w2) = (gamma * (3.0 + r6) / 12.0, gamma * (3.0 - r6) / 12.0);
            ScalarPrior::finite_atoms(
                vec![0.0, mu - sd * n2, mu - sd * n1, mu + sd * n1, mu + sd * n2],
                vec![1.0 - gamma, w2, w1, w1, w2],
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_channel::scalar_mi;

    #[test]
    fn empty_prefix_is_exact() {
        let run = estimate_sequences(&ScalarPrior::binary(), 3, 4, 10, 1).unwrap();
        assert_eq!(run.info.i[0], 0.0);
        assert_eq!(run.mmse.m[0], 1.0);
        assert_eq!(run.info.i.len(), 5);
        assert_eq!(run.info.i_prime.len(), 4);
        assert_eq!(run.info.i_dprime.len(), 3);
    }

    #[test]
    fn single_unknown_matches_scalar_channel() {
        // N = 1: y = a x + w with a ~ N(0, 1), so I_1 = E_a[I_X(a^2)]
        let p = ScalarPrior::<f64>::binary();
        let est = estimate_info_sequence(&p, 1, 1, 4000, 3).unwrap();
        let nodes = 200;
        let mut oracle = 0.0;
        let mut mass = 0.0;
        for i in 0..nodes {
            let a = -8.0 + 16.0 * (i as f64 + 0.5) / nodes as f64;
            let w = (-0.5 * a * a).exp();
            oracle += w * scalar_mi(&p, a * a).unwrap();
            mass += w;
        }
        oracle /= mass;
        assert!((est.i[1] - oracle).abs() < 3.0 * est.std_err[1], "{} vs {oracle} (se {})", est.i[1], est.std_err[1]);
    }

    #[test]
    fn degenerate_prior_carries_no_information() {
        let p = ScalarPrior::finite_atoms(vec![0.7], vec![1.0]).unwrap();
        let run = estimate_sequences(&p, 3, 5, 5, 0).unwrap();
        assert!(run.info.i.iter().all(|&i| i.abs() < 1e-12));
        assert!(run.info.i_prime.iter().all(|&i| i.abs() < 1e-12));
        assert!(check_theorem_monotone(&run.info).passed());
        assert!(run.mmse.m.iter().all(|&m| m.abs() < 1e-12));
    }

    #[test]
    fn rejects_continuous_and_oversized_priors() {
        let bg = ScalarPrior::bernoulli_gaussian(0.0, 1.0, 0.2).unwrap();
        assert!(matches!(estimate_sequences(&bg, 2, 2, 5, 0), Err(Error::InvalidPrior(_))));
        let p = ScalarPrior::<f64>::binary();
        assert!(matches!(estimate_sequences(&p, 21, 2, 5, 0), Err(Error::EnumerationGuard { .. })));
    }

    #[test]
    fn discretized_priors_keep_moments() {
        for p in [
            ScalarPrior::bernoulli_gaussian(0.5, 2.0, 0.3).unwrap(),
            ScalarPrior::gaussian(-1.0, 3.0).unwrap(),
        ] {
            let d = discretize(&p).unwrap();
            let (a, b) = (p.moments(), d.moments());
            assert!((a.mean - b.mean).abs() < 1e-12);
            assert!((a.variance - b.variance).abs() < 1e-12);
            assert!((a.fourth_moment - b.fourth_moment).abs() < 1e-10 * a.fourth_moment);
        }
    }

    #[test]
    fn card_bound_arithmetic() {
        let run = estimate_sequences(&ScalarPrior::binary(), 2, 6, 200, 4).unwrap();
        assert!(check_card_bound(&run.info, 0.0).is_err());
        let huge = check_card_bound(&run.info, 10.0).unwrap();
        assert_eq!(huge.count, 0);
        assert!(huge.holds && huge.bound < 1.0);
        assert!(check_card_bound(&run.info, 1e-12).unwrap().holds);
    }

    #[test]
    fn mmse_bound_argument_checks() {
        let run = estimate_sequences(&ScalarPrior::binary(), 2, 4, 50, 4).unwrap();
        assert!(check_theorem_mmse_lb(&run.info, &run.mmse, 2, 2).is_err());
        assert!(check_theorem_mmse_lb(&run.info, &run.mmse, 0, 5).is_err());
        assert!(check_theorem_mmse_lb(&run.info, &run.mmse, 0, 4).is_ok());
    }

    #[test]
    fn covariance_decomposition_sums_to_frobenius() {
        let p = ScalarPrior::<f64>::binary();
        let s = mean_squared_covariance(&p, 4, 3, 50, 8).unwrap();
        assert!((s.decomposition_total() - s.frobenius).abs() < 1e-9 * s.frobenius);
        assert!(s.mean_term >= 0.0 && s.variance_term >= 0.0 && s.spread_term >= -1e-12);
        assert!(s.sandwich_holds());
    }

    #[test]
    fn table_layout() {
        let run = estimate_sequences(&ScalarPrior::binary(), 2, 3, 20, 0).unwrap();
        let csv = run.to_table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "m,I,I_se,Iprime,Idprime,M,M_se,msc");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].contains(",NA,NA,"));
    }
}
