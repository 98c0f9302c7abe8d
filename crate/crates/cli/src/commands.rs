//! Experiment recipes. Each command declares its keys, parses them all into a
//! plan, and only then runs.

use anyhow::{bail, Context, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::{json, Value};

use slm_core::amp::{amp_diagnostics, amp_run, AmpOutput, AmpSettings, TauEstimate};
use slm_core::exact::{detection_roc, exact_marginals, iid, roc_table, uniform_thresholds, MixturePosterior, RocPoint};
use slm_core::info_sequences::{
    check_card_bound, check_theorem_ip_ub, check_theorem_mmse_lb_all, check_theorem_monotone, estimate_sequences,
    mean_squared_covariance, SequenceCheck,
};
use slm_core::linear_model::{generate_instance, sample_instance};
use slm_core::replica::{
    fixed_point_curve, locate_phase_transition, replica_solution, replica_sweep, solutions_table, state_evolution,
};
use slm_core::rng::stream;
use slm_core::scalar_channel::{scalar_mmse, ScalarChannel};
use slm_core::subset::{subset_experiment, SubsetConfig};
use slm_core::table::{format_f64, Table};
use slm_core::Curve;

use crate::config::{key, sized, Config, Key};
use crate::output::RunDir;

pub type Plan = Box<dyn FnOnce(&mut RunDir) -> Result<Value>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Gaussian-channel squared error, posterior variance and MMSE against snr.
    ScalarCurve,
    /// AMP squared error and replica MMSE against the number of observations.
    SlmSweep,
    /// Support-detection ROC curves for the Gaussian channel and AMP at two operating points.
    Roc,
    /// Replica solutions over a grid of measurement rates.
    Replica,
    /// The fixed-point curve delta(M) and the information derivative.
    FixedPointCurve,
    /// Information-theoretic and algorithmic phase transitions.
    Phase,
    /// One AMP run with its state-evolution prediction.
    AmpRun,
    /// AMP inclusion probabilities against exact enumeration on small instances.
    OracleCompare,
    /// Incremental information and MMSE sequences with the theorem checks.
    Infoseq,
    /// Subset-response decomposition statistics.
    Subset,
}

const COMMON: &[Key] = &[
    key("seed", "1", "base seed; trial t draws from stream (seed, t)"),
    key("out_dir", "out", "output directory"),
    key("threads", "0", "worker threads (0 = all cores); never changes results"),
];

const AMP: &[Key] = &[
    key("tau_mode", "posterior-variance", "posterior-variance | residual | per-entry"),
    key("damping", "0", "weight on the previous estimate, in [0, 1)"),
    key("max_iter", "200", "iteration cap"),
    key("tol", "1e-8", "relative change that stops the iteration"),
];

impl Command {
    #[cfg(test)]
    pub const ALL: [Command; 10] = [
        Command::ScalarCurve,
        Command::SlmSweep,
        Command::Roc,
        Command::Replica,
        Command::FixedPointCurve,
        Command::Phase,
        Command::AmpRun,
        Command::OracleCompare,
        Command::Infoseq,
        Command::Subset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::ScalarCurve => "scalar-curve",
            Command::SlmSweep => "slm-sweep",
            Command::Roc => "roc",
            Command::Replica => "replica",
            Command::FixedPointCurve => "fixed-point-curve",
            Command::Phase => "phase",
            Command::AmpRun => "amp-run",
            Command::OracleCompare => "oracle-compare",
            Command::Infoseq => "infoseq",
            Command::Subset => "subset",
        }
    }

    pub fn schema(self) -> Vec<Key> {
        let own: &[Key] = match self {
            Command::ScalarCurve => &[
                key("prior", "flagship", "prior spec"),
                key("n", "10000", "variables in the seeded draw"),
                key("s_min", "1e-7", "smallest snr"),
                key("s_max", "100", "largest snr"),
                key("s_points", "64", "log-spaced grid size"),
            ],
            Command::SlmSweep => &[
                key("prior", "flagship", "prior spec"),
                sized("n", "2000", "10000", "number of variables"),
                key("delta_min", "0", "first rate M/N"),
                key("delta_max", "0.6", "last rate M/N"),
                key("delta_step", "0.01", "rate increment"),
            ],
            Command::Roc => &[
                key("prior", "flagship", "prior spec"),
                sized("n", "2000", "10000", "number of variables"),
                key("delta_a", "0.30", "rate of point A (above the jump in error)"),
                key("delta_b", "0.40", "rate of point B (below the jump)"),
                key("thresholds", "512", "uniform thresholds in [0, 1]"),
            ],
            Command::Replica => &[
                key("prior", "flagship", "prior spec"),
                key("delta_min", "0.05", "first rate"),
                key("delta_max", "1", "last rate"),
                key("delta_points", "96", "linear grid size"),
            ],
            Command::FixedPointCurve => &[
                key("prior", "flagship", "prior spec"),
                key("m_points", "400", "log-spaced MMSE grid size"),
                key("m_min_frac", "1e-9", "smallest MMSE as a fraction of Var(X)"),
            ],
            Command::Phase => &[
                key("prior", "flagship", "prior spec"),
                key("delta_lo", "0.05", "bracket start"),
                key("delta_hi", "1", "bracket end"),
                key("tol", "1e-6", "bisection tolerance in delta"),
            ],
            Command::AmpRun => &[
                key("prior", "flagship", "prior spec"),
                sized("n", "2000", "10000", "number of variables"),
                key("delta", "2", "rate M/N"),
            ],
            Command::OracleCompare => &[
                key("prior", "flagship", "prior spec"),
                key("n", "12", "number of variables (at most 20)"),
                key("delta", "1.5", "rate M/N"),
                key("trials", "50", "instances"),
            ],
            Command::Infoseq => &[
                key("prior", "binary", "finite-atom prior spec"),
                key("n", "4", "number of variables"),
                key("m", "12", "number of measurements"),
                key("trials", "2000", "Monte Carlo trials"),
                key("card_threshold", "0.05", "threshold T of the second-difference count"),
            ],
            Command::Subset => &[
                key("subset_prior", "binary", "prior of the entries in S = {1..K}"),
                key("complement_prior", "binary", "prior of the other entries"),
                key("n", "12", "number of variables (complement enumerated exactly)"),
                key("m", "18", "number of measurements"),
                key("k", "1", "subset size"),
                key("trials", "2000", "Monte Carlo trials"),
            ],
        };
        let amp = matches!(self, Command::SlmSweep | Command::Roc | Command::AmpRun | Command::OracleCompare);
        let mut keys: Vec<Key> = COMMON.to_vec();
        keys.extend_from_slice(own);
        if amp {
            keys.extend_from_slice(AMP);
            if self == Command::OracleCompare {
                keys.iter_mut().filter(|k| k.name == "tau_mode").for_each(|k| k.default = "per-entry");
            }
        }
        keys
    }

    /// Parses every key this command uses; errors are left in `c`.
    pub fn plan(self, c: &mut Config) -> Plan {
        match self {
            Command::ScalarCurve => scalar_curve(c),
            Command::SlmSweep => slm_sweep(c),
            Command::Roc => roc(c),
            Command::Replica => replica(c),
            Command::FixedPointCurve => fixed_point(c),
            Command::Phase => phase(c),
            Command::AmpRun => amp_single(c),
            Command::OracleCompare => oracle_compare(c),
            Command::Infoseq => infoseq(c),
            Command::Subset => subset(c),
        }
    }
}

fn amp_settings(c: &mut Config) -> AmpSettings {
    let tau_estimate = match c.choice("tau_mode", &["posterior-variance", "residual", "per-entry"]) {
        "residual" => TauEstimate::Residual,
        "per-entry" => TauEstimate::PerEntry,
        _ => TauEstimate::PosteriorVariance,
    };
    let damping = c.f64("damping");
    c.require((0.0..1.0).contains(&damping), &["damping"], "damping must lie in [0, 1)");
    AmpSettings { max_iter: c.positive("max_iter"), tol: c.positive_f64("tol"), damping, tau_estimate }
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

fn status(out: &AmpOutput) -> &'static str {
    if out.diverged {
        "diverged"
    } else if out.converged {
        "converged"
    } else {
        "max_iter"
    }
}

fn check_json(c: &SequenceCheck) -> Value {
    json!({ "worst": c.worst, "worst_at": c.worst_at, "violations": c.violations, "checked": c.checked, "passed": c.passed() })
}

/// Largest one-step drop `v[i] / v[i+1]` along a column, with the rows it falls between.
fn largest_drop(rows: &[usize], values: &[f64]) -> Value {
    let best = (0..values.len().saturating_sub(1))
        .filter(|&i| values[i].is_finite() && values[i + 1].is_finite() && values[i + 1] > 0.0)
        .map(|i| (i, values[i] / values[i + 1]))
        .fold(None::<(usize, f64)>, |acc, (i, r)| match acc {
            Some((_, best)) if best >= r => acc,
            _ => Some((i, r)),
        });
    match best {
        Some((i, ratio)) => json!({ "between": [rows[i], rows[i + 1]], "ratio": ratio }),
        None => Value::Null,
    }
}

fn scalar_curve(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let n = c.positive("n");
    let (s_min, s_max) = (c.positive_f64("s_min"), c.positive_f64("s_max"));
    let points = c.positive("s_points");
    c.require(s_max > s_min, &["s_min", "s_max"], "need s_min < s_max");
    let seed = c.u64("seed");
    Box::new(move |out| {
        let grid = log_grid(s_min, s_max, points);
        let mut rng = stream(seed, 0);
        let x: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let rows: Vec<[f64; 4]> = grid
            .par_iter()
            .map(|&s| {
                let ch = ScalarChannel::new(&prior, s)?;
                let (mut err, mut var) = (0.0, 0.0);
                for (&xi, &wi) in x.iter().zip(&w) {
                    let p = ch.posterior(s.sqrt() * xi + wi);
                    err += (p.mean - xi).powi(2);
                    var += p.variance;
                }
                Ok([s, err / n as f64, var / n as f64, scalar_mmse(&prior, s)?])
            })
            .collect::<slm_core::Result<_>>()?;
        let mut t = Table::new(&["s", "avg_sq_err", "avg_post_var", "avg_mmse"]);
        rows.iter().for_each(|r| t.push_f64(r));
        out.csv("scalar_curve.csv", &t)?;
        out.csv("scalar_functions.csv", &Curve::compute(&prior, &grid)?.to_table())?;
        let worst = rows.iter().map(|r| (r[1] - r[3]).abs() / r[3]).fold(0.0, f64::max);
        Ok(json!({ "points": rows.len(), "max_rel_gap_sq_err_vs_mmse": worst }))
    })
}

fn slm_sweep(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let n = c.positive("n");
    let (lo, hi, step) = (c.f64("delta_min"), c.f64("delta_max"), c.positive_f64("delta_step"));
    c.require(lo >= 0.0 && hi >= lo, &["delta_min", "delta_max"], "need 0 <= delta_min <= delta_max");
    let settings = amp_settings(c);
    let seed = c.u64("seed");
    Box::new(move |out| {
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let mut ms: Vec<usize> = (0..count).map(|i| ((lo + step * i as f64) * n as f64).round() as usize).collect();
        ms.dedup();
        let row = |m: usize| -> Result<(f64, f64, f64, &'static str)> {
            if m == 0 {
                let inst = sample_instance(&prior, n, 0, &mut stream(seed, 0), seed)?;
                let err = inst.x_true.iter().map(|x| (x - prior.mean()).powi(2)).sum::<f64>() / n as f64;
                return Ok((err, prior.variance(), prior.variance(), "prior"));
            }
            let delta = m as f64 / n as f64;
            let replica = replica_solution(&prior, delta)?.mmse;
            let inst = generate_instance(&prior, n, m, seed)?;
            Ok(match amp_run(&inst, &prior, settings) {
                Ok(o) => {
                    let d = amp_diagnostics(&o, &inst.x_true)?;
                    (d.avg_sq_error, d.avg_posterior_variance, replica, status(&o))
                }
                Err(_) => (f64::NAN, f64::NAN, replica, "error"),
            })
        };
        // full-size matrices are large; only run rows concurrently when they are small
        let m_max = ms.last().copied().unwrap_or(0);
        let rows: Vec<_> = if n.saturating_mul(m_max) <= 25_000_000 {
            ms.par_iter().map(|&m| row(m)).collect::<Result<_>>()?
        } else {
            ms.iter().map(|&m| row(m)).collect::<Result<_>>()?
        };
        let mut t = Table::new(&["M_obs", "amp_sq_err", "amp_post_var", "replica_mmse", "amp_status"]);
        for (m, r) in ms.iter().zip(&rows) {
            t.push(vec![m.to_string(), format_f64(r.0), format_f64(r.1), format_f64(r.2), r.3.to_string()]);
        }
        out.csv("slm_sweep.csv", &t)?;
        let amp: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let rep: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let unconverged: Vec<usize> = ms.iter().zip(&rows).filter(|(_, r)| r.3 != "converged" && r.3 != "prior").map(|(m, _)| *m).collect();
        Ok(json!({
            "rows": ms.len(),
            "replica_jump": largest_drop(&ms, &rep),
            "amp_jump": largest_drop(&ms, &amp),
            "amp_not_converged": unconverged,
        }))
    })
}

fn auc(points: &[RocPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().filter_map(|p| Some((p.fpr?, p.tpr?))).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

fn roc(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let n = c.positive("n");
    let points = [("a", c.positive_f64("delta_a")), ("b", c.positive_f64("delta_b"))];
    let thresholds = uniform_thresholds(c.positive("thresholds"));
    let settings = amp_settings(c);
    let seed = c.u64("seed");
    Box::new(move |out| {
        let mut summary = serde_json::Map::new();
        for (idx, (label, delta)) in points.into_iter().enumerate() {
            let m = ((delta * n as f64).round() as usize).max(1);
            let inst = generate_instance(&prior, n, m, seed)?;
            let amp = amp_run(&inst, &prior, settings)?;
            let truth: Vec<bool> = inst.x_true.iter().map(|&x| x != 0.0).collect();
            let slm_roc = detection_roc(&amp.inclusion(), &truth, &thresholds)?;
            out.csv(&format!("roc_slm_{label}.csv"), &roc_table(&slm_roc))?;

            // Gaussian channel at the snr of AMP's final pseudo-data: matched squared error
            let tau2 = amp.trace.last().context("AMP produced no iterations")?.tau2;
            let s = 1.0 / tau2;
            let ch = ScalarChannel::new(&prior, s)?;
            let mut rng = stream(seed, 1 + idx as u64);
            let x: Vec<f64> = (0..n).map(|_| prior.sample(&mut rng)).collect();
            let posts: Vec<_> = x.iter().map(|&xi| ch.posterior(s.sqrt() * xi + rng.sample::<f64, _>(StandardNormal))).collect();
            let gammas: Vec<f64> = posts.iter().map(|p| p.inclusion.clamp(0.0, 1.0)).collect();
            let truth_g: Vec<bool> = x.iter().map(|&v| v != 0.0).collect();
            let gauss_roc = detection_roc(&gammas, &truth_g, &thresholds)?;
            out.csv(&format!("roc_gaussian_{label}.csv"), &roc_table(&gauss_roc))?;

            let gauss_err = posts.iter().zip(&x).map(|(p, xi)| (p.mean - xi).powi(2)).sum::<f64>() / n as f64;
            summary.insert(
                label.to_string(),
                json!({
                    "delta": delta,
                    "m": m,
                    "snr": s,
                    "amp_status": status(&amp),
                    "slm_sq_err": amp_diagnostics(&amp, &inst.x_true)?.avg_sq_error,
                    "gaussian_sq_err": gauss_err,
                    "slm_auc": auc(&slm_roc),
                    "gaussian_auc": auc(&gauss_roc),
                }),
            );
        }
        Ok(Value::Object(summary))
    })
}

fn replica(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let (lo, hi, points) = (c.positive_f64("delta_min"), c.positive_f64("delta_max"), c.positive("delta_points"));
    c.require(hi > lo, &["delta_min", "delta_max"], "need delta_min < delta_max");
    Box::new(move |out| {
        let grid: Vec<f64> =
            (0..points).map(|i| if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 }).collect();
        let sols = replica_sweep(&prior, &grid)?;
        out.csv("replica.csv", &solutions_table(&sols))?;
        let ties: Vec<f64> = sols.iter().filter(|s| !s.unique).map(|s| s.delta).collect();
        Ok(json!({ "points": sols.len(), "non_unique_at": ties }))
    })
}

fn fixed_point(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let points = c.positive("m_points");
    let frac = c.positive_f64("m_min_frac");
    c.require(frac < 1.0, &["m_min_frac"], "m_min_frac must be below 1");
    Box::new(move |out| {
        let var = prior.variance();
        let grid = log_grid(var * frac, var * (1.0 - 1e-6), points.max(2));
        let curve = fixed_point_curve(&prior, &grid)?;
        out.csv("fixed_point_curve.csv", &curve.to_table())?;
        let turning: Vec<Value> = curve.turning_points().iter().map(|p| json!({ "delta": p.delta, "M": p.mmse })).collect();
        Ok(json!({ "points": curve.points.len(), "rejected": curve.rejected.len(), "turning_points": turning }))
    })
}

fn phase(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let (lo, hi, tol) = (c.positive_f64("delta_lo"), c.positive_f64("delta_hi"), c.positive_f64("tol"));
    c.require(hi > lo, &["delta_lo", "delta_hi"], "need delta_lo < delta_hi");
    Box::new(move |out| {
        let found = locate_phase_transition(&prior, lo, hi, tol)?;
        let mut t = Table::new(&["delta_star", "delta_alg", "mmse_minus", "mmse_plus"]);
        match found {
            Some(p) => t.push_f64(&[p.delta_star, p.delta_alg, p.mmse_minus, p.mmse_plus]),
            None => t.push(vec!["NA".into(); 4]),
        }
        out.csv("phase.csv", &t)?;
        Ok(match found {
            Some(p) => json!({
                "delta_star": p.delta_star,
                "delta_alg": p.delta_alg,
                "mmse_minus": p.mmse_minus,
                "mmse_plus": p.mmse_plus,
            }),
            None => json!({ "delta_star": null, "delta_alg": null }),
        })
    })
}

fn amp_single(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let n = c.positive("n");
    let delta = c.positive_f64("delta");
    let settings = amp_settings(c);
    let seed = c.u64("seed");
    Box::new(move |out| {
        let m = ((delta * n as f64).round() as usize).max(1);
        let inst = generate_instance(&prior, n, m, seed)?;
        let amp = amp_run(&inst, &prior, settings)?;
        out.csv("amp_trace.csv", &amp.trace_table())?;
        out.csv("amp_marginals.csv", &amp.marginals_table(&inst.x_true))?;
        let rate = m as f64 / n as f64;
        let se = state_evolution(&prior, rate, prior.variance(), settings.max_iter, 1e-12 * prior.variance())?;
        let mut t = Table::new(&["iter", "M", "tau2"]);
        for (i, &mt) in se.trajectory.iter().enumerate() {
            t.push(vec![i.to_string(), format_f64(mt), format_f64((1.0 + mt) / rate)]);
        }
        out.csv("state_evolution.csv", &t)?;
        let d = amp_diagnostics(&amp, &inst.x_true)?;
        Ok(json!({
            "m": m,
            "status": status(&amp),
            "iterations": amp.iterations,
            "avg_sq_error": d.avg_sq_error,
            "avg_posterior_variance": d.avg_posterior_variance,
            "se_limit": se.limit(),
        }))
    })
}

fn oracle_compare(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let n = c.positive("n");
    let delta = c.positive_f64("delta");
    let trials = c.positive("trials");
    c.require(n <= 20, &["n"], "exact enumeration needs n <= 20");
    let settings = amp_settings(c);
    let seed = c.u64("seed");
    Box::new(move |out| {
        let m = ((delta * n as f64).round() as usize).max(1);
        let priors = iid(&prior, n);
        let runs: Vec<_> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let inst = sample_instance(&prior, n, m, &mut stream(seed, t as u64), seed)?;
                let post = MixturePosterior::compute(&inst.a, &inst.y, &priors)?;
                let amp = amp_run(&inst, &prior, settings)?;
                Ok((exact_marginals(&post), amp, post.weight_sum()))
            })
            .collect::<slm_core::Result<_>>()?;
        let mut rows = Table::new(&["n", "gamma_exact", "gamma_amp", "mean_exact", "mean_amp"]);
        let (exact0, amp0, _) = &runs[0];
        for (j, (e, a)) in exact0.iter().zip(&amp0.marginals).enumerate() {
            rows.push(vec![j.to_string(), format_f64(e.gamma), format_f64(a.inclusion), format_f64(e.mean), format_f64(a.mean)]);
        }
        out.csv("oracle_compare.csv", &rows)?;
        let mut per = Table::new(&["trial", "max_gamma_dev", "max_mean_dev", "weight_sum", "amp_status"]);
        let (mut total, mut worst_norm) = (0.0, 0.0f64);
        for (t, (exact, amp, wsum)) in runs.iter().enumerate() {
            let dg = exact.iter().zip(&amp.marginals).map(|(e, a)| (e.gamma - a.inclusion).abs()).fold(0.0, f64::max);
            let dm = exact.iter().zip(&amp.marginals).map(|(e, a)| (e.mean - a.mean).abs()).fold(0.0, f64::max);
            total += dg;
            worst_norm = worst_norm.max((wsum - 1.0).abs());
            per.push(vec![t.to_string(), format_f64(dg), format_f64(dm), format_f64(*wsum), status(amp).to_string()]);
        }
        out.csv("oracle_trials.csv", &per)?;
        Ok(json!({ "m": m, "mean_max_gamma_dev": total / trials as f64, "max_weight_sum_dev": worst_norm }))
    })
}

fn infoseq(c: &mut Config) -> Plan {
    let prior = c.prior("prior");
    let (n, m, trials) = (c.positive("n"), c.positive("m"), c.positive("trials"));
    c.require(trials >= 2, &["trials"], "need at least 2 trials for standard errors");
    let threshold = c.positive_f64("card_threshold");
    let seed = c.u64("seed");
    Box::new(move |out| {
        let run = estimate_sequences(&prior, n, m, trials, seed)?;
        out.csv("infoseq.csv", &run.to_table())?;
        let mut scatter = Table::new(&["m", "msc", "msc_se", "abs_idprime_quarter"]);
        for (k, d) in run.info.i_dprime.iter().enumerate() {
            scatter.push_f64(&[k as f64, run.msc[k].mean, run.msc[k].std_err, d.abs().powf(0.25)]);
        }
        out.csv("msc_scatter.csv", &scatter)?;

        let mono = check_theorem_monotone(&run.info);
        let ub = check_theorem_ip_ub(&run.info, &run.mmse)?;
        let lb = check_theorem_mmse_lb_all(&run.info, &run.mmse)?;
        let card = check_card_bound(&run.info, threshold)?;
        let cov = mean_squared_covariance(&prior, n, m, trials, seed)?;
        let all = mono.passed() && ub.passed() && lb.passed() && card.holds;
        Ok(json!({
            "all_pass": all,
            "monotone_increments": check_json(&mono),
            "increment_upper_bound": check_json(&ub),
            "mmse_lower_bound": check_json(&lb),
            "second_difference_count": {
                "threshold": card.threshold,
                "count": card.count,
                "significant_count": card.significant_count,
                "bound": card.bound,
                "holds": card.holds,
            },
            "covariance_at_m": {
                "msc": cov.msc.mean,
                "msc_se": cov.msc.std_err,
                "frobenius": cov.frobenius,
                "decomposition_total": cov.decomposition_total(),
                "sandwich_holds": cov.sandwich_holds(),
            },
        }))
    })
}

fn subset(c: &mut Config) -> Plan {
    let config = SubsetConfig {
        subset_prior: c.prior("subset_prior"),
        complement_prior: c.prior("complement_prior"),
        n: c.positive("n"),
        m: c.positive("m"),
        k: c.positive("k"),
        trials: c.positive("trials"),
        seed: c.u64("seed"),
    };
    c.require(config.k < config.n && config.k <= config.m, &["k", "n", "m"], "need k < n and k <= m");
    c.require(config.trials >= 500, &["trials"], "the independence statistic needs at least 500 trials");
    Box::new(move |out| {
        let e = subset_experiment(&config)?;
        out.csv("subset.csv", &e.to_table())?;
        let diags: Vec<Value> = e
            .diagnostics()?
            .iter()
            .map(|d| {
                json!({
                    "mean": d.mean,
                    "variance": d.variance,
                    "skewness": d.skewness,
                    "excess_kurtosis": d.excess_kurtosis,
                    "ks_distance": d.ks_distance,
                    "flagged": d.flagged(),
                })
            })
            .collect();
        let threshold = 3.0 / (config.trials as f64).sqrt();
        let independence = e.independence()?;
        let control = e.positive_control()?;
        if !(independence.is_finite() && control.is_finite()) {
            bail!("non-finite correlation statistics");
        }
        let summary = json!({
            "v_diagnostics": diags,
            "independence": independence,
            "independence_threshold": threshold,
            "positive_control": control,
            "noise_variance_deviation": e.noise_variance_deviation(),
            "max_orthogonality_residual": e.max_orthogonality_residual,
            "max_factorization_residual": e.max_factorization_residual,
            "max_identity_residual": e.max_identity_residual,
        });
        out.json("subset_summary.json", &summary)?;
        Ok(summary)
    })
}
