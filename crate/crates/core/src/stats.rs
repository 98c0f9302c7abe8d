//! Monte Carlo summaries.

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, std_err: 0.0 }
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_err: f64::NAN };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, std_err: f64::NAN };
        }
        let ss = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        Self { mean, std_err: (ss / ((n - 1) * n) as f64).sqrt() }
    }
}

/// Delete-one jackknife standard error of `f(column means)`.
///
/// `columns[j][t]` is the value of statistic `j` in trial `t`; every column
/// must have the same length (at least 2).
pub fn jackknife_se<F: Fn(&[f64]) -> f64>(columns: &[&[f64]], f: F) -> f64 {
    let t = columns[0].len();
    assert!(t >= 2 && columns.iter().all(|c| c.len() == t), "jackknife needs equal columns of length >= 2");
    let totals: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let mut loo = vec![0.0; columns.len()];
    let values: Vec<f64> = (0..t)
        .map(|i| {
            for (j, c) in columns.iter().enumerate() {
                loo[j] = (totals[j] - c[i]) / (t - 1) as f64;
            }
            f(&loo)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / t as f64;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (ss * (t - 1) as f64 / t as f64).sqrt()
}
