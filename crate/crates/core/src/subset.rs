//! Response of a small block `x_S` of the signal after interference subtraction.
//!
//! With `A_S = Q1 R` (thin QR, `diag R >= 0`) and `Q2` a uniformly random
//! orthonormal basis of the complement of `range(Q1)`, rotating by
//! `Q = [Q1 Q2]` gives
//!
//! ```text
//! [y1]   [R  B1] [x_S ]   [w1]
//! [y2] = [0  B2] [x_Sc] + [w2],     B = Q^T A_Sc,  w~ = Q^T w
//! ```
//!
//! so `y2` carries no information about `x_S`. Subtracting `B1 E[x_Sc | y2, B2]`
//! from `y1` leaves `z = R x_S + v` with `v = B1 (x_Sc - E[x_Sc | y2, B2]) + w1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exact::{iid, MixturePosterior};
use crate::linear_model::{sample_matrix, LinearModelInstance};
use crate::rng::stream;
use crate::scalar_channel::ScalarPrior;
use crate::table::{format_f64, Table};

/// Largest acceptable residual of the exact identities.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetDecomposition {
    pub subset: Vec<usize>,
    pub complement: Vec<usize>,
    /// `M x K`.
    pub q1: DMatrix<f64>,
    /// `M x (M - K)`.
    pub q2: DMatrix<f64>,
    /// `K x K` upper triangular with nonnegative diagonal.
    pub r: DMatrix<f64>,
    pub y1: DVector<f64>,
    pub y2: DVector<f64>,
    /// `Q1^T A_Sc`.
    pub b1: DMatrix<f64>,
    /// `Q2^T A_Sc`.
    pub b2: DMatrix<f64>,
}

impl SubsetDecomposition {
    pub fn k(&self) -> usize {
        self.subset.len()
    }

    /// `[Q1 Q2]`.
    pub fn q(&self) -> DMatrix<f64> {
        let m = self.q1.nrows();
        let mut q = DMatrix::zeros(m, m);
        q.columns_mut(0, self.k()).copy_from(&self.q1);
        q.columns_mut(self.k(), m - self.k()).copy_from(&self.q2);
        q
    }

    /// `max |Q^T Q - I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let q = self.q();
        let m = q.nrows();
        (q.transpose() * &q - DMatrix::identity(m, m)).amax()
    }

    /// `max |A_S - Q1 R|`, `max |Q2^T A_S|`, and the lower triangle of `R`.
    pub fn factorization_residual(&self, a: &DMatrix<f64>) -> f64 {
        let a_s = a.select_columns(&self.subset);
        let recon = (&a_s - &self.q1 * &self.r).amax();
        let leak = if self.q2.ncols() > 0 { (self.q2.transpose() * &a_s).amax() } else { 0.0 };
        let lower = (0..self.k()).flat_map(|i| (0..i).map(move |j| (i, j))).map(|ij| self.r[ij].abs()).fold(0.0, f64::max);
        recon.max(leak).max(lower)
    }
}

fn check_subset(subset: &[usize], n: usize, m: usize) -> Result<Vec<usize>> {
    let k = subset.len();
    if k == 0 || k > m || k >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= K <= M and K < N (got K={k}, M={m}, N={n})")));
    }
    let mut seen = vec![false; n];
    for &j in subset {
        if j >= n || seen[j] {
            return Err(Error::InvalidArgument(format!("subset indices must be distinct and < {n}")));
        }
        seen[j] = true;
    }
    Ok((0..n).filter(|&j| !seen[j]).collect())
}

/// Thin QR with a nonnegative diagonal; errors when the columns are dependent.
fn positive_qr(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let qr = a.clone().qr();
    let (mut q, mut r) = (qr.q(), qr.r());
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    for i in 0..r.nrows() {
        if !(r[(i, i)].abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) * a.nrows() as f64) {
            return Err(Error::RankDeficient(format!("column {i} is (numerically) dependent on the previous ones")));
        }
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Ok((q, r))
}

/// Decomposes `(A, y)` around `subset` with `Q2` drawn from `rng`.
///
/// `Q2` is the positive-diagonal QR factor of a Gaussian block projected onto
/// the complement of `range(Q1)` (projected twice for orthogonality to working
/// precision), which is Haar-distributed on that complement.
pub fn qr_split_with_rng<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    subset: &[usize],
    rng: &mut R,
) -> Result<SubsetDecomposition> {
    let (m, n) = a.shape();
    if y.len() != m {
        return Err(Error::Dimension(format!("y has {} entries for {m} rows", y.len())));
    }
    let complement = check_subset(subset, n, m)?;
    let (q1, r) = positive_qr(&a.select_columns(subset))?;
    let k = subset.len();
    let q2 = if k < m {
        let mut g = DMatrix::from_fn(m, m - k, |_, _| rng.sample::<f64, _>(StandardNormal));
        for _ in 0..2 {
            g -= &q1 * (q1.transpose() * &g);
        }
        let (mut q2, _) = positive_qr(&g)?;
        q2 -= &q1 * (q1.transpose() * &q2);
        positive_qr(&q2)?.0
    } else {
        DMatrix::zeros(m, 0)
    };
    let a_c = a.select_columns(&complement);
    Ok(SubsetDecomposition {
        subset: subset.to_vec(),
        complement,
        y1: q1.transpose() * y,
        y2: q2.transpose() * y,
        b1: q1.transpose() * &a_c,
        b2: q2.transpose() * &a_c,
        q1,
        q2,
        r,
    })
}

/// [`qr_split_with_rng`] with `Q2` drawn from stream `(seed, 0)`.
pub fn qr_split(a: &DMatrix<f64>, y: &DVector<f64>, subset: &[usize], seed: u64) -> Result<SubsetDecomposition> {
    qr_split_with_rng(a, y, subset, &mut stream(seed, 0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetResponse {
    /// `y1 - B1 E[x_Sc | y2, B2]`.
    pub z: DVector<f64>,
    /// `B1 (x_Sc - E[x_Sc | y2, B2]) + Q1^T w`.
    pub v: DVector<f64>,
    /// `E[x_Sc | y2, B2]`.
    pub complement_mean: DVector<f64>,
    /// `max |z - R x_S - v|`.
    pub identity_residual: f64,
}

/// Interference subtraction with the exact posterior of `x_Sc` under an iid
/// `complement_prior` (`N - K <= 20` for two-component priors).
///
/// `z` is formed from the data alone and `v` from its definition with the true
/// `x_Sc` and `w`; the identity `z = R x_S + v` is then checked, and a residual
/// above [`IDENTITY_TOL`] (relative to the size of `z`) is an error.
pub fn interference_subtract(
    decomp: &SubsetDecomposition,
    instance: &LinearModelInstance,
    complement_prior: &ScalarPrior<f64>,
) -> Result<SubsetResponse> {
    let priors = iid(complement_prior, decomp.complement.len());
    let post = MixturePosterior::compute(&decomp.b2, &decomp.y2, &priors)?;
    let complement_mean = post.mean().clone();
    let z = &decomp.y1 - &decomp.b1 * &complement_mean;
    let x_s = instance.x_true.select_rows(&decomp.subset);
    let x_c = instance.x_true.select_rows(&decomp.complement);
    let v = &decomp.b1 * (x_c - &complement_mean) + decomp.q1.transpose() * &instance.w;
    let identity_residual = (&z - &decomp.r * x_s - &v).amax();
    let scale = 1.0f64.max(decomp.y1.amax()).max((&decomp.b1 * &complement_mean).amax());
    if !(identity_residual <= IDENTITY_TOL * scale) {
        return Err(Error::Refinement { residual: identity_residual, tol: IDENTITY_TOL * scale });
    }
    Ok(SubsetResponse { z, v, complement_mean, identity_residual })
}

/// Moment and distance statistics of a sample against its fitted normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianityDiagnostic {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov–Smirnov distance to `N(mean, variance)`.
    pub ks_distance: f64,
}

impl GaussianityDiagnostic {
    /// True when a statistic is far outside its Gaussian sampling range:
    /// `|skew| > 4 sqrt(6/n)`, `|kurt| > 4 sqrt(24/n)`, or the KS distance above
    /// the 1% Lilliefors point `1.031 / sqrt(n)`.
    pub fn flagged(&self) -> bool {
        let n = self.samples as f64;
        self.skewness.abs() > 4.0 * (6.0 / n).sqrt()
            || self.excess_kurtosis.abs() > 4.0 * (24.0 / n).sqrt()
            || self.ks_distance > 1.031 / n.sqrt()
    }
}

pub fn gaussianity_diagnostic(samples: &[f64]) -> Result<GaussianityDiagnostic> {
    let n = samples.len();
    if n < 200 {
        return Err(Error::InvalidArgument(format!("need at least 200 samples (got {n})")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gaussianity_diagnostic"));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let moment = |p: i32| samples.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    if !(m2 > 0.0) {
        return Err(Error::InvalidArgument("samples have zero variance".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fitted = Normal::new(mean, m2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let ks_distance = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = fitted.cdf(x);
            ((i + 1) as f64 / nf - f).max(f - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    Ok(GaussianityDiagnostic {
        samples: n,
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        ks_distance,
    })
}

/// Largest absolute Pearson correlation between any column of `a` and any
/// column of `b` (rows are paired samples); 0 when either has no columns.
pub fn max_abs_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!("{} vs {} paired samples", a.nrows(), b.nrows())));
    }
    let t = a.nrows() as f64;
    let standardize = |c: nalgebra::DVectorView<f64>| {
        let mean = c.sum() / t;
        let centred = c.map(|x| x - mean);
        let sd = (centred.norm_squared() / t).sqrt();
        if sd > 0.0 { centred / sd } else { centred }
    };
    let sa: Vec<DVector<f64>> = a.column_iter().map(&standardize).collect();
    let sb: Vec<DVector<f64>> = b.column_iter().map(standardize).collect();
    Ok(sa.iter().flat_map(|x| sb.iter().map(move |y| (x.dot(y) / t).abs())).fold(0.0, f64::max))
}

/// `max |corr(y2_i, x_S,j)|` over paired trials (rows); needs at least 500 rows.
pub fn independence_check(y2: &DMatrix<f64>, x_s: &DMatrix<f64>) -> Result<f64> {
    if y2.nrows() < 500 {
        return Err(Error::InvalidArgument(format!("need at least 500 paired samples (got {})", y2.nrows())));
    }
    max_abs_correlation(y2, x_s)
}

/// Monte Carlo study of the subset response on fresh instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetConfig {
    pub subset_prior: ScalarPrior<f64>,
    pub complement_prior: ScalarPrior<f64>,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetExperiment {
    pub config: SubsetConfig,
    /// Rows are trials.
    pub z: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub x_s: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    /// `Q^T w`.
    pub w_tilde: DMatrix<f64>,
    pub max_orthogonality_residual: f64,
    pub max_factorization_residual: f64,
    pub max_identity_residual: f64,
}

/// Runs `trials` instances with `S = {0, .., K-1}`: entries in `S` follow
/// `subset_prior` and the rest `complement_prior`. Trial `t` draws `x`, `A`,
/// `w` and then `Q2` from stream `(seed, t)`.
pub fn subset_experiment(config: &SubsetConfig) -> Result<SubsetExperiment> {
    let SubsetConfig { n, m, k, trials, seed, .. } = *config;
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let subset: Vec<usize> = (0..k).collect();
    check_subset(&subset, n, m)?;
    struct Trial {
        z: DVector<f64>,
        v: DVector<f64>,
        x_s: DVector<f64>,
        y1: DVector<f64>,
        y2: DVector<f64>,
        w_tilde: DVector<f64>,
        residuals: [f64; 3],
    }
    let rows: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let x = DVector::from_fn(n, |j, _| {
                if j < k { config.subset_prior.sample(&mut rng) } else { config.complement_prior.sample(&mut rng) }
            });
            let a = sample_matrix(m, n, &mut rng);
            let w = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let inst = LinearModelInstance::from_parts(a, x, w, seed)?;
            let d = qr_split_with_rng(&inst.a, &inst.y, &subset, &mut rng)?;
            let resp = interference_subtract(&d, &inst, &config.complement_prior)?;
            Ok(Trial {
                residuals: [d.orthogonality_residual(), d.factorization_residual(&inst.a), resp.identity_residual],
                w_tilde: d.q().transpose() * &inst.w,
                x_s: inst.x_true.rows(0, k).into_owned(),
                z: resp.z,
                v: resp.v,
                y1: d.y1,
                y2: d.y2,
            })
        })
        .collect::<Result<_>>()?;
    let stack = |f: fn(&Trial) -> &DVector<f64>, cols: usize| {
        DMatrix::from_fn(trials, cols, |i, j| f(&rows[i])[j])
    };
    let worst = |i: usize| rows.iter().map(|r| r.residuals[i]).fold(0.0, f64::max);
    Ok(SubsetExperiment {
        config: config.clone(),
        z: stack(|r| &r.z, k),
        v: stack(|r| &r.v, k),
        x_s: stack(|r| &r.x_s, k),
        y1: stack(|r| &r.y1, k),
        y2: stack(|r| &r.y2, m - k),
        w_tilde: stack(|r| &r.w_tilde, m),
        max_orthogonality_residual: worst(0),
        max_factorization_residual: worst(1),
        max_identity_residual: worst(2),
    })
}

impl SubsetExperiment {
    /// Largest `|Var(w~_i) - 1|` over coordinates (population variance about 0).
    pub fn noise_variance_deviation(&self) -> f64 {
        let t = self.w_tilde.nrows() as f64;
        self.w_tilde.column_iter().map(|c| (c.norm_squared() / t - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Diagnostics of each coordinate of `v`.
    pub fn diagnostics(&self) -> Result<Vec<GaussianityDiagnostic>> {
        self.v.column_iter().map(|c| gaussianity_diagnostic(c.as_slice())).collect()
    }

    /// `max |corr(y2, x_S)|`, which should be `O(1/sqrt(trials))`.
    pub fn independence(&self) -> Result<f64> {
        independence_check(&self.y2, &self.x_s)
    }

    /// Same statistic with `y1` in place of `y2`; `y1` carries `R x_S`, so this is large.
    pub fn positive_control(&self) -> Result<f64> {
        independence_check(&self.y1, &self.x_s)
    }

    /// Columns `trial,z_1..z_K,v_1..v_K`.
    pub fn to_table(&self) -> Table {
        let k = self.z.ncols();
        let mut header = vec!["trial".to_string()];
        header.extend((1..=k).map(|i| format!("z_{i}")));
        header.extend((1..=k).map(|i| format!("v_{i}")));
        let mut t = Table::with_header(header);
        for i in 0..self.z.nrows() {
            let mut row = vec![i.to_string()];
            row.extend(self.z.row(i).iter().chain(self.v.row(i).iter()).map(|&x| format_f64(x)));
            t.push(row);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_model::generate_instance;

    #[test]
    fn orthonormal_columns_give_identity_r() {
        let mut a = DMatrix::zeros(5, 4);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        a[(2, 2)] = 0.3;
        let d = qr_split(&a, &DVector::zeros(5), &[0, 1], 4).unwrap();
        assert!((&d.r - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        assert!((&d.q1 - a.columns(0, 2)).amax() < 1e-15);
        assert!(d.orthogonality_residual() < 1e-14);
    }

    #[test]
    fn random_matrix_factorization() {
        let p = ScalarPrior::gaussian(0.0, 1.0).unwrap();
        let inst = generate_instance(&p, 60, 40, 3).unwrap();
        let d = qr_split(&inst.a, &inst.y, &[5, 17, 33], 9).unwrap();
        assert!(d.factorization_residual(&inst.a) < 1e-10);
        assert!(d.orthogonality_residual() < 1e-10);
        assert!((0..3).all(|i| d.r[(i, i)] > 0.0));
        // same seed, same completion
        assert_eq!(d, qr_split(&inst.a, &inst.y, &[5, 17, 33], 9).unwrap());
        assert_ne!(d.q2, qr_split(&inst.a, &inst.y, &[5, 17, 33], 10).unwrap().q2);
    }

    #[test]
    fn full_subset_has_empty_completion() {
        let p = ScalarPrior::gaussian(0.0, 1.0).unwrap();
        let inst = generate_instance(&p, 6, 3, 1).unwrap();
        let d = qr_split(&inst.a, &inst.y, &[0, 1, 2], 0).unwrap();
        assert_eq!(d.q2.ncols(), 0);
        assert_eq!(d.y2.len(), 0);
        assert!(d.orthogonality_residual() < 1e-12);
        assert!(d.factorization_residual(&inst.a) < 1e-12);
    }

    #[test]
    fn rejects_bad_subsets() {
        let mut a = DMatrix::from_fn(4, 5, |i, j| (i + j) as f64);
        let y = DVector::zeros(4);
        assert!(qr_split(&a, &y, &[], 0).is_err());
        assert!(qr_split(&a, &y, &[1, 1], 0).is_err());
        assert!(qr_split(&a, &y, &[7], 0).is_err());
        a.set_column(2, &a.column(1).clone_owned());
        assert!(matches!(qr_split(&a, &y, &[1, 2], 0), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn diagnostic_calibration() {
        let mut rng = stream(5, 0);
        let g: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        let d = gaussianity_diagnostic(&g).unwrap();
        assert!(d.excess_kurtosis.abs() < 4.0 * (24.0 / 5000.0f64).sqrt());
        assert!(!d.flagged());
        let pm: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = gaussianity_diagnostic(&pm).unwrap();
        assert!((d.excess_kurtosis + 2.0).abs() < 1e-12);
        assert!(d.flagged());
        assert!(gaussianity_diagnostic(&g[..100]).is_err());
    }

    #[test]
    fn correlation_of_identical_columns_is_one() {
        let a = DMatrix::from_fn(600, 1, |i, _| (i as f64).sin());
        let b = DMatrix::from_fn(600, 2, |i, j| if j == 0 { 0.0 } else { -3.0 * (i as f64).sin() });
        assert!((max_abs_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(independence_check(&DMatrix::zeros(600, 0), &a).unwrap(), 0.0);
        assert!(independence_check(&a.rows(0, 10).into_owned(), &a.rows(0, 10).into_owned()).is_err());
    }
}
