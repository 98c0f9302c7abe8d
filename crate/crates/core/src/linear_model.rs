//! Random instances of `y = A x + w` and the matrix-vector kernels used on them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar_channel::ScalarPrior;

/// One draw of the standard linear model with `A_ij ~ N(0, 1/N)` and unit noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelInstance {
    pub a: DMatrix<f64>,
    pub x_true: DVector<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
}

impl LinearModelInstance {
    /// Builds an instance from given parts, computing `y = A x + w`.
    pub fn from_parts(a: DMatrix<f64>, x_true: DVector<f64>, w: DVector<f64>, seed: u64) -> Result<Self> {
        if a.ncols() != x_true.len() || a.nrows() != w.len() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, x has {} entries, w has {}",
                a.nrows(),
                a.ncols(),
                x_true.len(),
                w.len()
            )));
        }
        let y = matvec(&a, &x_true) + &w;
        Ok(Self { a, x_true, w, y, seed })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// `M / N`.
    pub fn delta(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    /// Largest deviation of a row norm from 1.
    ///
    /// Rows are the measurement vectors and have `E||A_m||^2 = 1`; columns have
    /// `E||a_n||^2 = M / N`.
    pub fn row_norm_deviation(&self) -> f64 {
        (0..self.m())
            .map(|i| (self.a.row(i).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Draws an instance from stream `(seed, 0)`: first `x` (N prior draws), then
/// `A` row by row, then `w`.
pub fn generate_instance(prior: &ScalarPrior<f64>, n: usize, m: usize, seed: u64) -> Result<LinearModelInstance> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("need N >= 1 and M >= 1 (got N={n}, M={m})")));
    }
    sample_instance(prior, n, m, &mut stream(seed, 0), seed)
}

/// Same draw order as [`generate_instance`] from a caller-supplied generator; `M = 0` is allowed.
pub fn sample_instance<R: Rng + ?Sized>(
    prior: &ScalarPrior<f64>,
    n: usize,
    m: usize,
    rng: &mut R,
    seed: u64,
) -> Result<LinearModelInstance> {
    let x_true = DVector::from_fn(n, |_, _| prior.sample(rng));
    let a = sample_matrix(m, n, rng);
    let w = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    LinearModelInstance::from_parts(a, x_true, w, seed)
}

/// `M x N` matrix with iid `N(0, 1/N)` entries, drawn row by row.
pub fn sample_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> DMatrix<f64> {
    let scale = 1.0 / (n as f64).sqrt();
    let mut a = DMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            a[(i, j)] = scale * z;
        }
    }
    a
}

const ROW_BLOCK: usize = 64;

/// `A x`, parallel over fixed row blocks; each entry is summed in column order,
/// so the result does not depend on the thread count.
pub fn matvec(a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut out = vec![0.0; m];
    out.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(b, chunk)| {
        let r0 = b * ROW_BLOCK;
        for j in 0..n {
            let xj = x[j];
            let col = &a.column(j);
            for (k, o) in chunk.iter_mut().enumerate() {
                *o += col[r0 + k] * xj;
            }
        }
    });
    DVector::from_vec(out)
}

/// `A^T z`, one contiguous column dot product per entry.
pub fn matvec_t(a: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let out: Vec<f64> = (0..n).into_par_iter().map(|j| a.column(j).dot(z)).collect();
    DVector::from_vec(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let p = ScalarPrior::bernoulli_gaussian(0.0, 1.0, 0.2).unwrap();
        let a = generate_instance(&p, 30, 20, 5).unwrap();
        let b = generate_instance(&p, 30, 20, 5).unwrap();
        let c = generate_instance(&p, 30, 20, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn tiny_instance_is_consistent() {
        let p = ScalarPrior::<f64>::binary();
        let inst = generate_instance(&p, 8, 4, 1).unwrap();
        assert_eq!(inst.a.shape(), (4, 8));
        let r = &inst.y - (&inst.a * &inst.x_true + &inst.w);
        assert!(r.amax() < 1e-14);
        assert!(generate_instance(&p, 0, 4, 1).is_err());
    }

    #[test]
    fn kernels_match_nalgebra() {
        let p = ScalarPrior::gaussian(0.0, 1.0).unwrap();
        let inst = generate_instance(&p, 150, 130, 2).unwrap();
        let ax = matvec(&inst.a, &inst.x_true);
        assert!((ax - &inst.a * &inst.x_true).amax() < 1e-12);
        let atz = matvec_t(&inst.a, &inst.y);
        assert!((atz - inst.a.transpose() * &inst.y).amax() < 1e-12);
    }

    #[test]
    fn row_norms_concentrate() {
        let p = ScalarPrior::gaussian(0.0, 1.0).unwrap();
        let n = 2000;
        let inst = generate_instance(&p, n, 50, 3).unwrap();
        assert!(inst.row_norm_deviation() < 5.0 / (n as f64).sqrt());
    }
}
