//! Replica-symmetric potential, its stationary points, state evolution, the
//! information fixed-point curve and phase-transition location.
//!
//! The potential is
//! `F(s) = I_X(s) + (delta / 2) (log(delta / s) + s / delta - 1)`
//! and `dF/ds = (s (1 + M_X(s)) - delta) / (2 s)`, so the stationary points are
//! exactly the roots of the fixed-point residual `r(s) = s (1 + M_X(s)) - delta`,
//! with minima where `r` crosses from negative to positive. Since
//! `0 <= M_X <= Var(X)`, every root lies in `[delta / (1 + Var), delta]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::scalar_channel::{scalar_mi, scalar_mmse, ScalarPrior};
use crate::table::Table;

const SCAN_POINTS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaPotentialSample<T> {
    pub s: T,
    pub potential: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryPoint<T> {
    pub s: T,
    /// `M_X(s)` at the stationary point.
    pub mmse: T,
    pub potential: T,
    pub kind: StationaryKind,
    /// `|s (1 + M_X(s)) - delta|`.
    pub residual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSolution<T> {
    pub delta: T,
    pub stationary: Vec<StationaryPoint<T>>,
    pub s_star: T,
    /// Replica mutual information per dimension (nats).
    pub mutual_information: T,
    /// Replica MMSE per dimension.
    pub mmse: T,
    /// False when two minima tie to within `1e-9` nats.
    pub unique: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEvolution<T> {
    /// `M_0, M_1, ...`
    pub trajectory: Vec<T>,
    pub converged: bool,
}

impl<T: Real> StateEvolution<T> {
    pub fn limit(&self) -> T {
        *self.trajectory.last().expect("trajectory starts at M0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointCurvePoint<T> {
    pub delta: T,
    pub mmse: T,
    /// `log(1 + M) / 2`, the derivative of the replica information.
    pub i_prime: T,
    /// `s = M_X^{-1}(M)`.
    pub s: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointCurve<T> {
    pub points: Vec<FixedPointCurvePoint<T>>,
    /// Grid values outside `(0, Var(X))` that were skipped.
    pub rejected: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTransition<T> {
    /// Information-theoretic transition (jump of the global minimizer).
    pub delta_star: T,
    /// Algorithmic transition (state evolution from `Var(X)` reaches the low branch).
    pub delta_alg: T,
    /// `M(delta)` just below `delta_star`.
    pub mmse_minus: T,
    /// `M(delta)` just above `delta_star`.
    pub mmse_plus: T,
}

fn check_delta<T: Real>(delta: T) -> Result<()> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("measurement rate must be finite and > 0 (got {delta})")));
    }
    Ok(())
}

/// `F(s)`; `+inf` at `s = 0`.
pub fn potential<T: Real>(prior: &ScalarPrior<T>, delta: T, s: T) -> Result<ReplicaPotentialSample<T>> {
    check_delta(delta)?;
    if !(s >= T::zero()) {
        return Err(Error::InvalidArgument(format!("snr must be >= 0 (got {s})")));
    }
    if s.is_zero() {
        return Ok(ReplicaPotentialSample { s, potential: T::infinity() });
    }
    let ratio = s / delta;
    // log(delta/s) + s/delta - 1 = ratio - 1 - log(ratio), evaluated without cancellation near ratio = 1
    let penalty = (ratio - T::one()) - (ratio - T::one()).ln_1p();
    let value = scalar_mi(prior, s)? + T::lit(0.5) * delta * penalty;
    Ok(ReplicaPotentialSample { s, potential: value })
}

fn residual<T: Real>(prior: &ScalarPrior<T>, delta: T, s: T) -> Result<(T, T)> {
    let m = scalar_mmse(prior, s)?;
    Ok((s * (T::one() + m) - delta, m))
}

fn log_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap()).exp()
            }
        })
        .collect()
}

/// All stationary points of `F`, ordered by increasing `s`.
pub fn stationary_points<T: Real>(prior: &ScalarPrior<T>, delta: T) -> Result<Vec<StationaryPoint<T>>> {
    check_delta(delta)?;
    let var = prior.variance();
    if !(var > T::zero()) {
        return Err(Error::DegeneratePrior("replica potential needs Var(X) > 0".into()));
    }
    let lo = delta / (T::one() + var);
    let grid = log_grid(lo, delta, SCAN_POINTS);
    let values: Vec<T> = grid
        .iter()
        .map(|&s| residual(prior, delta, s).map(|(r, _)| r))
        .collect::<Result<_>>()?;
    let tol = T::tol(1e-8) * delta.max(T::one());
    let mut out = Vec::new();
    let mut i = 0;
    while i + 1 < grid.len() {
        let (ra, rb) = (values[i], values[i + 1]);
        if ra.is_zero() || (ra < T::zero()) != (rb < T::zero()) && !rb.is_zero() {
            let kind = if ra < T::zero() || (ra.is_zero() && rb > T::zero()) {
                StationaryKind::Minimum
            } else {
                StationaryKind::Maximum
            };
            let s = if ra.is_zero() { grid[i] } else { bisect_residual(prior, delta, grid[i], grid[i + 1], ra)? };
            let (r, m) = residual(prior, delta, s)?;
            if r.abs() > tol {
                return Err(Error::Refinement { residual: r.abs().as_f64(), tol: tol.as_f64() });
            }
            let potential = potential(prior, delta, s)?.potential;
            out.push(StationaryPoint { s, mmse: m, potential, kind, residual: r.abs() });
        }
        i += 1;
    }
    if out.is_empty() {
        // r(lo) < 0 < r(delta) always, so a sign change must exist
        return Err(Error::Refinement { residual: f64::NAN, tol: tol.as_f64() });
    }
    Ok(out)
}

/// Bisection in `log s` until the bracket is at the precision floor.
fn bisect_residual<T: Real>(prior: &ScalarPrior<T>, delta: T, mut a: T, mut b: T, ra: T) -> Result<T> {
    let neg_at_a = ra < T::zero();
    for _ in 0..200 {
        let mid = (a * b).sqrt();
        if !(mid > a && mid < b) || (b - a) <= T::epsilon() * T::lit(4.0) * b {
            break;
        }
        let (rm, _) = residual(prior, delta, mid)?;
        if rm.is_zero() {
            return Ok(mid);
        }
        if (rm < T::zero()) == neg_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (r_a, _) = residual(prior, delta, a)?;
    let (r_b, _) = residual(prior, delta, b)?;
    Ok(if r_a.abs() <= r_b.abs() { a } else { b })
}

/// Global minimizer of `F` and the resulting replica information and MMSE.
pub fn replica_solution<T: Real>(prior: &ScalarPrior<T>, delta: T) -> Result<ReplicaSolution<T>> {
    let stationary = stationary_points(prior, delta)?;
    let best = stationary
        .iter()
        .filter(|p| p.kind == StationaryKind::Minimum)
        .min_by(|a, b| a.potential.partial_cmp(&b.potential).expect("finite potential"))
        .copied()
        .ok_or(Error::Refinement { residual: f64::NAN, tol: 0.0 })?;
    let tie = T::tol(1e-9);
    let unique = !stationary
        .iter()
        .any(|p| p.kind == StationaryKind::Minimum && p.s != best.s && (p.potential - best.potential).abs() <= tie);
    Ok(ReplicaSolution {
        delta,
        s_star: best.s,
        mutual_information: best.potential,
        mmse: best.mmse,
        unique,
        stationary,
    })
}

/// Iterates `M_{t+1} = M_X(delta / (1 + M_t))`.
pub fn state_evolution<T: Real>(
    prior: &ScalarPrior<T>,
    delta: T,
    m0: T,
    max_iter: usize,
    tol: T,
) -> Result<StateEvolution<T>> {
    let var = prior.variance();
    if !(delta >= T::zero()) {
        return Err(Error::InvalidArgument(format!("measurement rate must be >= 0 (got {delta})")));
    }
    if !(m0 > T::zero() && m0 <= var) {
        return Err(Error::InvalidArgument(format!("initial MMSE must lie in (0, Var(X)] (got {m0})")));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument("tolerance must be > 0".into()));
    }
    let mut trajectory = vec![m0];
    let mut m = m0;
    for _ in 0..max_iter {
        let next = scalar_mmse(prior, delta / (T::one() + m))?;
        trajectory.push(next);
        if (next - m).abs() < tol {
            return Ok(StateEvolution { trajectory, converged: true });
        }
        m = next;
    }
    Ok(StateEvolution { trajectory, converged: false })
}

/// Limit of state evolution started at `M_0 = Var(X)`.
///
/// The map `M -> M_X(delta / (1 + M))` is increasing, so the iteration from
/// `Var(X)` decreases monotonically to the largest fixed point, which is the
/// stationary point with the smallest `s`. Reading it off the stationary
/// points avoids the critical slowing down of the iteration near `delta_alg`.
pub fn uninformative_limit<T: Real>(prior: &ScalarPrior<T>, delta: T) -> Result<StationaryPoint<T>> {
    Ok(stationary_points(prior, delta)?[0])
}

/// Solves `M_X(s) = target` for `s` by bisection in `log s`.
pub fn invert_mmse<T: Real>(prior: &ScalarPrior<T>, target: T) -> Result<T> {
    let var = prior.variance();
    if !(target > T::zero() && target < var) {
        return Err(Error::InvalidArgument(format!("MMSE value {target} outside (0, Var(X) = {var})")));
    }
    let mut hi = T::one();
    let mut guard = 0;
    while scalar_mmse(prior, hi)? > target {
        hi = hi * T::lit(16.0);
        guard += 1;
        if guard > 200 || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("MMSE value {target} not reached at finite snr")));
        }
    }
    let mut lo = hi;
    guard = 0;
    while scalar_mmse(prior, lo)? < target {
        lo = lo / T::lit(16.0);
        guard += 1;
        if guard > 400 || lo.is_zero() {
            return Err(Error::InvalidArgument(format!("MMSE value {target} not bracketed")));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) || (hi - lo) <= T::epsilon() * T::lit(4.0) * hi {
            break;
        }
        if scalar_mmse(prior, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// `delta(M) = (1 + M) M_X^{-1}(M)` for each grid value of `M`.
pub fn fixed_point_curve<T: Real>(prior: &ScalarPrior<T>, m_grid: &[T]) -> Result<FixedPointCurve<T>> {
    if m_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("MMSE grid must be ascending".into()));
    }
    let var = prior.variance();
    let results: Vec<Option<FixedPointCurvePoint<T>>> = m_grid
        .par_iter()
        .map(|&m| {
            if !(m > T::zero() && m < var) {
                return Ok(None);
            }
            let s = invert_mmse(prior, m)?;
            Ok(Some(FixedPointCurvePoint {
                delta: (T::one() + m) * s,
                mmse: m,
                i_prime: T::lit(0.5) * m.ln_1p(),
                s,
            }))
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut rejected = Vec::new();
    for (m, r) in m_grid.iter().zip(results) {
        match r {
            Some(p) => points.push(p),
            None => rejected.push(*m),
        }
    }
    Ok(FixedPointCurve { points, rejected })
}

impl<T: Real> FixedPointCurve<T> {
    /// Maximal-run boundaries: MMSE values where `delta(M)` switches between
    /// increasing and decreasing. Stable branches are the runs on which
    /// `delta` decreases as `M` increases.
    pub fn turning_points(&self) -> Vec<FixedPointCurvePoint<T>> {
        let p = &self.points;
        let mut out = Vec::new();
        for i in 1..p.len().saturating_sub(1) {
            let left = p[i].delta - p[i - 1].delta;
            let right = p[i + 1].delta - p[i].delta;
            if (left > T::zero()) != (right > T::zero()) && !left.is_zero() && !right.is_zero() {
                out.push(p[i]);
            }
        }
        out
    }

    /// Columns `delta,M,I_prime`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["delta", "M", "I_prime"]);
        for p in &self.points {
            t.push_f64(&[p.delta.as_f64(), p.mmse.as_f64(), p.i_prime.as_f64()]);
        }
        t
    }
}

/// Branch labelling of stationary minima derived from the fixed-point curve.
///
/// Turning points of `delta(M)` split the MMSE axis into intervals; a
/// minimum's branch is the index of the interval containing its MMSE
/// (counted from the low-MMSE end).
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMap<T> {
    /// Ascending MMSE values separating the branches.
    pub cuts: Vec<T>,
}

impl<T: Real> BranchMap<T> {
    pub fn from_prior(prior: &ScalarPrior<T>, points: usize) -> Result<Self> {
        let var = prior.variance();
        let grid = log_grid(var * T::lit(1e-9), var * (T::one() - T::lit(1e-9)), points);
        let curve = fixed_point_curve(prior, &grid)?;
        let turns = curve.turning_points();
        // consecutive turning points bound an unstable run; cut in its middle (geometrically)
        let mut cuts: Vec<T> = turns.windows(2).step_by(2).map(|w| (w[0].mmse * w[1].mmse).sqrt()).collect();
        if turns.len() % 2 == 1 {
            cuts.push(turns[turns.len() - 1].mmse);
        }
        Ok(Self { cuts })
    }

    pub fn branch(&self, mmse: T) -> usize {
        self.cuts.iter().filter(|&&c| mmse > c).count()
    }

    pub fn has_transition(&self) -> bool {
        !self.cuts.is_empty()
    }
}

fn bisect_predicate<T: Real, P: Fn(T) -> Result<bool>>(mut lo: T, mut hi: T, tol: T, pred: P) -> Result<(T, T)> {
    while hi - lo > tol {
        let mid = T::lit(0.5) * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Locates the information-theoretic and algorithmic transitions in
/// `[delta_lo, delta_hi]`; `None` when the global minimizer never changes branch.
pub fn locate_phase_transition<T: Real>(
    prior: &ScalarPrior<T>,
    delta_lo: T,
    delta_hi: T,
    tol: T,
) -> Result<Option<PhaseTransition<T>>> {
    check_delta(delta_lo)?;
    check_delta(delta_hi)?;
    if !(delta_hi > delta_lo) || !(tol > T::zero()) {
        return Err(Error::InvalidArgument("need delta_lo < delta_hi and tol > 0".into()));
    }
    let branches = BranchMap::from_prior(prior, 400)?;
    if !branches.has_transition() {
        return Ok(None);
    }
    let global_branch = |d: T| -> Result<usize> { Ok(branches.branch(replica_solution(prior, d)?.mmse)) };
    let alg_branch = |d: T| -> Result<usize> { Ok(branches.branch(uninformative_limit(prior, d)?.mmse)) };

    let start = global_branch(delta_lo)?;
    if global_branch(delta_hi)? == start {
        return Ok(None);
    }
    let (below, above) = bisect_predicate(delta_lo, delta_hi, tol, |d| Ok(global_branch(d)? != start))?;

    let alg_start = alg_branch(delta_lo)?;
    let delta_alg = if alg_branch(delta_hi)? == alg_start {
        // the uninformative branch survives the whole bracket
        delta_hi
    } else {
        bisect_predicate(delta_lo, delta_hi, tol, |d| Ok(alg_branch(d)? != alg_start))?.1
    };

    Ok(Some(PhaseTransition {
        delta_star: above,
        delta_alg,
        mmse_minus: replica_solution(prior, below)?.mmse,
        mmse_plus: replica_solution(prior, above)?.mmse,
    }))
}

/// Number of adjacent grid pairs across which the global minimizer changes branch.
pub fn single_crossing_diagnostic<T: Real>(prior: &ScalarPrior<T>, delta_grid: &[T]) -> Result<usize> {
    let branches = BranchMap::from_prior(prior, 400)?;
    if !branches.has_transition() {
        return Ok(0);
    }
    let labels: Vec<usize> = delta_grid
        .par_iter()
        .map(|&d| Ok(branches.branch(replica_solution(prior, d)?.mmse)))
        .collect::<Result<_>>()?;
    Ok(labels.windows(2).filter(|w| w[0] != w[1]).count())
}

/// Replica solutions on a grid of rates (computed in parallel, returned in grid order).
pub fn replica_sweep<T: Real>(prior: &ScalarPrior<T>, delta_grid: &[T]) -> Result<Vec<ReplicaSolution<T>>> {
    delta_grid.par_iter().map(|&d| replica_solution(prior, d)).collect()
}

/// Columns `delta,I,M,s_star,unique`.
pub fn solutions_table<T: Real>(solutions: &[ReplicaSolution<T>]) -> Table {
    let mut t = Table::new(&["delta", "I", "M", "s_star", "unique"]);
    for s in solutions {
        t.push(vec![
            crate::table::format_f64(s.delta.as_f64()),
            crate::table::format_f64(s.mutual_information.as_f64()),
            crate::table::format_f64(s.mmse.as_f64()),
            crate::table::format_f64(s.s_star.as_f64()),
            s.unique.to_string(),
        ]);
    }
    t
}
