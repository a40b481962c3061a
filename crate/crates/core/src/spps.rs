//! Periodic Riccati and Lyapunov equations solved to their symmetric periodic
//! steady state, plus monodromy and observability analysis.
//!
//! Index convention: `P_k` is the predicted covariance at time `k`, so the
//! Riccati recursion maps `P_k` to `P_{k+1}` using `A_k, C_k, Q_k, R_k`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::periodic::{lcm, PeriodicSequence};

pub const DEFAULT_TOL: f64 = 1e-10;
/// Closed-loop spectral radius must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Relative singular-value cutoff for the observability Gramian rank.
pub const RANK_TOL: f64 = 1e-9;

pub fn default_max_sweeps(period: usize) -> usize {
    (100_000 / period.max(1)).max(1)
}

/// One period of a converged periodic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SppsSolution {
    p: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
}

impl SppsSolution {
    pub fn new(p: Vec<DMatrix<f64>>, iterations: usize, residual: f64, tolerance: f64) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidInput("solution needs at least one matrix".into()));
        }
        Ok(Self {
            p,
            iterations,
            residual,
            tolerance,
        })
    }

    pub fn period(&self) -> usize {
        self.p.len()
    }

    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.p[k % self.p.len()]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p[0].nrows()
    }

    /// Mean trace over one period.
    pub fn average_trace(&self) -> f64 {
        self.p.iter().map(|p| p.trace()).sum::<f64>() / self.p.len() as f64
    }

    /// `max_k ||self_k - other_k||_2` over the longer of the two periods.
    pub fn max_distance(&self, other: &SppsSolution) -> f64 {
        let t = lcm(self.period(), other.period());
        (0..t)
            .map(|k| linalg::spectral_norm(&(self.at(k) - other.at(k))))
            .fold(0.0, f64::max)
    }

    /// Largest `||step(k, P_k) - P_{k+1}||_2` over one period.
    pub fn defect(&self, mut step: impl FnMut(usize, &DMatrix<f64>) -> Result<DMatrix<f64>>) -> Result<f64> {
        let mut worst = 0.0f64;
        for k in 0..self.period() {
            let next = step(k, self.at(k))?;
            worst = worst.max(linalg::spectral_norm(&(next - self.at(k + 1))));
        }
        Ok(worst)
    }

    /// Largest `||P_{k+T} - P_k||_2` after iterating `step` over one more period.
    pub fn period_drift(&self, mut step: impl FnMut(usize, &DMatrix<f64>) -> Result<DMatrix<f64>>) -> Result<f64> {
        let mut p = self.at(0).clone();
        let mut worst = 0.0f64;
        for k in 0..self.period() {
            p = step(k, &p)?;
            worst = worst.max(linalg::spectral_norm(&(&p - self.at(k + 1))));
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> String {
        let doc = SolutionDoc {
            period: self.period(),
            iterations: self.iterations,
            residual: self.residual,
            tolerance: self.tolerance,
            p: self.p.iter().map(linalg::to_rows).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionDoc = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "solution".into(),
            source,
        })?;
        let p = doc.p.iter().map(|m| linalg::from_rows(m)).collect::<Result<Vec<_>>>()?;
        if p.len() != doc.period {
            return Err(Error::InvalidInput(format!("period {} but {} matrices", doc.period, p.len())));
        }
        Self::new(p, doc.iterations, doc.residual, doc.tolerance)
    }

    /// Long format: one `k,i,j,value` row per entry, 0-based indices.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "k,i,j,value").unwrap();
        for (k, p) in self.p.iter().enumerate() {
            for i in 0..p.nrows() {
                for j in 0..p.ncols() {
                    writeln!(out, "{k},{i},{j},{:?}", p[(i, j)]).unwrap();
                }
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionDoc {
    period: usize,
    iterations: usize,
    residual: f64,
    tolerance: f64,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
}

/// One Riccati step `A P A' + Q - A P C' (C P C' + R)^{-1} C P A'`.
pub fn riccati_step(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let apa = a * p * a.transpose();
    let mut next = if c.nrows() == 0 {
        apa + q
    } else {
        let pct = p * c.transpose();
        let innovation = c * &pct + r;
        let chol = linalg::cholesky(&innovation, "innovation covariance")?;
        let apct = a * pct;
        let x = chol.solve(&apct.transpose());
        apa + q - apct * x
    };
    linalg::symmetrize(&mut next);
    Ok(next)
}

/// Filter gain `K = A P C' (C P C' + R)^{-1}` and closed loop `A - K C`.
pub fn closed_loop(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if c.nrows() == 0 {
        return Ok((DMatrix::zeros(a.nrows(), 0), a.clone()));
    }
    let pct = p * c.transpose();
    let innovation = c * &pct + r;
    let chol = linalg::cholesky(&innovation, "innovation covariance")?;
    let gain = chol.solve(&(a * pct).transpose()).transpose();
    let atilde = a - &gain * c;
    Ok((gain, atilde))
}

fn common_period(seqs: &[&PeriodicSequence]) -> usize {
    seqs.iter().fold(1, |acc, s| lcm(acc, s.period()))
}

fn check_square(what: &str, s: &PeriodicSequence, n: usize) -> Result<()> {
    if s.shape() != (n, n) {
        return Err(Error::Dimension(format!("{what} must be {n}x{n}, got {:?}", s.shape())));
    }
    Ok(())
}

/// Forward sweeps of `step` until one full period changes by less than `tol`
/// relative to `max(1, ||P_k||)`.
fn iterate_to_periodic(
    period: usize,
    p0: DMatrix<f64>,
    tol: f64,
    max_sweeps: usize,
    mut step: impl FnMut(usize, &DMatrix<f64>) -> Result<DMatrix<f64>>,
) -> Result<SppsSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let mut current: Vec<DMatrix<f64>> = Vec::with_capacity(period);
    let mut p = p0;
    for k in 0..period {
        current.push(p.clone());
        p = step(k, &p)?;
    }
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        residual = 0.0f64;
        for k in 0..period {
            let change = linalg::spectral_norm(&(&p - &current[k])) / linalg::spectral_norm(&p).max(1.0);
            residual = residual.max(change);
            current[k] = p.clone();
            p = step(k, &p)?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("periodic iteration blew up at sweep {sweep}")));
            }
        }
        if residual < tol {
            return SppsSolution::new(current, sweep, residual, tol);
        }
    }
    Err(Error::NoConvergence {
        sweeps: max_sweeps,
        residual,
    })
}

/// Periodic steady state of the filter Riccati recursion, reached by forward
/// iteration from `p0` (identity when `None`).
pub fn dpre_spps(
    a: &PeriodicSequence,
    c: &PeriodicSequence,
    q: &PeriodicSequence,
    r: &PeriodicSequence,
    p0: Option<&DMatrix<f64>>,
    tol: f64,
    max_sweeps: usize,
) -> Result<SppsSolution> {
    let n = a.shape().0;
    check_square("A", a, n)?;
    check_square("Q", q, n)?;
    let m = c.shape().0;
    if c.shape().1 != n {
        return Err(Error::Dimension(format!("C must have {n} columns")));
    }
    check_square("R", r, m)?;
    let period = common_period(&[a, c, q, r]);
    for k in 0..period {
        linalg::check_positive_definite(q.at(k), &format!("Q_{k}"))?;
        if m > 0 {
            linalg::check_positive_definite(r.at(k), &format!("R_{k}"))?;
        }
    }
    let p0 = match p0 {
        Some(p) if p.shape() == (n, n) => p.clone(),
        Some(_) => return Err(Error::Dimension(format!("P0 must be {n}x{n}"))),
        None => DMatrix::identity(n, n),
    };
    iterate_to_periodic(period, p0, tol, max_sweeps, |k, p| {
        riccati_step(a.at(k), c.at(k), q.at(k), r.at(k), p)
    })
}

pub fn lyapunov_step(abar: &DMatrix<f64>, qbar: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrized(abar * p * abar.transpose() + qbar)
}

/// Periodic solution of `P_{k+1} = Abar_k P_k Abar_k' + Qbar_k`.
///
/// The anchor value solves the lifted Stein equation `X = Phi X Phi' + W`
/// directly; forward sweeps then polish it to `tol`.
pub fn dple_spps(abar: &PeriodicSequence, qbar: &PeriodicSequence, tol: f64, max_sweeps: usize) -> Result<SppsSolution> {
    let n = abar.shape().0;
    check_square("Abar", abar, n)?;
    check_square("Qbar", qbar, n)?;
    let period = common_period(&[abar, qbar]);
    let abar = abar.with_period(period)?;
    let report = monodromy(&abar, 0);
    if report.spectral_radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableMonodromy {
            spectral_radius: report.spectral_radius,
        });
    }
    let mut w = DMatrix::zeros(n, n);
    for k in 0..period {
        w = lyapunov_step(abar.at(k), qbar.at(k), &w);
    }
    let phi = &report.phi;
    let lhs = DMatrix::identity(n * n, n * n) - phi.kronecker(phi);
    let rhs = DMatrix::from_column_slice(n * n, 1, w.as_slice());
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("lifted Stein system".into()))?;
    let p0 = linalg::symmetrized(DMatrix::from_column_slice(n, n, x.as_slice()));
    iterate_to_periodic(period, p0, tol, max_sweeps, |k, p| Ok(lyapunov_step(abar.at(k), qbar.at(k), p)))
}

/// Period transition of a closed loop and its stability figures.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyReport {
    pub anchor: usize,
    pub phi: DMatrix<f64>,
    pub spectral_radius: f64,
    pub norm2: f64,
    /// Upper bounds implied by a Riccati solution, when known.
    pub rho_bound: Option<f64>,
    pub norm_bound: Option<f64>,
}

impl MonodromyReport {
    pub fn with_bounds(mut self, (rho_bound, norm_bound): (f64, f64)) -> Self {
        self.rho_bound = Some(rho_bound);
        self.norm_bound = Some(norm_bound);
        self
    }

    /// Whether the attached bounds hold (vacuously true without bounds).
    pub fn within_bounds(&self, slack: f64) -> bool {
        self.rho_bound.is_none_or(|b| self.spectral_radius <= b + slack)
            && self.norm_bound.is_none_or(|b| self.norm2 <= b + slack)
    }
}

/// Ordered product of `atilde` from time `from` (inclusive) to `to` (exclusive):
/// `atilde_{to-1} ... atilde_{from}`.
pub fn transition(atilde: &PeriodicSequence, from: usize, to: usize) -> DMatrix<f64> {
    let n = atilde.shape().0;
    let mut phi = DMatrix::identity(n, n);
    for k in from..to {
        phi = atilde.at(k) * phi;
    }
    phi
}

/// Transition from `anchor` to `anchor + T`. Its spectrum does not depend on the anchor.
pub fn monodromy(atilde: &PeriodicSequence, anchor: usize) -> MonodromyReport {
    let phi = transition(atilde, anchor, anchor + atilde.period());
    MonodromyReport {
        anchor,
        spectral_radius: linalg::spectral_radius(&phi),
        norm2: linalg::spectral_norm(&phi),
        phi,
        rho_bound: None,
        norm_bound: None,
    }
}

/// Closed-loop gains and matrices of a Riccati solution over one period.
pub fn closed_loop_sequence(
    a: &PeriodicSequence,
    c: &PeriodicSequence,
    r: &PeriodicSequence,
    solution: &SppsSolution,
) -> Result<(PeriodicSequence, PeriodicSequence)> {
    let period = lcm(common_period(&[a, c, r]), solution.period());
    let mut gains = Vec::with_capacity(period);
    let mut loops = Vec::with_capacity(period);
    for k in 0..period {
        let (gain, atilde) = closed_loop(a.at(k), c.at(k), r.at(k), solution.at(k))?;
        gains.push(gain);
        loops.push(atilde);
    }
    Ok((PeriodicSequence::new(gains)?, PeriodicSequence::new(loops)?))
}

/// `(sqrt(1 - lmin(Q)/lmax(P)), sqrt(lmax(P)/lmin(Q)))` with extrema over the period.
pub fn lemma7_bounds(solution: &SppsSolution, q: &PeriodicSequence) -> Result<(f64, f64)> {
    let t = lcm(solution.period(), q.period());
    let q_min = (0..t).map(|k| linalg::min_eigenvalue(q.at(k))).fold(f64::INFINITY, f64::min);
    if !(q_min > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: "Q".into(),
            min_eigenvalue: q_min,
        });
    }
    let p_max = solution
        .matrices()
        .iter()
        .map(linalg::max_eigenvalue)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(((1.0 - q_min / p_max).max(0.0).sqrt(), (p_max / q_min).sqrt()))
}

/// Monodromy reports for every anchor of a Riccati solution, with bounds attached.
pub fn riccati_monodromies(
    a: &PeriodicSequence,
    c: &PeriodicSequence,
    q: &PeriodicSequence,
    r: &PeriodicSequence,
    solution: &SppsSolution,
) -> Result<Vec<MonodromyReport>> {
    let bounds = lemma7_bounds(solution, q)?;
    let (_, loops) = closed_loop_sequence(a, c, r, solution)?;
    Ok((0..loops.period()).map(|k| monodromy(&loops, k).with_bounds(bounds)).collect())
}

/// `sqrt(n) sum_{j<n} C(n-1, j) C(k, j) ||A||^j rho(A)^(k-j)`, an upper bound on `||A^k||_2`.
pub fn power_norm_bound(a: &DMatrix<f64>, k: usize) -> f64 {
    let n = a.nrows();
    let norm = linalg::spectral_norm(a);
    let rho = linalg::spectral_radius(a);
    let sum: f64 = (0..n.min(k + 1))
        .map(|j| {
            linalg::binomial(n as u64 - 1, j as u64)
                * linalg::binomial(k as u64, j as u64)
                * norm.powi(j as i32)
                * rho.powi((k - j) as i32)
        })
        .sum();
    (n as f64).sqrt() * sum
}

/// Observability Gramian over `window` steps from `anchor`.
pub fn observability_gramian(a: &PeriodicSequence, c: &PeriodicSequence, anchor: usize, window: usize) -> DMatrix<f64> {
    let n = a.shape().0;
    let mut gram = DMatrix::zeros(n, n);
    let mut phi = DMatrix::identity(n, n);
    for k in anchor..anchor + window {
        let cp = c.at(k) * &phi;
        gram += cp.transpose() * cp;
        phi = a.at(k) * phi;
    }
    gram
}

/// Gramian rank test over an `n T` window from every anchor in the period.
pub fn uniform_observability(a: &PeriodicSequence, c: &PeriodicSequence) -> Result<bool> {
    let n = a.shape().0;
    check_square("A", a, n)?;
    if c.shape().1 != n {
        return Err(Error::Dimension(format!("C must have {n} columns")));
    }
    let period = common_period(&[a, c]);
    Ok((0..period).all(|k| linalg::rank(&observability_gramian(a, c, k, n * period), RANK_TOL) == n))
}

/// Whether the Riccati solution for the larger noise `r1` dominates the one for `r2`.
pub fn dpre_monotonicity_probe(
    a: &PeriodicSequence,
    c: &PeriodicSequence,
    q: &PeriodicSequence,
    r1: &PeriodicSequence,
    r2: &PeriodicSequence,
    tol: f64,
) -> Result<bool> {
    let t = common_period(&[a, c, q, r1, r2]);
    for k in 0..t {
        if r1.shape() != r2.shape() {
            return Err(Error::Dimension("R1 and R2 differ in shape".into()));
        }
        let gap = linalg::min_eigenvalue(&(r1.at(k) - r2.at(k)));
        if gap < -1e-12 {
            return Err(Error::InvalidInput(format!("R1_{k} - R2_{k} has eigenvalue {gap:e}")));
        }
    }
    let sweeps = default_max_sweeps(t);
    let p1 = dpre_spps(a, c, q, r1, None, tol, sweeps)?;
    let p2 = dpre_spps(a, c, q, r2, None, tol, sweeps)?;
    Ok((0..t).all(|k| linalg::min_eigenvalue(&(p1.at(k) - p2.at(k))) >= -1e-8))
}
