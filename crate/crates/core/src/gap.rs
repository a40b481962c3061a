//! Steady-state performance of the consensus-on-measurement filter and its
//! gap to the centralized filter as a function of the number of fusion steps.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::modified_observation_from_power;
use crate::linalg;
use crate::network::{self, weight_power, ConsensusWeights, SensorGraph, WeightPower};
use crate::periodic::{PeriodicSequence, PlantModel};
use crate::spps::{self, default_max_sweeps, SppsSolution};

/// Gaps below this are numerical noise; rates are not formed from them.
pub const GAP_FLOOR: f64 = 1e-12;
/// Series terms below this norm end the summation.
pub const SERIES_TERM_FLOOR: f64 = 1e-14;

/// What node `i` observes after `L` rounds, restricted to its support, over one period.
#[derive(Debug, Clone)]
pub struct ModifiedSequences {
    pub c: PeriodicSequence,
    pub r_tilde: PeriodicSequence,
    pub r_bar: PeriodicSequence,
    pub full_support: bool,
}

pub fn modified_sequences(model: &PlantModel, power: &WeightPower, i: usize) -> Result<ModifiedSequences> {
    let mut c = Vec::with_capacity(model.period());
    let mut r_tilde = Vec::with_capacity(model.period());
    let mut r_bar = Vec::with_capacity(model.period());
    let mut full_support = true;
    for k in 0..model.period() {
        let mo = modified_observation_from_power(model, power, i, k);
        full_support &= mo.is_full_support();
        let (ck, rk, bk) = mo.restricted();
        c.push(ck);
        r_tilde.push(rk);
        r_bar.push(bk);
    }
    Ok(ModifiedSequences {
        c: PeriodicSequence::new(c)?,
        r_tilde: PeriodicSequence::new(r_tilde)?,
        r_bar: PeriodicSequence::new(r_bar)?,
        full_support,
    })
}

/// Riccati solution, closed loop and true error covariance of one node.
#[derive(Debug, Clone)]
pub struct NodeSolutions {
    pub observation: ModifiedSequences,
    pub riccati: SppsSolution,
    pub gains: PeriodicSequence,
    pub loops: PeriodicSequence,
    pub error: SppsSolution,
}

/// Centralized Riccati solution with its closed loop.
#[derive(Debug, Clone)]
pub struct CentralSolution {
    pub c: PeriodicSequence,
    pub r: PeriodicSequence,
    pub riccati: SppsSolution,
    pub gains: PeriodicSequence,
    pub loops: PeriodicSequence,
}

pub fn ckf_dpre(model: &PlantModel, tol: f64) -> Result<SppsSolution> {
    Ok(centralized(model, tol)?.riccati)
}

pub fn centralized(model: &PlantModel, tol: f64) -> Result<CentralSolution> {
    let (c, r) = model.stacked_sequences();
    if !spps::uniform_observability(model.a(), &c)? {
        return Err(Error::Unobservable("centralized pair (A, C)".into()));
    }
    let riccati = spps::dpre_spps(model.a(), &c, model.q(), &r, None, tol, default_max_sweeps(model.period()))?;
    let (gains, loops) = spps::closed_loop_sequence(model.a(), &c, &r, &riccati)?;
    Ok(CentralSolution {
        c,
        r,
        riccati,
        gains,
        loops,
    })
}

/// Solves both periodic equations of node `i` for a precomputed weight power.
pub fn solve_node(model: &PlantModel, power: &WeightPower, i: usize, tol: f64) -> Result<NodeSolutions> {
    let observation = modified_sequences(model, power, i)?;
    if !spps::uniform_observability(model.a(), &observation.c)? {
        return Err(Error::Unobservable(format!(
            "sensor {} after {} fusion steps",
            i + 1,
            power.steps
        )));
    }
    let sweeps = default_max_sweeps(model.period());
    let riccati = spps::dpre_spps(model.a(), &observation.c, model.q(), &observation.r_tilde, None, tol, sweeps)?;
    let (gains, loops) = spps::closed_loop_sequence(model.a(), &observation.c, &observation.r_tilde, &riccati)?;
    let qbar = PeriodicSequence::new(
        (0..model.period())
            .map(|k| {
                let g = gains.at(k);
                linalg::symmetrized(model.q().at(k) + g * observation.r_bar.at(k) * g.transpose())
            })
            .collect(),
    )?;
    let error = spps::dple_spps(&loops, &qbar, tol, sweeps)?;
    Ok(NodeSolutions {
        observation,
        riccati,
        gains,
        loops,
        error,
    })
}

/// Periodic Riccati solution of node `i` with its modified observation model.
pub fn cmdf_dpre(model: &PlantModel, weights: &ConsensusWeights, steps: usize, i: usize, tol: f64) -> Result<SppsSolution> {
    let power = weight_power(weights, steps);
    let observation = modified_sequences(model, &power, i)?;
    if !spps::uniform_observability(model.a(), &observation.c)? {
        return Err(Error::Unobservable(format!("sensor {} after {steps} fusion steps", i + 1)));
    }
    spps::dpre_spps(
        model.a(),
        &observation.c,
        model.q(),
        &observation.r_tilde,
        None,
        tol,
        default_max_sweeps(model.period()),
    )
}

/// Steady-state true error covariance of node `i`.
pub fn cmdf_error_dple(model: &PlantModel, weights: &ConsensusWeights, steps: usize, i: usize, tol: f64) -> Result<SppsSolution> {
    Ok(solve_node(model, &weight_power(weights, steps), i, tol)?.error)
}

/// Mean trace over one period.
pub fn average_performance(solution: &SppsSolution) -> f64 {
    solution.average_trace()
}

/// A periodic gap computed both directly and as a truncated series.
#[derive(Debug, Clone)]
pub struct SeriesCheck {
    pub series: Vec<DMatrix<f64>>,
    pub direct: Vec<DMatrix<f64>>,
    /// `max_k ||series_k - direct_k||_2`.
    pub defect: f64,
    /// Largest number of terms used at any anchor.
    pub terms: usize,
    /// Norm of the last term added.
    pub tail: f64,
}

impl SeriesCheck {
    pub fn ensure(&self, tolerance: f64) -> Result<()> {
        if self.defect > tolerance {
            return Err(Error::Truncation {
                terms: self.terms,
                defect: self.defect,
                tolerance,
            });
        }
        Ok(())
    }
}

/// `sum_{l<T} L_{k+T,k+l+1} F_{k+l} R_{k+l}^T`, where `L`/`R` are the left and
/// right transition products and `F` the sandwiched middle term.
fn forcing(
    left: &PeriodicSequence,
    right: &PeriodicSequence,
    period: usize,
    k: usize,
    middle: impl Fn(usize) -> DMatrix<f64>,
) -> DMatrix<f64> {
    let n = left.shape().0;
    let mut total = DMatrix::zeros(n, n);
    for l in 0..period {
        let lt = spps::transition(left, k + l + 1, k + period);
        let rt = spps::transition(right, k + l + 1, k + period);
        total += lt * middle(k + l) * rt.transpose();
    }
    total
}

/// `sum_j Phi_left^j X Phi_right^{j'}` until a term drops below the floor or `cap` terms.
fn geometric_sum(phi_left: &DMatrix<f64>, phi_right: &DMatrix<f64>, x: DMatrix<f64>, cap: usize) -> (DMatrix<f64>, usize, f64) {
    let mut term = x;
    let mut total = DMatrix::zeros(term.nrows(), term.ncols());
    let mut terms = 0;
    let mut tail = f64::INFINITY;
    while terms <= cap {
        total += &term;
        terms += 1;
        tail = linalg::spectral_norm(&term);
        if tail < SERIES_TERM_FLOOR {
            break;
        }
        term = phi_left * term * phi_right.transpose();
    }
    (total, terms, tail)
}

fn assemble(series: Vec<(DMatrix<f64>, usize, f64)>, direct: Vec<DMatrix<f64>>) -> SeriesCheck {
    let defect = series
        .iter()
        .zip(&direct)
        .map(|((s, _, _), d)| linalg::spectral_norm(&(s - d)))
        .fold(0.0, f64::max);
    let terms = series.iter().map(|s| s.1).max().unwrap_or(0);
    let tail = series.iter().map(|s| s.2).fold(0.0, f64::max);
    SeriesCheck {
        series: series.into_iter().map(|s| s.0).collect(),
        direct,
        defect,
        terms,
        tail,
    }
}

/// `P^{(L)}_k - P_k` as `sum_j Phi^{(L) j} Psi_k (Phi^j)'`. Needs full support,
/// i.e. both filters see the same stacked observation matrix.
pub fn gap_series_ric(
    model: &PlantModel,
    weights: &ConsensusWeights,
    steps: usize,
    i: usize,
    truncation: usize,
    tol: f64,
) -> Result<SeriesCheck> {
    let node = solve_node(model, &weight_power(weights, steps), i, tol)?;
    let central = centralized(model, tol)?;
    if !node.observation.full_support {
        return Err(Error::InvalidInput(format!(
            "sensor {} does not reach every sensor in {steps} fusion steps",
            i + 1
        )));
    }
    let t = model.period();
    let mut series = Vec::with_capacity(t);
    let mut direct = Vec::with_capacity(t);
    for k in 0..t {
        let psi = forcing(&node.loops, &central.loops, t, k, |j| {
            node.gains.at(j) * (node.observation.r_tilde.at(j) - central.r.at(j)) * central.gains.at(j).transpose()
        });
        let phi_l = spps::transition(&node.loops, k, k + t);
        let phi = spps::transition(&central.loops, k, k + t);
        series.push(geometric_sum(&phi_l, &phi, psi, truncation));
        direct.push(node.riccati.at(k) - central.riccati.at(k));
    }
    Ok(assemble(series, direct))
}

/// `P~^{(L)}_k - P^{(L)}_k` as `sum_j Phi^{(L) j} Upsilon_k (Phi^{(L) j})'`.
pub fn gap_series_cov(
    model: &PlantModel,
    weights: &ConsensusWeights,
    steps: usize,
    i: usize,
    truncation: usize,
    tol: f64,
) -> Result<SeriesCheck> {
    let node = solve_node(model, &weight_power(weights, steps), i, tol)?;
    let t = model.period();
    let mut series = Vec::with_capacity(t);
    let mut direct = Vec::with_capacity(t);
    for k in 0..t {
        let upsilon = forcing(&node.loops, &node.loops, t, k, |j| {
            let g = node.gains.at(j);
            g * (node.observation.r_bar.at(j) - node.observation.r_tilde.at(j)) * g.transpose()
        });
        let phi_l = spps::transition(&node.loops, k, k + t);
        series.push(geometric_sum(&phi_l, &phi_l, upsilon, truncation));
        direct.push(node.error.at(k) - node.riccati.at(k));
    }
    Ok(assemble(series, direct))
}

/// Ratio of consecutive average gaps, or why it is not formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    #[serde(rename = "L")]
    pub steps: usize,
    /// `None` when the denominator gap is at the numerical floor.
    pub q: Option<f64>,
}

/// `(avg(L+1) - avg_c) / (avg(L) - avg_c)` for each `L`, given average
/// performances keyed by `L` and the centralized average.
pub fn rates_from_averages(averages: &[(usize, f64)], centralized: f64, l_range: &[usize]) -> Vec<RatePoint> {
    let lookup = |l: usize| averages.iter().find(|(s, _)| *s == l).map(|(_, v)| *v);
    l_range
        .iter()
        .map(|&l| {
            let q = match (lookup(l), lookup(l + 1)) {
                (Some(now), Some(next)) if (now - centralized).abs() > GAP_FLOOR => Some((next - centralized) / (now - centralized)),
                _ => None,
            };
            RatePoint { steps: l, q }
        })
        .collect()
}

pub fn rate_fit(model: &PlantModel, weights: &ConsensusWeights, i: usize, l_range: &[usize], tol: f64) -> Result<Vec<RatePoint>> {
    let centralized = ckf_dpre(model, tol)?.average_trace();
    let mut needed: Vec<usize> = l_range.iter().flat_map(|&l| [l, l + 1]).collect();
    needed.sort_unstable();
    needed.dedup();
    let averages = needed
        .par_iter()
        .map(|&l| Ok((l, cmdf_error_dple(model, weights, l, i, tol)?.average_trace())))
        .collect::<Result<Vec<_>>>()?;
    Ok(rates_from_averages(&averages, centralized, l_range))
}

/// One `(sensor, L)` cell of a gap report. `sensor` is 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub sensor: usize,
    #[serde(rename = "L")]
    pub steps: usize,
    pub gap_ric: f64,
    pub gap_cov: f64,
    pub avg_perf: f64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub cells: Vec<GapCell>,
    pub sigma2: f64,
    pub diameter: usize,
    pub centralized_avg: f64,
    /// Per sensor: `exp` of the least-squares slope of `ln gap_cov` against `L`.
    pub envelope_rates: Vec<Option<f64>>,
    pub tolerance: f64,
    pub graph_hash: String,
    pub seed: Option<u64>,
}

impl GapReport {
    pub fn cell(&self, sensor: usize, steps: usize) -> Option<&GapCell> {
        self.cells.iter().find(|c| c.sensor == sensor && c.steps == steps)
    }

    /// Columns `sensor, L, gap_ric, gap_cov, avg_perf, rate, sigma2` with 1-based sensors.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "sensor,L,gap_ric,gap_cov,avg_perf,rate,sigma2").unwrap();
        for c in &self.cells {
            let rate = c.rate.map(|q| format!("{q:?}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:?},{:?},{:?},{},{:?}",
                c.sensor + 1,
                c.steps,
                c.gap_ric,
                c.gap_cov,
                c.avg_perf,
                rate,
                self.sigma2
            )
            .unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// JSON mirror; sensors in `cells` are 1-based like the CSV.
    pub fn to_json(&self) -> String {
        let mut doc = self.clone();
        for c in &mut doc.cells {
            c.sensor += 1;
        }
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

/// Gap figures for every sensor and every `L` in `l_values`. `L + 1` is also
/// solved so that every cell has a rate.
pub fn gap_report(
    model: &PlantModel,
    graph: &SensorGraph,
    weights: &ConsensusWeights,
    l_values: &[usize],
    tol: f64,
    seed: Option<u64>,
) -> Result<GapReport> {
    let central = centralized(model, tol)?;
    let centralized_avg = central.riccati.average_trace();
    let mut all_l: Vec<usize> = l_values.iter().flat_map(|&l| [l, l + 1]).collect();
    all_l.sort_unstable();
    all_l.dedup();
    let powers: Vec<WeightPower> = all_l.iter().map(|&l| weight_power(weights, l)).collect();
    let jobs: Vec<(usize, usize)> = (0..model.sensor_count())
        .flat_map(|i| (0..powers.len()).map(move |p| (i, p)))
        .collect();
    let solved = jobs
        .par_iter()
        .map(|&(i, p)| {
            let node = solve_node(model, &powers[p], i, tol)?;
            let gap_ric = node.riccati.max_distance(&central.riccati);
            let gap_cov = node.error.max_distance(&central.riccati);
            Ok((i, all_l[p], gap_ric, gap_cov, node.error.average_trace()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    let mut envelope_rates = Vec::with_capacity(model.sensor_count());
    for i in 0..model.sensor_count() {
        let mine: Vec<_> = solved.iter().filter(|s| s.0 == i).collect();
        let averages: Vec<(usize, f64)> = mine.iter().map(|s| (s.1, s.4)).collect();
        let rates = rates_from_averages(&averages, centralized_avg, l_values);
        for (&l, rate) in l_values.iter().zip(rates) {
            let s = mine.iter().find(|s| s.1 == l).unwrap();
            cells.push(GapCell {
                sensor: i,
                steps: l,
                gap_ric: s.2,
                gap_cov: s.3,
                avg_perf: s.4,
                rate: rate.q,
            });
        }
        let points: Vec<(f64, f64)> = l_values
            .iter()
            .filter_map(|&l| mine.iter().find(|s| s.1 == l))
            .filter(|s| s.3 > GAP_FLOOR)
            .map(|s| (s.1 as f64, s.3.ln()))
            .collect();
        envelope_rates.push((points.len() >= 2).then(|| network::log_linear_slope(&points).exp()));
    }
    let diameter = graph.diameter()?;
    let sigma2 = linalg::eigenvalue_moduli(weights.matrix()).get(1).copied().unwrap_or(0.0);
    Ok(GapReport {
        cells,
        sigma2,
        diameter,
        centralized_avg,
        envelope_rates,
        tolerance: tol,
        graph_hash: graph.fingerprint(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::metropolis_weights;
    use crate::periodic::SensorModel;
    use nalgebra::dmatrix;

    fn scalar_pair(c: [f64; 2], r: [f64; 2]) -> PlantModel {
        PlantModel::new(
            PeriodicSequence::constant(dmatrix![1.2]),
            PeriodicSequence::constant(dmatrix![1.0]),
            (0..2)
                .map(|j| SensorModel {
                    c: PeriodicSequence::constant(dmatrix![c[j]]),
                    r: PeriodicSequence::constant(dmatrix![r[j]]),
                })
                .collect(),
        )
        .unwrap()
    }

    fn pair_weights(w: f64) -> ConsensusWeights {
        ConsensusWeights::new(dmatrix![1.0 - w, w; w, 1.0 - w]).unwrap()
    }

    /// Scalar Riccati fixed point by plain iteration.
    fn scalar_riccati(a: f64, q: f64, info: f64) -> f64 {
        let mut p = 1.0;
        for _ in 0..10_000 {
            p = a * a / (1.0 / p + info) + q;
        }
        p
    }

    #[test]
    fn averaging_reproduces_centralized() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let avg = ConsensusWeights::averaging(2);
        let central = ckf_dpre(&model, 1e-13).unwrap();
        for i in 0..2 {
            let ric = cmdf_dpre(&model, &avg, 1, i, 1e-13).unwrap();
            let cov = cmdf_error_dple(&model, &avg, 1, i, 1e-13).unwrap();
            assert!(ric.max_distance(&central) < 1e-10);
            assert!(cov.max_distance(&central) < 1e-10);
            let s = gap_series_ric(&model, &avg, 1, i, 500, 1e-13).unwrap();
            assert!(s.series[0].amax() < 1e-12 && s.direct[0].amax() < 1e-10);
        }
    }

    #[test]
    fn scalar_pair_matches_scalar_oracle() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let w = pair_weights(0.2);
        let l = 3;
        let l13 = (1.0 + (1.0f64 - 0.4).powi(l as i32)) / 2.0;
        // node 1's information: N sum_j l_1j^{(L)} c_j^2 / r_j
        let info = 2.0 * (l13 * 1.0 + (1.0 - l13) * 0.25 / 2.0);
        let p = scalar_riccati(1.2, 1.0, info);
        let ric = cmdf_dpre(&model, &w, l, 0, 1e-13).unwrap();
        assert!((ric.at(0)[(0, 0)] - p).abs() < 1e-10);

        // true error: e' = a m e + a g (noise), m = post/p, noise variance sum (N l c / r)^2 r
        let post = 1.0 / (1.0 / p + info);
        let m = post / p;
        let noise = (2.0 * l13 * 1.0 / 1.0).powi(2) * 1.0 + (2.0 * (1.0 - l13) * 0.5 / 2.0).powi(2) * 2.0;
        let mut e = 0.0;
        for _ in 0..10_000 {
            e = 1.44 * (m * m * e + post * post * noise) + 1.0;
        }
        let cov = cmdf_error_dple(&model, &w, l, 0, 1e-13).unwrap();
        assert!((cov.at(0)[(0, 0)] - e).abs() < 1e-9);
    }

    #[test]
    fn identical_sensors_large_l_reach_centralized() {
        let model = scalar_pair([1.0, 1.0], [1.0, 1.0]);
        let w = pair_weights(0.3);
        let p = scalar_riccati(1.2, 1.0, 2.0);
        let ric = cmdf_dpre(&model, &w, 20, 0, 1e-13).unwrap();
        assert!((ric.at(0)[(0, 0)] - p).abs() < 1e-10);
    }

    #[test]
    fn series_match_direct_differences() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let w = pair_weights(0.2);
        for l in [1, 2, 4] {
            for i in 0..2 {
                let ric = gap_series_ric(&model, &w, l, i, 500, 1e-13).unwrap();
                ric.ensure(1e-8).unwrap();
                assert!(ric.direct[0].amax() > 1e-6);
                let cov = gap_series_cov(&model, &w, l, i, 500, 1e-13).unwrap();
                cov.ensure(1e-8).unwrap();
            }
        }
    }

    #[test]
    fn series_without_full_support_is_rejected_for_riccati_only() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let w = pair_weights(0.2);
        assert!(matches!(gap_series_ric(&model, &w, 0, 0, 100, 1e-12), Err(Error::InvalidInput(_))));
        gap_series_cov(&model, &w, 0, 0, 500, 1e-13).unwrap().ensure(1e-8).unwrap();
    }

    #[test]
    fn truncation_is_flagged() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let s = gap_series_cov(&model, &pair_weights(0.2), 1, 0, 0, 1e-13).unwrap();
        assert!(s.ensure(1e-12).is_err());
    }

    #[test]
    fn unobservable_node_is_an_error() {
        let model = scalar_pair([1.0, 0.0], [1.0, 1.0]);
        let err = cmdf_dpre(&model, &pair_weights(0.2), 0, 1, 1e-10).unwrap_err();
        assert!(matches!(err, Error::Unobservable(_)));
    }

    #[test]
    fn rates_on_two_nodes() {
        // identical sensors: the gap is quadratic in (1 - 2w)^L
        let model = scalar_pair([1.0, 1.0], [1.0, 2.0]);
        for w in [0.1, 0.3] {
            let sigma2 = (1.0f64 - 2.0 * w).abs();
            let rates = rate_fit(&model, &pair_weights(w), 0, &[6, 8, 10], 1e-14).unwrap();
            for r in rates {
                let q = r.q.unwrap();
                assert!(q <= sigma2 + 0.02);
            }
        }
    }

    #[test]
    fn rates_on_averaging_are_at_the_floor() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let rates = rate_fit(&model, &ConsensusWeights::averaging(2), 0, &[1, 2], 1e-13).unwrap();
        assert!(rates.iter().all(|r| r.q.is_none()));
    }

    #[test]
    fn rates_from_averages_guard() {
        let r = rates_from_averages(&[(1, 2.0), (2, 1.5), (3, 1.25)], 1.0, &[1, 2, 3]);
        assert_eq!(r[0].q, Some(0.5));
        assert_eq!(r[1].q, Some(0.5));
        assert_eq!(r[2].q, None);
    }

    #[test]
    fn report_on_path_graph() {
        let model = scalar_pair([1.0, 0.5], [1.0, 2.0]);
        let g = SensorGraph::path(2);
        let w = metropolis_weights(&g).unwrap();
        let report = gap_report(&model, &g, &w, &[1, 2], 1e-12, Some(3)).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.diameter, 1);
        for c in &report.cells {
            assert!(c.gap_cov >= 0.0);
            assert!(c.avg_perf >= report.centralized_avg - 1e-8);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sensor,L,gap_ric,gap_cov,avg_perf,rate,sigma2");
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("1,1,"));
    }
}
