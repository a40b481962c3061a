//! Monte Carlo experiments: run the filters over many simulated trajectories
//! and compare the empirical mean square errors with the theoretical curves.
//!
//! The covariance side of every filter is deterministic, so it is computed
//! once per scenario; each trial then only propagates estimates through the
//! precomputed affine maps.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{self, GainSchedule};
use crate::gap;
use crate::linalg;
use crate::network::{self, weight_power, ConsensusWeights, GraphConfig, SensorGraph};
use crate::periodic::{self, NoiseFactors, PlantConfig, PlantModel};
use crate::spps;

/// Estimates with a norm above this mark a trial as diverged.
pub const DIVERGENCE_NORM: f64 = 1e9;
/// Trials per reduction block; blocks are combined in trial order.
const BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "CKF")]
    Ckf,
    #[serde(rename = "CMDF")]
    Cmdf,
    #[serde(rename = "CIDF")]
    Cidf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Ckf, FilterKind::Cmdf, FilterKind::Cidf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ckf => "CKF",
            FilterKind::Cmdf => "CMDF",
            FilterKind::Cidf => "CIDF",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown filter {s:?} (expected CKF, CMDF or CIDF)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGeometricParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub side: f64,
    pub radius: f64,
    /// The first connected graph for seeds `seed, seed + 1, ...` is used.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    RandomGeometric { random_geometric: RandomGeometricParams },
    Explicit(GraphConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSource {
    /// Only `"metropolis"` is recognised.
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

fn metropolis_default() -> WeightsSource {
    WeightsSource::Named("metropolis".into())
}

fn all_filters() -> Vec<FilterKind> {
    FilterKind::ALL.to_vec()
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub graph: GraphSource,
    #[serde(default = "metropolis_default")]
    pub weights: WeightsSource,
    /// Defaults to `d, d + 1, ..., d + 8` with `d` the graph diameter.
    #[serde(rename = "L_values", default, skip_serializing_if = "Option::is_none")]
    pub l_values: Option<Vec<usize>>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "all_filters")]
    pub filters: Vec<FilterKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plant: PlantModel,
    pub graph: SensorGraph,
    pub weights: ConsensusWeights,
    pub l_values: Vec<usize>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub filters: Vec<FilterKind>,
    /// True initial state; the filters start from a zero estimate with identity covariance.
    pub x0: DVector<f64>,
    pub noise_scale: f64,
    pub tolerance: f64,
    config: ScenarioConfig,
}

pub fn default_l_values(diameter: usize) -> Vec<usize> {
    (diameter..=diameter + 8).collect()
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let plant = config.plant.build()?;
        let graph = match &config.graph {
            GraphSource::RandomGeometric { random_geometric: g } => {
                network::connected_random_geometric_graph(g.n, g.side, g.radius, g.seed, 10_000)?.0
            }
            GraphSource::Explicit(g) => g.build()?,
        };
        if graph.node_count() != plant.sensor_count() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes but the plant has {} sensors",
                graph.node_count(),
                plant.sensor_count()
            )));
        }
        if !graph.is_strongly_connected() {
            return Err(Error::Disconnected);
        }
        let weights = match &config.weights {
            WeightsSource::Named(name) if name == "metropolis" => network::metropolis_weights(&graph)?,
            WeightsSource::Named(name) => return Err(Error::InvalidInput(format!("unknown weights {name:?}"))),
            WeightsSource::Matrix(rows) => ConsensusWeights::for_graph(linalg::from_rows(rows)?, &graph)?,
        };
        let l_values = match &config.l_values {
            Some(l) => l.clone(),
            None => default_l_values(graph.diameter()?),
        };
        if config.horizon < 2 * plant.period() {
            return Err(Error::InvalidInput(format!(
                "horizon {} is shorter than two periods ({})",
                config.horizon,
                2 * plant.period()
            )));
        }
        if config.trials == 0 {
            return Err(Error::InvalidInput("at least one trial is required".into()));
        }
        if config.filters.is_empty() {
            return Err(Error::InvalidInput("no filters configured".into()));
        }
        let x0 = match &config.x0 {
            Some(v) if v.len() == plant.state_dim() => DVector::from_vec(v.clone()),
            Some(_) => return Err(Error::Dimension(format!("x0 must have length {}", plant.state_dim()))),
            None => DVector::zeros(plant.state_dim()),
        };
        let noise_scale = config.noise_scale.unwrap_or(1.0);
        if !(noise_scale >= 0.0) {
            return Err(Error::InvalidInput("noise_scale must be nonnegative".into()));
        }
        let tolerance = config.tolerance.unwrap_or(spps::DEFAULT_TOL);
        if !(tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        let mut filters = config.filters.clone();
        filters.sort();
        filters.dedup();
        Ok(Self {
            plant,
            graph,
            weights,
            l_values,
            horizon: config.horizon,
            trials: config.trials,
            seed: config.seed,
            filters,
            x0,
            noise_scale,
            tolerance,
            config,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "scenario".into(),
            source,
        })?;
        Self::from_config(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The 20-sensor benchmark on a 300 x 300 field with radius 130,
    /// 100 steps and 1500 trials.
    pub fn paper(seed: u64) -> Result<Self> {
        Self::from_config(Self::paper_config(seed))
    }

    pub fn paper_config(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            plant: PlantConfig::Builtin {
                builtin: periodic::BUILTIN_PAPER.into(),
            },
            graph: GraphSource::RandomGeometric {
                random_geometric: RandomGeometricParams {
                    n: 20,
                    side: 300.0,
                    radius: 130.0,
                    seed,
                },
            },
            weights: metropolis_default(),
            l_values: None,
            horizon: 100,
            trials: 1500,
            seed,
            filters: all_filters(),
            x0: None,
            noise_scale: None,
            tolerance: None,
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Re-validates with changes applied to the underlying configuration.
    pub fn with_config(&self, edit: impl FnOnce(&mut ScenarioConfig)) -> Result<Self> {
        let mut config = self.config.clone();
        edit(&mut config);
        Self::from_config(config)
    }

    /// Last full period `K - T + 1 ..= K`, standing in for the infinite-time limit.
    pub fn steady_window(&self) -> std::ops::RangeInclusive<usize> {
        self.horizon + 1 - self.plant.period()..=self.horizon
    }

    pub fn diameter(&self) -> usize {
        self.graph.diameter().expect("scenario graphs are connected")
    }
}

/// Identifies one MSE curve. `sensor` and `steps` are `None` for the centralized filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesKey {
    pub filter: FilterKind,
    pub sensor: Option<usize>,
    #[serde(rename = "L")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub key: SeriesKey,
    /// Empirical MSE at `k = 1..=K` (index `k - 1`).
    pub mse: Vec<f64>,
    /// Standard error of each `mse` entry.
    pub mse_se: Vec<f64>,
    /// Trace of the true predicted error covariance at `k = 1..=K`, when known.
    pub theory: Option<Vec<f64>>,
    /// Mean of `mse` over the steady window.
    pub steady_mse: f64,
    /// Standard error of `steady_mse` from the spread across trials.
    pub steady_se: f64,
    /// Average trace of the periodic steady-state error covariance.
    pub theory_avg: Option<f64>,
    /// Ratio of consecutive steady gaps to the centralized filter.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResults {
    pub series: Vec<Series>,
    pub horizon: usize,
    pub trials: usize,
    pub trials_used: usize,
    pub diverged: Vec<usize>,
    pub seed: u64,
    pub sigma2: f64,
    pub diameter: usize,
    pub graph_hash: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl TrialResults {
    pub fn get(&self, filter: FilterKind, sensor: Option<usize>, steps: Option<usize>) -> Option<&Series> {
        self.series
            .iter()
            .find(|s| s.key.filter == filter && s.key.sensor == sensor && s.key.steps == steps)
    }
}

/// Flat row-major `n x cols` matrix times vector, accumulated into `out`.
#[inline]
fn mv_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Everything a trial needs besides its random draws.
struct Plan {
    n: usize,
    sensors: usize,
    horizon: usize,
    period: usize,
    window: std::ops::RangeInclusive<usize>,
    a: Vec<Vec<f64>>,
    /// `[k mod T][j]` flat `C_j' R_j^{-1}`.
    ctr: Vec<Vec<(Vec<f64>, usize)>>,
    keys: Vec<SeriesKey>,
    runs: Vec<Run>,
}

enum Run {
    /// `x_post_i = M_ik x_pred_i + G_ik sum_j F_ij b_j` for each node; `F` is `nodes x N`.
    Information {
        first_series: usize,
        coeffs: Vec<f64>,
        m: Vec<Vec<Vec<f64>>>,
        g: Vec<Vec<Vec<f64>>>,
    },
    /// `x_post_i = Post_ik sum_j W_ij (Pinv_jk x_pred_j + b_j)`.
    Mixing {
        first_series: usize,
        weights: Vec<f64>,
        pred_info: Vec<Vec<Vec<f64>>>,
        post: Vec<Vec<Vec<f64>>>,
    },
}

fn flatten_schedule(s: &GainSchedule) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (s.m.iter().map(flat).collect(), s.g.iter().map(flat).collect())
}

fn build_plan(scenario: &Scenario) -> Result<(Plan, Vec<Option<Vec<f64>>>)> {
    let model = &scenario.plant;
    let (n, sensors, horizon, period) = (model.state_dim(), model.sensor_count(), scenario.horizon, model.period());
    let p0 = DMatrix::identity(n, n);
    let e0 = {
        let d = &scenario.x0;
        d * d.transpose()
    };
    let mut keys = Vec::new();
    let mut runs = Vec::new();
    let mut theory = Vec::new();
    let traces = |covs: Vec<DMatrix<f64>>| covs[1..].iter().map(|c| c.trace()).collect::<Vec<_>>();

    if scenario.filters.contains(&FilterKind::Ckf) {
        let sched = filters::ckf_schedule(model, &p0, horizon)?;
        let coeffs = vec![1.0; sensors];
        theory.push(Some(traces(filters::error_covariance_recursion(model, &sched, &coeffs, &e0, horizon)?)));
        let (m, g) = flatten_schedule(&sched);
        runs.push(Run::Information {
            first_series: keys.len(),
            coeffs,
            m: vec![m],
            g: vec![g],
        });
        keys.push(SeriesKey {
            filter: FilterKind::Ckf,
            sensor: None,
            steps: None,
        });
    }
    for &l in &scenario.l_values {
        let power = weight_power(&scenario.weights, l);
        if scenario.filters.contains(&FilterKind::Cmdf) {
            let per_node = (0..sensors)
                .into_par_iter()
                .map(|i| {
                    let sched = filters::cmdf_schedule(model, &power, i, &p0, horizon)?;
                    let coeffs = filters::cmdf_coefficients(&power, i);
                    let th = traces(filters::error_covariance_recursion(model, &sched, &coeffs, &e0, horizon)?);
                    Ok((flatten_schedule(&sched), th))
                })
                .collect::<Result<Vec<_>>>()?;
            let first_series = keys.len();
            let (mut ms, mut gs) = (Vec::new(), Vec::new());
            for (i, ((m, g), th)) in per_node.into_iter().enumerate() {
                ms.push(m);
                gs.push(g);
                theory.push(Some(th));
                keys.push(SeriesKey {
                    filter: FilterKind::Cmdf,
                    sensor: Some(i),
                    steps: Some(l),
                });
            }
            let coeffs = (0..sensors).flat_map(|i| filters::cmdf_coefficients(&power, i)).collect();
            runs.push(Run::Information {
                first_series,
                coeffs,
                m: ms,
                g: gs,
            });
        }
        if scenario.filters.contains(&FilterKind::Cidf) {
            let sched = filters::cidf_schedule(model, &power, &p0, horizon)?;
            let first_series = keys.len();
            for i in 0..sensors {
                theory.push(None);
                keys.push(SeriesKey {
                    filter: FilterKind::Cidf,
                    sensor: Some(i),
                    steps: Some(l),
                });
            }
            let by_node = |per_k: &Vec<Vec<DMatrix<f64>>>| -> Vec<Vec<Vec<f64>>> {
                (0..sensors).map(|i| per_k.iter().map(|row| flat(&row[i])).collect()).collect()
            };
            runs.push(Run::Mixing {
                first_series,
                weights: flat(&power.matrix),
                pred_info: by_node(&sched.predicted_information),
                post: by_node(&sched.posterior),
            });
        }
    }

    let a = (0..period).map(|k| flat(model.a().at(k))).collect();
    let ctr = (0..period)
        .map(|k| {
            (0..sensors)
                .map(|j| {
                    let s = model.sensor(j);
                    let r_inv = linalg::spd_inverse(s.r.at(k), "measurement covariance")?;
                    let m = s.c.at(k).transpose() * r_inv;
                    Ok((flat(&m), m.ncols()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Plan {
            n,
            sensors,
            horizon,
            period,
            window: scenario.steady_window(),
            a,
            ctr,
            keys,
            runs,
        },
        theory,
    ))
}

/// Squared errors of the predicted estimates, `[series][k - 1]`, or `None` if the trial diverged.
fn run_trial(scenario: &Scenario, plan: &Plan, factors: &NoiseFactors, trial: usize) -> Result<Option<Vec<Vec<f64>>>> {
    let estimates = trial_estimates(scenario, plan, factors, trial)?;
    Ok(estimates.map(|(states, est)| {
        est.iter()
            .map(|per_k| {
                per_k
                    .iter()
                    .enumerate()
                    .map(|(k, x)| x.iter().zip(states[k + 1].iter()).map(|(a, b)| (a - b) * (a - b)).sum())
                    .collect()
            })
            .collect()
    }))
}

type Estimates = (Vec<DVector<f64>>, Vec<Vec<Vec<f64>>>);

/// Predicted estimates `[series][k - 1]` alongside the true states.
fn trial_estimates(scenario: &Scenario, plan: &Plan, factors: &NoiseFactors, trial: usize) -> Result<Option<Estimates>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(trial as u64);
    let traj = periodic::simulate_with(
        &scenario.plant,
        factors,
        plan.horizon,
        rng,
        scenario.seed,
        &scenario.x0,
        scenario.noise_scale,
    )?;
    let (n, sensors) = (plan.n, plan.sensors);
    // b[k][j] = C_j' R_j^{-1} y_j,k
    let mut b = vec![0.0; (plan.horizon + 1) * sensors * n];
    for k in 1..=plan.horizon {
        for j in 0..sensors {
            let (m, _) = &plan.ctr[k % plan.period][j];
            let off = (k * sensors + j) * n;
            mv_add(m, traj.measurements[k][j].as_slice(), &mut b[off..off + n]);
        }
    }
    let b_at = |k: usize, j: usize| &b[(k * sensors + j) * n..(k * sensors + j + 1) * n];

    let mut out = vec![Vec::with_capacity(plan.horizon); plan.keys.len()];
    let mut diverged = false;
    let mut pred = vec![0.0; n];
    let mut fused = vec![0.0; n];
    for run in &plan.runs {
        match run {
            Run::Information { first_series, coeffs, m, g } => {
                let nodes = m.len();
                let mut post = vec![vec![0.0; n]; nodes];
                for k in 1..=plan.horizon {
                    for (i, x) in post.iter_mut().enumerate() {
                        pred.iter_mut().for_each(|v| *v = 0.0);
                        mv_add(&plan.a[(k - 1) % plan.period], x, &mut pred);
                        out[first_series + i].push(pred.clone());
                        fused.iter_mut().for_each(|v| *v = 0.0);
                        for j in 0..sensors {
                            let w = coeffs[i * sensors + j];
                            if w != 0.0 {
                                fused.iter_mut().zip(b_at(k, j)).for_each(|(f, v)| *f += w * v);
                            }
                        }
                        x.iter_mut().for_each(|v| *v = 0.0);
                        mv_add(&m[i][k], &pred, x);
                        mv_add(&g[i][k], &fused, x);
                        diverged |= x.iter().any(|v| !v.is_finite()) || x.iter().map(|v| v * v).sum::<f64>().sqrt() > DIVERGENCE_NORM;
                    }
                }
            }
            Run::Mixing {
                first_series,
                weights,
                pred_info,
                post: post_cov,
            } => {
                let mut post = vec![vec![0.0; n]; sensors];
                let mut u = vec![vec![0.0; n]; sensors];
                for k in 1..=plan.horizon {
                    for (j, x) in post.iter().enumerate() {
                        pred.iter_mut().for_each(|v| *v = 0.0);
                        mv_add(&plan.a[(k - 1) % plan.period], x, &mut pred);
                        out[first_series + j].push(pred.clone());
                        u[j].copy_from_slice(b_at(k, j));
                        mv_add(&pred_info[j][k], &pred, &mut u[j]);
                    }
                    for (i, x) in post.iter_mut().enumerate() {
                        fused.iter_mut().for_each(|v| *v = 0.0);
                        for (j, uj) in u.iter().enumerate() {
                            let w = weights[i * sensors + j];
                            if w != 0.0 {
                                fused.iter_mut().zip(uj).for_each(|(f, v)| *f += w * v);
                            }
                        }
                        x.iter_mut().for_each(|v| *v = 0.0);
                        mv_add(&post_cov[i][k], &fused, x);
                        diverged |= x.iter().any(|v| !v.is_finite()) || x.iter().map(|v| v * v).sum::<f64>().sqrt() > DIVERGENCE_NORM;
                    }
                }
            }
        }
    }
    Ok((!diverged).then_some((traj.states, out)))
}

#[derive(Clone)]
struct Accumulator {
    sq: Vec<Vec<f64>>,
    sq2: Vec<Vec<f64>>,
    steady: Vec<f64>,
    steady_sq: Vec<f64>,
    used: usize,
    diverged: Vec<usize>,
}

impl Accumulator {
    fn new(series: usize, horizon: usize) -> Self {
        Self {
            sq: vec![vec![0.0; horizon]; series],
            sq2: vec![vec![0.0; horizon]; series],
            steady: vec![0.0; series],
            steady_sq: vec![0.0; series],
            used: 0,
            diverged: Vec::new(),
        }
    }

    fn add_trial(&mut self, errors: &[Vec<f64>], window: &std::ops::RangeInclusive<usize>) {
        let len = (window.end() - window.start() + 1) as f64;
        for (s, e) in errors.iter().enumerate() {
            for ((acc, acc2), v) in self.sq[s].iter_mut().zip(self.sq2[s].iter_mut()).zip(e) {
                *acc += v;
                *acc2 += v * v;
            }
            let m = e[window.start() - 1..*window.end()].iter().sum::<f64>() / len;
            self.steady[s] += m;
            self.steady_sq[s] += m * m;
        }
        self.used += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.sq.iter_mut().zip(&other.sq).chain(self.sq2.iter_mut().zip(&other.sq2)) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.steady.iter_mut().zip(&other.steady).for_each(|(x, y)| *x += y);
        self.steady_sq.iter_mut().zip(&other.steady_sq).for_each(|(x, y)| *x += y);
        self.used += other.used;
        self.diverged.extend(&other.diverged);
    }
}

/// Theoretical steady averages per `(sensor, L)` for the consensus-on-measurement
/// filter, including `L + 1` so that rates can be formed.
fn steady_theory(scenario: &Scenario) -> (Option<f64>, Vec<((usize, usize), Option<f64>)>) {
    let model = &scenario.plant;
    let central = gap::ckf_dpre(model, scenario.tolerance).ok().map(|s| s.average_trace());
    if !scenario.filters.contains(&FilterKind::Cmdf) {
        return (central, Vec::new());
    }
    let mut ls: Vec<usize> = scenario.l_values.iter().flat_map(|&l| [l, l + 1]).collect();
    ls.sort_unstable();
    ls.dedup();
    let jobs: Vec<(usize, usize)> = ls.iter().flat_map(|&l| (0..model.sensor_count()).map(move |i| (i, l))).collect();
    let values = jobs
        .par_iter()
        .map(|&(i, l)| {
            let power = weight_power(&scenario.weights, l);
            ((i, l), gap::solve_node(model, &power, i, scenario.tolerance).ok().map(|s| s.error.average_trace()))
        })
        .collect();
    (central, values)
}

/// Standard error of a mean from the sum of squares, with the unbiased variance.
fn standard_error(sum_sq: f64, mean: f64, count: f64) -> f64 {
    if count < 2.0 {
        return 0.0;
    }
    (((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0) / count).sqrt()
}

/// Runs every configured filter over `trials` independent trajectories.
pub fn run_monte_carlo(scenario: &Scenario) -> Result<TrialResults> {
    let start = Instant::now();
    let (plan, theory) = build_plan(scenario)?;
    let factors = NoiseFactors::new(&scenario.plant)?;
    let blocks: Vec<usize> = (0..scenario.trials.div_ceil(BLOCK)).collect();
    let partial = blocks
        .par_iter()
        .map(|&b| {
            let mut acc = Accumulator::new(plan.keys.len(), plan.horizon);
            for trial in b * BLOCK..((b + 1) * BLOCK).min(scenario.trials) {
                match run_trial(scenario, &plan, &factors, trial) {
                    Ok(Some(errors)) => acc.add_trial(&errors, &plan.window),
                    Ok(None) | Err(Error::NonFinite(_)) => acc.diverged.push(trial),
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Accumulator::new(plan.keys.len(), plan.horizon);
    for acc in &partial {
        total.merge(acc);
    }
    if total.diverged.len() * 100 > scenario.trials || total.used == 0 {
        return Err(Error::Divergence {
            diverged: total.diverged.len(),
            trials: scenario.trials,
            first: total.diverged.first().copied().unwrap_or(0),
        });
    }

    let (central_avg, node_avgs) = steady_theory(scenario);
    let avg_of = |i: usize, l: usize| node_avgs.iter().find(|(key, _)| *key == (i, l)).and_then(|(_, v)| *v);
    let h = total.used as f64;
    let series = plan
        .keys
        .iter()
        .zip(theory)
        .enumerate()
        .map(|(s, (key, theory))| {
            let mse: Vec<f64> = total.sq[s].iter().map(|v| v / h).collect();
            let mse_se = mse.iter().zip(&total.sq2[s]).map(|(m, sq2)| standard_error(*sq2, *m, h)).collect();
            let steady_mse = total.steady[s] / h;
            let (theory_avg, rate) = match (key.filter, key.sensor, key.steps) {
                (FilterKind::Ckf, _, _) => (central_avg, None),
                (FilterKind::Cmdf, Some(i), Some(l)) => {
                    let now = avg_of(i, l);
                    let rate = match (now, avg_of(i, l + 1), central_avg) {
                        (Some(a), Some(b), Some(c)) => gap::rates_from_averages(&[(l, a), (l + 1, b)], c, &[l])[0].q,
                        _ => None,
                    };
                    (now, rate)
                }
                _ => (None, None),
            };
            Series {
                key: *key,
                mse,
                mse_se,
                theory,
                steady_mse,
                steady_se: standard_error(total.steady_sq[s], steady_mse, h),
                theory_avg,
                rate,
            }
        })
        .collect();
    Ok(TrialResults {
        series,
        horizon: scenario.horizon,
        trials: scenario.trials,
        trials_used: total.used,
        diverged: total.diverged,
        seed: scenario.seed,
        sigma2: linalg::eigenvalue_moduli(scenario.weights.matrix()).get(1).copied().unwrap_or(0.0),
        diameter: scenario.diameter(),
        graph_hash: scenario.graph.fingerprint(),
        elapsed: start.elapsed(),
    })
}

/// Steady MSE of both distributed filters per sensor and `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub sensor: usize,
    #[serde(rename = "L")]
    pub steps: usize,
    pub mse_cmdf: f64,
    pub mse_cidf: f64,
    pub se_cmdf: f64,
    pub se_cidf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Per sensor: the smallest swept `L` from which the measurement-consensus
    /// filter is better at every larger swept `L`.
    pub crossover: Vec<Option<usize>>,
}

impl ComparisonTable {
    pub fn from_results(results: &TrialResults, sensors: usize, l_values: &[usize]) -> Result<Self> {
        let mut rows = Vec::new();
        let mut crossover = Vec::with_capacity(sensors);
        for i in 0..sensors {
            let mut better = Vec::new();
            for &l in l_values {
                let (a, b) = match (
                    results.get(FilterKind::Cmdf, Some(i), Some(l)),
                    results.get(FilterKind::Cidf, Some(i), Some(l)),
                ) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Error::InvalidInput("comparison needs both CMDF and CIDF results".into())),
                };
                better.push((l, a.steady_mse < b.steady_mse));
                rows.push(ComparisonRow {
                    sensor: i,
                    steps: l,
                    mse_cmdf: a.steady_mse,
                    mse_cidf: b.steady_mse,
                    se_cmdf: a.steady_se,
                    se_cidf: b.steady_se,
                });
            }
            let mut sorted = better.clone();
            sorted.sort_unstable();
            let mut from = None;
            for &(l, ok) in sorted.iter().rev() {
                if !ok {
                    break;
                }
                from = Some(l);
            }
            crossover.push(from);
        }
        Ok(Self { rows, crossover })
    }

    /// Columns `sensor, L, mse_cmdf, mse_cidf, se_cmdf, se_cidf` with 1-based sensors.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path, &["sensor", "L", "mse_cmdf", "mse_cidf", "se_cmdf", "se_cidf"])?;
        for r in &self.rows {
            w.serialize(ComparisonRow {
                sensor: r.sensor + 1,
                ..r.clone()
            })
            .map_err(|source| csv_error(path, source))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs both distributed filters and tabulates their steady MSE.
pub fn compare_cidf(scenario: &Scenario) -> Result<(ComparisonTable, TrialResults)> {
    let mut s = scenario.clone();
    for f in [FilterKind::Cmdf, FilterKind::Cidf] {
        if !s.filters.contains(&f) {
            s.filters.push(f);
        }
    }
    s.filters.sort();
    let results = run_monte_carlo(&s)?;
    let table = ComparisonTable::from_results(&results, s.plant.sensor_count(), &s.l_values)?;
    Ok((table, results))
}

/// One per-step CSV row. `sensor` is 1-based, 0 for the centralized filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStepRow {
    pub filter: FilterKind,
    pub sensor: usize,
    #[serde(rename = "L")]
    pub steps: Option<usize>,
    pub k: usize,
    pub mse_empirical: f64,
    pub mse_theory: Option<f64>,
}

/// One steady-state CSV row. `sensor` is 1-based, 0 for the centralized filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyRow {
    pub filter: FilterKind,
    pub sensor: usize,
    #[serde(rename = "L")]
    pub steps: Option<usize>,
    pub mse_i: f64,
    pub theory_avg: Option<f64>,
    pub rate_q: Option<f64>,
    pub sigma2: f64,
    pub mse_se: f64,
}

pub const PER_STEP_HEADER: [&str; 6] = ["filter", "sensor", "L", "k", "mse_empirical", "mse_theory"];
pub const STEADY_HEADER: [&str; 8] = ["filter", "sensor", "L", "mse_i", "theory_avg", "rate_q", "sigma2", "mse_se"];

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|source| csv_error(path, source))?;
    w.write_record(header).map_err(|source| csv_error(path, source))?;
    Ok(w)
}

impl TrialResults {
    pub fn per_step_rows(&self) -> Vec<PerStepRow> {
        self.series
            .iter()
            .flat_map(|s| {
                s.mse.iter().enumerate().map(move |(idx, &m)| PerStepRow {
                    filter: s.key.filter,
                    sensor: s.key.sensor.map_or(0, |i| i + 1),
                    steps: s.key.steps,
                    k: idx + 1,
                    mse_empirical: m,
                    mse_theory: s.theory.as_ref().map(|t| t[idx]),
                })
            })
            .collect()
    }

    pub fn steady_rows(&self) -> Vec<SteadyRow> {
        self.series
            .iter()
            .map(|s| SteadyRow {
                filter: s.key.filter,
                sensor: s.key.sensor.map_or(0, |i| i + 1),
                steps: s.key.steps,
                mse_i: s.steady_mse,
                theory_avg: s.theory_avg,
                rate_q: s.rate,
                sigma2: self.sigma2,
                mse_se: s.steady_se,
            })
            .collect()
    }

    /// Writes `per_step.csv`, `steady.csv` and `results.json` into `dir`, and
    /// the wall-clock time into `timing.txt` so the others stay reproducible.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("per_step.csv");
        let mut w = csv_writer(&path, &PER_STEP_HEADER)?;
        for row in self.per_step_rows() {
            w.serialize(row).map_err(|source| csv_error(&path, source))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("steady.csv");
        let mut w = csv_writer(&path, &STEADY_HEADER)?;
        for row in self.steady_rows() {
            w.serialize(row).map_err(|source| csv_error(&path, source))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("results.json");
        let json = serde_json::to_string_pretty(self).expect("results serialize");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("timing.txt");
        std::fs::write(&path, format!("elapsed_seconds {:.3}\n", self.elapsed.as_secs_f64())).map_err(|e| Error::io(&path, e))
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| csv_error(path, source))?;
    r.deserialize().map(|row| row.map_err(|source| csv_error(path, source))).collect()
}

pub fn read_per_step_csv(path: &Path) -> Result<Vec<PerStepRow>> {
    read_rows(path)
}

pub fn read_steady_csv(path: &Path) -> Result<Vec<SteadyRow>> {
    read_rows(path)
}

/// Per-node trace of a single trial using the step-by-step filters:
/// columns `trial, k, node, mse_contribution, trace_P` (node 0 is the centralized filter).
pub fn write_filter_trace(scenario: &Scenario, filter: FilterKind, steps: usize, trial: usize, path: &Path) -> Result<()> {
    let model = &scenario.plant;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(trial as u64);
    let factors = NoiseFactors::new(model)?;
    let traj = periodic::simulate_with(model, &factors, scenario.horizon, rng, scenario.seed, &scenario.x0, scenario.noise_scale)?;
    let n = model.state_dim();
    let mut w = csv_writer(path, &["trial", "k", "node", "mse_contribution", "trace_P"])?;
    let mut write = |k: usize, node: usize, x: &DVector<f64>, p: &DMatrix<f64>| {
        let e = (x - &traj.states[k]).norm_squared();
        w.write_record([trial.to_string(), k.to_string(), node.to_string(), format!("{e:?}"), format!("{:?}", p.trace())])
            .map_err(|source| csv_error(path, source))
    };
    match filter {
        FilterKind::Ckf => {
            let mut state = filters::NodeState::initial(n);
            for k in 1..=scenario.horizon {
                state = filters::ckf_step(model, &state, &traj.stacked_measurement(k), k)?;
                write(k, 0, &state.estimate, &state.covariance)?;
            }
        }
        FilterKind::Cmdf | FilterKind::Cidf => {
            let mut states = vec![filters::NodeState::initial(n); model.sensor_count()];
            for k in 1..=scenario.horizon {
                states = if filter == FilterKind::Cmdf {
                    filters::cmdf_step(model, &scenario.weights, steps, &states, &traj.measurements[k], k)?
                } else {
                    filters::cidf_step(model, &scenario.weights, steps, &states, &traj.measurements[k], k)?
                };
                for (i, s) in states.iter().enumerate() {
                    write(k, i + 1, &s.estimate, &s.covariance)?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
