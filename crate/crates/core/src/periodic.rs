//! Periodic plant data: matrix sequences, the sensor-network plant model and
//! ground-truth simulation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A `period`-periodic sequence of equally sized matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSequence {
    items: Vec<DMatrix<f64>>,
}

impl PeriodicSequence {
    pub fn new(items: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidInput("periodic sequence needs at least one item".into()))?;
        let shape = first.shape();
        if let Some((k, m)) = items.iter().enumerate().find(|(_, m)| m.shape() != shape) {
            return Err(Error::Dimension(format!(
                "item {k} is {}x{} but item 0 is {}x{}",
                m.nrows(),
                m.ncols(),
                shape.0,
                shape.1
            )));
        }
        Ok(Self { items })
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self { items: vec![m] }
    }

    pub fn period(&self) -> usize {
        self.items.len()
    }

    /// Item at time `k`, i.e. `items[k mod period]`.
    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.items[k % self.items.len()]
    }

    pub fn items(&self) -> &[DMatrix<f64>] {
        &self.items
    }

    pub fn shape(&self) -> (usize, usize) {
        self.items[0].shape()
    }

    /// Unrolls the sequence to `period` items; `period` must be a multiple of the current one.
    pub fn with_period(&self, period: usize) -> Result<Self> {
        if period == 0 || period % self.period() != 0 {
            return Err(Error::InvalidInput(format!(
                "period {period} is not a multiple of {}",
                self.period()
            )));
        }
        Ok(Self {
            items: (0..period).map(|k| self.at(k).clone()).collect(),
        })
    }

    pub fn map(&self, f: impl FnMut(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            items: self.items.iter().map(f).collect(),
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Re-expresses every sequence over the least common multiple of their periods.
pub fn normalize_period(sequences: &[PeriodicSequence]) -> Result<Vec<PeriodicSequence>> {
    let period = sequences.iter().map(PeriodicSequence::period).fold(1, lcm);
    sequences.iter().map(|s| s.with_period(period)).collect()
}

/// Observation model of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub c: PeriodicSequence,
    pub r: PeriodicSequence,
}

/// Periodic plant `x_{k+1} = A_k x_k + w_k` observed by `N` sensors
/// `y_{i,k} = C_{i,k} x_k + v_{i,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    period: usize,
    a: PeriodicSequence,
    q: PeriodicSequence,
    sensors: Vec<SensorModel>,
}

impl PlantModel {
    /// Validates dimensions and positive definiteness, then normalizes every
    /// sequence to the common period.
    pub fn new(a: PeriodicSequence, q: PeriodicSequence, sensors: Vec<SensorModel>) -> Result<Self> {
        let (n, n2) = a.shape();
        if n != n2 || n == 0 {
            return Err(Error::Dimension(format!("A must be square and nonempty, got {n}x{n2}")));
        }
        if q.shape() != (n, n) {
            return Err(Error::Dimension(format!("Q must be {n}x{n}")));
        }
        if sensors.is_empty() {
            return Err(Error::InvalidInput("plant needs at least one sensor".into()));
        }
        for (i, s) in sensors.iter().enumerate() {
            let (ni, cols) = s.c.shape();
            if cols != n || ni == 0 {
                return Err(Error::Dimension(format!("C of sensor {} must be n_i x {n}", i + 1)));
            }
            if s.r.shape() != (ni, ni) {
                return Err(Error::Dimension(format!("R of sensor {} must be {ni}x{ni}", i + 1)));
            }
        }
        for (k, qk) in q.items().iter().enumerate() {
            linalg::check_positive_definite(qk, &format!("Q_{k}"))?;
        }
        for (i, s) in sensors.iter().enumerate() {
            for (k, rk) in s.r.items().iter().enumerate() {
                linalg::check_positive_definite(rk, &format!("R_{{{},{k}}}", i + 1))?;
            }
        }

        let mut all = vec![a, q];
        for s in &sensors {
            all.push(s.c.clone());
            all.push(s.r.clone());
        }
        let mut normalized = normalize_period(&all)?.into_iter();
        let a = normalized.next().unwrap();
        let q = normalized.next().unwrap();
        let sensors = (0..sensors.len())
            .map(|_| SensorModel {
                c: normalized.next().unwrap(),
                r: normalized.next().unwrap(),
            })
            .collect();
        Ok(Self {
            period: a.period(),
            a,
            q,
            sensors,
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn state_dim(&self) -> usize {
        self.a.shape().0
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Total observation dimension `m = sum n_i`.
    pub fn obs_dim(&self) -> usize {
        self.sensors.iter().map(|s| s.c.shape().0).sum()
    }

    pub fn a(&self) -> &PeriodicSequence {
        &self.a
    }

    pub fn q(&self) -> &PeriodicSequence {
        &self.q
    }

    pub fn sensors(&self) -> &[SensorModel] {
        &self.sensors
    }

    pub fn sensor(&self, i: usize) -> &SensorModel {
        &self.sensors[i]
    }

    /// Row offset of sensor `i` inside the stacked observation vector.
    pub fn obs_offset(&self, i: usize) -> usize {
        self.sensors[..i].iter().map(|s| s.c.shape().0).sum()
    }

    /// Network-wide `C_k` (row stack) and `R_k` (block diagonal).
    pub fn stacked_observation(&self, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let cs: Vec<_> = self.sensors.iter().map(|s| s.c.at(k).clone()).collect();
        let rs: Vec<_> = self.sensors.iter().map(|s| s.r.at(k).clone()).collect();
        (linalg::vstack(&cs, self.state_dim()), linalg::block_diagonal(&rs))
    }

    /// `(C_., R_.)` over one period as sequences.
    pub fn stacked_sequences(&self) -> (PeriodicSequence, PeriodicSequence) {
        let (cs, rs): (Vec<_>, Vec<_>) = (0..self.period).map(|k| self.stacked_observation(k)).unzip();
        (
            PeriodicSequence { items: cs },
            PeriodicSequence { items: rs },
        )
    }

    /// Whether sensor `i` observes anything at some point of the period.
    pub fn sensor_observes(&self, i: usize) -> bool {
        self.sensors[i].c.items().iter().any(|c| c.amax() > 0.0)
    }
}

/// A simulated ground-truth run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0 ..= x_K`.
    pub states: Vec<DVector<f64>>,
    /// `measurements[k][i] = y_{i,k}` for `k = 0 ..= K`.
    pub measurements: Vec<Vec<DVector<f64>>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// All sensors' measurements at `k`, stacked.
    pub fn stacked_measurement(&self, k: usize) -> DVector<f64> {
        linalg::vstack_vectors(&self.measurements[k])
    }
}

/// Precomputed Cholesky factors used to draw the process and measurement noise.
#[derive(Debug, Clone)]
pub struct NoiseFactors {
    process: Vec<DMatrix<f64>>,
    measurement: Vec<Vec<DMatrix<f64>>>,
}

impl NoiseFactors {
    pub fn new(model: &PlantModel) -> Result<Self> {
        let factor = |m: &DMatrix<f64>, what: &str| -> Result<DMatrix<f64>> {
            Ok(linalg::cholesky(m, what)?.l())
        };
        let process = model
            .q()
            .items()
            .iter()
            .map(|q| factor(q, "Q"))
            .collect::<Result<_>>()?;
        let measurement = model
            .sensors()
            .iter()
            .map(|s| s.r.items().iter().map(|r| factor(r, "R")).collect())
            .collect::<Result<_>>()?;
        Ok(Self {
            process,
            measurement,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>, scale: f64) -> DVector<f64> {
    let z = DVector::from_iterator(factor.ncols(), (0..factor.ncols()).map(|_| StandardNormal.sample(rng)));
    factor * z * scale
}

/// Simulates `K` steps of the plant. Noise is `N(0, s^2 Q_k)` and `N(0, s^2 R_{i,k})`
/// with `s = noise_scale`; equal arguments give bit-identical output.
pub fn simulate_trajectory(
    model: &PlantModel,
    horizon: usize,
    seed: u64,
    x0: &DVector<f64>,
    noise_scale: f64,
) -> Result<Trajectory> {
    let factors = NoiseFactors::new(model)?;
    let rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(model, &factors, horizon, rng, seed, x0, noise_scale)
}

pub(crate) fn simulate_with(
    model: &PlantModel,
    factors: &NoiseFactors,
    horizon: usize,
    mut rng: ChaCha8Rng,
    seed: u64,
    x0: &DVector<f64>,
    noise_scale: f64,
) -> Result<Trajectory> {
    if horizon < 1 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(Error::InvalidInput("noise_scale must be a nonnegative number".into()));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension(format!("x0 must have length {}", model.state_dim())));
    }
    let period = model.period();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut measurements = Vec::with_capacity(horizon + 1);
    let mut x = x0.clone();
    for k in 0..=horizon {
        let ys = model
            .sensors()
            .iter()
            .enumerate()
            .map(|(i, s)| s.c.at(k) * &x + gaussian(&mut rng, &factors.measurement[i][k % period], noise_scale))
            .collect();
        measurements.push(ys);
        let next = (k < horizon).then(|| model.a().at(k) * &x + gaussian(&mut rng, &factors.process[k % period], noise_scale));
        states.push(std::mem::replace(&mut x, next.unwrap_or_default()));
        if states.last().is_some_and(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("state at k = {k}; the plant is unstable over this horizon")));
        }
    }
    Ok(Trajectory {
        states,
        measurements,
        seed,
    })
}

/// Process noise block for a sampling interval `t`: `[[t^3/3, t^2/2], [t^2/2, t]]`.
pub fn white_acceleration_block(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[t.powi(3) / 3.0, t.powi(2) / 2.0, t.powi(2) / 2.0, t])
}

/// The 4-state, 20-sensor periodic benchmark: two copies of an oscillating
/// 2x2 block with frequencies pi/3 and pi/5, three sensors measuring state 1
/// at odd steps, three measuring state 3 at odd steps and fourteen naive
/// sensors. The common period is 30.
pub fn paper_plant() -> PlantModel {
    let (w1, w2) = (PI / 3.0, PI / 5.0);
    let a_items = (0..30)
        .map(|k| {
            let k = k as f64;
            let block = DMatrix::from_row_slice(
                2,
                2,
                &[
                    0.8 + 0.4 * (w1 * k).sin(),
                    0.5 * (w2 * k).sin(),
                    0.7 * (w1 * k).cos(),
                    0.9 + 0.3 * (w2 * k).cos(),
                ],
            );
            linalg::block_diagonal(&[block.clone(), block])
        })
        .collect();
    let g = white_acceleration_block(1.0);
    let mut q = DMatrix::zeros(4, 4);
    q.view_mut((0, 0), (2, 2)).copy_from(&g);
    q.view_mut((2, 2), (2, 2)).copy_from(&g);
    q.view_mut((0, 2), (2, 2)).copy_from(&(&g * 0.5));
    q.view_mut((2, 0), (2, 2)).copy_from(&(&g * 0.5));

    let row = |j: Option<usize>| {
        let mut c = DMatrix::zeros(1, 4);
        if let Some(j) = j {
            c[(0, j)] = 1.0;
        }
        c
    };
    // Index 0 is even k (nothing measured), index 1 odd k.
    let scheduled = |j: Option<usize>| SensorModel {
        c: PeriodicSequence::new(vec![row(None), row(j)]).unwrap(),
        r: PeriodicSequence::constant(DMatrix::identity(1, 1)),
    };
    let mut sensors = Vec::with_capacity(20);
    sensors.extend((0..3).map(|_| scheduled(Some(0))));
    sensors.extend((0..3).map(|_| scheduled(Some(2))));
    sensors.extend((0..14).map(|_| scheduled(None)));

    PlantModel::new(
        PeriodicSequence::new(a_items).unwrap(),
        PeriodicSequence::constant(q),
        sensors,
    )
    .expect("benchmark plant is valid")
}

type Rows = Vec<Vec<f64>>;

/// JSON form of a plant: either explicit sequences or `{"builtin": "paper_sec5"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantConfig {
    Builtin {
        builtin: String,
    },
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<usize>,
        #[serde(rename = "A")]
        a: Vec<Rows>,
        #[serde(rename = "Q")]
        q: Vec<Rows>,
        sensors: Vec<SensorConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    #[serde(rename = "C")]
    pub c: Vec<Rows>,
    #[serde(rename = "R")]
    pub r: Vec<Rows>,
}

pub const BUILTIN_PAPER: &str = "paper_sec5";

fn sequence_from_rows(items: &[Rows], what: &str) -> Result<PeriodicSequence> {
    let mats = items
        .iter()
        .map(|m| linalg::from_rows(m))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::InvalidInput(format!("{what}: {e}")))?;
    PeriodicSequence::new(mats).map_err(|e| Error::InvalidInput(format!("{what}: {e}")))
}

fn sequence_to_rows(s: &PeriodicSequence) -> Vec<Rows> {
    s.items().iter().map(linalg::to_rows).collect()
}

impl PlantConfig {
    pub fn build(&self) -> Result<PlantModel> {
        match self {
            PlantConfig::Builtin { builtin } if builtin == BUILTIN_PAPER => Ok(paper_plant()),
            PlantConfig::Builtin { builtin } => {
                Err(Error::InvalidInput(format!("unknown builtin plant {builtin:?}")))
            }
            PlantConfig::Explicit { period, a, q, sensors } => {
                let a = sequence_from_rows(a, "A")?;
                let q = sequence_from_rows(q, "Q")?;
                let sensors = sensors
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        Ok(SensorModel {
                            c: sequence_from_rows(&s.c, &format!("sensors[{i}].C"))?,
                            r: sequence_from_rows(&s.r, &format!("sensors[{i}].R"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let model = PlantModel::new(a, q, sensors)?;
                match period {
                    Some(p) if *p == 0 || p % model.period() != 0 => Err(Error::InvalidInput(format!(
                        "declared period {p} is not a multiple of the sequences' period {}",
                        model.period()
                    ))),
                    Some(p) if *p != model.period() => model.with_period(*p),
                    _ => Ok(model),
                }
            }
        }
    }

    pub fn from_model(model: &PlantModel) -> Self {
        PlantConfig::Explicit {
            period: Some(model.period()),
            a: sequence_to_rows(model.a()),
            q: sequence_to_rows(model.q()),
            sensors: model
                .sensors()
                .iter()
                .map(|s| SensorConfig {
                    c: sequence_to_rows(&s.c),
                    r: sequence_to_rows(&s.r),
                })
                .collect(),
        }
    }
}

impl PlantModel {
    /// Same plant unrolled to a longer period.
    pub fn with_period(&self, period: usize) -> Result<Self> {
        Ok(Self {
            period,
            a: self.a.with_period(period)?,
            q: self.q.with_period(period)?,
            sensors: self
                .sensors
                .iter()
                .map(|s| {
                    Ok(SensorModel {
                        c: s.c.with_period(period)?,
                        r: s.r.with_period(period)?,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PlantConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            context: "plant config".into(),
            source,
        })?;
        config.build()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlantConfig::from_model(self)).expect("plant serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(v: f64) -> DMatrix<f64> {
        dmatrix![v]
    }

    #[test]
    fn periodic_access_wraps() {
        let s = PeriodicSequence::new(vec![scalar(1.0), scalar(2.0), scalar(3.0)]).unwrap();
        for k in 0..20 {
            assert_eq!(s.at(k), s.at(k + 3));
            assert_eq!(s.at(k)[(0, 0)], (k % 3 + 1) as f64);
        }
    }

    #[test]
    fn mixed_shapes_rejected() {
        let err = PeriodicSequence::new(vec![scalar(1.0), DMatrix::zeros(2, 2)]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn normalize_to_lcm() {
        let seq = |p: usize| PeriodicSequence::new((0..p).map(|k| scalar(k as f64)).collect()).unwrap();
        let out = normalize_period(&[seq(6), seq(10), seq(2)]).unwrap();
        assert!(out.iter().all(|s| s.period() == 30));

        let single = normalize_period(&[seq(1)]).unwrap();
        assert_eq!(single[0], seq(1));
    }

    #[test]
    fn normalize_constants_matches_modular_indexing() {
        let two = PeriodicSequence::new(vec![scalar(5.0), scalar(5.0)]).unwrap();
        let three = PeriodicSequence::new(vec![scalar(7.0); 3]).unwrap();
        let out = normalize_period(&[two.clone(), three.clone()]).unwrap();
        assert_eq!(out[0].period(), 6);
        for k in 0..6 {
            assert_eq!(out[0].at(k), two.at(k));
            assert_eq!(out[1].at(k), three.at(k));
            assert_eq!(out[0].at(k)[(0, 0)], 5.0);
        }
    }

    #[test]
    fn plant_rejects_indefinite_noise() {
        let err = PlantModel::new(
            PeriodicSequence::constant(scalar(1.0)),
            PeriodicSequence::constant(scalar(0.0)),
            vec![SensorModel {
                c: PeriodicSequence::constant(scalar(1.0)),
                r: PeriodicSequence::constant(scalar(1.0)),
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn stacked_single_sensor() {
        let model = PlantModel::new(
            PeriodicSequence::constant(scalar(1.0)),
            PeriodicSequence::constant(scalar(1.0)),
            vec![SensorModel {
                c: PeriodicSequence::constant(scalar(2.0)),
                r: PeriodicSequence::constant(scalar(3.0)),
            }],
        )
        .unwrap();
        let (c, r) = model.stacked_observation(4);
        assert_eq!(c, scalar(2.0));
        assert_eq!(r, scalar(3.0));
    }

    #[test]
    fn stacked_block_diagonal_by_hand() {
        let model = PlantModel::new(
            PeriodicSequence::constant(DMatrix::identity(2, 2)),
            PeriodicSequence::constant(DMatrix::identity(2, 2)),
            vec![
                SensorModel {
                    c: PeriodicSequence::constant(dmatrix![1.0, 2.0]),
                    r: PeriodicSequence::constant(dmatrix![4.0]),
                },
                SensorModel {
                    c: PeriodicSequence::constant(dmatrix![3.0, 4.0; 5.0, 6.0]),
                    r: PeriodicSequence::constant(dmatrix![2.0, 0.5; 0.5, 3.0]),
                },
            ],
        )
        .unwrap();
        assert_eq!(model.obs_dim(), 3);
        let (c, r) = model.stacked_observation(0);
        assert_eq!(c, dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 6.0]);
        assert_eq!(
            r,
            dmatrix![4.0, 0.0, 0.0;
                     0.0, 2.0, 0.5;
                     0.0, 0.5, 3.0]
        );
    }

    #[test]
    fn paper_plant_layout() {
        let model = paper_plant();
        assert_eq!(model.period(), 30);
        assert_eq!(model.sensor_count(), 20);
        assert_eq!(model.obs_dim(), 20);
        let naive = (0..20).filter(|&i| !model.sensor_observes(i)).count();
        assert_eq!(naive, 14);
        for k in (1..30).step_by(2) {
            let (c, _) = model.stacked_observation(k);
            for i in 0..3 {
                assert_eq!(c.row(i).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
            }
            for i in 3..6 {
                assert_eq!(c.row(i).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 0.0]);
            }
        }
        let (c0, _) = model.stacked_observation(0);
        assert_eq!(c0.amax(), 0.0);
        let g = white_acceleration_block(1.0);
        assert_eq!(g, dmatrix![1.0 / 3.0, 0.5; 0.5, 1.0]);
        assert_eq!(model.q().at(0).view((0, 2), (2, 2)).clone_owned(), g * 0.5);
    }

    #[test]
    fn noiseless_identity_holds_state() {
        let model = PlantModel::new(
            PeriodicSequence::constant(DMatrix::identity(2, 2)),
            PeriodicSequence::constant(DMatrix::identity(2, 2)),
            vec![SensorModel {
                c: PeriodicSequence::constant(dmatrix![1.0, 0.0]),
                r: PeriodicSequence::constant(scalar(1.0)),
            }],
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let traj = simulate_trajectory(&model, 10, 3, &x0, 0.0).unwrap();
        assert!(traj.states.iter().all(|x| *x == x0));
        assert!(traj.measurements.iter().all(|y| y[0][0] == 1.0));
    }

    #[test]
    fn noiseless_geometric_decay() {
        let model = PlantModel::new(
            PeriodicSequence::constant(scalar(0.5)),
            PeriodicSequence::constant(scalar(1.0)),
            vec![SensorModel {
                c: PeriodicSequence::constant(scalar(1.0)),
                r: PeriodicSequence::constant(scalar(1.0)),
            }],
        )
        .unwrap();
        let traj = simulate_trajectory(&model, 3, 0, &DVector::from_vec(vec![1.0]), 0.0).unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn unstable_plant_reports_nonfinite() {
        let model = PlantModel::new(
            PeriodicSequence::constant(scalar(1e200)),
            PeriodicSequence::constant(scalar(1.0)),
            vec![SensorModel {
                c: PeriodicSequence::constant(scalar(1.0)),
                r: PeriodicSequence::constant(scalar(1.0)),
            }],
        )
        .unwrap();
        let err = simulate_trajectory(&model, 5, 0, &DVector::from_vec(vec![1.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn config_round_trip_and_builtin() {
        let model = paper_plant();
        let back = PlantModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let builtin = PlantModel::from_json(r#"{"builtin": "paper_sec5"}"#).unwrap();
        assert_eq!(builtin, model);
        assert!(PlantModel::from_json(r#"{"builtin": "nope"}"#).is_err());
    }

    #[test]
    fn config_declared_period_unrolls() {
        let json = r#"{"period": 4, "A": [[[2.0]]], "Q": [[[1.0]]],
                       "sensors": [{"C": [[[1.0]], [[0.0]]], "R": [[[1.0]]]}]}"#;
        let model = PlantModel::from_json(json).unwrap();
        assert_eq!(model.period(), 4);
        let bad = r#"{"period": 3, "A": [[[2.0]]], "Q": [[[1.0]]],
                      "sensors": [{"C": [[[1.0]], [[0.0]]], "R": [[[1.0]]]}]}"#;
        assert!(PlantModel::from_json(bad).is_err());
    }
}
