//! Centralized, consensus-on-measurement and consensus-on-information filters.
//!
//! A step at time `k` takes posteriors at `k - 1`, predicts with `A_{k-1}, Q_{k-1}`
//! and corrects with the measurements taken at `k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{weight_power, ConsensusWeights, WeightPower, STRUCTURAL_ZERO};
use crate::periodic::PlantModel;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub estimate: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl NodeState {
    pub fn new(estimate: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.shape() != (estimate.len(), estimate.len()) {
            return Err(Error::Dimension("covariance does not match the estimate".into()));
        }
        linalg::check_positive_definite(&covariance, "node covariance")?;
        Ok(Self { estimate, covariance })
    }

    /// Zero estimate with identity covariance.
    pub fn initial(n: usize) -> Self {
        Self {
            estimate: DVector::zeros(n),
            covariance: DMatrix::identity(n, n),
        }
    }
}

/// Information pair `(S, I)` after `rounds` consensus rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionProducts {
    pub s: DMatrix<f64>,
    pub i: DVector<f64>,
    pub rounds: usize,
}

fn check_time(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("filter steps start at k = 1".into()));
    }
    Ok(())
}

/// Time update with `A_{k-1}` and `Q_{k-1}`.
pub fn predict(model: &PlantModel, state: &NodeState, k: usize) -> NodeState {
    let a = model.a().at(k - 1);
    NodeState {
        estimate: a * &state.estimate,
        covariance: linalg::symmetrized(a * &state.covariance * a.transpose() + model.q().at(k - 1)),
    }
}

/// `P = (P_pred^{-1} + S)^{-1}`, `x = P (P_pred^{-1} x_pred + I)`.
pub fn information_correct(predicted: &NodeState, s: &DMatrix<f64>, i: &DVector<f64>) -> Result<NodeState> {
    let pred_inv = linalg::spd_inverse(&predicted.covariance, "predicted covariance")?;
    let covariance = linalg::spd_inverse(&(&pred_inv + s), "posterior information")?;
    let estimate = &covariance * (pred_inv * &predicted.estimate + i);
    Ok(NodeState { estimate, covariance })
}

/// Unscaled local information `(C' R^{-1} C, C' R^{-1} y)` of sensor `i` at time `k`.
pub fn local_information(model: &PlantModel, i: usize, y: &DVector<f64>, k: usize) -> Result<FusionProducts> {
    let sensor = model.sensor(i);
    let (c, r) = (sensor.c.at(k), sensor.r.at(k));
    if y.len() != c.nrows() {
        return Err(Error::Dimension(format!("sensor {} expects {} measurements", i + 1, c.nrows())));
    }
    let r_inv = linalg::spd_inverse(r, "measurement covariance")?;
    let ct_rinv = c.transpose() * r_inv;
    Ok(FusionProducts {
        s: linalg::symmetrized(&ct_rinv * c),
        i: ct_rinv * y,
        rounds: 0,
    })
}

/// Centralized Kalman step over the stacked measurement `y_all`.
pub fn ckf_step(model: &PlantModel, state: &NodeState, y_all: &DVector<f64>, k: usize) -> Result<NodeState> {
    check_time(k)?;
    if y_all.len() != model.obs_dim() {
        return Err(Error::Dimension(format!("stacked measurement must have length {}", model.obs_dim())));
    }
    let n = model.state_dim();
    let (mut s, mut info) = (DMatrix::zeros(n, n), DVector::zeros(n));
    for i in 0..model.sensor_count() {
        let rows = model.sensor(i).c.at(k).nrows();
        let y_i = y_all.rows(model.obs_offset(i), rows).into_owned();
        let local = local_information(model, i, &y_i, k)?;
        s += local.s;
        info += local.i;
    }
    information_correct(&predict(model, state, k), &s, &info)
}

/// One synchronous round: node `i` reads only its in-neighbors' previous values.
fn mix_round(weights: &ConsensusWeights, products: &[FusionProducts]) -> Vec<FusionProducts> {
    (0..products.len())
        .map(|i| {
            let mut s = DMatrix::zeros(products[i].s.nrows(), products[i].s.ncols());
            let mut info = DVector::zeros(products[i].i.len());
            for j in weights.in_neighbors(i) {
                let w = weights.get(i, j);
                s += &products[j].s * w;
                info += &products[j].i * w;
            }
            FusionProducts {
                s,
                i: info,
                rounds: products[i].rounds + 1,
            }
        })
        .collect()
}

fn check_network(model: &PlantModel, weights: &ConsensusWeights, y: &[DVector<f64>]) -> Result<()> {
    if weights.node_count() != model.sensor_count() {
        return Err(Error::Dimension("weights and plant disagree on the number of sensors".into()));
    }
    if y.len() != model.sensor_count() {
        return Err(Error::Dimension("one measurement vector per sensor is required".into()));
    }
    Ok(())
}

/// `S^{(0)} = N C' R^{-1} C`, `I^{(0)} = N C' R^{-1} y`, then `steps` rounds of mixing.
pub fn fuse_measurements(
    model: &PlantModel,
    weights: &ConsensusWeights,
    steps: usize,
    y: &[DVector<f64>],
    k: usize,
) -> Result<Vec<FusionProducts>> {
    check_network(model, weights, y)?;
    let scale = model.sensor_count() as f64;
    let mut products = (0..model.sensor_count())
        .map(|i| {
            let mut local = local_information(model, i, &y[i], k)?;
            local.s *= scale;
            local.i *= scale;
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..steps {
        products = mix_round(weights, &products);
    }
    Ok(products)
}

/// One step of the consensus-on-measurement filter at every node.
pub fn cmdf_step(
    model: &PlantModel,
    weights: &ConsensusWeights,
    steps: usize,
    states: &[NodeState],
    y: &[DVector<f64>],
    k: usize,
) -> Result<Vec<NodeState>> {
    check_time(k)?;
    if states.len() != model.sensor_count() {
        return Err(Error::Dimension("one state per sensor is required".into()));
    }
    let fused = fuse_measurements(model, weights, steps, y, k)?;
    states
        .iter()
        .zip(&fused)
        .map(|(state, f)| information_correct(&predict(model, state, k), &f.s, &f.i))
        .collect()
}

/// Consensus-on-information baseline: local correction, then `steps` rounds
/// averaging the posterior pairs `(P^{-1}, P^{-1} x)`.
pub fn cidf_step(
    model: &PlantModel,
    weights: &ConsensusWeights,
    steps: usize,
    states: &[NodeState],
    y: &[DVector<f64>],
    k: usize,
) -> Result<Vec<NodeState>> {
    check_time(k)?;
    check_network(model, weights, y)?;
    if states.len() != model.sensor_count() {
        return Err(Error::Dimension("one state per sensor is required".into()));
    }
    let mut pairs = states
        .iter()
        .enumerate()
        .map(|(i, state)| {
            let predicted = predict(model, state, k);
            let local = local_information(model, i, &y[i], k)?;
            let pred_inv = linalg::spd_inverse(&predicted.covariance, "predicted covariance")?;
            Ok(FusionProducts {
                i: &pred_inv * &predicted.estimate + local.i,
                s: pred_inv + local.s,
                rounds: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..steps {
        pairs = mix_round(weights, &pairs);
    }
    pairs
        .into_iter()
        .map(|pair| {
            let covariance = linalg::spd_inverse(&pair.s, "mixed information matrix")?;
            Ok(NodeState {
                estimate: &covariance * pair.i,
                covariance,
            })
        })
        .collect()
}

/// What node `i` effectively observes after `L` rounds: the stacked sensors
/// reached by consensus, with noise rescaled by the consensus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedObservation {
    pub node: usize,
    pub steps: usize,
    /// `support_j C_j`, stacked over all sensors.
    pub c_tilde: DMatrix<f64>,
    /// `R_j / (N l_ij^{(L)})` on the support, zero blocks elsewhere.
    pub r_tilde: DMatrix<f64>,
    /// `support_j R_j`.
    pub r_bar: DMatrix<f64>,
    pub support: Vec<bool>,
    /// `N l_ij^{(L)}` per sensor.
    pub scale: Vec<f64>,
    offsets: Vec<(usize, usize)>,
}

impl ModifiedObservation {
    pub fn is_full_support(&self) -> bool {
        self.support.iter().all(|&s| s)
    }

    fn restrict(&self, m: &DMatrix<f64>, cols: bool) -> DMatrix<f64> {
        let rows: Vec<usize> = self
            .offsets
            .iter()
            .zip(&self.support)
            .filter(|(_, &s)| s)
            .flat_map(|(&(off, len), _)| off..off + len)
            .collect();
        let picked = m.select_rows(rows.iter());
        if cols {
            picked.select_columns(rows.iter())
        } else {
            picked
        }
    }

    /// `(C~, R~, R-)` restricted to the supported sensors. The unrestricted
    /// `R~` has zero blocks and cannot be inverted.
    pub fn restricted(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            self.restrict(&self.c_tilde, false),
            self.restrict(&self.r_tilde, true),
            self.restrict(&self.r_bar, true),
        )
    }

    /// `C~' R~^{-1} C~` over the support.
    pub fn information_matrix(&self) -> Result<DMatrix<f64>> {
        let (c, r, _) = self.restricted();
        if c.nrows() == 0 {
            return Ok(DMatrix::zeros(c.ncols(), c.ncols()));
        }
        let chol = linalg::cholesky(&r, "modified measurement covariance")?;
        Ok(linalg::symmetrized(c.transpose() * chol.solve(&c)))
    }
}

pub fn modified_observation(
    model: &PlantModel,
    weights: &ConsensusWeights,
    steps: usize,
    i: usize,
    k: usize,
) -> ModifiedObservation {
    modified_observation_from_power(model, &weight_power(weights, steps), i, k)
}

pub fn modified_observation_from_power(model: &PlantModel, power: &WeightPower, i: usize, k: usize) -> ModifiedObservation {
    let n_sensors = model.sensor_count();
    let (m, n) = (model.obs_dim(), model.state_dim());
    let mut c_tilde = DMatrix::zeros(m, n);
    let mut r_tilde = DMatrix::zeros(m, m);
    let mut r_bar = DMatrix::zeros(m, m);
    let mut offsets = Vec::with_capacity(n_sensors);
    let mut support = Vec::with_capacity(n_sensors);
    let mut scale = Vec::with_capacity(n_sensors);
    for j in 0..n_sensors {
        let sensor = model.sensor(j);
        let (c, r) = (sensor.c.at(k), sensor.r.at(k));
        let off = model.obs_offset(j);
        let w = power.get(i, j);
        let on = w > STRUCTURAL_ZERO;
        if on {
            let s = n_sensors as f64 * w;
            c_tilde.view_mut((off, 0), c.shape()).copy_from(c);
            r_tilde.view_mut((off, off), r.shape()).copy_from(&(r / s));
            r_bar.view_mut((off, off), r.shape()).copy_from(r);
        }
        offsets.push((off, c.nrows()));
        support.push(on);
        scale.push(n_sensors as f64 * w);
    }
    ModifiedObservation {
        node: i,
        steps: power.steps,
        c_tilde,
        r_tilde,
        r_bar,
        support,
        scale,
        offsets,
    }
}

/// Covariance iterates and the affine maps they induce on the estimate:
/// `x_post = M_k x_pred + G_k I_k` with `M_k = P_post P_pred^{-1}` and `G_k = P_post`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    /// Index `k` holds time `k`; index 0 holds the initial covariance.
    pub predicted: Vec<DMatrix<f64>>,
    pub posterior: Vec<DMatrix<f64>>,
    pub m: Vec<DMatrix<f64>>,
    pub g: Vec<DMatrix<f64>>,
}

/// Runs `P_pred = A P A' + Q`, `P_post = (P_pred^{-1} + S_k)^{-1}` for `k = 1..=horizon`.
pub fn information_schedule(
    model: &PlantModel,
    p0: &DMatrix<f64>,
    horizon: usize,
    mut information: impl FnMut(usize) -> Result<DMatrix<f64>>,
) -> Result<GainSchedule> {
    let n = model.state_dim();
    let mut schedule = GainSchedule {
        predicted: vec![p0.clone()],
        posterior: vec![p0.clone()],
        m: vec![DMatrix::identity(n, n)],
        g: vec![DMatrix::zeros(n, n)],
    };
    for k in 1..=horizon {
        let a = model.a().at(k - 1);
        let pred = linalg::symmetrized(a * &schedule.posterior[k - 1] * a.transpose() + model.q().at(k - 1));
        let pred_inv = linalg::spd_inverse(&pred, "predicted covariance")?;
        let post = linalg::spd_inverse(&(&pred_inv + information(k)?), "posterior information")?;
        schedule.m.push(&post * pred_inv);
        schedule.g.push(post.clone());
        schedule.predicted.push(pred);
        schedule.posterior.push(post);
    }
    Ok(schedule)
}

/// `sum_j coeff_j C_j' R_j^{-1} C_j` at time `k`.
pub fn weighted_information(model: &PlantModel, coeffs: &[f64], k: usize) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    let mut s = DMatrix::zeros(n, n);
    for (j, &w) in coeffs.iter().enumerate() {
        if w != 0.0 {
            let sensor = model.sensor(j);
            let c = sensor.c.at(k);
            let r_inv = linalg::spd_inverse(sensor.r.at(k), "measurement covariance")?;
            s += c.transpose() * r_inv * c * w;
        }
    }
    Ok(linalg::symmetrized(s))
}

/// Fusion coefficients `N l_ij^{(L)}` of node `i`.
pub fn cmdf_coefficients(power: &WeightPower, i: usize) -> Vec<f64> {
    let n = power.matrix.nrows() as f64;
    power.matrix.row(i).iter().map(|&w| n * w).collect()
}

pub fn cmdf_schedule(model: &PlantModel, power: &WeightPower, i: usize, p0: &DMatrix<f64>, horizon: usize) -> Result<GainSchedule> {
    let coeffs = cmdf_coefficients(power, i);
    information_schedule(model, p0, horizon, |k| weighted_information(model, &coeffs, k))
}

pub fn ckf_schedule(model: &PlantModel, p0: &DMatrix<f64>, horizon: usize) -> Result<GainSchedule> {
    let coeffs = vec![1.0; model.sensor_count()];
    information_schedule(model, p0, horizon, |k| weighted_information(model, &coeffs, k))
}

/// True error covariance of a filter driven by `schedule` whose information
/// vector is `sum_j coeffs_j C_j' R_j^{-1} y_j`. Returns the predicted error
/// covariances for `k = 0..=horizon` (index 0 is `initial`).
pub fn error_covariance_recursion(
    model: &PlantModel,
    schedule: &GainSchedule,
    coeffs: &[f64],
    initial: &DMatrix<f64>,
    horizon: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let squared: Vec<f64> = coeffs.iter().map(|w| w * w).collect();
    let mut out = vec![initial.clone()];
    let mut post = initial.clone();
    for k in 1..=horizon {
        let a = model.a().at(k - 1);
        let pred = linalg::symmetrized(a * &post * a.transpose() + model.q().at(k - 1));
        let noise = weighted_information(model, &squared, k)?;
        let (m, g) = (&schedule.m[k], &schedule.g[k]);
        post = linalg::symmetrized(m * &pred * m.transpose() + g * noise * g.transpose());
        out.push(pred);
    }
    Ok(out)
}

/// Deterministic part of the consensus-on-information filter for all nodes:
/// predicted information matrices and mixed posterior covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct CidfSchedule {
    /// `[k][i]` predicted information `P_pred^{-1}`.
    pub predicted_information: Vec<Vec<DMatrix<f64>>>,
    /// `[k][i]` posterior covariance after mixing.
    pub posterior: Vec<Vec<DMatrix<f64>>>,
}

pub fn cidf_schedule(model: &PlantModel, power: &WeightPower, p0: &DMatrix<f64>, horizon: usize) -> Result<CidfSchedule> {
    let n_sensors = model.sensor_count();
    let n = model.state_dim();
    let mut schedule = CidfSchedule {
        predicted_information: vec![vec![DMatrix::zeros(n, n); n_sensors]],
        posterior: vec![vec![p0.clone(); n_sensors]],
    };
    for k in 1..=horizon {
        let a = model.a().at(k - 1);
        let mut pred_info = Vec::with_capacity(n_sensors);
        let mut local = Vec::with_capacity(n_sensors);
        for i in 0..n_sensors {
            let pred = linalg::symmetrized(a * &schedule.posterior[k - 1][i] * a.transpose() + model.q().at(k - 1));
            let info = linalg::spd_inverse(&pred, "predicted covariance")?;
            let mut unit = vec![0.0; n_sensors];
            unit[i] = 1.0;
            local.push(&info + weighted_information(model, &unit, k)?);
            pred_info.push(info);
        }
        let posterior = (0..n_sensors)
            .map(|i| {
                let mut mixed = DMatrix::zeros(n, n);
                for j in 0..n_sensors {
                    let w = power.get(i, j);
                    if w != 0.0 {
                        mixed += &local[j] * w;
                    }
                }
                linalg::spd_inverse(&mixed, "mixed information matrix")
            })
            .collect::<Result<Vec<_>>>()?;
        schedule.predicted_information.push(pred_info);
        schedule.posterior.push(posterior);
    }
    Ok(schedule)
}
