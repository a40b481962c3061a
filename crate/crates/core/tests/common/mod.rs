#![allow(dead_code)]

use filterlab::periodic::{PeriodicSequence, PlantModel, SensorModel};
use filterlab::spps;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `B B' + floor I` for a random square `B`.
pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = gaussian(rng, n, n);
    &b * b.transpose() + DMatrix::identity(n, n) * floor
}

/// A random periodic system with `n <= max_n`, `T <= max_t`, one or two
/// outputs, that passes the uniform observability test.
pub struct RandomSystem {
    pub a: PeriodicSequence,
    pub c: PeriodicSequence,
    pub q: PeriodicSequence,
    pub r: PeriodicSequence,
}

pub fn random_observable_system(seed: u64, max_n: usize, max_t: usize) -> RandomSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(1..=max_n);
        let t = rng.random_range(1..=max_t);
        let p = rng.random_range(1..=2);
        let seq = |rng: &mut ChaCha8Rng, f: &dyn Fn(&mut ChaCha8Rng) -> DMatrix<f64>| {
            PeriodicSequence::new((0..t).map(|_| f(rng)).collect()).unwrap()
        };
        let a = seq(&mut rng, &|r| gaussian(r, n, n) * (1.2 / (n as f64).sqrt()));
        let c = seq(&mut rng, &|r| gaussian(r, p, n));
        let q = seq(&mut rng, &|r| random_spd(r, n, 0.1));
        let r = seq(&mut rng, &|r| random_spd(r, p, 0.1));
        if spps::uniform_observability(&a, &c).unwrap() {
            return RandomSystem { a, c, q, r };
        }
    }
}

/// Two sensors on a 2-state, period-2 plant; the second sensor alone cannot see the first state.
pub fn two_sensor_plant() -> PlantModel {
    use nalgebra::dmatrix;
    PlantModel::new(
        PeriodicSequence::new(vec![dmatrix![1.0, 0.2; 0.0, 1.05], dmatrix![0.95, 0.0; 0.1, 1.0]]).unwrap(),
        PeriodicSequence::constant(DMatrix::identity(2, 2) * 0.3),
        vec![
            SensorModel {
                c: PeriodicSequence::constant(dmatrix![1.0, 0.0]),
                r: PeriodicSequence::constant(dmatrix![1.0]),
            },
            SensorModel {
                c: PeriodicSequence::new(vec![dmatrix![0.0, 1.0], dmatrix![0.0, 0.5]]).unwrap(),
                r: PeriodicSequence::constant(dmatrix![0.5]),
            },
        ],
    )
    .unwrap()
}
