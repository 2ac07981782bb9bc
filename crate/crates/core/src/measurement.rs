//! Observations of the damaged robot.
//!
//! The on-board displacement estimate is the simulated ground truth corrupted
//! by a multiplicative term, an additive term and rare gross errors. The
//! exact value is what an external motion-capture system would report and
//! is kept out of reach of the algorithms: [`SimulatedRobot`] records it in a
//! private log that only the harness can take after the run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::algorithms::bongard::BongardAction;
use crate::error::{Error, Result};
use crate::gait::Controller;
use crate::sim::{forward_displacement, orientation_outcome, simulate, Morphology, SimConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Standard deviation of the relative error.
    pub multiplicative_std: f64,
    /// Standard deviation of the absolute error, meters.
    pub additive_std: f64,
    pub outlier_probability: f64,
    /// Gross errors are uniform in `[-outlier_scale, outlier_scale]`, meters.
    pub outlier_scale: f64,
    /// Standard deviation of each accelerometer angle, radians.
    pub accel_std: f64,
    /// Mixed with the run seed to derive the measurement stream.
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            multiplicative_std: 0.05,
            additive_std: 0.01,
            outlier_probability: 0.02,
            outlier_scale: 0.3,
            accel_std: 0.01,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            multiplicative_std: 0.0,
            additive_std: 0.0,
            outlier_probability: 0.0,
            outlier_scale: 0.0,
            accel_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stds = [self.multiplicative_std, self.additive_std, self.outlier_scale, self.accel_std];
        if stds.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("noise deviations and outlier scale must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_probability) {
            return Err(Error::InvalidConfig(format!(
                "outlier probability {} is outside [0, 1]",
                self.outlier_probability
            )));
        }
        Ok(())
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated deviation")
}

/// Noisy on-board estimate of the forward displacement of a trial.
pub fn measure_displacement<R: Rng + ?Sized>(tr: &Trajectory<f64>, nm: &NoiseModel, rng: &mut R) -> f64 {
    let truth = forward_displacement(tr);
    // Every draw happens whatever the parameters so that streams stay
    // aligned across noise settings.
    let eps_m = normal(nm.multiplicative_std).sample(rng);
    let eps_a = normal(nm.additive_std).sample(rng);
    let gross: f64 = rng.random();
    let offset: f64 = rng.random_range(-1.0..=1.0);
    let mut value = truth * (1.0 + eps_m) + eps_a;
    if gross < nm.outlier_probability {
        value += offset * nm.outlier_scale;
    }
    value
}

/// Exact displacement, as an external tracker would report it.
pub fn ground_truth(tr: &Trajectory<f64>) -> f64 {
    forward_displacement(tr)
}

/// What the robot reports after running a controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub displacement: f64,
    /// The body tipped over; the robot can sense this from its inclinometer.
    pub fallen: bool,
}

/// The physical robot as seen by an adaptation algorithm. Every call is one
/// real test and is refused once the budget is spent.
pub trait RealWorld {
    fn run_controller(&mut self, c: &Controller) -> Result<Observation>;
    /// Executes a single-leg posture and returns the measured (roll, pitch).
    fn run_action(&mut self, a: &BongardAction) -> Result<(f64, f64)>;
    fn tests_used(&self) -> usize;
    fn budget(&self) -> usize;

    fn remaining(&self) -> usize {
        self.budget().saturating_sub(self.tests_used())
    }
}

/// Exact values recorded for one real test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroundTruth {
    Displacement { value: f64 },
    Orientation { roll: f64, pitch: f64 },
}

/// The damaged simulator standing in for hardware.
pub struct SimulatedRobot {
    morphology: Morphology<f64>,
    config: SimConfig<f64>,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    budget: usize,
    used: usize,
    truth: fn(&Trajectory<f64>) -> f64,
    log: Vec<GroundTruth>,
}

impl SimulatedRobot {
    pub fn new(morphology: Morphology<f64>, config: SimConfig<f64>, noise: NoiseModel, run_seed: u64, budget: usize) -> Self {
        let stream = noise.seed ^ run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5EED_0F_0B5E_57ED;
        Self {
            morphology,
            config,
            noise,
            rng: ChaCha8Rng::seed_from_u64(stream),
            budget,
            used: 0,
            truth: ground_truth,
            log: Vec::new(),
        }
    }

    /// Replaces the ground-truth oracle. Used by tests to check that no
    /// algorithm output depends on it.
    pub fn with_ground_truth(mut self, truth: fn(&Trajectory<f64>) -> f64) -> Self {
        self.truth = truth;
        self
    }

    pub fn morphology(&self) -> &Morphology<f64> {
        &self.morphology
    }

    /// Consumes the robot and hands over the exact value of every test, in
    /// the order the tests were run.
    pub fn into_ground_truth(self) -> Vec<GroundTruth> {
        self.log
    }

    fn charge(&mut self) -> Result<()> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted { used: self.used });
        }
        self.used += 1;
        Ok(())
    }
}

impl RealWorld for SimulatedRobot {
    fn run_controller(&mut self, c: &Controller) -> Result<Observation> {
        self.charge()?;
        let tr = simulate(&self.morphology, c, &self.config);
        self.log.push(GroundTruth::Displacement { value: (self.truth)(&tr) });
        Ok(Observation {
            displacement: measure_displacement(&tr, &self.noise, &mut self.rng),
            fallen: tr.fallen(),
        })
    }

    fn run_action(&mut self, a: &BongardAction) -> Result<(f64, f64)> {
        self.charge()?;
        let (roll, pitch) = orientation_outcome(&self.morphology, a, &self.config);
        self.log.push(GroundTruth::Orientation { roll, pitch });
        let n = normal(self.noise.accel_std);
        Ok((roll + n.sample(&mut self.rng), pitch + n.sample(&mut self.rng)))
    }

    fn tests_used(&self) -> usize {
        self.used
    }

    fn budget(&self) -> usize {
        self.budget
    }
}

/// Pass-through wrapper that counts calls independently of the robot.
pub struct Counting<R> {
    pub inner: R,
    pub controller_calls: usize,
    pub action_calls: usize,
}

impl<R> Counting<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            controller_calls: 0,
            action_calls: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.controller_calls + self.action_calls
    }
}

impl<R: RealWorld> RealWorld for Counting<R> {
    fn run_controller(&mut self, c: &Controller) -> Result<Observation> {
        self.controller_calls += 1;
        self.inner.run_controller(c)
    }

    fn run_action(&mut self, a: &BongardAction) -> Result<(f64, f64)> {
        self.action_calls += 1;
        self.inner.run_action(a)
    }

    fn tests_used(&self) -> usize {
        self.inner.tests_used()
    }

    fn budget(&self) -> usize {
        self.inner.budget()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::reference_controller;
    use crate::sim::{simulate, Pose};

    fn straight(x0: f64, x1: f64) -> Trajectory<f64> {
        let pose = |x| Pose { x, ..Pose::default() };
        Trajectory {
            dt: 0.03,
            poses: vec![pose(x0), pose(x1)],
            contacts: vec![[true; 6]; 2],
            joints: vec![[[0.0; 3]; 6]; 2],
            slip: vec![0.0; 2],
            fall_tick: None,
        }
    }

    #[test]
    fn noiseless_is_exact() {
        let tr = straight(0.1, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(measure_displacement(&tr, &NoiseModel::noiseless(), &mut rng), ground_truth(&tr));
        assert!((ground_truth(&tr) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noise_moments() {
        let tr = straight(0.0, 0.5);
        let nm = NoiseModel {
            outlier_probability: 0.0,
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws: Vec<f64> = (0..10_000).map(|_| measure_displacement(&tr, &nm, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let expected = (0.025f64.powi(2) + 0.01f64.powi(2)).sqrt();
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
        assert!((var.sqrt() / expected - 1.0).abs() < 0.1, "std {}", var.sqrt());
    }

    #[test]
    fn fallen_trial_measures_near_zero() {
        let mut tr = straight(0.0, 0.4);
        tr.fall_tick = Some(1);
        let nm = NoiseModel {
            outlier_probability: 0.0,
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert!(measure_displacement(&tr, &nm, &mut rng).abs() < 0.06);
        }
    }

    #[test]
    fn validation_rejects_bad_noise() {
        assert!(NoiseModel::default().validate().is_ok());
        let bad = NoiseModel {
            outlier_probability: 1.5,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn robot_enforces_budget_and_logs_truth() {
        let m = Morphology::default();
        let cfg = SimConfig::default();
        let mut robot = SimulatedRobot::new(m.clone(), cfg, NoiseModel::default(), 7, 2);
        let c = reference_controller();
        robot.run_controller(&c).unwrap();
        robot.run_controller(&c).unwrap();
        assert!(matches!(robot.run_controller(&c), Err(Error::BudgetExhausted { used: 2 })));
        assert_eq!(robot.remaining(), 0);
        let log = robot.into_ground_truth();
        let exact = ground_truth(&simulate(&m, &c, &cfg));
        assert_eq!(log, vec![GroundTruth::Displacement { value: exact }; 2]);
    }

    #[test]
    fn measurement_stream_is_seeded() {
        let run = |seed| {
            let mut robot = SimulatedRobot::new(Morphology::default(), SimConfig::default(), NoiseModel::default(), seed, 5);
            (0..5).map(|_| robot.run_controller(&reference_controller()).unwrap().displacement).collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }
}
