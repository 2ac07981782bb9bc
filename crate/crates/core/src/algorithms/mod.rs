//! Adaptation procedures compared under a shared real-test budget.
//!
//! Every algorithm talks to the robot through a [`Lab`], which forwards to a
//! [`RealWorld`] and logs each test. The robot itself refuses tests beyond
//! its budget, so accounting cannot be bypassed.

pub mod bongard;
pub mod local_search;
pub mod policy_gradient;
pub mod t_resilience;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::Controller;
use crate::measurement::{GroundTruth, Observation, RealWorld};
use crate::transfer::TransferRecord;

pub use bongard::{action_set, bongard, BongardAction, BongardConfig, BongardModelGenome};
pub use local_search::local_search;
pub use policy_gradient::{policy_gradient, PERTURBATIONS_PER_ITERATION};
pub use t_resilience::{select_final, t_resilience, TResilienceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    TResilience,
    LocalSearch,
    PolicyGradient,
    Bongard,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::TResilience,
        Algorithm::LocalSearch,
        Algorithm::PolicyGradient,
        Algorithm::Bongard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::TResilience => "t-resilience",
            Algorithm::LocalSearch => "local-search",
            Algorithm::PolicyGradient => "policy-gradient",
            Algorithm::Bongard => "bongard",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// Budget block shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    /// Learning tests: transfers, local-search steps, Bongard actions.
    /// Policy gradient runs `ceil(tests / 15)` iterations.
    pub tests: usize,
    pub population: usize,
    pub generations: usize,
    /// Generations between two transfers; 0 derives it as
    /// `generations / tests`.
    pub transfer_period: usize,
    /// Model-search generations after each Bongard action.
    pub model_generations: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self::desk()
    }
}

impl Budget {
    /// Reduced scale: population 40, 400 generations, 25 transfers.
    pub fn desk() -> Self {
        Self {
            tests: 25,
            population: 40,
            generations: 400,
            transfer_period: 16,
            model_generations: 40,
        }
    }

    /// Population 100, 1000 generations, a transfer every 40 generations.
    pub fn full() -> Self {
        Self {
            tests: 25,
            population: 100,
            generations: 1000,
            transfer_period: 40,
            model_generations: 80,
        }
    }

    pub fn effective_transfer_period(&self) -> usize {
        if self.transfer_period > 0 {
            self.transfer_period
        } else {
            (self.generations / self.tests.max(1)).max(1)
        }
    }

    pub fn policy_gradient_iterations(&self) -> usize {
        self.tests.div_ceil(PERTURBATIONS_PER_ITERATION).max(1)
    }

    /// Real tests `algorithm` spends under this budget.
    pub fn real_tests(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::TResilience => self.generations / self.effective_transfer_period() + 1,
            Algorithm::LocalSearch | Algorithm::Bongard => self.tests + 1,
            Algorithm::PolicyGradient => PERTURBATIONS_PER_ITERATION * self.policy_gradient_iterations(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tests == 0 {
            return Err(Error::InvalidConfig("budget.tests must be at least 1".into()));
        }
        if self.population < 2 || self.population % 2 != 0 {
            return Err(Error::InvalidConfig(format!("budget.population must be even and >= 2, got {}", self.population)));
        }
        if self.generations < self.effective_transfer_period() {
            return Err(Error::InvalidConfig("budget.generations must allow at least one transfer".into()));
        }
        Ok(())
    }
}

/// One real test as logged by the algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestRecord {
    Controller {
        controller: Controller,
        measured: f64,
        fallen: bool,
        ground_truth: Option<f64>,
    },
    Action {
        action: BongardAction,
        roll: f64,
        pitch: f64,
        ground_truth: Option<[f64; 2]>,
    },
}

/// Progress record for the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum LogEvent {
    Generation {
        phase: String,
        generation: usize,
        /// Best value of each objective in the population.
        best: Vec<f64>,
        front_size: usize,
    },
    Refit {
        generation: usize,
        training_size: usize,
        training_rmse: Option<f64>,
    },
    Iteration {
        iteration: usize,
        current: Controller,
        measured: Option<f64>,
    },
    ModelStep {
        action_index: usize,
        best_mse: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub scenario: String,
    pub seed: u64,
    pub tests: Vec<TestRecord>,
    /// Transfer log of T-Resilience; empty for the other algorithms.
    pub transfers: Vec<TransferRecord>,
    pub final_controller: Controller,
    /// Self-model performance of the final controller, when known.
    pub final_sim: Option<f64>,
    /// On-board estimate of the final controller, when it was tested.
    pub final_measured: Option<f64>,
    pub final_ground_truth: Option<f64>,
    pub real_tests: usize,
    /// Model retained by the Bongard procedure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<BongardModelGenome>,
    /// Excluded from result files so that they are reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub log: Vec<LogEvent>,
}

impl RunResult {
    fn new(algorithm: Algorithm, lab: Lab<'_>, final_controller: Controller) -> Self {
        let real_tests = lab.tests.len();
        Self {
            algorithm,
            scenario: String::new(),
            seed: 0,
            tests: lab.tests,
            transfers: Vec::new(),
            final_controller,
            final_sim: None,
            final_measured: None,
            final_ground_truth: None,
            real_tests,
            model: None,
            wall_seconds: 0.0,
            log: lab.log,
        }
    }

    /// Attaches the robot's exact values, given in test order.
    pub fn attach_ground_truth(&mut self, truth: &[GroundTruth]) -> Result<()> {
        if truth.len() != self.tests.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tests.len(),
                actual: truth.len(),
            });
        }
        let mut displacements = Vec::new();
        for (test, exact) in self.tests.iter_mut().zip(truth) {
            match (test, exact) {
                (TestRecord::Controller { ground_truth, .. }, GroundTruth::Displacement { value }) => {
                    *ground_truth = Some(*value);
                    displacements.push(*value);
                }
                (TestRecord::Action { ground_truth, .. }, GroundTruth::Orientation { roll, pitch }) => {
                    *ground_truth = Some([*roll, *pitch]);
                }
                _ => return Err(Error::Evaluation("ground-truth log does not match the test log".into())),
            }
        }
        if !self.transfers.is_empty() {
            if self.transfers.len() != displacements.len() {
                return Err(Error::Evaluation("transfer log does not match the test log".into()));
            }
            for (record, value) in self.transfers.iter_mut().zip(displacements) {
                record.ground_truth_performance = Some(value);
            }
        }
        Ok(())
    }
}

/// Logging front end to the robot.
pub struct Lab<'a> {
    real: &'a mut dyn RealWorld,
    pub tests: Vec<TestRecord>,
    pub log: Vec<LogEvent>,
}

impl<'a> Lab<'a> {
    pub fn new(real: &'a mut dyn RealWorld) -> Self {
        Self {
            real,
            tests: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn test_controller(&mut self, c: &Controller) -> Result<Observation> {
        let obs = self.real.run_controller(c)?;
        self.tests.push(TestRecord::Controller {
            controller: *c,
            measured: obs.displacement,
            fallen: obs.fallen,
            ground_truth: None,
        });
        Ok(obs)
    }

    pub fn test_action(&mut self, a: &BongardAction) -> Result<(f64, f64)> {
        let (roll, pitch) = self.real.run_action(a)?;
        self.tests.push(TestRecord::Action {
            action: *a,
            roll,
            pitch,
            ground_truth: None,
        });
        Ok((roll, pitch))
    }

    pub fn remaining(&self) -> usize {
        self.real.remaining()
    }
}

/// Best value of each objective and the size of the first front.
pub(crate) fn generation_event<G, E>(phase: &str, generation: usize, pop: &[crate::moea::ScoredIndividual<G, E, f64>]) -> LogEvent {
    let m = pop.first().map_or(0, |p| p.objectives.len());
    let best = (0..m)
        .map(|k| pop.iter().map(|p| p.objectives[k]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    LogEvent::Generation {
        phase: phase.to_string(),
        generation,
        best,
        front_size: pop.iter().filter(|p| p.rank == 1).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_formulas() {
        let b = Budget::desk();
        assert_eq!(b.real_tests(Algorithm::TResilience), 26);
        assert_eq!(b.real_tests(Algorithm::LocalSearch), 26);
        assert_eq!(b.real_tests(Algorithm::Bongard), 26);
        assert_eq!(b.real_tests(Algorithm::PolicyGradient), 30);
        let p = Budget::full();
        assert_eq!(p.real_tests(Algorithm::TResilience), 26);
        let derived = Budget {
            transfer_period: 0,
            generations: 100,
            tests: 7,
            ..Budget::desk()
        };
        assert_eq!(derived.effective_transfer_period(), 14);
        assert_eq!(derived.real_tests(Algorithm::TResilience), 8);
        assert!(Budget { population: 5, ..Budget::desk() }.validate().is_err());
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("annealing".parse::<Algorithm>().is_err());
    }
}
