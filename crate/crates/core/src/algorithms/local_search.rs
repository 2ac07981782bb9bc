//! Stochastic hill climbing directly on the robot.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gait::{perturb, random_controller};
use crate::measurement::RealWorld;

use super::{Algorithm, Lab, LogEvent, RunResult};

/// Starts from a random controller (one test) and tries `steps` perturbed
/// variants, keeping a variant only if it measures strictly better.
pub fn local_search(real: &mut dyn RealWorld, steps: usize, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    let mut lab = Lab::new(real);
    let mut current = random_controller(rng);
    let mut score = lab.test_controller(&current)?.displacement;
    for iteration in 1..=steps {
        let candidate = perturb(&current, rng);
        let measured = lab.test_controller(&candidate)?.displacement;
        if measured > score {
            current = candidate;
            score = measured;
        }
        lab.log.push(LogEvent::Iteration {
            iteration,
            current,
            measured: Some(score),
        });
    }
    let mut result = RunResult::new(Algorithm::LocalSearch, lab, current);
    result.final_measured = Some(score);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::tests::StalledRng;
    use crate::gait::Controller;
    use crate::measurement::{NoiseModel, SimulatedRobot};
    use crate::sim::{apply_damage, Morphology, ScenarioTag, SimConfig};
    use rand::SeedableRng;

    fn robot(noise: NoiseModel, budget: usize) -> SimulatedRobot {
        let m = apply_damage(&Morphology::default(), &ScenarioTag::E.into()).unwrap();
        SimulatedRobot::new(m, SimConfig::default(), noise, 9, budget)
    }

    #[test]
    fn spends_steps_plus_one() {
        let mut r = robot(NoiseModel::default(), 26);
        let out = local_search(&mut r, 25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.real_tests, 26);
    }

    #[test]
    fn accepted_values_never_decrease() {
        let mut r = robot(NoiseModel::noiseless(), 31);
        let out = local_search(&mut r, 30, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let accepted: Vec<f64> = out
            .log
            .iter()
            .filter_map(|e| match e {
                LogEvent::Iteration { measured, .. } => *measured,
                _ => None,
            })
            .collect();
        assert!(accepted.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(out.final_measured, accepted.last().copied());
    }

    #[test]
    fn identity_perturbation_keeps_start() {
        // The stalled generator yields the same start and identity moves.
        let mut first = StalledRng;
        let start = random_controller(&mut first);
        let mut r = robot(NoiseModel::noiseless(), 6);
        let mut lab = Lab::new(&mut r);
        let mut current: Controller = start;
        let mut score = lab.test_controller(&current).unwrap().displacement;
        for _ in 0..5 {
            let c = perturb(&current, &mut StalledRng);
            let m = lab.test_controller(&c).unwrap().displacement;
            if m > score {
                current = c;
                score = m;
            }
        }
        assert_eq!(current, start);
    }
}
