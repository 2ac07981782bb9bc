//! Finite-difference policy gradient on the grid of controller parameters.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gait::{perturb, random_controller, Controller, MAX_LEVEL, PARAM_COUNT};
use crate::measurement::RealWorld;

use super::{Algorithm, Lab, LogEvent, RunResult};

pub const PERTURBATIONS_PER_ITERATION: usize = 15;

/// Mean of the values, `-∞` for an empty group so that any populated group
/// wins the comparison.
fn group_mean(sum: f64, count: usize) -> f64 {
    if count == 0 {
        f64::NEG_INFINITY
    } else {
        sum / count as f64
    }
}

/// One update of `c` from measured perturbations.
pub fn gradient_step(c: &Controller, trials: &[(Controller, f64)]) -> Controller {
    let mut levels = *c.levels();
    for (j, level) in levels.iter_mut().enumerate().take(PARAM_COUNT) {
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for (p, score) in trials {
            let g = match p.levels()[j].cmp(&c.levels()[j]) {
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Greater => 2,
            };
            sums[g] += score;
            counts[g] += 1;
        }
        let minus = group_mean(sums[0], counts[0]);
        let zero = group_mean(sums[1], counts[1]);
        let plus = group_mean(sums[2], counts[2]);
        if zero > plus.max(minus) {
            continue;
        }
        if plus > minus {
            *level = (*level + 1).min(MAX_LEVEL);
        } else {
            *level = level.saturating_sub(1);
        }
    }
    Controller::from_levels(levels).expect("levels stay on the grid")
}

/// Runs `iterations` rounds of 15 real tests each. The final controller is
/// the last update and is not tested.
pub fn policy_gradient(real: &mut dyn RealWorld, iterations: usize, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    let mut lab = Lab::new(real);
    let mut current = random_controller(rng);
    for iteration in 1..=iterations {
        let mut trials = Vec::with_capacity(PERTURBATIONS_PER_ITERATION);
        for _ in 0..PERTURBATIONS_PER_ITERATION {
            let p = perturb(&current, rng);
            let measured = lab.test_controller(&p)?.displacement;
            trials.push((p, measured));
        }
        current = gradient_step(&current, &trials);
        lab.log.push(LogEvent::Iteration {
            iteration,
            current,
            measured: None,
        });
    }
    Ok(RunResult::new(Algorithm::PolicyGradient, lab, current))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::BongardAction;
    use crate::error::Error;
    use crate::gait::tests::StalledRng;
    use crate::measurement::Observation;
    use rand::SeedableRng;

    /// Separable toy objective peaking at 0.5 on every parameter.
    struct Bowl {
        used: usize,
    }

    impl RealWorld for Bowl {
        fn run_controller(&mut self, c: &Controller) -> Result<Observation> {
            self.used += 1;
            let v: [f64; PARAM_COUNT] = c.values();
            Ok(Observation {
                displacement: -v.iter().map(|x| (x - 0.5).powi(2)).sum::<f64>(),
                fallen: false,
            })
        }
        fn run_action(&mut self, _: &BongardAction) -> Result<(f64, f64)> {
            Err(Error::Evaluation("not a posture rig".into()))
        }
        fn tests_used(&self) -> usize {
            self.used
        }
        fn budget(&self) -> usize {
            usize::MAX
        }
    }

    #[test]
    fn identical_perturbations_change_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_controller(&mut rng);
        let trials: Vec<(Controller, f64)> = (0..15).map(|i| (perturb(&c, &mut StalledRng), i as f64)).collect();
        assert_eq!(gradient_step(&c, &trials), c);
    }

    #[test]
    fn two_iterations_cost_thirty_tests() {
        let mut bowl = Bowl { used: 0 };
        let r = policy_gradient(&mut bowl, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(r.real_tests, 30);
        assert_eq!(bowl.used, 30);
        assert_eq!(r.final_measured, None);
    }

    #[test]
    fn moves_towards_the_optimum() {
        let (mut toward, mut away) = (0usize, 0usize);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut bowl = Bowl { used: 0 };
            let mut lab = Lab::new(&mut bowl);
            let mut c = random_controller(&mut rng);
            for _ in 0..2 {
                let trials: Vec<(Controller, f64)> = (0..15)
                    .map(|_| {
                        let p = perturb(&c, &mut rng);
                        let m = lab.test_controller(&p).unwrap().displacement;
                        (p, m)
                    })
                    .collect();
                let next = gradient_step(&c, &trials);
                for (a, b) in c.levels().iter().zip(next.levels()) {
                    let (da, db) = ((*a as i32 - 2).abs(), (*b as i32 - 2).abs());
                    if db < da {
                        toward += 1;
                    } else if db > da {
                        away += 1;
                    }
                }
                c = next;
            }
        }
        let share = toward as f64 / (toward + away) as f64;
        // Noise from the other 23 parameters is of the same order as the
        // signal of one step, so many moves still go the wrong way.
        assert!(share >= 0.65, "{toward} toward, {away} away");
    }
}
