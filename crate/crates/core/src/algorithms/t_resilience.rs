//! Transferability-guided recovery: search in the unchanged self-model for
//! gaits that are fast, predicted to transfer, and diverse; test a random
//! member of the population on the robot every few generations to train the
//! transferability predictor.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{mutate, random_controller, Controller};
use crate::measurement::RealWorld;
use crate::moea::{self, diversity_scores, ScoredIndividual};
use crate::sim::{contact_descriptor, forward_displacement, simulate, Descriptor, Morphology, SimConfig};
use crate::transfer::{fit_records, predict, Regressor, SvrConfig, TransferRecord};

use super::{generation_event, Algorithm, Budget, Lab, LogEvent, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TResilienceConfig {
    pub population: usize,
    pub generations: usize,
    pub transfer_period: usize,
    /// Minimal predicted transferability score of the final candidate.
    pub threshold: f64,
    pub svr: SvrConfig<f64>,
}

impl Default for TResilienceConfig {
    fn default() -> Self {
        Self::from_budget(&Budget::desk())
    }
}

impl TResilienceConfig {
    pub fn from_budget(b: &Budget) -> Self {
        Self {
            population: b.population,
            generations: b.generations,
            transfer_period: b.effective_transfer_period(),
            threshold: -0.1,
            svr: SvrConfig::default(),
        }
    }
}

/// Self-model evaluation of one controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfEval {
    pub performance: f64,
    pub descriptor: Descriptor,
}

pub(crate) fn self_eval(m: &Morphology<f64>, c: &Controller, cfg: &SimConfig<f64>) -> SelfEval {
    let tr = simulate(m, c, cfg);
    SelfEval {
        performance: forward_displacement(&tr),
        descriptor: contact_descriptor(&tr),
    }
}

type Individual = ScoredIndividual<Controller, SelfEval, f64>;

fn objectives(view: &[(&Controller, &SelfEval)], model: Option<&Regressor<f64>>) -> Result<Vec<Vec<f64>>> {
    let vectors: Vec<[f64; 24]> = view.iter().map(|(c, _)| c.values()).collect();
    let diversity = diversity_scores(&vectors);
    view.iter()
        .zip(diversity)
        .map(|((_, e), d)| Ok(vec![e.performance, predict(model, &e.descriptor)?, d]))
        .collect()
}

pub fn t_resilience(
    self_model: &Morphology<f64>,
    sim: &SimConfig<f64>,
    real: &mut dyn RealWorld,
    config: &TResilienceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RunResult> {
    if config.population == 0 || config.transfer_period == 0 {
        return Err(Error::InvalidConfig("population and transfer period must be positive".into()));
    }
    let mut lab = Lab::new(real);
    let evaluate = |c: &Controller| -> Result<SelfEval> { Ok(self_eval(self_model, c, sim)) };
    let mut model: Option<Regressor<f64>> = None;
    let mut transfers: Vec<TransferRecord> = Vec::new();

    let genomes: Vec<Controller> = (0..config.population).map(|_| random_controller(rng)).collect();
    let mut pop = moea::initialize(genomes, evaluate, |v| objectives(v, None))?;

    for generation in 1..=config.generations {
        let current = model.clone();
        pop = moea::nsga2_step(pop, evaluate, |v| objectives(v, current.as_ref()), |c, r| mutate(c, r), rng)?;
        lab.log.push(generation_event("controllers", generation, &pop));
        if generation % config.transfer_period != 0 {
            continue;
        }
        let pick = &pop[rng.random_range(0..pop.len())];
        let obs = lab.test_controller(&pick.genome)?;
        transfers.push(TransferRecord::new(
            generation,
            pick.genome,
            pick.evaluation.descriptor.clone(),
            pick.evaluation.performance,
            obs.displacement,
            obs.fallen,
        ));
        model = fit_records(&transfers, &config.svr)?;
        lab.log.push(LogEvent::Refit {
            generation,
            training_size: model.as_ref().map_or(0, |m| m.training_size),
            training_rmse: model.as_ref().map(|m| m.training_rmse),
        });
        moea::rescore(&mut pop, |v| objectives(v, model.as_ref()))?;
    }

    let chosen = select_final(&pop, model.as_ref(), config.threshold, &mut lab, &mut transfers, config.generations)?;
    let mut result = RunResult::new(Algorithm::TResilience, lab, chosen.controller);
    result.final_sim = Some(chosen.sim_performance);
    result.final_measured = chosen.measured;
    result.transfers = transfers;
    Ok(result)
}

/// Final answer of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalChoice {
    pub controller: Controller,
    pub sim_performance: f64,
    pub measured: Option<f64>,
    /// Whether the transferable set was empty and the log was used instead.
    pub fallback: bool,
}

/// Tests the fastest member of the transferable non-dominated set, then
/// returns the best measured controller among all transfers. Fallen tests
/// are only considered when every transfer fell.
pub fn select_final(
    pop: &[Individual],
    model: Option<&Regressor<f64>>,
    threshold: f64,
    lab: &mut Lab<'_>,
    transfers: &mut Vec<TransferRecord>,
    generation: usize,
) -> Result<FinalChoice> {
    let scores: Vec<[f64; 2]> = pop
        .iter()
        .map(|p| Ok([p.evaluation.performance, predict(model, &p.evaluation.descriptor)?]))
        .collect::<Result<_>>()?;
    let front = moea::fast_nondominated_sort(&scores).into_iter().next().unwrap_or_default();
    let candidate = front
        .into_iter()
        .filter(|&i| scores[i][1] >= threshold)
        .reduce(|a, b| if scores[b][0] > scores[a][0] { b } else { a });

    let fallback = candidate.is_none();
    if let Some(i) = candidate {
        let p = &pop[i];
        match lab.test_controller(&p.genome) {
            Ok(obs) => {
                let mut record = TransferRecord::new(
                    generation,
                    p.genome,
                    p.evaluation.descriptor.clone(),
                    p.evaluation.performance,
                    obs.displacement,
                    obs.fallen,
                );
                record.validation = true;
                transfers.push(record);
            }
            Err(Error::BudgetExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    let any_standing = transfers.iter().any(|t| !t.fallen);
    let best = transfers
        .iter()
        .filter(|t| !any_standing || !t.fallen)
        .reduce(|a, b| if b.measured_performance > a.measured_performance { b } else { a });
    match best {
        Some(t) => Ok(FinalChoice {
            controller: t.controller,
            sim_performance: t.sim_performance,
            measured: Some(t.measured_performance),
            fallback,
        }),
        None => {
            // Nothing was ever tested: fall back to the fastest simulated gait.
            let p = pop
                .iter()
                .reduce(|a, b| if b.evaluation.performance > a.evaluation.performance { b } else { a })
                .ok_or_else(|| Error::Evaluation("empty population".into()))?;
            Ok(FinalChoice {
                controller: p.genome,
                sim_performance: p.evaluation.performance,
                measured: None,
                fallback: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{NoiseModel, SimulatedRobot};
    use crate::sim::{apply_damage, ScenarioTag};
    use rand::SeedableRng;

    fn small() -> TResilienceConfig {
        TResilienceConfig {
            population: 10,
            generations: 20,
            transfer_period: 4,
            ..TResilienceConfig::default()
        }
    }

    fn individual(c: Controller, performance: f64, descriptor: Descriptor) -> Individual {
        ScoredIndividual {
            genome: c,
            evaluation: SelfEval { performance, descriptor },
            objectives: vec![],
            rank: 1,
            crowding: 0.0,
        }
    }

    #[test]
    fn no_reality_gap_gives_perfect_scores() {
        let m = Morphology::default();
        let cfg = SimConfig::default();
        let mut robot = SimulatedRobot::new(m.clone(), cfg, NoiseModel::noiseless(), 1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = t_resilience(&m, &cfg, &mut robot, &small(), &mut rng).unwrap();
        assert_eq!(r.real_tests, 6);
        assert_eq!(r.transfers.len(), 6);
        assert!(r.transfers.iter().all(|t| t.exact_score == 0.0));
        assert_eq!(r.final_sim, r.final_measured);
    }

    #[test]
    fn transfer_schedule_and_argmax() {
        let base = Morphology::default();
        let m = apply_damage(&base, &ScenarioTag::E.into()).unwrap();
        let cfg = SimConfig::default();
        let config = TResilienceConfig {
            generations: 22,
            transfer_period: 5,
            ..small()
        };
        let mut robot = SimulatedRobot::new(m, cfg, NoiseModel::default(), 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = t_resilience(&base, &cfg, &mut robot, &config, &mut rng).unwrap();
        let validated = r.transfers.iter().filter(|t| t.validation).count();
        assert_eq!(r.transfers.len() - validated, 4);
        assert!(validated <= 1);
        assert_eq!(r.real_tests, 4 + validated);
        let best = r.transfers.iter().filter(|t| !t.fallen).map(|t| t.measured_performance).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.final_measured, Some(best));
    }

    #[test]
    fn seeded_runs_repeat() {
        let m = Morphology::default();
        let cfg = SimConfig::default();
        let run = || {
            let mut robot = SimulatedRobot::new(m.clone(), cfg, NoiseModel::default(), 3, 6);
            t_resilience(&m, &cfg, &mut robot, &small(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dominant_candidate_is_validated() {
        let m = Morphology::default();
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop: Vec<Individual> = (0..4)
            .map(|i| {
                let c = random_controller(&mut rng);
                individual(c, 0.1 * i as f64, self_eval(&m, &c, &cfg).descriptor)
            })
            .collect();
        let mut robot = SimulatedRobot::new(m.clone(), cfg, NoiseModel::noiseless(), 4, 1);
        let mut lab = Lab::new(&mut robot);
        let mut transfers = Vec::new();
        let choice = select_final(&pop, None, -0.1, &mut lab, &mut transfers, 0).unwrap();
        assert_eq!(lab.tests.len(), 1);
        assert!(!choice.fallback);
        assert_eq!(transfers[0].controller, pop[3].genome);
        assert!(transfers[0].validation);
    }

    #[test]
    fn empty_transferable_set_falls_back_to_log() {
        let m = Morphology::default();
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_controller(&mut rng);
        let d = self_eval(&m, &c, &cfg).descriptor;
        let pessimist = Regressor {
            weights: vec![0.0; d.len()],
            bias: -0.5,
            training_size: 1,
            training_rmse: 0.0,
            epsilon: 0.0,
        };
        let logged = TransferRecord::new(3, c, d.clone(), 0.2, 0.15, false);
        let mut transfers = vec![logged];
        let pop = vec![individual(random_controller(&mut rng), 0.4, d)];
        let mut robot = SimulatedRobot::new(m, cfg, NoiseModel::noiseless(), 5, 3);
        let mut lab = Lab::new(&mut robot);
        let choice = select_final(&pop, Some(&pessimist), -0.1, &mut lab, &mut transfers, 9).unwrap();
        assert!(choice.fallback);
        assert_eq!(choice.controller, c);
        assert_eq!(lab.tests.len(), 0);
    }
}
