//! Self-modeling baseline: identify the damage by probing single-leg
//! postures, then optimize a gait in the best identified model.

use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{mutate, random_controller, Controller, LEGS};
use crate::measurement::RealWorld;
use crate::moea::{self, diversity_scores};
use crate::scalar::Scalar;
use crate::sim::{forward_displacement, orientation_outcome, simulate, Morphology, SimConfig};

use super::{generation_event, Algorithm, Budget, Lab, LogEvent, RunResult};

/// Horizontal joint angle of the forward and backward postures, radians.
pub const ACTION_SWING: f64 = FRAC_PI_6;
/// (femur, tibia) angles of the three elevation variants.
pub const ELEVATIONS: [[f64; 2]; 3] = [[0.0, 0.0], [FRAC_PI_4, 0.0], [-FRAC_PI_4, 0.0]];

/// A single-leg posture; the other legs stay neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BongardAction {
    pub leg: usize,
    pub forward: bool,
    /// Elevation variant 0, 1 or 2.
    pub variant: u8,
    /// Resolved (swing, femur, tibia) angles.
    pub angles: [f64; 3],
}

impl BongardAction {
    pub fn new(leg: usize, forward: bool, variant: u8, swing: f64, elevations: &[[f64; 2]; 3]) -> Self {
        let [femur, tibia] = elevations[usize::from(variant) % 3];
        Self {
            leg,
            forward,
            variant,
            angles: [if forward { swing } else { -swing }, femur, tibia],
        }
    }

    pub fn joint_angles<S: Scalar>(&self) -> [S; 3] {
        self.angles.map(S::lit)
    }
}

/// The 36 postures: 6 legs × 2 swing directions × 3 elevations.
pub fn action_set() -> Vec<BongardAction> {
    action_set_with(ACTION_SWING, &ELEVATIONS)
}

pub fn action_set_with(swing: f64, elevations: &[[f64; 2]; 3]) -> Vec<BongardAction> {
    let mut out = Vec::with_capacity(LEGS * 6);
    for leg in 0..LEGS {
        for forward in [false, true] {
            for variant in 0..3 {
                out.push(BongardAction::new(leg, forward, variant, swing, elevations));
            }
        }
    }
    out
}

/// Admissible scale factors of the femur and tibia lengths.
pub const LENGTH_SCALES: [f64; 6] = [0.0, 0.5, 0.75, 1.0, 1.25, 1.5];
const UNIT_SCALE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LegModel {
    /// Index into [`LENGTH_SCALES`] for the femur.
    pub middle: u8,
    /// Index into [`LENGTH_SCALES`] for the tibia.
    pub terminal: u8,
    pub powered: [bool; 3],
}

/// Candidate self-model: 30 parameters over the prior morphology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BongardModelGenome {
    pub legs: [LegModel; LEGS],
}

impl BongardModelGenome {
    /// The undamaged robot.
    pub fn prior() -> Self {
        Self {
            legs: [LegModel {
                middle: UNIT_SCALE,
                terminal: UNIT_SCALE,
                powered: [true; 3],
            }; LEGS],
        }
    }

    pub fn to_vector(&self) -> [f64; 30] {
        let mut v = [0.0; 30];
        for (i, leg) in self.legs.iter().enumerate() {
            v[i * 5] = LENGTH_SCALES[usize::from(leg.middle)];
            v[i * 5 + 1] = LENGTH_SCALES[usize::from(leg.terminal)];
            for (k, &p) in leg.powered.iter().enumerate() {
                v[i * 5 + 2 + k] = f64::from(u8::from(p));
            }
        }
        v
    }

    /// Applies the model to `prior`.
    pub fn instantiate(&self, prior: &Morphology<f64>) -> Morphology<f64> {
        let mut m = prior.clone();
        for (leg, model) in m.legs.iter_mut().zip(&self.legs) {
            leg.femur *= LENGTH_SCALES[usize::from(model.middle)];
            leg.tibia *= LENGTH_SCALES[usize::from(model.terminal)];
            leg.powered = model.powered;
        }
        m
    }

    /// Each parameter changes with probability 0.1: lengths step to a
    /// neighboring scale (clamped), actuator flags flip.
    pub fn mutate<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let last = (LENGTH_SCALES.len() - 1) as u8;
        let step = |v: &mut u8, rng: &mut R| {
            let u: f64 = rng.random();
            if u < 0.05 {
                *v = (*v + 1).min(last);
            } else if u < 0.1 {
                *v = v.saturating_sub(1);
            }
        };
        let mut out = *self;
        for leg in out.legs.iter_mut() {
            step(&mut leg.middle, rng);
            step(&mut leg.terminal, rng);
            for p in leg.powered.iter_mut() {
                if rng.random::<f64>() < 0.1 {
                    *p = !*p;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BongardConfig {
    pub actions: usize,
    pub model_population: usize,
    pub model_generations: usize,
    pub population: usize,
    pub generations: usize,
}

impl Default for BongardConfig {
    fn default() -> Self {
        Self::from_budget(&Budget::desk())
    }
}

impl BongardConfig {
    pub fn from_budget(b: &Budget) -> Self {
        Self {
            actions: b.tests,
            model_population: 36,
            model_generations: b.model_generations,
            population: b.population,
            generations: b.generations,
        }
    }
}

/// Predicted (roll, pitch) of every action.
type Predictions = Vec<(f64, f64)>;

fn predict_all(genome: &BongardModelGenome, prior: &Morphology<f64>, actions: &[BongardAction], cfg: &SimConfig<f64>) -> Predictions {
    let m = genome.instantiate(prior);
    actions.iter().map(|a| orientation_outcome(&m, a, cfg)).collect()
}

/// Mean squared error over the tested actions.
pub fn model_error(predictions: &[(f64, f64)], observed: &[(usize, (f64, f64))]) -> f64 {
    if observed.is_empty() {
        return 0.0;
    }
    let sse: f64 = observed
        .iter()
        .map(|&(i, (r, p))| {
            let (pr, pp) = predictions[i];
            (pr - r).powi(2) + (pp - p).powi(2)
        })
        .sum();
    sse / (2 * observed.len()) as f64
}

/// Untested action on which the models disagree most; exact ties are broken
/// uniformly at random.
pub fn select_action<R: Rng + ?Sized>(models: &[&Predictions], tested: &[bool], rng: &mut R) -> Option<usize> {
    let n = models.len() as f64;
    let variance = |i: usize| {
        let (mr, mp) = models.iter().fold((0.0, 0.0), |(a, b), m| (a + m[i].0 / n, b + m[i].1 / n));
        models.iter().map(|m| (m[i].0 - mr).powi(2) + (m[i].1 - mp).powi(2)).sum::<f64>() / n
    };
    let scored: Vec<(usize, f64)> = (0..tested.len()).filter(|&i| !tested[i]).map(|i| (i, variance(i))).collect();
    let top = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = scored.iter().filter(|s| s.1 == top).map(|s| s.0).collect();
    if ties.is_empty() {
        return None;
    }
    Some(ties[rng.random_range(0..ties.len())])
}

fn reinject_best<S>(
    models: &mut [moea::ScoredIndividual<BongardModelGenome, Predictions, S>],
    archive: &[(BongardModelGenome, Predictions)],
    observed: &[(usize, (f64, f64))],
) {
    let Some((genome, preds, err)) = archive
        .iter()
        .map(|(g, p)| (g, p, model_error(p, observed)))
        .reduce(|a, b| if b.2 < a.2 { b } else { a })
    else {
        return;
    };
    let errors: Vec<f64> = models.iter().map(|m| model_error(&m.evaluation, observed)).collect();
    if errors.iter().any(|&e| e <= err) {
        return;
    }
    let worst = (0..errors.len()).reduce(|a, b| if errors[b] >= errors[a] { b } else { a });
    if let Some(w) = worst {
        models[w].genome = *genome;
        models[w].evaluation = preds.clone();
    }
}

pub fn bongard(
    prior: &Morphology<f64>,
    sim: &SimConfig<f64>,
    real: &mut dyn RealWorld,
    config: &BongardConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RunResult> {
    if config.model_population < 2 || config.population == 0 {
        return Err(Error::InvalidConfig("Bongard populations are too small".into()));
    }
    let mut lab = Lab::new(real);
    let actions = action_set();
    let mut tested = vec![false; actions.len()];
    let mut observed: Vec<(usize, (f64, f64))> = Vec::new();

    let evaluate = |g: &BongardModelGenome| -> Result<Predictions> { Ok(predict_all(g, prior, &actions, sim)) };
    let score = |obs: &[(usize, (f64, f64))], view: &[(&BongardModelGenome, &Predictions)]| -> Result<Vec<Vec<f64>>> {
        let vectors: Vec<[f64; 30]> = view.iter().map(|(g, _)| g.to_vector()).collect();
        let diversity = diversity_scores(&vectors);
        Ok(view.iter().zip(diversity).map(|((_, p), d)| vec![-model_error(p, obs), d]).collect())
    };
    let mut models = moea::initialize(vec![BongardModelGenome::prior(); config.model_population], evaluate, |v| score(&[], v))?;
    // Populations at the end of every step. A model that fitted the earlier
    // actions can be crowded out before a new action exposes the mutants that
    // replaced it, so the best archived model re-enters after each action.
    let mut archive: Vec<(BongardModelGenome, Predictions)> = vec![(models[0].genome, models[0].evaluation.clone())];
    let mut archived: HashSet<BongardModelGenome> = archive.iter().map(|a| a.0).collect();

    for step in 0..config.actions.min(actions.len()) {
        let preds: Vec<&Predictions> = models.iter().map(|m| &m.evaluation).collect();
        let Some(choice) = select_action(&preds, &tested, rng) else { break };
        let outcome = lab.test_action(&actions[choice])?;
        tested[choice] = true;
        observed.push((choice, outcome));
        reinject_best(&mut models, &archive, &observed);
        moea::rescore(&mut models, |v| score(&observed, v))?;
        for _ in 0..config.model_generations {
            models = moea::nsga2_step(models, evaluate, |v| score(&observed, v), |g, r| g.mutate(r), rng)?;
        }
        for m in &models {
            if archived.insert(m.genome) {
                archive.push((m.genome, m.evaluation.clone()));
            }
        }
        let best_mse = models.iter().map(|m| model_error(&m.evaluation, &observed)).fold(f64::INFINITY, f64::min);
        lab.log.push(LogEvent::ModelStep {
            action_index: step,
            best_mse,
        });
    }

    let best_model = models
        .iter()
        .map(|m| (m.genome, model_error(&m.evaluation, &observed)))
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .map(|(g, _)| g)
        .ok_or_else(|| Error::Evaluation("empty model population".into()))?;
    let morphology = best_model.instantiate(prior);

    let eval_gait = |c: &Controller| -> Result<f64> { Ok(forward_displacement(&simulate(&morphology, c, sim))) };
    let gait_score = |view: &[(&Controller, &f64)]| -> Result<Vec<Vec<f64>>> {
        let vectors: Vec<[f64; 24]> = view.iter().map(|(c, _)| c.values()).collect();
        let diversity = diversity_scores(&vectors);
        Ok(view.iter().zip(diversity).map(|((_, &f), d)| vec![f, d]).collect())
    };
    let genomes: Vec<Controller> = (0..config.population).map(|_| random_controller(rng)).collect();
    let mut pop = moea::initialize(genomes, eval_gait, gait_score)?;
    for generation in 1..=config.generations {
        pop = moea::nsga2_step(pop, eval_gait, gait_score, |c, r| mutate(c, r), rng)?;
        if generation % 10 == 0 || generation == config.generations {
            lab.log.push(generation_event("controllers", generation, &pop));
        }
    }
    let best = pop
        .iter()
        .reduce(|a, b| if b.evaluation > a.evaluation { b } else { a })
        .ok_or_else(|| Error::Evaluation("empty population".into()))?;
    let (controller, sim_perf) = (best.genome, best.evaluation);
    let obs = lab.test_controller(&controller)?;

    let mut result = RunResult::new(Algorithm::Bongard, lab, controller);
    result.final_sim = Some(sim_perf);
    result.final_measured = Some(obs.displacement);
    result.model = Some(best_model);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{NoiseModel, SimulatedRobot};
    use crate::sim::{apply_damage, ScenarioTag};
    use rand::SeedableRng;

    #[test]
    fn action_set_shape() {
        let set = action_set();
        assert_eq!(set.len(), 36);
        let keys: HashSet<(usize, bool, u8)> = set.iter().map(|a| (a.leg, a.forward, a.variant)).collect();
        assert_eq!(keys.len(), 36);
        for leg in 0..LEGS {
            assert_eq!(set.iter().filter(|a| a.leg == leg).count(), 6);
        }
        assert!(set.iter().all(|a| (a.angles[0].abs() - FRAC_PI_6).abs() < 1e-15));
    }

    #[test]
    fn prior_instantiates_to_itself() {
        let m = Morphology::default();
        assert_eq!(BongardModelGenome::prior().instantiate(&m), m);
        let v = BongardModelGenome::prior().to_vector();
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 30);
    }

    #[test]
    fn removed_leg_changes_some_outcome() {
        let m = Morphology::<f64>::default();
        let hurt = apply_damage(&m, &ScenarioTag::E.into()).unwrap();
        let cfg = SimConfig::default();
        let acts = action_set();
        let differ = acts
            .iter()
            .filter(|a| orientation_outcome(&m, a, &cfg) != orientation_outcome(&hurt, a, &cfg))
            .count();
        assert!(differ > 0);
    }

    #[test]
    fn identical_models_tie_uniformly() {
        let preds = vec![(0.1, 0.2); 36];
        let models = vec![&preds; 5];
        let tested = vec![false; 36];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let picks: HashSet<usize> = (0..400).map(|_| select_action(&models, &tested, &mut rng).unwrap()).collect();
        assert_eq!(picks.len(), 36);
        let mut some = vec![true; 36];
        some[4] = false;
        assert_eq!(select_action(&models, &some, &mut rng), Some(4));
    }

    #[test]
    fn truthful_prior_has_zero_error() {
        let m = Morphology::default();
        let cfg = SimConfig::default();
        let config = BongardConfig {
            actions: 4,
            model_generations: 3,
            population: 6,
            generations: 3,
            ..BongardConfig::default()
        };
        let mut robot = SimulatedRobot::new(m.clone(), cfg, NoiseModel::noiseless(), 1, 5);
        let r = bongard(&m, &cfg, &mut robot, &config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.real_tests, 5);
        for e in &r.log {
            if let LogEvent::ModelStep { best_mse, .. } = e {
                assert_eq!(*best_mse, 0.0);
            }
        }
    }

    #[test]
    fn identification_does_not_get_worse_than_prior() {
        let prior = Morphology::default();
        let hurt = apply_damage(&prior, &ScenarioTag::E.into()).unwrap();
        let cfg = SimConfig::default();
        let config = BongardConfig {
            actions: 15,
            model_generations: 40,
            population: 6,
            generations: 2,
            ..BongardConfig::default()
        };
        let mut robot = SimulatedRobot::new(hurt, cfg, NoiseModel::default(), 2, 16);
        let r = bongard(&prior, &cfg, &mut robot, &config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let observed: Vec<(usize, (f64, f64))> = r
            .tests
            .iter()
            .filter_map(|t| match t {
                super::super::TestRecord::Action { action, roll, pitch, .. } => {
                    let i = action_set().iter().position(|a| a == action).unwrap();
                    Some((i, (*roll, *pitch)))
                }
                _ => None,
            })
            .collect();
        let acts = action_set();
        let prior_err = model_error(&predict_all(&BongardModelGenome::prior(), &prior, &acts, &cfg), &observed);
        let best_err = model_error(&predict_all(&r.model.unwrap(), &prior, &acts, &cfg), &observed);
        assert!(best_err <= prior_err, "{best_err} > {prior_err}");
        assert_eq!(r.real_tests, 16);
    }
}
