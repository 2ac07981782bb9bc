//! Elitist Pareto search (NSGA-II with mutation-only variation) and the
//! population diversity objective.
//!
//! Objectives are split in two phases. `evaluate` is the expensive,
//! per-genome part (a simulation) and runs in parallel; `score` turns the
//! evaluations of a whole population into objective vectors, so that
//! population-relative objectives such as diversity and objectives backed by
//! a model that changes between generations can be recomputed cheaply.

pub mod pareto;

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

pub use pareto::{crowding_distance, dominates, fast_nondominated_sort};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "G: Serialize, E: Serialize, S: Scalar", deserialize = "G: Deserialize<'de>, E: Deserialize<'de>, S: Scalar"))]
pub struct ScoredIndividual<G, E, S> {
    pub genome: G,
    pub evaluation: E,
    /// Maximized objective values.
    pub objectives: Vec<S>,
    /// Front index, starting at 1.
    pub rank: usize,
    pub crowding: S,
}

/// Mean Euclidean distance of each vector to every member of the set, the
/// zero self-distance included and divided by the set size.
pub fn diversity_scores<S: Scalar, V: AsRef<[S]>>(vectors: &[V]) -> Vec<S> {
    let n = vectors.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sums = vec![S::zero(); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = vectors[i]
                .as_ref()
                .iter()
                .zip(vectors[j].as_ref())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<S>()
                .sqrt();
            sums[i] = sums[i] + d;
            sums[j] = sums[j] + d;
        }
    }
    let n = S::from_usize(n).expect("population size");
    sums.into_iter().map(|s| s / n).collect()
}

/// Assigns rank and crowding in place from the current objectives.
pub fn assign_fronts<G, E, S: Scalar>(pop: &mut [ScoredIndividual<G, E, S>]) {
    let scores: Vec<&[S]> = pop.iter().map(|p| p.objectives.as_slice()).collect();
    let fronts = fast_nondominated_sort(&scores);
    let mut ranked = Vec::with_capacity(pop.len());
    for (k, front) in fronts.iter().enumerate() {
        let members: Vec<&[S]> = front.iter().map(|&i| scores[i]).collect();
        let crowd = crowding_distance(&members);
        ranked.extend(front.iter().zip(crowd).map(|(&i, c)| (i, k + 1, c)));
    }
    for (i, rank, crowding) in ranked {
        pop[i].rank = rank;
        pop[i].crowding = crowding;
    }
}

/// Recomputes every objective vector with `score`, then ranks.
pub fn rescore<G, E, S: Scalar, F>(pop: &mut [ScoredIndividual<G, E, S>], score: F) -> Result<()>
where
    F: Fn(&[(&G, &E)]) -> Result<Vec<Vec<S>>>,
{
    let view: Vec<(&G, &E)> = pop.iter().map(|p| (&p.genome, &p.evaluation)).collect();
    let objectives = score(&view)?;
    for (p, o) in pop.iter_mut().zip(objectives) {
        p.objectives = o;
    }
    assign_fronts(pop);
    Ok(())
}

fn evaluate_all<G, E, F>(genomes: &[G], evaluate: &F) -> Result<Vec<E>>
where
    G: Sync,
    E: Send,
    F: Fn(&G) -> Result<E> + Sync,
{
    // Collect preserves input order whatever the completion order.
    genomes.par_iter().map(evaluate).collect()
}

/// Evaluates, scores and ranks an initial population.
pub fn initialize<G, E, S, F, Sc>(genomes: Vec<G>, evaluate: F, score: Sc) -> Result<Vec<ScoredIndividual<G, E, S>>>
where
    G: Sync,
    E: Send,
    S: Scalar,
    F: Fn(&G) -> Result<E> + Sync,
    Sc: Fn(&[(&G, &E)]) -> Result<Vec<Vec<S>>>,
{
    let evaluations = evaluate_all(&genomes, &evaluate)?;
    let mut pop: Vec<_> = genomes
        .into_iter()
        .zip(evaluations)
        .map(|(genome, evaluation)| ScoredIndividual {
            genome,
            evaluation,
            objectives: Vec::new(),
            rank: 1,
            crowding: S::zero(),
        })
        .collect();
    rescore(&mut pop, score)?;
    Ok(pop)
}

/// (rank ascending, crowding descending); `Less` means better.
fn compare_fitness<G, E, S: Scalar>(a: &ScoredIndividual<G, E, S>, b: &ScoredIndividual<G, E, S>) -> Ordering {
    a.rank
        .cmp(&b.rank)
        .then_with(|| b.crowding.partial_cmp(&a.crowding).unwrap_or(Ordering::Equal))
}

fn tournament<'a, G, E, S: Scalar, R: Rng + ?Sized>(
    pop: &'a [ScoredIndividual<G, E, S>],
    rng: &mut R,
) -> &'a ScoredIndividual<G, E, S> {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    match compare_fitness(a, b) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.random_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// One generation: tournament selection, mutation, parallel evaluation of
/// the offspring, then truncation of parents ∪ offspring by (rank, crowding).
pub fn nsga2_step<G, E, S, F, Sc, V, R>(
    pop: Vec<ScoredIndividual<G, E, S>>,
    evaluate: F,
    score: Sc,
    variation: V,
    rng: &mut R,
) -> Result<Vec<ScoredIndividual<G, E, S>>>
where
    G: Sync,
    E: Send,
    S: Scalar,
    F: Fn(&G) -> Result<E> + Sync,
    Sc: Fn(&[(&G, &E)]) -> Result<Vec<Vec<S>>>,
    V: Fn(&G, &mut R) -> G,
    R: Rng + ?Sized,
{
    let n = pop.len();
    if n == 0 {
        return Ok(pop);
    }
    let children: Vec<G> = (0..n)
        .map(|_| {
            let parent = tournament(&pop, rng);
            variation(&parent.genome, rng)
        })
        .collect();
    let evaluations = evaluate_all(&children, &evaluate)?;
    let mut union = pop;
    union.extend(children.into_iter().zip(evaluations).map(|(genome, evaluation)| ScoredIndividual {
        genome,
        evaluation,
        objectives: Vec::new(),
        rank: 1,
        crowding: S::zero(),
    }));
    rescore(&mut union, score)?;
    let mut order: Vec<usize> = (0..union.len()).collect();
    order.sort_by(|&a, &b| compare_fitness(&union[a], &union[b]).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    let mut keep = vec![false; union.len()];
    for &i in &order {
        keep[i] = true;
    }
    let mut flags = keep.into_iter();
    union.retain(|_| flags.next().unwrap_or(false));
    Ok(union)
}

/// One line of the per-generation JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot<G> {
    pub generation: usize,
    pub genomes: Vec<G>,
    pub objectives: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
}

impl<G: Clone> GenerationSnapshot<G> {
    pub fn capture<E, S: Scalar>(generation: usize, pop: &[ScoredIndividual<G, E, S>]) -> Self {
        Self {
            generation,
            genomes: pop.iter().map(|p| p.genome.clone()).collect(),
            objectives: pop
                .iter()
                .map(|p| p.objectives.iter().map(|o| o.as_f64()).collect())
                .collect(),
            ranks: pop.iter().map(|p| p.rank).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{mutate, random_controller, Controller};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Ind = ScoredIndividual<f64, f64, f64>;

    fn toy_evaluate(x: &f64) -> Result<f64> {
        Ok(-(x - 3.0) * (x - 3.0))
    }

    fn single(view: &[(&f64, &f64)]) -> Result<Vec<Vec<f64>>> {
        Ok(view.iter().map(|(_, &e)| vec![e]).collect())
    }

    fn jitter(x: &f64, rng: &mut ChaCha8Rng) -> f64 {
        x + rng.random_range(-0.5..0.5)
    }

    #[test]
    fn diversity_examples() {
        let same = diversity_scores(&vec![vec![0.5; 24]; 4]);
        assert!(same.iter().all(|&d| d == 0.0));
        let mut a = vec![0.5; 24];
        let b = a.clone();
        a[7] = 0.75;
        assert_eq!(diversity_scores::<f64, _>(&[a.clone(), b.clone()]), vec![0.125, 0.125]);
        let c = vec![0.0; 24];
        let fwd = diversity_scores::<f64, _>(&[a.clone(), b.clone(), c.clone()]);
        let rev = diversity_scores::<f64, _>(&[c, b, a]);
        assert!((fwd[0] - rev[2]).abs() < 1e-15 && (fwd[2] - rev[0]).abs() < 1e-15);
    }

    #[test]
    fn constant_objectives_keep_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flat = |view: &[(&f64, &f64)]| -> Result<Vec<Vec<f64>>> { Ok(vec![vec![1.0, 1.0]; view.len()]) };
        let mut pop = initialize((0..10).map(f64::from).collect(), toy_evaluate, flat).unwrap();
        for _ in 0..5 {
            pop = nsga2_step(pop, toy_evaluate, flat, jitter, &mut rng).unwrap();
            assert_eq!(pop.len(), 10);
            assert!(pop.iter().all(|p| p.rank == 1));
        }
    }

    #[test]
    fn single_objective_is_elitist() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start: Vec<f64> = (0..20).map(|i| -10.0 + f64::from(i) * 0.3).collect();
        let mut pop: Vec<Ind> = initialize(start, toy_evaluate, single).unwrap();
        let mut best = f64::NEG_INFINITY;
        for _ in 0..60 {
            pop = nsga2_step(pop, toy_evaluate, single, jitter, &mut rng).unwrap();
            let now = pop.iter().map(|p| p.evaluation).fold(f64::NEG_INFINITY, f64::max);
            assert!(now >= best);
            best = now;
        }
        assert!(best > -0.05, "best {best}");
    }

    #[test]
    fn dominating_solution_survives() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let two = |view: &[(&f64, &f64)]| -> Result<Vec<Vec<f64>>> {
            Ok(view.iter().map(|(&g, _)| vec![-g.abs(), -(g - 0.1).abs()]).collect())
        };
        let mut pop: Vec<Ind> = initialize(vec![0.05, 4.0, -3.0, 7.0], |_| Ok(0.0), two).unwrap();
        for _ in 0..10 {
            pop = nsga2_step(pop, |_| Ok(0.0), two, |x: &f64, r: &mut ChaCha8Rng| x + r.random_range(2.0..3.0), &mut rng)
                .unwrap();
            assert!(pop.iter().any(|p| p.genome == 0.05));
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let genomes: Vec<Controller> = (0..12).map(|_| random_controller(&mut rng)).collect();
            let eval = |c: &Controller| -> Result<f64> { Ok(c.values::<f64>().iter().sum()) };
            let score = |view: &[(&Controller, &f64)]| -> Result<Vec<Vec<f64>>> {
                let vecs: Vec<[f64; 24]> = view.iter().map(|(c, _)| c.values()).collect();
                let div = diversity_scores(&vecs);
                Ok(view.iter().zip(div).map(|((_, &e), d)| vec![e, d]).collect())
            };
            let mut pop = initialize(genomes, eval, score).unwrap();
            for _ in 0..8 {
                pop = nsga2_step(pop, eval, score, |c, r| mutate(c, r), &mut rng).unwrap();
            }
            GenerationSnapshot::capture(8, &pop)
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn snapshot_jsonl_line() {
        let pop: Vec<Ind> = initialize(vec![1.0, 2.0], toy_evaluate, single).unwrap();
        let mut buf = Vec::new();
        crate::jsonl::append(&mut buf, &GenerationSnapshot::capture(0, &pop)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back: GenerationSnapshot<f64> = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(back.ranks, vec![2, 1]);
    }
}
