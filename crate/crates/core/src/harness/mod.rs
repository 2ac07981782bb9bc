//! Reproduction driver: runs every (scenario, algorithm, seed) cell of an
//! experiment, persists the results and renders comparison tables and
//! trajectory traces.
//!
//! Layout of an output directory:
//!
//! ```text
//! experiment.toml
//! <scenario>/<algorithm>/seed-<seed>/result.json
//! <scenario>/<algorithm>/seed-<seed>/run.jsonl
//! ```
//!
//! `result.json` depends only on the configuration and the seed. Wall time
//! goes to `run.jsonl`.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    bongard, local_search, policy_gradient, t_resilience, Algorithm, BongardConfig, LogEvent, RunResult, TResilienceConfig,
};
use crate::error::{Error, Result};
use crate::gait::reference_controller;
use crate::jsonl;
use crate::measurement::{ground_truth, RealWorld, SimulatedRobot};
use crate::sim::{apply_damage, simulate, svg_top_view, Morphology, ScenarioTag, TraceStyle, Trajectory};
use crate::stats::{self, ComparisonReport, Groups};
use crate::transfer::TransferRecord;

pub use config::{CellSetup, ExperimentConfig, WORKERS_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub scenario: ScenarioTag,
    pub algorithm: Algorithm,
    pub seed: u64,
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/seed-{}", self.scenario, self.algorithm, self.seed)
    }
}

impl CellId {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.scenario.to_string()).join(self.algorithm.name()).join(format!("seed-{}", self.seed))
    }
}

/// Content of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub config_hash: String,
    pub seed: u64,
    pub scenario: ScenarioTag,
    pub algorithm: Algorithm,
    pub setup: CellSetup,
    pub result: RunResult,
}

/// One line of `run.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum RunLine {
    Header {
        config_hash: String,
        seed: u64,
        scenario: ScenarioTag,
        algorithm: Algorithm,
    },
    Event(LogEvent),
    Transfer(TransferRecord),
    Footer {
        wall_seconds: f64,
        real_tests: usize,
    },
}

/// Runs `algorithm` against `real`. The random stream is derived from
/// `seed` alone.
pub fn execute(algorithm: Algorithm, setup: &CellSetup, real: &mut dyn RealWorld, seed: u64) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &setup.budget;
    let intact = setup.intact();
    match algorithm {
        Algorithm::TResilience => t_resilience(&intact, &setup.sim, real, &TResilienceConfig::from_budget(b), &mut rng),
        Algorithm::LocalSearch => local_search(real, b.tests, &mut rng),
        Algorithm::PolicyGradient => policy_gradient(real, b.policy_gradient_iterations(), &mut rng),
        Algorithm::Bongard => bongard(&intact, &setup.sim, real, &BongardConfig::from_budget(b), &mut rng),
    }
}

pub fn damaged_morphology(setup: &CellSetup, scenario: ScenarioTag) -> Result<Morphology<f64>> {
    apply_damage(&setup.intact(), &scenario.into())
}

/// Runs one cell on the simulated robot and fills in the ground truth.
pub fn run_cell(setup: &CellSetup, cell: &CellId) -> Result<RunResult> {
    run_cell_with_truth(setup, cell, ground_truth)
}

/// As [`run_cell`] with a replacement ground-truth oracle.
pub fn run_cell_with_truth(setup: &CellSetup, cell: &CellId, truth: fn(&Trajectory<f64>) -> f64) -> Result<RunResult> {
    let damaged = damaged_morphology(setup, cell.scenario)?;
    let budget = setup.budget.real_tests(cell.algorithm);
    let mut robot = SimulatedRobot::new(damaged.clone(), setup.sim, setup.noise, cell.seed, budget).with_ground_truth(truth);
    let start = Instant::now();
    let mut result = execute(cell.algorithm, setup, &mut robot, cell.seed)?;
    result.wall_seconds = start.elapsed().as_secs_f64();
    result.attach_ground_truth(&robot.into_ground_truth())?;
    result.final_ground_truth = Some(truth(&simulate(&damaged, &result.final_controller, &setup.sim)));
    result.scenario = cell.scenario.to_string();
    result.seed = cell.seed;
    Ok(result)
}

fn write_cell(root: &Path, config_hash: &str, setup: &CellSetup, cell: &CellId, result: RunResult) -> Result<PathBuf> {
    let dir = cell.dir(root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let run_path = dir.join("run.jsonl");
    let file = fs::File::create(&run_path).map_err(|e| Error::io(&run_path, e))?;
    let mut out = BufWriter::new(file);
    jsonl::append(
        &mut out,
        &RunLine::Header {
            config_hash: config_hash.to_string(),
            seed: cell.seed,
            scenario: cell.scenario,
            algorithm: cell.algorithm,
        },
    )?;
    for event in &result.log {
        jsonl::append(&mut out, &RunLine::Event(event.clone()))?;
    }
    for t in &result.transfers {
        jsonl::append(&mut out, &RunLine::Transfer(t.clone()))?;
    }
    jsonl::append(
        &mut out,
        &RunLine::Footer {
            wall_seconds: result.wall_seconds,
            real_tests: result.real_tests,
        },
    )?;
    drop(out);

    let result_path = dir.join("result.json");
    let file = ResultFile {
        config_hash: config_hash.to_string(),
        seed: cell.seed,
        scenario: cell.scenario,
        algorithm: cell.algorithm,
        setup: *setup,
        result,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(&result_path, text).map_err(|e| Error::io(&result_path, e))?;
    Ok(result_path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: CellId,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub config_hash: String,
    pub completed: Vec<PathBuf>,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn cells(config: &ExperimentConfig) -> Vec<CellId> {
    let mut out = Vec::new();
    for &scenario in &config.scenarios {
        for &algorithm in &config.algorithms {
            for &seed in &config.seeds {
                out.push(CellId { scenario, algorithm, seed });
            }
        }
    }
    out
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// Runs every cell in parallel. A failing cell is recorded and skipped.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let hash = config.hash();
    let root = &config.output;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest = root.join("experiment.toml");
    let text = format!(
        "# config_hash = {hash}\n{}",
        toml::to_string(config).map_err(|e| Error::InvalidConfig(e.to_string()))?
    );
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count()?.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let setup = config.setup();
    let outcomes: Vec<(CellId, Result<PathBuf>)> = pool.install(|| {
        cells(config)
            .into_par_iter()
            .map(|cell| {
                let outcome = catch_unwind(AssertUnwindSafe(|| {
                    run_cell(&setup, &cell).and_then(|r| write_cell(root, &hash, &setup, &cell, r))
                }))
                .unwrap_or_else(|p| Err(Error::Evaluation(panic_message(&*p))));
                (cell, outcome)
            })
            .collect()
    });

    let mut summary = RunSummary {
        config_hash: hash,
        ..RunSummary::default()
    };
    for (cell, outcome) in outcomes {
        match outcome {
            Ok(path) => summary.completed.push(path),
            Err(e) => summary.failures.push(CellFailure {
                cell,
                error: e.to_string(),
            }),
        }
    }
    Ok(summary)
}

pub fn load_result(path: &Path) -> Result<ResultFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn find_results(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            find_results(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "result.json") {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub report: ComparisonReport,
    /// Human-readable notes about absent cells or seeds.
    pub missing: Vec<String>,
    pub config_hashes: BTreeSet<String>,
    pub seeds: BTreeSet<u64>,
}

impl CompareOutcome {
    fn provenance(&self) -> String {
        let hashes: Vec<&str> = self.config_hashes.iter().map(String::as_str).collect();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!("# config_hash={} seeds={}\n", hashes.join("+"), seeds.join(","))
    }

    /// Writes the CSV tables and the text report into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let head = self.provenance();
        let mut text = self.report.text();
        for m in &self.missing {
            text.push_str(&format!("missing: {m}\n"));
        }
        let files = [
            ("summary.csv", self.report.summary_csv()),
            ("pairs.csv", self.report.pairs_csv()),
            ("ratios.csv", self.report.ratio_csv()),
            ("differences.csv", self.report.difference_csv()),
            ("p_values.csv", self.report.p_value_csv()),
            ("report.txt", text),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, format!("{head}{body}")).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Loads every `result.json` below `dir` and compares final ground-truth
/// displacements, T-Resilience against each other algorithm.
pub fn compare(dir: &Path) -> Result<CompareOutcome> {
    let mut paths = Vec::new();
    find_results(dir, &mut paths)?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::NoResults(dir.to_path_buf()));
    }
    let mut groups = Groups::new();
    let mut seen: BTreeMap<(ScenarioTag, Algorithm), BTreeSet<u64>> = BTreeMap::new();
    let mut config_hashes = BTreeSet::new();
    let mut seeds = BTreeSet::new();
    let mut missing = Vec::new();
    for path in &paths {
        let file = load_result(path)?;
        config_hashes.insert(file.config_hash.clone());
        seeds.insert(file.seed);
        seen.entry((file.scenario, file.algorithm)).or_default().insert(file.seed);
        match file.result.final_ground_truth {
            Some(v) => groups
                .entry((file.scenario.to_string(), file.algorithm.name().to_string()))
                .or_default()
                .push(v),
            None => missing.push(format!("{} has no ground truth", path.display())),
        }
    }
    let scenarios: BTreeSet<ScenarioTag> = seen.keys().map(|k| k.0).collect();
    let algorithms: BTreeSet<Algorithm> = seen.keys().map(|k| k.1).collect();
    for &s in &scenarios {
        for &a in &algorithms {
            match seen.get(&(s, a)) {
                None => missing.push(format!("{s}/{a}: no runs")),
                Some(have) => {
                    let absent: Vec<String> = seeds.difference(have).map(u64::to_string).collect();
                    if !absent.is_empty() {
                        missing.push(format!("{s}/{a}: seeds {} absent", absent.join(",")));
                    }
                }
            }
        }
    }
    let focus = algorithms.contains(&Algorithm::TResilience).then_some(Algorithm::TResilience.name());
    let report = stats::compare(&groups, focus)?;
    Ok(CompareOutcome {
        report,
        missing,
        config_hashes,
        seeds,
    })
}

/// Top-view SVG of the reference gait (dashed) and the final controller of
/// a run, both on the damaged morphology of that run.
pub fn trace(path: &Path) -> Result<String> {
    let file = load_result(path)?;
    let damaged = damaged_morphology(&file.setup, file.scenario)?;
    let reference = simulate(&damaged, &reference_controller(), &file.setup.sim);
    let learned = simulate(&damaged, &file.result.final_controller, &file.setup.sim);
    let comment = format!(
        "config_hash={} seed={} scenario={} algorithm={}",
        file.config_hash, file.seed, file.scenario, file.algorithm
    );
    let label = format!("{} final controller", file.algorithm);
    Ok(svg_top_view(
        &[
            (
                &reference,
                TraceStyle {
                    label: "reference gait",
                    color: "#777777",
                    dashed: true,
                },
            ),
            (
                &learned,
                TraceStyle {
                    label: &label,
                    color: "#1f5fbf",
                    dashed: false,
                },
            ),
        ],
        &comment,
    ))
}
