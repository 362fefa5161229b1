//! The multi-round annotation loop and its on-disk artifacts.
//!
//! Each seed starts from a fresh pool and models trained on the initial
//! labeled set. A round selects `b` examples with those models, asks the
//! oracle, adapts `k` (EAOA only) and retrains both models from scratch.
//! The retrained models are the ones evaluated for the round and the ones
//! that select in the next round.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::thread;
use std::time::Instant;

use eaoa_core::baseline::{baseline_select, Strategy};
use eaoa_core::nn::{accuracy, Mlp};
use eaoa_core::pool::{synthetic_dataset, Pool};
use eaoa_core::sampler::{self, QuerySet, SamplerState};
use eaoa_core::scoring::score_pool;
use eaoa_core::seed::derive;
use eaoa_core::training::{train_classifier, train_detector};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset_file::load_dataset;
use crate::{Error, Result};

const DATA_STREAM: u64 = 0xda7a;
const SPLIT_STREAM: u64 = 0x5b17;
const DETECTOR_STREAM: u64 = 0xde7e;
const CLASSIFIER_STREAM: u64 = 0xc1a5;
const QUERY_STREAM: u64 = 0x0e51;

pub const ROUNDS_CSV_HEADER: &str =
    "round,strategy,seed,rP,k_t,test_acc,detector_acc,n_known,n_unknown,secs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    pub strategy: String,
    pub seed: u64,
    /// Fraction of the round's queries that were known-class examples.
    pub query_precision: f64,
    /// Multiplier used for this round's selection; EAOA only.
    pub k: Option<f64>,
    pub test_accuracy: f64,
    /// `(C + 1)`-way accuracy on the mixed held-out split.
    pub detector_accuracy: f64,
    /// Cumulative labeled counts after the round.
    pub n_known: usize,
    pub n_unknown: usize,
    pub secs: f64,
}

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        let k = self.k.map(|k| k.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.strategy,
            self.seed,
            self.query_precision,
            k,
            self.test_accuracy,
            self.detector_accuracy,
            self.n_known,
            self.n_unknown,
            self.secs
        )
    }
}

/// Models and sampler state carried between rounds.
#[derive(Debug, Clone)]
pub struct RoundState {
    /// Rounds completed so far.
    pub round: usize,
    pub sampler: SamplerState,
    pub detector: Mlp,
    pub classifier: Mlp,
}

/// Labeled/unlabeled partitions at the end of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub seed: u64,
    pub round: usize,
    pub labeled_known: Vec<(usize, usize)>,
    pub labeled_unknown: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl PoolSnapshot {
    pub fn capture(pool: &Pool, seed: u64, round: usize) -> Self {
        Self {
            seed,
            round,
            labeled_known: pool.labeled_known().to_vec(),
            labeled_unknown: pool.labeled_unknown().to_vec(),
            unlabeled: pool.unlabeled().to_vec(),
        }
    }
}

/// Builds the pool for one run seed. Every strategy sees the same pool for
/// the same seed.
pub fn prepare_pool(config: &ExperimentConfig, run_seed: u64) -> Result<Pool> {
    let d = &config.dataset;
    let split = d.split(derive(d.seed, SPLIT_STREAM, run_seed));
    let dataset = match d.file_path() {
        Some(path) => load_dataset(&path)?,
        None => synthetic_dataset(&d.synthetic(derive(d.seed, DATA_STREAM, run_seed)))?,
    };
    Pool::from_dataset(dataset, &split).map_err(|e| match e {
        eaoa_core::Error::InvalidParameter { field, reason } => {
            Error::config(format!("dataset.{field}"), reason)
        }
        other => other.into(),
    })
}

/// Trains both models on the current labeled pool, concurrently.
pub fn train_models(
    pool: &Pool,
    config: &ExperimentConfig,
    run_seed: u64,
    stage: usize,
) -> Result<(Mlp, Mlp)> {
    let det_seed = derive(run_seed, DETECTOR_STREAM, stage as u64);
    let cls_seed = derive(run_seed, CLASSIFIER_STREAM, stage as u64);
    let margin = config.energy.to_core();
    let (det, cls) = thread::scope(|s| {
        let det = s.spawn(|| {
            train_detector(
                pool,
                &config.detector.template(),
                &config.detector.sgd.to_core(),
                &margin,
                det_seed,
            )
        });
        let cls = train_classifier(
            pool,
            &config.classifier.template(),
            &config.classifier.sgd.to_core(),
            cls_seed,
        );
        (det.join().expect("detector training panicked"), cls)
    });
    Ok((det?.model, cls?.model))
}

impl RoundState {
    /// Sampler at `k1` and models trained on the initial labeled set.
    pub fn initial(pool: &Pool, config: &ExperimentConfig, run_seed: u64) -> Result<Self> {
        let (detector, classifier) = train_models(pool, config, run_seed, 0)?;
        Ok(Self {
            round: 0,
            sampler: SamplerState::new(&config.sampler.to_core()),
            detector,
            classifier,
        })
    }
}

/// Picks this round's queries with the current models.
pub fn select_queries(
    pool: &Pool,
    config: &ExperimentConfig,
    strategy: Strategy,
    state: &RoundState,
    run_seed: u64,
) -> Result<QuerySet> {
    let round = state.round + 1;
    match strategy {
        Strategy::Eaoa => {
            let table = score_pool(&state.detector, &state.classifier, pool, &config.scoring())?;
            Ok(sampler::select(&table, &state.sampler, config.budget)?)
        }
        other => Ok(baseline_select(
            other,
            pool,
            &state.detector,
            &state.classifier,
            config.budget,
            derive(run_seed, QUERY_STREAM, round as u64),
        )?),
    }
}

/// Runs one round. Returns `None` without touching anything when fewer
/// than `b` unlabeled examples remain.
pub fn run_round(
    pool: &mut Pool,
    config: &ExperimentConfig,
    strategy: Strategy,
    state: &mut RoundState,
    run_seed: u64,
) -> Result<Option<RoundMetrics>> {
    if pool.unlabeled().len() < config.budget {
        return Ok(None);
    }
    let started = Instant::now();
    let round = state.round + 1;
    let query = select_queries(pool, config, strategy, state, run_seed)?;
    let feedback = pool.oracle_label(&query.indices)?;
    let k = (strategy == Strategy::Eaoa).then(|| {
        let used = state.sampler.k;
        state.sampler.update_k(feedback.precision);
        used
    });
    let (detector, classifier) = train_models(pool, config, run_seed, round)?;
    state.detector = detector;
    state.classifier = classifier;
    state.round = round;

    let (test_x, test_y) = pool.test_data();
    let (eval_x, eval_y) = pool.detector_eval_data();
    let secs = if config.record_timing {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(Some(RoundMetrics {
        round,
        strategy: strategy.name().to_string(),
        seed: run_seed,
        query_precision: feedback.precision,
        k,
        test_accuracy: accuracy(&state.classifier, &test_x, &test_y)?,
        detector_accuracy: accuracy(&state.detector, &eval_x, &eval_y)?,
        n_known: pool.labeled_known().len(),
        n_unknown: pool.labeled_unknown().len(),
        secs,
    }))
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    /// Classifier accuracy before the first query.
    pub initial_test_accuracy: f64,
    pub rounds: Vec<RoundMetrics>,
    pub snapshots: Vec<PoolSnapshot>,
    pub final_state: RoundState,
}

pub fn run_seed(
    config: &ExperimentConfig,
    run_seed: u64,
    progress: &(dyn Fn(&RoundMetrics) + Sync),
) -> Result<SeedRun> {
    let strategy = config.strategy()?;
    let mut pool = prepare_pool(config, run_seed)?;
    let mut state = RoundState::initial(&pool, config, run_seed)?;
    let (test_x, test_y) = pool.test_data();
    let initial_test_accuracy = accuracy(&state.classifier, &test_x, &test_y)?;
    let mut rounds = Vec::with_capacity(config.rounds);
    let mut snapshots = Vec::new();
    for _ in 0..config.rounds {
        let Some(metrics) = run_round(&mut pool, config, strategy, &mut state, run_seed)? else {
            break;
        };
        progress(&metrics);
        if config.snapshots {
            snapshots.push(PoolSnapshot::capture(&pool, run_seed, metrics.round));
        }
        rounds.push(metrics);
    }
    Ok(SeedRun {
        seed: run_seed,
        initial_test_accuracy,
        rounds,
        snapshots,
        final_state: state,
    })
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    /// Seeds that reached this round.
    pub runs: usize,
    pub query_precision: Stat,
    pub test_accuracy: Stat,
    pub detector_accuracy: Stat,
    pub k: Option<Stat>,
    pub n_known: Stat,
    pub n_unknown: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub initial_test_accuracy: Stat,
    pub rounds: Vec<RoundSummary>,
    /// Per-seed mean query precision over rounds, summarised over seeds.
    pub mqp: Stat,
    pub final_test_accuracy: Stat,
    pub final_detector_accuracy: Stat,
}

impl Summary {
    pub fn from_runs(config: &ExperimentConfig, runs: &[SeedRun]) -> Self {
        let max_round = runs.iter().map(|r| r.rounds.len()).max().unwrap_or(0);
        let rounds = (1..=max_round)
            .map(|round| {
                let ms: Vec<&RoundMetrics> = runs
                    .iter()
                    .filter_map(|r| r.rounds.get(round - 1))
                    .collect();
                let stat = |f: &dyn Fn(&RoundMetrics) -> f64| {
                    Stat::of(&ms.iter().map(|m| f(m)).collect::<Vec<_>>())
                };
                let ks: Option<Vec<f64>> = ms.iter().map(|m| m.k).collect();
                RoundSummary {
                    round,
                    runs: ms.len(),
                    query_precision: stat(&|m| m.query_precision),
                    test_accuracy: stat(&|m| m.test_accuracy),
                    detector_accuracy: stat(&|m| m.detector_accuracy),
                    k: ks.map(|k| Stat::of(&k)),
                    n_known: stat(&|m| m.n_known as f64),
                    n_unknown: stat(&|m| m.n_unknown as f64),
                }
            })
            .collect();
        let per_seed = |f: &dyn Fn(&SeedRun) -> Option<f64>| {
            Stat::of(&runs.iter().filter_map(f).collect::<Vec<_>>())
        };
        Self {
            strategy: config.strategy.clone(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            config: config.clone(),
            initial_test_accuracy: per_seed(&|r| Some(r.initial_test_accuracy)),
            rounds,
            mqp: per_seed(&|r| {
                (!r.rounds.is_empty()).then(|| {
                    r.rounds.iter().map(|m| m.query_precision).sum::<f64>() / r.rounds.len() as f64
                })
            }),
            final_test_accuracy: per_seed(&|r| r.rounds.last().map(|m| m.test_accuracy)),
            final_detector_accuracy: per_seed(&|r| r.rounds.last().map(|m| m.detector_accuracy)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn metrics(&self) -> impl Iterator<Item = &RoundMetrics> {
        self.runs.iter().flat_map(|r| r.rounds.iter())
    }

    pub fn rounds_csv(&self) -> String {
        let mut out = String::from(ROUNDS_CSV_HEADER);
        out.push('\n');
        for m in self.metrics() {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }

    /// Seed-averaged accuracy and precision per round; round 0 is the
    /// initial labeled set.
    pub fn curves_csv(&self) -> String {
        let s = &self.summary;
        let mut out = String::from("round,n_labeled,test_acc_mean,test_acc_std,rP_mean,rP_std,detector_acc_mean,detector_acc_std\n");
        writeln!(
            out,
            "0,,{},{},,,,",
            s.initial_test_accuracy.mean, s.initial_test_accuracy.std
        )
        .expect("writing to a String");
        for r in &s.rounds {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.round,
                r.n_known.mean + r.n_unknown.mean,
                r.test_accuracy.mean,
                r.test_accuracy.std,
                r.query_precision.mean,
                r.query_precision.std,
                r.detector_accuracy.mean,
                r.detector_accuracy.std
            )
            .expect("writing to a String");
        }
        out
    }

    /// Writes `rounds.csv`, `curves.csv`, `summary.json`, `config.toml` and,
    /// when enabled, `snapshots/seed<S>_round<R>.json`.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let put = |name: &str, text: &str| {
            let path = out_dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        put("rounds.csv", &self.rounds_csv())?;
        put("curves.csv", &self.curves_csv())?;
        let mut json = serde_json::to_string_pretty(&self.summary).expect("summary serialises");
        json.push('\n');
        put("summary.json", &json)?;
        put("config.toml", &self.summary.config.to_toml_string())?;
        let snaps: Vec<&PoolSnapshot> = self.runs.iter().flat_map(|r| &r.snapshots).collect();
        if !snaps.is_empty() {
            let dir = out_dir.join("snapshots");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for snap in snaps {
                let path = dir.join(format!("seed{}_round{}.json", snap.seed, snap.round));
                let text = serde_json::to_string(snap).expect("snapshot serialises");
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

/// Runs every seed of a validated config.
pub fn run_experiment(
    config: &ExperimentConfig,
    progress: &(dyn Fn(&RoundMetrics) + Sync),
) -> Result<ExperimentResult> {
    config.validate()?;
    let runs = config
        .seeds
        .iter()
        .map(|&seed| run_seed(config, seed, progress))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_runs(config, &runs);
    Ok(ExperimentResult { runs, summary })
}

/// Runs an experiment and writes its artifacts to `out_dir`.
pub fn run_to_dir(
    config: &ExperimentConfig,
    out_dir: &Path,
    progress: &(dyn Fn(&RoundMetrics) + Sync),
) -> Result<ExperimentResult> {
    let result = run_experiment(config, progress)?;
    result.write(out_dir)?;
    Ok(result)
}
