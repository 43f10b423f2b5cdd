//! Experiment configuration, trial orchestration, result files and metrics.
//!
//! A run directory holds one (problem, algorithm) pair:
//!
//! ```text
//! manifest.json         resolved config, its hash, per-trial seeds, versions
//! history/trial_NNN.csv step,point,reward,solve_seconds,status
//! nas/trial_NNN.csv     NAS trajectories (cumulative_seconds,observed,...)
//! scores.csv            trial,seed,final_best,auc,evaluations
//! timing.csv            trial,step,solve_seconds,status (proposals only)
//! curves.csv            trial,step,reward,best,cumulative_seconds
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evo::{run_conevo, run_regevo, run_rejsample, EvoConfig, EvoInner, Sampler, SubsetPairs};
use crate::mbo::{run_mbo_from, sample_initial, History, MboConfig, MboError, MilpInner, RecordStatus};
use crate::milp::backend_by_name;
use crate::nas::{load_nas_table, run_nas_experiment, CellSpec, NasAlgorithm, NasBenchmark, NasError, SyntheticNas, Trajectory};
use crate::objectives::{
    discretize_bbob, load_bqp_objective, load_tfbind, make_constrained_ising, make_ising, make_random_mlp, BbobFunction,
    MlpArch, Objective, ObjectiveError,
};
use crate::rng::derive_seed;

pub const ENV_OUT: &str = "MBO_OUT";
pub const ENV_BACKEND: &str = "MBO_BACKEND";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("{0}")]
    Metric(String),
    #[error("{path}: {msg}")]
    Results { path: String, msg: String },
    #[error(transparent)]
    Mbo(#[from] MboError),
    #[error(transparent)]
    Nas(#[from] NasError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// True for errors caused by bad input rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            HarnessError::Validation(_) | HarnessError::Metric(_) | HarnessError::Results { .. } | HarnessError::Json(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    RandomMlp {
        arch: MlpArch,
        n: usize,
        alphabet_size: usize,
        seed: u64,
    },
    Ising {
        n: usize,
        seed: u64,
        /// Number of subset-equality pairs (size 5); absent for the
        /// unconstrained problem.
        #[serde(default)]
        subset_pairs: Option<usize>,
    },
    Bbob {
        function: BbobFunction,
        n: usize,
        m: usize,
    },
    Tfbind {
        path: PathBuf,
    },
    Bqp {
        path: PathBuf,
    },
    Nas {
        #[serde(default)]
        cell: CellSpec,
        /// Table file; the synthetic benchmark is used when absent.
        #[serde(default)]
        table: Option<PathBuf>,
        #[serde(default)]
        synthetic_seed: u64,
        time_budget: f64,
    },
}

impl ProblemSpec {
    pub fn default_name(&self) -> String {
        let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match self {
            ProblemSpec::RandomMlp {
                arch,
                n,
                alphabet_size,
                seed,
            } => {
                let a = match arch {
                    MlpArch::Fcc => "fcc",
                    MlpArch::Cnn => "cnn",
                };
                format!("random_mlp_{a}_n{n}_a{alphabet_size}_s{seed}")
            }
            ProblemSpec::Ising { n, seed, subset_pairs } => match subset_pairs {
                Some(k) => format!("ising_n{n}_k{k}_s{seed}"),
                None => format!("ising_n{n}_s{seed}"),
            },
            ProblemSpec::Bbob { function, n, m } => format!("bbob_{}_n{n}_m{m}", function.name()),
            ProblemSpec::Tfbind { path } => format!("tfbind_{}", stem(path)),
            ProblemSpec::Bqp { path } => format!("bqp_{}", stem(path)),
            ProblemSpec::Nas {
                cell,
                table,
                synthetic_seed,
                ..
            } => {
                let src = match table {
                    Some(p) => stem(p),
                    None => format!("synthetic{synthetic_seed}"),
                };
                let sym = if cell.symmetry_breaking { "_sym" } else { "" };
                format!("nas_v{}_e{}{sym}_{src}", cell.v, cell.max_edges)
            }
        }
    }

    fn files(&self) -> Vec<&Path> {
        match self {
            ProblemSpec::Tfbind { path } | ProblemSpec::Bqp { path } => vec![path.as_path()],
            ProblemSpec::Nas { table: Some(p), .. } => vec![p.as_path()],
            _ => Vec::new(),
        }
    }

    fn is_nas(&self) -> bool {
        matches!(self, ProblemSpec::Nas { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NnMilp,
    NnRegevo,
    NnConevo,
    Regevo,
    Conevo,
    Rejsample,
    /// NAS only.
    RandomSearch,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::NnMilp,
        Algorithm::NnRegevo,
        Algorithm::NnConevo,
        Algorithm::Regevo,
        Algorithm::Conevo,
        Algorithm::Rejsample,
        Algorithm::RandomSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::NnMilp => "nn_milp",
            Algorithm::NnRegevo => "nn_regevo",
            Algorithm::NnConevo => "nn_conevo",
            Algorithm::Regevo => "regevo",
            Algorithm::Conevo => "conevo",
            Algorithm::Rejsample => "rejsample",
            Algorithm::RandomSearch => "random_search",
        }
    }
}

/// Inner-loop sizes for the heuristic acquisition solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSettings {
    pub evo_budget: usize,
    pub evo_batch: usize,
    pub samples: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            evo_budget: 10_000,
            evo_batch: 100,
            samples: crate::evo::DEFAULT_SAMPLES_PER_STEP,
        }
    }
}

/// JSON experiment description. `mbo.budget` and `mbo.seed` are replaced by
/// `budget` and the per-trial seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    #[serde(default = "one")]
    pub trials: usize,
    /// Evaluations per trial, initial points included. Ignored for NAS,
    /// which is bounded by `time_budget`.
    #[serde(default)]
    pub budget: usize,
    /// Base seed; trial `t` uses `derive_seed(seed, t)` unless `seeds` is given.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub out_dir: PathBuf,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub mbo: MboConfig,
    /// Outer evolution settings; algorithm presets when absent.
    #[serde(default)]
    pub evo: Option<EvoConfig>,
    #[serde(default)]
    pub inner: InnerSettings,
}

fn one() -> usize {
    1
}

fn default_backend() -> String {
    "highs".into()
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Parse, then resolve relative problem files against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let mut cfg = Self::from_json_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && base.join(&*p).exists() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.problem {
            ProblemSpec::Tfbind { path } | ProblemSpec::Bqp { path } => fix(path),
            ProblemSpec::Nas { table: Some(p), .. } => fix(p),
            _ => {}
        }
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, out: Option<String>, backend: Option<String>) {
        if let Some(o) = out.filter(|s| !s.is_empty()) {
            self.out_dir = PathBuf::from(o);
        }
        if let Some(b) = backend.filter(|s| !s.is_empty()) {
            self.backend = b;
        }
    }

    /// `MBO_OUT` and `MBO_BACKEND`.
    pub fn apply_env(&mut self) {
        self.apply_overrides(std::env::var(ENV_OUT).ok(), std::env::var(ENV_BACKEND).ok());
    }

    pub fn problem_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.problem.default_name())
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.trials as u64).map(|t| derive_seed(self.seed, t)).collect(),
        }
    }

    fn mbo_for(&self, seed: u64) -> MboConfig {
        MboConfig {
            budget: self.budget,
            seed,
            ..self.mbo.clone()
        }
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        if self.trials == 0 {
            errs.push("trials must be at least 1".to_string());
        }
        if self.workers == 0 {
            errs.push("workers must be at least 1".to_string());
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.trials {
                errs.push(format!("{} seeds given for {} trials", s.len(), self.trials));
            }
        }
        if let Err(e) = backend_by_name(&self.backend) {
            errs.push(e.to_string());
        }
        for f in self.problem.files() {
            if !f.is_file() {
                errs.push(format!("file not found: {}", f.display()));
            }
        }
        let nas = self.problem.is_nas();
        let paired = matches!(self.problem, ProblemSpec::Ising { subset_pairs: Some(_), .. });
        let constrained = paired || matches!(self.problem, ProblemSpec::Bqp { .. });
        let alg = self.algorithm;
        if nas && !matches!(alg, Algorithm::NnMilp | Algorithm::Regevo | Algorithm::RandomSearch) {
            errs.push(format!("{} is not available for NAS (use nn_milp, regevo or random_search)", alg.as_str()));
        }
        if !nas && alg == Algorithm::RandomSearch {
            errs.push("random_search is only available for NAS".to_string());
        }
        if matches!(alg, Algorithm::Conevo | Algorithm::NnConevo) && !paired {
            errs.push(format!("{} needs an Ising problem with subset_pairs", alg.as_str()));
        }
        if !nas && alg == Algorithm::Regevo && constrained {
            errs.push("regevo ignores constraints; use conevo on constrained problems".to_string());
        }
        match &self.problem {
            ProblemSpec::Nas { time_budget, cell, .. } => {
                if !(*time_budget > 0.0) {
                    errs.push("nas time_budget must be positive".to_string());
                }
                if let Err(e) = cell.validate() {
                    errs.push(e.to_string());
                }
            }
            ProblemSpec::Ising { n, subset_pairs: Some(k), .. } => {
                if *k == 0 || n % (10 * k) != 0 {
                    errs.push(format!("ising n={n} must be divisible by 10*subset_pairs={}", 10 * k));
                }
            }
            ProblemSpec::Bbob { m, n, .. } if *m < 2 || *n == 0 => errs.push("bbob needs n >= 1 and m >= 2".to_string()),
            ProblemSpec::RandomMlp { n, alphabet_size, .. } if *n == 0 || *alphabet_size == 0 => {
                errs.push("random_mlp needs n >= 1 and alphabet_size >= 1".to_string())
            }
            _ => {}
        }
        if !nas {
            if self.budget == 0 {
                errs.push("budget must be positive".to_string());
            }
            if let Err(e) = self.mbo_for(self.seed).validate() {
                errs.push(e.to_string());
            }
        } else if let Err(e) = self.mbo.train.validate() {
            errs.push(e.to_string());
        }
        if let Some(e) = &self.evo {
            if let Err(e) = e.validate() {
                errs.push(e.to_string());
            }
        }
        if self.inner.evo_batch == 0 || self.inner.evo_budget < self.inner.evo_batch {
            errs.push("inner.evo_budget must be at least inner.evo_batch >= 1".to_string());
        }
        if self.inner.samples == 0 {
            errs.push("inner.samples must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(errs))
        }
    }

    /// SHA-256 of the config without its output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        hex(&Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Objective (or NAS benchmark) ready for trials.
pub enum Problem {
    Black {
        objective: Objective,
        pairs: Option<SubsetPairs>,
    },
    Nas {
        spec: CellSpec,
        bench: Box<dyn NasBenchmark + Send + Sync>,
        time_budget: f64,
    },
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Problem, HarnessError> {
    let black = |objective: Objective| Problem::Black { objective, pairs: None };
    Ok(match spec {
        ProblemSpec::RandomMlp {
            arch,
            n,
            alphabet_size,
            seed,
        } => black(make_random_mlp(*arch, *n, *alphabet_size, *seed)?),
        ProblemSpec::Ising { n, seed, subset_pairs } => match subset_pairs {
            Some(k) => {
                let (objective, pairs) = make_constrained_ising(*n, *k, *seed)?;
                Problem::Black {
                    objective,
                    pairs: Some(pairs),
                }
            }
            None => black(make_ising(*n, *seed)?),
        },
        ProblemSpec::Bbob { function, n, m } => black(discretize_bbob(*function, *n, *m)?),
        ProblemSpec::Tfbind { path } => {
            let (obj, dups) = load_tfbind(path)?;
            if dups > 0 {
                log::warn!("{}: {dups} duplicate sequences, last value kept", path.display());
            }
            black(obj)
        }
        ProblemSpec::Bqp { path } => black(load_bqp_objective(path)?),
        ProblemSpec::Nas {
            cell,
            table,
            synthetic_seed,
            time_budget,
        } => Problem::Nas {
            spec: cell.clone(),
            bench: match table {
                Some(p) => Box::new(load_nas_table(p)?),
                None => Box::new(SyntheticNas {
                    seed: *synthetic_seed,
                    ..SyntheticNas::default()
                }),
            },
            time_budget: *time_budget,
        },
    })
}

/// Outcome of one trial.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub history: Option<History>,
    pub trajectory: Option<Trajectory>,
}

impl TrialResult {
    /// Observed reward per evaluation.
    pub fn rewards(&self) -> Vec<f64> {
        match (&self.history, &self.trajectory) {
            (Some(h), _) => h.rewards(),
            (None, Some(t)) => t.iter().map(|p| p.observed).collect(),
            _ => Vec::new(),
        }
    }

    /// Best-so-far curve: running max of rewards, or the incumbent's test
    /// accuracy for NAS.
    pub fn curve(&self) -> Vec<f64> {
        match (&self.history, &self.trajectory) {
            (Some(h), _) => running_max(&h.rewards()),
            (None, Some(t)) => t.iter().map(|p| p.incumbent_test).collect(),
            _ => Vec::new(),
        }
    }
}

fn initial_points(
    objective: &Objective,
    mbo: &MboConfig,
    backend: &str,
) -> Result<Vec<crate::domain::Point>, HarnessError> {
    let b = backend_by_name(backend).map_err(MboError::from)?;
    Ok(sample_initial(
        &objective.domain,
        mbo.init_count,
        mbo.init_strategy,
        derive_seed(mbo.seed, 0x1417),
        mbo.max_draws,
        b.as_ref(),
    )?)
}

pub fn run_trial(cfg: &ExperimentConfig, problem: &Problem, trial: usize, seed: u64) -> Result<TrialResult, HarnessError> {
    let mbo = cfg.mbo_for(seed);
    match problem {
        Problem::Nas {
            spec,
            bench,
            time_budget,
        } => {
            let alg = match cfg.algorithm {
                Algorithm::NnMilp => NasAlgorithm::NnMilp {
                    mbo: mbo.clone(),
                    backend: cfg.backend.clone(),
                },
                Algorithm::Regevo => NasAlgorithm::regevo(),
                Algorithm::RandomSearch => NasAlgorithm::RandomSearch,
                other => {
                    return Err(HarnessError::Validation(vec![format!("{} is not available for NAS", other.as_str())]))
                }
            };
            let t = run_nas_experiment(&alg, spec, bench.as_ref(), *time_budget, seed)?;
            Ok(TrialResult {
                trial,
                seed,
                history: None,
                trajectory: Some(t),
            })
        }
        Problem::Black { objective, pairs } => {
            let init = initial_points(objective, &mbo, &cfg.backend)?;
            let domain = &objective.domain;
            let mut f = objective;
            let evo_cfg = |preset: EvoConfig| EvoConfig {
                seed,
                ..cfg.evo.clone().unwrap_or(preset)
            };
            let need_pairs = || {
                pairs
                    .clone()
                    .ok_or_else(|| HarnessError::Validation(vec!["algorithm needs subset pairs".into()]))
            };
            let h = match cfg.algorithm {
                Algorithm::NnMilp => {
                    let backend = backend_by_name(&cfg.backend).map_err(MboError::from)?;
                    let mut inner = MilpInner::new(backend, &mbo);
                    run_mbo_from(&mut f, domain, &mbo, &mut inner, init)?
                }
                Algorithm::NnRegevo | Algorithm::NnConevo => {
                    let mut inner = if cfg.algorithm == Algorithm::NnRegevo {
                        EvoInner::regevo()
                    } else {
                        EvoInner::conevo(need_pairs()?)
                    };
                    inner.budget = cfg.inner.evo_budget;
                    inner.batch = cfg.inner.evo_batch;
                    inner.max_draws = mbo.max_draws;
                    run_mbo_from(&mut f, domain, &mbo, &mut inner, init)?
                }
                Algorithm::Regevo => run_regevo(&mut f, domain, cfg.budget, &evo_cfg(EvoConfig::regevo()), init)?,
                Algorithm::Conevo => {
                    run_conevo(&mut f, domain, &need_pairs()?, cfg.budget, &evo_cfg(EvoConfig::conevo()), init)?
                }
                Algorithm::Rejsample => {
                    let sampler = match pairs {
                        Some(p) => Sampler::SubsetEquality(p.clone()),
                        None => Sampler::Rejection {
                            max_draws: mbo.max_draws,
                        },
                    };
                    run_rejsample(&mut f, domain, &mbo, cfg.inner.samples, sampler, init)?
                }
                Algorithm::RandomSearch => {
                    return Err(HarnessError::Validation(vec!["random_search is only available for NAS".into()]))
                }
            };
            Ok(TrialResult {
                trial,
                seed,
                history: Some(h),
                trajectory: None,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub problem: String,
    pub algorithm: Algorithm,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub versions: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let p = dir.as_ref().join("manifest.json");
        let text = fs::read_to_string(&p).map_err(|e| HarnessError::Results {
            path: p.display().to_string(),
            msg: e.to_string(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Summary of a finished run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub trials: Vec<TrialResult>,
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, data)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn trajectory_csv(t: &Trajectory) -> String {
    let mut s = String::from("query,cumulative_seconds,observed,incumbent_validation,incumbent_test,hash\n");
    for (i, p) in t.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            p.cumulative_seconds,
            p.observed,
            p.incumbent_validation,
            p.incumbent_test,
            p.hash
        ));
    }
    s
}

fn write_trial(dir: &Path, problem: &Problem, r: &TrialResult) -> Result<(), HarnessError> {
    match (problem, &r.history, &r.trajectory) {
        (Problem::Black { objective, .. }, Some(h), _) => {
            write_atomic(
                &dir.join("history").join(format!("trial_{:03}.csv", r.trial)),
                h.to_csv_string(&objective.domain).as_bytes(),
            )?;
        }
        (_, _, Some(t)) => {
            write_atomic(&dir.join("nas").join(format!("trial_{:03}.csv", r.trial)), trajectory_csv(t).as_bytes())?;
        }
        _ => {}
    }
    Ok(())
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("nnmilp".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest_format".to_string(), "1".to_string()),
    ])
}

/// Validate everything, then run the trials (in parallel with `workers`
/// threads) and write the run directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let problem = build_problem(&cfg.problem)?;
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(dir.join(if cfg.problem.is_nas() { "nas" } else { "history" }))?;
    let seeds = cfg.trial_seeds();
    let manifest = Manifest {
        problem: cfg.problem_name(),
        algorithm: cfg.algorithm,
        config_hash: cfg.hash(),
        seeds: seeds.clone(),
        versions: versions(),
        config: cfg.clone(),
    };
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;

    let job = |t: usize| -> Result<TrialResult, HarnessError> {
        let r = run_trial(cfg, &problem, t, seeds[t])?;
        write_trial(&dir, &problem, &r)?;
        log::info!("{} {}: trial {t} done", manifest.problem, cfg.algorithm.as_str());
        Ok(r)
    };
    let results: Vec<Result<TrialResult, HarnessError>> = if cfg.workers > 1 && cfg.trials > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))?;
        pool.install(|| (0..cfg.trials).into_par_iter().map(job).collect())
    } else {
        (0..cfg.trials).map(job).collect()
    };
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    write_atomic(&dir.join("scores.csv"), scores_csv(&trials).as_bytes())?;
    write_atomic(&dir.join("timing.csv"), timing_csv(&trials).as_bytes())?;
    write_atomic(&dir.join("curves.csv"), curves_csv(&trials).as_bytes())?;
    Ok(RunSummary { dir, manifest, trials })
}

fn scores_csv(trials: &[TrialResult]) -> String {
    let mut s = String::from("trial,seed,final_best,auc,evaluations\n");
    for r in trials {
        let c = r.curve();
        let last = c.last().copied().unwrap_or(f64::NAN);
        s.push_str(&format!("{},{},{},{},{}\n", r.trial, r.seed, last, auc_score(&c), c.len()));
    }
    s
}

fn timing_csv(trials: &[TrialResult]) -> String {
    let mut s = String::from("trial,step,solve_seconds,status\n");
    for r in trials {
        if let Some(h) = &r.history {
            for (i, rec) in h.records.iter().enumerate() {
                if rec.status != RecordStatus::Initial {
                    s.push_str(&format!("{},{},{},{}\n", r.trial, i + 1, rec.solve_seconds, rec.status));
                }
            }
        }
    }
    s
}

fn curves_csv(trials: &[TrialResult]) -> String {
    let mut s = String::from("trial,step,reward,best,cumulative_seconds\n");
    for r in trials {
        let rewards = r.rewards();
        let curve = r.curve();
        for (i, (x, b)) in rewards.iter().zip(&curve).enumerate() {
            let secs = r
                .trajectory
                .as_ref()
                .map(|t| t[i].cumulative_seconds.to_string())
                .unwrap_or_default();
            s.push_str(&format!("{},{},{x},{b},{secs}\n", r.trial, i + 1));
        }
    }
    s
}

fn running_max(xs: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    xs.iter()
        .map(|&x| {
            best = best.max(x);
            best
        })
        .collect()
}

/// `(step, best reward so far)` with 1-based steps.
pub fn best_reward_curve(h: &History) -> Result<Vec<(usize, f64)>, HarnessError> {
    if h.is_empty() {
        return Err(HarnessError::Metric("empty history".into()));
    }
    Ok(running_max(&h.rewards()).into_iter().enumerate().map(|(i, b)| (i + 1, b)).collect())
}

/// Min/max normalization across algorithms; all-equal means map to 1.
pub fn normalized_scores(means: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, HarnessError> {
    if means.len() < 2 {
        return Err(HarnessError::Metric(format!(
            "normalized scores need at least 2 algorithms, got {}",
            means.len()
        )));
    }
    if let Some((k, _)) = means.iter().find(|(_, v)| !v.is_finite()) {
        return Err(HarnessError::Metric(format!("non-finite mean for {k}")));
    }
    let lo = means.values().copied().fold(f64::INFINITY, f64::min);
    let hi = means.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(means
        .iter()
        .map(|(k, &v)| {
            let s = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 };
            (k.clone(), s)
        })
        .collect())
}

/// Discrete area under a best-so-far curve.
pub fn auc_score(curve: &[f64]) -> f64 {
    curve.iter().sum()
}

pub fn primal_gap(v: f64, v_star: f64) -> f64 {
    if v == 0.0 && v_star == 0.0 {
        return 0.0;
    }
    if v != 0.0 && v_star != 0.0 && v.signum() != v_star.signum() {
        return 1.0;
    }
    (v - v_star).abs() / v.abs().max(v_star.abs())
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ScoreRow {
    pub trial: usize,
    pub seed: u64,
    pub final_best: f64,
    pub auc: f64,
    pub evaluations: usize,
}

pub fn read_scores(dir: impl AsRef<Path>) -> Result<Vec<ScoreRow>, HarnessError> {
    let p = dir.as_ref().join("scores.csv");
    let err = |msg: String| HarnessError::Results {
        path: p.display().to_string(),
        msg,
    };
    let mut rdr = csv::Reader::from_path(&p).map_err(|e| err(e.to_string()))?;
    rdr.deserialize().map(|r| r.map_err(|e| err(e.to_string()))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreTableRow {
    pub problem: String,
    pub algorithm: String,
    pub trials: usize,
    pub mean_final_best: f64,
    pub normalized_score: f64,
    pub mean_auc: f64,
    pub normalized_auc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreTableRow>,
}

impl ScoreTable {
    /// Group runs by problem; every problem needs at least two algorithms.
    pub fn from_runs(runs: &[(Manifest, Vec<ScoreRow>)]) -> Result<Self, HarnessError> {
        let mut by_problem: BTreeMap<&str, BTreeMap<String, &[ScoreRow]>> = BTreeMap::new();
        for (m, rows) in runs {
            if rows.is_empty() {
                return Err(HarnessError::Metric(format!("{} {}: no trials", m.problem, m.algorithm.as_str())));
            }
            let slot = by_problem.entry(&m.problem).or_default();
            if slot.insert(m.algorithm.as_str().to_string(), rows).is_some() {
                return Err(HarnessError::Metric(format!(
                    "{} {}: more than one run directory",
                    m.problem,
                    m.algorithm.as_str()
                )));
            }
        }
        let mut out = Vec::new();
        for (problem, algs) in by_problem {
            let mean = |f: &dyn Fn(&ScoreRow) -> f64| -> BTreeMap<String, f64> {
                algs.iter()
                    .map(|(a, rows)| (a.clone(), rows.iter().map(f).sum::<f64>() / rows.len() as f64))
                    .collect()
            };
            let finals = mean(&|r| r.final_best);
            let aucs = mean(&|r| r.auc);
            let ns = normalized_scores(&finals).map_err(|e| HarnessError::Metric(format!("{problem}: {e}")))?;
            let na = normalized_scores(&aucs).map_err(|e| HarnessError::Metric(format!("{problem}: {e}")))?;
            for (a, rows) in &algs {
                out.push(ScoreTableRow {
                    problem: problem.to_string(),
                    algorithm: a.clone(),
                    trials: rows.len(),
                    mean_final_best: finals[a],
                    normalized_score: ns[a],
                    mean_auc: aucs[a],
                    normalized_auc: na[a],
                });
            }
        }
        Ok(Self { rows: out })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }
}

pub fn score_dirs<P: AsRef<Path>>(dirs: &[P]) -> Result<ScoreTable, HarnessError> {
    let mut runs = Vec::new();
    for d in dirs {
        runs.push((Manifest::load(d)?, read_scores(d)?));
    }
    ScoreTable::from_runs(&runs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BestKnown {
    Value(f64),
    FromInstance,
}

impl std::str::FromStr for BestKnown {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "from-instance" {
            return Ok(BestKnown::FromInstance);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(BestKnown::Value)
            .ok_or_else(|| format!("expected a number or from-instance, got {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub trial: usize,
    pub best: f64,
    pub best_known: f64,
    pub gap: f64,
}

pub fn gap_report(dir: impl AsRef<Path>, best_known: BestKnown) -> Result<Vec<GapRow>, HarnessError> {
    let dir = dir.as_ref();
    let v_star = match best_known {
        BestKnown::Value(v) => v,
        BestKnown::FromInstance => {
            let m = Manifest::load(dir)?;
            let optimum = match build_problem(&m.config.problem)? {
                Problem::Black { objective, .. } => objective.optimum,
                Problem::Nas { .. } => None,
            };
            optimum.ok_or_else(|| HarnessError::Metric(format!("{}: instance carries no best-known value", m.problem)))?
        }
    };
    Ok(read_scores(dir)?
        .into_iter()
        .map(|r| GapRow {
            trial: r.trial,
            best: r.final_best,
            best_known: v_star,
            gap: primal_gap(r.final_best, v_star),
        })
        .collect())
}

pub fn gap_csv(rows: &[GapRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

#[derive(Deserialize)]
struct CurveRow {
    trial: usize,
    step: usize,
    #[allow(dead_code)]
    reward: f64,
    best: f64,
    cumulative_seconds: Option<f64>,
}

/// Write `curve_mean.csv` (per-step mean and standard error over trials)
/// and, for NAS runs, `curve_time.csv` on a 100-point time grid. Returns
/// the written paths.
pub fn plotdata(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = dir.as_ref();
    let p = dir.join("curves.csv");
    let err = |msg: String| HarnessError::Results {
        path: p.display().to_string(),
        msg,
    };
    let mut rdr = csv::Reader::from_path(&p).map_err(|e| err(e.to_string()))?;
    let mut per_trial: BTreeMap<usize, Vec<(usize, f64, Option<f64>)>> = BTreeMap::new();
    for row in rdr.deserialize::<CurveRow>() {
        let r = row.map_err(|e| err(e.to_string()))?;
        per_trial.entry(r.trial).or_default().push((r.step, r.best, r.cumulative_seconds));
    }
    let mut out = Vec::new();
    let max_len = per_trial.values().map(Vec::len).max().unwrap_or(0);
    let mut s = String::from("step,trials,mean_best,stderr\n");
    for step in 1..=max_len {
        let vals: Vec<f64> = per_trial
            .values()
            .filter_map(|c| c.iter().find(|(t, _, _)| *t == step).map(|x| x.1))
            .collect();
        let (m, se) = mean_stderr(&vals);
        s.push_str(&format!("{step},{},{m},{se}\n", vals.len()));
    }
    let path = dir.join("curve_mean.csv");
    write_atomic(&path, s.as_bytes())?;
    out.push(path);

    let timed = per_trial.values().all(|c| c.iter().all(|x| x.2.is_some())) && !per_trial.is_empty();
    if timed {
        let t_max = per_trial
            .values()
            .flat_map(|c| c.iter().filter_map(|x| x.2))
            .fold(0.0, f64::max);
        let mut s = String::from("seconds,trials,mean_best,stderr\n");
        for g in 1..=100 {
            let t = t_max * g as f64 / 100.0;
            let vals: Vec<f64> = per_trial
                .values()
                .filter_map(|c| c.iter().rev().find(|x| x.2.is_some_and(|s| s <= t)).map(|x| x.1))
                .collect();
            let (m, se) = mean_stderr(&vals);
            s.push_str(&format!("{t},{},{m},{se}\n", vals.len()));
        }
        let path = dir.join("curve_time.csv");
        write_atomic(&path, s.as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
