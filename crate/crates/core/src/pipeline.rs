//! The end-to-end workflow as stages over a working directory.
//!
//! Every stage reads the files written by earlier stages and writes its own,
//! so stages can be run one at a time or all at once with [`run_all`]. All
//! randomness is derived from [`RunConfig::seed`].
//!
//! | stage      | reads                         | writes |
//! |------------|-------------------------------|--------|
//! | sample     |                               | `design.csv` |
//! | simulate   | `design.csv` or an ingest CSV | `dataset.csv` |
//! | hpo        | `dataset.csv`                 | `hpo_trials.csv`, `hpo_best_per_depth.csv` |
//! | train      | `dataset.csv`, `hpo_trials.csv` if present | `model.json`, `train_metrics.json` |
//! | optimize   | `model.json`                  | `solutions_<algo>.csv`, `stats_<algo>.csv` |
//! | validate   | `model.json`, solutions       | `report/validation.csv` |
//! | report     | `dataset.csv`, `model.json`, solutions | `report/{pareto,parallel_coords}.csv`, `report/parallel_coords.meta.json`, `report/violin.json`, `report/stats.csv` |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, Sample, ScaledData};
use crate::ensemble::{self, EnsembleModel};
use crate::error::{Error, Result};
use crate::hpo::{self, SearchMethod};
use crate::io;
use crate::neural::{self, ArchBounds, Architecture, TrainConfig};
use crate::nsga::{self, Algorithm, GaConfig, Solution};
use crate::objectives::{ObjectiveTable, ObjectiveVector};
use crate::oracle::{self, Predictor};
use crate::report;
use crate::rng::derive_seed;
use crate::space::{self, DesignMatrix, ParameterSpace};

pub const CONFIG_VERSION: u32 = 1;

/// Architecture used when neither the configuration nor a search names one.
pub const DEFAULT_HIDDEN: [usize; 3] = [32, 32, 32];

/// Stream identifiers for [`derive_seed`].
mod stream {
    pub const SAMPLE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const HPO: u64 = 3;
    pub const ENSEMBLE: u64 = 4;
    pub const GA: u64 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStage {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoStage {
    pub trials: usize,
    pub folds: usize,
    pub method: SearchMethod,
    pub bounds: ArchBounds,
    /// Epochs per fold during the search.
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStage {
    /// Hidden widths; when absent the best searched architecture is used,
    /// or `DEFAULT_HIDDEN` if no search was run.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    pub members: usize,
    pub test_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeStage {
    pub algorithms: Vec<Algorithm>,
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    pub granularity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateStage {
    pub candidates: usize,
}

/// Parameters of every stage. Paths are resolved relative to the working
/// directory of the process, not the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    /// Parameter space JSON; the floating-zone space when absent.
    #[serde(default)]
    pub space: Option<PathBuf>,
    /// Objective table JSON; the floating-zone table when absent.
    #[serde(default)]
    pub objectives: Option<PathBuf>,
    pub sample: SampleStage,
    pub hpo: HpoStage,
    pub train: TrainStage,
    pub optimize: OptimizeStage,
    pub validate: ValidateStage,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let desk = profile == Profile::Desk;
        RunConfig {
            version: CONFIG_VERSION,
            seed: 42,
            space: None,
            objectives: None,
            sample: SampleStage {
                samples: if desk { 1000 } else { 2500 },
            },
            hpo: HpoStage {
                trials: if desk { 100 } else { 1000 },
                folds: 10,
                method: SearchMethod::Tpe,
                bounds: ArchBounds::default(),
                epochs: if desk { 10 } else { 100 },
            },
            train: TrainStage {
                hidden: None,
                members: 10,
                test_fraction: 0.1,
                epochs: 100,
                learning_rate: 1e-3,
                batch_size: 32,
            },
            optimize: OptimizeStage {
                algorithms: vec![Algorithm::Nsga2, Algorithm::Nsga3],
                population: if desk { 100 } else { 500 },
                generations: if desk { 50 } else { 250 },
                crossover_prob: 0.7,
                mutation_prob: 0.05,
                eta_c: 15.0,
                eta_m: 20.0,
                granularity: if desk { 3 } else { 12 },
            },
            validate: ValidateStage { candidates: 6 },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = io::read_json(path)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Same text as [`RunConfig::save`] writes.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data always serialises")
    }

    pub fn check(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.sample.samples == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.train.test_fraction) {
            return Err(Error::Config(format!(
                "test fraction {} outside [0, 1)",
                self.train.test_fraction
            )));
        }
        if self.train.members == 0 {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        if self.hpo.folds < 2 {
            return Err(Error::Config("cross-validation needs at least two folds".into()));
        }
        self.hpo.bounds.check()?;
        self.train_config(0).check()?;
        for &algo in &self.optimize.algorithms {
            self.ga_config(algo).check()?;
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn ga_config(&self, algorithm: Algorithm) -> GaConfig {
        let o = &self.optimize;
        let index = match algorithm {
            Algorithm::Nsga2 => 0,
            Algorithm::Nsga3 => 1,
        };
        GaConfig {
            population: o.population,
            generations: o.generations,
            crossover_prob: o.crossover_prob,
            mutation_prob: o.mutation_prob,
            eta_c: o.eta_c,
            eta_m: o.eta_m,
            algorithm,
            granularity: o.granularity,
            seed: derive_seed(derive_seed(self.seed, stream::GA), index),
        }
    }

    pub fn parameter_space(&self) -> Result<ParameterSpace> {
        match &self.space {
            Some(p) => ParameterSpace::load(p),
            None => Ok(ParameterSpace::floating_zone()),
        }
    }

    pub fn objective_table(&self) -> Result<ObjectiveTable> {
        match &self.objectives {
            Some(p) => ObjectiveTable::load(p),
            None => Ok(ObjectiveTable::floating_zone().clone()),
        }
    }
}

/// File locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn design(&self) -> PathBuf {
        self.root.join("design.csv")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }

    pub fn hpo_trials(&self) -> PathBuf {
        self.root.join("hpo_trials.csv")
    }

    pub fn hpo_best(&self) -> PathBuf {
        self.root.join("hpo_best_per_depth.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }

    pub fn train_metrics(&self) -> PathBuf {
        self.root.join("train_metrics.json")
    }

    pub fn solutions(&self, algo: Algorithm) -> PathBuf {
        self.root.join(format!("solutions_{algo}.csv"))
    }

    pub fn stats(&self, algo: Algorithm) -> PathBuf {
        self.root.join(format!("stats_{algo}.csv"))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{stage}: missing input {}; run the earlier stage first",
            path.display()
        )))
    }
}

pub fn sample(cfg: &RunConfig, dir: &RunDir) -> Result<DesignMatrix> {
    let space = cfg.parameter_space()?;
    let design = space::lhs_sample(&space, cfg.sample.samples, derive_seed(cfg.seed, stream::SAMPLE))?;
    design.write_csv(&dir.design())?;
    Ok(design)
}

/// Evaluates `design.csv` with the proxy simulator, or takes externally
/// computed results from `ingest`.
pub fn simulate(cfg: &RunConfig, dir: &RunDir, ingest: Option<&Path>) -> Result<Dataset> {
    let data = match ingest {
        Some(path) => Dataset::ingest_csv(path)?,
        None => {
            require(&dir.design(), "simulate")?;
            let design = DesignMatrix::read_csv(&dir.design(), &cfg.parameter_space()?)?;
            dataset::simulate_design(&design.rows)?
        }
    };
    log::info!(
        "{} samples, {:.2}% non-physical",
        data.len(),
        100.0 * data.infeasible_fraction()
    );
    data.write_csv(&dir.dataset())?;
    Ok(data)
}

/// The physical rows split into training and test sets, and the training
/// set scaled with a scaler fitted on it alone.
pub struct Split<'a> {
    pub train: Vec<&'a Sample>,
    pub test: Vec<&'a Sample>,
    pub scaled_train: ScaledData,
    pub scaler: space::Scaler,
}

pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<Split<'_>> {
    let rows = data.training_view();
    if rows.len() < 2 {
        return Err(Error::Empty("physical samples"));
    }
    let (train_idx, test_idx) = dataset::train_test_split(rows.len(), test_fraction, seed);
    let train: Vec<&Sample> = train_idx.iter().map(|&i| rows[i]).collect();
    let test: Vec<&Sample> = test_idx.iter().map(|&i| rows[i]).collect();
    let (scaled_train, scaler) = dataset::scale_fit_transform(&train)?;
    Ok(Split {
        train,
        test,
        scaled_train,
        scaler,
    })
}

fn load_dataset(dir: &RunDir, stage: &str) -> Result<Dataset> {
    require(&dir.dataset(), stage)?;
    Dataset::ingest_csv(&dir.dataset())
}

/// Architecture search on the training split.
pub fn search(cfg: &RunConfig, dir: &RunDir) -> Result<hpo::HpoReport> {
    let data = load_dataset(dir, "hpo")?;
    let s = split(&data, cfg.train.test_fraction, derive_seed(cfg.seed, stream::SPLIT))?;
    let train_cfg = TrainConfig {
        epochs: cfg.hpo.epochs,
        ..cfg.train_config(0)
    };
    let report = hpo::search_architectures(
        &cfg.hpo.bounds,
        cfg.hpo.trials,
        cfg.hpo.method,
        &s.scaled_train,
        cfg.hpo.folds,
        derive_seed(cfg.seed, stream::HPO),
        &train_cfg,
    )?;
    hpo::write_trials_csv(&dir.hpo_trials(), &report.trials)?;
    hpo::write_best_per_depth_csv(&dir.hpo_best(), &report.best_per_depth, cfg.hpo.bounds.max_depth)?;
    log::info!("best architecture {} with CV loss {:.4e}", report.best().architecture, report.best().mean_loss);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub architecture: Vec<usize>,
    pub members: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Test MSE per output in scaled units.
    pub test_mse: Vec<f64>,
    /// Test R² per output; null for a constant target.
    pub test_r2: Vec<Option<f64>>,
}

/// Trains an ensemble on a split and scores it on the held-out rows.
pub fn fit_surrogate(
    split: &Split<'_>,
    arch: &Architecture,
    members: usize,
    base_seed: u64,
    config: &TrainConfig,
) -> Result<(EnsembleModel, TrainMetrics)> {
    let model = ensemble::train_ensemble(arch, &split.scaled_train, &split.scaler, members, base_seed, config)?;
    let (test_mse, test_r2) = if split.test.len() >= 2 {
        let test = ScaledData::apply(&split.scaler, &split.test);
        let pred = model.predict_batch_scaled(test.x.view());
        (
            neural::mse_loss(pred.view(), test.y.view())?.per_output,
            ensemble::r_squared(pred.view(), test.y.view())?,
        )
    } else {
        (Vec::new(), Vec::new())
    };
    let metrics = TrainMetrics {
        architecture: arch.hidden.clone(),
        members,
        train_rows: split.train.len(),
        test_rows: split.test.len(),
        test_mse,
        test_r2,
    };
    Ok((model, metrics))
}

/// Architecture for the train stage.
pub fn chosen_architecture(cfg: &RunConfig, dir: &RunDir) -> Result<Architecture> {
    if let Some(h) = &cfg.train.hidden {
        return Ok(Architecture::new(h.clone()));
    }
    if dir.hpo_trials().exists() {
        let report = hpo::rank_trials(hpo::read_trials_csv(&dir.hpo_trials())?);
        let best = report.best();
        if best.mean_loss.is_finite() {
            return Ok(best.architecture.clone());
        }
    }
    Ok(Architecture::new(DEFAULT_HIDDEN.to_vec()))
}

pub fn train(cfg: &RunConfig, dir: &RunDir) -> Result<(EnsembleModel, TrainMetrics)> {
    let data = load_dataset(dir, "train")?;
    let s = split(&data, cfg.train.test_fraction, derive_seed(cfg.seed, stream::SPLIT))?;
    let arch = chosen_architecture(cfg, dir)?;
    let (model, metrics) = fit_surrogate(
        &s,
        &arch,
        cfg.train.members,
        derive_seed(cfg.seed, stream::ENSEMBLE),
        &cfg.train_config(0),
    )?;
    model.save(&dir.model())?;
    io::write_json(&dir.train_metrics(), &metrics)?;
    log::info!("trained {} x {arch}; test MSE {:?}", metrics.members, metrics.test_mse);
    Ok((model, metrics))
}

fn load_model(dir: &RunDir, stage: &str) -> Result<EnsembleModel> {
    require(&dir.model(), stage)?;
    EnsembleModel::load(&dir.model())
}

/// Objective evaluation of physical points through a predictor.
pub fn objective_fn<'a>(
    table: &'a ObjectiveTable,
    predictor: &'a dyn Predictor,
) -> impl Fn(&[f64]) -> Result<ObjectiveVector> + Sync + 'a {
    move |x: &[f64]| table.evaluate(x, predictor)
}

/// Runs one algorithm against the surrogate and writes its solutions and statistics.
pub fn optimize_with(
    cfg: &RunConfig,
    dir: &RunDir,
    algorithm: Algorithm,
    model: &EnsembleModel,
) -> Result<nsga::RunResult> {
    let space = cfg.parameter_space()?;
    let table = cfg.objective_table()?;
    let ga = cfg.ga_config(algorithm);
    let result = nsga::run(&ga, &space, table.len(), &objective_fn(&table, model))?;
    nsga::write_solutions_csv(&dir.solutions(algorithm), &result.solutions()?)?;
    nsga::write_stats_csv(&dir.stats(algorithm), &[(algorithm, &result.stats)])?;
    let last = result.stats.last().expect("stats include the initial generation");
    log::info!(
        "{algorithm}: {} of {} feasible, front 1 has {}",
        last.feasible,
        ga.population,
        last.front1
    );
    Ok(result)
}

pub fn optimize(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<nsga::RunResult>> {
    let model = load_model(dir, "optimize")?;
    cfg.optimize
        .algorithms
        .iter()
        .map(|&a| optimize_with(cfg, dir, a, &model))
        .collect()
}

/// Solutions of every configured algorithm that has been run.
pub fn load_solutions(cfg: &RunConfig, dir: &RunDir) -> Result<Vec<(Algorithm, Vec<Solution>)>> {
    let mut out = Vec::new();
    for &a in &cfg.optimize.algorithms {
        let p = dir.solutions(a);
        if p.exists() {
            out.push((a, nsga::read_solutions_csv(&p)?));
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "no solutions found in {}; run optimize first",
            dir.root.display()
        )));
    }
    Ok(out)
}

/// Front 1 of all solutions together, ranked within itself.
pub fn pareto_union(sets: &[(Algorithm, Vec<Solution>)]) -> Result<Vec<Solution>> {
    let all: Vec<Solution> = sets.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    let mut front = report::extract_pareto(&all)?;
    let objs: Vec<ObjectiveVector> = front.iter().map(|s| s.objectives.clone()).collect();
    let (rank, crowd) = nsga::rank_and_crowd(&objs)?;
    for (i, s) in front.iter_mut().enumerate() {
        s.rank = rank[i] + 1;
        s.crowding = crowd[i];
    }
    Ok(front)
}

pub fn validate(cfg: &RunConfig, dir: &RunDir) -> Result<report::ValidationReport> {
    let model = load_model(dir, "validate")?;
    let front = pareto_union(&load_solutions(cfg, dir)?)?;
    let n = cfg.validate.candidates.min(front.len());
    let rep = report::validate_candidates(&front, &model, &oracle::evaluate, n)?;
    report::write_validation_csv(&dir.report().join("validation.csv"), &rep)?;
    log::info!(
        "validated {n} candidates: mean discrepancy {:.2}%, {} non-physical",
        100.0 * rep.mean,
        rep.infeasible
    );
    Ok(rep)
}

pub fn write_report(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let model = load_model(dir, "report")?;
    let data = load_dataset(dir, "report")?;
    let sets = load_solutions(cfg, dir)?;
    let table = cfg.objective_table()?;
    let out = dir.report();

    let front = pareto_union(&sets)?;
    nsga::write_solutions_csv(&out.join("pareto.csv"), &front)?;
    let top = report::top_k_per_objective(&front, 5);
    report::export_parallel_coordinates(
        &out.join("parallel_coords.csv"),
        &front,
        &table,
        &report::highlight_union(&top),
    )?;

    let mut groups = vec![report::Group {
        name: "dataset",
        x: data.rows.iter().map(|r| r.x.as_slice()).collect(),
        y: data.rows.iter().map(|r| r.y).collect(),
    }];
    let names: Vec<String> = sets.iter().map(|(a, _)| a.to_string()).collect();
    for ((_, sols), name) in sets.iter().zip(&names) {
        groups.push(report::Group {
            name,
            x: sols.iter().map(|s| s.x.as_slice()).collect(),
            y: sols.iter().map(|s| model.predict(&s.x)).collect::<Result<_>>()?,
        });
    }
    io::write_json(&out.join("violin.json"), &report::summarize_distributions(&groups)?)?;

    let mut stats = String::new();
    for (a, _) in &sets {
        let path = dir.stats(*a);
        require(&path, "report")?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let skip = usize::from(!stats.is_empty());
        for line in text.lines().skip(skip) {
            stats.push_str(line);
            stats.push('\n');
        }
    }
    let stats_path = out.join("stats.csv");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    std::fs::write(&stats_path, stats).map_err(|e| Error::io(&stats_path, e))?;
    Ok(())
}

/// Every stage in order. The search runs only when no architecture is fixed.
pub fn run_all(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    cfg.check()?;
    std::fs::create_dir_all(&dir.root).map_err(|e| Error::io(&dir.root, e))?;
    cfg.save(&dir.root.join("config.json"))?;
    sample(cfg, dir)?;
    simulate(cfg, dir, None)?;
    if cfg.train.hidden.is_none() && cfg.hpo.trials > 0 {
        search(cfg, dir)?;
    }
    train(cfg, dir)?;
    optimize(cfg, dir)?;
    validate(cfg, dir)?;
    write_report(cfg, dir)
}
