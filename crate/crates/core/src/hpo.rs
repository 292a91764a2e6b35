//! Architecture search by k-fold cross-validation, driven either by uniform
//! random sampling or by a univariate tree-structured Parzen estimator.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ScaledData;
use crate::error::{Error, Result};
use crate::io;
use crate::neural::{self, ArchBounds, Architecture, TrainConfig};
use crate::rng::{self, Rng64};

/// Fraction of the history treated as "good" by the estimator.
pub const TPE_GAMMA: f64 = 0.25;
/// Candidates drawn from the good model per suggestion.
pub const TPE_CANDIDATES: usize = 24;
/// Trials before the estimator takes over from random sampling.
pub const TPE_STARTUP: usize = 10;
/// Additive smoothing applied to every histogram bin.
pub const TPE_SMOOTHING: f64 = 1.0;

/// Splits `0..n` into `k` disjoint folds after a seeded shuffle. Fold sizes
/// differ by at most one; the larger folds come first.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot split {n} samples into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub mean: f64,
    pub folds: Vec<f64>,
}

/// Trains once per fold on the other `k - 1` folds and returns the held-out
/// total MSE of each fold together with their mean.
///
/// The fold partition is seeded by `config.seed` so every architecture sees
/// the same folds; fold `f` trains with a seed derived from `config.seed` and `f`.
pub fn cv_loss(arch: &Architecture, data: &ScaledData, k: usize, config: &TrainConfig) -> Result<CvResult> {
    let folds = kfold_split(data.len(), k, config.seed)?;
    let losses = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, fold)| fold.iter().copied())
                .collect();
            let train = data.select(&train_idx);
            let valid = data.select(&folds[f]);
            let cfg = TrainConfig {
                seed: rng::derive_seed(config.seed, f as u64),
                ..*config
            };
            let trained = neural::train(arch, &train, &cfg)?;
            let pred = trained.net.forward_batch(valid.x.view());
            Ok(neural::mse_loss(pred.view(), valid.y.view())?.total)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(CvResult { mean, folds: losses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoTrial {
    pub index: usize,
    pub architecture: Architecture,
    pub mean_loss: f64,
    pub fold_losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMethod {
    Random,
    Tpe,
}

impl std::str::FromStr for SearchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SearchMethod::Random),
            "tpe" => Ok(SearchMethod::Tpe),
            other => Err(Error::Config(format!("unknown search method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoReport {
    /// All trials, ascending by mean loss, ties by trial index.
    pub trials: Vec<HpoTrial>,
    /// Best trial for every depth that was tried, ascending by mean loss.
    pub best_per_depth: Vec<HpoTrial>,
}

impl HpoReport {
    pub fn best(&self) -> &HpoTrial {
        &self.trials[0]
    }
}

fn by_loss(a: &HpoTrial, b: &HpoTrial) -> std::cmp::Ordering {
    a.mean_loss.total_cmp(&b.mean_loss).then(a.index.cmp(&b.index))
}

pub fn random_architecture(bounds: &ArchBounds, rng: &mut Rng64) -> Architecture {
    let depth = rng.random_range(bounds.min_depth..=bounds.max_depth);
    let hidden = (0..depth)
        .map(|_| rng.random_range(bounds.min_width..=bounds.max_width))
        .collect();
    Architecture::new(hidden)
}

/// Histogram over the integers `low..=high` with additive smoothing.
struct Histogram {
    low: usize,
    weights: Vec<f64>,
    total: f64,
}

impl Histogram {
    fn new(low: usize, high: usize, values: impl Iterator<Item = usize>) -> Self {
        let mut weights = vec![TPE_SMOOTHING; high - low + 1];
        for v in values {
            weights[v - low] += 1.0;
        }
        let total = weights.iter().sum();
        Histogram { low, weights, total }
    }

    fn prob(&self, v: usize) -> f64 {
        self.weights[v - self.low] / self.total
    }

    fn sample(&self, rng: &mut Rng64) -> usize {
        let mut r = rng.random::<f64>() * self.total;
        for (i, w) in self.weights.iter().enumerate() {
            if r < *w {
                return self.low + i;
            }
            r -= w;
        }
        self.low + self.weights.len() - 1
    }
}

/// Depth histogram plus one width histogram per layer position.
struct ArchDensity {
    depth: Histogram,
    widths: Vec<Histogram>,
}

impl ArchDensity {
    fn fit(trials: &[&HpoTrial], bounds: &ArchBounds) -> Self {
        let depth = Histogram::new(
            bounds.min_depth,
            bounds.max_depth,
            trials.iter().map(|t| t.architecture.depth()),
        );
        let widths = (0..bounds.max_depth)
            .map(|p| {
                Histogram::new(
                    bounds.min_width,
                    bounds.max_width,
                    trials
                        .iter()
                        .filter_map(|t| t.architecture.hidden.get(p).copied()),
                )
            })
            .collect();
        ArchDensity { depth, widths }
    }

    fn sample(&self, rng: &mut Rng64) -> Architecture {
        let depth = self.depth.sample(rng);
        Architecture::new((0..depth).map(|p| self.widths[p].sample(rng)).collect())
    }

    fn log_prob(&self, arch: &Architecture) -> f64 {
        self.depth.prob(arch.depth()).ln()
            + arch
                .hidden
                .iter()
                .enumerate()
                .map(|(p, &w)| self.widths[p].prob(w).ln())
                .sum::<f64>()
    }
}

/// Suggests the next architecture from the trial history.
///
/// With fewer than [`TPE_STARTUP`] trials this is a uniform draw. Otherwise
/// the history is split at the [`TPE_GAMMA`] loss quantile into good and bad
/// sets, each modelled by smoothed per-coordinate histograms; candidates are
/// drawn from the good model and the one with the largest good/bad likelihood
/// ratio wins. When every trial has the same loss both models use the whole
/// history, so the ratio is one and the first candidate is returned.
pub fn tpe_suggest(history: &[HpoTrial], bounds: &ArchBounds, seed: u64) -> Architecture {
    let mut rng = rng::seeded(seed);
    if history.len() < TPE_STARTUP {
        return random_architecture(bounds, &mut rng);
    }
    let mut sorted: Vec<&HpoTrial> = history
        .iter()
        .filter(|t| t.architecture.check(bounds).is_ok())
        .collect();
    if sorted.is_empty() {
        return random_architecture(bounds, &mut rng);
    }
    sorted.sort_by(|a, b| by_loss(a, b));
    let all_equal = sorted.iter().all(|t| t.mean_loss == sorted[0].mean_loss);
    let (good, bad) = if all_equal {
        (ArchDensity::fit(&sorted, bounds), ArchDensity::fit(&sorted, bounds))
    } else {
        let n_good = ((TPE_GAMMA * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len() - 1);
        (
            ArchDensity::fit(&sorted[..n_good], bounds),
            ArchDensity::fit(&sorted[n_good..], bounds),
        )
    };
    let mut best: Option<(f64, Architecture)> = None;
    for _ in 0..TPE_CANDIDATES {
        let cand = good.sample(&mut rng);
        let score = good.log_prob(&cand) - bad.log_prob(&cand);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    best.expect("at least one candidate").1
}

/// Evaluates `budget` architectures by cross-validated loss.
pub fn search_architectures(
    bounds: &ArchBounds,
    budget: usize,
    method: SearchMethod,
    data: &ScaledData,
    k: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<HpoReport> {
    bounds.check()?;
    if budget == 0 {
        return Err(Error::Config("search budget must be at least one".into()));
    }
    let cv_config = TrainConfig { seed, ..*config };
    let mut history: Vec<HpoTrial> = Vec::with_capacity(budget);
    for t in 0..budget {
        let trial_seed = rng::derive_seed(seed, t as u64);
        let arch = match method {
            SearchMethod::Random => random_architecture(bounds, &mut rng::seeded(trial_seed)),
            SearchMethod::Tpe => tpe_suggest(&history, bounds, trial_seed),
        };
        let (mean_loss, fold_losses) = match cv_loss(&arch, data, k, &cv_config) {
            Ok(cv) => (cv.mean, cv.folds),
            Err(Error::Numeric(msg)) => {
                log::warn!("trial {t} ({arch}) diverged: {msg}");
                (f64::INFINITY, vec![f64::INFINITY; k])
            }
            Err(e) => return Err(e),
        };
        log::debug!("trial {t}: {arch} -> {mean_loss:.4e}");
        history.push(HpoTrial {
            index: t,
            architecture: arch,
            mean_loss,
            fold_losses,
        });
    }
    Ok(rank_trials(history))
}

/// Sorts trials and builds the best-per-depth table.
pub fn rank_trials(mut trials: Vec<HpoTrial>) -> HpoReport {
    trials.sort_by(by_loss);
    let mut best_per_depth: Vec<HpoTrial> = Vec::new();
    for t in &trials {
        if !best_per_depth
            .iter()
            .any(|b| b.architecture.depth() == t.architecture.depth())
        {
            best_per_depth.push(t.clone());
        }
    }
    HpoReport {
        trials,
        best_per_depth,
    }
}

/// Writes `trial,mean_loss,fold_losses,depth,widths`, the list columns as JSON arrays.
pub fn write_trials_csv(path: &Path, trials: &[HpoTrial]) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    w.write_record(["trial", "mean_loss", "fold_losses", "depth", "widths"])
        .map_err(|e| Error::csv(path, e))?;
    for t in trials {
        let folds: Vec<String> = t.fold_losses.iter().map(|&v| json_number(v)).collect();
        let widths: Vec<String> = t.architecture.hidden.iter().map(usize::to_string).collect();
        w.write_record([
            t.index.to_string(),
            io::fmt_f64(t.mean_loss),
            format!("[{}]", folds.join(",")),
            t.architecture.depth().to_string(),
            format!("[{}]", widths.join(",")),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    io::finish(w, path)
}

fn json_number(v: f64) -> String {
    if v.is_finite() {
        io::fmt_f64(v)
    } else {
        "null".into()
    }
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<HpoTrial>> {
    let mut reader = io::csv_reader(path)?;
    let header = io::headers(path, &mut reader)?;
    if header != ["trial", "mean_loss", "fold_losses", "depth", "widths"] {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: format!("expected trial,mean_loss,fold_losses,depth,widths, found {}", header.join(",")),
        });
    }
    let parse_err = |line, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut trials = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = io::record_line(&record);
        let index = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad trial index {:?}", &record[0])))?;
        let mean_loss: f64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad mean_loss {:?}", &record[1])))?;
        let folds: Vec<Option<f64>> =
            serde_json::from_str(&record[2]).map_err(|e| parse_err(line, format!("fold_losses: {e}")))?;
        let widths: Vec<usize> =
            serde_json::from_str(&record[4]).map_err(|e| parse_err(line, format!("widths: {e}")))?;
        let depth: usize = record[3]
            .parse()
            .map_err(|_| parse_err(line, format!("bad depth {:?}", &record[3])))?;
        if depth != widths.len() {
            return Err(parse_err(line, format!("depth {depth} but {} widths", widths.len())));
        }
        trials.push(HpoTrial {
            index,
            architecture: Architecture::new(widths),
            mean_loss,
            fold_losses: folds.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
        });
    }
    if trials.is_empty() {
        return Err(Error::Empty("search trials"));
    }
    Ok(trials)
}

/// Writes the best-per-depth table: `mse,hidden_layers,n1..n10`.
pub fn write_best_per_depth_csv(path: &Path, best: &[HpoTrial], max_depth: usize) -> Result<()> {
    let mut w = io::csv_writer(path)?;
    let mut header = vec!["mse".to_owned(), "hidden_layers".to_owned()];
    header.extend(io::indexed_names("n", max_depth));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for t in best {
        let mut row = vec![io::fmt_f64(t.mean_loss), t.architecture.depth().to_string()];
        row.extend((0..max_depth).map(|p| {
            t.architecture
                .hidden
                .get(p)
                .map_or(String::new(), usize::to_string)
        }));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    io::finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use crate::neural::Init;

    fn trial(index: usize, hidden: Vec<usize>, loss: f64) -> HpoTrial {
        HpoTrial {
            index,
            architecture: Architecture::new(hidden),
            mean_loss: loss,
            fold_losses: vec![loss],
        }
    }

    #[test]
    fn balanced_folds() {
        let folds = kfold_split(25, 10, 1).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 3, 3, 2, 2, 2, 2, 2]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..25).collect::<Vec<_>>());
        assert_eq!(kfold_split(25, 10, 1).unwrap(), folds);
        assert_ne!(kfold_split(25, 10, 2).unwrap(), folds);
        assert!(kfold_split(5, 6, 0).is_err());
    }

    fn constant_target(n: usize) -> ScaledData {
        let mut r = rng::seeded(2);
        ScaledData {
            x: Array2::from_shape_fn((n, 12), |_| r.random::<f64>()),
            y: Array2::from_elem((n, 6), 0.5),
        }
    }

    #[test]
    fn cv_learns_a_constant() {
        let data = constant_target(300);
        let cfg = TrainConfig {
            epochs: 500,
            learning_rate: 1e-2,
            batch_size: 32,
            seed: 3,
            ..TrainConfig::default()
        };
        let arch = Architecture::new(vec![16]);
        let cv = cv_loss(&arch, &data, 3, &cfg).unwrap();
        assert_eq!(cv.folds.len(), 3);
        assert!((cv.mean - cv.folds.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        // Rectifiers that die during training keep their outgoing weights and
        // can still fire on a few held-out rows.
        assert!(cv.mean < 1e-3, "{}", cv.mean);
        assert_eq!(cv_loss(&arch, &data, 3, &cfg).unwrap(), cv);

        // Without that effect only the output bias moves and the constant is exact.
        let zeros = TrainConfig { init: Init::Zeros, ..cfg };
        let cv = cv_loss(&arch, &data, 3, &zeros).unwrap();
        assert!(cv.mean < 1e-4, "{}", cv.mean);
    }

    #[test]
    fn empty_history_draws_uniformly_within_bounds() {
        let bounds = ArchBounds::default();
        for s in 0..50 {
            let a = tpe_suggest(&[], &bounds, s);
            assert!(a.check(&bounds).is_ok());
        }
        assert_eq!(tpe_suggest(&[], &bounds, 7), random_architecture(&bounds, &mut rng::seeded(7)));
    }

    #[test]
    fn tpe_is_deterministic_and_in_bounds() {
        let bounds = ArchBounds::default();
        let mut r = rng::seeded(1);
        let history: Vec<HpoTrial> = (0..30)
            .map(|i| {
                let a = random_architecture(&bounds, &mut r);
                let loss = 1.0 / (1.0 + a.hidden.iter().sum::<usize>() as f64);
                HpoTrial {
                    index: i,
                    architecture: a,
                    mean_loss: loss,
                    fold_losses: vec![loss],
                }
            })
            .collect();
        let a = tpe_suggest(&history, &bounds, 5);
        assert_eq!(a, tpe_suggest(&history, &bounds, 5));
        assert!(a.check(&bounds).is_ok());
    }

    #[test]
    fn tpe_prefers_the_good_region() {
        // Good trials are all 2 layers of width 60+, bad ones 8+ narrow layers.
        let bounds = ArchBounds::default();
        let mut history = Vec::new();
        for i in 0..10 {
            history.push(trial(i, vec![60 + i % 5, 62], 0.01));
        }
        for i in 10..40 {
            history.push(trial(i, vec![3 + i % 4; 8 + i % 3], 1.0));
        }
        let mut shallow = 0;
        for s in 0..20 {
            if tpe_suggest(&history, &bounds, s).depth() <= 3 {
                shallow += 1;
            }
        }
        assert!(shallow >= 18, "{shallow}");
    }

    #[test]
    fn equal_losses_fall_back_to_first_good_draw() {
        let bounds = ArchBounds::default();
        let history: Vec<HpoTrial> = (0..12).map(|i| trial(i, vec![10 + i, 20], 0.5)).collect();
        let got = tpe_suggest(&history, &bounds, 3);
        // Replay the first candidate draw from the whole-history model.
        let refs: Vec<&HpoTrial> = history.iter().collect();
        let model = ArchDensity::fit(&refs, &bounds);
        assert_eq!(got, model.sample(&mut rng::seeded(3)));
    }

    #[test]
    fn ranking_and_depth_table() {
        let trials = vec![
            trial(0, vec![4], 0.3),
            trial(1, vec![8, 8], 0.1),
            trial(2, vec![5], 0.2),
            trial(3, vec![9, 9], 0.1),
        ];
        let report = rank_trials(trials);
        let order: Vec<usize> = report.trials.iter().map(|t| t.index).collect();
        assert_eq!(order, vec![1, 3, 2, 0]);
        let depths: Vec<(usize, usize)> = report
            .best_per_depth
            .iter()
            .map(|t| (t.architecture.depth(), t.index))
            .collect();
        assert_eq!(depths, vec![(2, 1), (1, 2)]);
    }

    #[test]
    fn single_trial_budget() {
        let data = constant_target(20);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let r = search_architectures(&ArchBounds::default(), 1, SearchMethod::Tpe, &data, 2, 4, &cfg).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best().index, 0);
        assert_eq!(r.best_per_depth.len(), 1);
    }

    #[test]
    fn trials_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hpo.csv");
        let trials = vec![
            HpoTrial {
                index: 0,
                architecture: Architecture::new(vec![3, 4]),
                mean_loss: 0.125,
                fold_losses: vec![0.1, 0.15],
            },
            HpoTrial {
                index: 1,
                architecture: Architecture::new(vec![7]),
                mean_loss: f64::INFINITY,
                fold_losses: vec![f64::INFINITY, f64::INFINITY],
            },
        ];
        write_trials_csv(&path, &trials).unwrap();
        assert_eq!(read_trials_csv(&path).unwrap(), trials);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("trial,mean_loss,fold_losses,depth,widths\n0,0.125,\"[0.1,0.15]\",2,\"[3,4]\"\n"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn search_respects_budget_and_bounds(
                seed in any::<u64>(),
                budget in 1usize..16,
                tpe in any::<bool>(),
                max_depth in 1usize..4,
                max_width in 2usize..9,
            ) {
                let bounds = ArchBounds { min_depth: 1, max_depth, min_width: 2, max_width };
                let data = constant_target(12);
                let cfg = TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::default() };
                let method = if tpe { SearchMethod::Tpe } else { SearchMethod::Random };
                let r = search_architectures(&bounds, budget, method, &data, 2, seed, &cfg).unwrap();
                prop_assert_eq!(r.trials.len(), budget);
                let mut seen: Vec<usize> = r.trials.iter().map(|t| t.index).collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..budget).collect::<Vec<_>>());
                for t in &r.trials {
                    prop_assert!(t.architecture.check(&bounds).is_ok());
                }
            }
        }
    }
}
