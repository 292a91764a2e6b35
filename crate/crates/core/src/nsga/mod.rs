//! NSGA-II and NSGA-III with constrained dominance.
//!
//! Both algorithms share the generational loop: parents are mated, children
//! are produced by simulated binary crossover and polynomial mutation, and the
//! union of parents and children is cut back to the population size front by
//! front. They differ in how the last, partially admitted front is thinned:
//! NSGA-II keeps the least crowded members, NSGA-III spreads the survivors
//! over a lattice of reference directions.

mod operators;
mod refpoints;
mod sort;

use std::fmt;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::objectives::ObjectiveVector;
use crate::rng::{self, Rng64};
use crate::space::{self, ParameterSpace, ParameterSpec};

pub use operators::{polynomial_mutation, sbx_crossover, sbx_gene, GeneBounds, INTEGER_GENE_MARGIN, SBX_GENE_PROB};
pub use refpoints::{
    associate, das_dennis, niche_select, normalize, perpendicular_distance, reference_point_count, NicheSelection,
    ReferencePointSet, MAX_REFERENCE_POINTS, SCALE_FLOOR,
};
pub use sort::{crowding_distance, dominates, fast_nondominated_sort, pareto_dominates, ranks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Nsga2,
    Nsga3,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Nsga2 => "nsga2",
            Algorithm::Nsga3 => "nsga3",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nsga2" => Ok(Algorithm::Nsga2),
            "nsga3" => Ok(Algorithm::Nsga3),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Probability that a mating pair is recombined.
    pub crossover_prob: f64,
    /// Per-gene mutation probability.
    pub mutation_prob: f64,
    pub eta_c: f64,
    pub eta_m: f64,
    pub algorithm: Algorithm,
    /// Reference lattice granularity for NSGA-III.
    pub granularity: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 500,
            generations: 250,
            crossover_prob: 0.7,
            mutation_prob: 0.05,
            eta_c: 15.0,
            eta_m: 20.0,
            algorithm: Algorithm::Nsga2,
            granularity: 12,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn check(&self) -> Result<()> {
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population must be even and at least 2, got {}",
                self.population
            )));
        }
        for (name, p) in [("crossover", self.crossover_prob), ("mutation", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if !(self.eta_c >= 0.0 && self.eta_m >= 0.0) {
            return Err(Error::Config("distribution indices must be non-negative".into()));
        }
        if self.algorithm == Algorithm::Nsga3 && self.granularity == 0 {
            return Err(Error::Config("granularity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub objectives: ObjectiveVector,
    /// 0-based front index within the population it was ranked in.
    pub rank: usize,
    pub crowding: f64,
    pub niche: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub feasible: usize,
    /// Smallest stored value per objective over feasible members.
    pub best: Vec<Option<f64>>,
    pub front1: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub population: Vec<Individual>,
    pub stats: Vec<GenerationStats>,
    pub bounds: GeneBounds,
}

impl RunResult {
    /// Final population as solution rows, ranked afresh.
    pub fn solutions(&self) -> Result<Vec<Solution>> {
        let gen = self.stats.last().map_or(0, |s| s.generation);
        let objs: Vec<ObjectiveVector> = self.population.iter().map(|i| i.objectives.clone()).collect();
        let xs = self.population.iter().map(|i| self.bounds.decode(&i.genome)).collect();
        Solution::ranked(&self.algorithm.to_string(), gen, xs, objs)
    }
}

/// An evaluated design point as written to the solutions file.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub algo: String,
    pub generation: usize,
    pub index: usize,
    pub x: Vec<f64>,
    pub objectives: ObjectiveVector,
    pub rank: usize,
    pub crowding: f64,
}

impl Solution {
    /// Builds rows with rank (1-based) and crowding computed over the given set.
    pub fn ranked(algo: &str, generation: usize, xs: Vec<Vec<f64>>, objs: Vec<ObjectiveVector>) -> Result<Vec<Solution>> {
        let (rank, crowding) = rank_and_crowd(&objs)?;
        Ok(xs
            .into_iter()
            .zip(objs)
            .enumerate()
            .map(|(i, (x, objectives))| Solution {
                algo: algo.to_owned(),
                generation,
                index: i,
                x,
                objectives,
                rank: rank[i] + 1,
                crowding: crowding[i],
            })
            .collect())
    }
}

/// Rank (0-based) and within-front crowding distance of every member.
pub fn rank_and_crowd(objs: &[ObjectiveVector]) -> Result<(Vec<usize>, Vec<f64>)> {
    let fronts = fast_nondominated_sort(objs)?;
    let rank = ranks(&fronts, objs.len());
    let mut crowd = vec![0.0; objs.len()];
    for front in &fronts {
        let vals: Vec<&[f64]> = front.iter().map(|&i| objs[i].values.as_slice()).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&vals)) {
            crowd[i] = d;
        }
    }
    Ok((rank, crowd))
}

fn evaluate_all<E>(genomes: &[Vec<f64>], bounds: &GeneBounds, n_obj: usize, evaluate: &E) -> Vec<ObjectiveVector>
where
    E: Fn(&[f64]) -> Result<ObjectiveVector> + Sync,
{
    genomes
        .par_iter()
        .map(|g| {
            let x = bounds.decode(g);
            match evaluate(&x) {
                Ok(o) if o.is_finite() && o.values.len() == n_obj => o,
                Ok(o) => {
                    log::warn!("evaluation at {x:?} returned {:?}; treated as worst infeasible", o.values);
                    ObjectiveVector::worst(n_obj)
                }
                Err(e) => {
                    log::warn!("evaluation at {x:?} failed: {e}; treated as worst infeasible");
                    ObjectiveVector::worst(n_obj)
                }
            }
        })
        .collect()
}

fn initial_genomes(bounds: &GeneBounds, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let params = (0..bounds.dim())
        .map(|i| ParameterSpec::continuous(&format!("g{}", i + 1), bounds.low[i], bounds.high[i], ""))
        .collect();
    let gene_space = ParameterSpace::new(params)?;
    Ok(space::lhs_sample(&gene_space, n, seed)?.rows)
}

fn stats_for(generation: usize, pop: &[Individual]) -> GenerationStats {
    let n_obj = pop[0].objectives.values.len();
    let mut best = vec![None; n_obj];
    let mut feasible = 0;
    for ind in pop.iter().filter(|i| i.objectives.feasible) {
        feasible += 1;
        for (k, &v) in ind.objectives.values.iter().enumerate() {
            best[k] = Some(best[k].map_or(v, |b: f64| b.min(v)));
        }
    }
    GenerationStats {
        generation,
        feasible,
        best,
        front1: pop.iter().filter(|i| i.rank == 0).count(),
    }
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut Rng64) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if a.rank != b.rank {
        return if a.rank < b.rank { a } else { b };
    }
    if a.crowding != b.crowding {
        return if a.crowding > b.crowding { a } else { b };
    }
    if rng.random::<bool>() {
        a
    } else {
        b
    }
}

fn offspring(pop: &[Individual], config: &GaConfig, bounds: &GeneBounds, rng: &mut Rng64) -> Vec<Vec<f64>> {
    let mut children = Vec::with_capacity(config.population);
    while children.len() < config.population {
        let (p1, p2) = match config.algorithm {
            Algorithm::Nsga2 => (&tournament(pop, rng).genome, &tournament(pop, rng).genome),
            Algorithm::Nsga3 => (
                &pop[rng.random_range(0..pop.len())].genome,
                &pop[rng.random_range(0..pop.len())].genome,
            ),
        };
        let (mut c1, mut c2) = if rng.random::<f64>() < config.crossover_prob {
            sbx_crossover(p1, p2, config.eta_c, bounds, rng)
        } else {
            (p1.clone(), p2.clone())
        };
        polynomial_mutation(&mut c1, config.eta_m, config.mutation_prob, bounds, rng);
        polynomial_mutation(&mut c2, config.eta_m, config.mutation_prob, bounds, rng);
        children.push(c1);
        children.push(c2);
    }
    children
}

/// Cuts the merged population down to `n` survivors.
fn environmental_selection(
    merged: Vec<Individual>,
    n: usize,
    algorithm: Algorithm,
    refs: Option<&ReferencePointSet>,
    rng: &mut Rng64,
) -> Result<Vec<Individual>> {
    let objs: Vec<ObjectiveVector> = merged.iter().map(|i| i.objectives.clone()).collect();
    let fronts = fast_nondominated_sort(&objs)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut last: &[usize] = &[];
    for front in &fronts {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
        } else {
            last = front;
            break;
        }
    }
    let k = n - chosen.len();
    let mut niche: Vec<Option<usize>> = vec![None; merged.len()];
    if k > 0 {
        match algorithm {
            Algorithm::Nsga2 => {
                let vals: Vec<&[f64]> = last.iter().map(|&i| objs[i].values.as_slice()).collect();
                let d = crowding_distance(&vals);
                let mut order: Vec<(usize, f64)> = last.iter().copied().zip(d).collect();
                order.sort_by(|a, b| sort::by_crowding_desc(*a, *b));
                chosen.extend(order.iter().take(k).map(|p| p.0));
            }
            Algorithm::Nsga3 => {
                let refs = refs.ok_or(Error::Empty("reference point set"))?;
                // Local indices: accepted first, then the partial front.
                let pool: Vec<usize> = chosen.iter().chain(last).copied().collect();
                let vals: Vec<&[f64]> = pool.iter().map(|&i| objs[i].values.as_slice()).collect();
                let accepted: Vec<usize> = (0..chosen.len()).collect();
                let partial: Vec<usize> = (chosen.len()..pool.len()).collect();
                let sel = niche_select(&vals, &accepted, &partial, refs, k, rng)?;
                for (local, &global) in pool.iter().enumerate() {
                    niche[global] = Some(sel.niche[local]);
                }
                chosen.extend(sel.selected.iter().map(|&l| pool[l]));
            }
        }
    }
    chosen.sort_unstable();
    let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
    let mut next: Vec<Individual> = chosen
        .iter()
        .map(|&i| {
            let mut ind = slots[i].take().expect("each index chosen once");
            ind.niche = niche[i];
            ind
        })
        .collect();
    assign_rank_and_crowding(&mut next)?;
    Ok(next)
}

fn assign_rank_and_crowding(pop: &mut [Individual]) -> Result<()> {
    let objs: Vec<ObjectiveVector> = pop.iter().map(|i| i.objectives.clone()).collect();
    let (rank, crowd) = rank_and_crowd(&objs)?;
    for (i, ind) in pop.iter_mut().enumerate() {
        ind.rank = rank[i];
        ind.crowding = crowd[i];
    }
    Ok(())
}

/// Runs the configured algorithm over the parameter box of `space`.
///
/// `evaluate` receives decoded points (integer parameters floored) and must
/// return `n_objectives` values. Failures and non-finite results are logged and
/// the member is ranked behind every real evaluation. Evaluation runs in
/// parallel; the result does not depend on the number of threads.
pub fn run<E>(config: &GaConfig, space: &ParameterSpace, n_objectives: usize, evaluate: &E) -> Result<RunResult>
where
    E: Fn(&[f64]) -> Result<ObjectiveVector> + Sync,
{
    config.check()?;
    let bounds = GeneBounds::from_space(space);
    let refs = match config.algorithm {
        Algorithm::Nsga3 => Some(das_dennis(n_objectives, config.granularity)?),
        Algorithm::Nsga2 => None,
    };
    let mut rng = rng::seeded(rng::derive_seed(config.seed, 1));

    let genomes = initial_genomes(&bounds, config.population, rng::derive_seed(config.seed, 0))?;
    let objs = evaluate_all(&genomes, &bounds, n_objectives, evaluate);
    let mut pop: Vec<Individual> = genomes
        .into_iter()
        .zip(objs)
        .map(|(genome, objectives)| Individual {
            genome,
            objectives,
            rank: 0,
            crowding: 0.0,
            niche: None,
        })
        .collect();
    assign_rank_and_crowding(&mut pop)?;
    let mut stats = vec![stats_for(0, &pop)];

    for gen in 1..=config.generations {
        let children = offspring(&pop, config, &bounds, &mut rng);
        let child_objs = evaluate_all(&children, &bounds, n_objectives, evaluate);
        let mut merged = pop;
        merged.extend(children.into_iter().zip(child_objs).map(|(genome, objectives)| Individual {
            genome,
            objectives,
            rank: 0,
            crowding: 0.0,
            niche: None,
        }));
        pop = environmental_selection(merged, config.population, config.algorithm, refs.as_ref(), &mut rng)?;
        stats.push(stats_for(gen, &pop));
        log::debug!(
            "{} generation {gen}: {} feasible, front 1 has {}",
            config.algorithm,
            stats[gen].feasible,
            stats[gen].front1
        );
    }
    Ok(RunResult {
        algorithm: config.algorithm,
        population: pop,
        stats,
        bounds,
    })
}

fn solution_header(n_x: usize, n_obj: usize) -> Vec<String> {
    let mut h = vec!["algo".to_owned(), "gen".to_owned(), "idx".to_owned()];
    h.extend(io::indexed_names("x", n_x));
    h.extend(io::indexed_names("O", n_obj));
    h.extend(["violation", "rank", "crowding"].map(String::from));
    h
}

/// Writes `algo,gen,idx,x1..,O1..,violation,rank,crowding`.
pub fn write_solutions_csv(path: &Path, solutions: &[Solution]) -> Result<()> {
    let first = solutions.first().ok_or(Error::Empty("solutions"))?;
    let mut w = io::csv_writer(path)?;
    w.write_record(solution_header(first.x.len(), first.objectives.values.len()))
        .map_err(|e| Error::csv(path, e))?;
    for s in solutions {
        let mut row = vec![s.algo.clone(), s.generation.to_string(), s.index.to_string()];
        row.extend(s.x.iter().map(|&v| io::fmt_f64(v)));
        row.extend(s.objectives.values.iter().map(|&v| io::fmt_f64(v)));
        row.push(io::fmt_f64(s.objectives.total_violation));
        row.push(s.rank.to_string());
        row.push(io::fmt_f64(s.crowding));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    io::finish(w, path)
}

pub fn read_solutions_csv(path: &Path) -> Result<Vec<Solution>> {
    let mut reader = io::csv_reader(path)?;
    let header = io::headers(path, &mut reader)?;
    let n_x = header.iter().filter(|h| h.starts_with('x')).count();
    let n_obj = header.iter().filter(|h| h.starts_with('O')).count();
    if header != solution_header(n_x, n_obj) || n_x == 0 || n_obj == 0 {
        return Err(Error::Header {
            path: path.to_path_buf(),
            message: format!("expected algo,gen,idx,x1..,O1..,violation,rank,crowding, found {}", header.join(",")),
        });
    }
    let parse_err = |line, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = io::record_line(&record);
        if record.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let int = |i: usize| -> Result<usize> {
            record[i]
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: not an integer: {:?}", header[i], &record[i])))
        };
        let float = |i: usize| io::parse_cell(path, line, &header[i], &record[i]);
        let x = (3..3 + n_x).map(float).collect::<Result<Vec<_>>>()?;
        let values = (3 + n_x..3 + n_x + n_obj).map(float).collect::<Result<Vec<_>>>()?;
        let vcol = 3 + n_x + n_obj;
        let violation: f64 = record[vcol]
            .parse()
            .ok()
            .filter(|v: &f64| *v >= 0.0)
            .ok_or_else(|| parse_err(line, format!("bad violation {:?}", &record[vcol])))?;
        let crowding: f64 = record[vcol + 2]
            .parse()
            .ok()
            .filter(|v: &f64| *v >= 0.0)
            .ok_or_else(|| parse_err(line, format!("bad crowding {:?}", &record[vcol + 2])))?;
        out.push(Solution {
            algo: record[0].to_owned(),
            generation: int(1)?,
            index: int(2)?,
            x,
            objectives: ObjectiveVector::new(values, violation),
            rank: int(vcol + 1)?,
            crowding,
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("solutions"));
    }
    Ok(out)
}

/// Writes `algo,gen,feasible,front1,best_O1..`; missing bests are empty cells.
pub fn write_stats_csv(path: &Path, runs: &[(Algorithm, &[GenerationStats])]) -> Result<()> {
    let n_obj = runs
        .iter()
        .find_map(|(_, s)| s.first())
        .map(|s| s.best.len())
        .ok_or(Error::Empty("generation statistics"))?;
    let mut w = io::csv_writer(path)?;
    let mut header = vec!["algo".to_owned(), "gen".into(), "feasible".into(), "front1".into()];
    header.extend(io::indexed_names("best_O", n_obj));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (algo, stats) in runs {
        for s in *stats {
            let mut row = vec![algo.to_string(), s.generation.to_string(), s.feasible.to_string(), s.front1.to_string()];
            row.extend(s.best.iter().map(|b| b.map_or(String::new(), io::fmt_f64)));
            w.write_record(&row).map_err(|e| Error::csv(path, e))?;
        }
    }
    io::finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_space() -> ParameterSpace {
        ParameterSpace::new(vec![
            ParameterSpec::continuous("a", 0.0, 1.0, ""),
            ParameterSpec::continuous("b", 0.0, 1.0, ""),
            ParameterSpec::integer("c", 0, 3, ""),
        ])
        .unwrap()
    }

    // Two-objective problem with a linear Pareto front at b = 0 and a
    // constraint a >= 0.1.
    fn toy(x: &[f64]) -> Result<ObjectiveVector> {
        let g = 1.0 + x[1] + 0.1 * x[2];
        Ok(ObjectiveVector::new(vec![x[0] * g, (1.0 - x[0]) * g], (0.1 - x[0]).max(0.0)))
    }

    fn config(algorithm: Algorithm) -> GaConfig {
        GaConfig {
            population: 40,
            generations: 30,
            algorithm,
            granularity: 6,
            seed: 9,
            ..GaConfig::default()
        }
    }

    #[test]
    fn config_checks() {
        assert!(GaConfig::default().check().is_ok());
        assert!(GaConfig { population: 7, ..GaConfig::default() }.check().is_err());
        assert!(GaConfig { crossover_prob: 1.5, ..GaConfig::default() }.check().is_err());
        assert_eq!("nsga3".parse::<Algorithm>().unwrap(), Algorithm::Nsga3);
        assert!("spea2".parse::<Algorithm>().is_err());
    }

    #[test]
    fn both_algorithms_converge_on_a_toy_problem() {
        for algo in [Algorithm::Nsga2, Algorithm::Nsga3] {
            let r = run(&config(algo), &small_space(), 2, &toy).unwrap();
            assert_eq!(r.population.len(), 40);
            assert_eq!(r.stats.len(), 31);
            let last = r.stats.last().unwrap();
            assert_eq!(last.feasible, 40, "{algo}");
            let mut near = 0;
            for ind in &r.population {
                let x = r.bounds.decode(&ind.genome);
                near += usize::from(x[1] < 0.2);
                assert!([0.0, 1.0, 2.0, 3.0].contains(&x[2]));
            }
            assert!(near >= 36, "{algo}: {near} of 40 near the front");
        }
    }

    #[test]
    fn runs_are_reproducible() {
        for algo in [Algorithm::Nsga2, Algorithm::Nsga3] {
            let a = run(&config(algo), &small_space(), 2, &toy).unwrap();
            let b = run(&config(algo), &small_space(), 2, &toy).unwrap();
            assert_eq!(a.population, b.population);
            assert_eq!(a.stats, b.stats);
        }
    }

    #[test]
    fn no_variation_keeps_genomes() {
        let cfg = GaConfig {
            crossover_prob: 0.0,
            mutation_prob: 0.0,
            ..config(Algorithm::Nsga2)
        };
        let r = run(&cfg, &small_space(), 2, &toy).unwrap();
        let init = initial_genomes(&r.bounds, 40, rng::derive_seed(cfg.seed, 0)).unwrap();
        for ind in &r.population {
            assert!(init.contains(&ind.genome));
        }
    }

    #[test]
    fn nsga2_elitism() {
        let r = run(&config(Algorithm::Nsga2), &small_space(), 2, &toy).unwrap();
        for w in r.stats.windows(2) {
            for k in 0..2 {
                if let (Some(a), Some(b)) = (w[0].best[k], w[1].best[k]) {
                    assert!(b <= a);
                }
            }
        }
    }

    #[test]
    fn failed_evaluations_rank_last() {
        let flaky = |x: &[f64]| -> Result<ObjectiveVector> {
            if x[0] > 0.9 {
                Err(Error::Numeric("nope".into()))
            } else if x[0] > 0.8 {
                Ok(ObjectiveVector::feasible(vec![f64::NAN, 0.0]))
            } else {
                toy(x)
            }
        };
        let r = run(&config(Algorithm::Nsga2), &small_space(), 2, &flaky).unwrap();
        assert!(r.population.iter().all(|i| i.objectives.feasible));
        assert!(r.population.iter().all(|i| r.bounds.decode(&i.genome)[0] <= 0.8));
    }

    #[test]
    fn solutions_round_trip() {
        let r = run(&config(Algorithm::Nsga3), &small_space(), 2, &toy).unwrap();
        let sols = r.solutions().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solutions.csv");
        write_solutions_csv(&path, &sols).unwrap();
        assert_eq!(read_solutions_csv(&path).unwrap(), sols);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("algo,gen,idx,x1,x2,x3,O1,O2,violation,rank,crowding\nnsga3,30,0,"));
        assert!(text.contains(",inf\n"));

        let stats = dir.path().join("stats.csv");
        write_stats_csv(&stats, &[(r.algorithm, &r.stats)]).unwrap();
        let text = std::fs::read_to_string(&stats).unwrap();
        assert_eq!(text.lines().count(), 32);
        assert!(text.starts_with("algo,gen,feasible,front1,best_O1,best_O2\nnsga3,0,"));
    }

    #[test]
    fn malformed_solutions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "algo,gen,idx,x1,O1,O2,violation,rank,crowding\nnsga2,1,0,0.5,1,NaN,0,1,inf\n").unwrap();
        let err = read_solutions_csv(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        std::fs::write(&path, "algo,gen,x1\n").unwrap();
        assert!(read_solutions_csv(&path).is_err());
    }

    mod props {
        use super::*;
        use crate::objectives::ObjectiveTable;
        use crate::oracle::ProxyOracle;
        use proptest::prelude::*;
        use std::sync::Mutex;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(8))]

            #[test]
            fn every_evaluated_point_is_in_the_box(seed in any::<u64>(), nsga3 in any::<bool>()) {
                let space = ParameterSpace::floating_zone();
                let table = ObjectiveTable::floating_zone();
                let seen = Mutex::new(Vec::new());
                let eval = |x: &[f64]| {
                    seen.lock().unwrap().push(x.to_vec());
                    table.evaluate(x, &ProxyOracle)
                };
                let cfg = GaConfig {
                    population: 20,
                    generations: 8,
                    algorithm: if nsga3 { Algorithm::Nsga3 } else { Algorithm::Nsga2 },
                    granularity: 2,
                    seed,
                    ..GaConfig::default()
                };
                let r = run(&cfg, &space, 8, &eval).unwrap();
                let seen = seen.into_inner().unwrap();
                prop_assert_eq!(seen.len(), 20 * 9);
                for x in &seen {
                    prop_assert!(space.validate_point(x).unwrap().is_valid(), "{:?}", x);
                    prop_assert!([2.0, 3.0, 4.0, 5.0].contains(&x[2]));
                }
                for ind in &r.population {
                    prop_assert!(r.bounds.contains(&ind.genome));
                }
                if !nsga3 {
                    for w in r.stats.windows(2) {
                        for k in 0..8 {
                            if let (Some(a), Some(b)) = (w[0].best[k], w[1].best[k]) {
                                prop_assert!(b <= a, "objective {} got worse: {} -> {}", k + 1, a, b);
                            }
                        }
                    }
                }
            }
        }
    }
}
