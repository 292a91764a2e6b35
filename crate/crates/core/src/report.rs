//! Pareto extraction, trade-off exports and surrogate validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::nsga::{fast_nondominated_sort, Solution};
use crate::objectives::{ObjectiveTable, ObjectiveVector};
use crate::oracle::{OracleOutputs, Predictor, OUTPUT_DIM};

/// Guard against division by zero in relative discrepancies.
pub const DISCREPANCY_EPS: f64 = 1e-12;

/// Number of histogram bins in distribution summaries.
pub const HISTOGRAM_BINS: usize = 32;

/// Drops repeated genomes (keeping the first), then returns the members of
/// the first front under constrained dominance in their input order.
pub fn extract_pareto(solutions: &[Solution]) -> Result<Vec<Solution>> {
    if solutions.is_empty() {
        return Err(Error::Empty("solutions"));
    }
    let mut unique: Vec<&Solution> = Vec::with_capacity(solutions.len());
    let mut seen = std::collections::HashSet::new();
    for s in solutions {
        let key: Vec<u64> = s.x.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            unique.push(s);
        }
    }
    let objs: Vec<ObjectiveVector> = unique.iter().map(|s| s.objectives.clone()).collect();
    let fronts = fast_nondominated_sort(&objs)?;
    Ok(fronts[0].iter().map(|&i| unique[i].clone()).collect())
}

/// For every objective, the indices of the `k` feasible solutions with the
/// smallest stored value (best raw value), ties by index.
pub fn top_k_per_objective(solutions: &[Solution], k: usize) -> Vec<Vec<usize>> {
    let n_obj = solutions.first().map_or(0, |s| s.objectives.values.len());
    let feasible: Vec<usize> = (0..solutions.len()).filter(|&i| solutions[i].objectives.feasible).collect();
    (0..n_obj)
        .map(|j| {
            let mut order = feasible.clone();
            order.sort_by(|&a, &b| {
                solutions[a].objectives.values[j]
                    .total_cmp(&solutions[b].objectives.values[j])
                    .then(a.cmp(&b))
            });
            order.truncate(k);
            order
        })
        .collect()
}

/// Sorted, deduplicated union of the per-objective top lists.
pub fn highlight_union(top: &[Vec<usize>]) -> Vec<usize> {
    let mut all: Vec<usize> = top.concat();
    all.sort_unstable();
    all.dedup();
    all
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelCoordsMeta {
    pub axes: Vec<AxisRange>,
}

/// Writes one row per solution: objective values in display orientation,
/// the inputs, and whether the row is highlighted. Returns the axis ranges
/// written to the sidecar `<path>.meta.json`.
pub fn export_parallel_coordinates(
    path: &Path,
    solutions: &[Solution],
    table: &ObjectiveTable,
    highlighted: &[usize],
) -> Result<ParallelCoordsMeta> {
    let first = solutions.first().ok_or(Error::Empty("solutions"))?;
    if first.objectives.values.len() != table.len() {
        return Err(Error::Shape {
            context: "objective table",
            expected: table.len(),
            found: first.objectives.values.len(),
        });
    }
    let n_x = first.x.len();
    let mut names: Vec<String> = table.objectives.iter().map(|o| o.id.clone()).collect();
    names.extend(io::indexed_names("x", n_x));
    let rows: Vec<Vec<f64>> = solutions
        .iter()
        .map(|s| {
            let mut r: Vec<f64> = table
                .objectives
                .iter()
                .zip(&s.objectives.values)
                .map(|(spec, &v)| spec.display_value(v))
                .collect();
            r.extend(&s.x);
            r
        })
        .collect();

    let mut w = io::csv_writer(path)?;
    let mut header = vec!["algo".to_owned()];
    header.extend(names.iter().cloned());
    header.push("highlight".into());
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (i, (s, r)) in solutions.iter().zip(&rows).enumerate() {
        let mut rec = vec![s.algo.clone()];
        rec.extend(r.iter().map(|&v| io::fmt_f64(v)));
        rec.push(u8::from(highlighted.contains(&i)).to_string());
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    io::finish(w, path)?;

    let axes = names
        .into_iter()
        .enumerate()
        .map(|(c, name)| AxisRange {
            name,
            min: rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min),
            max: rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let meta = ParallelCoordsMeta { axes };
    io::write_json(&meta_path(path), &meta)?;
    Ok(meta)
}

/// `parallel_coords.csv` -> `parallel_coords.meta.json`.
pub fn meta_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("meta.json")
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Counts over `HISTOGRAM_BINS` equal bins spanning `[min, max]`.
    pub histogram: Vec<usize>,
}

impl ColumnSummary {
    pub fn of(name: &str, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("summary column"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        let mut histogram = vec![0; HISTOGRAM_BINS];
        let width = max - min;
        for &v in &sorted {
            let bin = if width > 0.0 {
                (((v - min) / width) * HISTOGRAM_BINS as f64) as usize
            } else {
                0
            };
            histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
        Ok(ColumnSummary {
            name: name.to_owned(),
            min,
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max,
            histogram,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub columns: Vec<ColumnSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub bins: usize,
    pub groups: Vec<GroupSummary>,
}

/// A named set of input rows with their outputs.
pub struct Group<'a> {
    pub name: &'a str,
    pub x: Vec<&'a [f64]>,
    pub y: Vec<[f64; OUTPUT_DIM]>,
}

/// Per-column five-number summaries and histograms of every group.
pub fn summarize_distributions(groups: &[Group<'_>]) -> Result<DistributionSummary> {
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if g.x.is_empty() || g.x.len() != g.y.len() {
            return Err(Error::Shape {
                context: "distribution group",
                expected: g.x.len(),
                found: g.y.len(),
            });
        }
        let n_x = g.x[0].len();
        let mut columns = Vec::with_capacity(n_x + OUTPUT_DIM);
        for c in 0..n_x {
            let vals: Vec<f64> = g.x.iter().map(|r| r[c]).collect();
            columns.push(ColumnSummary::of(&format!("x{}", c + 1), &vals)?);
        }
        for c in 0..OUTPUT_DIM {
            let vals: Vec<f64> = g.y.iter().map(|r| r[c]).collect();
            columns.push(ColumnSummary::of(&format!("y{}", c + 1), &vals)?);
        }
        out.push(GroupSummary {
            group: g.name.to_owned(),
            count: g.x.len(),
            columns,
        });
    }
    Ok(DistributionSummary {
        bins: HISTOGRAM_BINS,
        groups: out,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRecord {
    pub case: usize,
    pub x: Vec<f64>,
    pub predicted: [f64; OUTPUT_DIM],
    /// Oracle outputs, absent when recomputation failed.
    pub computed: Option<[f64; OUTPUT_DIM]>,
    pub discrepancy: Option<[f64; OUTPUT_DIM]>,
    /// Whether the oracle considers the point physical.
    pub feasible: Option<bool>,
    pub error: Option<String>,
}

impl ValidationRecord {
    pub fn mean_discrepancy(&self) -> Option<f64> {
        self.discrepancy.map(|d| d.iter().sum::<f64>() / OUTPUT_DIM as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub records: Vec<ValidationRecord>,
    /// Mean relative discrepancy per output over recomputed cases.
    pub per_output: [f64; OUTPUT_DIM],
    /// Mean of the per-case means.
    pub mean: f64,
    pub infeasible: usize,
}

/// `|predicted - computed| / max(|computed|, eps)` per output.
pub fn relative_discrepancy(pred: &[f64; OUTPUT_DIM], truth: &[f64; OUTPUT_DIM]) -> [f64; OUTPUT_DIM] {
    std::array::from_fn(|j| (pred[j] - truth[j]).abs() / truth[j].abs().max(DISCREPANCY_EPS))
}

/// Candidates to validate: the best feasible solution of each objective in
/// objective order without repeats, then the most isolated remaining ones by
/// crowding distance.
pub fn select_candidates(solutions: &[Solution], n: usize) -> Result<Vec<usize>> {
    if n > solutions.len() {
        return Err(Error::Config(format!(
            "cannot select {n} candidates from {} solutions",
            solutions.len()
        )));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for best in top_k_per_objective(solutions, 1) {
        if let Some(&i) = best.first() {
            if !chosen.contains(&i) && chosen.len() < n {
                chosen.push(i);
            }
        }
    }
    let mut rest: Vec<usize> = (0..solutions.len()).filter(|i| !chosen.contains(i)).collect();
    rest.sort_by(|&a, &b| solutions[b].crowding.total_cmp(&solutions[a].crowding).then(a.cmp(&b)));
    chosen.extend(rest.into_iter().take(n - chosen.len()));
    Ok(chosen)
}

/// Recomputes `n` selected candidates with `oracle` and compares them with
/// the predictions of `predictor`. Oracle failures are recorded per case.
pub fn validate_candidates(
    solutions: &[Solution],
    predictor: &dyn Predictor,
    oracle: &(dyn Fn(&[f64]) -> Result<OracleOutputs> + Sync),
    n: usize,
) -> Result<ValidationReport> {
    let picks = select_candidates(solutions, n)?;
    let mut records = Vec::with_capacity(n);
    for (case, &i) in picks.iter().enumerate() {
        let x = solutions[i].x.clone();
        let predicted = predictor.predict(&x)?;
        let rec = match oracle(&x) {
            Ok(o) => ValidationRecord {
                case: case + 1,
                discrepancy: Some(relative_discrepancy(&predicted, &o.y)),
                computed: Some(o.y),
                feasible: Some(o.feasible),
                error: None,
                predicted,
                x,
            },
            Err(e) => {
                log::warn!("validation case {}: oracle failed: {e}", case + 1);
                ValidationRecord {
                    case: case + 1,
                    x,
                    predicted,
                    computed: None,
                    discrepancy: None,
                    feasible: None,
                    error: Some(e.to_string()),
                }
            }
        };
        if rec.feasible == Some(false) {
            log::warn!("validation case {} is non-physical on recomputation", case + 1);
        }
        records.push(rec);
    }
    let done: Vec<&ValidationRecord> = records.iter().filter(|r| r.discrepancy.is_some()).collect();
    if done.is_empty() {
        return Err(Error::Numeric("no validation case could be recomputed".into()));
    }
    let per_output = std::array::from_fn(|j| {
        done.iter().map(|r| r.discrepancy.unwrap()[j]).sum::<f64>() / done.len() as f64
    });
    let mean = done.iter().map(|r| r.mean_discrepancy().unwrap()).sum::<f64>() / done.len() as f64;
    let infeasible = records.iter().filter(|r| r.feasible == Some(false)).count();
    Ok(ValidationReport {
        records,
        per_output,
        mean,
        infeasible,
    })
}

/// One row per case with inputs, predicted and computed outputs and the
/// percent discrepancies, followed by a `mean` row.
pub fn write_validation_csv(path: &Path, report: &ValidationReport) -> Result<()> {
    let n_x = report.records.first().map_or(0, |r| r.x.len());
    let mut header = vec!["case".to_owned()];
    header.extend(io::indexed_names("x", n_x));
    header.extend(io::indexed_names("pred_y", OUTPUT_DIM));
    header.extend(io::indexed_names("sim_y", OUTPUT_DIM));
    header.extend(io::indexed_names("disc_pct_y", OUTPUT_DIM));
    header.extend(["disc_pct_mean", "feasible"].map(String::from));
    let mut w = io::csv_writer(path)?;
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let cell = |v: Option<f64>| v.map_or(String::new(), io::fmt_f64);
    for r in &report.records {
        let mut row = vec![r.case.to_string()];
        row.extend(r.x.iter().map(|&v| io::fmt_f64(v)));
        row.extend(r.predicted.iter().map(|&v| io::fmt_f64(v)));
        row.extend((0..OUTPUT_DIM).map(|j| cell(r.computed.map(|c| c[j]))));
        row.extend((0..OUTPUT_DIM).map(|j| cell(r.discrepancy.map(|d| 100.0 * d[j]))));
        row.push(cell(r.mean_discrepancy().map(|m| 100.0 * m)));
        row.push(r.feasible.map_or(String::new(), |f| u8::from(f).to_string()));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    let mut row = vec!["mean".to_owned()];
    row.extend(std::iter::repeat_n(String::new(), n_x + 2 * OUTPUT_DIM));
    row.extend(report.per_output.iter().map(|&d| io::fmt_f64(100.0 * d)));
    row.push(io::fmt_f64(100.0 * report.mean));
    row.push(String::new());
    w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    io::finish(w, path)
}
