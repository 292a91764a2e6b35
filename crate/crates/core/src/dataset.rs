//! Simulation datasets: generation from the proxy, CSV storage and ingestion
//! of externally computed results, feasibility filtering and scaling.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::io;
use crate::oracle::{self, OUTPUT_DIM};
use crate::rng;
use crate::space::{lhs_sample, ParameterSpace, Scaler, INPUT_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: [f64; OUTPUT_DIM],
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    BuiltinOracle,
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn infeasible_fraction(&self) -> f64 {
        self.rows.iter().filter(|r| !r.feasible).count() as f64 / self.rows.len() as f64
    }

    /// The rows usable for training: non-physical runs are dropped.
    pub fn training_view(&self) -> Vec<&Sample> {
        self.rows.iter().filter(|r| r.feasible).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = io::csv_writer(path)?;
        let mut header = io::indexed_names("x", INPUT_DIM);
        header.extend(io::indexed_names("y", OUTPUT_DIM));
        header.push("feasible".into());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            let cells = r
                .x
                .iter()
                .chain(&r.y)
                .map(|&v| io::fmt_f64(v))
                .chain(std::iter::once(if r.feasible { "1" } else { "0" }.to_owned()));
            w.write_record(cells).map_err(|e| Error::csv(path, e))?;
        }
        io::finish(w, path)
    }

    /// Reads a `x1..x12,y1..y6[,feasible]` CSV; a missing feasibility column
    /// means every row is feasible.
    pub fn ingest_csv(path: &Path) -> Result<Self> {
        let mut reader = io::csv_reader(path)?;
        let header = io::headers(path, &mut reader)?;
        let mut expected = io::indexed_names("x", INPUT_DIM);
        expected.extend(io::indexed_names("y", OUTPUT_DIM));
        let has_flag = match header.len() {
            n if n == expected.len() => false,
            n if n == expected.len() + 1 && header[n - 1] == "feasible" => true,
            _ => {
                return Err(Error::Header {
                    path: path.to_path_buf(),
                    message: format!("expected {}[,feasible], found {}", expected.join(","), header.join(",")),
                })
            }
        };
        if header[..expected.len()] != expected[..] {
            return Err(Error::Header {
                path: path.to_path_buf(),
                message: format!("expected {}[,feasible], found {}", expected.join(","), header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| match e.kind() {
                csv::ErrorKind::UnequalLengths { pos, .. } => Error::Parse {
                    path: path.to_path_buf(),
                    line: pos.as_ref().map_or(0, |p| p.line()),
                    message: "wrong number of fields".into(),
                },
                _ => Error::csv(path, e),
            })?;
            let line = io::record_line(&record);
            let mut values = Vec::with_capacity(expected.len());
            for (cell, col) in record.iter().zip(&expected) {
                values.push(io::parse_cell(path, line, col, cell)?);
            }
            let feasible = if has_flag {
                match &record[expected.len()] {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line,
                            message: format!("feasible must be 0 or 1, got {other:?}"),
                        })
                    }
                }
            } else {
                true
            };
            let mut y = [0.0; OUTPUT_DIM];
            y.copy_from_slice(&values[INPUT_DIM..]);
            values.truncate(INPUT_DIM);
            rows.push(Sample { x: values, y, feasible });
        }
        Ok(Dataset {
            rows,
            provenance: Provenance::Ingested,
        })
    }
}

/// Evaluates each design row with the proxy, keeping design order.
pub fn simulate_design(rows: &[Vec<f64>]) -> Result<Dataset> {
    let rows = rows
        .iter()
        .map(|x| {
            let o = oracle::evaluate(x)?;
            Ok(Sample {
                x: x.clone(),
                y: o.y,
                feasible: o.feasible,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        rows,
        provenance: Provenance::BuiltinOracle,
    })
}

/// Latin hypercube design followed by proxy evaluation.
pub fn generate_dataset(space: &ParameterSpace, s: usize, seed: u64) -> Result<Dataset> {
    let design = lhs_sample(space, s, seed)?;
    simulate_design(&design.rows)
}

/// Scaled inputs and targets as dense row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledData {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl ScaledData {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> ScaledData {
        ScaledData {
            x: self.x.select(ndarray::Axis(0), idx),
            y: self.y.select(ndarray::Axis(0), idx),
        }
    }

    pub fn apply(scaler: &Scaler, rows: &[&Sample]) -> ScaledData {
        let n = rows.len();
        let mut x = Array2::zeros((n, INPUT_DIM));
        let mut y = Array2::zeros((n, OUTPUT_DIM));
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in scaler.scale_x(&r.x).into_iter().enumerate() {
                x[[i, j]] = v;
            }
            for (j, v) in scaler.scale_y(&r.y).into_iter().enumerate() {
                y[[i, j]] = v;
            }
        }
        ScaledData { x, y }
    }
}

/// Fits a min-max scaler on `rows` and returns the scaled copy with it.
pub fn scale_fit_transform(rows: &[&Sample]) -> Result<(ScaledData, Scaler)> {
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| r.x.clone()).collect();
    let ys: Vec<Vec<f64>> = rows.iter().map(|r| r.y.to_vec()).collect();
    let scaler = Scaler::fit(&xs, &ys)?;
    Ok((ScaledData::apply(&scaler, rows), scaler))
}

/// Seeded shuffle then split; returns `(train, test)` index lists.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let train = idx.split_off(n_test);
    (train, idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infeasible_rate_near_analytic_value() {
        // P(U * V > t) for independent uniforms is 1 - t + t ln t.
        let t = oracle::FREEZE_THRESHOLD;
        let analytic = 1.0 - t + t * t.ln();
        assert!((analytic - 0.0435).abs() < 1e-4);

        // Monte Carlo cross-check of the analytic value.
        use rand::Rng;
        let mut r = rng::seeded(1);
        let draws = 1_000_000;
        let hits = (0..draws)
            .filter(|_| r.random::<f64>() * r.random::<f64>() > t)
            .count();
        assert!((hits as f64 / draws as f64 - analytic).abs() < 1.5e-3);

        let space = ParameterSpace::floating_zone();
        let d = generate_dataset(&space, 2500, 42).unwrap();
        let f = d.infeasible_fraction();
        assert!((0.03..=0.06).contains(&f), "{f}");
    }

    #[test]
    fn feasible_rows_satisfy_predicate() {
        let space = ParameterSpace::floating_zone();
        let d = generate_dataset(&space, 500, 9).unwrap();
        for r in d.training_view() {
            let u6 = space.get(5).normalize(r.x[5]);
            let u12 = space.get(11).normalize(r.x[11]);
            assert!(u12 * (1.0 - u6) <= oracle::FREEZE_THRESHOLD);
        }
        assert_eq!(d.training_view().len(), d.rows.iter().filter(|r| r.feasible).count());
    }

    #[test]
    fn generation_is_deterministic() {
        let space = ParameterSpace::floating_zone();
        assert_eq!(
            generate_dataset(&space, 10, 5).unwrap(),
            generate_dataset(&space, 10, 5).unwrap()
        );
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,x11,x12,y1,y2,y3,y4,y5,y6";

    #[test]
    fn ingest_without_flag_defaults_feasible() {
        let dir = tempfile::tempdir().unwrap();
        let row = "80,2,3,40,2,1,2,3,50,10,0,0.5,25,30,50,900,1,0.002";
        let p = write(dir.path(), "a.csv", &format!("{HEADER}\n{row}\n{row}\n{row}\n"));
        let d = Dataset::ingest_csv(&p).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.provenance, Provenance::Ingested);
        assert!(d.rows.iter().all(|r| r.feasible));
        assert_eq!(d.rows[0].y[3], 900.0);
    }

    #[test]
    fn ingest_reports_nan_line() {
        let dir = tempfile::tempdir().unwrap();
        let good = "80,2,3,40,2,1,2,3,50,10,0,0.5,25,30,50,900,1,0.002";
        let bad = "80,2,3,40,2,1,2,3,50,10,0,0.5,25,NaN,50,900,1,0.002";
        let p = write(dir.path(), "b.csv", &format!("{HEADER}\n{good}\n{bad}\n"));
        match Dataset::ingest_csv(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("y2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_bad_header_and_arity() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "x1,x2\n1,2\n");
        assert!(matches!(Dataset::ingest_csv(&p), Err(Error::Header { .. })));
        let p = write(dir.path(), "d.csv", &format!("{HEADER}\n1,2,3\n"));
        assert!(matches!(Dataset::ingest_csv(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.csv");
        let space = ParameterSpace::floating_zone();
        let d = generate_dataset(&space, 300, 2).unwrap();
        d.write_csv(&p).unwrap();
        let back = Dataset::ingest_csv(&p).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in back.rows.iter().zip(&d.rows) {
            assert_eq!(a.feasible, b.feasible);
            for (u, v) in a.x.iter().chain(&a.y).zip(b.x.iter().chain(&b.y)) {
                assert!((u - v).abs() <= 1e-9 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn split_is_seeded_partition() {
        let (tr, te) = train_test_split(2390, 0.1, 3);
        assert_eq!(te.len(), 239);
        assert_eq!(tr.len(), 2151);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..2390).collect::<Vec<_>>());
        assert_eq!(train_test_split(2390, 0.1, 3), (tr, te));
    }

    #[test]
    fn scaled_training_rows_span_unit_interval() {
        let space = ParameterSpace::floating_zone();
        let d = generate_dataset(&space, 200, 1).unwrap();
        let (scaled, scaler) = scale_fit_transform(&d.training_view()).unwrap();
        for col in scaled.x.columns().into_iter().chain(scaled.y.columns()) {
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((min, max), (0.0, 1.0));
        }
        assert_eq!(scaler.inputs.len(), 12);
        assert_eq!(scaler.outputs.len(), 6);
    }
}
