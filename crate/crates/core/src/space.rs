//! The twelve-dimensional process parameter space, Latin hypercube designs and
//! min-max scaling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::rng;

/// Number of process inputs of the floating-zone model.
pub const INPUT_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Continuous,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub low: f64,
    pub high: f64,
    pub unit: String,
}

impl ParameterSpec {
    pub fn continuous(name: &str, low: f64, high: f64, unit: &str) -> Self {
        ParameterSpec {
            name: name.to_owned(),
            kind: ParamKind::Continuous,
            low,
            high,
            unit: unit.to_owned(),
        }
    }

    pub fn integer(name: &str, low: i64, high: i64, unit: &str) -> Self {
        ParameterSpec {
            name: name.to_owned(),
            kind: ParamKind::Integer,
            low: low as f64,
            high: high as f64,
            unit: unit.to_owned(),
        }
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    /// Maps a value to `[0, 1]` over the declared range.
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.low) / self.width()
    }

    /// Maps a unit-interval coordinate onto the parameter. Integer parameters
    /// split the unit interval into equal-width bins, one per level.
    pub fn from_unit(&self, u: f64) -> f64 {
        match self.kind {
            ParamKind::Continuous => self.low + u * self.width(),
            ParamKind::Integer => {
                let levels = self.width() + 1.0;
                (self.low + (u * levels).floor()).min(self.high)
            }
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite()) || self.low >= self.high {
            return Err(Error::InvalidSpace(format!(
                "{}: need finite low < high, got [{}, {}]",
                self.name, self.low, self.high
            )));
        }
        if self.kind == ParamKind::Integer && (self.low.fract() != 0.0 || self.high.fract() != 0.0) {
            return Err(Error::InvalidSpace(format!(
                "{}: integer parameter needs integral bounds",
                self.name
            )));
        }
        Ok(())
    }
}

/// An ordered list of parameter definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    params: Vec<ParameterSpec>,
}

impl ParameterSpace {
    pub fn new(params: Vec<ParameterSpec>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidSpace("no parameters".into()));
        }
        for (i, p) in params.iter().enumerate() {
            p.check()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidSpace(format!("duplicate name {}", p.name)));
            }
        }
        Ok(ParameterSpace { params })
    }

    /// The floating-zone inputs x1..x12: crystal geometry and pulling rate,
    /// inductor geometry and frequency, reflector geometry and emissivity.
    pub fn floating_zone() -> Self {
        use ParameterSpec as P;
        ParameterSpace::new(vec![
            P::continuous("crystal_radius", 75.0, 100.0, "mm"),
            P::continuous("pulling_rate", 1.0, 3.5, "mm/min"),
            P::integer("side_slit_count", 2, 5, "1"),
            P::continuous("side_slit_length", 30.0, 60.0, "mm"),
            P::continuous("side_slit_width", 1.5, 4.0, "mm"),
            P::continuous("main_slit_width", 0.5, 4.0, "mm"),
            P::continuous("bottom_angle", 1.0, 4.0, "deg"),
            P::continuous("frequency", 2.0, 3.5, "MHz"),
            P::continuous("reflector_height", 20.0, 80.0, "mm"),
            P::continuous("reflector_radius_offset", 5.0, 40.0, "mm"),
            P::continuous("reflector_position", -5.0, 10.0, "mm"),
            P::continuous("reflector_emissivity", 0.10, 0.85, "1"),
        ])
        .expect("built-in space is valid")
    }

    /// Loads a space definition file and requires the twelve floating-zone inputs.
    pub fn load(path: &Path) -> Result<Self> {
        let raw: ParameterSpace = io::read_json(path)?;
        let space = ParameterSpace::new(raw.params)?;
        if space.dim() != INPUT_DIM {
            return Err(Error::InvalidSpace(format!(
                "{}: expected {INPUT_DIM} parameters, found {}",
                path.display(),
                space.dim()
            )));
        }
        Ok(space)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn get(&self, i: usize) -> &ParameterSpec {
        &self.params[i]
    }

    /// Checks a point against the box and integrality rules.
    pub fn validate_point(&self, x: &[f64]) -> Result<PointCheck> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                context: "point",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut violations = Vec::new();
        for (i, (p, &v)) in self.params.iter().zip(x).enumerate() {
            let column = format!("x{}", i + 1);
            if !(v >= p.low && v <= p.high) {
                violations.push(Error::OutOfRange {
                    column: column.clone(),
                    value: v,
                    low: p.low,
                    high: p.high,
                });
            }
            if p.kind == ParamKind::Integer && v.is_finite() && v.fract() != 0.0 {
                violations.push(Error::NotIntegral { column, value: v });
            }
        }
        Ok(PointCheck { violations })
    }

    /// Like [`validate_point`](Self::validate_point) but fails on the first violation.
    pub fn require_point(&self, x: &[f64]) -> Result<()> {
        match self.validate_point(x)?.violations.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Outcome of [`ParameterSpace::validate_point`].
#[derive(Debug)]
pub struct PointCheck {
    pub violations: Vec<Error>,
}

impl PointCheck {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Where a sample is placed inside its stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Uniformly random within the stratum.
    #[default]
    Jittered,
    /// At the stratum centre.
    Midpoint,
}

/// Sampled design points in physical units, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Writes the `x1..xn` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.rows.first().map_or(INPUT_DIM, Vec::len);
        let mut w = io::csv_writer(path)?;
        w.write_record(io::indexed_names("x", dim))
            .map_err(|e| Error::csv(path, e))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| io::fmt_f64(v)))
                .map_err(|e| Error::csv(path, e))?;
        }
        io::finish(w, path)
    }

    /// Reads an `x1..xn` CSV and validates every row against `space`.
    pub fn read_csv(path: &Path, space: &ParameterSpace) -> Result<Self> {
        let mut reader = io::csv_reader(path)?;
        let header = io::headers(path, &mut reader)?;
        let expected = io::indexed_names("x", space.dim());
        if header != expected {
            return Err(Error::Header {
                path: path.to_path_buf(),
                message: format!("expected {}, found {}", expected.join(","), header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let line = io::record_line(&record);
            let row = record
                .iter()
                .zip(&expected)
                .map(|(cell, col)| io::parse_cell(path, line, col, cell))
                .collect::<Result<Vec<f64>>>()?;
            if let Some(e) = space.validate_point(&row)?.violations.into_iter().next() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: e.to_string(),
                });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptyDesign);
        }
        Ok(DesignMatrix { rows, seed: 0 })
    }
}

/// Latin hypercube sample of `s` points with jittered strata.
pub fn lhs_sample(space: &ParameterSpace, s: usize, seed: u64) -> Result<DesignMatrix> {
    lhs_sample_with(space, s, seed, Placement::Jittered)
}

/// Latin hypercube sample: every dimension is cut into `s` equal strata and
/// each stratum receives exactly one sample; strata are paired across
/// dimensions by independent random permutations.
pub fn lhs_sample_with(
    space: &ParameterSpace,
    s: usize,
    seed: u64,
    placement: Placement,
) -> Result<DesignMatrix> {
    if s == 0 {
        return Err(Error::EmptyDesign);
    }
    let mut rng = rng::seeded(seed);
    let mut rows = vec![Vec::with_capacity(space.dim()); s];
    let inv = 1.0 / s as f64;
    for p in space.params() {
        let mut strata: Vec<usize> = (0..s).collect();
        strata.shuffle(&mut rng);
        for (row, &stratum) in rows.iter_mut().zip(&strata) {
            let offset = match placement {
                Placement::Jittered => rng.random::<f64>(),
                Placement::Midpoint => 0.5,
            };
            let u = (stratum as f64 + offset) * inv;
            row.push(p.from_unit(u));
        }
    }
    Ok(DesignMatrix { rows, seed })
}

/// Min-max range of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn fit(column: &str, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            return Err(Error::Empty("column to scale"));
        }
        if max <= min {
            return Err(Error::DegenerateScale {
                column: column.to_owned(),
                value: min,
            });
        }
        Ok(ColumnRange { min, max })
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// Per-column min-max state for inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub inputs: Vec<ColumnRange>,
    pub outputs: Vec<ColumnRange>,
}

impl Scaler {
    pub fn fit(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self> {
        let first_x = xs.first().ok_or(Error::Empty("rows to scale"))?;
        let first_y = ys.first().ok_or(Error::Empty("rows to scale"))?;
        let inputs = (0..first_x.len())
            .map(|j| ColumnRange::fit(&format!("x{}", j + 1), xs.iter().map(|r| r[j])))
            .collect::<Result<_>>()?;
        let outputs = (0..first_y.len())
            .map(|j| ColumnRange::fit(&format!("y{}", j + 1), ys.iter().map(|r| r[j])))
            .collect::<Result<_>>()?;
        Ok(Scaler { inputs, outputs })
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        self.inputs.iter().zip(x).map(|(c, &v)| c.scale(v)).collect()
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        self.inputs.iter().zip(x).map(|(c, &v)| c.unscale(v)).collect()
    }

    pub fn scale_y(&self, y: &[f64]) -> Vec<f64> {
        self.outputs.iter().zip(y).map(|(c, &v)| c.scale(v)).collect()
    }

    pub fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        self.outputs.iter().zip(y).map(|(c, &v)| c.unscale(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ParameterSpace {
        ParameterSpace::new(vec![
            ParameterSpec::continuous("a", 0.0, 1.0, "1"),
            ParameterSpec::continuous("b", 0.0, 1.0, "1"),
        ])
        .unwrap()
    }

    #[test]
    fn floating_zone_space_matches_input_table() {
        let s = ParameterSpace::floating_zone();
        assert_eq!(s.dim(), 12);
        let bounds: Vec<(f64, f64)> = s.params().iter().map(|p| (p.low, p.high)).collect();
        assert_eq!(
            bounds,
            vec![
                (75.0, 100.0),
                (1.0, 3.5),
                (2.0, 5.0),
                (30.0, 60.0),
                (1.5, 4.0),
                (0.5, 4.0),
                (1.0, 4.0),
                (2.0, 3.5),
                (20.0, 80.0),
                (5.0, 40.0),
                (-5.0, 10.0),
                (0.10, 0.85),
            ]
        );
        let kinds: Vec<_> = s.params().iter().map(|p| p.kind).collect();
        assert_eq!(kinds.iter().filter(|&&k| k == ParamKind::Integer).count(), 1);
        assert_eq!(kinds[2], ParamKind::Integer);
    }

    #[test]
    fn four_strata_one_sample_each() {
        let d = lhs_sample(&unit_square(), 4, 3).unwrap();
        for j in 0..2 {
            let mut bins: Vec<usize> = d.column(j).iter().map(|v| (v * 4.0).floor() as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn single_sample_lies_in_range() {
        let space = ParameterSpace::floating_zone();
        let d = lhs_sample(&space, 1, 99).unwrap();
        assert_eq!(d.len(), 1);
        assert!(space.validate_point(&d.rows[0]).unwrap().is_valid());
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(matches!(
            lhs_sample(&unit_square(), 0, 1),
            Err(Error::EmptyDesign)
        ));
    }

    #[test]
    fn large_design_is_reproducible() {
        let space = ParameterSpace::floating_zone();
        let a = lhs_sample(&space, 2500, 42).unwrap();
        let b = lhs_sample(&space, 2500, 42).unwrap();
        let bits = |d: &DesignMatrix| -> Vec<u64> { d.rows.iter().flatten().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&lhs_sample(&space, 2500, 43).unwrap()));
    }

    #[test]
    fn integer_levels_are_balanced() {
        let space = ParameterSpace::floating_zone();
        let d = lhs_sample(&space, 400, 5).unwrap();
        let mut counts = [0usize; 4];
        for v in d.column(2) {
            assert_eq!(v.fract(), 0.0);
            counts[(v - 2.0) as usize] += 1;
        }
        assert_eq!(counts, [100; 4]);
    }

    #[test]
    fn midpoint_placement_centres_strata() {
        let d = lhs_sample_with(&unit_square(), 4, 1, Placement::Midpoint).unwrap();
        let mut col = d.column(0);
        col.sort_by(f64::total_cmp);
        assert_eq!(col, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn invalid_spaces_rejected() {
        let bad = ParameterSpace::new(vec![ParameterSpec::continuous("a", 1.0, 1.0, "1")]);
        assert!(matches!(bad, Err(Error::InvalidSpace(_))));
        let dup = ParameterSpace::new(vec![
            ParameterSpec::continuous("a", 0.0, 1.0, "1"),
            ParameterSpec::continuous("a", 0.0, 2.0, "1"),
        ]);
        assert!(matches!(dup, Err(Error::InvalidSpace(_))));
        let frac = ParameterSpace::new(vec![ParameterSpec {
            kind: ParamKind::Integer,
            ..ParameterSpec::continuous("n", 0.5, 3.0, "1")
        }]);
        assert!(matches!(frac, Err(Error::InvalidSpace(_))));
    }

    fn midpoint() -> Vec<f64> {
        ParameterSpace::floating_zone()
            .params()
            .iter()
            .map(|p| match p.kind {
                ParamKind::Integer => 3.0,
                ParamKind::Continuous => 0.5 * (p.low + p.high),
            })
            .collect()
    }

    #[test]
    fn midpoint_is_valid() {
        let space = ParameterSpace::floating_zone();
        assert!(space.validate_point(&midpoint()).unwrap().is_valid());
    }

    #[test]
    fn radius_above_range_names_column() {
        let space = ParameterSpace::floating_zone();
        let mut x = midpoint();
        x[0] = 101.0;
        let check = space.validate_point(&x).unwrap();
        assert!(!check.is_valid());
        assert!(check.violations[0].to_string().starts_with("x1 = 101"));
    }

    #[test]
    fn fractional_slit_count_invalid() {
        let space = ParameterSpace::floating_zone();
        let mut x = midpoint();
        x[2] = 3.5;
        let check = space.validate_point(&x).unwrap();
        assert!(matches!(check.violations[..], [Error::NotIntegral { .. }]));
    }

    #[test]
    fn wrong_arity_is_shape_error() {
        let space = ParameterSpace::floating_zone();
        assert!(matches!(
            space.validate_point(&[1.0; 11]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn min_max_scaling() {
        let c = ColumnRange::fit("c", [10.0, 20.0, 30.0]).unwrap();
        let scaled: Vec<f64> = [10.0, 20.0, 30.0].iter().map(|&v| c.scale(v)).collect();
        assert_eq!(scaled, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.scale(35.0), 1.25);
        assert!(matches!(
            ColumnRange::fit("k", [2.0, 2.0]),
            Err(Error::DegenerateScale { .. })
        ));
    }

    #[test]
    fn space_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.json");
        let space = ParameterSpace::floating_zone();
        space.save(&path).unwrap();
        assert_eq!(ParameterSpace::load(&path).unwrap(), space);
    }

    #[test]
    fn design_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        let space = ParameterSpace::floating_zone();
        let d = lhs_sample(&space, 17, 8).unwrap();
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,x11,x12\n"));
        assert!(!text.contains('\r'));
        assert_eq!(DesignMatrix::read_csv(&path, &space).unwrap().rows, d.rows);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn every_dimension_is_stratified(s in 1usize..200, seed in any::<u64>()) {
                let space = ParameterSpace::floating_zone();
                let d = lhs_sample(&space, s, seed).unwrap();
                for (j, p) in space.params().iter().enumerate() {
                    if p.kind == ParamKind::Integer {
                        continue;
                    }
                    let mut hit = vec![false; s];
                    for v in d.column(j) {
                        prop_assert!(v >= p.low && v <= p.high);
                        let k = ((p.normalize(v) * s as f64).floor() as usize).min(s - 1);
                        prop_assert!(!hit[k]);
                        hit[k] = true;
                    }
                }
                for row in &d.rows {
                    prop_assert!(space.validate_point(row).unwrap().is_valid());
                }
            }

            #[test]
            fn scaling_inverts_and_preserves_order(values in proptest::collection::vec(-1e6f64..1e6, 2..50)) {
                prop_assume!(values.iter().any(|&v| v != values[0]));
                let c = ColumnRange::fit("v", values.iter().copied()).unwrap();
                for &v in &values {
                    let back = c.unscale(c.scale(v));
                    prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(c.max - c.min));
                }
                for w in values.windows(2) {
                    if w[0] < w[1] {
                        prop_assert!(c.scale(w[0]) < c.scale(w[1]));
                    }
                }
            }
        }
    }
}
