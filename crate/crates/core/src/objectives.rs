//! The objective table: which quantity each objective reads, whether it is
//! maximised, minimised or kept inside an interval, and its constraint.
//!
//! Every stored objective value is in minimisation orientation. Maximised
//! quantities are negated; interval objectives store the distance to the
//! interval. Constraint violations are normalised by the magnitude of their
//! bound so that millimetres, megapascals and volts can be summed.

use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::oracle::{Predictor, OUTPUT_DIM};
use crate::space::INPUT_DIM;

/// Lower end of the defect-free Voronkov window, cm²/(min·K).
pub const VORONKOV_LB: f64 = 1.3e-3;
/// Upper end of the defect-free Voronkov window, cm²/(min·K).
pub const VORONKOV_UB: f64 = 2.2e-3;

/// Distance of `value` to `[lower, upper]`, zero inside.
pub fn interval_penalty(value: f64, lower: f64, upper: f64) -> f64 {
    if value < lower {
        lower - value
    } else if value > upper {
        value - upper
    } else {
        0.0
    }
}

/// Distance of the Voronkov ratio to the defect-free window.
pub fn voronkov_penalty(gamma: f64) -> f64 {
    interval_penalty(gamma, VORONKOV_LB, VORONKOV_UB)
}

/// Where an objective reads its raw value: an input `x_i` or a model output `y_j`.
///
/// Serialised as `"x1"`..`"x12"` or `"y1"`..`"y6"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Source {
    /// Zero-based input index.
    Input(usize),
    /// Zero-based output index.
    Output(usize),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Input(i) => write!(f, "x{}", i + 1),
            Source::Output(j) => write!(f, "y{}", j + 1),
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Source {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let bad = || format!("source must look like x3 or y2, got {s:?}");
        let (kind, num) = s.split_at_checked(1).ok_or_else(bad)?;
        let n: usize = num.parse().map_err(|_| bad())?;
        match (kind, n) {
            ("x", 1..=INPUT_DIM) => Ok(Source::Input(n - 1)),
            ("y", 1..=OUTPUT_DIM) => Ok(Source::Output(n - 1)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Direction {
    Maximize,
    Minimize,
    /// Minimise the distance to `[lower, upper]`.
    Interval { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<=")]
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub relation: Relation,
    pub bound: f64,
    #[serde(default)]
    pub unit: String,
}

impl Constraint {
    pub fn at_least(bound: f64, unit: &str) -> Self {
        Constraint {
            relation: Relation::AtLeast,
            bound,
            unit: unit.into(),
        }
    }

    pub fn at_most(bound: f64, unit: &str) -> Self {
        Constraint {
            relation: Relation::AtMost,
            bound,
            unit: unit.into(),
        }
    }

    /// Normalised violation of the bound by a raw value.
    pub fn violation(&self, v: f64) -> f64 {
        let b = self.bound;
        match self.relation {
            Relation::AtLeast if b == 0.0 => (-v).max(0.0),
            Relation::AtLeast => ((b - v) / b.abs()).max(0.0),
            Relation::AtMost if b == 0.0 => v.max(0.0),
            Relation::AtMost => ((v - b) / b.abs()).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub id: String,
    pub name: String,
    pub source: Source,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
}

impl ObjectiveSpec {
    pub fn raw_value(&self, x: &[f64], y: &[f64; OUTPUT_DIM]) -> f64 {
        match self.source {
            Source::Input(i) => x[i],
            Source::Output(j) => y[j],
        }
    }

    /// Raw quantity to stored (minimisation) value.
    pub fn stored_value(&self, raw: f64) -> f64 {
        match self.direction {
            Direction::Maximize => -raw,
            Direction::Minimize => raw,
            Direction::Interval { lower, upper } => interval_penalty(raw, lower, upper),
        }
    }

    /// Stored value in the orientation a reader expects: maximised quantities
    /// are un-negated, the rest are unchanged.
    pub fn display_value(&self, stored: f64) -> f64 {
        match self.direction {
            Direction::Maximize => -stored,
            _ => stored,
        }
    }
}

/// Normalised violation of `spec`'s constraint; zero when it has none.
pub fn constraint_violation(spec: &ObjectiveSpec, raw: f64) -> f64 {
    spec.constraint.as_ref().map_or(0.0, |c| c.violation(raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTable {
    pub objectives: Vec<ObjectiveSpec>,
}

static FLOATING_ZONE: LazyLock<ObjectiveTable> = LazyLock::new(ObjectiveTable::build_floating_zone);

impl ObjectiveTable {
    pub fn new(objectives: Vec<ObjectiveSpec>) -> Result<Self> {
        if objectives.len() < 2 {
            return Err(Error::Config("an objective table needs at least two objectives".into()));
        }
        for (i, o) in objectives.iter().enumerate() {
            if objectives[..i].iter().any(|p| p.id == o.id) {
                return Err(Error::Config(format!("duplicate objective id {:?}", o.id)));
            }
            if let Direction::Interval { lower, upper } = o.direction {
                if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                    return Err(Error::Config(format!("objective {}: bad interval [{lower}, {upper}]", o.id)));
                }
            }
            if let Some(c) = &o.constraint {
                if !c.bound.is_finite() {
                    return Err(Error::Config(format!("objective {}: non-finite bound", o.id)));
                }
            }
        }
        Ok(ObjectiveTable { objectives })
    }

    /// The eight floating-zone objectives.
    pub fn floating_zone() -> &'static ObjectiveTable {
        &FLOATING_ZONE
    }

    fn build_floating_zone() -> Self {
        use Direction::*;
        let row = |id: &str, name: &str, source, direction, constraint| ObjectiveSpec {
            id: id.into(),
            name: name.into(),
            source,
            direction,
            constraint,
        };
        let table = vec![
            row("O1", "crystal radius", Source::Input(0), Maximize, Some(Constraint::at_least(85.0, "mm"))),
            row("O2", "pulling rate", Source::Input(1), Maximize, Some(Constraint::at_least(1.5, "mm/min"))),
            row("O3", "radial temperature gradient", Source::Output(0), Maximize, None),
            row("O4", "interface deflection", Source::Output(1), Minimize, Some(Constraint::at_most(70.0, "mm"))),
            row("O5", "exceed stress", Source::Output(2), Minimize, Some(Constraint::at_most(80.0, "MPa"))),
            row("O6", "inductor voltage", Source::Output(3), Minimize, Some(Constraint::at_most(1200.0, "V"))),
            row("O7", "EM inhomogeneity", Source::Output(4), Minimize, Some(Constraint::at_least(0.0, "W/cm2"))),
            row(
                "O8",
                "Voronkov ratio",
                Source::Output(5),
                Interval {
                    lower: VORONKOV_LB,
                    upper: VORONKOV_UB,
                },
                None,
            ),
        ];
        ObjectiveTable::new(table).expect("built-in objective table is valid")
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let table: ObjectiveTable = io::read_json(path)?;
        ObjectiveTable::new(table.objectives)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Objective values for known outputs `y` at `x`.
    pub fn evaluate_outputs(&self, x: &[f64], y: &[f64; OUTPUT_DIM]) -> ObjectiveVector {
        let mut values = Vec::with_capacity(self.len());
        let mut total_violation = 0.0;
        for spec in &self.objectives {
            let raw = spec.raw_value(x, y);
            values.push(spec.stored_value(raw));
            total_violation += constraint_violation(spec, raw);
        }
        ObjectiveVector::new(values, total_violation)
    }

    pub fn evaluate(&self, x: &[f64], predictor: &dyn Predictor) -> Result<ObjectiveVector> {
        let y = predictor.predict(x)?;
        Ok(self.evaluate_outputs(x, &y))
    }
}

/// Stored objective values and the summed constraint violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub values: Vec<f64>,
    pub total_violation: f64,
    pub feasible: bool,
}

impl ObjectiveVector {
    pub fn new(values: Vec<f64>, total_violation: f64) -> Self {
        ObjectiveVector {
            values,
            total_violation,
            feasible: total_violation == 0.0,
        }
    }

    /// Feasible vector with the given values.
    pub fn feasible(values: Vec<f64>) -> Self {
        ObjectiveVector::new(values, 0.0)
    }

    /// Marker for an evaluation that failed: worse than every real vector.
    pub fn worst(n: usize) -> Self {
        ObjectiveVector::new(vec![f64::MAX; n], f64::INFINITY)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite()) && !self.total_violation.is_nan()
    }
}

/// Evaluates the floating-zone objective table at `x`.
pub fn evaluate_objectives(x: &[f64], predictor: &dyn Predictor) -> Result<ObjectiveVector> {
    ObjectiveTable::floating_zone().evaluate(x, predictor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base_x() -> Vec<f64> {
        vec![90.0, 2.0, 3.0, 45.0, 2.0, 2.0, 2.0, 3.0, 50.0, 20.0, 0.0, 0.5]
    }

    fn fixed(y: [f64; 6]) -> impl Fn(&[f64]) -> Result<[f64; 6]> + Sync {
        move |_: &[f64]| Ok(y)
    }

    #[test]
    fn penalty_branches() {
        assert_eq!(voronkov_penalty(1.5e-3), 0.0);
        assert_eq!(voronkov_penalty(VORONKOV_LB), 0.0);
        assert_eq!(voronkov_penalty(VORONKOV_UB), 0.0);
        assert!((voronkov_penalty(1.0e-3) - 3.0e-4).abs() <= 1e-15);
        assert!((voronkov_penalty(3.0e-3) - 8.0e-4).abs() <= 1e-15);
    }

    #[test]
    fn violations() {
        let t = ObjectiveTable::floating_zone();
        let v = constraint_violation(&t.objectives[0], 80.0);
        assert!((v - 5.0 / 85.0).abs() < 1e-15);
        assert!((v - 0.0588).abs() < 1e-4);
        let v = constraint_violation(&t.objectives[5], 1250.0);
        assert!((v - 50.0 / 1200.0).abs() < 1e-15);
        assert_eq!(constraint_violation(&t.objectives[6], 0.3), 0.0);
        assert_eq!(constraint_violation(&t.objectives[6], -0.3), 0.3);
        assert_eq!(constraint_violation(&t.objectives[2], -1e9), 0.0);
        assert_eq!(Constraint::at_most(0.0, "").violation(0.25), 0.25);
    }

    #[test]
    fn table_rows() {
        let t = ObjectiveTable::floating_zone();
        assert_eq!(t.len(), 8);
        let sources: Vec<String> = t.objectives.iter().map(|o| o.source.to_string()).collect();
        assert_eq!(sources, ["x1", "x2", "y1", "y2", "y3", "y4", "y5", "y6"]);
        let constrained: Vec<&str> = t
            .objectives
            .iter()
            .filter(|o| o.constraint.is_some())
            .map(|o| o.id.as_str())
            .collect();
        assert_eq!(constrained, ["O1", "O2", "O4", "O5", "O6", "O7"]);
    }

    #[test]
    fn feasible_example() {
        let o = evaluate_objectives(&base_x(), &fixed([25.0, 40.0, 60.0, 1000.0, 1.0, 1.5e-3])).unwrap();
        assert_eq!(o.values, vec![-90.0, -2.0, -25.0, 40.0, 60.0, 1000.0, 1.0, 0.0]);
        assert_eq!(o.total_violation, 0.0);
        assert!(o.feasible);
    }

    #[test]
    fn single_active_constraint() {
        let mut x = base_x();
        x[0] = 80.0;
        let o = evaluate_objectives(&x, &fixed([25.0, 40.0, 60.0, 1000.0, 1.0, 1.5e-3])).unwrap();
        assert!(!o.feasible);
        assert!((o.total_violation - 5.0 / 85.0).abs() < 1e-15);
    }

    #[test]
    fn penalty_is_not_a_constraint() {
        let o = evaluate_objectives(&base_x(), &fixed([25.0, 40.0, 60.0, 1000.0, 1.0, 3.0e-3])).unwrap();
        assert!((o.values[7] - 8.0e-4).abs() <= 1e-15);
        assert!(o.feasible);
    }

    #[test]
    fn predictor_errors_propagate() {
        let failing = |_: &[f64]| -> Result<[f64; 6]> { Err(Error::Numeric("boom".into())) };
        assert!(evaluate_objectives(&base_x(), &failing).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("objectives.json");
        let t = ObjectiveTable::floating_zone();
        t.save(&path).unwrap();
        assert_eq!(&ObjectiveTable::load(&path).unwrap(), t);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"source\": \"y6\""));
        assert!(text.contains("\">=\""));
    }

    #[test]
    fn bad_tables_rejected() {
        let mut rows = ObjectiveTable::floating_zone().objectives.clone();
        rows[1].id = "O1".into();
        assert!(ObjectiveTable::new(rows).is_err());
        assert!(serde_json::from_str::<Source>("\"x13\"").is_err());
        assert!(serde_json::from_str::<Source>("\"y0\"").is_err());
        assert!(serde_json::from_str::<Source>("\"\"").is_err());
        assert_eq!(serde_json::from_str::<Source>("\"x12\"").unwrap(), Source::Input(11));
    }

    proptest! {
        #[test]
        fn argmin_of_stored_is_argmax_of_raw(raw in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let spec = &ObjectiveTable::floating_zone().objectives[2];
            let stored: Vec<f64> = raw.iter().map(|&r| spec.stored_value(r)).collect();
            let argmin = (0..raw.len()).min_by(|&a, &b| stored[a].total_cmp(&stored[b])).unwrap();
            let argmax = (0..raw.len()).max_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(b.cmp(&a))).unwrap();
            prop_assert_eq!(argmin, argmax);
            prop_assert_eq!(spec.display_value(stored[argmin]), raw[argmax]);
        }

        #[test]
        fn feasible_iff_all_bounds_hold(y in prop::array::uniform6(-10.0f64..1500.0), x1 in 75.0f64..100.0, x2 in 1.0f64..3.5) {
            let mut x = base_x();
            x[0] = x1;
            x[1] = x2;
            let o = ObjectiveTable::floating_zone().evaluate_outputs(&x, &y);
            let holds = x1 >= 85.0 && x2 >= 1.5 && y[1] <= 70.0 && y[2] <= 80.0 && y[3] <= 1200.0 && y[4] >= 0.0;
            prop_assert_eq!(o.feasible, holds);
            prop_assert!(o.total_violation >= 0.0);
        }

        #[test]
        fn penalty_zero_exactly_on_window(g in 0.0f64..1e-2) {
            let p = voronkov_penalty(g);
            prop_assert!(p >= 0.0);
            prop_assert_eq!(p == 0.0, (VORONKOV_LB..=VORONKOV_UB).contains(&g));
            let h = 1e-9;
            prop_assert!((voronkov_penalty(g + h) - p).abs() <= h * (1.0 + 1e-6));
        }
    }
}
