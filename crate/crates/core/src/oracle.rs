//! Analytic stand-in for the finite-element simulator.
//!
//! The proxy maps the twelve inputs to the six model outputs with closed-form
//! polynomials in the normalised inputs `u_i = (x_i - low_i) / (high_i - low_i)`.
//! Its coefficients bracket the magnitudes seen in real floating-zone
//! simulations and encode the qualitative trends of the process: exceed stress
//! grows with crystal radius and pulling rate, voltage falls with the main slit
//! width and rises with frequency, and more or longer side slits make the
//! induced power more homogeneous. The Voronkov ratio is the pulling rate
//! (crystallisation rate at the axis under steady growth) over the axial
//! gradient.
//!
//! A feasibility predicate marks a corner of the space as non-physical,
//! standing in for simulations in which the melt core freezes.

use std::sync::LazyLock;

use crate::error::Result;
use crate::space::{ParameterSpace, INPUT_DIM};

/// Number of model outputs.
pub const OUTPUT_DIM: usize = 6;

/// Threshold on `u12 * (1 - u6)` above which the proxy reports a non-physical run.
pub const FREEZE_THRESHOLD: f64 = 0.72;

static FZ_SPACE: LazyLock<ParameterSpace> = LazyLock::new(ParameterSpace::floating_zone);

/// Outputs y1..y6 plus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutputs {
    /// y1..y6: radial gradient (K/cm), interface deflection (mm), exceed
    /// stress (MPa), inductor voltage (V), EM inhomogeneity (W/cm²), Voronkov
    /// ratio (cm²/(min·K)).
    pub y: [f64; OUTPUT_DIM],
    pub feasible: bool,
    /// Axial thermal gradient at the axis, K/cm.
    pub axial_gradient: f64,
}

/// Evaluates the proxy at a point of the floating-zone space.
pub fn evaluate(x: &[f64]) -> Result<OracleOutputs> {
    let space: &ParameterSpace = &FZ_SPACE;
    space.require_point(x)?;
    let mut u = [0.0; INPUT_DIM];
    for (i, p) in space.params().iter().enumerate() {
        u[i] = p.normalize(x[i]);
    }
    Ok(evaluate_unit(&u, x[1]))
}

fn evaluate_unit(u: &[f64; INPUT_DIM], pulling_rate: f64) -> OracleOutputs {
    let [u1, u2, u3, u4, u5, u6, u7, u8, u9, u10, u11, u12] = *u;
    let gz = 95.0 - 35.0 * u1 + 12.0 * u12 - 8.0 * u10;
    let y1 = 16.0 + 14.0 * (1.0 - u1) * (0.4 + 0.6 * u12) + 5.0 * u9 * u11 - 4.0 * u10 + 3.0 * u2;
    let y2 = 8.0 + 40.0 * u1 * u2 + 14.0 * u2 * u2 + 6.0 * u1 - 3.0 * u11;
    let y3 = 20.0 + 58.0 * u1 * u1 + 24.0 * u2 + 12.0 * u1 * u2 - 6.0 * u12;
    let y4 = 640.0 + 300.0 * u8 - 270.0 * u6 + 170.0 * u1 + 60.0 * u5 - 45.0 * u7 + 55.0 * u1 * u8;
    let y5 = 0.18 + 3.6 * u6 * u6 * (1.0 - 0.55 * u3) * (1.0 - 0.45 * u4) + 0.25 * u2 * u6;
    // mm/min -> cm/min
    let y6 = (pulling_rate / 10.0) / gz;
    OracleOutputs {
        y: [y1, y2, y3, y4, y5, y6],
        feasible: u12 * (1.0 - u6) <= FREEZE_THRESHOLD,
        axial_gradient: gz,
    }
}

/// Something that maps a physical input vector to the six outputs.
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> Result<[f64; OUTPUT_DIM]>;
}

/// The proxy simulator as a [`Predictor`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ProxyOracle;

impl Predictor for ProxyOracle {
    fn predict(&self, x: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
        evaluate(x).map(|o| o.y)
    }
}

impl<F> Predictor for F
where
    F: Fn(&[f64]) -> Result<[f64; OUTPUT_DIM]> + Sync,
{
    fn predict(&self, x: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
        self(x)
    }
}
