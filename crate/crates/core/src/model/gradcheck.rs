//! Central finite-difference check of [`sequence_backward`](super::sequence_backward).

use std::fmt;

use serde::Serialize;

use super::{sequence_backward, sequence_forward, sequence_loss, Gradients, ModelConfig, Parameters};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;
use crate::ordering::OrderedSequence;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Arrays larger than this are checked on a seeded random subsample of
    /// this many coordinates.
    pub max_coords_per_array: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords_per_array: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArrayCheck {
    pub name: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinate of the worst relative error.
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub arrays: Vec<ArrayCheck>,
    pub max_rel_error: f64,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.arrays {
            writeln!(f, "{:<10} {:>6} coords  max rel err {:.3e}", a.name, a.checked, a.max_rel_error)?;
        }
        write!(f, "overall max relative error {:.3e} (eps {:e})", self.max_rel_error, self.eps)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Runs forward and backward without dropout, then compares against
/// finite differences.
pub fn gradient_check(
    params: &Parameters,
    config: &ModelConfig,
    feature: &[f64],
    target: &OrderedSequence,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let pass = sequence_forward(params, config, feature, target, None)?;
    let analytic = sequence_backward(params, config, &pass.steps, feature, target)?;
    compare_gradients(params, config, feature, target, &analytic, options)
}

/// Compares `analytic` against `(L(θ+ε) − L(θ−ε)) / 2ε` coordinate by coordinate.
pub fn compare_gradients(
    params: &Parameters,
    config: &ModelConfig,
    feature: &[f64],
    target: &OrderedSequence,
    analytic: &Gradients,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(options.eps > 0.0) || !options.eps.is_finite() {
        return Err(Error::Config(format!("finite-difference step must be positive, got {}", options.eps)));
    }
    analytic.check_shapes(config)?;
    let mut rng = SeededRng::new(options.seed);
    let mut probe = params.clone();
    let analytic_arrays = analytic.arrays();
    let mut arrays = Vec::with_capacity(analytic_arrays.len());

    for (a, (name, _, grad)) in analytic_arrays.iter().enumerate() {
        let mut coords: Vec<usize> = (0..grad.len()).collect();
        if coords.len() > options.max_coords_per_array {
            rng.shuffle(&mut coords);
            coords.truncate(options.max_coords_per_array);
            coords.sort_unstable();
        }
        let mut worst = (0.0f64, 0usize);
        for &k in &coords {
            let original = probe.arrays_mut()[a].1[k];
            probe.arrays_mut()[a].1[k] = original + options.eps;
            let plus = sequence_loss(&probe, config, feature, target)?;
            probe.arrays_mut()[a].1[k] = original - options.eps;
            let minus = sequence_loss(&probe, config, feature, target)?;
            probe.arrays_mut()[a].1[k] = original;
            let numeric = (plus - minus) / (2.0 * options.eps);
            let err = relative_error(grad[k], numeric);
            if err > worst.0 || err.is_nan() {
                worst = (err, k);
            }
        }
        arrays.push(ArrayCheck {
            name,
            checked: coords.len(),
            max_rel_error: worst.0,
            worst_index: worst.1,
        });
    }
    let max_rel_error = arrays.iter().map(|a| a.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        eps: options.eps,
        arrays,
        max_rel_error,
    })
}
