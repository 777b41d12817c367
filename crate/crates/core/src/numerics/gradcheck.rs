//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GraphOf, Real, TensorOf, Var};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteDiffConfig {
    /// Perturbation `h`; the step actually realised in the element type is
    /// used in the quotient.
    pub step: f64,
    /// Largest accepted relative error.
    pub tolerance: f64,
    /// Coordinates probed per input; 0 probes every coordinate.
    pub samples_per_input: usize,
    /// Denominator floor of the relative error, so that near-zero
    /// gradients are judged on absolute error instead.
    pub floor: f64,
    pub seed: u64,
}

impl Default for FiniteDiffConfig {
    fn default() -> Self {
        Self { step: 1e-3, tolerance: 1e-4, samples_per_input: 0, floor: 1e-3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinates whose relative error exceeded the tolerance.
    pub failures: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `op` against central differences.
///
/// `op` maps leaf vars (one per entry of `inputs`) to an output of any shape.
/// Non-scalar outputs are reduced by a fixed random projection `Σ wᵢ·yᵢ`,
/// evaluated in `f64` so unchanged outputs cancel exactly between the two
/// perturbed evaluations.
///
/// With `T = f32` the central difference carries rounding noise of roughly
/// `ulp(y) / h`; run the check with `T = f64` to test the backward pass
/// itself at tight tolerances.
pub fn finite_diff_check<T, F>(inputs: &[TensorOf<T>], op: F, config: FiniteDiffConfig) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&mut GraphOf<T>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut graph = GraphOf::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.leaf(t.clone().with_grad())).collect();
    let out = op(&mut graph, &vars)?;
    let weights: Vec<T> = if graph.value(out).len() == 1 {
        vec![T::one()]
    } else {
        (0..graph.value(out).len()).map(|_| T::from_f64(rng.random_range(-1.0..1.0))).collect()
    };
    let loss = graph.weighted_sum(out, weights.clone())?;
    let grads = graph.backward(loss)?;

    let to64 = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let evaluate = |values: &[TensorOf<T>]| -> Result<f64> {
        let mut g = GraphOf::new();
        let vars: Vec<Var> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let y = op(&mut g, &vars)?;
        Ok(g.value(y).data().iter().zip(&weights).map(|(&a, &w)| to64(a) * to64(w)).sum())
    };

    let mut report = GradCheckReport::default();
    let mut probe: Vec<TensorOf<T>> = inputs.to_vec();
    let h = T::from_f64(config.step);
    for (input, var) in vars.iter().enumerate() {
        let n = inputs[input].len();
        let analytic = grads.raw(*var).map(|g| g.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
        let coords: Vec<usize> = if config.samples_per_input == 0 || config.samples_per_input >= n {
            (0..n).collect()
        } else {
            let mut picked = sample(&mut rng, n, config.samples_per_input).into_vec();
            picked.sort_unstable();
            picked
        };
        for index in coords {
            let x = inputs[input].data()[index];
            let (plus, minus) = (x + h, x - h);
            probe[input].data_mut()[index] = plus;
            let lp = evaluate(&probe)?;
            probe[input].data_mut()[index] = minus;
            let lm = evaluate(&probe)?;
            probe[input].data_mut()[index] = x;

            let numeric = (lp - lm) / (to64(plus) - to64(minus));
            let a = to64(analytic[index]);
            let rel = relative_error(a, numeric, config.floor);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(rel);
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
            if rel > config.tolerance || !rel.is_finite() {
                report.failures.push(GradCheckEntry { input, index, analytic: a, numeric, rel_error: rel });
            }
        }
    }
    Ok(report)
}
