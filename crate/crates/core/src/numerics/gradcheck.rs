//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NumericsError, Tensor, Var};

/// Below this magnitude the comparison falls back to absolute error.
pub const ABSOLUTE_FALLBACK: f64 = 1e-8;

/// Central finite-difference formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error O(h²).
    #[default]
    ThreePoint,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`, error O(h⁴). Tolerates
    /// a larger `h`, which keeps roundoff small for tiny gradient components.
    FivePoint,
    /// Six evaluations at `±h, ±2h, ±3h`, error O(h⁶).
    SevenPoint,
}

/// Options for [`grad_check_with`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step `h`.
    pub epsilon: f64,
    pub stencil: Stencil,
    /// Check at most this many coordinates per input, chosen by `seed`.
    /// `None` checks every coordinate.
    pub coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            stencil: Stencil::ThreePoint,
            coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(input index, flat coordinate)` where the maximum was attained.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates_checked: usize,
    /// Maximum relative error within each input tensor.
    pub per_input_max: Vec<f64>,
}

/// Relative error with an absolute fallback for values near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABSOLUTE_FALLBACK {
        diff
    } else {
        diff / scale
    }
}

/// Maximum component-wise relative error between the reverse-mode gradient
/// of `f` at `point` and central finite differences with half step `epsilon`.
///
/// `f` receives one leaf [`Var`] per tensor in `point` and must return a
/// single-element value.
///
/// ```
/// use matra_core::numerics::{grad_check, Tensor};
///
/// let err = grad_check(
///     |g, x| Ok({ let y = g.mul(x[0], x[0])?; g.sum(y) }),
///     &[Tensor::scalar(3.0)],
///     1e-4,
/// )
/// .unwrap();
/// assert!(err < 1e-6);
/// ```
pub fn grad_check<F>(f: F, point: &[Tensor<f64>], epsilon: f64) -> Result<f64, NumericsError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NumericsError>,
{
    let options = GradCheckOptions {
        epsilon,
        ..GradCheckOptions::default()
    };
    grad_check_with(f, point, &options).map(|r| r.max_relative_error)
}

pub fn grad_check_with<F>(f: F, point: &[Tensor<f64>], options: &GradCheckOptions) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NumericsError>,
{
    let eps = options.epsilon;
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(NumericsError::InvalidArgument(format!(
            "grad_check epsilon must lie in (0, 1e-2], got {eps}"
        )));
    }
    if point.iter().any(|t| !t.all_finite()) {
        return Err(NumericsError::NonFinite("grad_check point".into()));
    }

    let evaluate = |inputs: &[Tensor<f64>]| -> Result<f64, NumericsError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let value = g.value(out);
        if value.len() != 1 {
            return Err(NumericsError::NonScalarLoss {
                shape: value.shape().to_vec(),
            });
        }
        let v = value.item();
        if !v.is_finite() {
            return Err(NumericsError::NonFinite("function value".into()));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if !g.value(out).all_finite() {
        return Err(NumericsError::NonFinite("function value".into()));
    }
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(point)
        .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
        .collect();
    if analytic.iter().any(|t| !t.all_finite()) {
        return Err(NumericsError::NonFinite("analytic gradient".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates_checked: 0,
        per_input_max: vec![0.0; point.len()],
    };
    let mut work: Vec<Tensor<f64>> = point.to_vec();
    for (input, tensor) in point.iter().enumerate() {
        let coords: Vec<usize> = match options.coords_per_input {
            Some(k) if k < tensor.len() => {
                let mut c = sample(&mut rng, tensor.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..tensor.len()).collect(),
        };
        for coord in coords {
            let original = tensor.data()[coord];
            let mut at = |offset: f64| {
                work[input].data_mut()[coord] = original + offset;
                let v = evaluate(&work);
                work[input].data_mut()[coord] = original;
                v
            };
            let numeric = match options.stencil {
                Stencil::ThreePoint => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FivePoint => {
                    (at(-2.0 * eps)? - 8.0 * at(-eps)? + 8.0 * at(eps)? - at(2.0 * eps)?) / (12.0 * eps)
                }
                Stencil::SevenPoint => {
                    let d1 = at(eps)? - at(-eps)?;
                    let d2 = at(2.0 * eps)? - at(-2.0 * eps)?;
                    let d3 = at(3.0 * eps)? - at(-3.0 * eps)?;
                    (45.0 * d1 - 9.0 * d2 + d3) / (60.0 * eps)
                }
            };
            let exact = analytic[input].data()[coord];
            let err = relative_error(exact, numeric);
            report.coordinates_checked += 1;
            report.per_input_max[input] = report.per_input_max[input].max(err);
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((input, coord));
                report.analytic_at_worst = exact;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}
