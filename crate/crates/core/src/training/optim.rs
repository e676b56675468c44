use super::TrainError;
use crate::model::Weights;
use crate::numerics::{Scalar, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the number of updates applied.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: Weights<Tensor<T>>,
    pub second: Weights<Tensor<T>>,
    pub steps: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Weights<Tensor<T>>) -> Self {
        let zeros = params.map(&mut |_, t| Tensor::zeros(t.shape()).expect("shape of an existing tensor"));
        Self {
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }
}

/// Linear warmup from 0 to 1 over `warmup_steps`, then linear decay to 0 at
/// `total_steps`.
pub fn lr_multiplier(step: u64, warmup_steps: u64, total_steps: u64) -> Result<f64, TrainError> {
    if warmup_steps >= total_steps {
        return Err(TrainError::Schedule(format!(
            "warmup_steps {warmup_steps} must be smaller than total_steps {total_steps}"
        )));
    }
    if step > total_steps {
        return Err(TrainError::Schedule(format!("step {step} is past total_steps {total_steps}")));
    }
    Ok(if step < warmup_steps {
        step as f64 / warmup_steps as f64
    } else {
        (total_steps - step) as f64 / (total_steps - warmup_steps) as f64
    })
}

/// Scales all gradients together so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut Weights<Tensor<T>>, max_norm: f64) -> f64 {
    let mut total = 0.0;
    grads.map(&mut |_, g| {
        total += g.data().iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>();
    });
    let norm = total.sqrt();
    if norm > max_norm {
        let factor = T::lit(max_norm / norm);
        grads.visit_mut(&mut |_, g| {
            for v in g.data_mut() {
                *v = *v * factor;
            }
        });
    }
    norm
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn optimizer_step<T: Scalar>(
    params: &mut Weights<Tensor<T>>,
    grads: &Weights<Tensor<T>>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<(), TrainError> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(TrainError::Config(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    let grads = grads.named();
    for (name, g) in &grads {
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient { tensor: name.clone() });
        }
    }
    let params_list = params.leaves_mut();
    if params_list.len() != grads.len() {
        return Err(TrainError::Config("gradient tree does not match parameters".into()));
    }
    state.steps += 1;
    let t = state.steps as i32;
    let correction1 = 1.0 - ADAM_BETA1.powi(t);
    let correction2 = 1.0 - ADAM_BETA2.powi(t);
    let firsts = state.first.leaves_mut();
    let seconds = state.second.leaves_mut();
    for (((name, p), (_, g)), ((_, m), (_, v))) in params_list.into_iter().zip(grads).zip(firsts.into_iter().zip(seconds)) {
        if p.shape() != g.shape() {
            return Err(TrainError::Config(format!(
                "gradient for {name} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let p = p.data_mut();
        let m = m.data_mut();
        let v = v.data_mut();
        for (i, &gi) in g.data().iter().enumerate() {
            let gi = gi.to_f64().unwrap();
            let mi = ADAM_BETA1 * m[i].to_f64().unwrap() + (1.0 - ADAM_BETA1) * gi;
            let vi = ADAM_BETA2 * v[i].to_f64().unwrap() + (1.0 - ADAM_BETA2) * gi * gi;
            m[i] = T::lit(mi);
            v[i] = T::lit(vi);
            let update = lr * (mi / correction1) / ((vi / correction2).sqrt() + ADAM_EPSILON);
            p[i] = T::lit(p[i].to_f64().unwrap() - update);
        }
    }
    Ok(())
}
