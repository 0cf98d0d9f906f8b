use serde::{Deserialize, Serialize};

use crate::config::OptimHyper;
use crate::encoder::ModelParams;
use crate::error::{Error, Result};

/// AdamW moments for every tensor of a [`ModelParams`], in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub hyper: OptimHyper,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(hyper: OptimHyper, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        OptimState {
            hyper,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        for t in self.m.iter_mut().chain(self.v.iter_mut()) {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// One bias-corrected AdamW update with decoupled weight decay:
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// θ <- θ (1 - lr wd) - lr m̂ / (sqrt(v̂) + eps)
/// ```
///
/// Tensors whose `trainable` flag is false are left untouched (no decay, no
/// moment update).
pub fn adamw_step(
    state: &mut OptimState,
    params: &mut ModelParams,
    grads: &ModelParams,
    trainable: &[bool],
) -> Result<()> {
    let g_tensors = grads.tensors();
    let mut p_tensors = params.tensors_mut();
    if p_tensors.len() != g_tensors.len()
        || p_tensors.len() != state.m.len()
        || p_tensors.len() != trainable.len()
    {
        return Err(Error::Shape(format!(
            "optimizer over {} tensors, parameters {}, gradients {}",
            state.m.len(),
            p_tensors.len(),
            g_tensors.len()
        )));
    }
    for (i, (p, g)) in p_tensors.iter().zip(&g_tensors).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::Shape(format!("tensor #{i} length mismatch")));
        }
        if trainable[i] && g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of tensor #{i}")));
        }
    }

    state.step += 1;
    let OptimHyper {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.hyper;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let decay = 1.0 - lr * weight_decay;
    for (i, (p, g)) in p_tensors.iter_mut().zip(&g_tensors).enumerate() {
        if !trainable[i] {
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] = p[k] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
