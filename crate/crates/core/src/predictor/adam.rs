use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(model: &Mlp) -> Self {
        Self { step: 0, m: Gradients::zeros_like(model), v: Gradients::zeros_like(model) }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64, cfg: &AdamConfig) {
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort before any
/// parameter changes.
pub fn adam_step(model: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if grads.layers.len() != model.layers.len() {
        return Err(Error::Shape(alloc::format!(
            "{} gradient layers for {} model layers",
            grads.layers.len(),
            model.layers.len()
        )));
    }
    for (layer, (g, p)) in grads.layers.iter().zip(&model.layers).enumerate() {
        if g.weights.len() != p.weights.len() || g.bias.len() != p.bias.len() {
            return Err(Error::Shape(alloc::format!("gradient of layer {layer} has the wrong size")));
        }
        if g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for (l, p) in model.layers.iter_mut().enumerate() {
        let g = &grads.layers[l];
        update(&mut p.weights, &g.weights, &mut state.m.layers[l].weights, &mut state.v.layers[l].weights, lr, c1, c2, cfg);
        update(&mut p.bias, &g.bias, &mut state.m.layers[l].bias, &mut state.v.layers[l].bias, lr, c1, c2, cfg);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::mlp::{Dense, LayerGrad};
    use alloc::vec;

    fn scalar_model(w: f64) -> Mlp {
        Mlp {
            context_radius: 0,
            feature_dim: 1,
            layers: vec![Dense { in_dim: 1, out_dim: 1, weights: vec![w], bias: vec![0.0] }],
        }
    }

    fn grad(g: f64) -> Gradients {
        Gradients { layers: vec![LayerGrad { weights: vec![g], bias: vec![0.0] }] }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut m = scalar_model(0.0);
        let mut s = AdamState::new(&m);
        adam_step(&mut m, &grad(1.0), &mut s, 0.1, &AdamConfig::default()).unwrap();
        // m_hat = 1, v_hat = 1 -> w = -0.1 / (1 + 1e-8)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((m.layers[0].weights[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut m = scalar_model(0.3);
        let mut s = AdamState::new(&m);
        adam_step(&mut m, &grad(0.0), &mut s, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(m.layers[0].weights[0], 0.3);
    }

    #[test]
    fn identical_runs_identical_states() {
        let run = || {
            let mut m = scalar_model(0.5);
            let mut s = AdamState::new(&m);
            for k in 0..10 {
                adam_step(&mut m, &grad(k as f64 * 0.1 - 0.3), &mut s, 0.01, &AdamConfig::default()).unwrap();
            }
            (m, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut m = scalar_model(0.5);
        let mut s = AdamState::new(&m);
        let r = adam_step(&mut m, &grad(f64::NAN), &mut s, 0.1, &AdamConfig::default());
        assert_eq!(r, Err(Error::NonFiniteGradient { layer: 0 }));
        assert_eq!(m.layers[0].weights[0], 0.5);
        assert_eq!(s.step, 0);
    }
}
