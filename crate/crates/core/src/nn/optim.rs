use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_grad_norm: Option<f64>,
    /// Linear learning-rate warmup length in steps.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_grad_norm: Some(1.0),
            warmup_steps: 0,
        }
    }
}

/// First and second moment estimates, kept so a run can resume exactly.
#[derive(Clone, Debug, Default)]
pub struct AdamState<R> {
    pub step: u64,
    pub m: Vec<Tensor<R>>,
    pub v: Vec<Tensor<R>>,
}

pub struct Adam<R> {
    pub config: AdamConfig,
    pub state: AdamState<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig, params: &ParamStore<R>) -> Self {
        let zeros = || {
            params
                .ids()
                .map(|id| Tensor::zeros(params.get(id).shape().to_vec()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            state: AdamState {
                step: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    pub fn with_state(config: AdamConfig, state: AdamState<R>) -> Self {
        Self { config, state }
    }

    /// Applies one update. Returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamStore<R>, grads: &Gradients<R>) -> f64 {
        let norm = grads.global_norm();
        let clip = match self.config.clip_grad_norm {
            Some(max) if norm > max => max / (norm + 1e-12),
            _ => 1.0,
        };
        self.state.step += 1;
        let t = self.state.step;
        let cfg = &self.config;
        let warm = if cfg.warmup_steps > 0 {
            (t as f64 / cfg.warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        let lr = cfg.learning_rate * warm;
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        let (b1, b2, eps) = (R::of(cfg.beta1), R::of(cfg.beta2), R::of(cfg.eps));
        let one = R::one();
        let step_size = R::of(lr / bc1);
        let inv_bc2 = R::of(1.0 / bc2);
        let clip = R::of(clip);
        for id in params.ids() {
            let Some(g) = grads.get(id) else { continue };
            let m = self.state.m[id.index()].data_mut();
            let v = self.state.v[id.index()].data_mut();
            let p = params.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i] * clip;
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let denom = (v[i] * inv_bc2).sqrt() + eps;
                p[i] -= step_size * m[i] / denom;
            }
        }
        norm
    }
}
