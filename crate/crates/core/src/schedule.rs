//! Zero-terminal-SNR noise schedules, v-prediction algebra and the DDIM stepper.
//!
//! Step indices run over `0..=N`. Index 0 is the clean sample (`alpha_bar = 1`)
//! and index `N` is pure noise (`alpha_bar = 0`).

use ndarray::{Array4, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::video::LatentVideo;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleBase {
    #[default]
    Linear,
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(n: usize, base: ScheduleBase) -> Result<NoiseSchedule> {
    NoiseSchedule::new(n, base)
}

impl NoiseSchedule {
    pub fn new(n: usize, base: ScheduleBase) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "schedule needs at least 2 steps, got {n}"
            )));
        }
        let raw = match base {
            ScheduleBase::Linear => linear_alpha_bar(n),
            ScheduleBase::Cosine => cosine_alpha_bar(n),
        };
        Ok(Self {
            alpha_bar: rescale_zero_terminal(&raw),
        })
    }

    pub fn num_train_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bar[t].sqrt()
    }

    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar[t]).sqrt()
    }

    pub fn snr(&self, t: usize) -> f64 {
        self.alpha_bar[t] / (1.0 - self.alpha_bar[t])
    }

    fn check_t(&self, t: usize) -> Result<()> {
        let max = self.num_train_steps();
        if t > max {
            return Err(Error::InvalidStep { t, t_prev: 0, max });
        }
        Ok(())
    }

    /// `z_t = alpha_t x0 + sigma_t eps`.
    pub fn add_noise(&self, x0: &LatentVideo, eps: &Array4<f32>, t: usize) -> Result<LatentVideo> {
        self.check_t(t)?;
        let out = affine2(x0.latents(), eps, self.alpha(t), self.sigma(t), "add_noise")?;
        LatentVideo::new(out)
    }

    /// `v = alpha_t eps - sigma_t x0`.
    pub fn v_target(&self, x0: &LatentVideo, eps: &Array4<f32>, t: usize) -> Result<Array4<f32>> {
        self.check_t(t)?;
        affine2(eps, x0.latents(), self.alpha(t), -self.sigma(t), "v_target")
    }

    /// `x0_hat = alpha_t z_t - sigma_t v`.
    pub fn predict_x0_from_v(
        &self,
        z_t: &LatentVideo,
        v: &Array4<f32>,
        t: usize,
    ) -> Result<Array4<f32>> {
        self.check_t(t)?;
        affine2(
            z_t.latents(),
            v,
            self.alpha(t),
            -self.sigma(t),
            "predict_x0_from_v",
        )
    }

    /// `eps_hat = sigma_t z_t + alpha_t v`.
    pub fn predict_eps_from_v(
        &self,
        z_t: &LatentVideo,
        v: &Array4<f32>,
        t: usize,
    ) -> Result<Array4<f32>> {
        self.check_t(t)?;
        affine2(
            z_t.latents(),
            v,
            self.sigma(t),
            self.alpha(t),
            "predict_eps_from_v",
        )
    }

    /// One DDIM update from `t` to `t_prev`.
    ///
    /// Both the clean estimate and the noise estimate are linear in `z_t` and `v`,
    /// so the step stays well defined at `t = N` where `alpha_t = 0`.
    pub fn ddim_step<R: Rng + ?Sized>(
        &self,
        z_t: &LatentVideo,
        v_pred: &Array4<f32>,
        t: usize,
        t_prev: usize,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> Result<LatentVideo> {
        let max = self.num_train_steps();
        if t_prev >= t || t > max {
            return Err(Error::InvalidStep { t, t_prev, max });
        }
        if z_t.latents().dim() != v_pred.dim() {
            return Err(Error::shape(
                "ddim_step",
                z_t.latents().shape(),
                v_pred.shape(),
            ));
        }
        let (a_t, s_t) = (self.alpha(t), self.sigma(t));
        let ab_t = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t_prev];
        let a_prev = ab_prev.sqrt();
        let sigma_eta = if cfg.eta > 0.0 {
            cfg.eta * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_prev).sqrt()
        } else {
            0.0
        };
        let dir = (1.0 - ab_prev - sigma_eta * sigma_eta).max(0.0).sqrt();

        let mut out = Array4::<f32>::zeros(v_pred.raw_dim());
        Zip::from(&mut out)
            .and(z_t.latents())
            .and(v_pred)
            .for_each(|o, &z, &v| {
                let (z, v) = (z as f64, v as f64);
                let x0 = a_t * z - s_t * v;
                let eps = s_t * z + a_t * v;
                *o = (a_prev * x0 + dir * eps) as f32;
            });
        if sigma_eta > 0.0 {
            for o in out.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *o += (sigma_eta * n) as f32;
            }
        }
        LatentVideo::new(out)
    }
}

fn affine2(
    a: &Array4<f32>,
    b: &Array4<f32>,
    ca: f64,
    cb: f64,
    context: &'static str,
) -> Result<Array4<f32>> {
    if a.dim() != b.dim() {
        return Err(Error::shape(context, a.shape(), b.shape()));
    }
    let mut out = Array4::<f32>::zeros(a.raw_dim());
    Zip::from(&mut out)
        .and(a)
        .and(b)
        .for_each(|o, &x, &y| *o = (ca * x as f64 + cb * y as f64) as f32);
    Ok(out)
}

/// Cumulative product of `1 - beta` for betas linearly spaced over `[1e-4, 0.02]`.
fn linear_alpha_bar(n: usize) -> Vec<f64> {
    let (lo, hi) = (1e-4, 0.02);
    let mut ab = Vec::with_capacity(n + 1);
    ab.push(1.0);
    for i in 0..n {
        let beta = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        ab.push(ab[i] * (1.0 - beta));
    }
    ab
}

fn cosine_alpha_bar(n: usize) -> Vec<f64> {
    let f = |t: f64| {
        ((t / n as f64 + 0.008) / 1.008 * std::f64::consts::FRAC_PI_2)
            .cos()
            .powi(2)
    };
    let mut ab = Vec::with_capacity(n + 1);
    ab.push(1.0);
    for i in 1..=n {
        let beta = (1.0 - f(i as f64) / f((i - 1) as f64)).min(0.999);
        ab.push(ab[i - 1] * (1.0 - beta));
    }
    ab
}

/// Shifts and scales `sqrt(alpha_bar[1..=N])` so the last entry is 0 and the first is kept.
fn rescale_zero_terminal(raw: &[f64]) -> Vec<f64> {
    let n = raw.len() - 1;
    let s1 = raw[1].sqrt();
    let sn = raw[n].sqrt();
    let scale = s1 / (s1 - sn);
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    for (t, &ab) in raw.iter().enumerate().skip(1) {
        let s = if t == n {
            0.0
        } else {
            (ab.sqrt() - sn) * scale
        };
        out.push(s * s);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub num_inference_steps: usize,
    pub eta: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_inference_steps: 64,
            eta: 0.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        let n = schedule.num_train_steps();
        if self.num_inference_steps == 0 || self.num_inference_steps > n {
            return Err(Error::InvalidConfig(format!(
                "num_inference_steps must be in 1..={n}, got {}",
                self.num_inference_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidConfig(format!(
                "eta must be in [0, 1], got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Trailing timestep grid from `N` down to 0, inclusive on both ends.
    ///
    /// Consecutive pairs are the `(t, t_prev)` arguments of each DDIM step.
    pub fn timesteps(&self, schedule: &NoiseSchedule) -> Result<Vec<usize>> {
        self.validate(schedule)?;
        let n = schedule.num_train_steps();
        let k = self.num_inference_steps;
        Ok((0..=k).rev().map(|i| i * n / k).collect())
    }
}
