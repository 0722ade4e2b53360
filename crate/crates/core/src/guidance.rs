//! Three-term classifier-free guidance, the training dropout policy and the guided sampler.

use std::cell::Cell;

use ndarray::{Array4, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoiser::{ConditioningBundle, DenoiseInput, DropMask, VelocityModel};
use crate::schedule::{NoiseSchedule, SamplerConfig};
use crate::video::{LatentShape, LatentVideo};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceScales {
    pub image: f64,
    pub text: f64,
    pub motion: f64,
}

impl GuidanceScales {
    pub fn new(image: f64, text: f64, motion: f64) -> Result<Self> {
        let s = Self {
            image,
            text,
            motion,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(s: f64) -> Self {
        Self {
            image: s,
            text: s,
            motion: s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("image", self.image),
            ("text", self.text),
            ("motion", self.motion),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "guidance scale {name} must be a non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

thread_local! {
    static COMPOSE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of `compose_guidance` calls made on this thread so far.
pub fn compose_call_count() -> u64 {
    COMPOSE_CALLS.with(Cell::get)
}

/// `u000 + s_I (u00I - u000) + s_T (u0TI - u00I) + s_M (uMTI - u0TI)`, evaluated in f64.
///
/// `u_mti` may be omitted when `s.motion` is zero; the result is then identical to
/// passing any finite tensor.
pub fn compose_guidance(
    u000: &Array4<f32>,
    u00i: &Array4<f32>,
    u0ti: &Array4<f32>,
    u_mti: Option<&Array4<f32>>,
    s: &GuidanceScales,
) -> Result<Array4<f32>> {
    COMPOSE_CALLS.with(|c| c.set(c.get() + 1));
    for other in [u00i, u0ti].into_iter().chain(u_mti) {
        if other.dim() != u000.dim() {
            return Err(Error::shape(
                "compose_guidance",
                u000.shape(),
                other.shape(),
            ));
        }
    }
    let (si, st, sm) = (s.image, s.text, s.motion);
    let mut out = Array4::<f32>::zeros(u000.raw_dim());
    Zip::from(&mut out)
        .and(u000)
        .and(u00i)
        .and(u0ti)
        .for_each(|o, &a, &b, &c| {
            let (a, b, c) = (a as f64, b as f64, c as f64);
            *o = (a + si * (b - a) + st * (c - b)) as f32;
        });
    match u_mti {
        Some(d) if sm != 0.0 => {
            Zip::from(&mut out)
                .and(u000)
                .and(u00i)
                .and(u0ti)
                .and(d)
                .for_each(|o, &a, &b, &c, &d| {
                    let (a, b, c, d) = (a as f64, b as f64, c as f64, d as f64);
                    *o = (a + si * (b - a) + st * (c - b) + sm * (d - c)) as f32;
                });
        }
        Some(_) => {}
        None if sm != 0.0 => {
            return Err(Error::InvalidConfig(
                "the fully conditioned branch is required when the motion scale is non-zero".into(),
            ))
        }
        None => {}
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutMode {
    /// Pairwise-combination draw, then an extra independent motion drop.
    #[default]
    Compositional,
    /// Motion dropped independently at `motion_rate`; combinations over image and text only.
    FlatMotion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutPolicy {
    pub mode: DropoutMode,
    /// Probability of each nonempty proper subset of {image, text, motion}.
    pub p_combo: f64,
    /// Independent extra motion drop applied after the combination draw.
    pub p_extra: f64,
    /// Motion drop rate in flat-motion mode.
    pub motion_rate: f64,
}

impl Default for DropoutPolicy {
    fn default() -> Self {
        Self {
            mode: DropoutMode::Compositional,
            p_combo: 0.1,
            p_extra: 2.0 / 7.0,
            motion_rate: 0.5,
        }
    }
}

const COMBOS: [DropMask; 6] = [
    DropMask {
        image: true,
        text: false,
        motion: false,
    },
    DropMask {
        image: false,
        text: true,
        motion: false,
    },
    DropMask {
        image: false,
        text: false,
        motion: true,
    },
    DropMask {
        image: true,
        text: true,
        motion: false,
    },
    DropMask {
        image: true,
        text: false,
        motion: true,
    },
    DropMask {
        image: false,
        text: true,
        motion: true,
    },
];

impl DropoutPolicy {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let combos = match self.mode {
            DropoutMode::Compositional => 6.0,
            DropoutMode::FlatMotion => 3.0,
        };
        if !unit(self.p_combo) || combos * self.p_combo > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "p_combo {} is invalid for {combos} combinations",
                self.p_combo
            )));
        }
        if !unit(self.p_extra) || !unit(self.motion_rate) {
            return Err(Error::InvalidConfig(
                "dropout probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Closed-form marginal probability that each conditioning is null.
    pub fn marginals(&self) -> DropMarginals {
        let p = self.p_combo;
        match self.mode {
            DropoutMode::Compositional => {
                let motion_combo = 3.0 * p;
                DropMarginals {
                    image: 3.0 * p,
                    text: 3.0 * p,
                    motion: motion_combo + (1.0 - motion_combo) * self.p_extra,
                    all: p * self.p_extra,
                }
            }
            DropoutMode::FlatMotion => DropMarginals {
                image: 2.0 * p,
                text: 2.0 * p,
                motion: self.motion_rate,
                all: p * self.motion_rate,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DropMask {
        let u: f64 = rng.random();
        match self.mode {
            DropoutMode::Compositional => {
                let k = (u / self.p_combo) as usize;
                let mut mask = COMBOS.get(k).copied().unwrap_or(DropMask::NONE);
                if rng.random::<f64>() < self.p_extra {
                    mask.motion = true;
                }
                mask
            }
            DropoutMode::FlatMotion => {
                let k = (u / self.p_combo) as usize;
                let mut mask = match k {
                    0 => COMBOS[0],
                    1 => COMBOS[1],
                    2 => COMBOS[3],
                    _ => DropMask::NONE,
                };
                mask.motion = rng.random::<f64>() < self.motion_rate;
                mask
            }
        }
    }
}

pub fn sample_dropout_mask<R: Rng + ?Sized>(policy: &DropoutPolicy, rng: &mut R) -> DropMask {
    policy.sample(rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropMarginals {
    pub image: f64,
    pub text: f64,
    pub motion: f64,
    pub all: f64,
}

/// Controls for the guided sampling loop.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GuidanceOptions {
    /// Evaluate the fully conditioned branch even when the motion scale is zero.
    pub always_full_branch: bool,
}

/// Starting noise for a clip of `shape`.
pub fn initial_noise<R: Rng + ?Sized>(shape: LatentShape, rng: &mut R) -> LatentVideo {
    let a = Array4::from_shape_simple_fn(shape.dims(), || rng.sample(StandardNormal));
    LatentVideo::new(a).expect("gaussian noise is finite")
}

/// Guided DDIM sampling from pure noise.
#[allow(clippy::too_many_arguments)]
pub fn cfg_sample<R: Rng + ?Sized>(
    model: &dyn VelocityModel,
    cond: &ConditioningBundle,
    scales: &GuidanceScales,
    schedule: &NoiseSchedule,
    sampler: &SamplerConfig,
    options: GuidanceOptions,
    rng: &mut R,
) -> Result<LatentVideo> {
    scales.validate()?;
    let branches = [
        cond.with_drop(DropMask::ALL),
        cond.with_drop(DropMask {
            image: false,
            text: true,
            motion: true,
        }),
        cond.with_drop(DropMask {
            image: false,
            text: false,
            motion: true,
        }),
        cond.with_drop(DropMask::NONE),
    ];
    let n_branches = if scales.motion == 0.0 && !options.always_full_branch {
        3
    } else {
        4
    };
    let mut z = initial_noise(model.latent_shape(), rng);
    let ts = sampler.timesteps(schedule)?;
    for w in ts.windows(2) {
        let inputs: Vec<DenoiseInput> = branches[..n_branches]
            .iter()
            .map(|cond| DenoiseInput {
                z: &z,
                t: w[0],
                cond,
            })
            .collect();
        let u = model.predict(&inputs)?;
        let v = compose_guidance(&u[0], &u[1], &u[2], u.get(3), scales)?;
        z = schedule.ddim_step(&z, &v, w[0], w[1], sampler, rng)?;
    }
    Ok(z)
}

/// Plain conditional DDIM sampling without guidance.
pub fn sample_conditional<R: Rng + ?Sized>(
    model: &dyn VelocityModel,
    cond: &ConditioningBundle,
    schedule: &NoiseSchedule,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<LatentVideo> {
    let mut z = initial_noise(model.latent_shape(), rng);
    let ts = sampler.timesteps(schedule)?;
    for w in ts.windows(2) {
        let v = model
            .predict(&[DenoiseInput {
                z: &z,
                t: w[0],
                cond,
            }])?
            .remove(0);
        z = schedule.ddim_step(&z, &v, w[0], w[1], sampler, rng)?;
    }
    Ok(z)
}
