use std::path::Path;

use ndarray::{Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_video, Codec};
use crate::denoiser::{
    ConditioningBundle, DenoiseInput, Denoiser, DenoiserConfig, MotionConditioning,
};
use crate::flow::{avg_flow_magnitude, flow_to_rgb, FlowField};
use crate::guidance::DropoutPolicy;
use crate::io::{read_archive, write_archive, Archive, ArchiveTensor};
use crate::nn::{Adam, AdamConfig, AdamState, Tensor};
use crate::schedule::{NoiseSchedule, ScheduleBase};
use crate::text::Vocabulary;
use crate::video::{LatentVideo, VideoTensor};
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "motionedit-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule_steps: usize,
    pub schedule_base: ScheduleBase,
    pub optimizer: AdamConfig,
    pub dropout: DropoutPolicy,
    pub checkpoint_every: u64,
    /// Factor taking codec latents into the diffusion space. Unset means it is derived
    /// from the corpus on the first step so that latents have unit mean square.
    pub latent_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 16,
            seed: 0,
            schedule_steps: 1000,
            schedule_base: ScheduleBase::Linear,
            optimizer: AdamConfig::default(),
            dropout: DropoutPolicy::default(),
            checkpoint_every: 500,
            latent_scale: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if let Some(scale) = self.latent_scale {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::InvalidConfig(
                    "latent_scale must be positive and finite".into(),
                ));
            }
        }
        self.dropout.validate()
    }

    /// The latent factor in effect, 1 until one has been set or derived.
    pub fn latent_factor(&self) -> f32 {
        self.latent_scale.unwrap_or(1.0) as f32
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule_steps, self.schedule_base)
    }
}

/// One training clip with every conditioning precomputed.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub x0: LatentVideo,
    pub text: Vec<u32>,
    pub image: Array3<f32>,
    pub motion: MotionConditioning,
}

impl TrainingExample {
    /// Encodes a clip, its first frame and its color-wheel flow.
    pub fn new(
        video: &VideoTensor,
        prompt: &str,
        flow: &FlowField,
        codec: &Codec,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let x0 = encode_video(video, codec)?;
        let image = x0.latents().index_axis(Axis(0), 0).to_owned();
        let rgb = flow_to_rgb(flow, video.fps())?;
        Ok(Self {
            image,
            text: vocab.tokenize(prompt)?,
            motion: MotionConditioning {
                latent: encode_video(&rgb, codec)?,
                magnitude: avg_flow_magnitude(flow) as f32,
            },
            x0,
        })
    }

    /// A copy with the clip, first-frame and flow latents multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            x0: self.x0.scaled(factor),
            text: self.text.clone(),
            image: &self.image * factor,
            motion: MotionConditioning {
                latent: self.motion.latent.scaled(factor),
                magnitude: self.motion.magnitude,
            },
        }
    }

    pub fn bundle(&self) -> ConditioningBundle {
        ConditioningBundle {
            text: Some(self.text.clone()),
            image: Some(self.image.clone()),
            motion: Some(self.motion.clone()),
            drop: Default::default(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainingCorpus {
    pub examples: Vec<TrainingExample>,
}

impl TrainingCorpus {
    /// Builds a corpus from `(video, prompt, flow)` triples, encoding in parallel.
    pub fn build(
        items: &[(VideoTensor, String, FlowField)],
        codec: &Codec,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let examples = items
            .par_iter()
            .map(|(v, p, f)| TrainingExample::new(v, p, f, codec, vocab))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The factor giving the clip latents unit mean square.
    pub fn unit_scale(&self) -> Result<f64> {
        let (sum, count) = self.examples.iter().fold((0.0, 0usize), |(s, n), ex| {
            let l = ex.x0.latents();
            (
                s + l.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>(),
                n + l.len(),
            )
        });
        if count == 0 || sum == 0.0 {
            return Err(Error::InvalidConfig(
                "cannot derive a latent scale from an empty or all-zero corpus".into(),
            ));
        }
        Ok((count as f64 / sum).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// The random generator for one step, a pure function of `(seed, step)`.
fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Samples a batch, evaluates the v-prediction loss and applies one optimizer update.
///
/// On a non-finite loss the parameters are left untouched.
pub fn train_step(
    model: &mut Denoiser,
    adam: &mut Adam<f32>,
    corpus: &TrainingCorpus,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    step: u64,
) -> Result<LossRecord> {
    if corpus.is_empty() {
        return Err(Error::InvalidConfig("training corpus is empty".into()));
    }
    let scale = match config.latent_scale {
        Some(s) => s,
        None => corpus.unit_scale()?,
    } as f32;
    let mut rng = step_rng(config.seed, step);
    let n = schedule.num_train_steps();
    let shape = model.config().latent_shape();
    let mut noisy = Vec::with_capacity(config.batch_size);
    let mut bundles = Vec::with_capacity(config.batch_size);
    let mut targets = Vec::with_capacity(config.batch_size);
    let mut ts = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let ex = corpus.examples[rng.random_range(0..corpus.len())].scaled(scale);
        let t = rng.random_range(1..=n);
        let eps: Array4<f32> =
            Array4::from_shape_simple_fn(shape.dims(), || rng.sample(StandardNormal));
        let drop = config.dropout.sample(&mut rng);
        noisy.push(schedule.add_noise(&ex.x0, &eps, t)?);
        targets.push(schedule.v_target(&ex.x0, &eps, t)?);
        bundles.push(ConditioningBundle {
            drop,
            ..ex.bundle()
        });
        ts.push(t);
    }
    let inputs: Vec<DenoiseInput> = noisy
        .iter()
        .zip(&bundles)
        .zip(&ts)
        .map(|((z, cond), &t)| DenoiseInput { z, t, cond })
        .collect();
    let (loss, grads) = model.loss_and_grads(model.params(), &inputs, &targets)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step, loss });
    }
    let grad_norm = adam.step(model.params_mut(), &grads);
    Ok(LossRecord {
        step,
        loss,
        grad_norm,
    })
}

/// A model with its optimizer, advanced one step at a time.
pub struct Trainer {
    pub model: Denoiser,
    pub adam: Adam<f32>,
    pub config: TrainConfig,
    pub schedule: NoiseSchedule,
    /// Number of completed steps.
    pub step: u64,
}

impl Trainer {
    pub fn new(model_config: DenoiserConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Denoiser::new(model_config, config.seed)?;
        let adam = Adam::new(config.optimizer, model.params());
        Ok(Self {
            schedule: config.schedule()?,
            model,
            adam,
            config,
            step: 0,
        })
    }

    /// Continues from a checkpoint; the run config's step budget replaces the saved one.
    pub fn resume(checkpoint: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = match checkpoint.adam {
            Some(state) => Adam::with_state(config.optimizer, state),
            None => Adam::new(config.optimizer, checkpoint.model.params()),
        };
        Ok(Self {
            schedule: config.schedule()?,
            model: checkpoint.model,
            adam,
            config,
            step: checkpoint.step,
        })
    }

    pub fn step(&mut self, corpus: &TrainingCorpus) -> Result<LossRecord> {
        if self.config.latent_scale.is_none() {
            self.config.latent_scale = Some(corpus.unit_scale()?);
        }
        let rec = train_step(
            &mut self.model,
            &mut self.adam,
            corpus,
            &self.schedule,
            &self.config,
            self.step,
        )?;
        self.step += 1;
        Ok(rec)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: Some(self.adam.state.clone()),
            train: self.config.clone(),
            step: self.step,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Denoiser,
    pub adam: Option<AdamState<f32>>,
    pub train: TrainConfig,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    denoiser: DenoiserConfig,
    train: TrainConfig,
    step: u64,
    adam_step: Option<u64>,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let params = ckpt.model.params();
    let mut tensors: Vec<ArchiveTensor> = params
        .iter()
        .map(|(name, t)| ArchiveTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
        .collect();
    if let Some(state) = &ckpt.adam {
        for (prefix, moments) in [("adam.m", &state.m), ("adam.v", &state.v)] {
            for ((name, _), t) in params.iter().zip(moments) {
                tensors.push(ArchiveTensor {
                    name: format!("{prefix}.{name}"),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                });
            }
        }
    }
    let meta = CheckpointMeta {
        denoiser: ckpt.model.config().clone(),
        train: ckpt.train.clone(),
        step: ckpt.step,
        adam_step: ckpt.adam.as_ref().map(|s| s.step),
    };
    write_archive(
        path,
        &Archive {
            schema: CHECKPOINT_SCHEMA.to_string(),
            metadata: serde_json::to_value(meta)?,
            tensors,
        },
    )
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let archive = read_archive(path)?;
    let bad = |message: String| Error::Container {
        path: path.to_path_buf(),
        message,
    };
    if archive.schema != CHECKPOINT_SCHEMA {
        return Err(bad(format!(
            "schema {:?}, expected {CHECKPOINT_SCHEMA:?}",
            archive.schema
        )));
    }
    let meta: CheckpointMeta =
        serde_json::from_value(archive.metadata.clone()).map_err(|e| bad(e.to_string()))?;
    let mut model = Denoiser::new(meta.denoiser, 0)?;
    let fetch = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = archive
            .get(name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(bad(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(Tensor::new(t.shape.clone(), t.data.clone()))
    };
    let ids: Vec<_> = model.params().ids().collect();
    for &id in &ids {
        let name = model.params().name(id).to_string();
        let shape = model.params().get(id).shape().to_vec();
        *model.params_mut().get_mut(id) = fetch(&name, &shape)?;
    }
    let adam = match meta.adam_step {
        Some(step) => {
            let mut m = Vec::with_capacity(ids.len());
            let mut v = Vec::with_capacity(ids.len());
            for &id in &ids {
                let name = model.params().name(id);
                let shape = model.params().get(id).shape();
                m.push(fetch(&format!("adam.m.{name}"), shape)?);
                v.push(fetch(&format!("adam.v.{name}"), shape)?);
            }
            Some(AdamState { step, m, v })
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        adam,
        train: meta.train,
        step: meta.step,
    })
}
