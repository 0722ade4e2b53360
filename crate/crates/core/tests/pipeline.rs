use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use motionedit_core::denoiser::{DenoiseInput, Denoiser, DenoiserConfig, VelocityModel};
use motionedit_core::flow::{synthetic_flow, CentroidFlowEstimator, FlowEstimator, FlowField};
use motionedit_core::guidance::{compose_call_count, GuidanceScales};
use motionedit_core::nn::{Adam, Tensor};
use motionedit_core::pipeline::*;
use motionedit_core::scene::{Canvas, Direction, SceneSpec};
use motionedit_core::text::Vocabulary;
use motionedit_core::{Codec, Error, LatentShape, Result, SamplerConfig, VideoTensor};

fn canvas() -> Canvas {
    Canvas {
        frames: 2,
        height: 32,
        width: 32,
        fps: 8.0,
    }
}

fn small_model() -> DenoiserConfig {
    DenoiserConfig {
        frames: 2,
        latent_size: 8,
        base_width: 8,
        embed_width: 16,
        text_width: 16,
        heads: 2,
        groups: 4,
        ..DenoiserConfig::default()
    }
}

fn train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        schedule_steps: 100,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn scenes(n: usize, seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SceneSpec::random(&mut rng, &canvas(), None))
        .collect()
}

fn corpus() -> TrainingCorpus {
    let items: Vec<(VideoTensor, String, FlowField)> = scenes(3, 1)
        .iter()
        .map(|s| {
            (
                s.render(&canvas()).unwrap(),
                s.prompt().to_string(),
                synthetic_flow(s, &canvas()),
            )
        })
        .collect();
    TrainingCorpus::build(&items, &Codec::default(), &Vocabulary::toy()).unwrap()
}

fn bits(model: &Denoiser) -> Vec<u32> {
    model
        .params()
        .iter()
        .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn training_steps_are_reproducible_and_never_compose_guidance() {
    let corpus = corpus();
    let before = compose_call_count();
    let run = || {
        let mut tr = Trainer::new(small_model(), train_config()).unwrap();
        let losses: Vec<LossRecord> = (0..3).map(|_| tr.step(&corpus).unwrap()).collect();
        (losses, bits(&tr.model))
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.0.iter().all(|r| r.loss.is_finite() && r.grad_norm >= 0.0));
    assert_eq!(compose_call_count(), before);
}

#[test]
fn latent_scale_is_derived_once_and_saved() {
    let corpus = corpus();
    let scale = corpus.unit_scale().unwrap();
    let scaled: Vec<f64> = corpus
        .examples
        .iter()
        .flat_map(|ex| ex.scaled(scale as f32).x0.into_latents())
        .map(|v| f64::from(v) * f64::from(v))
        .collect();
    let mean_square = scaled.iter().sum::<f64>() / scaled.len() as f64;
    assert!((mean_square - 1.0).abs() < 1e-4, "{mean_square}");

    let mut tr = Trainer::new(small_model(), train_config()).unwrap();
    assert_eq!(tr.config.latent_scale, None);
    assert_eq!(tr.config.latent_factor(), 1.0);
    tr.step(&corpus).unwrap();
    assert_eq!(tr.config.latent_scale, Some(scale));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ckpt");
    save_checkpoint(&path, &tr.checkpoint()).unwrap();
    assert_eq!(
        load_checkpoint(&path).unwrap().train.latent_scale,
        Some(scale)
    );

    let fixed = TrainConfig {
        latent_scale: Some(0.5),
        ..train_config()
    };
    let mut tr = Trainer::new(small_model(), fixed).unwrap();
    tr.step(&corpus).unwrap();
    assert_eq!(tr.config.latent_scale, Some(0.5));
    for bad in [0.0, -1.0, f64::NAN] {
        let config = TrainConfig {
            latent_scale: Some(bad),
            ..train_config()
        };
        assert!(Trainer::new(small_model(), config).is_err());
    }
}

#[test]
fn non_finite_loss_leaves_parameters_untouched() {
    let corpus = corpus();
    let config = train_config();
    let mut model = Denoiser::new(small_model(), 0).unwrap();
    let id = model.params().ids().next().unwrap();
    let poisoned = {
        let t = model.params().get(id);
        let mut data = t.data().to_vec();
        data[0] = f32::NAN;
        Tensor::new(t.shape().to_vec(), data)
    };
    *model.params_mut().get_mut(id) = poisoned;
    let snapshot = bits(&model);
    let mut adam = Adam::new(config.optimizer, model.params());
    let err = train_step(
        &mut model,
        &mut adam,
        &corpus,
        &config.schedule().unwrap(),
        &config,
        0,
    )
    .unwrap_err();
    assert!(
        matches!(err, Error::NonFiniteLoss { step: 0, .. }),
        "{err:?}"
    );
    assert_eq!(bits(&model), snapshot);
    assert_eq!(adam.state.step, 0);
}

#[test]
fn checkpoint_roundtrip_and_resume_match_an_uninterrupted_run() {
    let corpus = corpus();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");

    let mut straight = Trainer::new(small_model(), train_config()).unwrap();
    for _ in 0..3 {
        straight.step(&corpus).unwrap();
    }

    let mut first = Trainer::new(small_model(), train_config()).unwrap();
    for _ in 0..2 {
        first.step(&corpus).unwrap();
    }
    save_checkpoint(&path, &first.checkpoint()).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.step, 2);
    assert_eq!(
        loaded.train,
        TrainConfig {
            latent_scale: Some(corpus.unit_scale().unwrap()),
            ..train_config()
        }
    );
    assert_eq!(bits(&loaded.model), bits(&first.model));
    let state = loaded.adam.as_ref().unwrap();
    assert_eq!(state.step, first.adam.state.step);

    let mut resumed = Trainer::resume(loaded, train_config()).unwrap();
    let last = resumed.step(&corpus).unwrap();
    assert_eq!(last.step, 2);
    assert_eq!(bits(&resumed.model), bits(&straight.model));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(load_checkpoint(&path).is_err());
}

/// Predicts zero velocity and counts calls.
struct ZeroModel(LatentShape, AtomicUsize);

impl VelocityModel for ZeroModel {
    fn latent_shape(&self) -> LatentShape {
        self.0
    }
    fn predict(&self, inputs: &[DenoiseInput<'_>]) -> Result<Vec<Array4<f32>>> {
        self.1.fetch_add(inputs.len(), Ordering::Relaxed);
        Ok(inputs
            .iter()
            .map(|i| Array4::zeros(i.z.latents().raw_dim()))
            .collect())
    }
}

struct CountingEstimator(AtomicUsize);

impl FlowEstimator for CountingEstimator {
    fn estimate(&self, video: &VideoTensor) -> Result<FlowField> {
        self.0.fetch_add(1, Ordering::Relaxed);
        CentroidFlowEstimator.estimate(video)
    }
}

fn edit(
    source: &SceneSpec,
    target: &SceneSpec,
    edit_type: EditType,
) -> (EditOutcome, usize, usize) {
    let model = ZeroModel(small_model().latent_shape(), AtomicUsize::new(0));
    let estimator = CountingEstimator(AtomicUsize::new(0));
    let vocab = Vocabulary::toy();
    let codec = Codec::default();
    let schedule = train_config().schedule().unwrap();
    let sampler = SamplerConfig {
        num_inference_steps: 4,
        eta: 0.0,
    };
    let session = EditSession {
        model: &model,
        vocab: &vocab,
        codec: &codec,
        schedule: &schedule,
        sampler: &sampler,
        latent_scale: 1.0,
    };
    let req = EditRequest {
        source: source.render(&canvas()).unwrap(),
        source_prompt: source.prompt().to_string(),
        edit_prompt: target.prompt().to_string(),
        edit_type,
        scales: GuidanceScales {
            image: 1.5,
            text: 1.5,
            motion: 2.0,
        },
        seed: 0,
    };
    let out = animate_edit(&session, &req, &estimator, &RecolorOracleEditor).unwrap();
    (out, estimator.0.into_inner(), model.1.into_inner())
}

#[test]
fn motion_edits_never_estimate_flow() {
    let s = scenes(1, 9).remove(0);
    let dir = s.direction().unwrap();
    let other = if dir == Direction::Left {
        Direction::Right
    } else {
        Direction::Left
    };
    let turned = s.with_direction(other);
    let (out, estimated, _) = edit(&s, &turned, EditType::Motion);
    assert_eq!(estimated, 0);
    assert!(out.conditioning.motion.is_none());
    assert_eq!(out.scales.motion, 0.0);
    assert_eq!(
        out.edited_first_frame,
        s.render(&canvas()).unwrap().frame(0).to_owned()
    );
}

#[test]
fn appearance_edits_recolor_the_first_frame_and_keep_source_motion() {
    let s = scenes(1, 10).remove(0);
    let recolored = SceneSpec {
        shape_color: s.background,
        background: s.shape_color,
        ..s.clone()
    };
    let (out, estimated, calls) = edit(&s, &recolored, EditType::Object);
    assert_eq!(estimated, 1);
    assert!(calls > 0);
    let m = out.conditioning.motion.as_ref().unwrap();
    assert!(m.magnitude > 0.0);
    assert_eq!(out.scales.motion, 2.0);
    assert_eq!(
        out.edited_first_frame,
        recolored.render(&canvas()).unwrap().frame(0).to_owned()
    );
    assert_eq!(out.video.frames().dim(), (2, 3, 32, 32));
}
