use ndarray::{Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{decode_video, encode_video, Codec};
use crate::denoiser::{ConditioningBundle, MotionConditioning, VelocityModel};
use crate::flow::{avg_flow_magnitude, flow_to_rgb, FlowEstimator};
use crate::guidance::{cfg_sample, GuidanceOptions, GuidanceScales};
use crate::pipeline::{EditType, FirstFrameEditor};
use crate::schedule::{NoiseSchedule, SamplerConfig};
use crate::text::Vocabulary;
use crate::video::VideoTensor;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EditRequest {
    pub source: VideoTensor,
    pub source_prompt: String,
    pub edit_prompt: String,
    pub edit_type: EditType,
    pub scales: GuidanceScales,
    pub seed: u64,
}

/// Everything an edit needs besides the request; shared read-only across requests.
#[derive(Clone, Copy)]
pub struct EditSession<'a> {
    pub model: &'a dyn VelocityModel,
    pub vocab: &'a Vocabulary,
    pub codec: &'a Codec,
    pub schedule: &'a NoiseSchedule,
    pub sampler: &'a SamplerConfig,
    /// Codec-to-diffusion latent factor the model was trained with.
    pub latent_scale: f32,
}

#[derive(Clone, Debug)]
pub struct EditOutcome {
    pub video: VideoTensor,
    pub edited_first_frame: Array3<f32>,
    /// The conditioning the sampler was given.
    pub conditioning: ConditioningBundle,
    /// Scales actually used; the motion scale is zero for motion-type edits.
    pub scales: GuidanceScales,
}

/// Edits the first frame, then animates it under the source motion (or, for
/// motion-type edits, under the edit prompt alone).
pub fn animate_edit(
    session: &EditSession<'_>,
    req: &EditRequest,
    estimator: &dyn FlowEstimator,
    editor: &dyn FirstFrameEditor,
) -> Result<EditOutcome> {
    req.scales.validate()?;
    let text = session.vocab.tokenize(&req.edit_prompt)?;
    session.vocab.tokenize(&req.source_prompt)?;
    let source_frame = req.source.frame(0).to_owned();
    let edited = editor
        .edit_first_frame(
            &source_frame,
            &req.source_prompt,
            &req.edit_prompt,
            req.edit_type,
        )
        .map_err(|e| Error::Editor(e.to_string()))?;
    if edited.dim() != source_frame.dim() {
        return Err(Error::Editor(format!(
            "editor returned a {:?} frame for a {:?} input",
            edited.dim(),
            source_frame.dim()
        )));
    }
    if edited.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Editor("editor output outside [0, 1]".into()));
    }
    let edited_clip = VideoTensor::new(edited.clone().insert_axis(Axis(0)), req.source.fps())?;
    let image = encode_video(&edited_clip, session.codec)?
        .latents()
        .index_axis(Axis(0), 0)
        .mapv(|v| v * session.latent_scale);

    let mut scales = req.scales;
    let motion = if req.edit_type.is_motion() {
        scales.motion = 0.0;
        None
    } else {
        let flow = estimator.estimate(&req.source)?;
        let rgb = flow_to_rgb(&flow, req.source.fps())?;
        Some(MotionConditioning {
            latent: encode_video(&rgb, session.codec)?.scaled(session.latent_scale),
            magnitude: avg_flow_magnitude(&flow) as f32,
        })
    };
    debug_assert_eq!(motion.is_none(), req.edit_type.is_motion());
    let conditioning = ConditioningBundle {
        text: Some(text),
        image: Some(image),
        motion,
        drop: Default::default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let latent = cfg_sample(
        session.model,
        &conditioning,
        &scales,
        session.schedule,
        session.sampler,
        GuidanceOptions::default(),
        &mut rng,
    )?;
    Ok(EditOutcome {
        video: decode_video(&latent.scaled(session.latent_scale.recip()), session.codec)?,
        edited_first_frame: edited,
        conditioning,
        scales,
    })
}
