pub mod benchmark;
pub mod codec;
pub mod config;
pub mod denoiser;
pub mod error;
pub mod flow;
pub mod guidance;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scene;
pub mod schedule;
pub mod text;
pub mod video;

pub use codec::{decode_video, encode_video, Codec, CodecConfig, CodecKind};
pub use error::{Error, Result};
pub use schedule::{make_schedule, NoiseSchedule, SamplerConfig, ScheduleBase};
pub use video::{LatentShape, LatentVideo, VideoTensor};
