use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use motionedit_core::benchmark::load_manifest;
use motionedit_core::config::RunConfig;
use motionedit_core::flow::CentroidFlowEstimator;
use motionedit_core::io::{read_video, write_json, write_video};
use motionedit_core::metrics::{backend_by_name, score_edit, EmbeddingBackend};
use motionedit_core::pipeline::{
    animate_edit, load_checkpoint, EditRequest, EditSession, EditType, FirstFrameEditor,
    IdentityEditor, RecolorOracleEditor,
};
use motionedit_core::{Codec, VideoTensor};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::EditArgs;
use crate::exit::{require_path, CmdResult, Failure, UsageContext};

pub const RANKING_FILE: &str = "ranking.json";
pub const RANKINGS_FILE: &str = "rankings.jsonl";

#[derive(Debug, Serialize)]
struct RankedCandidate {
    rank: usize,
    candidate: usize,
    seed: u64,
    m_sim: f64,
    m_dir: f64,
    m_geo: f64,
}

#[derive(Debug, Serialize)]
struct Ranking {
    task_id: Option<String>,
    backend: String,
    motion_conditioning: bool,
    candidates: Vec<RankedCandidate>,
}

struct Job {
    task_id: Option<String>,
    source: VideoTensor,
    source_prompt: String,
    edit_prompt: String,
    edit_type: EditType,
}

struct Context<'a> {
    session: EditSession<'a>,
    editor: &'a dyn FirstFrameEditor,
    backend: &'a dyn EmbeddingBackend,
    template: EditRequest,
    candidates: usize,
}

/// Runs every candidate of one job and orders them by descending M_geo.
fn edit_job(ctx: &Context<'_>, job: &Job) -> CmdResult<(Ranking, Vec<VideoTensor>)> {
    if job.edit_type.is_motion() {
        info!(
            "{}: {} edit, motion conditioning dropped (motion scale forced to 0)",
            job.task_id.as_deref().unwrap_or("edit"),
            job.edit_type
        );
    }
    let mut videos = Vec::with_capacity(ctx.candidates);
    let mut rows = Vec::with_capacity(ctx.candidates);
    for k in 0..ctx.candidates {
        let seed = ctx.template.seed.wrapping_add(k as u64);
        let req = EditRequest {
            source: job.source.clone(),
            source_prompt: job.source_prompt.clone(),
            edit_prompt: job.edit_prompt.clone(),
            edit_type: job.edit_type,
            seed,
            ..ctx.template.clone()
        };
        let out = animate_edit(&ctx.session, &req, &CentroidFlowEstimator, ctx.editor)?;
        let s = score_edit(
            &job.source,
            &out.video,
            &job.source_prompt,
            &job.edit_prompt,
            ctx.backend,
        )?;
        rows.push(RankedCandidate {
            rank: 0,
            candidate: k,
            seed,
            m_sim: s.m_sim,
            m_dir: s.m_dir,
            m_geo: s.m_geo,
        });
        videos.push(out.video);
    }
    rows.sort_by(|a, b| {
        b.m_geo
            .total_cmp(&a.m_geo)
            .then(a.candidate.cmp(&b.candidate))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i;
    }
    let ranking = Ranking {
        task_id: job.task_id.clone(),
        backend: ctx.backend.name().to_string(),
        motion_conditioning: !job.edit_type.is_motion(),
        candidates: rows,
    };
    Ok((ranking, videos))
}

fn editor_by_name(name: &str) -> CmdResult<Box<dyn FirstFrameEditor>> {
    match name {
        "recolor" => Ok(Box::new(RecolorOracleEditor)),
        "identity" => Ok(Box::new(IdentityEditor)),
        other => Err(Failure::usage(format!(
            "unknown editor {other:?} (expected recolor or identity)"
        ))),
    }
}

pub fn run(mut config: RunConfig, args: EditArgs) -> CmdResult {
    let ckpt_path = args
        .checkpoint
        .or(config.paths.checkpoint.clone())
        .ok_or_else(|| Failure::usage("no checkpoint: pass --checkpoint"))?;
    require_path(&ckpt_path, "checkpoint")?;
    let out = args
        .out
        .or(config.paths.out.clone())
        .ok_or_else(|| Failure::usage("no output directory: pass --out"))?;
    let scales = &mut config.edit.scales;
    scales.image = args.scale_image.unwrap_or(scales.image);
    scales.text = args.scale_text.unwrap_or(scales.text);
    scales.motion = args.scale_motion.unwrap_or(scales.motion);
    scales.validate().or_usage()?;
    let candidates = args.candidates.unwrap_or(config.edit.candidates);
    if candidates == 0 {
        return Err(Failure::usage("--candidates must be at least 1"));
    }
    if let Some(s) = args.steps {
        config.sampler.num_inference_steps = s;
    }
    if let Some(e) = args.eta {
        config.sampler.eta = e;
    }
    let editor = editor_by_name(&args.editor)?;
    let backend = backend_by_name(&args.backend).or_usage()?;
    let codec = Codec::from_config(config.codec).or_usage()?;

    let jobs: Vec<Job> = match (&args.video, &args.manifest) {
        (Some(video), None) => {
            require_path(video, "video")?;
            vec![Job {
                task_id: None,
                source: read_video(video)?,
                source_prompt: args.source_prompt.clone().unwrap_or_default(),
                edit_prompt: args.edit_prompt.clone().unwrap_or_default(),
                edit_type: args.edit_type.expect("clap requires --type with --video"),
            }]
        }
        (None, Some(manifest)) => {
            require_path(manifest, "manifest")?;
            let dir = manifest.parent().unwrap_or(Path::new("."));
            let records = load_manifest(manifest)?;
            let n = args.limit.unwrap_or(records.len());
            records
                .into_iter()
                .take(n)
                .map(|r| {
                    Ok(Job {
                        source: read_video(&r.video_path(dir))?,
                        task_id: Some(r.id),
                        source_prompt: r.source_prompt,
                        edit_prompt: r.edit_prompt,
                        edit_type: r.edit_type,
                    })
                })
                .collect::<CmdResult<_>>()?
        }
        _ => return Err(Failure::usage("pass either --video or --manifest")),
    };

    let ckpt = load_checkpoint(&ckpt_path)?;
    let schedule = ckpt.train.schedule()?;
    let session = EditSession {
        model: &ckpt.model,
        vocab: ckpt.model.vocab(),
        codec: &codec,
        schedule: &schedule,
        sampler: &config.sampler,
        latent_scale: ckpt.train.latent_factor(),
    };
    let ctx = Context {
        session,
        editor: editor.as_ref(),
        backend: backend.as_ref(),
        template: EditRequest {
            source: jobs[0].source.clone(),
            source_prompt: String::new(),
            edit_prompt: String::new(),
            edit_type: EditType::Style,
            scales: config.edit.scales,
            seed: args.seed.unwrap_or(config.edit.seed),
        },
        candidates,
    };

    let results = crate::pool(args.jobs)?.install(|| {
        jobs.par_iter()
            .map(|j| edit_job(&ctx, j))
            .collect::<Vec<_>>()
    });
    std::fs::create_dir_all(&out)?;
    if args.video.is_some() {
        let (ranking, videos) = results.into_iter().next().expect("one job")?;
        for (k, v) in videos.iter().enumerate() {
            write_video(&out.join(format!("candidate_{k:02}")), v)?;
        }
        write_json(&out.join(RANKING_FILE), &ranking)?;
        let best = &ranking.candidates[0];
        println!(
            "wrote {candidates} candidates to {}; best candidate_{:02} M_geo {:.4}",
            out.display(),
            best.candidate,
            best.m_geo
        );
    } else {
        let method_dir: PathBuf = out.join(&args.method);
        std::fs::create_dir_all(&method_dir)?;
        let mut index = File::create(method_dir.join(RANKINGS_FILE))?;
        let mut done = 0;
        for (job, r) in jobs.iter().zip(results) {
            let (ranking, videos) = r?;
            let id = job.task_id.as_deref().expect("manifest jobs carry ids");
            write_video(
                &method_dir.join(id),
                &videos[ranking.candidates[0].candidate],
            )?;
            writeln!(index, "{}", serde_json::to_string(&ranking)?)?;
            done += 1;
        }
        println!("edited {done} tasks into {}", method_dir.display());
    }
    Ok(())
}
