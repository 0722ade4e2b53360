use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use log::info;
use motionedit_core::benchmark::{load_training_items, MANIFEST_FILE};
use motionedit_core::config::RunConfig;
use motionedit_core::pipeline::{
    load_checkpoint, save_checkpoint, LossRecord, Trainer, TrainingCorpus,
};
use motionedit_core::{Codec, Error};

use crate::args::TrainArgs;
use crate::exit::{require_path, CmdResult, Failure, UsageContext};

pub const LOSS_LOG: &str = "loss.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
/// Wall-clock timings; the only output that differs between identical runs.
pub const TIMING_LOG: &str = "timing.log";

fn checkpoint_name(step: u64) -> String {
    format!("step_{step:06}.ckpt")
}

/// Keeps the rows of an earlier run that precede `start`, so a resumed log stays monotone.
fn open_loss_log(path: &Path, start: u64) -> CmdResult<File> {
    let mut kept = Vec::new();
    if start > 0 && path.exists() {
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            let rec: LossRecord = serde_json::from_str(&line)?;
            if rec.step < start {
                kept.push(line);
            }
        }
    }
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(path)?;
    for line in kept {
        writeln!(f, "{line}")?;
    }
    Ok(f)
}

pub fn run(config: RunConfig, args: TrainArgs, explicit_config: bool) -> CmdResult {
    let corpus_dir = args
        .corpus
        .or(config.paths.corpus.clone())
        .ok_or_else(|| Failure::usage("no corpus: pass --corpus"))?;
    require_path(&corpus_dir.join(MANIFEST_FILE), "corpus manifest")?;
    let out = args
        .out
        .or(config.paths.out.clone())
        .ok_or_else(|| Failure::usage("no output directory: pass --out"))?;

    let checkpoint = match &args.resume {
        Some(p) => {
            require_path(p, "checkpoint")?;
            Some(load_checkpoint(p)?)
        }
        None => None,
    };
    let mut train = match &checkpoint {
        Some(c) if !explicit_config => c.train.clone(),
        _ => config.train.clone(),
    };
    if let Some(v) = args.steps {
        train.steps = v;
    }
    if let Some(v) = args.seed {
        train.seed = v;
    }
    if let Some(v) = args.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = args.lr {
        train.optimizer.learning_rate = v;
    }
    if let Some(v) = args.warmup {
        train.optimizer.warmup_steps = v;
    }
    if let Some(v) = args.checkpoint_every {
        train.checkpoint_every = v;
    }
    train.validate().or_usage()?;

    let mut trainer = match checkpoint {
        Some(c) => Trainer::resume(c, train)?,
        None => Trainer::new(config.model.clone(), train)?,
    };
    let codec = Codec::from_config(config.codec).or_usage()?;
    let corpus = TrainingCorpus::build(
        &load_training_items(&corpus_dir)?,
        &codec,
        trainer.model.vocab(),
    )?;
    let want = trainer.model.config().latent_shape();
    if let Some(ex) = corpus.examples.first() {
        if ex.x0.shape() != want {
            return Err(Failure::usage(format!(
                "corpus clips encode to {:?} but the model expects {want:?}",
                ex.x0.shape()
            )));
        }
    }
    if trainer.config.latent_scale.is_none() {
        trainer.config.latent_scale = Some(corpus.unit_scale()?);
    }
    info!(
        "training {} parameters on {} clips from step {} to {} (latent scale {:.4})",
        trainer.model.num_parameters(),
        corpus.len(),
        trainer.step,
        trainer.config.steps,
        trainer.config.latent_factor()
    );

    std::fs::create_dir_all(&out)?;
    let mut log = open_loss_log(&out.join(LOSS_LOG), trainer.step)?;
    let mut timing = File::create(out.join(TIMING_LOG))?;
    let started = Instant::now();
    let every = trainer.config.checkpoint_every;
    while trainer.step < trainer.config.steps {
        let rec = match trainer.step(&corpus) {
            Ok(r) => r,
            Err(e @ Error::NonFiniteLoss { .. }) => {
                let path = out.join(LAST_GOOD_CHECKPOINT);
                save_checkpoint(&path, &trainer.checkpoint())?;
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{e}; last good state saved to {}",
                    path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(log, "{}", serde_json::to_string(&rec)?)?;
        if rec.step % 50 == 0 {
            info!(
                "step {} loss {:.4} grad norm {:.3}",
                rec.step, rec.loss, rec.grad_norm
            );
        }
        if every > 0 && trainer.step % every == 0 {
            save_checkpoint(
                &out.join(checkpoint_name(trainer.step)),
                &trainer.checkpoint(),
            )?;
            writeln!(
                timing,
                "step {} {:.1}s",
                trainer.step,
                started.elapsed().as_secs_f64()
            )?;
        }
    }
    log.flush()?;
    let final_path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&final_path, &trainer.checkpoint())?;
    writeln!(timing, "done {:.1}s", started.elapsed().as_secs_f64())?;
    println!(
        "trained to step {}; checkpoint {}",
        trainer.step,
        final_path.display()
    );
    Ok(())
}
