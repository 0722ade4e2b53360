use motionedit_core::benchmark::{generate_synthetic_benchmark, MANIFEST_FILE};
use motionedit_core::config::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::GenDataArgs;
use crate::exit::{CmdResult, Failure};

pub fn run(mut config: RunConfig, args: GenDataArgs) -> CmdResult {
    if let Some(n) = args.scenes {
        config.data.scenes = n;
    }
    if let Some(s) = args.seed {
        config.data.seed = s;
    }
    if config.data.scenes == 0 {
        return Err(Failure::usage("--scenes must be at least 1"));
    }
    let out = args
        .out
        .or(config.paths.out)
        .ok_or_else(|| Failure::usage("no output directory: pass --out"))?;
    let seed = config.data.seed;
    let canvas = config.canvas;
    let bench = crate::pool(args.jobs)?.install(|| -> CmdResult<_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bench = generate_synthetic_benchmark(config.data.scenes, &canvas, &mut rng)?;
        bench.write(&out, Some(seed))?;
        Ok(bench)
    })?;
    println!(
        "wrote {} scenes and {} edit tasks to {} (manifest {})",
        bench.scenes.len(),
        bench.tasks.len(),
        out.display(),
        MANIFEST_FILE
    );
    Ok(())
}
