use std::collections::BTreeMap;
use std::path::Path;

use motionedit_core::benchmark::load_manifest;
use motionedit_core::metrics::{
    backend_by_name, build_report, load_labels, report_from_scores, ScoreTable,
};

use crate::args::{EvalArgs, ReportArgs};
use crate::exit::{require_path, CmdResult, UsageContext};

pub fn run_eval(args: EvalArgs) -> CmdResult {
    require_path(&args.manifest, "manifest")?;
    require_path(&args.edits, "edits directory")?;
    let backend = backend_by_name(&args.backend).or_usage()?;
    let records = load_manifest(&args.manifest)?;
    let labels = match &args.labels {
        Some(p) => {
            require_path(p, "labels file")?;
            Some(load_labels(p)?)
        }
        None => None,
    };
    let dir = args.manifest.parent().unwrap_or(Path::new("."));
    let report = build_report(
        &records,
        dir,
        &args.edits,
        labels,
        backend.as_ref(),
        args.allow_missing,
    )?;
    report.write(&args.out)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn run_report(args: ReportArgs) -> CmdResult {
    require_path(&args.scores, "scores file")?;
    let scores = ScoreTable::load(&args.scores)?;
    let labels = match &args.labels {
        Some(p) => {
            require_path(p, "labels file")?;
            Some(load_labels(p)?)
        }
        None => None,
    };
    let task_types: BTreeMap<_, _> = match &args.manifest {
        Some(p) => {
            require_path(p, "manifest")?;
            load_manifest(p)?
                .into_iter()
                .map(|r| (r.id, r.edit_type))
                .collect()
        }
        None => BTreeMap::new(),
    };
    let report = report_from_scores(
        "published",
        scores,
        labels.as_deref(),
        &task_types,
        Vec::new(),
    )?;
    report.write(&args.out)?;
    print!("{}", report.to_text());
    Ok(())
}
