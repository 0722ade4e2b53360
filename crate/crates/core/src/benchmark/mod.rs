//! Edit-task manifests, dataset statistics, the synthetic moving-shape benchmark and
//! its attribute oracle.

mod attributes;
mod manifest;
mod stats;
mod synthetic;

pub use attributes::{classify_colors, extract_attributes, VideoAttributes};
pub use manifest::{
    check_video_paths, load_manifest, load_manifest_meta, meta_path, write_manifest, DatasetName,
    EditTaskRecord, ManifestMeta, MANIFEST_SCHEMA,
};
pub use stats::{
    compute_stats, table1_mismatches, CellMismatch, DatasetStats, PublishedColumn, PUBLISHED_TABLE1,
};
pub use synthetic::{
    edit_scene, generate_synthetic_benchmark, load_flow, load_scenes, load_training_items,
    scene_name, SyntheticBenchmark, SyntheticTask, MANIFEST_FILE,
};
