use std::path::Path;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{write_manifest, DatasetName, EditTaskRecord, ManifestMeta, MANIFEST_SCHEMA};
use crate::flow::{synthetic_flow, FlowField};
use crate::io::{
    read_json, read_raw_tensor, read_video, write_json, write_raw_tensor, write_video, RawTensor,
};
use crate::pipeline::EditType;
use crate::scene::{Canvas, Direction, PaletteColor, SceneSpec, Style};
use crate::video::VideoTensor;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub record: EditTaskRecord,
    pub source: SceneSpec,
    /// The scene the edit should produce; its rendering is the ground truth.
    pub target: SceneSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBenchmark {
    pub canvas: Canvas,
    pub scenes: Vec<SceneSpec>,
    pub tasks: Vec<SyntheticTask>,
}

pub fn scene_name(i: usize) -> String {
    format!("scene_{i:04}")
}

fn others<T: Copy + PartialEq>(all: &[T], current: T) -> Vec<T> {
    all.iter().copied().filter(|&x| x != current).collect()
}

/// A valid edited scene of the given type, or `None` when no choice keeps the
/// scene in frame and visible.
pub fn edit_scene<R: Rng + ?Sized>(
    source: &SceneSpec,
    edit_type: EditType,
    canvas: &Canvas,
    rng: &mut R,
) -> Option<SceneSpec> {
    let mut candidates: Vec<SceneSpec> = match edit_type {
        EditType::Style => others(Style::ALL, source.style)
            .into_iter()
            .map(|style| SceneSpec {
                style,
                ..source.clone()
            })
            .collect(),
        EditType::Background => others(PaletteColor::ALL, source.background)
            .into_iter()
            .map(|background| SceneSpec {
                background,
                ..source.clone()
            })
            .collect(),
        EditType::Object => others(PaletteColor::ALL, source.shape_color)
            .into_iter()
            .map(|shape_color| SceneSpec {
                shape_color,
                ..source.clone()
            })
            .collect(),
        EditType::Motion => motion_candidates(source),
        EditType::MultiSpatial => {
            let mut v = Vec::new();
            for fg in others(PaletteColor::ALL, source.shape_color) {
                for bg in others(PaletteColor::ALL, source.background) {
                    v.push(SceneSpec {
                        shape_color: fg,
                        background: bg,
                        ..source.clone()
                    });
                }
            }
            v
        }
        EditType::MultiMotion => {
            let mut v = Vec::new();
            for fg in others(PaletteColor::ALL, source.shape_color) {
                for s in motion_candidates(source) {
                    v.push(SceneSpec {
                        shape_color: fg,
                        ..s
                    });
                }
            }
            v
        }
    };
    candidates.shuffle(rng);
    candidates.into_iter().find(|s| s.validate(canvas).is_ok())
}

fn motion_candidates(source: &SceneSpec) -> Vec<SceneSpec> {
    Direction::ALL
        .iter()
        .filter(|&&d| Some(d) != source.direction())
        .map(|&d| source.with_direction(d))
        .collect()
}

/// Random scenes, each with one task per edit type.
pub fn generate_synthetic_benchmark<R: Rng + ?Sized>(
    n_scenes: usize,
    canvas: &Canvas,
    rng: &mut R,
) -> Result<SyntheticBenchmark> {
    if n_scenes == 0 {
        return Err(Error::InvalidConfig("need at least one scene".into()));
    }
    let mut scenes = Vec::with_capacity(n_scenes);
    let mut tasks = Vec::with_capacity(6 * n_scenes);
    while scenes.len() < n_scenes {
        let source = SceneSpec::random(rng, canvas, None);
        let Some(targets) = EditType::ALL
            .iter()
            .map(|&t| edit_scene(&source, t, canvas, rng))
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let i = scenes.len();
        for (edit_type, target) in EditType::ALL.into_iter().zip(targets) {
            tasks.push(SyntheticTask {
                record: EditTaskRecord {
                    id: format!("syn-{i:04}-{edit_type}"),
                    dataset: DatasetName::Synthetic,
                    video: format!("videos/{}", scene_name(i)),
                    source_prompt: source.prompt().to_string(),
                    edit_prompt: target.prompt().to_string(),
                    edit_type,
                },
                source: source.clone(),
                target,
            });
        }
        scenes.push(source);
    }
    Ok(SyntheticBenchmark {
        canvas: *canvas,
        scenes,
        tasks,
    })
}

impl SyntheticBenchmark {
    pub fn records(&self) -> Vec<EditTaskRecord> {
        self.tasks.iter().map(|t| t.record.clone()).collect()
    }

    /// Writes source clips, scene sidecars, analytic flows, ground-truth edits and
    /// the manifest under `dir`. Output bytes do not depend on thread count.
    pub fn write(&self, dir: &Path, seed: Option<u64>) -> Result<()> {
        self.scenes
            .par_iter()
            .enumerate()
            .try_for_each(|(i, scene)| -> Result<()> {
                let name = scene_name(i);
                write_video(
                    &dir.join("videos").join(&name),
                    &scene.render(&self.canvas)?,
                )?;
                write_json(&dir.join("scenes").join(format!("{name}.json")), scene)?;
                let flow = synthetic_flow(scene, &self.canvas);
                write_raw_tensor(
                    &dir.join("flows").join(format!("{name}.bin")),
                    &RawTensor::f32(
                        flow.vectors().shape().to_vec(),
                        flow.vectors().as_slice().expect("standard layout"),
                    ),
                )
            })?;
        self.tasks.par_iter().try_for_each(|task| -> Result<()> {
            let id = &task.record.id;
            write_video(
                &dir.join("edits_gt").join(id),
                &task.target.render(&self.canvas)?,
            )?;
            write_json(
                &dir.join("scenes_gt").join(format!("{id}.json")),
                &task.target,
            )
        })?;
        write_manifest(
            &dir.join(MANIFEST_FILE),
            &self.records(),
            &ManifestMeta {
                schema: MANIFEST_SCHEMA.to_string(),
                faces_filtered: false,
                seed,
                note: Some("synthetic moving-shape scenes".into()),
            },
        )
    }
}

/// Scene sidecars of a generated corpus, in scene order.
pub fn load_scenes(dir: &Path) -> Result<Vec<SceneSpec>> {
    let scenes_dir = dir.join("scenes");
    let mut names: Vec<_> = std::fs::read_dir(&scenes_dir)
        .map_err(|e| Error::io(&scenes_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("scene_") && n.ends_with(".json"))
        .collect();
    names.sort();
    names
        .iter()
        .map(|n| read_json(&scenes_dir.join(n)))
        .collect()
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let raw = read_raw_tensor(path)?;
    let shape: [usize; 4] = raw
        .shape
        .as_slice()
        .try_into()
        .map_err(|_| Error::Container {
            path: path.to_path_buf(),
            message: format!("flow tensor must be rank 4, got {:?}", raw.shape),
        })?;
    let values: Vec<f32> = raw.values.iter().map(|&v| v as f32).collect();
    let a = Array4::from_shape_vec(shape, values).map_err(|e| Error::Container {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    FlowField::new(a)
}

/// `(clip, prompt, flow)` for every scene of a generated corpus.
pub fn load_training_items(dir: &Path) -> Result<Vec<(VideoTensor, String, FlowField)>> {
    let scenes = load_scenes(dir)?;
    (0..scenes.len())
        .into_par_iter()
        .map(|i| {
            let name = scene_name(i);
            let video = read_video(&dir.join("videos").join(&name))?;
            let flow = load_flow(&dir.join("flows").join(format!("{name}.bin")))?;
            Ok((video, scenes[i].prompt().to_string(), flow))
        })
        .collect()
}
