use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{DatasetName, EditTaskRecord};
use crate::pipeline::EditType;

/// Per-dataset edit-type counts and video reuse.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub counts: BTreeMap<DatasetName, [usize; 6]>,
    pub unique_videos: BTreeMap<DatasetName, usize>,
}

fn type_index(t: EditType) -> usize {
    EditType::ALL.iter().position(|&x| x == t).expect("listed")
}

pub fn compute_stats(records: &[EditTaskRecord]) -> DatasetStats {
    let mut counts: BTreeMap<DatasetName, [usize; 6]> = BTreeMap::new();
    let mut videos: BTreeMap<DatasetName, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        counts.entry(r.dataset).or_default()[type_index(r.edit_type)] += 1;
        videos.entry(r.dataset).or_default().insert(&r.video);
    }
    DatasetStats {
        counts,
        unique_videos: videos.into_iter().map(|(k, v)| (k, v.len())).collect(),
    }
}

impl DatasetStats {
    pub fn datasets(&self) -> impl Iterator<Item = DatasetName> + '_ {
        self.counts.keys().copied()
    }

    pub fn count(&self, dataset: DatasetName, edit_type: EditType) -> usize {
        self.counts
            .get(&dataset)
            .map_or(0, |c| c[type_index(edit_type)])
    }

    pub fn total(&self, dataset: DatasetName) -> usize {
        self.counts.get(&dataset).map_or(0, |c| c.iter().sum())
    }

    pub fn type_total(&self, edit_type: EditType) -> usize {
        self.counts.values().map(|c| c[type_index(edit_type)]).sum()
    }

    pub fn grand_total(&self) -> usize {
        self.counts.values().flatten().sum()
    }

    pub fn unique_videos(&self, dataset: DatasetName) -> usize {
        self.unique_videos.get(&dataset).copied().unwrap_or(0)
    }

    /// Edits per unique video, or 0 for an absent dataset.
    pub fn avg_edits_per_video(&self, dataset: DatasetName) -> f64 {
        match self.unique_videos(dataset) {
            0 => 0.0,
            n => self.total(dataset) as f64 / n as f64,
        }
    }

    /// Plain-text rendering with one column per dataset present.
    pub fn to_table(&self) -> String {
        let ds: Vec<_> = self.datasets().collect();
        let mut out = format!("{:<22}", "");
        for d in &ds {
            out.push_str(&format!("{:>12}", d.name()));
        }
        out.push('\n');
        let mut row = |label: &str, cell: &dyn Fn(DatasetName) -> String| {
            out.push_str(&format!("{label:<22}"));
            for &d in &ds {
                out.push_str(&format!("{:>12}", cell(d)));
            }
            out.push('\n');
        };
        for t in EditType::ALL {
            row(t.title(), &|d| self.count(d, t).to_string());
        }
        row("Total", &|d| self.total(d).to_string());
        row("# Unique Videos", &|d| self.unique_videos(d).to_string());
        row("Avg Edits Per Video", &|d| {
            format!("{:.2}", self.avg_edits_per_video(d))
        });
        out
    }
}

/// The dataset table as published: counts per edit type, totals, unique videos and
/// the printed two-decimal averages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedColumn {
    pub dataset: DatasetName,
    pub counts: [usize; 6],
    pub total: usize,
    pub unique_videos: usize,
    pub avg_edits_per_video: f64,
}

pub const PUBLISHED_TABLE1: [PublishedColumn; 3] = [
    PublishedColumn {
        dataset: DatasetName::LoveuTgve,
        counts: [35, 35, 35, 0, 35, 0],
        total: 140,
        unique_videos: 35,
        avg_edits_per_video: 4.0,
    },
    PublishedColumn {
        dataset: DatasetName::Dreamix,
        counts: [1, 1, 7, 2, 0, 0],
        total: 14,
        unique_videos: 9,
        avg_edits_per_video: 1.56,
    },
    PublishedColumn {
        dataset: DatasetName::Custom,
        counts: [11, 7, 14, 68, 0, 17],
        total: 117,
        unique_videos: 37,
        avg_edits_per_video: 3.16,
    },
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellMismatch {
    pub dataset: DatasetName,
    pub row: String,
    pub published: f64,
    pub computed: f64,
}

/// Every cell where `stats` differs from the published table; averages are compared
/// after rounding to two decimals.
pub fn table1_mismatches(stats: &DatasetStats) -> Vec<CellMismatch> {
    let mut out = Vec::new();
    for col in PUBLISHED_TABLE1 {
        let d = col.dataset;
        let mut check = |row: &str, published: f64, computed: f64| {
            if published != computed {
                out.push(CellMismatch {
                    dataset: d,
                    row: row.to_string(),
                    published,
                    computed,
                });
            }
        };
        for (i, t) in EditType::ALL.into_iter().enumerate() {
            check(t.title(), col.counts[i] as f64, stats.count(d, t) as f64);
        }
        check("Total", col.total as f64, stats.total(d) as f64);
        check(
            "# Unique Videos",
            col.unique_videos as f64,
            stats.unique_videos(d) as f64,
        );
        let avg = (stats.avg_edits_per_video(d) * 100.0).round() / 100.0;
        check("Avg Edits Per Video", col.avg_edits_per_video, avg);
    }
    out
}
