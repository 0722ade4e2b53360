use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    metric_classification_accuracy, score_edit, spearman, AccuracyTable, Choice, EditScores,
    EmbeddingBackend, PairedComparison, ReasonBreakdown,
};
use crate::benchmark::EditTaskRecord;
use crate::io::{read_json, read_video, write_file, write_json};
use crate::pipeline::EditType;
use crate::{Error, Result};

pub const SCORES_SCHEMA: &str = "motionedit-scores/1";
pub const REPORT_SCHEMA: &str = "motionedit-report/1";
pub const METRICS: [&str; 3] = ["m_sim", "m_dir", "m_geo"];

/// Mean scores of one method, overall and per edit type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodScores {
    pub method: String,
    pub m_dir: f64,
    pub m_geo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_sim: Option<f64>,
    #[serde(default)]
    pub per_type_geo: BTreeMap<EditType, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_type_dir: BTreeMap<EditType, f64>,
    #[serde(default)]
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTable {
    pub schema: String,
    pub methods: Vec<MethodScores>,
}

impl ScoreTable {
    pub fn load(path: &Path) -> Result<Self> {
        let t: Self = read_json(path)?;
        if t.schema != SCORES_SCHEMA {
            return Err(Error::Schema {
                path: path.display().to_string(),
                line: 1,
                message: format!("schema {:?}, expected {SCORES_SCHEMA:?}", t.schema),
            });
        }
        Ok(t)
    }

    /// Methods by descending overall M_geo; equal scores keep name order.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<_> = self
            .methods
            .iter()
            .map(|m| (m.method.as_str(), m.m_geo))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    /// Methods by descending M_geo for one edit type.
    pub fn type_ranking(&self, t: EditType) -> Vec<(&str, f64)> {
        let mut v: Vec<_> = self
            .methods
            .iter()
            .filter_map(|m| m.per_type_geo.get(&t).map(|&s| (m.method.as_str(), s)))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn from_scored(scored: &[ScoredEdit]) -> Self {
        let mut by_method: BTreeMap<&str, Vec<&ScoredEdit>> = BTreeMap::new();
        for s in scored {
            by_method.entry(&s.method).or_default().push(s);
        }
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        };
        let methods = by_method
            .into_iter()
            .map(|(method, rows)| {
                let mut per_type_geo = BTreeMap::new();
                let mut per_type_dir = BTreeMap::new();
                for t in EditType::ALL {
                    let of_type: Vec<_> = rows.iter().filter(|r| r.edit_type == t).collect();
                    if !of_type.is_empty() {
                        per_type_geo.insert(t, mean(&mut of_type.iter().map(|r| r.scores.m_geo)));
                        per_type_dir.insert(t, mean(&mut of_type.iter().map(|r| r.scores.m_dir)));
                    }
                }
                MethodScores {
                    method: method.to_string(),
                    m_dir: mean(&mut rows.iter().map(|r| r.scores.m_dir)),
                    m_geo: mean(&mut rows.iter().map(|r| r.scores.m_geo)),
                    m_sim: Some(mean(&mut rows.iter().map(|r| r.scores.m_sim))),
                    per_type_geo,
                    per_type_dir,
                    count: rows.len(),
                }
            })
            .collect();
        Self {
            schema: SCORES_SCHEMA.to_string(),
            methods,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdit {
    pub task_id: String,
    pub method: String,
    pub edit_type: EditType,
    pub scores: EditScores,
}

/// Scores every `edits_dir/<method>/<task id>` clip against its manifest row.
/// Returns the scores and the `(method, task id)` pairs that had no clip.
pub fn score_edits(
    records: &[EditTaskRecord],
    manifest_dir: &Path,
    edits_dir: &Path,
    backend: &dyn EmbeddingBackend,
) -> Result<(Vec<ScoredEdit>, Vec<String>)> {
    let mut methods: Vec<String> = std::fs::read_dir(edits_dir)
        .map_err(|e| Error::io(edits_dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    methods.sort();
    let jobs: Vec<(&String, &EditTaskRecord)> = methods
        .iter()
        .flat_map(|m| records.iter().map(move |r| (m, r)))
        .collect();
    let results: Vec<Result<Option<ScoredEdit>>> = jobs
        .par_iter()
        .map(|&(method, rec)| {
            let dir = edits_dir.join(method).join(&rec.id);
            if !dir.is_dir() {
                return Ok(None);
            }
            let source = read_video(&rec.video_path(manifest_dir))?;
            let edit = read_video(&dir)?;
            let scores = score_edit(
                &source,
                &edit,
                &rec.source_prompt,
                &rec.edit_prompt,
                backend,
            )?;
            Ok(Some(ScoredEdit {
                task_id: rec.id.clone(),
                method: method.clone(),
                edit_type: rec.edit_type,
                scores,
            }))
        })
        .collect();
    let mut scored = Vec::new();
    let mut missing = Vec::new();
    for ((method, rec), r) in jobs.iter().zip(results) {
        match r? {
            Some(s) => scored.push(s),
            None => missing.push(format!("{method}/{}", rec.id)),
        }
    }
    Ok((scored, missing))
}

/// Accuracy and rank correlation of one metric against the human labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub metric: String,
    pub accuracy: AccuracyTable,
    /// Per edit type plus `"total"`; `None` where the correlation is undefined.
    pub spearman: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasonRow {
    pub winner: String,
    pub loser: String,
    pub comparisons: usize,
    pub reasons: ReasonBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: String,
    pub backend: String,
    pub scores: ScoreTable,
    /// `None` when no labels were supplied.
    pub alignment: Option<Vec<AlignmentRow>>,
    pub reasons: Vec<ReasonRow>,
    pub missing: Vec<String>,
}

/// Fills absent label scores from computed ones, keyed by `(task id, method)`.
pub fn attach_scores(labels: &mut [PairedComparison], scored: &[ScoredEdit]) {
    let index: BTreeMap<(&str, &str), &EditScores> = scored
        .iter()
        .map(|s| ((s.task_id.as_str(), s.method.as_str()), &s.scores))
        .collect();
    for c in labels.iter_mut() {
        for (method, map) in [
            (&c.method_a, &mut c.scores_a),
            (&c.method_b, &mut c.scores_b),
        ] {
            if let Some(s) = index.get(&(c.task_id.as_str(), method.as_str())) {
                for (name, v) in METRICS.iter().zip([s.m_sim, s.m_dir, s.m_geo]) {
                    map.entry(name.to_string()).or_insert(v);
                }
            }
        }
    }
}

fn alignment(
    labels: &[PairedComparison],
    task_types: &BTreeMap<String, EditType>,
) -> Result<Vec<AlignmentRow>> {
    let mut rows = Vec::new();
    for metric in METRICS {
        let usable: Vec<PairedComparison> = labels
            .iter()
            .filter(|c| c.scores_a.contains_key(metric) && c.scores_b.contains_key(metric))
            .cloned()
            .collect();
        if usable.is_empty() {
            continue;
        }
        let accuracy = metric_classification_accuracy(&usable, metric, task_types)?;
        let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for c in &usable {
            let diff = c.scores_a[metric] - c.scores_b[metric];
            let share_a = c.votes.iter().filter(|v| v.choice == Choice::A).count() as f64
                / c.votes.len() as f64;
            let mut keys = vec!["total".to_string()];
            if let Some(t) = task_types.get(&c.task_id) {
                keys.push(t.name().to_string());
            }
            for k in keys {
                let g = groups.entry(k).or_default();
                g.0.push(diff);
                g.1.push(share_a);
            }
        }
        rows.push(AlignmentRow {
            metric: metric.to_string(),
            accuracy,
            spearman: groups
                .into_iter()
                .map(|(k, (x, y))| (k, spearman(&x, &y).ok()))
                .collect(),
        });
    }
    Ok(rows)
}

fn reason_rows(labels: &[PairedComparison]) -> Result<Vec<ReasonRow>> {
    let mut acc: BTreeMap<(String, String), ([usize; 3], usize, usize)> = BTreeMap::new();
    for c in labels {
        let o = c.outcome()?;
        let (w, l) = match o.winner {
            Choice::A => (&c.method_a, &c.method_b),
            Choice::B => (&c.method_b, &c.method_a),
        };
        let e = acc.entry((w.clone(), l.clone())).or_default();
        let n = o.winner_votes;
        e.0[0] += (o.reasons.text_alignment * n as f64).round() as usize;
        e.0[1] += (o.reasons.source_consistency * n as f64).round() as usize;
        e.0[2] += (o.reasons.both * n as f64).round() as usize;
        e.1 += n;
        e.2 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|((winner, loser), (k, n, comparisons))| {
            let f = |x: usize| x as f64 / n.max(1) as f64;
            ReasonRow {
                winner,
                loser,
                comparisons,
                reasons: ReasonBreakdown {
                    text_alignment: f(k[0]),
                    source_consistency: f(k[1]),
                    both: f(k[2]),
                },
            }
        })
        .collect())
}

/// Assembles a report from a score table and optional labels.
pub fn report_from_scores(
    backend: &str,
    scores: ScoreTable,
    labels: Option<&[PairedComparison]>,
    task_types: &BTreeMap<String, EditType>,
    missing: Vec<String>,
) -> Result<MetricReport> {
    let (alignment, reasons) = match labels {
        Some(l) if !l.is_empty() => (Some(alignment(l, task_types)?), reason_rows(l)?),
        _ => (None, Vec::new()),
    };
    Ok(MetricReport {
        schema: REPORT_SCHEMA.to_string(),
        backend: backend.to_string(),
        scores,
        alignment,
        reasons,
        missing,
    })
}

/// Scores the edits directory and assembles the full report. Missing edits are an
/// error unless `allow_missing`; either way they are listed in the report.
pub fn build_report(
    records: &[EditTaskRecord],
    manifest_dir: &Path,
    edits_dir: &Path,
    labels: Option<Vec<PairedComparison>>,
    backend: &dyn EmbeddingBackend,
    allow_missing: bool,
) -> Result<MetricReport> {
    let (scored, missing) = score_edits(records, manifest_dir, edits_dir, backend)?;
    if !missing.is_empty() && !allow_missing {
        return Err(Error::MissingEdit(missing.join(", ")));
    }
    let task_types = records
        .iter()
        .map(|r| (r.id.clone(), r.edit_type))
        .collect();
    let labels = labels.map(|mut l| {
        attach_scores(&mut l, &scored);
        l
    });
    report_from_scores(
        backend.name(),
        ScoreTable::from_scored(&scored),
        labels.as_deref(),
        &task_types,
        missing,
    )
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

impl MetricReport {
    /// Plain-text tables.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Automatic scores (backend: {})", self.backend);
        let _ = writeln!(s, "{:<16}{:>8}{:>8}", "Method", "M_dir", "M_geo");
        for (name, _) in self.scores.ranking() {
            let m = self
                .scores
                .methods
                .iter()
                .find(|m| m.method == name)
                .expect("ranked");
            let _ = writeln!(s, "{:<16}{:>8.3}{:>8.3}", m.method, m.m_dir, m.m_geo);
        }
        let _ = writeln!(s, "\nM_geo by edit type");
        let _ = write!(s, "{:<16}", "Method");
        for t in EditType::ALL {
            let _ = write!(s, "{:>15}", t.title());
        }
        s.push('\n');
        for m in &self.scores.methods {
            let _ = write!(s, "{:<16}", m.method);
            for t in EditType::ALL {
                let _ = write!(s, "{:>15}", fmt_opt(m.per_type_geo.get(&t).copied()));
            }
            s.push('\n');
        }
        s.push('\n');
        match &self.alignment {
            None => {
                let _ = writeln!(s, "Metric alignment: no labels");
            }
            Some(rows) => {
                let _ = writeln!(s, "Classification accuracy / Spearman rho vs human labels");
                let _ = write!(s, "{:<8}", "Metric");
                for t in EditType::ALL {
                    let _ = write!(s, "{:>15}", t.title());
                }
                let _ = writeln!(s, "{:>15}", "Total");
                for r in rows {
                    let _ = write!(s, "{:<8}", r.metric);
                    for t in EditType::ALL {
                        let acc = fmt_opt(r.accuracy.per_type.get(&t).copied());
                        let rho = fmt_opt(r.spearman.get(t.name()).copied().flatten());
                        let _ = write!(s, "{:>15}", format!("{acc}/{rho}"));
                    }
                    let total = format!(
                        "{:.3}/{}",
                        r.accuracy.overall,
                        fmt_opt(r.spearman.get("total").copied().flatten())
                    );
                    let _ = writeln!(s, "{total:>15}");
                }
                let _ = writeln!(
                    s,
                    "\nReasons among winning votes (align / consistency / both)"
                );
                for r in &self.reasons {
                    let _ = writeln!(
                        s,
                        "{} over {} ({} pairs): {:.2} / {:.2} / {:.2}",
                        r.winner,
                        r.loser,
                        r.comparisons,
                        r.reasons.text_alignment,
                        r.reasons.source_consistency,
                        r.reasons.both
                    );
                }
            }
        }
        if !self.missing.is_empty() {
            let _ = writeln!(s, "\nMissing edits: {}", self.missing.join(", "));
        }
        s
    }

    /// Writes `report.json`, `tables.txt` and SVG charts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("report.json"), self)?;
        write_file(&dir.join("tables.txt"), self.to_text().as_bytes())?;
        let bars: Vec<(String, f64)> = self
            .scores
            .ranking()
            .into_iter()
            .map(|(m, v)| (m.to_string(), v))
            .collect();
        write_file(
            &dir.join("m_geo.svg"),
            bar_chart("Mean M_geo per method", &bars).as_bytes(),
        )?;
        if !self.reasons.is_empty() {
            write_file(
                &dir.join("reasons.svg"),
                reason_chart(&self.reasons).as_bytes(),
            )?;
        }
        Ok(())
    }
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let (w, row, left) = (520.0, 24.0, 140.0);
    let h = 40.0 + row * bars.len() as f64;
    let max = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-12);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n<text x=\"10\" y=\"20\">{}</text>\n",
        svg_escape(title)
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = 30.0 + row * i as f64;
        let len = (w - left - 60.0) * v.max(0.0) / max;
        let _ = writeln!(
            s,
            "<text x=\"10\" y=\"{:.1}\">{}</text><rect x=\"{left}\" y=\"{y:.1}\" width=\"{len:.1}\" height=\"{:.1}\" fill=\"#4477aa\"/><text x=\"{:.1}\" y=\"{:.1}\">{v:.3}</text>",
            y + 15.0,
            svg_escape(label),
            row - 6.0,
            left + len + 4.0,
            y + 15.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn reason_chart(rows: &[ReasonRow]) -> String {
    let (w, row, left, span) = (560.0, 24.0, 220.0, 300.0);
    let h = 60.0 + row * rows.len() as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n<text x=\"10\" y=\"20\">Reasons among winning votes: alignment (blue), consistency (green), both (grey)</text>\n"
    );
    for (i, r) in rows.iter().enumerate() {
        let y = 30.0 + row * i as f64;
        let _ = write!(
            s,
            "<text x=\"10\" y=\"{:.1}\">{} over {}</text>",
            y + 15.0,
            svg_escape(&r.winner),
            svg_escape(&r.loser)
        );
        let mut x = left;
        for (frac, color) in [
            (r.reasons.text_alignment, "#4477aa"),
            (r.reasons.source_consistency, "#228833"),
            (r.reasons.both, "#bbbbbb"),
        ] {
            let len = span * frac;
            let _ = write!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{len:.1}\" height=\"{:.1}\" fill=\"{color}\"/>",
                row - 6.0
            );
            x += len;
        }
        s.push('\n');
    }
    s.push_str("</svg>\n");
    s
}
