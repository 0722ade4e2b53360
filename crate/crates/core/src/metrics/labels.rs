use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::read_file;
use crate::pipeline::EditType;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    TextAlignment,
    SourceConsistency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vote {
    pub choice: Choice,
    pub reasons: Vec<Reason>,
}

impl Vote {
    pub fn new(choice: Choice, reasons: &[Reason]) -> Self {
        Self {
            choice,
            reasons: reasons.to_vec(),
        }
    }
}

/// One rater task: two methods' edits of the same source, their automatic scores
/// keyed by metric name, and the raters' votes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedComparison {
    pub task_id: String,
    pub method_a: String,
    pub method_b: String,
    #[serde(default)]
    pub scores_a: BTreeMap<String, f64>,
    #[serde(default)]
    pub scores_b: BTreeMap<String, f64>,
    pub votes: Vec<Vote>,
}

impl PairedComparison {
    pub fn validate(&self) -> Result<()> {
        if self.votes.is_empty() || self.votes.len().is_multiple_of(2) {
            return Err(Error::EvenVoteCount(self.votes.len()));
        }
        if self.votes.iter().any(|v| v.reasons.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "comparison {:?} has a vote without a reason",
                self.task_id
            )));
        }
        Ok(())
    }

    pub fn outcome(&self) -> Result<VoteOutcome> {
        majority_vote(&self.votes)
    }
}

/// Share of the winner's votes citing each reason category; the three are exclusive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasonBreakdown {
    pub text_alignment: f64,
    pub source_consistency: f64,
    pub both: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub winner: Choice,
    pub winner_votes: usize,
    pub total_votes: usize,
    pub reasons: ReasonBreakdown,
}

pub fn majority_vote(votes: &[Vote]) -> Result<VoteOutcome> {
    if votes.is_empty() || votes.len().is_multiple_of(2) {
        return Err(Error::EvenVoteCount(votes.len()));
    }
    let a = votes.iter().filter(|v| v.choice == Choice::A).count();
    let winner = if 2 * a > votes.len() {
        Choice::A
    } else {
        Choice::B
    };
    let mut counts = [0usize; 3];
    let mut n = 0usize;
    for v in votes.iter().filter(|v| v.choice == winner) {
        let set: HashSet<Reason> = v.reasons.iter().copied().collect();
        let align = set.contains(&Reason::TextAlignment);
        let cons = set.contains(&Reason::SourceConsistency);
        match (align, cons) {
            (true, true) => counts[2] += 1,
            (true, false) => counts[0] += 1,
            (false, true) => counts[1] += 1,
            (false, false) => {
                return Err(Error::InvalidConfig("vote without a reason".into()));
            }
        }
        n += 1;
    }
    let frac = |k: usize| k as f64 / n as f64;
    Ok(VoteOutcome {
        winner,
        winner_votes: n,
        total_votes: votes.len(),
        reasons: ReasonBreakdown {
            text_alignment: frac(counts[0]),
            source_consistency: frac(counts[1]),
            both: frac(counts[2]),
        },
    })
}

/// Fraction of comparisons where the higher-scoring side is the human winner,
/// overall and per edit type. Exact score ties count as half right.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub overall: f64,
    pub count: usize,
    pub per_type: BTreeMap<EditType, f64>,
}

fn score(map: &BTreeMap<String, f64>, c: &PairedComparison, metric: &str) -> Result<f64> {
    map.get(metric)
        .copied()
        .ok_or_else(|| Error::MissingScore(c.task_id.clone(), metric.to_string()))
}

pub fn metric_classification_accuracy(
    comparisons: &[PairedComparison],
    metric: &str,
    task_types: &BTreeMap<String, EditType>,
) -> Result<AccuracyTable> {
    let mut total = 0.0;
    let mut by_type: BTreeMap<EditType, (f64, usize)> = BTreeMap::new();
    for c in comparisons {
        let (sa, sb) = (
            score(&c.scores_a, c, metric)?,
            score(&c.scores_b, c, metric)?,
        );
        let winner = c.outcome()?.winner;
        let credit = if sa == sb {
            0.5
        } else if (sa > sb) == (winner == Choice::A) {
            1.0
        } else {
            0.0
        };
        total += credit;
        if let Some(&t) = task_types.get(&c.task_id) {
            let e = by_type.entry(t).or_default();
            e.0 += credit;
            e.1 += 1;
        }
    }
    Ok(AccuracyTable {
        overall: if comparisons.is_empty() {
            0.0
        } else {
            total / comparisons.len() as f64
        },
        count: comparisons.len(),
        per_type: by_type
            .into_iter()
            .map(|(t, (s, n))| (t, s / n as f64))
            .collect(),
    })
}

/// Reads a labels file; each line is a [`PairedComparison`].
pub fn load_labels(path: &Path) -> Result<Vec<PairedComparison>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let c: PairedComparison = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        c.validate().map_err(|e| schema(e.to_string()))?;
        out.push(c);
    }
    Ok(out)
}
