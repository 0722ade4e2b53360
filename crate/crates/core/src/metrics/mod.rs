//! Edit-quality scores over pluggable embedders, human-label aggregation and the
//! agreement between the two.

mod embed;
mod labels;
mod report;
mod scores;
mod spearman;

pub use embed::{
    backend_by_name, normalize, EmbeddingBackend, FrameAverageEmbedder, FramePooling, OracleCode,
    OracleEmbedder, STATIC_SPEED,
};
pub use labels::{
    load_labels, majority_vote, metric_classification_accuracy, AccuracyTable, Choice,
    PairedComparison, Reason, ReasonBreakdown, Vote, VoteOutcome,
};
pub use report::{
    attach_scores, build_report, report_from_scores, score_edits, AlignmentRow, MethodScores,
    MetricReport, ReasonRow, ScoreTable, ScoredEdit, METRICS, REPORT_SCHEMA, SCORES_SCHEMA,
};
pub use scores::{
    direction_cosine, dot, m_dir, m_geo, m_sim, score_edit, EditScores, DEGENERATE_NORM,
};
pub use spearman::{average_ranks, pearson, spearman};
