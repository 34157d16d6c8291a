//! Evaluation helpers: question deduplication, Likert summaries and
//! inter-rater agreement.

mod dedup;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dedup::{dedup_questions, dedup_vectors, DedupResult, RemovedPair, DEFAULT_DEDUP_THRESHOLD};
pub use stats::{cohen_kappa, cohen_kappa_binary, summarize_scores, KappaCounts};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no ratings in group {0}")]
    EmptyGroup(String),
    #[error("rating lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no ratings given")]
    Empty,
    #[error("score {0} is outside 1..=5")]
    ScoreOutOfRange(i64),
    #[error("question {0} has no category")]
    UnmappedQuestion(String),
    #[error("threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("expected exactly two raters, found {0:?}")]
    RaterCount(Vec<String>),
    #[error("interaction {interaction} / {criterion} is not rated by both raters")]
    Unpaired { interaction: String, criterion: String },
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("bad ratings file: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ClassificationsScheduling,
    RegulatoryPolicy,
    HealthEffects,
    Prevention,
    TreatmentRecovery,
}

impl Category {
    /// Reporting order.
    pub const ALL: [Category; 5] = [
        Category::ClassificationsScheduling,
        Category::RegulatoryPolicy,
        Category::HealthEffects,
        Category::Prevention,
        Category::TreatmentRecovery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::ClassificationsScheduling => "classifications_scheduling",
            Category::RegulatoryPolicy => "regulatory_policy",
            Category::HealthEffects => "health_effects",
            Category::Prevention => "prevention",
            Category::TreatmentRecovery => "treatment_recovery",
        }
    }

    pub fn primary_source(self) -> &'static str {
        match self {
            Category::ClassificationsScheduling | Category::RegulatoryPolicy => "regulatory corpus",
            Category::HealthEffects | Category::Prevention => "dual-source",
            Category::TreatmentRecovery => "literature (primary)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    FactualAccuracy,
    CitationQuality,
    ContextualCoherence,
    RegulatoryAppropriateness,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::FactualAccuracy => "factual_accuracy",
            Criterion::CitationQuality => "citation_quality",
            Criterion::ContextualCoherence => "contextual_coherence",
            Criterion::RegulatoryAppropriateness => "regulatory_appropriateness",
        }
    }
}

/// One row of the ratings CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatedInteraction {
    pub interaction_id: String,
    pub question_id: String,
    pub category: Category,
    pub criterion: Criterion,
    pub rater_id: String,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub min: u8,
    pub max: u8,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_source: Option<String>,
}

impl SummaryRow {
    /// "4.31 (0.68)".
    pub fn mean_sd(&self) -> String {
        format!("{:.2} ({:.2})", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Criterion,
    Category,
    Overall,
}

pub fn check_score(score: i64) -> Result<u8, EvalError> {
    if (1..=5).contains(&score) {
        Ok(score as u8)
    } else {
        Err(EvalError::ScoreOutOfRange(score))
    }
}

/// Reads ratings with header
/// `interaction_id,question_id,category,criterion,rater_id,score`.
pub fn read_ratings(path: &Path) -> Result<Vec<RatedInteraction>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    parse_rows(&mut reader)
}

pub fn parse_ratings(raw: &str) -> Result<Vec<RatedInteraction>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw.as_bytes());
    parse_rows(&mut reader)
}

#[derive(Deserialize)]
struct RawRow {
    interaction_id: String,
    question_id: String,
    category: Category,
    criterion: Criterion,
    rater_id: String,
    score: i64,
}

fn parse_rows<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Vec<RatedInteraction>, EvalError> {
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let row = row.map_err(|e| EvalError::Csv(format!("row {}: {e}", i + 2)))?;
        out.push(RatedInteraction {
            score: check_score(row.score)?,
            interaction_id: row.interaction_id,
            question_id: row.question_id,
            category: row.category,
            criterion: row.criterion,
            rater_id: row.rater_id,
        });
    }
    Ok(out)
}

pub fn write_ratings(path: &Path, ratings: &[RatedInteraction]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::Csv(e.to_string()))?;
    for r in ratings {
        w.serialize(r).map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| EvalError::Csv(e.to_string()))
}

/// Pools all rating rows per group. Rows are sorted by label; `Overall`
/// gives one row labelled "overall".
pub fn likert_summary(ratings: &[RatedInteraction], group_by: GroupBy) -> Result<Vec<SummaryRow>, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::EmptyGroup(format!("{group_by:?}").to_lowercase()));
    }
    let mut groups: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for r in ratings {
        let label = match group_by {
            GroupBy::Criterion => r.criterion.as_str(),
            GroupBy::Category => r.category.as_str(),
            GroupBy::Overall => "overall",
        };
        groups.entry(label).or_default().push(r.score);
    }
    groups
        .into_iter()
        .map(|(label, scores)| summarize_scores(label, &scores))
        .collect()
}

/// Per-category rows in reporting order, each tagged with its primary
/// source. Categories come from `question_categories`, not the rows.
pub fn category_summary(
    ratings: &[RatedInteraction],
    question_categories: &BTreeMap<String, Category>,
) -> Result<Vec<SummaryRow>, EvalError> {
    let mut groups: BTreeMap<Category, Vec<u8>> = BTreeMap::new();
    for r in ratings {
        let cat = question_categories
            .get(&r.question_id)
            .ok_or_else(|| EvalError::UnmappedQuestion(r.question_id.clone()))?;
        groups.entry(*cat).or_default().push(r.score);
    }
    let mut rows = Vec::new();
    for cat in Category::ALL {
        if let Some(scores) = groups.get(&cat) {
            let mut row = summarize_scores(cat.as_str(), scores)?;
            row.primary_source = Some(cat.primary_source().to_string());
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Question → category map taken from the rating rows themselves.
pub fn categories_from_rows(ratings: &[RatedInteraction]) -> BTreeMap<String, Category> {
    ratings.iter().map(|r| (r.question_id.clone(), r.category)).collect()
}

/// Pairs the two raters' scores by (interaction, criterion) and returns
/// them in key order.
pub fn paired_scores(ratings: &[RatedInteraction]) -> Result<(Vec<u8>, Vec<u8>), EvalError> {
    let raters: BTreeSet<&str> = ratings.iter().map(|r| r.rater_id.as_str()).collect();
    if raters.len() != 2 {
        return Err(EvalError::RaterCount(raters.into_iter().map(String::from).collect()));
    }
    let first = *raters.iter().next().expect("two raters");
    let mut pairs: BTreeMap<(&str, Criterion), (Option<u8>, Option<u8>)> = BTreeMap::new();
    for r in ratings {
        let slot = pairs.entry((r.interaction_id.as_str(), r.criterion)).or_default();
        if r.rater_id == first {
            slot.0 = Some(r.score);
        } else {
            slot.1 = Some(r.score);
        }
    }
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for ((interaction, criterion), slot) in pairs {
        match slot {
            (Some(x), Some(y)) => {
                a.push(x);
                b.push(y);
            }
            _ => {
                return Err(EvalError::Unpaired {
                    interaction: interaction.to_string(),
                    criterion: criterion.as_str().to_string(),
                })
            }
        }
    }
    Ok((a, b))
}

/// Aligned text table.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>13}  {:>5}  {:>4}\n", "label", "mean (sd)", "range", "n");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>13}  {:>5}  {:>4}",
            r.label,
            r.mean_sd(),
            format!("{}-{}", r.min, r.max),
            r.n
        ));
        if let Some(src) = &r.primary_source {
            out.push_str(&format!("  {src}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(q: &str, cat: Category, crit: Criterion, rater: &str, score: u8) -> RatedInteraction {
        RatedInteraction {
            interaction_id: format!("{q}-i"),
            question_id: q.into(),
            category: cat,
            criterion: crit,
            rater_id: rater.into(),
            score,
        }
    }

    #[test]
    fn csv_round_trip() {
        let raw = "interaction_id,question_id,category,criterion,rater_id,score\n\
                   i1,q1,prevention,citation_quality,r1,4\n\
                   i1,q1,prevention,citation_quality,r2, 5\n";
        let rows = parse_ratings(raw).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].score, 5);
        assert_eq!(rows[0].category, Category::Prevention);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_ratings(&p, &rows).unwrap();
        assert_eq!(read_ratings(&p).unwrap(), rows);
    }

    #[test]
    fn csv_rejects_bad_scores_and_labels() {
        let head = "interaction_id,question_id,category,criterion,rater_id,score\n";
        assert_eq!(
            parse_ratings(&format!("{head}i,q,prevention,citation_quality,r,6\n")),
            Err(EvalError::ScoreOutOfRange(6))
        );
        assert!(matches!(
            parse_ratings(&format!("{head}i,q,astrology,citation_quality,r,3\n")),
            Err(EvalError::Csv(_))
        ));
    }

    #[test]
    fn summary_by_criterion_sorted() {
        let rows = vec![
            row("q1", Category::Prevention, Criterion::FactualAccuracy, "a", 3),
            row("q1", Category::Prevention, Criterion::FactualAccuracy, "b", 5),
            row("q1", Category::Prevention, Criterion::CitationQuality, "a", 4),
        ];
        let s = likert_summary(&rows, GroupBy::Criterion).unwrap();
        assert_eq!(s[0].label, "citation_quality");
        assert_eq!(s[1].label, "factual_accuracy");
        assert_eq!(s[1].mean, 4.0);
        assert!((s[1].sd - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].mean_sd(), "4.00 (1.41)");
        assert!(likert_summary(&[], GroupBy::Overall).is_err());
    }

    #[test]
    fn category_rows_in_reporting_order() {
        let rows = vec![
            row("q2", Category::TreatmentRecovery, Criterion::FactualAccuracy, "a", 4),
            row("q1", Category::ClassificationsScheduling, Criterion::FactualAccuracy, "a", 4),
            row("q1", Category::ClassificationsScheduling, Criterion::FactualAccuracy, "b", 5),
        ];
        let cats = categories_from_rows(&rows);
        let s = category_summary(&rows, &cats).unwrap();
        assert_eq!(s[0].label, "classifications_scheduling");
        assert_eq!(s[0].mean, 4.5);
        assert_eq!(s[0].primary_source.as_deref(), Some("regulatory corpus"));
        assert_eq!(s[1].label, "treatment_recovery");
        let mut partial = cats.clone();
        partial.remove("q2");
        assert_eq!(category_summary(&rows, &partial), Err(EvalError::UnmappedQuestion("q2".into())));
    }

    #[test]
    fn pairing_requires_two_raters() {
        let rows = vec![
            row("q1", Category::Prevention, Criterion::FactualAccuracy, "a", 3),
            row("q1", Category::Prevention, Criterion::FactualAccuracy, "b", 5),
            row("q1", Category::Prevention, Criterion::CitationQuality, "a", 2),
            row("q1", Category::Prevention, Criterion::CitationQuality, "b", 4),
        ];
        let (a, b) = paired_scores(&rows).unwrap();
        assert_eq!((a, b), (vec![3, 2], vec![5, 4]));
        assert!(matches!(paired_scores(&rows[..3]), Err(EvalError::Unpaired { .. })));
        assert!(matches!(paired_scores(&rows[..1]), Err(EvalError::RaterCount(_))));
    }

    #[test]
    fn table_renders() {
        let rows = vec![summarize_scores("factual_accuracy", &[4, 5]).unwrap()];
        let t = render_table(&rows);
        assert!(t.contains("4.50 (0.71)"));
        assert!(t.contains("4-5"));
    }
}
