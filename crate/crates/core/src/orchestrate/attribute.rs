use serde::{Deserialize, Serialize};

use super::{OrchestrateError, RetrievedEvidence, SourceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Marker the evidence had in the prompt.
    pub marker: usize,
    /// 1-based position within its source group.
    pub rank: usize,
    pub source_kind: SourceKind,
    pub reference: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub cited: bool,
}

/// Similarity as a percentage with one decimal, e.g. 0.585 -> "58.5".
pub fn percent_match(score: f64) -> String {
    format!("{:.1}", (score * 1000.0).round() / 10.0)
}

pub fn author_line(authors: &[String]) -> String {
    match authors {
        [] => "Anonymous".to_string(),
        [one] => one.clone(),
        [a, b, ..] => format!("{a}, {b} et al."),
    }
}

fn label(rank: usize, e: &RetrievedEvidence) -> String {
    match (&e.source_kind, &e.article) {
        (SourceKind::Literature, Some(a)) => {
            format!("#{rank} - {} ({}) | {}", author_line(&a.authors), a.year, a.journal)
        }
        (SourceKind::Literature, None) => format!("#{rank} - {}", e.display_title),
        (SourceKind::LocalRegulatory, _) => {
            format!("#{rank} - {} | {}% match", e.display_title, percent_match(e.score))
        }
    }
}

/// Attribution records for every evidence item, local group first. Each
/// record notes whether the answer cited it.
pub fn attribute_sources(
    evidence: &[RetrievedEvidence],
    cited_markers: &[usize],
) -> Result<Vec<Attribution>, OrchestrateError> {
    if let Some(&bad) = cited_markers.iter().find(|&&m| m == 0 || m > evidence.len()) {
        return Err(OrchestrateError::MarkerOutOfRange {
            marker: bad,
            evidence: evidence.len(),
        });
    }
    let mut out = Vec::with_capacity(evidence.len());
    for kind in [SourceKind::LocalRegulatory, SourceKind::Literature] {
        let group = evidence.iter().enumerate().filter(|(_, e)| e.source_kind == kind);
        for (rank, (i, e)) in group.enumerate() {
            let marker = i + 1;
            out.push(Attribution {
                marker,
                rank: rank + 1,
                source_kind: kind,
                reference: e.reference.clone(),
                label: label(rank + 1, e),
                url: e.article.as_ref().map(|a| a.url.clone()),
                cited: cited_markers.contains(&marker),
            });
        }
    }
    Ok(out)
}
