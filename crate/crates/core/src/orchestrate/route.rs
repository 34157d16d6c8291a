//! Keyword-class routing between the regulatory corpus and the literature.

use std::collections::HashSet;

use super::{Route, SourceWeights};

pub const REGULATORY_TERMS: &[&str] = &[
    "schedule", "scheduling", "legal", "law", "federal", "policy", "compliance", "controlled", "classification",
    "enforcement",
];

pub const SCIENTIFIC_TERMS: &[&str] = &[
    "mechanism", "receptor", "efficacy", "clinical", "treatment", "neurobiological", "pharmacolog", "outcome", "dose",
    "study",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RouteConfig {
    pub regulatory: Vec<String>,
    pub scientific: Vec<String>,
    /// (w_local, w_lit) per route.
    pub regulatory_weights: (f64, f64),
    pub scientific_weights: (f64, f64),
    pub mixed_weights: (f64, f64),
}

impl Default for RouteConfig {
    fn default() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            regulatory: own(REGULATORY_TERMS),
            scientific: own(SCIENTIFIC_TERMS),
            regulatory_weights: (0.7, 0.3),
            scientific_weights: (0.3, 0.7),
            mixed_weights: (0.5, 0.5),
        }
    }
}

/// Prefix forms a stem matches. A trailing "y" also matches "ie" so that
/// "policy" covers "policies".
fn stem_forms(stem: &str) -> Vec<String> {
    let stem = stem.to_lowercase();
    let mut forms = vec![stem.clone()];
    if let Some(base) = stem.strip_suffix('y') {
        forms.push(format!("{base}ie"));
    }
    forms
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Number of distinct tokens matching at least one stem of the lexicon.
pub fn count_hits(text: &str, lexicon: &[String]) -> usize {
    let forms: Vec<String> = lexicon.iter().flat_map(|s| stem_forms(s)).collect();
    let mut seen = HashSet::new();
    tokens(text)
        .filter(|t| forms.iter().any(|f| t.starts_with(f.as_str())))
        .filter(|t| seen.insert(t.clone()))
        .count()
}

pub fn route_sources(question: &str, config: &RouteConfig) -> SourceWeights {
    let reg = count_hits(question, &config.regulatory);
    let sci = count_hits(question, &config.scientific);
    let (route, (w_local, w_lit)) = match reg.cmp(&sci) {
        std::cmp::Ordering::Greater => (Route::Regulatory, config.regulatory_weights),
        std::cmp::Ordering::Less => (Route::Scientific, config.scientific_weights),
        std::cmp::Ordering::Equal => (Route::Mixed, config.mixed_weights),
    };
    SourceWeights { w_local, w_lit, route }
}
