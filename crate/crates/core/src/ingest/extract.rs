//! Tiered text extraction: primary text layer, OCR fallback when the primary
//! output is dominated by decode failures, and a structure-preserving parser
//! for documents flagged as having complex layout.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::captions::{parse_captions, CaptionFormat};
use super::{DocFormat, IngestError, SourceDocument};

/// Fraction of U+FFFD above which the OCR tier takes over. Strictly greater.
pub const OCR_FALLBACK_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    PrimaryText,
    OcrFallback,
    StructurePreserving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub doc_id: String,
    pub tier_used: Tier,
    /// Replacement ratio of the primary tier's output (the quantity that
    /// drives the fallback decision). When the primary tier was skipped, the
    /// ratio of the text actually returned.
    pub replacement_ratio: f64,
    pub char_count: usize,
    pub warnings: Vec<String>,
}

/// Output of one extractor run.
#[derive(Debug, Clone, Default)]
pub struct Extracted {
    pub text: String,
    /// Set by extractors that notice tables or multiple columns.
    pub complex_layout_hint: bool,
}

pub trait Extractor: Send + Sync {
    fn name(&self) -> &str;
    fn tier(&self) -> Tier;
    fn supports(&self, format: DocFormat) -> bool;
    fn extract(&self, path: &Path, format: DocFormat) -> Result<Extracted, String>;
}

/// Share of U+FFFD replacement characters among all characters.
pub fn replacement_ratio(text: &str) -> f64 {
    let mut total = 0usize;
    let mut bad = 0usize;
    for c in text.chars() {
        total += 1;
        if c == char::REPLACEMENT_CHARACTER {
            bad += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// Reads plain, HTML and caption files directly. Invalid UTF-8 sequences turn
/// into U+FFFD, which is what the fallback trigger measures.
#[derive(Debug, Default, Clone)]
pub struct PassThroughExtractor;

impl Extractor for PassThroughExtractor {
    fn name(&self) -> &str {
        "pass-through"
    }

    fn tier(&self) -> Tier {
        Tier::PrimaryText
    }

    fn supports(&self, format: DocFormat) -> bool {
        !matches!(format, DocFormat::Pdf)
    }

    fn extract(&self, path: &Path, format: DocFormat) -> Result<Extracted, String> {
        let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let text = match format {
            DocFormat::Vtt => parse_captions(&text, CaptionFormat::Vtt).map_err(|e| e.to_string())?,
            DocFormat::Srt => parse_captions(&text, CaptionFormat::Srt).map_err(|e| e.to_string())?,
            _ => text,
        };
        Ok(Extracted {
            text,
            complex_layout_hint: false,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputEncoding {
    #[default]
    Utf8,
    Latin1,
}

/// Extractor backed by an external program. `{input}` in the argument
/// template is replaced by the document path; the program writes text to
/// stdout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandExtractor {
    pub name: String,
    pub tier: Tier,
    pub program: String,
    pub args: Vec<String>,
    pub formats: Vec<DocFormat>,
    #[serde(default)]
    pub encoding: OutputEncoding,
    /// Substring in stdout that signals a table or multi-column layout.
    #[serde(default)]
    pub layout_marker: Option<String>,
}

impl Extractor for CommandExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn tier(&self) -> Tier {
        self.tier
    }

    fn supports(&self, format: DocFormat) -> bool {
        self.formats.contains(&format)
    }

    fn extract(&self, path: &Path, _format: DocFormat) -> Result<Extracted, String> {
        let input = path.to_string_lossy();
        let args: Vec<String> = self.args.iter().map(|a| a.replace("{input}", &input)).collect();
        let output = Command::new(&self.program)
            .args(&args)
            .output()
            .map_err(|e| format!("{}: {e}", self.program))?;
        if !output.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
        let text = match self.encoding {
            OutputEncoding::Utf8 => String::from_utf8_lossy(&output.stdout).into_owned(),
            OutputEncoding::Latin1 => output.stdout.iter().map(|&b| b as char).collect(),
        };
        let complex_layout_hint = self
            .layout_marker
            .as_deref()
            .is_some_and(|m| text.contains(m));
        Ok(Extracted {
            text,
            complex_layout_hint,
        })
    }
}

/// Extractors by tier. Read-only once built.
#[derive(Default)]
pub struct ExtractorRegistry {
    extractors: Vec<Box<dyn Extractor>>,
}

impl ExtractorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding only the built-in pass-through extractor.
    pub fn with_builtin() -> Self {
        let mut registry = Self::new();
        registry.register(Box::new(PassThroughExtractor));
        registry
    }

    pub fn register(&mut self, extractor: Box<dyn Extractor>) -> &mut Self {
        self.extractors.push(extractor);
        self
    }

    fn find(&self, tier: Tier, format: DocFormat) -> Option<&dyn Extractor> {
        self.extractors
            .iter()
            .rev()
            .find(|e| e.tier() == tier && e.supports(format))
            .map(|e| e.as_ref())
    }
}

fn report(doc: &SourceDocument, tier: Tier, ratio: f64, text: &str, warnings: Vec<String>) -> ExtractionReport {
    ExtractionReport {
        doc_id: doc.doc_id.clone(),
        tier_used: tier,
        replacement_ratio: ratio,
        char_count: text.chars().count(),
        warnings,
    }
}

/// Runs the tier ladder for one document and returns the raw extracted text.
pub fn extract_document(
    doc: &SourceDocument,
    registry: &ExtractorRegistry,
) -> Result<(String, ExtractionReport), IngestError> {
    let primary = registry.find(Tier::PrimaryText, doc.format);
    let ocr = registry.find(Tier::OcrFallback, doc.format);
    let structural = registry.find(Tier::StructurePreserving, doc.format);
    if primary.is_none() && ocr.is_none() && structural.is_none() {
        return Err(IngestError::UnsupportedFormat {
            doc_id: doc.doc_id.clone(),
            format: doc.format,
        });
    }

    let mut warnings = Vec::new();
    let mut failures = Vec::new();

    if doc.complex_layout {
        match structural {
            Some(ex) => match ex.extract(&doc.raw_path, doc.format) {
                Ok(out) => {
                    let ratio = replacement_ratio(&out.text);
                    let r = report(doc, Tier::StructurePreserving, ratio, &out.text, warnings);
                    return Ok((out.text, r));
                }
                Err(e) => {
                    warnings.push(format!("structure-preserving tier failed ({}): {e}", ex.name()));
                    failures.push(e);
                }
            },
            None => warnings.push("complex_layout set but no structure-preserving extractor registered".into()),
        }
    }

    let Some(primary) = primary else {
        return Err(IngestError::ExtractionFailed {
            doc_id: doc.doc_id.clone(),
            reasons: if failures.is_empty() {
                vec!["no primary text extractor for this format".into()]
            } else {
                failures
            },
        });
    };
    let out = match primary.extract(&doc.raw_path, doc.format) {
        Ok(out) => out,
        Err(e) => {
            failures.push(format!("{}: {e}", primary.name()));
            return Err(IngestError::ExtractionFailed {
                doc_id: doc.doc_id.clone(),
                reasons: failures,
            });
        }
    };
    let ratio = replacement_ratio(&out.text);

    if out.complex_layout_hint && !doc.complex_layout {
        if let Some(ex) = structural {
            match ex.extract(&doc.raw_path, doc.format) {
                Ok(structured) => {
                    warnings.push(format!("{} reported a complex layout", primary.name()));
                    let r = report(doc, Tier::StructurePreserving, ratio, &structured.text, warnings);
                    return Ok((structured.text, r));
                }
                Err(e) => warnings.push(format!("structure-preserving tier failed ({}): {e}", ex.name())),
            }
        }
    }

    if ratio > OCR_FALLBACK_THRESHOLD {
        match ocr {
            Some(ex) => match ex.extract(&doc.raw_path, doc.format) {
                Ok(ocr_out) => {
                    warnings.push(format!(
                        "primary replacement ratio {ratio:.3} exceeded {OCR_FALLBACK_THRESHOLD}; OCR output ratio {:.3}",
                        replacement_ratio(&ocr_out.text)
                    ));
                    let r = report(doc, Tier::OcrFallback, ratio, &ocr_out.text, warnings);
                    return Ok((ocr_out.text, r));
                }
                Err(e) => warnings.push(format!("OCR tier failed ({}): {e}; keeping primary text", ex.name())),
            },
            None => warnings.push(format!(
                "replacement ratio {ratio:.3} exceeds {OCR_FALLBACK_THRESHOLD} but no OCR extractor is registered"
            )),
        }
    }

    let r = report(doc, Tier::PrimaryText, ratio, &out.text, warnings);
    Ok((out.text, r))
}
