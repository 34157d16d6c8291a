//! Corpus acquisition: manifest loading, tiered extraction, caption
//! transcripts and text normalization.

mod captions;
mod extract;
mod normalize;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use captions::{
    parse_captions, parse_cues, select_transcript, CaptionFormat, CaptionKind, CaptionTrack, Cue,
};
pub use extract::{
    extract_document, replacement_ratio, CommandExtractor, Extracted, ExtractionReport, Extractor,
    ExtractorRegistry, OutputEncoding, PassThroughExtractor, Tier, OCR_FALLBACK_THRESHOLD,
};
pub use normalize::{decode_entities, normalize};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed caption file at line {line}: {reason}")]
    MalformedCaption { line: usize, reason: String },
    #[error("no caption tracks to choose from")]
    NoTracks,
    #[error("document {doc_id}: no extractor handles format {format:?}")]
    UnsupportedFormat { doc_id: String, format: DocFormat },
    #[error("document {doc_id}: every extraction tier failed: {}", reasons.join("; "))]
    ExtractionFailed { doc_id: String, reasons: Vec<String> },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    AgencyPublication,
    VideoTranscript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocFormat {
    Pdf,
    Html,
    Plain,
    Vtt,
    Srt,
}

/// Alternative caption track for a transcript document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackSource {
    pub path: PathBuf,
    pub language: String,
    pub kind: CaptionKind,
    pub format: CaptionFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub origin: Origin,
    pub title: String,
    pub raw_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_date: Option<NaiveDate>,
    pub format: DocFormat,
    #[serde(default)]
    pub complex_layout: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub document: SourceDocument,
    /// When present, the transcript is taken from the preferred track instead
    /// of `raw_path`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tracks: Vec<TrackSource>,
}

/// The corpus manifest: a JSON array of documents.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub preferred_language: String,
}

impl Manifest {
    /// Loads a manifest, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let raw = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&raw, base)
    }

    pub fn parse(raw: &str, base: &Path) -> Result<Self, IngestError> {
        let mut entries: Vec<ManifestEntry> =
            serde_json::from_str(raw).map_err(|e| IngestError::Manifest(e.to_string()))?;
        let mut seen = HashSet::new();
        for entry in &mut entries {
            let doc = &mut entry.document;
            if doc.doc_id.trim().is_empty() {
                return Err(IngestError::Manifest("empty doc_id".into()));
            }
            if !seen.insert(doc.doc_id.clone()) {
                return Err(IngestError::Manifest(format!("duplicate doc_id {}", doc.doc_id)));
            }
            if doc.raw_path.is_relative() {
                doc.raw_path = base.join(&doc.raw_path);
            }
            for track in &mut entry.tracks {
                if track.path.is_relative() {
                    track.path = base.join(&track.path);
                }
            }
        }
        Ok(Self {
            entries,
            preferred_language: "en".into(),
        })
    }
}

/// Result of ingesting one document.
#[derive(Debug, Clone)]
pub struct IngestedDocument {
    pub document: SourceDocument,
    pub text: String,
    pub report: ExtractionReport,
}

fn transcript_from_tracks(
    entry: &ManifestEntry,
    preferred_language: &str,
) -> Result<(String, ExtractionReport), IngestError> {
    let mut tracks = Vec::with_capacity(entry.tracks.len());
    for source in &entry.tracks {
        let raw = fs::read(&source.path).map_err(|e| IngestError::Io {
            path: source.path.clone(),
            source: e,
        })?;
        let raw = String::from_utf8_lossy(&raw);
        tracks.push(CaptionTrack::from_raw(
            source.language.clone(),
            source.kind,
            &raw,
            source.format,
        )?);
    }
    let chosen = select_transcript(&tracks, preferred_language)?;
    let text = chosen.transcript();
    let report = ExtractionReport {
        doc_id: entry.document.doc_id.clone(),
        tier_used: Tier::PrimaryText,
        replacement_ratio: replacement_ratio(&text),
        char_count: text.chars().count(),
        warnings: vec![format!(
            "selected {:?} track in '{}' out of {}",
            chosen.kind,
            chosen.language,
            tracks.len()
        )],
    };
    Ok((text, report))
}

/// Extracts and normalizes one manifest entry.
pub fn ingest_entry(
    entry: &ManifestEntry,
    registry: &ExtractorRegistry,
    preferred_language: &str,
) -> Result<IngestedDocument, IngestError> {
    let (raw, report) = if entry.tracks.is_empty() {
        extract_document(&entry.document, registry)?
    } else {
        transcript_from_tracks(entry, preferred_language)?
    };
    Ok(IngestedDocument {
        document: entry.document.clone(),
        text: normalize(&raw),
        report,
    })
}

/// File name used for a document's normalized text.
pub fn text_file_name(doc_id: &str) -> String {
    let safe: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.txt")
}

/// Ingests a whole manifest into `out_dir`: one normalized `.txt` per
/// document plus `report.json`. Documents are processed in parallel.
pub fn ingest_corpus(
    manifest: &Manifest,
    registry: &ExtractorRegistry,
    out_dir: &Path,
) -> Result<Vec<ExtractionReport>, IngestError> {
    fs::create_dir_all(out_dir).map_err(|source| IngestError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let results: Vec<Result<IngestedDocument, IngestError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = manifest
            .entries
            .iter()
            .map(|entry| scope.spawn(|| ingest_entry(entry, registry, &manifest.preferred_language)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("extraction thread panicked"))
            .collect()
    });

    let mut reports = Vec::with_capacity(results.len());
    for result in results {
        let doc = result?;
        let path = out_dir.join(text_file_name(&doc.document.doc_id));
        fs::write(&path, &doc.text).map_err(|source| IngestError::Io { path, source })?;
        reports.push(doc.report);
    }
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    fs::write(&report_path, json).map_err(|source| IngestError::Io {
        path: report_path,
        source,
    })?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_rejects_duplicate_ids() {
        let raw = r#"[
            {"doc_id":"a","origin":"agency_publication","title":"A","raw_path":"a.txt","format":"plain"},
            {"doc_id":"a","origin":"video_transcript","title":"B","raw_path":"b.vtt","format":"vtt"}
        ]"#;
        assert!(matches!(
            Manifest::parse(raw, Path::new("/tmp")),
            Err(IngestError::Manifest(_))
        ));
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let raw = r#"[{"doc_id":"a","origin":"agency_publication","title":"A","raw_path":"docs/a.txt",
            "published_date":"2023-04-01","format":"html","complex_layout":true}]"#;
        let m = Manifest::parse(raw, Path::new("/corpus")).unwrap();
        let doc = &m.entries[0].document;
        assert_eq!(doc.raw_path, PathBuf::from("/corpus/docs/a.txt"));
        assert!(doc.complex_layout);
        assert_eq!(doc.published_date, NaiveDate::from_ymd_opt(2023, 4, 1));
    }

    #[test]
    fn unknown_origin_rejected() {
        let raw = r#"[{"doc_id":"a","origin":"blog","title":"A","raw_path":"a","format":"plain"}]"#;
        assert!(Manifest::parse(raw, Path::new(".")).is_err());
    }

    #[test]
    fn corpus_ingest_writes_texts_and_report() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.html"), "<h1>Title</h1><p>Body &amp; more</p>").unwrap();
        fs::write(dir.path().join("manual.vtt"), "WEBVTT\n\n00:01.000 --> 00:02.000\nManual words\n").unwrap();
        fs::write(dir.path().join("auto.vtt"), "WEBVTT\n\n00:01.000 --> 00:02.000\nauto words\n").unwrap();
        let raw = r#"[
            {"doc_id":"a","origin":"agency_publication","title":"A","raw_path":"a.html","format":"html"},
            {"doc_id":"v/1","origin":"video_transcript","title":"V","raw_path":"auto.vtt","format":"vtt",
             "tracks":[{"path":"auto.vtt","language":"en","kind":"auto_generated","format":"vtt"},
                       {"path":"manual.vtt","language":"en","kind":"manual","format":"vtt"}]}
        ]"#;
        let manifest_path = dir.path().join("manifest.json");
        fs::write(&manifest_path, raw).unwrap();
        let manifest = Manifest::load(&manifest_path).unwrap();
        let out = dir.path().join("out");
        let reports = ingest_corpus(&manifest, &ExtractorRegistry::with_builtin(), &out).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(fs::read_to_string(out.join("a.txt")).unwrap(), "Title\n\nBody & more");
        assert_eq!(fs::read_to_string(out.join("v_1.txt")).unwrap(), "Manual words");
        let parsed: Vec<ExtractionReport> =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(parsed, reports);
    }
}
