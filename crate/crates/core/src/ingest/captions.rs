//! WebVTT / SRT caption parsing and transcript track selection.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::normalize::decode_entities;
use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionFormat {
    Vtt,
    Srt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionKind {
    Manual,
    AutoGenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cue {
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionTrack {
    /// BCP-47 language tag, e.g. `en` or `en-US`.
    pub language: String,
    pub kind: CaptionKind,
    pub cues: Vec<Cue>,
}

impl CaptionTrack {
    pub fn from_raw(
        language: impl Into<String>,
        kind: CaptionKind,
        raw: &str,
        format: CaptionFormat,
    ) -> Result<Self, IngestError> {
        Ok(Self {
            language: language.into(),
            kind,
            cues: parse_cues(raw, format)?,
        })
    }

    /// Cue texts joined by newlines, with roll-up repeats collapsed.
    pub fn transcript(&self) -> String {
        join_cue_texts(self.cues.iter().map(|c| c.text.as_str()))
    }
}

static INLINE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<[^<>]*>").expect("inline tag pattern"));
static TIMESTAMP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(\d{1,3}):)?([0-5]\d):([0-5]\d)[.,](\d{3})$").expect("timestamp pattern")
});

fn parse_timestamp(raw: &str) -> Option<u64> {
    let caps = TIMESTAMP.captures(raw.trim())?;
    let hours: u64 = caps.get(1).map_or(Some(0), |m| m.as_str().parse().ok())?;
    let minutes: u64 = caps[2].parse().ok()?;
    let seconds: u64 = caps[3].parse().ok()?;
    let millis: u64 = caps[4].parse().ok()?;
    Some(((hours * 60 + minutes) * 60 + seconds) * 1000 + millis)
}

fn parse_timing(line: &str, line_no: usize) -> Result<(u64, u64), IngestError> {
    let malformed = |reason: &str| IngestError::MalformedCaption {
        line: line_no,
        reason: reason.to_string(),
    };
    let (start, rest) = line
        .split_once("-->")
        .ok_or_else(|| malformed("missing '-->'"))?;
    // Anything after the end timestamp is a WebVTT cue setting.
    let end = rest.split_whitespace().next().unwrap_or("");
    let start = parse_timestamp(start).ok_or_else(|| malformed("bad start timestamp"))?;
    let end = parse_timestamp(end).ok_or_else(|| malformed("bad end timestamp"))?;
    if end < start {
        return Err(malformed("cue ends before it starts"));
    }
    Ok((start, end))
}

fn clean_cue_text(lines: &[&str]) -> String {
    let joined = lines
        .iter()
        .map(|l| INLINE_TAG.replace_all(l, ""))
        .map(|l| decode_entities(&l))
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    joined
}

/// Splits caption text into blank-line separated blocks, keeping the 1-based
/// line number of each block's first line.
fn blocks(raw: &str) -> Vec<(usize, Vec<&str>)> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut start = 0;
    for (idx, line) in raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push((start, std::mem::take(&mut current)));
            }
        } else {
            if current.is_empty() {
                start = idx + 1;
            }
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push((start, current));
    }
    out
}

fn parse_vtt(raw: &str) -> Result<Vec<Cue>, IngestError> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let mut all = blocks(raw).into_iter();
    let (_, header) = all.next().ok_or(IngestError::MalformedCaption {
        line: 1,
        reason: "empty caption file".into(),
    })?;
    let first = header[0];
    if !(first == "WEBVTT" || first.starts_with("WEBVTT ") || first.starts_with("WEBVTT\t")) {
        return Err(IngestError::MalformedCaption {
            line: 1,
            reason: "missing WEBVTT header".into(),
        });
    }
    let mut cues = Vec::new();
    for (line_no, block) in all {
        let head = block[0];
        if head.starts_with("NOTE") || head == "STYLE" || head == "REGION" {
            continue;
        }
        // Optional cue identifier precedes the timing line.
        let (timing_idx, timing) = match block.iter().position(|l| l.contains("-->")) {
            Some(i) if i <= 1 => (i, block[i]),
            _ => {
                return Err(IngestError::MalformedCaption {
                    line: line_no,
                    reason: "cue without timing line".into(),
                })
            }
        };
        let (start_ms, end_ms) = parse_timing(timing, line_no + timing_idx)?;
        cues.push(Cue {
            start_ms,
            end_ms,
            text: clean_cue_text(&block[timing_idx + 1..]),
        });
    }
    Ok(cues)
}

fn parse_srt(raw: &str) -> Result<Vec<Cue>, IngestError> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let mut cues = Vec::new();
    for (line_no, block) in blocks(raw) {
        let (timing_idx, timing) = match block.iter().position(|l| l.contains("-->")) {
            Some(0) => (0, block[0]),
            Some(1) if block[0].trim().chars().all(|c| c.is_ascii_digit()) => (1, block[1]),
            _ => {
                return Err(IngestError::MalformedCaption {
                    line: line_no,
                    reason: "expected cue number followed by timing line".into(),
                })
            }
        };
        let (start_ms, end_ms) = parse_timing(timing, line_no + timing_idx)?;
        cues.push(Cue {
            start_ms,
            end_ms,
            text: clean_cue_text(&block[timing_idx + 1..]),
        });
    }
    Ok(cues)
}

/// Parses caption cues in file order. Cues are sorted by start time.
pub fn parse_cues(raw: &str, format: CaptionFormat) -> Result<Vec<Cue>, IngestError> {
    let mut cues = match format {
        CaptionFormat::Vtt => parse_vtt(raw)?,
        CaptionFormat::Srt => parse_srt(raw)?,
    };
    cues.sort_by_key(|c| c.start_ms);
    Ok(cues)
}

fn join_cue_texts<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    let mut out: Vec<&str> = Vec::new();
    for text in texts.filter(|t| !t.is_empty()) {
        if out.last() != Some(&text) {
            out.push(text);
        }
    }
    out.join("\n")
}

/// Plain transcript from a raw caption file.
pub fn parse_captions(raw: &str, format: CaptionFormat) -> Result<String, IngestError> {
    let cues = parse_cues(raw, format)?;
    Ok(join_cue_texts(cues.iter().map(|c| c.text.as_str())))
}

fn language_matches(tag: &str, preferred: &str) -> bool {
    let tag = tag.to_ascii_lowercase();
    let preferred = preferred.to_ascii_lowercase();
    let primary = |t: &str| t.split(['-', '_']).next().unwrap_or("").to_string();
    tag == preferred || primary(&tag) == primary(&preferred)
}

/// Picks the transcript to ingest: language match first, then manual over
/// auto-generated, then first occurrence.
pub fn select_transcript<'a>(
    tracks: &'a [CaptionTrack],
    preferred_language: &str,
) -> Result<&'a CaptionTrack, IngestError> {
    if tracks.is_empty() {
        return Err(IngestError::NoTracks);
    }
    let matching: Vec<&CaptionTrack> = tracks
        .iter()
        .filter(|t| language_matches(&t.language, preferred_language))
        .collect();
    let pool: Vec<&CaptionTrack> = if matching.is_empty() {
        tracks.iter().collect()
    } else {
        matching
    };
    Ok(pool
        .iter()
        .find(|t| t.kind == CaptionKind::Manual)
        .copied()
        .unwrap_or(pool[0]))
}
