//! Line-oriented label files: segments (`utt<TAB>start_ms<TAB>end_ms`),
//! transcripts (`utt<TAB>text`) and manifests (`utt<TAB>wav_path`).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use vadkit_core::audio::{SegmentLabelSet, SpeechSegment, TranscriptSet};

use crate::error::{Error, Result};
use crate::fsutil;

/// Non-blank, non-comment lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_segments(text: &str, path: &Path) -> Result<Vec<SegmentLabelSet>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<SpeechSegment>> = HashMap::new();
    for (n, line) in lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(path, n, format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::parse(path, n, format!("{what} `{s}` is not a non-negative integer")))
        };
        let (start, end) = (num(f[1], "start_ms")?, num(f[2], "end_ms")?);
        if start >= end {
            return Err(Error::parse(path, n, format!("start {start} is not before end {end}")));
        }
        let id = f[0].to_string();
        if !by_id.contains_key(&id) {
            order.push(id.clone());
        }
        by_id.entry(id).or_default().push(SpeechSegment::new(start, end));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let segs = by_id.remove(&id).unwrap_or_default();
            SegmentLabelSet::new(id, segs)
        })
        .collect())
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<Vec<SegmentLabelSet>> {
    let path = path.as_ref();
    parse_segments(&fsutil::read_to_string(path)?, path)
}

pub fn format_segments(sets: &[SegmentLabelSet]) -> String {
    let mut out = String::new();
    for set in sets {
        for s in &set.segments {
            out.push_str(&format!("{}\t{}\t{}\n", set.utterance_id, s.start_ms, s.end_ms));
        }
    }
    out
}

pub fn write_segments(sets: &[SegmentLabelSet], path: impl AsRef<Path>) -> Result<()> {
    fsutil::write_atomic(path.as_ref(), format_segments(sets).as_bytes())
}

/// Segments of `id`, empty when the file has no line for it.
pub fn segments_for<'a>(sets: &'a [SegmentLabelSet], id: &str) -> &'a [SpeechSegment] {
    sets.iter()
        .find(|s| s.utterance_id == id)
        .map(|s| s.segments.as_slice())
        .unwrap_or(&[])
}

pub fn parse_transcripts(text: &str, path: &Path) -> Result<Vec<TranscriptSet>> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n, "expected `utt_id<TAB>text`"))?;
        if let Some(first) = seen.insert(id.to_string(), n) {
            return Err(Error::parse(path, n, format!("duplicate utterance `{id}` (first on line {first})")));
        }
        out.push(TranscriptSet {
            utterance_id: id.to_string(),
            text: body.to_string(),
        });
    }
    Ok(out)
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<TranscriptSet>> {
    let path = path.as_ref();
    parse_transcripts(&fsutil::read_to_string(path)?, path)
}

pub fn format_transcripts(sets: &[TranscriptSet]) -> String {
    sets.iter().map(|t| format!("{}\t{}\n", t.utterance_id, t.text)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub wav: PathBuf,
}

/// Relative wav paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (n, line) in lines(&fsutil::read_to_string(path)?) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 {
            return Err(Error::parse(path, n, "expected `utt_id<TAB>wav_path`"));
        }
        if let Some(first) = seen.insert(f[0].to_string(), n) {
            return Err(Error::parse(path, n, format!("duplicate utterance `{}` (first on line {first})", f[0])));
        }
        let wav = Path::new(f[1]);
        out.push(ManifestEntry {
            id: f[0].to_string(),
            wav: if wav.is_absolute() { wav.into() } else { base.join(wav) },
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[(String, String)]) -> String {
    entries.iter().map(|(id, p)| format!("{id}\t{p}\n")).collect()
}
