//! Scoring: frame alignment on a 10 ms grid, DCF, noise rejection rate,
//! character error rate, relative changes and table-style reports.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::audio::SpeechSegment;
use crate::error::{Error, Result};

pub const SCORING_GRID_MS: u64 = 10;
pub const DCF_MISS_WEIGHT: f64 = 0.75;
pub const DCF_FA_WEIGHT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameAlignment {
    pub reference: Vec<bool>,
    pub hypothesis: Vec<bool>,
    pub n_miss: usize,
    pub n_fa: usize,
    pub n_speech_ref: usize,
    pub n_nonspeech_ref: usize,
}

fn check_bounds(segs: &[SpeechSegment], duration_ms: u64) -> Result<()> {
    match segs.iter().find(|s| s.end_ms > duration_ms || s.start_ms > s.end_ms) {
        Some(s) => Err(Error::Bounds {
            start_ms: s.start_ms,
            end_ms: s.end_ms,
            duration_ms,
        }),
        None => Ok(()),
    }
}

/// Frame `k` covers `[k·g, (k+1)·g)` and is speech iff its center lies in a
/// segment.
pub fn frame_mask(segs: &[SpeechSegment], duration_ms: u64, grid_ms: u64) -> Result<Vec<bool>> {
    check_bounds(segs, duration_ms)?;
    let n = (duration_ms / grid_ms) as usize;
    let mut mask = vec![false; n];
    for s in segs {
        // doubled centers (2k+1)·g inside [2·start, 2·end)
        let first = (s.start_ms / grid_ms).saturating_sub(1) as usize;
        for (k, m) in mask.iter_mut().enumerate().skip(first) {
            let c2 = (2 * k as u64 + 1) * grid_ms;
            if c2 >= 2 * s.end_ms {
                break;
            }
            if c2 >= 2 * s.start_ms {
                *m = true;
            }
        }
    }
    Ok(mask)
}

pub fn align_frames(reference: &[SpeechSegment], hypothesis: &[SpeechSegment], duration_ms: u64, grid_ms: u64) -> Result<FrameAlignment> {
    if grid_ms == 0 {
        return Err(Error::Config("scoring grid must be positive".into()));
    }
    let r = frame_mask(reference, duration_ms, grid_ms)?;
    let h = frame_mask(hypothesis, duration_ms, grid_ms)?;
    let mut a = FrameAlignment::default();
    for (&rk, &hk) in r.iter().zip(&h) {
        match (rk, hk) {
            (true, false) => a.n_miss += 1,
            (false, true) => a.n_fa += 1,
            _ => {}
        }
        if rk {
            a.n_speech_ref += 1;
        } else {
            a.n_nonspeech_ref += 1;
        }
    }
    a.reference = r;
    a.hypothesis = h;
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfBreakdown {
    pub dcf_pct: f64,
    pub p_miss_pct: f64,
    pub p_fa_pct: f64,
}

/// Pooled detection cost over a test set.
pub fn dcf(alignments: &[FrameAlignment]) -> Result<DcfBreakdown> {
    let sum = |f: fn(&FrameAlignment) -> usize| alignments.iter().map(f).sum::<usize>();
    let (miss, fa) = (sum(|a| a.n_miss), sum(|a| a.n_fa));
    let (speech, nonspeech) = (sum(|a| a.n_speech_ref), sum(|a| a.n_nonspeech_ref));
    if speech == 0 || nonspeech == 0 {
        return Err(Error::UndefinedMetric(alloc::format!(
            "DCF needs both classes in the reference (speech {speech}, non-speech {nonspeech} frames)"
        )));
    }
    let p_miss = miss as f64 / speech as f64;
    let p_fa = fa as f64 / nonspeech as f64;
    Ok(DcfBreakdown {
        dcf_pct: 100.0 * (DCF_MISS_WEIGHT * p_miss + DCF_FA_WEIGHT * p_fa),
        p_miss_pct: 100.0 * p_miss,
        p_fa_pct: 100.0 * p_fa,
    })
}

/// Share of pure-noise files with no emitted segment.
pub fn nrr<S: AsRef<[SpeechSegment]>>(results: &[S]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::UndefinedMetric("NRR over zero files".into()));
    }
    let rejected = results.iter().filter(|r| r.as_ref().is_empty()).count();
    Ok(100.0 * rejected as f64 / results.len() as f64)
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn chars(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Edit count and reference length after whitespace removal.
pub fn cer_counts(reference: &str, hypothesis: &str) -> Result<(usize, usize)> {
    let r = chars(reference);
    if r.is_empty() {
        return Err(Error::UndefinedMetric("CER with an empty reference".into()));
    }
    Ok((levenshtein(&r, &chars(hypothesis)), r.len()))
}

pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let (e, n) = cer_counts(reference, hypothesis)?;
    Ok(100.0 * e as f64 / n as f64)
}

/// Corpus CER: total edits over total reference characters.
pub fn corpus_cer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<f64> {
    let (mut edits, mut len) = (0usize, 0usize);
    for (r, h) in pairs {
        let (e, n) = cer_counts(r, h)?;
        edits += e;
        len += n;
    }
    if len == 0 {
        return Err(Error::UndefinedMetric("CER over zero utterances".into()));
    }
    Ok(100.0 * edits as f64 / len as f64)
}

/// `100·(system − baseline)/baseline`, rounded half away from zero to one
/// decimal.
pub fn relative_change(baseline: f64, system: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() || !system.is_finite() {
        return Err(Error::UndefinedMetric(alloc::format!(
            "relative change from baseline {baseline}"
        )));
    }
    let raw = 100.0 * (system - baseline) / baseline;
    Ok(libm::round(raw * 10.0) / 10.0)
}

/// Unweighted mean of table rows.
pub fn table_average(rows: &[f64]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::UndefinedMetric("average of zero rows".into()));
    }
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

/// Metrics of one test set; absent metrics were not scored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SetMetrics {
    pub name: String,
    pub dcf_pct: Option<f64>,
    pub p_miss_pct: Option<f64>,
    pub p_fa_pct: Option<f64>,
    pub nrr_pct: Option<f64>,
    pub cer_pct: Option<f64>,
}

pub const METRIC_KEYS: [&str; 5] = ["dcf_pct", "p_miss_pct", "p_fa_pct", "nrr_pct", "cer_pct"];

impl SetMetrics {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn with_dcf(mut self, d: DcfBreakdown) -> Self {
        self.dcf_pct = Some(d.dcf_pct);
        self.p_miss_pct = Some(d.p_miss_pct);
        self.p_fa_pct = Some(d.p_fa_pct);
        self
    }

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.dcf_pct, self.p_miss_pct, self.p_fa_pct, self.nrr_pct, self.cer_pct]
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let i = METRIC_KEYS.iter().position(|k| *k == key)?;
        self.values()[i]
    }

    pub fn value_mut(&mut self, key: &str) -> Option<&mut Option<f64>> {
        Some(match key {
            "dcf_pct" => &mut self.dcf_pct,
            "p_miss_pct" => &mut self.p_miss_pct,
            "p_fa_pct" => &mut self.p_fa_pct,
            "nrr_pct" => &mut self.nrr_pct,
            "cer_pct" => &mut self.cer_pct,
            _ => return None,
        })
    }
}

pub const AVERAGE_ROW: &str = "AVG";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sets: Vec<SetMetrics>,
    pub average: SetMetrics,
    /// Relative change of each metric versus a baseline, keyed like `sets`
    /// followed by the average row.
    pub relative: Option<Vec<SetMetrics>>,
}

/// Per-set rows plus their unweighted average; a metric missing from some
/// rows is averaged over the rows that have it.
pub fn build_report(sets: Vec<SetMetrics>, baseline: Option<&EvalReport>) -> Result<EvalReport> {
    if sets.is_empty() {
        return Err(Error::UndefinedMetric("report with zero test sets".into()));
    }
    for s in &sets {
        if let Some(v) = s.values().into_iter().flatten().find(|v| !(0.0..=100.0).contains(v)) {
            return Err(Error::Contract(alloc::format!("set `{}` has percentage {v} outside [0, 100]", s.name)));
        }
    }
    let mut average = SetMetrics::named(AVERAGE_ROW);
    for key in METRIC_KEYS {
        let rows: Vec<f64> = sets
            .iter()
            .filter_map(|s| s.get(key))
            .collect();
        if !rows.is_empty() {
            *average.value_mut(key).expect("known key") = Some(table_average(&rows)?);
        }
    }
    let relative = baseline.map(|b| {
        sets.iter()
            .chain(core::iter::once(&average))
            .map(|row| {
                let base = b.row(&row.name);
                let mut rel = SetMetrics::named(row.name.clone());
                for key in METRIC_KEYS {
                    let sys = row.get(key);
                    let bas = base.and_then(|r| r.get(key));
                    if let (Some(s), Some(bv)) = (sys, bas) {
                        *rel.value_mut(key).expect("known key") = relative_change(bv, s).ok();
                    }
                }
                rel
            })
            .collect()
    });
    Ok(EvalReport { sets, average, relative })
}

impl EvalReport {
    /// A test-set row or the average row by name.
    pub fn row(&self, name: &str) -> Option<&SetMetrics> {
        if name == AVERAGE_ROW {
            return Some(&self.average);
        }
        self.sets.iter().find(|s| s.name == name)
    }
}
