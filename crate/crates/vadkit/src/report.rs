//! Evaluation report serialization: a sectioned `key = value` text form that
//! parses back (for baselines), and a TAB-separated table.

use std::fmt::Write as _;
use std::path::Path;

use vadkit_core::metrics::{build_report, EvalReport, SetMetrics, AVERAGE_ROW, METRIC_KEYS};

use crate::error::{Error, Result};
use crate::fsutil;

fn section(out: &mut String, header: &str, row: &SetMetrics) {
    let _ = writeln!(out, "[{header}]");
    for key in METRIC_KEYS {
        if let Some(v) = row.get(key) {
            let _ = writeln!(out, "{key} = {v}");
        }
    }
    out.push('\n');
}

pub fn format_report(r: &EvalReport) -> String {
    let mut out = String::new();
    for s in &r.sets {
        section(&mut out, &format!("set {}", s.name), s);
    }
    section(&mut out, AVERAGE_ROW, &r.average);
    for rel in r.relative.iter().flatten() {
        section(&mut out, &format!("relative {}", rel.name), rel);
    }
    out
}

/// Reads the per-set rows back and recomputes the average row.
pub fn parse_report(text: &str, path: &Path) -> Result<EvalReport> {
    let mut sets: Vec<SetMetrics> = Vec::new();
    // Some(true): a set row; Some(false): AVG or relative, ignored.
    let mut current: Option<bool> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if let Some(h) = l.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if let Some(name) = h.strip_prefix("set ") {
                sets.push(SetMetrics::named(name.trim()));
                current = Some(true);
            } else if h == AVERAGE_ROW || h.starts_with("relative ") {
                current = Some(false);
            } else {
                return Err(Error::parse(path, line, format!("unknown section [{h}]")));
            }
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        match current {
            None => return Err(Error::parse(path, line, "key outside of any section")),
            Some(false) => continue,
            Some(true) => {}
        }
        let row = sets.last_mut().expect("set section open");
        let slot = row
            .value_mut(k)
            .ok_or_else(|| Error::parse(path, line, format!("unknown metric `{k}`")))?;
        *slot = Some(v.parse().map_err(|_| Error::parse(path, line, format!("`{v}` is not a number")))?);
    }
    Ok(build_report(sets, None)?)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    parse_report(&fsutil::read_to_string(path)?, path)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

fn signed(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:+.1}"))
}

/// One row per set plus AVG; relative-change columns follow when present.
pub fn format_tsv(r: &EvalReport) -> String {
    let mut out = String::from("set");
    for k in METRIC_KEYS {
        let _ = write!(out, "\t{k}");
    }
    if r.relative.is_some() {
        for k in METRIC_KEYS {
            let _ = write!(out, "\trel_{k}");
        }
    }
    out.push('\n');
    let rows: Vec<&SetMetrics> = r.sets.iter().chain(std::iter::once(&r.average)).collect();
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&row.name);
        for k in METRIC_KEYS {
            let _ = write!(out, "\t{}", cell(row.get(k)));
        }
        if let Some(rel) = &r.relative {
            for k in METRIC_KEYS {
                let _ = write!(out, "\t{}", signed(rel[i].get(k)));
            }
        }
        out.push('\n');
    }
    out
}
