//! Badge logs, room occupancy, and how detections line up with it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::classify::{format_time, parse_time, DetectionTimeline};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_BIN_S: u32 = 180;
/// Bins with at least this many adults count as multi-adult.
pub const DEFAULT_MULTI_ADULT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Parent,
    Professional,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Parent => "parent",
            Role::Professional => "professional",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parent" => Ok(Role::Parent),
            "professional" => Ok(Role::Professional),
            other => Err(invalid(format!("unknown role {other:?}"))),
        }
    }
}

/// One presence interval, `[enter_ms, exit_ms)` in UTC milliseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadgeEvent {
    pub badge_id: String,
    pub role: Role,
    pub enter_ms: i64,
    pub exit_ms: i64,
}

/// Merges overlapping or touching intervals of the same badge. Output is
/// sorted by badge, then enter time.
pub fn merge_events(mut events: Vec<BadgeEvent>) -> Vec<BadgeEvent> {
    events.sort_by(|a, b| {
        (&a.badge_id, a.enter_ms, a.exit_ms).cmp(&(&b.badge_id, b.enter_ms, b.exit_ms))
    });
    let mut out: Vec<BadgeEvent> = Vec::with_capacity(events.len());
    for e in events {
        match out.last_mut() {
            Some(last) if last.badge_id == e.badge_id && e.enter_ms <= last.exit_ms => {
                last.exit_ms = last.exit_ms.max(e.exit_ms);
            }
            _ => out.push(e),
        }
    }
    out
}

/// Reads `badge_id,role,enter_iso8601,exit_iso8601` rows.
pub fn parse_badges<R: std::io::Read>(r: R) -> Result<Vec<BadgeEvent>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    let expect = ["badge_id", "role", "enter_iso8601", "exit_iso8601"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", expect.join(",")),
        });
    }
    let mut events = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let perr = |msg: String| Error::Parse { line, msg };
        let role: Role = rec[1].parse().map_err(|e: Error| perr(e.to_string()))?;
        let enter_ms = parse_time(&rec[2]).map_err(|e| perr(e.to_string()))?;
        let exit_ms = parse_time(&rec[3]).map_err(|e| perr(e.to_string()))?;
        if exit_ms <= enter_ms {
            return Err(perr(format!("exit {} is not after enter {}", &rec[3], &rec[2])));
        }
        events.push(BadgeEvent {
            badge_id: rec[0].to_string(),
            role,
            enter_ms,
            exit_ms,
        });
    }
    Ok(merge_events(events))
}

pub fn load_badges(path: impl AsRef<Path>) -> Result<Vec<BadgeEvent>> {
    parse_badges(std::fs::File::open(path)?)
}

pub fn write_badges<W: std::io::Write>(events: &[BadgeEvent], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["badge_id", "role", "enter_iso8601", "exit_iso8601"])?;
    for e in events {
        out.write_record([
            e.badge_id.clone(),
            e.role.to_string(),
            format_time(e.enter_ms),
            format_time(e.exit_ms),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Number of adults present in each fixed-length bin.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTimeline {
    pub start_ms: i64,
    pub bin_ms: i64,
    pub counts: Vec<usize>,
}

impl OccupancyTimeline {
    pub fn end_ms(&self) -> i64 {
        self.start_ms + self.bin_ms * self.counts.len() as i64
    }

    pub fn bin_start(&self, i: usize) -> i64 {
        self.start_ms + self.bin_ms * i as i64
    }

    /// Bin holding instant `t`, if inside the span.
    pub fn bin_of(&self, t: i64) -> Option<usize> {
        if t < self.start_ms || t >= self.end_ms() {
            return None;
        }
        Some(((t - self.start_ms) / self.bin_ms) as usize)
    }
}

/// Counts, per bin of `[span.0, span.1)`, the distinct badges present for
/// any part of it. Events are clipped to the span; a final partial bin is
/// kept.
pub fn occupancy(events: &[BadgeEvent], bin_s: u32, span: (i64, i64)) -> Result<OccupancyTimeline> {
    if bin_s == 0 {
        return Err(invalid("bin length must be positive"));
    }
    if span.1 <= span.0 {
        return Err(invalid("empty occupancy span"));
    }
    let bin_ms = bin_s as i64 * 1000;
    let n = ((span.1 - span.0) as u64).div_ceil(bin_ms as u64) as usize;
    let mut present: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n];
    for e in events {
        let lo = e.enter_ms.max(span.0);
        let hi = e.exit_ms.min(span.1);
        if hi <= lo {
            continue;
        }
        let first = ((lo - span.0) / bin_ms) as usize;
        let last = ((hi - 1 - span.0) / bin_ms) as usize;
        for bin in &mut present[first..=last] {
            bin.insert(&e.badge_id);
        }
    }
    Ok(OccupancyTimeline {
        start_ms: span.0,
        bin_ms,
        counts: present.iter().map(BTreeSet::len).collect(),
    })
}

/// Mean detection value of each label in one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRow {
    pub start_ms: i64,
    pub adult_count: usize,
    /// `None` when no detection window starts in the bin.
    pub means: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAlignment {
    pub label: String,
    pub mean_multi: Option<f64>,
    pub mean_other: Option<f64>,
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub labels: Vec<String>,
    pub threshold: usize,
    pub bins: Vec<BinRow>,
    pub classes: Vec<ClassAlignment>,
    /// Bins with detections, split by adult count.
    pub n_multi: usize,
    pub n_other: usize,
}

impl AlignmentReport {
    pub fn multi_adult_empty(&self) -> bool {
        self.n_multi == 0
    }

    pub fn class(&self, label: &str) -> Option<&ClassAlignment> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// CSV: `bin_start_iso8601,adult_count`, then one column per label.
    pub fn write_bins_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["bin_start_iso8601".to_string(), "adult_count".to_string()];
        header.extend(self.labels.iter().cloned());
        out.write_record(&header)?;
        for b in &self.bins {
            let mut row = vec![format_time(b.start_ms), b.adult_count.to_string()];
            match &b.means {
                Some(m) => row.extend(m.iter().map(|v| format!("{v:.6}"))),
                None => row.extend(self.labels.iter().map(|_| String::new())),
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// CSV: one row per label with partition means, difference and bin counts.
    pub fn write_summary_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["nicu_label", "mean_multi_adult", "mean_otherwise", "difference", "n_multi_adult_bins", "n_other_bins"])?;
        for c in &self.classes {
            out.write_record([
                c.label.clone(),
                opt(c.mean_multi),
                opt(c.mean_other),
                opt(c.difference),
                self.n_multi.to_string(),
                self.n_other.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Running mean; a constant input gives back exactly that constant.
fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| {
        xs.iter()
            .enumerate()
            .fold(0.0, |m, (i, &x)| m + (x - m) / (i + 1) as f64)
    })
}

/// Averages detection windows into occupancy bins (by window start) and
/// compares bins with at least `threshold` adults against the rest. Only
/// bins that have both an adult count and detections take part.
pub fn align(det: &DetectionTimeline, occ: &OccupancyTimeline, threshold: usize) -> Result<AlignmentReport> {
    let k = det.labels.len();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for w in &det.windows {
        if let Some(bin) = occ.bin_of(w.start_ms) {
            let entry = sums.entry(bin).or_insert_with(|| (vec![0.0; k], 0));
            entry.1 += 1;
            let n = entry.1 as f64;
            entry.0.iter_mut().zip(&w.y).for_each(|(m, v)| *m += (v - *m) / n);
        }
    }
    if sums.is_empty() {
        return Err(invalid("detections and occupancy do not overlap in time"));
    }
    let bins: Vec<BinRow> = occ
        .counts
        .iter()
        .enumerate()
        .map(|(i, &adult_count)| BinRow {
            start_ms: occ.bin_start(i),
            adult_count,
            means: sums.get(&i).map(|(m, _)| m.clone()),
        })
        .collect();
    let mut multi: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut other: Vec<Vec<f64>> = vec![Vec::new(); k];
    let (mut n_multi, mut n_other) = (0, 0);
    for b in &bins {
        let Some(m) = &b.means else { continue };
        let (dst, n) = if b.adult_count >= threshold {
            (&mut multi, &mut n_multi)
        } else {
            (&mut other, &mut n_other)
        };
        *n += 1;
        for (d, v) in dst.iter_mut().zip(m) {
            d.push(*v);
        }
    }
    let classes = det
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let (a, b) = (mean(&multi[i]), mean(&other[i]));
            ClassAlignment {
                label: label.clone(),
                mean_multi: a,
                mean_other: b,
                difference: a.zip(b).map(|(a, b)| a - b),
            }
        })
        .collect();
    Ok(AlignmentReport {
        labels: det.labels.clone(),
        threshold,
        bins,
        classes,
        n_multi,
        n_other,
    })
}
