//! Channel ingestion, table alignment, cleaning, and normalization.
//!
//! Raw recordings arrive as per-channel (timestamp, watts) series or as a
//! merged CSV with one column per channel. They are resampled onto a common
//! grid, split around long gaps and stuck sensor runs, backfilled, and
//! normalized before windowing.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// One raw channel recording. `"aggregate"` is the reserved id for the
/// household mains signal.
#[derive(Debug, Clone)]
pub struct RawChannel {
    pub id: String,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl RawChannel {
    pub fn new(id: impl Into<String>, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "channel timestamps vs values",
                left: timestamps.len(),
                right: values.len(),
            });
        }
        if !timestamps.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "channel timestamps must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("channel values must be finite".into()));
        }
        Ok(Self {
            id: id.into(),
            timestamps,
            values,
        })
    }
}

/// A column that may contain missing bins.
#[derive(Debug, Clone)]
pub struct MaskedColumn {
    pub values: Vec<f64>,
    /// `present[i]` is false where bin `i` had no observation.
    pub present: Vec<bool>,
}

impl MaskedColumn {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Aligned table that still carries missing markers; produced by
/// [`merge_channels`] and consumed by [`segment_table`].
#[derive(Debug, Clone)]
pub struct MaskedTable {
    pub period_s: u64,
    pub start_ts: i64,
    pub aggregate: MaskedColumn,
    pub appliances: IndexMap<String, MaskedColumn>,
}

impl MaskedTable {
    pub fn len(&self) -> usize {
        self.aggregate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aggregate.is_empty()
    }

    fn columns(&self) -> impl Iterator<Item = &MaskedColumn> {
        std::iter::once(&self.aggregate).chain(self.appliances.values())
    }
}

/// Fully cleaned, gap-free table: one aggregate column plus one column per
/// target appliance, all on the same sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTable {
    pub period_s: u64,
    pub start_ts: i64,
    /// Power columns were divided by this constant; 1.0 means raw watts.
    pub norm_constant: f64,
    pub aggregate: Vec<f64>,
    pub appliances: IndexMap<String, Vec<f64>>,
}

impl AlignedTable {
    pub fn len(&self) -> usize {
        self.aggregate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aggregate.is_empty()
    }

    pub fn duration_s(&self) -> u64 {
        self.len() as u64 * self.period_s
    }

    pub fn appliance(&self, id: &str) -> Result<&[f64]> {
        self.appliances
            .get(id)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownAppliance(id.to_string()))
    }

    pub fn timestamp(&self, row: usize) -> i64 {
        self.start_ts + row as i64 * self.period_s as i64
    }
}

/// Cleaning parameters. Runs of `gap_limit`+ consecutive missing bins or
/// `stuck_limit`+ consecutive identical readings split the table; segments
/// shorter than `min_duration_s` are discarded.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub gap_limit: usize,
    pub stuck_limit: usize,
    pub min_duration_s: u64,
    pub norm_constant: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            gap_limit: 20,
            stuck_limit: 1200,
            min_duration_s: 3600,
            norm_constant: 612.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("gap_limit", self.gap_limit as f64),
            ("stuck_limit", self.stuck_limit as f64),
            ("min_duration_s", self.min_duration_s as f64),
            ("norm_constant", self.norm_constant),
        ] {
            if v <= 0.0 {
                return Err(Error::NonPositive { what, value: v });
            }
        }
        Ok(())
    }
}

/// Resample all channels onto a common `period_s` grid covering the
/// intersection of their time ranges. Each bin takes the last observation
/// falling inside it; empty bins are marked missing.
pub fn merge_channels(channels: &[RawChannel], period_s: u64) -> Result<MaskedTable> {
    if period_s == 0 {
        return Err(Error::NonPositive {
            what: "period_s",
            value: 0.0,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for ch in channels {
        if !seen.insert(ch.id.clone()) {
            return Err(Error::DuplicateChannel(ch.id.clone()));
        }
        if ch.timestamps.is_empty() {
            return Err(Error::MalformedInput {
                path: ch.id.clone(),
                detail: "channel has no samples".into(),
            });
        }
    }
    if !seen.contains("aggregate") {
        return Err(Error::NoAggregateChannel);
    }

    let start = channels.iter().map(|c| c.timestamps[0]).max().unwrap();
    let end = channels
        .iter()
        .map(|c| *c.timestamps.last().unwrap())
        .min()
        .unwrap();
    if start > end {
        return Err(Error::EmptyIntersection);
    }
    let n_bins = ((end - start) as u64 / period_s) as usize + 1;

    let resample = |ch: &RawChannel| -> MaskedColumn {
        let mut values = vec![0.0; n_bins];
        let mut present = vec![false; n_bins];
        let mut idx = 0usize;
        for k in 0..n_bins {
            let bin_ts = start + (k as u64 * period_s) as i64;
            let lo = bin_ts - period_s as i64; // bin covers (lo, bin_ts]
            while idx < ch.timestamps.len() && ch.timestamps[idx] <= bin_ts {
                if ch.timestamps[idx] > lo {
                    values[k] = ch.values[idx];
                    present[k] = true;
                }
                idx += 1;
            }
        }
        MaskedColumn { values, present }
    };

    let mut aggregate = None;
    let mut appliances = IndexMap::new();
    for ch in channels {
        let col = resample(ch);
        if ch.id == "aggregate" {
            aggregate = Some(col);
        } else {
            appliances.insert(ch.id.clone(), col);
        }
    }

    Ok(MaskedTable {
        period_s,
        start_ts: start,
        aggregate: aggregate.expect("aggregate checked above"),
        appliances,
    })
}

/// Split a masked table around disqualifying runs and backfill what remains.
///
/// Rows belonging to a run of `gap_limit`+ consecutive missing bins or
/// `stuck_limit`+ consecutive identical readings in any column are excluded;
/// the surviving stretches become independent segments. Segments shorter
/// than `min_duration_s` are dropped. Remaining missing bins are filled with
/// the next observed value in their column (rows at a segment tail that no
/// later observation can fill are trimmed).
pub fn segment_table(table: &MaskedTable, cfg: &PreprocessConfig) -> Result<Vec<AlignedTable>> {
    cfg.validate()?;
    let len = table.len();
    if len == 0 {
        return Ok(Vec::new());
    }

    let mut excluded = vec![false; len];
    for col in table.columns() {
        mark_runs(&mut excluded, len, cfg.gap_limit, |i| !col.present[i]);
        mark_stuck_runs(&mut excluded, col, cfg.stuck_limit);
    }

    let mut segments = Vec::new();
    let mut row = 0;
    while row < len {
        if excluded[row] {
            row += 1;
            continue;
        }
        let seg_start = row;
        while row < len && !excluded[row] {
            row += 1;
        }
        let mut seg_end = row; // exclusive

        // Trailing missing bins have no later value to copy from.
        while seg_end > seg_start
            && table.columns().any(|c| !c.present[seg_end - 1])
        {
            seg_end -= 1;
        }
        let n = seg_end - seg_start;
        if n == 0 || (n as u64) * table.period_s < cfg.min_duration_s {
            continue;
        }

        let backfill = |col: &MaskedColumn| -> Vec<f64> {
            let mut out = col.values[seg_start..seg_end].to_vec();
            let present = &col.present[seg_start..seg_end];
            for i in (0..n.saturating_sub(1)).rev() {
                if !present[i] {
                    out[i] = out[i + 1];
                }
            }
            out
        };

        segments.push(AlignedTable {
            period_s: table.period_s,
            start_ts: table.start_ts + (seg_start as u64 * table.period_s) as i64,
            norm_constant: 1.0,
            aggregate: backfill(&table.aggregate),
            appliances: table
                .appliances
                .iter()
                .map(|(id, col)| (id.clone(), backfill(col)))
                .collect(),
        });
    }
    Ok(segments)
}

fn mark_runs(excluded: &mut [bool], len: usize, limit: usize, is_bad: impl Fn(usize) -> bool) {
    let mut i = 0;
    while i < len {
        if !is_bad(i) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < len && is_bad(i) {
            i += 1;
        }
        if i - run_start >= limit {
            for e in &mut excluded[run_start..i] {
                *e = true;
            }
        }
    }
}

fn mark_stuck_runs(excluded: &mut [bool], col: &MaskedColumn, limit: usize) {
    let mut i = 0;
    let len = col.len();
    while i < len {
        if !col.present[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        let v = col.values[i];
        i += 1;
        while i < len && col.present[i] && col.values[i] == v {
            i += 1;
        }
        if i - run_start >= limit {
            for e in &mut excluded[run_start..i] {
                *e = true;
            }
        }
    }
}

/// Divide every power column by `norm_constant` and record it so outputs can
/// be de-normalized for metric reporting. Composes with prior normalization.
pub fn normalize(table: &AlignedTable, norm_constant: f64) -> Result<AlignedTable> {
    if norm_constant <= 0.0 || !norm_constant.is_finite() {
        return Err(Error::NonPositive {
            what: "norm_constant",
            value: norm_constant,
        });
    }
    Ok(AlignedTable {
        period_s: table.period_s,
        start_ts: table.start_ts,
        norm_constant: table.norm_constant * norm_constant,
        aggregate: table.aggregate.iter().map(|v| v / norm_constant).collect(),
        appliances: table
            .appliances
            .iter()
            .map(|(id, col)| (id.clone(), col.iter().map(|v| v / norm_constant).collect()))
            .collect(),
    })
}

/// Undo [`normalize`], restoring raw watt values.
pub fn denormalize(table: &AlignedTable) -> AlignedTable {
    let c = table.norm_constant;
    AlignedTable {
        period_s: table.period_s,
        start_ts: table.start_ts,
        norm_constant: 1.0,
        aggregate: table.aggregate.iter().map(|v| v * c).collect(),
        appliances: table
            .appliances
            .iter()
            .map(|(id, col)| (id.clone(), col.iter().map(|v| v * c).collect()))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Read a two-column text file: `epoch_seconds watts` (whitespace or comma
/// separated). The channel id is the file stem.
pub fn read_channel_file(path: &Path) -> Result<RawChannel> {
    let text = std::fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("channel")
        .to_string();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(|c: char| c == ',' || c.is_whitespace());
        let ts = parts.next().and_then(|p| p.parse::<i64>().ok());
        let val = parts
            .filter(|p| !p.is_empty())
            .next()
            .and_then(|p| p.parse::<f64>().ok());
        match (ts, val) {
            (Some(t), Some(v)) => {
                timestamps.push(t);
                values.push(v);
            }
            _ => {
                return Err(Error::MalformedInput {
                    path: path.display().to_string(),
                    detail: format!("line {}: expected `epoch_seconds watts`", lineno + 1),
                })
            }
        }
    }
    if timestamps.is_empty() {
        return Err(Error::MalformedInput {
            path: path.display().to_string(),
            detail: "no samples".into(),
        });
    }
    RawChannel::new(id, timestamps, values)
}

/// Read a merged CSV (`timestamp,aggregate,<appliance ids>`). Rows are
/// re-indexed onto a regular grid inferred from the median timestamp step;
/// absent rows and empty cells become missing bins.
pub fn read_merged_csv(path: &Path) -> Result<MaskedTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    if headers.len() < 2 || headers[0] != "timestamp" || headers[1] != "aggregate" {
        return Err(Error::MalformedInput {
            path: path.display().to_string(),
            detail: "expected header `timestamp,aggregate,<appliance ids>`".into(),
        });
    }
    let mut rows: Vec<(i64, Vec<Option<f64>>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let ts: i64 = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedInput {
                path: path.display().to_string(),
                detail: "unparseable timestamp".into(),
            })?;
        let mut vals = Vec::with_capacity(headers.len() - 1);
        for i in 1..headers.len() {
            let cell = record.get(i).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                vals.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::MalformedInput {
                    path: path.display().to_string(),
                    detail: format!("unparseable value {cell:?}"),
                })?;
                vals.push(Some(v));
            }
        }
        rows.push((ts, vals));
    }
    if rows.is_empty() {
        return Err(Error::MalformedInput {
            path: path.display().to_string(),
            detail: "no data rows".into(),
        });
    }
    rows.sort_by_key(|(ts, _)| *ts);

    let period_s = if rows.len() < 2 {
        1
    } else {
        let mut diffs: Vec<i64> = rows.windows(2).map(|w| w[1].0 - w[0].0).collect();
        diffs.sort_unstable();
        diffs[diffs.len() / 2].max(1) as u64
    };

    let start_ts = rows[0].0;
    let n_bins = ((rows.last().unwrap().0 - start_ts) as u64 / period_s) as usize + 1;
    let n_cols = headers.len() - 1;
    let mut cols: Vec<MaskedColumn> = (0..n_cols)
        .map(|_| MaskedColumn {
            values: vec![0.0; n_bins],
            present: vec![false; n_bins],
        })
        .collect();
    for (ts, vals) in &rows {
        let bin = ((*ts - start_ts) as u64 / period_s) as usize;
        for (c, val) in vals.iter().enumerate() {
            if let Some(v) = val {
                cols[c].values[bin] = *v;
                cols[c].present[bin] = true;
            }
        }
    }

    let mut iter = cols.into_iter();
    let aggregate = iter.next().unwrap();
    let appliances = headers[2..]
        .iter()
        .cloned()
        .zip(iter)
        .collect::<IndexMap<_, _>>();
    Ok(MaskedTable {
        period_s,
        start_ts,
        aggregate,
        appliances,
    })
}

/// Write an aligned table as CSV plus a `key=value` sidecar (`<stem>.meta`)
/// recording `period_s`, `norm_constant`, and `source`.
pub fn write_table_csv(table: &AlignedTable, path: &Path, source: &str) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "timestamp,aggregate")?;
    for id in table.appliances.keys() {
        write!(file, ",{id}")?;
    }
    writeln!(file)?;
    for row in 0..table.len() {
        write!(file, "{},{:.6}", table.timestamp(row), table.aggregate[row])?;
        for col in table.appliances.values() {
            write!(file, ",{:.6}", col[row])?;
        }
        writeln!(file)?;
    }
    file.flush()?;

    let meta = format!(
        "period_s={}\nnorm_constant={}\nsource={}\n",
        table.period_s, table.norm_constant, source
    );
    std::fs::write(sidecar_path(path), meta)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("meta")
}

/// Read an aligned-table CSV written by [`write_table_csv`]. The sidecar, if
/// present, supplies `period_s` and `norm_constant`; otherwise the period is
/// inferred and the table is assumed un-normalized.
pub fn read_table_csv(path: &Path) -> Result<AlignedTable> {
    let masked = read_merged_csv(path)?;
    let all_present = masked.columns().all(|c| c.present.iter().all(|&p| p));
    if !all_present {
        return Err(Error::MalformedInput {
            path: path.display().to_string(),
            detail: "aligned table contains missing values; run preprocess first".into(),
        });
    }
    let mut table = AlignedTable {
        period_s: masked.period_s,
        start_ts: masked.start_ts,
        norm_constant: 1.0,
        aggregate: masked.aggregate.values,
        appliances: masked
            .appliances
            .into_iter()
            .map(|(id, col)| (id, col.values))
            .collect(),
    };
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)?;
        for line in text.lines() {
            if let Some((key, value)) = line.split_once('=') {
                match key.trim() {
                    "period_s" => {
                        table.period_s =
                            value.trim().parse().map_err(|_| Error::MalformedInput {
                                path: sidecar.display().to_string(),
                                detail: "bad period_s".into(),
                            })?
                    }
                    "norm_constant" => {
                        table.norm_constant =
                            value.trim().parse().map_err(|_| Error::MalformedInput {
                                path: sidecar.display().to_string(),
                                detail: "bad norm_constant".into(),
                            })?
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(table)
}
