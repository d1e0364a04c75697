//! File ingestion: dated CSV series, differencing, date alignment, and the
//! breakpoint split into two observation periods.
//!
//! Series are inner-joined on their common dates (no interpolation), the
//! breakpoint date itself is excluded from both periods, and lagged
//! controlling variables are constructed inside each period so no row mixes
//! observations across the breakpoint.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

use crate::cqgram::{CqError, ObservedSeries};
use crate::quantreg::DesignMatrix;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("column {0:?} not found in the header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse date {value:?} (expected YYYY-MM-DD)")]
    BadDate { row: usize, value: String },
    #[error("row {row}: cannot parse value {value:?}")]
    BadValue { row: usize, value: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates must be strictly increasing")]
    UnsortedDates,
    #[error("series too short")]
    TooShort,
    #[error("no overlapping dates to align")]
    EmptyJoin,
    #[error("period {0} is empty after the split")]
    EmptyPeriod(&'static str),
    #[error("control references external series {0} but only {1} were supplied")]
    BadControlIndex(usize, usize),
    #[error("lagged controls leave no rows (lag {lag} vs {rows} rows)")]
    LagExhaustsRows { lag: usize, rows: usize },
    #[error(transparent)]
    Cq(#[from] CqError),
}

/// A date-indexed univariate series with strictly increasing dates and finite
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self, IngestError> {
        if dates.len() != values.len() {
            return Err(IngestError::Cq(CqError::LengthMismatch));
        }
        for w in dates.windows(2) {
            if w[0] == w[1] {
                return Err(IngestError::DuplicateDate(w[0]));
            }
            if w[0] > w[1] {
                return Err(IngestError::UnsortedDates);
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::Cq(CqError::NonFinite));
        }
        Ok(Self { dates, values })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A loaded CSV plus the count of rows dropped for missing or non-finite
/// values.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub series: DatedSeries,
    pub dropped_rows: usize,
}

fn is_missing(token: &str) -> bool {
    token.is_empty() || matches!(token.to_ascii_lowercase().as_str(), "na" | "nan" | "null")
}

/// Loads one `(date, value)` series from a headered CSV. Rows are sorted by
/// date; duplicate dates are rejected; rows with missing or non-finite values
/// are dropped and counted.
pub fn load_csv(
    path: impl AsRef<Path>,
    date_column: &str,
    value_column: &str,
) -> Result<CsvLoad, IngestError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();
    let date_idx = headers
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| IngestError::MissingColumn(date_column.to_string()))?;
    let value_idx = headers
        .iter()
        .position(|h| h == value_column)
        .ok_or_else(|| IngestError::MissingColumn(value_column.to_string()))?;

    let mut rows: Vec<(NaiveDate, f64)> = Vec::new();
    let mut dropped = 0usize;
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Csv {
            path: path_str.clone(),
            source: e,
        })?;
        let date_tok = record.get(date_idx).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_tok, "%Y-%m-%d").map_err(|_| {
            IngestError::BadDate {
                row: row_no + 2,
                value: date_tok.to_string(),
            }
        })?;
        let value_tok = record.get(value_idx).unwrap_or("").trim();
        if is_missing(value_tok) {
            dropped += 1;
            continue;
        }
        let value: f64 = value_tok.parse().map_err(|_| IngestError::BadValue {
            row: row_no + 2,
            value: value_tok.to_string(),
        })?;
        if !value.is_finite() {
            dropped += 1;
            continue;
        }
        rows.push((date, value));
    }

    rows.sort_by_key(|&(d, _)| d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(IngestError::DuplicateDate(w[0].0));
        }
    }
    let (dates, values) = rows.into_iter().unzip();
    Ok(CsvLoad {
        series: DatedSeries::new(dates, values)?,
        dropped_rows: dropped,
    })
}

/// First differences, dated at the later date; length shrinks by one.
pub fn difference(series: &DatedSeries) -> Result<DatedSeries, IngestError> {
    if series.len() < 2 {
        return Err(IngestError::TooShort);
    }
    let dates = series.dates[1..].to_vec();
    let values = series
        .values
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    DatedSeries::new(dates, values)
}

/// Target, source, and any external control columns inner-joined on their
/// common dates.
#[derive(Debug, Clone)]
pub struct AlignedFrame {
    pub dates: Vec<NaiveDate>,
    pub target: Vec<f64>,
    pub source: Vec<f64>,
    pub externals: Vec<Vec<f64>>,
}

impl AlignedFrame {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Inner join of all series on dates common to every one of them.
pub fn align(
    target: &DatedSeries,
    source: &DatedSeries,
    externals: &[DatedSeries],
) -> Result<AlignedFrame, IngestError> {
    let maps: Vec<HashMap<NaiveDate, f64>> = std::iter::once(source)
        .chain(externals.iter())
        .map(|s| s.dates.iter().copied().zip(s.values.iter().copied()).collect())
        .collect();
    let mut dates = Vec::new();
    let mut target_vals = Vec::new();
    let mut rest: Vec<Vec<f64>> = vec![Vec::new(); maps.len()];
    'outer: for (i, &d) in target.dates.iter().enumerate() {
        let mut row = Vec::with_capacity(maps.len());
        for m in &maps {
            match m.get(&d) {
                Some(&v) => row.push(v),
                None => continue 'outer,
            }
        }
        dates.push(d);
        target_vals.push(target.values[i]);
        for (col, v) in rest.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if dates.is_empty() {
        return Err(IngestError::EmptyJoin);
    }
    let source_vals = rest.remove(0);
    Ok(AlignedFrame {
        dates,
        target: target_vals,
        source: source_vals,
        externals: rest,
    })
}

/// Splits a frame at `breakpoint`: rows strictly before form period b, rows
/// strictly after form period a, and the breakpoint date itself is excluded
/// from both.
pub fn split_frame(
    frame: &AlignedFrame,
    breakpoint: NaiveDate,
) -> Result<(AlignedFrame, AlignedFrame), IngestError> {
    let take = |keep: &dyn Fn(NaiveDate) -> bool| -> AlignedFrame {
        let sel: Vec<usize> = frame
            .dates
            .iter()
            .enumerate()
            .filter(|(_, &d)| keep(d))
            .map(|(i, _)| i)
            .collect();
        AlignedFrame {
            dates: sel.iter().map(|&i| frame.dates[i]).collect(),
            target: sel.iter().map(|&i| frame.target[i]).collect(),
            source: sel.iter().map(|&i| frame.source[i]).collect(),
            externals: frame
                .externals
                .iter()
                .map(|col| sel.iter().map(|&i| col[i]).collect())
                .collect(),
        }
    };
    let before = take(&|d| d < breakpoint);
    let after = take(&|d| d > breakpoint);
    if before.is_empty() {
        return Err(IngestError::EmptyPeriod("b"));
    }
    if after.is_empty() {
        return Err(IngestError::EmptyPeriod("a"));
    }
    Ok((before, after))
}

/// Where a controlling column comes from, plus the lag applied to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlSpec {
    pub origin: ControlOrigin,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlOrigin {
    Target,
    Source,
    /// Index into the externals of the aligned frame.
    External(usize),
}

/// Builds an [`ObservedSeries`] from one period's frame, constructing lagged
/// control columns within the period. The first `max_lag` rows are dropped so
/// the response and every control column align.
pub fn build_observed(
    frame: &AlignedFrame,
    controls_y: &[ControlSpec],
    controls_x: &[ControlSpec],
) -> Result<ObservedSeries, IngestError> {
    let max_lag = controls_y
        .iter()
        .chain(controls_x.iter())
        .map(|c| c.lag)
        .max()
        .unwrap_or(0);
    if frame.len() <= max_lag {
        return Err(IngestError::LagExhaustsRows {
            lag: max_lag,
            rows: frame.len(),
        });
    }
    let n = frame.len() - max_lag;
    let column = |spec: &ControlSpec| -> Result<Vec<f64>, IngestError> {
        let full: &[f64] = match spec.origin {
            ControlOrigin::Target => &frame.target,
            ControlOrigin::Source => &frame.source,
            ControlOrigin::External(i) => frame
                .externals
                .get(i)
                .ok_or(IngestError::BadControlIndex(i, frame.externals.len()))?,
        };
        Ok(full[max_lag - spec.lag..frame.len() - spec.lag].to_vec())
    };
    let zy_cols = controls_y.iter().map(column).collect::<Result<Vec<_>, _>>()?;
    let zx_cols = controls_x.iter().map(column).collect::<Result<Vec<_>, _>>()?;
    let zy = DesignMatrix::from_columns(n, &zy_cols).map_err(CqError::from)?;
    let zx = DesignMatrix::from_columns(n, &zx_cols).map_err(CqError::from)?;
    Ok(ObservedSeries::new(
        frame.target[max_lag..].to_vec(),
        zy,
        frame.source[max_lag..].to_vec(),
        zx,
    )?)
}

/// Aligns, splits at the breakpoint, and attaches controls per period.
pub fn align_and_split(
    target: &DatedSeries,
    source: &DatedSeries,
    externals: &[DatedSeries],
    controls_y: &[ControlSpec],
    controls_x: &[ControlSpec],
    breakpoint: NaiveDate,
) -> Result<(ObservedSeries, ObservedSeries), IngestError> {
    let frame = align(target, source, externals)?;
    let (before, after) = split_frame(&frame, breakpoint)?;
    Ok((
        build_observed(&before, controls_y, controls_x)?,
        build_observed(&after, controls_y, controls_x)?,
    ))
}
