use std::fs;
use std::path::Path;

use super::{format_f64, FormatError};
use crate::analysis::{SensitivityMap, SensitivityPoint, SpectrumData};
use crate::signal_chain::{FmTracking, SeriesUnit, TimeSeries};

pub const SWEEP_HEADER: &str = "frequency_hz,lockin_v,dc_v";
pub const MAP_HEADER: &str = "p_opt_w,p_rf_w,fwhm_hz,contrast,rate_hz,eta_t_rthz";
pub const TIME_SERIES_HEADER: &str = "time_s,field_t,lockin_v";

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

fn table_string<I>(header: &str, rows: I) -> Result<String, FormatError>
where
    I: IntoIterator<Item = Vec<Cell>>,
{
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header.split(','))
        .map_err(|e| FormatError::InvalidRecord(e.to_string()))?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))
            .map_err(|e| FormatError::InvalidRecord(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::InvalidRecord(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("cells are UTF-8"))
}

pub fn write_table<I>(path: &Path, header: &str, rows: I) -> Result<(), FormatError>
where
    I: IntoIterator<Item = Vec<Cell>>,
{
    fs::write(path, table_string(header, rows)?).map_err(|e| FormatError::io(path, e))
}

/// Numeric rows of a CSV whose header must equal `header`; empty cells are
/// `None`. Each row carries its 1-based line number.
fn read_numeric(text: &str, header: &str) -> Result<Vec<(u64, Vec<Option<f64>>)>, FormatError> {
    let columns: Vec<&str> = header.split(',').collect();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = rdr.records();
    let first = match records.next() {
        Some(r) => r.map_err(|e| FormatError::InvalidRecord(e.to_string()))?,
        None => {
            return Err(FormatError::MalformedHeader {
                expected: header.into(),
                found: String::new(),
            })
        }
    };
    let found: Vec<&str> = first.iter().collect();
    if found != columns {
        return Err(FormatError::MalformedHeader {
            expected: header.into(),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| FormatError::InvalidRecord(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns.len() {
            return Err(FormatError::RaggedRow {
                line,
                expected: columns.len(),
                found: rec.len(),
            });
        }
        let values = rec
            .iter()
            .zip(&columns)
            .map(|(cell, column)| {
                if cell.is_empty() {
                    return Ok(None);
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(FormatError::NonNumericCell {
                        line,
                        column: (*column).into(),
                        cell: cell.into(),
                    }),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((line, values));
    }
    Ok(rows)
}

fn required(line: u64, column: &str, v: Option<f64>) -> Result<f64, FormatError> {
    v.ok_or_else(|| FormatError::NonNumericCell {
        line,
        column: column.into(),
        cell: String::new(),
    })
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

/// AM sweep: lock-in output and optional detector DC voltage per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub frequency_hz: Vec<f64>,
    pub lockin_v: Vec<f64>,
    pub dc_v: Vec<Option<f64>>,
}

impl SweepRecord {
    pub fn len(&self) -> usize {
        self.frequency_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency_hz.is_empty()
    }

    /// DC voltages if every row has one.
    pub fn dc_complete(&self) -> Option<Vec<f64>> {
        self.dc_v.iter().copied().collect()
    }

    pub fn to_csv_string(&self) -> Result<String, FormatError> {
        table_string(
            SWEEP_HEADER,
            (0..self.len()).map(|i| vec![self.frequency_hz[i].into(), self.lockin_v[i].into(), self.dc_v[i].into()]),
        )
    }
}

impl SpectrumData for SweepRecord {
    fn axis(&self) -> &[f64] {
        &self.frequency_hz
    }

    fn values(&self) -> &[f64] {
        &self.lockin_v
    }
}

pub fn parse_sweep(text: &str) -> Result<SweepRecord, FormatError> {
    let rows = read_numeric(text, SWEEP_HEADER)?;
    let mut rec = SweepRecord {
        frequency_hz: Vec::with_capacity(rows.len()),
        lockin_v: Vec::with_capacity(rows.len()),
        dc_v: Vec::with_capacity(rows.len()),
    };
    for (line, row) in rows {
        let f = required(line, "frequency_hz", row[0])?;
        if rec.frequency_hz.last().is_some_and(|&prev| f <= prev) {
            return Err(FormatError::NonMonotoneAxis { line, value: f });
        }
        rec.frequency_hz.push(f);
        rec.lockin_v.push(required(line, "lockin_v", row[1])?);
        rec.dc_v.push(row[2]);
    }
    Ok(rec)
}

pub fn load_sweep(path: &Path) -> Result<SweepRecord, FormatError> {
    parse_sweep(&read_text(path)?)
}

pub fn write_sweep(path: &Path, rec: &SweepRecord) -> Result<(), FormatError> {
    if rec.lockin_v.len() != rec.len() || rec.dc_v.len() != rec.len() {
        return Err(FormatError::InvalidRecord("sweep columns differ in length".into()));
    }
    fs::write(path, rec.to_csv_string()?).map_err(|e| FormatError::io(path, e))
}

/// Present cells in grid order.
pub fn write_map(path: &Path, map: &SensitivityMap) -> Result<(), FormatError> {
    write_table(
        path,
        MAP_HEADER,
        map.points().map(|p| {
            vec![
                p.p_opt_w.into(),
                p.p_rf_w.into(),
                p.fwhm_hz.into(),
                p.contrast.into(),
                p.rate_hz.into(),
                p.eta_t_rthz.into(),
            ]
        }),
    )
}

pub fn load_map(path: &Path) -> Result<SensitivityMap, FormatError> {
    let names: Vec<&str> = MAP_HEADER.split(',').collect();
    let points = read_numeric(&read_text(path)?, MAP_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            let v = |i: usize| required(line, names[i], row[i]);
            Ok(SensitivityPoint {
                p_opt_w: v(0)?,
                p_rf_w: v(1)?,
                fwhm_hz: v(2)?,
                contrast: v(3)?,
                rate_hz: v(4)?,
                eta_t_rthz: v(5)?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    SensitivityMap::from_points(points).map_err(|e| FormatError::InvalidRecord(e.to_string()))
}

/// FM tracking output: field estimate and lock-in voltage per output sample.
pub fn write_time_series(path: &Path, tracking: &FmTracking) -> Result<(), FormatError> {
    let (field, lockin) = (&tracking.field_estimate, &tracking.lockin);
    if field.len() != lockin.len() {
        return Err(FormatError::InvalidRecord("series differ in length".into()));
    }
    write_table(
        path,
        TIME_SERIES_HEADER,
        (0..field.len()).map(|i| vec![field.time(i).into(), field.values[i].into(), lockin.values[i].into()]),
    )
}

/// Reads a tracking file back as `(field, lockin)` series. The sample
/// interval is taken from the first two rows and must be uniform.
pub fn load_time_series(path: &Path) -> Result<(TimeSeries, TimeSeries), FormatError> {
    let rows = read_numeric(&read_text(path)?, TIME_SERIES_HEADER)?;
    if rows.len() < 2 {
        return Err(FormatError::InvalidRecord("time series needs at least 2 rows".into()));
    }
    let mut t = Vec::with_capacity(rows.len());
    let mut field = Vec::with_capacity(rows.len());
    let mut lockin = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        let ti = required(*line, "time_s", row[0])?;
        if t.last().is_some_and(|&prev| ti <= prev) {
            return Err(FormatError::NonMonotoneAxis { line: *line, value: ti });
        }
        t.push(ti);
        field.push(required(*line, "field_t", row[1])?);
        lockin.push(required(*line, "lockin_v", row[2])?);
    }
    let interval_s = t[1] - t[0];
    let start_s = t[0];
    for (i, &ti) in t.iter().enumerate() {
        let expected = start_s + interval_s * i as f64;
        if (ti - expected).abs() > 1e-9 * interval_s.max(expected.abs()) {
            return Err(FormatError::InvalidRecord(format!("non-uniform sampling at row {}", i + 1)));
        }
    }
    let series = |values, unit| TimeSeries {
        start_s,
        interval_s,
        values,
        unit,
    };
    Ok((series(field, SeriesUnit::Tesla), series(lockin, SeriesUnit::Volts)))
}
