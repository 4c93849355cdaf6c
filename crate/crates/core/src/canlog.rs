//! CAN speed/pedal logs in the `time_s,signal,value` CSV interchange format.
//!
//! Speed values are km/h on the wire and pedal values are percent. Each row is
//! routed to its series by the `signal` column; both series end up sorted by
//! time with duplicate timestamps dropped (first occurrence wins).

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 3] = ["time_s", "signal", "value"];

#[derive(Debug, Error)]
pub enum CanLogError {
    #[error("log contains no data rows")]
    EmptyLog,
    #[error("log has no `{0}` rows")]
    MissingSignal(Signal),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: unknown signal `{signal}`")]
    UnknownSignal { line: u64, signal: String },
    #[error("line {line}: invalid timestamp {time_s}")]
    NonMonotonicTime { line: u64, time_s: f64 },
    #[error("series is not ordered by time at index {index}")]
    Unordered { index: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Speed,
    Pedal,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::Speed => "speed",
            Signal::Pedal => "pedal",
        }
    }
}

impl std::fmt::Display for Signal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One decoded CAN reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanSample {
    pub time_s: f64,
    pub value: f64,
}

impl CanSample {
    pub fn new(time_s: f64, value: f64) -> Self {
        Self { time_s, value }
    }
}

fn check_ordered(samples: &[CanSample]) -> Result<(), CanLogError> {
    for (index, pair) in samples.windows(2).enumerate() {
        if pair[1].time_s < pair[0].time_s {
            return Err(CanLogError::Unordered { index: index + 1 });
        }
    }
    for s in samples {
        if !(s.time_s >= 0.0) || !s.time_s.is_finite() {
            return Err(CanLogError::NonMonotonicTime {
                line: 0,
                time_s: s.time_s,
            });
        }
        if !(s.value >= 0.0) || !s.value.is_finite() {
            return Err(CanLogError::MalformedRow {
                line: 0,
                reason: format!("invalid value {}", s.value),
            });
        }
    }
    Ok(())
}

/// Vehicle speed readings in km/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSeries {
    samples: Vec<CanSample>,
}

impl SpeedSeries {
    pub fn new(samples: Vec<CanSample>) -> Result<Self, CanLogError> {
        check_ordered(&samples)?;
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[CanSample] {
        &self.samples
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Accelerator pedal readings. The idle value is the minimum reading, which
/// is usually not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedalSeries {
    samples: Vec<CanSample>,
    idle_value: f64,
}

impl PedalSeries {
    pub fn new(samples: Vec<CanSample>) -> Result<Self, CanLogError> {
        check_ordered(&samples)?;
        let idle_value = samples
            .iter()
            .map(|s| s.value)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            samples,
            idle_value,
        })
    }

    pub fn samples(&self) -> &[CanSample] {
        &self.samples
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Minimum pedal reading; `+inf` for an empty series.
    pub fn idle_value(&self) -> f64 {
        self.idle_value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanLog {
    pub speed: SpeedSeries,
    pub pedal: PedalSeries,
    pub source_id: String,
}

impl CanLog {
    /// Builds a log from already-ordered series, rejecting empty ones.
    pub fn new(
        speed: SpeedSeries,
        pedal: PedalSeries,
        source_id: impl Into<String>,
    ) -> Result<Self, CanLogError> {
        if speed.is_empty() {
            return Err(CanLogError::MissingSignal(Signal::Speed));
        }
        if pedal.is_empty() {
            return Err(CanLogError::MissingSignal(Signal::Pedal));
        }
        Ok(Self {
            speed,
            pedal,
            source_id: source_id.into(),
        })
    }
}

fn parse_field(line: u64, field: Option<&str>, what: &str) -> Result<f64, CanLogError> {
    let raw = field.ok_or_else(|| CanLogError::MalformedRow {
        line,
        reason: format!("missing {what}"),
    })?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| CanLogError::MalformedRow {
            line,
            reason: format!("bad {what} `{raw}`"),
        })
}

fn finish_series(mut rows: Vec<CanSample>, signal: Signal) -> Vec<CanSample> {
    rows.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let before = rows.len();
    rows.dedup_by(|later, first| later.time_s == first.time_s);
    if rows.len() != before {
        warn!(
            "signal={} dropped_duplicate_timestamps={}",
            signal,
            before - rows.len()
        );
    }
    rows
}

/// Parses the CSV interchange format. The `time_s,signal,value` header row is
/// optional.
pub fn parse_can_csv<R: Read>(reader: R, source_id: &str) -> Result<CanLog, CanLogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut speed = Vec::new();
    let mut pedal = Vec::new();
    let mut saw_row = false;

    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(idx as u64 + 1);
        if idx == 0 && record.get(0) == Some(CSV_HEADER[0]) {
            continue;
        }
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if record.len() != 3 {
            return Err(CanLogError::MalformedRow {
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        saw_row = true;
        let time_s = parse_field(line, record.get(0), "time_s")?;
        if !time_s.is_finite() || time_s < 0.0 {
            return Err(CanLogError::NonMonotonicTime { line, time_s });
        }
        let value = parse_field(line, record.get(2), "value")?;
        if !value.is_finite() || value < 0.0 {
            return Err(CanLogError::MalformedRow {
                line,
                reason: format!("value must be a non-negative number, got {value}"),
            });
        }
        let sample = CanSample::new(time_s, value);
        match record.get(1).unwrap_or_default() {
            "speed" => speed.push(sample),
            "pedal" => pedal.push(sample),
            other => {
                return Err(CanLogError::UnknownSignal {
                    line,
                    signal: other.to_string(),
                })
            }
        }
    }

    if !saw_row {
        return Err(CanLogError::EmptyLog);
    }
    let speed = SpeedSeries::new(finish_series(speed, Signal::Speed))?;
    let pedal = PedalSeries::new(finish_series(pedal, Signal::Pedal))?;
    CanLog::new(speed, pedal, source_id)
}

/// Reads a log from disk, transparently decompressing `.gz` files.
pub fn read_can_log(path: &Path) -> Result<CanLog, CanLogError> {
    let file = BufReader::new(File::open(path)?);
    let source_id = path.display().to_string();
    if path.extension().is_some_and(|e| e == "gz") {
        parse_can_csv(GzDecoder::new(file), &source_id)
    } else {
        parse_can_csv(file, &source_id)
    }
}

/// Writes the log as CSV, rows interleaved by time (speed first on ties).
pub fn write_can_csv<W: Write>(log: &CanLog, writer: W) -> Result<(), CanLogError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    let speed = log.speed.samples();
    let pedal = log.pedal.samples();
    let (mut i, mut j) = (0, 0);
    while i < speed.len() || j < pedal.len() {
        let take_speed = match (speed.get(i), pedal.get(j)) {
            (Some(s), Some(p)) => s.time_s <= p.time_s,
            (Some(_), None) => true,
            _ => false,
        };
        let (signal, sample) = if take_speed {
            i += 1;
            (Signal::Speed, speed[i - 1])
        } else {
            j += 1;
            (Signal::Pedal, pedal[j - 1])
        };
        wtr.write_record([
            sample.time_s.to_string(),
            signal.as_str().to_string(),
            sample.value.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesStats {
    pub duration_s: f64,
    /// Samples per second; `None` when the duration is zero.
    pub rate_hz: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogStats {
    pub speed: SeriesStats,
    pub pedal: SeriesStats,
}

fn stats_of(samples: &[CanSample]) -> SeriesStats {
    let duration_s = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => b.time_s - a.time_s,
        _ => 0.0,
    };
    SeriesStats {
        duration_s,
        rate_hz: (duration_s > 0.0).then(|| samples.len() as f64 / duration_s),
        count: samples.len(),
    }
}

pub fn series_stats(log: &CanLog) -> LogStats {
    LogStats {
        speed: stats_of(log.speed.samples()),
        pedal: stats_of(log.pedal.samples()),
    }
}
