//! The aggregated statistics cube and its canonical export formats.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use gantryflow_mr::{Codec, DecodeError, Reader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::IngestReport;
use crate::time::{parse_weekday, weekday_name, DateRange};
use crate::vehicle::VehicleType;

/// Aggregation key. Ordering is (corridor, date, hour, vehicle type), which
/// is also the row order of every export.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatKey {
    pub corridor_id: String,
    pub date: NaiveDate,
    pub hour: u8,
    pub vehicle_type: VehicleType,
}

impl StatKey {
    pub fn weekday(&self) -> Weekday {
        self.date.weekday()
    }
}

impl Codec for StatKey {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.corridor_id.encode(buf);
        self.date.num_days_from_ce().encode(buf);
        self.hour.encode(buf);
        self.vehicle_type.0.encode(buf);
    }

    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let corridor_id = String::decode_from(reader)?;
        let days = i32::decode_from(reader)?;
        let date = NaiveDate::from_num_days_from_ce_opt(days)
            .ok_or_else(|| DecodeError::Invalid(format!("day number {days}")))?;
        let hour = u8::decode_from(reader)?;
        if hour > 23 {
            return Err(DecodeError::Invalid(format!("hour {hour}")));
        }
        let vehicle_type = VehicleType(u16::decode_from(reader)?);
        Ok(StatKey {
            corridor_id,
            date,
            hour,
            vehicle_type,
        })
    }
}

/// Number of transits and their summed travel time. Merging is
/// component-wise addition with identity `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CountSum {
    pub count: u64,
    pub sum_travel_seconds: u64,
}

impl CountSum {
    pub const ZERO: CountSum = CountSum {
        count: 0,
        sum_travel_seconds: 0,
    };

    pub fn one(travel_seconds: u64) -> Self {
        CountSum {
            count: 1,
            sum_travel_seconds: travel_seconds,
        }
    }

    pub fn merge(self, other: CountSum) -> CountSum {
        CountSum {
            count: self.count + other.count,
            sum_travel_seconds: self.sum_travel_seconds + other.sum_travel_seconds,
        }
    }
}

impl std::ops::Add for CountSum {
    type Output = CountSum;
    fn add(self, rhs: CountSum) -> CountSum {
        self.merge(rhs)
    }
}

impl std::ops::AddAssign for CountSum {
    fn add_assign(&mut self, rhs: CountSum) {
        *self = self.merge(rhs);
    }
}

impl std::iter::Sum for CountSum {
    fn sum<I: Iterator<Item = CountSum>>(iter: I) -> CountSum {
        iter.fold(CountSum::ZERO, CountSum::merge)
    }
}

impl Codec for CountSum {
    fn encode(&self, buf: &mut Vec<u8>) {
        self.count.encode(buf);
        self.sum_travel_seconds.encode(buf);
    }

    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(CountSum {
            count: u64::decode_from(reader)?,
            sum_travel_seconds: u64::decode_from(reader)?,
        })
    }
}

/// Transits dropped by extraction, by cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiscardCounts {
    /// Travel time not in `(0, max_travel_seconds]`.
    pub outliers: u64,
    /// Rejected by the strict path check.
    pub off_path: u64,
    /// Start date outside the requested date filter.
    pub out_of_range: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeMetadata {
    pub dataset_id: String,
    /// Sorted corridor ids the cube was extracted for.
    pub corridor_ids: Vec<String>,
    /// Requested date filter, if any.
    pub date_filter: Option<DateRange>,
    /// First and last date present in the cells.
    pub date_span: Option<DateRange>,
    pub ingest: IngestReport,
    pub discarded: DiscardCounts,
}

impl CubeMetadata {
    pub fn new(dataset_id: impl Into<String>, corridor_ids: impl IntoIterator<Item = String>) -> Self {
        let ids: BTreeSet<String> = corridor_ids.into_iter().collect();
        Self {
            dataset_id: dataset_id.into(),
            corridor_ids: ids.into_iter().collect(),
            date_filter: None,
            date_span: None,
            ingest: IngestReport::default(),
            discarded: DiscardCounts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsCube {
    pub metadata: CubeMetadata,
    cells: BTreeMap<StatKey, CountSum>,
}

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("cell {index}: {reason}")]
    InvalidCell { index: usize, reason: String },
    #[error("cube JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StatsCube {
    pub fn new(metadata: CubeMetadata) -> Self {
        let mut cube = Self {
            metadata,
            cells: BTreeMap::new(),
        };
        cube.refresh_span();
        cube
    }

    /// Builds a cube from cells, dropping empty ones and refreshing the
    /// observed date span.
    pub fn from_cells(metadata: CubeMetadata, cells: impl IntoIterator<Item = (StatKey, CountSum)>) -> Self {
        let mut cube = Self::new(metadata);
        for (k, v) in cells {
            cube.add(k, v);
        }
        cube.refresh_span();
        cube
    }

    /// Merges `value` into the cell for `key`. Zero-count values are ignored.
    pub fn add(&mut self, key: StatKey, value: CountSum) {
        if value.count == 0 {
            return;
        }
        *self.cells.entry(key).or_default() += value;
    }

    pub fn refresh_span(&mut self) {
        let first = self.cells.keys().map(|k| k.date).min();
        let last = self.cells.keys().map(|k| k.date).max();
        self.metadata.date_span = first.zip(last).and_then(|(a, b)| DateRange::new(a, b));
    }

    pub fn cells(&self) -> &BTreeMap<StatKey, CountSum> {
        &self.cells
    }

    pub fn corridor_cells<'a>(&'a self, corridor_id: &'a str) -> impl Iterator<Item = (&'a StatKey, &'a CountSum)> + 'a {
        self.cells.iter().filter(move |(k, _)| k.corridor_id == corridor_id)
    }

    pub fn has_corridor(&self, corridor_id: &str) -> bool {
        self.metadata.corridor_ids.iter().any(|c| c == corridor_id)
    }

    pub fn total_count(&self) -> u64 {
        self.cells.values().map(|c| c.count).sum()
    }

    pub fn dates(&self) -> BTreeSet<NaiveDate> {
        self.cells.keys().map(|k| k.date).collect()
    }

    pub fn to_export(&self) -> CubeExport {
        CubeExport {
            metadata: self.metadata.clone(),
            cells: self
                .cells
                .iter()
                .map(|(k, v)| CellRow {
                    corridor: k.corridor_id.clone(),
                    date: k.date,
                    weekday: weekday_name(k.weekday()).to_string(),
                    hour: k.hour,
                    vehicle_type: k.vehicle_type,
                    count: v.count,
                    sum_travel_seconds: v.sum_travel_seconds,
                })
                .collect(),
        }
    }

    /// Canonical JSON export: pretty-printed, cells in key order, trailing
    /// newline. Byte-stable for equal cubes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_export()).expect("cube serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CubeError> {
        let export: CubeExport = serde_json::from_str(text)?;
        Self::from_export(export)
    }

    pub fn from_export(export: CubeExport) -> Result<Self, CubeError> {
        let mut cells = BTreeMap::new();
        for (index, row) in export.cells.into_iter().enumerate() {
            let invalid = |reason: String| CubeError::InvalidCell { index, reason };
            if row.hour > 23 {
                return Err(invalid(format!("hour {} out of range", row.hour)));
            }
            if row.count == 0 {
                return Err(invalid("zero count".into()));
            }
            match parse_weekday(&row.weekday) {
                Some(day) if day == row.date.weekday() => {}
                _ => {
                    return Err(invalid(format!(
                        "weekday {} does not match date {}",
                        row.weekday, row.date
                    )))
                }
            }
            let key = StatKey {
                corridor_id: row.corridor,
                date: row.date,
                hour: row.hour,
                vehicle_type: row.vehicle_type,
            };
            let value = CountSum {
                count: row.count,
                sum_travel_seconds: row.sum_travel_seconds,
            };
            if cells.insert(key, value).is_some() {
                return Err(invalid("duplicate cell".into()));
            }
        }
        Ok(Self {
            metadata: export.metadata,
            cells,
        })
    }

    /// CSV with the same columns as the JSON cells, header first.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CubeError> {
        let mut wtr = csv::Writer::from_writer(out);
        for row in self.to_export().cells {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeExport {
    pub metadata: CubeMetadata,
    pub cells: Vec<CellRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRow {
    pub corridor: String,
    pub date: NaiveDate,
    pub weekday: String,
    pub hour: u8,
    pub vehicle_type: VehicleType,
    pub count: u64,
    pub sum_travel_seconds: u64,
}
