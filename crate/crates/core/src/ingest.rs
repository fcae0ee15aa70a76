//! Trip-log files and datasets.
//!
//! One record per line, eight comma-separated fields:
//!
//! ```text
//! VehicleType,DetectionTime_O,GantryID_O,DetectionTime_D,GantryID_D,TripLength,TripEnd,TripInformation
//! ```
//!
//! `TripInformation` lists every gantry passage as `<time>+<gantry>` joined
//! by `"; "`, with times as `yyyy-MM-dd HH:mm:ss`. It is the authoritative
//! passage sequence; the origin/destination fields are carried through
//! unchanged. Lines starting with `#` and blank lines are skipped. Bad lines
//! are counted by reason and skipped, never fatal.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::gantry::{parse_gantry_id, GantryId, Tenths};
use crate::time::{parse_timestamp, write_timestamp};
use crate::vehicle::VehicleType;

const FIELD_COUNT: usize = 8;
const PASSAGE_SEPARATOR: &str = "; ";

/// Header written at the top of generated files.
pub const HEADER_LINE: &str =
    "# VehicleType,DetectionTime_O,GantryID_O,DetectionTime_D,GantryID_D,TripLength,TripEnd,TripInformation";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GantryPassage {
    pub gantry: GantryId,
    pub timestamp: NaiveDateTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordSource {
    /// Index of the file within its dataset.
    pub file: u32,
    /// 1-based line number.
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripRecord {
    pub vehicle_type: VehicleType,
    pub origin: GantryPassage,
    pub destination: GantryPassage,
    pub trip_length_km: Tenths,
    pub trip_end: bool,
    /// Non-decreasing in time; never empty.
    pub passages: Vec<GantryPassage>,
    pub source: RecordSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Malformed,
    NonMonotonic,
    BadGantryId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: u64, reason: String },
    #[error("line {line_no}: bad gantry id: {source}")]
    BadGantryId {
        line_no: u64,
        source: crate::gantry::MalformedGantryId,
    },
    #[error("line {line_no}: passage timestamps are not in order")]
    NonMonotonicTimestamps { line_no: u64 },
}

impl RecordError {
    pub fn reason(&self) -> RejectReason {
        match self {
            RecordError::MalformedRecord { .. } => RejectReason::Malformed,
            RecordError::BadGantryId { .. } => RejectReason::BadGantryId,
            RecordError::NonMonotonicTimestamps { .. } => RejectReason::NonMonotonic,
        }
    }
}

struct LineParser {
    line_no: u64,
}

impl LineParser {
    fn malformed(&self, reason: impl Into<String>) -> RecordError {
        RecordError::MalformedRecord {
            line_no: self.line_no,
            reason: reason.into(),
        }
    }

    fn timestamp(&self, field: &str, what: &str) -> Result<NaiveDateTime, RecordError> {
        parse_timestamp(field).ok_or_else(|| self.malformed(format!("bad {what} timestamp {field:?}")))
    }

    fn gantry(&self, field: &str) -> Result<GantryId, RecordError> {
        parse_gantry_id(field).map_err(|source| RecordError::BadGantryId {
            line_no: self.line_no,
            source,
        })
    }
}

/// Parses one line. The returned record's source file index is 0.
pub fn parse_trip_record(line: &str, line_no: u64) -> Result<TripRecord, RecordError> {
    let p = LineParser { line_no };
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);

    let mut fields = [""; FIELD_COUNT];
    let mut parts = line.split(',');
    for (i, slot) in fields.iter_mut().enumerate() {
        *slot = parts
            .next()
            .ok_or_else(|| p.malformed(format!("expected {FIELD_COUNT} fields, found {i}")))?;
    }
    if parts.next().is_some() {
        return Err(p.malformed(format!("more than {FIELD_COUNT} fields")));
    }
    let [vt, time_o, gantry_o, time_d, gantry_d, length, end, info] = fields;

    if vt.is_empty() || !vt.bytes().all(|b| b.is_ascii_digit()) {
        return Err(p.malformed(format!("bad vehicle type {vt:?}")));
    }
    let vehicle_type = VehicleType(
        u16::from_str(vt).map_err(|_| p.malformed(format!("vehicle type {vt:?} out of range")))?,
    );
    let origin = GantryPassage {
        timestamp: p.timestamp(time_o, "origin")?,
        gantry: p.gantry(gantry_o)?,
    };
    let destination = GantryPassage {
        timestamp: p.timestamp(time_d, "destination")?,
        gantry: p.gantry(gantry_d)?,
    };
    let trip_length_km = Tenths::parse_canonical(length)
        .map_err(|e| p.malformed(format!("bad trip length {length:?}: {e}")))?;
    let trip_end = match end {
        "Y" => true,
        "N" => false,
        other => return Err(p.malformed(format!("trip end flag must be Y or N, got {other:?}"))),
    };
    if info.is_empty() {
        return Err(p.malformed("empty trip information"));
    }

    let mut passages = Vec::with_capacity(info.len() / 30 + 1);
    for item in info.split(PASSAGE_SEPARATOR) {
        let (time, gantry) = item
            .split_once('+')
            .ok_or_else(|| p.malformed(format!("passage {item:?} lacks '+'")))?;
        passages.push(GantryPassage {
            timestamp: p.timestamp(time, "passage")?,
            gantry: p.gantry(gantry)?,
        });
    }
    if passages.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(RecordError::NonMonotonicTimestamps { line_no });
    }

    Ok(TripRecord {
        vehicle_type,
        origin,
        destination,
        trip_length_km,
        trip_end,
        passages,
        source: RecordSource {
            file: 0,
            line: line_no,
        },
    })
}

/// Writes the canonical line for `record`, without a line terminator.
pub fn write_trip_record(out: &mut String, record: &TripRecord) {
    use std::fmt::Write as _;
    let _ = write!(out, "{},", record.vehicle_type.0);
    write_timestamp(out, &record.origin.timestamp);
    let _ = write!(out, ",{},", record.origin.gantry);
    write_timestamp(out, &record.destination.timestamp);
    let _ = write!(
        out,
        ",{},{},{},",
        record.destination.gantry,
        record.trip_length_km,
        if record.trip_end { 'Y' } else { 'N' }
    );
    for (i, p) in record.passages.iter().enumerate() {
        if i > 0 {
            out.push_str(PASSAGE_SEPARATOR);
        }
        write_timestamp(out, &p.timestamp);
        let _ = write!(out, "+{}", p.gantry);
    }
}

pub fn format_trip_record(record: &TripRecord) -> String {
    let mut s = String::with_capacity(96 + record.passages.len() * 32);
    write_trip_record(&mut s, record);
    s
}

/// Outcome counts for every line attempted. Comment and blank lines are
/// not attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_ok: u64,
    pub rejected: RejectCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RejectCounts {
    pub malformed: u64,
    pub non_monotonic: u64,
    pub bad_gantry_id: u64,
}

impl RejectCounts {
    pub fn total(&self) -> u64 {
        self.malformed + self.non_monotonic + self.bad_gantry_id
    }

    pub fn bump(&mut self, reason: RejectReason) {
        match reason {
            RejectReason::Malformed => self.malformed += 1,
            RejectReason::NonMonotonic => self.non_monotonic += 1,
            RejectReason::BadGantryId => self.bad_gantry_id += 1,
        }
    }
}

impl IngestReport {
    pub fn lines_attempted(&self) -> u64 {
        self.records_ok + self.rejected.total()
    }
}

/// Shared, thread-safe tallies behind an [`IngestReport`].
#[derive(Debug, Default)]
pub struct IngestCounters {
    ok: AtomicU64,
    malformed: AtomicU64,
    non_monotonic: AtomicU64,
    bad_gantry_id: AtomicU64,
}

impl IngestCounters {
    fn record(&self, outcome: Result<(), RejectReason>) {
        let slot = match outcome {
            Ok(()) => &self.ok,
            Err(RejectReason::Malformed) => &self.malformed,
            Err(RejectReason::NonMonotonic) => &self.non_monotonic,
            Err(RejectReason::BadGantryId) => &self.bad_gantry_id,
        };
        slot.fetch_add(1, Ordering::Relaxed);
    }

    pub fn report(&self) -> IngestReport {
        IngestReport {
            records_ok: self.ok.load(Ordering::Relaxed),
            rejected: RejectCounts {
                malformed: self.malformed.load(Ordering::Relaxed),
                non_monotonic: self.non_monotonic.load(Ordering::Relaxed),
                bad_gantry_id: self.bad_gantry_id.load(Ordering::Relaxed),
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset not found: {0}")]
    DatasetNotFound(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid dataset manifest {path}: {reason}")]
    BadManifest { path: String, reason: String },
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("month {s:?} is not YYYY-MM");
        let (y, m) = s.split_once(['-', '/']).ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// On-disk dataset manifest. Relative file paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub id: String,
    pub months: Vec<YearMonth>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub id: String,
    pub files: Vec<PathBuf>,
    /// Inclusive (first, last) month covered.
    pub months: (YearMonth, YearMonth),
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self, IngestError> {
        if !manifest_path.is_file() {
            return Err(IngestError::DatasetNotFound(manifest_path.display().to_string()));
        }
        let text = std::fs::read_to_string(manifest_path).map_err(io_failure(manifest_path))?;
        let bad = |reason: String| IngestError::BadManifest {
            path: manifest_path.display().to_string(),
            reason,
        };
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(manifest, base).map_err(bad)
    }

    pub fn from_manifest(manifest: DatasetManifest, base: &Path) -> Result<Self, String> {
        if manifest.files.is_empty() {
            return Err("dataset lists no files".into());
        }
        let first = manifest.months.iter().min().ok_or("dataset lists no months")?;
        let last = manifest.months.iter().max().expect("non-empty");
        Ok(Dataset {
            id: manifest.id,
            months: (*first, *last),
            files: manifest.files.iter().map(|f| base.join(f)).collect(),
        })
    }

    /// Manifest with file paths relative to `base` where possible.
    pub fn to_manifest(&self, base: &Path) -> DatasetManifest {
        let (first, last) = self.months;
        let mut months = Vec::new();
        let mut m = first;
        while m <= last {
            months.push(m);
            m = if m.month == 12 {
                YearMonth { year: m.year + 1, month: 1 }
            } else {
                YearMonth { year: m.year, month: m.month + 1 }
            };
        }
        DatasetManifest {
            id: self.id.clone(),
            months,
            files: self
                .files
                .iter()
                .map(|f| f.strip_prefix(base).unwrap_or(f).display().to_string())
                .collect(),
        }
    }

    /// Opens one streaming reader per file, all tallying into `counters`.
    pub fn open_files(&self, counters: &Arc<IngestCounters>) -> Result<Vec<FileRecords>, IngestError> {
        for f in &self.files {
            if !f.is_file() {
                return Err(IngestError::DatasetNotFound(f.display().to_string()));
            }
        }
        self.files
            .iter()
            .enumerate()
            .map(|(idx, path)| FileRecords::open(path, idx as u32, Arc::clone(counters)))
            .collect()
    }
}

/// Read buffer per open file.
pub const READ_BUFFER_BYTES: usize = 256 * 1024;

/// Streams accepted records from one file, line by line. The file is
/// opened on the first read and closed at end of file, so many of these
/// can be queued without holding descriptors or buffers.
pub struct FileRecords {
    path: PathBuf,
    file_idx: u32,
    reader: Option<BufReader<File>>,
    done: bool,
    line_no: u64,
    buf: Vec<u8>,
    counters: Arc<IngestCounters>,
}

impl FileRecords {
    /// Checks that `path` is a readable file; reading starts lazily.
    pub fn open(path: &Path, file_idx: u32, counters: Arc<IngestCounters>) -> Result<Self, IngestError> {
        let meta = std::fs::metadata(path).map_err(io_failure(path))?;
        if !meta.is_file() {
            return Err(IngestError::DatasetNotFound(path.display().to_string()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            file_idx,
            reader: None,
            done: false,
            line_no: 0,
            buf: Vec::new(),
            counters,
        })
    }

    fn reader(&mut self) -> Result<&mut BufReader<File>, IngestError> {
        if self.reader.is_none() {
            let file = File::open(&self.path).map_err(io_failure(&self.path))?;
            self.reader = Some(BufReader::with_capacity(READ_BUFFER_BYTES, file));
        }
        Ok(self.reader.as_mut().expect("just opened"))
    }

    fn finish(&mut self) {
        self.done = true;
        self.reader = None;
        self.buf = Vec::new();
    }
}

impl Iterator for FileRecords {
    type Item = Result<TripRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let mut buf = std::mem::take(&mut self.buf);
            buf.clear();
            let read = match self.reader() {
                Ok(reader) => reader.read_until(b'\n', &mut buf).map_err(io_failure(&self.path)),
                Err(e) => Err(e),
            };
            self.buf = buf;
            match read {
                Ok(0) => {
                    self.finish();
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.finish();
                    return Some(Err(e));
                }
            }
            self.line_no += 1;
            let mut bytes = self.buf.as_slice();
            if self.line_no == 1 {
                bytes = bytes.strip_prefix("\u{feff}".as_bytes()).unwrap_or(bytes);
            }
            let trimmed = bytes.strip_suffix(b"\n").unwrap_or(bytes);
            let trimmed = trimmed.strip_suffix(b"\r").unwrap_or(trimmed);
            if trimmed.is_empty() || trimmed[0] == b'#' {
                continue;
            }
            let parsed = match std::str::from_utf8(trimmed) {
                Ok(line) => parse_trip_record(line, self.line_no),
                Err(_) => Err(RecordError::MalformedRecord {
                    line_no: self.line_no,
                    reason: "invalid UTF-8".into(),
                }),
            };
            match parsed {
                Ok(mut record) => {
                    self.counters.record(Ok(()));
                    record.source.file = self.file_idx;
                    return Some(Ok(record));
                }
                Err(e) => {
                    tracing::trace!(path = %self.path.display(), "{e}");
                    self.counters.record(Err(e.reason()));
                }
            }
        }
    }
}

/// Sequential stream over every file of a dataset, in file then line order.
pub struct DatasetStream {
    files: std::vec::IntoIter<FileRecords>,
    current: Option<FileRecords>,
    counters: Arc<IngestCounters>,
}

impl DatasetStream {
    /// Counts so far; complete once the stream is exhausted.
    pub fn report(&self) -> IngestReport {
        self.counters.report()
    }
}

impl Iterator for DatasetStream {
    type Item = Result<TripRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.current.as_mut()?.next() {
                return Some(item);
            }
            self.current = self.files.next();
        }
    }
}

pub fn read_dataset(dataset: &Dataset) -> Result<DatasetStream, IngestError> {
    let counters = Arc::new(IngestCounters::default());
    let mut files = dataset.open_files(&counters)?.into_iter();
    let current = files.next();
    Ok(DatasetStream {
        files,
        current,
        counters,
    })
}
