//! Corridor transit extraction and the statistics MapReduce job.
//!
//! A transit is a start-gantry passage paired with the earliest later
//! passage of the same corridor's end gantry. Matching is greedy and
//! non-overlapping: after a match, scanning resumes past the end passage.
//! Statistics are binned by the start passage's date and hour.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{NaiveDateTime, Timelike};
use gantryflow_mr::{run_job, BoxError, Emitter, JobConfig, JobError, JobSpec, Split};
use thiserror::Error;

use crate::corridor::Corridor;
use crate::cube::{CountSum, CubeMetadata, DiscardCounts, StatKey, StatsCube};
use crate::ingest::{Dataset, GantryPassage, IngestCounters, IngestError, TripRecord};
use crate::time::DateRange;
use crate::vehicle::VehicleType;

/// Three hours: far above congested transit times on a ~23 km corridor,
/// but short enough to drop trips that stop over at a service area.
pub const DEFAULT_MAX_TRAVEL_SECONDS: u64 = 10_800;

#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    pub corridors: Vec<Corridor>,
    pub max_travel_seconds: u64,
    /// Require the passages between start and end to stay on the corridor's
    /// freeway and bearing and move strictly toward the end gantry.
    pub strict_path: bool,
    /// Keep only transits whose start date falls in this range.
    pub date_filter: Option<DateRange>,
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Engine(JobError),
}

impl From<JobError> for ExtractionError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::InputFailure { source, split, record } => match source.downcast::<IngestError>() {
                Ok(ingest) => ExtractionError::Ingest(*ingest),
                Err(source) => ExtractionError::Engine(JobError::InputFailure { split, record, source }),
            },
            other => ExtractionError::Engine(other),
        }
    }
}

impl ExtractionConfig {
    pub fn new(corridors: Vec<Corridor>) -> Self {
        Self {
            corridors,
            max_travel_seconds: DEFAULT_MAX_TRAVEL_SECONDS,
            strict_path: false,
            date_filter: None,
        }
    }

    pub fn validate(&self) -> Result<(), ExtractionError> {
        if self.corridors.is_empty() {
            return Err(ExtractionError::InvalidConfig("no corridors selected".into()));
        }
        if self.max_travel_seconds == 0 {
            return Err(ExtractionError::InvalidConfig("max_travel_seconds must be > 0".into()));
        }
        for c in &self.corridors {
            c.validate()
                .map_err(|e| ExtractionError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitObservation {
    pub corridor_id: String,
    pub vehicle_type: VehicleType,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub travel_seconds: u64,
}

impl TransitObservation {
    pub fn stat_key(&self) -> StatKey {
        StatKey {
            corridor_id: self.corridor_id.clone(),
            date: self.start_time.date(),
            hour: self.start_time.hour() as u8,
            vehicle_type: self.vehicle_type,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transits {
    pub observations: Vec<TransitObservation>,
    pub discarded: DiscardCounts,
}

fn follows_path(corridor: &Corridor, passages: &[GantryPassage]) -> bool {
    let descending = corridor.descending();
    passages.iter().all(|p| {
        p.gantry.freeway() == corridor.freeway && p.gantry.bearing() == corridor.bearing
    }) && passages.windows(2).all(|w| {
        let (a, b) = (w[0].gantry.mileage(), w[1].gantry.mileage());
        if descending {
            b < a
        } else {
            b > a
        }
    })
}

/// Every corridor traversal in `trip`, after dropping outliers, off-path
/// traversals (strict mode) and start dates outside the filter.
pub fn extract_transits(trip: &TripRecord, config: &ExtractionConfig) -> Transits {
    let mut out = Transits::default();
    let passages = &trip.passages;
    for corridor in &config.corridors {
        let mut i = 0;
        while i < passages.len() {
            if passages[i].gantry != corridor.start_gantry {
                i += 1;
                continue;
            }
            let Some(offset) = passages[i + 1..]
                .iter()
                .position(|p| p.gantry == corridor.end_gantry)
            else {
                break;
            };
            let j = i + 1 + offset;
            let (start, end) = (&passages[i], &passages[j]);
            let travel = (end.timestamp - start.timestamp).num_seconds();
            if travel <= 0 || travel as u64 > config.max_travel_seconds {
                out.discarded.outliers += 1;
            } else if config.strict_path && !follows_path(corridor, &passages[i..=j]) {
                out.discarded.off_path += 1;
            } else if config
                .date_filter
                .is_some_and(|r| !r.contains(start.timestamp.date()))
            {
                out.discarded.out_of_range += 1;
            } else {
                out.observations.push(TransitObservation {
                    corridor_id: corridor.id.clone(),
                    vehicle_type: trip.vehicle_type,
                    start_time: start.timestamp,
                    end_time: end.timestamp,
                    travel_seconds: travel as u64,
                });
            }
            i = j + 1;
        }
    }
    out
}

/// Map side of the statistics job: one `(key, (1, seconds))` pair per
/// transit.
pub fn transit_map(trip: &TripRecord, config: &ExtractionConfig) -> Vec<(StatKey, CountSum)> {
    extract_transits(trip, config)
        .observations
        .iter()
        .map(|o| (o.stat_key(), CountSum::one(o.travel_seconds)))
        .collect()
}

pub fn transit_reduce(_key: &StatKey, values: &[CountSum]) -> CountSum {
    values.iter().copied().sum()
}

#[derive(Debug, Default)]
struct DiscardCounters {
    outliers: AtomicU64,
    off_path: AtomicU64,
    out_of_range: AtomicU64,
}

impl DiscardCounters {
    fn add(&self, d: &DiscardCounts) {
        self.outliers.fetch_add(d.outliers, Ordering::Relaxed);
        self.off_path.fetch_add(d.off_path, Ordering::Relaxed);
        self.out_of_range.fetch_add(d.out_of_range, Ordering::Relaxed);
    }

    fn snapshot(&self) -> DiscardCounts {
        DiscardCounts {
            outliers: self.outliers.load(Ordering::Relaxed),
            off_path: self.off_path.load(Ordering::Relaxed),
            out_of_range: self.out_of_range.load(Ordering::Relaxed),
        }
    }
}

/// Runs the statistics job over every file of `dataset`, one split per
/// file, and assembles the cube with ingest and discard counters.
pub fn run_extraction(
    dataset: &Dataset,
    config: &ExtractionConfig,
    engine: &JobConfig,
) -> Result<StatsCube, ExtractionError> {
    config.validate()?;
    let counters = Arc::new(IngestCounters::default());
    let splits: Vec<Split<'static, TripRecord>> = dataset
        .open_files(&counters)?
        .into_iter()
        .map(|f| Box::new(f.map(|r| r.map_err(BoxError::from))) as Split<'static, TripRecord>)
        .collect();

    let discards = DiscardCounters::default();
    let spec = JobSpec::new(
        splits,
        |trip: TripRecord, emit: &mut Emitter<StatKey, CountSum>| -> Result<(), BoxError> {
            let transits = extract_transits(&trip, config);
            discards.add(&transits.discarded);
            for o in &transits.observations {
                emit.emit(o.stat_key(), CountSum::one(o.travel_seconds));
            }
            Ok(())
        },
        |key: &StatKey, values: Vec<CountSum>| -> Result<CountSum, BoxError> {
            Ok(transit_reduce(key, &values))
        },
        engine.clone(),
    );
    let result = run_job(spec)?;

    let mut metadata = CubeMetadata::new(
        dataset.id.clone(),
        config.corridors.iter().map(|c| c.id.clone()),
    );
    metadata.date_filter = config.date_filter;
    metadata.ingest = counters.report();
    metadata.discarded = discards.snapshot();
    tracing::info!(
        dataset = %dataset.id,
        records = result.counters.records_mapped,
        transits = result.counters.pairs_emitted,
        cells = result.counters.keys_reduced,
        rejected = metadata.ingest.rejected.total(),
        outliers = metadata.discarded.outliers,
        "extraction finished"
    );
    Ok(StatsCube::from_cells(metadata, result.output))
}
