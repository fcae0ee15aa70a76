//! Deterministic synthetic trip logs with exact ground truth.
//!
//! Arrivals are Poisson per (corridor, day, hour); each arrival departs at a
//! uniform second within the hour with a lognormal corridor travel time.
//! The ground truth is tallied from the records actually written, so it
//! does not depend on how closely the draws follow the configured model.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::{Corridor, CorridorError, CorridorRegistry};
use crate::cube::{CountSum, CubeMetadata, StatKey, StatsCube};
use crate::extraction::DEFAULT_MAX_TRAVEL_SECONDS;
use crate::gantry::{GantryId, Tenths};
use crate::ingest::{
    format_trip_record, Dataset, GantryPassage, IngestReport, RecordSource, RejectCounts, RejectReason, TripRecord,
    YearMonth, HEADER_LINE,
};
use crate::time::DateRange;
use crate::vehicle::VehicleType;

pub const SEPTEMBER_2018_JSON: &str = include_str!("../data/september-2018.json");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.json";

const MIX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorTraffic {
    pub corridor: String,
    /// Mean arrivals per hour of day, before weekday scaling.
    pub hourly_rates: [f64; 24],
    /// Multiplier per weekday, Monday first.
    #[serde(default = "unit_scale")]
    pub weekday_scale: [f64; 7],
    /// Mean corridor travel time per departure hour.
    pub mean_minutes: [f64; 24],
    /// Lognormal shape parameter.
    pub sigma: f64,
}

fn unit_scale() -> [f64; 7] {
    [1.0; 7]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleShare {
    pub code: u16,
    pub p: f64,
}

fn default_max_travel() -> u64 {
    DEFAULT_MAX_TRAVEL_SECONDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub dataset_id: String,
    pub dates: DateRange,
    pub corridors: Vec<CorridorTraffic>,
    pub vehicle_mix: Vec<VehicleShare>,
    /// Fraction of trips written as a rejected line instead.
    #[serde(default)]
    pub malformed_fraction: f64,
    /// Fraction of trips whose log stops before the corridor end gantry.
    #[serde(default)]
    pub incomplete_fraction: f64,
    /// Probability of extra passages before and after the corridor.
    #[serde(default)]
    pub through_fraction: f64,
    /// Travel times are clamped to `1..=max_travel_seconds`.
    #[serde(default = "default_max_travel")]
    pub max_travel_seconds: u64,
    /// Corridors referenced by `corridors` beyond the built-ins.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corridor_definitions: Vec<Corridor>,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corridor(#[from] CorridorError),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        source: std::io::Error,
    },
    #[error("reading generator config: {0}")]
    Parse(#[from] serde_json::Error),
}

impl GenConfig {
    pub fn from_json(text: &str) -> Result<Self, GenError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Checks the config and resolves its corridors.
    pub fn resolve(&self) -> Result<Vec<Corridor>, GenError> {
        let bad = |msg: String| Err(GenError::InvalidConfig(msg));
        if self.dates.from > self.dates.to {
            return bad(format!("date range {} > {}", self.dates.from, self.dates.to));
        }
        if self.dataset_id.is_empty() {
            return bad("empty dataset id".into());
        }
        for (name, f) in [
            ("malformed_fraction", self.malformed_fraction),
            ("incomplete_fraction", self.incomplete_fraction),
            ("through_fraction", self.through_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} {f} not in [0, 1]"));
            }
        }
        if self.max_travel_seconds == 0 {
            return bad("max_travel_seconds must be positive".into());
        }
        if self.vehicle_mix.is_empty() {
            return bad("empty vehicle mix".into());
        }
        if self.vehicle_mix.iter().any(|s| !(s.p >= 0.0 && s.p.is_finite())) {
            return bad("vehicle mix probabilities must be finite and non-negative".into());
        }
        let total: f64 = self.vehicle_mix.iter().map(|s| s.p).sum();
        if (total - 1.0).abs() > MIX_TOLERANCE {
            return bad(format!("vehicle mix sums to {total}, not 1"));
        }

        let mut registry = CorridorRegistry::builtin();
        for c in &self.corridor_definitions {
            registry.add(c.clone())?;
        }
        let mut routes = BTreeSet::new();
        let mut resolved = Vec::with_capacity(self.corridors.len());
        for t in &self.corridors {
            let c = registry.get(&t.corridor)?;
            if !routes.insert((c.freeway.clone(), c.bearing)) {
                return bad(format!("corridor {} shares its freeway direction with another", c.id));
            }
            if t.hourly_rates.iter().chain(&t.weekday_scale).any(|r| !(*r >= 0.0 && r.is_finite())) {
                return bad(format!("{}: rates and scales must be finite and non-negative", c.id));
            }
            if t.mean_minutes.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return bad(format!("{}: mean minutes must be positive", c.id));
            }
            if !(t.sigma >= 0.0 && t.sigma.is_finite()) {
                return bad(format!("{}: sigma must be finite and non-negative", c.id));
            }
            resolved.push(c.clone());
        }
        Ok(resolved)
    }
}

/// Canned month: 2018-09-01..30 on the four built-in corridors, northbound
/// peaking at 10:00 and southbound at 16:00, weekend rates ×1.5, 70% cars
/// and hourly mean travel times between 13 and 17.5 minutes.
pub fn september_2018_profile() -> GenConfig {
    GenConfig::from_json(SEPTEMBER_2018_JSON).expect("bundled profile is valid")
}

/// Small random config over a few days of September 2018, with all noise
/// knobs off. Meant for property tests against the ground truth.
pub fn random_config(seed: u64) -> GenConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = ["NF01-N", "NF01-S", "NF03-N", "NF03-S"];
    let n = rng.random_range(1..=ids.len());
    let mut picked: Vec<&str> = ids.to_vec();
    picked.shuffle(&mut rng);
    picked.truncate(n);
    let corridors = picked
        .into_iter()
        .map(|id| CorridorTraffic {
            corridor: id.to_string(),
            hourly_rates: std::array::from_fn(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..12.0)
                }
            }),
            weekday_scale: std::array::from_fn(|_| rng.random_range(0.5..2.0)),
            mean_minutes: std::array::from_fn(|_| rng.random_range(5.0..40.0)),
            sigma: rng.random_range(0.0..0.8),
        })
        .collect();
    let mut weights: Vec<f64> = VehicleType::KNOWN.iter().map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut vehicle_mix: Vec<VehicleShare> = VehicleType::KNOWN
        .iter()
        .zip(&weights)
        .map(|(vt, p)| VehicleShare { code: vt.0, p: *p })
        .collect();
    // Push rounding error onto the last share so the sum is exact enough.
    let drift = 1.0 - vehicle_mix.iter().map(|s| s.p).sum::<f64>();
    vehicle_mix.last_mut().expect("non-empty").p += drift;

    let from = NaiveDate::from_ymd_opt(2018, 9, 1).expect("valid") + Duration::days(rng.random_range(0..20));
    let to = from + Duration::days(rng.random_range(0..5));
    GenConfig {
        seed: rng.random(),
        dataset_id: format!("random-{seed}"),
        dates: DateRange { from, to },
        corridors,
        vehicle_mix,
        malformed_fraction: 0.0,
        incomplete_fraction: 0.0,
        through_fraction: rng.random_range(0.0..1.0),
        max_travel_seconds: DEFAULT_MAX_TRAVEL_SECONDS,
        corridor_definitions: Vec::new(),
    }
}

/// Tallies of the written records, per outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    /// Exact cells and metadata an extraction over the whole dataset, with
    /// no date filter, should reproduce.
    pub cube: StatsCube,
    pub complete_trips: u64,
    pub incomplete_trips: u64,
    pub rejected: RejectCounts,
}

impl GroundTruth {
    pub fn trips(&self) -> u64 {
        self.complete_trips + self.incomplete_trips + self.rejected.total()
    }
}

#[derive(Debug)]
pub struct Generated {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    pub manifest_path: PathBuf,
    pub truth_path: PathBuf,
}

struct DayOutput {
    text: String,
    cells: Vec<(StatKey, CountSum)>,
    complete: u64,
    incomplete: u64,
    rejected: RejectCounts,
}

struct Emitted {
    first: NaiveDateTime,
    seq: usize,
    line: String,
}

/// Writes one `tdcs_YYYYMMDD.csv` per day plus `manifest.json` and
/// `truth.json` into `out_dir`. Output bytes depend only on the config.
pub fn generate(config: &GenConfig, out_dir: &Path) -> Result<Generated, GenError> {
    let corridors = config.resolve()?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| GenError::IoFailure { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;

    let mix = WeightedIndex::new(config.vehicle_mix.iter().map(|s| s.p))
        .map_err(|e| GenError::InvalidConfig(format!("vehicle mix: {e}")))?;
    let days: Vec<NaiveDate> = config.dates.days().collect();
    let outputs: Vec<DayOutput> = days
        .par_iter()
        .enumerate()
        .map(|(idx, day)| generate_day(config, &corridors, &mix, idx as u64, *day))
        .collect();

    let mut files = Vec::with_capacity(days.len());
    let mut metadata = CubeMetadata::new(config.dataset_id.clone(), corridors.iter().map(|c| c.id.clone()));
    let mut cube_cells = Vec::new();
    let (mut complete, mut incomplete, mut rejected) = (0, 0, RejectCounts::default());
    for (day, out) in days.iter().zip(outputs) {
        let path = out_dir.join(format!("tdcs_{}.csv", day.format("%Y%m%d")));
        fs::write(&path, out.text.as_bytes()).map_err(io(&path))?;
        files.push(path);
        cube_cells.extend(out.cells);
        complete += out.complete;
        incomplete += out.incomplete;
        rejected.malformed += out.rejected.malformed;
        rejected.non_monotonic += out.rejected.non_monotonic;
        rejected.bad_gantry_id += out.rejected.bad_gantry_id;
    }
    metadata.ingest = IngestReport {
        records_ok: complete + incomplete,
        rejected,
    };
    let cube = StatsCube::from_cells(metadata, cube_cells);

    let month = |d: NaiveDate| YearMonth {
        year: d.year(),
        month: d.month(),
    };
    let dataset = Dataset {
        id: config.dataset_id.clone(),
        files,
        months: (month(config.dates.from), month(config.dates.to)),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut manifest = serde_json::to_string_pretty(&dataset.to_manifest(out_dir))?;
    manifest.push('\n');
    fs::write(&manifest_path, manifest).map_err(io(&manifest_path))?;
    let truth_path = out_dir.join(TRUTH_FILE);
    fs::write(&truth_path, cube.to_json()).map_err(io(&truth_path))?;

    Ok(Generated {
        dataset,
        truth: GroundTruth {
            cube,
            complete_trips: complete,
            incomplete_trips: incomplete,
            rejected,
        },
        manifest_path,
        truth_path,
    })
}

fn generate_day(
    config: &GenConfig,
    corridors: &[Corridor],
    mix: &WeightedIndex<f64>,
    file_idx: u64,
    day: NaiveDate,
) -> DayOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(file_idx);
    let weekday = day.weekday().num_days_from_monday() as usize;
    let midnight = day.and_hms_opt(0, 0, 0).expect("midnight exists");

    let mut out = DayOutput {
        text: String::new(),
        cells: Vec::new(),
        complete: 0,
        incomplete: 0,
        rejected: RejectCounts::default(),
    };
    let mut emitted: Vec<Emitted> = Vec::new();

    for (corridor, traffic) in corridors.iter().zip(&config.corridors) {
        let path = corridor.path();
        for hour in 0..24u8 {
            let lambda = traffic.hourly_rates[hour as usize] * traffic.weekday_scale[weekday];
            let arrivals = if lambda > 0.0 {
                Poisson::new(lambda).expect("positive finite rate").sample(&mut rng) as u64
            } else {
                0
            };
            let mean_s = traffic.mean_minutes[hour as usize] * 60.0;
            let sigma = traffic.sigma;
            let travel_dist =
                LogNormal::new(mean_s.ln() - sigma * sigma / 2.0, sigma).expect("validated parameters");

            for _ in 0..arrivals {
                let vehicle_type = VehicleType(config.vehicle_mix[mix.sample(&mut rng)].code);
                let start = midnight + Duration::seconds(i64::from(hour) * 3600 + rng.random_range(0..3600));
                let travel = (travel_dist.sample(&mut rng).round() as u64).clamp(1, config.max_travel_seconds);
                let upstream = rng.random_bool(config.through_fraction);
                let downstream = rng.random_bool(config.through_fraction);
                let incomplete = rng.random_bool(config.incomplete_fraction);
                let malformed = rng.random_bool(config.malformed_fraction);
                let malformed_kind = rng.random_range(0..3u8);

                let mut passages = Vec::with_capacity(path.len() + 4);
                if upstream {
                    passages.extend(outside_passages(corridor, &mut rng, start, true));
                }
                passages.extend(corridor_passages(corridor, &path, start, travel));
                if downstream {
                    passages.extend(outside_passages(corridor, &mut rng, start + secs(travel), false));
                }
                let mut record = trip_record(vehicle_type, passages, true);
                let first = record.origin.timestamp;

                let line = if malformed {
                    let (line, reason) = corrupt(record, malformed_kind);
                    out.rejected.bump(reason);
                    line
                } else if incomplete {
                    let end = record
                        .passages
                        .iter()
                        .position(|p| p.gantry == corridor.end_gantry)
                        .expect("path ends at the end gantry");
                    record.passages.truncate(end);
                    out.incomplete += 1;
                    format_trip_record(&trip_record(vehicle_type, record.passages, false))
                } else {
                    out.complete += 1;
                    out.cells.push((
                        StatKey {
                            corridor_id: corridor.id.clone(),
                            date: day,
                            hour,
                            vehicle_type,
                        },
                        CountSum::one(travel),
                    ));
                    format_trip_record(&record)
                };
                emitted.push(Emitted {
                    first,
                    seq: emitted.len(),
                    line,
                });
            }
        }
    }

    emitted.sort_by_key(|e| (e.first, e.seq));
    out.text.reserve(emitted.iter().map(|e| e.line.len() + 1).sum::<usize>() + HEADER_LINE.len() + 1);
    out.text.push_str(HEADER_LINE);
    out.text.push('\n');
    for e in emitted {
        out.text.push_str(&e.line);
        out.text.push('\n');
    }
    out
}

fn secs(s: u64) -> Duration {
    Duration::seconds(s as i64)
}

/// Passages along `path` with times interpolated by mileage.
fn corridor_passages<'a>(
    corridor: &Corridor,
    path: &'a [GantryId],
    start: NaiveDateTime,
    travel: u64,
) -> impl Iterator<Item = GantryPassage> + 'a {
    let origin = corridor.start_gantry.mileage();
    let span = u64::from(corridor.mileage_span().0.max(1));
    path.iter().map(move |g| {
        let along = u64::from(g.mileage().abs_diff(origin).0);
        GantryPassage {
            gantry: *g,
            timestamp: start + secs(travel * along / span),
        }
    })
}

/// One or two passages on the same freeway direction just before the
/// corridor start (`before`) or after its end, roughly at 90 km/h.
fn outside_passages(
    corridor: &Corridor,
    rng: &mut ChaCha8Rng,
    anchor: NaiveDateTime,
    before: bool,
) -> Vec<GantryPassage> {
    let count = rng.random_range(1..=2u32);
    let (edge, toward_higher) = if before {
        (corridor.start_gantry.mileage().0, corridor.descending())
    } else {
        (corridor.end_gantry.mileage().0, !corridor.descending())
    };
    let mut out = Vec::new();
    let mut offset = 0u32;
    for _ in 0..count {
        offset += rng.random_range(20..=80);
        let mileage = if toward_higher {
            edge + offset
        } else if edge > offset {
            edge - offset
        } else {
            break;
        };
        let gantry = GantryId::new(&corridor.freeway, Tenths(mileage), corridor.bearing).expect("valid route");
        let dt = secs(u64::from(offset) * 4 + rng.random_range(0..30));
        out.push(GantryPassage {
            gantry,
            timestamp: if before { anchor - dt } else { anchor + dt },
        });
    }
    if before {
        out.reverse();
    }
    out
}

fn trip_record(vehicle_type: VehicleType, passages: Vec<GantryPassage>, trip_end: bool) -> TripRecord {
    let origin = *passages.first().expect("at least one passage");
    let destination = *passages.last().expect("at least one passage");
    TripRecord {
        vehicle_type,
        origin,
        destination,
        trip_length_km: origin.gantry.mileage().abs_diff(destination.gantry.mileage()),
        trip_end,
        passages,
        source: RecordSource::default(),
    }
}

/// A line that ingestion rejects for exactly one reason.
fn corrupt(mut record: TripRecord, kind: u8) -> (String, RejectReason) {
    match kind {
        0 => {
            let line = format_trip_record(&record);
            let (head, _) = line.rsplit_once(',').expect("eight fields");
            (head.to_string(), RejectReason::Malformed)
        }
        1 => {
            record.passages.reverse();
            (format_trip_record(&record), RejectReason::NonMonotonic)
        }
        _ => {
            let line = format_trip_record(&record);
            let mut fields: Vec<&str> = line.split(',').collect();
            let bad = format!("{}-{}X", record.origin.gantry.freeway(), record.origin.gantry.mileage());
            fields[2] = &bad;
            (fields.join(","), RejectReason::BadGantryId)
        }
    }
}
