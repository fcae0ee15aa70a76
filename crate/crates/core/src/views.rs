//! Read-only projections of a [`StatsCube`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::cube::{CountSum, StatKey, StatsCube};
use crate::time::{weekday_name, DateRange, WEEKDAYS};
use crate::vehicle::VehicleType;

pub const DEFAULT_MIN_SAMPLES: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ViewError {
    #[error("unknown corridor {0}")]
    UnknownCorridor(String),
    #[error("no hour in the window has enough samples")]
    NoData,
    #[error("invalid view parameter: {0}")]
    InvalidParameter(String),
}

/// Inclusive hour window `start..=end` within one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HourWindow {
    pub start: u8,
    pub end: u8,
}

impl HourWindow {
    pub const FULL_DAY: HourWindow = HourWindow { start: 0, end: 23 };

    pub fn new(start: u8, end: u8) -> Result<Self, ViewError> {
        if start > end || end > 23 {
            return Err(ViewError::InvalidParameter(format!(
                "hour window {start}-{end} must satisfy 0 <= start <= end <= 23"
            )));
        }
        Ok(Self { start, end })
    }

    /// Parses `"6-20"` or a single hour `"8"`.
    pub fn parse(s: &str) -> Result<Self, ViewError> {
        let bad = || ViewError::InvalidParameter(format!("hour window {s:?} is not H or H-H"));
        let (a, b) = s.split_once('-').unwrap_or((s, s));
        let a: u8 = a.trim().parse().map_err(|_| bad())?;
        let b: u8 = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b)
    }

    pub fn hours(self) -> impl Iterator<Item = u8> {
        self.start..=self.end
    }
}

/// How calendar dates map onto weekday rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum DayGrouping {
    #[default]
    Weekday,
    /// Listed holidays are counted in the Sunday row.
    HolidaysAsSunday(BTreeSet<NaiveDate>),
}

impl DayGrouping {
    /// Public holidays in the bundled scenario month.
    pub fn default_holidays() -> BTreeSet<NaiveDate> {
        [NaiveDate::from_ymd_opt(2018, 9, 24).expect("valid date")].into()
    }

    pub fn row_of(&self, date: NaiveDate) -> Weekday {
        match self {
            DayGrouping::HolidaysAsSunday(h) if h.contains(&date) => Weekday::Sun,
            _ => date.weekday(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViewFilter {
    pub vehicle_types: Option<BTreeSet<VehicleType>>,
    pub dates: Option<DateRange>,
    pub grouping: DayGrouping,
}

impl ViewFilter {
    fn accepts(&self, key: &StatKey) -> bool {
        self.vehicle_types
            .as_ref()
            .is_none_or(|set| set.contains(&key.vehicle_type))
            && self.dates.is_none_or(|r| r.contains(key.date))
    }
}

fn row_index(day: Weekday) -> usize {
    day.num_days_from_monday() as usize
}

fn check_corridor(cube: &StatsCube, corridor_id: &str) -> Result<(), ViewError> {
    if cube.has_corridor(corridor_id) {
        Ok(())
    } else {
        Err(ViewError::UnknownCorridor(corridor_id.to_string()))
    }
}

fn filtered<'a>(
    cube: &'a StatsCube,
    corridor_id: &'a str,
    filter: &'a ViewFilter,
) -> impl Iterator<Item = (&'a StatKey, &'a CountSum)> + 'a {
    cube.corridor_cells(corridor_id).filter(move |(k, _)| filter.accepts(k))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HourlyProfile {
    pub corridor_id: String,
    pub vehicle_type: Option<VehicleType>,
    pub counts: [u64; 24],
}

impl HourlyProfile {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Busiest hour; the earliest on ties.
    pub fn peak_hour(&self) -> u8 {
        let mut best = 0;
        for h in 1..24 {
            if self.counts[h] > self.counts[best] {
                best = h;
            }
        }
        best as u8
    }
}

pub fn hourly_distribution(
    cube: &StatsCube,
    corridor_id: &str,
    filter: &ViewFilter,
) -> Result<HourlyProfile, ViewError> {
    check_corridor(cube, corridor_id)?;
    let mut counts = [0u64; 24];
    for (k, v) in filtered(cube, corridor_id, filter) {
        counts[k.hour as usize] += v.count;
    }
    let vehicle_type = match &filter.vehicle_types {
        Some(set) if set.len() == 1 => set.iter().next().copied(),
        _ => None,
    };
    Ok(HourlyProfile {
        corridor_id: corridor_id.to_string(),
        vehicle_type,
        counts,
    })
}

fn row_labels() -> [&'static str; 7] {
    WEEKDAYS.map(weekday_name)
}

/// Counts on a Mon..Sun × 0..23 grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekHourMatrix {
    pub corridor_id: String,
    pub values: [[u64; 24]; 7],
}

impl Serialize for WeekHourMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("WeekHourMatrix", 3)?;
        st.serialize_field("corridor_id", &self.corridor_id)?;
        st.serialize_field("rows", &row_labels())?;
        st.serialize_field("values", &self.values)?;
        st.end()
    }
}

impl WeekHourMatrix {
    pub fn get(&self, day: Weekday, hour: u8) -> u64 {
        self.values[row_index(day)][hour as usize]
    }

    pub fn row_total(&self, day: Weekday) -> u64 {
        self.values[row_index(day)].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(|d, h| self.values[d][h].to_string())
    }
}

fn matrix_csv(cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::from("weekday");
    for h in 0..24 {
        let _ = write!(out, ",{h}");
    }
    out.push('\n');
    for (d, day) in WEEKDAYS.iter().enumerate() {
        out.push_str(weekday_name(*day));
        for h in 0..24 {
            out.push(',');
            out.push_str(&cell(d, h));
        }
        out.push('\n');
    }
    out
}

pub fn weekday_hour_counts(
    cube: &StatsCube,
    corridor_id: &str,
    filter: &ViewFilter,
) -> Result<WeekHourMatrix, ViewError> {
    check_corridor(cube, corridor_id)?;
    let mut values = [[0u64; 24]; 7];
    for (k, v) in filtered(cube, corridor_id, filter) {
        values[row_index(filter.grouping.row_of(k.date))][k.hour as usize] += v.count;
    }
    Ok(WeekHourMatrix {
        corridor_id: corridor_id.to_string(),
        values,
    })
}

/// One hourly profile per vehicle type present, ordered by code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VehicleTypeProfiles {
    pub corridor_id: String,
    pub profiles: Vec<HourlyProfile>,
}

impl VehicleTypeProfiles {
    pub fn get(&self, vt: VehicleType) -> Option<&HourlyProfile> {
        self.profiles.iter().find(|p| p.vehicle_type == Some(vt))
    }

    pub fn as_map(&self) -> BTreeMap<VehicleType, &HourlyProfile> {
        self.profiles
            .iter()
            .filter_map(|p| p.vehicle_type.map(|vt| (vt, p)))
            .collect()
    }
}

pub fn vehicle_type_counts(
    cube: &StatsCube,
    corridor_id: &str,
    filter: &ViewFilter,
) -> Result<VehicleTypeProfiles, ViewError> {
    check_corridor(cube, corridor_id)?;
    let mut by_type: BTreeMap<VehicleType, [u64; 24]> = BTreeMap::new();
    for (k, v) in filtered(cube, corridor_id, filter) {
        by_type.entry(k.vehicle_type).or_insert([0; 24])[k.hour as usize] += v.count;
    }
    Ok(VehicleTypeProfiles {
        corridor_id: corridor_id.to_string(),
        profiles: by_type
            .into_iter()
            .map(|(vt, counts)| HourlyProfile {
                corridor_id: corridor_id.to_string(),
                vehicle_type: Some(vt),
                counts,
            })
            .collect(),
    })
}

/// Mean travel time in tenths of a minute, rounded half up:
/// `round(sum / count / 60 * 10)` computed in integers.
pub fn mean_tenths_of_minute(cs: CountSum) -> Option<u64> {
    if cs.count == 0 {
        return None;
    }
    let denom = u128::from(cs.count) * 6;
    let num = u128::from(cs.sum_travel_seconds);
    Some(((2 * num + denom) / (2 * denom)) as u64)
}

/// Decimal minutes at 0.1 resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Minutes(pub u64);

impl Minutes {
    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }
}

impl Serialize for Minutes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl std::fmt::Display for Minutes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvgTimeProfile {
    pub corridor_id: String,
    pub min_samples: u64,
    /// Mon..Sun × 0..23; `None` where fewer than `min_samples` transits.
    pub minutes: [[Option<Minutes>; 24]; 7],
    pub samples: [[u64; 24]; 7],
}

impl Serialize for AvgTimeProfile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("AvgTimeProfile", 5)?;
        st.serialize_field("corridor_id", &self.corridor_id)?;
        st.serialize_field("min_samples", &self.min_samples)?;
        st.serialize_field("rows", &row_labels())?;
        st.serialize_field("minutes", &self.minutes)?;
        st.serialize_field("samples", &self.samples)?;
        st.end()
    }
}

impl AvgTimeProfile {
    pub fn get(&self, day: Weekday, hour: u8) -> Option<Minutes> {
        self.minutes[row_index(day)][hour as usize]
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(|d, h| self.minutes[d][h].map(|m| m.to_string()).unwrap_or_default())
    }
}

pub fn avg_travel_time(
    cube: &StatsCube,
    corridor_id: &str,
    min_samples: u64,
    filter: &ViewFilter,
) -> Result<AvgTimeProfile, ViewError> {
    if min_samples == 0 {
        return Err(ViewError::InvalidParameter("min_samples must be >= 1".into()));
    }
    check_corridor(cube, corridor_id)?;
    let mut acc = [[CountSum::ZERO; 24]; 7];
    for (k, v) in filtered(cube, corridor_id, filter) {
        acc[row_index(filter.grouping.row_of(k.date))][k.hour as usize] += *v;
    }
    let mut minutes = [[None; 24]; 7];
    let mut samples = [[0; 24]; 7];
    for d in 0..7 {
        for h in 0..24 {
            samples[d][h] = acc[d][h].count;
            if acc[d][h].count >= min_samples {
                minutes[d][h] = mean_tenths_of_minute(acc[d][h]).map(Minutes);
            }
        }
    }
    Ok(AvgTimeProfile {
        corridor_id: corridor_id.to_string(),
        min_samples,
        minutes,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BestDeparture {
    pub hour: u8,
    pub minutes: Minutes,
}

/// Hour in `window` with the lowest mean travel time on `weekday`, among
/// hours with at least `min_samples` transits. Ties go to the earliest hour.
pub fn best_departure_from_profile(
    profile: &AvgTimeProfile,
    weekday: Weekday,
    window: HourWindow,
) -> Result<BestDeparture, ViewError> {
    window
        .hours()
        .filter_map(|h| profile.get(weekday, h).map(|m| (m, h)))
        .min()
        .map(|(minutes, hour)| BestDeparture { hour, minutes })
        .ok_or(ViewError::NoData)
}

pub fn best_departure(
    cube: &StatsCube,
    corridor_id: &str,
    weekday: Weekday,
    window: HourWindow,
    min_samples: u64,
    filter: &ViewFilter,
) -> Result<BestDeparture, ViewError> {
    let profile = avg_travel_time(cube, corridor_id, min_samples, filter)?;
    best_departure_from_profile(&profile, weekday, window)
}

/// A best-departure answer together with the question it answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BestDepartureReport {
    pub corridor_id: String,
    pub weekday: &'static str,
    pub window: HourWindow,
    pub min_samples: u64,
    pub hour: u8,
    pub minutes: Minutes,
}

pub fn best_departure_report(
    cube: &StatsCube,
    corridor_id: &str,
    weekday: Weekday,
    window: HourWindow,
    min_samples: u64,
    filter: &ViewFilter,
) -> Result<BestDepartureReport, ViewError> {
    let best = best_departure(cube, corridor_id, weekday, window, min_samples, filter)?;
    Ok(BestDepartureReport {
        corridor_id: corridor_id.to_string(),
        weekday: weekday_name(weekday),
        window,
        min_samples,
        hour: best.hour,
        minutes: best.minutes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Busier {
    First,
    Second,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorridorTotal {
    pub corridor_id: String,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TotalsComparison {
    pub first: CorridorTotal,
    pub second: CorridorTotal,
    pub busier: Busier,
}

pub fn compare_totals(cube: &StatsCube, corridor_a: &str, corridor_b: &str) -> Result<TotalsComparison, ViewError> {
    check_corridor(cube, corridor_a)?;
    check_corridor(cube, corridor_b)?;
    let total = |id: &str| cube.corridor_cells(id).map(|(_, v)| v.count).sum::<u64>();
    let (a, b) = (total(corridor_a), total(corridor_b));
    Ok(TotalsComparison {
        first: CorridorTotal {
            corridor_id: corridor_a.to_string(),
            total: a,
        },
        second: CorridorTotal {
            corridor_id: corridor_b.to_string(),
            total: b,
        },
        busier: match a.cmp(&b) {
            std::cmp::Ordering::Greater => Busier::First,
            std::cmp::Ordering::Less => Busier::Second,
            std::cmp::Ordering::Equal => Busier::Equal,
        },
    })
}
