//! Directed start/end gantry routes and their segment tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gantry::{Bearing, GantryId, Tenths};

/// The four Taichung corridors on freeways 01 and 03, one per direction.
pub const BUILTIN_CORRIDORS_JSON: &str = include_str!("../data/corridors.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub gantry: GantryId,
    pub distance_km: Tenths,
    pub fee_twd: Tenths,
    pub interchange_start: String,
    pub interchange_stop: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corridor {
    pub id: String,
    pub freeway: String,
    pub bearing: Bearing,
    pub start_gantry: GantryId,
    pub end_gantry: GantryId,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Error)]
pub enum CorridorError {
    #[error("corridor {0} has no segments")]
    EmptyCorridor(String),
    #[error("corridor {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate corridor id {0}")]
    Duplicate(String),
    #[error("unknown corridor {0}")]
    Unknown(String),
    #[error("reading corridor config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing corridor config: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorridorTotals {
    pub distance_km: Tenths,
    pub fee_twd: Tenths,
}

impl Corridor {
    pub fn validate(&self) -> Result<(), CorridorError> {
        let invalid = |reason: String| CorridorError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.start_gantry == self.end_gantry {
            return Err(invalid("start and end gantry are the same".into()));
        }
        let on_route = |g: &GantryId| g.freeway() == self.freeway && g.bearing() == self.bearing;
        for g in [&self.start_gantry, &self.end_gantry] {
            if !on_route(g) {
                return Err(invalid(format!("gantry {g} is not on {} {:?}", self.freeway, self.bearing)));
            }
        }
        for seg in &self.segments {
            if !on_route(&seg.gantry) {
                return Err(invalid(format!(
                    "segment gantry {} is not on {} {:?}",
                    seg.gantry, self.freeway, self.bearing
                )));
            }
            if seg.distance_km.0 == 0 {
                return Err(invalid(format!("segment {} has zero distance", seg.gantry)));
            }
        }
        Ok(())
    }

    /// Mileage moves down (`true`) or up from start to end.
    pub fn descending(&self) -> bool {
        self.end_gantry.mileage() < self.start_gantry.mileage()
    }

    /// Distance between start and end gantry by mileage marker.
    pub fn mileage_span(&self) -> Tenths {
        self.start_gantry.mileage().abs_diff(self.end_gantry.mileage())
    }

    /// Interchange names where the route begins and ends, taken from the
    /// first and last segment in travel order.
    pub fn interchange_endpoints(&self) -> Option<(&str, &str)> {
        let first = self.segments.iter().min_by_key(|s| s.gantry.mileage())?;
        let last = self.segments.iter().max_by_key(|s| s.gantry.mileage())?;
        let (first, last) = if self.descending() { (last, first) } else { (first, last) };
        Some((&first.interchange_start, &last.interchange_stop))
    }

    /// Gantries passed in travel order from start to end: the segment
    /// gantries within the span, plus the start and end gantries.
    pub fn path(&self) -> Vec<GantryId> {
        let (lo, hi) = if self.descending() {
            (self.end_gantry.mileage(), self.start_gantry.mileage())
        } else {
            (self.start_gantry.mileage(), self.end_gantry.mileage())
        };
        let mut path: Vec<GantryId> = self
            .segments
            .iter()
            .map(|s| s.gantry)
            .chain([self.start_gantry, self.end_gantry])
            .filter(|g| (lo..=hi).contains(&g.mileage()))
            .collect();
        path.sort_by_key(|g| g.mileage());
        path.dedup();
        if self.descending() {
            path.reverse();
        }
        path
    }
}

/// Component-wise sums of segment distances and fees.
pub fn corridor_totals(corridor: &Corridor) -> Result<CorridorTotals, CorridorError> {
    if corridor.segments.is_empty() {
        return Err(CorridorError::EmptyCorridor(corridor.id.clone()));
    }
    Ok(CorridorTotals {
        distance_km: corridor.segments.iter().map(|s| s.distance_km).sum(),
        fee_twd: corridor.segments.iter().map(|s| s.fee_twd).sum(),
    })
}

pub fn builtin_corridors() -> Vec<Corridor> {
    parse_corridors(BUILTIN_CORRIDORS_JSON).expect("bundled corridor file is valid")
}

/// Parses and validates a JSON array of corridors.
pub fn parse_corridors(json: &str) -> Result<Vec<Corridor>, CorridorError> {
    let corridors: Vec<Corridor> = serde_json::from_str(json)?;
    for c in &corridors {
        c.validate()?;
    }
    Ok(corridors)
}

/// Corridors by id: the built-ins plus any loaded from configuration.
#[derive(Debug, Clone)]
pub struct CorridorRegistry {
    corridors: BTreeMap<String, Corridor>,
}

impl Default for CorridorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl CorridorRegistry {
    pub fn builtin() -> Self {
        let mut reg = Self {
            corridors: BTreeMap::new(),
        };
        for c in builtin_corridors() {
            reg.corridors.insert(c.id.clone(), c);
        }
        reg
    }

    pub fn add(&mut self, corridor: Corridor) -> Result<(), CorridorError> {
        corridor.validate()?;
        if self.corridors.contains_key(&corridor.id) {
            return Err(CorridorError::Duplicate(corridor.id));
        }
        self.corridors.insert(corridor.id.clone(), corridor);
        Ok(())
    }

    /// Adds every corridor from a JSON config file to the built-ins.
    pub fn with_config_file(path: &Path) -> Result<Self, CorridorError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorridorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reg = Self::builtin();
        for c in parse_corridors(&text)? {
            reg.add(c)?;
        }
        Ok(reg)
    }

    pub fn get(&self, id: &str) -> Result<&Corridor, CorridorError> {
        self.corridors
            .get(id)
            .ok_or_else(|| CorridorError::Unknown(id.to_string()))
    }

    /// Looks up several ids, failing on the first unknown one.
    pub fn select<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<Corridor>, CorridorError> {
        ids.iter().map(|id| self.get(id.as_ref()).cloned()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Corridor> {
        self.corridors.values()
    }

    pub fn len(&self) -> usize {
        self.corridors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corridors.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gantry::parse_gantry_id;

    fn by_id(id: &str) -> Corridor {
        builtin_corridors().into_iter().find(|c| c.id == id).unwrap()
    }

    #[test]
    fn four_builtins_with_six_segments() {
        let all = builtin_corridors();
        let ids: Vec<_> = all.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["NF01-N", "NF01-S", "NF03-N", "NF03-S"]);
        assert!(all.iter().all(|c| c.segments.len() == 6));
    }

    #[test]
    fn first_segment_of_nf01_north() {
        let seg = &by_id("NF01-N").segments[0];
        assert_eq!(seg.gantry.to_string(), "01F-157.2N");
        assert_eq!(seg.distance_km, Tenths(105));
        assert_eq!(seg.fee_twd, Tenths(189));
        assert_eq!(seg.interchange_start, "hòu lǐ 后里");
        assert_eq!(seg.interchange_stop, "sānyì 三義");
    }

    #[test]
    fn interchange_endpoints_follow_travel_direction() {
        assert_eq!(
            by_id("NF01-N").interchange_endpoints(),
            Some(("Nanxun 南屯", "sānyì 三義"))
        );
        assert_eq!(
            by_id("NF01-S").interchange_endpoints(),
            Some(("sānyì 三義", "Nanxun 南屯"))
        );
        assert_eq!(
            by_id("NF03-N").interchange_endpoints(),
            Some(("Héměi 和美", "Yuàn lǐ 苑裡"))
        );
        assert_eq!(
            by_id("NF03-S").interchange_endpoints(),
            Some(("Yuàn lǐ 苑裡", "Héměi 和美"))
        );
    }

    #[test]
    fn totals() {
        // Hand sums of the table columns:
        // NF01: 10.5+4.7+2.5+6.2+4.4+2.8 = 31.1 km, 18.9+8.4+4.5+9.3+7.9+5 = 54.0 TWD
        // NF03: 8.8+6.7+3.7+3.5+4.7+7.5 = 34.9 km, 15.8+12+6.6+6.3+8.4+13.5 = 62.6 TWD
        let t = corridor_totals(&by_id("NF01-N")).unwrap();
        assert_eq!((t.distance_km, t.fee_twd), (Tenths(311), Tenths(540)));
        let t = corridor_totals(&by_id("NF01-S")).unwrap();
        assert_eq!((t.distance_km, t.fee_twd), (Tenths(311), Tenths(540)));
        let t = corridor_totals(&by_id("NF03-N")).unwrap();
        assert_eq!((t.distance_km, t.fee_twd), (Tenths(349), Tenths(626)));
        let t = corridor_totals(&by_id("NF03-S")).unwrap();
        assert_eq!((t.distance_km, t.fee_twd), (Tenths(349), Tenths(626)));
    }

    #[test]
    fn single_segment_totals_and_empty() {
        let mut c = by_id("NF01-N");
        c.segments.truncate(1);
        let t = corridor_totals(&c).unwrap();
        assert_eq!((t.distance_km.as_f64(), t.fee_twd.as_f64()), (10.5, 18.9));
        c.segments.clear();
        assert!(matches!(corridor_totals(&c), Err(CorridorError::EmptyCorridor(_))));
    }

    #[test]
    fn mileage_spans() {
        assert_eq!(by_id("NF01-N").mileage_span(), Tenths(230));
        assert_eq!(by_id("NF01-S").mileage_span(), Tenths(230));
        assert_eq!(by_id("NF03-N").mileage_span(), Tenths(227));
        assert_eq!(by_id("NF03-S").mileage_span(), Tenths(227));
    }

    #[test]
    fn paths_run_start_to_end() {
        let p: Vec<String> = by_id("NF01-N").path().iter().map(ToString::to_string).collect();
        assert_eq!(
            p,
            ["01F-180.2N", "01F-177.4N", "01F-172.5N", "01F-166.4N", "01F-162.1N", "01F-157.2N"]
        );
        let p = by_id("NF03-S").path();
        assert_eq!(p.first().unwrap().to_string(), "03F-163.3S");
        assert_eq!(p.last().unwrap().to_string(), "03F-186.0S");
    }

    #[test]
    fn validation_errors() {
        let mut c = by_id("NF01-N");
        c.end_gantry = c.start_gantry;
        assert!(c.validate().is_err());

        let mut c = by_id("NF01-N");
        c.segments[2].gantry = parse_gantry_id("01F-166.4S").unwrap();
        assert!(c.validate().is_err());

        let mut reg = CorridorRegistry::builtin();
        assert!(matches!(reg.add(by_id("NF01-N")), Err(CorridorError::Duplicate(_))));
        let mut extra = by_id("NF01-N");
        extra.id = "NF01-N-short".into();
        extra.end_gantry = parse_gantry_id("01F-172.5N").unwrap();
        reg.add(extra).unwrap();
        assert_eq!(reg.len(), 5);
        assert!(matches!(reg.get("NF09-N"), Err(CorridorError::Unknown(_))));
    }

    #[test]
    fn config_roundtrips_through_json() {
        let all = builtin_corridors();
        let json = serde_json::to_string(&all).unwrap();
        assert_eq!(parse_corridors(&json).unwrap(), all);
    }
}
