use std::fs;
use std::sync::Arc;

use chrono::{NaiveDate, NaiveDateTime};
use gantryflow_core::extraction::{extract_transits, ExtractionConfig};
use gantryflow_core::gantry::{parse_gantry_id, Bearing, GantryId, Tenths};
use gantryflow_core::ingest::{
    format_trip_record, parse_trip_record, FileRecords, GantryPassage, IngestCounters, IngestReport, RecordSource,
    RejectCounts, TripRecord,
};
use gantryflow_core::{CorridorRegistry, VehicleType};
use proptest::prelude::*;

const MALFORMED_CORPUS: &str = include_str!("data/malformed.csv");

fn gantry() -> impl Strategy<Value = GantryId> {
    (
        prop_oneof![Just("01F"), Just("03F"), Just("05F"), Just("01H"), Just("03A")],
        0u32..4000,
        prop_oneof![Just(Bearing::North), Just(Bearing::South)],
    )
        .prop_map(|(fw, m, b)| GantryId::new(fw, Tenths(m), b).unwrap())
}

fn timestamp() -> impl Strategy<Value = NaiveDateTime> {
    let base = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    (0i64..5 * 365 * 86_400).prop_map(move |s| base + chrono::Duration::seconds(s))
}

fn record() -> impl Strategy<Value = TripRecord> {
    (
        any::<u16>(),
        timestamp(),
        prop::collection::vec((0i64..3_600, gantry()), 1..12),
        0u32..10_000,
        any::<bool>(),
        gantry(),
        gantry(),
    )
        .prop_map(|(vt, start, steps, len, end, o, d)| {
            let mut t = start;
            let passages: Vec<GantryPassage> = steps
                .into_iter()
                .map(|(dt, g)| {
                    t += chrono::Duration::seconds(dt);
                    GantryPassage { gantry: g, timestamp: t }
                })
                .collect();
            TripRecord {
                vehicle_type: VehicleType(vt),
                origin: GantryPassage {
                    gantry: o,
                    timestamp: passages[0].timestamp,
                },
                destination: GantryPassage {
                    gantry: d,
                    timestamp: passages.last().unwrap().timestamp,
                },
                trip_length_km: Tenths(len),
                trip_end: end,
                passages,
                source: RecordSource { file: 0, line: 1 },
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn record_round_trip(rec in record()) {
        let line = format_trip_record(&rec);
        let parsed = parse_trip_record(&line, 1).unwrap();
        prop_assert_eq!(&parsed, &rec);
        prop_assert_eq!(format_trip_record(&parsed), line);
    }

    #[test]
    fn gantry_round_trip(g in gantry()) {
        prop_assert_eq!(parse_gantry_id(&g.to_string()).unwrap(), g);
    }
}

#[test]
fn every_table_gantry_round_trips() {
    let reg = CorridorRegistry::builtin();
    let ids: Vec<String> = reg
        .iter()
        .flat_map(|c| c.segments.iter().map(|s| s.gantry.to_string()))
        .collect();
    assert_eq!(ids.len(), 24);
    for id in &ids {
        assert_eq!(&parse_gantry_id(id).unwrap().to_string(), id);
    }
}

#[test]
fn malformed_corpus_counts_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.csv");
    fs::write(&path, MALFORMED_CORPUS).unwrap();
    let counters = Arc::new(IngestCounters::default());
    let accepted: Vec<_> = FileRecords::open(&path, 0, Arc::clone(&counters))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    let report = counters.report();
    assert_eq!(
        report,
        IngestReport {
            records_ok: 3,
            rejected: RejectCounts {
                malformed: 9,
                non_monotonic: 2,
                bad_gantry_id: 4,
            },
        }
    );
    assert_eq!(accepted.len(), 3);
    let attempted = MALFORMED_CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .count();
    assert_eq!(report.lines_attempted(), attempted as u64);
    // Accepted records keep their 1-based line numbers.
    let lines: Vec<u64> = accepted.iter().map(|r| r.source.line).collect();
    assert_eq!(lines, vec![3, 4, 21]);
}

/// Straightforward restatement of the transit rule: scan left to right,
/// open a traversal at a start gantry, close it at the next end gantry.
fn brute_force(passages: &[GantryPassage], start: GantryId, end: GantryId) -> Vec<i64> {
    let mut out = Vec::new();
    let mut open: Option<NaiveDateTime> = None;
    for p in passages {
        match open {
            None if p.gantry == start => open = Some(p.timestamp),
            Some(t0) if p.gantry == end => {
                out.push((p.timestamp - t0).num_seconds());
                open = None;
            }
            _ => {}
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn transits_match_brute_force(picks in prop::collection::vec((0usize..4, 1i64..1800), 1..30)) {
        let corridor = CorridorRegistry::builtin().get("NF01-N").unwrap().clone();
        let other = GantryId::new("01F", Tenths(1700), Bearing::North).unwrap();
        let palette = [corridor.start_gantry, corridor.end_gantry, other, corridor.segments[2].gantry];
        let mut t = NaiveDate::from_ymd_opt(2018, 9, 3).unwrap().and_hms_opt(6, 0, 0).unwrap();
        let passages: Vec<GantryPassage> = picks
            .iter()
            .map(|(i, dt)| {
                t += chrono::Duration::seconds(*dt);
                GantryPassage { gantry: palette[*i], timestamp: t }
            })
            .collect();
        let trip = TripRecord {
            vehicle_type: VehicleType::CAR,
            origin: passages[0],
            destination: *passages.last().unwrap(),
            trip_length_km: Tenths(0),
            trip_end: true,
            passages: passages.clone(),
            source: RecordSource::default(),
        };
        let mut config = ExtractionConfig::new(vec![corridor.clone()]);
        config.max_travel_seconds = u64::MAX;
        let got: Vec<i64> = extract_transits(&trip, &config)
            .observations
            .iter()
            .map(|o| o.travel_seconds as i64)
            .collect();
        prop_assert_eq!(got, brute_force(&passages, corridor.start_gantry, corridor.end_gantry));
    }
}
