//! Corridor travel-time extraction over toll-gantry trip logs.
//!
//! Trip-log files are parsed by [`ingest`], each trip is scanned for
//! start-to-end traversals of configured [`corridor`]s, and the traversals
//! are aggregated into a [`cube::StatsCube`] of `(count, seconds)` cells
//! keyed by corridor, date, departure hour and vehicle type. [`views`]
//! projects a cube into hourly, weekday and travel-time tables; [`synth`]
//! writes synthetic datasets with exact expected cubes.

pub mod corridor;
pub mod cube;
pub mod extraction;
pub mod gantry;
pub mod ingest;
pub mod synth;
pub mod time;
pub mod vehicle;
pub mod views;

pub use corridor::{Corridor, CorridorError, CorridorRegistry, CorridorTotals, Segment};
pub use cube::{CountSum, CubeError, CubeMetadata, DiscardCounts, StatKey, StatsCube};
pub use extraction::{run_extraction, ExtractionConfig, ExtractionError, DEFAULT_MAX_TRAVEL_SECONDS};
pub use gantry::{parse_gantry_id, Bearing, GantryId, Tenths};
pub use ingest::{parse_trip_record, Dataset, IngestError, IngestReport, RecordError, TripRecord};
pub use synth::{generate, september_2018_profile, GenConfig, GenError, Generated, GroundTruth};
pub use time::DateRange;
pub use vehicle::VehicleType;
pub use views::ViewError;
