use std::net::SocketAddr;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gantryflow", version, about = "Corridor travel-time statistics from toll-gantry trip logs")]
pub struct Cli {
    /// Log more to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum View {
    Hourly,
    Heatmap,
    VehicleTypes,
    AvgTime,
    BestDeparture,
    CompareTotals,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its expected cube.
    Gen {
        /// Generator config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the daily files, manifest.json and truth.json.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run corridor extraction over a dataset and write the cube.
    Extract {
        /// Dataset manifest.
        #[arg(long)]
        dataset: PathBuf,
        /// Corridor id; repeat for several.
        #[arg(long = "corridor", required = true)]
        corridors: Vec<String>,
        /// First departure date to keep (inclusive).
        #[arg(long)]
        from: Option<NaiveDate>,
        /// Last departure date to keep (inclusive).
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = gantryflow_mr::JobConfig::default().partitions)]
        partitions: usize,
        /// Cube file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Extra corridor definitions (JSON array) on top of the built-ins.
        #[arg(long = "corridors-config", env = "GANTRYFLOW_CORRIDORS")]
        corridors_config: Option<PathBuf>,
        #[arg(long, default_value_t = gantryflow_core::DEFAULT_MAX_TRAVEL_SECONDS)]
        max_travel_seconds: u64,
        /// Drop traversals whose gantries leave the corridor route.
        #[arg(long)]
        strict_path: bool,
        /// In-memory shuffle budget before spilling to disk.
        #[arg(long)]
        spill_threshold_bytes: Option<usize>,
    },
    /// Print one view of a cube.
    Stats {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long, value_enum)]
        view: View,
        /// Corridor id; `compare_totals` takes two.
        #[arg(long = "corridor")]
        corridors: Vec<String>,
        /// Mon..Sun, for `best_departure`.
        #[arg(long)]
        weekday: Option<String>,
        /// Departure hours, e.g. `6-20`, for `best_departure`.
        #[arg(long)]
        window: Option<String>,
        #[arg(long, default_value_t = gantryflow_core::views::DEFAULT_MIN_SAMPLES)]
        min_samples: u64,
        /// Only these vehicle type codes, comma separated.
        #[arg(long, value_delimiter = ',')]
        vehicle_types: Vec<u16>,
        /// Count public holidays in the Sunday row.
        #[arg(long)]
        holidays_as_sunday: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long, env = "GANTRYFLOW_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Directory holding datasets (each with a manifest.json).
        #[arg(long, env = "GANTRYFLOW_DATA")]
        data: PathBuf,
        /// Job records and cubes.
        #[arg(long, env = "GANTRYFLOW_RESULTS", default_value = "results")]
        results: PathBuf,
        #[arg(long, env = "GANTRYFLOW_CORRIDORS")]
        corridors: Option<PathBuf>,
        #[arg(long, env = "GANTRYFLOW_MAX_JOBS", default_value_t = 1)]
        max_jobs: usize,
        /// Engine workers per job; defaults to the number of CPUs.
        #[arg(long, env = "GANTRYFLOW_WORKERS")]
        workers: Option<usize>,
    },
}
