use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use gantryflow_core::corridor::CorridorError;
use gantryflow_core::extraction::ExtractionError;
use gantryflow_core::synth::{generate, GenConfig, GenError};
use gantryflow_core::time::{parse_weekday, weekday_name};
use gantryflow_core::views::{self, DayGrouping, HourWindow, ViewError, ViewFilter};
use gantryflow_core::{run_extraction, CorridorRegistry, Dataset, DateRange, ExtractionConfig, StatsCube, VehicleType};
use gantryflow_mr::JobConfig;
use gantryflow_server::{AppState, ServiceConfig};
use serde::Serialize;

use crate::args::{Command, Format, View};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, out, seed } => gen(&config, &out, seed),
        Command::Extract {
            dataset,
            corridors,
            from,
            to,
            workers,
            partitions,
            out,
            format,
            corridors_config,
            max_travel_seconds,
            strict_path,
            spill_threshold_bytes,
        } => {
            let registry = registry(corridors_config.as_deref())?;
            let mut config = ExtractionConfig::new(registry.select(&corridors).map_err(usage)?);
            config.date_filter = date_filter(from, to)?;
            config.max_travel_seconds = max_travel_seconds;
            config.strict_path = strict_path;
            let mut engine = JobConfig::default().with_workers(workers).with_partitions(partitions);
            if let Some(bytes) = spill_threshold_bytes {
                engine.spill_threshold_bytes = bytes;
            }
            extract(&dataset, &config, &engine, out.as_deref(), format)
        }
        Command::Stats {
            cube,
            view,
            corridors,
            weekday,
            window,
            min_samples,
            vehicle_types,
            holidays_as_sunday,
            format,
        } => {
            let text = fs::read_to_string(&cube).map_err(|e| runtime(format!("reading {}: {e}", cube.display())))?;
            let cube = StatsCube::from_json(&text).map_err(|e| runtime(format!("{}: {e}", cube.display())))?;
            let filter = ViewFilter {
                vehicle_types: (!vehicle_types.is_empty())
                    .then(|| vehicle_types.into_iter().map(VehicleType).collect::<BTreeSet<_>>()),
                dates: None,
                grouping: if holidays_as_sunday {
                    DayGrouping::HolidaysAsSunday(DayGrouping::default_holidays())
                } else {
                    DayGrouping::Weekday
                },
            };
            let request = StatsRequest {
                view,
                corridors,
                weekday,
                window,
                min_samples,
                filter,
                format,
            };
            print!("{}", render_stats(&cube, &request)?);
            Ok(())
        }
        Command::Serve {
            listen,
            data,
            results,
            corridors,
            max_jobs,
            workers,
        } => {
            let mut config = ServiceConfig::new(data, results);
            config.corridors = registry(corridors.as_deref())?;
            config.max_jobs = max_jobs.max(1);
            if let Some(w) = workers {
                config.workers = w.max(1);
            }
            serve(listen, config)
        }
    }
}

fn registry(path: Option<&Path>) -> Result<CorridorRegistry> {
    match path {
        None => Ok(CorridorRegistry::builtin()),
        Some(p) => CorridorRegistry::with_config_file(p).map_err(|e| match e {
            CorridorError::Io { .. } => runtime(e),
            _ => usage(e),
        }),
    }
}

fn date_filter(from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<Option<DateRange>> {
    if from.is_none() && to.is_none() {
        return Ok(None);
    }
    let (from, to) = (from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX));
    DateRange::new(from, to)
        .map(Some)
        .ok_or_else(|| usage(format!("--from {from} is after --to {to}")))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| runtime(format!("writing {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| runtime(format!("writing standard output: {e}"))),
    }
}

#[derive(Serialize)]
struct GenSummary {
    manifest: String,
    truth: String,
}

fn gen(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| runtime(format!("reading {}: {e}", config_path.display())))?;
    let mut config = GenConfig::from_json(&text).map_err(usage)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let g = generate(&config, out).map_err(|e| match e {
        GenError::IoFailure { .. } => runtime(e),
        _ => usage(e),
    })?;
    eprintln!(
        "generated {} files: {} complete trips, {} incomplete, {} rejected lines, {} transits",
        g.dataset.files.len(),
        g.truth.complete_trips,
        g.truth.incomplete_trips,
        g.truth.rejected.total(),
        g.truth.cube.total_count()
    );
    let summary = GenSummary {
        manifest: g.manifest_path.display().to_string(),
        truth: g.truth_path.display().to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn extract(
    manifest: &Path,
    config: &ExtractionConfig,
    engine: &JobConfig,
    out: Option<&Path>,
    format: Format,
) -> Result<()> {
    let dataset = Dataset::load(manifest).map_err(runtime)?;
    let cube = run_extraction(&dataset, config, engine).map_err(|e| match e {
        ExtractionError::InvalidConfig(_) => usage(e),
        _ => runtime(e),
    })?;
    let m = &cube.metadata;
    eprintln!(
        "records_ok={} malformed={} non_monotonic={} bad_gantry_id={} transits={} cells={} outliers={} off_path={} out_of_range={}",
        m.ingest.records_ok,
        m.ingest.rejected.malformed,
        m.ingest.rejected.non_monotonic,
        m.ingest.rejected.bad_gantry_id,
        cube.total_count(),
        cube.cells().len(),
        m.discarded.outliers,
        m.discarded.off_path,
        m.discarded.out_of_range,
    );
    let text = match format {
        Format::Json => cube.to_json(),
        Format::Csv => cube.to_csv(),
    };
    write_output(out, &text)
}

pub struct StatsRequest {
    pub view: View,
    pub corridors: Vec<String>,
    pub weekday: Option<String>,
    pub window: Option<String>,
    pub min_samples: u64,
    pub filter: ViewFilter,
    pub format: Format,
}

fn view_error(e: ViewError) -> CliError {
    match e {
        ViewError::NoData => runtime(e),
        _ => usage(e),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("view serializes");
    s.push('\n');
    s
}

fn hourly_csv(counts: &[u64; 24]) -> String {
    let mut out = String::from("hour,count\n");
    for (h, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{h},{c}");
    }
    out
}

/// Renders one view as JSON or CSV text.
pub fn render_stats(cube: &StatsCube, req: &StatsRequest) -> Result<String> {
    if req.view == View::CompareTotals {
        let [a, b] = req.corridors.as_slice() else {
            return Err(usage("compare_totals needs exactly two --corridor values"));
        };
        let cmp = views::compare_totals(cube, a, b).map_err(view_error)?;
        return Ok(match req.format {
            Format::Json => json(&cmp),
            Format::Csv => format!(
                "corridor,total\n{},{}\n{},{}\n",
                cmp.first.corridor_id, cmp.first.total, cmp.second.corridor_id, cmp.second.total
            ),
        });
    }

    let corridor = match (req.corridors.as_slice(), cube.metadata.corridor_ids.as_slice()) {
        ([c], _) => c.as_str(),
        ([], [only]) => only.as_str(),
        ([], _) => return Err(usage("--corridor is required when the cube has several corridors")),
        _ => return Err(usage("this view takes a single --corridor")),
    };
    let filter = &req.filter;
    Ok(match req.view {
        View::Hourly => {
            let p = views::hourly_distribution(cube, corridor, filter).map_err(view_error)?;
            match req.format {
                Format::Json => json(&p),
                Format::Csv => hourly_csv(&p.counts),
            }
        }
        View::Heatmap => {
            let m = views::weekday_hour_counts(cube, corridor, filter).map_err(view_error)?;
            match req.format {
                Format::Json => json(&m),
                Format::Csv => m.to_csv(),
            }
        }
        View::VehicleTypes => {
            let v = views::vehicle_type_counts(cube, corridor, filter).map_err(view_error)?;
            match req.format {
                Format::Json => json(&v),
                Format::Csv => {
                    let mut out = String::from("vehicle_type,label");
                    for h in 0..24 {
                        let _ = write!(out, ",{h}");
                    }
                    out.push('\n');
                    for p in &v.profiles {
                        let vt = p.vehicle_type.expect("per-type profile");
                        let _ = write!(out, "{},{}", vt.code(), vt.label());
                        for c in p.counts {
                            let _ = write!(out, ",{c}");
                        }
                        out.push('\n');
                    }
                    out
                }
            }
        }
        View::AvgTime => {
            let a = views::avg_travel_time(cube, corridor, req.min_samples, filter).map_err(view_error)?;
            match req.format {
                Format::Json => json(&a),
                Format::Csv => a.to_csv(),
            }
        }
        View::BestDeparture => {
            let text = req
                .weekday
                .as_deref()
                .ok_or_else(|| usage("best_departure needs --weekday"))?;
            let weekday = parse_weekday(text).ok_or_else(|| usage(format!("bad weekday {text:?}")))?;
            let window = match &req.window {
                Some(w) => HourWindow::parse(w).map_err(view_error)?,
                None => HourWindow::FULL_DAY,
            };
            let r = views::best_departure_report(cube, corridor, weekday, window, req.min_samples, filter)
                .map_err(view_error)?;
            match req.format {
                Format::Json => json(&r),
                Format::Csv => format!(
                    "corridor,weekday,window_start,window_end,min_samples,hour,minutes\n{},{},{},{},{},{},{}\n",
                    r.corridor_id,
                    weekday_name(weekday),
                    window.start,
                    window.end,
                    r.min_samples,
                    r.hour,
                    r.minutes
                ),
            }
        }
        View::CompareTotals => unreachable!("handled above"),
    })
}

fn serve(listen: std::net::SocketAddr, config: ServiceConfig) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async move {
        let state = AppState::open(config).map_err(runtime)?;
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| runtime(format!("binding {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(runtime)?;
        tracing::info!(%addr, "listening");
        eprintln!("listening on http://{addr}");
        gantryflow_server::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(runtime)
    })
}
