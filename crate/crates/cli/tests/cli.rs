use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{NaiveDate, Weekday};
use gantryflow_core::synth::{random_config, september_2018_profile, GenConfig};
use gantryflow_core::views::{best_departure_report, HourWindow, ViewFilter};
use gantryflow_core::StatsCube;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gantryflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("GANTRYFLOW_CORRIDORS").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, config: &GenConfig) -> PathBuf {
    let path = dir.join("gen.json");
    fs::write(&path, config.to_json()).unwrap();
    path
}

/// Two-corridor config small enough for debug builds.
fn small_config() -> GenConfig {
    let mut c = september_2018_profile();
    c.dataset_id = "small".into();
    c.dates.to = NaiveDate::from_ymd_opt(2018, 9, 4).unwrap();
    c.corridors.retain(|t| t.corridor == "NF01-N" || t.corridor == "NF03-S");
    for t in &mut c.corridors {
        t.hourly_rates.iter_mut().for_each(|r| *r /= 4.0);
    }
    c.malformed_fraction = 0.01;
    c.incomplete_fraction = 0.02;
    c
}

fn gen(dir: &Path, config: &GenConfig) -> PathBuf {
    let cfg = write_config(dir, config);
    let out = dir.join("ds");
    let o = run(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
    let o = run(&["stats", "--cube", "x.json", "--view", "nosuch"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nosuch"));
    assert_eq!(code(&run(&["extract", "--dataset", "m.json"])), 1, "--corridor is required");
}

#[test]
fn runtime_and_domain_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen(tmp.path(), &small_config());
    let manifest = ds.join("manifest.json");

    let o = run(&["extract", "--dataset", s(&manifest), "--corridor", "NF09-X"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("NF09-X"));

    let missing = tmp.path().join("missing.json");
    assert_eq!(code(&run(&["extract", "--dataset", s(&missing), "--corridor", "NF01-N"])), 2);
    assert_eq!(code(&run(&["stats", "--cube", s(&missing), "--view", "hourly"])), 2);

    let o = run(&[
        "extract", "--dataset", s(&manifest), "--corridor", "NF01-N", "--from", "2018-09-05", "--to", "2018-09-01",
    ]);
    assert_eq!(code(&o), 1);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"seed\": 1}").unwrap();
    assert_eq!(code(&run(&["gen", "--config", s(&bad), "--out", s(&tmp.path().join("x"))])), 1);

    // A two-corridor cube needs an explicit corridor.
    let cube = tmp.path().join("cube.json");
    let o = run(&[
        "extract", "--dataset", s(&manifest), "--corridor", "NF01-N", "--corridor", "NF03-S", "--out", s(&cube),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(code(&run(&["stats", "--cube", s(&cube), "--view", "hourly"])), 1);
    assert_eq!(
        code(&run(&["stats", "--cube", s(&cube), "--view", "hourly", "--corridor", "NF03-N"])),
        1
    );
    assert_eq!(
        code(&run(&["stats", "--cube", s(&cube), "--view", "best_departure", "--corridor", "NF01-N"])),
        1,
        "weekday missing"
    );
    assert_eq!(
        code(&run(&["stats", "--cube", s(&cube), "--view", "compare_totals", "--corridor", "NF01-N"])),
        1
    );
}

#[test]
fn cube_files_do_not_depend_on_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen(tmp.path(), &small_config());
    let manifest = ds.join("manifest.json");
    let mut outputs = Vec::new();
    for (workers, format) in [("1", "json"), ("8", "json"), ("1", "csv"), ("8", "csv")] {
        let out = tmp.path().join(format!("cube-{workers}.{format}"));
        let o = run(&[
            "extract", "--dataset", s(&manifest), "--corridor", "NF01-N", "--corridor", "NF03-S",
            "--workers", workers, "--format", format, "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[2], outputs[3]);

    // Without a date filter the cube equals the generator's ground truth.
    let truth = fs::read(ds.join("truth.json")).unwrap();
    assert_eq!(outputs[0], truth);
    assert!(String::from_utf8(outputs[2].clone()).unwrap().starts_with("corridor,date,weekday,hour,"));

    // Standard output carries the same bytes as --out.
    let o = run(&[
        "extract", "--dataset", s(&manifest), "--corridor", "NF01-N", "--corridor", "NF03-S", "--workers", "3",
    ]);
    assert_eq!(o.stdout, outputs[0]);
}

#[test]
fn date_filter_and_spill_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen(tmp.path(), &small_config());
    let manifest = ds.join("manifest.json");
    let o = run(&[
        "extract", "--dataset", s(&manifest), "--corridor", "NF01-N", "--from", "2018-09-02", "--to", "2018-09-03",
        "--spill-threshold-bytes", "2048", "--workers", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cube = StatsCube::from_json(&stdout(&o)).unwrap();
    let dates: Vec<_> = cube.dates().into_iter().collect();
    assert_eq!(
        dates,
        vec![
            NaiveDate::from_ymd_opt(2018, 9, 2).unwrap(),
            NaiveDate::from_ymd_opt(2018, 9, 3).unwrap()
        ]
    );
    assert!(cube.metadata.discarded.out_of_range > 0);

    let only_from = run(&["extract", "--dataset", s(&manifest), "--corridor", "NF01-N", "--from", "2018-09-04"]);
    assert_eq!(code(&only_from), 0);
    let cube = StatsCube::from_json(&stdout(&only_from)).unwrap();
    assert_eq!(cube.dates().len(), 1);
}

#[test]
fn generator_output_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = random_config(77);
    let da = gen(a.path(), &config);
    let db = gen(b.path(), &config);
    assert_eq!(dir_contents(&da), dir_contents(&db));

    // --seed replaces the configured seed.
    let cfg = write_config(a.path(), &config);
    let other = a.path().join("other");
    let seed = (config.seed ^ 1).to_string();
    assert_eq!(code(&run(&["gen", "--config", s(&cfg), "--out", s(&other), "--seed", &seed])), 0);
    assert_ne!(dir_contents(&da), dir_contents(&other));
}

#[test]
fn zero_rates_give_empty_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = small_config();
    for t in &mut config.corridors {
        t.hourly_rates = [0.0; 24];
    }
    let ds = gen(tmp.path(), &config);
    let days: Vec<_> = dir_contents(&ds).into_iter().filter(|(n, _)| n.starts_with("tdcs_")).collect();
    assert_eq!(days.len(), 4);
    for (_, bytes) in days {
        assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 1, "header only");
    }
    let o = run(&["extract", "--dataset", s(&ds.join("manifest.json")), "--corridor", "NF01-N"]);
    assert_eq!(code(&o), 0);
    assert_eq!(StatsCube::from_json(&stdout(&o)).unwrap().total_count(), 0);
}

#[test]
fn bundled_profile_covers_september() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../profiles/september-2018.json");
    let shipped = GenConfig::from_json(&fs::read_to_string(&profile).unwrap()).unwrap();
    assert_eq!(shipped, september_2018_profile());

    let mut config = shipped;
    for t in &mut config.corridors {
        t.hourly_rates.iter_mut().for_each(|r| *r /= 20.0);
    }
    let ds = gen(tmp.path(), &config);
    let names: Vec<_> = dir_contents(&ds).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("tdcs_201809")).count(), 30);
    assert!(names.contains(&"tdcs_20180901.csv".to_string()));
    assert!(names.contains(&"tdcs_20180930.csv".to_string()));
}

#[test]
fn stats_views_match_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = gen(tmp.path(), &small_config());
    let cube_path = tmp.path().join("cube.json");
    let o = run(&[
        "extract", "--dataset", s(&ds.join("manifest.json")), "--corridor", "NF01-N", "--corridor", "NF03-S",
        "--out", s(&cube_path),
    ]);
    assert_eq!(code(&o), 0);
    let cube = StatsCube::from_json(&fs::read_to_string(&cube_path).unwrap()).unwrap();

    let o = run(&[
        "stats", "--cube", s(&cube_path), "--view", "best_departure", "--corridor", "NF01-N", "--weekday", "Tue",
        "--window", "6-20",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let expected = best_departure_report(
        &cube,
        "NF01-N",
        Weekday::Tue,
        HourWindow::new(6, 20).unwrap(),
        5,
        &ViewFilter::default(),
    )
    .unwrap();
    let got: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(got, serde_json::to_value(&expected).unwrap());

    for view in ["hourly", "heatmap", "vehicle_types", "avg_time"] {
        for format in ["json", "csv"] {
            let args = [
                "stats", "--cube", s(&cube_path), "--view", view, "--corridor", "NF03-S", "--format", format,
            ];
            let first = run(&args);
            assert_eq!(code(&first), 0, "{view} {format}: {}", String::from_utf8_lossy(&first.stderr));
            assert_eq!(first.stdout, run(&args).stdout, "{view} {format} output is stable");
            assert!(!first.stdout.is_empty());
        }
    }

    let o = run(&[
        "stats", "--cube", s(&cube_path), "--view", "hourly", "--corridor", "NF01-N", "--vehicle-types", "31,32",
    ]);
    let filtered: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let o = run(&["stats", "--cube", s(&cube_path), "--view", "hourly", "--corridor", "NF01-N"]);
    let all: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let sum = |v: &serde_json::Value| v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>();
    assert!(sum(&filtered) < sum(&all));
    assert!(sum(&filtered) > 0);

    let o = run(&[
        "stats", "--cube", s(&cube_path), "--view", "compare_totals", "--corridor", "NF01-N", "--corridor", "NF03-S",
        "--format", "csv",
    ]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("corridor,total\nNF01-N,"));
}
