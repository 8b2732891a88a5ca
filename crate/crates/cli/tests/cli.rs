use std::path::Path;
use std::process::{Command, Output};

use prevmap_core::density::{GridJson, ScenarioJson};
use prevmap_core::experiments::{district_fixture, series_e_scenario, write_cellmap_csv, write_districts_csv};
use prevmap_core::{GridDensity, Region};
use serde_json::Value;

fn prevmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prevmap"))
        .args(args)
        .current_dir(dir)
        .env_remove("PREVMAP_SEED")
        .output()
        .unwrap()
}

fn write_scenario(dir: &Path) {
    let s = series_e_scenario(0.5, 0.5).unwrap();
    let text = serde_json::to_string(&ScenarioJson::from(&s)).unwrap();
    std::fs::write(dir.join("scenario.json"), text).unwrap();
}

fn write_fixture(dir: &Path) {
    let (districts, cells) = district_fixture();
    write_districts_csv(&districts, std::fs::File::create(dir.join("d.csv")).unwrap()).unwrap();
    write_cellmap_csv(&cells, std::fs::File::create(dir.join("c.csv")).unwrap()).unwrap();
}

fn error_kind(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stderr)
        .unwrap_or_else(|_| panic!("stderr is not a JSON error: {}", String::from_utf8_lossy(&out.stderr)));
    v["error"].clone()
}

#[test]
fn validate_reports_negative_cell_with_data_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = GridJson::from(&GridDensity::constant(Region::unit(3, 2).unwrap(), 1.0).unwrap());
    g.values[1] = -2.0;
    std::fs::write(dir.path().join("g.json"), serde_json::to_string(&g).unwrap()).unwrap();
    let out = prevmap(dir.path(), &["validate", "--grid", "g.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_kind(&out);
    assert_eq!(err["exit_code"], 3);
    assert!(err["message"].as_str().unwrap().contains("(ix=1, iy=0)"), "{err}");
}

#[test]
fn validate_accepts_good_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    write_fixture(dir.path());
    assert!(prevmap(dir.path(), &["validate", "--scenario", "scenario.json"])
        .status
        .success());
    assert!(
        prevmap(dir.path(), &["validate", "--districts", "d.csv", "--cellmap", "c.csv"])
            .status
            .success()
    );
}

#[test]
fn survey_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let args = ["survey", "--scenario", "scenario.json", "--seed", "5"];
    let a = prevmap(dir.path(), &args);
    let b = prevmap(dir.path(), &args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["seed"], 5);
    let ci = v["result"]["ci"].as_array().unwrap();
    let t_hat = v["result"]["t_hat"].as_f64().unwrap();
    assert!(ci[0].as_f64().unwrap() <= t_hat && t_hat <= ci[1].as_f64().unwrap());
    assert_eq!(v["result"]["positions"].as_array().unwrap().len(), 50);
    let c = prevmap(dir.path(), &["survey", "--scenario", "scenario.json", "--seed", "6"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn seed_comes_from_environment_unless_flag_given() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_prevmap"));
        cmd.current_dir(dir.path())
            .args(["survey", "--scenario", "scenario.json"]);
        cmd.env_remove("PREVMAP_SEED");
        if let Some(e) = env {
            cmd.env("PREVMAP_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        serde_json::from_slice::<Value>(&out.stdout).unwrap()["seed"].clone()
    };
    assert_eq!(run(Some("99"), None), 99);
    assert_eq!(run(Some("99"), Some("3")), 3);
    assert_eq!(run(None, None), prevmap_core::DEFAULT_SEED);
}

#[test]
fn ssd_experiment_writes_full_surface() {
    let dir = tempfile::tempdir().unwrap();
    let out = prevmap(
        dir.path(),
        &[
            "experiment",
            "ssd",
            "--group",
            "E1",
            "--replications",
            "200",
            "--seed",
            "7",
            "--out",
            "e1.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("e1.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|l| l.split(',').nth(1) == Some("max")).count(), 19);
    assert_eq!(
        rows.iter().filter(|l| l.split(',').nth(1) == Some("minimax")).count(),
        1
    );
    assert_eq!(rows.len(), 361 + 19 + 1);
    assert!(dir.path().join("e1.csv.run.json").exists());
}

#[test]
fn rerun_reproduces_output_bytes() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let first = prevmap(
        dir.path(),
        &[
            "survey",
            "--districts",
            "d.csv",
            "--cellmap",
            "c.csv",
            "--sampler",
            "sir",
            "--out",
            "a.json",
        ],
    );
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let again = prevmap(dir.path(), &["rerun", "--config", "a.json", "--out", "b.json"]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);

    let csv = prevmap(
        dir.path(),
        &[
            "experiment",
            "compare",
            "--scenarios",
            "1",
            "--replications",
            "20",
            "--out",
            "cmp.csv",
        ],
    );
    assert!(csv.status.success());
    let again = prevmap(
        dir.path(),
        &["rerun", "--config", "cmp.csv.run.json", "--out", "cmp2.csv"],
    );
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("cmp.csv")).unwrap(),
        std::fs::read(dir.path().join("cmp2.csv")).unwrap()
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    assert_eq!(prevmap(dir.path(), &["survey"]).status.code(), Some(2));
    assert_eq!(prevmap(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let bad_alpha = prevmap(dir.path(), &["survey", "--scenario", "scenario.json", "--alpha", "1.5"]);
    assert_eq!(bad_alpha.status.code(), Some(2));
    assert_eq!(error_kind(&bad_alpha)["exit_code"], 2);
    let zero_threads = prevmap(dir.path(), &["--threads", "0", "survey", "--scenario", "scenario.json"]);
    assert_eq!(zero_threads.status.code(), Some(2));
}

#[test]
fn unknown_district_in_cellmap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let cells = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let mut lines: Vec<String> = cells.lines().map(str::to_string).collect();
    let last = lines.len() - 1;
    let mut fields: Vec<String> = lines[last].split(',').map(str::to_string).collect();
    *fields.last_mut().unwrap() = "NOWHERE".to_string();
    lines[last] = fields.join(",");
    std::fs::write(dir.path().join("c.csv"), lines.join("\n") + "\n").unwrap();
    let out = prevmap(dir.path(), &["validate", "--districts", "d.csv", "--cellmap", "c.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_kind(&out)["message"].as_str().unwrap().contains("NOWHERE"));
}

#[test]
fn stratified_survey_on_district_files() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = prevmap(
        dir.path(),
        &[
            "survey",
            "--districts",
            "d.csv",
            "--cellmap",
            "c.csv",
            "--sampler",
            "stratified",
            "--format",
            "csv",
            "--out",
            "s.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "stratum,population,size,positives");
    let total: u64 = lines
        .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 10_000);
}
