use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
mu = [0.5, 3.0, 6.0, 10.0]

[schedule]
samples = 40

[simulation]
periods = 2
"#;

fn vdpsync(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdpsync"))
        .current_dir(dir)
        .env_remove("VDPSYNC_CACHE")
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect(),
        Err(_) => Vec::new(),
    };
    v.sort();
    v
}

#[test]
fn cycle_reports_period_and_writes_one_row_per_sample() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", SMALL);
    let o = vdpsync(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "out", "cycle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("T = 11.43"));
    let csv = fs::read_to_string(tmp.path().join("out/cycle.csv")).unwrap();
    let data_rows = csv.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(data_rows, 40);
}

#[test]
fn f100_cycle_has_100_rows() {
    let tmp = TempDir::new().unwrap();
    let o = vdpsync(
        tmp.path(),
        &[
            "--config",
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/f100.toml"),
            "--out",
            "o",
            "--no-cache",
            "cycle",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("o/cycle.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count() - 1, 100);
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let bad_key = config(d, "bad.toml", "mu = [1.0, 2.0]\n[schedule]\nsamplez = 4\n");
    let o = vdpsync(d, &["--config", bad_key.to_str().unwrap(), "--out", "a", "cycle"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("samplez"));

    let one_node = config(d, "one.toml", "mu = [1.0]\n");
    assert_eq!(code(&vdpsync(d, &["--config", one_node.to_str().unwrap(), "--out", "b", "cycle"])), 2);

    let timeout = config(d, "t.toml", &format!("{SMALL}\n[phase_one]\nbudget_periods = 0.01\n"));
    let o = vdpsync(d, &["--config", timeout.to_str().unwrap(), "--out", "c", "simulate"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&vdpsync(d, &["--config", "missing.toml", "cycle"])), 4);
    assert_eq!(code(&vdpsync(d, &["frobnicate"])), 2);
    assert_eq!(code(&vdpsync(d, &["--out", "e", "plotdata", "--figure", "fig9"])), 2);
    assert_eq!(code(&vdpsync(d, &["--out", "e", "plotdata", "--figure", "fig4"])), 2);
    assert_eq!(code(&vdpsync(d, &["--help"])), 0);

    for dir in ["a", "b", "c", "e"] {
        assert!(files_in(&d.join(dir)).iter().all(|f| f == "cache"), "{dir}: {:?}", files_in(&d.join(dir)));
    }
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("out");
    // a directory where cycle.json should go makes the second file fail
    fs::create_dir_all(out.join("cycle.json/blocker")).unwrap();
    let o = vdpsync(tmp.path(), &["--config", cfg.to_str().unwrap(), "--out", "out", "--no-cache", "cycle"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), vec!["cycle.json".to_string()]);
}

#[test]
fn simulating_a_saved_schedule_reproduces_the_trace_bit_for_bit() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = config(d, "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&vdpsync(d, &["--config", c, "--out", "opt", "--no-cache", "optimize"])), 0);
    assert_eq!(code(&vdpsync(d, &["--config", c, "--out", "fresh", "--no-cache", "simulate"])), 0);
    let o =
        vdpsync(d, &["--config", c, "--out", "loaded", "--no-cache", "simulate", "--schedule", "opt/schedule.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(d.join("fresh/trace.csv")).unwrap(), fs::read(d.join("loaded/trace.csv")).unwrap());
    assert_eq!(fs::read(d.join("fresh/summary.json")).unwrap(), fs::read(d.join("loaded/summary.json")).unwrap());

    let sched = fs::read_to_string(d.join("opt/schedule.csv")).unwrap();
    assert_eq!(sched.lines().filter(|l| !l.starts_with('#')).count() - 1, 40 * 6);

    let other = config(d, "other.toml", &SMALL.replace("[schedule]", "[graph]\nkind = \"complete\"\n\n[schedule]"));
    let o =
        vdpsync(d, &["--config", other.to_str().unwrap(), "--out", "x", "simulate", "--schedule", "opt/schedule.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn cached_and_uncached_runs_agree() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = config(d, "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    let cache = d.join("shared-cache");
    let run = |out: &str, cached: bool| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vdpsync"));
        cmd.current_dir(d).args(["--config", c, "--out", out]);
        if cached {
            cmd.env("VDPSYNC_CACHE", &cache);
        } else {
            cmd.env_remove("VDPSYNC_CACHE").arg("--no-cache");
        }
        let o = cmd.arg("optimize").output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(d.join(out).join("schedule.json")).unwrap()
    };
    let first = run("one", true);
    let entries = files_in(&cache);
    assert!(entries.iter().any(|f| f.starts_with("schedule-")), "{entries:?}");
    assert!(entries.iter().any(|f| f.starts_with("cycle-")), "{entries:?}");
    assert!(!d.join("one/cache").exists());
    let second = run("two", true);
    let plain = run("three", false);
    assert_eq!(first, second);
    assert_eq!(first, plain);

    // a corrupted entry is ignored and recomputed
    for f in &entries {
        fs::write(cache.join(f), b"{ not json").unwrap();
    }
    assert_eq!(run("four", true), first);
}

#[test]
fn plot_data_for_every_figure() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = config(d, "c.toml", SMALL);
    let c = cfg.to_str().unwrap();
    let hybrid = config(d, "h.toml", &format!("{SMALL}\n[hybrid]\nerror_threshold = 0.5\n"));
    let complete = config(d, "k.toml", &SMALL.replace("[schedule]", "[graph]\nkind = \"complete\"\n\n[schedule]"));
    let ok = |args: &[&str]| {
        let o = vdpsync(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["--config", c, "--out", "run", "optimize"]);
    ok(&["--config", c, "--out", "run", "simulate"]);
    ok(&["--config", hybrid.to_str().unwrap(), "--out", "hyb", "simulate"]);
    ok(&["--config", complete.to_str().unwrap(), "--out", "full", "optimize"]);

    ok(&["--config", c, "--out", "plots", "plotdata", "--figure", "fig1a"]);
    ok(&["--out", "plots", "plotdata", "--figure", "fig1b", "--input", "run/trace.csv"]);
    ok(&["--out", "plots", "plotdata", "--figure", "fig2", "--input", "run/schedule.json"]);
    ok(&["--out", "plots", "plotdata", "--figure", "fig4", "--input", "run/trace.csv"]);
    ok(&["--out", "plots", "plotdata", "--figure", "fig5", "--input", "hyb/trace.csv"]);
    ok(&["--out", "plots", "plotdata", "--figure", "fig6", "--input", "run/trace.csv"]);
    ok(&[
        "--out",
        "plots",
        "plotdata",
        "--figure",
        "fig7",
        "--input",
        "run/schedule.json",
        "--input",
        "full/schedule.json",
    ]);

    let p = d.join("plots");
    for fig in ["fig1a", "fig1b", "fig2", "fig4", "fig5", "fig6", "fig7"] {
        assert!(p.join(format!("{fig}.csv")).is_file(), "{fig}.csv");
        let stub = fs::read_to_string(p.join(format!("plot_{fig}.py"))).unwrap();
        assert!(stub.contains(&format!("\"{fig}.csv\"")));
    }

    let mut fig1a = csv::Reader::from_path(p.join("fig1a.csv")).unwrap();
    let mut mus: Vec<String> = fig1a.records().map(|r| r.unwrap()[1].to_string()).collect();
    mus.dedup();
    assert_eq!(mus, ["0.5", "3", "6", "10"]);

    let mut fig2 = csv::Reader::from_path(p.join("fig2.csv")).unwrap();
    assert_eq!(fig2.headers().unwrap().len(), 1 + 2 * 6);
    assert_eq!(fig2.records().count(), 40);

    let mut fig7 = csv::Reader::from_path(p.join("fig7.csv")).unwrap();
    assert_eq!(fig7.headers().unwrap().len(), 3);

    let mut fig5 = csv::Reader::from_path(p.join("fig5.csv")).unwrap();
    let modes: Vec<String> = fig5.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert!(modes.iter().all(|m| m == "phase2" || m == "resync"));
}
