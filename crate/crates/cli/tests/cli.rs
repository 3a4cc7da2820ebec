use std::fs;
use std::path::Path;
use std::process::Command;

use phasepic::config::{parse_config, RunConfig};
use phasepic::output::{parse_timeseries, projection_path, TIMESERIES};
use phasepic::run::simulate;
use phasepic_core::problems::ProblemKind;

const SMALL: &str =
    "problem = landau\ncells = 8 8 8 8\nrefine_v = none\ndt = 0.25\nt_end = 2\nremap_interval = 2\nsnapshots = 2\n";

fn small(dir: &Path, extra: &[&str]) -> RunConfig {
    let mut flags: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
    flags.push(format!("--output={}", dir.display()));
    parse_config(SMALL, &flags).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phasepic"))
}

#[test]
fn zero_end_time_writes_initial_diagnostics_only() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path(), &["--t_end=0", "--snapshots="]);
    let out = simulate(&c).unwrap();
    assert_eq!(out.report.steps, 0);
    let text = fs::read_to_string(dir.path().join(TIMESERIES)).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
}

#[test]
fn timeseries_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(&small(dir.path(), &[])).unwrap();
    let back = parse_timeseries(&fs::read_to_string(dir.path().join(TIMESERIES)).unwrap()).unwrap();
    let a = out.report.series.records();
    let b = back.records();
    assert_eq!(a.len(), b.len());
    for (a, b) in a.iter().zip(b) {
        assert_eq!(a.values().map(f64::to_bits), b.values().map(f64::to_bits));
    }
}

#[test]
fn landau_initial_projection_is_symmetric_in_vx() {
    let dir = tempfile::tempdir().unwrap();
    let mut flags = vec!["--t_end=0".to_string(), "--snapshots=0".into()];
    flags.push(format!("--output={}", dir.path().display()));
    let c = parse_config("problem = landau", &flags).unwrap();
    simulate(&c).unwrap();
    let text = fs::read_to_string(projection_path(dir.path(), 0.0)).unwrap();
    let rows: Vec<[f64; 3]> = text
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    let nx = rows.iter().filter(|r| r[1] == rows[0][1]).count();
    let nv = rows.len() / nx;
    assert_eq!(nx * nv, rows.len());
    let mut worst = 0.0f64;
    for j in 0..nv {
        for i in 0..nx {
            let a = rows[j * nx + i];
            let b = rows[(nv - 1 - j) * nx + i];
            assert_eq!(a[0], b[0]);
            assert!((a[1] + b[1]).abs() < 1e-12, "{a:?} {b:?}");
            worst = worst.max((a[2] - b[2]).abs());
        }
    }
    assert!(worst <= 1e-12, "{worst:e}");
    assert!(rows.iter().any(|r| r[2] > 0.1));
}

#[test]
fn classical_and_remap_modes_agree_before_the_first_remap() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = simulate(&small(a.path(), &["--remap_interval=4"])).unwrap();
    let rb = simulate(&small(b.path(), &["--remap_interval=0"])).unwrap();
    let (sa, sb) = (ra.report.series.records(), rb.report.series.records());
    for k in 0..4 {
        assert_eq!(sa[k].values().map(f64::to_bits), sb[k].values().map(f64::to_bits), "step {k}");
    }
    assert_ne!(sa[4].ex_l2, sb[4].ex_l2);
    assert!(rb.report.remaps.is_empty());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    simulate(&small(a.path(), &["--workers=1"])).unwrap();
    simulate(&small(b.path(), &["--workers=3"])).unwrap();
    for f in [TIMESERIES, "proj_xvx_2.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    simulate(&small(a.path(), &[])).unwrap();
    let manifest = fs::read_to_string(a.path().join("manifest.txt")).unwrap();
    let c = parse_config(&manifest, &[format!("--output={}", b.path().display())]).unwrap();
    simulate(&c).unwrap();
    assert_eq!(fs::read(a.path().join(TIMESERIES)).unwrap(), fs::read(b.path().join(TIMESERIES)).unwrap());
    assert!(fs::read_to_string(a.path().join("plot.gp")).unwrap().contains(TIMESERIES));
}

#[test]
fn binary_runs_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args([
            "simulate",
            cfg.to_str().unwrap(),
            "--t_end=1",
            "--snapshots=",
            &format!("--output={}", out_dir.display()),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = parse_timeseries(&fs::read_to_string(out_dir.join(TIMESERIES)).unwrap()).unwrap();
    assert_eq!(series.len(), 5);
}

#[test]
fn binary_exit_codes_name_the_category() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "problem = landau\nstep = 3\n").unwrap();
    let out = bin().args(["simulate", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown key 'step'") && err.contains("remap_interval"), "{err}");

    let out = bin().args(["simulate", dir.path().join("missing.cfg").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
}

#[test]
fn preset_output_parses_back() {
    for (name, kind) in
        [("landau", ProblemKind::Landau), ("twostream", ProblemKind::TwoStream), ("beam", ProblemKind::SemiGaussian)]
    {
        let out = bin().args(["preset", name]).output().unwrap();
        assert!(out.status.success());
        let c = parse_config(&String::from_utf8(out.stdout).unwrap(), &[]).unwrap();
        assert_eq!(c, RunConfig::preset(kind));
    }
}

#[test]
fn escaping_beam_aborts_with_a_state_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("beam.cfg");
    fs::write(&cfg, "problem = beam\ndomain = -1.25 -1.25 1.25 1.25\ncells = 8 8 8 8\ndt = 0.05\nt_end = 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let out =
        bin().args(["simulate", cfg.to_str().unwrap(), &format!("--output={}", out_dir.display())]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("step ") && err.contains("state dumped to"), "{err}");
    let dump = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("dump_step"))
        .expect("dump file");
    assert!(fs::read_to_string(dump).unwrap().starts_with("x,y,vx,vy,q\n"));
}
