//! Run artifacts: time-series and projection CSVs, manifest, gnuplot script.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use phasepic_core::diagnostics::{Projection, ProjectionGrid, Record, TimeSeries};
use phasepic_core::problems::{KvBeam, ProblemKind};
use phasepic_core::sim::SimulationConfig;

use crate::error::CliError;

pub const TIMESERIES: &str = "timeseries.csv";
pub const MANIFEST: &str = "manifest.txt";
pub const PLOT: &str = "plot.gp";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn timeseries_csv(series: &TimeSeries) -> String {
    let mut s = Record::COLUMNS.join(",");
    s.push('\n');
    for r in series.records() {
        let row: Vec<String> = r.values().iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_timeseries(text: &str) -> Result<TimeSeries, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != Record::COLUMNS.join(",") {
        return Err(CliError::Config(format!("time series: unexpected header '{header}'")));
    }
    let mut series = TimeSeries::new();
    for (n, line) in lines.enumerate() {
        let bad = || CliError::Config(format!("time series row {}: '{line}'", n + 1));
        let v: Vec<f64> = line.split(',').map(|s| s.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let v: [f64; 8] = v.try_into().map_err(|_| bad())?;
        series.push(Record::from_values(v)).map_err(|_| bad())?;
    }
    Ok(series)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(CliError::io(path))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

/// x nodes at the base spatial spacing, vx nodes at the finest velocity
/// spacing, covering the whole domain.
pub fn projection_grid(c: &SimulationConfig) -> ProjectionGrid {
    let p = &c.problem;
    let periodic_x = p.periodic()[0];
    let nx = c.base_cells[0];
    let ratio: usize = c.refinements.iter().map(|r| r.ratio[2]).product();
    let nv = c.base_cells[2] * ratio;
    ProjectionGrid {
        lo: [p.lo[0], -p.v_max],
        spacing: [(p.hi[0] - p.lo[0]) / nx as f64, 2.0 * p.v_max / nv as f64],
        n: [if periodic_x { nx } else { nx + 1 }, nv + 1],
        periodic_x,
    }
}

pub fn projection_path(dir: &Path, t: f64) -> PathBuf {
    dir.join(format!("proj_xvx_{t}.csv"))
}

pub fn projection_csv(p: &Projection) -> String {
    let mut s = String::from("x,vx,F\n");
    for j in 0..p.grid.n[1] {
        for i in 0..p.grid.n[0] {
            let [x, v] = p.grid.node(i, j);
            let _ = writeln!(s, "{},{},{}", fmt_f64(x), fmt_f64(v), fmt_f64(p.get(i, j)));
        }
    }
    s
}

/// Gnuplot script for the field amplitude and RMS histories.
pub fn plot_script(kind: ProblemKind, eta: f64, damping: Option<f64>) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset terminal pngcairo size 900,600\nset xlabel 't'\nset grid\n\n\
         set output 'amplitude.png'\nset logscale y\nset ylabel '|E_x|'\n",
    );
    let fitted = damping.map(|g| format!(" title sprintf('fitted rate %.4f', {g})")).unwrap_or_default();
    let _ = writeln!(
        s,
        "plot '{TIMESERIES}' every ::1 using 1:2 with lines title 'L2', \\\n     '{TIMESERIES}' every ::1 using 1:3 with lines title 'max'{}\n",
        if fitted.is_empty() { String::new() } else { format!(", \\\n     1/0{fitted}") }
    );
    s.push_str("set output 'rms.png'\nunset logscale y\nset ylabel 'RMS'\n");
    let targets = match kind {
        ProblemKind::SemiGaussian => KvBeam::normalized(eta).ok().map(|b| b.rms_targets()),
        _ => None,
    };
    match targets {
        Some(t) => {
            let _ = writeln!(
                s,
                "plot '{TIMESERIES}' every ::1 using 1:6 with lines title 'x', {} title 'K-V x', \\\n     \
                 '{TIMESERIES}' every ::1 using 1:7 with lines title 'vx', {} title 'K-V vx'",
                t.x, t.vx
            );
        }
        None => {
            let _ = writeln!(
                s,
                "plot '{TIMESERIES}' every ::1 using 1:6 with lines title 'x', \\\n     \
                 '{TIMESERIES}' every ::1 using 1:7 with lines title 'vx'"
            );
        }
    }
    s
}
