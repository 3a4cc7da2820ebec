//! Richardson convergence study over three nested resolutions.
//!
//! The configured run is the finest one. The two coarser runs halve the
//! cell counts and double `dt` each time, and remap at the same physical
//! times, so the remap interval in steps halves too.

use std::fmt::Write as _;
use std::path::PathBuf;

use phasepic_core::diagnostics::{convergence_order, richardson_error};
use phasepic_core::field::VectorField;
use phasepic_core::sim::{run_simulation, RunReport, SimulationConfig, StepState};
use phasepic_core::Error;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{create_dir, fmt_f64, write_file, MANIFEST};

pub const TABLE: &str = "convergence.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub field: VectorField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    /// `|E^2h - E^4h|_inf` per component.
    pub e_2h: [f64; 2],
    /// `|E^h - E^2h|_inf` per component.
    pub e_h: [f64; 2],
    /// NaN when an error vanishes at this time.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<Row>,
    pub e_2h_max: [f64; 2],
    pub e_h_max: [f64; 2],
    /// Order from the largest errors over all times.
    pub q: f64,
}

impl Table {
    pub fn csv(&self) -> String {
        let mut s = String::from("t,e2h_x,e2h_y,eh_x,eh_y,q\n");
        let mut row = |t: String, a: [f64; 2], b: [f64; 2], q: f64| {
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{}",
                fmt_f64(a[0]),
                fmt_f64(a[1]),
                fmt_f64(b[0]),
                fmt_f64(b[1]),
                fmt_f64(q)
            );
        };
        for r in &self.rows {
            row(fmt_f64(r.t), r.e_2h, r.e_h, r.q);
        }
        row("max".into(), self.e_2h_max, self.e_h_max, self.q);
        s
    }
}

/// Coarse, medium and fine configurations, `fine` being the last.
pub fn nested_configs(fine: &SimulationConfig) -> Result<[SimulationConfig; 3], Error> {
    if let Some(c) = fine.base_cells.iter().find(|&&c| c % 4 != 0) {
        return Err(Error::NotNested(format!("{c} base cells cannot be halved twice")));
    }
    let interval = fine.remap.interval;
    if !interval.is_multiple_of(4) {
        return Err(Error::NotNested(format!(
            "remap interval {interval} is not a multiple of 4, so remap times would differ between resolutions"
        )));
    }
    let coarsen = |s: usize| {
        let mut c = fine.clone();
        c.base_cells = fine.base_cells.map(|n| n / s);
        c.dt = fine.dt * s as f64;
        c.remap.interval = interval / s;
        c
    };
    let out = [coarsen(4), coarsen(2), fine.clone()];
    for c in &out {
        c.validate()?;
        c.build_grid()?;
    }
    Ok(out)
}

/// Comparison times: `times` if given, else every step of `coarse` after 0.
pub fn sample_times(coarse: &SimulationConfig, times: &[f64]) -> Result<Vec<f64>, Error> {
    if times.is_empty() {
        return Ok((1..=coarse.steps()).map(|k| k as f64 * coarse.dt).collect());
    }
    for &t in times {
        let k = t / coarse.dt;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) || t < 0.0 || t > coarse.t_end + 0.5 * coarse.dt {
            return Err(Error::InvalidParameter(format!(
                "comparison time {t} is not a step of the coarsest run (dt = {})",
                coarse.dt
            )));
        }
    }
    Ok(times.to_vec())
}

/// Fields of one run at `times`, with the run's report.
pub fn sample_fields(config: SimulationConfig, times: &[f64]) -> Result<(Vec<Sample>, RunReport), Error> {
    let tol = 1e-6 * config.dt;
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    let report = run_simulation(config, &mut |s: &StepState<'_>| {
        while next < times.len() && (s.t - times[next]).abs() <= tol {
            out.push(Sample { t: times[next], field: s.field.clone() });
            next += 1;
        }
        Ok(())
    })?;
    if out.len() != times.len() {
        return Err(Error::Precondition(format!("run stopped before t = {}", times[out.len()])));
    }
    Ok((out, report))
}

/// Errors and orders from sampled fields of the coarse, medium and fine
/// runs.
pub fn convergence_table(runs: [&[Sample]; 3]) -> Result<Table, Error> {
    let [c, m, f] = runs;
    if c.len() != m.len() || m.len() != f.len() {
        return Err(Error::Shape(format!("runs have {}, {} and {} samples", c.len(), m.len(), f.len())));
    }
    if c == m && m == f {
        return Err(Error::Degenerate("all three runs are identical, so every Richardson error is 0".into()));
    }
    let mut rows = Vec::with_capacity(c.len());
    let (mut e_2h_max, mut e_h_max) = ([0.0f64; 2], [0.0f64; 2]);
    for ((c, m), f) in c.iter().zip(m).zip(f) {
        if c.t != m.t || m.t != f.t {
            return Err(Error::Shape(format!("sample times {}, {} and {} differ", c.t, m.t, f.t)));
        }
        let e_2h = richardson_error(&m.field, &c.field)?;
        let e_h = richardson_error(&f.field, &m.field)?;
        for d in 0..2 {
            e_2h_max[d] = e_2h_max[d].max(e_2h[d]);
            e_h_max[d] = e_h_max[d].max(e_h[d]);
        }
        rows.push(Row { t: c.t, e_2h, e_h, q: convergence_order(e_2h, e_h).unwrap_or(f64::NAN) });
    }
    let q = convergence_order(e_2h_max, e_h_max)?;
    Ok(Table { rows, e_2h_max, e_h_max, q })
}

pub struct StudyOutcome {
    pub table: Table,
    /// Coarse, medium and fine.
    pub reports: Vec<RunReport>,
    pub files: Vec<PathBuf>,
}

/// Runs the three resolutions of `config` and writes the error table.
pub fn run_convergence_study(config: &RunConfig) -> Result<StudyOutcome, CliError> {
    let configs = nested_configs(&config.sim).map_err(|e| CliError::Config(e.to_string()))?;
    let times = sample_times(&configs[0], &config.converge_times).map_err(|e| CliError::Config(e.to_string()))?;
    let dir = &config.output;
    create_dir(dir)?;
    let manifest = dir.join(MANIFEST);
    write_file(&manifest, &config.manifest())?;
    let mut samples = Vec::with_capacity(3);
    let mut reports = Vec::with_capacity(3);
    for c in configs {
        let (s, r) = sample_fields(c, &times).map_err(|source| CliError::Simulation { source, dump: None })?;
        samples.push(s);
        reports.push(r);
    }
    let table = convergence_table([&samples[0], &samples[1], &samples[2]]).map_err(CliError::Analysis)?;
    let path = dir.join(TABLE);
    write_file(&path, &table.csv())?;
    Ok(StudyOutcome { table, reports, files: vec![manifest, path] })
}
