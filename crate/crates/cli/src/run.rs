//! A single simulation with its output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use phasepic_core::diagnostics::{fit_damping_rate, project_xvx, Projection};
use phasepic_core::particles::ParticleSet;
use phasepic_core::problems::ProblemKind;
use phasepic_core::sim::{RunReport, Simulation, StepState};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{
    create_dir, fmt_f64, plot_script, projection_csv, projection_grid, projection_path, timeseries_csv, write_file,
    MANIFEST, PLOT, TIMESERIES,
};

pub struct RunOutcome {
    pub report: RunReport,
    pub files: Vec<PathBuf>,
}

/// Runs `config` and writes its artifacts into `config.output`.
pub fn simulate(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let dir = &config.output;
    create_dir(dir)?;
    let mut files = vec![dir.join(MANIFEST)];
    write_file(&files[0], &config.manifest())?;

    let start = Instant::now();
    let mut sim = Simulation::new(config.sim.clone()).map_err(|source| CliError::Simulation { source, dump: None })?;
    let grid = projection_grid(&config.sim);
    let dt = config.sim.dt;
    let mut pending: Vec<f64> = config.snapshots.clone();
    let mut snaps: Vec<(f64, Projection)> = Vec::new();
    let result = sim.run(&mut |s: &StepState<'_>| {
        let mut k = 0;
        while k < pending.len() {
            if (s.t - pending[k]).abs() <= 0.5 * dt {
                snaps.push((pending.swap_remove(k), project_xvx(s.particles, &grid)?));
            } else {
                k += 1;
            }
        }
        Ok(())
    });

    let ts = dir.join(TIMESERIES);
    write_file(&ts, &timeseries_csv(sim.series()))?;
    files.push(ts);
    if let Err(source) = result {
        let dump = dir.join(format!("dump_step{}.csv", sim.step_index()));
        write_file(&dump, &particle_csv(sim.particles()))?;
        return Err(CliError::Simulation { source, dump: Some(dump) });
    }

    snaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (t, p) in &snaps {
        let path = projection_path(dir, *t);
        write_file(&path, &projection_csv(p))?;
        files.push(path);
    }
    let report = sim.report(start.elapsed());
    let damping = match config.sim.problem.kind {
        ProblemKind::Landau => {
            let t = report.series.times();
            let a = report.series.column(|r| r.ex_l2);
            fit_damping_rate(&t, &a, (0.0, config.sim.t_end)).ok()
        }
        _ => None,
    };
    let plot = dir.join(PLOT);
    write_file(&plot, &plot_script(config.sim.problem.kind, config.sim.problem.eta, damping))?;
    files.push(plot);
    let summary = dir.join("report.txt");
    write_file(&summary, &summary_text(&report, damping))?;
    files.push(summary);
    Ok(RunOutcome { report, files })
}

pub fn particle_csv(p: &ParticleSet) -> String {
    let mut s = String::from("x,y,vx,vy,q\n");
    for k in 0..p.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(p.x[k]),
            fmt_f64(p.y[k]),
            fmt_f64(p.vx[k]),
            fmt_f64(p.vy[k]),
            fmt_f64(p.q[k])
        );
    }
    s
}

pub fn summary_text(r: &RunReport, damping: Option<f64>) -> String {
    let l = &r.ledger;
    let mut s = String::new();
    let _ = writeln!(s, "steps = {}", r.steps);
    let _ = writeln!(s, "remaps = {}", r.remaps.len());
    let _ = writeln!(s, "particles = {} -> {}", r.initial_particles, r.final_particles);
    let _ = writeln!(s, "workers = {}", r.workers);
    let _ = writeln!(s, "wall_time = {:.3} s", r.wall_time.as_secs_f64());
    let _ = writeln!(s, "initial_charge = {}", l.initial_charge);
    let _ = writeln!(s, "final_charge = {}", l.final_charge);
    let _ = writeln!(s, "dropped_at_load = {} ({} cells)", l.initial_dropped, l.initial_dropped_count);
    let _ = writeln!(s, "dropped_at_remap = {} ({} cells)", l.dropped, l.dropped_count);
    let _ = writeln!(s, "lost = {}", l.lost);
    let _ = writeln!(s, "charge_residual = {:e}", l.residual());
    let _ = writeln!(s, "worst_remap_imbalance = {:e}", l.worst_remap_imbalance);
    let flagged: usize = r.remaps.iter().map(|e| e.report.positivity.flagged).sum();
    let _ = writeln!(s, "flagged_cells = {flagged}");
    if let Some(g) = damping {
        let _ = writeln!(s, "damping_rate = {g}");
    }
    s
}

/// Reads a configuration file, applies flag overrides and resolves it.
pub fn load_config(path: &Path, flags: &[String]) -> Result<RunConfig, CliError> {
    crate::config::parse_config(&crate::output::read_file(path)?, flags)
}
