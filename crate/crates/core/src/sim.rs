//! The PIC time loop with periodic remapping.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::diagnostics::{field_amplitude, Record, TimeSeries};
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{CompositeGrid, Refinement, RegionAlignment};
use crate::particles::{quiet_start_init, rk2_advance, ExternalField, FieldSolver, NoExternalField, ParticleSet};
use crate::poisson::{FreeSpaceFieldSolver, PeriodicFieldSolver};
use crate::problems::{rms, Coordinate, FieldBc, ProblemSpec};
use crate::remap::{remap, RemapConfig, RemapReport};
use crate::sum::Accumulator;

/// Environment variable that sets the number of worker threads.
pub const WORKERS_ENV: &str = "PHASEPIC_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub problem: ProblemSpec,
    /// Base-level cells in x, y, vx, vy.
    pub base_cells: [usize; 4],
    pub refinements: Vec<Refinement>,
    pub alignment: RegionAlignment,
    pub dt: f64,
    pub t_end: f64,
    /// `interval == 0` disables remapping.
    pub remap: RemapConfig,
    /// Field-grid spacing over base spatial spacing.
    pub field_ratio: usize,
    /// Worker threads; falls back to the environment, then to all cores.
    pub workers: Option<usize>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.remap.interval > 0 {
            self.remap.validate()?;
        } else if !(self.remap.drop_threshold >= 0.0) {
            return Err(Error::InvalidParameter("drop threshold must be >= 0".into()));
        }
        if self.field_ratio == 0 {
            return Err(Error::InvalidParameter("field ratio must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        self.field_geometry()?;
        Ok(())
    }

    pub fn build_grid(&self) -> Result<CompositeGrid> {
        let p = &self.problem;
        Ok(CompositeGrid::build(p.phase_lo(), p.phase_hi(), self.base_cells, &self.refinements, self.alignment)?
            .with_periodic(p.periodic()))
    }

    /// Node count, spacing and origin of the field grid.
    pub fn field_geometry(&self) -> Result<([usize; 2], [f64; 2], [f64; 2])> {
        let p = &self.problem;
        let r = self.field_ratio;
        let mut n = [0; 2];
        let mut h = [0.0; 2];
        for d in 0..2 {
            let cells = self.base_cells[d];
            if !cells.is_multiple_of(r) {
                return Err(Error::InvalidParameter(format!(
                    "field ratio {r} does not divide the {cells} base cells in direction {d}"
                )));
            }
            let m = cells / r;
            h[d] = (p.hi[d] - p.lo[d]) / m as f64;
            n[d] = match p.bc {
                FieldBc::Periodic => m,
                FieldBc::FreeSpace => m + 1,
            };
        }
        Ok((n, h, p.lo))
    }

    /// Number of steps to reach `t_end`.
    pub fn steps(&self) -> usize {
        let s = self.t_end / self.dt;
        (s - 1e-9 * s.max(1.0)).ceil().max(0.0) as usize
    }

    pub fn worker_count(&self) -> Result<usize> {
        if let Some(n) = self.workers {
            return Ok(n);
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::InvalidParameter(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
            },
            Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
        }
    }
}

/// Charge bookkeeping over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConservationLedger {
    /// Charge of the loaded particles.
    pub initial_charge: f64,
    /// Charge of cells skipped at load.
    pub initial_dropped: f64,
    pub initial_dropped_count: usize,
    /// Charge discarded by remap thresholds.
    pub dropped: f64,
    pub dropped_count: usize,
    /// Charge deposited outside the phase-space domain.
    pub lost: f64,
    pub escaped: usize,
    pub final_charge: f64,
    /// Largest `|imbalance| / |charge before|` over all remaps.
    pub worst_remap_imbalance: f64,
}

impl ConservationLedger {
    /// `Q_final - Q_initial + dropped + lost`; zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.final_charge - self.initial_charge + self.dropped + self.lost
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemapEvent {
    pub step: usize,
    pub t: f64,
    pub report: RemapReport,
}

/// State handed to an [`Observer`] after every step, and once at `t = 0`.
pub struct StepState<'a> {
    pub step: usize,
    pub t: f64,
    pub particles: &'a ParticleSet,
    /// Self-consistent field at `t`.
    pub field: &'a VectorField,
    pub record: &'a Record,
    /// Set when a remap happened at the end of this step.
    pub remap: Option<&'a RemapEvent>,
}

pub trait Observer {
    fn observe(&mut self, state: &StepState<'_>) -> Result<()>;
}

impl<F: FnMut(&StepState<'_>) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &StepState<'_>) -> Result<()> {
        self(state)
    }
}

pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _state: &StepState<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub series: TimeSeries,
    pub ledger: ConservationLedger,
    pub remaps: Vec<RemapEvent>,
    pub steps: usize,
    pub initial_particles: usize,
    pub final_particles: usize,
    pub workers: usize,
    pub wall_time: Duration,
}

pub struct Simulation {
    config: SimulationConfig,
    grid: CompositeGrid,
    pool: Arc<rayon::ThreadPool>,
    particles: ParticleSet,
    solver: Box<dyn FieldSolver>,
    external: Box<dyn ExternalField + Send>,
    field: VectorField,
    step: usize,
    series: TimeSeries,
    ledger: ConservationLedger,
    remaps: Vec<RemapEvent>,
    minf: f64,
    initial_particles: usize,
    workers: usize,
}

impl Simulation {
    /// Loads the initial particles and solves for the initial field.
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let workers = config.worker_count()?;
        let pool =
            rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| Error::Workers(e.to_string()))?;
        let pool = Arc::new(pool);
        pool.clone().install(|| Self::init(config, pool, workers))
    }

    fn init(config: SimulationConfig, pool: Arc<rayon::ThreadPool>, workers: usize) -> Result<Self> {
        let grid = config.build_grid()?;
        let p = &config.problem;
        let qs = quiet_start_init(&grid, |x| p.f0(x), config.remap.drop_threshold, p.species)?;
        let (n, h, origin) = config.field_geometry()?;
        let mut solver: Box<dyn FieldSolver> = match p.bc {
            FieldBc::Periodic => Box::new(PeriodicFieldSolver::new(n, h, origin)?),
            FieldBc::FreeSpace => Box::new(FreeSpaceFieldSolver::new(n, h, origin)?),
        };
        let external: Box<dyn ExternalField + Send> = match p.external_field() {
            Some(e) => Box::new(e),
            None => Box::new(NoExternalField),
        };
        let particles = qs.particles;
        let field = solver.solve(&particles).map_err(|e| at_step(0, 0.0, e))?;
        let initial_charge = particles.total_charge();
        let ledger = ConservationLedger {
            initial_charge,
            initial_dropped: qs.dropped_charge,
            initial_dropped_count: qs.dropped_count,
            final_charge: initial_charge,
            ..Default::default()
        };
        let initial_particles = particles.len();
        let mut sim = Self {
            config,
            grid,
            pool,
            particles,
            solver,
            external,
            field,
            step: 0,
            series: TimeSeries::new(),
            ledger,
            remaps: Vec::new(),
            minf: f64::NAN,
            initial_particles,
            workers,
        };
        let r = sim.record()?;
        sim.series.push(r)?;
        Ok(sim)
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn grid(&self) -> &CompositeGrid {
        &self.grid
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    pub fn ledger(&self) -> &ConservationLedger {
        &self.ledger
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    fn record(&self) -> Result<Record> {
        let a = field_amplitude(&self.field);
        let (rms_x, rms_vx) = if self.particles.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (rms(&self.particles, Coordinate::X)?, rms(&self.particles, Coordinate::Vx)?)
        };
        Ok(Record {
            t: self.time(),
            ex_l2: a.l2[0],
            ex_linf: a.linf[0],
            ey_l2: a.l2[1],
            total_q: self.particles.total_charge(),
            rms_x,
            rms_vx,
            minf: self.minf,
        })
    }

    /// One RK2 step, a remap when due, and the field at the new time.
    /// Returns the remap made at the end of the step, if any.
    pub fn step(&mut self) -> Result<Option<&RemapEvent>> {
        let pool = self.pool.clone();
        let remapped = pool.install(|| self.step_inner())?;
        Ok(if remapped { self.remaps.last() } else { None })
    }

    fn step_inner(&mut self) -> Result<bool> {
        let dt = self.config.dt;
        let t = self.time();
        let next = self.step + 1;
        let t_next = next as f64 * dt;
        rk2_advance(&mut self.particles, &self.field, self.solver.as_mut(), self.external.as_ref(), dt, t)
            .map_err(|e| at_step(next, t, e))?;
        self.step = next;

        let interval = self.config.remap.interval;
        let mut remapped = false;
        if interval > 0 && next.is_multiple_of(interval) {
            let (fresh, report) =
                remap(&self.particles, &self.grid, &self.config.remap).map_err(|e| at_step(next, t_next, e))?;
            self.particles = fresh;
            self.minf = report.positivity.min_f;
            let l = &mut self.ledger;
            let mut dropped = Accumulator::default();
            dropped.add(l.dropped);
            dropped.add(report.dropped);
            l.dropped = dropped.value();
            l.dropped_count += report.dropped_count;
            l.lost += report.lost;
            l.escaped += report.escaped;
            if report.charge_before != 0.0 {
                l.worst_remap_imbalance =
                    l.worst_remap_imbalance.max((report.imbalance() / report.charge_before).abs());
            }
            self.remaps.push(RemapEvent { step: next, t: t_next, report });
            remapped = true;
        }
        self.ledger.final_charge = self.particles.total_charge();
        self.field = self.solver.solve(&self.particles).map_err(|e| at_step(next, t_next, e))?;
        let r = self.record()?;
        self.series.push(r)?;
        Ok(remapped)
    }

    fn notify(&self, observer: &mut dyn Observer, remapped: bool) -> Result<()> {
        let record = self.series.records().last().expect("series holds the initial record");
        observer.observe(&StepState {
            step: self.step,
            t: self.time(),
            particles: &self.particles,
            field: &self.field,
            record,
            remap: if remapped { self.remaps.last() } else { None },
        })
    }

    /// Steps to `t_end`, reporting the initial state and every step.
    pub fn run(&mut self, observer: &mut dyn Observer) -> Result<()> {
        let start = self.step;
        if start == 0 {
            self.notify(observer, false)?;
        }
        for _ in start..self.config.steps() {
            let remapped = self.step()?.is_some();
            self.notify(observer, remapped)?;
        }
        Ok(())
    }

    pub fn report(&self, wall_time: Duration) -> RunReport {
        RunReport {
            series: self.series.clone(),
            ledger: self.ledger.clone(),
            remaps: self.remaps.clone(),
            steps: self.step,
            initial_particles: self.initial_particles,
            final_particles: self.particles.len(),
            workers: self.workers,
            wall_time,
        }
    }
}

fn at_step(step: usize, t: f64, e: Error) -> Error {
    Error::AtStep { step, t, source: Box::new(e) }
}

/// Runs a configuration to completion.
pub fn run_simulation(config: SimulationConfig, observer: &mut dyn Observer) -> Result<RunReport> {
    let start = Instant::now();
    let mut sim = Simulation::new(config)?;
    sim.run(observer)?;
    Ok(sim.report(start.elapsed()))
}
