//! Line-oriented `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Lists are whitespace
//! separated. `problem` is required and selects the preset every other key
//! starts from.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::PathBuf;

use phasepic_core::grid::{Refinement, RegionAlignment};
use phasepic_core::problems::{ProblemKind, ProblemSpec};
use phasepic_core::remap::RemapConfig;
use phasepic_core::sim::SimulationConfig;

use crate::error::CliError;

pub const KEYS: [&str; 26] = [
    "problem",
    "alpha",
    "kx",
    "ky",
    "v_max",
    "eta",
    "domain",
    "cells",
    "refine_v",
    "refine_ratio",
    "alignment",
    "dt",
    "t_end",
    "remap_interval",
    "drop_threshold",
    "iterations",
    "radius",
    "max_radius",
    "field_ratio",
    "workers",
    "output",
    "snapshots",
    "seed",
    "mode",
    "levels",
    "converge_times",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Converge,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::Converge => "converge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimulationConfig,
    /// Square velocity box `[lo, hi]²` refined over all of space.
    pub refine_v: Option<[f64; 2]>,
    pub refine_ratio: usize,
    pub output: PathBuf,
    /// Times at which an (x, vx) projection is written.
    pub snapshots: Vec<f64>,
    /// Recorded for completeness; the pipeline draws no random numbers.
    pub seed: u64,
    pub mode: Mode,
    /// Resolutions in a convergence study.
    pub levels: usize,
    /// Comparison times; empty means every coarsest step.
    pub converge_times: Vec<f64>,
}

impl RunConfig {
    pub fn preset(kind: ProblemKind) -> Self {
        let problem = ProblemSpec::preset(kind);
        let (cells, refine_v, dt, t_end, snapshots) = match kind {
            ProblemKind::Landau => ([32, 32, 32, 32], Some([-3.0, 3.0]), 0.125, 20.0, vec![20.0]),
            ProblemKind::TwoStream => ([32, 32, 32, 32], Some([-4.5, 4.5]), 0.125, 30.0, vec![20.0]),
            ProblemKind::SemiGaussian => ([128, 128, 256, 256], None, 0.00052925, FRAC_PI_2, vec![]),
        };
        let mut c = Self {
            sim: SimulationConfig {
                problem,
                base_cells: cells,
                refinements: vec![],
                alignment: RegionAlignment::SnapOutward,
                dt,
                t_end,
                remap: RemapConfig::default(),
                field_ratio: 2,
                workers: None,
            },
            refine_v,
            refine_ratio: 2,
            output: PathBuf::from("out"),
            snapshots,
            seed: 0,
            mode: Mode::Single,
            levels: 3,
            converge_times: vec![],
        };
        c.sync_refinements();
        c
    }

    fn sync_refinements(&mut self) {
        let p = &self.sim.problem;
        self.sim.refinements = match self.refine_v {
            Some([lo, hi]) => vec![Refinement {
                lo: [p.lo[0], p.lo[1], lo, lo],
                hi: [p.hi[0], p.hi[1], hi, hi],
                ratio: [1, 1, self.refine_ratio, self.refine_ratio],
            }],
            None => vec![],
        };
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sim.build_grid().map_err(|e| CliError::Config(e.to_string()))?;
        let t_max = self.sim.t_end + 0.5 * self.sim.dt;
        if let Some(&t) = self.snapshots.iter().find(|&&t| !(0.0..=t_max).contains(&t)) {
            return Err(CliError::Config(format!("snapshots: time {t} is outside [0, t_end]")));
        }
        if self.levels != 3 {
            return Err(CliError::Config(format!("levels: only 3 resolutions are supported, got {}", self.levels)));
        }
        Ok(())
    }

    /// Resolved configuration in the input format; parsing it back gives
    /// the same configuration.
    pub fn manifest(&self) -> String {
        let s = &self.sim;
        let p = &s.problem;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut m = String::new();
        let _ = writeln!(m, "# phasepic {}", env!("CARGO_PKG_VERSION"));
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(m, "{k} = {v}");
        };
        kv("problem", p.kind.name().into());
        kv("alpha", p.alpha.to_string());
        kv("kx", p.k[0].to_string());
        kv("ky", p.k[1].to_string());
        kv("v_max", p.v_max.to_string());
        kv("eta", p.eta.to_string());
        kv("domain", list(&[p.lo[0], p.lo[1], p.hi[0], p.hi[1]]));
        kv("cells", s.base_cells.map(|c| c.to_string()).join(" "));
        kv("refine_v", self.refine_v.map_or("none".into(), |r| list(&r)));
        kv("refine_ratio", self.refine_ratio.to_string());
        kv(
            "alignment",
            match s.alignment {
                RegionAlignment::Strict => "strict",
                RegionAlignment::SnapOutward => "snap",
            }
            .into(),
        );
        kv("dt", s.dt.to_string());
        kv("t_end", s.t_end.to_string());
        kv("remap_interval", s.remap.interval.to_string());
        kv("drop_threshold", s.remap.drop_threshold.to_string());
        kv("iterations", s.remap.iterations.to_string());
        kv("radius", s.remap.radius.to_string());
        kv("max_radius", s.remap.max_radius.to_string());
        kv("field_ratio", s.field_ratio.to_string());
        kv("workers", s.workers.map_or("auto".into(), |w| w.to_string()));
        kv("output", self.output.display().to_string());
        kv("snapshots", list(&self.snapshots));
        kv("seed", self.seed.to_string());
        kv("mode", self.mode.name().into());
        kv("levels", self.levels.to_string());
        kv("converge_times", list(&self.converge_times));
        m
    }
}

/// Raw `key = value` pairs; a repeated key keeps its last value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Entries(BTreeMap<String, String>);

impl Entries {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut e = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value, got '{line}'", n + 1)));
            };
            e.set(k.trim(), v.trim())?;
        }
        Ok(e)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key '{key}'; valid keys: {}", KEYS.join(", "))));
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// `--key=value` or `--key value` pairs.
    pub fn apply_flags(&mut self, flags: &[String]) -> Result<(), CliError> {
        let mut it = flags.iter();
        while let Some(f) = it.next() {
            let Some(body) = f.strip_prefix("--") else {
                return Err(CliError::Config(format!("expected --key=value, got '{f}'")));
            };
            match body.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let v = it.next().ok_or_else(|| CliError::Config(format!("flag --{body} needs a value")))?;
                    self.set(body, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let kind = self
            .0
            .get("problem")
            .ok_or_else(|| CliError::Config("problem: required (landau, twostream or beam)".into()))?;
        let kind = ProblemKind::parse(kind).map_err(|e| CliError::Config(format!("problem: {e}")))?;
        let mut c = RunConfig::preset(kind);
        let p = &mut c.sim.problem;
        if let Some(v) = self.get::<f64>("alpha")? {
            p.alpha = v;
        }
        let kx = self.get::<f64>("kx")?;
        let ky = self.get::<f64>("ky")?;
        if kx.is_some() || ky.is_some() {
            let k = [kx.unwrap_or(p.k[0]), ky.unwrap_or(p.k[1])];
            *p = if p.periodic()[0] { p.clone().with_wavenumbers(k) } else { ProblemSpec { k, ..p.clone() } };
        }
        if let Some(v) = self.get::<f64>("v_max")? {
            p.v_max = v;
        }
        if let Some(v) = self.get::<f64>("eta")? {
            p.eta = v;
        }
        if let Some(d) = self.list::<f64>("domain", Some(4))? {
            p.lo = [d[0], d[1]];
            p.hi = [d[2], d[3]];
        }
        if let Some(v) = self.list::<usize>("cells", Some(4))? {
            c.sim.base_cells = [v[0], v[1], v[2], v[3]];
        }
        if let Some(v) = self.0.get("refine_v") {
            c.refine_v = if v == "none" {
                None
            } else {
                let r = self.list::<f64>("refine_v", Some(2))?.expect("key present");
                Some([r[0], r[1]])
            };
        }
        if let Some(v) = self.get("refine_ratio")? {
            c.refine_ratio = v;
        }
        if let Some(v) = self.0.get("alignment") {
            c.sim.alignment = match v.as_str() {
                "strict" => RegionAlignment::Strict,
                "snap" => RegionAlignment::SnapOutward,
                _ => return Err(CliError::Config(format!("alignment: expected strict or snap, got '{v}'"))),
            };
        }
        if let Some(v) = self.get("dt")? {
            c.sim.dt = v;
        }
        if let Some(v) = self.get("t_end")? {
            c.sim.t_end = v;
        }
        let r = &mut c.sim.remap;
        if let Some(v) = self.get("remap_interval")? {
            r.interval = v;
        }
        if let Some(v) = self.get("drop_threshold")? {
            r.drop_threshold = v;
        }
        if let Some(v) = self.get("iterations")? {
            r.iterations = v;
        }
        if let Some(v) = self.get("radius")? {
            r.radius = v;
        }
        if let Some(v) = self.get("max_radius")? {
            r.max_radius = v;
        }
        if let Some(v) = self.get("field_ratio")? {
            c.sim.field_ratio = v;
        }
        if let Some(v) = self.0.get("workers") {
            c.sim.workers = if v == "auto" { None } else { self.get("workers")? };
        }
        if let Some(v) = self.0.get("output") {
            c.output = PathBuf::from(v);
        }
        match self.list("snapshots", None)? {
            Some(v) => c.snapshots = v,
            None => {
                let t_max = c.sim.t_end + 0.5 * c.sim.dt;
                c.snapshots.retain(|&t| t <= t_max);
            }
        }
        if let Some(v) = self.get("seed")? {
            c.seed = v;
        }
        if let Some(v) = self.0.get("mode") {
            c.mode = match v.as_str() {
                "single" => Mode::Single,
                "converge" => Mode::Converge,
                _ => return Err(CliError::Config(format!("mode: expected single or converge, got '{v}'"))),
            };
        }
        if let Some(v) = self.get("levels")? {
            c.levels = v;
        }
        if let Some(v) = self.list("converge_times", None)? {
            c.converge_times = v;
        }
        c.sync_refinements();
        c.validate()?;
        Ok(c)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.0
            .get(key)
            .map(|v| v.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'"))))
            .transpose()
    }

    fn list<T: std::str::FromStr>(&self, key: &str, len: Option<usize>) -> Result<Option<Vec<T>>, CliError> {
        let Some(v) = self.0.get(key) else { return Ok(None) };
        let items = v
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{s}'"))))
            .collect::<Result<Vec<T>, _>>()?;
        match len {
            Some(n) if items.len() != n => {
                Err(CliError::Config(format!("{key}: expected {n} values, got {}", items.len())))
            }
            _ => Ok(Some(items)),
        }
    }
}

/// Parses a configuration file's text with flag overrides applied on top.
pub fn parse_config(text: &str, flags: &[String]) -> Result<RunConfig, CliError> {
    let mut e = Entries::parse(text)?;
    e.apply_flags(flags)?;
    e.resolve()
}
