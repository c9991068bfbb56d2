//! TOML run configuration.
//!
//! Every block and key is optional and falls back to the documented
//! default; unknown keys are rejected. Semantic problems are collected
//! across the whole document and reported together, each prefixed with
//! its key path.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::integrate::RunConfig;
use crate::model::{validate_params, ModelParameters, ViolationKind};
use crate::monitor::DEFAULT_TOL_REL;
use crate::output::SnapshotFormat;
use crate::picard::PicardConfig;
use crate::preset::InitialPreset;
use crate::state::Formulation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            lx: 2.0,
            ly: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Direct,
    Picard,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Solver::Direct),
            "picard" => Ok(Solver::Picard),
            _ => Err(Error::Config(vec![format!(
                "solver: expected \"direct\" or \"picard\", got {s:?}"
            )])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub formulation: Formulation,
    pub snapshot_every: u64,
    pub monitor_every: u64,
    pub solver: Solver,
    pub strict_monitors: bool,
    pub allow_unproven: bool,
    pub monitor_tol: f64,
    pub picard: PicardConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            t_end: r.t_end,
            cfl_safety: r.cfl_safety,
            dt_max: r.dt_max,
            formulation: r.formulation,
            snapshot_every: r.snapshot_every,
            monitor_every: r.monitor_every,
            solver: Solver::Direct,
            strict_monitors: false,
            allow_unproven: false,
            monitor_tol: DEFAULT_TOL_REL,
            picard: PicardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub formats: Vec<SnapshotFormat>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("output"),
            formats: vec![SnapshotFormat::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub grid: GridSpec,
    pub params: ModelParameters,
    pub initial: InitialPreset,
    pub run: RunSpec,
    pub output: OutputSpec,
}

fn positive(errs: &mut Vec<String>, key: &str, x: f64) {
    if !(x > 0.0 && x.is_finite()) {
        errs.push(format!("{key}: must be positive and finite (got {x})"));
    }
}

fn nonnegative(errs: &mut Vec<String>, key: &str, x: f64) {
    if !(x >= 0.0 && x.is_finite()) {
        errs.push(format!("{key}: must be nonnegative and finite (got {x})"));
    }
}

impl SimulationConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    pub fn run_config(&self) -> RunConfig {
        let r = &self.run;
        RunConfig {
            t_end: r.t_end,
            cfl_safety: r.cfl_safety,
            dt_max: r.dt_max,
            formulation: r.formulation,
            snapshot_every: r.snapshot_every,
            monitor_every: r.monitor_every,
            strict_monitors: r.strict_monitors,
            monitor_tol: r.monitor_tol,
        }
    }

    /// Every semantic problem in the document, with key paths.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let g = &self.grid;
        for (key, n) in [("grid.nx", g.nx), ("grid.ny", g.ny)] {
            if n < Grid2D::MIN_CELLS {
                let name = &key[5..];
                errs.push(format!(
                    "{key}: {name} ≥ {} required (got {n})",
                    Grid2D::MIN_CELLS
                ));
            }
        }
        positive(&mut errs, "grid.lx", g.lx);
        positive(&mut errs, "grid.ly", g.ly);

        for v in validate_params(&self.params) {
            match v.kind {
                ViolationKind::UnprovenRegime if self.run.allow_unproven => {}
                ViolationKind::UnprovenRegime => errs.push(format!(
                    "params: {v}; global existence is only established when growth dominates \
                     haptotactic loss (pass --allow-unproven or set run.allow_unproven to run anyway)"
                )),
                _ => errs.push(format!("params: {v}")),
            }
        }
        for (key, x) in [
            ("params.chi_d", self.params.chi_d),
            ("params.chi_s", self.params.chi_s),
            ("params.mu_d", self.params.mu_d),
            ("params.mu_s", self.params.mu_s),
            ("params.mu_v", self.params.mu_v),
            ("params.mu_max", self.params.mu_max),
        ] {
            if !x.is_finite() {
                errs.push(format!("{key}: must be finite (got {x})"));
            }
        }

        match &self.initial {
            InitialPreset::TumourBump {
                amplitude,
                width,
                csc_fraction,
            } => {
                nonnegative(&mut errs, "initial.amplitude", *amplitude);
                positive(&mut errs, "initial.width", *width);
                nonnegative(&mut errs, "initial.csc_fraction", *csc_fraction);
            }
            InitialPreset::Uniform { cd, cs, v, m } => {
                nonnegative(&mut errs, "initial.cd", *cd);
                nonnegative(&mut errs, "initial.cs", *cs);
                nonnegative(&mut errs, "initial.m", *m);
                if !(0.0..=1.0).contains(v) {
                    errs.push(format!("initial.v: must lie in [0, 1] (got {v})"));
                }
            }
            InitialPreset::FromFiles { .. } => {}
            InitialPreset::RandomModes { modes, mean, .. } => {
                if *modes < 1 {
                    errs.push("initial.modes: at least 1 mode required".to_string());
                }
                nonnegative(&mut errs, "initial.mean", *mean);
            }
        }

        let r = &self.run;
        positive(&mut errs, "run.t_end", r.t_end);
        if !(r.cfl_safety > 0.0 && r.cfl_safety <= 1.0) {
            errs.push(format!(
                "run.cfl_safety: must lie in (0, 1] (got {})",
                r.cfl_safety
            ));
        }
        positive(&mut errs, "run.dt_max", r.dt_max);
        nonnegative(&mut errs, "run.monitor_tol", r.monitor_tol);
        positive(&mut errs, "run.picard.window", r.picard.window);
        positive(&mut errs, "run.picard.tol", r.picard.tol);
        if r.picard.max_iter < 1 {
            errs.push("run.picard.max_iter: at least 1 required".to_string());
        }
        if !(r.picard.inner_dt_factor >= 1.0 && r.picard.inner_dt_factor.is_finite()) {
            errs.push(format!(
                "run.picard.inner_dt_factor: must be at least 1 (got {})",
                r.picard.inner_dt_factor
            ));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.problems();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Resolves relative snapshot paths of a `from_files` preset against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let InitialPreset::FromFiles { cd, cs, v, m } = &mut self.initial {
            for p in [cd, cs, v, m] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}

/// Parses without semantic validation, so command-line overrides can be
/// applied first.
pub fn parse_config_unchecked(text: &str) -> Result<SimulationConfig> {
    toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let cfg = parse_config_unchecked(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file; `from_files` paths are taken relative to
/// the file's directory. Not validated.
pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_unchecked(&text).map_err(|e| match e {
        Error::Config(msgs) => Error::Config(
            msgs.into_iter()
                .map(|m| format!("{}: {m}", path.display()))
                .collect(),
        ),
        other => other,
    })?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

pub fn serialize_config(cfg: &SimulationConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(vec![e.to_string()]))
}
