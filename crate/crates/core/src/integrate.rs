//! Explicit time stepping.
//!
//! Each step first advances the matrix `v` with the exact solution of its
//! logistic ODE (cell densities and enzyme frozen), then advances the cell
//! populations and the enzyme with one forward-Euler step of transport plus
//! reactions. The step size keeps every explicit update a nonnegative
//! combination of old values, so the scheme preserves signs up to roundoff.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::model::{reaction_rhs, ModelParameters, EPS_POS};
use crate::monitor::{self, BoundSet, MonitorReport};
use crate::state::{Formulation, State};
use crate::stencil::{
    drain_rate_original, drain_rate_transformed, haptotaxis_div_into, laplacian_into,
    transformed_diffusion_into, StencilWorkspace,
};

/// Guard added to rate denominators.
const RATE_GUARD: f64 = 1e-30;
/// Steps below this size are treated as a stiffness failure.
pub const DT_UNDERFLOW: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    /// Fraction `σ ∈ (0, 1]` of the largest sign-preserving step.
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub formulation: Formulation,
    /// Steps between snapshots; 0 writes only the initial and final state.
    pub snapshot_every: u64,
    /// Steps between monitor evaluations; 0 checks only the initial and final state.
    pub monitor_every: u64,
    /// Abort on the first hard monitor violation.
    pub strict_monitors: bool,
    pub monitor_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            cfl_safety: 0.9,
            dt_max: 0.01,
            formulation: Formulation::Original,
            snapshot_every: 0,
            monitor_every: 100,
            strict_monitors: false,
            monitor_tol: monitor::DEFAULT_TOL_REL,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            errs.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            errs.push(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            ));
        }
        if !(self.dt_max > 0.0) {
            errs.push(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if !(self.monitor_tol >= 0.0) {
            errs.push(format!(
                "monitor_tol must be nonnegative, got {}",
                self.monitor_tol
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidRunConfig(errs.join("; ")))
        }
    }
}

/// Cells nudged back into range, per field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampCounts {
    pub dcc: u64,
    pub csc: u64,
    pub ecm: u64,
    pub mmp: u64,
}

impl ClampCounts {
    pub fn total(&self) -> u64 {
        self.dcc + self.csc + self.ecm + self.mmp
    }

    fn add(&mut self, other: &ClampCounts) {
        self.dcc += other.dcc;
        self.csc += other.csc;
        self.ecm += other.ecm;
        self.mmp += other.mmp;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Time after the step.
    pub time: f64,
    pub dt: f64,
    /// Step halvings forced by the post-`v`-update rate check.
    pub retries: u32,
    /// Minima of the cell and enzyme fields before clamping, `[dcc, csc, mmp]`.
    pub pre_clamp_min: [f64; 3],
    /// Maxima of `[dcc, csc, mmp]` before clamping.
    pub pre_clamp_max: [f64; 3],
    /// `(min, max)` of each field after the step, `[dcc, csc, ecm, mmp]`.
    pub extrema: [(f64, f64); 4],
    pub clamps: ClampCounts,
    pub wall: Duration,
}

/// Space-time source terms added to the four equations (original variables).
pub trait Forcing {
    fn source(&self, x: f64, y: f64, t: f64) -> [f64; 4];

    /// Fills `out[f][k]` with the source of field `f` at cell `k`.
    fn fill(&self, grid: &Grid2D, t: f64, out: &mut [Vec<f64>; 4]) {
        for (k, (x, y)) in grid.centers().enumerate() {
            let s = self.source(x, y, t);
            for (buf, val) in out.iter_mut().zip(s) {
                buf[k] = val;
            }
        }
    }
}

/// Exact solution over `dt` of `v' = v (α − β v)` with
/// `α = μ_v (1 − cD − cS) − m`, `β = μ_v`, coefficients frozen.
///
/// Stays in `[0, 1]` whenever `v` does and `cD, cS, m ≥ 0`: the logistic
/// ceiling `α/β` is then at most 1.
pub fn integrate_v_pointwise(v: f64, cd: f64, cs: f64, m: f64, mu_v: f64, dt: f64) -> f64 {
    let alpha = mu_v * (1.0 - cd - cs) - m;
    let beta = mu_v;
    if v == 0.0 || alpha == beta * v {
        return v;
    }
    // v(t) = v / (e^{−αt} + β v (1 − e^{−αt})/α)
    let em1 = (-alpha * dt).exp_m1();
    let decay = 1.0 + em1;
    let growth = if alpha == 0.0 { dt } else { -em1 / alpha };
    v / (decay + beta * v * growth)
}

/// Upper bound on the local loss rate of the reaction terms.
fn reaction_rate_bound(
    p: &ModelParameters,
    formulation: Formulation,
    sup_cells: f64,
    sup_m: f64,
) -> f64 {
    let growth = match formulation {
        Formulation::Original => p.mu_d.max(p.mu_s),
        // (μ − χ μ_v v) changes sign outside the proven regime
        Formulation::Transformed => (p.mu_d + p.chi_d * p.mu_v).max(p.mu_s + p.chi_s * p.mu_v),
    };
    p.mu_max + growth * (2.0 + sup_cells) + sup_m
}

fn transport_drain(v: &Field, p: &ModelParameters, formulation: Formulation) -> f64 {
    match formulation {
        // monotone in χ, so the larger sensitivity dominates
        Formulation::Original => drain_rate_original(v, p.chi_max()),
        Formulation::Transformed => {
            drain_rate_transformed(v, p.chi_d).max(drain_rate_transformed(v, p.chi_s))
        }
    }
}

/// Largest per-cell drain rate of one explicit step: transport plus
/// reactions for the cells, diffusion plus decay for the enzyme.
fn total_rate(
    v: &Field,
    p: &ModelParameters,
    formulation: Formulation,
    sup_cells: f64,
    sup_m: f64,
) -> f64 {
    let g = v.grid();
    let diffusion = 2.0 / (g.hx() * g.hx()) + 2.0 / (g.hy() * g.hy());
    let cells =
        transport_drain(v, p, formulation) + reaction_rate_bound(p, formulation, sup_cells, sup_m);
    cells.max(diffusion + 1.0)
}

/// Writes the original-variable cell densities for matrix `v` into `cd`, `cs`.
fn cell_densities_into(
    state: &State,
    v: &[f64],
    p: &ModelParameters,
    cd: &mut Vec<f64>,
    cs: &mut Vec<f64>,
) {
    cd.clear();
    cs.clear();
    match state.formulation {
        Formulation::Original => {
            cd.extend_from_slice(state.dcc.values());
            cs.extend_from_slice(state.csc.values());
        }
        Formulation::Transformed => {
            for ((&ad, &as_), &v) in state.dcc.values().iter().zip(state.csc.values()).zip(v) {
                cd.push(ad * (p.chi_d * v).exp());
                cs.push(as_ * (p.chi_s * v).exp());
            }
        }
    }
}

fn sup(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Sign-preserving step size `σ min(1/(ν + δ), dt_max)`, where `ν` is the
/// largest rate at which one explicit update can drain a cell.
pub fn cfl_dt(state: &State, p: &ModelParameters, cfg: &RunConfig) -> f64 {
    let (mut cd, mut cs) = (Vec::new(), Vec::new());
    cell_densities_into(state, state.ecm.values(), p, &mut cd, &mut cs);
    let rate = total_rate(
        &state.ecm,
        p,
        state.formulation,
        sup(&cd) + sup(&cs),
        state.mmp.sup_norm(),
    );
    cfg.cfl_safety * (1.0 / (rate + RATE_GUARD)).min(cfg.dt_max)
}

/// Reusable buffers for repeated steps on one grid.
pub struct Stepper {
    params: ModelParameters,
    cfg: RunConfig,
    ws: StencilWorkspace,
    lap: Vec<f64>,
    transport: Vec<f64>,
    /// Original-variable densities at the old matrix.
    cd: Vec<f64>,
    cs: Vec<f64>,
    /// Same at the updated matrix.
    cd_new: Vec<f64>,
    cs_new: Vec<f64>,
    sources: [Vec<f64>; 4],
    steps: u64,
}

fn settle(
    values: &mut [f64],
    upper: Option<f64>,
    step: u64,
    field: &'static str,
) -> Result<(f64, f64, u64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut clamps = 0;
    for x in values.iter_mut() {
        if !x.is_finite() {
            return Err(Error::NonFinite { step, field });
        }
        lo = lo.min(*x);
        hi = hi.max(*x);
        if *x < 0.0 {
            if *x < -EPS_POS {
                return Err(Error::Positivity {
                    step,
                    field,
                    min: *x,
                });
            }
            *x = 0.0;
            clamps += 1;
        }
        if let Some(u) = upper {
            if *x > u {
                if *x > u + EPS_POS {
                    return Err(Error::Positivity {
                        step,
                        field,
                        min: u - *x,
                    });
                }
                *x = u;
                clamps += 1;
            }
        }
    }
    Ok((lo, hi, clamps))
}

impl Stepper {
    pub fn new(params: ModelParameters, cfg: RunConfig) -> Self {
        Self {
            params,
            cfg,
            ws: StencilWorkspace::default(),
            lap: Vec::new(),
            transport: Vec::new(),
            cd: Vec::new(),
            cs: Vec::new(),
            cd_new: Vec::new(),
            cs_new: Vec::new(),
            sources: Default::default(),
            steps: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Advances `state` by one step of size at most `dt_cap`.
    pub fn step(
        &mut self,
        state: &State,
        forcing: Option<&dyn Forcing>,
        dt_cap: f64,
    ) -> Result<(State, StepReport)> {
        let started = Instant::now();
        let p = self.params;
        let g = *state.grid();
        let n = g.len();
        let step = self.steps + 1;
        let formulation = state.formulation;
        self.lap.resize(n, 0.0);
        self.transport.resize(n, 0.0);

        cell_densities_into(state, state.ecm.values(), &p, &mut self.cd, &mut self.cs);
        let sup_m = state.mmp.sup_norm();

        let forced = forcing.is_some();
        for buf in self.sources.iter_mut() {
            buf.clear();
            buf.resize(n, 0.0);
        }
        if let Some(f) = forcing {
            f.fill(&g, state.time, &mut self.sources);
        }

        // (i) step size, (ii) exact v update; halve if the new v steepens
        // the haptotactic drain beyond the sign-preserving limit
        let rate = total_rate(
            &state.ecm,
            &p,
            formulation,
            sup(&self.cd) + sup(&self.cs),
            sup_m,
        );
        let mut dt =
            (self.cfg.cfl_safety * (1.0 / (rate + RATE_GUARD)).min(self.cfg.dt_max)).min(dt_cap);
        let mut retries = 0;
        let mut ecm = state.ecm.clone();
        loop {
            if !(dt >= DT_UNDERFLOW) {
                return Err(Error::Stiffness { step, dt });
            }
            let old_v = state.ecm.values();
            let m = state.mmp.values();
            let s_v = &self.sources[2];
            for (k, out) in ecm.values_mut().iter_mut().enumerate() {
                *out = integrate_v_pointwise(old_v[k], self.cd[k], self.cs[k], m[k], p.mu_v, dt);
                if forced {
                    *out += dt * s_v[k];
                }
            }
            cell_densities_into(state, ecm.values(), &p, &mut self.cd_new, &mut self.cs_new);
            let sup_cells = sup(&self.cd_new) + sup(&self.cs_new);
            if dt * total_rate(&ecm, &p, formulation, sup_cells, sup_m) <= 1.0 {
                break;
            }
            dt *= 0.5;
            retries += 1;
        }
        let (_, _, v_clamps) = settle(ecm.values_mut(), Some(1.0), step, "v")?;

        // (iii) forward Euler for transport and reactions
        let mut dcc = state.dcc.clone();
        let mut csc = state.csc.clone();
        let mut mmp = state.mmp.clone();
        let v = ecm.values();
        let m = state.mmp.values();
        let [s_d, s_s, s_v, s_m] = &self.sources;
        match formulation {
            Formulation::Original => {
                let (cd, cs) = (state.dcc.values(), state.csc.values());
                // csc reaction parked in cs_new, which the original form does not use
                self.cs_new.resize(n, 0.0);
                laplacian_into(&state.dcc, &mut self.lap);
                haptotaxis_div_into(&state.dcc, &ecm, p.chi_d, &mut self.transport)?;
                for (k, out) in dcc.values_mut().iter_mut().enumerate() {
                    let r = reaction_rhs(&p, cd[k], cs[k], v[k], m[k]);
                    self.cs_new[k] = r.cs;
                    *out = cd[k] + dt * (self.lap[k] + self.transport[k] + r.cd + s_d[k]);
                }
                laplacian_into(&state.csc, &mut self.lap);
                haptotaxis_div_into(&state.csc, &ecm, p.chi_s, &mut self.transport)?;
                for (k, out) in csc.values_mut().iter_mut().enumerate() {
                    *out = cs[k] + dt * (self.lap[k] + self.transport[k] + self.cs_new[k] + s_s[k]);
                }
            }
            Formulation::Transformed => {
                let (ad, as_) = (state.dcc.values(), state.csc.values());
                let (cd, cs) = (&self.cd_new, &self.cs_new);
                transformed_diffusion_into(
                    &mut self.ws,
                    &state.dcc,
                    &ecm,
                    p.chi_d,
                    &mut self.transport,
                )?;
                for (k, out) in dcc.values_mut().iter_mut().enumerate() {
                    let rho = 1.0 - cd[k] - cs[k] - v[k];
                    let emt = p.mu_emt(cd[k], cs[k], v[k], m[k]);
                    let rate =
                        p.chi_d * v[k] * m[k] - emt + (p.mu_d - p.chi_d * p.mu_v * v[k]) * rho;
                    // a_t = e^{−χv} c_t − χ a v_t picks up both forcings
                    let s = if forced {
                        s_d[k] * (-p.chi_d * v[k]).exp() - p.chi_d * ad[k] * s_v[k]
                    } else {
                        0.0
                    };
                    *out = ad[k] + dt * (self.transport[k] + rate * ad[k] + s);
                }
                transformed_diffusion_into(
                    &mut self.ws,
                    &state.csc,
                    &ecm,
                    p.chi_s,
                    &mut self.transport,
                )?;
                for (k, out) in csc.values_mut().iter_mut().enumerate() {
                    let rho = 1.0 - cd[k] - cs[k] - v[k];
                    let emt = p.mu_emt(cd[k], cs[k], v[k], m[k]);
                    let rate = p.chi_s * v[k] * m[k] + (p.mu_s - p.chi_s * p.mu_v * v[k]) * rho;
                    let decay = (-p.chi_s * v[k]).exp();
                    // transfer μ_EMT cD expressed in the weighted CSC variable
                    let gain = (emt * cd[k] + s_s[k]) * decay - p.chi_s * as_[k] * s_v[k];
                    *out = as_[k] + dt * (self.transport[k] + rate * as_[k] + gain);
                }
            }
        }
        laplacian_into(&state.mmp, &mut self.lap);
        for (k, out) in mmp.values_mut().iter_mut().enumerate() {
            let production = self.cd[k] + self.cs[k];
            *out = m[k] + dt * (self.lap[k] + production - m[k] + s_m[k]);
        }

        // (iv) clamp roundoff-level excursions
        let (d_lo, d_hi, d_cl) = settle(dcc.values_mut(), None, step, "dcc")?;
        let (s_lo, s_hi, s_cl) = settle(csc.values_mut(), None, step, "csc")?;
        let (m_lo, m_hi, m_cl) = settle(mmp.values_mut(), None, step, "mmp")?;

        let time = state.time + dt;
        let next = State {
            formulation,
            time,
            dcc,
            csc,
            ecm,
            mmp,
        };
        let clamps = ClampCounts {
            dcc: d_cl,
            csc: s_cl,
            ecm: v_clamps,
            mmp: m_cl,
        };
        let report = StepReport {
            step,
            time,
            dt,
            retries,
            pre_clamp_min: [d_lo, s_lo, m_lo],
            pre_clamp_max: [d_hi, s_hi, m_hi],
            extrema: [
                (next.dcc.min(), next.dcc.max()),
                (next.csc.min(), next.csc.max()),
                (next.ecm.min(), next.ecm.max()),
                (next.mmp.min(), next.mmp.max()),
            ],
            clamps,
            wall: started.elapsed(),
        };
        self.steps = step;
        Ok((next, report))
    }
}

/// One unforced step with the CFL step size.
pub fn step(state: &State, p: &ModelParameters, cfg: &RunConfig) -> Result<(State, StepReport)> {
    Stepper::new(*p, *cfg).step(state, None, f64::INFINITY)
}

/// Output callbacks invoked by [`run`].
pub trait RunSink {
    fn on_snapshot(&mut self, _step: u64, _state: &State) -> Result<()> {
        Ok(())
    }

    fn on_monitor(&mut self, _step: u64, _report: &MonitorReport) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, _report: &StepReport) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl RunSink for NullSink {}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: State,
    pub steps: u64,
    pub clamps: ClampCounts,
    /// Smallest pre-clamp values seen over the run, `[dcc, csc, mmp]`.
    pub min_pre_clamp: [f64; 3],
    pub dt_min: f64,
    pub dt_max: f64,
    pub retries: u64,
    pub bounds: BoundSet,
    pub monitor_reports: u64,
    pub soft_violations: u64,
    pub hard_violations: u64,
    pub last_monitor: Option<MonitorReport>,
}

/// Advances `initial` to `cfg.t_end` in `cfg.formulation`.
pub fn run(
    initial: State,
    p: &ModelParameters,
    cfg: &RunConfig,
    sink: &mut dyn RunSink,
) -> Result<RunSummary> {
    run_forced(initial, p, cfg, None, sink)
}

pub fn run_forced(
    initial: State,
    p: &ModelParameters,
    cfg: &RunConfig,
    forcing: Option<&dyn Forcing>,
    sink: &mut dyn RunSink,
) -> Result<RunSummary> {
    cfg.validate()?;
    initial.check_invariants()?;
    let mut state = initial.into_formulation(cfg.formulation, p)?;
    let bounds = monitor::compute_bounds(&state, p)
        .unwrap_or_else(|_| BoundSet::unbounded(state.grid().area()));

    let mut summary = RunSummary {
        final_state: state.clone(),
        steps: 0,
        clamps: ClampCounts::default(),
        min_pre_clamp: [f64::INFINITY; 3],
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        retries: 0,
        bounds,
        monitor_reports: 0,
        soft_violations: 0,
        hard_violations: 0,
        last_monitor: None,
    };

    let observe = |summary: &mut RunSummary,
                   sink: &mut dyn RunSink,
                   step: u64,
                   state: &State|
     -> Result<()> {
        let report = monitor::check(state, p, &summary.bounds, cfg.monitor_tol)?;
        summary.monitor_reports += 1;
        summary.soft_violations += report.soft_violations().count() as u64;
        let hard: Vec<_> = report.hard_violations().map(|c| c.name).collect();
        summary.hard_violations += hard.len() as u64;
        sink.on_monitor(step, &report)?;
        summary.last_monitor = Some(report);
        if cfg.strict_monitors && !hard.is_empty() {
            return Err(Error::MonitorViolation {
                time: state.time,
                check: hard.join(", "),
            });
        }
        Ok(())
    };

    observe(&mut summary, sink, 0, &state)?;
    sink.on_snapshot(0, &state)?;

    let mut stepper = Stepper::new(*p, *cfg);
    let t_end = cfg.t_end;
    while state.time < t_end {
        let remaining = t_end - state.time;
        let (mut next, report) =
            stepper
                .step(&state, forcing, remaining)
                .map_err(|e| Error::AtTime {
                    time: state.time,
                    source: Box::new(e),
                })?;
        if report.dt >= remaining {
            next.time = t_end;
        }
        summary.steps += 1;
        summary.clamps.add(&report.clamps);
        for (acc, x) in summary.min_pre_clamp.iter_mut().zip(report.pre_clamp_min) {
            *acc = acc.min(x);
        }
        summary.dt_min = summary.dt_min.min(report.dt);
        summary.dt_max = summary.dt_max.max(report.dt);
        summary.retries += report.retries as u64;
        sink.on_step(&report)?;
        state = next;

        let n = summary.steps;
        let last = state.time >= t_end;
        if last || (cfg.monitor_every > 0 && n.is_multiple_of(cfg.monitor_every)) {
            observe(&mut summary, sink, n, &state)?;
        }
        if last || (cfg.snapshot_every > 0 && n.is_multiple_of(cfg.snapshot_every)) {
            sink.on_snapshot(n, &state)?;
        }
    }
    summary.final_state = state;
    Ok(summary)
}
