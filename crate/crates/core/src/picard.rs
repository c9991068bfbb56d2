//! Fixed-point solver on short time windows.
//!
//! One application of the map `F` solves, in order, a linear enzyme
//! equation driven by the current iterate, the matrix ODE with frozen
//! coefficients, and linear parabolic problems for `aD` and then `aS`.
//! Iterating `F` from the constant-in-time extension of the data converges
//! to the solution of the transformed system when the window is short.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::integrate::{cfl_dt, RunConfig};
use crate::model::{ModelParameters, EPS_POS};
use crate::state::{Formulation, State};
use crate::stencil::{laplacian_into, transformed_diffusion_into, StencilWorkspace};

/// Consecutive growing differences that count as divergence.
const DIVERGENT_RUN: usize = 3;
/// Halvings attempted before a non-contracting window is reported.
const MAX_HALVINGS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub window: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// The inner step is the sign-preserving step divided by this factor.
    pub inner_dt_factor: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            window: 0.02,
            tol: 1e-8,
            max_iter: 50,
            inner_dt_factor: 1.0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.window > 0.0 && self.window.is_finite()) {
            errs.push(format!("window must be positive, got {}", self.window));
        }
        if !(self.tol > 0.0) {
            errs.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter < 1 {
            errs.push("max_iter must be at least 1".to_string());
        }
        if !(self.inner_dt_factor >= 1.0 && self.inner_dt_factor.is_finite()) {
            errs.push(format!(
                "inner_dt_factor must be at least 1, got {}",
                self.inner_dt_factor
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidRunConfig(errs.join("; ")))
        }
    }
}

/// Convergence history of one window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardTrace {
    pub window_start: f64,
    pub window_length: f64,
    pub inner_steps: usize,
    /// `‖F(w_k) − w_k‖∞` over `(aD, aS, v)` and all inner time levels.
    pub differences: Vec<f64>,
    /// Ratios of successive differences.
    pub ratios: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PicardTrace {
    fn push(&mut self, diff: f64) {
        if let Some(&prev) = self.differences.last() {
            if prev > 0.0 {
                self.ratios.push(diff / prev);
            }
        }
        self.differences.push(diff);
        self.iterations = self.differences.len();
    }

    fn diverging(&self) -> bool {
        let d = &self.differences;
        d.len() > DIVERGENT_RUN
            && d[d.len() - DIVERGENT_RUN - 1..]
                .windows(2)
                .all(|w| w[1] > w[0])
    }

    /// Largest observed contraction ratio.
    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }

    pub fn last_ratio(&self) -> Option<f64> {
        self.ratios.last().copied()
    }
}

/// Discrete trajectory on a uniform inner time grid, in transformed
/// variables. Level `n` sits at `t0 + n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub ad: Vec<Field>,
    pub as_: Vec<Field>,
    pub v: Vec<Field>,
    pub m: Vec<Field>,
}

impl Trajectory {
    /// Constant-in-time extension of `initial` over `steps` inner steps.
    pub fn constant(initial: &State, p: &ModelParameters, steps: usize, dt: f64) -> Result<Self> {
        let s = initial.to_transformed(p)?;
        let levels = steps + 1;
        Ok(Self {
            t0: s.time,
            dt,
            ad: vec![s.dcc; levels],
            as_: vec![s.csc; levels],
            v: vec![s.ecm; levels],
            m: vec![s.mmp; levels],
        })
    }

    pub fn steps(&self) -> usize {
        self.ad.len() - 1
    }

    pub fn grid(&self) -> &Grid2D {
        self.ad[0].grid()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.t0 + level as f64 * self.dt
    }

    pub fn state(&self, level: usize) -> State {
        State {
            formulation: Formulation::Transformed,
            time: self.time(level),
            dcc: self.ad[level].clone(),
            csc: self.as_[level].clone(),
            ecm: self.v[level].clone(),
            mmp: self.m[level].clone(),
        }
    }

    pub fn end_state(&self) -> State {
        self.state(self.steps())
    }

    /// Sup-norm distance over `(aD, aS, v)` and all levels.
    pub fn distance(&self, other: &Trajectory) -> Result<f64> {
        if self.steps() != other.steps() {
            return Err(Error::GridMismatch(format!(
                "trajectories have {} and {} steps",
                self.steps(),
                other.steps()
            )));
        }
        let mut d: f64 = 0.0;
        for n in 0..=self.steps() {
            d = d.max(self.ad[n].sup_distance(&other.ad[n])?);
            d = d.max(self.as_[n].sup_distance(&other.as_[n])?);
            d = d.max(self.v[n].sup_distance(&other.v[n])?);
        }
        Ok(d)
    }
}

fn check_level(values: &mut [f64], step: u64, field: &'static str) -> Result<()> {
    for x in values.iter_mut() {
        if !x.is_finite() {
            return Err(Error::NonFinite { step, field });
        }
        if *x < 0.0 {
            if *x < -EPS_POS {
                return Err(Error::Positivity {
                    step,
                    field,
                    min: *x,
                });
            }
            *x = 0.0;
        }
    }
    Ok(())
}

/// One application of the fixed-point map.
#[allow(non_snake_case)]
pub fn apply_F(iterate: &Trajectory, p: &ModelParameters) -> Result<Trajectory> {
    let g = *iterate.grid();
    let n = g.len();
    let dt = iterate.dt;
    let steps = iterate.steps();
    let mut ws = StencilWorkspace::new(&g);
    let mut lap = vec![0.0; n];

    let mut out = Trajectory {
        t0: iterate.t0,
        dt,
        ad: Vec::with_capacity(steps + 1),
        as_: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        m: Vec::with_capacity(steps + 1),
    };
    out.ad.push(iterate.ad[0].clone());
    out.as_.push(iterate.as_[0].clone());
    out.v.push(iterate.v[0].clone());
    out.m.push(iterate.m[0].clone());

    for level in 0..steps {
        let step = level as u64 + 1;
        let ad_it = iterate.ad[level].values();
        let as_it = iterate.as_[level].values();
        let v_it = iterate.v[level].values();

        // frozen coefficients from the iterate
        let mut cd = vec![0.0; n];
        let mut cs = vec![0.0; n];
        let mut rho = vec![0.0; n];
        let mut emt = vec![0.0; n];
        for k in 0..n {
            cd[k] = ad_it[k] * (p.chi_d * v_it[k]).exp();
            cs[k] = as_it[k] * (p.chi_s * v_it[k]).exp();
            rho[k] = 1.0 - cd[k] - cs[k] - v_it[k];
            emt[k] = p.mu_emt(cd[k], cs[k], v_it[k], iterate.m[level].values()[k]);
        }

        // enzyme
        let m_now = &out.m[level];
        laplacian_into(m_now, &mut lap);
        let mut m_next = m_now.clone();
        for (k, x) in m_next.values_mut().iter_mut().enumerate() {
            let m = m_now.values()[k];
            *x = m + dt * (lap[k] - m + cd[k] + cs[k]);
        }
        check_level(m_next.values_mut(), step, "mmp")?;

        // matrix: exact exponential with frozen growth rate
        let v_now = &out.v[level];
        let mut v_next = v_now.clone();
        for (k, x) in v_next.values_mut().iter_mut().enumerate() {
            let rate = -m_now.values()[k] + p.mu_v * rho[k];
            *x = v_now.values()[k] * (dt * rate).exp();
        }
        check_level(v_next.values_mut(), step, "v")?;

        // DCC, transported along the new matrix
        let ad_now = &out.ad[level];
        transformed_diffusion_into(&mut ws, ad_now, v_now, p.chi_d, &mut lap)?;
        let mut ad_next = ad_now.clone();
        for (k, x) in ad_next.values_mut().iter_mut().enumerate() {
            let a = ad_now.values()[k];
            let coeff = (p.mu_d - p.chi_d * p.mu_v * v_it[k]) * rho[k] - emt[k];
            let source = p.chi_d * ad_it[k] * v_it[k] * m_now.values()[k];
            *x = a + dt * (lap[k] + coeff * a + source);
        }
        check_level(ad_next.values_mut(), step, "ad")?;

        // CSC, fed by the new DCC
        let as_now = &out.as_[level];
        transformed_diffusion_into(&mut ws, as_now, v_now, p.chi_s, &mut lap)?;
        let mut as_next = as_now.clone();
        for (k, x) in as_next.values_mut().iter_mut().enumerate() {
            let a = as_now.values()[k];
            let coeff = (p.mu_s - p.chi_s * p.mu_v * v_it[k]) * rho[k];
            let transfer = emt[k] * ad_now.values()[k] * ((p.chi_d - p.chi_s) * v_it[k]).exp();
            let source = p.chi_s * as_it[k] * v_it[k] * m_now.values()[k] + transfer;
            *x = a + dt * (lap[k] + coeff * a + source);
        }
        check_level(as_next.values_mut(), step, "as")?;

        out.m.push(m_next);
        out.v.push(v_next);
        out.ad.push(ad_next);
        out.as_.push(as_next);
    }
    Ok(out)
}

/// Number of inner steps and their size for a window of length `window`
/// starting from `state`.
pub fn inner_grid(
    state: &State,
    p: &ModelParameters,
    cfg: &PicardConfig,
    window: f64,
) -> (usize, f64) {
    let probe = RunConfig {
        formulation: Formulation::Transformed,
        dt_max: window,
        ..RunConfig::default()
    };
    let dt = cfl_dt(state, p, &probe) / cfg.inner_dt_factor;
    let steps = ((window / dt).ceil() as usize).max(1);
    (steps, window / steps as f64)
}

/// Iterates `F` on one window of length `cfg.window`.
pub fn solve_window(
    initial: &State,
    p: &ModelParameters,
    cfg: &PicardConfig,
) -> Result<(State, PicardTrace)> {
    solve_window_len(initial, p, cfg, cfg.window).map(|(traj, trace)| (traj.end_state(), trace))
}

/// Like [`solve_window`] but returns the whole converged trajectory.
pub fn solve_window_len(
    initial: &State,
    p: &ModelParameters,
    cfg: &PicardConfig,
    window: f64,
) -> Result<(Trajectory, PicardTrace)> {
    cfg.validate()?;
    initial.check_invariants()?;
    let start = initial.to_transformed(p)?;
    let (steps, dt) = inner_grid(&start, p, cfg, window);
    let mut w = Trajectory::constant(&start, p, steps, dt)?;
    let mut trace = PicardTrace {
        window_start: start.time,
        window_length: window,
        inner_steps: steps,
        ..PicardTrace::default()
    };
    for _ in 0..cfg.max_iter {
        let next = apply_F(&w, p)?;
        let diff = next.distance(&w)?;
        trace.push(diff);
        w = next;
        if diff < cfg.tol {
            trace.converged = true;
            return Ok((w, trace));
        }
        if trace.diverging() {
            return Err(Error::NonContraction {
                iterations: trace.iterations,
                trace: Box::new(trace),
            });
        }
    }
    Err(Error::PicardConvergence {
        iterations: trace.iterations,
        last: trace.differences.last().copied().unwrap_or(f64::NAN),
        trace: Box::new(trace),
    })
}

/// Chains windows from `initial.time` to `t_end`, halving the window
/// whenever the iteration stops contracting.
pub fn advance_picard(
    initial: &State,
    p: &ModelParameters,
    cfg: &PicardConfig,
    t_end: f64,
) -> Result<(State, Vec<PicardTrace>)> {
    cfg.validate()?;
    let mut state = initial.to_transformed(p)?;
    let mut traces = Vec::new();
    let mut window = cfg.window;
    let mut halvings = 0;
    while state.time < t_end {
        let remaining = t_end - state.time;
        // absorb a sliver rather than scheduling a near-empty window
        let len = if remaining <= window * (1.0 + 1e-9) {
            remaining
        } else {
            window
        };
        let start = state.time;
        match solve_window_len(&state, p, cfg, len) {
            Ok((traj, trace)) => {
                state = traj.end_state();
                state.time = if len == remaining { t_end } else { start + len };
                traces.push(trace);
            }
            Err(Error::NonContraction { .. }) if halvings < MAX_HALVINGS => {
                window *= 0.5;
                halvings += 1;
            }
            Err(e) => {
                return Err(Error::Window {
                    start,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok((state, traces))
}
