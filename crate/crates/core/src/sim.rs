//! Configuration-driven runs shared by the command line and the bindings.

use crate::config::{SimulationConfig, Solver};
use crate::error::{Error, Result};
use crate::integrate::{run, RunConfig, RunSink, RunSummary};
use crate::monitor::{self, BoundSet, MonitorReport};
use crate::picard::{advance_picard, PicardTrace};
use crate::preset::{build_initial, InitialState};
use crate::state::{Formulation, State};

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub solver: Solver,
    /// Final state in the original variables.
    pub final_state: State,
    pub initial_clipped: usize,
    /// Present for the direct solver.
    pub summary: Option<RunSummary>,
    /// One per window for the fixed-point solver.
    pub traces: Vec<PicardTrace>,
    pub soft_violations: u64,
    pub hard_violations: u64,
    pub last_monitor: Option<MonitorReport>,
}

pub fn initial_state(cfg: &SimulationConfig) -> Result<InitialState> {
    build_initial(&cfg.initial, cfg.grid()?)
}

/// Runs the configured solver. The configuration must already be validated.
pub fn simulate(cfg: &SimulationConfig, sink: &mut dyn RunSink) -> Result<SimulationReport> {
    let init = initial_state(cfg)?;
    let p = cfg.params;
    match cfg.run.solver {
        Solver::Direct => {
            let summary = run(init.state, &p, &cfg.run_config(), sink)?;
            Ok(SimulationReport {
                solver: Solver::Direct,
                final_state: summary.final_state.to_original(&p)?,
                initial_clipped: init.clipped,
                soft_violations: summary.soft_violations,
                hard_violations: summary.hard_violations,
                last_monitor: summary.last_monitor.clone(),
                summary: Some(summary),
                traces: Vec::new(),
            })
        }
        Solver::Picard => simulate_picard(cfg, init, sink),
    }
}

/// Chains fixed-point windows, checking monitors and writing snapshots at
/// every window end.
fn simulate_picard(
    cfg: &SimulationConfig,
    init: InitialState,
    sink: &mut dyn RunSink,
) -> Result<SimulationReport> {
    let p = cfg.params;
    let rc = cfg.run_config();
    let mut state = init.state.to_transformed(&p)?;
    let bounds = monitor::compute_bounds(&state, &p)
        .unwrap_or_else(|_| BoundSet::unbounded(state.grid().area()));
    let mut report = SimulationReport {
        solver: Solver::Picard,
        final_state: init.state.clone(),
        initial_clipped: init.clipped,
        summary: None,
        traces: Vec::new(),
        soft_violations: 0,
        hard_violations: 0,
        last_monitor: None,
    };
    let observe = |report: &mut SimulationReport,
                   sink: &mut dyn RunSink,
                   index: u64,
                   s: &State|
     -> Result<()> {
        let r = monitor::check(s, &p, &bounds, rc.monitor_tol)?;
        report.soft_violations += r.soft_violations().count() as u64;
        let hard: Vec<_> = r.hard_violations().map(|c| c.name).collect();
        report.hard_violations += hard.len() as u64;
        sink.on_monitor(index, &r)?;
        report.last_monitor = Some(r);
        if rc.strict_monitors && !hard.is_empty() {
            return Err(Error::MonitorViolation {
                time: s.time,
                check: hard.join(", "),
            });
        }
        sink.on_snapshot(index, s)
    };
    observe(&mut report, sink, 0, &state)?;
    let window = cfg.run.picard.window;
    let mut index = 0;
    while state.time < rc.t_end {
        let target = if rc.t_end - state.time <= window * (1.0 + 1e-9) {
            rc.t_end
        } else {
            state.time + window
        };
        let (next, traces) = advance_picard(&state, &p, &cfg.run.picard, target)?;
        report.traces.extend(traces);
        state = next;
        index += 1;
        observe(&mut report, sink, index, &state)?;
    }
    report.final_state = state.to_original(&p)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SolverComparison {
    /// Sup-norm distance of the two final states over all four fields, in
    /// the original variables.
    pub discrepancy: f64,
    /// `10 (h² + dt)` with `h` the coarser spacing and `dt` the largest
    /// direct step.
    pub tolerance: f64,
    pub h: f64,
    pub dt: f64,
    pub direct_steps: u64,
    pub traces: Vec<PicardTrace>,
}

impl SolverComparison {
    pub fn within_tolerance(&self) -> bool {
        self.discrepancy <= self.tolerance
    }

    /// Largest contraction ratio over all windows.
    pub fn max_ratio(&self) -> Option<f64> {
        self.traces
            .iter()
            .filter_map(|t| t.max_ratio())
            .reduce(f64::max)
    }

    pub fn iterations(&self) -> usize {
        self.traces.iter().map(|t| t.iterations).sum()
    }
}

/// Runs the direct stepper on the transformed system and the fixed-point
/// solver from the same data and compares them at `run.t_end`.
pub fn compare_solvers(cfg: &SimulationConfig) -> Result<SolverComparison> {
    let init = initial_state(cfg)?;
    let p = cfg.params;
    let grid = cfg.grid()?;
    let rc = RunConfig {
        formulation: Formulation::Transformed,
        monitor_every: 0,
        strict_monitors: false,
        ..cfg.run_config()
    };
    let direct = run(init.state.clone(), &p, &rc, &mut crate::integrate::NullSink)?;
    let (picard, traces) = advance_picard(&init.state, &p, &cfg.run.picard, rc.t_end)?;
    let a = direct.final_state.to_original(&p)?;
    let b = picard.to_original(&p)?;
    let h = grid.h_max();
    Ok(SolverComparison {
        discrepancy: a.sup_distance(&b)?,
        tolerance: 10.0 * (h * h + direct.dt_max),
        h,
        dt: direct.dt_max,
        direct_steps: direct.steps,
        traces,
    })
}
