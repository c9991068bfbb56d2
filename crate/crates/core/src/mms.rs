//! Manufactured-solution convergence studies.
//!
//! Each field is prescribed as `b + A cos(pπx/lx) cos(qπy/ly) e^{λt}`,
//! which satisfies the zero-flux boundary conditions. The residual of the
//! model equations is injected as a source, the stepper runs to a fixed
//! horizon on a sequence of grids, and errors are measured at cell centres.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::integrate::{run_forced, Forcing, NullSink, RunConfig};
use crate::model::{EmtRateSpec, ModelParameters};
use crate::state::{Formulation, State};

/// One cosine mode `b + A cos(pπx/lx) cos(qπy/ly) e^{λt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub base: f64,
    pub amp: f64,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
}

impl Mode {
    pub const fn flat(base: f64) -> Self {
        Mode {
            base,
            amp: 0.0,
            p: 0.0,
            q: 0.0,
            lambda: 0.0,
        }
    }

    fn k(&self, lx: f64, ly: f64) -> (f64, f64) {
        (self.p * PI / lx, self.q * PI / ly)
    }

    pub fn value(&self, x: f64, y: f64, t: f64, lx: f64, ly: f64) -> f64 {
        let (kx, ky) = self.k(lx, ly);
        self.base + self.amp * (kx * x).cos() * (ky * y).cos() * (self.lambda * t).exp()
    }

    /// `(u, u_t, u_x, u_y, Δu)` at one point.
    pub fn jet(&self, x: f64, y: f64, t: f64, lx: f64, ly: f64) -> [f64; 5] {
        let (kx, ky) = self.k(lx, ly);
        let e = self.amp * (self.lambda * t).exp();
        let (cx, sx) = ((kx * x).cos(), (kx * x).sin());
        let (cy, sy) = ((ky * y).cos(), (ky * y).sin());
        let w = e * cx * cy;
        [
            self.base + w,
            self.lambda * w,
            -kx * e * sx * cy,
            -ky * e * cx * sy,
            -(kx * kx + ky * ky) * w,
        ]
    }
}

/// Manufactured fields `[cD, cS, v, m]` on `[0, lx] × [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub modes: [Mode; 4],
    pub lx: f64,
    pub ly: f64,
}

impl ManufacturedSolution {
    pub fn value(&self, x: f64, y: f64, t: f64) -> [f64; 4] {
        self.modes.map(|m| m.value(x, y, t, self.lx, self.ly))
    }

    pub fn state(&self, grid: Grid2D, t: f64) -> State {
        let field =
            |f: usize| Field::from_fn(grid, |x, y| self.modes[f].value(x, y, t, self.lx, self.ly));
        State {
            formulation: Formulation::Original,
            time: t,
            dcc: field(0),
            csc: field(1),
            ecm: field(2),
            mmp: field(3),
        }
    }

    /// Residual of the model equations, i.e. the sources that make this
    /// solution exact.
    pub fn source(&self, p: &ModelParameters, x: f64, y: f64, t: f64) -> [f64; 4] {
        let jets = self.modes.map(|md| md.jet(x, y, t, self.lx, self.ly));
        source_from_jets(p, &jets)
    }
}

fn source_from_jets(p: &ModelParameters, jets: &[[f64; 5]; 4]) -> [f64; 4] {
    let [d, s, v, m] = jets;
    let rho = 1.0 - d[0] - s[0] - v[0];
    let emt = p.mu_emt(d[0], s[0], v[0], m[0]) * d[0];
    // ∇·(c∇v) = ∇c·∇v + cΔv
    let hapt = |c: &[f64; 5]| c[2] * v[2] + c[3] * v[3] + c[0] * v[4];
    [
        d[1] - d[4] + p.chi_d * hapt(d) + emt - p.mu_d * d[0] * rho,
        s[1] - s[4] + p.chi_s * hapt(s) - emt - p.mu_s * s[0] * rho,
        v[1] + m[0] * v[0] - p.mu_v * v[0] * rho,
        m[1] - m[4] - d[0] - s[0] + m[0],
    ]
}

/// Source terms for a manufactured solution. The time-independent factors
/// of each mode are tabulated per grid.
pub struct MmsForcing {
    sol: ManufacturedSolution,
    params: ModelParameters,
    table: RefCell<Option<(Grid2D, Vec<[[f64; 4]; 4]>)>>,
}

impl MmsForcing {
    pub fn new(sol: ManufacturedSolution, params: ModelParameters) -> Self {
        Self {
            sol,
            params,
            table: RefCell::new(None),
        }
    }

    /// Per cell and field: `(cos·cos, ∂x, ∂y, Δ)` of the unit-amplitude mode.
    fn tabulate(&self, grid: &Grid2D) -> Vec<[[f64; 4]; 4]> {
        let (lx, ly) = (self.sol.lx, self.sol.ly);
        grid.centers()
            .map(|(x, y)| {
                self.sol.modes.map(|md| {
                    let unit = Mode {
                        base: 0.0,
                        amp: 1.0,
                        lambda: 0.0,
                        ..md
                    };
                    let j = unit.jet(x, y, 0.0, lx, ly);
                    [j[0], j[2], j[3], j[4]]
                })
            })
            .collect()
    }
}

impl Forcing for MmsForcing {
    fn source(&self, x: f64, y: f64, t: f64) -> [f64; 4] {
        self.sol.source(&self.params, x, y, t)
    }

    fn fill(&self, grid: &Grid2D, t: f64, out: &mut [Vec<f64>; 4]) {
        let mut cache = self.table.borrow_mut();
        if cache.as_ref().map(|(g, _)| g != grid).unwrap_or(true) {
            *cache = Some((*grid, self.tabulate(grid)));
        }
        let (_, table) = cache.as_ref().expect("filled above");
        let amp = self.sol.modes.map(|md| md.amp * (md.lambda * t).exp());
        for (k, row) in table.iter().enumerate() {
            let jets: [[f64; 5]; 4] = std::array::from_fn(|f| {
                let [c, gx, gy, lap] = row[f];
                let (a, md) = (amp[f], &self.sol.modes[f]);
                [md.base + a * c, md.lambda * a * c, a * gx, a * gy, a * lap]
            });
            let s = source_from_jets(&self.params, &jets);
            for (buf, val) in out.iter_mut().zip(s) {
                buf[k] = val;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsCase {
    /// Pure matrix `(0, 0, 1, 0)`, an exact steady state of the scheme.
    Equilibrium,
    /// No taxis and no reactions beyond the enzyme's linear terms.
    DiffusionOnly,
    /// All terms, including haptotaxis.
    Full,
}

impl MmsCase {
    pub const ALL: [MmsCase; 3] = [MmsCase::Equilibrium, MmsCase::DiffusionOnly, MmsCase::Full];

    pub fn name(&self) -> &'static str {
        match self {
            MmsCase::Equilibrium => "equilibrium",
            MmsCase::DiffusionOnly => "diffusion",
            MmsCase::Full => "full",
        }
    }

    pub fn params(&self) -> ModelParameters {
        match self {
            MmsCase::Equilibrium | MmsCase::Full => ModelParameters::default(),
            MmsCase::DiffusionOnly => ModelParameters {
                chi_d: 0.0,
                chi_s: 0.0,
                mu_d: 0.0,
                mu_s: 0.0,
                mu_v: 0.0,
                mu_max: 0.0,
                emt: EmtRateSpec::zero(),
            },
        }
    }

    pub fn solution(&self) -> ManufacturedSolution {
        let modes = match self {
            MmsCase::Equilibrium => [
                Mode::flat(0.0),
                Mode::flat(0.0),
                Mode::flat(1.0),
                Mode::flat(0.0),
            ],
            MmsCase::DiffusionOnly | MmsCase::Full => [
                Mode {
                    base: 0.3,
                    amp: 0.1,
                    p: 1.0,
                    q: 1.0,
                    lambda: -0.5,
                },
                Mode {
                    base: 0.2,
                    amp: 0.05,
                    p: 2.0,
                    q: 1.0,
                    lambda: 0.3,
                },
                Mode {
                    base: 0.5,
                    amp: 0.2,
                    p: 1.0,
                    q: 2.0,
                    lambda: -0.2,
                },
                Mode {
                    base: 0.2,
                    amp: 0.1,
                    p: 1.0,
                    q: 0.0,
                    lambda: 0.4,
                },
            ],
        };
        ManufacturedSolution {
            modes,
            lx: 1.0,
            ly: 1.0,
        }
    }
}

impl FromStr for MmsCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MmsCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::Config(vec![format!(
                    "unknown manufactured case {s:?}; expected one of equilibrium, diffusion, full"
                )])
            })
    }
}

pub const FIELDS: [&str; 4] = ["cd", "cs", "v", "m"];

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub n: usize,
    pub h: f64,
    /// Largest step taken.
    pub dt: f64,
    pub steps: u64,
    pub err_linf: [f64; 4],
    pub err_l1: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub case: MmsCase,
    pub t_end: f64,
    pub levels: Vec<LevelResult>,
}

impl ConvergenceTable {
    /// Observed sup-norm order between consecutive levels; `None` for the
    /// first level and where either error vanishes.
    pub fn order(&self, level: usize, field: usize) -> Option<f64> {
        if level == 0 {
            return None;
        }
        let (a, b) = (&self.levels[level - 1], &self.levels[level]);
        let (ea, eb) = (a.err_linf[field], b.err_linf[field]);
        (ea > 0.0 && eb > 0.0).then(|| (ea / eb).ln() / (a.h / b.h).ln())
    }

    /// Least-squares slope of `log e∞` against `log h` over all levels.
    pub fn fitted_order(&self, field: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .filter(|l| l.err_linf[field] > 0.0)
            .map(|l| (l.h.ln(), l.err_linf[field].ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// Smallest fitted order over the four fields.
    pub fn min_fitted_order(&self) -> Option<f64> {
        (0..4).filter_map(|f| self.fitted_order(f)).reduce(f64::min)
    }

    pub fn max_error(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|l| l.err_linf.iter().chain(&l.err_l1))
            .fold(0.0, |a: f64, &b| a.max(b))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,dt");
        for f in FIELDS {
            let _ = write!(out, ",err_linf_{f},err_l1_{f}");
        }
        for f in FIELDS {
            let _ = write!(out, ",order_{f}");
        }
        out.push('\n');
        for (i, l) in self.levels.iter().enumerate() {
            let _ = write!(out, "{:.16e},{:.16e}", l.h, l.dt);
            for f in 0..4 {
                let _ = write!(out, ",{:.16e},{:.16e}", l.err_linf[f], l.err_l1[f]);
            }
            for f in 0..4 {
                match self.order(i, f) {
                    Some(o) => {
                        let _ = write!(out, ",{o:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Settings of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsConfig {
    pub t_end: f64,
    pub cfl_safety: f64,
    pub formulation: Formulation,
}

impl Default for MmsConfig {
    fn default() -> Self {
        Self {
            t_end: 0.1,
            cfl_safety: 0.9,
            formulation: Formulation::Original,
        }
    }
}

/// Runs one refinement level on an `n × n` grid.
pub fn run_level(case: MmsCase, n: usize, cfg: &MmsConfig) -> Result<LevelResult> {
    let sol = case.solution();
    let p = case.params();
    let wrap = |e: Error| Error::Refinement {
        nx: n,
        ny: n,
        source: Box::new(e),
    };
    let grid = Grid2D::new(n, n, sol.lx, sol.ly).map_err(wrap)?;
    let run_cfg = RunConfig {
        t_end: cfg.t_end,
        cfl_safety: cfg.cfl_safety,
        dt_max: cfg.t_end,
        formulation: cfg.formulation,
        monitor_every: 0,
        ..RunConfig::default()
    };
    let forcing = MmsForcing::new(sol, p);
    let out = run_forced(
        sol.state(grid, 0.0),
        &p,
        &run_cfg,
        Some(&forcing),
        &mut NullSink,
    )
    .map_err(wrap)?;
    let num = out.final_state.to_original(&p).map_err(wrap)?;
    let exact = sol.state(grid, cfg.t_end);
    let mut err_linf = [0.0; 4];
    let mut err_l1 = [0.0; 4];
    for (f, (a, b)) in num.fields().into_iter().zip(exact.fields()).enumerate() {
        let mut sum = 0.0;
        for (x, y) in a.values().iter().zip(b.values()) {
            let d = (x - y).abs();
            err_linf[f] = f64::max(err_linf[f], d);
            sum += d;
        }
        err_l1[f] = sum * grid.cell_area();
    }
    Ok(LevelResult {
        n,
        h: grid.hx(),
        dt: out.dt_max,
        steps: out.steps,
        err_linf,
        err_l1,
    })
}

/// Runs every level in `levels` (grid sizes `n`, increasing).
pub fn convergence_study(
    case: MmsCase,
    levels: &[usize],
    cfg: &MmsConfig,
) -> Result<ConvergenceTable> {
    let mut results = Vec::with_capacity(levels.len());
    for &n in levels {
        results.push(run_level(case, n, cfg)?);
    }
    Ok(ConvergenceTable {
        case,
        t_end: cfg.t_end,
        levels: results,
    })
}

/// Levels `base, 2·base, …` (`count` of them).
pub fn doubling_levels(base: usize, count: usize) -> Vec<usize> {
    (0..count).map(|i| base << i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fourth-order central differences of the manufactured fields.
    fn fd_source(
        sol: &ManufacturedSolution,
        p: &ModelParameters,
        x: f64,
        y: f64,
        t: f64,
    ) -> [f64; 4] {
        let h = 1e-3;
        let u = |x: f64, y: f64, t: f64| sol.value(x, y, t);
        let d1 = |f: &dyn Fn(f64) -> [f64; 4], s: f64| -> [f64; 4] {
            let (a, b, c, d) = (f(s - 2.0 * h), f(s - h), f(s + h), f(s + 2.0 * h));
            std::array::from_fn(|i| (a[i] - 8.0 * b[i] + 8.0 * c[i] - d[i]) / (12.0 * h))
        };
        let d2 = |f: &dyn Fn(f64) -> [f64; 4], s: f64| -> [f64; 4] {
            let (a, b, o, c, d) = (f(s - 2.0 * h), f(s - h), f(s), f(s + h), f(s + 2.0 * h));
            std::array::from_fn(|i| {
                (-a[i] + 16.0 * b[i] - 30.0 * o[i] + 16.0 * c[i] - d[i]) / (12.0 * h * h)
            })
        };
        let val = u(x, y, t);
        let ut = d1(&|s| u(x, y, s), t);
        let uxx = d2(&|s| u(s, y, t), x);
        let uyy = d2(&|s| u(x, s, t), y);
        let lap: [f64; 4] = std::array::from_fn(|i| uxx[i] + uyy[i]);
        let [cd, cs, v, m] = val;
        // ∇·(c∇v) evaluated by differencing the flux c∇v directly
        let flux_div = |f: usize| {
            let fx = |s: f64| {
                let w = u(s, y, t);
                let g = d1(&|r| u(r, y, t), s);
                [w[f] * g[2]; 4]
            };
            let fy = |s: f64| {
                let w = u(x, s, t);
                let g = d1(&|r| u(x, r, t), s);
                [w[f] * g[2]; 4]
            };
            d1(&fx, x)[0] + d1(&fy, y)[0]
        };
        let rho = 1.0 - cd - cs - v;
        let emt = p.mu_emt(cd, cs, v, m) * cd;
        [
            ut[0] - lap[0] + p.chi_d * flux_div(0) + emt - p.mu_d * cd * rho,
            ut[1] - lap[1] + p.chi_s * flux_div(1) - emt - p.mu_s * cs * rho,
            ut[2] + m * v - p.mu_v * v * rho,
            ut[3] - lap[3] - cd - cs + m,
        ]
    }

    #[test]
    fn analytic_sources_match_finite_differences() {
        for case in MmsCase::ALL {
            let sol = case.solution();
            let p = case.params();
            for &(x, y, t) in &[
                (0.13, 0.77, 0.0),
                (0.5, 0.5, 0.05),
                (0.91, 0.02, 0.1),
                (0.33, 0.4, 0.07),
            ] {
                let a = sol.source(&p, x, y, t);
                let b = fd_source(&sol, &p, x, y, t);
                for f in 0..4 {
                    assert!(
                        (a[f] - b[f]).abs() < 1e-6,
                        "{case:?} field {f}: {} vs {}",
                        a[f],
                        b[f]
                    );
                }
            }
        }
    }

    #[test]
    fn modes_have_zero_normal_derivative() {
        let sol = MmsCase::Full.solution();
        for md in sol.modes {
            for s in [0.0, 0.3, 1.0] {
                let west = md.jet(0.0, s, 0.05, 1.0, 1.0);
                let east = md.jet(1.0, s, 0.05, 1.0, 1.0);
                let south = md.jet(s, 0.0, 0.05, 1.0, 1.0);
                let north = md.jet(s, 1.0, 0.05, 1.0, 1.0);
                assert!(west[2].abs() < 1e-14 && east[2].abs() < 1e-14);
                assert!(south[3].abs() < 1e-14 && north[3].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tabulated_sources_match_pointwise() {
        let case = MmsCase::Full;
        let f = MmsForcing::new(case.solution(), case.params());
        let g = Grid2D::new(7, 5, 1.0, 1.0).unwrap();
        let mut out: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; g.len()]);
        f.fill(&g, 0.037, &mut out);
        for (k, (x, y)) in g.centers().enumerate() {
            let s = f.source(x, y, 0.037);
            for i in 0..4 {
                assert!((out[i][k] - s[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equilibrium_has_no_source() {
        let sol = MmsCase::Equilibrium.solution();
        let p = MmsCase::Equilibrium.params();
        assert_eq!(sol.source(&p, 0.2, 0.7, 0.05), [0.0; 4]);
    }

    #[test]
    fn equilibrium_error_is_exactly_zero() {
        let t = convergence_study(MmsCase::Equilibrium, &[8, 16], &MmsConfig::default()).unwrap();
        assert_eq!(t.max_error(), 0.0);
        assert_eq!(t.fitted_order(0), None);
    }

    #[test]
    fn case_names_parse() {
        for c in MmsCase::ALL {
            assert_eq!(c.name().parse::<MmsCase>().unwrap(), c);
        }
        assert!("nope".parse::<MmsCase>().is_err());
        assert_eq!(doubling_levels(16, 3), vec![16, 32, 64]);
    }

    #[test]
    fn csv_layout() {
        let table = ConvergenceTable {
            case: MmsCase::Full,
            t_end: 0.1,
            levels: vec![
                LevelResult {
                    n: 8,
                    h: 0.125,
                    dt: 1e-3,
                    steps: 100,
                    err_linf: [4e-3; 4],
                    err_l1: [1e-3; 4],
                },
                LevelResult {
                    n: 16,
                    h: 0.0625,
                    dt: 2.5e-4,
                    steps: 400,
                    err_linf: [1e-3; 4],
                    err_l1: [2.5e-4; 4],
                },
            ],
        };
        let csv = table.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert!(lines[0].starts_with("h,dt,err_linf_cd,err_l1_cd,err_linf_cs"));
        assert!(lines[0].ends_with("order_cd,order_cs,order_v,order_m"));
        assert!(lines[1].ends_with(",,,,"));
        assert!(lines[2].ends_with("2.000000,2.000000,2.000000,2.000000"));
        assert!((table.fitted_order(0).unwrap() - 2.0).abs() < 1e-12);
    }
}
