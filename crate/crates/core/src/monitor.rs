//! Runtime checks of the a-priori bounds satisfied by exact solutions: the
//! uniform-in-time L¹ bounds on both cell populations and the enzyme, and
//! the sign and range conclusions `cD, cS, m ≥ 0`, `0 ≤ v ≤ 1`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{ModelParameters, EPS_POS};
use crate::state::{Formulation, State};
use crate::stencil::gradient_central;

/// Default relative tolerance of the L¹ checks.
pub const DEFAULT_TOL_REL: f64 = 0.01;

/// `hx hy Σ |u|`, summed in row-major order.
pub fn l1_norm(f: &Field) -> f64 {
    let mut acc = 0.0;
    for x in f.values() {
        acc += x.abs();
    }
    acc * f.grid().cell_area()
}

/// L¹ bounds fixed by the initial data and the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSet {
    pub cd_l1_bound: f64,
    pub cs_l1_bound: f64,
    pub m_l1_bound: f64,
    pub cs_max: f64,
    pub omega_area: f64,
}

impl BoundSet {
    /// Bounds that every state satisfies; used when the closed forms are
    /// unavailable (`μ_S = 0`).
    pub fn unbounded(omega_area: f64) -> Self {
        Self {
            cd_l1_bound: f64::INFINITY,
            cs_l1_bound: f64::INFINITY,
            m_l1_bound: f64::INFINITY,
            cs_max: f64::INFINITY,
            omega_area,
        }
    }
}

/// Positive root of `μ_M K + μ_S X − (μ_S/|Ω|) X² = 0` where `K` is the
/// DCC mass bound: `(|Ω|/2)(1 + √(1 + 4 μ_M K / (μ_S |Ω|)))`.
pub fn cs_max(area: f64, mu_max: f64, mu_s: f64, cd_bound: f64) -> f64 {
    0.5 * area * (1.0 + (1.0 + 4.0 * mu_max / (mu_s * area) * cd_bound).sqrt())
}

/// Computes the bounds from an initial state (converted to the original
/// variables if needed).
pub fn compute_bounds(initial: &State, p: &ModelParameters) -> Result<BoundSet> {
    if !(p.mu_s > 0.0) {
        return Err(Error::Bounds(format!(
            "the CSC mass bound divides by mu_s, which is {}",
            p.mu_s
        )));
    }
    let c = initial.to_original(p)?;
    let area = c.grid().area();
    let cd_l1_bound = l1_norm(&c.dcc).max(area);
    let cs_max = cs_max(area, p.mu_max, p.mu_s, cd_l1_bound);
    let cs_l1_bound = l1_norm(&c.csc).max(cs_max);
    let m_l1_bound = l1_norm(&c.mmp).max(cd_l1_bound + cs_l1_bound);
    Ok(BoundSet {
        cd_l1_bound,
        cs_l1_bound,
        m_l1_bound,
        cs_max,
        omega_area: area,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    SoftViolation,
    HardViolation,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::SoftViolation => "soft",
            CheckStatus::HardViolation => "hard",
        })
    }
}

/// One evaluated check. `margin` is the signed distance to the nominal bound,
/// positive inside.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub margin: f64,
}

pub const CHECK_NAMES: [&str; 7] = [
    "l1_cd", "l1_cs", "l1_m", "sign_cd", "sign_cs", "sign_m", "range_v",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub time: f64,
    pub checks: Vec<CheckResult>,
    pub l1_cd: f64,
    pub l1_cs: f64,
    pub l1_m: f64,
    pub min_cd: f64,
    pub min_cs: f64,
    pub min_m: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub sup_cd: f64,
    pub sup_cs: f64,
    pub sup_m: f64,
    /// `‖∇v‖_{L⁴}`, recorded only.
    pub grad_v_l4: f64,
}

impl MonitorReport {
    pub fn hard_violations(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::HardViolation)
    }

    pub fn soft_violations(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::SoftViolation)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn grade(margin: f64, slack: f64) -> CheckStatus {
    if margin >= -slack {
        CheckStatus::Pass
    } else if margin >= -2.0 * slack {
        CheckStatus::SoftViolation
    } else {
        CheckStatus::HardViolation
    }
}

fn grad_l4(v: &Field) -> f64 {
    let (gx, gy) = gradient_central(v);
    let mut acc = 0.0;
    for (a, b) in gx.values().iter().zip(gy.values()) {
        let s = a * a + b * b;
        acc += s * s;
    }
    (acc * v.grid().cell_area()).powf(0.25)
}

/// Evaluates every check on `state`.
pub fn check(
    state: &State,
    p: &ModelParameters,
    bounds: &BoundSet,
    tol_rel: f64,
) -> Result<MonitorReport> {
    let converted;
    let c = if state.formulation == Formulation::Original {
        state
    } else {
        converted = state.to_original(p)?;
        &converted
    };
    let l1 = [l1_norm(&c.dcc), l1_norm(&c.csc), l1_norm(&c.mmp)];
    let bound = [bounds.cd_l1_bound, bounds.cs_l1_bound, bounds.m_l1_bound];
    let mins = [c.dcc.min(), c.csc.min(), c.mmp.min()];
    let (min_v, max_v) = (c.ecm.min(), c.ecm.max());

    let mut checks = Vec::with_capacity(CHECK_NAMES.len());
    for k in 0..3 {
        let margin = bound[k] - l1[k];
        let status = if bound[k].is_infinite() {
            CheckStatus::Pass
        } else {
            grade(margin, tol_rel * bound[k])
        };
        checks.push(CheckResult {
            name: CHECK_NAMES[k],
            status,
            margin,
        });
    }
    for k in 0..3 {
        checks.push(CheckResult {
            name: CHECK_NAMES[3 + k],
            status: grade(mins[k], EPS_POS),
            margin: mins[k],
        });
    }
    let v_margin = min_v.min(1.0 - max_v);
    checks.push(CheckResult {
        name: CHECK_NAMES[6],
        status: grade(v_margin, EPS_POS),
        margin: v_margin,
    });

    Ok(MonitorReport {
        time: state.time,
        checks,
        l1_cd: l1[0],
        l1_cs: l1[1],
        l1_m: l1[2],
        min_cd: mins[0],
        min_cs: mins[1],
        min_m: mins[2],
        min_v,
        max_v,
        sup_cd: c.dcc.sup_norm(),
        sup_cs: c.csc.sup_norm(),
        sup_m: c.mmp.sup_norm(),
        grad_v_l4: grad_l4(&c.ecm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use proptest::prelude::*;

    fn params(mu_max: f64, mu_s: f64) -> ModelParameters {
        ModelParameters {
            mu_max,
            mu_s,
            ..ModelParameters::default()
        }
    }

    #[test]
    fn l1_examples() {
        let g = Grid2D::square(8, 2.0).unwrap();
        assert_eq!(l1_norm(&Field::zeros(g)), 0.0);
        assert_eq!(l1_norm(&Field::constant(g, 1.0)), 4.0);
        assert_eq!(l1_norm(&Field::constant(g, -1.0)), 4.0);
    }

    /// Pairwise (tree) summation as an independent order.
    fn pairwise(xs: &[f64]) -> f64 {
        if xs.len() <= 2 {
            return xs.iter().map(|x| x.abs()).sum();
        }
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise(a) + pairwise(b)
    }

    proptest! {
        #[test]
        fn l1_matches_pairwise_summation(vals in prop::collection::vec(-10.0f64..10.0, 35)) {
            let g = Grid2D::new(7, 5, 1.4, 0.5).unwrap();
            let f = Field::from_values(g, vals.clone()).unwrap();
            let oracle = pairwise(&vals) * g.cell_area();
            let got = l1_norm(&f);
            prop_assert!((got - oracle).abs() <= 1e-13 * oracle.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn cs_max_dominates_area(area in 1e-3f64..100.0, mu_max in 0.0f64..10.0, mu_s in 1e-3f64..10.0, k in 0.0f64..100.0) {
            prop_assert!(cs_max(area, mu_max, mu_s, k) >= area);
        }

        #[test]
        fn bounds_grow_with_data(
            base in prop::collection::vec(0.0f64..2.0, 16),
            extra in prop::collection::vec(0.0f64..2.0, 16),
            which in 0usize..3,
        ) {
            let g = Grid2D::square(4, 1.0).unwrap();
            let p = params(0.3, 0.7);
            let f = Field::from_values(g, base.clone()).unwrap();
            let bigger: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
            let fb = Field::from_values(g, bigger).unwrap();
            let make = |f: &Field| {
                let mut s = State::uniform(g, 0.0, 0.0, 0.5, 0.0);
                match which {
                    0 => s.dcc = f.clone(),
                    1 => s.csc = f.clone(),
                    _ => s.mmp = f.clone(),
                }
                s
            };
            let a = compute_bounds(&make(&f), &p).unwrap();
            let b = compute_bounds(&make(&fb), &p).unwrap();
            prop_assert!(b.cd_l1_bound >= a.cd_l1_bound);
            prop_assert!(b.cs_l1_bound >= a.cs_l1_bound);
            prop_assert!(b.m_l1_bound >= a.m_l1_bound);
            prop_assert!(b.cs_max >= a.cs_max);
        }
    }

    #[test]
    fn closed_form_examples() {
        // EMT off: the root collapses to |Ω|
        assert_eq!(cs_max(1.0, 0.0, 0.7, 1.0), 1.0);
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((cs_max(1.0, 0.4, 0.4, 1.0) - golden).abs() < 1e-12);
        assert!((golden - 1.6180339887).abs() < 1e-10);

        let g = Grid2D::square(4, 1.0).unwrap();
        let s = State::uniform(g, 2.0, 0.0, 0.0, 0.0);
        let b = compute_bounds(&s, &params(0.0, 1.0)).unwrap();
        assert_eq!(b.cd_l1_bound, 2.0);
        assert_eq!(b.cs_max, 1.0);
        assert_eq!(b.cs_l1_bound, 1.0);
        assert_eq!(b.m_l1_bound, 3.0);
    }

    #[test]
    fn zero_csc_growth_is_a_fault() {
        let g = Grid2D::square(4, 1.0).unwrap();
        let s = State::uniform(g, 0.1, 0.0, 0.5, 0.0);
        assert!(matches!(
            compute_bounds(&s, &params(0.1, 0.0)),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn initial_state_passes_its_own_bounds() {
        let g = Grid2D::square(8, 1.0).unwrap();
        let mut s = State::uniform(g, 0.0, 0.0, 0.8, 0.0);
        s.dcc = Field::from_fn(g, |x, y| 3.0 * (-(x * x + y * y) * 4.0).exp());
        s.csc = s.dcc.map(|c| 0.1 * c);
        s.mmp = s.dcc.map(|c| 2.0 * c);
        let p = params(0.2, 1.0);
        let b = compute_bounds(&s, &p).unwrap();
        let r = check(&s, &p, &b, DEFAULT_TOL_REL).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert!(r.checks.iter().all(|c| c.margin >= 0.0));
    }

    #[test]
    fn doubled_mass_is_a_hard_violation() {
        let g = Grid2D::square(8, 1.0).unwrap();
        let p = params(0.2, 1.0);
        let b = compute_bounds(&State::uniform(g, 0.5, 0.0, 0.5, 0.0), &p).unwrap();
        let s = State::uniform(g, 2.0 * b.cd_l1_bound / g.area(), 0.0, 0.5, 0.0);
        let r = check(&s, &p, &b, DEFAULT_TOL_REL).unwrap();
        assert_eq!(r.check("l1_cd").unwrap().status, CheckStatus::HardViolation);
        assert_eq!(r.hard_violations().count(), 1);

        let soft = State::uniform(g, 1.015 * b.cd_l1_bound / g.area(), 0.0, 0.5, 0.0);
        let r = check(&soft, &p, &b, DEFAULT_TOL_REL).unwrap();
        assert_eq!(r.check("l1_cd").unwrap().status, CheckStatus::SoftViolation);
    }

    #[test]
    fn saturated_matrix_has_zero_margin() {
        let g = Grid2D::square(5, 1.0).unwrap();
        let p = params(0.2, 1.0);
        let s = State::uniform(g, 0.0, 0.0, 1.0, 0.0);
        let b = compute_bounds(&s, &p).unwrap();
        let r = check(&s, &p, &b, DEFAULT_TOL_REL).unwrap();
        let v = r.check("range_v").unwrap();
        assert_eq!(v.status, CheckStatus::Pass);
        assert_eq!(v.margin, 0.0);
    }

    #[test]
    fn transformed_states_are_checked_in_original_variables() {
        let g = Grid2D::square(6, 1.0).unwrap();
        let p = params(0.2, 1.0);
        let s = State::uniform(g, 0.4, 0.3, 0.6, 0.2);
        let b = compute_bounds(&s, &p).unwrap();
        let a = check(&s, &p, &b, 0.01).unwrap();
        let t = check(&s.to_transformed(&p).unwrap(), &p, &b, 0.01).unwrap();
        assert!((a.l1_cd - t.l1_cd).abs() < 1e-14);
        assert!((a.sup_cs - t.sup_cs).abs() < 1e-14);
    }
}
