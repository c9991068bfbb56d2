//! Model coefficients, the EMT rate, and the pointwise reaction terms of the
//! four-species invasion system
//!
//! ```text
//! cD_t = Δ cD − χ_D ∇·(cD ∇v) − μ_EMT cD + μ_D cD ρ
//! cS_t = Δ cS − χ_S ∇·(cS ∇v) + μ_EMT cD + μ_S cS ρ
//! v_t  = −m v + μ_v v ρ
//! m_t  = Δ m + cD + cS − m
//! ```
//!
//! with `ρ = 1 − cS − cD − v` the deviation of the total density from 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical slack on sign and range invariants.
pub const EPS_POS: f64 = 1e-12;

/// Epithelial–mesenchymal transition rate `μ_EMT(cD, cS, v, m)`.
///
/// Both built-ins are smooth, globally Lipschitz and map nonnegative states
/// into `[0, μ_M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmtRateSpec {
    Constant {
        value: f64,
    },
    /// `μ_M cD⁺ / (scale + cD⁺)`
    Saturating {
        scale: f64,
    },
}

impl EmtRateSpec {
    /// Constant rate, rejected unless `0 ≤ value ≤ mu_max`.
    pub fn constant(value: f64, mu_max: f64) -> Result<Self> {
        if !(0.0..=mu_max).contains(&value) {
            return Err(Error::InvalidEmtRate(format!(
                "constant rate {value} outside [0, {mu_max}]"
            )));
        }
        Ok(EmtRateSpec::Constant { value })
    }

    pub fn saturating(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidEmtRate(format!(
                "saturation scale must be positive, got {scale}"
            )));
        }
        Ok(EmtRateSpec::Saturating { scale })
    }

    pub fn zero() -> Self {
        EmtRateSpec::Constant { value: 0.0 }
    }
}

/// Evaluates `μ_EMT`. The result lies in `[0, mu_max]` for admissible specs.
#[inline]
pub fn emt_rate(spec: &EmtRateSpec, cd: f64, _cs: f64, _v: f64, _m: f64, mu_max: f64) -> f64 {
    match *spec {
        EmtRateSpec::Constant { value } => value,
        EmtRateSpec::Saturating { scale } => {
            let c = cd.max(0.0);
            mu_max * c / (scale + c)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParameters {
    pub chi_d: f64,
    pub chi_s: f64,
    pub mu_d: f64,
    pub mu_s: f64,
    pub mu_v: f64,
    /// Upper bound `μ_M` of the EMT rate.
    pub mu_max: f64,
    pub emt: EmtRateSpec,
}

impl Default for ModelParameters {
    fn default() -> Self {
        Self {
            chi_d: 0.5,
            chi_s: 1.0,
            mu_d: 0.5,
            mu_s: 1.0,
            mu_v: 0.5,
            mu_max: 0.1,
            emt: EmtRateSpec::Saturating { scale: 1.0 },
        }
    }
}

impl ModelParameters {
    #[inline]
    pub fn mu_emt(&self, cd: f64, cs: f64, v: f64, m: f64) -> f64 {
        emt_rate(&self.emt, cd, cs, v, m, self.mu_max)
    }

    /// Validates and returns `self`, rejecting unproven-regime parameter
    /// sets unless `allow_unproven` is set.
    pub fn validated(self, allow_unproven: bool) -> Result<Self> {
        let violations: Vec<_> = validate_params(&self)
            .into_iter()
            .filter(|v| !(allow_unproven && v.kind == ViolationKind::UnprovenRegime))
            .collect();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidParameters(violations))
        }
    }

    pub fn chi_max(&self) -> f64 {
        self.chi_d.max(self.chi_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Sign,
    /// `μ_D ≥ χ_D μ_v` or `μ_S ≥ χ_S μ_v` fails; global existence is open there.
    UnprovenRegime,
    Emt,
}

/// One failed constraint `lhs ≥ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub constraint: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fails: {} < {}", self.constraint, self.lhs, self.rhs)
    }
}

/// Checks sign constraints, the EMT bound and the growth-dominates-haptotaxis
/// conditions `μ_D ≥ χ_D μ_v`, `μ_S ≥ χ_S μ_v`. Returns every violation.
pub fn validate_params(p: &ModelParameters) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut require = |kind, constraint: &str, lhs: f64, rhs: f64| {
        // NaN fails every comparison and is reported.
        if !(lhs >= rhs) {
            out.push(Violation {
                kind,
                constraint: constraint.to_string(),
                lhs,
                rhs,
            });
        }
    };
    use ViolationKind::*;
    require(Sign, "chi_d ≥ 0", p.chi_d, 0.0);
    require(Sign, "chi_s ≥ 0", p.chi_s, 0.0);
    require(Sign, "mu_d ≥ 0", p.mu_d, 0.0);
    require(Sign, "mu_s ≥ 0", p.mu_s, 0.0);
    require(Sign, "mu_v ≥ 0", p.mu_v, 0.0);
    require(Sign, "mu_max ≥ 0", p.mu_max, 0.0);
    require(
        UnprovenRegime,
        "mu_d ≥ chi_d·mu_v",
        p.mu_d,
        p.chi_d * p.mu_v,
    );
    require(
        UnprovenRegime,
        "mu_s ≥ chi_s·mu_v",
        p.mu_s,
        p.chi_s * p.mu_v,
    );
    match p.emt {
        EmtRateSpec::Constant { value } => {
            require(Emt, "emt value ≥ 0", value, 0.0);
            require(Emt, "mu_max ≥ emt value", p.mu_max, value);
        }
        EmtRateSpec::Saturating { scale } => {
            if !(scale > 0.0) {
                require(Emt, "emt scale > 0", scale, f64::MIN_POSITIVE);
            }
        }
    }
    out
}

/// `1 − cS − cD − v`
#[inline]
pub fn rho_dev_c(cd: f64, cs: f64, v: f64) -> f64 {
    1.0 - cs - cd - v
}

/// Right-hand sides of the non-transport terms, one per species.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reaction {
    pub cd: f64,
    pub cs: f64,
    pub v: f64,
    pub m: f64,
    /// `μ_EMT cD`, removed from `cd` and added to `cs`.
    pub emt_transfer: f64,
}

#[inline]
pub fn reaction_rhs(p: &ModelParameters, cd: f64, cs: f64, v: f64, m: f64) -> Reaction {
    let rho = rho_dev_c(cd, cs, v);
    let transfer = p.mu_emt(cd, cs, v, m) * cd;
    Reaction {
        cd: -transfer + p.mu_d * cd * rho,
        cs: transfer + p.mu_s * cs * rho,
        v: -m * v + p.mu_v * v * rho,
        m: cd + cs - m,
        emt_transfer: transfer,
    }
}
