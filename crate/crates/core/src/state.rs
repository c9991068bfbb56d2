use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::model::{ModelParameters, EPS_POS};
use crate::transform;

/// Which pair of cell variables a [`State`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Cell densities `cD`, `cS`.
    #[default]
    Original,
    /// Weighted densities `aD = cD e^{−χ_D v}`, `aS = cS e^{−χ_S v}`.
    Transformed,
}

/// The four unknowns at one time.
///
/// `dcc` and `csc` hold `cD`, `cS` for [`Formulation::Original`] and
/// `aD`, `aS` for [`Formulation::Transformed`].
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub formulation: Formulation,
    pub time: f64,
    pub dcc: Field,
    pub csc: Field,
    pub ecm: Field,
    pub mmp: Field,
}

impl State {
    pub fn new(
        formulation: Formulation,
        time: f64,
        dcc: Field,
        csc: Field,
        ecm: Field,
        mmp: Field,
    ) -> Result<Self> {
        dcc.ensure_same_grid(&csc)?;
        dcc.ensure_same_grid(&ecm)?;
        dcc.ensure_same_grid(&mmp)?;
        Ok(Self {
            formulation,
            time,
            dcc,
            csc,
            ecm,
            mmp,
        })
    }

    /// Spatially constant state in the original variables.
    pub fn uniform(grid: Grid2D, cd: f64, cs: f64, v: f64, m: f64) -> Self {
        Self {
            formulation: Formulation::Original,
            time: 0.0,
            dcc: Field::constant(grid, cd),
            csc: Field::constant(grid, cs),
            ecm: Field::constant(grid, v),
            mmp: Field::constant(grid, m),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        self.dcc.grid()
    }

    /// Field labels for output, in `[dcc, csc, ecm, mmp]` order.
    pub fn labels(&self) -> [&'static str; 4] {
        match self.formulation {
            Formulation::Original => ["cd", "cs", "v", "m"],
            Formulation::Transformed => ["ad", "as", "v", "m"],
        }
    }

    pub fn fields(&self) -> [&Field; 4] {
        [&self.dcc, &self.csc, &self.ecm, &self.mmp]
    }

    pub fn into_formulation(self, target: Formulation, p: &ModelParameters) -> Result<State> {
        if self.formulation == target {
            return Ok(self);
        }
        let (dcc, csc) = match target {
            Formulation::Transformed => {
                transform::to_transformed(&self.dcc, &self.csc, &self.ecm, p)?
            }
            Formulation::Original => {
                transform::from_transformed(&self.dcc, &self.csc, &self.ecm, p)?
            }
        };
        Ok(State {
            formulation: target,
            dcc,
            csc,
            ..self
        })
    }

    pub fn to_original(&self, p: &ModelParameters) -> Result<State> {
        self.clone().into_formulation(Formulation::Original, p)
    }

    pub fn to_transformed(&self, p: &ModelParameters) -> Result<State> {
        self.clone().into_formulation(Formulation::Transformed, p)
    }

    /// Checks `cells, m ≥ −ε` and `−ε ≤ v ≤ 1 + ε` and finiteness.
    pub fn check_invariants(&self) -> Result<()> {
        let labels = self.labels();
        for (label, f) in labels.iter().zip(self.fields()) {
            if !f.is_finite() {
                return Err(Error::InvalidState(format!(
                    "{label} has non-finite values"
                )));
            }
            if f.min() < -EPS_POS {
                return Err(Error::InvalidState(format!(
                    "{label} has negative values (min {:e})",
                    f.min()
                )));
            }
        }
        if self.ecm.max() > 1.0 + EPS_POS {
            return Err(Error::InvalidState(format!(
                "v exceeds 1 (max {})",
                self.ecm.max()
            )));
        }
        Ok(())
    }

    /// Largest pointwise difference over all four fields.
    pub fn sup_distance(&self, other: &State) -> Result<f64> {
        let mut d: f64 = 0.0;
        for (a, b) in self.fields().into_iter().zip(other.fields()) {
            d = d.max(a.sup_distance(b)?);
        }
        Ok(d)
    }
}
