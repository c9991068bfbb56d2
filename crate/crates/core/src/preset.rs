//! Initial conditions.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::output::read_field_csv;
use crate::state::State;

fn default_amplitude() -> f64 {
    0.8
}
fn default_width() -> f64 {
    0.1
}
fn default_fraction() -> f64 {
    0.1
}
fn default_modes() -> usize {
    3
}
fn default_mean() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPreset {
    /// Gaussian DCC bump `A exp(−r²/w²)` centred on the middle cell, with
    /// `cS = fraction · cD`, `v = 1 − cD − cS` and no enzyme.
    TumourBump {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        /// Gaussian width as a fraction of `lx`.
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_fraction")]
        csc_fraction: f64,
    },
    Uniform {
        cd: f64,
        cs: f64,
        v: f64,
        m: f64,
    },
    /// Snapshot CSVs, one per field.
    FromFiles {
        cd: PathBuf,
        cs: PathBuf,
        v: PathBuf,
        m: PathBuf,
    },
    /// Smooth random data: sums of low cosine modes with seeded
    /// coefficients, shifted to be nonnegative. `v` is filled up to
    /// `1 − cD − cS`.
    RandomModes {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_mean")]
        mean: f64,
    },
}

impl Default for InitialPreset {
    fn default() -> Self {
        InitialPreset::TumourBump {
            amplitude: default_amplitude(),
            width: default_width(),
            csc_fraction: default_fraction(),
        }
    }
}

/// A built state plus the number of cells changed to enforce `0 ≤ v ≤ 1`.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub state: State,
    pub clipped: usize,
}

fn fill_matrix(cd: &Field, cs: &Field) -> (Field, usize) {
    let mut clipped = 0;
    let v = cd
        .zip_map(cs, |a, b| 1.0 - a - b)
        .expect("same grid")
        .map(|x| x.clamp(0.0, 1.0));
    for (x, (a, b)) in v.values().iter().zip(cd.values().iter().zip(cs.values())) {
        if *x != 1.0 - a - b {
            clipped += 1;
        }
    }
    (v, clipped)
}

fn cosine_modes(grid: Grid2D, rng: &mut ChaCha8Rng, modes: usize, mean: f64) -> Field {
    let mut coeffs = Vec::new();
    for p in 0..=modes {
        for q in 0..=modes {
            if p + q > 0 {
                let decay = 1.0 / (1.0 + (p * p + q * q) as f64);
                coeffs.push((p as f64, q as f64, decay * rng.gen_range(-1.0..1.0)));
            }
        }
    }
    let (lx, ly) = (grid.lx(), grid.ly());
    let pi = std::f64::consts::PI;
    let raw = Field::from_fn(grid, |x, y| {
        coeffs
            .iter()
            .map(|&(p, q, a)| a * (p * pi * x / lx).cos() * (q * pi * y / ly).cos())
            .sum()
    });
    let (lo, hi) = (raw.min(), raw.max());
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    // affine map onto [0, 2·mean]
    raw.map(|x| 2.0 * mean * (x - lo) / span)
}

pub fn build_initial(preset: &InitialPreset, grid: Grid2D) -> Result<InitialState> {
    let (cd, cs, v, m, clipped) = match preset {
        InitialPreset::TumourBump {
            amplitude,
            width,
            csc_fraction,
        } => {
            let (x0, y0) = grid.center(grid.nx() / 2, grid.ny() / 2);
            let w = width * grid.lx();
            let cd = Field::from_fn(grid, |x, y| {
                let r2 = (x - x0).powi(2) + (y - y0).powi(2);
                amplitude * (-r2 / (w * w)).exp()
            });
            let cs = cd.map(|c| csc_fraction * c);
            let (v, clipped) = fill_matrix(&cd, &cs);
            (cd, cs, v, Field::zeros(grid), clipped)
        }
        InitialPreset::Uniform { cd, cs, v, m } => {
            let s = State::uniform(grid, *cd, *cs, *v, *m);
            (s.dcc, s.csc, s.ecm, s.mmp, 0)
        }
        InitialPreset::FromFiles { cd, cs, v, m } => {
            let read = |p: &PathBuf| read_field_csv(p, grid);
            (read(cd)?, read(cs)?, read(v)?, read(m)?, 0)
        }
        InitialPreset::RandomModes { seed, modes, mean } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let cd = cosine_modes(grid, &mut rng, *modes, *mean);
            let cs = cosine_modes(grid, &mut rng, *modes, 0.5 * mean);
            let m = cosine_modes(grid, &mut rng, *modes, 0.5 * mean);
            let (v, clipped) = fill_matrix(&cd, &cs);
            (cd, cs, v, m, clipped)
        }
    };
    let state = State::new(Default::default(), 0.0, cd, cs, v, m)?;
    state.check_invariants().map_err(|e| match e {
        Error::InvalidState(msg) => Error::InvalidState(format!("initial data: {msg}")),
        other => other,
    })?;
    Ok(InitialState { state, clipped })
}

impl InitialPreset {
    /// Replaces the seed of a randomized preset.
    pub fn with_seed(self, new_seed: u64) -> Self {
        match self {
            InitialPreset::RandomModes { modes, mean, .. } => InitialPreset::RandomModes {
                seed: new_seed,
                modes,
                mean,
            },
            other => other,
        }
    }
}
