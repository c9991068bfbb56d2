//! Exponential change of variables `a = c e^{−χ v}` between the original
//! cell densities and the weighted densities whose transport is a
//! self-adjoint diffusion.

use crate::error::Result;
use crate::grid::Field;
use crate::model::ModelParameters;

fn weight(c: &Field, v: &Field, chi: f64) -> Result<Field> {
    c.zip_map(v, |c, v| c * (chi * v).exp())
}

/// `(aD, aS) = (cD e^{−χ_D v}, cS e^{−χ_S v})`
pub fn to_transformed(
    cd: &Field,
    cs: &Field,
    v: &Field,
    p: &ModelParameters,
) -> Result<(Field, Field)> {
    Ok((weight(cd, v, -p.chi_d)?, weight(cs, v, -p.chi_s)?))
}

/// `(cD, cS) = (aD e^{χ_D v}, aS e^{χ_S v})`
pub fn from_transformed(
    ad: &Field,
    as_: &Field,
    v: &Field,
    p: &ModelParameters,
) -> Result<(Field, Field)> {
    Ok((weight(ad, v, p.chi_d)?, weight(as_, v, p.chi_s)?))
}

/// Total-density deviation in the weighted variables,
/// `1 − e^{χ_S v} aS − e^{χ_D v} aD − v`.
#[inline]
pub fn rho_dev_a(ad: f64, as_: f64, v: f64, p: &ModelParameters) -> f64 {
    1.0 - (p.chi_s * v).exp() * as_ - (p.chi_d * v).exp() * ad - v
}
