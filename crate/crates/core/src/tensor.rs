//! Velocity-dependent diffusion–dispersion coefficients.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetric 2×2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Below this speed the dispersion term is taken to be exactly zero.
const ZERO_SPEED: f64 = 1e-300;

/// Parameters of the Bear–Scheidegger tensor
/// `γ d_m I + |u| (α_T I + (α_L − α_T) u⊗u / |u|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    /// Porosity times molecular diffusion, `γ d_m`.
    pub gamma_dm: f64,
    /// Longitudinal dispersivity.
    pub alpha_l: f64,
    /// Transversal dispersivity.
    pub alpha_t: f64,
}

impl DispersionParams {
    pub fn new(gamma_dm: f64, alpha_l: f64, alpha_t: f64) -> Result<Self> {
        if !(gamma_dm > 0.0) || !(alpha_l >= 0.0) || !(alpha_t >= 0.0) {
            return Err(Error::invalid(format!(
                "dispersion parameters need gamma_dm > 0, alpha_l >= 0, alpha_t >= 0 \
                 (got {gamma_dm}, {alpha_l}, {alpha_t})"
            )));
        }
        Ok(DispersionParams {
            gamma_dm,
            alpha_l,
            alpha_t,
        })
    }
}

/// Isotropic model `base + slope |u|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarDispersionParams {
    pub base: f64,
    pub slope: f64,
}

impl ScalarDispersionParams {
    pub fn new(base: f64, slope: f64) -> Result<Self> {
        if !(base > 0.0) || !(slope >= 0.0) {
            return Err(Error::invalid(format!(
                "scalar dispersion needs base > 0 and slope >= 0 (got {base}, {slope})"
            )));
        }
        Ok(ScalarDispersionParams { base, slope })
    }
}

fn speed(u: [f64; 2]) -> f64 {
    u[0].hypot(u[1])
}

pub fn bear_scheidegger(u: [f64; 2], params: &DispersionParams) -> Mat2 {
    let s = speed(u);
    let g = params.gamma_dm;
    if s < ZERO_SPEED {
        return [[g, 0.0], [0.0, g]];
    }
    let iso = g + params.alpha_t * s;
    // (α_L − α_T) u⊗u / |u|
    let c = (params.alpha_l - params.alpha_t) / s;
    let off = c * u[0] * u[1];
    [[iso + c * u[0] * u[0], off], [off, iso + c * u[1] * u[1]]]
}

/// `(longitudinal, transverse)` eigenvalues: `γd_m + α_L|u|` along `u` and
/// `γd_m + α_T|u|` across it.
pub fn dispersion_eigenvalues(u: [f64; 2], params: &DispersionParams) -> (f64, f64) {
    let s = speed(u);
    if s < ZERO_SPEED {
        return (params.gamma_dm, params.gamma_dm);
    }
    (
        params.gamma_dm + params.alpha_l * s,
        params.gamma_dm + params.alpha_t * s,
    )
}

pub fn scalar_dispersion(u: [f64; 2], params: &ScalarDispersionParams) -> f64 {
    params.base + params.slope * speed(u)
}

/// Either dispersion model behind one evaluation interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DispersionModel {
    BearScheidegger(DispersionParams),
    Scalar(ScalarDispersionParams),
}

impl DispersionModel {
    /// The dispersion tensor at velocity `u`.
    pub fn tensor(&self, u: [f64; 2]) -> Mat2 {
        match self {
            DispersionModel::BearScheidegger(p) => bear_scheidegger(u, p),
            DispersionModel::Scalar(p) => {
                let d = scalar_dispersion(u, p);
                [[d, 0.0], [0.0, d]]
            }
        }
    }

    /// `D(u) g`
    pub fn apply(&self, u: [f64; 2], g: [f64; 2]) -> [f64; 2] {
        let d = self.tensor(u);
        [
            d[0][0] * g[0] + d[0][1] * g[1],
            d[1][0] * g[0] + d[1][1] * g[1],
        ]
    }
}
