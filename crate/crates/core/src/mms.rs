//! Manufactured solutions.
//!
//! Exact pressure and concentration are closed-form; the velocity follows
//! from Darcy's law. Volumetric sources are obtained by central differences
//! of the analytic fluxes, which keeps the long closed form of
//! `∇·(D(u)∇c)` out of the code. Boundary data are the exact normal fluxes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{BoundaryFn, ProblemCoefficients, SpaceFn, SpaceTimeFn, Viscosity};
use crate::tensor::{DispersionModel, ScalarDispersionParams};
use crate::{Error, Point, Result};

pub type GradientFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

/// Exact fields and material laws of a manufactured problem.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub pressure: SpaceTimeFn,
    pub pressure_gradient: GradientFn,
    pub concentration: SpaceTimeFn,
    pub concentration_gradient: GradientFn,
    pub concentration_dt: SpaceTimeFn,
    pub permeability: SpaceFn,
    pub viscosity: Viscosity,
    pub dispersion: DispersionModel,
    pub porosity: f64,
}

impl ManufacturedSolution {
    /// Darcy velocity `−(k/μ(c)) ∇p`.
    pub fn velocity(&self, x: Point, t: f64) -> [f64; 2] {
        let kappa = (self.permeability)(x) / (self.viscosity.law)((self.concentration)(x, t));
        let g = (self.pressure_gradient)(x, t);
        [-kappa * g[0], -kappa * g[1]]
    }

    /// Dispersive flux `D(u) ∇c`.
    pub fn dispersive_flux(&self, x: Point, t: f64) -> [f64; 2] {
        self.dispersion
            .apply(self.velocity(x, t), (self.concentration_gradient)(x, t))
    }

    /// Problem data whose exact solution is `self`, with sources from
    /// [`manufacture_sources`]. Injection and production are zero.
    pub fn problem_coefficients(
        &self,
        fd_step: f64,
        boundary: ConcentrationBoundary,
    ) -> Result<ProblemCoefficients> {
        let sources = manufacture_sources(self, fd_step)?;
        let c = self.concentration.clone();
        let boundary_concentration = match boundary {
            ConcentrationBoundary::Flux => None,
            ConcentrationBoundary::Trace => Some(self.concentration.clone()),
        };
        Ok(ProblemCoefficients {
            permeability: self.permeability.clone(),
            viscosity: self.viscosity.clone(),
            porosity: self.porosity,
            injection: None,
            production: None,
            injected_concentration: None,
            dispersion: self.dispersion,
            pressure_source: Some(sources.f),
            concentration_source: Some(sources.g),
            pressure_flux: Some(sources.f_b),
            concentration_flux: Some(sources.g_b),
            boundary_concentration,
            initial_concentration: Arc::new(move |x| c(x, 0.0)),
        })
    }
}

/// Boundary condition of the concentration equation in a manufactured
/// problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationBoundary {
    /// Dispersive flux `D(u)∇c·n = g_b`.
    #[default]
    Flux,
    /// Exact concentration at the boundary vertices.
    Trace,
}

/// Benchmark on the disk of radius 1/2 centered at (1/2, 1/2):
///
/// ```text
/// p = 100 (x − t)² e^{−t},   c = 0.5 + 0.2 e^{−t} cos x sin y,
/// k = 2,   μ(c) = 1 + c,   D(u) = 1 + 0.1 |u|,   γ = 1.
/// ```
pub fn benchmark_solution() -> ManufacturedSolution {
    ManufacturedSolution {
        pressure: Arc::new(|x, t| 100.0 * (x[0] - t).powi(2) * (-t).exp()),
        pressure_gradient: Arc::new(|x, t| [200.0 * (x[0] - t) * (-t).exp(), 0.0]),
        concentration: Arc::new(|x, t| 0.5 + 0.2 * (-t).exp() * x[0].cos() * x[1].sin()),
        concentration_gradient: Arc::new(|x, t| {
            let a = 0.2 * (-t).exp();
            [-a * x[0].sin() * x[1].sin(), a * x[0].cos() * x[1].cos()]
        }),
        concentration_dt: Arc::new(|x, t| -0.2 * (-t).exp() * x[0].cos() * x[1].sin()),
        permeability: Arc::new(|_| 2.0),
        // c stays within [0.3, 0.7]
        viscosity: Viscosity {
            law: Arc::new(|c| 1.0 + c),
            min: 1.3,
            max: 1.7,
        },
        dispersion: DispersionModel::Scalar(ScalarDispersionParams {
            base: 1.0,
            slope: 0.1,
        }),
        porosity: 1.0,
    }
}

/// Central-difference divergence of `flux` at `x` with spacing `step`.
pub fn fd_divergence(flux: impl Fn(Point) -> [f64; 2], x: Point, step: f64) -> f64 {
    // divide by the distance between the rounded stencil points
    let (xp, xm) = (x[0] + step, x[0] - step);
    let (yp, ym) = (x[1] + step, x[1] - step);
    let dx = (flux([xp, x[1]])[0] - flux([xm, x[1]])[0]) / (xp - xm);
    let dy = (flux([x[0], yp])[1] - flux([x[0], ym])[1]) / (yp - ym);
    dx + dy
}

/// Sources `f`, `g` and boundary data `f_b`, `g_b` of a manufactured
/// solution.
#[derive(Clone)]
pub struct ManufacturedSources {
    /// `−∇·((k/μ(c)) ∇p)`
    pub f: SpaceTimeFn,
    /// `γ ∂c/∂t − ∇·(D(u)∇c) + u·∇c`
    pub g: SpaceTimeFn,
    /// `u·n`
    pub f_b: BoundaryFn,
    /// `D(u)∇c·n`
    pub g_b: BoundaryFn,
}

/// Builds the source evaluators. `fd_step` is relative to the coordinate
/// scale `max(1, |x|_∞)`.
pub fn manufacture_sources(
    sol: &ManufacturedSolution,
    fd_step: f64,
) -> Result<ManufacturedSources> {
    if !(1e-7..=1e-4).contains(&fd_step) {
        return Err(Error::invalid(format!(
            "finite-difference step must lie in [1e-7, 1e-4], got {fd_step}"
        )));
    }
    let step_at = move |x: Point| fd_step * x[0].abs().max(x[1].abs()).max(1.0);

    let s = sol.clone();
    let f: SpaceTimeFn = Arc::new(move |x, t| {
        let darcy_flux = |y: Point| {
            let u = s.velocity(y, t);
            // (k/μ)∇p = −u
            [-u[0], -u[1]]
        };
        -fd_divergence(darcy_flux, x, step_at(x))
    });

    let s = sol.clone();
    let g: SpaceTimeFn = Arc::new(move |x, t| {
        let div = fd_divergence(|y| s.dispersive_flux(y, t), x, step_at(x));
        let u = s.velocity(x, t);
        let gc = (s.concentration_gradient)(x, t);
        s.porosity * (s.concentration_dt)(x, t) - div + u[0] * gc[0] + u[1] * gc[1]
    });

    let s = sol.clone();
    let f_b: BoundaryFn = Arc::new(move |x, n, t| {
        let u = s.velocity(x, t);
        u[0] * n[0] + u[1] * n[1]
    });

    let s = sol.clone();
    let g_b: BoundaryFn = Arc::new(move |x, n, t| {
        let q = s.dispersive_flux(x, t);
        q[0] * n[0] + q[1] * n[1]
    });

    Ok(ManufacturedSources { f, g, f_b, g_b })
}
