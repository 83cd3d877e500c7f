//! Time marching of the coupled pressure–concentration scheme.
//!
//! Each state `n` holds the triple `(P^n, U^n, C^n)`, where `P^n` solves the
//! pressure equation with viscosity `μ(C^n)` and data at `t_n`. A step from
//! `n-1` to `n` solves for `C^n` with the lagged velocity `U^{n-1}` and then
//! performs the pressure solve of level `n`, so the final state carries the
//! velocity `U^N` needed for error measurement.

use std::time::{Duration, Instant};

use crate::assembly::{
    assemble_concentration, assemble_pressure, compute_velocity, p1_mass_matrix, ConvectionMode,
    Discretization, ProblemCoefficients, VelocityField,
};
use crate::error::SystemKind;
use crate::fe::interpolate;
use crate::sparse::{
    cg_deflated, dot, gmres, CgOptions, Deflation, GmresOptions, SolveReport, SparseMatrix,
};
use crate::{Error, Result};

/// Uniform partition of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) || steps == 0 {
            return Err(Error::invalid(format!(
                "time grid needs T > 0 and N >= 1 (got T = {t_final}, N = {steps})"
            )));
        }
        Ok(TimeGrid { t_final, steps })
    }

    /// Grid with step `tau`; `T / tau` must be an integer.
    pub fn from_step(t_final: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid(format!(
                "time step must be positive, got {tau}"
            )));
        }
        let n = (t_final / tau).round();
        if n < 1.0 || (n * tau - t_final).abs() > 1e-9 * t_final {
            return Err(Error::invalid(format!(
                "time step {tau} does not divide T = {t_final}"
            )));
        }
        Self::new(t_final, n as usize)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.tau()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub pressure: CgOptions,
    pub concentration: GmresOptions,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            pressure: CgOptions {
                rel_tol: 1e-11,
                ..CgOptions::default()
            },
            concentration: GmresOptions {
                rel_tol: 1e-10,
                ..GmresOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimeStepState {
    pub step: usize,
    pub time: f64,
    /// P2 pressure coefficients, normalized to zero mean.
    pub pressure: Vec<f64>,
    pub velocity: VelocityField,
    /// P1 concentration coefficients.
    pub concentration: Vec<f64>,
    pub pressure_report: SolveReport,
    /// `None` for the initial state.
    pub concentration_report: Option<SolveReport>,
    pub compatibility_defect: f64,
    pub wall_time: Duration,
}

/// `‖C^n‖_{L²}` after each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSample {
    pub step: usize,
    pub time: f64,
    pub concentration_l2: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: TimeStepState,
    /// One sample per state, starting with the initial one.
    pub history: Vec<NormSample>,
}

/// One configured simulation.
pub struct Simulation<'a> {
    disc: &'a Discretization,
    coeffs: &'a ProblemCoefficients,
    grid: TimeGrid,
    mode: ConvectionMode,
    solvers: SolverSettings,
    mass: SparseMatrix,
    ones: Vec<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        disc: &'a Discretization,
        coeffs: &'a ProblemCoefficients,
        grid: TimeGrid,
        mode: ConvectionMode,
        solvers: SolverSettings,
    ) -> Self {
        Simulation {
            disc,
            coeffs,
            grid,
            mode,
            solvers,
            mass: p1_mass_matrix(disc),
            ones: vec![1.0; disc.p2().dof_count()],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn discretization(&self) -> &Discretization {
        self.disc
    }

    /// `‖C‖_{L²}` of a P1 coefficient vector.
    pub fn concentration_l2(&self, c: &[f64]) -> f64 {
        dot(c, &self.mass.mul_vec(c)).max(0.0).sqrt()
    }

    fn solve_pressure(
        &self,
        concentration: &[f64],
        t: f64,
        guess: Option<&[f64]>,
        step: usize,
    ) -> Result<(Vec<f64>, SolveReport, f64)> {
        let sys = assemble_pressure(self.disc, concentration, self.coeffs, t)?;
        let deflation = Deflation::with_constraint(self.ones.clone(), sys.mass);
        let (p, report) = cg_deflated(
            &sys.matrix,
            &sys.rhs,
            Some(&deflation),
            guess,
            &self.solvers.pressure,
        )?;
        if !report.converged {
            return Err(Error::SolverFailed {
                step,
                system: SystemKind::Pressure,
                report,
            });
        }
        Ok((p, report, sys.compatibility_defect))
    }

    /// State 0: `C^0` interpolates the initial concentration; `P^0` and
    /// `U^0` follow from it.
    pub fn initialize(&self) -> Result<TimeStepState> {
        let start = Instant::now();
        let c0 = interpolate(self.disc.p1(), |x| (self.coeffs.initial_concentration)(x));
        let (pressure, pressure_report, defect) = self.solve_pressure(&c0, 0.0, None, 0)?;
        let velocity = compute_velocity(self.disc, &pressure, &c0, self.coeffs)?;
        Ok(TimeStepState {
            step: 0,
            time: 0.0,
            pressure,
            velocity,
            concentration: c0,
            pressure_report,
            concentration_report: None,
            compatibility_defect: defect,
            wall_time: start.elapsed(),
        })
    }

    /// Advances `prev` (level `n-1`) to level `n`.
    pub fn step(&self, prev: &TimeStepState) -> Result<TimeStepState> {
        let start = Instant::now();
        let n = prev.step + 1;
        if n > self.grid.steps() {
            return Err(Error::invalid(format!(
                "step {n} is past the end of the time grid"
            )));
        }
        let t_n = self.grid.time(n);
        let sys = assemble_concentration(
            self.disc,
            &prev.concentration,
            &prev.velocity,
            self.coeffs,
            self.grid.tau(),
            t_n,
            self.mode,
        )?;
        let (concentration, c_report) = gmres(
            &sys.matrix,
            &sys.rhs,
            Some(&prev.concentration),
            &self.solvers.concentration,
        )?;
        if !c_report.converged {
            return Err(Error::SolverFailed {
                step: n,
                system: SystemKind::Concentration,
                report: c_report,
            });
        }
        let (pressure, pressure_report, defect) =
            self.solve_pressure(&concentration, t_n, Some(&prev.pressure), n)?;
        let velocity = compute_velocity(self.disc, &pressure, &concentration, self.coeffs)?;
        Ok(TimeStepState {
            step: n,
            time: t_n,
            pressure,
            velocity,
            concentration,
            pressure_report,
            concentration_report: Some(c_report),
            compatibility_defect: defect,
            wall_time: start.elapsed(),
        })
    }

    /// Runs all steps; `observer` sees every state including the initial
    /// one. The first failing step aborts the run.
    pub fn run(&self, mut observer: impl FnMut(&TimeStepState)) -> Result<RunOutput> {
        let wrap = |step: usize, e: Error| match e {
            e @ Error::SolverFailed { .. } => e,
            e => Error::StepFailed {
                step,
                source: Box::new(e),
            },
        };
        let mut state = self.initialize().map_err(|e| wrap(0, e))?;
        let mut history = Vec::with_capacity(self.grid.steps() + 1);
        history.push(self.sample(&state));
        observer(&state);
        for n in 1..=self.grid.steps() {
            state = self.step(&state).map_err(|e| wrap(n, e))?;
            history.push(self.sample(&state));
            observer(&state);
        }
        Ok(RunOutput {
            final_state: state,
            history,
        })
    }

    fn sample(&self, state: &TimeStepState) -> NormSample {
        NormSample {
            step: state.step,
            time: state.time,
            concentration_l2: self.concentration_l2(&state.concentration),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(1.0, 32).unwrap();
        assert_eq!(g.tau(), 1.0 / 32.0);
        assert_eq!(g.time(32), 1.0);
        assert_eq!(g.time(16), 0.5);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn step_must_divide_final_time() {
        assert_eq!(TimeGrid::from_step(1.0, 1.0 / 64.0).unwrap().steps(), 64);
        assert!(TimeGrid::from_step(1.0, 0.3).is_err());
        assert!(TimeGrid::from_step(1.0, -0.5).is_err());
    }
}
