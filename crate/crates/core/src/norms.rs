//! Error norms against exact fields and observed convergence orders.
//!
//! Integrals use the volume quadrature of the [`Discretization`]; maxima
//! are taken over quadrature points together with the dof nodes.

use serde::{Deserialize, Serialize};

use crate::assembly::{Discretization, VelocityField};
use crate::driver::TimeStepState;
use crate::fe::Order;
use crate::mms::ManufacturedSolution;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarNorm {
    L2,
    Linf,
    H1Semi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VectorNorm {
    L2,
    Linf,
    Lq(f64),
}

/// An exact scalar field, with its gradient when available.
pub struct ExactScalar<'a> {
    pub value: &'a dyn Fn(Point, f64) -> f64,
    pub gradient: Option<&'a dyn Fn(Point, f64) -> [f64; 2]>,
}

fn fe_value(disc: &Discretization, order: Order, coeffs: &[f64], t: usize, q: usize) -> f64 {
    match order {
        Order::P1 => disc.p1_value_at(coeffs, t, q),
        Order::P2 => disc.p2_value_at(coeffs, t, q),
    }
}

fn fe_gradient(
    disc: &Discretization,
    order: Order,
    coeffs: &[f64],
    t: usize,
    q: usize,
) -> [f64; 2] {
    match order {
        Order::P1 => disc.p1_gradient_at(coeffs, t),
        Order::P2 => disc.p2_gradient_at(coeffs, t, q),
    }
}

/// `‖u_h − u(·, t)‖` for a P1 or P2 function `u_h`.
pub fn error_scalar(
    disc: &Discretization,
    order: Order,
    coeffs: &[f64],
    exact: &ExactScalar<'_>,
    t: f64,
    norm: ScalarNorm,
) -> Result<f64> {
    let dofmap = match order {
        Order::P1 => disc.p1(),
        Order::P2 => disc.p2(),
    };
    if coeffs.len() != dofmap.dof_count() {
        return Err(Error::invalid(
            "error_scalar: coefficient vector has wrong length",
        ));
    }
    let nq = disc.n_quad();
    let nt = disc.mesh().n_triangles();
    let pts = disc.quad_points();
    let wts = disc.quad_weights();
    match norm {
        ScalarNorm::L2 => {
            let mut s = 0.0;
            for tri in 0..nt {
                for q in 0..nq {
                    let idx = tri * nq + q;
                    let e = fe_value(disc, order, coeffs, tri, q) - (exact.value)(pts[idx], t);
                    s += wts[idx] * e * e;
                }
            }
            Ok(s.sqrt())
        }
        ScalarNorm::Linf => {
            let mut m = 0.0f64;
            for tri in 0..nt {
                for q in 0..nq {
                    let e =
                        fe_value(disc, order, coeffs, tri, q) - (exact.value)(pts[tri * nq + q], t);
                    m = m.max(e.abs());
                }
            }
            for (c, &x) in coeffs.iter().zip(dofmap.coords()) {
                m = m.max((c - (exact.value)(x, t)).abs());
            }
            Ok(m)
        }
        ScalarNorm::H1Semi => {
            let grad = exact
                .gradient
                .ok_or_else(|| Error::invalid("H1 seminorm needs the exact gradient"))?;
            let mut s = 0.0;
            for tri in 0..nt {
                for q in 0..nq {
                    let idx = tri * nq + q;
                    let gh = fe_gradient(disc, order, coeffs, tri, q);
                    let g = grad(pts[idx], t);
                    s += wts[idx] * ((gh[0] - g[0]).powi(2) + (gh[1] - g[1]).powi(2));
                }
            }
            Ok(s.sqrt())
        }
    }
}

/// `‖u(·, t) − U‖` over the volume quadrature points, with the pointwise
/// Euclidean length of the difference.
pub fn error_velocity(
    disc: &Discretization,
    velocity: &VelocityField,
    exact: &dyn Fn(Point, f64) -> [f64; 2],
    t: f64,
    norm: VectorNorm,
) -> Result<f64> {
    if velocity.volume.len() != disc.quad_points().len() {
        return Err(Error::invalid(
            "error_velocity: velocity field does not match the quadrature",
        ));
    }
    let diffs = disc
        .quad_points()
        .iter()
        .zip(&velocity.volume)
        .map(|(&x, v)| {
            let u = exact(x, t);
            (u[0] - v[0]).hypot(u[1] - v[1])
        });
    match norm {
        VectorNorm::Linf => Ok(diffs.fold(0.0, f64::max)),
        VectorNorm::L2 => Ok(diffs
            .zip(disc.quad_weights())
            .map(|(d, w)| w * d * d)
            .sum::<f64>()
            .sqrt()),
        VectorNorm::Lq(q) => {
            if !(q >= 1.0) {
                return Err(Error::invalid(format!("L^q norm needs q >= 1, got {q}")));
            }
            Ok(diffs
                .zip(disc.quad_weights())
                .map(|(d, w)| w * d.powf(q))
                .sum::<f64>()
                .powf(1.0 / q))
        }
    }
}

/// Pressure errors modulo constants: `(‖P − p‖_{L²}, ‖∇(P − p)‖_{L^q})`,
/// after subtracting the mean of each field.
pub fn error_pressure(
    disc: &Discretization,
    coeffs: &[f64],
    exact: &ExactScalar<'_>,
    t: f64,
    q_exponent: f64,
) -> Result<(f64, f64)> {
    if coeffs.len() != disc.p2().dof_count() {
        return Err(Error::invalid(
            "error_pressure: coefficient vector has wrong length",
        ));
    }
    let grad = exact
        .gradient
        .ok_or_else(|| Error::invalid("pressure error needs the exact gradient"))?;
    let nq = disc.n_quad();
    let nt = disc.mesh().n_triangles();
    let pts = disc.quad_points();
    let wts = disc.quad_weights();
    let area: f64 = wts.iter().sum();
    let mut mean_h = 0.0;
    let mut mean = 0.0;
    for tri in 0..nt {
        for q in 0..nq {
            let idx = tri * nq + q;
            mean_h += wts[idx] * disc.p2_value_at(coeffs, tri, q);
            mean += wts[idx] * (exact.value)(pts[idx], t);
        }
    }
    mean_h /= area;
    mean /= area;
    let mut l2 = 0.0;
    let mut lq = 0.0;
    for tri in 0..nt {
        for q in 0..nq {
            let idx = tri * nq + q;
            let e =
                (disc.p2_value_at(coeffs, tri, q) - mean_h) - ((exact.value)(pts[idx], t) - mean);
            l2 += wts[idx] * e * e;
            let gh = disc.p2_gradient_at(coeffs, tri, q);
            let g = grad(pts[idx], t);
            lq += wts[idx] * (gh[0] - g[0]).hypot(gh[1] - g[1]).powf(q_exponent);
        }
    }
    Ok((l2.sqrt(), lq.powf(1.0 / q_exponent)))
}

/// Errors of one state against a manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub step: usize,
    pub time: f64,
    pub c_l2: f64,
    pub c_linf: f64,
    pub c_h1: f64,
    pub u_l2: f64,
    pub u_linf: f64,
    pub p_l2: f64,
    /// `‖∇(P − p)‖_{L^q}` with `q = 4`.
    pub p_grad_lq: f64,
}

impl ErrorRecord {
    pub const PRESSURE_GRADIENT_EXPONENT: f64 = 4.0;

    pub fn measure(
        disc: &Discretization,
        state: &TimeStepState,
        sol: &ManufacturedSolution,
    ) -> Result<Self> {
        let t = state.time;
        let c = ExactScalar {
            value: &*sol.concentration,
            gradient: Some(&*sol.concentration_gradient),
        };
        let p = ExactScalar {
            value: &*sol.pressure,
            gradient: Some(&*sol.pressure_gradient),
        };
        let u = |x: Point, t: f64| sol.velocity(x, t);
        let (p_l2, p_grad_lq) = error_pressure(
            disc,
            &state.pressure,
            &p,
            t,
            Self::PRESSURE_GRADIENT_EXPONENT,
        )?;
        Ok(ErrorRecord {
            step: state.step,
            time: t,
            c_l2: error_scalar(disc, Order::P1, &state.concentration, &c, t, ScalarNorm::L2)?,
            c_linf: error_scalar(
                disc,
                Order::P1,
                &state.concentration,
                &c,
                t,
                ScalarNorm::Linf,
            )?,
            c_h1: error_scalar(
                disc,
                Order::P1,
                &state.concentration,
                &c,
                t,
                ScalarNorm::H1Semi,
            )?,
            u_l2: error_velocity(disc, &state.velocity, &u, t, VectorNorm::L2)?,
            u_linf: error_velocity(disc, &state.velocity, &u, t, VectorNorm::Linf)?,
            p_l2,
            p_grad_lq,
        })
    }
}

/// Time-discrete `L^p` norm `(Σ τ v_n^p)^{1/p}`, or `max v_n` for
/// `p = ∞`.
pub fn discrete_lp_norm(values: &[f64], tau: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::invalid(format!(
            "discrete L^p norm needs p > 1, got {p}"
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!(
            "discrete L^p norm needs nonnegative values, got {v}"
        )));
    }
    if p.is_infinite() {
        return Ok(values.iter().cloned().fold(0.0, f64::max));
    }
    Ok(values
        .iter()
        .map(|v| tau * v.powf(p))
        .sum::<f64>()
        .powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedOrders {
    /// `log_r(e_i / e_{i+1})` for each adjacent pair.
    pub pairwise: Vec<f64>,
    /// The last pairwise order.
    pub headline: f64,
}

/// Observed orders for errors at successive refinements by `ratio`.
pub fn observed_orders(errors: &[f64], ratio: f64) -> Result<ObservedOrders> {
    if errors.len() < 2 {
        return Err(Error::invalid("observed orders need at least two errors"));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::invalid(format!(
            "observed orders need positive errors, got {e}"
        )));
    }
    if !(ratio > 1.0) {
        return Err(Error::invalid(format!(
            "refinement ratio must exceed 1, got {ratio}"
        )));
    }
    let pairwise: Vec<f64> = errors
        .windows(2)
        .map(|w| (w[0] / w[1]).ln() / ratio.ln())
        .collect();
    let headline = *pairwise.last().unwrap();
    Ok(ObservedOrders { pairwise, headline })
}
