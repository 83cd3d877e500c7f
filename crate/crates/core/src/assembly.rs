//! Linear systems of one time step.
//!
//! Pressure (P2, pure Neumann):
//!
//! ```text
//! ((k/μ(C^{n-1})) ∇P, ∇v) = (q_I − q_P + f, v) − ∮ f_b v
//! ```
//!
//! Concentration (P1, backward Euler with lagged velocity `U`):
//!
//! ```text
//! (γ (C − C^{n-1})/τ, w) + (D(U) ∇C, ∇w) + convection(U; C, w) = (ĉ q_I + g, w) + ∮ g_b w
//! ```
//!
//! where the convection form is either the skew-symmetric split
//! `½(U·∇C, w) − ½(U C, ∇w) + ½((q_I + q_P) C, w) + ½∮ f_b C w` or the
//! plain `(U·∇C, w) + (q_I C, w)`. With a prescribed boundary
//! concentration the rows of the boundary vertices are replaced by the
//! trace values.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fe::{
    edge_gauss3, quadrature_rule, reference_basis, BasisValues, DofMap, ElementMap, Order,
    QuadratureRule,
};
use crate::mesh::Mesh;
use crate::sparse::{norm2, SparseMatrix};
use crate::tensor::DispersionModel;
use crate::{Error, Point, Result};

pub type SpaceFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;
/// Boundary data `(x, outward normal, t) -> value`.
pub type BoundaryFn = Arc<dyn Fn(Point, Point, f64) -> f64 + Send + Sync>;

/// Concentration-dependent viscosity with its admissible range.
#[derive(Clone)]
pub struct Viscosity {
    pub law: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub min: f64,
    pub max: f64,
}

impl Viscosity {
    pub fn constant(mu: f64) -> Self {
        Viscosity {
            law: Arc::new(move |_| mu),
            min: mu,
            max: mu,
        }
    }
}

/// Coefficients and data of the coupled problem. `None` means identically
/// zero.
#[derive(Clone)]
pub struct ProblemCoefficients {
    pub permeability: SpaceFn,
    pub viscosity: Viscosity,
    /// Porosity `γ`.
    pub porosity: f64,
    pub injection: Option<SpaceTimeFn>,
    pub production: Option<SpaceTimeFn>,
    pub injected_concentration: Option<SpaceTimeFn>,
    pub dispersion: DispersionModel,
    /// Extra volumetric source `f` of the pressure equation.
    pub pressure_source: Option<SpaceTimeFn>,
    /// Extra volumetric source `g` of the concentration equation.
    pub concentration_source: Option<SpaceTimeFn>,
    /// Normal flux `f_b = u·n`.
    pub pressure_flux: Option<BoundaryFn>,
    /// Normal dispersive flux `g_b = D(u)∇c·n`.
    pub concentration_flux: Option<BoundaryFn>,
    /// Concentration prescribed at the boundary vertices. When set, it
    /// replaces the flux condition of the concentration equation.
    pub boundary_concentration: Option<SpaceTimeFn>,
    pub initial_concentration: SpaceFn,
}

impl fmt::Debug for ProblemCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemCoefficients")
            .field("viscosity_range", &(self.viscosity.min, self.viscosity.max))
            .field("porosity", &self.porosity)
            .field("dispersion", &self.dispersion)
            .field("injection", &self.injection.is_some())
            .field("production", &self.production.is_some())
            .field("pressure_source", &self.pressure_source.is_some())
            .field("concentration_source", &self.concentration_source.is_some())
            .field("pressure_flux", &self.pressure_flux.is_some())
            .field("concentration_flux", &self.concentration_flux.is_some())
            .field(
                "boundary_concentration",
                &self.boundary_concentration.is_some(),
            )
            .finish_non_exhaustive()
    }
}

impl ProblemCoefficients {
    /// Constant permeability and viscosity, no sources, no boundary flux.
    pub fn homogeneous(
        permeability: f64,
        viscosity: Viscosity,
        dispersion: DispersionModel,
        initial_concentration: SpaceFn,
    ) -> Self {
        ProblemCoefficients {
            permeability: Arc::new(move |_| permeability),
            viscosity,
            porosity: 1.0,
            injection: None,
            production: None,
            injected_concentration: None,
            dispersion,
            pressure_source: None,
            concentration_source: None,
            pressure_flux: None,
            concentration_flux: None,
            boundary_concentration: None,
            initial_concentration,
        }
    }

    fn eval(f: &Option<SpaceTimeFn>, x: Point, t: f64) -> f64 {
        f.as_ref().map_or(0.0, |f| f(x, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionMode {
    /// Skew-symmetric split with the `½(q_I + q_P)` reaction term.
    Skew,
    /// Plain `(U·∇C, w)` convection.
    #[default]
    Direct,
}

/// Normal used when evaluating boundary flux data.
///
/// Edge normals make the pressure data compatible on the polygonal domain
/// up to quadrature error; circle normals leave an `O(h²)` defect that the
/// deflated solve projects away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryNormal {
    /// Normal of the circle at the radial projection of the point.
    Circle,
    /// Normal of the straight boundary edge.
    #[default]
    Edge,
}

/// A quadrature point on a boundary edge.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub edge: usize,
    pub triangle: usize,
    pub bary: [f64; 3],
    pub point: Point,
    /// Gauss weight times edge length.
    pub weight: f64,
    /// Normal selected by [`BoundaryNormal`].
    pub normal: Point,
    pub edge_normal: Point,
    p1: BasisValues,
    p2: BasisValues,
}

/// Mesh, spaces and precomputed quadrature data shared by all assembly
/// routines.
pub struct Discretization {
    mesh: Mesh,
    p1: DofMap,
    p2: DofMap,
    rule: QuadratureRule,
    maps: Vec<ElementMap>,
    qpoints: Vec<Point>,
    qweights: Vec<f64>,
    p1_tab: Vec<BasisValues>,
    p2_tab: Vec<BasisValues>,
    p1_grads: Vec<[[f64; 2]; 3]>,
    p2_grads: Vec<[[f64; 2]; 6]>,
    boundary: Vec<BoundaryPoint>,
    normal_mode: BoundaryNormal,
}

impl fmt::Debug for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Discretization")
            .field("triangles", &self.mesh.n_triangles())
            .field("p1_dofs", &self.p1.dof_count())
            .field("p2_dofs", &self.p2.dof_count())
            .field("quadrature_degree", &self.rule.degree)
            .field("normal_mode", &self.normal_mode)
            .finish()
    }
}

impl Discretization {
    /// Degree-4 volume quadrature.
    pub fn new(mesh: Mesh, normal_mode: BoundaryNormal) -> Result<Self> {
        Self::with_quadrature(mesh, normal_mode, 4)
    }

    pub fn with_quadrature(mesh: Mesh, normal_mode: BoundaryNormal, degree: usize) -> Result<Self> {
        if normal_mode == BoundaryNormal::Circle && mesh.disk().is_none() {
            return Err(Error::invalid(
                "circle normals need a mesh with a known disk",
            ));
        }
        let rule = quadrature_rule(degree)?;
        let p1 = DofMap::new(&mesh, Order::P1);
        let p2 = DofMap::new(&mesh, Order::P2);
        let p1_tab: Vec<_> = rule
            .points
            .iter()
            .map(|&b| reference_basis(Order::P1, b))
            .collect();
        let p2_tab: Vec<_> = rule
            .points
            .iter()
            .map(|&b| reference_basis(Order::P2, b))
            .collect();
        let nq = rule.len();
        let nt = mesh.n_triangles();
        let maps: Vec<_> = (0..nt)
            .map(|t| ElementMap::new(mesh.triangle_points(t)))
            .collect();
        let mut qpoints = Vec::with_capacity(nt * nq);
        let mut qweights = Vec::with_capacity(nt * nq);
        let mut p1_grads = Vec::with_capacity(nt);
        let mut p2_grads = Vec::with_capacity(nt * nq);
        for map in &maps {
            let mut g1 = [[0.0; 2]; 3];
            for i in 0..3 {
                g1[i] = map.gradient(p1_tab[0].grads[i]);
            }
            p1_grads.push(g1);
            for q in 0..nq {
                qpoints.push(map.point(rule.points[q]));
                qweights.push(rule.weights[q] * map.det.abs());
                let mut g2 = [[0.0; 2]; 6];
                for i in 0..6 {
                    g2[i] = map.gradient(p2_tab[q].grads[i]);
                }
                p2_grads.push(g2);
            }
        }

        let mut boundary = Vec::with_capacity(mesh.boundary_edges().len() * 3);
        for (e, be) in mesh.boundary_edges().iter().enumerate() {
            let k = be.local_edge;
            let (la, lb) = (k, (k + 1) % 3);
            let pa = mesh.vertices()[be.vertices[0]];
            let pb = mesh.vertices()[be.vertices[1]];
            for (s, w) in edge_gauss3() {
                let mut bary = [0.0; 3];
                bary[la] = 1.0 - s;
                bary[lb] = s;
                let point = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let normal = match normal_mode {
                    BoundaryNormal::Edge => be.normal,
                    BoundaryNormal::Circle => {
                        mesh.disk().expect("checked above").radial_normal(point)
                    }
                };
                boundary.push(BoundaryPoint {
                    edge: e,
                    triangle: be.triangle,
                    bary,
                    point,
                    weight: w * be.length,
                    normal,
                    edge_normal: be.normal,
                    p1: reference_basis(Order::P1, bary),
                    p2: reference_basis(Order::P2, bary),
                });
            }
        }

        Ok(Discretization {
            mesh,
            p1,
            p2,
            rule,
            maps,
            qpoints,
            qweights,
            p1_tab,
            p2_tab,
            p1_grads,
            p2_grads,
            boundary,
            normal_mode,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn p1(&self) -> &DofMap {
        &self.p1
    }

    pub fn p2(&self) -> &DofMap {
        &self.p2
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn normal_mode(&self) -> BoundaryNormal {
        self.normal_mode
    }

    pub fn n_quad(&self) -> usize {
        self.rule.len()
    }

    pub fn element_map(&self, t: usize) -> &ElementMap {
        &self.maps[t]
    }

    /// Physical quadrature points, triangle-major.
    pub fn quad_points(&self) -> &[Point] {
        &self.qpoints
    }

    /// Physical quadrature weights (summing to the polygon area).
    pub fn quad_weights(&self) -> &[f64] {
        &self.qweights
    }

    pub fn boundary_points(&self) -> &[BoundaryPoint] {
        &self.boundary
    }

    /// P1 basis values at reference quadrature point `q`.
    pub fn p1_values(&self, q: usize) -> &[f64] {
        self.p1_tab[q].values()
    }

    pub fn p2_values(&self, q: usize) -> &[f64] {
        self.p2_tab[q].values()
    }

    pub fn p1_gradients(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.p1_grads[t]
    }

    pub fn p2_gradients(&self, t: usize, q: usize) -> &[[f64; 2]; 6] {
        &self.p2_grads[t * self.n_quad() + q]
    }

    /// Value of a P1 function at quadrature point `q` of triangle `t`.
    pub fn p1_value_at(&self, coeffs: &[f64], t: usize, q: usize) -> f64 {
        let cell = self.p1.cell(t);
        let phi = &self.p1_tab[q].values;
        (0..3).map(|i| coeffs[cell[i]] * phi[i]).sum()
    }

    pub fn p1_gradient_at(&self, coeffs: &[f64], t: usize) -> [f64; 2] {
        let cell = self.p1.cell(t);
        let g = &self.p1_grads[t];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += coeffs[cell[i]] * g[i][0];
            out[1] += coeffs[cell[i]] * g[i][1];
        }
        out
    }

    pub fn p2_value_at(&self, coeffs: &[f64], t: usize, q: usize) -> f64 {
        let cell = self.p2.cell(t);
        let phi = &self.p2_tab[q].values;
        (0..6).map(|i| coeffs[cell[i]] * phi[i]).sum()
    }

    pub fn p2_gradient_at(&self, coeffs: &[f64], t: usize, q: usize) -> [f64; 2] {
        let cell = self.p2.cell(t);
        let g = self.p2_gradients(t, q);
        let mut out = [0.0; 2];
        for i in 0..6 {
            out[0] += coeffs[cell[i]] * g[i][0];
            out[1] += coeffs[cell[i]] * g[i][1];
        }
        out
    }

    fn boundary_p1_value(&self, coeffs: &[f64], bp: &BoundaryPoint) -> f64 {
        let cell = self.p1.cell(bp.triangle);
        (0..3).map(|i| coeffs[cell[i]] * bp.p1.values[i]).sum()
    }

    fn boundary_p2_gradient(&self, coeffs: &[f64], bp: &BoundaryPoint) -> [f64; 2] {
        let cell = self.p2.cell(bp.triangle);
        let map = &self.maps[bp.triangle];
        let mut out = [0.0; 2];
        for i in 0..6 {
            let g = map.gradient(bp.p2.grads[i]);
            out[0] += coeffs[cell[i]] * g[0];
            out[1] += coeffs[cell[i]] * g[1];
        }
        out
    }
}

/// Velocity sampled at every volume quadrature point (triangle-major) and
/// at every boundary quadrature point.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub n_quad: usize,
    pub volume: Vec<[f64; 2]>,
    pub boundary: Vec<[f64; 2]>,
}

impl VelocityField {
    pub fn zeros(disc: &Discretization) -> Self {
        VelocityField {
            n_quad: disc.n_quad(),
            volume: vec![[0.0; 2]; disc.quad_points().len()],
            boundary: vec![[0.0; 2]; disc.boundary_points().len()],
        }
    }

    /// Samples an analytic velocity.
    pub fn from_fn(disc: &Discretization, u: impl Fn(Point) -> [f64; 2]) -> Self {
        VelocityField {
            n_quad: disc.n_quad(),
            volume: disc.quad_points().iter().map(|&x| u(x)).collect(),
            boundary: disc
                .boundary_points()
                .iter()
                .map(|bp| u(bp.point))
                .collect(),
        }
    }

    pub fn at(&self, t: usize, q: usize) -> [f64; 2] {
        self.volume[t * self.n_quad + q]
    }

    /// `U·n` at each boundary quadrature point, using the selected normal.
    pub fn normal_trace(&self, disc: &Discretization) -> Vec<f64> {
        self.boundary
            .iter()
            .zip(disc.boundary_points())
            .map(|(u, bp)| u[0] * bp.normal[0] + u[1] * bp.normal[1])
            .collect()
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn checked_viscosity(coeffs: &ProblemCoefficients, c: f64, x: Point) -> Result<f64> {
    let mu = (coeffs.viscosity.law)(c);
    let range = (0.5 * coeffs.viscosity.min, 2.0 * coeffs.viscosity.max);
    if !(mu >= range.0 && mu <= range.1) {
        return Err(Error::CoefficientBlowup {
            viscosity: mu,
            point: x,
            range,
        });
    }
    Ok(mu)
}

fn scatter<const N: usize>(
    cell: &[usize],
    local: &[[f64; N]; N],
    triplets: &mut Vec<(usize, usize, f64)>,
) {
    for i in 0..N {
        for j in 0..N {
            triplets.push((cell[i], cell[j], local[i][j]));
        }
    }
}

/// The assembled pressure system.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// `m_i = ∫ φ_i`.
    pub mass: Vec<f64>,
    /// `|Σ_i rhs_i|`, the violation of the Neumann compatibility condition.
    pub compatibility_defect: f64,
}

/// Element stiffness, load and mass-moment vectors of the pressure system.
type PressureLocal = ([[f64; 6]; 6], [f64; 6], [f64; 6]);

pub fn assemble_pressure(
    disc: &Discretization,
    c_prev: &[f64],
    coeffs: &ProblemCoefficients,
    t: f64,
) -> Result<PressureSystem> {
    if c_prev.len() != disc.p1().dof_count() {
        return Err(Error::invalid(
            "pressure assembly: concentration vector has wrong length",
        ));
    }
    let nq = disc.n_quad();
    let locals: Vec<PressureLocal> = (0..disc.mesh().n_triangles())
        .into_par_iter()
        .map(|tri| {
            let mut a = [[0.0; 6]; 6];
            let mut f = [0.0; 6];
            let mut m = [0.0; 6];
            for q in 0..nq {
                let idx = tri * nq + q;
                let x = disc.qpoints[idx];
                let w = disc.qweights[idx];
                let c = disc.p1_value_at(c_prev, tri, q);
                let mu = checked_viscosity(coeffs, c, x)?;
                let kappa = (coeffs.permeability)(x) / mu;
                let src = ProblemCoefficients::eval(&coeffs.injection, x, t)
                    - ProblemCoefficients::eval(&coeffs.production, x, t)
                    + ProblemCoefficients::eval(&coeffs.pressure_source, x, t);
                let g = disc.p2_gradients(tri, q);
                let phi = disc.p2_values(q);
                for i in 0..6 {
                    for j in 0..6 {
                        a[i][j] += w * kappa * dot2(g[i], g[j]);
                    }
                    f[i] += w * src * phi[i];
                    m[i] += w * phi[i];
                }
            }
            Ok((a, f, m))
        })
        .collect::<Result<_>>()?;

    let n = disc.p2().dof_count();
    let mut triplets = Vec::with_capacity(locals.len() * 36);
    let mut rhs = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for (tri, (a, f, m)) in locals.iter().enumerate() {
        let cell = disc.p2().cell(tri);
        scatter(cell, a, &mut triplets);
        for i in 0..6 {
            rhs[cell[i]] += f[i];
            mass[cell[i]] += m[i];
        }
    }
    if let Some(fb) = &coeffs.pressure_flux {
        for bp in disc.boundary_points() {
            let flux = fb(bp.point, bp.normal, t);
            let cell = disc.p2().cell(bp.triangle);
            for i in 0..6 {
                rhs[cell[i]] -= bp.weight * flux * bp.p2.values[i];
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    let compatibility_defect = rhs.iter().sum::<f64>().abs();
    let rhs_norm = norm2(&rhs);
    if compatibility_defect > 1e-2 * rhs_norm {
        log::warn!(
            "pressure right-hand side violates compatibility: |sum| = {compatibility_defect:.3e}, |rhs| = {rhs_norm:.3e}"
        );
    }
    Ok(PressureSystem {
        matrix,
        rhs,
        mass,
        compatibility_defect,
    })
}

/// `U = −(k/μ(C)) ∇P` at all volume and boundary quadrature points.
pub fn compute_velocity(
    disc: &Discretization,
    pressure: &[f64],
    c_prev: &[f64],
    coeffs: &ProblemCoefficients,
) -> Result<VelocityField> {
    if pressure.len() != disc.p2().dof_count() || c_prev.len() != disc.p1().dof_count() {
        return Err(Error::invalid(
            "velocity: coefficient vectors have wrong length",
        ));
    }
    let nq = disc.n_quad();
    let volume: Vec<[f64; 2]> = (0..disc.quad_points().len())
        .into_par_iter()
        .map(|idx| {
            let (tri, q) = (idx / nq, idx % nq);
            let x = disc.qpoints[idx];
            let c = disc.p1_value_at(c_prev, tri, q);
            let mu = checked_viscosity(coeffs, c, x)?;
            let kappa = (coeffs.permeability)(x) / mu;
            let g = disc.p2_gradient_at(pressure, tri, q);
            Ok([-kappa * g[0], -kappa * g[1]])
        })
        .collect::<Result<_>>()?;
    let boundary = disc
        .boundary_points()
        .iter()
        .map(|bp| {
            let c = disc.boundary_p1_value(c_prev, bp);
            let mu = checked_viscosity(coeffs, c, bp.point)?;
            let kappa = (coeffs.permeability)(bp.point) / mu;
            let g = disc.boundary_p2_gradient(pressure, bp);
            Ok([-kappa * g[0], -kappa * g[1]])
        })
        .collect::<Result<_>>()?;
    Ok(VelocityField {
        n_quad: nq,
        volume,
        boundary,
    })
}

#[derive(Debug, Clone)]
pub struct ConcentrationSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// Concentration system for the step `t_n − τ → t_n`. Volume data and
/// `g_b` are taken at `t_n`; the boundary correction of the skew form uses
/// `f_b` at `t_n − τ`, the level of the lagged velocity.
pub fn assemble_concentration(
    disc: &Discretization,
    c_prev: &[f64],
    velocity: &VelocityField,
    coeffs: &ProblemCoefficients,
    tau: f64,
    t_n: f64,
    mode: ConvectionMode,
) -> Result<ConcentrationSystem> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!(
            "time step must be positive, got {tau}"
        )));
    }
    if c_prev.len() != disc.p1().dof_count() {
        return Err(Error::invalid(
            "concentration assembly: vector has wrong length",
        ));
    }
    if velocity.volume.len() != disc.quad_points().len()
        || velocity.boundary.len() != disc.boundary_points().len()
    {
        return Err(Error::invalid(
            "concentration assembly: velocity field does not match the quadrature",
        ));
    }
    let nq = disc.n_quad();
    let gamma_tau = coeffs.porosity / tau;
    let locals: Vec<([[f64; 3]; 3], [f64; 3])> = (0..disc.mesh().n_triangles())
        .into_par_iter()
        .map(|tri| {
            let mut a = [[0.0; 3]; 3];
            let mut f = [0.0; 3];
            let g = disc.p1_gradients(tri);
            for q in 0..nq {
                let idx = tri * nq + q;
                let x = disc.qpoints[idx];
                let w = disc.qweights[idx];
                let u = velocity.volume[idx];
                let phi = disc.p1_values(q);
                let d = coeffs.dispersion.tensor(u);
                let q_in = ProblemCoefficients::eval(&coeffs.injection, x, t_n);
                let reaction = match mode {
                    ConvectionMode::Skew => {
                        0.5 * (q_in + ProblemCoefficients::eval(&coeffs.production, x, t_n))
                    }
                    ConvectionMode::Direct => q_in,
                };
                let c_old: f64 = (0..3)
                    .map(|i| c_prev[disc.p1().cell(tri)[i]] * phi[i])
                    .sum();
                let load = ProblemCoefficients::eval(&coeffs.injected_concentration, x, t_n) * q_in
                    + ProblemCoefficients::eval(&coeffs.concentration_source, x, t_n);
                let dg: [[f64; 2]; 3] = std::array::from_fn(|j| {
                    [
                        d[0][0] * g[j][0] + d[0][1] * g[j][1],
                        d[1][0] * g[j][0] + d[1][1] * g[j][1],
                    ]
                });
                let u_grad: [f64; 3] = std::array::from_fn(|j| dot2(u, g[j]));
                for i in 0..3 {
                    for j in 0..3 {
                        let mut v = (gamma_tau + reaction) * phi[j] * phi[i] + dot2(g[i], dg[j]);
                        v += match mode {
                            ConvectionMode::Skew => 0.5 * (u_grad[j] * phi[i] - phi[j] * u_grad[i]),
                            ConvectionMode::Direct => u_grad[j] * phi[i],
                        };
                        a[i][j] += w * v;
                    }
                    f[i] += w * (gamma_tau * c_old + load) * phi[i];
                }
            }
            (a, f)
        })
        .collect();

    let n = disc.p1().dof_count();
    let mut triplets = Vec::with_capacity(locals.len() * 9 + disc.boundary_points().len() * 9);
    let mut rhs = vec![0.0; n];
    for (tri, (a, f)) in locals.iter().enumerate() {
        let cell = disc.p1().cell(tri);
        scatter(cell, a, &mut triplets);
        for i in 0..3 {
            rhs[cell[i]] += f[i];
        }
    }
    let skew_flux = match mode {
        ConvectionMode::Skew => coeffs.pressure_flux.as_ref(),
        ConvectionMode::Direct => None,
    };
    if coeffs.concentration_flux.is_some() || skew_flux.is_some() {
        for bp in disc.boundary_points() {
            let cell = disc.p1().cell(bp.triangle);
            let phi = &bp.p1.values;
            if let Some(gb) = &coeffs.concentration_flux {
                let v = gb(bp.point, bp.normal, t_n);
                for i in 0..3 {
                    rhs[cell[i]] += bp.weight * v * phi[i];
                }
            }
            if let Some(fb) = skew_flux {
                let v = 0.5 * fb(bp.point, bp.normal, t_n - tau);
                for i in 0..3 {
                    for j in 0..3 {
                        triplets.push((cell[i], cell[j], bp.weight * v * phi[i] * phi[j]));
                    }
                }
            }
        }
    }
    if let Some(trace) = &coeffs.boundary_concentration {
        let mut on_boundary = vec![false; n];
        for be in disc.mesh().boundary_edges() {
            for &v in &be.vertices {
                on_boundary[v] = true;
            }
        }
        triplets.retain(|&(i, _, _)| !on_boundary[i]);
        for (i, &b) in on_boundary.iter().enumerate() {
            if b {
                triplets.push((i, i, 1.0));
                rhs[i] = trace(disc.p1().coords()[i], t_n);
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    Ok(ConcentrationSystem { matrix, rhs })
}

/// P1 mass matrix `(φ_j, φ_i)`.
pub fn p1_mass_matrix(disc: &Discretization) -> SparseMatrix {
    let nq = disc.n_quad();
    let mut triplets = Vec::new();
    for tri in 0..disc.mesh().n_triangles() {
        let mut a = [[0.0; 3]; 3];
        for q in 0..nq {
            let w = disc.qweights[tri * nq + q];
            let phi = disc.p1_values(q);
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += w * phi[i] * phi[j];
                }
            }
        }
        scatter(disc.p1().cell(tri), &a, &mut triplets);
    }
    let n = disc.p1().dof_count();
    SparseMatrix::from_triplets(n, n, &triplets).expect("indices come from the dof map")
}

/// P2 stiffness `(κ ∇φ_j, ∇φ_i)`.
pub fn p2_stiffness_matrix(disc: &Discretization, kappa: impl Fn(Point) -> f64) -> SparseMatrix {
    let nq = disc.n_quad();
    let mut triplets = Vec::new();
    for tri in 0..disc.mesh().n_triangles() {
        let mut a = [[0.0; 6]; 6];
        for q in 0..nq {
            let idx = tri * nq + q;
            let w = disc.qweights[idx] * kappa(disc.qpoints[idx]);
            let g = disc.p2_gradients(tri, q);
            for i in 0..6 {
                for j in 0..6 {
                    a[i][j] += w * dot2(g[i], g[j]);
                }
            }
        }
        scatter(disc.p2().cell(tri), &a, &mut triplets);
    }
    let n = disc.p2().dof_count();
    SparseMatrix::from_triplets(n, n, &triplets).expect("indices come from the dof map")
}

/// P1 dispersion stiffness `(D(U) ∇φ_j, ∇φ_i)`.
pub fn dispersion_matrix(
    disc: &Discretization,
    velocity: &VelocityField,
    model: &DispersionModel,
) -> SparseMatrix {
    let nq = disc.n_quad();
    let mut triplets = Vec::new();
    for tri in 0..disc.mesh().n_triangles() {
        let g = disc.p1_gradients(tri);
        let mut a = [[0.0; 3]; 3];
        for q in 0..nq {
            let idx = tri * nq + q;
            let w = disc.qweights[idx];
            let d = model.tensor(velocity.volume[idx]);
            for i in 0..3 {
                for j in 0..3 {
                    let dg = [
                        d[0][0] * g[j][0] + d[0][1] * g[j][1],
                        d[1][0] * g[j][0] + d[1][1] * g[j][1],
                    ];
                    a[i][j] += w * dot2(g[i], dg);
                }
            }
        }
        scatter(disc.p1().cell(tri), &a, &mut triplets);
    }
    let n = disc.p1().dof_count();
    SparseMatrix::from_triplets(n, n, &triplets).expect("indices come from the dof map")
}

/// Convection matrices `N1_ij = (U·∇φ_j, φ_i)` and `N2_ij = (U φ_j, ∇φ_i)`.
pub fn convection_matrices(
    disc: &Discretization,
    velocity: &VelocityField,
) -> (SparseMatrix, SparseMatrix) {
    let nq = disc.n_quad();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for tri in 0..disc.mesh().n_triangles() {
        let g = disc.p1_gradients(tri);
        let mut a1 = [[0.0; 3]; 3];
        let mut a2 = [[0.0; 3]; 3];
        for q in 0..nq {
            let idx = tri * nq + q;
            let w = disc.qweights[idx];
            let u = velocity.volume[idx];
            let phi = disc.p1_values(q);
            for i in 0..3 {
                for j in 0..3 {
                    a1[i][j] += w * dot2(u, g[j]) * phi[i];
                    a2[i][j] += w * phi[j] * dot2(u, g[i]);
                }
            }
        }
        let cell = disc.p1().cell(tri);
        scatter(cell, &a1, &mut t1);
        scatter(cell, &a2, &mut t2);
    }
    let n = disc.p1().dof_count();
    (
        SparseMatrix::from_triplets(n, n, &t1).expect("indices come from the dof map"),
        SparseMatrix::from_triplets(n, n, &t2).expect("indices come from the dof map"),
    )
}

/// `½ ∮ (U·n) c_h² ds` over the polygon boundary with edge normals.
pub fn boundary_outflow_energy(disc: &Discretization, velocity: &VelocityField, c: &[f64]) -> f64 {
    disc.boundary_points()
        .iter()
        .zip(&velocity.boundary)
        .map(|(bp, u)| {
            let ch = disc.boundary_p1_value(c, bp);
            0.5 * bp.weight * dot2(*u, bp.edge_normal) * ch * ch
        })
        .sum()
}
