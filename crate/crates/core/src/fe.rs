//! Lagrange P1/P2 elements on affine triangles.
//!
//! Reference triangle: vertices `(0,0)`, `(1,0)`, `(0,1)`. Points on it are
//! written in barycentric form `[λ0, λ1, λ2]` with `ξ = λ1`, `η = λ2`.
//! P2 local numbering is the three vertices followed by the midpoints of
//! local edges `(0,1)`, `(1,2)`, `(2,0)`.

use crate::mesh::Mesh;
use crate::{Error, Point, Result};

/// Polynomial order of a Lagrange space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    P1,
    P2,
}

impl Order {
    pub fn from_degree(degree: usize) -> Result<Self> {
        match degree {
            1 => Ok(Order::P1),
            2 => Ok(Order::P2),
            d => Err(Error::invalid(format!("unsupported element order {d}"))),
        }
    }

    pub fn local_dofs(self) -> usize {
        match self {
            Order::P1 => 3,
            Order::P2 => 6,
        }
    }
}

/// Basis values and reference gradients at one point. Only the first
/// `len` entries are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValues {
    pub len: usize,
    pub values: [f64; 6],
    pub grads: [[f64; 2]; 6],
}

impl BasisValues {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn grads(&self) -> &[[f64; 2]] {
        &self.grads[..self.len]
    }
}

// d(λ0, λ1, λ2)/d(ξ, η)
const DLAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Evaluates the reference basis of the given order at a barycentric point.
pub fn reference_basis(order: Order, bary: [f64; 3]) -> BasisValues {
    let mut out = BasisValues {
        len: order.local_dofs(),
        values: [0.0; 6],
        grads: [[0.0; 2]; 6],
    };
    match order {
        Order::P1 => {
            for i in 0..3 {
                out.values[i] = bary[i];
                out.grads[i] = DLAMBDA[i];
            }
        }
        Order::P2 => {
            for i in 0..3 {
                let l = bary[i];
                out.values[i] = l * (2.0 * l - 1.0);
                let s = 4.0 * l - 1.0;
                out.grads[i] = [s * DLAMBDA[i][0], s * DLAMBDA[i][1]];
            }
            for (k, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
                out.values[3 + k] = 4.0 * bary[a] * bary[b];
                out.grads[3 + k] = [
                    4.0 * (bary[a] * DLAMBDA[b][0] + bary[b] * DLAMBDA[a][0]),
                    4.0 * (bary[a] * DLAMBDA[b][1] + bary[b] * DLAMBDA[a][1]),
                ];
            }
        }
    }
    out
}

/// Same as [`reference_basis`] but with the order given as an integer.
pub fn reference_basis_by_degree(degree: usize, bary: [f64; 3]) -> Result<BasisValues> {
    Ok(reference_basis(Order::from_degree(degree)?, bary))
}

/// Reference-triangle nodes of the Lagrange basis, barycentric.
pub fn reference_nodes(order: Order) -> Vec<[f64; 3]> {
    let mut nodes = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    if order == Order::P2 {
        nodes.extend([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]);
    }
    nodes
}

/// A quadrature rule on the reference triangle. Weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let b = 0.5 * (1.0 - a);
    for p in [[a, b, b], [b, a, b], [b, b, a]] {
        pts.push(p);
        wts.push(w);
    }
}

fn orbit6(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [
        [a, b, c],
        [b, a, c],
        [a, c, b],
        [c, a, b],
        [b, c, a],
        [c, b, a],
    ] {
        pts.push(p);
        wts.push(w);
    }
}

/// Symmetric positive-weight rule exact for polynomials of total degree
/// `degree` (1 to 6).
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let declared = match degree {
        1 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(0.5);
            1
        }
        2 => {
            orbit3(2.0 / 3.0, 1.0 / 6.0, &mut points, &mut weights);
            2
        }
        3 | 4 => {
            orbit3(
                0.108_103_018_168_070_23,
                0.111_690_794_839_005_74,
                &mut points,
                &mut weights,
            );
            orbit3(
                0.816_847_572_980_458_5,
                0.054_975_871_827_660_935,
                &mut points,
                &mut weights,
            );
            4
        }
        5 => {
            let s15 = 15f64.sqrt();
            points.push([1.0 / 3.0; 3]);
            weights.push(9.0 / 80.0);
            let a1 = (9.0 + 2.0 * s15) / 21.0;
            let a2 = (9.0 - 2.0 * s15) / 21.0;
            orbit3(a1, (155.0 - s15) / 2400.0, &mut points, &mut weights);
            orbit3(a2, (155.0 + s15) / 2400.0, &mut points, &mut weights);
            5
        }
        6 => {
            orbit3(
                0.501_426_509_658_179_1,
                0.058_393_137_863_189_684,
                &mut points,
                &mut weights,
            );
            orbit3(
                0.873_821_971_016_995_5,
                0.025_422_453_185_103_41,
                &mut points,
                &mut weights,
            );
            orbit6(
                0.053_145_049_844_816_945,
                0.310_352_451_033_784_4,
                0.041_425_537_809_186_785,
                &mut points,
                &mut weights,
            );
            6
        }
        d => {
            return Err(Error::invalid(format!(
                "no triangle quadrature of degree {d}"
            )))
        }
    };
    Ok(QuadratureRule {
        degree: declared,
        points,
        weights,
    })
}

/// Three-point Gauss–Legendre rule on `[0, 1]`: `(abscissa, weight)`,
/// weights summing to 1.
pub fn edge_gauss3() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [
        (0.5 - d, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + d, 5.0 / 18.0),
    ]
}

/// Affine map of a reference triangle onto a physical one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub origin: Point,
    /// Columns are `p1 - p0` and `p2 - p0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    /// `J^{-T}`, mapping reference gradients to physical gradients.
    pub inv_transpose: [[f64; 2]; 2],
}

impl ElementMap {
    pub fn new(p: [Point; 3]) -> Self {
        let j = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_transpose = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        ElementMap {
            origin: p[0],
            jacobian: j,
            det,
            inv_transpose,
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        let (xi, eta) = (bary[1], bary[2]);
        [
            self.origin[0] + self.jacobian[0][0] * xi + self.jacobian[0][1] * eta,
            self.origin[1] + self.jacobian[1][0] * xi + self.jacobian[1][1] * eta,
        ]
    }

    pub fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let m = &self.inv_transpose;
        [
            m[0][0] * g[0] + m[0][1] * g[1],
            m[1][0] * g[0] + m[1][1] * g[1],
        ]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }
}

/// Degree-of-freedom numbering of a continuous Lagrange space.
///
/// P1 dofs are the mesh vertices. P2 dofs are the vertices followed by
/// one dof per mesh edge (`V + edge_index`).
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    order: Order,
    dof_count: usize,
    cells: Vec<[usize; 6]>,
    coords: Vec<Point>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, order: Order) -> Self {
        let nv = mesh.n_vertices();
        let mut coords = mesh.vertices().to_vec();
        let mut cells = Vec::with_capacity(mesh.n_triangles());
        for (tri, edges) in mesh.triangles().iter().zip(mesh.triangle_edges()) {
            let mut cell = [0usize; 6];
            cell[..3].copy_from_slice(tri);
            if order == Order::P2 {
                for k in 0..3 {
                    cell[3 + k] = nv + edges[k];
                }
            }
            cells.push(cell);
        }
        if order == Order::P2 {
            for &[a, b] in mesh.edges() {
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        DofMap {
            order,
            dof_count: coords.len(),
            cells,
            coords,
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Global indices of the local dofs of triangle `t`.
    pub fn cell(&self, t: usize) -> &[usize] {
        &self.cells[t][..self.order.local_dofs()]
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }
}

/// Nodal interpolant of `f`.
pub fn interpolate(dofmap: &DofMap, f: impl Fn(Point) -> f64) -> Vec<f64> {
    dofmap.coords().iter().map(|&x| f(x)).collect()
}

/// Value and physical gradient of an FE function at a barycentric point of
/// triangle `t`.
pub fn evaluate(
    dofmap: &DofMap,
    mesh: &Mesh,
    coeffs: &[f64],
    t: usize,
    bary: [f64; 3],
) -> Result<(f64, [f64; 2])> {
    if t >= mesh.n_triangles() || t >= dofmap.n_cells() {
        return Err(Error::invalid(format!("triangle index {t} out of range")));
    }
    if coeffs.len() != dofmap.dof_count() {
        return Err(Error::invalid(format!(
            "coefficient vector has length {}, expected {}",
            coeffs.len(),
            dofmap.dof_count()
        )));
    }
    let map = ElementMap::new(mesh.triangle_points(t));
    let basis = reference_basis(dofmap.order(), bary);
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for (i, &dof) in dofmap.cell(t).iter().enumerate() {
        let c = coeffs[dof];
        value += c * basis.values[i];
        let g = map.gradient(basis.grads[i]);
        grad[0] += c * g[0];
        grad[1] += c * g[1];
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_disk_mesh;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // ∫ x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    fn monomial_integral(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn quadrature_exactness() {
        for degree in 1..=6 {
            let rule = quadrature_rule(degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!(
                        (q - exact).abs() < 1e-14,
                        "degree {degree}, x^{a} y^{b}: {q} vs {exact}"
                    );
                }
            }
        }
        assert!(quadrature_rule(0).is_err());
        assert!(quadrature_rule(7).is_err());
    }

    #[test]
    fn midpoint_and_six_point_rules() {
        let r1 = quadrature_rule(1).unwrap();
        assert_eq!(r1.weights, vec![0.5]);
        let r4 = quadrature_rule(4).unwrap();
        assert_eq!(r4.len(), 6);
        let q: f64 = r4
            .points
            .iter()
            .zip(&r4.weights)
            .map(|(p, w)| w * (p[1] * p[2]).powi(2))
            .sum();
        assert!((q - 1.0 / 180.0).abs() < 1e-15);
        assert!((r4.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn p2_at_centroid() {
        let b = reference_basis(Order::P2, [1.0 / 3.0; 3]);
        for i in 0..3 {
            assert!((b.values[i] + 1.0 / 9.0).abs() < 1e-15);
            assert!((b.values[3 + i] - 4.0 / 9.0).abs() < 1e-15);
        }
        assert!((b.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lagrange_property_and_partition_of_unity() {
        for order in [Order::P1, Order::P2] {
            let nodes = reference_nodes(order);
            for (j, &node) in nodes.iter().enumerate() {
                let b = reference_basis(order, node);
                for i in 0..b.len {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((b.values[i] - expected).abs() < 1e-15);
                }
            }
            for p in quadrature_rule(6).unwrap().points {
                let b = reference_basis(order, p);
                assert!((b.values().iter().sum::<f64>() - 1.0).abs() < 1e-14);
                let gs = b
                    .grads()
                    .iter()
                    .fold([0.0, 0.0], |s, g| [s[0] + g[0], s[1] + g[1]]);
                assert!(gs[0].abs() < 1e-14 && gs[1].abs() < 1e-14);
            }
        }
        assert!(reference_basis_by_degree(3, [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn p2_gradients_match_finite_differences() {
        let p = [0.2, 0.3, 0.5];
        let h = 1e-6;
        let b = reference_basis(Order::P2, p);
        let at = |xi: f64, eta: f64| reference_basis(Order::P2, [1.0 - xi - eta, xi, eta]);
        let (xp, xm) = (at(p[1] + h, p[2]), at(p[1] - h, p[2]));
        let (yp, ym) = (at(p[1], p[2] + h), at(p[1], p[2] - h));
        for i in 0..6 {
            let gx = (xp.values[i] - xm.values[i]) / (2.0 * h);
            let gy = (yp.values[i] - ym.values[i]) / (2.0 * h);
            assert!((gx - b.grads[i][0]).abs() < 1e-8);
            assert!((gy - b.grads[i][1]).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let mesh = generate_disk_mesh([0.5, 0.5], 0.5, 16).unwrap();
        let p1 = DofMap::new(&mesh, Order::P1);
        let p2 = DofMap::new(&mesh, Order::P2);
        assert_eq!(p1.dof_count(), mesh.n_vertices());
        assert_eq!(p2.dof_count(), mesh.n_vertices() + mesh.edges().len());
        let lin = interpolate(&p1, |x| x[0] + 2.0 * x[1]);
        let quad = interpolate(&p2, |x| x[0] * x[0]);
        let rule = quadrature_rule(4).unwrap();
        for t in 0..mesh.n_triangles() {
            let map = ElementMap::new(mesh.triangle_points(t));
            for &q in &rule.points {
                let x = map.point(q);
                let (v, g) = evaluate(&p1, &mesh, &lin, t, q).unwrap();
                assert!((v - (x[0] + 2.0 * x[1])).abs() < 1e-14);
                assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12);
                let (v2, g2) = evaluate(&p2, &mesh, &quad, t, q).unwrap();
                assert!((v2 - x[0] * x[0]).abs() < 1e-14);
                assert!((g2[0] - 2.0 * x[0]).abs() < 1e-11 && g2[1].abs() < 1e-11);
            }
        }
    }

    #[test]
    fn shared_edge_dofs_agree() {
        let mesh = generate_disk_mesh([0.0, 0.0], 1.0, 20).unwrap();
        let p2 = DofMap::new(&mesh, Order::P2);
        let nodes = reference_nodes(Order::P2);
        for t in 0..mesh.n_triangles() {
            let map = ElementMap::new(mesh.triangle_points(t));
            for (i, &dof) in p2.cell(t).iter().enumerate() {
                let x = map.point(nodes[i]);
                let c = p2.coords()[dof];
                assert!((x[0] - c[0]).abs() < 1e-15 && (x[1] - c[1]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn evaluate_rejects_bad_indices() {
        let mesh = generate_disk_mesh([0.0, 0.0], 1.0, 8).unwrap();
        let p1 = DofMap::new(&mesh, Order::P1);
        let c = vec![1.0; p1.dof_count()];
        assert!(evaluate(&p1, &mesh, &c, mesh.n_triangles(), [1.0, 0.0, 0.0]).is_err());
        assert!(evaluate(&p1, &mesh, &c[1..], 0, [1.0, 0.0, 0.0]).is_err());
        let (v, g) = evaluate(&p1, &mesh, &c, 0, [0.2, 0.3, 0.5]).unwrap();
        assert!((v - 1.0).abs() < 1e-15 && g[0].abs() < 1e-13 && g[1].abs() < 1e-13);
    }
}
