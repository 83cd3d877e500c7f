#![allow(clippy::needless_range_loop)]

use std::collections::HashSet;
use std::sync::Arc;

use miscible_core::assembly::{
    assemble_concentration, assemble_pressure, boundary_outflow_energy, compute_velocity,
    convection_matrices, dispersion_matrix, p1_mass_matrix, p2_stiffness_matrix, BoundaryNormal,
    ConvectionMode, Discretization, ProblemCoefficients, VelocityField, Viscosity,
};
use miscible_core::fe::interpolate;
use miscible_core::mesh::{generate_disk_mesh, Mesh};
use miscible_core::mms::{benchmark_solution, ConcentrationBoundary};
use miscible_core::sparse::{gmres, GmresOptions, SparseMatrix};
use miscible_core::tensor::{DispersionModel, DispersionParams, ScalarDispersionParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::p2_stiffness_oracle;

fn disk(m: usize) -> Discretization {
    Discretization::new(
        generate_disk_mesh([0.5, 0.5], 0.5, m).unwrap(),
        BoundaryNormal::Edge,
    )
    .unwrap()
}

fn single(points: [[f64; 2]; 3]) -> Discretization {
    let mesh = Mesh::new(points.to_vec(), vec![[0, 1, 2]], None, 1.0).unwrap();
    Discretization::new(mesh, BoundaryNormal::Edge).unwrap()
}

fn unit_coeffs() -> ProblemCoefficients {
    ProblemCoefficients::homogeneous(
        1.0,
        Viscosity::constant(1.0),
        DispersionModel::Scalar(ScalarDispersionParams::new(1.0, 0.0).unwrap()),
        Arc::new(|_| 0.0),
    )
}

fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    let rows = a.to_dense();
    DMatrix::from_fn(a.n_rows(), a.n_cols(), |i, j| rows[i][j])
}

fn quad_form(a: &SparseMatrix, c: &[f64]) -> f64 {
    a.mul_vec(c).iter().zip(c).map(|(x, y)| x * y).sum()
}

#[test]
fn p1_mass_on_reference_triangle() {
    let d = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let m = p1_mass_matrix(&d).to_dense();
    for i in 0..3 {
        for j in 0..3 {
            let exact = if i == j { 2.0 } else { 1.0 } / 24.0;
            assert!((m[i][j] - exact).abs() < 1e-13);
        }
    }
}

#[test]
fn p2_stiffness_on_reference_and_similar_triangles() {
    let oracle = p2_stiffness_oracle();
    assert!((oracle[0][0] - 1.0).abs() < 1e-15);
    assert!((oracle[1][1] - 0.5).abs() < 1e-15);
    assert!((oracle[3][3] - 8.0 / 3.0).abs() < 1e-15);

    // the 2D Laplacian stiffness is invariant under rotation, translation
    // and uniform scaling
    let a: f64 = 0.7;
    let s = 2.3;
    let map = |p: [f64; 2]| {
        [
            1.0 + s * (a.cos() * p[0] - a.sin() * p[1]),
            -2.0 + s * (a.sin() * p[0] + a.cos() * p[1]),
        ]
    };
    for tri in [
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [map([0.0, 0.0]), map([1.0, 0.0]), map([0.0, 1.0])],
    ] {
        let d = single(tri);
        let k = p2_stiffness_matrix(&d, |_| 1.0);
        let cell = d.p2().cell(0);
        for i in 0..6 {
            for j in 0..6 {
                assert!(
                    (k.get(cell[i], cell[j]) - oracle[i][j]).abs() < 1e-13,
                    "entry ({i}, {j}): {} vs {}",
                    k.get(cell[i], cell[j]),
                    oracle[i][j]
                );
            }
        }
    }
}

#[test]
fn pressure_matrix_uses_mobility() {
    let d = single([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    let mut coeffs = unit_coeffs();
    coeffs.permeability = Arc::new(|_| 3.0);
    coeffs.viscosity = Viscosity {
        law: Arc::new(|c| 1.0 + c),
        min: 1.0,
        max: 2.0,
    };
    let sys = assemble_pressure(&d, &[0.5; 3], &coeffs, 0.0).unwrap();
    let base = p2_stiffness_matrix(&d, |_| 2.0);
    for i in 0..6 {
        for j in 0..6 {
            assert!((sys.matrix.get(i, j) - base.get(i, j)).abs() < 1e-13);
        }
    }
    // ∫ φ_i: zero for the vertex functions, 1/6 for the edge functions
    for i in 0..3 {
        assert!(sys.mass[d.p2().cell(0)[i]].abs() < 1e-15);
        assert!((sys.mass[d.p2().cell(0)[3 + i]] - 1.0 / 6.0).abs() < 1e-15);
    }
}

#[test]
fn benchmark_pressure_data_is_nearly_compatible() {
    let d = disk(16);
    let sol = benchmark_solution();
    let coeffs = sol
        .problem_coefficients(1e-5, ConcentrationBoundary::Flux)
        .unwrap();
    let c0 = interpolate(d.p1(), |x| (sol.concentration)(x, 0.0));
    let sys = assemble_pressure(&d, &c0, &coeffs, 0.0).unwrap();
    let norm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm > 1.0);
    assert!(
        sys.compatibility_defect <= 1e-3 * norm,
        "defect {} vs |rhs| {norm}",
        sys.compatibility_defect
    );
}

/// Discrete L² distance between the computed and exact velocity over the
/// volume quadrature points.
fn velocity_error(m: usize) -> f64 {
    let d = disk(m);
    let sol = benchmark_solution();
    let coeffs = sol
        .problem_coefficients(1e-5, ConcentrationBoundary::Flux)
        .unwrap();
    let t = 0.0;
    let p = interpolate(d.p2(), |x| (sol.pressure)(x, t));
    let c = interpolate(d.p1(), |x| (sol.concentration)(x, t));
    let u = compute_velocity(&d, &p, &c, &coeffs).unwrap();
    let mut s = 0.0;
    for ((x, w), uh) in d.quad_points().iter().zip(d.quad_weights()).zip(&u.volume) {
        let ue = sol.velocity(*x, t);
        s += w * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
    }
    s.sqrt()
}

#[test]
fn velocity_of_interpolated_pressure_converges_at_second_order() {
    let order = (velocity_error(16) / velocity_error(32)).log2();
    assert!((1.5..=2.5).contains(&order), "order {order}");
}

#[test]
fn dispersion_stiffness_is_symmetric_positive_semidefinite() {
    let d = disk(8);
    let sol = benchmark_solution();
    let u = VelocityField::from_fn(&d, |x| sol.velocity(x, 0.2));
    for model in [
        DispersionModel::BearScheidegger(DispersionParams::new(0.5, 0.02, 0.005).unwrap()),
        DispersionModel::Scalar(ScalarDispersionParams::new(1.0, 0.1).unwrap()),
    ] {
        let k = dispersion_matrix(&d, &u, &model);
        assert!(k.asymmetry() < 1e-14);
        let row_sums = k.mul_vec(&vec![1.0; k.n_rows()]);
        assert!(row_sums.iter().all(|v| v.abs() < 1e-11));
        let mut eig: Vec<f64> = dense(&k)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        let top = eig[eig.len() - 1];
        assert!(eig[0].abs() < 1e-10 * top, "smallest {}", eig[0]);
        // the constant is the only kernel direction
        assert!(
            eig[1] > 1e-3 * top,
            "second smallest {} vs largest {top}",
            eig[1]
        );
    }
}

#[test]
fn convection_forms_are_adjoint_and_match_boundary_energy() {
    let d = disk(16);
    // divergence-free and linear, so every integrand below is integrated exactly
    let u = VelocityField::from_fn(&d, |x| [0.3 - 2.0 * (x[1] - 0.5), 1.1 + 2.0 * (x[0] - 0.5)]);
    let (n1, n2) = convection_matrices(&d, &u);
    let n = d.p1().dof_count();
    for i in 0..n {
        for (j, v) in n1.row(i) {
            assert!((v - n2.get(j, i)).abs() < 1e-14);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm2: f64 = c.iter().map(|v| v * v).sum();
        let skew = 0.5 * quad_form(&n1, &c) - 0.5 * quad_form(&n2, &c);
        assert!(skew.abs() <= 1e-12 * norm2);
        let boundary = boundary_outflow_energy(&d, &u, &c);
        assert!(
            (quad_form(&n1, &c) - boundary).abs() <= 1e-12 * norm2,
            "{} vs {boundary}",
            quad_form(&n1, &c)
        );
    }
}

#[test]
fn concentration_matrix_is_sum_of_building_blocks() {
    let d = disk(12);
    let mut coeffs = unit_coeffs();
    coeffs.dispersion =
        DispersionModel::BearScheidegger(DispersionParams::new(0.8, 0.1, 0.02).unwrap());
    let u = VelocityField::from_fn(&d, |x| [1.0 + x[1], x[0] * x[0] - 0.5]);
    let n = d.p1().dof_count();
    let c_prev = vec![0.25; n];
    let tau = 0.1;
    let m = p1_mass_matrix(&d);
    let k = dispersion_matrix(&d, &u, &coeffs.dispersion);
    let (n1, n2) = convection_matrices(&d, &u);
    let skew =
        assemble_concentration(&d, &c_prev, &u, &coeffs, tau, 1.0, ConvectionMode::Skew).unwrap();
    let direct =
        assemble_concentration(&d, &c_prev, &u, &coeffs, tau, 1.0, ConvectionMode::Direct).unwrap();
    for i in 0..n {
        for j in 0..n {
            let base = m.get(i, j) / tau + k.get(i, j);
            let s = base + 0.5 * n1.get(i, j) - 0.5 * n2.get(i, j);
            let dr = base + n1.get(i, j);
            assert!((skew.matrix.get(i, j) - s).abs() < 1e-12);
            assert!((direct.matrix.get(i, j) - dr).abs() < 1e-12);
        }
    }
    let mc = m.mul_vec(&c_prev);
    for i in 0..n {
        assert!((skew.rhs[i] - mc[i] / tau).abs() < 1e-13);
    }
}

#[test]
fn heat_step_preserves_constants() {
    let d = disk(16);
    let coeffs = unit_coeffs();
    let u = VelocityField::zeros(&d);
    let kappa = 0.37;
    let c_prev = vec![kappa; d.p1().dof_count()];
    for mode in [ConvectionMode::Skew, ConvectionMode::Direct] {
        let sys = assemble_concentration(&d, &c_prev, &u, &coeffs, 0.05, 0.05, mode).unwrap();
        let residual = sys.matrix.mul_vec(&c_prev);
        assert!(residual
            .iter()
            .zip(&sys.rhs)
            .all(|(a, b)| (a - b).abs() < 1e-13));
        let opts = GmresOptions {
            rel_tol: 1e-13,
            ..GmresOptions::default()
        };
        let (c, report) = gmres(&sys.matrix, &sys.rhs, None, &opts).unwrap();
        assert!(report.converged);
        assert!(c.iter().all(|v| (v - kappa).abs() < 1e-11));
    }
}

#[test]
fn prescribed_boundary_concentration_replaces_rows() {
    let d = disk(16);
    let mut coeffs = unit_coeffs();
    coeffs.boundary_concentration = Some(Arc::new(|x, t| x[0] + 10.0 * t));
    let u = VelocityField::from_fn(&d, |_| [1.0, 0.5]);
    let c_prev = vec![0.0; d.p1().dof_count()];
    let sys =
        assemble_concentration(&d, &c_prev, &u, &coeffs, 0.1, 0.3, ConvectionMode::Direct).unwrap();
    let boundary: HashSet<usize> = d
        .mesh()
        .boundary_edges()
        .iter()
        .flat_map(|e| e.vertices)
        .collect();
    assert_eq!(boundary.len(), 16);
    for i in 0..d.p1().dof_count() {
        let row: Vec<(usize, f64)> = sys.matrix.row(i).filter(|&(_, v)| v != 0.0).collect();
        if boundary.contains(&i) {
            assert_eq!(row, vec![(i, 1.0)]);
            assert!((sys.rhs[i] - (d.p1().coords()[i][0] + 3.0)).abs() < 1e-15);
        } else {
            assert!(row.len() > 1);
        }
    }
}

#[test]
fn nonzeros_only_between_dofs_sharing_a_triangle() {
    let d = disk(12);
    let u = VelocityField::from_fn(&d, |x| [x[1], -x[0]]);
    let sys = assemble_concentration(
        &d,
        &vec![0.0; d.p1().dof_count()],
        &u,
        &unit_coeffs(),
        0.1,
        0.1,
        ConvectionMode::Skew,
    )
    .unwrap();
    let mut p1_pairs = HashSet::new();
    for tri in d.mesh().triangles() {
        for &a in tri {
            for &b in tri {
                p1_pairs.insert((a, b));
            }
        }
    }
    for i in 0..sys.matrix.n_rows() {
        for (j, _) in sys.matrix.row(i) {
            assert!(p1_pairs.contains(&(i, j)));
        }
    }

    let k = p2_stiffness_matrix(&d, |_| 1.0);
    let mut p2_pairs = HashSet::new();
    for t in 0..d.mesh().n_triangles() {
        for &a in d.p2().cell(t) {
            for &b in d.p2().cell(t) {
                p2_pairs.insert((a, b));
            }
        }
    }
    for i in 0..k.n_rows() {
        for (j, _) in k.row(i) {
            assert!(p2_pairs.contains(&(i, j)));
        }
    }
    assert!(k.nnz() <= p2_pairs.len());
}

#[test]
fn invalid_inputs_are_rejected() {
    let d = disk(8);
    let coeffs = unit_coeffs();
    assert!(assemble_pressure(&d, &[0.0; 3], &coeffs, 0.0).is_err());
    let c = vec![0.0; d.p1().dof_count()];
    let u = VelocityField::zeros(&d);
    assert!(
        assemble_concentration(&d, &c, &u, &coeffs, -1.0, 0.0, ConvectionMode::Direct).is_err()
    );
    let wrong = VelocityField::zeros(&disk(12));
    assert!(
        assemble_concentration(&d, &c, &wrong, &coeffs, 0.1, 0.0, ConvectionMode::Direct).is_err()
    );
    let square = Mesh::new(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[0, 1, 2]],
        None,
        1.0,
    )
    .unwrap();
    assert!(Discretization::new(square, BoundaryNormal::Circle).is_err());
}
