#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hand-derived closed forms for the benchmark, independent of the
/// library's flux code:
///
/// ```text
/// κ = 2/(1+c),  u = (−200 κ (x−t) e^{−t}, 0),  D = 1 + 0.1|u₁|
/// f = −(κ Δp + ∇κ·∇p)
/// g = c_t − (D Δc + ∇D·∇c) + u·∇c
/// ```
pub struct Oracle {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Oracle {
    pub fn e(&self) -> f64 {
        (-self.t).exp()
    }
    pub fn c(&self) -> f64 {
        0.5 + 0.2 * self.e() * self.x.cos() * self.y.sin()
    }
    pub fn grad_c(&self) -> [f64; 2] {
        let a = 0.2 * self.e();
        [
            -a * self.x.sin() * self.y.sin(),
            a * self.x.cos() * self.y.cos(),
        ]
    }
    pub fn lap_c(&self) -> f64 {
        -0.4 * self.e() * self.x.cos() * self.y.sin()
    }
    pub fn c_t(&self) -> f64 {
        -0.2 * self.e() * self.x.cos() * self.y.sin()
    }
    pub fn kappa(&self) -> f64 {
        2.0 / (1.0 + self.c())
    }
    pub fn grad_kappa(&self) -> [f64; 2] {
        let s = -2.0 / (1.0 + self.c()).powi(2);
        let g = self.grad_c();
        [s * g[0], s * g[1]]
    }
    pub fn grad_p(&self) -> [f64; 2] {
        [200.0 * (self.x - self.t) * self.e(), 0.0]
    }
    pub fn lap_p(&self) -> f64 {
        200.0 * self.e()
    }
    pub fn u1(&self) -> f64 {
        -self.kappa() * self.grad_p()[0]
    }
    pub fn f(&self) -> f64 {
        let gk = self.grad_kappa();
        let gp = self.grad_p();
        -(self.kappa() * self.lap_p() + gk[0] * gp[0] + gk[1] * gp[1])
    }
    pub fn g(&self) -> f64 {
        let e = self.e();
        let d = 1.0 + 0.1 * self.u1().abs();
        let gk = self.grad_kappa();
        let du1 = [
            -200.0 * e * (gk[0] * (self.x - self.t) + self.kappa()),
            -200.0 * e * gk[1] * (self.x - self.t),
        ];
        let sign = self.u1().signum();
        let grad_d = [0.1 * sign * du1[0], 0.1 * sign * du1[1]];
        let gc = self.grad_c();
        let div = d * self.lap_c() + grad_d[0] * gc[0] + grad_d[1] * gc[1];
        self.c_t() - div + self.u1() * gc[0]
    }
}

/// Random points of the benchmark disk away from the kink of `|u|` on
/// the line `x = t`.
pub fn sample_points(n: usize, seed: u64) -> Vec<([f64; 2], f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = 0.5 * rng.gen::<f64>().sqrt();
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let x = [0.5 + r * a.cos(), 0.5 + r * a.sin()];
        let t = rng.gen_range(0.0..1.0);
        if (x[0] - t).abs() > 1e-3 {
            out.push((x, t));
        }
    }
    out
}

/// Linear polynomial `a + b x + c y` on the reference triangle.
pub type Lin = [f64; 3];

/// Exact `∫ p q` over the reference triangle from the monomial moments
/// `∫1 = 1/2, ∫x = 1/6, ∫x² = 1/12, ∫xy = 1/24`.
pub fn integrate_product(p: Lin, q: Lin) -> f64 {
    let (i1, ix, ixx, ixy) = (0.5, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 24.0);
    p[0] * q[0] * i1
        + (p[0] * q[1] + p[1] * q[0]) * ix
        + (p[0] * q[2] + p[2] * q[0]) * ix
        + (p[1] * q[1] + p[2] * q[2]) * ixx
        + (p[1] * q[2] + p[2] * q[1]) * ixy
}

/// Gradients of the six quadratic Lagrange functions as pairs of linear
/// polynomials: `∇(λ_i(2λ_i − 1)) = (4λ_i − 1)∇λ_i` and
/// `∇(4λ_aλ_b) = 4(λ_a∇λ_b + λ_b∇λ_a)`.
pub fn p2_gradient_polynomials() -> [[Lin; 2]; 6] {
    let lambda: [Lin; 3] = [[1.0, -1.0, -1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let grad: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let scale = |p: Lin, s: f64| [p[0] * s, p[1] * s, p[2] * s];
    let add = |p: Lin, q: Lin| [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
    let mut out = [[[0.0; 3]; 2]; 6];
    for i in 0..3 {
        let f = add(scale(lambda[i], 4.0), [-1.0, 0.0, 0.0]);
        for k in 0..2 {
            out[i][k] = scale(f, grad[i][k]);
        }
    }
    for (e, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
        for k in 0..2 {
            out[3 + e][k] = add(
                scale(lambda[a], 4.0 * grad[b][k]),
                scale(lambda[b], 4.0 * grad[a][k]),
            );
        }
    }
    out
}

pub fn p2_stiffness_oracle() -> [[f64; 6]; 6] {
    let g = p2_gradient_polynomials();
    let mut k = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            k[i][j] = integrate_product(g[i][0], g[j][0]) + integrate_product(g[i][1], g[j][1]);
        }
    }
    k
}
