//! Compressed sparse row matrices and Krylov solvers.
//!
//! [`cg_deflated`] solves symmetric positive (semi)definite systems,
//! optionally restricted to the orthogonal complement of a known kernel
//! vector; [`gmres`] is restarted GMRES with right Jacobi preconditioning
//! for the nonsymmetric concentration systems.

use std::fmt;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from `(row, col, value)` triplets, summing
    /// duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets
            .iter()
            .find(|&&(i, j, _)| i >= n_rows || j >= n_cols)
        {
            return Err(Error::invalid(format!(
                "triplet ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
            )));
        }
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        // Bucket by row, then sort each row by column and merge duplicates.
        let mut buckets: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut fill = counts.clone();
        for &(i, j, v) in triplets {
            buckets[fill[i]] = (j, v);
            fill[i] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for i in 0..n_rows {
            let row = &mut buckets[counts[i]..counts[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            let mut last = usize::MAX;
            for &(j, v) in row.iter() {
                if j == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                    last = j;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "matvec: x has wrong length");
        assert_eq!(y.len(), self.n_rows, "matvec: y has wrong length");
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                s += self.values[k] * x[self.col_indices[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                let vt = if j < self.n_rows && i < self.n_cols {
                    self.get(j, i)
                } else {
                    0.0
                };
                worst = worst.max((v - vt).abs());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖`, recomputed from the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations, relative residual {:.3e}",
            if self.converged {
                "converged"
            } else {
                "not converged"
            },
            self.iterations,
            self.relative_residual
        )
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Kernel handling for singular symmetric systems.
///
/// The right-hand side and every iterate are projected onto the orthogonal
/// complement of `kernel`; on exit the solution is shifted along `kernel`
/// so that `constraint · x = 0`. With `constraint == kernel` this is plain
/// deflation against one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Deflation {
    kernel: Vec<f64>,
    constraint: Vec<f64>,
}

impl Deflation {
    pub fn new(kernel: Vec<f64>) -> Self {
        Deflation {
            constraint: kernel.clone(),
            kernel,
        }
    }

    /// Kernel `kernel`, solution normalized by `constraint · x = 0`.
    pub fn with_constraint(kernel: Vec<f64>, constraint: Vec<f64>) -> Self {
        Deflation { kernel, constraint }
    }

    fn project(&self, v: &mut [f64]) {
        let kk = dot(&self.kernel, &self.kernel);
        if kk > 0.0 {
            let c = dot(&self.kernel, v) / kk;
            axpy(-c, &self.kernel, v);
        }
    }

    fn normalize(&self, x: &mut [f64]) {
        let ck = dot(&self.constraint, &self.kernel);
        if ck != 0.0 {
            let c = dot(&self.constraint, x) / ck;
            axpy(-c, &self.kernel, x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Diagonal scaling; skipped automatically when a diagonal entry is
    /// not positive.
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-11,
            max_iter: 10_000,
            jacobi: true,
        }
    }
}

/// Preconditioned conjugate gradients with optional deflation.
///
/// Returns the iterate and its report even when the iteration limit is
/// reached; the caller decides what non-convergence means.
pub fn cg_deflated(
    a: &SparseMatrix,
    b: &[f64],
    deflation: Option<&Deflation>,
    x0: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::invalid("cg: dimension mismatch"));
    }
    if let Some(d) = deflation {
        if d.kernel.len() != n || d.constraint.len() != n {
            return Err(Error::invalid("cg: deflation vector has wrong length"));
        }
    }
    let asym = a.asymmetry();
    if asym > 1e-12 {
        return Err(Error::invalid(format!(
            "cg: matrix is not symmetric (relative asymmetry {asym:e})"
        )));
    }

    let project = |v: &mut [f64]| {
        if let Some(d) = deflation {
            d.project(v);
        }
    };

    let mut rhs = b.to_vec();
    project(&mut rhs);
    let rhs_norm = norm2(&rhs);

    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(_) => return Err(Error::invalid("cg: initial guess has wrong length")),
        None => vec![0.0; n],
    };
    project(&mut x);

    if rhs_norm == 0.0 {
        let x = vec![0.0; n];
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }

    let diag = a.diagonal();
    let use_jacobi = opts.jacobi && diag.iter().all(|&d| d > 0.0);
    let precondition = |r: &[f64], z: &mut [f64]| {
        if use_jacobi {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&diag) {
                *zi = ri / di;
            }
        } else {
            z.copy_from_slice(r);
        }
        project(z);
    };

    let mut ax = vec![0.0; n];
    let true_residual = |x: &[f64], ax: &mut Vec<f64>, r: &mut Vec<f64>| {
        a.mul_vec_into(x, ax);
        for i in 0..n {
            r[i] = rhs[i] - ax[i];
        }
        project(r);
        norm2(r)
    };

    // the returned iterate is the normalized one, so every convergence
    // check measures the residual after normalizing
    let settle = |x: &mut [f64]| {
        if let Some(d) = deflation {
            d.project(x);
            d.normalize(x);
        }
    };

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let target = opts.rel_tol * rhs_norm;
    let mut iterations = 0;
    settle(&mut x);
    let mut res = true_residual(&x, &mut ax, &mut r);

    'outer: while res > target && iterations < opts.max_iter {
        // (Re)start from the true residual.
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < opts.max_iter {
            a.mul_vec_into(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                settle(&mut x);
                res = true_residual(&x, &mut ax, &mut r);
                break 'outer;
            }
            let alpha = rz / pq;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut r);
            iterations += 1;
            if norm2(&r) <= target {
                settle(&mut x);
                res = true_residual(&x, &mut ax, &mut r);
                continue 'outer;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        settle(&mut x);
        res = true_residual(&x, &mut ax, &mut r);
    }

    let relative_residual = res / rhs_norm;
    Ok((
        x,
        SolveReport {
            iterations,
            relative_residual,
            converged: relative_residual <= opts.rel_tol,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub rel_tol: f64,
    /// Limit on the total number of Krylov steps over all cycles.
    pub max_iter: usize,
    pub jacobi: bool,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            restart: 30,
            rel_tol: 1e-10,
            max_iter: 10_000,
            jacobi: true,
        }
    }
}

/// Restarted GMRES with right Jacobi preconditioning.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &GmresOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::invalid("gmres: dimension mismatch"));
    }
    if opts.restart == 0 {
        return Err(Error::invalid("gmres: restart length must be positive"));
    }
    let inv_diag: Vec<f64> = if opts.jacobi {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::invalid(format!(
                "gmres: zero diagonal entry in row {i}"
            )));
        }
        diag.iter().map(|d| 1.0 / d).collect()
    } else {
        vec![1.0; n]
    };

    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        Some(_) => return Err(Error::invalid("gmres: initial guess has wrong length")),
        None => vec![0.0; n],
    };
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = opts.rel_tol * b_norm;
    let m = opts.restart;

    let mut r = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64]| {
        a.mul_vec_into(x, r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        norm2(r)
    };

    let mut iterations = 0;
    let mut beta = residual(&x, &mut r);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut w = vec![0.0; n];
    let mut zt = vec![0.0; n];

    while beta > target && iterations < opts.max_iter {
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < opts.max_iter {
            for i in 0..n {
                zt[i] = inv_diag[i] * basis[k][i];
            }
            a.mul_vec_into(&zt, &mut w);
            // Modified Gram–Schmidt.
            for (j, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[j][k] = hij;
                axpy(-hij, v, &mut w);
            }
            let wn = norm2(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            let breakdown = wn <= 1e-14 * denom;
            if g[k].abs() <= target || breakdown {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // Back substitution for the k Hessenberg columns.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        zt.iter_mut().for_each(|v| *v = 0.0);
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &basis[j], &mut zt);
        }
        for i in 0..n {
            x[i] += inv_diag[i] * zt[i];
        }
        let new_beta = residual(&x, &mut r);
        if k == 0 || new_beta >= beta * (1.0 - 1e-14) && new_beta > target {
            // No progress over a whole cycle.
            beta = new_beta;
            break;
        }
        beta = new_beta;
    }

    let relative_residual = beta / b_norm;
    Ok((
        x,
        SolveReport {
            iterations,
            relative_residual,
            converged: relative_residual <= opts.rel_tol,
        },
    ))
}
