//! Compressed sparse row storage and Jacobi-preconditioned Krylov solvers
//! (restarted GMRES and BiCGStab).
//!
//! Matrix-vector products sum each row in ascending column order, so results
//! are reproducible bit for bit. The solver is sequential and deterministic.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from raw CSR arrays. Column indices must be strictly increasing
    /// within each row.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::InvalidArgument("malformed row pointer".into()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: col_idx.len(), found: values.len() });
        }
        for r in 0..nrows {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if row_ptr[r] > row_ptr[r + 1]
                || cols.windows(2).any(|w| w[0] >= w[1])
                || cols.iter().any(|&c| c >= ncols)
            {
                return Err(Error::InvalidArgument(format!("row {r} has unsorted or out-of-range columns")));
            }
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::InvalidArgument(format!("entry ({r}, {c}) out of range")));
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(c, &v)| (r, c, v))
            })
            .collect();
        Self::from_triplets(rows.len(), ncols, &triplets).expect("dense input is in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterate `(col, value)` over one row in ascending column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// Mutable access to a stored entry; `None` when the entry is structurally zero.
    pub fn get_mut(&mut self, r: usize, c: usize) -> Option<&mut f64> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => Some(&mut self.values[span.start + k]),
            Err(_) => None,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows are visited in ascending order, so columns of the transpose stay sorted
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, row_ptr, col_idx, values }
    }

    /// Principal submatrix on `index` (square matrices); entries coupling to
    /// indices outside the set are dropped.
    pub fn principal_submatrix(&self, index: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &g) in index.iter().enumerate() {
            local[g] = k;
        }
        let mut row_ptr = Vec::with_capacity(index.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &g in index {
            let mut row: Vec<(usize, f64)> = self
                .row(g)
                .filter_map(|(c, v)| (local[c] != usize::MAX).then(|| (local[c], v)))
                .collect();
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows: index.len(), ncols: index.len(), row_ptr, col_idx, values }
    }

    /// `diag(left) * A * diag(right)`.
    pub fn scale(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[k] *= left[r] * right[self.col_idx[k]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        dense
    }

    /// Matrix Market coordinate text (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::with_capacity(32 * self.nnz() + 64);
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        s.push_str(&format!("{} {} {}\n", self.nrows, self.ncols, self.nnz()));
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                s.push_str(&format!("{} {} {:e}\n", r + 1, c + 1, v));
            }
        }
        s
    }
}

pub fn transpose(a: &SparseMatrix) -> SparseMatrix {
    a.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// GMRES restart length.
    pub restart: usize,
    pub method: KrylovMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KrylovMethod {
    Gmres,
    #[default]
    Bicgstab,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 20_000, restart: 50, method: KrylovMethod::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = rhs` from a zero initial guess.
///
/// Both methods use right Jacobi preconditioning and stop once
/// `||A x - rhs||_2 <= tolerance * ||rhs||_2`, checked on the true residual.
pub fn solve(a: &SparseMatrix, rhs: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    solve_from(a, rhs, vec![0.0; rhs.len()], opts)
}

/// As [`solve`], starting from `x0`.
pub fn solve_from(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if rhs.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rhs.len().min(x0.len()) });
    }
    if !(opts.tolerance > 0.0) || opts.restart == 0 {
        return Err(Error::InvalidArgument("tolerance and restart must be positive".into()));
    }
    let start = Instant::now();
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        let report = SolveReport { iterations: 0, relative_residual: 0.0, wall_time: start.elapsed() };
        return Ok((vec![0.0; n], report));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    match opts.method {
        KrylovMethod::Gmres => gmres(a, rhs, x0, &inv_diag, bnorm, start, opts),
        KrylovMethod::Bicgstab => bicgstab(a, rhs, x0, &inv_diag, bnorm, start, opts),
    }
}

fn residual_into(a: &SparseMatrix, x: &[f64], rhs: &[f64], r: &mut [f64]) {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
}

fn bicgstab(
    a: &SparseMatrix,
    rhs: &[f64],
    mut x: Vec<f64>,
    inv_diag: &[f64],
    bnorm: f64,
    start: Instant,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = rhs.len();
    let target = opts.tolerance * bnorm;
    let mut r = vec![0.0; n];
    residual_into(a, &x, rhs, &mut r);
    let mut iterations = 0usize;
    let report = |iterations: usize, res: f64| SolveReport {
        iterations,
        relative_residual: res / bnorm,
        wall_time: start.elapsed(),
    };
    let mut rnorm = norm(&r);
    // restarts with a fresh shadow vector guard against breakdown
    'outer: loop {
        if rnorm <= target {
            return Ok((x, report(iterations, rnorm)));
        }
        if iterations >= opts.max_iterations {
            return Err(Error::SolverStagnated(report(iterations, rnorm)));
        }
        let shadow = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut ph = vec![0.0; n];
        let mut sh = vec![0.0; n];
        let mut t = vec![0.0; n];
        let restart_norm = rnorm;
        loop {
            let rho_new = dot(&shadow, &r);
            if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                ph[i] = p[i] * inv_diag[i];
            }
            a.mul_vec_into(&ph, &mut v);
            let sv = dot(&shadow, &v);
            if sv == 0.0 || !sv.is_finite() {
                break;
            }
            alpha = rho / sv;
            for i in 0..n {
                r[i] -= alpha * v[i];
                x[i] += alpha * ph[i];
            }
            iterations += 1;
            let snorm = norm(&r);
            if snorm <= target {
                residual_into(a, &x, rhs, &mut r);
                rnorm = norm(&r);
                if rnorm <= target {
                    continue 'outer;
                }
                break;
            }
            for i in 0..n {
                sh[i] = r[i] * inv_diag[i];
            }
            a.mul_vec_into(&sh, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                break;
            }
            omega = dot(&t, &r) / tt;
            for i in 0..n {
                x[i] += omega * sh[i];
                r[i] -= omega * t[i];
            }
            rnorm = norm(&r);
            if rnorm <= target {
                residual_into(a, &x, rhs, &mut r);
                rnorm = norm(&r);
                if rnorm <= target {
                    continue 'outer;
                }
                break;
            }
            if iterations >= opts.max_iterations || !rnorm.is_finite() {
                break;
            }
        }
        residual_into(a, &x, rhs, &mut r);
        let fresh = norm(&r);
        if !(fresh < restart_norm) || iterations >= opts.max_iterations {
            return Err(Error::SolverStagnated(report(iterations, fresh)));
        }
        rnorm = fresh;
    }
}

fn gmres(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: Vec<f64>,
    inv_diag: &[f64],
    bnorm: f64,
    start: Instant,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = rhs.len();
    let m = opts.restart.min(n.max(1));
    let target = opts.tolerance * bnorm;

    let mut x = x0;
    let mut iterations = 0usize;
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    // Hessenberg columns, stored column-major with m + 1 rows.
    let mut hess = vec![0.0; (m + 1) * m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut previous_restart_residual = f64::INFINITY;

    loop {
        a.mul_vec_into(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        let report = SolveReport {
            iterations,
            relative_residual: beta / bnorm,
            wall_time: start.elapsed(),
        };
        if beta <= target {
            return Ok((x, report));
        }
        if iterations >= opts.max_iterations || !(beta < previous_restart_residual) {
            return Err(Error::SolverStagnated(report));
        }
        previous_restart_residual = beta;

        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        for j in 0..m {
            for ((zi, vi), di) in z.iter_mut().zip(&basis[j]).zip(inv_diag) {
                *zi = vi * di;
            }
            a.mul_vec_into(&z, &mut w);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                hess[j * (m + 1) + i] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
            let hnext = norm(&w);
            hess[j * (m + 1) + j + 1] = hnext;
            for i in 0..j {
                let (h0, h1) = (hess[j * (m + 1) + i], hess[j * (m + 1) + i + 1]);
                hess[j * (m + 1) + i] = cs[i] * h0 + sn[i] * h1;
                hess[j * (m + 1) + i + 1] = -sn[i] * h0 + cs[i] * h1;
            }
            let (h0, h1) = (hess[j * (m + 1) + j], hess[j * (m + 1) + j + 1]);
            let rho = h0.hypot(h1);
            if rho == 0.0 {
                break;
            }
            cs[j] = h0 / rho;
            sn[j] = h1 / rho;
            hess[j * (m + 1) + j] = rho;
            hess[j * (m + 1) + j + 1] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            iterations += 1;
            k = j + 1;
            if g[j + 1].abs() <= target || hnext == 0.0 || iterations >= opts.max_iterations {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // back substitution for the k x k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for l in i + 1..k {
                acc -= hess[l * (m + 1) + i] * y[l];
            }
            y[i] = acc / hess[i * (m + 1) + i];
        }
        for (i, yi) in y.iter().enumerate() {
            for ((xk, vk), dk) in x.iter_mut().zip(&basis[i]).zip(inv_diag) {
                *xk += yi * vk * dk;
            }
        }
    }
}
