//! Linear algebra for generator matrices.
//!
//! Generators of reversible jump processes are stored as sparse symmetric
//! "form matrices" `H = D − W` (`W` the jump rates, `D` their row sums), so
//! `fᵀ H f` is the Dirichlet form in the counting inner product. Small problems
//! go through dense `nalgebra` eigensolvers, larger ones through a
//! kernel-deflated Lanczos iteration and preconditioned conjugate gradients.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest problem handed to the dense symmetric eigensolver.
pub const DENSE_LIMIT: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigError {
    #[error("eigensolver stagnated after {iterations} iterations (residual {residual:e})")]
    Stagnation { iterations: usize, residual: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (residual {residual:e})")]
    CgStagnation { iterations: usize, residual: f64 },
}

/// Sparse matrix in CSR layout. Forms are symmetric with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Form matrix `H = D − W` from jump rates `(i, j, w)` with `i != j`.
    ///
    /// Duplicate `(i, j)` entries are summed. The rates must already be
    /// symmetric (`w_ij = w_ji`); this is checked in debug builds.
    pub fn from_rates(n: usize, mut rates: Vec<(u32, u32, f64)>) -> Self {
        rates.retain(|&(i, j, w)| i != j && w != 0.0);
        for (i, j, w) in rates.iter_mut() {
            // Negate off-diagonals; diagonal entries are appended below.
            *w = -*w;
            debug_assert!((*i as usize) < n && (*j as usize) < n);
        }
        let mut diag = vec![0.0; n];
        for &(i, _, w) in &rates {
            diag[i as usize] -= w;
        }
        rates.extend(diag.iter().enumerate().filter(|(_, d)| **d != 0.0).map(|(i, &d)| (i as u32, i as u32, d)));
        let m = Self::from_triplets(n, rates);
        debug_assert!(m.symmetry_defect() <= 1e-9 * m.max_abs().max(1.0));
        m
    }

    /// Matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut entries: Vec<(u32, u32, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(i, j, _)| ((i as u64) << 32) | j as u64);
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(u32, u32)> = None;
        for (i, j, w) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += w;
            } else {
                cols.push(j);
                vals.push(w);
                row_ptr[i as usize + 1] += 1;
                last = Some((i, j));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n, row_ptr, cols, vals }
    }

    /// Form matrix `H = D − W` built row by row; `row(i, buf)` pushes the jump
    /// rates `(j, w_ij)` out of state `i` (duplicates allowed, `j != i`).
    pub fn form_from_rows(n: usize, mut row: impl FnMut(usize, &mut Vec<(u32, f64)>)) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut buf = Vec::new();
        for i in 0..n {
            buf.clear();
            row(i, &mut buf);
            buf.sort_unstable_by_key(|e| e.0);
            let diag: f64 = buf.iter().map(|e| e.1).sum();
            let mut diag_done = false;
            let mut k = 0;
            while k < buf.len() {
                let j = buf[k].0;
                let mut w = 0.0;
                while k < buf.len() && buf[k].0 == j {
                    w += buf[k].1;
                    k += 1;
                }
                debug_assert!(j as usize != i);
                if !diag_done && j as usize > i {
                    cols.push(i as u32);
                    vals.push(diag);
                    diag_done = true;
                }
                cols.push(j);
                vals.push(-w);
            }
            if !diag_done {
                cols.push(i as u32);
                vals.push(diag);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// Add `delta` to an existing stored entry; `false` if `(i, j)` is not stored.
    pub fn add_to_entry(&mut self, i: usize, j: usize, delta: f64) -> bool {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].iter().position(|&c| c as usize == j) {
            Some(p) => {
                self.vals[r.start + p] += delta;
                true
            }
            None => false,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `xᵀ M` for a general (not necessarily symmetric) matrix.
    pub fn left_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += xi * v;
            }
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&c, &v)| v * x[c as usize]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, s * v)));
        Self::from_triplets(self.n, t)
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn triplets(&self) -> Vec<(u32, u32, f64)> {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (i as u32, j as u32, v))).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn symmetry_defect(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Connected components of the off-diagonal pattern; returns the label of each row.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut uf = UnionFind::new(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j != i && v != 0.0 {
                    uf.union(i, j);
                }
            }
        }
        uf.labels()
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Dense labels `0..count`, numbered by first appearance.
    pub(crate) fn labels(&mut self) -> (usize, Vec<usize>) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut count = 0;
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = count;
                count += 1;
            }
            out[i] = map[r];
        }
        (count, out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Orthonormal basis of indicator vectors, one per component label.
pub fn indicator_basis(count: usize, labels: &[usize]) -> Vec<Vec<f64>> {
    let mut sizes = vec![0usize; count];
    labels.iter().for_each(|&l| sizes[l] += 1);
    (0..count)
        .map(|c| {
            let s = 1.0 / (sizes[c] as f64).sqrt();
            labels.iter().map(|&l| if l == c { s } else { 0.0 }).collect()
        })
        .collect()
}

/// Remove the components along an orthonormal family (twice, for stability).
fn project_out(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            axpy(-c, b, x);
        }
    }
}

/// Sorted eigenvalues of a dense symmetric matrix.
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Result of a smallest-nonzero-eigenvalue computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallestEig {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Smallest eigenvalue of the PSD operator `h` restricted to the orthogonal
/// complement of `kernel` (an orthonormal family spanning its null space).
///
/// Lanczos without full reorthogonalization: loss of orthogonality only
/// duplicates converged Ritz values, and the smallest Ritz value converges
/// from above. Every Lanczos vector is kept orthogonal to `kernel`.
pub fn smallest_eig_deflated(
    h: &CsrMatrix,
    kernel: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SmallestEig, EigError> {
    let n = h.dim();
    assert!(n > kernel.len(), "complement of the kernel is empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project_out(&mut q, kernel);
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let mut q_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // betas[j] couples q_j and q_{j+1}
    let mut last = SmallestEig { value: f64::INFINITY, residual: f64::INFINITY, iterations: 0 };
    for it in 0..max_iter {
        h.matvec(&q, &mut w);
        if let Some(&b) = betas.last() {
            axpy(-b, &q_prev, &mut w);
        }
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        project_out(&mut w, kernel);
        alphas.push(a);
        let b = norm(&w);
        let check = it < 20 || it % 10 == 0 || b <= 1e-13 * a.abs().max(1.0) || it + 1 == max_iter;
        if check {
            let (theta, s_last) = tridiag_min_eig(&alphas, &betas);
            let residual = b * s_last.abs();
            last = SmallestEig { value: theta, residual, iterations: it + 1 };
            if residual < tol || b <= 1e-13 * a.abs().max(1.0) {
                return Ok(last);
            }
        }
        betas.push(b);
        std::mem::swap(&mut q_prev, &mut q);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / b);
    }
    Err(EigError::Stagnation { iterations: last.iterations, residual: last.residual })
}

/// Smallest eigenvalue of the symmetric tridiagonal matrix (diag `a`, off-diag `b`)
/// and the last component of a unit eigenvector.
fn tridiag_min_eig(a: &[f64], b: &[f64]) -> (f64, f64) {
    let m = a.len();
    if m == 1 {
        return (a[0], 1.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < m { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    // Sturm count: number of eigenvalues strictly below x.
    let count_below = |x: f64| {
        let mut c = 0;
        let mut d = a[0] - x;
        if d < 0.0 {
            c += 1;
        }
        for i in 1..m {
            let dd = if d == 0.0 { f64::EPSILON * (b[i - 1].abs() + 1e-300) } else { d };
            d = a[i] - x - b[i - 1] * b[i - 1] / dd;
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    let scale = hi.abs().max(lo.abs()).max(1e-300);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        if count_below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    // Inverse iteration with a slightly shifted eigenvalue.
    let shift = theta - 1e-12 * scale;
    let mut y = vec![1.0; m];
    for _ in 0..3 {
        y = tridiag_solve(a, b, shift, &y);
        let ny = norm(&y);
        if !ny.is_finite() || ny == 0.0 {
            return (theta, 0.0);
        }
        y.iter_mut().for_each(|v| *v /= ny);
    }
    (theta, y[m - 1])
}

/// Solve `(T − σI) x = rhs` for tridiagonal `T` with partial pivoting.
fn tridiag_solve(a: &[f64], b: &[f64], sigma: f64, rhs: &[f64]) -> Vec<f64> {
    let m = a.len();
    // Band storage after pivoting: u0 diag, u1 first super, u2 second super.
    let mut d: Vec<f64> = a.iter().map(|x| x - sigma).collect();
    let mut du: Vec<f64> = b.to_vec();
    du.push(0.0);
    let mut dl: Vec<f64> = b.to_vec();
    let mut du2 = vec![0.0; m];
    let mut x = rhs.to_vec();
    for i in 0..m - 1 {
        if d[i].abs() >= dl[i].abs() {
            let piv = if d[i] == 0.0 { 1e-300 } else { d[i] };
            let f = dl[i] / piv;
            d[i + 1] -= f * du[i];
            x[i + 1] -= f * x[i];
            dl[i] = 0.0;
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            du[i] = tmp;
            du2[i] = du[i + 1];
            du[i + 1] *= -f;
            x.swap(i, i + 1);
            x[i + 1] -= f * x[i];
            dl[i] = 0.0;
        }
    }
    let tiny = 1e-300;
    let dm = if d[m - 1] == 0.0 { tiny } else { d[m - 1] };
    x[m - 1] /= dm;
    if m >= 2 {
        let di = if d[m - 2] == 0.0 { tiny } else { d[m - 2] };
        x[m - 2] = (x[m - 2] - du[m - 2] * x[m - 1]) / di;
    }
    for i in (0..m.saturating_sub(2)).rev() {
        let di = if d[i] == 0.0 { tiny } else { d[i] };
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / di;
    }
    x
}

/// Solve `B x = r` on the complement of `kernel` by Jacobi-preconditioned CG.
pub fn cg_solve_deflated(
    b: &CsrMatrix,
    kernel: &[Vec<f64>],
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, EigError> {
    let n = b.dim();
    let inv_diag: Vec<f64> = b.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(x, d)| x * d).collect();
        project_out(&mut z, kernel);
        z
    };
    let mut r = rhs.to_vec();
    project_out(&mut r, kernel);
    let r0 = norm(&r);
    let mut x = vec![0.0; n];
    if r0 == 0.0 {
        return Ok(x);
    }
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        b.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rn = norm(&r);
        if rn <= rel_tol * r0 {
            project_out(&mut x, kernel);
            return Ok(x);
        }
        if it % 50 == 49 {
            project_out(&mut r, kernel);
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(EigError::CgStagnation { iterations: max_iter, residual: norm(&r) / r0 })
}

/// `sup_f A(f)/B(f)` over `f ⊥ ker B`, or `None` (= +∞) when `ker B ⊄ ker A`.
///
/// Dense path: diagonalize `B`, test its null vectors against `A`, and take the
/// top eigenvalue of `S^{-1/2} Uᵀ A U S^{-1/2}` on the range of `B`.
pub fn generalized_sup_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(b.clone());
    let bmax = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let amax = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let cut = 1e-9 * bmax.max(1e-300);
    let mut range = Vec::new();
    for k in 0..n {
        let u = eig.eigenvectors.column(k).into_owned();
        if eig.eigenvalues[k] <= cut {
            let au = a * &u;
            if au.amax() > 1e-8 * amax * (n as f64).sqrt() {
                return None;
            }
        } else {
            range.push((eig.eigenvalues[k], u));
        }
    }
    if range.is_empty() {
        return Some(0.0);
    }
    let r = range.len();
    let mut w = DMatrix::zeros(n, r);
    for (c, (s, u)) in range.iter().enumerate() {
        w.set_column(c, &(u / s.sqrt()));
    }
    let c = w.transpose() * a * &w;
    let c = (&c + c.transpose()) * 0.5;
    Some(dense_eigenvalues(&c).last().copied().unwrap_or(0.0))
}

/// Iterative counterpart of [`generalized_sup_dense`] for large sparse pencils.
///
/// `kernel_b` must span `ker B`; the caller is responsible for having checked
/// `ker B ⊆ ker A`. Lanczos runs on `B⁺A` in the `B` inner product, with the
/// inner solves done by preconditioned CG.
pub fn generalized_sup_iterative(
    a: &CsrMatrix,
    b: &CsrMatrix,
    kernel_b: &[Vec<f64>],
    rel_tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<f64, EigError> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project_out(&mut q, kernel_b);
    let bn = b.quadratic(&q).sqrt();
    q.iter_mut().for_each(|x| *x /= bn);
    let mut q_prev = vec![0.0; n];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev_top = f64::NEG_INFINITY;
    let mut top = 0.0;
    for it in 0..max_iter {
        let aq = a.apply(&q);
        let alpha = dot(&q, &aq);
        let mut w = cg_solve_deflated(b, kernel_b, &aq, 1e-11, 20_000)?;
        axpy(-alpha, &q, &mut w);
        if let Some(&bt) = betas.last() {
            axpy(-bt, &q_prev, &mut w);
        }
        project_out(&mut w, kernel_b);
        alphas.push(alpha);
        let beta = b.quadratic(&w).max(0.0).sqrt();
        // Largest Ritz value: smallest of the negated tridiagonal.
        let neg_a: Vec<f64> = alphas.iter().map(|x| -x).collect();
        let (theta, s_last) = tridiag_min_eig(&neg_a, &betas);
        top = -theta;
        let residual = beta * s_last.abs();
        if residual <= rel_tol * top.abs().max(1e-300)
            || beta <= 1e-12 * top.abs().max(1.0)
            || (it > 5 && (top - prev_top).abs() <= 1e-2 * rel_tol * top.abs())
        {
            return Ok(top);
        }
        prev_top = top;
        betas.push(beta);
        std::mem::swap(&mut q_prev, &mut q);
        q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / beta);
    }
    Err(EigError::Stagnation { iterations: max_iter, residual: (top - prev_top).abs() })
}

/// Solve a small dense linear system; `None` if singular.
pub fn dense_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().lu().solve(rhs)
}
