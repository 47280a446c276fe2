//! Dense complex linear algebra.
//!
//! [`ComplexMatrix`] is a small row-major matrix type used throughout the
//! crate. The SVD is a one-sided Jacobi iteration (accurate on the
//! rank-deficient channels this crate produces); the Hermitian
//! eigendecomposition is delegated to `nalgebra`. This module adds the
//! ordering and phase conventions the rest of the crate relies on:
//!
//! * singular values and eigenvalues are sorted in descending order;
//! * every right singular vector / eigenvector is rotated so that its
//!   largest-magnitude entry is real and positive (first index wins ties).

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A complex vector. Plain `Vec` so that iterator adaptors work directly.
pub type ComplexVector = Vec<C64>;

const MAX_SWEEPS: usize = 10_000;
const JACOBI_SWEEPS: usize = 60;
// nalgebra's default convergence threshold
const CONVERGENCE_EPS: f64 = 5.0 * f64::EPSILON;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-10;
const CHOL_JITTER: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects wrong lengths and
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::contract("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    /// Column vector as an n×1 matrix.
    pub fn column_matrix(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// Outer product `a bᴴ`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn diagonal(&self) -> ComplexVector {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in sub");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> ComplexVector {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ v` without forming the adjoint.
    pub fn adjoint_mul_vec(&self, v: &[C64]) -> ComplexVector {
        assert_eq!(self.rows, v.len(), "adjoint_mul_vec dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    /// `self · diag(d)`: scales column j by `d[j]`.
    pub fn mul_diag(&self, d: &[C64]) -> Self {
        assert_eq!(self.cols, d.len());
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * d[j])
    }

    /// `diag(d) · self`: scales row i by `d[i]`.
    pub fn diag_mul(&self, d: &[C64]) -> Self {
        assert_eq!(self.rows, d.len());
        Self::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)])
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().iter().sum()
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> ComplexVector {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `‖A − Aᴴ‖_F ≤ tol·‖A‖_F`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let mut diff = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                diff += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        diff.sqrt() <= tol * self.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

/// `aᴴ b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> ComplexVector {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

/// Unnormalized forward DFT matrix, `F[j][k] = exp(−2πi·jk/n)`, so that
/// `F Fᴴ = n I`.
pub fn dft_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::dim("DFT size must be at least 1"));
    }
    Ok(ComplexMatrix::from_fn(n, n, |j, k| {
        // reduce jk mod n first to keep the argument small
        let e = ((j * k) % n) as f64;
        C64::from_polar(1.0, -2.0 * PI * e / n as f64)
    }))
}

/// Rotates `v` (in place) so that its largest-magnitude entry is real and
/// positive. Returns the unit phase factor that was applied.
pub fn fix_phase(v: &mut [C64]) -> C64 {
    let mut best = 0usize;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag <= 0.0 {
        return C64::new(1.0, 0.0);
    }
    let rot = v[best].conj() / best_mag;
    for z in v.iter_mut() {
        *z *= rot;
    }
    // remove residual imaginary round-off on the pivot
    v[best] = C64::new(v[best].norm(), 0.0);
    rot
}

/// Thin singular value decomposition `A = U diag(s) Vᴴ`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::contract("svd input must be finite"));
    }
    let k = a.rows().min(a.cols());
    if k == 0 {
        return Err(Error::dim("svd of an empty matrix"));
    }
    // work on a tall matrix; for wide A decompose Aᴴ and swap the factors
    let wide = a.rows() < a.cols();
    let tall = if wide { a.adjoint() } else { a.clone() };
    let (w, rv) = jacobi_columns(&tall)?;
    let sig: Vec<f64> = w.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sig[y].total_cmp(&sig[x]));
    let smax = sig[order[0]];

    // left factor of the tall problem: normalized columns, completed to an
    // orthonormal set where the singular value vanishes
    let m = tall.rows();
    let mut left: Vec<ComplexVector> = Vec::with_capacity(k);
    for &j in &order {
        if sig[j] > smax * 1e-13 && sig[j] > 0.0 {
            left.push(w[j].iter().map(|z| z / sig[j]).collect());
        } else {
            left.push(orthonormal_completion(&left, m));
        }
    }
    let right: Vec<ComplexVector> = order.iter().map(|&j| rv[j].clone()).collect();
    let (us, vs) = if wide { (right, left) } else { (left, right) };

    let mut out_u = ComplexMatrix::zeros(a.rows(), k);
    let mut out_v = ComplexMatrix::zeros(a.cols(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, (&j, (mut vcol, ucol))) in order.iter().zip(vs.into_iter().zip(us)).enumerate() {
        s.push(sig[j]);
        let rot = fix_phase(&mut vcol);
        let ucol: Vec<C64> = ucol.iter().map(|z| z * rot).collect();
        out_v.set_column(dst, &vcol);
        out_u.set_column(dst, &ucol);
    }
    let out = Svd {
        u: out_u,
        s,
        v: out_v,
    };
    let sd: Vec<C64> = out.s.iter().map(|&x| C64::new(x, 0.0)).collect();
    let rec = out.u.mul_diag(&sd).matmul(&out.v.adjoint());
    if rec.sub(a).frobenius_norm() > RECONSTRUCTION_TOL * a.frobenius_norm().max(1e-300) {
        return Err(Error::numerical("svd (reconstruction check)", JACOBI_SWEEPS));
    }
    Ok(out)
}

/// One-sided (Hestenes) Jacobi: rotates the columns of a tall `A` until they
/// are mutually orthogonal. Returns the rotated columns `W = A V` and the
/// columns of the accumulated unitary `V`.
fn jacobi_columns(a: &ComplexMatrix) -> Result<(Vec<ComplexVector>, Vec<ComplexVector>)> {
    let (m, n) = a.shape();
    let mut w: Vec<ComplexVector> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<ComplexVector> = (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    let tol = (m as f64) * f64::EPSILON;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sqr(&w[p]);
                let beta = norm_sqr(&w[q]);
                let gamma = inner(&w[p], &w[q]);
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // make the inner product real, then a real Jacobi rotation
                let ph = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for cols in [&mut w, &mut v] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let a0 = *xp;
                        let b0 = *xq * ph;
                        *xp = a0 * c - b0 * s;
                        *xq = a0 * s + b0 * c;
                    }
                }
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::numerical("svd (one-sided Jacobi did not converge)", JACOBI_SWEEPS))
}

/// A unit vector orthogonal to every vector in `basis` (assumed orthonormal).
fn orthonormal_completion(basis: &[ComplexVector], m: usize) -> ComplexVector {
    for e in 0..m {
        let mut x = vec![C64::new(0.0, 0.0); m];
        x[e] = C64::new(1.0, 0.0);
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for b in basis {
                let c = inner(b, &x);
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi -= bi * c;
                }
            }
        }
        let nx = norm(&x);
        if nx > 1e-8 {
            return x.into_iter().map(|z| z / nx).collect();
        }
    }
    unreachable!("fewer basis vectors than the dimension")
}

/// Hermitian eigendecomposition `A = P diag(λ) Pᴴ`.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

pub fn eigh(a: &ComplexMatrix) -> Result<Eigh> {
    if a.rows() != a.cols() {
        return Err(Error::dim(format!("eigh needs a square matrix, got {:?}", a.shape())));
    }
    if !a.is_finite() || !a.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::contract("eigh input must be Hermitian"));
    }
    let n = a.rows();
    // symmetrize away round-off before handing over
    let sym = ComplexMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5);
    let dec = nalgebra::SymmetricEigen::try_new(sym.to_nalgebra(), CONVERGENCE_EPS, MAX_SWEEPS)
        .ok_or_else(|| Error::numerical("eigh", MAX_SWEEPS))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| dec.eigenvalues[y].total_cmp(&dec.eigenvalues[x]));
    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(dec.eigenvalues[src]);
        let mut col: Vec<C64> = (0..n).map(|i| dec.eigenvectors[(i, src)]).collect();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(Eigh { values, vectors })
}

/// Column-wise Kronecker product: column j is `A[:,j] ⊗ B[:,j]`.
pub fn khatri_rao(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::dim(format!(
            "khatri_rao needs equal column counts, got {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let br = b.rows();
    Ok(ComplexMatrix::from_fn(a.rows() * br, a.cols(), |r, j| {
        a[(r / br, j)] * b[(r % br, j)]
    }))
}

/// Cholesky factor `A = L Lᴴ` of a Hermitian positive-definite matrix.
pub struct Cholesky {
    l: ComplexMatrix,
}

fn factorize(a: &ComplexMatrix, jitter: f64) -> Option<ComplexMatrix> {
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re + jitter;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

impl Cholesky {
    /// Factorizes `a`, retrying once with `1e−9·I` added before giving up.
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::dim("cholesky needs a square matrix"));
        }
        factorize(a, 0.0)
            .or_else(|| factorize(a, CHOL_JITTER))
            .map(|l| Self { l })
            .ok_or_else(|| Error::numerical("cholesky (matrix not positive definite after jitter)", 2))
    }

    pub fn factor(&self) -> &ComplexMatrix {
        &self.l
    }

    /// `log |A| = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        (0..self.l.rows()).map(|i| 2.0 * self.l[(i, i)].re.ln()).sum()
    }

    pub fn solve(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let n = self.l.rows();
        assert_eq!(b.rows(), n, "cholesky solve: row mismatch");
        let mut x = b.clone();
        for c in 0..b.cols() {
            // L y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)].re;
            }
            // Lᴴ x = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)].re;
            }
        }
        x
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.solve(&ComplexMatrix::identity(self.l.rows()))
    }
}

/// Solves `A X = B` for Hermitian PD `A` and returns `log|A|` from the same
/// factorization.
pub fn chol_logdet_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    if a.rows() != b.rows() {
        return Err(Error::dim("chol_logdet_solve: row mismatch"));
    }
    let c = Cholesky::new(a)?;
    Ok((c.solve(b), c.logdet()))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn reconstruct(d: &Svd) -> ComplexMatrix {
        let s: Vec<C64> = d.s.iter().map(|&x| c(x, 0.0)).collect();
        d.u.mul_diag(&s).matmul(&d.v.adjoint())
    }

    #[test]
    fn dft_small_cases() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1.as_slice(), &[c(1.0, 0.0)]);
        let f2 = dft_matrix(2).unwrap();
        let expect = [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)];
        for (a, b) in f2.as_slice().iter().zip(expect) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!(matches!(dft_matrix(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn dft_is_unitary_up_to_scale() {
        for n in [1usize, 2, 4, 8, 16, 64] {
            let f = dft_matrix(n).unwrap();
            let g = f.matmul(&f.adjoint());
            let target = ComplexMatrix::identity(n).scale(n as f64);
            let tol = if n == 8 { 1e-12 } else { 1e-10 };
            assert!(g.sub(&target).frobenius_norm() < tol, "n = {n}");
        }
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let d = svd(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(d.s, vec![1.0, 1.0]);

        let a = ComplexMatrix::from_row_major(2, 2, vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let d = svd(&a).unwrap();
        assert!((d.s[0] - 2.0).abs() < 1e-14 && d.s[1].abs() < 1e-14);
        assert!((d.v[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(d.v[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn svd_handles_rank_deficient_complex_inputs() {
        let mut r = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let a = random_vector(3, &mut r);
            let b = random_vector(4, &mut r);
            for m in [ComplexMatrix::outer(&a, &b), ComplexMatrix::outer(&b, &a)] {
                let d = svd(&m).unwrap();
                let top = d.v.column(0);
                // G^H G v = s^2 v
                let lhs = m.adjoint().matmul(&m).mul_vec(&top);
                for (x, y) in lhs.iter().zip(&top) {
                    assert!((x - y * d.s[0] * d.s[0]).norm() < 1e-9 * d.s[0] * d.s[0]);
                }
            }
        }
    }

    #[test]
    fn svd_reconstructs_random_wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(4, 6, &mut rng);
        let d = svd(&a).unwrap();
        assert!(rel_err(&reconstruct(&d), &a) < 1e-10);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let vtv = d.v.adjoint().matmul(&d.v);
        assert!(vtv.sub(&ComplexMatrix::identity(4)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn svd_and_eigh_reconstruct_many_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 0..100 {
            let rows = 1 + (t * 7) % 16;
            let cols = 1 + (t * 13) % 64;
            let a = random_matrix(rows, cols, &mut rng);
            let d = svd(&a).unwrap();
            assert!(rel_err(&reconstruct(&d), &a) < 1e-10, "svd {rows}x{cols}");

            let n = 1 + t % 16;
            let b = random_matrix(n, n, &mut rng);
            let h = b.add(&b.adjoint());
            let e = eigh(&h).unwrap();
            let l: Vec<C64> = e.values.iter().map(|&x| c(x, 0.0)).collect();
            let back = e.vectors.mul_diag(&l).matmul(&e.vectors.adjoint());
            assert!(rel_err(&back, &h) < 1e-10, "eigh {n}");
        }
    }

    #[test]
    fn eigh_examples() {
        let e = eigh(&ComplexMatrix::identity(3)).unwrap();
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-14);
        }

        let e = eigh(&ComplexMatrix::from_real_diag(&[1.0, 3.0])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 1)].norm() - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_vector(5, &mut rng);
        let e = eigh(&ComplexMatrix::outer(&a, &a)).unwrap();
        assert!((e.values[0] - norm_sqr(&a)).abs() < 1e-10 * norm_sqr(&a));
        for v in &e.values[1..] {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let a = ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        assert!(matches!(eigh(&a), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn decompositions_are_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(5, 9, &mut rng);
        let (d1, d2) = (svd(&a).unwrap(), svd(&a).unwrap());
        assert_eq!(d1.u, d2.u);
        assert_eq!(d1.v, d2.v);
        assert_eq!(d1.s, d2.s);
        let h = a.matmul(&a.adjoint());
        let (e1, e2) = (eigh(&h).unwrap(), eigh(&h).unwrap());
        assert_eq!(e1.vectors, e2.vectors);
        assert_eq!(e1.values, e2.values);
    }

    #[test]
    fn phase_convention_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(3, 5, &mut rng);
        let d = svd(&a).unwrap();
        for j in 0..d.v.cols() {
            let col = d.v.column(j);
            let (imax, _) = col
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
                .unwrap();
            assert!(col[imax].im.abs() < 1e-15 && col[imax].re > 0.0);
        }
    }

    #[test]
    fn khatri_rao_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(3, 1, &mut rng);
        let b = random_matrix(2, 1, &mut rng);
        let kr = khatri_rao(&a, &b).unwrap();
        assert_eq!(kr.column(0), kron_vec(&a.column(0), &b.column(0)));

        let i2 = ComplexMatrix::identity(2);
        let kr = khatri_rao(&i2, &i2).unwrap();
        assert_eq!(kr.shape(), (4, 2));
        let expect = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        for i in 0..4 {
            for j in 0..2 {
                assert_eq!(kr[(i, j)], c(expect[i][j], 0.0));
            }
        }
        assert!(khatri_rao(&ComplexMatrix::zeros(2, 3), &ComplexMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn khatri_rao_vectorization_identity() {
        // vec(A diag(x) C) = (Cᵀ ⊙ A) x
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_matrix(3, 4, &mut rng);
            let cm = random_matrix(4, 5, &mut rng);
            let x = random_vector(4, &mut rng);
            let lhs = a.mul_diag(&x).matmul(&cm).vec();
            let rhs = khatri_rao(&cm.transpose(), &a).unwrap().mul_vec(&x);
            let err: f64 = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-12 * norm(&lhs).max(1.0));
        }
    }

    #[test]
    fn cholesky_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_matrix(3, 2, &mut rng);
        let (x, ld) = chol_logdet_solve(&ComplexMatrix::identity(3), &b).unwrap();
        assert!(rel_err(&x, &b) < 1e-15);
        assert_eq!(ld, 0.0);

        let (_, ld) = chol_logdet_solve(&ComplexMatrix::identity(3).scale(2.0), &b).unwrap();
        assert!((ld - 3.0 * 2f64.ln()).abs() < 1e-14);

        let l = random_matrix(4, 4, &mut rng);
        let a = l.matmul(&l.adjoint()).add(&ComplexMatrix::identity(4));
        let rhs = random_matrix(4, 3, &mut rng);
        let (x, ld) = chol_logdet_solve(&a, &rhs).unwrap();
        assert!(rel_err(&a.matmul(&x), &rhs) < 1e-12);
        let eig = eigh(&a).unwrap();
        let ld_ref: f64 = eig.values.iter().map(|v| v.ln()).sum();
        assert!((ld - ld_ref).abs() < 1e-10);
    }

    #[test]
    fn cholesky_fails_on_indefinite() {
        let a = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        assert!(matches!(Cholesky::new(&a), Err(Error::NumericalFailure { .. })));
    }
}
