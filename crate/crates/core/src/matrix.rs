// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra for small systems (n = 2..8).
//!
//! Matrices are stored row-major in a flat `Vec<Complex64>`. The hot kernels
//! (`mul_into`, `expm_into`) write into caller-owned buffers so that the
//! propagation loops do not allocate. Eigen, QR and determinant computations
//! are delegated to `nalgebra`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used by the `SuGenerator` membership checks (relative to `1 + ‖A‖_F`).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Tolerance on `‖U†U − I‖_F` for `Unitary` values.
pub const UNITARY_TOL: f64 = 1e-10;
/// Relative threshold for a commutator to count as a new direction in the Lie closure.
pub const CLOSURE_TOL: f64 = 1e-8;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(invalid("matrix must have at least one row"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("matrix rows must all have length equal to the row count"));
        }
        Ok(Self {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let dim = entries.len();
        let mut m = Self::zeros(dim);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * dim + i] = e;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| self.data[c * n + r].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &ComplexMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Self {
        let mut out = Self::zeros(self.dim);
        mul_into(self, other, &mut out);
        out
    }

    /// `self† · other`.
    pub fn adjoint_mul(&self, other: &ComplexMatrix) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for k in 0..n {
            for r in 0..n {
                let a = self.data[k * n + r].conj();
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..k * n + n];
                let dst = &mut out.data[r * n..r * n + n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self · X · self†`.
    pub fn conjugate(&self, x: &ComplexMatrix) -> Self {
        self.matmul(x).matmul(&self.adjoint())
    }

    /// `self† · X · self`.
    pub fn conjugate_adjoint(&self, x: &ComplexMatrix) -> Self {
        self.adjoint_mul(&x.matmul(self))
    }

    pub fn frobenius_distance(&self, other: &ComplexMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Skew-Hermitian part `(X − X†)/2`.
    pub fn skew_part(&self) -> Self {
        let n = self.dim;
        Self::from_fn(n, |r, c| (self.data[r * n + c] - self.data[c * n + r].conj()) * 0.5)
    }

    /// `‖X + X†‖_F`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for r in 0..n {
            for c in 0..n {
                acc += (self.data[r * n + c] + self.data[c * n + r].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `‖X†X − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.adjoint_mul(self);
        g.frobenius_distance(&Self::identity(self.dim))
    }

    pub fn determinant(&self) -> C64 {
        self.to_nalgebra().determinant()
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        Self::from_fn(n, |r, c| m[(r, c)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix addition");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix subtraction");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix product");
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// `out = a · b`. `out` must not alias either operand.
#[inline]
pub fn mul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    let n = a.dim;
    debug_assert!(b.dim == n && out.dim == n);
    let (ad, bd) = (&a.data, &b.data);
    let od = &mut out.data;
    for r in 0..n {
        let dst = &mut od[r * n..r * n + n];
        dst.fill(ZERO);
        for k in 0..n {
            let x = ad[r * n + k];
            let row = &bd[k * n..k * n + n];
            for (d, y) in dst.iter_mut().zip(row) {
                *d += x * y;
            }
        }
    }
}

/// Scratch buffers for [`expm_into`].
#[derive(Clone, Debug)]
pub struct ExpmScratch {
    x: ComplexMatrix,
    term: ComplexMatrix,
    tmp: ComplexMatrix,
}

impl ExpmScratch {
    pub fn new(dim: usize) -> Self {
        Self {
            x: ComplexMatrix::zeros(dim),
            term: ComplexMatrix::zeros(dim),
            tmp: ComplexMatrix::zeros(dim),
        }
    }
}

fn max_abs_row_sum(m: &ComplexMatrix) -> f64 {
    let n = m.dim;
    (0..n)
        .map(|r| m.data[r * n..r * n + n].iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `out = exp(a)` by Taylor summation with scaling and squaring.
///
/// The argument is scaled until its ∞-norm is at most 1/4, where a degree-12
/// Taylor polynomial is accurate to double precision, then squared back.
pub fn expm_into(a: &ComplexMatrix, out: &mut ComplexMatrix, scratch: &mut ExpmScratch) {
    let n = a.dim;
    let norm = max_abs_row_sum(a);
    let mut squarings = 0u32;
    if norm > 0.25 {
        squarings = (norm / 0.25).log2().ceil() as u32;
    }
    let s = 0.5f64.powi(squarings as i32);
    for (x, y) in scratch.x.data.iter_mut().zip(&a.data) {
        *x = y * s;
    }

    // Horner evaluation of sum_{j=0}^{12} X^j / j!.
    const DEGREE: usize = 12;
    let ExpmScratch { x, term, tmp } = scratch;
    term.data.copy_from_slice(&x.data);
    let inv = 1.0 / DEGREE as f64;
    for z in term.data.iter_mut() {
        *z *= inv;
    }
    for i in 0..n {
        term.data[i * n + i] += ONE;
    }
    for j in (1..DEGREE).rev() {
        mul_into(x, term, tmp);
        let inv = 1.0 / j as f64;
        for z in tmp.data.iter_mut() {
            *z *= inv;
        }
        for i in 0..n {
            tmp.data[i * n + i] += ONE;
        }
        std::mem::swap(term, tmp);
    }
    for _ in 0..squarings {
        mul_into(term, term, tmp);
        std::mem::swap(term, tmp);
    }
    out.data.copy_from_slice(&term.data);
}

/// A skew-Hermitian generator. Elements built with [`SuGenerator::new`] are
/// traceless (members of su(n)); [`SuGenerator::new_unitary_algebra`] admits a
/// trace part for models that are stored in u(n).
#[derive(Clone, PartialEq)]
pub struct SuGenerator {
    mat: ComplexMatrix,
}

impl SuGenerator {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let g = Self::new_unitary_algebra(mat)?;
        let tol = ALGEBRA_TOL * (1.0 + g.mat.frobenius_norm());
        if g.mat.trace().norm() > tol {
            return Err(invalid(format!(
                "generator is not traceless (|Tr| = {:.3e})",
                g.mat.trace().norm()
            )));
        }
        Ok(g)
    }

    /// Skew-Hermitian matrix, trace allowed.
    pub fn new_unitary_algebra(mat: ComplexMatrix) -> Result<Self> {
        if mat.dim() == 0 {
            return Err(invalid("generator must have positive dimension"));
        }
        if !mat.is_finite() {
            return Err(invalid("generator has non-finite entries"));
        }
        let tol = ALGEBRA_TOL * (1.0 + mat.frobenius_norm());
        let defect = mat.hermitian_defect();
        if defect > tol {
            return Err(invalid(format!(
                "generator is not skew-Hermitian (‖A + A†‖ = {defect:.3e})"
            )));
        }
        Ok(Self { mat })
    }

    /// `i·H` for a Hermitian `H`; the skew-Hermitian part is taken exactly.
    pub fn from_hermitian(h: &ComplexMatrix) -> Result<Self> {
        let a = h.scale_complex(I).skew_part();
        Self::new(a)
    }

    pub(crate) fn from_matrix_unchecked(mat: ComplexMatrix) -> Self {
        Self { mat }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            mat: ComplexMatrix::zeros(dim),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn norm(&self) -> f64 {
        self.mat.frobenius_norm()
    }

    pub fn is_traceless(&self) -> bool {
        self.mat.trace().norm() <= ALGEBRA_TOL * (1.0 + self.norm())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mat: self.mat.scale(s),
        }
    }

    /// `self + s · other`.
    pub fn plus_scaled(&self, s: f64, other: &SuGenerator) -> Self {
        let mut mat = self.mat.clone();
        mat.axpy(s, &other.mat);
        Self { mat }
    }
}

impl fmt::Debug for SuGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SuGenerator {:?}", self.mat)
    }
}

#[derive(Clone, PartialEq)]
pub struct Unitary {
    mat: ComplexMatrix,
}

impl Unitary {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        if !mat.is_finite() {
            return Err(invalid("unitary has non-finite entries"));
        }
        let defect = mat.unitarity_defect();
        if defect > UNITARY_TOL {
            return Err(invalid(format!("matrix is not unitary (‖U†U − I‖ = {defect:.3e})")));
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_matrix_unchecked(mat: ComplexMatrix) -> Self {
        Self { mat }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: ComplexMatrix::identity(dim),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint(),
        }
    }

    pub fn compose(&self, other: &Unitary) -> Self {
        Self {
            mat: self.mat.matmul(&other.mat),
        }
    }

    pub fn determinant(&self) -> C64 {
        self.mat.determinant()
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.mat.unitarity_defect()
    }

    /// `U† X U`, the adjoint action used by the left-trivialized variations.
    pub fn pull_back(&self, x: &SuGenerator) -> SuGenerator {
        SuGenerator::from_matrix_unchecked(self.mat.conjugate_adjoint(x.matrix()))
    }

    /// Nearest unitary in Frobenius norm (polar factor), via the SVD.
    pub fn polar_projection(mat: &ComplexMatrix) -> Self {
        let svd = mat.to_nalgebra().svd(true, true);
        let u = svd.u.expect("svd requested u");
        let v_t = svd.v_t.expect("svd requested v_t");
        Self {
            mat: ComplexMatrix::from_nalgebra(&(u * v_t)),
        }
    }
}

impl fmt::Debug for Unitary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Unitary {:?}", self.mat)
    }
}

/// Eigendecomposition `H = V·diag(λ)·V†` of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// Decomposes the Hermitian part of `h`.
    pub fn new(h: &ComplexMatrix) -> Self {
        let n = h.dim();
        let sym = ComplexMatrix::from_fn(n, |r, c| (h[(r, c)] + h[(c, r)].conj()) * 0.5);
        let eig = nalgebra::SymmetricEigen::new(sym.to_nalgebra());
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: ComplexMatrix::from_nalgebra(&eig.eigenvectors),
        }
    }

    /// Eigendecomposition of `−i·A` for a skew-Hermitian `A`, so that `A = V·diag(iλ)·V†`.
    pub fn of_skew(a: &ComplexMatrix) -> Self {
        Self::new(&a.scale_complex(-I))
    }

    /// `V·diag(f(λ))·V†`.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let v = &self.vectors;
        let n = v.dim();
        let fl: Vec<C64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += v[(r, k)] * fl[k] * v[(c, k)].conj();
                }
                out[(r, c)] = acc;
            }
        }
        out
    }
}

/// `exp(scale · A)` for a skew-Hermitian `A`, via the eigendecomposition of `−iA`.
pub fn expm_skew(a: &SuGenerator, scale: f64) -> Result<Unitary> {
    if !scale.is_finite() {
        return Err(invalid("expm_skew scale must be finite"));
    }
    if !a.matrix().is_finite() {
        return Err(invalid("expm_skew generator must be finite"));
    }
    let eig = HermitianEigen::of_skew(a.matrix());
    let mat = eig.apply(|l| C64::from_polar(1.0, scale * l));
    Ok(Unitary::from_matrix_unchecked(mat))
}

/// Real trace inner product `Re Tr(A†B)`.
pub fn trace_inner(a: &SuGenerator, b: &SuGenerator) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    Ok(inner_unchecked(a.matrix(), b.matrix()))
}

#[inline]
pub(crate) fn inner_unchecked(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn commutator(a: &SuGenerator, b: &SuGenerator) -> Result<SuGenerator> {
    check_same_dim(a.dim(), b.dim())?;
    let ab = a.matrix().matmul(b.matrix());
    let ba = b.matrix().matmul(a.matrix());
    Ok(SuGenerator::from_matrix_unchecked(&ab - &ba))
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn as_real_vector(m: &ComplexMatrix) -> Vec<f64> {
    m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Real dimension of the Lie algebra generated by `generators` under commutation.
///
/// Commutators of every pair of spanning elements are orthogonalized against
/// the current span (two passes of modified Gram–Schmidt); a residual larger
/// than [`CLOSURE_TOL`] times the commutator norm is a new direction. The loop
/// stops once every pair has been bracketed without growth.
pub fn lie_closure_rank(generators: &[SuGenerator]) -> Result<usize> {
    let first = generators
        .first()
        .ok_or_else(|| invalid("lie_closure_rank needs at least one generator"))?;
    let n = first.dim();
    for g in generators {
        check_same_dim(n, g.dim())?;
    }

    let max_dim = 2 * n * n;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut elements: Vec<ComplexMatrix> = Vec::new();

    let try_add = |m: &ComplexMatrix, basis: &mut Vec<Vec<f64>>, elements: &mut Vec<ComplexMatrix>| {
        let mut v = as_real_vector(m);
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || basis.len() >= max_dim {
            return;
        }
        for _ in 0..2 {
            for b in basis.iter() {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= p * y;
                }
            }
        }
        let resid = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if resid > CLOSURE_TOL * norm0 {
            for x in v.iter_mut() {
                *x /= resid;
            }
            let mat = ComplexMatrix::from_fn(n, |r, c| {
                let k = 2 * (r * n + c);
                C64::new(v[k], v[k + 1])
            });
            basis.push(v);
            elements.push(mat);
        }
    };

    for g in generators {
        try_add(g.matrix(), &mut basis, &mut elements);
    }
    let mut i = 0;
    while i < elements.len() {
        for j in 0..i {
            let a = &elements[i];
            let b = &elements[j];
            let c = &a.matmul(b) - &b.matmul(a);
            try_add(&c, &mut basis, &mut elements);
        }
        i += 1;
    }
    Ok(basis.len())
}

/// Deterministic RNG for a seed. All samplers in this crate draw from ChaCha8.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for `(root, path)`: each path element is folded in with the
/// SplitMix64 finalizer, so `(seed, model, run)` always maps to the same
/// stream no matter which thread evaluates it.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().enumerate().fold(mix(root), |acc, (i, &p)| {
        let salted = p.wrapping_add((i as u64 + 1).wrapping_mul(0xd6e8_feb8_6659_fd93));
        mix(acc.rotate_left(23) ^ mix(salted))
    })
}

fn gaussian_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Random traceless skew-Hermitian matrix with Frobenius norm `target_norm`.
pub fn random_su(n: usize, seed: u64, target_norm: f64) -> Result<SuGenerator> {
    random_su_with(n, &mut seeded_rng(seed), target_norm)
}

pub fn random_su_with<R: Rng + ?Sized>(n: usize, rng: &mut R, target_norm: f64) -> Result<SuGenerator> {
    if n < 2 {
        return Err(invalid(format!("random_su needs n >= 2, got {n}")));
    }
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(invalid("random_su target norm must be positive and finite"));
    }
    loop {
        let g = gaussian_matrix(n, rng);
        let mut a = g.skew_part();
        let tr = a.trace() / n as f64;
        for i in 0..n {
            a[(i, i)] -= tr;
        }
        let norm = a.frobenius_norm();
        if norm > 1e-300 {
            return Ok(SuGenerator::from_matrix_unchecked(a.scale(target_norm / norm)));
        }
    }
}

/// Haar-random element of SU(n).
pub fn random_unitary_goal(n: usize, seed: u64) -> Result<Unitary> {
    random_unitary_goal_with(n, &mut seeded_rng(seed))
}

pub fn random_unitary_goal_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Unitary> {
    if n < 2 {
        return Err(invalid(format!("random_unitary_goal needs n >= 2, got {n}")));
    }
    let g = gaussian_matrix(n, rng).to_nalgebra();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = ComplexMatrix::from_nalgebra(&q);
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    let det = q.determinant();
    let correction = C64::from_polar(1.0, -det.arg() / n as f64);
    Ok(Unitary::from_matrix_unchecked(q.scale_complex(correction)))
}

/// Pauli matrices, mostly for tests and the model zoo.
pub mod pauli {
    use super::{ComplexMatrix, C64};

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[
            vec![C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
            vec![C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
        ])
        .unwrap()
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap()
    }

    pub fn identity() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        let (na, nb) = (a.dim(), b.dim());
        ComplexMatrix::from_fn(na * nb, |r, c| a[(r / nb, c / nb)] * b[(r % nb, c % nb)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn i_sigma(m: ComplexMatrix) -> SuGenerator {
        SuGenerator::new(m.scale_complex(I)).unwrap()
    }

    /// Plain scaling-and-squaring Taylor series, summed to 60 terms.
    fn taylor_oracle(a: &ComplexMatrix) -> ComplexMatrix {
        let n = a.dim();
        let norm = a.frobenius_norm();
        let k = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
        let x = a.scale(0.5f64.powi(k));
        let mut sum = ComplexMatrix::identity(n);
        let mut term = ComplexMatrix::identity(n);
        for j in 1..=60 {
            term = term.matmul(&x).scale(1.0 / j as f64);
            sum = &sum + &term;
        }
        for _ in 0..k {
            sum = sum.matmul(&sum);
        }
        sum
    }

    #[test]
    fn expm_zero_scale_is_identity() {
        let a = random_su(3, 11, 2.0).unwrap();
        let u = expm_skew(&a, 0.0).unwrap();
        assert!(u.matrix().frobenius_distance(&ComplexMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn expm_pauli_quarter_turn() {
        let a = i_sigma(pauli::x());
        let u = expm_skew(&a, PI / 2.0).unwrap();
        assert!(u.matrix().frobenius_distance(a.matrix()) < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        let a = random_su(4, 5, 1.3).unwrap();
        let u = expm_skew(&a, 0.37).unwrap();
        let oracle = taylor_oracle(&a.matrix().scale(0.37));
        assert!(u.matrix().frobenius_distance(&oracle) <= 1e-10);
        assert!(u.unitarity_defect() <= 1e-12);
        assert!((u.determinant() - ONE).norm() <= 1e-10);
    }

    #[test]
    fn expm_rejects_non_finite_scale() {
        let a = random_su(2, 1, 1.0).unwrap();
        assert!(expm_skew(&a, f64::NAN).is_err());
        assert!(expm_skew(&a, f64::INFINITY).is_err());
    }

    #[test]
    fn fast_kernel_agrees_with_eigen_route() {
        let mut scratch = ExpmScratch::new(4);
        let mut out = ComplexMatrix::zeros(4);
        for (seed, s) in [(1, 0.01), (2, 0.3), (3, 4.0), (4, 37.0)] {
            let a = random_su(4, seed, 1.0).unwrap();
            expm_into(&a.matrix().scale(s), &mut out, &mut scratch);
            let reference = expm_skew(&a, s).unwrap();
            assert!(out.frobenius_distance(reference.matrix()) < 1e-12, "scale {s}");
        }
    }

    #[test]
    fn trace_inner_pauli_cases() {
        let x = i_sigma(pauli::x());
        let y = i_sigma(pauli::y());
        assert!((trace_inner(&x, &x).unwrap() - 2.0).abs() < 1e-15);
        assert!(trace_inner(&x, &y).unwrap().abs() < 1e-15);
    }

    #[test]
    fn trace_inner_matches_double_loop() {
        let a = random_su(4, 21, 1.0).unwrap();
        let b = random_su(4, 22, 1.0).unwrap();
        let mut acc = 0.0;
        for k in 0..4 {
            for r in 0..4 {
                acc += (a.matrix()[(r, k)].conj() * b.matrix()[(r, k)]).re;
            }
        }
        assert!((trace_inner(&a, &b).unwrap() - acc).abs() <= 1e-13);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = random_su(2, 1, 1.0).unwrap();
        let b = random_su(3, 1, 1.0).unwrap();
        assert!(trace_inner(&a, &b).is_err());
        assert!(commutator(&a, &b).is_err());
        assert!(lie_closure_rank(&[a, b]).is_err());
    }

    #[test]
    fn pauli_commutator() {
        let x = i_sigma(pauli::x());
        let y = i_sigma(pauli::y());
        let c = commutator(&x, &y).unwrap();
        let expected = pauli::z().scale_complex(C64::new(0.0, -2.0));
        assert!(c.matrix().frobenius_distance(&expected) < 1e-15);
        assert_eq!(commutator(&x, &x).unwrap().norm(), 0.0);
    }

    #[test]
    fn jacobi_identity() {
        let a = random_su(3, 31, 1.0).unwrap();
        let b = random_su(3, 32, 1.0).unwrap();
        let c = random_su(3, 33, 1.0).unwrap();
        let t1 = commutator(&a, &commutator(&b, &c).unwrap()).unwrap();
        let t2 = commutator(&b, &commutator(&c, &a).unwrap()).unwrap();
        let t3 = commutator(&c, &commutator(&a, &b).unwrap()).unwrap();
        let sum = &(t1.matrix() + t2.matrix()) + t3.matrix();
        assert!(sum.frobenius_norm() <= 1e-12);
        let comm = commutator(&a, &b).unwrap();
        assert!(SuGenerator::new(comm.into_matrix()).is_ok());
    }

    #[test]
    fn closure_of_two_paulis_is_su2() {
        let x = i_sigma(pauli::x());
        let y = i_sigma(pauli::y());
        assert_eq!(lie_closure_rank(&[x, y]).unwrap(), 3);
    }

    #[test]
    fn closure_rejects_empty() {
        assert!(lie_closure_rank(&[]).is_err());
    }

    #[test]
    fn random_pair_generates_su4() {
        let a = random_su(4, 100, 1.0).unwrap();
        let b = random_su(4, 101, 1.0).unwrap();
        assert_eq!(lie_closure_rank(&[a, b]).unwrap(), 15);
    }

    #[test]
    fn random_su_contract() {
        let a = random_su(4, 1, 1.0).unwrap();
        let b = random_su(4, 1, 1.0).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() <= 1e-12);
        assert!(a.matrix().hermitian_defect() <= 1e-12);
        assert!(a.matrix().trace().norm() <= 1e-12);
        assert!(random_su(1, 1, 1.0).is_err());
        let c = random_su(4, 2, 1.0).unwrap();
        assert!(a.matrix().frobenius_distance(c.matrix()) > 1e-6);
    }

    #[test]
    fn random_goal_contract() {
        let w = random_unitary_goal(4, 9).unwrap();
        assert_eq!(w, random_unitary_goal(4, 9).unwrap());
        assert!((w.determinant() - ONE).norm() <= 1e-10);
        assert!(w.unitarity_defect() <= 1e-10);
        for c in 0..4 {
            let norm: f64 = (0..4).map(|r| w.matrix()[(r, c)].norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-10);
        }
        assert!(random_unitary_goal(1, 0).is_err());
    }

    #[test]
    fn generator_validation() {
        assert!(SuGenerator::new(pauli::x()).is_err());
        assert!(SuGenerator::new(ComplexMatrix::identity(2).scale_complex(I)).is_err());
        assert!(SuGenerator::new_unitary_algebra(ComplexMatrix::identity(2).scale_complex(I)).is_ok());
        assert!(Unitary::new(ComplexMatrix::identity(2).scale(2.0)).is_err());
    }

    #[test]
    fn polar_projection_restores_unitarity() {
        let u = random_unitary_goal(3, 4).unwrap();
        let mut noisy = u.matrix().clone();
        noisy[(0, 1)] += C64::new(1e-6, -2e-6);
        let p = Unitary::polar_projection(&noisy);
        assert!(p.unitarity_defect() < 1e-13);
        assert!(p.matrix().frobenius_distance(u.matrix()) < 1e-5);
    }
}
