// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! Fixed-size kernels for the propagation hot loops (n = 2, 3, 4).

use crate::matrix::{ComplexMatrix, C64};

pub(crate) type Mat<const N: usize> = [[C64; N]; N];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[inline(always)]
pub(crate) fn identity<const N: usize>() -> Mat<N> {
    let mut m = [[ZERO; N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = ONE;
    }
    m
}

#[inline(always)]
pub(crate) fn mul<const N: usize>(a: &Mat<N>, b: &Mat<N>) -> Mat<N> {
    let mut out = [[ZERO; N]; N];
    for r in 0..N {
        for k in 0..N {
            let x = a[r][k];
            for c in 0..N {
                out[r][c] += x * b[k][c];
            }
        }
    }
    out
}

pub(crate) fn from_matrix<const N: usize>(m: &ComplexMatrix) -> Mat<N> {
    debug_assert_eq!(m.dim(), N);
    let mut out = [[ZERO; N]; N];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, z) in row.iter_mut().enumerate() {
            *z = m[(r, c)];
        }
    }
    out
}

pub(crate) fn to_matrix<const N: usize>(m: &Mat<N>) -> ComplexMatrix {
    ComplexMatrix::from_fn(N, |r, c| m[r][c])
}

fn inf_norm<const N: usize>(m: &Mat<N>) -> f64 {
    m.iter()
        .map(|row| row.iter().map(|z| z.re.abs() + z.im.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest Taylor degree whose truncation bound at norm `theta` is below 2⁻⁵³.
fn taylor_degree(theta: f64) -> usize {
    let mut term = theta;
    for m in 1..=18 {
        term *= theta / (m + 1) as f64;
        if term <= 1.1e-16 {
            return m;
        }
    }
    18
}

/// `exp(a)` by Taylor summation with scaling and squaring.
///
/// The (absolute-value) ∞-norm is brought below 1/2, the degree is chosen
/// from the truncation bound, and the polynomial is evaluated in
/// Paterson–Stockmeyer form.
pub(crate) fn expm<const N: usize>(a: &Mat<N>) -> Mat<N> {
    let norm = inf_norm(a);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let s = 0.5f64.powi(squarings);
    let mut x = *a;
    for row in x.iter_mut() {
        for z in row.iter_mut() {
            *z *= s;
        }
    }
    let degree = taylor_degree(norm * s);
    let mut acc = taylor_paterson_stockmeyer(&x, degree);
    for _ in 0..squarings {
        acc = mul(&acc, &acc);
    }
    acc
}

const MAX_BLOCK: usize = 5;

fn taylor_paterson_stockmeyer<const N: usize>(x: &Mat<N>, degree: usize) -> Mat<N> {
    // block size q ≈ √degree; powers[i] = X^i for i ≤ q
    let q = ((degree as f64).sqrt().ceil() as usize).clamp(1, MAX_BLOCK);
    let mut powers = [[[ZERO; N]; N]; MAX_BLOCK + 1];
    powers[0] = identity::<N>();
    powers[1] = *x;
    for i in 2..=q {
        powers[i] = mul(&powers[i - 1], x);
    }
    let mut coeff = [0.0f64; 24];
    coeff[0] = 1.0;
    for k in 1..=degree {
        coeff[k] = coeff[k - 1] / k as f64;
    }
    // block j holds coefficients j·q .. j·q + q − 1 on X^0 .. X^(q−1)
    let block = |j: usize| -> Mat<N> {
        let mut out = [[ZERO; N]; N];
        for i in 0..q {
            let k = j * q + i;
            if k > degree {
                break;
            }
            let c = coeff[k];
            for r in 0..N {
                for cc in 0..N {
                    out[r][cc] += powers[i][r][cc] * c;
                }
            }
        }
        out
    };
    let blocks = degree / q;
    let mut acc = block(blocks);
    for j in (0..blocks).rev() {
        let mut next = mul(&acc, &powers[q]);
        let b = block(j);
        for r in 0..N {
            for c in 0..N {
                next[r][c] += b[r][c];
            }
        }
        acc = next;
    }
    acc
}

/// `s·(h0 + e·h1 + e²·h2)`.
#[inline(always)]
pub(crate) fn generator<const N: usize>(
    h0: &Mat<N>,
    h1: &Mat<N>,
    h2: Option<&Mat<N>>,
    e: f64,
    s: f64,
) -> Mat<N> {
    let mut out = [[ZERO; N]; N];
    let c1 = s * e;
    match h2 {
        Some(h2) => {
            let c2 = s * e * e;
            for r in 0..N {
                for c in 0..N {
                    out[r][c] = h0[r][c] * s + h1[r][c] * c1 + h2[r][c] * c2;
                }
            }
        }
        None => {
            for r in 0..N {
                for c in 0..N {
                    out[r][c] = h0[r][c] * s + h1[r][c] * c1;
                }
            }
        }
    }
    out
}

/// Time-ordered product of segment exponentials.
pub(crate) fn endpoint<const N: usize>(
    h0: &ComplexMatrix,
    h1: &ComplexMatrix,
    h2: Option<&ComplexMatrix>,
    amplitudes: &[f64],
    dt: f64,
) -> ComplexMatrix {
    let h0 = from_matrix::<N>(h0);
    let h1 = from_matrix::<N>(h1);
    let h2 = h2.map(from_matrix::<N>);
    let mut acc = identity::<N>();
    for &e in amplitudes {
        let step = expm(&generator(&h0, &h1, h2.as_ref(), e, dt));
        acc = mul(&step, &acc);
    }
    to_matrix(&acc)
}
