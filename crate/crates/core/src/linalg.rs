//! Small dense complex-matrix helpers (row-major `Vec<C64>` of length
//! `dim * dim`).
//!
//! Hermitian eigenproblems go through the real embedding
//! `X + iY -> [[X, -Y], [Y, X]]`, which is a *-isomorphism onto a real
//! symmetric matrix with doubled spectrum.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub fn matmul(a: &[C64], b: &[C64], dim: usize) -> Vec<C64> {
    let mut c = vec![C64::default(); dim * dim];
    for r in 0..dim {
        for k in 0..dim {
            let av = a[r * dim + k];
            if av == C64::default() {
                continue;
            }
            for col in 0..dim {
                c[r * dim + col] += av * b[k * dim + col];
            }
        }
    }
    c
}

pub fn adjoint(a: &[C64], dim: usize) -> Vec<C64> {
    let mut c = vec![C64::default(); dim * dim];
    for r in 0..dim {
        for col in 0..dim {
            c[col * dim + r] = a[r * dim + col].conj();
        }
    }
    c
}

pub fn trace(a: &[C64], dim: usize) -> C64 {
    (0..dim).map(|k| a[k * dim + k]).sum()
}

fn embed(a: &[C64], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * dim, 2 * dim);
    for r in 0..dim {
        for c in 0..dim {
            let v = a[r * dim + c];
            m[(r, c)] = v.re;
            m[(r, c + dim)] = -v.im;
            m[(r + dim, c)] = v.im;
            m[(r + dim, c + dim)] = v.re;
        }
    }
    m
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &[C64], dim: usize) -> Vec<f64> {
    let m = embed(a, dim);
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    // The embedding doubles every eigenvalue; average each pair.
    (0..dim).map(|i| 0.5 * (vals[2 * i] + vals[2 * i + 1])).collect()
}

/// Principal square root of a Hermitian PSD matrix (negative eigenvalues are
/// clamped to zero).
pub fn hermitian_sqrt(a: &[C64], dim: usize) -> Vec<C64> {
    let m = embed(a, dim);
    let eig = nalgebra::SymmetricEigen::new(m);
    let u = &eig.eigenvectors;
    let n2 = 2 * dim;
    let mut root = DMatrix::zeros(n2, n2);
    for j in 0..n2 {
        let lam = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n2 {
            root[(i, j)] = u[(i, j)] * lam;
        }
    }
    let s = &root * u.transpose();
    // The square root commutes with the complex structure, so it carries the
    // same block form; average the blocks against roundoff.
    let mut out = vec![C64::default(); dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let re = 0.5 * (s[(r, c)] + s[(r + dim, c + dim)]);
            let im = 0.5 * (s[(r + dim, c)] - s[(r, c + dim)]);
            out[r * dim + c] = C64::new(re, im);
        }
    }
    out
}

/// Matrix exponential by scaling-and-squaring with a Taylor core.
pub fn expm(a: &[C64], dim: usize) -> Vec<C64> {
    let norm1: f64 = (0..dim)
        .map(|c| (0..dim).map(|r| a[r * dim + c].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings as i32);
    let mut term: Vec<C64> = a.iter().map(|v| v * scale).collect();
    let mut result = vec![C64::default(); dim * dim];
    for k in 0..dim {
        result[k * dim + k] = C64::new(1.0, 0.0);
    }
    let scaled = term.clone();
    for i in 0..dim * dim {
        result[i] += term[i];
    }
    for order in 2..=24u32 {
        term = matmul(&term, &scaled, dim);
        let inv = 1.0 / order as f64;
        for v in term.iter_mut() {
            *v *= inv;
        }
        let mag: f64 = term.iter().map(|v| v.norm()).sum();
        for i in 0..dim * dim {
            result[i] += term[i];
        }
        if mag < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, dim);
    }
    result
}

/// Uhlmann fidelity `(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2` of two density
/// matrices.
pub fn uhlmann_fidelity(rho: &[C64], sigma: &[C64], dim: usize) -> f64 {
    let s = hermitian_sqrt(rho, dim);
    let inner = matmul(&matmul(&s, sigma, dim), &s, dim);
    let f: f64 = hermitian_eigenvalues(&inner, dim)
        .iter()
        .map(|&v| v.max(0.0).sqrt())
        .sum();
    f * f
}
