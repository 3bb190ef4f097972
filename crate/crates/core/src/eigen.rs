//! Extreme eigenpairs of symmetric operators.
//!
//! Below [`DENSE_CUTOFF`] the operator is densified and fully decomposed;
//! above it a Lanczos iteration with full reorthogonalisation runs on the
//! operator form. Either path can work on the orthogonal complement of a
//! given unit vector (used to deflate the constant vector of a Laplacian).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::sparse::CsrMatrix;

pub const DENSE_CUTOFF: usize = 256;
pub const RESIDUAL_TOL: f64 = 1e-8;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Largest,
    Smallest,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit-norm eigenvector.
    pub vector: Vec<f64>,
    /// `‖Mx − μx‖₂` for the unit vector `x`.
    pub residual: f64,
}

/// The `index`-th eigenpair counted from the requested end of the spectrum
/// (`index = 0` is the extreme one). With `deflate = Some(u)` the search is
/// restricted to `u^⊥`; `u` must have unit norm.
pub fn symmetric_extreme<O: SymmetricOperator + ?Sized>(
    op: &O,
    which: Which,
    index: usize,
    deflate: Option<&[f64]>,
) -> Result<EigenPair> {
    let n = op.dim();
    let available = n - usize::from(deflate.is_some());
    if index >= available {
        return Err(Error::InvalidParameter(format!(
            "eigenpair {index} requested from a space of dimension {available}"
        )));
    }
    let pair = if n < DENSE_CUTOFF { dense(op, which, index, deflate) } else { lanczos(op, which, index, deflate)? };
    if !(pair.residual <= RESIDUAL_TOL) {
        return Err(Error::EigenFailure { residual: pair.residual });
    }
    Ok(pair)
}

fn residual<O: SymmetricOperator + ?Sized>(op: &O, x: &[f64], value: f64) -> f64 {
    let mut y = vec![0.0; x.len()];
    op.apply(x, &mut y);
    y.iter().zip(x).map(|(a, b)| (a - value * b).powi(2)).sum::<f64>().sqrt()
}

fn densify<O: SymmetricOperator + ?Sized>(op: &O) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    (&m + m.transpose()) * 0.5
}

/// Orthonormal basis of `u^⊥` as the trailing columns of a Householder reflector.
fn complement_basis(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut w = DVector::from_column_slice(u);
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign;
    let norm = w.norm();
    let mut h = DMatrix::identity(n, n);
    if norm > 0.0 {
        w /= norm;
        h -= 2.0 * &w * w.transpose();
    }
    h.columns(1, n - 1).into_owned()
}

fn pick(values: &[f64], which: Which, index: usize) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    match which {
        Which::Largest => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
        Which::Smallest => order.sort_by(|&a, &b| values[a].total_cmp(&values[b])),
    }
    order[index]
}

fn dense<O: SymmetricOperator + ?Sized>(op: &O, which: Which, index: usize, deflate: Option<&[f64]>) -> EigenPair {
    let m = densify(op);
    let (vector, value) = match deflate {
        None => {
            let eig = SymmetricEigen::new(m);
            let k = pick(eig.eigenvalues.as_slice(), which, index);
            (eig.eigenvectors.column(k).iter().copied().collect::<Vec<_>>(), eig.eigenvalues[k])
        }
        Some(u) => {
            let basis = complement_basis(u);
            let reduced = basis.transpose() * &m * &basis;
            let reduced = (&reduced + reduced.transpose()) * 0.5;
            let eig = SymmetricEigen::new(reduced);
            let k = pick(eig.eigenvalues.as_slice(), which, index);
            let x = &basis * eig.eigenvectors.column(k);
            (x.iter().copied().collect(), eig.eigenvalues[k])
        }
    };
    let residual = residual(op, &vector, value);
    EigenPair { value, vector, residual }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>], deflate: Option<&[f64]>) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        if let Some(u) = deflate {
            let c = dot(x, u);
            axpy(-c, u, x);
        }
        for q in basis {
            let c = dot(x, q);
            axpy(-c, q, x);
        }
    }
}

fn lanczos<O: SymmetricOperator + ?Sized>(
    op: &O,
    which: Which,
    index: usize,
    deflate: Option<&[f64]>,
) -> Result<EigenPair> {
    let n = op.dim();
    let limit = n - usize::from(deflate.is_some());
    let mut steps = (2 * index + 60).min(limit);
    let mut fresh = rng::stream(0x1a2c_205e, rng::domain::LABEL, n as u64, 0);
    let mut random_unit = |basis: &[Vec<f64>]| {
        let mut x: Vec<f64> = (0..n).map(|_| fresh.random::<f64>() - 0.5).collect();
        orthogonalize(&mut x, basis, deflate);
        normalize(&mut x);
        x
    };

    let mut best: Option<EigenPair> = None;
    loop {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut alpha = Vec::with_capacity(steps);
        let mut beta: Vec<f64> = Vec::with_capacity(steps);
        let mut q = random_unit(&basis);
        let mut w = vec![0.0; n];
        while basis.len() < steps {
            op.apply(&q, &mut w);
            let a = dot(&w, &q);
            basis.push(q.clone());
            alpha.push(a);
            orthogonalize(&mut w, &basis, deflate);
            let b = normalize(&mut w);
            if basis.len() == steps {
                break;
            }
            if b < 1e-10 * (1.0 + a.abs()) {
                // Invariant subspace: continue from a fresh direction.
                beta.push(0.0);
                q = random_unit(&basis);
            } else {
                beta.push(b);
                q = w.clone();
            }
        }

        let k = alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let j = pick(eig.eigenvalues.as_slice(), which, index.min(k - 1));
        let y = eig.eigenvectors.column(j);
        let mut x = vec![0.0; n];
        for (i, qi) in basis.iter().enumerate() {
            axpy(y[i], qi, &mut x);
        }
        normalize(&mut x);
        let value = eig.eigenvalues[j];
        let pair = EigenPair { value, residual: residual(op, &x, value), vector: x };
        let done = pair.residual <= RESIDUAL_TOL || steps == limit;
        if best.as_ref().is_none_or(|b| pair.residual < b.residual) {
            best = Some(pair);
        }
        if done {
            break;
        }
        steps = (2 * steps).min(limit);
    }
    Ok(best.expect("at least one Lanczos pass"))
}
