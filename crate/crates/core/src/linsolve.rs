//! Fixed-point solves `x = P x + b` for substochastic `P`, i.e. the interior
//! block of a harmonic boundary-value problem `(I − P_ii) x = P_ib θ_b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Repeated in-place application of the propagation equation.
    #[default]
    Iteration,
    /// Stabilised biconjugate gradients on `I − P`.
    Bicgstab,
}

/// Floor on the default iteration budget; `10·n` alone is too tight for
/// small systems with `ψ ≡ 1`, where the contraction rate is close to 1.
pub const MIN_DEFAULT_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Bound on `‖(I − P)x − b‖_∞`.
    pub tol: f64,
    /// Defaults to `max(10·n, MIN_DEFAULT_ITER)` for `n` unknowns.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { method: SolverMethod::Iteration, tol: 1e-10, max_iter: None }
    }
}

impl SolverOptions {
    pub fn bicgstab() -> Self {
        SolverOptions { method: SolverMethod::Bicgstab, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn residual_inf(p: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let (cols, vals) = p.row(i);
        let px: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        worst = worst.max((b[i] + px - x[i]).abs());
    }
    worst
}

pub fn solve_fixed_point(p: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    if n == 0 {
        return Ok((Vec::new(), SolveStats { iterations: 0, residual: 0.0 }));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {} must be positive", opts.tol)));
    }
    let max_iter = opts.max_iter.unwrap_or((10 * n).max(MIN_DEFAULT_ITER)).max(1);
    match opts.method {
        SolverMethod::Iteration => iterate(p, b, opts.tol, max_iter),
        SolverMethod::Bicgstab => bicgstab(p, b, opts.tol, max_iter),
    }
}

fn iterate(p: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let diag: Vec<f64> = (0..n).map(|i| 1.0 - p.get(i, i)).collect();
    if let Some(i) = diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::InvalidParameter(format!("unknown {i} is fully self-referencing")));
    }
    let mut residual = f64::INFINITY;
    let mut previous = f64::INFINITY;
    for sweep in 1..=max_iter {
        for i in 0..n {
            let (cols, vals) = p.row(i);
            let mut acc = b[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    acc += v * x[j];
                }
            }
            x[i] = acc / diag[i];
        }
        residual = residual_inf(p, b, &x);
        // With contraction rate q the remaining error is about r/(1 − q),
        // which is much larger than r when q is near 1.
        let q = residual / previous;
        let settled = q < 1.0 && residual / (1.0 - q) <= tol;
        if residual <= tol && (settled || residual <= 1e-3 * tol) {
            return Ok((x, SolveStats { iterations: sweep, residual }));
        }
        previous = residual;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y = (I − P) x`
fn apply(p: &CsrMatrix, x: &[f64], y: &mut [f64]) {
    p.mul_vec_into(x, y);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = xi - *yi;
    }
}

fn bicgstab(p: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut v = vec![0.0; n];
    let mut pv = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega): (f64, f64, f64) = (1.0, 1.0, 1.0);
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut residual = inf(&r);
    let mut iterations = 0;
    while iterations < max_iter {
        if residual <= tol {
            let true_residual = residual_inf(p, b, &x);
            if true_residual <= tol {
                return Ok((x, SolveStats { iterations, residual: true_residual }));
            }
            // Recurrence drifted; restart from the true residual.
            apply(p, &x, &mut t);
            for i in 0..n {
                r[i] = b[i] - t[i];
            }
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            pv.iter_mut().for_each(|e| *e = 0.0);
        }
        iterations += 1;

        let rho_next = dot(&r_hat, &r);
        if rho_next.abs() < 1e-300 || omega.abs() < 1e-300 {
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            pv.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            pv[i] = r[i] + beta * (pv[i] - omega * v[i]);
        }
        apply(p, &pv, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 {
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if inf(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * pv[i];
            }
            r.copy_from_slice(&s);
            residual = inf(&r);
            continue;
        }
        apply(p, &s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * pv[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        residual = inf(&r);
    }
    let true_residual = residual_inf(p, b, &x);
    if true_residual <= tol {
        return Ok((x, SolveStats { iterations, residual: true_residual }));
    }
    Err(Error::NoConvergence { iterations, residual: true_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Interior of the path 0-1-2 with the cue at 2 and ψ = (1, 1/2):
    // x0 = x1, x1 = (x0 + 1)/4.
    fn path_system() -> (CsrMatrix, Vec<f64>) {
        let p = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 0.25)]);
        (p, vec![0.0, 0.25])
    }

    #[test]
    fn both_methods_solve_path_system() {
        let (p, b) = path_system();
        for opts in [SolverOptions::default(), SolverOptions::bicgstab()] {
            let (x, stats) = solve_fixed_point(&p, &b, &opts).unwrap();
            assert!((x[0] - 1.0 / 3.0).abs() < 1e-10, "{opts:?}: {x:?}");
            assert!((x[1] - 1.0 / 3.0).abs() < 1e-10);
            assert!(stats.residual <= 1e-10);
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let (p, b) = path_system();
        let opts = SolverOptions { max_iter: Some(2), tol: 1e-14, ..SolverOptions::default() };
        match solve_fixed_point(&p, &b, &opts) {
            Err(Error::NoConvergence { iterations: 2, residual }) => assert!(residual > 1e-14),
            other => panic!("unexpected {other:?}"),
        }
    }
}
