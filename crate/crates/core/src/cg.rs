//! Matrix-free conjugate gradients in a weighted inner product, with
//! deflation of a known null space.

use crate::error::{Error, Result};
use crate::grid::weighted_dot;

/// Orthonormal basis (in the weighted pairing) of a subspace removed from
/// every iterate.
#[derive(Debug, Clone, Default)]
pub struct Deflation {
    basis: Vec<Vec<f64>>,
}

impl Deflation {
    /// Gram-Schmidt of `vectors` in the pairing `sum a b w`.
    pub fn new(vectors: Vec<Vec<f64>>, weight: Option<&[f64]>) -> Self {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut v in vectors {
            for _ in 0..2 {
                for e in &basis {
                    let c = weighted_dot(&v, e, weight);
                    for (vi, ei) in v.iter_mut().zip(e) {
                        *vi -= c * ei;
                    }
                }
            }
            let norm = weighted_dot(&v, &v, weight).sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        Self { basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Removes the deflated components in place, returning their coefficients.
    pub fn project_out(&self, v: &mut [f64], weight: Option<&[f64]>) -> Vec<f64> {
        self.basis
            .iter()
            .map(|e| {
                let c = weighted_dot(v, e, weight);
                for (vi, ei) in v.iter_mut().zip(e) {
                    *vi -= c * ei;
                }
                c
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub iterations: usize,
    /// True relative residual `|b - A x| / |b|` at exit.
    pub residual: f64,
    pub history: Vec<f64>,
}

pub struct CgProblem<'a> {
    pub weight: Option<&'a [f64]>,
    pub deflation: Option<&'a Deflation>,
    /// Inverse diagonal, applied as a preconditioner.
    pub inverse_diagonal: Option<&'a [f64]>,
    pub tol: f64,
    pub max_iterations: usize,
}

/// Solves `A x = b` for an operator self-adjoint and positive definite on
/// the deflated complement. `x` holds the initial guess on entry.
pub fn solve(
    problem: &CgProblem<'_>,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
) -> Result<CgOutcome> {
    let n = b.len();
    let w = problem.weight;
    let project = |v: &mut [f64]| {
        if let Some(d) = problem.deflation {
            d.project_out(v, w);
        }
    };
    let bnorm = weighted_dot(b, b, w).sqrt();
    let mut history = Vec::new();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
            history,
        });
    }
    project(x);
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut iterations = 0;
    // Restarted on stagnation of the recursive residual.
    loop {
        apply(x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        project(&mut r);
        let true_res = weighted_dot(&r, &r, w).sqrt() / bnorm;
        history.push(true_res);
        if true_res <= problem.tol {
            return Ok(CgOutcome {
                iterations,
                residual: true_res,
                history,
            });
        }
        if iterations >= problem.max_iterations {
            return Err(Error::Convergence {
                iterations,
                residual: true_res,
            });
        }
        precondition(problem, &r, &mut z);
        project(&mut z);
        let mut p = z.clone();
        let mut rz = weighted_dot(&r, &z, w);
        while iterations < problem.max_iterations {
            apply(&p, &mut ap);
            // A p is orthogonal to the kernel already (self-adjointness); only the
            // preconditioned residual needs deflating.
            let pap = weighted_dot(&p, &ap, w);
            if !(pap > 0.0) {
                return Err(Error::Convergence {
                    iterations,
                    residual: weighted_dot(&r, &r, w).sqrt() / bnorm,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            let res = weighted_dot(&r, &r, w).sqrt() / bnorm;
            history.push(res);
            if res <= 0.5 * problem.tol {
                break;
            }
            precondition(problem, &r, &mut z);
            project(&mut z);
            let rz_new = weighted_dot(&r, &z, w);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        project(x);
    }
}

fn precondition(problem: &CgProblem<'_>, r: &[f64], z: &mut [f64]) {
    match problem.inverse_diagonal {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = d[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_tridiagonal_with_nullspace() {
        // Periodic 1D Laplacian, kernel = constants.
        let n = 64;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = 2.0 * x[i] - x[(i + 1) % n] - x[(i + n - 1) % n];
            }
        };
        let b: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let defl = Deflation::new(vec![vec![1.0; n]], None);
        let problem = CgProblem {
            weight: None,
            deflation: Some(&defl),
            inverse_diagonal: None,
            tol: 1e-12,
            max_iterations: 500,
        };
        let mut x = vec![0.0; n];
        let out = solve(&problem, apply, &b, &mut x).unwrap();
        assert!(out.residual <= 1e-12);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        assert!(x.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn reports_iteration_cap() {
        let n = 32;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = (i + 1) as f64 * x[i];
            }
        };
        let b = vec![1.0; n];
        let problem = CgProblem {
            weight: None,
            deflation: None,
            inverse_diagonal: None,
            tol: 1e-14,
            max_iterations: 3,
        };
        let mut x = vec![0.0; n];
        assert!(matches!(
            solve(&problem, apply, &b, &mut x),
            Err(Error::Convergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn jacobi_preconditioned_diagonal_system_converges_in_one_step() {
        let n = 16;
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = diag[i] * x[i];
            }
        };
        let b = vec![1.0; n];
        let problem = CgProblem {
            weight: None,
            deflation: None,
            inverse_diagonal: Some(&inv),
            tol: 1e-12,
            max_iterations: 10,
        };
        let mut x = vec![0.0; n];
        let out = solve(&problem, apply, &b, &mut x).unwrap();
        assert_eq!(out.iterations, 1);
    }
}
