//! The sub-Laplacian `div_nu(grad^tau u)`, its mean-zero Poisson problem and
//! the horizontal Hodge decomposition.
//!
//! The discrete operator is assembled from the grid gradient and its exact
//! negative adjoint, so it is self-adjoint and negative semidefinite in the
//! `nu`-weighted pairing to round-off. Its kernel contains the constants and,
//! on axes with an even node count, the alternating modes that central
//! stencils cannot see; the conjugate-gradient solve deflates all of them and
//! reports how much of the source lay in the non-constant part.

use crate::cg::{self, CgProblem, Deflation};
use crate::distribution::{horizontal_gradient, Frame};
use crate::error::{Error, Result};
use crate::grid::{integrate, weighted_dot, Density, Grid, ScalarField, VectorField};
use crate::ops::{self, axis_derivative};

/// Which pointwise tensor turns `grad u` into the horizontal gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientForm {
    /// `sum_i (X_i . grad u) X_i`
    #[default]
    FrameSum,
    /// `P^tau grad u`
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    #[default]
    None,
    Jacobi,
}

/// Largest admissible `|integrate(rho, nu)|` for a Poisson source.
pub const MEAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    /// Defaults to `50 * sqrt(nodes)`.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
    pub form: GradientForm,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: None,
            preconditioner: Preconditioner::None,
            form: GradientForm::FrameSum,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn iteration_cap(&self, grid: &Grid) -> usize {
        self.max_iterations
            .unwrap_or_else(|| (50.0 * (grid.len() as f64).sqrt()).ceil() as usize)
    }
}

/// Matrix-free `Delta^tau_nu` with reusable scratch space.
pub struct SubLaplacian<'a> {
    frame: &'a Frame,
    weight: Option<&'a [f64]>,
    form: GradientForm,
    grad: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl<'a> SubLaplacian<'a> {
    pub fn new(frame: &'a Frame, nu: &'a Density, form: GradientForm) -> Result<Self> {
        frame.grid().check_same(nu.grid())?;
        let weight = if nu.is_uniform() { None } else { Some(nu.ratio()) };
        Ok(Self::with_weight(frame, weight, form))
    }

    pub(crate) fn with_weight(frame: &'a Frame, weight: Option<&'a [f64]>, form: GradientForm) -> Self {
        let grid = frame.grid();
        Self {
            frame,
            weight,
            form,
            grad: vec![vec![0.0; grid.len()]; grid.ndim()],
            tmp: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.frame.grid()
    }

    pub(crate) fn weight(&self) -> Option<&'a [f64]> {
        self.weight
    }

    /// `out = Delta^tau_nu u`.
    pub fn apply(&mut self, u: &[f64], out: &mut [f64]) {
        let grid = *self.frame.grid();
        let n = grid.ndim();
        for a in 0..n {
            axis_derivative(&grid, a, u, &mut self.grad[a]);
        }
        let tensor = match self.form {
            GradientForm::FrameSum => self.frame.frame_metric(),
            GradientForm::Projection => self.frame.projector(),
        };
        const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        for (node, m) in tensor.iter().enumerate() {
            let mut g = [0.0; 3];
            for (a, ga) in g.iter_mut().enumerate().take(n) {
                *ga = self.grad[a][node];
            }
            let scale = self.weight.map_or(1.0, |w| w[node]);
            for a in 0..n {
                let mut v = 0.0;
                for b in 0..n {
                    v += m[IDX[a][b]] * g[b];
                }
                self.grad[a][node] = scale * v;
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..n {
            axis_derivative(&grid, a, &self.grad[a], &mut self.tmp);
            for (o, t) in out.iter_mut().zip(&self.tmp) {
                *o += t;
            }
        }
        if let Some(w) = self.weight {
            for (o, r) in out.iter_mut().zip(w) {
                *o /= r;
            }
        }
    }

    /// Diagonal of `-Delta^tau_nu`, assembled from the stencil weights.
    pub fn negative_diagonal(&self) -> Vec<f64> {
        let grid = *self.frame.grid();
        let dims = grid.padded_dims();
        let coeffs = grid.stencil().coefficients();
        let tensor = match self.form {
            GradientForm::FrameSum => self.frame.frame_metric(),
            GradientForm::Projection => self.frame.projector(),
        };
        const DIAG: [usize; 3] = [0, 3, 5];
        let mut d = vec![0.0; grid.len()];
        for (j, dj) in d.iter_mut().enumerate() {
            let mj = grid.multi_index(j);
            let mut acc = 0.0;
            for a in 0..grid.ndim() {
                let h = grid.spacing(a);
                for (s, c) in coeffs.iter().enumerate() {
                    for sign in [-1i64, 1] {
                        let mut m = mj;
                        m[a] = ((mj[a] as i64 + sign * (s as i64 + 1)).rem_euclid(dims[a] as i64)) as usize;
                        let k = grid.index(m);
                        let w = self.weight.map_or(1.0, |w| w[k]);
                        acc += (c / h).powi(2) * w * tensor[k][DIAG[a]];
                    }
                }
            }
            *dj = acc / self.weight.map_or(1.0, |w| w[j]);
        }
        d
    }
}

/// Constants plus alternating modes on every even axis.
pub fn gradient_kernel_modes(grid: &Grid) -> Vec<Vec<f64>> {
    let even: Vec<usize> = (0..grid.ndim()).filter(|&a| grid.dims()[a] % 2 == 0).collect();
    (0..1usize << even.len())
        .map(|mask| {
            (0..grid.len())
                .map(|i| {
                    let m = grid.multi_index(i);
                    let parity: usize = even
                        .iter()
                        .enumerate()
                        .filter(|(bit, _)| mask >> bit & 1 == 1)
                        .map(|(_, &a)| m[a])
                        .sum();
                    if parity % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn sub_laplacian(u: &ScalarField, frame: &Frame, nu: &Density) -> Result<ScalarField> {
    sub_laplacian_with(u, frame, nu, GradientForm::FrameSum)
}

pub fn sub_laplacian_with(u: &ScalarField, frame: &Frame, nu: &Density, form: GradientForm) -> Result<ScalarField> {
    u.grid().check_same(frame.grid())?;
    let mut op = SubLaplacian::new(frame, nu, form)?;
    let mut out = vec![0.0; u.grid().len()];
    op.apply(u.values(), &mut out);
    ScalarField::new(*u.grid(), out)
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Potential with `integrate(u, nu) = 0`.
    pub u: ScalarField,
    /// Relative residual of the deflated system.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Relative size of the source component along non-constant kernel modes.
    pub parity_defect: f64,
    pub residual_history: Vec<f64>,
}

/// Solves `Delta^tau_nu u = rho` for mean-zero `rho`.
pub fn solve_poisson(rho: &ScalarField, frame: &Frame, nu: &Density, tol: f64) -> Result<PoissonSolution> {
    solve_poisson_with(rho, frame, nu, &SolverOptions::with_tol(tol), None)
}

pub fn solve_poisson_with(
    rho: &ScalarField,
    frame: &Frame,
    nu: &Density,
    options: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<PoissonSolution> {
    rho.grid().check_same(frame.grid())?;
    let mut op = SubLaplacian::new(frame, nu, options.form)?;
    solve_with_operator(&mut op, rho, options, initial)
}

pub(crate) fn solve_with_operator(
    op: &mut SubLaplacian<'_>,
    rho: &ScalarField,
    options: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<PoissonSolution> {
    let grid = *op.grid();
    rho.grid().check_same(&grid)?;
    if !(options.tol > 0.0 && options.tol <= 1e-4) {
        return Err(Error::InvalidArgument(format!(
            "solver tolerance must lie in (0, 1e-4], got {}",
            options.tol
        )));
    }
    let weight = op.weight();
    let mean = weighted_dot(rho.values(), &vec![1.0; grid.len()], weight)
        * grid.cell_volume()
        * weight.map_or(1.0 / grid.volume(), |_| 1.0);
    if mean.abs() > MEAN_TOLERANCE {
        return Err(Error::Solvability(format!(
            "source has mean {mean:e}; the sub-Laplacian only reaches mean-zero functions"
        )));
    }
    let deflation = Deflation::new(gradient_kernel_modes(&grid), weight);
    let mut b: Vec<f64> = rho.values().iter().map(|v| -v).collect();
    let rho_norm = weighted_dot(&b, &b, weight).sqrt();
    let removed = deflation.project_out(&mut b, weight);
    let parity_defect = if rho_norm > 0.0 {
        removed[1..].iter().map(|c| c * c).sum::<f64>().sqrt() / rho_norm
    } else {
        0.0
    };
    let mut x = match initial {
        Some(x0) => {
            if x0.len() != grid.len() {
                return Err(Error::Shape("initial guess length".into()));
            }
            x0.to_vec()
        }
        None => vec![0.0; grid.len()],
    };
    let diag = match options.preconditioner {
        Preconditioner::Jacobi => Some(op.negative_diagonal().iter().map(|d| 1.0 / d).collect::<Vec<_>>()),
        Preconditioner::None => None,
    };
    let problem = CgProblem {
        weight,
        deflation: Some(&deflation),
        inverse_diagonal: diag.as_deref(),
        tol: options.tol,
        max_iterations: options.iteration_cap(&grid),
    };
    let mut tmp = vec![0.0; grid.len()];
    let outcome = cg::solve(
        &problem,
        |v, out| {
            op.apply(v, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o = -t;
            }
        },
        &b,
        &mut x,
    )?;
    Ok(PoissonSolution {
        u: ScalarField::new(grid, x)?,
        residual_norm: outcome.residual,
        iterations: outcome.iterations,
        parity_defect,
        residual_history: outcome.history,
    })
}

#[derive(Debug, Clone)]
pub struct HodgeDecomposition {
    /// Mean-zero potential `f`.
    pub potential: ScalarField,
    /// Horizontal gradient part `grad^tau f`.
    pub gradient: VectorField,
    /// Divergence-free remainder `U = W - grad^tau f`.
    pub remainder: VectorField,
    pub solve: PoissonSolution,
}

/// `W = grad^tau f + U` with `div_nu U = 0`.
pub fn hodge_decompose(w: &VectorField, frame: &Frame, nu: &Density, tol: f64) -> Result<HodgeDecomposition> {
    w.grid().check_same(frame.grid())?;
    let div = ops::divergence(w, nu)?;
    debug_assert!(integrate(&div, nu)?.abs() < 1e-9);
    let solve = solve_poisson(&div, frame, nu, tol)?;
    let gradient = horizontal_gradient(&solve.u, frame)?;
    let remainder = w.combine(1.0, &gradient, -1.0)?;
    Ok(HodgeDecomposition {
        potential: solve.u.clone(),
        gradient,
        remainder,
        solve,
    })
}
