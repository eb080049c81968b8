//! The horizontal heat equation `d_t u = Delta^tau u`, relative entropy, the
//! horizontal Wasserstein metric on tangent densities, and a check that the
//! heat flow is the entropy gradient flow for that metric.
//!
//! Densities are handled through their ratio `u = nu / mu` to the normalized
//! reference volume `mu`.

use crate::cg::{self, CgProblem};
use crate::distribution::Frame;
use crate::error::{Error, Result};
use crate::grid::{fixed_sum, fixed_sum_by, Density, ScalarField};
use crate::ops;
use crate::solver::{solve_with_operator, GradientForm, SolverOptions, SubLaplacian};

/// Ratios `nu / mu` at or below this are treated as a loss of positivity.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Ratio of `nu` to the normalized reference volume.
fn relative_ratio(nu: &Density) -> Vec<f64> {
    let v = nu.grid().volume();
    nu.ratio().iter().map(|r| r * v).collect()
}

/// `Ent(nu) = integral of log(nu/mu) nu`.
pub fn entropy(nu: &Density) -> Result<f64> {
    let u = relative_ratio(nu);
    if let Some((node, &value)) = u.iter().enumerate().find(|(_, v)| **v <= POSITIVITY_FLOOR) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    let grid = nu.grid();
    Ok(fixed_sum_by(u.len(), |i| u[i] * u[i].ln()) / grid.len() as f64)
}

/// A signed measure `eta dx` of total mass zero, attached to a base density.
#[derive(Debug, Clone)]
pub struct TangentDensity {
    base: Density,
    eta: ScalarField,
}

impl TangentDensity {
    /// Accepts `eta` (per unit volume) whose total is zero to `1e-12`
    /// relative to its L1 norm.
    pub fn new(base: Density, eta: ScalarField) -> Result<Self> {
        base.grid().check_same(eta.grid())?;
        let total = fixed_sum(eta.values()) * eta.grid().cell_volume();
        if total.abs() > 1e-12 * eta.l1_norm().max(1.0) {
            return Err(Error::Solvability(format!(
                "tangent densities have zero total mass, got {total:e}"
            )));
        }
        Ok(Self { base, eta })
    }

    pub fn base(&self) -> &Density {
        &self.base
    }

    pub fn eta(&self) -> &ScalarField {
        &self.eta
    }
}

/// `g(v1, v2) = integral of g(grad^tau f1, grad^tau f2) nu` with
/// `-Delta^tau_nu f_i = eta_i / nu`.
pub fn wasserstein_metric(v1: &TangentDensity, v2: &TangentDensity, frame: &Frame, tol: f64) -> Result<f64> {
    if v1.base.ratio() != v2.base.ratio() {
        return Err(Error::GridMismatch);
    }
    let f1 = metric_potential(v1, frame, tol)?;
    let f2 = if v1.eta == v2.eta {
        f1.clone()
    } else {
        metric_potential(v2, frame, tol)?
    };
    Ok(pair_gradients(&f1, &f2, &v1.base, frame))
}

/// Potential `f` with `-Delta^tau_nu f = eta / nu`.
pub fn metric_potential(v: &TangentDensity, frame: &Frame, tol: f64) -> Result<ScalarField> {
    frame.grid().check_same(v.base.grid())?;
    let grid = *frame.grid();
    let r = v.base.ratio();
    // Remove the admissible round-off in the total before posing the problem.
    let mean = fixed_sum(v.eta.values()) / grid.len() as f64;
    let rho = (0..grid.len()).map(|i| -(v.eta.values()[i] - mean) / r[i]).collect();
    let rho = ScalarField::new(grid, rho)?;
    let mut op = SubLaplacian::with_weight(frame, Some(r), GradientForm::FrameSum);
    Ok(solve_with_operator(&mut op, &rho, &SolverOptions::with_tol(tol), None)?.u)
}

fn pair_gradients(f1: &ScalarField, f2: &ScalarField, nu: &Density, frame: &Frame) -> f64 {
    let grid = *frame.grid();
    let n = grid.ndim();
    let d1 = ops::grad(f1);
    let d2 = ops::grad(f2);
    let x = frame.samples();
    let r = nu.ratio();
    fixed_sum_by(grid.len(), |i| {
        let (a, b) = (d1.at(i), d2.at(i));
        let mut s = 0.0;
        for xi in &x[..frame.rank()] {
            let xi = xi.at(i);
            let pa: f64 = (0..n).map(|k| a[k] * xi[k]).sum();
            let pb: f64 = (0..n).map(|k| b[k] * xi[k]).sum();
            s += pa * pb;
        }
        s * r[i]
    }) * grid.cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatStepper {
    /// Implicit midpoint; unconditionally stable.
    #[default]
    CrankNicolson,
    /// Explicit RK4; stable only for `dt * |lambda_max| < 2.78`.
    Rk4,
}

#[derive(Debug, Clone, Copy)]
pub struct HeatOptions {
    pub stepper: HeatStepper,
    /// Keep every this many steps (the final state is always kept).
    pub snapshot_every: usize,
    /// Relative residual of each implicit solve.
    pub tol: f64,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self {
            stepper: HeatStepper::CrankNicolson,
            snapshot_every: 1,
            tol: 1e-13,
        }
    }
}

pub fn heat_evolve(nu0: &Density, t_max: f64, dt: f64, frame: &Frame) -> Result<Vec<(f64, Density)>> {
    heat_evolve_with(nu0, t_max, dt, frame, &HeatOptions::default())
}

pub fn heat_evolve_with(
    nu0: &Density,
    t_max: f64,
    dt: f64,
    frame: &Frame,
    options: &HeatOptions,
) -> Result<Vec<(f64, Density)>> {
    let grid = *frame.grid();
    grid.check_same(nu0.grid())?;
    if !(dt > 0.0 && dt.is_finite()) || !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad heat schedule t_max = {t_max}, dt = {dt}"
        )));
    }
    let n = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if n == 0 { 0.0 } else { t_max / n as f64 };
    let every = options.snapshot_every.max(1);
    let mu = Density::uniform(grid);
    let mut op = SubLaplacian::new(frame, &mu, GradientForm::FrameSum)?;
    let mut u = nu0.ratio().to_vec();
    let mut out = vec![(0.0, nu0.clone())];
    let len = grid.len();
    let mut lu = vec![0.0; len];
    let mut rhs = vec![0.0; len];
    for k in 1..=n {
        match options.stepper {
            HeatStepper::CrankNicolson => {
                op.apply(&u, &mut lu);
                for i in 0..len {
                    rhs[i] = u[i] + 0.5 * h * lu[i];
                }
                let problem = CgProblem {
                    weight: None,
                    deflation: None,
                    inverse_diagonal: None,
                    tol: options.tol,
                    max_iterations: 10 * len,
                };
                let mut tmp = vec![0.0; len];
                let mut x = u.clone();
                cg::solve(
                    &problem,
                    |v, o| {
                        op.apply(v, &mut tmp);
                        for i in 0..len {
                            o[i] = v[i] - 0.5 * h * tmp[i];
                        }
                    },
                    &rhs,
                    &mut x,
                )?;
                u = x;
            }
            HeatStepper::Rk4 => {
                let mut stage = |v: &[f64], o: &mut [f64]| op.apply(v, o);
                let mut k1 = vec![0.0; len];
                let mut k2 = vec![0.0; len];
                let mut k3 = vec![0.0; len];
                let mut k4 = vec![0.0; len];
                let mut y = vec![0.0; len];
                stage(&u, &mut k1);
                for i in 0..len {
                    y[i] = u[i] + 0.5 * h * k1[i];
                }
                stage(&y, &mut k2);
                for i in 0..len {
                    y[i] = u[i] + 0.5 * h * k2[i];
                }
                stage(&y, &mut k3);
                for i in 0..len {
                    y[i] = u[i] + h * k3[i];
                }
                stage(&y, &mut k4);
                for i in 0..len {
                    u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        let t = k as f64 * h;
        let floor = POSITIVITY_FLOOR / grid.volume();
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > floor) {
            return Err(Error::PositivityLoss {
                t,
                min: min * grid.volume(),
            });
        }
        if k % every == 0 || k == n {
            out.push((t, Density::from_ratio(grid, u.clone())?));
        }
    }
    Ok(out)
}

/// `u Delta^tau_nu(log u) - Delta^tau_mu u` for `u = nu / mu`.
pub fn two_laplacian_residual(nu: &Density, frame: &Frame) -> Result<ScalarField> {
    let grid = *frame.grid();
    grid.check_same(nu.grid())?;
    let u = ScalarField::new(grid, relative_ratio(nu))?;
    if let Some((node, &value)) = u.values().iter().enumerate().find(|(_, v)| **v <= POSITIVITY_FLOOR) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    let log_u = u.map(f64::ln)?;
    let mut weighted = SubLaplacian::with_weight(frame, Some(u.values()), GradientForm::FrameSum);
    let mut a = vec![0.0; grid.len()];
    weighted.apply(log_u.values(), &mut a);
    let mut flat = SubLaplacian::with_weight(frame, None, GradientForm::FrameSum);
    let mut b = vec![0.0; grid.len()];
    flat.apply(u.values(), &mut b);
    ScalarField::new(grid, (0..grid.len()).map(|i| u.values()[i] * a[i] - b[i]).collect())
}

#[derive(Debug, Clone)]
pub struct GradientFlowRow {
    pub t: f64,
    pub entropy: f64,
    /// Central difference of the entropy; `NaN` at the end points.
    pub entropy_rate: f64,
    /// `-|| d_t nu ||^2` in the horizontal Wasserstein metric; `NaN` at the end points.
    pub neg_metric: f64,
    pub identity_residual: f64,
    /// `|mass(nu_t) - mass(nu_0)|`.
    pub mass_drift: f64,
}

#[derive(Debug, Clone)]
pub struct GradientFlowReport {
    pub rows: Vec<GradientFlowRow>,
    /// `max |dEnt/dt + ||d_t nu||^2|` over interior snapshots.
    pub max_gap: f64,
    pub max_identity_residual: f64,
    pub max_mass_drift: f64,
    /// `Ent(nu_{k+1}) <= Ent(nu_k) + 1e-12` at every step.
    pub entropy_monotone: bool,
}

pub fn gradient_flow_check(trajectory: &[(f64, Density)], frame: &Frame, tol: f64) -> Result<GradientFlowReport> {
    if trajectory.len() < 3 {
        return Err(Error::InvalidArgument("need at least three snapshots".into()));
    }
    let grid = *frame.grid();
    let m0 = trajectory[0].1.mass();
    let entropies = trajectory
        .iter()
        .map(|(_, nu)| entropy(nu))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(trajectory.len());
    let mut max_gap: f64 = 0.0;
    for k in 0..trajectory.len() {
        let (t, nu) = &trajectory[k];
        let identity_residual = two_laplacian_residual(nu, frame)?.l2_norm();
        let (mut rate, mut neg_metric) = (f64::NAN, f64::NAN);
        if k > 0 && k + 1 < trajectory.len() {
            let (t0, t2) = (trajectory[k - 1].0, trajectory[k + 1].0);
            let (h1, h2) = (t - t0, t2 - t);
            let w = [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))];
            rate = w[0] * entropies[k - 1] + w[1] * entropies[k] + w[2] * entropies[k + 1];
            let (r0, r1, r2) = (trajectory[k - 1].1.ratio(), nu.ratio(), trajectory[k + 1].1.ratio());
            let eta = ScalarField::new(
                grid,
                (0..grid.len())
                    .map(|i| w[0] * r0[i] + w[1] * r1[i] + w[2] * r2[i])
                    .collect(),
            )?;
            let v = TangentDensity::new(nu.clone(), eta)?;
            neg_metric = -wasserstein_metric(&v, &v, frame, tol)?;
            max_gap = max_gap.max((rate - neg_metric).abs());
        }
        rows.push(GradientFlowRow {
            t: *t,
            entropy: entropies[k],
            entropy_rate: rate,
            neg_metric,
            identity_residual,
            mass_drift: (nu.mass() - m0).abs(),
        });
    }
    Ok(GradientFlowReport {
        max_identity_residual: rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max),
        max_mass_drift: rows.iter().map(|r| r.mass_drift).fold(0.0, f64::max),
        entropy_monotone: entropies.windows(2).all(|w| w[1] <= w[0] + 1e-12),
        rows,
        max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn profile(g: Grid, a: f64) -> Density {
        Density::normalized(g, g.coords().map(|p| 1.0 + a * (2.0 * PI * p[1]).sin()).collect()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let g = Grid::cube(16, 3).unwrap();
        assert_eq!(entropy(&Density::uniform(g)).unwrap().abs(), 0.0);
        // (1+e) log(1+e) = e + e^2/2 - e^3/6 + e^4/12 - ...; with e = a sin,
        // the mean is a^2/4 + a^4/32 + O(a^6).
        let a: f64 = 0.1;
        let oracle = a * a / 4.0 + a.powi(4) / 32.0;
        assert!((entropy(&profile(g, a)).unwrap() - oracle).abs() < 1e-6);
        let bad = Density::from_ratio(g, vec![1e-14; g.len()]).unwrap();
        assert!(matches!(entropy(&bad), Err(Error::NonPositiveDensity { .. })));
    }

    #[test]
    fn constant_is_stationary() {
        let frame = Frame::sin_heisenberg(Grid::cube(8, 3).unwrap()).unwrap();
        let mu = Density::uniform(*frame.grid());
        let path = heat_evolve(&mu, 0.01, 1e-3, &frame).unwrap();
        assert_eq!(path.len(), 11);
        for (_, nu) in &path {
            let err = nu.ratio().iter().fold(0.0, |m: f64, r| m.max((r - 1.0).abs()));
            assert!(err <= 1e-14);
        }
        let report = gradient_flow_check(&path, &frame, 1e-8).unwrap();
        assert!(report.max_gap <= 1e-12);
        assert!(report.max_identity_residual <= 1e-12);
    }

    #[test]
    fn tangent_density_requires_zero_mass() {
        let g = Grid::cube(8, 2).unwrap();
        let nu = Density::uniform(g);
        assert!(TangentDensity::new(nu.clone(), ScalarField::constant(g, 1e-3)).is_err());
        let eta = ScalarField::from_fn(g, |p| (2.0 * PI * p[0]).cos()).unwrap();
        assert!(TangentDensity::new(nu, eta).is_ok());
    }

    #[test]
    fn metric_zero_for_zero() {
        let frame = Frame::sin_heisenberg(Grid::cube(8, 3).unwrap()).unwrap();
        let g = *frame.grid();
        let nu = profile(g, 0.2);
        let zero = TangentDensity::new(nu.clone(), ScalarField::zeros(g)).unwrap();
        let eta = TangentDensity::new(nu, ScalarField::from_fn(g, |p| (2.0 * PI * p[2]).sin()).unwrap()).unwrap();
        assert_eq!(wasserstein_metric(&zero, &eta, &frame, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn rk4_matches_crank_nicolson() {
        let frame = Frame::sin_heisenberg(Grid::cube(8, 3).unwrap()).unwrap();
        let nu = profile(*frame.grid(), 0.2);
        let cn = heat_evolve(&nu, 0.01, 1e-4, &frame).unwrap();
        let opts = HeatOptions {
            stepper: HeatStepper::Rk4,
            ..HeatOptions::default()
        };
        let rk = heat_evolve_with(&nu, 0.01, 1e-4, &frame, &opts).unwrap();
        let (a, b) = (cn.last().unwrap().1.ratio(), rk.last().unwrap().1.ratio());
        let err = a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-6, "{err}");
    }
}
