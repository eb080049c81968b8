//! Normal geodesics of `H = 1/2 sum_i (p . X_i)^2`, the horizontal exponential
//! of exact covectors, Hamilton-Jacobi transport by characteristics and the
//! residual diagnostics built on them.

use rayon::prelude::*;

use crate::distribution::Frame;
use crate::error::{Error, Result};
use crate::flow::{pushforward_with, FlowMap, InverseMap, Pushforward, PushforwardKernel};
use crate::grid::{Density, Grid, ScalarField};
use crate::interp::{Interpolation, Sampler};
use crate::ops::{self, axis_derivative};

/// A covector `p` at a point `q`; `q` may sit on the universal cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotangentState {
    pub q: [f64; 3],
    pub p: [f64; 3],
}

impl CotangentState {
    pub fn new(q: [f64; 3], p: [f64; 3]) -> Self {
        Self { q, p }
    }
}

pub fn sub_hamiltonian(state: &CotangentState, frame: &Frame) -> f64 {
    let x = frame.values_at(state.q);
    0.5 * x[..frame.rank()]
        .iter()
        .map(|xi| dot(&state.p, xi).powi(2))
        .sum::<f64>()
}

/// Initial velocity `sum_i (p . X_i) X_i`.
pub fn sharp(state: &CotangentState, frame: &Frame) -> [f64; 3] {
    let x = frame.values_at(state.q);
    let mut v = [0.0; 3];
    for xi in &x[..frame.rank()] {
        let s = dot(&state.p, xi);
        for a in 0..3 {
            v[a] += s * xi[a];
        }
    }
    v
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn hamilton_rhs(frame: &Frame, q: [f64; 3], p: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let jet = frame.jet(q);
    let n = frame.grid().ndim();
    let mut dq = [0.0; 3];
    let mut dp = [0.0; 3];
    for i in 0..jet.rank {
        let s = dot(&p, &jet.values[i]);
        for a in 0..n {
            dq[a] += s * jet.values[i][a];
            dp[a] -= s * dot(&p, &jet.partials[i][a]);
        }
    }
    (dq, dp)
}

fn rk4_step(frame: &Frame, s: CotangentState, h: f64) -> CotangentState {
    let shift = |s: &CotangentState, k: &([f64; 3], [f64; 3]), c: f64| {
        let mut q = s.q;
        let mut p = s.p;
        for a in 0..3 {
            q[a] += c * k.0[a];
            p[a] += c * k.1[a];
        }
        (q, p)
    };
    let k1 = hamilton_rhs(frame, s.q, s.p);
    let (q, p) = shift(&s, &k1, 0.5 * h);
    let k2 = hamilton_rhs(frame, q, p);
    let (q, p) = shift(&s, &k2, 0.5 * h);
    let k3 = hamilton_rhs(frame, q, p);
    let (q, p) = shift(&s, &k3, h);
    let k4 = hamilton_rhs(frame, q, p);
    let mut out = s;
    for a in 0..3 {
        out.q[a] += h / 6.0 * (k1.0[a] + 2.0 * k2.0[a] + 2.0 * k3.0[a] + k4.0[a]);
        out.p[a] += h / 6.0 * (k1.1[a] + 2.0 * k2.1[a] + 2.0 * k3.1[a] + k4.1[a]);
    }
    out
}

/// `(steps, step size)` covering `[0, t]` with steps no longer than `dt`.
fn schedule(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "integration time must be non-negative, got {t}"
        )));
    }
    let n = (t / dt - 1e-9).ceil().max(0.0) as usize;
    Ok(if n == 0 { (0, 0.0) } else { (n, t / n as f64) })
}

fn check_finite(s: &CotangentState, t: f64) -> Result<()> {
    if s.q.iter().chain(&s.p).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration(format!("non-finite cotangent state at t = {t}")))
    }
}

/// Integrates one particle to time `t` without recording; the unit of work
/// shared by every ensemble routine.
pub fn integrate_cotangent(state: CotangentState, t: f64, frame: &Frame, dt: f64) -> Result<CotangentState> {
    let (n, h) = schedule(t, dt)?;
    let mut s = state;
    for k in 0..n {
        s = rk4_step(frame, s, h);
        check_finite(&s, (k + 1) as f64 * h)?;
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct GeodesicTrajectory {
    pub times: Vec<f64>,
    /// States with `q` wrapped into the fundamental domain.
    pub states: Vec<CotangentState>,
    pub hamiltonian: Vec<f64>,
    /// Endpoint on the universal cover.
    pub endpoint: [f64; 3],
}

impl GeodesicTrajectory {
    /// `max |H(t) - H(0)| / max(H(0), eps)`.
    pub fn relative_energy_drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        let drift = self.hamiltonian.iter().fold(0.0, |m: f64, h| m.max((h - h0).abs()));
        drift / h0.max(f64::EPSILON)
    }
}

/// `exp^tau(t p0)` from `q0`, sampled at each RK4 step.
pub fn exp_tau(q0: [f64; 3], p0: [f64; 3], t: f64, frame: &Frame, dt: f64) -> Result<GeodesicTrajectory> {
    let (n, h) = schedule(t, dt)?;
    let grid = frame.grid();
    let mut s = CotangentState::new(q0, p0);
    check_finite(&s, 0.0)?;
    let mut traj = GeodesicTrajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        hamiltonian: Vec::with_capacity(n + 1),
        endpoint: q0,
    };
    let mut record = |s: &CotangentState, t: f64| {
        traj.times.push(t);
        traj.states.push(CotangentState::new(grid.wrap(s.q), s.p));
        traj.hamiltonian.push(sub_hamiltonian(s, frame));
    };
    record(&s, 0.0);
    for k in 0..n {
        s = rk4_step(frame, s, h);
        let tk = (k + 1) as f64 * h;
        check_finite(&s, tk)?;
        record(&s, tk);
    }
    traj.endpoint = s.q;
    Ok(traj)
}

/// Seeds `(x, df(x))` at every node and flows them for time `t`.
pub fn horizontal_exponential(f: &ScalarField, t: f64, frame: &Frame, dt: f64) -> Result<FlowMap> {
    f.grid().check_same(frame.grid())?;
    let g = ops::grad(f);
    let covectors = (0..f.grid().len()).map(|i| g.at(i)).collect();
    horizontal_exponential_from_covectors(frame, covectors, t, dt)
}

/// Like [`horizontal_exponential`] with arbitrary initial covectors, e.g.
/// the constant momentum of a potential that is linear on the cover.
pub fn horizontal_exponential_from_covectors(
    frame: &Frame,
    covectors: Vec<[f64; 3]>,
    t: f64,
    dt: f64,
) -> Result<FlowMap> {
    let grid = *frame.grid();
    if covectors.len() != grid.len() {
        return Err(Error::Shape(format!(
            "need one covector per node ({}), got {}",
            grid.len(),
            covectors.len()
        )));
    }
    // Particles never interact: each runs the single-particle integrator.
    let ends = covectors
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| integrate_cotangent(CotangentState::new(grid.coord(i), p), t, frame, dt))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let displacements = ends
        .iter()
        .enumerate()
        .map(|(i, end)| {
            let x = grid.coord(i);
            [end.q[0] - x[0], end.q[1] - x[1], end.q[2] - x[2]]
        })
        .collect();
    let velocities = ends.iter().map(|end| sharp(end, frame)).collect();
    ensemble_flow(grid, displacements, t).map(|f| f.with_velocities(velocities))
}

/// Log-Jacobian from the stencil derivative of the displacement field,
/// `log det(I + D d)`, plus fold and collision detection.
fn ensemble_flow(grid: Grid, displacements: Vec<[f64; 3]>, t: f64) -> Result<FlowMap> {
    let (log_jacobian, shock) = jacobian_from_displacements(&grid, &displacements);
    Ok(FlowMap::from_displacements(grid, displacements, log_jacobian, t)?.with_shock(shock))
}

pub(crate) fn jacobian_from_displacements(grid: &Grid, displacements: &[[f64; 3]]) -> (Vec<f64>, bool) {
    let n = grid.ndim();
    let mut jac = vec![[[0.0; 3]; 3]; grid.len()];
    let mut comp = vec![0.0; grid.len()];
    let mut deriv = vec![0.0; grid.len()];
    for a in 0..n {
        for (c, d) in comp.iter_mut().zip(displacements) {
            *c = d[a];
        }
        for b in 0..n {
            axis_derivative(grid, b, &comp, &mut deriv);
            for (j, v) in jac.iter_mut().zip(&deriv) {
                j[a][b] = *v;
            }
        }
    }
    let mut shock = false;
    let log_jacobian = jac
        .iter()
        .map(|j| {
            let mut m = nalgebra::Matrix3::<f64>::identity();
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += j[a][b];
                }
            }
            let det = m.determinant();
            if det <= 0.0 {
                shock = true;
                det.abs().max(f64::MIN_POSITIVE).ln()
            } else {
                det.ln()
            }
        })
        .collect();
    // Neighbouring particles closer than a hundredth of a cell.
    let hmin = (0..n).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    'outer: for i in 0..grid.len() {
        let m = grid.multi_index(i);
        let xi = grid.coord(i);
        for a in 0..n {
            let mut mj = m;
            mj[a] = (m[a] + 1) % grid.dims()[a];
            let j = grid.index(mj);
            let xj = grid.coord(j);
            let mut d = [0.0; 3];
            for b in 0..n {
                d[b] = xj[b] + displacements[j][b] - xi[b] - displacements[i][b];
            }
            let d = grid.minimal_image(d);
            if dot(&d, &d).sqrt() < 0.01 * hmin {
                shock = true;
                break 'outer;
            }
        }
    }
    (log_jacobian, shock)
}

/// `(exp^tau(t grad^tau f))_* nu`.
pub fn displacement_interpolation(nu: &Density, f: &ScalarField, t: f64, frame: &Frame, dt: f64) -> Result<Density> {
    Ok(displacement_interpolation_with(nu, f, t, frame, dt)?.density)
}

pub fn displacement_interpolation_with(
    nu: &Density,
    f: &ScalarField,
    t: f64,
    frame: &Frame,
    dt: f64,
) -> Result<Pushforward> {
    let flow = horizontal_exponential(f, t, frame, dt)?;
    pushforward_with(&flow, nu, PushforwardKernel::Gather)
}

#[derive(Debug, Clone)]
pub struct PotentialPath {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
    pub shock: Vec<bool>,
}

impl PotentialPath {
    pub fn first_shock(&self) -> Option<f64> {
        self.times.iter().zip(&self.shock).find(|(_, s)| **s).map(|(t, _)| *t)
    }
}

/// Characteristics of `f_t + H(df_t) = 0`: along each trajectory the value
/// grows by `t H(df0(x))`; snapshots are gathered back onto the grid at
/// every step.
pub fn hj_evolve(f0: &ScalarField, t_max: f64, frame: &Frame, dt: f64) -> Result<PotentialPath> {
    f0.grid().check_same(frame.grid())?;
    let grid = *f0.grid();
    let (n, h) = schedule(t_max, dt)?;
    let g = ops::grad(f0);
    let mut states: Vec<CotangentState> = (0..grid.len())
        .map(|i| CotangentState::new(grid.coord(i), g.at(i)))
        .collect();
    let h0: Vec<f64> = states.iter().map(|s| sub_hamiltonian(s, frame)).collect();
    let mut path = PotentialPath {
        times: vec![0.0],
        fields: vec![f0.clone()],
        shock: vec![false],
    };
    for k in 1..=n {
        let t = k as f64 * h;
        states.par_iter_mut().for_each(|s| *s = rk4_step(frame, *s, h));
        for s in &states {
            check_finite(s, t)?;
        }
        let displacements: Vec<[f64; 3]> = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let x = grid.coord(i);
                [s.q[0] - x[0], s.q[1] - x[1], s.q[2] - x[2]]
            })
            .collect();
        let flow = ensemble_flow(grid, displacements, t)?;
        let pre = InverseMap::new(&flow).preimages();
        let carried: Vec<f64> = f0.values().iter().zip(&h0).map(|(f, e)| f + t * e).collect();
        path.times.push(t);
        path.fields.push(ScalarField::new(grid, pre.sample(&carried))?);
        path.shock.push(flow.shock() || pre.unresolved > 0);
    }
    Ok(path)
}

/// Three-point first derivative weights at the middle of `t0 < t1 < t2`.
fn central_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let (h1, h2) = (t1 - t0, t2 - t1);
    [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
}

/// `max_k || d_t f + H(df) ||_2` over interior snapshots, by central
/// differences in time and the grid stencil in space.
pub fn hamilton_jacobi_residual(path: &PotentialPath, frame: &Frame) -> Result<f64> {
    if path.fields.len() < 3 {
        return Err(Error::InvalidArgument("need at least three snapshots".into()));
    }
    if let Some(t) = path.first_shock() {
        return Err(Error::InvalidArgument(format!("potential path shocks at t = {t}")));
    }
    let grid = *frame.grid();
    let mut worst: f64 = 0.0;
    for k in 1..path.fields.len() - 1 {
        let w = central_weights(path.times[k - 1], path.times[k], path.times[k + 1]);
        let f = &path.fields[k];
        f.grid().check_same(&grid)?;
        let df = ops::grad(f);
        let res: Vec<f64> = (0..grid.len())
            .map(|i| {
                let dt = w[0] * path.fields[k - 1].values()[i]
                    + w[1] * f.values()[i]
                    + w[2] * path.fields[k + 1].values()[i];
                let p = df.at(i);
                let h: f64 = frame.samples()[..frame.rank()]
                    .iter()
                    .map(|x| dot(&p, &x.at(i)).powi(2))
                    .sum::<f64>()
                    * 0.5;
                dt + h
            })
            .collect();
        worst = worst.max(ScalarField::new(grid, res)?.l2_norm());
    }
    Ok(worst)
}

/// `h(phi(x)) exp(log J(x)) - g(x)` at every seed.
pub fn monge_ampere_residual(flow: &FlowMap, g: &ScalarField, h: &ScalarField) -> Result<ScalarField> {
    let grid = *flow.grid();
    grid.check_same(g.grid())?;
    grid.check_same(h.grid())?;
    let values = flow
        .positions()
        .iter()
        .zip(flow.log_jacobian())
        .zip(g.values())
        .map(|((p, l), gv)| Sampler::new(&grid, Interpolation::Cubic, *p).value(h.values()) * l.exp() - gv)
        .collect();
    ScalarField::new(grid, values)
}

/// `max_k || d_t V + (V . grad) V ||_2` over interior samples of a flat-frame
/// particle path, with `V_t` gathered from particle velocities.
pub fn burgers_residual(flow_path: &[(f64, FlowMap)], frame: &Frame) -> Result<f64> {
    if !frame.is_flat() {
        return Err(Error::InvalidArgument(
            "the Burgers residual is defined for the flat full-rank frame".into(),
        ));
    }
    if flow_path.len() < 3 {
        return Err(Error::InvalidArgument("need at least three flow samples".into()));
    }
    let grid = *frame.grid();
    let n = grid.ndim();
    let mut fields = Vec::with_capacity(flow_path.len());
    for (t, flow) in flow_path {
        grid.check_same(flow.grid())?;
        if flow.shock() {
            return Err(Error::InvalidArgument(format!("flow sample at t = {t} is shocked")));
        }
        let v = flow
            .velocities()
            .ok_or_else(|| Error::InvalidArgument(format!("flow sample at t = {t} has no velocities")))?;
        let pre = InverseMap::new(flow).preimages();
        if pre.unresolved > 0 {
            return Err(Error::InvalidArgument(format!("flow sample at t = {t} folds")));
        }
        let comps: Vec<Vec<f64>> = (0..n)
            .map(|a| pre.sample(&v.iter().map(|x| x[a]).collect::<Vec<_>>()))
            .collect();
        fields.push(comps);
    }
    let mut worst: f64 = 0.0;
    let mut deriv = vec![0.0; grid.len()];
    for k in 1..fields.len() - 1 {
        let w = central_weights(flow_path[k - 1].0, flow_path[k].0, flow_path[k + 1].0);
        let v = &fields[k];
        let mut total = 0.0;
        for a in 0..n {
            let mut r: Vec<f64> = (0..grid.len())
                .map(|i| w[0] * fields[k - 1][a][i] + w[1] * v[a][i] + w[2] * fields[k + 1][a][i])
                .collect();
            for b in 0..n {
                axis_derivative(&grid, b, &v[a], &mut deriv);
                for i in 0..grid.len() {
                    r[i] += v[b][i] * deriv[i];
                }
            }
            total += ScalarField::new(grid, r)?.l2_norm().powi(2);
        }
        worst = worst.max(total.sqrt());
    }
    Ok(worst)
}
