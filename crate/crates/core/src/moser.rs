//! Horizontal Moser flow along the segment `mu_t = mu0 + t (mu1 - mu0)`.
//!
//! At each substep the homological equation `div_{mu_t} V = (r0 - r1) / r_t`
//! is solved with `V = grad^tau u`, and every seed particle is advanced by
//! RK4 together with its log-Jacobian, `d/dt log J = (div V)(phi_t)`.

use rayon::prelude::*;

use crate::distribution::{horizontal_gradient, horizontality_residual, Frame};
use crate::error::{Error, Result};
use crate::flow::{pushforward_with, FlowMap, PushforwardKernel};
use crate::geodesic::monge_ampere_residual;
use crate::grid::{Density, Grid, ScalarField};
use crate::interp::{Interpolation, Sampler};
use crate::ops;
use crate::solver::{solve_with_operator, GradientForm, Preconditioner, SolverOptions, SubLaplacian};

/// Largest admissible `|mass(mu0) - mass(mu1)|`.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// When the Poisson problem is solved within a substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveSchedule {
    /// Once at the substep midpoint, velocity frozen for all RK4 stages.
    #[default]
    Midpoint,
    /// At the substep start, midpoint and end, one per RK4 stage time.
    PerStage,
}

#[derive(Debug, Clone)]
pub struct MoserOptions {
    pub steps: usize,
    pub tol: f64,
    pub schedule: SolveSchedule,
    /// Kernel for sampling the velocity potential off the grid.
    pub velocity_interpolation: Interpolation,
    pub kernel: PushforwardKernel,
    pub preconditioner: Preconditioner,
    /// Record the flow every this many steps (0 disables).
    pub checkpoint_every: usize,
    /// Stop early at this time (rounded to whole steps).
    pub t_stop: Option<f64>,
}

impl MoserOptions {
    pub fn new(steps: usize, tol: f64) -> Self {
        Self {
            steps,
            tol,
            schedule: SolveSchedule::Midpoint,
            velocity_interpolation: Interpolation::Cubic,
            kernel: PushforwardKernel::Gather,
            preconditioner: Preconditioner::None,
            checkpoint_every: 0,
            t_stop: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    /// Time at which the Poisson problem was posed.
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
    pub parity_defect: f64,
    /// `integrate(rho_t, mu_t)`.
    pub source_mean: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TransportReport {
    pub l1_error: f64,
    pub l2_error: f64,
    pub linf_error: f64,
    pub steps: Vec<StepDiagnostics>,
    /// `max_t || V_t - P^tau V_t ||_inf`.
    pub horizontality_residual: f64,
    /// Mass of the pushforward before renormalization.
    pub mass_before_normalization: f64,
    pub unresolved_nodes: usize,
    /// `|| r1(phi) J - r0 ||_2`.
    pub monge_ampere_l2: f64,
}

impl TransportReport {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }

    pub fn renormalization(&self) -> f64 {
        (self.mass_before_normalization - 1.0).abs()
    }
}

#[derive(Debug, Clone)]
pub struct MoserRun {
    pub flow: FlowMap,
    pub report: TransportReport,
    pub checkpoints: Vec<FlowMap>,
}

/// Runs the flow with default options and verifies it against `mu1`.
pub fn moser_flow(
    mu0: &Density,
    mu1: &Density,
    frame: &Frame,
    steps: usize,
    tol: f64,
) -> Result<(FlowMap, TransportReport)> {
    let run = moser_flow_with(mu0, mu1, frame, &MoserOptions::new(steps, tol))?;
    Ok((run.flow, run.report))
}

/// Grid samples of `(grad u, div V)` for one Poisson solve, interleaved
/// per node.
struct Velocity {
    packed: Vec<[f64; 4]>,
}

impl Velocity {
    fn eval(&self, frame: &Frame, kernel: Interpolation, x: [f64; 3]) -> ([f64; 3], f64) {
        let grid = frame.grid();
        let n = grid.ndim();
        let [g0, g1, g2, div] = Sampler::new(grid, kernel, x).packed(&self.packed);
        let g = [g0, g1, g2];
        if frame.is_flat() {
            return (g, div);
        }
        let fields = frame.values_at(x);
        let mut v = [0.0; 3];
        for xi in &fields[..frame.rank()] {
            let c = xi[0] * g[0] + xi[1] * g[1] + xi[2] * g[2];
            for a in 0..n {
                v[a] += c * xi[a];
            }
        }
        (v, div)
    }
}

struct Solver<'a> {
    frame: &'a Frame,
    r0: &'a [f64],
    r1: &'a [f64],
    options: SolverOptions,
    history: Vec<ScalarField>,
    diagnostics: Vec<StepDiagnostics>,
    horizontality: f64,
}

impl<'a> Solver<'a> {
    fn velocity(&mut self, t: f64) -> Result<Velocity> {
        let grid = *self.frame.grid();
        let rt: Vec<f64> = self.r0.iter().zip(self.r1).map(|(a, b)| a + t * (b - a)).collect();
        let rho: Vec<f64> = (0..grid.len()).map(|i| (self.r0[i] - self.r1[i]) / rt[i]).collect();
        let source_mean = crate::grid::fixed_sum_by(grid.len(), |i| self.r0[i] - self.r1[i]) * grid.cell_volume();
        let rho = ScalarField::new(grid, rho)?;
        let mut op = SubLaplacian::with_weight(self.frame, Some(&rt), GradientForm::FrameSum);
        let guess = match self.history.as_slice() {
            [.., a, b] => Some(a.combine(-1.0, b, 2.0)?.into_values()),
            [b] => Some(b.values().to_vec()),
            [] => None,
        };
        let sol = solve_with_operator(&mut op, &rho, &self.options, guess.as_deref())?;
        self.diagnostics.push(StepDiagnostics {
            t,
            iterations: sol.iterations,
            residual: sol.residual_norm,
            parity_defect: sol.parity_defect,
            source_mean,
        });
        let v = horizontal_gradient(&sol.u, self.frame)?;
        self.horizontality = self.horizontality.max(horizontality_residual(&v, self.frame)?);
        let div = ops::divergence_flat(&v).into_values();
        let grad = ops::grad(&sol.u);
        let packed = (0..grid.len())
            .map(|i| {
                let g = grad.at(i);
                [g[0], g[1], g[2], div[i]]
            })
            .collect();
        if self.history.len() == 2 {
            self.history.remove(0);
        }
        self.history.push(sol.u);
        Ok(Velocity { packed })
    }
}

#[derive(Clone, Copy)]
struct Particle {
    d: [f64; 3],
    log_j: f64,
}

fn rk4_step(
    grid: &Grid,
    frame: &Frame,
    kernel: Interpolation,
    seed: [f64; 3],
    p: Particle,
    h: f64,
    fields: [&Velocity; 3],
) -> Particle {
    let at = |c: f64, k: &([f64; 3], f64)| {
        let mut x = seed;
        for a in 0..grid.ndim() {
            x[a] += p.d[a] + c * k.0[a];
        }
        x
    };
    let k0 = ([0.0; 3], 0.0);
    let k1 = fields[0].eval(frame, kernel, at(0.0, &k0));
    let k2 = fields[1].eval(frame, kernel, at(0.5 * h, &k1));
    let k3 = fields[1].eval(frame, kernel, at(0.5 * h, &k2));
    let k4 = fields[2].eval(frame, kernel, at(h, &k3));
    let mut out = p;
    for a in 0..3 {
        out.d[a] += h / 6.0 * (k1.0[a] + 2.0 * k2.0[a] + 2.0 * k3.0[a] + k4.0[a]);
    }
    out.log_j += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    out
}

pub fn moser_flow_with(mu0: &Density, mu1: &Density, frame: &Frame, options: &MoserOptions) -> Result<MoserRun> {
    let grid = *frame.grid();
    grid.check_same(mu0.grid())?;
    grid.check_same(mu1.grid())?;
    if options.steps == 0 {
        return Err(Error::InvalidArgument("the flow needs at least one step".into()));
    }
    let gap = mu0.mass() - mu1.mass();
    if gap.abs() > MASS_TOLERANCE {
        return Err(Error::Solvability(format!(
            "densities carry different total mass ({} vs {}); the flow preserves volume",
            mu0.mass(),
            mu1.mass()
        )));
    }
    let dt = 1.0 / options.steps as f64;
    let steps = match options.t_stop {
        Some(t) if !(0.0..=1.0).contains(&t) => {
            return Err(Error::InvalidArgument(format!("stop time {t} lies outside [0, 1]")))
        }
        Some(t) => (t * options.steps as f64).round() as usize,
        None => options.steps,
    };
    let mut solver = Solver {
        frame,
        r0: mu0.ratio(),
        r1: mu1.ratio(),
        options: SolverOptions {
            preconditioner: options.preconditioner,
            ..SolverOptions::with_tol(options.tol)
        },
        history: Vec::new(),
        diagnostics: Vec::new(),
        horizontality: 0.0,
    };
    let kernel = options.velocity_interpolation;
    let mut particles = vec![
        Particle {
            d: [0.0; 3],
            log_j: 0.0
        };
        grid.len()
    ];
    let mut checkpoints = Vec::new();
    let mut carry: Option<Velocity> = None;
    for k in 0..steps {
        let t0 = k as f64 * dt;
        match options.schedule {
            SolveSchedule::Midpoint => {
                let v = solver.velocity(t0 + 0.5 * dt)?;
                advance(&grid, frame, kernel, &mut particles, dt, [&v, &v, &v]);
            }
            SolveSchedule::PerStage => {
                let start = match carry.take() {
                    Some(v) => v,
                    None => solver.velocity(t0)?,
                };
                let mid = solver.velocity(t0 + 0.5 * dt)?;
                let end = solver.velocity(t0 + dt)?;
                advance(&grid, frame, kernel, &mut particles, dt, [&start, &mid, &end]);
                carry = Some(end);
            }
        }
        if let Some((i, _)) = particles
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.d.iter().all(|v| v.is_finite()) && p.log_j.is_finite()))
        {
            return Err(Error::Integration(format!(
                "particle {i} left the finite range at t = {}",
                t0 + dt
            )));
        }
        if options.checkpoint_every > 0 && (k + 1) % options.checkpoint_every == 0 && k + 1 < steps {
            checkpoints.push(to_flow(grid, &particles, (k + 1) as f64 * dt)?);
        }
    }
    let flow = to_flow(grid, &particles, steps as f64 * dt)?;
    let mut report = verify_with(&flow, mu0, mu1, options.kernel)?;
    report.steps = solver.diagnostics;
    report.horizontality_residual = solver.horizontality;
    Ok(MoserRun {
        flow,
        report,
        checkpoints,
    })
}

fn advance(
    grid: &Grid,
    frame: &Frame,
    kernel: Interpolation,
    particles: &mut [Particle],
    h: f64,
    fields: [&Velocity; 3],
) {
    particles
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, p)| *p = rk4_step(grid, frame, kernel, grid.coord(i), *p, h, fields));
}

fn to_flow(grid: Grid, particles: &[Particle], t: f64) -> Result<FlowMap> {
    FlowMap::from_displacements(
        grid,
        particles.iter().map(|p| p.d).collect(),
        particles.iter().map(|p| p.log_j).collect(),
        t,
    )
}

/// Compares `phi_* mu0` with `mu1` and evaluates the Monge-Ampere residual.
pub fn verify_transport(flow: &FlowMap, mu0: &Density, mu1: &Density) -> Result<TransportReport> {
    verify_with(flow, mu0, mu1, PushforwardKernel::Gather)
}

pub fn verify_with(flow: &FlowMap, mu0: &Density, mu1: &Density, kernel: PushforwardKernel) -> Result<TransportReport> {
    flow.grid().check_same(mu1.grid())?;
    let push = pushforward_with(flow, mu0, kernel)?;
    let diff = push.density.as_field().combine(1.0, &mu1.as_field(), -1.0)?;
    let ma = monge_ampere_residual(flow, &mu0.as_field(), &mu1.as_field())?;
    Ok(TransportReport {
        l1_error: diff.l1_norm(),
        l2_error: diff.l2_norm(),
        linf_error: diff.linf_norm(),
        steps: Vec::new(),
        horizontality_residual: 0.0,
        mass_before_normalization: push.mass_before_normalization,
        unresolved_nodes: push.unresolved,
        monge_ampere_l2: ma.l2_norm(),
    })
}
