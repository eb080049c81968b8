//! Particle flow maps seeded at grid nodes, and the densities they push forward.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fixed_sum, Density, Grid};
use crate::interp::{Interpolation, Sampler};

/// Time-`t` map of a flow, one particle per grid node.
#[derive(Debug, Clone)]
pub struct FlowMap {
    grid: Grid,
    /// Endpoint minus seed, on the universal cover.
    displacements: Vec<[f64; 3]>,
    positions: Vec<[f64; 3]>,
    log_jacobian: Vec<f64>,
    velocities: Option<Vec<[f64; 3]>>,
    t_final: f64,
    shock: bool,
}

impl FlowMap {
    pub fn identity(grid: Grid) -> Self {
        let positions = grid.coords().collect();
        Self {
            grid,
            displacements: vec![[0.0; 3]; grid.len()],
            positions,
            log_jacobian: vec![0.0; grid.len()],
            velocities: None,
            t_final: 0.0,
            shock: false,
        }
    }

    pub fn from_displacements(
        grid: Grid,
        displacements: Vec<[f64; 3]>,
        log_jacobian: Vec<f64>,
        t_final: f64,
    ) -> Result<Self> {
        if displacements.len() != grid.len() || log_jacobian.len() != grid.len() {
            return Err(Error::Shape(format!(
                "flow map needs {} particles, got {} displacements and {} log-Jacobians",
                grid.len(),
                displacements.len(),
                log_jacobian.len()
            )));
        }
        if displacements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Integration("non-finite particle position".into()));
        }
        if log_jacobian.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration("non-finite log-Jacobian".into()));
        }
        let positions = displacements
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let x = grid.coord(i);
                grid.wrap([x[0] + d[0], x[1] + d[1], x[2] + d[2]])
            })
            .collect();
        Ok(Self {
            grid,
            displacements,
            positions,
            log_jacobian,
            velocities: None,
            t_final,
            shock: false,
        })
    }

    pub(crate) fn with_velocities(mut self, velocities: Vec<[f64; 3]>) -> Self {
        self.velocities = Some(velocities);
        self
    }

    pub(crate) fn with_shock(mut self, shock: bool) -> Self {
        self.shock = shock;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Endpoints wrapped into the fundamental domain.
    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn displacements(&self) -> &[[f64; 3]] {
        &self.displacements
    }

    pub fn log_jacobian(&self) -> &[f64] {
        &self.log_jacobian
    }

    /// Particle velocities at `t_final`, when the integrator recorded them.
    pub fn velocities(&self) -> Option<&[[f64; 3]]> {
        self.velocities.as_deref()
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Set when particles collided or the Jacobian lost positivity.
    pub fn shock(&self) -> bool {
        self.shock
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacements.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// How particle data is turned back into a grid density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PushforwardKernel {
    /// Invert the map at every node by Newton iteration on the six-point
    /// Lagrange interpolant of the displacement, then pull back `ratio0 / J`.
    #[default]
    Gather,
    /// Deposit each particle's mass with multilinear weights.
    LinearScatter,
}

#[derive(Debug, Clone)]
pub struct Pushforward {
    /// Renormalized to the mass of the source density.
    pub density: Density,
    pub mass_before_normalization: f64,
    /// Nodes whose preimage could not be resolved (fold or Newton failure).
    pub unresolved: usize,
}

/// `phi_* mu0` with the default gather kernel.
pub fn pushforward_density(flow: &FlowMap, mu0: &Density) -> Result<Density> {
    Ok(pushforward_with(flow, mu0, PushforwardKernel::Gather)?.density)
}

pub fn pushforward_with(flow: &FlowMap, mu0: &Density, kernel: PushforwardKernel) -> Result<Pushforward> {
    flow.grid.check_same(mu0.grid())?;
    let grid = flow.grid;
    let (ratio, unresolved) = match kernel {
        PushforwardKernel::Gather => {
            let carried: Vec<f64> = mu0
                .ratio()
                .iter()
                .zip(&flow.log_jacobian)
                .map(|(r, l)| r * (-l).exp())
                .collect();
            let inverse = InverseMap::new(flow);
            let pre = inverse.preimages();
            (pre.sample(&carried), pre.unresolved)
        }
        PushforwardKernel::LinearScatter => {
            let mut out = vec![0.0; grid.len()];
            for (p, r) in flow.positions.iter().zip(mu0.ratio()) {
                Sampler::new(&grid, Interpolation::Linear, *p).for_each_weight(|k, w| out[k] += w * r);
            }
            (out, 0)
        }
    };
    let target = mu0.mass();
    let mass = fixed_sum(&ratio) * grid.cell_volume();
    if !(mass > 0.0) || ratio.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration(format!("pushforward mass {mass} is not positive")));
    }
    let scale = target / mass;
    let ratio: Vec<f64> = ratio.into_iter().map(|v| v * scale).collect();
    if let Some((node, &value)) = ratio.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    Ok(Pushforward {
        density: Density::from_ratio(grid, ratio)?,
        mass_before_normalization: mass,
        unresolved,
    })
}

/// Kernel for map inversion and gathering; sixth order keeps the gather
/// error well below the flow error at desk resolutions.
const GATHER: Interpolation = Interpolation::Quintic;

/// Newton inversion of `x -> x + d(x)` on the interpolant of `d`.
pub(crate) struct InverseMap<'a> {
    grid: &'a Grid,
    disp: [Vec<f64>; 3],
}

pub(crate) struct Preimages<'a> {
    grid: &'a Grid,
    pub points: Vec<[f64; 3]>,
    pub unresolved: usize,
}

impl<'a> Preimages<'a> {
    /// Interpolation of per-seed values at every preimage.
    pub fn sample(&self, values: &[f64]) -> Vec<f64> {
        self.points
            .par_iter()
            .map(|p| Sampler::new(self.grid, GATHER, *p).value(values))
            .collect()
    }
}

impl<'a> InverseMap<'a> {
    pub fn new(flow: &'a FlowMap) -> Self {
        let grid = &flow.grid;
        let comp = |a: usize| flow.displacements.iter().map(|d| d[a]).collect::<Vec<_>>();
        Self {
            grid,
            disp: [comp(0), comp(1), comp(2)],
        }
    }

    fn displacement(&self, x: [f64; 3]) -> ([f64; 3], Matrix3<f64>) {
        let n = self.grid.ndim();
        let s = Sampler::new(self.grid, GATHER, x);
        let mut d = [0.0; 3];
        let mut jac = Matrix3::identity();
        for a in 0..n {
            let (v, g) = s.value_and_gradient(&self.disp[a], n);
            d[a] = v;
            for b in 0..n {
                jac[(a, b)] += g[b];
            }
        }
        (d, jac)
    }

    /// Solves `x + d(x) = y`. `None` when Newton fails or the map folds.
    pub fn preimage(&self, y: [f64; 3]) -> Option<[f64; 3]> {
        let n = self.grid.ndim();
        let scale = (0..n).map(|a| self.grid.periods()[a]).fold(0.0, f64::max);
        let (d0, _) = self.displacement(y);
        let mut x = y;
        for a in 0..n {
            x[a] -= d0[a];
        }
        for _ in 0..30 {
            let (d, jac) = self.displacement(x);
            let f = Vector3::new(
                x[0] + d[0] - y[0],
                x[1] + d[1] - y[1],
                if n == 3 { x[2] + d[2] - y[2] } else { 0.0 },
            );
            if f.amax() <= 1e-14 * scale {
                return (jac.determinant() > 0.0).then_some(x);
            }
            let step = jac.lu().solve(&f)?;
            for a in 0..n {
                x[a] -= step[a];
            }
        }
        None
    }

    pub fn preimages(&self) -> Preimages<'a> {
        let solved: Vec<(bool, [f64; 3])> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let y = self.grid.coord(i);
                match self.preimage(y) {
                    Some(x) => (true, x),
                    None => {
                        let (d, _) = self.displacement(y);
                        (false, [y[0] - d[0], y[1] - d[1], y[2] - d[2]])
                    }
                }
            })
            .collect();
        let unresolved = solved.iter().filter(|(ok, _)| !ok).count();
        let points = solved.into_iter().map(|(_, x)| x).collect();
        Preimages {
            grid: self.grid,
            points,
            unresolved,
        }
    }
}
