//! Periodic lattices on the 2- and 3-torus and the fields sampled on them.
//!
//! Nodes are stored row-major with the last axis fastest; node `i` along an
//! axis sits at coordinate `i * spacing`. Two-dimensional grids are padded to
//! three axes internally with a trailing axis of length one that is never
//! differentiated.

use crate::error::{Error, Result};

/// Central first-derivative stencils on a periodic line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Stencil {
    Second,
    Fourth,
    #[default]
    Sixth,
    Eighth,
}

impl Stencil {
    /// Antisymmetric weights `c_m`, `D u_i = sum_m c_m (u_{i+m} - u_{i-m}) / h`.
    pub fn coefficients(self) -> &'static [f64] {
        match self {
            Stencil::Second => &[0.5],
            Stencil::Fourth => &[2.0 / 3.0, -1.0 / 12.0],
            Stencil::Sixth => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
            Stencil::Eighth => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        }
    }

    pub fn order(self) -> usize {
        2 * self.coefficients().len()
    }

    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Stencil::Second),
            4 => Ok(Stencil::Fourth),
            6 => Ok(Stencil::Sixth),
            8 => Ok(Stencil::Eighth),
            _ => Err(Error::InvalidArgument(format!(
                "stencil order must be 2, 4, 6 or 8, got {order}"
            ))),
        }
    }

    /// Fourier symbol of the stencil at `theta = k h`, divided by `i`.
    pub fn symbol(self, theta: f64) -> f64 {
        self.coefficients()
            .iter()
            .enumerate()
            .map(|(m, c)| 2.0 * c * ((m + 1) as f64 * theta).sin())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    ndim: usize,
    dims: [usize; 3],
    periods: [f64; 3],
    stencil: Stencil,
}

impl Grid {
    pub fn new(dims: &[usize], periods: &[f64]) -> Result<Self> {
        let ndim = dims.len();
        if !(2..=3).contains(&ndim) {
            return Err(Error::InvalidGrid(format!("grid must have 2 or 3 axes, got {ndim}")));
        }
        if periods.len() != ndim {
            return Err(Error::InvalidGrid(format!(
                "{} periods given for {ndim} axes",
                periods.len()
            )));
        }
        let mut d = [1usize; 3];
        let mut p = [1.0f64; 3];
        for a in 0..ndim {
            if dims[a] < 4 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has {} nodes; at least 4 are required",
                    dims[a]
                )));
            }
            if !(periods[a] > 0.0 && periods[a].is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} period must be positive, got {}",
                    periods[a]
                )));
            }
            d[a] = dims[a];
            p[a] = periods[a];
        }
        Ok(Self {
            ndim,
            dims: d,
            periods: p,
            stencil: Stencil::default(),
        })
    }

    /// `n` nodes per axis on the unit torus.
    pub fn cube(n: usize, ndim: usize) -> Result<Self> {
        Self::new(&vec![n; ndim], &vec![1.0; ndim])
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    /// Node counts of the real axes.
    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods[..self.ndim]
    }

    pub(crate) fn padded_dims(&self) -> [usize; 3] {
        self.dims
    }

    pub(crate) fn padded_periods(&self) -> [f64; 3] {
        self.periods
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.dims[axis] as f64
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.periods[..self.ndim].iter().product()
    }

    /// Quadrature weight of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.dims[axis + 1..].iter().product()
    }

    pub fn index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn multi_index(&self, i: usize) -> [usize; 3] {
        let k = i % self.dims[2];
        let j = (i / self.dims[2]) % self.dims[1];
        let l = i / (self.dims[1] * self.dims[2]);
        [l, j, k]
    }

    /// Coordinates of node `i`; unused axes read as zero.
    pub fn coord(&self, i: usize) -> [f64; 3] {
        let m = self.multi_index(i);
        let mut p = [0.0; 3];
        for a in 0..self.ndim {
            p[a] = m[a] as f64 * self.spacing(a);
        }
        p
    }

    pub fn coords(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |i| self.coord(i))
    }

    /// Reduces a point into `[0, period)` on every active axis.
    pub fn wrap(&self, p: [f64; 3]) -> [f64; 3] {
        let mut q = p;
        for a in 0..self.ndim {
            let l = self.periods[a];
            let mut v = p[a].rem_euclid(l);
            if v >= l {
                v = 0.0;
            }
            q[a] = v;
        }
        q
    }

    /// Shortest signed representative of a coordinate difference.
    pub fn minimal_image(&self, d: [f64; 3]) -> [f64; 3] {
        let mut q = d;
        for a in 0..self.ndim {
            let l = self.periods[a];
            q[a] = d[a] - l * (d[a] / l).round();
        }
        q
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

const LEAF: usize = 256;

/// Four interleaved partial sums over one leaf; breaks the add latency chain
/// while keeping the summation order fixed.
#[inline(always)]
fn leaf(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
    let mut acc = [0.0; 4];
    let mut i = lo;
    while i + 4 <= hi {
        acc[0] += f(i);
        acc[1] += f(i + 1);
        acc[2] += f(i + 2);
        acc[3] += f(i + 3);
        i += 4;
    }
    while i < hi {
        acc[0] += f(i);
        i += 1;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Deterministic pairwise summation; the reduction tree depends only on the
/// length of the input.
pub fn fixed_sum(values: &[f64]) -> f64 {
    fixed_sum_by(values.len(), |i| values[i])
}

pub(crate) fn fixed_sum_by(n: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= LEAF {
            leaf(lo, hi, f)
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = grid.coords().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid, values)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self::from_vec_unchecked(self.grid, self.values.iter().map(|v| a * v).collect())
    }

    /// Average against the uniform reference volume.
    pub fn mean(&self) -> f64 {
        fixed_sum(&self.values) / self.values.len() as f64
    }

    /// Quadrature L2 norm against the uniform reference volume.
    pub fn l2_norm(&self) -> f64 {
        (fixed_sum_by(self.values.len(), |i| self.values[i] * self.values[i]) * self.grid.cell_volume()).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        fixed_sum_by(self.values.len(), |i| self.values[i].abs()) * self.grid.cell_volume()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Tangent field stored component-wise in the coordinate basis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.ndim() {
            return Err(Error::Shape(format!(
                "{} components on a {}-dimensional grid",
                components.len(),
                grid.ndim()
            )));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "component with {} values for {} nodes",
                    c.len(),
                    grid.len()
                )));
            }
            check_finite(c, "vector field")?;
        }
        Ok(Self { grid, components })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, components: Vec<Vec<f64>>) -> Self {
        Self { grid, components }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec_unchecked(grid, vec![vec![0.0; grid.len()]; grid.ndim()])
    }

    /// Samples a closed-form field; only the first `ndim` entries are used.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Self> {
        let mut comps = vec![Vec::with_capacity(grid.len()); grid.ndim()];
        for p in grid.coords() {
            let v = f(p);
            for (a, c) in comps.iter_mut().enumerate() {
                c.push(v[a]);
            }
        }
        Self::new(grid, comps)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn at(&self, node: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.components.iter().enumerate() {
            v[a] = c[node];
        }
        v
    }

    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        Self::new(self.grid, components)
    }

    pub fn scale(&self, a: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| c.iter().map(|v| a * v).collect())
            .collect();
        Self::from_vec_unchecked(self.grid, components)
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| self.components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        ScalarField::from_vec_unchecked(self.grid, values)
    }

    pub fn linf_norm(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A volume form `nu = ratio * mu` against the uniform reference volume `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: Grid,
    ratio: Vec<f64>,
}

impl Density {
    /// Wraps positive ratios as given, without normalizing the mass.
    pub fn from_ratio(grid: Grid, ratio: Vec<f64>) -> Result<Self> {
        if ratio.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} ratios for a grid of {} nodes",
                ratio.len(),
                grid.len()
            )));
        }
        for (node, &value) in ratio.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveDensity { node, value });
            }
        }
        Ok(Self { grid, ratio })
    }

    /// Positive ratios rescaled to unit total mass.
    pub fn normalized(grid: Grid, ratio: Vec<f64>) -> Result<Self> {
        Self::from_ratio(grid, ratio).map(|d| d.normalize())
    }

    pub fn from_field(field: &ScalarField) -> Result<Self> {
        Self::from_ratio(*field.grid(), field.values().to_vec())
    }

    pub fn uniform(grid: Grid) -> Self {
        Self {
            grid,
            ratio: vec![1.0 / grid.volume(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ratio(&self) -> &[f64] {
        &self.ratio
    }

    pub fn mass(&self) -> f64 {
        fixed_sum(&self.ratio) * self.grid.cell_volume()
    }

    pub fn normalize(self) -> Self {
        let m = self.mass();
        let grid = self.grid;
        Self {
            grid,
            ratio: self.ratio.into_iter().map(|r| r / m).collect(),
        }
    }

    pub fn is_uniform(&self) -> bool {
        let r0 = self.ratio[0];
        self.ratio.iter().all(|&r| r == r0)
    }

    pub fn as_field(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(self.grid, self.ratio.clone())
    }
}

/// Periodic quadrature of `f` against `nu`.
pub fn integrate(f: &ScalarField, nu: &Density) -> Result<f64> {
    f.grid.check_same(&nu.grid)?;
    Ok(fixed_sum_by(f.values.len(), |i| f.values[i] * nu.ratio[i]) * f.grid.cell_volume())
}

/// `nu`-weighted L2 pairing of two scalar fields.
pub fn inner(f: &ScalarField, g: &ScalarField, nu: &Density) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    f.grid.check_same(&nu.grid)?;
    Ok(fixed_sum_by(f.values.len(), |i| f.values[i] * g.values[i] * nu.ratio[i]) * f.grid.cell_volume())
}

/// `nu`-weighted L2 pairing of two tangent fields in the flat metric.
pub fn inner_vector(v: &VectorField, w: &VectorField, nu: &Density) -> Result<f64> {
    v.grid.check_same(&w.grid)?;
    v.grid.check_same(&nu.grid)?;
    let n = v.grid.ndim();
    Ok(fixed_sum_by(v.grid.len(), |i| {
        let mut s = 0.0;
        for a in 0..n {
            s += v.components[a][i] * w.components[a][i];
        }
        s * nu.ratio[i]
    }) * v.grid.cell_volume())
}

pub(crate) fn weighted_dot(a: &[f64], b: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => fixed_sum_by(a.len(), |i| a[i] * b[i] * w[i]),
        None => fixed_sum_by(a.len(), |i| a[i] * b[i]),
    }
}
