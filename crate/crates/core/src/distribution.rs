//! Horizontal distributions given by a frame of closed-form vector fields.
//!
//! The subriemannian metric is the one in which the frame `X_1..X_k` is
//! orthonormal, so the horizontal gradient is the frame sum
//! `sum_i (X_i . grad u) X_i`. [`project_tau`] is the orthogonal projection
//! onto `span{X_i}` in the flat coordinate metric; the two agree exactly when
//! the frame is orthonormal in that metric.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::ops;

/// A vector field with closed-form coefficients in the coordinate basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicField {
    components: Vec<Expr>,
}

impl SymbolicField {
    pub fn new(components: Vec<Expr>) -> Self {
        Self { components }
    }

    pub fn parse<S: AsRef<str>>(components: &[S]) -> Result<Self> {
        components
            .iter()
            .map(|c| Expr::parse(c.as_ref()))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    /// The coordinate field `d/dx_axis` in `ndim` dimensions.
    pub fn coordinate(axis: usize, ndim: usize) -> Self {
        Self::new(
            (0..ndim)
                .map(|a| Expr::constant(if a == axis { 1.0 } else { 0.0 }))
                .collect(),
        )
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn ndim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, p: [f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (a, c) in self.components.iter().enumerate() {
            v[a] = c.eval(p);
        }
        v
    }

    pub fn is_constant(&self) -> bool {
        self.components.iter().all(|c| c.as_const().is_some())
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Expr::is_zero)
    }

    /// `d/dx_axis` of every coefficient.
    pub fn partial(&self, axis: usize) -> SymbolicField {
        Self::new(self.components.iter().map(|c| c.derivative(axis)).collect())
    }

    /// Lie bracket `[self, other] = (self . grad) other - (other . grad) self`.
    pub fn bracket(&self, other: &SymbolicField) -> SymbolicField {
        let n = self.ndim();
        let comps = (0..n)
            .map(|a| {
                let mut acc = Expr::constant(0.0);
                for b in 0..n {
                    acc = expr::add(
                        acc,
                        expr::mul(self.components[b].clone(), other.components[a].derivative(b)),
                    );
                    acc = expr::sub(
                        acc,
                        expr::mul(other.components[b].clone(), self.components[a].derivative(b)),
                    );
                }
                acc
            })
            .collect();
        Self::new(comps)
    }

    pub fn sample(&self, grid: &Grid) -> Result<VectorField> {
        let comps = self
            .components
            .iter()
            .map(|c| c.sample(grid).map(ScalarField::into_values))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(*grid, comps)
    }
}

/// Frame values and first partials `d_a X_i^b` at one point.
#[derive(Debug, Clone, Copy)]
pub struct FrameJet {
    pub rank: usize,
    pub values: [[f64; 3]; 3],
    /// `partials[i][a][b] = d X_i^b / d x_a`
    pub partials: [[[f64; 3]; 3]; 3],
}

#[derive(Debug, Clone)]
pub struct Frame {
    grid: Grid,
    name: String,
    fields: Vec<SymbolicField>,
    partials: Vec<Vec<SymbolicField>>,
    samples: Vec<VectorField>,
    /// Per-node `sum_i X_i X_i^T`, upper triangle `xx, xy, xz, yy, yz, zz`.
    frame_metric: Vec<[f64; 6]>,
    /// Per-node orthogonal projector onto `span{X_i}`, same layout.
    projector: Vec<[f64; 6]>,
    flat: bool,
}

pub const GRAM_DET_MIN: f64 = 1e-10;

fn sym_index(a: usize, b: usize) -> usize {
    const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    IDX[a][b]
}

fn sym_apply(m: &[f64; 6], v: [f64; 3], n: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for a in 0..n {
        for b in 0..n {
            out[a] += m[sym_index(a, b)] * v[b];
        }
    }
    out
}

impl Frame {
    pub fn new(grid: Grid, name: impl Into<String>, fields: Vec<SymbolicField>) -> Result<Self> {
        let n = grid.ndim();
        let k = fields.len();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "a frame on a {n}-dimensional grid needs 1..={n} fields, got {k}"
            )));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.ndim() != n {
                return Err(Error::InvalidArgument(format!(
                    "frame field {i} has {} components, expected {n}",
                    f.ndim()
                )));
            }
            if let Some(c) = f.components().iter().find(|c| c.arity() > n) {
                return Err(Error::InvalidArgument(format!(
                    "frame field {i} coefficient `{c}` uses a coordinate beyond axis {n}"
                )));
            }
        }
        let samples = fields.iter().map(|f| f.sample(&grid)).collect::<Result<Vec<_>>>()?;
        let partials = fields.iter().map(|f| (0..n).map(|a| f.partial(a)).collect()).collect();

        let mut frame_metric = Vec::with_capacity(grid.len());
        let mut projector = Vec::with_capacity(grid.len());
        for node in 0..grid.len() {
            let x = DMatrix::from_fn(n, k, |a, i| samples[i].component(a)[node]);
            let gram = x.transpose() * &x;
            let det = gram.determinant();
            if !(det > GRAM_DET_MIN) {
                return Err(Error::DegenerateFrame { node, gram_det: det });
            }
            let inv = gram
                .try_inverse()
                .ok_or(Error::DegenerateFrame { node, gram_det: det })?;
            let p = &x * inv * x.transpose();
            let g = &x * x.transpose();
            let mut pm = [0.0; 6];
            let mut gm = [0.0; 6];
            for a in 0..n {
                for b in a..n {
                    pm[sym_index(a, b)] = 0.5 * (p[(a, b)] + p[(b, a)]);
                    gm[sym_index(a, b)] = g[(a, b)];
                }
            }
            projector.push(pm);
            frame_metric.push(gm);
        }
        let flat = Self::detect_flat(&grid, &fields);
        Ok(Self {
            grid,
            name: name.into(),
            flat,
            fields,
            partials,
            samples,
            frame_metric,
            projector,
        })
    }

    /// Coordinate fields `{d/dx, d/dy[, d/dz]}`; recovers the full tangent bundle.
    pub fn flat(grid: Grid) -> Result<Self> {
        let n = grid.ndim();
        Self::new(grid, "flat", (0..n).map(|a| SymbolicField::coordinate(a, n)).collect())
    }

    /// `{d/dx, d/dy + sin(2 pi x / L_x) d/dz}` on a 3-torus; step 3 where
    /// `cos` vanishes, step 2 elsewhere.
    pub fn sin_heisenberg(grid: Grid) -> Result<Self> {
        if grid.ndim() != 3 {
            return Err(Error::InvalidArgument(
                "the sin-Heisenberg frame lives on a 3-torus".into(),
            ));
        }
        let lx = grid.periods()[0];
        let s = SymbolicField::parse(&["0", "1", &format!("sin(2*pi*x/{lx})")])?;
        Self::new(grid, "sin-heisenberg", vec![SymbolicField::coordinate(0, 3), s])
    }

    pub fn builtin(name: &str, grid: Grid) -> Result<Self> {
        match name {
            "flat" => Self::flat(grid),
            "sin-heisenberg" => Self::sin_heisenberg(grid),
            other => Err(Error::InvalidArgument(format!(
                "unknown builtin frame `{other}` (expected `flat` or `sin-heisenberg`)"
            ))),
        }
    }

    /// Frame from coefficient expressions, one inner list per field.
    pub fn from_expressions<S: AsRef<str>>(grid: Grid, fields: &[Vec<S>]) -> Result<Self> {
        let fields = fields
            .iter()
            .map(|f| SymbolicField::parse(f))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, "custom", fields)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[SymbolicField] {
        &self.fields
    }

    pub fn samples(&self) -> &[VectorField] {
        &self.samples
    }

    /// True when the frame is the constant coordinate frame of full rank.
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    fn detect_flat(grid: &Grid, fields: &[SymbolicField]) -> bool {
        let n = grid.ndim();
        fields.len() == n
            && fields.iter().enumerate().all(|(i, f)| {
                f.components()
                    .iter()
                    .enumerate()
                    .all(|(a, c)| c.as_const() == Some(if a == i { 1.0 } else { 0.0 }))
            })
    }

    pub(crate) fn frame_metric(&self) -> &[[f64; 6]] {
        &self.frame_metric
    }

    pub(crate) fn projector(&self) -> &[[f64; 6]] {
        &self.projector
    }

    /// Exact evaluation of the frame fields at a point.
    pub fn values_at(&self, q: [f64; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (o, f) in out.iter_mut().zip(&self.fields) {
            *o = f.eval(q);
        }
        out
    }

    /// Exact evaluation of the frame and its first partials at a point.
    pub fn jet(&self, q: [f64; 3]) -> FrameJet {
        let n = self.grid.ndim();
        let mut jet = FrameJet {
            rank: self.rank(),
            values: [[0.0; 3]; 3],
            partials: [[[0.0; 3]; 3]; 3],
        };
        for (i, f) in self.fields.iter().enumerate() {
            jet.values[i] = f.eval(q);
            for a in 0..n {
                jet.partials[i][a] = self.partials[i][a].eval(q);
            }
        }
        jet
    }

    /// The symbolic brackets of the frame, grouped by depth `1..=max_depth`.
    pub fn bracket_tower(&self, max_depth: usize) -> Vec<Vec<SymbolicField>> {
        let mut levels: Vec<Vec<SymbolicField>> = vec![self.fields.clone()];
        for depth in 1..max_depth {
            let prev = levels.last().unwrap();
            let mut next = Vec::new();
            for (i, x) in self.fields.iter().enumerate() {
                for (j, b) in prev.iter().enumerate() {
                    // [X_j, X_i] = -[X_i, X_j] adds nothing.
                    if depth == 1 && j <= i {
                        continue;
                    }
                    let c = x.bracket(b);
                    if !c.is_zero() && !next.contains(&c) {
                        next.push(c);
                    }
                }
            }
            levels.push(next);
        }
        levels
    }

    /// Growth vector at a single point, computed from the symbolic brackets.
    pub fn growth_at(&self, q: [f64; 3], max_depth: usize) -> Vec<usize> {
        growth_from_tower(&self.bracket_tower(max_depth), q, self.grid.ndim())
    }
}

pub const RANK_THRESHOLD: f64 = 1e-8;

fn numerical_rank(cols: &[[f64; 3]], n: usize) -> usize {
    if cols.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(n, cols.len(), |a, j| cols[j][a]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_THRESHOLD * smax).count()
}

fn growth_from_tower(tower: &[Vec<SymbolicField>], q: [f64; 3], n: usize) -> Vec<usize> {
    let mut cols: Vec<[f64; 3]> = Vec::new();
    let mut growth = Vec::new();
    for level in tower {
        cols.extend(level.iter().map(|f| f.eval(q)));
        let r = numerical_rank(&cols, n);
        growth.push(r);
        if r == n {
            break;
        }
    }
    growth
}

/// Per-node growth vectors of the bracket flag of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub growth: Vec<Vec<usize>>,
    /// Deepest bracket level needed at any node, if full rank is reached everywhere.
    pub max_depth_needed: Option<usize>,
    pub bracket_generating: bool,
}

impl GrowthReport {
    pub fn at(&self, node: usize) -> &[usize] {
        &self.growth[node]
    }
}

pub fn check_bracket_generating(frame: &Frame, max_depth: usize) -> Result<GrowthReport> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let n = frame.grid.ndim();
    let tower = frame.bracket_tower(max_depth);
    let growth: Vec<Vec<usize>> = frame.grid.coords().map(|q| growth_from_tower(&tower, q, n)).collect();
    let bracket_generating = growth.iter().all(|g| g.last() == Some(&n));
    let max_depth_needed = if bracket_generating {
        growth.iter().map(Vec::len).max()
    } else {
        None
    };
    Ok(GrowthReport {
        growth,
        max_depth_needed,
        bracket_generating,
    })
}

/// Orthogonal projection `P^tau W` in the flat ambient metric.
pub fn project_tau(w: &VectorField, frame: &Frame) -> Result<VectorField> {
    w.grid().check_same(&frame.grid)?;
    Ok(apply_tensor(w, &frame.projector))
}

fn apply_tensor(w: &VectorField, tensor: &[[f64; 6]]) -> VectorField {
    let grid = *w.grid();
    let n = grid.ndim();
    let mut out = vec![vec![0.0; grid.len()]; n];
    for (node, m) in tensor.iter().enumerate() {
        let v = sym_apply(m, w.at(node), n);
        for a in 0..n {
            out[a][node] = v[a];
        }
    }
    VectorField::from_vec_unchecked(grid, out)
}

/// Horizontal gradient `sum_i (X_i . grad u) X_i`.
pub fn horizontal_gradient(u: &ScalarField, frame: &Frame) -> Result<VectorField> {
    u.grid().check_same(&frame.grid)?;
    Ok(apply_tensor(&ops::grad(u), &frame.frame_metric))
}

/// Projection-based horizontal gradient `P^tau grad u`.
pub fn projected_gradient(u: &ScalarField, frame: &Frame) -> Result<VectorField> {
    project_tau(&ops::grad(u), frame)
}

/// Lie bracket of two sampled fields with derivatives from the grid stencil.
pub fn bracket(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    let xy = ops::directional_derivative(x, y)?;
    let yx = ops::directional_derivative(y, x)?;
    xy.combine(1.0, &yx, -1.0)
}

/// Largest pointwise norm of `W - P^tau W`.
pub fn horizontality_residual(w: &VectorField, frame: &Frame) -> Result<f64> {
    let p = project_tau(w, frame)?;
    Ok(w.combine(1.0, &p, -1.0)?.linf_norm())
}
