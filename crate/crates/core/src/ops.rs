//! Periodic finite differences.
//!
//! The divergence is not an independent stencil: it is the negative adjoint
//! of [`grad`] under the `nu`-weighted quadrature pairing,
//! `div_nu W = (1/ratio) * sum_a D_a(ratio * W_a)`, which is exact because the
//! central stencil matrix is antisymmetric. Every integration-by-parts
//! identity therefore holds to round-off.

use crate::error::Result;
use crate::grid::{Density, Grid, ScalarField, VectorField};

/// Writes `D_axis input` into `out`.
pub(crate) fn axis_derivative(grid: &Grid, axis: usize, input: &[f64], out: &mut [f64]) {
    let dims = grid.padded_dims();
    let n = dims[axis];
    let stride = grid.stride(axis);
    let coeffs = grid.stencil().coefficients();
    let m = coeffs.len();
    let inv_h = 1.0 / grid.spacing(axis);
    let block = n * stride;
    if stride == 1 {
        // Contiguous lines: copy into a padded buffer once per line.
        let mut line = vec![0.0; n + 2 * m];
        for (src, dst) in input.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            line[..m].copy_from_slice(&src[n - m..]);
            line[m..m + n].copy_from_slice(src);
            line[m + n..].copy_from_slice(&src[..m]);
            for (i, o) in dst.iter_mut().enumerate() {
                let c = i + m;
                let mut acc = 0.0;
                for (k, w) in coeffs.iter().enumerate() {
                    acc += w * (line[c + k + 1] - line[c - k - 1]);
                }
                *o = acc * inv_h;
            }
        }
        return;
    }
    // Strided axis: whole rows of length `stride` at a time.
    for (src, dst) in input.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
        for (i, row) in dst.chunks_exact_mut(stride).enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            for (k, &w) in coeffs.iter().enumerate() {
                let ip = (i + k + 1) % n;
                let im = (i + n - (k + 1) % n) % n;
                let plus = &src[ip * stride..(ip + 1) * stride];
                let minus = &src[im * stride..(im + 1) * stride];
                for ((o, a), b) in row.iter_mut().zip(plus).zip(minus) {
                    *o += w * (a - b);
                }
            }
            row.iter_mut().for_each(|v| *v *= inv_h);
        }
    }
}

pub(crate) fn grad_raw(grid: &Grid, u: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.ndim())
        .map(|a| {
            let mut d = vec![0.0; u.len()];
            axis_derivative(grid, a, u, &mut d);
            d
        })
        .collect()
}

/// Sum of axis derivatives, optionally weighted: `(1/w) sum_a D_a(w W_a)`.
pub(crate) fn divergence_raw(grid: &Grid, w: &[Vec<f64>], weight: Option<&[f64]>) -> Vec<f64> {
    let len = grid.len();
    let mut out = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut scaled = vec![0.0; len];
    for (a, comp) in w.iter().enumerate() {
        let src: &[f64] = match weight {
            Some(r) => {
                for i in 0..len {
                    scaled[i] = r[i] * comp[i];
                }
                &scaled
            }
            None => comp,
        };
        axis_derivative(grid, a, src, &mut tmp);
        for i in 0..len {
            out[i] += tmp[i];
        }
    }
    if let Some(r) = weight {
        for i in 0..len {
            out[i] /= r[i];
        }
    }
    out
}

pub fn grad(u: &ScalarField) -> VectorField {
    VectorField::from_vec_unchecked(*u.grid(), grad_raw(u.grid(), u.values()))
}

/// `div_nu W`, the negative `nu`-adjoint of [`grad`].
pub fn divergence(w: &VectorField, nu: &Density) -> Result<ScalarField> {
    w.grid().check_same(nu.grid())?;
    let weight = if nu.is_uniform() { None } else { Some(nu.ratio()) };
    Ok(ScalarField::from_vec_unchecked(
        *w.grid(),
        divergence_raw(w.grid(), w.components(), weight),
    ))
}

/// Divergence against the uniform reference volume.
pub fn divergence_flat(w: &VectorField) -> ScalarField {
    ScalarField::from_vec_unchecked(*w.grid(), divergence_raw(w.grid(), w.components(), None))
}

/// Derivative of `v` along `x`: `(x . grad) v`, componentwise.
pub fn directional_derivative(x: &VectorField, v: &VectorField) -> Result<VectorField> {
    x.grid().check_same(v.grid())?;
    let grid = *x.grid();
    let len = grid.len();
    let mut out = vec![vec![0.0; len]; grid.ndim()];
    let mut d = vec![0.0; len];
    for (b, comp) in v.components().iter().enumerate() {
        for a in 0..grid.ndim() {
            axis_derivative(&grid, a, comp, &mut d);
            let xa = x.component(a);
            for i in 0..len {
                out[b][i] += xa[i] * d[i];
            }
        }
    }
    Ok(VectorField::from_vec_unchecked(grid, out))
}
