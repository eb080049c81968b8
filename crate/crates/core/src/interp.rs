//! Periodic tensor-product interpolation of grid samples at arbitrary points.

use crate::grid::Grid;

/// Interpolation kernel for off-grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Multilinear (cloud-in-cell) weights; second order.
    Linear,
    /// Four-point Lagrange weights per axis; fourth order.
    #[default]
    Cubic,
    /// Six-point Lagrange weights per axis; sixth order.
    Quintic,
}

impl Interpolation {
    fn width(self) -> usize {
        match self {
            Interpolation::Linear => 2,
            Interpolation::Cubic => 4,
            Interpolation::Quintic => 6,
        }
    }
}

/// Precomputed weights for one evaluation point, reusable across fields.
#[derive(Debug, Clone)]
pub struct Sampler {
    width: [usize; 3],
    offsets: [[usize; 6]; 3],
    weights: [[f64; 6]; 3],
    dweights: [[f64; 6]; 3],
}

/// Lagrange weights and their derivatives for nodes `1 - m/2 ..= m/2`.
fn lagrange_weights(t: f64, m: usize) -> ([f64; 6], [f64; 6]) {
    let first = 1.0 - (m / 2) as f64;
    let node = |k: usize| first + k as f64;
    let mut w = [0.0; 6];
    let mut dw = [0.0; 6];
    for k in 0..m {
        let mut denom = 1.0;
        for j in (0..m).filter(|&j| j != k) {
            denom *= node(k) - node(j);
        }
        let mut prod = 1.0;
        for j in (0..m).filter(|&j| j != k) {
            prod *= t - node(j);
        }
        let mut deriv = 0.0;
        for l in (0..m).filter(|&l| l != k) {
            let mut p = 1.0;
            for j in (0..m).filter(|&j| j != k && j != l) {
                p *= t - node(j);
            }
            deriv += p;
        }
        w[k] = prod / denom;
        dw[k] = deriv / denom;
    }
    (w, dw)
}

fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let dw = [
        -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
        (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
        (3.0 * t * t - 1.0) / 6.0,
    ];
    (w, dw)
}

impl Sampler {
    pub fn new(grid: &Grid, kernel: Interpolation, p: [f64; 3]) -> Self {
        let dims = grid.padded_dims();
        let periods = grid.padded_periods();
        let width = kernel.width();
        let mut s = Sampler {
            width: [1; 3],
            offsets: [[0; 6]; 3],
            weights: [[0.0; 6]; 3],
            dweights: [[0.0; 6]; 3],
        };
        let mut stride = 1;
        for a in (0..3).rev() {
            let n = dims[a];
            if a >= grid.ndim() {
                s.weights[a][0] = 1.0;
                stride *= n;
                continue;
            }
            let inv_h = n as f64 / periods[a];
            let s_a = p[a] * inv_h;
            let base = s_a.floor();
            let t = s_a - base;
            let base = (base as i64).rem_euclid(n as i64) as usize;
            s.width[a] = width;
            let back = width / 2 - 1;
            let mut idx = (base + n - back) % n;
            for k in 0..width {
                s.offsets[a][k] = idx * stride;
                idx += 1;
                if idx == n {
                    idx = 0;
                }
            }
            match kernel {
                Interpolation::Linear => {
                    s.weights[a][0] = 1.0 - t;
                    s.weights[a][1] = t;
                    s.dweights[a][0] = -inv_h;
                    s.dweights[a][1] = inv_h;
                }
                Interpolation::Cubic => {
                    let (w, dw) = cubic_weights(t);
                    for k in 0..4 {
                        s.weights[a][k] = w[k];
                        s.dweights[a][k] = dw[k] * inv_h;
                    }
                }
                Interpolation::Quintic => {
                    let (w, dw) = lagrange_weights(t, 6);
                    for k in 0..6 {
                        s.weights[a][k] = w[k];
                        s.dweights[a][k] = dw[k] * inv_h;
                    }
                }
            }
            stride *= n;
        }
        s
    }

    pub fn value(&self, values: &[f64]) -> f64 {
        if self.width[0] == 4 {
            return self.values([values])[0];
        }
        let mut acc = 0.0;
        for i in 0..self.width[0] {
            let oi = self.offsets[0][i];
            let wi = self.weights[0][i];
            let mut acc_j = 0.0;
            for j in 0..self.width[1] {
                let oj = oi + self.offsets[1][j];
                let mut acc_k = 0.0;
                for k in 0..self.width[2] {
                    acc_k += self.weights[2][k] * values[oj + self.offsets[2][k]];
                }
                acc_j += self.weights[1][j] * acc_k;
            }
            acc += wi * acc_j;
        }
        acc
    }

    /// Several fields at once, sharing the weight products.
    pub fn values<const N: usize>(&self, fields: [&[f64]; N]) -> [f64; N] {
        match self.width {
            [4, 4, 4] => self.values_fixed::<N, 4, 4>(fields),
            [4, 4, 1] => self.values_fixed::<N, 4, 1>(fields),
            [2, 2, 2] => self.values_fixed::<N, 2, 2>(fields),
            [2, 2, 1] => self.values_fixed::<N, 2, 1>(fields),
            _ => {
                let mut acc = [0.0; N];
                self.for_each_weight(|o, w| {
                    for (a, f) in acc.iter_mut().zip(&fields) {
                        *a += w * f[o];
                    }
                });
                acc
            }
        }
    }

    /// Interpolates node-interleaved records, `N` values per node.
    pub fn packed<const N: usize>(&self, records: &[[f64; N]]) -> [f64; N] {
        let mut acc = [0.0; N];
        if self.width == [4, 4, 4] {
            for i in 0..4 {
                let (oi, wi) = (self.offsets[0][i], self.weights[0][i]);
                for j in 0..4 {
                    let oj = oi + self.offsets[1][j];
                    let wj = wi * self.weights[1][j];
                    let mut line = [0.0; N];
                    for k in 0..4 {
                        let r = &records[oj + self.offsets[2][k]];
                        let wk = self.weights[2][k];
                        for a in 0..N {
                            line[a] += wk * r[a];
                        }
                    }
                    for a in 0..N {
                        acc[a] += wj * line[a];
                    }
                }
            }
        } else {
            self.for_each_weight(|o, w| {
                for a in 0..N {
                    acc[a] += w * records[o][a];
                }
            });
        }
        acc
    }

    #[inline(always)]
    fn values_fixed<const N: usize, const W: usize, const WZ: usize>(&self, fields: [&[f64]; N]) -> [f64; N] {
        let mut acc = [0.0; N];
        for i in 0..W {
            let (oi, wi) = (self.offsets[0][i], self.weights[0][i]);
            for j in 0..W {
                let oj = oi + self.offsets[1][j];
                let wj = wi * self.weights[1][j];
                let mut line = [0.0; N];
                for k in 0..WZ {
                    let o = oj + self.offsets[2][k];
                    let wk = self.weights[2][k];
                    for a in 0..N {
                        line[a] += wk * fields[a][o];
                    }
                }
                for a in 0..N {
                    acc[a] += wj * line[a];
                }
            }
        }
        acc
    }

    /// Interpolated value and its gradient (derivative of the interpolant).
    pub fn value_and_gradient(&self, values: &[f64], ndim: usize) -> (f64, [f64; 3]) {
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for i in 0..self.width[0] {
            let oi = self.offsets[0][i];
            for j in 0..self.width[1] {
                let oj = oi + self.offsets[1][j];
                for k in 0..self.width[2] {
                    let f = values[oj + self.offsets[2][k]];
                    let (wi, wj, wk) = (self.weights[0][i], self.weights[1][j], self.weights[2][k]);
                    v += wi * wj * wk * f;
                    g[0] += self.dweights[0][i] * wj * wk * f;
                    g[1] += wi * self.dweights[1][j] * wk * f;
                    if ndim == 3 {
                        g[2] += wi * wj * self.dweights[2][k] * f;
                    }
                }
            }
        }
        (v, g)
    }

    /// Per-node weights of this sampler, for scatter operations.
    pub fn for_each_weight(&self, mut f: impl FnMut(usize, f64)) {
        for i in 0..self.width[0] {
            for j in 0..self.width[1] {
                for k in 0..self.width[2] {
                    f(
                        self.offsets[0][i] + self.offsets[1][j] + self.offsets[2][k],
                        self.weights[0][i] * self.weights[1][j] * self.weights[2][k],
                    );
                }
            }
        }
    }
}

pub fn interpolate(grid: &Grid, kernel: Interpolation, values: &[f64], p: [f64; 3]) -> f64 {
    Sampler::new(grid, kernel, p).value(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample(g: &Grid, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        g.coords().map(f).collect()
    }

    #[test]
    fn reproduces_nodes_and_wraps() {
        let g = Grid::new(&[8, 6, 5], &[1.0, 2.0, 1.0]).unwrap();
        let v = sample(&g, |p| p[0] + 10.0 * p[1] + 100.0 * p[2]);
        for kernel in [Interpolation::Linear, Interpolation::Cubic, Interpolation::Quintic] {
            for i in [0, 17, 101, g.len() - 1] {
                let p = g.coord(i);
                assert!((interpolate(&g, kernel, &v, p) - v[i]).abs() < 1e-12);
                let shifted = [p[0] + 3.0, p[1] - 4.0, p[2] + 1.0];
                assert!((interpolate(&g, kernel, &v, shifted) - v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn orders_of_accuracy() {
        let f = |p: [f64; 3]| (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos();
        let err = |n: usize, kernel| {
            let g = Grid::cube(n, 2).unwrap();
            let v = sample(&g, f);
            (0..50)
                .map(|k| {
                    let p = [0.0137 * k as f64, 0.311 + 0.023 * k as f64, 0.0];
                    (interpolate(&g, kernel, &v, p) - f(p)).abs()
                })
                .fold(0.0, f64::max)
        };
        let lin = (err(16, Interpolation::Linear) / err(32, Interpolation::Linear)).log2();
        let cub = (err(16, Interpolation::Cubic) / err(32, Interpolation::Cubic)).log2();
        let quin = (err(16, Interpolation::Quintic) / err(32, Interpolation::Quintic)).log2();
        assert!((lin - 2.0).abs() < 0.3, "{lin}");
        assert!((cub - 4.0).abs() < 0.4, "{cub}");
        assert!((quin - 6.0).abs() < 0.5, "{quin}");
    }

    #[test]
    fn gradient_of_interpolant() {
        let g = Grid::cube(32, 3).unwrap();
        let f = |p: [f64; 3]| (2.0 * PI * p[0]).sin() + (2.0 * PI * p[2]).cos();
        let v = sample(&g, f);
        let p = [0.123, 0.456, 0.789];
        let (val, grad) = Sampler::new(&g, Interpolation::Cubic, p).value_and_gradient(&v, 3);
        assert!((val - f(p)).abs() < 1e-4);
        assert!((grad[0] - 2.0 * PI * (2.0 * PI * p[0]).cos()).abs() < 1e-2);
        assert!(grad[1].abs() < 1e-12);
        assert!((grad[2] + 2.0 * PI * (2.0 * PI * p[2]).sin()).abs() < 1e-2);
    }

    #[test]
    fn general_weights_match_closed_form_cubic() {
        for t in [0.0, 0.25, 0.5, 0.9] {
            let (w, dw) = cubic_weights(t);
            let (g, dg) = lagrange_weights(t, 4);
            for k in 0..4 {
                assert!((w[k] - g[k]).abs() < 1e-15 && (dw[k] - dg[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weights_partition_unity() {
        let g = Grid::cube(8, 3).unwrap();
        for kernel in [Interpolation::Linear, Interpolation::Cubic, Interpolation::Quintic] {
            let mut s = 0.0;
            Sampler::new(&g, kernel, [0.31, 0.77, 0.05]).for_each_weight(|_, w| s += w);
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
