//! Chebyshev collocation on the parity-folded radial interval.
//!
//! The full Chebyshev–Gauss–Lobatto grid on `[-1, 1]` has an odd number of
//! intervals, so no node sits at the center. A function of definite parity
//! is stored on the `M` positive nodes only and unfolded when
//! differentiating.

use nalgebra::DMatrix;

/// Full CGL nodes `cos(jπ/N)`, `j = 0..=N` (descending).
pub fn cgl_nodes(n: usize) -> Vec<f64> {
    (0..=n).map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos()).collect()
}

/// Collocation differentiation matrix on the full CGL grid.
pub fn cheb_diff(n: usize) -> DMatrix<f64> {
    let x = cgl_nodes(n);
    let c = |j: usize| {
        let base = if j == 0 || j == n { 2.0 } else { 1.0 };
        if j.is_multiple_of(2) {
            base
        } else {
            -base
        }
    };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    // negative-sum trick keeps rows exactly annihilating constants
    for i in 0..=n {
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Clenshaw–Curtis weights on the full CGL grid.
pub fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let mut w = vec![0.0; n + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = pi * j as f64 / n as f64;
        let mut s = 1.0;
        for k in 1..=n / 2 {
            let b = if 2 * k == n { 1.0 } else { 2.0 };
            s -= b * (2.0 * k as f64 * theta).cos() / (4.0 * (k * k) as f64 - 1.0);
        }
        let c = if j == 0 || j == n { 1.0 } else { 2.0 };
        *wj = c * s / n as f64;
    }
    w
}

/// Parity-folded radial collocation data.
///
/// Half nodes are stored in ascending order `0 < r_0 < ... < r_{M-1} = 1`.
#[derive(Debug, Clone)]
pub struct FoldedGrid {
    pub m: usize,
    pub r: Vec<f64>,
    /// `d/dr` restricted to the half grid, indexed by input parity.
    pub dr: [DMatrix<f64>; 2],
    /// `d/ds = ((1 - r^2)/2) d/dr`, indexed by input parity.
    pub ds: [DMatrix<f64>; 2],
    /// Clenshaw–Curtis weights folded onto the half grid (`∫_0^1`).
    pub cc: Vec<f64>,
}

impl FoldedGrid {
    pub fn new(m: usize) -> Self {
        let n = 2 * m - 1;
        let x = cgl_nodes(n);
        let d = cheb_diff(n);
        let w = clenshaw_curtis(n);
        // half index i  <->  full index m-1-i (positive side)
        let full = |i: usize| m - 1 - i;
        let r: Vec<f64> = (0..m).map(|i| x[full(i)]).collect();
        let build = |p: usize| {
            let sign = if p.is_multiple_of(2) { 1.0 } else { -1.0 };
            DMatrix::from_fn(m, m, |i, k| {
                let row = full(i);
                let jp = full(k);
                let jm = n - jp;
                d[(row, jp)] + sign * d[(row, jm)]
            })
        };
        let dr = [build(0), build(1)];
        let stretch = |mat: &DMatrix<f64>| {
            let mut out = mat.clone();
            for i in 0..m {
                let f = 0.5 * (1.0 - r[i] * r[i]);
                for k in 0..m {
                    out[(i, k)] *= f;
                }
            }
            out
        };
        let ds = [stretch(&dr[0]), stretch(&dr[1])];
        let cc = (0..m).map(|i| w[full(i)]).collect();
        FoldedGrid { m, r, dr, ds, cc }
    }

    /// Apply `(d/ds)^j` to a field of parity `p`.
    pub fn ds_pow(&self, p: usize, j: usize, u: &[f64]) -> Vec<f64> {
        let mut v = nalgebra::DVector::from_column_slice(u);
        for k in 0..j {
            v = &self.ds[(p + k) % 2] * v;
        }
        v.as_slice().to_vec()
    }

    /// Matrix of `(d/ds)^j` acting on parity `p`.
    pub fn ds_pow_matrix(&self, p: usize, j: usize) -> DMatrix<f64> {
        let mut out = DMatrix::identity(self.m, self.m);
        for k in 0..j {
            out = &self.ds[(p + k) % 2] * out;
        }
        out
    }

    /// Evaluate the parity-`p` interpolant of `u` at an arbitrary `t ∈ [0, 1]`.
    pub fn interpolate(&self, p: usize, u: &[f64], t: f64) -> f64 {
        // barycentric formula on the full grid
        let m = self.m;
        let n = 2 * m - 1;
        let x = cgl_nodes(n);
        let sign = if p.is_multiple_of(2) { 1.0 } else { -1.0 };
        let val = |j: usize| {
            if j < m {
                u[m - 1 - j]
            } else {
                sign * u[j - m]
            }
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..=n {
            let diff = t - x[j];
            if diff.abs() < 1e-15 {
                return val(j);
            }
            let mut wj = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                wj *= 0.5;
            }
            num += wj / diff * val(j);
            den += wj / diff;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cc_integrates_polynomials() {
        let w = clenshaw_curtis(31);
        let x = cgl_nodes(31);
        let s: f64 = w.iter().zip(&x).map(|(w, x)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn folded_derivative_of_odd_and_even() {
        let g = FoldedGrid::new(16);
        let u: Vec<f64> = g.r.iter().map(|r| r.powi(4)).collect();
        let du = &g.dr[0] * nalgebra::DVector::from_vec(u);
        for (i, r) in g.r.iter().enumerate() {
            assert!((du[i] - 4.0 * r.powi(3)).abs() < 1e-11);
        }
        let v: Vec<f64> = g.r.iter().map(|r| r.powi(3)).collect();
        let dv = &g.dr[1] * nalgebra::DVector::from_vec(v);
        for (i, r) in g.r.iter().enumerate() {
            assert!((dv[i] - 3.0 * r * r).abs() < 1e-11);
        }
    }

    #[test]
    fn interpolation_reproduces_parity_polynomial() {
        let g = FoldedGrid::new(12);
        let u: Vec<f64> = g.r.iter().map(|r| r.powi(5) - r).collect();
        let t: f64 = 0.37;
        assert!((g.interpolate(1, &u, t) - (t.powi(5) - t)).abs() < 1e-13);
    }
}
