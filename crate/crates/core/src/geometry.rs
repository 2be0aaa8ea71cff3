//! The hyperbolic ball in collar form.
//!
//! With Euclidean radius `r` and geodesic distance `s = 2 artanh r` the metric
//! is `ds² + sinh²(s) g_S`. Two boundary defining functions are carried:
//! `rho = (1 - r²)/2`, which is smooth and even on the closed ball and is
//! used for every weight, and the special function
//! `rho_collar = (1 - r)/(2(1 + r)) = e^{-s}/2`, for which `|dρ|_{ρ²g} = 1`
//! holds identically and in terms of which the collar derivative
//! `ρ∂ρ = -∂_s` is written.

use crate::error::{Error, Result};
use crate::fields::ZeroForm;
use crate::spectral::FoldedGrid;
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;

/// Symbolic names of the orthonormal 0-coframe.
pub const COLLAR_FRAME: [&str; 2] = ["drho/rho", "tangential coframe/rho"];

#[derive(Debug, Clone)]
pub struct Geometry {
    pub n: usize,
    pub grid: FoldedGrid,
    /// Strictly increasing radial nodes, last one equal to 1.
    pub r: Vec<f64>,
    /// `(1 - r²)/2`.
    pub rho: Vec<f64>,
    /// Special bdf `(1 - r)/(2(1 + r))`.
    pub rho_collar: Vec<f64>,
    /// `1/sinh s`, zero at the boundary node.
    pub inv_sinh: Vec<f64>,
    /// `coth s`.
    pub coth: Vec<f64>,
    /// `rho_collar · sinh s = r/(1 + r)²`.
    pub rho_sinh: Vec<f64>,
    /// Radial weights for `∫ f dVol_g` per unit sphere measure; zero at the
    /// boundary node where the volume density is infinite.
    pub quad_weights: Vec<f64>,
    /// Radial weights of the bare `∫_0^1 f dr` for integrands of parity
    /// `[even, odd]`.
    pub radial_weights: [Vec<f64>; 2],
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormSpec {
    pub delta: f64,
    pub p: NormKind,
    pub derivative_order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    Sup,
}

impl WeightedNormSpec {
    pub fn sup(delta: f64) -> Self {
        WeightedNormSpec { delta, p: NormKind::Sup, derivative_order: 0 }
    }
    pub fn l2(delta: f64) -> Self {
        WeightedNormSpec { delta, p: NormKind::L2, derivative_order: 0 }
    }
}

/// Interpolatory weights for `∫_0^1 r G(r²) dr` on the half grid.
fn odd_weights(r: &[f64]) -> Vec<f64> {
    let m = r.len();
    let tau: Vec<f64> = r.iter().map(|x| 2.0 * x * x - 1.0).collect();
    let a = DMatrix::from_fn(m, m, |k, i| (k as f64 * tau[i].clamp(-1.0, 1.0).acos()).cos());
    let b = DVector::from_fn(m, |k, _| if k % 2 == 1 { 0.0 } else { 2.0 / (1.0 - (k * k) as f64) });
    let v = a.lu().solve(&b).expect("cosine moment matrix is nonsingular");
    (0..m).map(|i| v[i] / (4.0 * r[i])).collect()
}

pub fn build_geometry(n: usize, grid_points: usize, epsilon: f64) -> Result<Geometry> {
    if n < 3 {
        return Err(Error::DimensionTooLow(n));
    }
    if grid_points < 8 {
        return Err(Error::BadGrid(format!("need at least 8 nodes, got {grid_points}")));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::BadGrid(format!("collar width {epsilon} outside (0, 1/2]")));
    }
    let grid = FoldedGrid::new(grid_points);
    let r = grid.r.clone();
    if r.windows(2).any(|w| w[1] <= w[0]) || r[0] <= 0.0 {
        return Err(Error::BadGrid("nodes not strictly increasing".into()));
    }
    let m = r.len();
    let last = m - 1;
    let rho: Vec<f64> = r.iter().enumerate().map(|(i, x)| if i == last { 0.0 } else { 0.5 * (1.0 - x * x) }).collect();
    let rho_collar: Vec<f64> =
        r.iter().enumerate().map(|(i, x)| if i == last { 0.0 } else { (1.0 - x) / (2.0 * (1.0 + x)) }).collect();
    let inv_sinh: Vec<f64> = rho.iter().zip(&r).map(|(p, x)| p / x).collect();
    let coth: Vec<f64> = r.iter().map(|x| (1.0 + x * x) / (2.0 * x)).collect();
    let rho_sinh: Vec<f64> = r.iter().map(|x| x / ((1.0 + x) * (1.0 + x))).collect();
    let radial_weights = [grid.cc.clone(), odd_weights(&r)];
    let par = n % 2;
    let quad_weights = (0..m)
        .map(|i| {
            if i == last {
                0.0
            } else {
                let sinh = r[i] / rho[i];
                radial_weights[par][i] * sinh.powi(n as i32) / rho[i]
            }
        })
        .collect();
    Ok(Geometry { n, grid, r, rho, rho_collar, inv_sinh, coth, rho_sinh, quad_weights, radial_weights, epsilon })
}

impl Geometry {
    pub fn nodes(&self) -> usize {
        self.r.len()
    }

    pub fn boundary_node(&self) -> usize {
        self.r.len() - 1
    }

    /// `|dρ|_{ρ²g}` for the collar bdf, evaluated from its closed forms.
    pub fn special_bdf_defect(&self) -> f64 {
        // ρ²g = |dx|²/(1+r)⁴ and dρ/dr = -1/(1+r)², so |dρ| = (1+r)²·|dρ/dr|
        self.r
            .iter()
            .map(|x| {
                let drho = -1.0 / ((1.0 + x) * (1.0 + x));
                ((1.0 + x) * (1.0 + x) * drho.abs() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `index,r_e,rho,quad_weight`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,r_e,rho,quad_weight\n");
        for i in 0..self.nodes() {
            let _ = writeln!(s, "{},{:.11e},{:.11e},{:.11e}", i, self.r[i], self.rho[i], self.quad_weights[i]);
        }
        s
    }
}

/// Pointwise Hodge star in the orthonormal 0-frame (boundary dimension 3).
///
/// Degree `k` forms are stored as `e0∧(normal) + (tangential)` with
/// tangential 2- and 3-forms identified with 1-forms and functions through
/// the boundary star; the volume form is `e0∧vol_S`.
pub fn hodge_star(geo: &Geometry, omega: &ZeroForm) -> Result<ZeroForm> {
    if geo.n != 3 {
        return Err(Error::UnsupportedDimension(format!("pointwise star is implemented for n = 3, got {}", geo.n)));
    }
    let k = omega.degree;
    if k > 4 {
        return Err(Error::DegreeMismatch(format!("degree {k} exceeds 4")));
    }
    let mut out = ZeroForm::zeros_with(omega.space.clone(), 4 - k, omega.nlie);
    match k {
        0 => out.normal.copy_from(&omega.tangential),
        1 => {
            out.tangential.copy_from(&omega.normal);
            out.normal.copy_scaled(&omega.tangential, -1.0);
        }
        2 => {
            out.tangential.copy_from(&omega.normal);
            out.normal.copy_from(&omega.tangential);
        }
        3 => {
            out.tangential.copy_from(&omega.normal);
            out.normal.copy_scaled(&omega.tangential, -1.0);
        }
        _ => out.tangential.copy_from(&omega.normal),
    }
    Ok(out)
}

/// Discrete surrogate of the `ρ^δ` Lebesgue and sup norms.
///
/// The pointwise size of a field at a node is the `L²(S^n)` norm of its
/// coefficients at that radius.
pub fn weighted_norm(geo: &Geometry, field: &ZeroForm, spec: WeightedNormSpec) -> Result<f64> {
    if !field.is_finite() {
        return Err(Error::NonFinite("weighted_norm input".into()));
    }
    let m = geo.nodes();
    let mut size = field.node_norms();
    if spec.derivative_order > 0 {
        for (s, d) in size.iter_mut().zip(field.derivative_node_norms(spec.derivative_order)) {
            *s += d;
        }
    }
    match spec.p {
        NormKind::Sup => {
            let mut best: f64 = 0.0;
            for i in 0..m {
                if geo.rho[i] > 0.0 {
                    best = best.max(geo.rho[i].powf(-spec.delta) * size[i]);
                }
            }
            Ok(best)
        }
        NormKind::L2 => {
            let mut acc = 0.0;
            for i in 0..m {
                if geo.rho[i] > 0.0 {
                    acc += geo.quad_weights[i] * geo.rho[i].powf(-2.0 * spec.delta) * size[i] * size[i];
                }
            }
            Ok(acc.sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_rule_is_exact() {
        let geo = build_geometry(3, 24, 0.5).unwrap();
        let w = &geo.radial_weights[1];
        for p in [1, 3, 7, 21] {
            let s: f64 = w.iter().zip(&geo.r).map(|(w, r)| w * r.powi(p)).sum();
            assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "power {p}: {s}");
        }
        let w = &geo.radial_weights[0];
        let s: f64 = w.iter().zip(&geo.r).map(|(w, r)| w * r.powi(8)).sum();
        assert!((s - 1.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn bdf_values() {
        let geo = build_geometry(3, 64, 0.5).unwrap();
        assert_eq!(geo.rho[geo.boundary_node()], 0.0);
        assert!(geo.special_bdf_defect() < 1e-12);
        assert!(geo.rho.iter().take(63).all(|&p| p > 0.0));
    }
}
