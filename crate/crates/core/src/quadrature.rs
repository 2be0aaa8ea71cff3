//! Product Gauss quadrature on the round sphere `S^n ⊂ R^{n+1}`.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// `∫_{-1}^{1} (1 - t²)^a dt` for half-integer `a ≥ 0`.
fn gegenbauer_mass(a: f64) -> f64 {
    if a < 0.25 {
        2.0
    } else if a < 0.75 {
        PI / 2.0
    } else {
        gegenbauer_mass(a - 1.0) * 2.0 * a / (2.0 * a + 1.0)
    }
}

/// Gauss rule with `q` nodes for the weight `(1 - t²)^a` on `[-1, 1]`.
pub fn gauss_gegenbauer(q: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let lam = a + 0.5;
    let mut j = DMatrix::<f64>::zeros(q, q);
    for k in 1..q {
        let kf = k as f64;
        let beta = kf * (kf + 2.0 * lam - 1.0) / (4.0 * (kf + lam) * (kf + lam - 1.0));
        j[(k, k - 1)] = beta.sqrt();
        j[(k - 1, k)] = beta.sqrt();
    }
    let eig = SymmetricEigen::new(j);
    let mu0 = gegenbauer_mass(a);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    pairs.into_iter().unzip()
}

/// Quadrature nodes (ambient coordinates) and weights on `S^n`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub n: usize,
    pub degree: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Volume of the unit sphere `S^n`.
pub fn sphere_volume(n: usize) -> f64 {
    // |S^n| = 2π^{(n+1)/2}/Γ((n+1)/2), via |S^n| = 2π/(n-1)·|S^{n-2}|
    let mut vol = if n.is_multiple_of(2) { 2.0 } else { 2.0 * PI };
    let mut k = if n.is_multiple_of(2) { 0 } else { 1 };
    while k < n {
        k += 2;
        vol *= 2.0 * PI / (k as f64 - 1.0);
    }
    vol
}

impl SphereQuadrature {
    /// Rule exact for polynomials of total degree `≤ degree`.
    pub fn new(n: usize, degree: usize) -> Self {
        let q = degree / 2 + 1;
        let nphi = degree + 1;
        // polar angles θ_1..θ_{n-1}; θ_k carries sin^{n-k}
        let rules: Vec<(Vec<f64>, Vec<f64>)> =
            (1..n).map(|k| gauss_gegenbauer(q, ((n - k) as f64 - 1.0) / 2.0)).collect();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; n - 1];
        loop {
            for p in 0..nphi {
                let phi = 2.0 * PI * p as f64 / nphi as f64;
                let mut x = vec![0.0; n + 1];
                let mut w = 2.0 * PI / nphi as f64;
                let mut sprod = 1.0;
                for (k, rule) in rules.iter().enumerate() {
                    let t = rule.0[idx[k]];
                    w *= rule.1[idx[k]];
                    x[k] = sprod * t;
                    sprod *= (1.0 - t * t).max(0.0).sqrt();
                }
                x[n - 1] = sprod * phi.cos();
                x[n] = sprod * phi.sin();
                points.push(x);
                weights.push(w);
            }
            // odometer over polar indices
            let mut k = 0;
            loop {
                if k == n - 1 {
                    return SphereQuadrature { n, degree, points, weights };
                }
                idx[k] += 1;
                if idx[k] < q {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_and_moments() {
        for n in 3..=5 {
            let q = SphereQuadrature::new(n, 8);
            let vol: f64 = q.weights.iter().sum();
            assert!((vol - sphere_volume(n)).abs() < 1e-12, "n={n}");
            // ∫ x_0^4 = 3|S^n|/((n+1)(n+3))
            let m4 = q.integrate(|x| x[n].powi(4));
            let expect = 3.0 * sphere_volume(n) / (((n + 1) * (n + 3)) as f64);
            assert!((m4 - expect).abs() < 1e-12);
            let odd = q.integrate(|x| x[0] * x[1] * x[1]);
            assert!(odd.abs() < 1e-13);
        }
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-13);
    }
}
