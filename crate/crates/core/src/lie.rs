//! The unitary Lie algebra `u(r)` with the inner product `⟨A, B⟩ = -tr(AB)`.

use nalgebra::Complex;
use nalgebra::DMatrix;

pub type C64 = Complex<f64>;

#[derive(Debug, Clone)]
pub struct LieAlgebraSpec {
    pub r: usize,
    /// Skew-Hermitian generators, orthonormal for `-tr(AB)`.
    pub basis: Vec<DMatrix<C64>>,
    /// `structure_constants[(a * dim + b) * dim + c]` with `[X_a, X_b] = Σ f_abc X_c`.
    pub structure_constants: Vec<f64>,
    pub gram: DMatrix<f64>,
}

fn mat(r: usize, entries: &[(usize, usize, C64)]) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(r, r, C64::new(0.0, 0.0));
    for &(i, j, v) in entries {
        m[(i, j)] += v;
    }
    m
}

impl LieAlgebraSpec {
    /// Default generator set. For `r = 2` the first three generators span
    /// `su(2)` as `(i/√2)τ_a` and the last one is the center.
    pub fn unitary(r: usize) -> Self {
        assert!(r >= 1, "rank must be positive");
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let i = C64::new(0.0, 1.0);
        let one = C64::new(1.0, 0.0);
        let basis: Vec<DMatrix<C64>> = if r == 1 {
            vec![mat(1, &[(0, 0, i)])]
        } else if r == 2 {
            vec![
                mat(2, &[(0, 1, i * s), (1, 0, i * s)]),
                mat(2, &[(0, 1, one * s), (1, 0, -one * s)]),
                mat(2, &[(0, 0, i * s), (1, 1, -i * s)]),
                mat(2, &[(0, 0, i * s), (1, 1, i * s)]),
            ]
        } else {
            let mut b = Vec::new();
            for k in 0..r {
                for l in k + 1..r {
                    b.push(mat(r, &[(k, l, one * s), (l, k, -one * s)]));
                    b.push(mat(r, &[(k, l, i * s), (l, k, i * s)]));
                }
            }
            for k in 0..r {
                b.push(mat(r, &[(k, k, i)]));
            }
            b
        };
        let dim = basis.len();
        let ip = |a: &DMatrix<C64>, b: &DMatrix<C64>| -> f64 { -(a * b).trace().re };
        let gram = DMatrix::from_fn(dim, dim, |a, b| ip(&basis[a], &basis[b]));
        let mut f = vec![0.0; dim * dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                let br = &basis[a] * &basis[b] - &basis[b] * &basis[a];
                for c in 0..dim {
                    let v = ip(&br, &basis[c]);
                    f[(a * dim + b) * dim + c] = if v.abs() < 1e-15 { 0.0 } else { v };
                }
            }
        }
        LieAlgebraSpec { r, basis, structure_constants: f, gram }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn f(&self, a: usize, b: usize, c: usize) -> f64 {
        let d = self.dim();
        self.structure_constants[(a * d + b) * d + c]
    }

    /// Nonzero `(a, b, c, f_abc)`.
    pub fn bracket_table(&self) -> Vec<(usize, usize, usize, f64)> {
        let d = self.dim();
        let mut out = Vec::new();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let v = self.f(a, b, c);
                    if v != 0.0 {
                        out.push((a, b, c, v));
                    }
                }
            }
        }
        out
    }

    pub fn is_abelian(&self) -> bool {
        self.structure_constants.iter().all(|&v| v == 0.0)
    }

    /// Largest Jacobi identity defect over generator triples.
    pub fn jacobi_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let mut s = 0.0;
                        for g in 0..d {
                            s += self.f(b, c, g) * self.f(a, g, e)
                                + self.f(c, a, g) * self.f(b, g, e)
                                + self.f(a, b, g) * self.f(c, g, e);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn to_matrix(&self, coefs: &[f64]) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.r, self.r, C64::new(0.0, 0.0));
        for (c, x) in coefs.iter().enumerate() {
            if *x != 0.0 {
                m += &self.basis[c] * C64::new(*x, 0.0);
            }
        }
        m
    }

    /// Complex coordinates of an arbitrary `gl(r)` matrix: `M = Σ z_c X_c`.
    pub fn coordinates(&self, m: &DMatrix<C64>) -> Vec<C64> {
        self.basis.iter().map(|x| -(m * x).trace()).collect()
    }

    /// Indices of the generators spanning `su(2)` when `r = 2`.
    pub fn su2_indices(&self) -> Option<[usize; 3]> {
        (self.r == 2).then_some([0, 1, 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_and_jacobi() {
        for r in 1..=3 {
            let g = LieAlgebraSpec::unitary(r);
            assert_eq!(g.dim(), r * r);
            let id = DMatrix::<f64>::identity(g.dim(), g.dim());
            assert!((&g.gram - id).norm() < 1e-14);
            assert!(g.jacobi_residual() < 1e-13);
        }
        assert!(LieAlgebraSpec::unitary(1).is_abelian());
    }

    #[test]
    fn su2_structure() {
        let g = LieAlgebraSpec::unitary(2);
        // [X_0, X_1] = -√2 X_2
        assert!((g.f(0, 1, 2) + std::f64::consts::SQRT_2).abs() < 1e-14);
        assert_eq!(g.f(0, 1, 3), 0.0);
    }
}
