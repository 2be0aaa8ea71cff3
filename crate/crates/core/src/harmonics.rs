//! Truncated harmonic bases on the boundary sphere and their cubic
//! coupling tensors.
//!
//! Every mode is carried as an ambient polynomial (scalar) or polynomial
//! vector field (tangential 1-form) on `R^{n+1}` and restricted to the unit
//! sphere. Orthonormality is with respect to the round `L²` pairing.

use crate::error::{Error, Result};
use crate::quadrature::{sphere_volume, SphereQuadrature};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;

/// Dense polynomials in `nvar` variables of total degree `≤ dmax`.
#[derive(Debug, Clone)]
pub struct Monomials {
    pub nvar: usize,
    pub dmax: usize,
    pub exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl Monomials {
    pub fn new(nvar: usize, dmax: usize) -> Self {
        let mut exps = Vec::new();
        for d in 0..=dmax {
            let mut cur = vec![0u8; nvar];
            Self::enumerate(d, 0, &mut cur, &mut exps);
        }
        let index = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Monomials { nvar, dmax, exps, index }
    }

    fn enumerate(rem: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos == cur.len() - 1 {
            cur[pos] = rem as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=rem).rev() {
            cur[pos] = e as u8;
            Self::enumerate(rem - e, pos + 1, cur, out);
        }
        cur[pos] = 0;
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&e| e as usize).sum()
    }

    pub fn unit(&self, i: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.len()];
        c[i] = 1.0;
        c
    }

    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        self.exps.iter().map(|e| e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product()).collect()
    }

    pub fn eval(&self, c: &[f64], x: &[f64]) -> f64 {
        self.eval_all(x).iter().zip(c).map(|(m, c)| m * c).sum()
    }

    pub fn deriv(&self, c: &[f64], var: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, &ci) in c.iter().enumerate() {
            if ci == 0.0 || self.exps[i][var] == 0 {
                continue;
            }
            let mut e = self.exps[i].clone();
            let k = e[var] as f64;
            e[var] -= 1;
            out[self.index[&e]] += k * ci;
        }
        out
    }

    pub fn mul(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                let e: Vec<u8> = self.exps[i].iter().zip(&self.exps[j]).map(|(x, y)| x + y).collect();
                let k = *self.index.get(&e).expect("polynomial degree overflow");
                out[k] += ai * bj;
            }
        }
        out
    }

    pub fn coordinate(&self, var: usize) -> Vec<f64> {
        let mut e = vec![0u8; self.nvar];
        e[var] = 1;
        self.unit(self.index[&e])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Scalar,
    Exact1form,
    Coexact1form,
    InvariantSu2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeLabel {
    pub kind: ModeKind,
    pub ell: usize,
    pub m: usize,
    /// Boundary Hodge Laplacian eigenvalue.
    pub eigenvalue: f64,
    /// Radial parity of the mode's 0-form (scalar) or tangential 1-form
    /// coefficient.
    pub parity: usize,
    /// Eigenvalue of `⋆_S d` for coexact modes on `S³`.
    pub curl: Option<f64>,
    /// Scalar mode an exact mode is the gradient of.
    pub source: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisClass {
    Full,
    EquivariantSu2,
}

#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub n: usize,
    pub l_max: usize,
    pub class: BasisClass,
    pub scalars: Vec<ModeLabel>,
    pub vectors: Vec<ModeLabel>,
    pub mono: Monomials,
    pub scalar_polys: Vec<Vec<f64>>,
    /// `vector_polys[j][i]` is the `i`-th ambient component of mode `j`.
    pub vector_polys: Vec<Vec<Vec<f64>>>,
}

/// Dimension of degree-`ell` spherical harmonics on `S^n`.
pub fn scalar_harmonic_dim(n: usize, ell: usize) -> usize {
    let binom = |a: usize, b: usize| -> usize {
        let mut r: u128 = 1;
        for i in 0..b {
            r = r * (a - i) as u128 / (i + 1) as u128;
        }
        r as usize
    };
    let hi = binom(ell + n, n);
    let lo = if ell >= 2 { binom(ell + n - 2, n) } else { 0 };
    hi - lo
}

struct Gs<'a> {
    quad: &'a SphereQuadrature,
    table: Vec<Vec<f64>>,
}

impl Gs<'_> {
    fn values(&self, c: &[f64]) -> Vec<f64> {
        self.table.iter().map(|m| m.iter().zip(c).map(|(a, b)| a * b).sum()).collect()
    }

    fn vec_values(&self, p: &[Vec<f64>]) -> Vec<Vec<f64>> {
        p.iter().map(|c| self.values(c)).collect()
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.quad.weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    }

    fn vdot(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().zip(b).map(|(x, y)| self.dot(x, y)).sum()
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn vaxpy(y: &mut [Vec<f64>], a: f64, x: &[Vec<f64>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        axpy(yi, a, xi);
    }
}

fn vscale(y: &mut [Vec<f64>], a: f64) {
    for c in y.iter_mut() {
        c.iter_mut().for_each(|v| *v *= a);
    }
}

/// Curl `⋆_S dV` of an ambient vector field restricted to `S³`, evaluated
/// at `x`: `c_b = ½ ε_{abcd} x_a (∂_c P_d - ∂_d P_c)`.
pub fn curl_s3(mono: &Monomials, p: &[Vec<f64>], x: &[f64]) -> [f64; 4] {
    let mut omega = [[0.0; 4]; 4];
    for c in 0..4 {
        for d in 0..4 {
            if c != d {
                omega[c][d] = mono.eval(&mono.deriv(&p[d], c), x);
            }
        }
    }
    let mut out = [0.0; 4];
    for (b, ob) in out.iter_mut().enumerate() {
        for a in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let e = levi4(a, b, c, d);
                    if e != 0.0 {
                        *ob += 0.5 * e * x[a] * (omega[c][d] - omega[d][c]);
                    }
                }
            }
        }
    }
    out
}

/// Levi-Civita symbol in four indices.
pub fn levi4(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let idx = [a, b, c, d];
    for i in 0..4 {
        for j in i + 1..4 {
            if idx[i] == idx[j] {
                return 0.0;
            }
        }
    }
    let mut sign = 1.0;
    let mut v = idx;
    for i in 0..4 {
        for j in 0..3 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    sign
}

/// Cross product of tangent vectors on `S³`: `(v×w)_b = ε_{acdb} x_a v_c w_d`.
pub fn cross_s3(x: &[f64], v: &[f64], w: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (b, ob) in out.iter_mut().enumerate() {
        for a in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let e = levi4(a, c, d, b);
                    if e != 0.0 {
                        *ob += e * x[a] * v[c] * w[d];
                    }
                }
            }
        }
    }
    out
}

pub fn build_mode_basis(n: usize, l_max: usize, class: BasisClass) -> Result<ModeBasis> {
    if n < 3 {
        return Err(Error::DimensionTooLow(n));
    }
    match class {
        BasisClass::Full => build_full(n, l_max),
        BasisClass::EquivariantSu2 => {
            if n != 3 {
                return Err(Error::UnsupportedDimension(format!("equivariant su(2) modes need n = 3, got {n}")));
            }
            build_su2()
        }
    }
}

fn build_full(n: usize, l_max: usize) -> Result<ModeBasis> {
    let nvar = n + 1;
    let mono = Monomials::new(nvar, l_max + 2);
    let quad = SphereQuadrature::new(n, 2 * l_max + 6);
    let table: Vec<Vec<f64>> = quad.points.iter().map(|x| mono.eval_all(x)).collect();
    let gs = Gs { quad: &quad, table };
    let vol = sphere_volume(n);

    // scalar harmonics by degree-ordered Gram–Schmidt of monomials
    let mut scalar_polys: Vec<Vec<f64>> = Vec::new();
    let mut scalar_vals: Vec<Vec<f64>> = Vec::new();
    let mut scalars = Vec::new();
    for d in 0..=l_max {
        let mut count = 0;
        for i in (0..mono.len()).filter(|&i| mono.degree(i) == d) {
            let mut c = mono.unit(i);
            let mut v = gs.values(&c);
            let orig = gs.dot(&v, &v).sqrt();
            for _ in 0..2 {
                for (pc, pv) in scalar_polys.iter().zip(&scalar_vals) {
                    let proj = gs.dot(&v, pv);
                    axpy(&mut c, -proj, pc);
                    axpy(&mut v, -proj, pv);
                }
            }
            let nrm = gs.dot(&v, &v).sqrt();
            if nrm > 1e-8 * orig {
                c.iter_mut().for_each(|x| *x /= nrm);
                v.iter_mut().for_each(|x| *x /= nrm);
                scalar_polys.push(c);
                scalar_vals.push(v);
                scalars.push(ModeLabel {
                    kind: ModeKind::Scalar,
                    ell: d,
                    m: count,
                    eigenvalue: (d * (d + n - 1)) as f64,
                    parity: d % 2,
                    curl: None,
                    source: None,
                });
                count += 1;
            }
        }
        debug_assert_eq!(count, scalar_harmonic_dim(n, d));
    }
    let _ = vol;

    // exact modes dY/√λ as tangential gradients ∂_iY - x_i (x·∇Y)
    let coords: Vec<Vec<f64>> = (0..nvar).map(|i| mono.coordinate(i)).collect();
    let mut vector_polys: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut vector_vals: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut vectors = Vec::new();
    for (si, lab) in scalars.iter().enumerate() {
        if lab.ell == 0 {
            continue;
        }
        let grad: Vec<Vec<f64>> = (0..nvar).map(|i| mono.deriv(&scalar_polys[si], i)).collect();
        let mut radial = vec![0.0; mono.len()];
        for i in 0..nvar {
            axpy(&mut radial, 1.0, &mono.mul(&coords[i], &grad[i]));
        }
        let scale = 1.0 / lab.eigenvalue.sqrt();
        let p: Vec<Vec<f64>> = (0..nvar)
            .map(|i| {
                let mut c = grad[i].clone();
                axpy(&mut c, -1.0, &mono.mul(&coords[i], &radial));
                c.iter_mut().for_each(|x| *x *= scale);
                c
            })
            .collect();
        vector_vals.push(gs.vec_values(&p));
        vector_polys.push(p);
        vectors.push(ModeLabel {
            kind: ModeKind::Exact1form,
            ell: lab.ell,
            m: lab.m,
            eigenvalue: lab.eigenvalue,
            parity: (lab.ell + 1) % 2,
            curl: None,
            source: Some(si),
        });
    }

    // coexact modes: Killing fields times lower harmonics, orthogonalized
    for ell in 1..=l_max {
        let mut new_polys: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut new_vals: Vec<Vec<Vec<f64>>> = Vec::new();
        for (si, lab) in scalars.iter().enumerate() {
            if lab.ell != ell - 1 {
                continue;
            }
            for i in 0..nvar {
                for j in i + 1..nvar {
                    let mut p = vec![vec![0.0; mono.len()]; nvar];
                    p[j] = mono.mul(&scalar_polys[si], &coords[i]);
                    p[i] = mono.mul(&scalar_polys[si], &coords[j]);
                    p[i].iter_mut().for_each(|x| *x = -*x);
                    let mut v = gs.vec_values(&p);
                    let orig = gs.vdot(&v, &v).sqrt();
                    for _ in 0..2 {
                        for (qp, qv) in vector_polys.iter().zip(&vector_vals).chain(new_polys.iter().zip(&new_vals)) {
                            let proj = gs.vdot(&v, qv);
                            vaxpy(&mut p, -proj, qp);
                            vaxpy(&mut v, -proj, qv);
                        }
                    }
                    let nrm = gs.vdot(&v, &v).sqrt();
                    if nrm > 1e-8 * orig {
                        vscale(&mut p, 1.0 / nrm);
                        vscale(&mut v, 1.0 / nrm);
                        new_polys.push(p);
                        new_vals.push(v);
                    }
                }
            }
        }
        let mut curls: Vec<Option<f64>> = vec![None; new_polys.len()];
        if n == 3 && !new_polys.is_empty() {
            // diagonalize the symmetric curl on this eigenspace
            let k = new_polys.len();
            let curl_vals: Vec<Vec<Vec<f64>>> = new_polys
                .iter()
                .map(|p| {
                    let pts: Vec<[f64; 4]> = quad.points.iter().map(|x| curl_s3(&mono, p, x)).collect();
                    (0..4).map(|c| pts.iter().map(|v| v[c]).collect()).collect()
                })
                .collect();
            let cm = DMatrix::from_fn(k, k, |a, b| {
                0.5 * (gs.vdot(&new_vals[a], &curl_vals[b]) + gs.vdot(&new_vals[b], &curl_vals[a]))
            });
            let eig = SymmetricEigen::new(cm);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let mut rot_p = Vec::new();
            let mut rot_v = Vec::new();
            let mut rot_c = Vec::new();
            for &col in &order {
                let mut p = vec![vec![0.0; mono.len()]; nvar];
                let mut v = vec![vec![0.0; quad.len()]; nvar];
                for b in 0..k {
                    let w = eig.eigenvectors[(b, col)];
                    vaxpy(&mut p, w, &new_polys[b]);
                    vaxpy(&mut v, w, &new_vals[b]);
                }
                let target = (ell + 1) as f64 * eig.eigenvalues[col].signum();
                if (eig.eigenvalues[col] - target).abs() > 1e-8 {
                    return Err(Error::BadGrid(format!(
                        "curl eigenvalue {} does not match ±{}",
                        eig.eigenvalues[col],
                        ell + 1
                    )));
                }
                rot_p.push(p);
                rot_v.push(v);
                rot_c.push(Some(target));
            }
            new_polys = rot_p;
            new_vals = rot_v;
            curls = rot_c;
        }
        for (m, ((p, v), curl)) in new_polys.into_iter().zip(new_vals).zip(curls).enumerate() {
            vector_polys.push(p);
            vector_vals.push(v);
            vectors.push(ModeLabel {
                kind: ModeKind::Coexact1form,
                ell,
                m,
                eigenvalue: ((ell + 1) * (ell + n - 2)) as f64,
                parity: ell % 2,
                curl,
                source: None,
            });
        }
    }
    Ok(ModeBasis { n, l_max, class: BasisClass::Full, scalars, vectors, mono, scalar_polys, vector_polys })
}

/// The three unit left-invariant coframe fields on `S³`, ordered and signed
/// so that `dσ^a = -ε_{abc} σ^b∧σ^c`.
pub fn su2_coframe_polys(mono: &Monomials) -> Vec<Vec<Vec<f64>>> {
    let lin = |coefs: [(usize, f64); 4]| -> Vec<Vec<f64>> {
        coefs
            .iter()
            .map(|&(var, s)| {
                let mut c = mono.coordinate(var);
                c.iter_mut().for_each(|x| *x *= s);
                c
            })
            .collect()
    };
    // right multiplication x·i, x·j, x·k and left multiplication i·x, j·x, k·x
    let right = vec![
        lin([(1, -1.0), (0, 1.0), (3, 1.0), (2, -1.0)]),
        lin([(2, -1.0), (3, -1.0), (0, 1.0), (1, 1.0)]),
        lin([(3, -1.0), (2, 1.0), (1, -1.0), (0, 1.0)]),
    ];
    let left = vec![
        lin([(1, -1.0), (0, 1.0), (3, -1.0), (2, 1.0)]),
        lin([(2, -1.0), (3, 1.0), (0, 1.0), (1, -1.0)]),
        lin([(3, -1.0), (2, -1.0), (1, 1.0), (0, 1.0)]),
    ];
    let x = [0.3, -0.5, 0.7, 0.1];
    let nrm = x.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let x: Vec<f64> = x.iter().map(|v| v / nrm).collect();
    for set in [right, left] {
        for sign in [1.0, -1.0] {
            let cand: Vec<Vec<Vec<f64>>> =
                set.iter().map(|p| p.iter().map(|c| c.iter().map(|v| v * sign).collect()).collect()).collect();
            let val = |p: &Vec<Vec<f64>>| -> Vec<f64> { p.iter().map(|c| mono.eval(c, &x)).collect() };
            // dσ^a = -2 σ^b∧σ^c  ⇔  curl σ^a = -2 (σ^b×σ^c)
            let ok = (0..3).all(|a| {
                let b = (a + 1) % 3;
                let c = (a + 2) % 3;
                let cu = curl_s3(mono, &cand[a], &x);
                let cr = cross_s3(&x, &val(&cand[b]), &val(&cand[c]));
                (0..4).all(|i| (cu[i] + 2.0 * cr[i]).abs() < 1e-12)
            });
            if ok {
                return cand;
            }
        }
    }
    unreachable!("one of the invariant frames satisfies the structure equations")
}

fn build_su2() -> Result<ModeBasis> {
    let n = 3;
    let mono = Monomials::new(4, 3);
    let vol = sphere_volume(3);
    let s = 1.0 / vol.sqrt();
    let mut one = mono.unit(0);
    one[0] = s;
    let sigma = su2_coframe_polys(&mono);
    let vector_polys: Vec<Vec<Vec<f64>>> =
        sigma.into_iter().map(|p| p.into_iter().map(|c| c.into_iter().map(|v| v * s).collect()).collect()).collect();
    let scalars =
        vec![ModeLabel { kind: ModeKind::Scalar, ell: 0, m: 0, eigenvalue: 0.0, parity: 0, curl: None, source: None }];
    let vectors = (0..3)
        .map(|a| ModeLabel {
            kind: ModeKind::InvariantSu2,
            ell: 1,
            m: a,
            eigenvalue: 4.0,
            parity: 1,
            curl: Some(-2.0),
            source: None,
        })
        .collect();
    Ok(ModeBasis {
        n,
        l_max: 1,
        class: BasisClass::EquivariantSu2,
        scalars,
        vectors,
        mono,
        scalar_polys: vec![one],
        vector_polys,
    })
}

impl ModeBasis {
    pub fn n_scalar(&self) -> usize {
        self.scalars.len()
    }

    pub fn n_vector(&self) -> usize {
        self.vectors.len()
    }

    /// All labels, scalars first.
    pub fn modes(&self) -> Vec<ModeLabel> {
        self.scalars.iter().chain(&self.vectors).cloned().collect()
    }

    pub fn scalar_value(&self, i: usize, x: &[f64]) -> f64 {
        self.mono.eval(&self.scalar_polys[i], x)
    }

    pub fn vector_value(&self, j: usize, x: &[f64]) -> Vec<f64> {
        self.vector_polys[j].iter().map(|c| self.mono.eval(c, x)).collect()
    }

    /// Index of the exact mode built from scalar mode `i`, if any.
    pub fn exact_of_scalar(&self, i: usize) -> Option<usize> {
        self.vectors.iter().position(|v| v.source == Some(i))
    }

    /// Largest polynomial degree of any mode component.
    pub fn max_poly_degree(&self) -> usize {
        self.l_max + 1
    }

    /// JSON manifest of mode labels.
    pub fn manifest_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "L_max": self.l_max,
            "class": self.class,
            "scalar_modes": self.scalars,
            "vector_modes": self.vectors,
        })
    }
}

/// Sparse three-index tensor entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// Modal evaluation tables on a sphere quadrature.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub quad: SphereQuadrature,
    /// `scalar[(q, i)] = Y_i(x_q)`.
    pub scalar: DMatrix<f64>,
    /// `vector[c][(q, j)]` is ambient component `c` of `V_j(x_q)`.
    pub vector: Vec<DMatrix<f64>>,
}

impl SphereGrid {
    pub fn new(basis: &ModeBasis, degree: usize) -> Self {
        let quad = SphereQuadrature::new(basis.n, degree);
        let nq = quad.len();
        let scalar = DMatrix::from_fn(nq, basis.n_scalar(), |q, i| basis.scalar_value(i, &quad.points[q]));
        let vals: Vec<Vec<Vec<f64>>> =
            (0..basis.n_vector()).map(|j| quad.points.iter().map(|x| basis.vector_value(j, x)).collect()).collect();
        let vector = (0..=basis.n).map(|c| DMatrix::from_fn(nq, basis.n_vector(), |q, j| vals[j][q][c])).collect();
        SphereGrid { quad, scalar, vector }
    }
}

/// Cubic couplings of the basis:
/// `scalar3[i,j,k] = ∫ Y_i Y_j Y_k`, `scalar_vector[i,j,k] = ∫ Y_i V_j·V_k`,
/// `vector3[i,j,k] = ∫ (V_i × V_j)·V_k` (only for `n = 3`).
#[derive(Debug, Clone)]
pub struct CouplingTensors {
    pub quadrature_degree: usize,
    pub scalar3: Vec<Entry>,
    pub scalar_vector: Vec<Entry>,
    pub vector3: Vec<Entry>,
    pub grid: SphereGrid,
}

const TENSOR_ZERO: f64 = 1e-12;

pub fn default_quadrature_degree(basis: &ModeBasis) -> usize {
    3 * basis.max_poly_degree() + 1
}

pub fn coupling_tensors(basis: &ModeBasis, quadrature_degree: usize) -> Result<CouplingTensors> {
    let required = 2 * basis.l_max + 2;
    if quadrature_degree < required {
        return Err(Error::QuadratureTooCoarse { given: quadrature_degree, required });
    }
    let grid = SphereGrid::new(basis, quadrature_degree);
    let w = &grid.quad.weights;
    let nq = w.len();
    let ns = basis.n_scalar();
    let nv = basis.n_vector();
    let mut scalar3 = Vec::new();
    for i in 0..ns {
        for j in 0..ns {
            for k in 0..ns {
                let v: f64 =
                    (0..nq).map(|q| w[q] * grid.scalar[(q, i)] * grid.scalar[(q, j)] * grid.scalar[(q, k)]).sum();
                if v.abs() > TENSOR_ZERO {
                    scalar3.push(Entry { i, j, k, value: v });
                }
            }
        }
    }
    let dim = basis.n + 1;
    let dots: Vec<Vec<Vec<f64>>> = (0..nv)
        .map(|j| {
            (0..nv)
                .map(|k| {
                    (0..nq).map(|q| (0..dim).map(|c| grid.vector[c][(q, j)] * grid.vector[c][(q, k)]).sum()).collect()
                })
                .collect()
        })
        .collect();
    let mut scalar_vector = Vec::new();
    for i in 0..ns {
        for j in 0..nv {
            for k in 0..nv {
                let v: f64 = (0..nq).map(|q| w[q] * grid.scalar[(q, i)] * dots[j][k][q]).sum();
                if v.abs() > TENSOR_ZERO {
                    scalar_vector.push(Entry { i, j, k, value: v });
                }
            }
        }
    }
    let mut vector3 = Vec::new();
    if basis.n == 3 {
        for i in 0..nv {
            for j in i + 1..nv {
                for k in j + 1..nv {
                    let mut v = 0.0;
                    for q in 0..nq {
                        let x = &grid.quad.points[q];
                        let col = |jj: usize| -> [f64; 4] { std::array::from_fn(|c| grid.vector[c][(q, jj)]) };
                        let m = nalgebra::Matrix4::from_columns(&[
                            nalgebra::Vector4::new(x[0], x[1], x[2], x[3]),
                            col(i).into(),
                            col(j).into(),
                            col(k).into(),
                        ]);
                        v += w[q] * m.determinant();
                    }
                    if v.abs() > TENSOR_ZERO {
                        for (a, b, c, s) in [
                            (i, j, k, 1.0),
                            (j, k, i, 1.0),
                            (k, i, j, 1.0),
                            (j, i, k, -1.0),
                            (i, k, j, -1.0),
                            (k, j, i, -1.0),
                        ] {
                            vector3.push(Entry { i: a, j: b, k: c, value: s * v });
                        }
                    }
                }
            }
        }
        vector3.sort_by_key(|e| (e.i, e.j, e.k));
    }
    Ok(CouplingTensors { quadrature_degree, scalar3, scalar_vector, vector3, grid })
}

impl CouplingTensors {
    /// Flat CSV of nonzero entries: `tensor,i,j,k,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tensor,i,j,k,value\n");
        for (name, list) in
            [("scalar3", &self.scalar3), ("scalar_vector", &self.scalar_vector), ("vector3", &self.vector3)]
        {
            for e in list.iter() {
                let _ = writeln!(s, "{},{},{},{},{:.11e}", name, e.i, e.j, e.k, e.value);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_for_s3() {
        let b = build_mode_basis(3, 2, BasisClass::Full).unwrap();
        let count = |k: ModeKind, l: usize| b.vectors.iter().filter(|v| v.kind == k && v.ell == l).count();
        assert_eq!(b.n_scalar(), 1 + 4 + 9);
        assert_eq!(count(ModeKind::Exact1form, 1), 4);
        assert_eq!(count(ModeKind::Coexact1form, 1), 6);
        assert_eq!(count(ModeKind::Coexact1form, 2), 16);
    }

    #[test]
    fn levi_signs() {
        assert_eq!(levi4(0, 1, 2, 3), 1.0);
        assert_eq!(levi4(1, 0, 2, 3), -1.0);
        assert_eq!(levi4(1, 2, 3, 0), -1.0);
    }
}
