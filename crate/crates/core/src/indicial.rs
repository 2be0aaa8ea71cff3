//! Indicial families, their roots and the resulting weight windows.

use crate::error::{Error, Result};
use crate::fields::{part_types, CompType, Part, SpaceRef};
use crate::lie::C64;
use crate::zerodiff::{boundary_size, Expr, Prim, ZeroDiffOp, BOUNDARY_TOL};
use nalgebra::DMatrix;
use serde::Serialize;

pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

/// `I_s = Σ_j M_j s^j` on the fibre `(collar class, fibre index, Lie index)`.
#[derive(Debug, Clone)]
pub struct IndicialFamily {
    pub degree: usize,
    pub coefficients: Vec<DMatrix<f64>>,
    pub source: String,
    pub n: usize,
    pub domain_labels: Vec<String>,
    pub codomain_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightWindow {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Set when a real root sits on `Re s = n/2`, collapsing the window.
    pub degenerate: bool,
}

impl WeightWindow {
    pub fn contains(&self, delta: f64) -> bool {
        !self.degenerate && delta > self.lo && delta < self.hi
    }
}

type Poly = Vec<DMatrix<f64>>;

fn classes(space: &SpaceRef, k: usize) -> Vec<(Part, CompType, usize)> {
    let (nt, tt) = part_types(k, space.geo.n);
    let mut out = Vec::new();
    if let Some(t) = nt {
        out.push((Part::Normal, t, k - 1));
    }
    if let Some(t) = tt {
        out.push((Part::Tangential, t, k));
    }
    out
}

fn class_index(cl: &[(Part, CompType, usize)], part: Part) -> usize {
    cl.iter().position(|c| c.0 == part).expect("part present in degree")
}

fn binom(a: usize, b: usize) -> usize {
    (0..b).fold(1, |r, i| r * (a - i) / (i + 1))
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let rows = a[0].nrows();
    let cols = b[0].ncols();
    let mut out = vec![DMatrix::zeros(rows, cols); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Indicial family at the level of collar classes (one entry per
/// `(part, component type)`), before fibre expansion.
pub fn class_family(p: &ZeroDiffOp) -> Result<Vec<DMatrix<f64>>> {
    let mut poly = family_expr(&p.expr, &p.space)?;
    poly.resize(p.order + 1, poly[0].clone() * 0.0);
    Ok(poly)
}

/// Collar classes `(part, type, tangential degree)` of a degree.
pub fn collar_classes(space: &SpaceRef, k: usize) -> Vec<(Part, CompType, usize)> {
    classes(space, k)
}

fn family_expr(expr: &Expr, space: &SpaceRef) -> Result<Poly> {
    match expr {
        Expr::Prim(p) => {
            let (dom, cod) = match &**p {
                Prim::Blocks { dom, cod, .. } | Prim::Zero { dom, cod } => (*dom, *cod),
                Prim::WedgeBracket { field, dom } => (*dom, dom + field.degree),
                Prim::ContractBracket { dom, .. } => (*dom, dom - 1),
                Prim::CurvatureTerm { .. } => (1, 1),
            };
            let cd = classes(space, dom);
            let cc = classes(space, cod);
            match &**p {
                Prim::Blocks { order, entries, .. } => {
                    let last = space.geo.boundary_node();
                    // values[j][(co, ci)] = per-component boundary values
                    let mut values: Vec<Vec<Vec<Option<Vec<f64>>>>> =
                        vec![vec![vec![None; cd.len()]; cc.len()]; order + 1];
                    for e in entries {
                        let co = class_index(&cc, e.out.0);
                        let ci = class_index(&cd, e.inp.0);
                        let same = cc[co].1 == cd[ci].1 && e.out.1 == e.inp.1;
                        for t in e.terms.iter().filter(|t| t.beta == 0) {
                            let v = t.coef[last];
                            if !v.is_finite() {
                                return Err(Error::NoBoundaryLimit(format!("coefficient of {:?}", e.out)));
                            }
                            if same {
                                let slot = values[t.j][co][ci].get_or_insert_with(|| vec![0.0; space.count(cc[co].1)]);
                                slot[e.out.1] += v;
                            } else if v.abs() > BOUNDARY_TOL {
                                return Err(Error::NoBoundaryLimit(format!(
                                    "boundary coupling between distinct modes {:?} <- {:?}",
                                    e.out, e.inp
                                )));
                            }
                        }
                    }
                    let mut poly = vec![DMatrix::zeros(cc.len(), cd.len()); order + 1];
                    for (j, vj) in values.iter().enumerate() {
                        for (co, row) in vj.iter().enumerate() {
                            for (ci, slot) in row.iter().enumerate() {
                                let Some(vals) = slot else { continue };
                                let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
                                let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
                                if hi - lo > 1e-9 * (1.0 + hi.abs().max(lo.abs())) {
                                    return Err(Error::NoBoundaryLimit(format!(
                                        "indicial coefficient depends on the mode ({lo} .. {hi})"
                                    )));
                                }
                                poly[j][(co, ci)] = 0.5 * (hi + lo);
                            }
                        }
                    }
                    Ok(poly)
                }
                Prim::WedgeBracket { field, .. }
                | Prim::ContractBracket { field, .. }
                | Prim::CurvatureTerm { field } => {
                    if boundary_size(field) > BOUNDARY_TOL {
                        return Err(Error::NoBoundaryLimit("twisting field does not vanish at the boundary".into()));
                    }
                    Ok(vec![DMatrix::zeros(cc.len(), cd.len())])
                }
                Prim::Zero { .. } => Ok(vec![DMatrix::zeros(cc.len(), cd.len())]),
            }
        }
        Expr::Compose(a, b) => Ok(poly_mul(&family_expr(a, space)?, &family_expr(b, space)?)),
        Expr::Sum(parts) => {
            let polys: Vec<(f64, Poly)> =
                parts.iter().map(|(s, e)| Ok((*s, family_expr(e, space)?))).collect::<Result<_>>()?;
            let len = polys.iter().map(|(_, p)| p.len()).max().unwrap_or(1);
            let shape = polys[0].1[0].shape();
            let mut out = vec![DMatrix::zeros(shape.0, shape.1); len];
            for (s, p) in polys {
                for (j, m) in p.into_iter().enumerate() {
                    out[j] += m * s;
                }
            }
            Ok(out)
        }
    }
}

fn fibre_layout(space: &SpaceRef, k: usize, nlie: usize) -> (Vec<(usize, usize)>, Vec<String>) {
    // (offset, fibre dimension) per class
    let n = space.geo.n;
    let mut layout = Vec::new();
    let mut labels = Vec::new();
    let mut off = 0;
    for (part, _, t) in classes(space, k) {
        let dim = binom(n, t);
        layout.push((off, dim));
        for f in 0..dim {
            for a in 0..nlie {
                labels.push(format!("{}:{f}:{a}", if part == Part::Normal { "normal" } else { "tangential" }));
            }
        }
        off += dim * nlie;
    }
    (layout, labels)
}

/// Indicial family `I_s(P)`, read off from the `β = 0` boundary limits and
/// expanded to the full fibre. Mode independence of the limits is checked.
pub fn indicial_family(p: &ZeroDiffOp) -> Result<IndicialFamily> {
    let space = &p.space;
    let nlie = space.lie.dim();
    let poly = class_family(p)?;
    let (ld, dl) = fibre_layout(space, p.dom, nlie);
    let (lc, cl) = fibre_layout(space, p.cod, nlie);
    let mut coefficients = Vec::new();
    for m in &poly {
        let mut full = DMatrix::zeros(cl.len(), dl.len());
        for co in 0..lc.len() {
            for ci in 0..ld.len() {
                let v = m[(co, ci)];
                if v == 0.0 {
                    continue;
                }
                let (ro, dro) = lc[co];
                let (cofs, dci) = ld[ci];
                if dro != dci {
                    return Err(Error::NoBoundaryLimit("boundary map between fibres of different rank".into()));
                }
                for k in 0..dro * nlie {
                    full[(ro + k, cofs + k)] = v;
                }
            }
        }
        coefficients.push(full);
    }
    Ok(IndicialFamily {
        degree: p.order,
        coefficients,
        source: p.name.clone(),
        n: space.geo.n,
        domain_labels: dl,
        codomain_labels: cl,
    })
}

impl IndicialFamily {
    pub fn eval(&self, s: C64) -> DMatrix<C64> {
        let (r, c) = self.coefficients[0].shape();
        let mut out = DMatrix::from_element(r, c, C64::new(0.0, 0.0));
        let mut pw = C64::new(1.0, 0.0);
        for m in &self.coefficients {
            out += m.map(|v| C64::new(v, 0.0)) * pw;
            pw *= s;
        }
        out
    }

    /// Coefficients of `I_{n - s}` (real substitution).
    pub fn reflected(&self) -> IndicialFamily {
        // (n - s)^j = Σ_i binom(j, i) n^{j-i} (-s)^i
        let nf = self.n as f64;
        let mut out = vec![self.coefficients[0].clone() * 0.0; self.coefficients.len()];
        for (j, m) in self.coefficients.iter().enumerate() {
            for (i, slot) in out.iter_mut().enumerate().take(j + 1) {
                let c = binom(j, i) as f64 * nf.powi((j - i) as i32) * if i % 2 == 0 { 1.0 } else { -1.0 };
                *slot += m * c;
            }
        }
        IndicialFamily { coefficients: out, source: format!("reflect({})", self.source), ..self.clone() }
    }

    pub fn transposed(&self) -> IndicialFamily {
        IndicialFamily {
            coefficients: self.coefficients.iter().map(|m| m.transpose()).collect(),
            domain_labels: self.codomain_labels.clone(),
            codomain_labels: self.domain_labels.clone(),
            source: format!("({})^T", self.source),
            ..self.clone()
        }
    }

    /// Largest entry difference to another family of the same shape.
    pub fn distance(&self, other: &IndicialFamily) -> f64 {
        self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| (a - b).abs().max()).fold(0.0, f64::max)
    }
}

/// Roots of `det I_s` through the block companion matrix of the monic
/// polynomial `M_m^{-1} I_s`; eigenvalues closer than `cluster_tol` are merged.
pub fn indicial_roots(fam: &IndicialFamily, cluster_tol: f64) -> Result<Vec<Root>> {
    let m = fam.degree;
    let lead = &fam.coefficients[m];
    let d = lead.nrows();
    if lead.ncols() != d {
        return Err(Error::SingularLeadingCoefficient);
    }
    if d == 0 || m == 0 {
        return Ok(Vec::new());
    }
    let sv = lead.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 || sv.min() < 1e-12 * smax {
        return Err(Error::SingularLeadingCoefficient);
    }
    let lu = lead.clone().lu();
    let mut comp = DMatrix::<f64>::zeros(m * d, m * d);
    for b in 0..m - 1 {
        for i in 0..d {
            comp[(b * d + i, (b + 1) * d + i)] = 1.0;
        }
    }
    for j in 0..m {
        let a = lu.solve(&fam.coefficients[j]).ok_or(Error::SingularLeadingCoefficient)?;
        comp.view_mut(((m - 1) * d, j * d), (d, d)).copy_from(&(-a));
    }
    let eig = comp.complex_eigenvalues();
    let mut vals: Vec<C64> = eig.iter().cloned().collect();
    vals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    let mut groups: Vec<(C64, usize)> = Vec::new();
    for v in vals {
        match groups.iter_mut().find(|(c, k)| ((*c / *k as f64) - v).norm() <= cluster_tol) {
            Some((c, k)) => {
                *c += v;
                *k += 1;
            }
            None => groups.push((v, 1)),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(c, k)| {
            let z = c / k as f64;
            Root { re: clean(z.re), im: clean(z.im), multiplicity: k }
        })
        .collect())
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-13 {
        0.0
    } else {
        x
    }
}

/// Maximal open interval about `n/2` free of root real parts.
pub fn fredholm_window(roots: &[Root], n: usize) -> Result<WeightWindow> {
    let mid = n as f64 / 2.0;
    let tol = DEFAULT_CLUSTER_TOL;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut degenerate = false;
    for r in roots {
        if (r.re - mid).abs() <= tol {
            if r.im.abs() > tol {
                return Err(Error::RootOnCriticalLine(mid));
            }
            degenerate = true;
        } else if r.re < mid {
            lo = lo.max(r.re);
        } else {
            hi = hi.min(r.re);
        }
    }
    if degenerate {
        return Ok(WeightWindow { lo: mid, hi: mid, n, degenerate });
    }
    Ok(WeightWindow { lo, hi, n, degenerate })
}

/// Total number of roots counted with multiplicity.
pub fn root_count(roots: &[Root]) -> usize {
    roots.iter().map(|r| r.multiplicity).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Space;
    use crate::harmonics::BasisClass;
    use crate::zerodiff::hodge_laplacian;

    fn real_roots(r: &[Root]) -> Vec<(f64, usize)> {
        r.iter().map(|x| (x.re, x.multiplicity)).collect()
    }

    #[test]
    fn laplacian_roots() {
        let space = Space::build(3, 1, BasisClass::Full, 24, 1, 0.5).unwrap();
        let f0 = indicial_family(&hodge_laplacian(&space, 0).unwrap()).unwrap();
        let r0 = indicial_roots(&f0, DEFAULT_CLUSTER_TOL).unwrap();
        assert_eq!(real_roots(&r0), vec![(0.0, 1), (3.0, 1)]);
        let f1 = indicial_family(&hodge_laplacian(&space, 1).unwrap()).unwrap();
        let r1 = indicial_roots(&f1, DEFAULT_CLUSTER_TOL).unwrap();
        let rr: Vec<(i64, usize)> = r1.iter().map(|x| ((x.re * 1e6).round() as i64, x.multiplicity)).collect();
        assert_eq!(rr, vec![(0, 1), (1_000_000, 3), (2_000_000, 3), (3_000_000, 1)]);
        let w = fredholm_window(&r1, 3).unwrap();
        assert!((w.lo - 1.0).abs() < 1e-9 && (w.hi - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_window() {
        let roots = [0.0, 1.0, 1.0, 2.0].map(|re| Root { re, im: 0.0, multiplicity: 1 });
        let w = fredholm_window(&roots, 2).unwrap();
        assert!(w.degenerate && w.lo == 1.0 && w.hi == 1.0);
    }
}
