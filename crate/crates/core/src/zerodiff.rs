//! 0-differential operators in mode-block form.
//!
//! An operator is an expression tree of primitives. Radial primitives are
//! lie-diagonal blocks between collar components whose entries are sums of
//! `c(r) (ρ∂ρ)^j [ρ_c^β ·]` with `ρ_c` the collar bdf; `β > 0` marks
//! tangential multipliers (eigenvalues divided by `sinh s`), which drop out
//! of indicial data. Pointwise bracket primitives are kept as closures over a
//! stored field.

use crate::error::{Error, Result};
use crate::fields::{bracket_interior, part_types, wedge_bracket_any, CompType, Connection, Part, SpaceRef, ZeroForm};
use crate::harmonics::ModeKind;
use nalgebra::DMatrix;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    /// Power of `ρ∂ρ`.
    pub j: usize,
    /// Power of the collar bdf applied before differentiation.
    pub beta: usize,
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEntry {
    pub out: (Part, usize),
    pub inp: (Part, usize),
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    /// `d` on `k`-forms.
    ExteriorD(usize),
    /// `d*` on `k`-forms.
    Codifferential(usize),
    /// Zeroth-order, symmetric under transposition of entries.
    Multiplication,
    /// Coefficients frozen at the boundary.
    Frozen,
}

#[derive(Debug, Clone)]
pub enum Prim {
    Blocks {
        dom: usize,
        cod: usize,
        order: usize,
        tag: Tag,
        entries: Vec<BlockEntry>,
    },
    /// `ω ↦ [f∧ω]`.
    WedgeBracket {
        field: ZeroForm,
        dom: usize,
    },
    /// `ω ↦ [f*⌟ω]`.
    ContractBracket {
        field: ZeroForm,
        dom: usize,
    },
    /// `b ↦ [b*⌟F]` on 1-forms.
    CurvatureTerm {
        field: ZeroForm,
    },
    Zero {
        dom: usize,
        cod: usize,
    },
}

impl Prim {
    fn degrees(&self) -> (usize, usize) {
        match self {
            Prim::Blocks { dom, cod, .. } | Prim::Zero { dom, cod } => (*dom, *cod),
            Prim::WedgeBracket { field, dom } => (*dom, dom + field.degree),
            Prim::ContractBracket { dom, .. } => (*dom, dom - 1),
            Prim::CurvatureTerm { .. } => (1, 1),
        }
    }

    fn order(&self) -> usize {
        match self {
            Prim::Blocks { order, .. } => *order,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Expr {
    Prim(Arc<Prim>),
    /// `A∘B`: apply the second, then the first.
    Compose(Box<Expr>, Box<Expr>),
    Sum(Vec<(f64, Expr)>),
}

#[derive(Debug, Clone)]
pub struct ZeroDiffOp {
    pub name: String,
    pub space: SpaceRef,
    pub dom: usize,
    pub cod: usize,
    pub order: usize,
    pub expr: Expr,
}

/// Which radial components take part in a dense assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKey {
    Scalar(usize),
    Vector(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    All,
    Key { mode: ModeKey, lie: usize },
}

/// Coupling class of a component: exact 1-forms travel with their scalar.
pub fn mode_key(space: &SpaceRef, ty: CompType, c: usize) -> ModeKey {
    match ty {
        CompType::Scalar => ModeKey::Scalar(c),
        CompType::Vector => {
            let v = &space.basis.vectors[c];
            match (v.kind, v.source) {
                (ModeKind::Exact1form, Some(s)) => ModeKey::Scalar(s),
                _ => ModeKey::Vector(c),
            }
        }
    }
}

/// Ordered degrees of freedom `(part, component, lie)`; each carries all
/// radial nodes.
#[derive(Debug, Clone)]
pub struct DofSet {
    pub degree: usize,
    pub items: Vec<(Part, usize, usize)>,
    pos: HashMap<(Part, usize, usize), usize>,
}

impl DofSet {
    pub fn new(space: &SpaceRef, degree: usize, nlie: usize, sel: Selector) -> Self {
        let (nt, tt) = part_types(degree, space.geo.n);
        let mut items = Vec::new();
        for (part, ty) in [(Part::Normal, nt), (Part::Tangential, tt)] {
            let Some(ty) = ty else { continue };
            for c in 0..space.count(ty) {
                for a in 0..nlie {
                    let keep = match sel {
                        Selector::All => true,
                        Selector::Key { mode, lie } => lie == a && mode_key(space, ty, c) == mode,
                    };
                    if keep {
                        items.push((part, c, a));
                    }
                }
            }
        }
        let pos = items.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        DofSet { degree, items, pos }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, part: Part, c: usize, a: usize) -> Option<usize> {
        self.pos.get(&(part, c, a)).copied()
    }

    /// Gather the selected samples of `z` into a flat vector.
    pub fn gather(&self, z: &ZeroForm) -> Vec<f64> {
        let m = z.space.nodes();
        let mut out = Vec::with_capacity(self.len() * m);
        for &(p, c, a) in &self.items {
            out.extend_from_slice(z.block(p).slice(c, a));
        }
        out
    }

    /// Scatter a flat vector into `z` (other samples untouched).
    pub fn scatter(&self, v: &[f64], z: &mut ZeroForm) {
        let m = z.space.nodes();
        for (k, &(p, c, a)) in self.items.iter().enumerate() {
            z.block_mut(p).slice_mut(c, a).copy_from_slice(&v[k * m..(k + 1) * m]);
        }
    }
}

fn ones(m: usize) -> Vec<f64> {
    vec![1.0; m]
}

fn term(j: usize, beta: usize, coef: Vec<f64>) -> Term {
    Term { j, beta, coef }
}

fn sign_pow(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `x / (ρ_c sinh s)` sampled; finite at the boundary.
fn tangential_multiplier(space: &SpaceRef, x: f64) -> Vec<f64> {
    space.geo.rho_sinh.iter().map(|v| x / v).collect()
}

fn require_n3(space: &SpaceRef, k: usize) -> Result<()> {
    if space.geo.n != 3 {
        return Err(Error::UnsupportedDimension(format!("degree-{k} operators need n = 3, got {}", space.geo.n)));
    }
    Ok(())
}

/// Entries of `d` on `k`-forms.
fn exterior_d_entries(space: &SpaceRef, k: usize) -> Result<Vec<BlockEntry>> {
    let basis = &space.basis;
    let geo = &space.geo;
    let m = geo.nodes();
    let coth = |s: f64| geo.coth.iter().map(|c| s * c).collect::<Vec<f64>>();
    let sqrt_lam = |i: usize| basis.scalars[i].eigenvalue.sqrt();
    // exact modes with their source scalar; coexact/invariant modes with curl
    let exact: Vec<(usize, usize)> = basis
        .vectors
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == ModeKind::Exact1form)
        .map(|(j, v)| (j, v.source.unwrap()))
        .collect();
    let curls: Vec<(usize, f64)> = basis
        .vectors
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind != ModeKind::Exact1form)
        .map(|(j, v)| (j, v.curl.unwrap_or(0.0)))
        .collect();
    let mut e = Vec::new();
    let diff_part = |e: &mut Vec<BlockEntry>, count: usize, kk: usize| {
        // normal_out ← tangential_in: ρ∂ρ − k coth
        for c in 0..count {
            e.push(BlockEntry {
                out: (Part::Normal, c),
                inp: (Part::Tangential, c),
                terms: vec![term(1, 0, ones(m)), term(0, 0, coth(-(kk as f64)))],
            });
        }
    };
    match k {
        0 => {
            diff_part(&mut e, basis.n_scalar(), 0);
            for &(j, i) in &exact {
                e.push(BlockEntry {
                    out: (Part::Tangential, j),
                    inp: (Part::Tangential, i),
                    terms: vec![term(0, 1, tangential_multiplier(space, sqrt_lam(i)))],
                });
            }
        }
        1 => {
            require_n3(space, 1)?;
            for &(j, i) in &exact {
                e.push(BlockEntry {
                    out: (Part::Normal, j),
                    inp: (Part::Normal, i),
                    terms: vec![term(0, 1, tangential_multiplier(space, -sqrt_lam(i)))],
                });
            }
            diff_part(&mut e, basis.n_vector(), 1);
            for &(j, kappa) in &curls {
                e.push(BlockEntry {
                    out: (Part::Tangential, j),
                    inp: (Part::Tangential, j),
                    terms: vec![term(0, 1, tangential_multiplier(space, kappa))],
                });
            }
        }
        2 => {
            require_n3(space, 2)?;
            for &(j, kappa) in &curls {
                e.push(BlockEntry {
                    out: (Part::Normal, j),
                    inp: (Part::Normal, j),
                    terms: vec![term(0, 1, tangential_multiplier(space, -kappa))],
                });
            }
            diff_part(&mut e, basis.n_vector(), 2);
            for &(j, i) in &exact {
                e.push(BlockEntry {
                    out: (Part::Tangential, i),
                    inp: (Part::Tangential, j),
                    terms: vec![term(0, 1, tangential_multiplier(space, -sqrt_lam(i)))],
                });
            }
        }
        3 => {
            require_n3(space, 3)?;
            for &(j, i) in &exact {
                e.push(BlockEntry {
                    out: (Part::Normal, i),
                    inp: (Part::Normal, j),
                    terms: vec![term(0, 1, tangential_multiplier(space, sqrt_lam(i)))],
                });
            }
            diff_part(&mut e, basis.n_scalar(), 3);
        }
        _ => return Err(Error::DegreeUnsupported(k)),
    }
    e.retain(|b| !b.terms.iter().all(|t| t.coef.iter().all(|&v| v == 0.0)));
    Ok(e)
}

/// `⋆` on degree-`k` forms as a signed relabeling of parts: returns
/// `(image part, sign)` for each input part.
fn star_part(k: usize, part: Part) -> (Part, f64) {
    match (k, part) {
        (1 | 3, Part::Tangential) => (Part::Normal, -1.0),
        (_, Part::Tangential) => (Part::Normal, 1.0),
        (_, Part::Normal) => (Part::Tangential, 1.0),
    }
}

fn inverse_star_part(k: usize, image: Part) -> (Part, f64) {
    for p in [Part::Normal, Part::Tangential] {
        let (q, s) = star_part(k, p);
        if q == image {
            return (p, s);
        }
    }
    unreachable!()
}

/// `d*` on `k`-forms as `(-1)^{N(k+1)+1} ⋆ d ⋆` (boundary dimension 3).
fn codifferential_by_star(space: &SpaceRef, k: usize) -> Result<Vec<BlockEntry>> {
    let big_n = space.geo.n + 1;
    let inner = exterior_d_entries(space, big_n - k)?;
    let s = sign_pow(big_n * (k + 1) + 1);
    Ok(inner
        .into_iter()
        .map(|e| {
            let (pin, s1) = inverse_star_part(k, e.inp.0);
            let (pout, s2) = star_part(big_n - k + 1, e.out.0);
            let f = s * s1 * s2;
            BlockEntry {
                out: (pout, e.out.1),
                inp: (pin, e.inp.1),
                terms: e
                    .terms
                    .into_iter()
                    .map(|t| Term { coef: t.coef.iter().map(|v| f * v).collect(), ..t })
                    .collect(),
            }
        })
        .collect())
}

/// `d*` on 1-forms written out directly; valid in every dimension.
fn codifferential_one_direct(space: &SpaceRef) -> Vec<BlockEntry> {
    let basis = &space.basis;
    let geo = &space.geo;
    let m = geo.nodes();
    let n = geo.n as f64;
    let mut e = Vec::new();
    for i in 0..basis.n_scalar() {
        e.push(BlockEntry {
            out: (Part::Tangential, i),
            inp: (Part::Normal, i),
            terms: vec![term(1, 0, vec![-1.0; m]), term(0, 0, geo.coth.iter().map(|c| n * c).collect())],
        });
    }
    for (j, v) in basis.vectors.iter().enumerate() {
        if let (ModeKind::Exact1form, Some(i)) = (v.kind, v.source) {
            let sl = basis.scalars[i].eigenvalue.sqrt();
            e.push(BlockEntry {
                out: (Part::Tangential, i),
                inp: (Part::Tangential, j),
                terms: vec![term(0, 1, tangential_multiplier(space, sl))],
            });
        }
    }
    e
}

fn prim_op(space: &SpaceRef, name: impl Into<String>, prim: Prim) -> ZeroDiffOp {
    let (dom, cod) = prim.degrees();
    ZeroDiffOp {
        name: name.into(),
        space: space.clone(),
        dom,
        cod,
        order: prim.order(),
        expr: Expr::Prim(Arc::new(prim)),
    }
}

/// Exterior derivative on `k`-forms. Degrees 0 and 1 are the supported
/// public range; 2 and 3 exist for star conjugation and need `n = 3`.
pub fn build_exterior_d(space: &SpaceRef, k: usize) -> Result<ZeroDiffOp> {
    if k > 3 || (k >= 1 && space.geo.n != 3) {
        return Err(Error::DegreeUnsupported(k));
    }
    let entries = exterior_d_entries(space, k)?;
    Ok(prim_op(space, format!("d{k}"), Prim::Blocks { dom: k, cod: k + 1, order: 1, tag: Tag::ExteriorD(k), entries }))
}

/// Codifferential on `k`-forms.
pub fn build_codifferential(space: &SpaceRef, k: usize) -> Result<ZeroDiffOp> {
    if k == 0 || k > 4 {
        return Err(Error::DegreeUnsupported(k));
    }
    let entries = if space.geo.n == 3 {
        codifferential_by_star(space, k)?
    } else if k == 1 {
        codifferential_one_direct(space)
    } else {
        return Err(Error::DegreeUnsupported(k));
    };
    Ok(prim_op(
        space,
        format!("d{k}*"),
        Prim::Blocks { dom: k, cod: k - 1, order: 1, tag: Tag::Codifferential(k), entries },
    ))
}

/// `d*` on 1-forms from its closed-form expression (independent of the star).
pub fn codifferential_one_explicit(space: &SpaceRef) -> ZeroDiffOp {
    prim_op(
        space,
        "d1*(explicit)",
        Prim::Blocks {
            dom: 1,
            cod: 0,
            order: 1,
            tag: Tag::Codifferential(1),
            entries: codifferential_one_direct(space),
        },
    )
}

/// Multiplication of every component of a degree-`k` form by `f(r)`.
pub fn multiplication(space: &SpaceRef, k: usize, f: &[f64]) -> ZeroDiffOp {
    let (nt, tt) = part_types(k, space.geo.n);
    let mut entries = Vec::new();
    for (part, ty) in [(Part::Normal, nt), (Part::Tangential, tt)] {
        let Some(ty) = ty else { continue };
        for c in 0..space.count(ty) {
            entries.push(BlockEntry { out: (part, c), inp: (part, c), terms: vec![term(0, 0, f.to_vec())] });
        }
    }
    prim_op(space, "mult", Prim::Blocks { dom: k, cod: k, order: 0, tag: Tag::Multiplication, entries })
}

pub fn wedge_bracket_op(field: &ZeroForm, k: usize) -> ZeroDiffOp {
    prim_op(&field.space, "[a∧·]", Prim::WedgeBracket { field: field.clone(), dom: k })
}

pub fn contract_bracket_op(field: &ZeroForm, k: usize) -> ZeroDiffOp {
    prim_op(&field.space, "[a*⌟·]", Prim::ContractBracket { field: field.clone(), dom: k })
}

pub fn curvature_term_op(f: &ZeroForm) -> ZeroDiffOp {
    prim_op(&f.space, "[·*⌟F]", Prim::CurvatureTerm { field: f.clone() })
}

pub fn zero_op(space: &SpaceRef, dom: usize, cod: usize) -> ZeroDiffOp {
    prim_op(space, "0", Prim::Zero { dom, cod })
}

fn apply_prim(prim: &Prim, x: &ZeroForm) -> Result<ZeroForm> {
    let space = &x.space;
    let geo = &space.geo;
    match prim {
        Prim::Blocks { cod, entries, .. } => {
            let mut out = ZeroForm::zeros_with(space.clone(), *cod, x.nlie);
            let m = geo.nodes();
            let mut buf = vec![0.0; m];
            for e in entries {
                let p = x.parity(e.inp.0, e.inp.1);
                for a in 0..x.nlie {
                    let u = x.block(e.inp.0).slice(e.inp.1, a);
                    for t in &e.terms {
                        let v: Vec<f64> = if t.beta > 0 {
                            debug_assert_eq!(t.j, 0, "tangential multiplier under a radial derivative");
                            u.iter().zip(&geo.rho_collar).map(|(u, r)| u * r.powi(t.beta as i32)).collect()
                        } else {
                            u.to_vec()
                        };
                        let w = if t.j > 0 { geo.grid.ds_pow(p, t.j, &v) } else { v };
                        let s = sign_pow(t.j);
                        for i in 0..m {
                            buf[i] = s * t.coef[i] * w[i];
                        }
                        let o = out.block_mut(e.out.0).slice_mut(e.out.1, a);
                        for i in 0..m {
                            o[i] += buf[i];
                        }
                    }
                }
            }
            Ok(out)
        }
        Prim::WedgeBracket { field, .. } => wedge_bracket_any(field, x),
        Prim::ContractBracket { field, .. } => bracket_interior(field, x),
        Prim::CurvatureTerm { field } => bracket_interior(x, field),
        Prim::Zero { cod, .. } => Ok(ZeroForm::zeros_with(space.clone(), *cod, x.nlie)),
    }
}

fn apply_expr(expr: &Expr, x: &ZeroForm) -> Result<ZeroForm> {
    match expr {
        Expr::Prim(p) => apply_prim(p, x),
        Expr::Compose(a, b) => apply_expr(a, &apply_expr(b, x)?),
        Expr::Sum(parts) => {
            let mut acc: Option<ZeroForm> = None;
            for (s, e) in parts {
                let y = apply_expr(e, x)?;
                match acc.as_mut() {
                    None => acc = Some(y.scaled(*s)),
                    Some(z) => z.axpy(*s, &y),
                }
            }
            acc.ok_or_else(|| Error::DegreeMismatch("empty operator sum".into()))
        }
    }
}

fn assemble_prim(
    prim: &Prim,
    space: &SpaceRef,
    nlie: usize,
    dom: &DofSet,
    cod: &DofSet,
    shift: f64,
) -> Result<DMatrix<f64>> {
    let geo = &space.geo;
    let m = geo.nodes();
    let mut mat = DMatrix::zeros(cod.len() * m, dom.len() * m);
    match prim {
        Prim::Blocks { entries, dom: kd, .. } => {
            for e in entries {
                let p = crate::fields::component_parity(&space.basis, *kd, e.inp.0, e.inp.1);
                let mut blk = DMatrix::<f64>::zeros(m, m);
                for t in &e.terms {
                    let mut d = DMatrix::identity(m, m);
                    for k in 0..t.j {
                        // ρ∂ρ = -(d/ds); conjugation by ρ^δ shifts d/ds by -δ r
                        let mut ds = geo.grid.ds[(p + k) % 2].clone();
                        if shift != 0.0 {
                            for i in 0..m {
                                ds[(i, i)] -= shift * geo.r[i];
                            }
                        }
                        d = -ds * d;
                    }
                    if t.beta > 0 {
                        for k in 0..m {
                            let f = geo.rho_collar[k].powi(t.beta as i32);
                            d.column_mut(k).scale_mut(f);
                        }
                    }
                    for i in 0..m {
                        d.row_mut(i).scale_mut(t.coef[i]);
                    }
                    blk += d;
                }
                for a in 0..nlie {
                    let (Some(r), Some(c)) = (cod.position(e.out.0, e.out.1, a), dom.position(e.inp.0, e.inp.1, a))
                    else {
                        continue;
                    };
                    let mut view = mat.view_mut((r * m, c * m), (m, m));
                    view += &blk;
                }
            }
        }
        Prim::Zero { .. } => {}
        _ => {
            // pointwise in r: one application per input component
            let mut x = ZeroForm::zeros_with(space.clone(), dom.degree, nlie);
            for (c, &(p, comp, a)) in dom.items.iter().enumerate() {
                x.block_mut(p).slice_mut(comp, a).iter_mut().for_each(|v| *v = 1.0);
                let y = apply_prim(prim, &x)?;
                x.block_mut(p).slice_mut(comp, a).iter_mut().for_each(|v| *v = 0.0);
                for (r, &(q, rc, b)) in cod.items.iter().enumerate() {
                    let col = y.block(q).slice(rc, b);
                    for i in 0..m {
                        mat[(r * m + i, c * m + i)] = col[i];
                    }
                }
            }
        }
    }
    Ok(mat)
}

fn assemble_expr(expr: &Expr, space: &SpaceRef, nlie: usize, sel: Selector, shift: f64) -> Result<DMatrix<f64>> {
    match expr {
        Expr::Prim(p) => {
            let (d, c) = p.degrees();
            let dom = DofSet::new(space, d, nlie, sel);
            let cod = DofSet::new(space, c, nlie, sel);
            assemble_prim(p, space, nlie, &dom, &cod, shift)
        }
        Expr::Compose(a, b) => {
            Ok(assemble_expr(a, space, nlie, sel, shift)? * assemble_expr(b, space, nlie, sel, shift)?)
        }
        Expr::Sum(parts) => {
            let mut acc: Option<DMatrix<f64>> = None;
            for (s, e) in parts {
                let mtx = assemble_expr(e, space, nlie, sel, shift)? * *s;
                acc = Some(match acc {
                    None => mtx,
                    Some(z) => z + mtx,
                });
            }
            acc.ok_or_else(|| Error::DegreeMismatch("empty operator sum".into()))
        }
    }
}

fn adjoint_expr(expr: &Expr, space: &SpaceRef) -> Result<Expr> {
    Ok(match expr {
        Expr::Prim(p) => Expr::Prim(Arc::new(match &**p {
            Prim::Blocks { tag: Tag::ExteriorD(k), .. } => {
                let op = build_codifferential(space, k + 1)?;
                return Ok(op.expr);
            }
            Prim::Blocks { tag: Tag::Codifferential(k), .. } => {
                let op = build_exterior_d(space, k - 1)?;
                return Ok(op.expr);
            }
            Prim::Blocks { tag: Tag::Multiplication, dom, cod, order, entries } => Prim::Blocks {
                dom: *cod,
                cod: *dom,
                order: *order,
                tag: Tag::Multiplication,
                entries: entries
                    .iter()
                    .map(|e| BlockEntry { out: e.inp, inp: e.out, terms: e.terms.clone() })
                    .collect(),
            },
            Prim::Blocks { tag: Tag::Frozen, .. } => {
                return Err(Error::DegreeMismatch("adjoint of a frozen operator is not tracked".into()))
            }
            Prim::WedgeBracket { field, dom } => Prim::ContractBracket { field: field.clone(), dom: dom + 1 },
            Prim::ContractBracket { field, dom } => Prim::WedgeBracket { field: field.clone(), dom: dom - 1 },
            Prim::CurvatureTerm { field } => Prim::CurvatureTerm { field: field.clone() },
            Prim::Zero { dom, cod } => Prim::Zero { dom: *cod, cod: *dom },
        })),
        Expr::Compose(a, b) => Expr::Compose(Box::new(adjoint_expr(b, space)?), Box::new(adjoint_expr(a, space)?)),
        Expr::Sum(parts) => {
            Expr::Sum(parts.iter().map(|(s, e)| Ok((*s, adjoint_expr(e, space)?))).collect::<Result<_>>()?)
        }
    })
}

/// Formal `L²` adjoint; `d` is mapped to `d*` (and back) by star
/// conjugation, zeroth-order blocks by transposition, compositions reversed.
pub fn formal_adjoint(p: &ZeroDiffOp) -> Result<ZeroDiffOp> {
    let expr = adjoint_expr(&p.expr, &p.space)?;
    Ok(ZeroDiffOp {
        name: format!("({})*", p.name),
        space: p.space.clone(),
        dom: p.cod,
        cod: p.dom,
        order: p.order,
        expr,
    })
}

impl ZeroDiffOp {
    pub fn apply(&self, x: &ZeroForm) -> Result<ZeroForm> {
        if x.degree != self.dom {
            return Err(Error::DegreeMismatch(format!("{} acts on degree {}, got {}", self.name, self.dom, x.degree)));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("input of {}", self.name)));
        }
        apply_expr(&self.expr, x)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &ZeroDiffOp) -> Result<ZeroDiffOp> {
        if other.cod != self.dom {
            return Err(Error::DegreeMismatch(format!("cannot compose {} after {}", self.name, other.name)));
        }
        Ok(ZeroDiffOp {
            name: format!("{}∘{}", self.name, other.name),
            space: self.space.clone(),
            dom: other.dom,
            cod: self.cod,
            order: self.order + other.order,
            expr: Expr::Compose(Box::new(self.expr.clone()), Box::new(other.expr.clone())),
        })
    }

    /// Linear combination `Σ s_i P_i`.
    pub fn combine(parts: &[(f64, &ZeroDiffOp)]) -> Result<ZeroDiffOp> {
        let first = parts.first().ok_or_else(|| Error::DegreeMismatch("empty operator sum".into()))?.1;
        if parts.iter().any(|(_, p)| p.dom != first.dom || p.cod != first.cod) {
            return Err(Error::DegreeMismatch("summands map between different degrees".into()));
        }
        Ok(ZeroDiffOp {
            name: parts.iter().map(|(_, p)| p.name.clone()).collect::<Vec<_>>().join("+"),
            space: first.space.clone(),
            dom: first.dom,
            cod: first.cod,
            order: parts.iter().map(|(_, p)| p.order).max().unwrap_or(0),
            expr: Expr::Sum(parts.iter().map(|(s, p)| (*s, p.expr.clone())).collect()),
        })
    }

    pub fn plus(&self, other: &ZeroDiffOp) -> Result<ZeroDiffOp> {
        Self::combine(&[(1.0, self), (1.0, other)])
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Dense matrix on the selected components (node index fastest).
    pub fn assemble(&self, nlie: usize, sel: Selector) -> Result<DMatrix<f64>> {
        assemble_expr(&self.expr, &self.space, nlie, sel, 0.0)
    }

    /// Dense matrix of `ρ^{-δ} P ρ^{δ}` with `ρ = (1 - r²)/2`.
    pub fn assemble_conjugated(&self, nlie: usize, sel: Selector, delta: f64) -> Result<DMatrix<f64>> {
        assemble_expr(&self.expr, &self.space, nlie, sel, delta)
    }

    /// Whether every primitive is lie-diagonal and keeps mode keys apart,
    /// so that [`Selector::Key`] blocks are exact.
    pub fn is_key_diagonal(&self) -> bool {
        fn walk(e: &Expr, space: &SpaceRef) -> bool {
            match e {
                Expr::Prim(p) => match &**p {
                    Prim::Blocks { dom, cod, entries, .. } => {
                        let (dn, dt) = part_types(*dom, space.geo.n);
                        let (cn, ct) = part_types(*cod, space.geo.n);
                        let ty = |part: Part, n: Option<CompType>, t: Option<CompType>| match part {
                            Part::Normal => n.unwrap(),
                            Part::Tangential => t.unwrap(),
                        };
                        entries.iter().all(|b| {
                            mode_key(space, ty(b.out.0, cn, ct), b.out.1)
                                == mode_key(space, ty(b.inp.0, dn, dt), b.inp.1)
                        })
                    }
                    Prim::Zero { .. } => true,
                    _ => false,
                },
                Expr::Compose(a, b) => walk(a, space) && walk(b, space),
                Expr::Sum(v) => v.iter().all(|(_, e)| walk(e, space)),
            }
        }
        walk(&self.expr, &self.space)
    }

    /// All mode keys present in the domain.
    pub fn keys(&self) -> Vec<ModeKey> {
        let mut keys = Vec::new();
        let (nt, tt) = part_types(self.dom, self.space.geo.n);
        for ty in [nt, tt].into_iter().flatten() {
            for c in 0..self.space.count(ty) {
                let k = mode_key(&self.space, ty, c);
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
        }
        keys
    }

    /// Block dump: primitives with their coefficient samples.
    pub fn to_json(&self) -> Value {
        fn walk(e: &Expr) -> Value {
            match e {
                Expr::Prim(p) => match &**p {
                    Prim::Blocks { dom, cod, order, tag, entries } => json!({
                        "kind": "blocks",
                        "tag": format!("{tag:?}"),
                        "domain_degree": dom,
                        "codomain_degree": cod,
                        "order": order,
                        "blocks": entries.iter().map(|b| json!({
                            "out": [format!("{:?}", b.out.0), b.out.1],
                            "in": [format!("{:?}", b.inp.0), b.inp.1],
                            "terms": b.terms.iter().map(|t| json!({
                                "rho_d_rho_power": t.j,
                                "bdf_power": t.beta,
                                "coefficients": t.coef,
                            })).collect::<Vec<_>>(),
                        })).collect::<Vec<_>>(),
                    }),
                    Prim::WedgeBracket { dom, .. } => json!({"kind": "wedge_bracket", "domain_degree": dom}),
                    Prim::ContractBracket { dom, .. } => json!({"kind": "contract_bracket", "domain_degree": dom}),
                    Prim::CurvatureTerm { .. } => json!({"kind": "curvature_term"}),
                    Prim::Zero { dom, cod } => json!({"kind": "zero", "domain_degree": dom, "codomain_degree": cod}),
                },
                Expr::Compose(a, b) => json!({"kind": "compose", "outer": walk(a), "inner": walk(b)}),
                Expr::Sum(v) => json!({
                    "kind": "sum",
                    "terms": v.iter().map(|(s, e)| json!({"scale": s, "op": walk(e)})).collect::<Vec<_>>(),
                }),
            }
        }
        json!({
            "name": self.name,
            "order": self.order,
            "domain_degree": self.dom,
            "codomain_degree": self.cod,
            "expression": walk(&self.expr),
        })
    }
}

/// Largest boundary sample of a field.
pub(crate) fn boundary_size(f: &ZeroForm) -> f64 {
    let last = f.space.geo.boundary_node();
    let mut worst: f64 = 0.0;
    for blk in [&f.normal, &f.tangential] {
        for c in 0..blk.ncomp {
            for a in 0..blk.nlie {
                worst = worst.max(blk.slice(c, a)[last].abs());
            }
        }
    }
    worst
}

pub(crate) const BOUNDARY_TOL: f64 = 1e-12;

fn normal_expr(expr: &Expr, space: &SpaceRef) -> Result<Expr> {
    Ok(match expr {
        Expr::Prim(p) => {
            let last = space.geo.boundary_node();
            let m = space.nodes();
            let prim = match &**p {
                Prim::Blocks { dom, cod, order, entries, .. } => Prim::Blocks {
                    dom: *dom,
                    cod: *cod,
                    order: *order,
                    tag: Tag::Frozen,
                    entries: entries
                        .iter()
                        .map(|e| BlockEntry {
                            out: e.out,
                            inp: e.inp,
                            terms: e.terms.iter().map(|t| Term { coef: vec![t.coef[last]; m], ..t.clone() }).collect(),
                        })
                        .collect(),
                },
                Prim::WedgeBracket { field, .. }
                | Prim::ContractBracket { field, .. }
                | Prim::CurvatureTerm { field } => {
                    if boundary_size(field) > BOUNDARY_TOL {
                        return Err(Error::NoBoundaryLimit("twisting field does not vanish at the boundary".into()));
                    }
                    let (d, c) = p.degrees();
                    Prim::Zero { dom: d, cod: c }
                }
                Prim::Zero { dom, cod } => Prim::Zero { dom: *dom, cod: *cod },
            };
            Expr::Prim(Arc::new(prim))
        }
        Expr::Compose(a, b) => Expr::Compose(Box::new(normal_expr(a, space)?), Box::new(normal_expr(b, space)?)),
        Expr::Sum(v) => Expr::Sum(v.iter().map(|(s, e)| Ok((*s, normal_expr(e, space)?))).collect::<Result<_>>()?),
    })
}

/// Normal operator: every coefficient frozen at its boundary value. The
/// ball model is rotation invariant, so the boundary point only labels the
/// result.
pub fn normal_operator(p: &ZeroDiffOp, point: usize) -> Result<ZeroDiffOp> {
    Ok(ZeroDiffOp {
        name: format!("N_{point}({})", p.name),
        space: p.space.clone(),
        dom: p.dom,
        cod: p.cod,
        order: p.order,
        expr: normal_expr(&p.expr, &p.space)?,
    })
}

/// Fibre basis of `Λ^k(R^N)`: increasing index tuples.
pub fn fibre_basis(big_n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, big_n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..big_n {
            cur.push(i);
            rec(i + 1, big_n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, big_n, k, &mut Vec::new(), &mut out);
    out
}

/// Matrix of `ξ∧` from `Λ^k` to `Λ^{k+1}` (real coefficients only).
pub fn wedge_matrix(xi: &[f64], k: usize) -> DMatrix<f64> {
    let big_n = xi.len();
    let src = fibre_basis(big_n, k);
    let dst = fibre_basis(big_n, k + 1);
    let idx: HashMap<Vec<usize>, usize> = dst.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
    let mut m = DMatrix::zeros(dst.len(), src.len());
    for (c, set) in src.iter().enumerate() {
        for (i, &x) in xi.iter().enumerate() {
            if x == 0.0 || set.contains(&i) {
                continue;
            }
            let before = set.iter().filter(|&&s| s < i).count();
            let mut t = set.clone();
            t.push(i);
            t.sort_unstable();
            m[(idx[&t], c)] += sign_pow(before) * x;
        }
    }
    m
}

fn kron_identity(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows() * d, m.ncols() * d, |i, j| if i % d == j % d { m[(i / d, j / d)] } else { 0.0 })
}

fn symbol_expr(expr: &Expr, xi: &[f64], nlie: usize) -> (usize, DMatrix<f64>) {
    match expr {
        Expr::Prim(p) => {
            let (d, c) = p.degrees();
            let big_n = xi.len();
            let dim = |k: usize| fibre_basis(big_n, k).len() * nlie;
            match &**p {
                Prim::Blocks { tag: Tag::ExteriorD(k), .. } => (1, kron_identity(&wedge_matrix(xi, *k), nlie)),
                Prim::Blocks { tag: Tag::Codifferential(k), .. } => {
                    (1, -kron_identity(&wedge_matrix(xi, k - 1).transpose(), nlie))
                }
                Prim::Blocks { order, .. } => (*order, DMatrix::zeros(dim(c), dim(d))),
                _ => (0, DMatrix::zeros(dim(c), dim(d))),
            }
        }
        Expr::Compose(a, b) => {
            let (oa, ma) = symbol_expr(a, xi, nlie);
            let (ob, mb) = symbol_expr(b, xi, nlie);
            (oa + ob, ma * mb)
        }
        Expr::Sum(v) => {
            let parts: Vec<(f64, (usize, DMatrix<f64>))> =
                v.iter().map(|(s, e)| (*s, symbol_expr(e, xi, nlie))).collect();
            let top = parts.iter().map(|(_, (o, _))| *o).max().unwrap_or(0);
            let mut acc = parts[0].1 .1.clone() * 0.0;
            for (s, (o, m)) in parts {
                if o == top {
                    acc += m * s;
                }
            }
            (top, acc)
        }
    }
}

/// Principal 0-symbol at the 0-covector `xi = (ξ_0, ξ_1, …, ξ_n)` in the
/// orthonormal coframe `(dρ/ρ, dy/ρ)`, as a matrix on `Λ^k(R^{n+1}) ⊗ g`
/// (fibre basis index major, Lie index minor). The convention is
/// `σ(ρ∂ρ) = ξ_0`, so `σ(d) = ξ∧`, `σ(d*) = -ξ⌟` and `σ(Δ) = -|ξ|²`.
/// Purely zeroth-order operators get the zero symbol.
pub fn principal_symbol(p: &ZeroDiffOp, xi: &[f64]) -> Result<DMatrix<f64>> {
    if xi.len() != p.space.geo.n + 1 {
        return Err(Error::DegreeMismatch(format!(
            "covector has {} components, expected {}",
            xi.len(),
            p.space.geo.n + 1
        )));
    }
    let (order, m) = symbol_expr(&p.expr, xi, p.space.lie.dim());
    if order < p.order {
        return Ok(m * 0.0);
    }
    Ok(m)
}

/// Connection-dependent operators.
#[derive(Debug, Clone)]
pub struct OperatorSuite {
    pub connection: Connection,
    /// `d_A` on degrees 0 and 1.
    pub d_a: [ZeroDiffOp; 2],
    /// `d_A*` on degrees 1 and 2.
    pub d_a_star: [ZeroDiffOp; 2],
    pub delta_a: ZeroDiffOp,
    pub l_a: ZeroDiffOp,
    pub p_a0: ZeroDiffOp,
    pub curvature: ZeroForm,
}

/// `F_A = dã + ½[ã∧ã]` relative to the flat trivial reference.
pub fn curvature(a: &Connection) -> Result<ZeroForm> {
    let at = a.tilde();
    if !at.is_finite() {
        return Err(Error::NonFinite("connection".into()));
    }
    let d1 = build_exterior_d(a.space(), 1)?;
    let mut f = d1.apply(&at)?;
    f.axpy(0.5, &wedge_bracket_any(&at, &at)?);
    Ok(f)
}

pub fn twist_suite(a: &Connection) -> Result<OperatorSuite> {
    let space = a.space().clone();
    let at = a.tilde();
    if !at.is_finite() {
        return Err(Error::NonFinite("connection".into()));
    }
    let d0 = build_exterior_d(&space, 0)?;
    let d1 = build_exterior_d(&space, 1)?;
    let d_a0 = d0.plus(&wedge_bracket_op(&at, 0))?.named("dA0");
    let d_a1 = d1.plus(&wedge_bracket_op(&at, 1))?.named("dA1");
    let ds1 = formal_adjoint(&d_a0)?.named("dA1*");
    let ds2 = formal_adjoint(&d_a1)?.named("dA2*");
    let delta_a = ds1.compose(&d_a0)?.named("Delta_A");
    let f = curvature(a)?;
    let l_a = ZeroDiffOp::combine(&[
        (1.0, &ds2.compose(&d_a1)?),
        (1.0, &d_a0.compose(&ds1)?),
        (1.0, &curvature_term_op(&f)),
    ])?
    .named("L_A");
    let p_a0 = build_codifferential(&space, 2)?.compose(&d1)?.named("P_A0");
    Ok(OperatorSuite {
        connection: a.clone(),
        d_a: [d_a0, d_a1],
        d_a_star: [ds1, ds2],
        delta_a,
        l_a,
        p_a0,
        curvature: f,
    })
}

/// Hodge Laplacian `d*d + dd*` on `k`-forms for the trivial connection
/// (functions: `d*d`).
pub fn hodge_laplacian(space: &SpaceRef, k: usize) -> Result<ZeroDiffOp> {
    let up = build_codifferential(space, k + 1)?.compose(&build_exterior_d(space, k)?)?;
    if k == 0 {
        return Ok(up.named("Delta_0"));
    }
    let down = build_exterior_d(space, k - 1)?.compose(&build_codifferential(space, k)?)?;
    Ok(up.plus(&down)?.named(format!("Delta_{k}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Space;
    use crate::harmonics::BasisClass;

    fn smooth(space: &SpaceRef, k: usize, seed: f64) -> ZeroForm {
        let mut z = ZeroForm::zeros(space.clone(), k);
        let basis = space.basis.clone();
        z.fill(|part, c, a, r| {
            let p = crate::fields::component_parity(&basis, k, part, c) as i32;
            let ell = crate::fields::component_ell(&basis, k, part, c) as i32;
            let p = ell + 2 + (p - ell).rem_euclid(2);
            let w = seed + 0.37 * c as f64 + 0.11 * a as f64 + if part == Part::Normal { 0.5 } else { 0.0 };
            r.powi(p) * (1.0 - r * r).powi(4) * (w + r * r).cos()
        });
        z
    }

    #[test]
    fn d_squared_vanishes() {
        let space = Space::build(3, 2, BasisClass::Full, 40, 1, 0.5).unwrap();
        for k in 0..3 {
            let d0 = build_exterior_d(&space, k).unwrap();
            let d1 = build_exterior_d(&space, k + 1).unwrap();
            let u = smooth(&space, k, 0.3);
            let r = d1.apply(&d0.apply(&u).unwrap()).unwrap();
            assert!(r.max_abs() < 1e-10, "k={k}: {}", r.max_abs());
        }
    }

    #[test]
    fn star_codifferential_matches_closed_form() {
        let space = Space::build(3, 2, BasisClass::Full, 32, 1, 0.5).unwrap();
        let a = build_codifferential(&space, 1).unwrap();
        let b = codifferential_one_explicit(&space);
        let x = smooth(&space, 1, 0.1);
        let diff = a.apply(&x).unwrap().minus(&b.apply(&x).unwrap());
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn adjointness_in_l2() {
        let space = Space::build(3, 2, BasisClass::Full, 40, 1, 0.5).unwrap();
        for k in 0..3 {
            let d = build_exterior_d(&space, k).unwrap();
            let ds = formal_adjoint(&d).unwrap();
            let u = smooth(&space, k, 0.2);
            let v = smooth(&space, k + 1, 0.9);
            let lhs = d.apply(&u).unwrap().dot_l2(&v);
            let rhs = u.dot_l2(&ds.apply(&v).unwrap());
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()), "k={k}: {lhs} vs {rhs}");
        }
    }
}
