//! Lie-algebra-valued 0-forms in collar decomposition and their pointwise
//! algebra.
//!
//! A degree-`k` form is `e⁰∧α + β` with `e⁰ = dρ/ρ` and `α`, `β` tangential.
//! Tangential forms are expanded in the harmonic basis, scaled by the
//! orthonormal 0-frame: a tangential `t`-form contributes "scalar type"
//! components for `t ∈ {0, 3}` and "vector type" components for `t ∈ {1, 2}`,
//! degree 2 being identified with degree 1 by the boundary star.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::harmonics::{CouplingTensors, ModeBasis};
use crate::lie::LieAlgebraSpec;
use std::fmt::Write as _;
use std::sync::Arc;

/// Everything a field needs to be interpreted: radial grid, boundary modes,
/// structure group and product tables.
#[derive(Debug)]
pub struct Space {
    pub geo: Geometry,
    pub basis: ModeBasis,
    pub lie: LieAlgebraSpec,
    pub tensors: CouplingTensors,
}

pub type SpaceRef = Arc<Space>;

impl Space {
    pub fn new(geo: Geometry, basis: ModeBasis, lie: LieAlgebraSpec, tensors: CouplingTensors) -> Result<SpaceRef> {
        if geo.n != basis.n {
            return Err(Error::DegreeMismatch(format!("geometry dimension {} vs basis dimension {}", geo.n, basis.n)));
        }
        Ok(Arc::new(Space { geo, basis, lie, tensors }))
    }

    /// Geometry, basis (with default coupling quadrature) and `u(r)` in one go.
    pub fn build(
        n: usize,
        l_max: usize,
        class: crate::harmonics::BasisClass,
        grid_points: usize,
        r: usize,
        epsilon: f64,
    ) -> Result<SpaceRef> {
        let geo = crate::geometry::build_geometry(n, grid_points, epsilon)?;
        let basis = crate::harmonics::build_mode_basis(n, l_max, class)?;
        let deg = crate::harmonics::default_quadrature_degree(&basis);
        let tensors = crate::harmonics::coupling_tensors(&basis, deg)?;
        Space::new(geo, basis, LieAlgebraSpec::unitary(r), tensors)
    }

    pub fn nodes(&self) -> usize {
        self.geo.nodes()
    }

    pub fn count(&self, t: CompType) -> usize {
        match t {
            CompType::Scalar => self.basis.n_scalar(),
            CompType::Vector => self.basis.n_vector(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompType {
    Scalar,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Normal,
    Tangential,
}

/// Component type of a tangential form of degree `t` (boundary dimension 3
/// for `t ≥ 2`).
pub fn tangential_type(t: usize) -> CompType {
    match t {
        0 | 3 => CompType::Scalar,
        _ => CompType::Vector,
    }
}

/// `(normal, tangential)` component types of a degree-`k` form.
pub fn part_types(k: usize, n: usize) -> (Option<CompType>, Option<CompType>) {
    let normal = (k >= 1).then(|| tangential_type(k - 1));
    let tangential = (k <= n).then(|| tangential_type(k));
    (normal, tangential)
}

/// Samples indexed by (component, Lie generator, node).
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ncomp: usize,
    pub nlie: usize,
    pub m: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn zeros(ncomp: usize, nlie: usize, m: usize) -> Self {
        Block { ncomp, nlie, m, data: vec![0.0; ncomp * nlie * m] }
    }

    #[inline]
    pub fn idx(&self, c: usize, a: usize, i: usize) -> usize {
        (c * self.nlie + a) * self.m + i
    }

    pub fn slice(&self, c: usize, a: usize) -> &[f64] {
        let s = self.idx(c, a, 0);
        &self.data[s..s + self.m]
    }

    pub fn slice_mut(&mut self, c: usize, a: usize) -> &mut [f64] {
        let s = self.idx(c, a, 0);
        let m = self.m;
        &mut self.data[s..s + m]
    }

    pub fn copy_from(&mut self, other: &Block) {
        self.data.copy_from_slice(&other.data);
    }

    pub fn copy_scaled(&mut self, other: &Block, s: f64) {
        for (d, o) in self.data.iter_mut().zip(&other.data) {
            *d = s * o;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ZeroForm {
    pub degree: usize,
    pub space: SpaceRef,
    pub nlie: usize,
    pub normal: Block,
    pub tangential: Block,
    pub weight_tag: Option<f64>,
}

impl ZeroForm {
    /// Zero Lie-algebra-valued form.
    pub fn zeros(space: SpaceRef, degree: usize) -> Self {
        let nlie = space.lie.dim();
        Self::zeros_with(space, degree, nlie)
    }

    /// Zero form with `nlie` real components per sample (1 for scalar fields).
    pub fn zeros_with(space: SpaceRef, degree: usize, nlie: usize) -> Self {
        let (nt, tt) = part_types(degree, space.geo.n);
        let m = space.nodes();
        let nc = |t: Option<CompType>| t.map_or(0, |t| space.count(t));
        ZeroForm {
            degree,
            nlie,
            normal: Block::zeros(nc(nt), nlie, m),
            tangential: Block::zeros(nc(tt), nlie, m),
            space,
            weight_tag: None,
        }
    }

    /// Fill from `f(part, component, lie, r)`.
    pub fn from_fn(space: SpaceRef, degree: usize, f: impl Fn(Part, usize, usize, f64) -> f64) -> Self {
        let mut z = Self::zeros(space, degree);
        z.fill(f);
        z
    }

    pub fn fill(&mut self, f: impl Fn(Part, usize, usize, f64) -> f64) {
        let r = self.space.geo.r.clone();
        for (part, blk) in [(Part::Normal, &mut self.normal), (Part::Tangential, &mut self.tangential)] {
            for c in 0..blk.ncomp {
                for a in 0..blk.nlie {
                    for (i, ri) in r.iter().enumerate() {
                        let k = blk.idx(c, a, i);
                        blk.data[k] = f(part, c, a, *ri);
                    }
                }
            }
        }
    }

    pub fn part_type(&self, part: Part) -> Option<CompType> {
        let (n, t) = part_types(self.degree, self.space.geo.n);
        match part {
            Part::Normal => n,
            Part::Tangential => t,
        }
    }

    pub fn block(&self, part: Part) -> &Block {
        match part {
            Part::Normal => &self.normal,
            Part::Tangential => &self.tangential,
        }
    }

    pub fn block_mut(&mut self, part: Part) -> &mut Block {
        match part {
            Part::Normal => &mut self.normal,
            Part::Tangential => &mut self.tangential,
        }
    }

    /// Radial parity of a component, as required by smoothness at the center.
    pub fn parity(&self, part: Part, comp: usize) -> usize {
        component_parity(&self.space.basis, self.degree, part, comp)
    }

    pub fn is_finite(&self) -> bool {
        self.normal.data.iter().chain(&self.tangential.data).all(|v| v.is_finite())
    }

    /// `L²(S^n)` size of the field at every radial node.
    pub fn node_norms(&self) -> Vec<f64> {
        let m = self.space.nodes();
        let mut acc = vec![0.0; m];
        for blk in [&self.normal, &self.tangential] {
            for c in 0..blk.ncomp {
                for a in 0..blk.nlie {
                    for (i, v) in blk.slice(c, a).iter().enumerate() {
                        acc[i] += v * v;
                    }
                }
            }
        }
        acc.iter().map(|v| v.sqrt()).collect()
    }

    /// Node sizes of `(ρ∂ρ)^j` of the field for `j = 1..=order`, summed.
    pub fn derivative_node_norms(&self, order: usize) -> Vec<f64> {
        let geo = &self.space.geo;
        let m = geo.nodes();
        let mut total = vec![0.0; m];
        for j in 1..=order {
            let mut acc = vec![0.0; m];
            for part in [Part::Normal, Part::Tangential] {
                let blk = self.block(part);
                for c in 0..blk.ncomp {
                    let p = self.parity(part, c);
                    for a in 0..blk.nlie {
                        let d = geo.grid.ds_pow(p, j, blk.slice(c, a));
                        for i in 0..m {
                            acc[i] += d[i] * d[i];
                        }
                    }
                }
            }
            for i in 0..m {
                total[i] += acc[i].sqrt();
            }
        }
        total
    }

    pub fn max_abs(&self) -> f64 {
        self.normal.data.iter().chain(&self.tangential.data).fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_shape(&self, other: &ZeroForm) {
        assert_eq!(self.degree, other.degree, "degree mismatch");
        assert_eq!(self.nlie, other.nlie, "Lie dimension mismatch");
    }

    pub fn axpy(&mut self, s: f64, other: &ZeroForm) {
        self.check_shape(other);
        for (d, o) in self.normal.data.iter_mut().zip(&other.normal.data) {
            *d += s * o;
        }
        for (d, o) in self.tangential.data.iter_mut().zip(&other.tangential.data) {
            *d += s * o;
        }
    }

    pub fn scaled(&self, s: f64) -> ZeroForm {
        let mut z = self.clone();
        z.normal.data.iter_mut().chain(z.tangential.data.iter_mut()).for_each(|v| *v *= s);
        z
    }

    pub fn plus(&self, other: &ZeroForm) -> ZeroForm {
        let mut z = self.clone();
        z.axpy(1.0, other);
        z
    }

    pub fn minus(&self, other: &ZeroForm) -> ZeroForm {
        let mut z = self.clone();
        z.axpy(-1.0, other);
        z
    }

    pub fn zeros_like(&self) -> ZeroForm {
        Self::zeros_with(self.space.clone(), self.degree, self.nlie)
    }

    /// `L²` pairing with respect to `dVol_g`; integrands must decay at the
    /// boundary.
    pub fn dot_l2(&self, other: &ZeroForm) -> f64 {
        self.check_shape(other);
        let w = &self.space.geo.quad_weights;
        let mut s = 0.0;
        for (x, y) in [(&self.normal, &other.normal), (&self.tangential, &other.tangential)] {
            for c in 0..x.ncomp {
                for a in 0..x.nlie {
                    for (i, (u, v)) in x.slice(c, a).iter().zip(y.slice(c, a)).enumerate() {
                        s += w[i] * u * v;
                    }
                }
            }
        }
        s
    }

    /// Flat copy of all samples (normal block first).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.normal.data.clone();
        v.extend_from_slice(&self.tangential.data);
        v
    }

    pub fn set_from_slice(&mut self, v: &[f64]) {
        let k = self.normal.data.len();
        self.normal.data.copy_from_slice(&v[..k]);
        self.tangential.data.copy_from_slice(&v[k..]);
    }

    pub fn len(&self) -> usize {
        self.normal.data.len() + self.tangential.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with columns `mode_id,lie_id,node,r_e,normal_value,tangential_value`;
    /// `mode_id` follows `ModeBasis::modes` (scalars first).
    pub fn to_csv(&self) -> String {
        let ns = self.space.basis.n_scalar();
        let nv = self.space.basis.n_vector();
        let r = &self.space.geo.r;
        let off = |t: Option<CompType>| match t {
            Some(CompType::Vector) => ns,
            _ => 0,
        };
        let noff = off(self.part_type(Part::Normal));
        let toff = off(self.part_type(Part::Tangential));
        let mut s = String::from("mode_id,lie_id,node,r_e,normal_value,tangential_value\n");
        for mode in 0..ns + nv {
            let nc = mode.checked_sub(noff).filter(|&c| c < self.normal.ncomp);
            let tc = mode.checked_sub(toff).filter(|&c| c < self.tangential.ncomp);
            if nc.is_none() && tc.is_none() {
                continue;
            }
            for a in 0..self.nlie {
                for (i, ri) in r.iter().enumerate() {
                    let nvv = nc.map_or(0.0, |c| self.normal.slice(c, a)[i]);
                    let tv = tc.map_or(0.0, |c| self.tangential.slice(c, a)[i]);
                    let _ = writeln!(s, "{mode},{a},{i},{ri:.11e},{nvv:.11e},{tv:.11e}");
                }
            }
        }
        s
    }
}

/// Parity rule of every collar component (boundary dimension 3 for the
/// higher degrees).
pub fn component_parity(basis: &ModeBasis, degree: usize, part: Part, comp: usize) -> usize {
    let s = |c: usize| basis.scalars[c].parity;
    let v = |c: usize| basis.vectors[c].parity;
    match (degree, part) {
        (0, _) => s(comp),
        (1, Part::Normal) => s(comp) + 1,
        (1, Part::Tangential) => v(comp),
        (2, _) => v(comp) + 1,
        (3, Part::Normal) => v(comp),
        (3, Part::Tangential) => s(comp) + 1,
        (_, _) => s(comp),
    }
    .rem_euclid(2)
}

/// Angular degree `ℓ` of a collar component.
pub fn component_ell(basis: &ModeBasis, degree: usize, part: Part, comp: usize) -> usize {
    let vector = matches!((degree, part), (1, Part::Tangential) | (2, _) | (3, Part::Normal));
    if vector {
        basis.vectors[comp].ell
    } else {
        basis.scalars[comp].ell
    }
}

/// Lie coupling `(a, b, c, coef)`: output generator `c` gets `coef·u^a·v^b`.
pub type LieTable = Vec<(usize, usize, usize, f64)>;

/// Bracket `[X_a, X_b] = f_abc X_c`.
pub fn bracket_table(lie: &LieAlgebraSpec) -> LieTable {
    lie.bracket_table()
}

/// Inner product into a single real component.
pub fn inner_table(nlie: usize) -> LieTable {
    (0..nlie).map(|a| (a, a, 0, 1.0)).collect()
}

/// Scalar (one component) times Lie-valued.
pub fn scale_table(nlie: usize) -> LieTable {
    (0..nlie).map(|b| (0, b, b, 1.0)).collect()
}

/// Pointwise product of tangential forms of degrees `tu`, `tv`, Galerkin
/// projected; accumulated into `out` with factor `sign`.
fn tangential_product(
    tensors: &CouplingTensors,
    out: &mut Block,
    tu: usize,
    u: &Block,
    tv: usize,
    v: &Block,
    sign: f64,
    lie: &LieTable,
) {
    if tu + tv > 3 || u.is_empty() || v.is_empty() {
        return;
    }
    let m = out.m;
    let mut emit = |i: usize, j: usize, k: usize, val: f64, swap: bool| {
        for &(a, b, c, coef) in lie {
            let f = sign * val * coef;
            let (us, vs) = if swap { (u.slice(j, a), v.slice(i, b)) } else { (u.slice(i, a), v.slice(j, b)) };
            let base = out.idx(k, c, 0);
            for p in 0..m {
                out.data[base + p] += f * us[p] * vs[p];
            }
        }
    };
    let (ut, vt) = (tangential_type(tu), tangential_type(tv));
    match (ut, vt) {
        (CompType::Scalar, CompType::Scalar) => {
            for e in &tensors.scalar3 {
                emit(e.i, e.j, e.k, e.value, false);
            }
        }
        (CompType::Scalar, CompType::Vector) => {
            for e in &tensors.scalar_vector {
                emit(e.i, e.j, e.k, e.value, false);
            }
        }
        (CompType::Vector, CompType::Scalar) => {
            // u vector index j, v scalar index i
            for e in &tensors.scalar_vector {
                emit(e.i, e.j, e.k, e.value, true);
            }
        }
        (CompType::Vector, CompType::Vector) => {
            if tu == 1 && tv == 1 {
                for e in &tensors.vector3 {
                    emit(e.i, e.j, e.k, e.value, false);
                }
            } else {
                // v∧⋆w = (v·w) vol: scalar index is the first tensor slot
                for e in &tensors.scalar_vector {
                    emit(e.j, e.k, e.i, e.value, false);
                }
            }
        }
    }
}

fn require_n3(space: &Space, what: &str) -> Result<()> {
    if space.geo.n != 3 {
        return Err(Error::UnsupportedDimension(format!("{what} is implemented for n = 3")));
    }
    Ok(())
}

/// Generic graded wedge with a Lie coupling table; output has `nlie_out`
/// components. Degrees up to 4 are allowed here.
pub fn wedge_with(u: &ZeroForm, v: &ZeroForm, lie: &LieTable, nlie_out: usize) -> Result<ZeroForm> {
    let (j, k) = (u.degree, v.degree);
    let space = u.space.clone();
    if j + k > space.geo.n + 1 {
        return Err(Error::DegreeOverflow(j + k));
    }
    if j + k >= 2 {
        require_n3(&space, "wedge into degree two and higher")?;
    }
    let mut out = ZeroForm::zeros_with(space.clone(), j + k, nlie_out);
    let t = &space.tensors;
    let sign_j = if j % 2 == 0 { 1.0 } else { -1.0 };
    // normal: α1∧β2 + (-1)^j β1∧α2 ; tangential: β1∧β2
    if j >= 1 {
        tangential_product(t, &mut out.normal, j - 1, &u.normal, k, &v.tangential, 1.0, lie);
    }
    if k >= 1 {
        tangential_product(t, &mut out.normal, j, &u.tangential, k - 1, &v.normal, sign_j, lie);
    }
    if j + k <= space.geo.n {
        tangential_product(t, &mut out.tangential, j, &u.tangential, k, &v.tangential, 1.0, lie);
    }
    Ok(out)
}

/// Graded bracket-wedge `[u∧v]` of Lie-valued forms.
pub fn wedge_bracket(u: &ZeroForm, v: &ZeroForm) -> Result<ZeroForm> {
    if u.degree + v.degree > 2 {
        return Err(Error::DegreeOverflow(u.degree + v.degree));
    }
    let lie = bracket_table(&u.space.lie);
    wedge_with(u, v, &lie, u.space.lie.dim())
}

/// Bracket-wedge without the stored-degree restriction (for transient
/// degree-3 and degree-4 intermediates).
pub fn wedge_bracket_any(u: &ZeroForm, v: &ZeroForm) -> Result<ZeroForm> {
    let lie = bracket_table(&u.space.lie);
    wedge_with(u, v, &lie, u.space.lie.dim())
}

/// Pointwise inner product `⟨u, v⟩` of same-degree forms, as a real function.
pub fn pointwise_inner(u: &ZeroForm, v: &ZeroForm) -> Result<ZeroForm> {
    if u.degree != v.degree {
        return Err(Error::DegreeMismatch(format!("{} vs {}", u.degree, v.degree)));
    }
    let space = u.space.clone();
    let lie = inner_table(u.nlie);
    let mut out = ZeroForm::zeros_with(space.clone(), 0, 1);
    let t = &space.tensors;
    for part in [Part::Normal, Part::Tangential] {
        let Some(ty) = u.part_type(part) else { continue };
        // scalar·scalar uses (0,0); vector·vector uses the dot slot (1,2)
        let (tu, tv) = match ty {
            CompType::Scalar => (0, 0),
            CompType::Vector => (1, 2),
        };
        tangential_product(t, &mut out.tangential, tu, u.block(part), tv, v.block(part), 1.0, &lie);
    }
    Ok(out)
}

/// Interior product `a⌟ω`, the pointwise adjoint of `a∧·`, evaluated as
/// `(-1)^{(k-1)(N-k)} ⋆(a∧⋆ω)` in dimension `N = n + 1`.
pub fn interior_with(a: &ZeroForm, omega: &ZeroForm, lie: &LieTable, nlie_out: usize) -> Result<ZeroForm> {
    if a.degree != 1 {
        return Err(Error::DegreeMismatch(format!("interior product needs a 1-form, got degree {}", a.degree)));
    }
    let k = omega.degree;
    if k == 0 {
        return Err(Error::DegreeMismatch("interior product into a function".into()));
    }
    let geo = &a.space.geo;
    let big_n = geo.n + 1;
    let star_w = crate::geometry::hodge_star(geo, omega)?;
    let wedge = wedge_with(a, &star_w, lie, nlie_out)?;
    let res = crate::geometry::hodge_star(geo, &wedge)?;
    let sign = if ((k - 1) * (big_n - k)).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(res.scaled(sign))
}

pub fn interior_product(a: &ZeroForm, omega: &ZeroForm) -> Result<ZeroForm> {
    if omega.nlie == 1 && a.nlie == 1 {
        return interior_with(a, omega, &vec![(0, 0, 0, 1.0)], 1);
    }
    if a.nlie == 1 {
        return interior_with(a, omega, &scale_table(omega.nlie), omega.nlie);
    }
    Err(Error::DegreeMismatch("interior_product expects a real 1-form; use bracket_interior".into()))
}

/// `[a*⌟ω] = Σ (a^α⌟ω^β)[X_α*, X_β] = -Σ (a^α⌟ω^β)[X_α, X_β]`.
pub fn bracket_interior(a: &ZeroForm, omega: &ZeroForm) -> Result<ZeroForm> {
    let lie: LieTable = bracket_table(&a.space.lie).into_iter().map(|(x, y, z, f)| (x, y, z, -f)).collect();
    interior_with(a, omega, &lie, a.space.lie.dim())
}

/// Data of the boundary 1-form `γ`: coefficients on tangential modes times
/// Lie generators, `coefs[j * nlie + α]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub coefs: Vec<f64>,
    pub nlie: usize,
}

impl BoundaryData {
    pub fn zeros(space: &Space) -> Self {
        BoundaryData { coefs: vec![0.0; space.basis.n_vector() * space.lie.dim()], nlie: space.lie.dim() }
    }

    pub fn get(&self, j: usize, a: usize) -> f64 {
        self.coefs[j * self.nlie + a]
    }

    pub fn set(&mut self, j: usize, a: usize, v: f64) {
        self.coefs[j * self.nlie + a] = v;
    }

    pub fn scaled(&self, s: f64) -> Self {
        BoundaryData { coefs: self.coefs.iter().map(|v| v * s).collect(), nlie: self.nlie }
    }

    pub fn norm(&self) -> f64 {
        self.coefs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coefs.iter().all(|&v| v == 0.0)
    }
}

/// Reference connection; only the trivial flat connection is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Trivial,
}

/// `A = A₀ + e(γ) + a` with `a` decaying like `ρ^δ`.
#[derive(Debug, Clone)]
pub struct Connection {
    pub a0: Reference,
    pub gamma: BoundaryData,
    pub a: ZeroForm,
    pub delta: f64,
    pub cutoff: crate::gauge::CutoffSpec,
}

impl Connection {
    pub fn new(gamma: BoundaryData, a: ZeroForm, delta: f64, cutoff: crate::gauge::CutoffSpec) -> Self {
        let mut a = a;
        a.weight_tag = Some(delta);
        Connection { a0: Reference::Trivial, gamma, a, delta, cutoff }
    }

    pub fn trivial(space: &SpaceRef, delta: f64, cutoff: crate::gauge::CutoffSpec) -> Self {
        Connection::new(BoundaryData::zeros(space), ZeroForm::zeros(space.clone(), 1), delta, cutoff)
    }

    pub fn space(&self) -> &SpaceRef {
        &self.a.space
    }

    /// `e(γ)`.
    pub fn extension(&self) -> ZeroForm {
        crate::gauge::extend_boundary(self.space(), &self.gamma, &self.cutoff)
    }

    /// `ã = e(γ) + a`, the full connection form relative to `A₀`.
    pub fn tilde(&self) -> ZeroForm {
        self.extension().plus(&self.a)
    }

    /// Decomposition `(γ, a)`.
    pub fn parts(&self) -> (BoundaryData, ZeroForm) {
        (self.gamma.clone(), self.a.clone())
    }

    /// Boundary 1-form of `A - A₀`: `γ` plus the genuine trace of `a`.
    ///
    /// A 0-frame tangential coefficient `q` corresponds to the genuine form
    /// `q·sinh(s)`, whose limit at `r = 1` equals `-∂_r q(1)`.
    pub fn boundary_restriction(&self) -> BoundaryData {
        let geo = &self.space().geo;
        let mut out = self.gamma.clone();
        let last = geo.boundary_node();
        for j in 0..self.a.tangential.ncomp {
            let p = self.a.parity(Part::Tangential, j);
            for al in 0..self.a.nlie {
                let q = self.a.tangential.slice(j, al);
                let d: f64 = (0..geo.nodes()).map(|k| geo.grid.dr[p][(last, k)] * q[k]).sum();
                out.coefs[j * out.nlie + al] -= d;
            }
        }
        out
    }
}
