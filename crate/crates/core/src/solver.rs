//! Weighted linear solves, the gauge-fixed Yang–Mills map, Newton
//! continuation and decay diagnostics.

use crate::error::{Error, Result};
use crate::fields::{
    bracket_interior, component_parity, wedge_bracket, BoundaryData, Connection, Part, SpaceRef, ZeroForm,
};
use crate::gauge::{extend_boundary, CutoffSpec};
use crate::geometry::{weighted_norm, WeightedNormSpec};
use crate::indicial::{
    class_family, collar_classes, fredholm_window, indicial_family, indicial_roots, IndicialFamily, WeightWindow,
    DEFAULT_CLUSTER_TOL,
};
use crate::zerodiff::{build_codifferential, build_exterior_d, hodge_laplacian, DofSet, Selector, ZeroDiffOp};
use nalgebra::{DMatrix, DVector, LU};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOpts {
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking factor of the line search.
    pub damping: f64,
    pub continuation_step: f64,
    pub delta: f64,
    /// Largest weighted sup norm of `a` accepted by the gauge projection.
    pub trust_radius: f64,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { tol: 1e-10, max_iter: 30, damping: 0.5, continuation_step: 0.05, delta: 1.5, trust_radius: 5.0 }
    }
}

impl NewtonOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 1.0 && self.delta < 2.0) {
            return Err(Error::OutOfRange(format!("delta = {} must lie in (1, 2)", self.delta)));
        }
        if !(self.tol > 0.0) || !(self.damping > 0.0 && self.damping < 1.0) || !(self.continuation_step > 0.0) {
            return Err(Error::OutOfRange("newton tolerances must be positive, damping in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Condition imposed in place of the collocation equation at `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryRow {
    /// Value vanishes: removes the root-0 branch.
    Dirichlet,
    /// Value and radial derivative vanish: removes the root-0 and root-1
    /// branches when only the latter solves the indicial equation.
    Neumann,
    /// No root below the weight; keep the equation.
    Collocation,
}

fn scalar_roots(coefs: &[f64]) -> Result<Vec<f64>> {
    let mut c = coefs.to_vec();
    while c.len() > 1 && c.last().unwrap().abs() < 1e-14 {
        c.pop();
    }
    if c.len() <= 1 {
        return Ok(Vec::new());
    }
    let fam = IndicialFamily {
        degree: c.len() - 1,
        coefficients: c.iter().map(|v| DMatrix::from_element(1, 1, *v)).collect(),
        source: String::new(),
        n: 0,
        domain_labels: vec![],
        codomain_labels: vec![],
    };
    Ok(indicial_roots(&fam, DEFAULT_CLUSTER_TOL)?
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.re, r.multiplicity))
        .collect())
}

/// Boundary row per collar class of the (square) operator, chosen from the
/// class's indicial roots lying below `delta`.
pub fn boundary_rows(op: &ZeroDiffOp, delta: f64) -> Result<Vec<(Part, BoundaryRow)>> {
    let poly = class_family(op)?;
    let classes = collar_classes(&op.space, op.dom);
    let mut all_roots: Option<Vec<f64>> = None;
    let mut out = Vec::new();
    for (c, (part, _, _)) in classes.iter().enumerate() {
        let coupled = poly.iter().any(|m| (0..classes.len()).any(|k| k != c && (m[(c, k)] != 0.0 || m[(k, c)] != 0.0)));
        let roots = if coupled {
            if all_roots.is_none() {
                let fam = indicial_family(op)?;
                all_roots = Some(indicial_roots(&fam, DEFAULT_CLUSTER_TOL)?.iter().map(|r| r.re).collect());
            }
            all_roots.clone().unwrap_or_default()
        } else {
            scalar_roots(&poly.iter().map(|m| m[(c, c)]).collect::<Vec<_>>())?
        };
        let below: Vec<f64> = roots.into_iter().filter(|&s| s < delta).collect();
        let rule = if below.is_empty() {
            BoundaryRow::Collocation
        } else if below.iter().all(|s| s.abs() < 1e-8) {
            BoundaryRow::Dirichlet
        } else if below.iter().all(|s| (s - 1.0).abs() < 1e-8) {
            BoundaryRow::Neumann
        } else {
            return Err(Error::LinearSolveFailure(format!(
                "roots {below:?} below the weight cannot be removed by one boundary row"
            )));
        };
        out.push((*part, rule));
    }
    Ok(out)
}

pub fn operator_window(op: &ZeroDiffOp) -> Result<WeightWindow> {
    let fam = indicial_family(op)?;
    let roots = indicial_roots(&fam, DEFAULT_CLUSTER_TOL)?;
    fredholm_window(&roots, op.space.geo.n)
}

struct Group {
    dofs: DofSet,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Factorized boundary problem for a square 0-operator at weight `delta`,
/// solved for the smooth coefficients with one boundary row per component.
pub struct WeightedSolver {
    pub op: ZeroDiffOp,
    pub delta: f64,
    pub window: WeightWindow,
    pub rows: Vec<(Part, BoundaryRow)>,
    pub condition_estimate: f64,
    groups: Vec<Group>,
    nlie: usize,
}

impl WeightedSolver {
    pub fn new(op: &ZeroDiffOp, delta: f64) -> Result<Self> {
        if op.dom != op.cod {
            return Err(Error::DegreeMismatch("weighted solve needs a square operator".into()));
        }
        let window = operator_window(op)?;
        if !window.contains(delta) {
            return Err(Error::WeightOutsideWindow { delta, lo: window.lo, hi: window.hi });
        }
        let rows = boundary_rows(op, delta)?;
        let space = op.space.clone();
        let nlie = space.lie.dim();
        let selectors: Vec<Selector> = if op.is_key_diagonal() {
            op.keys().into_iter().flat_map(|mode| (0..nlie).map(move |lie| Selector::Key { mode, lie })).collect()
        } else {
            vec![Selector::All]
        };
        let mut groups = Vec::new();
        let mut cond: f64 = 1.0;
        for sel in selectors {
            let dofs = DofSet::new(&space, op.dom, nlie, sel);
            if dofs.is_empty() {
                continue;
            }
            let mut mat = op.assemble(nlie, sel)?;
            constrain_matrix(&space, op.dom, &rows, &dofs, &mut mat);
            let lu = mat.lu();
            let diag: Vec<f64> = lu.u().diagonal().iter().map(|v| v.abs()).collect();
            let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = diag.iter().cloned().fold(0.0, f64::max);
            let c = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if !(c <= 1e12) {
                return Err(Error::IllConditioned(c));
            }
            cond = cond.max(c);
            groups.push(Group { dofs, lu });
        }
        Ok(WeightedSolver { op: op.clone(), delta, window, rows, condition_estimate: cond, groups, nlie })
    }

    pub fn solve(&self, f: &ZeroForm) -> Result<ZeroForm> {
        if !f.is_finite() {
            return Err(Error::NonFinite("right-hand side".into()));
        }
        let space = &self.op.space;
        let m = space.nodes();
        let last = m - 1;
        let mut out = ZeroForm::zeros_with(space.clone(), self.op.dom, self.nlie);
        for g in &self.groups {
            let mut rhs = DVector::from_vec(g.dofs.gather(f));
            for (k, &(p, c, _)) in g.dofs.items.iter().enumerate() {
                let blk = &mut rhs.as_mut_slice()[k * m..(k + 1) * m];
                match self.rule(p) {
                    BoundaryRow::Collocation => {}
                    BoundaryRow::Dirichlet => blk[last] = 0.0,
                    BoundaryRow::Neumann => {
                        let phi = tau_vector(space, component_parity(&space.basis, self.op.dom, p, c));
                        project_tau(&phi, blk);
                        blk[last - 1] = 0.0;
                    }
                }
            }
            let x = g.lu.solve(&rhs).ok_or_else(|| Error::LinearSolveFailure("singular block".into()))?;
            g.dofs.scatter(x.as_slice(), &mut out);
        }
        if !out.is_finite() {
            return Err(Error::LinearSolveFailure("non-finite solution".into()));
        }
        Ok(out)
    }

    /// Solve with a right-hand side already in constrained form (as built
    /// by [`WeightedSolver::constrain`]): boundary slots carry the values
    /// the boundary functionals must take.
    pub fn solve_constrained(&self, y: &ZeroForm) -> Result<ZeroForm> {
        if !y.is_finite() {
            return Err(Error::NonFinite("right-hand side".into()));
        }
        let mut out = ZeroForm::zeros_with(self.op.space.clone(), self.op.dom, self.nlie);
        for g in &self.groups {
            let rhs = DVector::from_vec(g.dofs.gather(y));
            let x = g.lu.solve(&rhs).ok_or_else(|| Error::LinearSolveFailure("singular block".into()))?;
            g.dofs.scatter(x.as_slice(), &mut out);
        }
        Ok(out)
    }

    pub fn rule(&self, part: Part) -> BoundaryRow {
        self.rows.iter().find(|(p, _)| *p == part).map_or(BoundaryRow::Collocation, |r| r.1)
    }

    /// Turn a raw residual `y` at the iterate `x` into the residual of the
    /// discrete equations actually solved: boundary rows hold the boundary
    /// functionals of `x`, tau components are projected.
    pub fn constrain(&self, y: &mut ZeroForm, x: &ZeroForm) {
        let space = &self.op.space;
        let m = space.nodes();
        let last = m - 1;
        for &(part, rule) in &self.rows {
            for c in 0..x.block(part).ncomp {
                let par = x.parity(part, c);
                for a in 0..x.nlie {
                    let u = x.block(part).slice(c, a);
                    let yv = y.block_mut(part).slice_mut(c, a);
                    match rule {
                        BoundaryRow::Collocation => {}
                        BoundaryRow::Dirichlet => yv[last] = u[last],
                        BoundaryRow::Neumann => {
                            project_tau(&tau_vector(space, par), yv);
                            yv[last - 1] = (0..m).map(|i| space.geo.grid.dr[par][(last, i)] * u[i]).sum();
                        }
                    }
                }
            }
        }
    }

    /// Largest absolute value of a constrained residual on the boundary
    /// node and the derivative slots, and the residual with those cleared.
    pub fn split_boundary(&self, y: &ZeroForm) -> (f64, ZeroForm) {
        let last = self.op.space.geo.boundary_node();
        let mut worst: f64 = 0.0;
        let mut rest = y.clone();
        for part in [Part::Normal, Part::Tangential] {
            let rule = self.rule(part);
            let blk = rest.block_mut(part);
            for c in 0..blk.ncomp {
                for a in 0..blk.nlie {
                    let v = blk.slice_mut(c, a);
                    let slots: &[usize] = if rule == BoundaryRow::Neumann { &[last, last - 1] } else { &[last] };
                    for &i in slots {
                        worst = worst.max(v[i].abs());
                        v[i] = 0.0;
                    }
                }
            }
        }
        (worst, rest)
    }
}

/// Nodal values of the top Chebyshev polynomial of the given parity.
fn tau_vector(space: &SpaceRef, parity: usize) -> Vec<f64> {
    let m = space.nodes();
    let deg = (2 * (m - 1) + parity) as f64;
    space.geo.r.iter().map(|r| (deg * r.clamp(-1.0, 1.0).acos()).cos()).collect()
}

/// Remove the tau direction so that the slot next to the boundary is free.
fn project_tau(phi: &[f64], y: &mut [f64]) {
    let k = phi.len() - 2;
    let t = y[k] / phi[k];
    for (v, p) in y.iter_mut().zip(phi) {
        *v -= t * p;
    }
}

/// Apply the boundary treatment to an assembled group matrix.
///
/// `Dirichlet` replaces the degenerate boundary collocation row by
/// `u(1) = 0`. `Neumann` keeps every collocation row up to a tau term in
/// the top Chebyshev mode and adds `u'(1) = 0`, which removes the root-1
/// branch without a boundary layer.
fn constrain_matrix(
    space: &SpaceRef,
    degree: usize,
    rows: &[(Part, BoundaryRow)],
    dofs: &DofSet,
    mat: &mut DMatrix<f64>,
) {
    let m = space.nodes();
    let last = m - 1;
    for (k, &(p, c, _)) in dofs.items.iter().enumerate() {
        let rule = rows.iter().find(|(q, _)| *q == p).map_or(BoundaryRow::Collocation, |r| r.1);
        match rule {
            BoundaryRow::Collocation => {}
            BoundaryRow::Dirichlet => {
                let row = k * m + last;
                mat.row_mut(row).fill(0.0);
                mat[(row, row)] = 1.0;
            }
            BoundaryRow::Neumann => {
                let par = component_parity(&space.basis, degree, p, c);
                let phi = tau_vector(space, par);
                for j in 0..mat.ncols() {
                    let mut col: Vec<f64> = (0..m).map(|i| mat[(k * m + i, j)]).collect();
                    project_tau(&phi, &mut col);
                    for i in 0..m {
                        mat[(k * m + i, j)] = col[i];
                    }
                }
                let row = k * m + last - 1;
                mat.row_mut(row).fill(0.0);
                for i in 0..m {
                    mat[(row, k * m + i)] = space.geo.grid.dr[par][(last, i)];
                }
            }
        }
    }
}

/// Solve `L a = f` in the weighted space of rate `delta`.
pub fn solve_weighted_linear(op: &ZeroDiffOp, f: &ZeroForm, delta: f64) -> Result<ZeroForm> {
    WeightedSolver::new(op, delta)?.solve(f)
}

/// Smallest singular value of the discretized `ρ^{-δ} L ρ^{δ}` in the
/// b-weighted `L²` norm, for each radial resolution.
///
/// Trial functions omit the top Chebyshev mode of each parity class: the
/// nodal derivative squared nearly annihilates it at interior nodes, which
/// would otherwise show up as a spurious small singular value.
pub fn kernel_probe<F>(build: F, delta: f64, resolutions: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<ZeroDiffOp>,
{
    let mut out = Vec::new();
    for &res in resolutions {
        let op = build(res)?;
        let space = op.space.clone();
        let geo = &space.geo;
        let m = geo.nodes();
        let n = geo.n as i32;
        let mut sw: Vec<f64> = (0..m)
            .map(|i| {
                let r = geo.r[i];
                if i + 1 == m {
                    0.0
                } else {
                    (geo.radial_weights[0][i] * 2.0 / (1.0 - r * r) * r.powi(n)).sqrt()
                }
            })
            .collect();
        sw[m - 1] = sw[m - 2];
        let nlie = space.lie.dim();
        let selectors: Vec<Selector> = if op.is_key_diagonal() {
            op.keys().into_iter().flat_map(|mode| (0..nlie).map(move |lie| Selector::Key { mode, lie })).collect()
        } else {
            vec![Selector::All]
        };
        let mut smin = f64::INFINITY;
        for sel in selectors {
            let dofs = DofSet::new(&space, op.dom, nlie, sel);
            if dofs.is_empty() {
                continue;
            }
            let mat = op.assemble_conjugated(nlie, sel, delta)?;
            let mut trial = DMatrix::zeros(mat.ncols(), dofs.items.len() * (m - 1));
            for (k, &(p, c, _)) in dofs.items.iter().enumerate() {
                let par = component_parity(&space.basis, op.dom, p, c);
                for q in 0..m - 1 {
                    let deg = (2 * q + par) as f64;
                    for i in 0..m {
                        trial[(k * m + i, k * (m - 1) + q)] = (deg * geo.r[i].clamp(-1.0, 1.0).acos()).cos();
                    }
                }
            }
            let weighted = DMatrix::from_fn(trial.nrows(), trial.ncols(), |i, j| trial[(i, j)] * sw[i % m]);
            let rinv = weighted
                .qr()
                .r()
                .try_inverse()
                .ok_or_else(|| Error::LinearSolveFailure("degenerate probe basis".into()))?;
            let a = DMatrix::from_fn(mat.nrows(), mat.ncols(), |i, j| mat[(i, j)] * sw[i % m]);
            let sv = (a * trial * rinv).svd(false, false).singular_values;
            smin = smin.min(sv.min());
        }
        out.push(smin);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub log_flag: bool,
    pub quality: f64,
}

fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let a = DMatrix::from_fn(y.len(), cols.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).expect("svd solve");
    let r = &a * &x - &b;
    let rms = (r.norm_squared() / y.len() as f64).sqrt();
    (x.as_slice().to_vec(), rms)
}

/// Fit `|field(ρ)| ≈ C ρ^δ (|log ρ|)^κ` over nodes with `ρ` in the window.
/// The log term is reported when the pure power law fits poorly and the
/// augmented fit improves it tenfold.
pub fn decay_fit(field: &ZeroForm, window: (f64, f64)) -> Result<DecayFit> {
    let geo = &field.space.geo;
    let norms = field.node_norms();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ll = Vec::new();
    for (i, &rho) in geo.rho.iter().enumerate() {
        if rho >= window.0 && rho <= window.1 {
            if norms[i] <= 1e-300 {
                return Err(Error::FieldTooSmall);
            }
            xs.push(rho.ln());
            ys.push(norms[i].ln());
            ll.push(rho.ln().abs().ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::FieldTooSmall);
    }
    let one = vec![1.0; xs.len()];
    let (p, q) = least_squares(&[xs.clone(), one.clone()], &ys);
    if q < 1e-7 {
        return Ok(DecayFit { exponent: p[0], log_flag: false, quality: q });
    }
    let (p2, q2) = least_squares(&[xs, ll, one], &ys);
    if q2 < 0.1 * q {
        Ok(DecayFit { exponent: p2[0], log_flag: true, quality: q2 })
    } else {
        Ok(DecayFit { exponent: p[0], log_flag: false, quality: q })
    }
}

/// The gauge-fixed Yang–Mills map for fixed boundary data.
pub struct YangMillsMap {
    pub space: SpaceRef,
    pub gamma: BoundaryData,
    pub cutoff: CutoffSpec,
    pub extension: ZeroForm,
    d0: ZeroDiffOp,
    d1: ZeroDiffOp,
    ds1: ZeroDiffOp,
    ds2: ZeroDiffOp,
}

impl YangMillsMap {
    pub fn new(space: &SpaceRef, gamma: &BoundaryData, cutoff: CutoffSpec) -> Result<Self> {
        Ok(YangMillsMap {
            space: space.clone(),
            gamma: gamma.clone(),
            cutoff,
            extension: extend_boundary(space, gamma, &cutoff),
            d0: build_exterior_d(space, 0)?,
            d1: build_exterior_d(space, 1)?,
            ds1: build_codifferential(space, 1)?,
            ds2: build_codifferential(space, 2)?,
        })
    }

    pub fn curvature(&self, a: &ZeroForm) -> Result<ZeroForm> {
        let at = self.extension.plus(a);
        let mut f = self.d1.apply(&at)?;
        f.axpy(0.5, &wedge_bracket(&at, &at)?);
        Ok(f)
    }

    /// `d*_{A₀+e(γ)} a`.
    pub fn slice_residual(&self, a: &ZeroForm) -> Result<ZeroForm> {
        let mut s = self.ds1.apply(a)?;
        s.axpy(1.0, &bracket_interior(&self.extension, a)?);
        Ok(s)
    }

    /// Boundary rows for the unknown `a`, imposed on the full form
    /// `e(γ) + a`. Near `r = 1` the extension is the analytic profile
    /// `γ (1 - r²)/(2r)`, whose radial derivative there is `-γ`; imposing
    /// the rows on the sum keeps the non-analytic cutoff out of them.
    pub fn constrain(&self, solver: &WeightedSolver, y: &mut ZeroForm, a: &ZeroForm) {
        let total = self.extension.plus(a);
        solver.constrain(y, &total);
        if solver.rule(Part::Tangential) == BoundaryRow::Neumann {
            let slot = self.space.geo.boundary_node() - 1;
            let blk = y.block_mut(Part::Tangential);
            for j in 0..blk.ncomp {
                for al in 0..blk.nlie {
                    blk.slice_mut(j, al)[slot] += self.gamma.get(j, al);
                }
            }
        }
    }

    /// `d*_A F_A`.
    pub fn ym_residual(&self, a: &ZeroForm) -> Result<ZeroForm> {
        let at = self.extension.plus(a);
        let f = self.curvature(a)?;
        let mut y = self.ds2.apply(&f)?;
        y.axpy(1.0, &bracket_interior(&at, &f)?);
        Ok(y)
    }

    /// `𝒴(A) = d*_A F_A + d_A d*_{A₀+e(γ)} a`.
    pub fn eval(&self, a: &ZeroForm) -> Result<ZeroForm> {
        if !a.is_finite() {
            return Err(Error::NonFinite("connection".into()));
        }
        let at = self.extension.plus(a);
        let s = self.slice_residual(a)?;
        let mut y = self.ym_residual(a)?;
        y.axpy(1.0, &self.d0.apply(&s)?);
        y.axpy(1.0, &wedge_bracket(&at, &s)?);
        Ok(y)
    }

    /// The same map through its expansion about `A₀`:
    /// `P e + L a + ½d*[ã∧ã] + [ã*⌟dã] + ½[ã*⌟[ã∧ã]] + d[e*⌟a] + [ã∧d*a] + [ã∧[e*⌟a]]`.
    pub fn eval_expanded(&self, a: &ZeroForm) -> Result<ZeroForm> {
        let e = &self.extension;
        let at = e.plus(a);
        let mut y = self.ds2.apply(&self.d1.apply(e)?)?;
        let la = hodge_laplacian(&self.space, 1)?;
        y.axpy(1.0, &la.apply(a)?);
        let aa = wedge_bracket(&at, &at)?;
        y.axpy(0.5, &self.ds2.apply(&aa)?);
        y.axpy(1.0, &bracket_interior(&at, &self.d1.apply(&at)?)?);
        y.axpy(0.5, &bracket_interior(&at, &aa)?);
        let ea = bracket_interior(e, a)?;
        y.axpy(1.0, &self.d0.apply(&ea)?);
        y.axpy(1.0, &wedge_bracket(&at, &self.ds1.apply(a)?)?);
        y.axpy(1.0, &wedge_bracket(&at, &ea)?);
        Ok(y)
    }
}

/// `𝒴_{A₀}(A)` in direct form.
pub fn assemble_y(a: &Connection) -> Result<ZeroForm> {
    YangMillsMap::new(a.space(), &a.gamma, a.cutoff)?.eval(&a.a)
}

/// `𝒴_{A₀}(A)` through the expansion about `A₀`.
pub fn assemble_y_expanded(a: &Connection) -> Result<ZeroForm> {
    YangMillsMap::new(a.space(), &a.gamma, a.cutoff)?.eval_expanded(&a.a)
}

/// Right-preconditioned GMRES without restart. Returns the solution and
/// the relative residual history.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    precond: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let beta = dot(b, b).sqrt();
    if beta == 0.0 {
        return Ok((vec![0.0; n], vec![0.0]));
    }
    let mut v: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    let mut h = DMatrix::<f64>::zeros(max_iter + 1, max_iter);
    let mut cs = vec![0.0; max_iter];
    let mut sn = vec![0.0; max_iter];
    let mut g = vec![0.0; max_iter + 1];
    g[0] = beta;
    let mut hist = vec![1.0];
    let mut k_done = 0;
    for k in 0..max_iter {
        let zk = precond(&v[k])?;
        let mut w = apply(&zk)?;
        z.push(zk);
        for (i, vi) in v.iter().enumerate() {
            let hik = dot(&w, vi);
            h[(i, k)] = hik;
            w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hik * b);
        }
        let hn = dot(&w, &w).sqrt();
        h[(k + 1, k)] = hn;
        for i in 0..k {
            let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
            h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
            h[(i, k)] = t;
        }
        let den = (h[(k, k)].powi(2) + h[(k + 1, k)].powi(2)).sqrt();
        cs[k] = h[(k, k)] / den;
        sn[k] = h[(k + 1, k)] / den;
        h[(k, k)] = den;
        h[(k + 1, k)] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] *= cs[k];
        k_done = k + 1;
        hist.push(g[k + 1].abs() / beta);
        if g[k + 1].abs() <= tol * beta || hn == 0.0 {
            break;
        }
        v.push(w.iter().map(|x| x / hn).collect());
    }
    let mut y = vec![0.0; k_done];
    for i in (0..k_done).rev() {
        let mut s = g[i];
        for j in i + 1..k_done {
            s -= h[(i, j)] * y[j];
        }
        y[i] = s / h[(i, i)];
    }
    let mut x = vec![0.0; n];
    for (yi, zi) in y.iter().zip(&z) {
        x.iter_mut().zip(zi).for_each(|(a, b)| *a += yi * b);
    }
    Ok((x, hist))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub amplitude: f64,
    pub residuals: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub krylov_iterations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub amplitude: f64,
    pub a: ZeroForm,
    pub steps: Vec<StepRecord>,
    pub newton_iterations: usize,
    pub ym_residual_norm: f64,
    pub slice_residual_norm: f64,
    pub decay: Option<DecayFit>,
    pub condition_estimate: f64,
    pub delta: f64,
}

impl SolveReport {
    pub fn residual_history(&self) -> Vec<f64> {
        self.steps.iter().flat_map(|s| s.residuals.iter().cloned()).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "amplitude": self.amplitude,
            "delta": self.delta,
            "newton_iterations": self.newton_iterations,
            "residual_history": self.residual_history(),
            "continuation": self.steps,
            "ym_residual_norm": self.ym_residual_norm,
            "slice_residual_norm": self.slice_residual_norm,
            "decay": self.decay,
            "condition_estimate": self.condition_estimate,
            "solution_max_abs": self.a.max_abs(),
        })
    }

    /// CSV with columns `iter,residual,step_length` over all continuation steps.
    pub fn convergence_csv(&self) -> String {
        let mut s = String::from("iter,residual,step_length\n");
        let mut it = 0;
        for st in &self.steps {
            for (k, r) in st.residuals.iter().enumerate() {
                let len = if k == 0 { 0.0 } else { st.step_lengths[k - 1] };
                let _ = writeln!(s, "{it},{r:.11e},{len:.11e}");
                it += 1;
            }
        }
        s
    }
}

/// Weighted sup norm of a residual plus its boundary-row defect.
fn residual_norm(solver: &WeightedSolver, y: &ZeroForm, delta: f64) -> Result<f64> {
    let (bc, rest) = solver.split_boundary(y);
    Ok(weighted_norm(&y.space.geo, &rest, WeightedNormSpec::sup(delta))?.max(bc))
}

/// Solve `𝒴_{A₀}(A₀ + e(γ) + a) = 0` for `γ = amplitude · gamma_unit`,
/// continuing in the amplitude from `a = 0`.
pub fn solve_bvp(
    space: &SpaceRef,
    gamma_unit: &BoundaryData,
    amplitude: f64,
    cutoff: CutoffSpec,
    opts: &NewtonOpts,
) -> Result<SolveReport> {
    opts.validate()?;
    let l = hodge_laplacian(space, 1)?;
    let probe = kernel_probe(|_| Ok(l.clone()), opts.delta, &[space.nodes()])?;
    if probe[0] < 1e-8 {
        return Err(Error::KernelDetected(probe));
    }
    let solver = WeightedSolver::new(&l, opts.delta)?;
    let mut a = ZeroForm::zeros(space.clone(), 1);
    let mut steps = Vec::new();
    let mut total = 0;
    let mut amps = Vec::new();
    let mut t = 0.0;
    while t < amplitude.abs() - 1e-15 {
        t = (t + opts.continuation_step).min(amplitude.abs());
        amps.push(t * amplitude.signum());
    }
    if amps.is_empty() {
        amps.push(0.0);
    }
    let mut last_map = None;
    for &amp in &amps {
        let map = YangMillsMap::new(space, &gamma_unit.scaled(amp), cutoff)?;
        let residual = |x: &ZeroForm| -> Result<ZeroForm> {
            let mut y = map.eval(x)?;
            map.constrain(&solver, &mut y, x);
            Ok(y)
        };
        let mut rec = StepRecord { amplitude: amp, residuals: vec![], step_lengths: vec![], krylov_iterations: vec![] };
        let mut r = residual(&a)?;
        let mut rn = residual_norm(&solver, &r, opts.delta)?;
        rec.residuals.push(rn);
        let mut it = 0;
        while rn > opts.tol {
            if it == opts.max_iter {
                return Err(Error::NewtonDiverged(format!(
                    "no convergence at amplitude {amp} after {it} iterations (residual {rn:e})"
                )));
            }
            let base = a.clone();
            let mut jv = |v: &[f64]| -> Result<Vec<f64>> {
                let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if vmax == 0.0 {
                    return Ok(vec![0.0; v.len()]);
                }
                let h = 0.1 / vmax;
                let mut dir = base.zeros_like();
                dir.set_from_slice(v);
                let at = |s: f64| -> Result<Vec<f64>> {
                    let mut x = base.clone();
                    x.axpy(s, &dir);
                    Ok(residual(&x)?.to_vec())
                };
                let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
                // five-point stencil, exact for the cubic map
                Ok((0..v.len()).map(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h)).collect())
            };
            let mut pre = |v: &[f64]| -> Result<Vec<f64>> {
                let mut f = base.zeros_like();
                f.set_from_slice(v);
                Ok(solver.solve_constrained(&f)?.to_vec())
            };
            let rhs: Vec<f64> = r.to_vec().iter().map(|x| -x).collect();
            let (dx, hist) = gmres(&mut jv, &mut pre, &rhs, 1e-13, 60)?;
            rec.krylov_iterations.push(hist.len() - 1);
            let mut dir = a.zeros_like();
            dir.set_from_slice(&dx);
            let mut lambda = 1.0;
            loop {
                let mut trial = a.clone();
                trial.axpy(lambda, &dir);
                let rt = residual(&trial)?;
                let tn = residual_norm(&solver, &rt, opts.delta)?;
                if tn < (1.0 - 1e-4 * lambda) * rn || tn <= opts.tol {
                    a = trial;
                    r = rt;
                    rn = tn;
                    break;
                }
                lambda *= opts.damping;
                if lambda < 1e-6 {
                    return Err(Error::NewtonDiverged(format!(
                        "line search failed at amplitude {amp} (residual {rn:e})"
                    )));
                }
            }
            rec.step_lengths.push(lambda);
            rec.residuals.push(rn);
            it += 1;
        }
        total += it;
        steps.push(rec);
        last_map = Some(map);
    }
    let map = last_map.expect("at least one continuation step");
    let spec = WeightedNormSpec::sup(opts.delta);
    let ym = weighted_norm(&space.geo, &map.ym_residual(&a)?, spec)?;
    let sl = weighted_norm(&space.geo, &map.slice_residual(&a)?, spec)?;
    let decay = if a.max_abs() > 0.0 { decay_fit(&a, (1e-3, 1e-1)).ok() } else { None };
    Ok(SolveReport {
        amplitude,
        a,
        steps,
        newton_iterations: total,
        ym_residual_norm: ym,
        slice_residual_norm: sl,
        decay,
        condition_estimate: solver.condition_estimate,
        delta: opts.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_a_small_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 2.0]);
        let b = [1.0, 2.0, 3.0];
        let mut apply = |x: &[f64]| Ok((&a * DVector::from_column_slice(x)).as_slice().to_vec());
        let mut id = |x: &[f64]| Ok(x.to_vec());
        let (x, hist) = gmres(&mut apply, &mut id, &b, 1e-14, 10).unwrap();
        let r = &a * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
        assert!(r.norm() < 1e-12, "{}", r.norm());
        assert!(hist.len() <= 4);
    }

    #[test]
    fn newton_opts_validation() {
        assert!(NewtonOpts::default().validate().is_ok());
        assert!(NewtonOpts { damping: 1.0, ..Default::default() }.validate().is_err());
        assert!(NewtonOpts { delta: 2.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|t| 2.5 * t - 1.0).collect();
        let (p, rms) = least_squares(&[x, vec![1.0; 10]], &y);
        assert!((p[0] - 2.5).abs() < 1e-12 && (p[1] + 1.0).abs() < 1e-12 && rms < 1e-12);
    }
}
