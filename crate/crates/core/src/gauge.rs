//! Gauge transformations fixing the boundary, the extension map and the
//! Coulomb slice.

use crate::error::{Error, Result};
use crate::fields::{bracket_interior, wedge_with, BoundaryData, Connection, LieTable, Part, SpaceRef, ZeroForm};
use crate::geometry::{weighted_norm, WeightedNormSpec};
use crate::lie::{LieAlgebraSpec, C64};
use crate::solver::{gmres, NewtonOpts, WeightedSolver};
use crate::zerodiff::{build_codifferential, build_exterior_d, hodge_laplacian, ZeroDiffOp};
use nalgebra::DMatrix;

/// Smooth cutoff `χ` in the special bdf: `1` on `[0, ε/3]`, `0` on `[2ε/3, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub epsilon: f64,
}

impl CutoffSpec {
    pub fn new(epsilon: f64) -> Self {
        CutoffSpec { epsilon }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let a = self.epsilon / 3.0;
        if rho <= a {
            return 1.0;
        }
        if rho >= 2.0 * a {
            return 0.0;
        }
        let t = (rho - a) / a;
        let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
        f(1.0 - t) / (f(1.0 - t) + f(t))
    }
}

/// `e(γ) = χ(ρ)γ`; in the 0-frame the tangential coefficient is `χ γ / sinh s`.
pub fn extend_boundary(space: &SpaceRef, gamma: &BoundaryData, cut: &CutoffSpec) -> ZeroForm {
    let geo = &space.geo;
    let mut out = ZeroForm::zeros(space.clone(), 1);
    let profile: Vec<f64> = (0..geo.nodes()).map(|i| cut.eval(geo.rho_collar[i]) * geo.inv_sinh[i]).collect();
    let blk = out.block_mut(Part::Tangential);
    for j in 0..blk.ncomp {
        for a in 0..blk.nlie {
            let g = gamma.get(j, a);
            if g != 0.0 {
                for (v, p) in blk.slice_mut(j, a).iter_mut().zip(&profile) {
                    *v = g * p;
                }
            }
        }
    }
    out
}

/// Largest pointwise defect `|Φ*Φ - 1|` tolerated by [`gauge_act`].
pub const UNITARITY_TOL: f64 = 1e-8;

/// Gauge transformation `Φ = 1 + u` with `u` a `gl(r)`-valued function.
///
/// `u` is stored as a degree-0 form with `2·dim` real components: the real
/// and imaginary parts of the complex coordinates of `u` in the generators
/// `X_c` (slots `2c` and `2c + 1`).
#[derive(Debug, Clone)]
pub struct GaugeElement {
    pub u: ZeroForm,
    pub delta: f64,
    pub unitarity_residual: f64,
}

/// `(2a + s, 2b + t, 2c + o, coef)` entries of the complex product
/// `(Σ z_a X_a)(Σ w_b X_b)` in coordinates.
pub fn product_table(lie: &LieAlgebraSpec) -> LieTable {
    let d = lie.dim();
    let mut out = Vec::new();
    for a in 0..d {
        for b in 0..d {
            let z = lie.coordinates(&(&lie.basis[a] * &lie.basis[b]));
            for (c, zc) in z.iter().enumerate() {
                let (zr, zi) = (clean(zc.re), clean(zc.im));
                let mut push = |i: usize, j: usize, k: usize, v: f64| {
                    if v != 0.0 {
                        out.push((i, j, k, v));
                    }
                };
                push(2 * a, 2 * b, 2 * c, zr);
                push(2 * a, 2 * b, 2 * c + 1, zi);
                push(2 * a + 1, 2 * b + 1, 2 * c, -zr);
                push(2 * a + 1, 2 * b + 1, 2 * c + 1, -zi);
                for (i, j) in [(2 * a, 2 * b + 1), (2 * a + 1, 2 * b)] {
                    push(i, j, 2 * c, -zi);
                    push(i, j, 2 * c + 1, zr);
                }
            }
        }
    }
    out
}

/// Commutator of a real Lie-valued field (left) with a complex one (right).
pub fn mixed_bracket_table(lie: &LieAlgebraSpec) -> LieTable {
    let mut out = Vec::new();
    for (a, b, c, f) in lie.bracket_table() {
        out.push((a, 2 * b, 2 * c, f));
        out.push((a, 2 * b + 1, 2 * c + 1, f));
    }
    out
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-15 {
        0.0
    } else {
        v
    }
}

/// Real Lie-valued form as a complex one.
pub fn complexify(x: &ZeroForm) -> ZeroForm {
    let mut out = ZeroForm::zeros_with(x.space.clone(), x.degree, 2 * x.nlie);
    for part in [Part::Normal, Part::Tangential] {
        let src = x.block(part);
        let dst = out.block_mut(part);
        for c in 0..src.ncomp {
            for a in 0..src.nlie {
                dst.slice_mut(c, 2 * a).copy_from_slice(src.slice(c, a));
            }
        }
    }
    out
}

/// Real part of a complex Lie-valued form, as a `u(r)`-valued form.
pub fn real_part(x: &ZeroForm) -> ZeroForm {
    let mut out = ZeroForm::zeros_with(x.space.clone(), x.degree, x.nlie / 2);
    for part in [Part::Normal, Part::Tangential] {
        let src = x.block(part);
        let dst = out.block_mut(part);
        for c in 0..src.ncomp {
            for a in 0..dst.nlie {
                dst.slice_mut(c, a).copy_from_slice(src.slice(c, 2 * a));
            }
        }
    }
    out
}

/// `u*`: coordinates of the adjoint are `(-Re z, Im z)`.
fn adjoint(u: &ZeroForm) -> ZeroForm {
    let mut out = u.clone();
    for part in [Part::Normal, Part::Tangential] {
        let blk = out.block_mut(part);
        for c in 0..blk.ncomp {
            for a in (0..blk.nlie).step_by(2) {
                blk.slice_mut(c, a).iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    out
}

/// Matrix values `1 + u` at every (radial node, sphere point).
fn grid_values(u: &ZeroForm) -> Vec<Vec<DMatrix<C64>>> {
    let space = &u.space;
    let lie = &space.lie;
    let grid = &space.tensors.grid;
    let blk = u.block(Part::Tangential);
    let d = lie.dim();
    let id = DMatrix::<C64>::identity(lie.r, lie.r);
    (0..space.nodes())
        .map(|i| {
            (0..grid.quad.len())
                .map(|q| {
                    let mut m = id.clone();
                    for c in 0..d {
                        let (mut re, mut im) = (0.0, 0.0);
                        for k in 0..blk.ncomp {
                            let y = grid.scalar[(q, k)];
                            re += blk.slice(k, 2 * c)[i] * y;
                            im += blk.slice(k, 2 * c + 1)[i] * y;
                        }
                        if re != 0.0 || im != 0.0 {
                            m += &lie.basis[c] * C64::new(re, im);
                        }
                    }
                    m
                })
                .collect()
        })
        .collect()
}

/// Project matrix values `M` back to the modal coordinates of `M - 1`.
fn project_values(space: &SpaceRef, vals: &[Vec<DMatrix<C64>>]) -> ZeroForm {
    let lie = &space.lie;
    let grid = &space.tensors.grid;
    let w = &grid.quad.weights;
    let mut out = ZeroForm::zeros_with(space.clone(), 0, 2 * lie.dim());
    let id = DMatrix::<C64>::identity(lie.r, lie.r);
    for (i, row) in vals.iter().enumerate() {
        let coords: Vec<Vec<C64>> = row.iter().map(|m| lie.coordinates(&(m - &id))).collect();
        let blk = out.block_mut(Part::Tangential);
        for k in 0..blk.ncomp {
            for c in 0..lie.dim() {
                let (mut re, mut im) = (0.0, 0.0);
                for (q, z) in coords.iter().enumerate() {
                    let f = w[q] * grid.scalar[(q, k)];
                    re += f * z[c].re;
                    im += f * z[c].im;
                }
                blk.slice_mut(k, 2 * c)[i] = re;
                blk.slice_mut(k, 2 * c + 1)[i] = im;
            }
        }
    }
    out
}

fn polar_factor(m: &DMatrix<C64>) -> DMatrix<C64> {
    let svd = m.clone().svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else { return m.clone() };
    u * vt
}

impl GaugeElement {
    pub fn identity(space: &SpaceRef, delta: f64) -> Self {
        GaugeElement { u: ZeroForm::zeros_with(space.clone(), 0, 2 * space.lie.dim()), delta, unitarity_residual: 0.0 }
    }

    /// Wrap `u` without projecting; the unitarity defect is measured.
    pub fn from_offset(u: ZeroForm, delta: f64) -> Result<Self> {
        if u.degree != 0 || u.nlie != 2 * u.space.lie.dim() {
            return Err(Error::DegreeMismatch("gauge offset must be a complex function".into()));
        }
        let unitarity_residual = unitarity_defect(&u);
        Ok(GaugeElement { u, delta, unitarity_residual })
    }

    /// Nearest unitary element to `1 + u`, pointwise.
    pub fn polar(u: &ZeroForm, delta: f64) -> Result<Self> {
        let vals: Vec<Vec<DMatrix<C64>>> =
            grid_values(u).into_iter().map(|row| row.iter().map(polar_factor).collect()).collect();
        Self::from_offset(project_values(&u.space, &vals), delta)
    }

    /// `exp(ξ)` for a real `u(r)`-valued function `ξ`.
    pub fn exp(xi: &ZeroForm, delta: f64) -> Result<Self> {
        if xi.degree != 0 || xi.nlie != xi.space.lie.dim() {
            return Err(Error::DegreeMismatch("exponent must be a Lie-valued function".into()));
        }
        let id = DMatrix::<C64>::identity(xi.space.lie.r, xi.space.lie.r);
        let vals: Vec<Vec<DMatrix<C64>>> =
            grid_values(&complexify(xi)).into_iter().map(|row| row.iter().map(|m| (m - &id).exp()).collect()).collect();
        Self::from_offset(project_values(&xi.space, &vals), delta)
    }

    /// `Φ*`.
    pub fn inverse(&self) -> Self {
        GaugeElement { u: adjoint(&self.u), ..self.clone() }
    }

    /// `ΦΨ = 1 + u + v + uv`, followed by the polar projection.
    pub fn compose(&self, other: &GaugeElement) -> Result<Self> {
        let table = product_table(&self.u.space.lie);
        let mut w = self.u.plus(&other.u);
        w.axpy(1.0, &wedge_with(&self.u, &other.u, &table, self.u.nlie)?);
        Self::polar(&w, self.delta)
    }
}

/// `max |(1 + u)*(1 + u) - 1|` over the collocation grid.
fn unitarity_defect(u: &ZeroForm) -> f64 {
    let mut worst: f64 = 0.0;
    for row in grid_values(u) {
        for m in row {
            let d = m.adjoint() * &m - DMatrix::<C64>::identity(m.nrows(), m.ncols());
            worst = worst.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    worst
}

/// `A·Φ = A + Φ* d_A Φ`, written as `a ↦ a + Re[(1 + u*)(du + [ã, u])]`.
/// The boundary data `γ` is unchanged.
pub fn gauge_act(conn: &Connection, phi: &GaugeElement) -> Result<Connection> {
    if phi.unitarity_residual > UNITARITY_TOL {
        return Err(Error::NotUnitary(phi.unitarity_residual));
    }
    let space = conn.space();
    let d0 = build_exterior_d(space, 0)?;
    Ok(Connection::new(conn.gamma.clone(), conn.a.plus(&pure_gauge_term(conn, &d0, &phi.u)?), conn.delta, conn.cutoff))
}

fn pure_gauge_term(conn: &Connection, d0: &ZeroDiffOp, u: &ZeroForm) -> Result<ZeroForm> {
    let lie = &conn.space().lie;
    let n2 = u.nlie;
    let mut w = d0.apply(u)?;
    w.axpy(1.0, &wedge_with(&conn.tilde(), u, &mixed_bracket_table(lie), n2)?);
    let mut full = w.clone();
    full.axpy(1.0, &wedge_with(&adjoint(u), &w, &product_table(lie), n2)?);
    Ok(real_part(&full))
}

/// Coulomb condition `d*a + [e(γ)*⌟a]` of a connection.
pub fn slice_residual(conn: &Connection) -> Result<ZeroForm> {
    let ds1 = build_codifferential(conn.space(), 1)?;
    let mut s = ds1.apply(&conn.a)?;
    s.axpy(1.0, &bracket_interior(&conn.extension(), &conn.a)?);
    Ok(s)
}

/// Result of [`coulomb_project`].
#[derive(Debug, Clone)]
pub struct CoulombResult {
    pub gauge: GaugeElement,
    pub connection: Connection,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Find `Φ` near the identity with `A·Φ` in the Coulomb slice.
///
/// Newton iteration on `ξ ↦ slice(A·Φ(1 + ξ))`, with the linearization
/// `ξ ↦ slice'(d_{ã}ξ)` solved by GMRES preconditioned with `Δ_{A₀}` on
/// functions. Each update is polar projected.
pub fn coulomb_project(conn: &Connection, opts: &NewtonOpts) -> Result<CoulombResult> {
    opts.validate()?;
    let space = conn.space().clone();
    let geo = &space.geo;
    let spec = WeightedNormSpec::sup(opts.delta);
    let size = weighted_norm(geo, &conn.a, spec)?;
    let s0 = weighted_norm(geo, &slice_residual(conn)?, spec)?;
    if size > opts.trust_radius {
        return Err(Error::NoConvergence { iterations: 0, residual: s0 });
    }
    let mut phi = GaugeElement::identity(&space, opts.delta);
    let mut current = conn.clone();
    let mut residuals = vec![s0];
    if s0 <= opts.tol {
        return Ok(CoulombResult { gauge: phi, connection: current, residuals, iterations: 0 });
    }
    let lap = hodge_laplacian(&space, 0)?;
    let solver = WeightedSolver::new(&lap, opts.delta)?;
    let d0 = build_exterior_d(&space, 0)?;
    let ds1 = build_codifferential(&space, 1)?;
    let ext = conn.extension();
    let table = product_table(&space.lie);
    let template = ZeroForm::zeros(space.clone(), 0);
    for it in 1..=opts.max_iter {
        let tilde = current.tilde();
        let lin = |xi: &ZeroForm| -> Result<ZeroForm> {
            let mut v = d0.apply(xi)?;
            v.axpy(1.0, &crate::fields::wedge_bracket(&tilde, xi)?);
            let mut y = ds1.apply(&v)?;
            y.axpy(1.0, &bracket_interior(&ext, &v)?);
            solver.constrain(&mut y, xi);
            Ok(y)
        };
        let mut s = slice_residual(&current)?;
        solver.constrain(&mut s, &template);
        let rhs: Vec<f64> = s.to_vec().iter().map(|x| -x).collect();
        let mut apply = |v: &[f64]| -> Result<Vec<f64>> {
            let mut x = template.clone();
            x.set_from_slice(v);
            Ok(lin(&x)?.to_vec())
        };
        let mut pre = |v: &[f64]| -> Result<Vec<f64>> {
            let mut f = template.clone();
            f.set_from_slice(v);
            Ok(solver.solve_constrained(&f)?.to_vec())
        };
        let (dx, _) = gmres(&mut apply, &mut pre, &rhs, 1e-13, 60)?;
        let mut xi = template.clone();
        xi.set_from_slice(&dx);
        let step = complexify(&xi);
        let mut w = phi.u.plus(&step);
        w.axpy(1.0, &wedge_with(&phi.u, &step, &table, phi.u.nlie)?);
        phi = GaugeElement::polar(&w, opts.delta)?;
        current = gauge_act(conn, &phi)?;
        let sn = weighted_norm(geo, &slice_residual(&current)?, spec)?;
        residuals.push(sn);
        if !sn.is_finite() || weighted_norm(geo, &current.a, spec)? > 10.0 * opts.trust_radius {
            return Err(Error::NoConvergence { iterations: it, residual: sn });
        }
        if sn <= opts.tol {
            return Ok(CoulombResult { gauge: phi, connection: current, residuals, iterations: it });
        }
    }
    let last = *residuals.last().unwrap_or(&f64::NAN);
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(lie: &LieAlgebraSpec, z: &[f64]) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(lie.r, lie.r, C64::new(0.0, 0.0));
        for (c, x) in lie.basis.iter().enumerate() {
            m += x * C64::new(z[2 * c], z[2 * c + 1]);
        }
        m
    }

    #[test]
    fn product_table_is_matrix_multiplication() {
        let lie = LieAlgebraSpec::unitary(2);
        let n = 2 * lie.dim();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3 + 0.2).cos()).collect();
        let mut z = vec![0.0; n];
        for (i, j, k, v) in product_table(&lie) {
            z[k] += v * x[i] * y[j];
        }
        let err = (matrix(&lie, &z) - matrix(&lie, &x) * matrix(&lie, &y)).norm();
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn mixed_bracket_is_a_commutator() {
        let lie = LieAlgebraSpec::unitary(2);
        let d = lie.dim();
        let x: Vec<f64> = (0..d).map(|i| 0.3 + i as f64).collect();
        let y: Vec<f64> = (0..2 * d).map(|i| (i as f64).sin()).collect();
        let mut z = vec![0.0; 2 * d];
        for (i, j, k, v) in mixed_bracket_table(&lie) {
            z[k] += v * x[i] * y[j];
        }
        let xm = lie.to_matrix(&x);
        let ym = matrix(&lie, &y);
        let err = (matrix(&lie, &z) - (&xm * &ym - &ym * &xm)).norm();
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn polar_factor_is_unitary() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.2, 0.1), C64::new(0.3, -0.4), C64::new(0.0, 0.5), C64::new(0.9, 0.0)],
        );
        let q = polar_factor(&m);
        assert!((q.adjoint() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
