#![allow(dead_code)]
//! Independent reference solutions and shared fixtures.

/// Classical fourth-order Runge–Kutta for `y' = f(s, y)` on a fine uniform
/// step, recording the state at each requested (increasing) abscissa.
pub fn rk4_sample<F>(f: F, s0: f64, y0: [f64; 2], targets: &[f64], h: f64) -> Vec<[f64; 2]>
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    let step = |s: f64, y: [f64; 2], h: f64| -> [f64; 2] {
        let k1 = f(s, y);
        let k2 = f(s + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = f(s + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = f(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    let mut out = Vec::with_capacity(targets.len());
    let (mut s, mut y) = (s0, y0);
    for &t in targets {
        while s < t {
            let hh = h.min(t - s);
            y = step(s, y, hh);
            s += hh;
        }
        out.push(y);
    }
    out
}

/// Maxwell profile for a coexact boundary mode of curl eigenvalue `κ` on
/// the unit 3-sphere: `(sinh s · w')' = κ² w / sinh s`, regular at the
/// origin, normalized to `w(∞) = 1`. Returns `w` at the requested `s`.
pub fn abelian_profile(kappa2: f64, s_nodes: &[f64], h: f64) -> Vec<f64> {
    let s0 = 1e-4;
    let p = kappa2.sqrt();
    let rhs = |s: f64, y: [f64; 2]| {
        let (sh, ch) = (s.sinh(), s.cosh());
        [y[1], (kappa2 * y[0] / sh - ch * y[1]) / sh]
    };
    let s_inf = 40.0;
    let mut targets: Vec<f64> = s_nodes.iter().cloned().filter(|&s| s > s0).collect();
    targets.push(s_inf);
    let ys = rk4_sample(rhs, s0, [s0.powf(p), p * s0.powf(p - 1.0)], &targets, h);
    let scale = ys.last().unwrap()[0];
    let mut it = ys.iter();
    s_nodes.iter().map(|&s| if s > s0 { it.next().unwrap()[0] / scale } else { 0.0 }).collect()
}

/// Equivariant SU(2) reduction: `(sinh s · w')' = 4 w (1-w)(1-2w) / sinh s`,
/// regular at the origin (`w ~ k s²`) with `w(∞) = w_inf`, by secant
/// shooting on `k`. Returns `w` at the requested `s`.
pub fn equivariant_profile(w_inf: f64, s_nodes: &[f64], h: f64) -> Vec<f64> {
    let s0 = 1e-4;
    let s_inf = 40.0;
    let rhs = |s: f64, y: [f64; 2]| {
        let (sh, ch) = (s.sinh(), s.cosh());
        let w = y[0];
        [y[1], (4.0 * w * (1.0 - w) * (1.0 - 2.0 * w) / sh - ch * y[1]) / sh]
    };
    let shoot = |k: f64, targets: &[f64]| rk4_sample(rhs, s0, [k * s0 * s0, 2.0 * k * s0], targets, h);
    let end = |k: f64| shoot(k, &[s_inf])[0][0] - w_inf;
    let mut k0 = w_inf;
    let mut k1 = k0 * 1.01;
    let (mut f0, mut f1) = (end(k0), end(k1));
    for _ in 0..60 {
        if f1.abs() < 1e-15 || (k1 - k0).abs() < 1e-16 * k1.abs() {
            break;
        }
        let k2 = k1 - f1 * (k1 - k0) / (f1 - f0);
        k0 = k1;
        f0 = f1;
        k1 = k2;
        f1 = end(k1);
    }
    let mut targets: Vec<f64> = s_nodes.iter().cloned().filter(|&s| s > s0).collect();
    targets.push(s_inf);
    let ys = shoot(k1, &targets);
    let mut it = ys.iter();
    s_nodes.iter().map(|&s| if s > s0 { it.next().unwrap()[0] } else { 0.0 }).collect()
}

use ahym::fields::{BoundaryData, Part, SpaceRef, ZeroForm};
use ahym::gauge::CutoffSpec;
use ahym::harmonics::ModeKind;

pub fn vol_s3() -> f64 {
    2.0 * std::f64::consts::PI.powi(2)
}

/// Index of the first `ℓ = 1` coexact tangential mode.
pub fn coexact_l1(space: &SpaceRef) -> usize {
    space.basis.vectors.iter().position(|v| v.kind == ModeKind::Coexact1form && v.ell == 1).expect("coexact mode")
}

/// `μ = Σ σ^a ⊗ X_a` in the equivariant basis.
pub fn su2_mu(space: &SpaceRef) -> BoundaryData {
    let mut mu = BoundaryData::zeros(space);
    for a in 0..3 {
        mu.set(a, a, vol_s3().sqrt());
    }
    mu
}

fn s_nodes(space: &SpaceRef) -> Vec<f64> {
    let geo = &space.geo;
    geo.r[..geo.nodes() - 1].iter().map(|r| 2.0 * r.atanh()).collect()
}

/// Reference `a` for abelian data `amp · (coexact ℓ = 1 mode)`:
/// `a = amp (w - χ) / sinh s` with `w` from [`abelian_profile`].
pub fn abelian_reference(space: &SpaceRef, amp: f64, cut: CutoffSpec, h: f64) -> ZeroForm {
    let geo = &space.geo;
    let s = s_nodes(space);
    let w = abelian_profile(4.0, &s, h);
    let j = coexact_l1(space);
    let mut a = ZeroForm::zeros(space.clone(), 1);
    let blk = a.block_mut(Part::Tangential);
    for i in 0..s.len() {
        blk.slice_mut(j, 0)[i] = amp * (w[i] - cut.eval(geo.rho_collar[i])) / s[i].sinh();
    }
    a
}

/// Reference `a` for `γ = c μ`: `a_aa = √vol (-√2 w - χ c) / sinh s` with
/// `w(∞) = -c/√2` from [`equivariant_profile`].
pub fn equivariant_reference(space: &SpaceRef, c: f64, cut: CutoffSpec, h: f64) -> ZeroForm {
    let geo = &space.geo;
    let s = s_nodes(space);
    let w = equivariant_profile(-c / 2f64.sqrt(), &s, h);
    let mut a = ZeroForm::zeros(space.clone(), 1);
    let blk = a.block_mut(Part::Tangential);
    for k in 0..3 {
        for i in 0..s.len() {
            blk.slice_mut(k, k)[i] =
                vol_s3().sqrt() * (-2f64.sqrt() * w[i] - cut.eval(geo.rho_collar[i]) * c) / s[i].sinh();
        }
    }
    a
}

/// Keep only components whose mode has angular degree at most `ell`.
pub fn truncate_degree(mut z: ZeroForm, ell: usize) -> ZeroForm {
    let basis = z.space.basis.clone();
    for part in [Part::Normal, Part::Tangential] {
        let Some(ty) = z.part_type(part) else { continue };
        let blk = z.block_mut(part);
        for c in 0..blk.ncomp {
            let l = match ty {
                ahym::fields::CompType::Scalar => basis.scalars[c].ell,
                ahym::fields::CompType::Vector => basis.vectors[c].ell,
            };
            if l > ell {
                for a in 0..blk.nlie {
                    blk.slice_mut(c, a).fill(0.0);
                }
            }
        }
    }
    z
}
