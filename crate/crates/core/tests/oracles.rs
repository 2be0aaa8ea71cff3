mod common;

use common::{abelian_profile, equivariant_profile};

const S: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

// RK4 outputs (h = 1e-3) recorded once; any change in the integrator shows up here.
const ABELIAN_FROZEN: [f64; 4] = [0.05998515119521186, 0.21355226703451125, 0.5800256583861209, 0.9293491751469031];
// w_inf = -0.05/sqrt(2), h = 5e-4.
const EQUIVARIANT_FROZEN: [f64; 4] =
    [-0.0020525788378923933, -0.0073459575312844454, -0.02020696403903558, -0.03277558558534478];

#[test]
fn abelian_profile_is_frozen() {
    let w = abelian_profile(4.0, &S, 1e-3);
    for (a, b) in w.iter().zip(ABELIAN_FROZEN) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn abelian_profile_matches_closed_form() {
    // (S w')' = 4w/S with w(0) = 0, w(inf) = 1 is solved by tanh^2(s/2) = r^2.
    let w = abelian_profile(4.0, &S, 1e-3);
    for (s, a) in S.iter().zip(w) {
        let exact = (s / 2.0).tanh().powi(2);
        assert!((a - exact).abs() < 1e-11, "s={s}: {a} vs {exact}");
    }
}

#[test]
fn equivariant_profile_is_frozen_and_step_independent() {
    let w_inf = -0.05 / 2f64.sqrt();
    let fine = equivariant_profile(w_inf, &S, 5e-4);
    let coarse = equivariant_profile(w_inf, &S, 1e-3);
    for ((f, c), z) in fine.iter().zip(&coarse).zip(EQUIVARIANT_FROZEN) {
        assert!((f - z).abs() < 1e-12, "{f} vs {z}");
        assert!((f - c).abs() < 1e-12, "{f} vs {c}");
    }
}

#[test]
fn equivariant_profile_linearizes_to_abelian() {
    // Small data: the cubic terms drop and the profile is w_inf times the abelian one.
    let w_inf = -1e-6;
    let w = equivariant_profile(w_inf, &S, 5e-4);
    for (s, a) in S.iter().zip(w) {
        let lin = (s / 2.0).tanh().powi(2);
        assert!((a / w_inf - lin).abs() < 1e-6, "s={s}: {} vs {lin}", a / w_inf);
    }
}

#[test]
fn equivariant_profile_reaches_its_limit() {
    let w_inf = -0.05 / 2f64.sqrt();
    let far = equivariant_profile(w_inf, &[12.0], 5e-4)[0];
    assert!((far - w_inf).abs() < 1e-6 * w_inf.abs().max(1.0), "{far} vs {w_inf}");
}
