use ahym::cli::{random_field, to_json_string};
use ahym::config::parse_config;
use ahym::fields::{BoundaryData, Connection};
use ahym::fields::{Space, SpaceRef, ZeroForm};
use ahym::gauge::{gauge_act, CutoffSpec, GaugeElement};
use ahym::geometry::hodge_star;
use ahym::harmonics::BasisClass;
use ahym::zerodiff::build_exterior_d;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn space(r: usize) -> SpaceRef {
    static ONE: OnceLock<SpaceRef> = OnceLock::new();
    static TWO: OnceLock<SpaceRef> = OnceLock::new();
    let cell = if r == 1 { &ONE } else { &TWO };
    cell.get_or_init(|| Space::build(3, 2, BasisClass::Full, 24, r, 0.5).unwrap()).clone()
}

/// Radial `u(r)`-valued function `ρ²(c0 + c1 r²)` per generator.
fn radial_xi(space: &SpaceRef, coefs: &[(f64, f64)]) -> ZeroForm {
    let mut xi = ZeroForm::zeros(space.clone(), 0);
    for (a, &(c0, c1)) in coefs.iter().enumerate().take(xi.nlie) {
        let vals: Vec<f64> =
            (0..space.nodes()).map(|i| space.geo.rho[i].powi(2) * (c0 + c1 * space.geo.r[i].powi(2))).collect();
        xi.tangential.slice_mut(0, a).copy_from_slice(&vals);
    }
    xi
}

fn coefs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn d_squared_vanishes(seed in any::<u64>(), k in 0usize..3) {
        let s = space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_field(&s, k, s.lie.dim(), 1.0, &mut rng);
        let du = build_exterior_d(&s, k).unwrap().apply(&u).unwrap();
        let ddu = build_exterior_d(&s, k + 1).unwrap().apply(&du).unwrap();
        prop_assert!(ddu.max_abs() < 1e-9 * (1.0 + du.max_abs()), "{}", ddu.max_abs());
    }

    #[test]
    fn star_is_an_involution_up_to_sign(seed in any::<u64>(), k in 0usize..=4) {
        let s = space(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_field(&s, k, 1, 1.0, &mut rng);
        let twice = hodge_star(&s.geo, &hodge_star(&s.geo, &w).unwrap()).unwrap();
        let sign = if (k * (4 - k)) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(twice.minus(&w.scaled(sign)).max_abs(), 0.0);
    }

    #[test]
    fn exp_is_unitary_and_inverts(c in coefs()) {
        let s = space(2);
        let xi = radial_xi(&s, &c);
        let phi = GaugeElement::exp(&xi, 1.5).unwrap();
        prop_assert!(phi.unitarity_residual < 1e-10, "{}", phi.unitarity_residual);
        let id = phi.compose(&phi.inverse()).unwrap();
        prop_assert!(id.u.max_abs() < 1e-10, "{}", id.u.max_abs());
        let back = GaugeElement::exp(&xi.scaled(-1.0), 1.5).unwrap();
        prop_assert!(phi.inverse().u.minus(&back.u).max_abs() < 1e-10);
    }

    #[test]
    fn gauge_action_composes(c1 in coefs(), c2 in coefs()) {
        let s = space(2);
        let conn = Connection::new(BoundaryData::zeros(&s), ZeroForm::zeros(s.clone(), 1), 1.5, CutoffSpec::new(0.5));
        let p = GaugeElement::exp(&radial_xi(&s, &c1), 1.5).unwrap();
        let q = GaugeElement::exp(&radial_xi(&s, &c2), 1.5).unwrap();
        let stepwise = gauge_act(&gauge_act(&conn, &p).unwrap(), &q).unwrap();
        let at_once = gauge_act(&conn, &p.compose(&q).unwrap()).unwrap();
        let err = stepwise.a.minus(&at_once.a).max_abs();
        prop_assert!(err < 1e-8 * (1.0 + stepwise.a.max_abs()), "{err}");
    }

    #[test]
    fn floats_round_trip_through_json(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let text = to_json_string(&serde_json::json!({ "x": x }));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back["x"].as_f64().unwrap(), x);
    }

    #[test]
    fn valid_configs_parse(
        l_max in 1usize..=4,
        m in 8usize..=256,
        eps in 0.01..=0.5f64,
        delta in 1.01..1.99f64,
    ) {
        let text = format!("L_max = {l_max}\ngrid_points = {m}\nepsilon = {eps}\ndelta = {delta}  # weight\n");
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!((cfg.l_max, cfg.grid_points, cfg.epsilon, cfg.delta), (l_max, m, eps, delta));
    }

    #[test]
    fn weights_outside_the_window_are_rejected(delta in prop_oneof![-5.0..=1.0f64, 2.0..10.0f64]) {
        let err = parse_config(&format!("delta = {delta}")).unwrap_err();
        prop_assert_eq!(err.kind(), "OutOfRange");
    }
}
