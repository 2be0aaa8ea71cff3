//! Command dispatch and report emission.
//!
//! Every command returns an [`Artifacts`] bundle (one JSON report and
//! named CSV tables); nothing touches the disk until the whole command has
//! succeeded.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::fields::{component_ell, BoundaryData, Connection, Part, SpaceRef, ZeroForm};
use crate::gauge::{coulomb_project, gauge_act, CutoffSpec, GaugeElement};
use crate::geometry::{weighted_norm, WeightedNormSpec};
use crate::harmonics::BasisClass;
use crate::indicial::{fredholm_window, indicial_family, indicial_roots, DEFAULT_CLUSTER_TOL};
use crate::solver::{decay_fit, kernel_probe, solve_bvp, solve_weighted_linear, SolveReport};
use crate::zerodiff::{hodge_laplacian, normal_operator, twist_suite, Selector, ZeroDiffOp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Indicial,
    NormalOpCheck,
    SolveLaplace,
    SolveYm,
    GaugeFix,
    Asymptotics,
    KernelProbe,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Indicial => "indicial",
            Command::NormalOpCheck => "normal-op-check",
            Command::SolveLaplace => "solve-laplace",
            Command::SolveYm => "solve-ym",
            Command::GaugeFix => "gauge-fix",
            Command::Asymptotics => "asymptotics",
            Command::KernelProbe => "kernel-probe",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: Value,
    pub tables: Vec<(String, String)>,
}

/// JSON floats with 17 significant digits.
struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

pub fn to_json_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    v.serialize(&mut ser).expect("serializing a JSON value into memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn error_json(e: &Error) -> String {
    to_json_string(&json!({ "status": "error", "error": { "kind": e.kind(), "message": e.to_string() } }))
}

/// Write `report.json` and the tables into `dir`.
pub fn write_artifacts(dir: &Path, art: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), to_json_string(&art.report) + "\n")?;
    for (name, body) in &art.tables {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

pub fn run(command: Command, cfg: &Config) -> Result<Artifacts> {
    cfg.validate()?;
    let mut art = match command {
        Command::Indicial => indicial(cfg)?,
        Command::NormalOpCheck => normal_op_check(cfg)?,
        Command::SolveLaplace => solve_laplace(cfg)?,
        Command::SolveYm => solve_ym(cfg)?,
        Command::GaugeFix => gauge_fix(cfg)?,
        Command::Asymptotics => asymptotics(cfg)?,
        Command::KernelProbe => probe(cfg)?,
    };
    let body = std::mem::take(&mut art.report);
    art.report = json!({
        "status": "ok",
        "command": command.name(),
        "config": cfg,
        "result": body,
    });
    Ok(art)
}

fn roots_of(op: &ZeroDiffOp, n: usize) -> Result<(Value, Vec<(f64, f64, usize)>)> {
    let roots = indicial_roots(&indicial_family(op)?, DEFAULT_CLUSTER_TOL)?;
    let win = fredholm_window(&roots, n)?;
    let list: Vec<(f64, f64, usize)> = roots.iter().map(|r| (r.re, r.im, r.multiplicity)).collect();
    let mut distinct: Vec<f64> = Vec::new();
    for r in &roots {
        if !distinct.iter().any(|d| (d - r.re).abs() < 1e-8) {
            distinct.push(r.re);
        }
    }
    distinct.sort_by(f64::total_cmp);
    Ok((
        json!({
            "operator": op.name,
            "roots": roots,
            "distinct_real_parts": distinct,
            "window": { "lo": win.lo, "hi": win.hi, "degenerate": win.degenerate },
        }),
        list,
    ))
}

fn indicial(cfg: &Config) -> Result<Artifacts> {
    let space = cfg.space_with(BasisClass::Full, cfg.grid_points)?;
    let mut csv = String::from("operator,re,im,multiplicity\n");
    let mut out = Vec::new();
    for (label, k) in [("Delta_A0", 0), ("L_A0", 1)] {
        let op = hodge_laplacian(&space, k)?;
        let (v, list) = roots_of(&op, cfg.n)?;
        for (re, im, m) in list {
            let _ = writeln!(csv, "{label},{re:.11e},{im:.11e},{m}");
        }
        out.push(json!({ "label": label, "data": v }));
    }
    Ok(Artifacts { report: json!({ "operators": out }), tables: vec![("roots.csv".into(), csv)] })
}

/// Smooth field `r^p ρ² (c₀ + c₁r²)` with seeded coefficients; `p ≥ ℓ`
/// has the component's parity, so the field is regular at the origin.
pub fn random_field(space: &SpaceRef, degree: usize, nlie: usize, scale: f64, rng: &mut ChaCha8Rng) -> ZeroForm {
    let mut z = ZeroForm::zeros_with(space.clone(), degree, nlie);
    for part in [Part::Normal, Part::Tangential] {
        for c in 0..z.block(part).ncomp {
            let ell = component_ell(&space.basis, degree, part, c) as i32;
            let par = ell + (z.parity(part, c) as i32 - ell).rem_euclid(2);
            for a in 0..nlie {
                let (c0, c1): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let geo = &space.geo;
                let vals: Vec<f64> = (0..geo.nodes())
                    .map(|i| {
                        let (r, p) = (geo.r[i], geo.rho[i]);
                        scale * r.powi(par) * p * p * (c0 + c1 * r * r)
                    })
                    .collect();
                z.block_mut(part).slice_mut(c, a).copy_from_slice(&vals);
            }
        }
    }
    z
}

/// Largest entry of the difference of two assembled operators.
pub fn block_distance(p: &ZeroDiffOp, q: &ZeroDiffOp, nlie: usize) -> Result<f64> {
    let a = p.assemble(nlie, Selector::All)?;
    let b = q.assemble(nlie, Selector::All)?;
    Ok((a - b).amax())
}

/// Non-flat su(2) connection on the equivariant basis: the extension of
/// `c μ` plus a seeded smooth decaying `a`.
pub fn sample_su2_connection(cfg: &Config, c: f64) -> Result<Connection> {
    let space = cfg.space_with(BasisClass::EquivariantSu2, cfg.grid_points)?;
    let spec = crate::config::BoundarySpec {
        kind: crate::config::BoundaryKind::Su2MaurerCartan,
        amplitude: c,
        ell: 1,
        mode: 0,
        lie: 0,
        coefficients: vec![],
    };
    let gamma = spec.unit(&space)?.scaled(c);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = random_field(&space, 1, space.lie.dim(), 0.1, &mut rng);
    Ok(Connection::new(gamma, a, cfg.delta, CutoffSpec::new(cfg.epsilon)))
}

fn normal_op_check(cfg: &Config) -> Result<Artifacts> {
    if cfg.r != 2 || cfg.n != 3 {
        return Err(Error::OutOfRange("normal-op-check uses an su(2) connection: needs r = 2, n = 3".into()));
    }
    let conn = sample_su2_connection(cfg, 0.05)?;
    let space = conn.space().clone();
    let nlie = space.lie.dim();
    let suite = twist_suite(&conn)?;
    let d0 = hodge_laplacian(&space, 0)?;
    let d1 = hodge_laplacian(&space, 1)?;
    let dist_l = block_distance(&normal_operator(&suite.l_a, 0)?, &normal_operator(&d1, 0)?, nlie)?;
    let dist_d = block_distance(&normal_operator(&suite.delta_a, 0)?, &normal_operator(&d0, 0)?, nlie)?;
    let interior_l = block_distance(&suite.l_a, &d1, nlie)?;
    let f = weighted_norm(&space.geo, &suite.curvature, WeightedNormSpec::sup(0.0))?;
    let csv = format!(
        "operator,normal_distance,interior_distance\nL_A,{dist_l:.11e},{interior_l:.11e}\nDelta_A,{dist_d:.11e},{:.11e}\n",
        block_distance(&suite.delta_a, &d0, nlie)?
    );
    Ok(Artifacts {
        report: json!({
            "lie_dim": nlie,
            "curvature_sup": f,
            "normal_distance_L": dist_l,
            "normal_distance_Delta": dist_d,
            "interior_distance_L": interior_l,
            "max_normal_distance": dist_l.max(dist_d),
        }),
        tables: vec![("normal_operator.csv".into(), csv)],
    })
}

/// Manufactured solution `r^ℓ ρ³ (1 + 0.3 r²)` per component with seeded
/// amplitudes.
pub fn manufactured_scalar(space: &SpaceRef, rng: &mut ChaCha8Rng) -> ZeroForm {
    let mut u = ZeroForm::zeros(space.clone(), 0);
    let geo = &space.geo;
    for c in 0..u.tangential.ncomp {
        let par = space.basis.scalars[c].ell as i32;
        for a in 0..u.nlie {
            let w: f64 = rng.random_range(-1.0..1.0);
            let vals: Vec<f64> = (0..geo.nodes())
                .map(|i| w * geo.r[i].powi(par) * geo.rho[i].powi(3) * (1.0 + 0.3 * geo.r[i] * geo.r[i]))
                .collect();
            u.tangential.slice_mut(c, a).copy_from_slice(&vals);
        }
    }
    u
}

fn solve_laplace(cfg: &Config) -> Result<Artifacts> {
    let space = cfg.space_with(BasisClass::Full, cfg.grid_points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let exact = manufactured_scalar(&space, &mut rng);
    let op = hodge_laplacian(&space, 0)?;
    let f = op.apply(&exact)?;
    let u = solve_weighted_linear(&op, &f, cfg.delta)?;
    let err = u.minus(&exact);
    let rel = err.max_abs() / exact.max_abs();
    let werr = weighted_norm(&space.geo, &err, WeightedNormSpec::sup(cfg.delta))?;
    Ok(Artifacts {
        report: json!({ "relative_error": rel, "weighted_error": werr, "delta": cfg.delta }),
        tables: vec![("solution.csv".into(), u.to_csv())],
    })
}

fn run_solve(cfg: &Config) -> Result<(SpaceRef, SolveReport)> {
    let bd = cfg.boundary()?;
    let space = cfg.space()?;
    let unit = bd.unit(&space)?;
    let rep = solve_bvp(&space, &unit, bd.amplitude, CutoffSpec::new(cfg.epsilon), &cfg.newton_opts())?;
    Ok((space, rep))
}

fn solve_ym(cfg: &Config) -> Result<Artifacts> {
    let (_, rep) = run_solve(cfg)?;
    Ok(Artifacts {
        report: rep.to_json(),
        tables: vec![("convergence.csv".into(), rep.convergence_csv()), ("solution.csv".into(), rep.a.to_csv())],
    })
}

fn asymptotics(cfg: &Config) -> Result<Artifacts> {
    let (space, rep) = run_solve(cfg)?;
    let window = (1e-3, 1e-1);
    let fit = decay_fit(&rep.a, window)?;
    let norms = rep.a.node_norms();
    let mut csv = String::from("node,rho,norm\n");
    for (i, (p, v)) in space.geo.rho.iter().zip(&norms).enumerate() {
        let _ = writeln!(csv, "{i},{p:.11e},{v:.11e}");
    }
    Ok(Artifacts {
        report: json!({
            "fit": fit,
            "window": [window.0, window.1],
            "within_expected": fit.exponent >= 1.8 && fit.exponent <= 2.2,
            "solve": rep.to_json(),
        }),
        tables: vec![("decay.csv".into(), csv)],
    })
}

fn gauge_fix(cfg: &Config) -> Result<Artifacts> {
    // Gauge around the Yang-Mills solution: there `e(γ) + a` is smooth, while
    // the bare extension carries the cutoff into every product with `u`.
    let (space, slice) = match &cfg.boundary_data {
        Some(bd) => {
            let (space, rep) = run_solve(cfg)?;
            let gamma = bd.unit(&space)?.scaled(bd.amplitude);
            let conn = Connection::new(gamma, rep.a, cfg.delta, CutoffSpec::new(cfg.epsilon));
            (space, conn)
        }
        None => {
            let space = cfg.space()?;
            let conn = Connection::new(
                BoundaryData::zeros(&space),
                ZeroForm::zeros(space.clone(), 1),
                cfg.delta,
                CutoffSpec::new(cfg.epsilon),
            );
            (space, conn)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xi = ZeroForm::zeros(space.clone(), 0);
    for a in 0..xi.nlie {
        let (c0, c1): (f64, f64) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        let vals: Vec<f64> =
            (0..space.nodes()).map(|i| space.geo.rho[i].powi(2) * (c0 + c1 * space.geo.r[i].powi(2))).collect();
        xi.tangential.slice_mut(0, a).copy_from_slice(&vals);
    }
    let phi = GaugeElement::exp(&xi, cfg.delta)?;
    let moved = gauge_act(&slice, &phi)?;
    let b0 = slice.boundary_restriction();
    let b1 = moved.boundary_restriction();
    let boundary_shift = b0.coefs.iter().zip(&b1.coefs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let res = coulomb_project(&moved, &cfg.newton_opts())?;
    let spec = WeightedNormSpec::sup(cfg.delta);
    let dist = weighted_norm(&space.geo, &res.connection.a.minus(&slice.a), spec)?;
    let mut csv = String::from("iter,slice_residual\n");
    for (i, r) in res.residuals.iter().enumerate() {
        let _ = writeln!(csv, "{i},{r:.11e}");
    }
    Ok(Artifacts {
        report: json!({
            "iterations": res.iterations,
            "residual_history": res.residuals,
            "initial_offset": weighted_norm(&space.geo, &moved.a, spec)?,
            "distance_to_representative": dist,
            "gauge_unitarity_residual": res.gauge.unitarity_residual,
            "boundary_restriction_shift": boundary_shift,
        }),
        tables: vec![("gauge_fix.csv".into(), csv)],
    })
}

fn probe(cfg: &Config) -> Result<Artifacts> {
    let build = |m: usize| -> Result<ZeroDiffOp> { hodge_laplacian(&cfg.space_with(BasisClass::Full, m)?, 1) };
    let sv = kernel_probe(build, cfg.delta, &cfg.probe_resolutions)?;
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sv.iter().cloned().fold(0.0, f64::max);
    let mut csv = String::from("grid_points,smallest_singular_value\n");
    for (m, s) in cfg.probe_resolutions.iter().zip(&sv) {
        let _ = writeln!(csv, "{m},{s:.11e}");
    }
    Ok(Artifacts {
        report: json!({
            "delta": cfg.delta,
            "resolutions": cfg.probe_resolutions,
            "smallest_singular_values": sv,
            "relative_variation": if hi > 0.0 { (hi - lo) / hi } else { 0.0 },
        }),
        tables: vec![("kernel_probe.csv".into(), csv)],
    })
}
