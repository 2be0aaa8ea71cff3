//! Flat `key = value` run configuration.

use crate::error::{Error, Result};
use crate::fields::{BoundaryData, SpaceRef};
use crate::harmonics::{BasisClass, ModeKind};
use crate::quadrature::sphere_volume;
use crate::solver::NewtonOpts;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// One coexact tangential mode times one Lie generator.
    CoexactMode,
    /// `μ = Σ_a σ^a ⊗ X_a` on the su(2)-equivariant basis (needs `r = 2`).
    Su2MaurerCartan,
    /// Explicit `(mode, generator, value)` triples.
    CoefficientList,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    pub amplitude: f64,
    /// Angular degree of the coexact mode.
    pub ell: usize,
    /// Index among the coexact modes of that degree.
    pub mode: usize,
    /// Lie generator index.
    pub lie: usize,
    pub coefficients: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub n: usize,
    pub r: usize,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    pub grid_points: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub newton: NewtonOpts,
    pub boundary_data: Option<BoundarySpec>,
    pub probe_resolutions: Vec<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n: 3,
            r: 2,
            l_max: 2,
            grid_points: 64,
            epsilon: 0.5,
            delta: 1.5,
            newton: NewtonOpts::default(),
            boundary_data: None,
            probe_resolutions: vec![32, 48, 64],
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::OutOfRange(format!("{key} = `{v}` is not a valid number")))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange(msg()))
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut kind: Option<BoundaryKind> = None;
    let mut bd =
        BoundarySpec { kind: BoundaryKind::CoexactMode, amplitude: 0.1, ell: 1, mode: 0, lie: 0, coefficients: vec![] };
    let mut bd_keys = false;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::OutOfRange(format!("line `{line}` is not key=value")))?;
        match key {
            "n" => cfg.n = num(key, value)?,
            "r" => cfg.r = num(key, value)?,
            "L_max" => cfg.l_max = num(key, value)?,
            "grid_points" => cfg.grid_points = num(key, value)?,
            "epsilon" => cfg.epsilon = num(key, value)?,
            "delta" => cfg.delta = num(key, value)?,
            "newton.tol" => cfg.newton.tol = num(key, value)?,
            "newton.max_iter" => cfg.newton.max_iter = num(key, value)?,
            "newton.damping" => cfg.newton.damping = num(key, value)?,
            "newton.continuation_step" => cfg.newton.continuation_step = num(key, value)?,
            "newton.trust_radius" => cfg.newton.trust_radius = num(key, value)?,
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "seed" => cfg.seed = num(key, value)?,
            "probe_resolutions" => {
                cfg.probe_resolutions =
                    value.split(',').map(|s| num::<usize>(key, s.trim())).collect::<Result<Vec<_>>>()?;
            }
            "boundary_data.kind" => {
                kind = Some(match value {
                    "coexact_mode" => BoundaryKind::CoexactMode,
                    "su2_maurer_cartan" => BoundaryKind::Su2MaurerCartan,
                    "coefficient_list" => BoundaryKind::CoefficientList,
                    other => return Err(Error::OutOfRange(format!("boundary_data.kind = `{other}`"))),
                })
            }
            "boundary_data.amplitude" => {
                bd.amplitude = num(key, value)?;
                bd_keys = true;
            }
            "boundary_data.ell" => {
                bd.ell = num(key, value)?;
                bd_keys = true;
            }
            "boundary_data.mode" => {
                bd.mode = num(key, value)?;
                bd_keys = true;
            }
            "boundary_data.lie" => {
                bd.lie = num(key, value)?;
                bd_keys = true;
            }
            "boundary_data.coefficients" => {
                bd.coefficients = parse_triples(value)?;
                bd_keys = true;
            }
            other => return Err(Error::UnknownKey(other.to_string())),
        }
    }
    match kind {
        Some(k) => {
            bd.kind = k;
            cfg.boundary_data = Some(bd);
        }
        None if bd_keys => return Err(Error::MissingRequired("boundary_data.kind".into())),
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `mode:generator:value` triples separated by `;`.
fn parse_triples(value: &str) -> Result<Vec<(usize, usize, f64)>> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|t| {
            let parts: Vec<&str> = t.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::OutOfRange(format!("coefficient `{t}` is not mode:generator:value")));
            }
            Ok((num(t, parts[0])?, num(t, parts[1])?, num(t, parts[2])?))
        })
        .collect()
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        check(self.n >= 3, || format!("n = {} must be at least 3", self.n))?;
        check((1..=4).contains(&self.r), || format!("r = {} must lie in 1..=4", self.r))?;
        check((1..=4).contains(&self.l_max), || format!("L_max = {} must lie in 1..=4", self.l_max))?;
        check((8..=256).contains(&self.grid_points), || {
            format!("grid_points = {} must lie in 8..=256", self.grid_points)
        })?;
        check(self.epsilon > 0.0 && self.epsilon <= 0.5, || {
            format!("epsilon = {} must lie in (0, 1/2]", self.epsilon)
        })?;
        check(self.delta > 1.0 && self.delta < 2.0, || format!("delta = {} must lie in (1, 2)", self.delta))?;
        check(self.newton.max_iter >= 1, || "newton.max_iter must be positive".into())?;
        check(self.newton.trust_radius > 0.0, || "newton.trust_radius must be positive".into())?;
        check(
            self.probe_resolutions.iter().all(|&m| (8..=256).contains(&m)) && !self.probe_resolutions.is_empty(),
            || "probe_resolutions must be grid sizes in 8..=256".into(),
        )?;
        let opts = NewtonOpts { delta: self.delta, ..self.newton };
        opts.validate()?;
        if let Some(bd) = &self.boundary_data {
            check(bd.amplitude.is_finite(), || "boundary_data.amplitude must be finite".into())?;
            if bd.kind == BoundaryKind::Su2MaurerCartan {
                check(self.r == 2 && self.n == 3, || "su2_maurer_cartan needs r = 2 and n = 3".into())?;
            }
            if bd.kind == BoundaryKind::CoexactMode {
                check(bd.ell >= 1 && bd.ell <= self.l_max, || {
                    format!("boundary_data.ell = {} must lie in 1..=L_max", bd.ell)
                })?;
                check(bd.lie < self.r * self.r, || format!("boundary_data.lie = {} exceeds dim u(r)", bd.lie))?;
            }
            if bd.kind == BoundaryKind::CoefficientList {
                check(!bd.coefficients.is_empty(), || "boundary_data.coefficients is empty".into())?;
            }
        }
        Ok(())
    }

    /// Newton options with the configured working weight.
    pub fn newton_opts(&self) -> NewtonOpts {
        NewtonOpts { delta: self.delta, ..self.newton }
    }

    /// Mode basis demanded by the boundary data.
    pub fn basis_class(&self) -> BasisClass {
        match &self.boundary_data {
            Some(b) if b.kind == BoundaryKind::Su2MaurerCartan => BasisClass::EquivariantSu2,
            _ => BasisClass::Full,
        }
    }

    pub fn space(&self) -> Result<SpaceRef> {
        self.space_with(self.basis_class(), self.grid_points)
    }

    pub fn space_with(&self, class: BasisClass, grid_points: usize) -> Result<SpaceRef> {
        crate::fields::Space::build(self.n, self.l_max, class, grid_points, self.r, self.epsilon)
    }

    pub fn boundary(&self) -> Result<&BoundarySpec> {
        self.boundary_data.as_ref().ok_or_else(|| Error::MissingRequired("boundary_data.kind".into()))
    }
}

impl BoundarySpec {
    /// Boundary data of unit amplitude on `space`.
    pub fn unit(&self, space: &SpaceRef) -> Result<BoundaryData> {
        let mut g = BoundaryData::zeros(space);
        let nv = space.basis.n_vector();
        let dim = space.lie.dim();
        match self.kind {
            BoundaryKind::CoexactMode => {
                let j = space
                    .basis
                    .vectors
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.kind == ModeKind::Coexact1form && v.ell == self.ell)
                    .nth(self.mode)
                    .map(|(j, _)| j)
                    .ok_or_else(|| {
                        Error::OutOfRange(format!("no coexact mode {} of degree {}", self.mode, self.ell))
                    })?;
                g.set(j, self.lie, 1.0);
            }
            BoundaryKind::Su2MaurerCartan => {
                let su2 = space.lie.su2_indices().ok_or_else(|| Error::OutOfRange("su2 data needs r = 2".into()))?;
                let s = sphere_volume(3).sqrt();
                for (a, &gen) in su2.iter().enumerate() {
                    g.set(a, gen, s);
                }
            }
            BoundaryKind::CoefficientList => {
                for &(j, a, v) in &self.coefficients {
                    if j >= nv || a >= dim {
                        return Err(Error::OutOfRange(format!(
                            "coefficient ({j}, {a}) outside {nv} modes × {dim} generators"
                        )));
                    }
                    g.set(j, a, v);
                }
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = parse_config("# nothing\n\n").unwrap();
        assert_eq!((c.n, c.r, c.l_max, c.grid_points, c.delta), (3, 2, 2, 64, 1.5));
        assert!(c.boundary_data.is_none());
    }

    #[test]
    fn rejects() {
        assert_eq!(parse_config("delta=2.5").unwrap_err().kind(), "OutOfRange");
        assert_eq!(parse_config("n=2").unwrap_err().kind(), "OutOfRange");
        assert_eq!(parse_config("colour = red").unwrap_err().kind(), "UnknownKey");
        assert_eq!(parse_config("boundary_data.amplitude = 0.1").unwrap_err().kind(), "MissingRequired");
        assert_eq!(parse_config("grid_points = lots").unwrap_err().kind(), "OutOfRange");
    }

    #[test]
    fn boundary_entries() {
        let c = parse_config("boundary_data.kind = coefficient_list\nboundary_data.coefficients = 3:0:0.5; 4:1:-1\n")
            .unwrap();
        assert_eq!(c.boundary_data.unwrap().coefficients, vec![(3, 0, 0.5), (4, 1, -1.0)]);
    }
}
