//! Run configuration: TOML text in, validated [`RunConfig`] out.

use std::path::PathBuf;

use lbe_core::grids::BoundaryTerm;
use lbe_core::{
    BoundaryData, ConvexDomain, GridResolution, KernelParams, LineQuadrature, NormKind,
    OperatorContext, SolveConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{field}`: {value} (allowed: {allowed})")]
    Validation {
        field: String,
        value: String,
        allowed: String,
    },
}

impl ConfigError {
    fn invalid(field: &str, value: impl std::fmt::Display, allowed: &str) -> Self {
        Self::Validation {
            field: field.into(),
            value: value.to_string(),
            allowed: allowed.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required by every randomized command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub domain: DomainConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("lbe-out")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Ellipsoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi_axes: Option<[f64; 3]>,
    #[serde(default)]
    pub center: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub rho: f64,
    pub gamma: f64,
    pub amplitude: f64,
    pub nu0: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        let p = KernelParams::default();
        Self {
            rho: p.rho,
            gamma: p.gamma,
            amplitude: p.amplitude,
            nu0: p.nu0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_v: usize,
    pub v_max: f64,
    /// Lattice nodes per axis for the discrete `S K`.
    pub lattice: usize,
    pub line_order: usize,
    pub line_split: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        let r = GridResolution::default();
        let l = LineQuadrature::default();
        Self {
            n_r: r.n_r,
            n_theta: r.n_theta,
            n_phi: r.n_phi,
            n_v: r.n_v,
            v_max: 6.0,
            lattice: 12,
            line_order: l.order,
            line_split: l.split,
        }
    }
}

impl GridConfig {
    pub fn resolution(&self) -> GridResolution {
        GridResolution::new(self.n_r, self.n_theta, self.n_phi, self.n_v)
    }

    pub fn line(&self) -> LineQuadrature {
        LineQuadrature {
            order: self.line_order,
            split: self.line_split,
        }
    }

    /// One refinement step: every count up by a quarter (at least 2,
    /// `n_v` kept even) and four more lattice nodes per axis.
    pub fn refined(&self) -> Self {
        let up = |n: usize| n + (n / 4).max(2);
        let mut n_v = up(self.n_v);
        n_v += n_v % 2;
        Self {
            n_r: up(self.n_r),
            n_theta: up(self.n_theta),
            n_phi: up(self.n_phi),
            n_v,
            lattice: self.lattice + 4,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub norm_kind: NormKind,
    pub record_h1: bool,
}

impl Default for SolveSection {
    fn default() -> Self {
        let c = SolveConfig::default();
        Self {
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
            norm_kind: c.norm_kind,
            record_h1: c.record_h1,
        }
    }
}

impl From<SolveSection> for SolveConfig {
    fn from(s: SolveSection) -> Self {
        SolveConfig {
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            norm_kind: s.norm_kind,
            record_h1: s.record_h1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryFamily {
    Gaussian,
    GaussianX1,
    Zero,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub family: BoundaryFamily,
    /// Decay rate of the Gaussian families.
    pub a: f64,
    /// Terms of the `table` family.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<BoundaryTerm>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            family: BoundaryFamily::Gaussian,
            a: 0.25,
            terms: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub kappas: Vec<f64>,
    /// Random trial fields per contraction estimate.
    pub trials: usize,
    /// Random trial fields per operator inequality.
    pub inequality_trials: usize,
    /// Boundary pairs for the chord bound.
    pub samples: usize,
    /// Interior pairs for the exit-time gradient check.
    pub gradient_samples: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            kappas: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            trials: 8,
            inequality_trials: 16,
            samples: 100_000,
            gradient_samples: 10_000,
        }
    }
}

impl RunConfig {
    /// Smallest valid configuration on `domain`.
    pub fn for_domain(domain: DomainConfig) -> Self {
        Self {
            seed: None,
            output_dir: default_output_dir(),
            domain,
            kernel: KernelConfig::default(),
            grid: GridConfig::default(),
            solve: SolveSection::default(),
            boundary: BoundaryConfig::default(),
            study: StudyConfig::default(),
        }
    }

    pub fn domain(&self) -> Result<ConvexDomain, ConfigError> {
        let d = &self.domain;
        let built = match d.shape {
            ShapeKind::Sphere => {
                let r = d.radius.ok_or_else(|| {
                    ConfigError::invalid("domain.radius", "missing", "positive real, required for sphere")
                })?;
                if d.semi_axes.is_some() {
                    return Err(ConfigError::invalid(
                        "domain.semi_axes",
                        "given",
                        "only for shape = \"ellipsoid\"",
                    ));
                }
                ConvexDomain::sphere(r, d.center)
            }
            ShapeKind::Ellipsoid => {
                let a = d.semi_axes.ok_or_else(|| {
                    ConfigError::invalid("domain.semi_axes", "missing", "three positive reals, required for ellipsoid")
                })?;
                if d.radius.is_some() {
                    return Err(ConfigError::invalid("domain.radius", "given", "only for shape = \"sphere\""));
                }
                ConvexDomain::ellipsoid(a, d.center)
            }
        };
        built.map_err(|e| ConfigError::invalid("domain", e, "finite, strictly positive size"))
    }

    pub fn kernel(&self) -> Result<KernelParams, ConfigError> {
        let k = &self.kernel;
        if !(k.rho > 0.0 && k.rho < 1.0) {
            return Err(ConfigError::invalid("kernel.rho", k.rho, "(0, 1)"));
        }
        if !(0.0..=1.0).contains(&k.gamma) {
            return Err(ConfigError::invalid("kernel.gamma", k.gamma, "[0, 1]"));
        }
        if !(k.amplitude > 0.0 && k.amplitude.is_finite()) {
            return Err(ConfigError::invalid("kernel.amplitude", k.amplitude, "(0, inf)"));
        }
        if !(k.nu0 > 0.0 && k.nu0.is_finite()) {
            return Err(ConfigError::invalid("kernel.nu0", k.nu0, "(0, inf)"));
        }
        KernelParams::new(k.rho, k.gamma, k.amplitude, k.nu0)
            .map_err(|e| ConfigError::invalid("kernel", e, "see kernel ranges"))
    }

    pub fn solve_config(&self) -> SolveConfig {
        self.solve.into()
    }

    pub fn boundary(&self) -> BoundaryData {
        let b = &self.boundary;
        match b.family {
            BoundaryFamily::Gaussian => BoundaryData::gaussian(b.a),
            BoundaryFamily::GaussianX1 => BoundaryData::gaussian_x1(b.a),
            BoundaryFamily::Zero => BoundaryData::zero(),
            BoundaryFamily::Table => BoundaryData::from_terms(b.terms.clone()),
        }
    }

    pub fn context(&self) -> Result<OperatorContext, ConfigError> {
        self.context_with(&self.domain()?, &self.grid)
    }

    pub fn context_with(
        &self,
        domain: &ConvexDomain,
        grid: &GridConfig,
    ) -> Result<OperatorContext, ConfigError> {
        OperatorContext::new(
            domain,
            self.kernel()?,
            grid.resolution(),
            grid.v_max,
            grid.line(),
            grid.lattice,
        )
        .map_err(|e| ConfigError::invalid("grid", e, "see grid ranges"))
    }

    /// Checks every range; the first violation is reported.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain()?;
        self.kernel()?;
        let g = &self.grid;
        for (name, n) in [("grid.n_r", g.n_r), ("grid.n_theta", g.n_theta), ("grid.n_phi", g.n_phi)] {
            if n < 2 {
                return Err(ConfigError::invalid(name, n, "integer >= 2"));
            }
        }
        if g.n_v < 2 || g.n_v % 2 != 0 {
            return Err(ConfigError::invalid("grid.n_v", g.n_v, "even integer >= 2"));
        }
        if !(g.v_max > 0.0 && g.v_max.is_finite()) {
            return Err(ConfigError::invalid("grid.v_max", g.v_max, "(0, inf)"));
        }
        if g.lattice < 2 {
            return Err(ConfigError::invalid("grid.lattice", g.lattice, "integer >= 2"));
        }
        if g.line_order < 1 {
            return Err(ConfigError::invalid("grid.line_order", g.line_order, "integer >= 1"));
        }
        let s = &self.solve;
        if s.max_iterations < 1 {
            return Err(ConfigError::invalid("solve.max_iterations", s.max_iterations, "integer >= 1"));
        }
        if !(s.tolerance > 0.0 && s.tolerance.is_finite()) {
            return Err(ConfigError::invalid("solve.tolerance", s.tolerance, "(0, inf)"));
        }
        let b = &self.boundary;
        match b.family {
            BoundaryFamily::Gaussian | BoundaryFamily::GaussianX1 => {
                if !(b.a > 0.0 && b.a.is_finite()) {
                    return Err(ConfigError::invalid("boundary.a", b.a, "(0, inf)"));
                }
            }
            BoundaryFamily::Table => {
                if b.terms.is_empty() {
                    return Err(ConfigError::invalid("boundary.terms", "empty", "at least one term for family = \"table\""));
                }
                for (i, t) in b.terms.iter().enumerate() {
                    if !(t.a >= 0.0 && t.a.is_finite() && t.coef.is_finite()) {
                        return Err(ConfigError::invalid(
                            &format!("boundary.terms[{i}]"),
                            format!("coef {} a {}", t.coef, t.a),
                            "finite coef, a >= 0",
                        ));
                    }
                }
            }
            BoundaryFamily::Zero => {}
        }
        let st = &self.study;
        if let Some(k) = st.kappas.iter().find(|k| !(**k > 0.0 && **k <= 1.0)) {
            return Err(ConfigError::invalid("study.kappas", k, "each in (0, 1]"));
        }
        if st.trials < 8 {
            return Err(ConfigError::invalid("study.trials", st.trials, "integer >= 8"));
        }
        if st.inequality_trials < 16 {
            return Err(ConfigError::invalid("study.inequality_trials", st.inequality_trials, "integer >= 16"));
        }
        if st.samples < 10_000 {
            return Err(ConfigError::invalid("study.samples", st.samples, "integer >= 10000"));
        }
        if st.gradient_samples < 1 {
            return Err(ConfigError::invalid("study.gradient_samples", st.gradient_samples, "integer >= 1"));
        }
        Ok(())
    }

    /// Canonical TOML text of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((1, 1));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// One-based line and column of byte offset `at`.
fn line_column(text: &str, at: usize) -> (usize, usize) {
    let before = &text[..at.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[domain]\nshape = \"sphere\"\nradius = 0.1\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.domain.radius, Some(0.1));
        assert_eq!(cfg.grid, GridConfig::default());
        assert_eq!(cfg.kernel, KernelConfig::default());
        assert_eq!(cfg.seed, None);
        assert_eq!(cfg.output_dir, PathBuf::from("lbe-out"));
    }

    #[test]
    fn rho_out_of_range_names_the_field() {
        let err = parse_config(&format!("{MINIMAL}[kernel]\nrho = 1.2\n")).unwrap_err();
        match err {
            ConfigError::Validation { field, allowed, .. } => {
                assert_eq!(field, "kernel.rho");
                assert_eq!(allowed, "(0, 1)");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_position() {
        let err = parse_config(&format!("{MINIMAL}turbulence = 3\n")).unwrap_err();
        match err {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("turbulence"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse_config(MINIMAL).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_toml(), again.to_toml());
    }

    #[test]
    fn refined_grid_keeps_velocity_count_even() {
        let g = GridConfig::default().refined();
        assert_eq!((g.n_r, g.n_theta, g.n_phi, g.n_v, g.lattice), (10, 10, 20, 10, 16));
        let odd = GridConfig { n_v: 6, ..GridConfig::default() }.refined();
        assert_eq!(odd.n_v % 2, 0);
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
        assert_eq!(line_column("ab", 0), (1, 1));
    }
}
