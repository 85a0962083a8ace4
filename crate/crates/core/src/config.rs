//! Run configuration: TOML schema, validation and resolution into solver
//! inputs.

use crate::assembly::{build_subdomains, BlockSpec, CoupledSystem, GeometrySpec, SatParams, Subdomain};
use crate::geometry::Mapping;
use crate::physics::{PdeParams, PhiMode, ZetaMode};
use crate::timeloop::{
    check_conditions, select_parameters, ConditionInputs, ConditionReport, Scheme, StabilityConstants, SweepOrder,
    TimeConfig,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable overriding `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "SBPCHT_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub sat: SatConfig,
    pub time: TimeBlock,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub degree: usize,
    /// "affine" or "perturbed" (2D only).
    #[serde(default = "default_map")]
    pub map: String,
    /// Nodes per axis in both blocks.
    pub n: usize,
    /// Per-axis node counts overriding `n`; the tangential counts must agree.
    #[serde(default)]
    pub left_counts: Option<Vec<usize>>,
    #[serde(default)]
    pub right_counts: Option<Vec<usize>>,
    /// Lower and upper corner of the left block.
    #[serde(default)]
    pub left_box: Option<[Vec<f64>; 2]>,
    #[serde(default)]
    pub right_box: Option<[Vec<f64>; 2]>,
}

fn default_dimension() -> usize {
    2
}

fn default_map() -> String {
    "affine".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub epsilon: f64,
    pub kappa: f64,
    /// Defaults to (0, 1) in 2D, (0) in 1D and (0, 1, 0) in 3D.
    #[serde(default)]
    pub advection: Option<Vec<f64>>,
    /// "upwind" or "constant".
    pub zeta_mode: String,
    #[serde(default)]
    pub zeta: Option<f64>,
    /// "kappa" or "constant".
    pub phi_mode: String,
    #[serde(default)]
    pub phi: Option<f64>,
    /// Force with the manufactured solution.
    pub mms: bool,
    /// Initial data: "exact" (manufactured solution), "zero" or "random".
    #[serde(default)]
    pub initial: Option<String>,
    pub seed: u64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            kappa: 1.0,
            advection: None,
            zeta_mode: "upwind".into(),
            zeta: None,
            phi_mode: "kappa".into(),
            phi: None,
            mms: true,
            initial: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatConfig {
    /// "auto" selects γ₁ = ε/ρ_L; "manual" takes the values below.
    pub mode: String,
    #[serde(default)]
    pub c_star: Option<f64>,
    #[serde(default)]
    pub gamma1: Option<f64>,
    /// γ₂ on both sides (auto mode, or manual when the sided values are absent).
    #[serde(default)]
    pub gamma2: Option<f64>,
    #[serde(default)]
    pub gamma2_left: Option<f64>,
    #[serde(default)]
    pub gamma2_right: Option<f64>,
}

impl Default for SatConfig {
    fn default() -> Self {
        Self { mode: "auto".into(), c_star: Some(1.0), gamma1: None, gamma2: None, gamma2_left: None, gamma2_right: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    /// Step size, or "auto" for the selector's maximal step.
    pub dt: DtSetting,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub final_time: Option<f64>,
    pub scheme: String,
    #[serde(default = "default_n_loop")]
    pub n_loop: usize,
    /// "left_first" or "right_first".
    #[serde(default)]
    pub sweep: Option<String>,
    #[serde(default)]
    pub strict: bool,
    /// Overrides of the step-size constants C₁, C₂.
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
}

fn default_n_loop() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write the per-step energy ledger.
    pub ledger: bool,
    /// Write the final solution.
    pub solution: bool,
    /// Write SVG plots next to the CSV files.
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("output"), ledger: true, solution: true, plots: true }
    }
}

/// How initial data are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    Exact,
    Zero,
    Random { seed: u64 },
}

/// SAT parameters as requested by the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SatChoice {
    Auto { c_star: f64, gamma2: f64 },
    Manual(SatParams),
}

/// Step size as requested by the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepChoice {
    Fixed(f64),
    Auto,
}

/// Step count as requested by the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Duration {
    Steps(usize),
    FinalTime(f64),
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub geometry: GeometrySpec,
    pub params: PdeParams,
    pub mms: bool,
    pub initial: InitialData,
    pub sat: SatChoice,
    pub step: StepChoice,
    pub duration: Duration,
    pub scheme: Scheme,
    pub n_loop: usize,
    pub sweep: SweepOrder,
    pub strict: bool,
    pub c_star: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub output: OutputConfig,
    /// The configuration as given, for reproducibility headers.
    pub raw: RunConfig,
}

/// Fully resolved inputs of a run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: CoupledSystem,
    pub time: TimeConfig,
    pub constants: StabilityConstants,
    pub conditions: ConditionReport,
    /// Largest step allowed by the selector.
    pub dt_max: f64,
}

pub fn load(path: &Path) -> Result<Settings, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Settings, ConfigError> {
    let raw: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    raw.validate()
}

fn finite_positive(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be nonnegative and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<Settings, ConfigError> {
        let g = &self.geometry;
        let dim = g.dimension;
        if !(1..=3).contains(&dim) {
            return Err(invalid("geometry.dimension", format!("must be 1, 2 or 3, got {dim}")));
        }
        if !(1..=3).contains(&g.degree) {
            return Err(invalid("geometry.degree", format!("must be 1, 2 or 3, got {}", g.degree)));
        }
        let min = crate::sbp::min_nodes(g.degree).map_err(|e| invalid("geometry.degree", e.to_string()))?;
        let counts = |key: &'static str, given: &Option<Vec<usize>>| -> Result<Vec<usize>, ConfigError> {
            let c = given.clone().unwrap_or_else(|| vec![g.n; dim]);
            if c.len() != dim {
                return Err(invalid(key, format!("needs {dim} entries, got {}", c.len())));
            }
            if let Some(bad) = c.iter().find(|&&k| k < min) {
                return Err(invalid(key, format!("{bad} nodes is below the minimum {min} for degree {}", g.degree)));
            }
            Ok(c)
        };
        let left_counts = counts("geometry.left_counts", &g.left_counts)?;
        let right_counts = counts("geometry.right_counts", &g.right_counts)?;
        if left_counts[1..] != right_counts[1..] {
            return Err(invalid("geometry.right_counts", "tangential node counts must match the left block"));
        }
        let default_box = |lo_x: f64, hi_x: f64| -> [Vec<f64>; 2] {
            let mut lo = vec![-1.0; dim];
            let mut hi = vec![1.0; dim];
            lo[0] = lo_x;
            hi[0] = hi_x;
            [lo, hi]
        };
        let left_box = g.left_box.clone().unwrap_or_else(|| default_box(-1.0, 0.0));
        let right_box = g.right_box.clone().unwrap_or_else(|| default_box(0.0, 1.2));
        for (key, b) in [("geometry.left_box", &left_box), ("geometry.right_box", &right_box)] {
            if b[0].len() != dim || b[1].len() != dim {
                return Err(invalid(key, format!("corners need {dim} coordinates")));
            }
            if b[0].iter().zip(&b[1]).any(|(lo, hi)| !(hi > lo)) {
                return Err(invalid(key, "upper corner must exceed lower corner on every axis"));
            }
        }
        if left_box[1][0] != right_box[0][0] {
            return Err(invalid("geometry.right_box", "blocks must meet at a common x plane"));
        }
        if left_box[0][1..] != right_box[0][1..] || left_box[1][1..] != right_box[1][1..] {
            return Err(invalid("geometry.right_box", "tangential extents must match the left block"));
        }
        let map = |b: &[Vec<f64>; 2]| -> Result<Mapping, ConfigError> {
            match g.map.as_str() {
                "affine" | "identity" => Mapping::affine(&b[0], &b[1]).map_err(|e| invalid("geometry.map", e.to_string())),
                "perturbed" if dim == 2 => Mapping::perturbed([b[0][0], b[0][1]], [b[1][0], b[1][1]])
                    .map_err(|e| invalid("geometry.map", e.to_string())),
                "perturbed" => Err(invalid("geometry.map", "the perturbed map is two-dimensional")),
                other => Err(invalid("geometry.map", format!("unknown map {other:?}; expected affine or perturbed"))),
            }
        };
        let geometry = GeometrySpec {
            degree: g.degree,
            left: BlockSpec { map: map(&left_box)?, counts: left_counts },
            right: BlockSpec { map: map(&right_box)?, counts: right_counts },
        };

        let p = &self.physics;
        let advection = p.advection.clone().unwrap_or_else(|| {
            let mut a = vec![0.0; dim];
            if dim > 1 {
                a[1] = 1.0;
            }
            a
        });
        let zeta = match p.zeta_mode.as_str() {
            "upwind" => ZetaMode::Upwind,
            "constant" => ZetaMode::Constant(nonnegative(
                "physics.zeta",
                p.zeta.ok_or_else(|| invalid("physics.zeta", "required when zeta_mode = \"constant\""))?,
            )?),
            other => return Err(invalid("physics.zeta_mode", format!("unknown mode {other:?}; expected upwind or constant"))),
        };
        let phi = match p.phi_mode.as_str() {
            "kappa" => PhiMode::Kappa,
            "constant" => PhiMode::Constant(finite_positive(
                "physics.phi",
                p.phi.ok_or_else(|| invalid("physics.phi", "required when phi_mode = \"constant\""))?,
            )?),
            other => return Err(invalid("physics.phi_mode", format!("unknown mode {other:?}; expected kappa or constant"))),
        };
        let params = PdeParams { advection, epsilon: p.epsilon, kappa: p.kappa, zeta, phi };
        params.validate(dim).map_err(|e| invalid("physics", e.to_string()))?;
        let initial = match p.initial.as_deref() {
            None if p.mms => InitialData::Exact,
            None => InitialData::Zero,
            Some("exact") if p.mms => InitialData::Exact,
            Some("exact") => return Err(invalid("physics.initial", "exact initial data require mms = true")),
            Some("zero") => InitialData::Zero,
            Some("random") => InitialData::Random { seed: p.seed },
            Some(other) => return Err(invalid("physics.initial", format!("unknown {other:?}; expected exact, zero or random"))),
        };

        let s = &self.sat;
        let c_star = finite_positive("sat.c_star", s.c_star.unwrap_or(1.0))?;
        let sat = match s.mode.as_str() {
            "auto" => {
                if s.gamma1.is_some() || s.gamma2_left.is_some() || s.gamma2_right.is_some() {
                    return Err(invalid("sat.mode", "auto mode takes only c_star and gamma2"));
                }
                SatChoice::Auto { c_star, gamma2: nonnegative("sat.gamma2", s.gamma2.unwrap_or(0.0))? }
            }
            "manual" => {
                let g1 = s.gamma1.ok_or_else(|| invalid("sat.gamma1", "required in manual mode"))?;
                let g2 = s.gamma2.unwrap_or(0.0);
                let sat = SatParams::new(g1, g1, s.gamma2_left.unwrap_or(g2), s.gamma2_right.unwrap_or(g2))
                    .map_err(|e| invalid("sat", e.to_string()))?;
                SatChoice::Manual(sat)
            }
            other => return Err(invalid("sat.mode", format!("unknown mode {other:?}; expected auto or manual"))),
        };

        let t = &self.time;
        let step = match &t.dt {
            DtSetting::Value(v) => StepChoice::Fixed(finite_positive("time.dt", *v)?),
            DtSetting::Keyword(k) if k == "auto" => StepChoice::Auto,
            DtSetting::Keyword(k) => return Err(invalid("time.dt", format!("expected a number or \"auto\", got {k:?}"))),
        };
        let duration = match (t.steps, t.final_time) {
            (Some(n), None) => Duration::Steps(n),
            (None, Some(tf)) => Duration::FinalTime(nonnegative("time.final_time", tf)?),
            (Some(_), Some(_)) => return Err(invalid("time.steps", "give either steps or final_time, not both")),
            (None, None) => return Err(invalid("time.steps", "one of steps or final_time is required")),
        };
        let scheme: Scheme = t.scheme.parse().map_err(|e: String| invalid("time.scheme", e))?;
        if t.n_loop == 0 {
            return Err(invalid("time.n_loop", "must be at least 1"));
        }
        let sweep = match t.sweep.as_deref() {
            None | Some("left_first") => SweepOrder::LeftFirst,
            Some("right_first") => SweepOrder::RightFirst,
            Some(other) => return Err(invalid("time.sweep", format!("unknown {other:?}; expected left_first or right_first"))),
        };
        let c1 = t.c1.map(|v| finite_positive("time.c1", v)).transpose()?;
        let c2 = t.c2.map(|v| finite_positive("time.c2", v)).transpose()?;
        if self.output.dir.as_os_str().is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        Ok(Settings {
            geometry,
            params,
            mms: p.mms,
            initial,
            sat,
            step,
            duration,
            scheme,
            n_loop: t.n_loop,
            sweep,
            strict: t.strict,
            c_star,
            c1,
            c2,
            output: self.output.clone(),
            raw: self.clone(),
        })
    }
}

impl Settings {
    /// Output directory, honouring the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.dir.clone())
    }

    /// The configuration rendered as TOML lines.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).unwrap_or_default()
    }

    /// Same settings on a grid with `n` nodes per axis in both blocks.
    pub fn with_grid(&self, n: usize) -> Self {
        let mut s = self.clone();
        let dim = s.geometry.dim();
        s.geometry.left.counts = vec![n; dim];
        s.geometry.right.counts = vec![n; dim];
        s.raw.geometry.n = n;
        s.raw.geometry.left_counts = None;
        s.raw.geometry.right_counts = None;
        s
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        let mut s = self.clone();
        s.scheme = scheme;
        s.raw.time.scheme = scheme.name().into();
        s
    }

    /// Assembles the system and resolves "auto" parameters.
    pub fn resolve(&self) -> Result<Resolved, crate::assembly::AssemblyError> {
        let (left, right) = build_subdomains(&self.geometry)?;
        self.resolve_with(left, right)
    }

    pub fn resolve_with(&self, left: Subdomain, right: Subdomain) -> Result<Resolved, crate::assembly::AssemblyError> {
        let auto = select_parameters(
            &left.trace,
            &right.trace,
            &self.params,
            self.c_star,
            match self.sat {
                SatChoice::Auto { gamma2, .. } => gamma2,
                SatChoice::Manual(s) => s.gamma2_min(),
            },
        );
        let sat = match self.sat {
            SatChoice::Auto { .. } => auto.sat,
            SatChoice::Manual(s) => s,
        };
        let mut constants = auto.constants;
        if let Some(c1) = self.c1 {
            constants.c1 = c1;
        }
        if let Some(c2) = self.c2 {
            constants.c2 = c2;
        }
        let mut dt_max = constants.c1 / sat.gamma1.max(f64::MIN_POSITIVE);
        if sat.gamma2_min() > 0.0 {
            dt_max = dt_max.min(constants.c2 / (self.params.kappa.powi(2) * sat.gamma2_min()));
        }
        let dt = match self.step {
            StepChoice::Fixed(dt) => dt,
            StepChoice::Auto => dt_max,
        };
        let steps = match self.duration {
            Duration::Steps(n) => n,
            Duration::FinalTime(tf) => TimeConfig::steps_for(tf, dt),
        };
        let system = CoupledSystem::from_subdomains(left, right, self.params.clone(), sat)?;
        let conditions = check_conditions(&ConditionInputs {
            sat: &system.sat,
            dt,
            left: &system.left.trace,
            right: &system.right.trace,
            params: &system.params,
            constants,
            dim: system.left.dim(),
        });
        let time = TimeConfig { dt, steps, scheme: self.scheme, n_loop: self.n_loop, sweep: self.sweep, strict: self.strict };
        Ok(Resolved { system, time, constants, conditions, dt_max })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[geometry]
degree = 1
n = 6

[time]
dt = 0.01
steps = 3
scheme = "BE-EXT2"
"#;

    #[test]
    fn minimal_config_resolves() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.scheme, Scheme::BeExt2);
        assert_eq!(s.geometry.left.counts, vec![6, 6]);
        let r = s.resolve().unwrap();
        assert_eq!(r.time.steps, 3);
        assert!((r.system.sat.gamma1 - 1.0 / r.system.left.trace.rho).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_is_reported() {
        let err = parse(&format!("{MINIMAL}\n[output]\nfolder = \"x\"\n")).unwrap_err();
        assert!(err.to_string().contains("folder"), "{err}");
    }

    #[test]
    fn manual_mode_requires_gamma1() {
        let err = parse(&format!("{MINIMAL}\n[sat]\nmode = \"manual\"\n")).unwrap_err();
        assert!(err.to_string().contains("sat.gamma1"), "{err}");
    }
}
