//! Experiment configuration: TOML in, fully resolved JSON out.
//!
//! Every section is optional and every key has a default, but unknown keys
//! are rejected so that a typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Moser,
    Geodesic,
    Interp,
    Heat,
    Hodge,
    Growth,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Moser => "moser",
            Kind::Geodesic => "geodesic",
            Kind::Interp => "interp",
            Kind::Heat => "heat",
            Kind::Hodge => "hodge",
            Kind::Growth => "growth",
        }
    }
}

/// A scalar input: an expression in `x, y, z` or a field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Expr(String),
    File(FileSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub file: PathBuf,
}

impl Source {
    pub fn expr(text: &str) -> Self {
        Source::Expr(text.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dims: Vec<usize>,
    /// Defaults to 1 along every axis.
    pub periods: Option<Vec<f64>>,
    /// Central stencil order: 2, 4, 6 or 8.
    pub stencil: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dims: vec![16, 16, 16],
            periods: None,
            stencil: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSpec {
    /// `flat` or `sin-heisenberg`; the default when `fields` is absent is
    /// `sin-heisenberg` in 3D and `flat` in 2D.
    pub builtin: Option<String>,
    /// Coefficient expressions, one list per frame field.
    pub fields: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    #[default]
    Midpoint,
    PerStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    #[default]
    Gather,
    LinearScatter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precond {
    #[default]
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    #[default]
    CrankNicolson,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoserSpec {
    pub source: Source,
    pub target: Source,
    pub steps: usize,
    pub tol: f64,
    pub schedule: Schedule,
    pub kernel: Kernel,
    pub preconditioner: Precond,
    pub checkpoint_every: usize,
    pub max_l2_error: f64,
    pub max_horizontality: f64,
    /// Upper bound on `monge_ampere_residual / l2_error`.
    pub max_monge_ampere_ratio: f64,
}

impl Default for MoserSpec {
    fn default() -> Self {
        Self {
            source: Source::expr("1"),
            target: Source::expr("1 + 0.3*sin(2*pi*z)"),
            steps: 32,
            tol: 1e-8,
            schedule: Schedule::Midpoint,
            kernel: Kernel::Gather,
            preconditioner: Precond::None,
            checkpoint_every: 0,
            max_l2_error: 1e-3,
            max_horizontality: 1e-12,
            max_monge_ampere_ratio: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeodesicSpec {
    pub q0: [f64; 3],
    pub p0: [f64; 3],
    pub t: f64,
    pub dt: f64,
    pub max_energy_drift: f64,
    /// Also integrate at `dt/2` and `dt/4` and check the error ratio.
    pub check_order: bool,
    /// Coarsest step of the order check (then `/2` and `/4`).
    pub order_dt: f64,
    pub ratio_range: [f64; 2],
}

impl Default for GeodesicSpec {
    fn default() -> Self {
        Self {
            q0: [0.1, 0.2, 0.3],
            p0: [0.7, -0.4, 0.9],
            t: 1.0,
            dt: 1e-3,
            max_energy_drift: 1e-8,
            check_order: true,
            order_dt: 0.025,
            ratio_range: [12.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpSpec {
    pub density: Source,
    pub potential: Source,
    /// Interpolation times at which densities are written.
    pub times: Vec<f64>,
    pub dt: f64,
    /// Horizon of the Hamilton-Jacobi check; 0 disables it.
    pub hj_t_max: f64,
    pub max_hj_residual: f64,
}

impl Default for InterpSpec {
    fn default() -> Self {
        Self {
            density: Source::expr("1"),
            potential: Source::expr("0.02*(sin(2*pi*x) + cos(2*pi*y)*sin(2*pi*z))"),
            times: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            dt: 1e-2,
            hj_t_max: 0.2,
            max_hj_residual: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatSpec {
    pub initial: Source,
    pub t_max: f64,
    pub dt: f64,
    pub stepper: Stepper,
    pub snapshot_every: usize,
    pub tol: f64,
    pub max_mass_drift: f64,
    pub require_monotone: bool,
    /// Bound on `|dEnt/dt + |d_t nu|^2|`; unchecked when absent.
    pub max_gap: Option<f64>,
    pub max_two_laplacian: f64,
    /// Expected exponential decay rate of `nu - mean`, e.g. `(2 pi)^2` for a
    /// single unit-wavenumber mode; unchecked when absent.
    pub expected_decay_rate: Option<f64>,
    pub max_decay_error: f64,
}

impl Default for HeatSpec {
    fn default() -> Self {
        Self {
            initial: Source::expr("1 + 0.2*sin(2*pi*y)"),
            t_max: 0.01,
            dt: 1e-3,
            stepper: Stepper::CrankNicolson,
            snapshot_every: 1,
            tol: 1e-13,
            max_mass_drift: 1e-12,
            require_monotone: true,
            max_gap: None,
            max_two_laplacian: 1e-2,
            expected_decay_rate: None,
            max_decay_error: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HodgeSpec {
    /// Ambient components of W, one expression per axis.
    pub field: Vec<String>,
    pub density: Source,
    /// Project W onto the distribution before decomposing.
    pub horizontal: bool,
    pub tol: f64,
    pub max_divergence_ratio: f64,
    pub max_orthogonality: f64,
}

impl Default for HodgeSpec {
    fn default() -> Self {
        Self {
            field: vec![
                "sin(2*pi*y) + cos(2*pi*z)".into(),
                "cos(2*pi*x)".into(),
                "sin(2*pi*(x + z))".into(),
            ],
            density: Source::expr("1"),
            horizontal: true,
            tol: 1e-12,
            max_divergence_ratio: 1e-7,
            max_orthogonality: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSpec {
    pub max_depth: usize,
    /// Extra points where growth vectors are reported.
    pub probes: Vec<[f64; 3]>,
    pub require_bracket_generating: bool,
}

impl Default for GrowthSpec {
    fn default() -> Self {
        Self {
            max_depth: 4,
            probes: vec![[0.0, 0.0, 0.0], [0.25, 0.0, 0.0]],
            require_bracket_generating: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSpec {
    /// Fail the study when the fitted order falls below this.
    pub min_order: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Optional; must agree with the command line when present.
    pub kind: Option<Kind>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub grid: GridSpec,
    pub frame: FrameSpec,
    pub moser: MoserSpec,
    pub geodesic: GeodesicSpec,
    pub interp: InterpSpec,
    pub heat: HeatSpec,
    pub hodge: HodgeSpec,
    pub growth: GrowthSpec,
    pub refine: RefineSpec,
}

/// Parses a TOML document; syntax errors carry line and column, unknown keys
/// are named.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid value for `{key}`: {message}"))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} must be positive and finite")))
    }
}

/// Range checks that do not need the grid; the rest happens when inputs are
/// resolved.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let g = &cfg.grid;
    if !(2..=3).contains(&g.dims.len()) {
        return Err(invalid("grid.dims", "expected two or three axes"));
    }
    if let Some(p) = &g.periods {
        if p.len() != g.dims.len() {
            return Err(invalid("grid.periods", "needs one period per axis"));
        }
    }
    if ![2, 4, 6, 8].contains(&g.stencil) {
        return Err(invalid(
            "grid.stencil",
            format!("{} is not one of 2, 4, 6, 8", g.stencil),
        ));
    }
    if cfg.frame.builtin.is_some() && cfg.frame.fields.is_some() {
        return Err(invalid("frame", "give either `builtin` or `fields`, not both"));
    }
    let m = &cfg.moser;
    if m.steps == 0 {
        return Err(invalid("moser.steps", "must be at least 1"));
    }
    positive("moser.tol", m.tol)?;
    positive("moser.max_l2_error", m.max_l2_error)?;
    positive("geodesic.dt", cfg.geodesic.dt)?;
    positive("geodesic.order_dt", cfg.geodesic.order_dt)?;
    if !(cfg.geodesic.t >= 0.0 && cfg.geodesic.t.is_finite()) {
        return Err(invalid("geodesic.t", "must be non-negative"));
    }
    positive("interp.dt", cfg.interp.dt)?;
    if cfg.interp.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(invalid("interp.times", "times must be non-negative"));
    }
    positive("heat.dt", cfg.heat.dt)?;
    positive("heat.tol", cfg.heat.tol)?;
    if !(cfg.heat.t_max > 0.0) {
        return Err(invalid("heat.t_max", "must be positive"));
    }
    if cfg.hodge.field.len() != g.dims.len() {
        return Err(invalid("hodge.field", format!("needs {} components", g.dims.len())));
    }
    positive("hodge.tol", cfg.hodge.tol)?;
    if cfg.growth.max_depth == 0 {
        return Err(invalid("growth.max_depth", "must be at least 1"));
    }
    Ok(())
}
