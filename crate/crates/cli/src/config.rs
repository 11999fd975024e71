//! Configuration ingestion: the run config and the family spec file, both
//! structured TOML documents with fail-closed schemas (unknown keys are
//! errors).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use evolve1d::hamiltonians::{
    BasisTerm, Lipschitz, MovingDeltaSpec, ScalarProfile, SpatialGrid, StaticDeltaFamilySpec,
    SEPARATION_FLOOR,
};
use evolve1d::propagator::Sampling;

/// A configuration problem: message carries the field path where known.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Verify,
    Converge,
    Frames,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Verify => "verify",
            Mode::Converge => "converge",
            Mode::Frames => "frames",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = ConfigError;
    fn from_str(s: &str) -> CResult<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "verify" => Ok(Mode::Verify),
            "converge" => Ok(Mode::Converge),
            "frames" => Ok(Mode::Frames),
            other => Err(ConfigError(format!(
                "mode: unknown value '{other}' (expected simulate|verify|converge|frames)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDto {
    pub half_width: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingDto {
    Left,
    Midpoint,
}

impl From<SamplingDto> for Sampling {
    fn from(s: SamplingDto) -> Sampling {
        match s {
            SamplingDto::Left => Sampling::Left,
            SamplingDto::Midpoint => Sampling::Midpoint,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDto {
    pub s: f64,
    pub t: f64,
    pub n_slices: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingDto,
}

fn default_substeps() -> usize {
    4
}

fn default_sampling() -> SamplingDto {
    SamplingDto::Left
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialStateDto {
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default)]
        momentum: f64,
    },
    File {
        path: String,
    },
}

impl Default for InitialStateDto {
    fn default() -> Self {
        InitialStateDto::Gaussian {
            center: 0.0,
            width: 1.0,
            momentum: 0.0,
        }
    }
}

/// Tolerances used by the verification suite; every field has an engine
/// default and can be overridden in the config or from the command line.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub unitarity: f64,
    pub cocycle: f64,
    pub inverse_autonomous: f64,
    pub stability_m: f64,
    pub stability_beta: f64,
    pub form_growth_slack: f64,
    pub equivalence_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            unitarity: 1e-10,
            cocycle: 1e-12,
            inverse_autonomous: 1e-10,
            stability_m: 1e-8,
            stability_beta: 1e-8,
            form_growth_slack: 1e-8,
            equivalence_slack: 1e-6,
        }
    }
}

impl Tolerances {
    /// Applies a `key=value` override; unknown keys are errors (fail-closed).
    pub fn apply_override(&mut self, key: &str, value: f64) -> CResult<()> {
        match key {
            "unitarity" => self.unitarity = value,
            "cocycle" => self.cocycle = value,
            "inverse_autonomous" => self.inverse_autonomous = value,
            "stability_m" => self.stability_m = value,
            "stability_beta" => self.stability_beta = value,
            "form_growth_slack" => self.form_growth_slack = value,
            "equivalence_slack" => self.equivalence_slack = value,
            other => return Err(ConfigError(format!("tolerances: unknown key '{other}'"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateDto {
    /// Snapshot every k-th slice boundary.
    pub snapshot_stride: usize,
}

impl Default for SimulateDto {
    fn default() -> Self {
        Self { snapshot_stride: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyDto {
    pub form_trials: usize,
    pub pair_samples: usize,
    pub stability_samples: usize,
    /// Grid node count used for the dense equivalence-constant check.
    pub equivalence_n: usize,
}

impl Default for VerifyDto {
    fn default() -> Self {
        Self {
            form_trials: 200,
            pair_samples: 50,
            stability_samples: 100,
            equivalence_n: 258,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeDto {
    pub n_list: Vec<usize>,
    pub reference_n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FramesDto {
    pub levels: usize,
    pub base_n_slices: usize,
    pub base_quad_step: f64,
}

impl Default for FramesDto {
    fn default() -> Self {
        Self {
            levels: 3,
            base_n_slices: 16,
            base_quad_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDto {
    pub mode: Mode,
    /// Path of the family spec file, relative to the run config.
    pub spec: String,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub grid: Option<GridDto>,
    pub schedule: ScheduleDto,
    #[serde(default)]
    pub initial_state: InitialStateDto,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub simulate: SimulateDto,
    #[serde(default)]
    pub verify: VerifyDto,
    #[serde(default)]
    pub converge: Option<ConvergeDto>,
    #[serde(default)]
    pub frames: FramesDto,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ProfileDto {
    #[serde(rename = "constant")]
    Constant { value: f64 },
    #[serde(rename = "piecewise")]
    Piecewise { knots: Vec<f64>, values: Vec<f64> },
    #[serde(rename = "expression")]
    Expression { terms: Vec<TermDto> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum TermDto {
    #[serde(rename = "poly")]
    Poly { coeff: f64, power: u32 },
    #[serde(rename = "sin")]
    Sin { amp: f64, freq: f64, phase: f64 },
    #[serde(rename = "cos")]
    Cos { amp: f64, freq: f64, phase: f64 },
    #[serde(rename = "exp")]
    Exp { amp: f64, rate: f64 },
}

impl From<&TermDto> for BasisTerm {
    fn from(t: &TermDto) -> BasisTerm {
        match *t {
            TermDto::Poly { coeff, power } => BasisTerm::Poly { coeff, power },
            TermDto::Sin { amp, freq, phase } => BasisTerm::Sin { amp, freq, phase },
            TermDto::Cos { amp, freq, phase } => BasisTerm::Cos { amp, freq, phase },
            TermDto::Exp { amp, rate } => BasisTerm::Exp { amp, rate },
        }
    }
}

impl From<&ProfileDto> for ScalarProfile {
    fn from(p: &ProfileDto) -> ScalarProfile {
        match p {
            ProfileDto::Constant { value } => ScalarProfile::Constant(*value),
            ProfileDto::Piecewise { knots, values } => ScalarProfile::PiecewiseLinear {
                knots: knots.clone(),
                values: values.clone(),
            },
            ProfileDto::Expression { terms } => {
                ScalarProfile::Expression(terms.iter().map(BasisTerm::from).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowDto {
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointDto {
    pub x: f64,
    pub coupling: ProfileDto,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum LipschitzDto {
    Declared(f64),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingsDto {
    pub lipschitz: LipschitzDto,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesDto {
    pub x1: ProfileDto,
    pub x2: ProfileDto,
    pub kappa1: ProfileDto,
    pub kappa2: ProfileDto,
    #[serde(default)]
    pub separation_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFileDto {
    pub kind: String,
    pub window: WindowDto,
    #[serde(default)]
    pub grid: Option<GridDto>,
    #[serde(default)]
    pub mass: Option<ProfileDto>,
    #[serde(default)]
    pub potential: Option<ProfileDto>,
    #[serde(default)]
    pub points: Vec<PointDto>,
    #[serde(default)]
    pub couplings: Option<CouplingsDto>,
    #[serde(default)]
    pub trajectories: Option<TrajectoriesDto>,
}

/// Family description resolved from a spec file.
#[derive(Debug, Clone)]
pub enum Family {
    Static(StaticDeltaFamilySpec),
    Moving(MovingDeltaSpec),
}

/// Fully resolved run inputs.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: SpatialGrid,
    pub schedule: ScheduleDto,
    pub sampling: Sampling,
    pub initial_state: InitialStateDto,
    pub tolerances: Tolerances,
    pub simulate: SimulateDto,
    pub verify: VerifyDto,
    pub converge: Option<ConvergeDto>,
    pub frames: FramesDto,
    pub window: (f64, f64),
    pub family: Family,
    /// Raw bytes hashed into the output headers.
    pub config_text: String,
    pub spec_text: String,
    pub config_dir: PathBuf,
}

fn toml_error(path: &Path, err: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{}: {err}", path.display()))
}

pub fn load(config_path: &Path) -> CResult<(RunConfigDto, String, FamilyFileDto, String)> {
    let config_text = std::fs::read_to_string(config_path)
        .map_err(|e| toml_error(config_path, format!("cannot read: {e}")))?;
    let run: RunConfigDto = toml::from_str(&config_text).map_err(|e| toml_error(config_path, e))?;
    let spec_path = config_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&run.spec);
    let spec_text = std::fs::read_to_string(&spec_path)
        .map_err(|e| toml_error(&spec_path, format!("cannot read: {e}")))?;
    let family: FamilyFileDto =
        toml::from_str(&spec_text).map_err(|e| toml_error(&spec_path, e))?;
    Ok((run, config_text, family, spec_text))
}

/// Validates and resolves the two documents into engine inputs.
pub fn resolve(
    config_path: &Path,
    run: RunConfigDto,
    config_text: String,
    family_file: FamilyFileDto,
    spec_text: String,
    output_dir_override: Option<PathBuf>,
    seed_override: Option<u64>,
    mode_override: Option<Mode>,
    tol_overrides: &[(String, f64)],
) -> CResult<ResolvedConfig> {
    let grid_dto = run
        .grid
        .clone()
        .or_else(|| family_file.grid.clone())
        .ok_or_else(|| ConfigError("grid: missing in both run config and spec file".into()))?;
    let grid = SpatialGrid::new(grid_dto.half_width, grid_dto.n)
        .map_err(|e| ConfigError(format!("grid: {e}")))?;

    let window = (family_file.window.t0, family_file.window.t1);
    if !(window.0 < window.1) {
        return Err(ConfigError(format!(
            "window: t0 = {} must be < t1 = {}",
            window.0, window.1
        )));
    }
    for (name, v) in [
        ("schedule.s", run.schedule.s),
        ("schedule.t", run.schedule.t),
    ] {
        if v < window.0 - 1e-12 || v > window.1 + 1e-12 {
            return Err(ConfigError(format!(
                "{name}: {v} outside the family window [{}, {}]",
                window.0, window.1
            )));
        }
    }

    let family = match family_file.kind.as_str() {
        "static-points" => {
            let mass = family_file
                .mass
                .as_ref()
                .map(ScalarProfile::from)
                .unwrap_or(ScalarProfile::Constant(0.5));
            let potential = family_file
                .potential
                .as_ref()
                .map(ScalarProfile::from)
                .unwrap_or(ScalarProfile::Constant(0.0));
            if family_file.trajectories.is_some() {
                return Err(ConfigError(
                    "trajectories: not allowed for kind = 'static-points'".into(),
                ));
            }
            let lipschitz = match &family_file.couplings {
                Some(c) => match &c.lipschitz {
                    LipschitzDto::Declared(v) => Lipschitz::Declared(*v),
                    LipschitzDto::Named(s) if s == "estimate" => Lipschitz::Estimate,
                    LipschitzDto::Named(other) => {
                        return Err(ConfigError(format!(
                            "couplings.lipschitz: unknown value '{other}'"
                        )))
                    }
                },
                None => Lipschitz::Estimate,
            };
            let spec = StaticDeltaFamilySpec {
                mass,
                potential,
                points: family_file.points.iter().map(|p| p.x).collect(),
                couplings: family_file
                    .points
                    .iter()
                    .map(|p| ScalarProfile::from(&p.coupling))
                    .collect(),
                lipschitz,
            };
            spec.validate(&grid, window)
                .map_err(|e| ConfigError(format!("family: {e}")))?;
            Family::Static(spec)
        }
        "moving-two-delta" => {
            let tr = family_file.trajectories.as_ref().ok_or_else(|| {
                ConfigError("trajectories: required for kind = 'moving-two-delta'".into())
            })?;
            if !family_file.points.is_empty()
                || family_file.mass.is_some()
                || family_file.potential.is_some()
                || family_file.couplings.is_some()
            {
                return Err(ConfigError(
                    "moving-two-delta spec must not carry mass/potential/points/couplings".into(),
                ));
            }
            let mut spec = MovingDeltaSpec::new(
                ScalarProfile::from(&tr.x1),
                ScalarProfile::from(&tr.x2),
                ScalarProfile::from(&tr.kappa1),
                ScalarProfile::from(&tr.kappa2),
            );
            spec.separation_floor = tr.separation_floor.unwrap_or(SEPARATION_FLOOR);
            spec.validate(window)
                .map_err(|e| ConfigError(format!("family: {e}")))?;
            Family::Moving(spec)
        }
        other => {
            return Err(ConfigError(format!(
                "kind: unknown family kind '{other}' (expected static-points|moving-two-delta)"
            )))
        }
    };

    let mut tolerances = run.tolerances;
    for (key, value) in tol_overrides {
        tolerances.apply_override(key, *value)?;
    }

    if run.schedule.n_slices == 0 || run.schedule.substeps == 0 {
        return Err(ConfigError(
            "schedule: n_slices and substeps must be >= 1".into(),
        ));
    }
    if let Some(c) = &run.converge {
        if c.n_list.is_empty() {
            return Err(ConfigError("converge.n_list: must not be empty".into()));
        }
        let max_n = *c.n_list.iter().max().expect("non-empty");
        if c.reference_n < 4 * max_n {
            return Err(ConfigError(format!(
                "converge.reference_n: {} must be >= 4 * max(n_list) = {}",
                c.reference_n,
                4 * max_n
            )));
        }
    }

    let seed = seed_override.unwrap_or(run.seed);
    let output_dir = output_dir_override
        .or_else(|| run.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            ConfigError("output_dir: missing (set in config or pass --output-dir)".into())
        })?;

    Ok(ResolvedConfig {
        mode: mode_override.unwrap_or(run.mode),
        seed,
        output_dir,
        grid,
        sampling: run.schedule.sampling.into(),
        schedule: run.schedule,
        initial_state: run.initial_state,
        tolerances,
        simulate: run.simulate,
        verify: run.verify,
        converge: run.converge,
        frames: run.frames,
        window,
        family,
        config_text,
        spec_text,
        config_dir: config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf(),
    })
}
