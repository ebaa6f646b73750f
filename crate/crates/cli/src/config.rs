//! Run configuration read from a sectioned TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use coulomb_braids::{GroupKind, IntegratorConfig, PipelineConfig, ShootingConfig, StepControl, Waypoints};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwistSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    /// `"p/q"` of a full turn.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeSection {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        OdeSection {
            rtol: d.rtol,
            atol: d.atol,
            max_step: d.max_step,
            max_steps: d.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootingSection {
    pub nodes: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub gamma_min: f64,
    pub rank_tol: f64,
}

impl Default for ShootingSection {
    fn default() -> Self {
        let d = ShootingConfig::default();
        ShootingSection {
            nodes: d.nodes,
            tol: d.tol,
            max_iters: d.max_iters,
            gamma_min: d.gamma_min,
            rank_tol: d.rank_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedingSection {
    /// Multiplier on `Q^{1/3}` for the waypoint sphere; unset means `(T/2π)^{2/3}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_factor: Option<f64>,
    pub guard_fraction: f64,
    pub orbit_guard_fraction: f64,
    pub mesh: usize,
}

impl Default for SeedingSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        SeedingSection {
            radius_factor: None,
            guard_fraction: d.seed.guard_fraction,
            orbit_guard_fraction: d.orbit_guard_fraction,
            mesh: d.mesh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub q_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    /// Stop once `Q` comes back past this value after a turning point; unset means `q_start`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_q: Option<f64>,
    pub max_records: usize,
    pub delta: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub corrector_iters: usize,
    pub epsilon_first_step: f64,
    pub epsilon_stop: f64,
    pub epsilon_max_records: usize,
    pub charge_first_step: f64,
}

impl Default for ContinuationSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        let s = StepControl::default();
        ContinuationSection {
            q_min: d.charge_stop.lambda_min,
            q_max: None,
            return_q: None,
            max_records: d.charge_stop.max_records,
            delta: s.delta,
            delta_min: s.delta_min,
            delta_max: s.delta_max,
            corrector_iters: d.charge_stop.corrector_iters,
            epsilon_first_step: d.epsilon_first_step,
            epsilon_stop: d.epsilon_stop,
            epsilon_max_records: d.epsilon_max_records,
            charge_first_step: d.charge_first_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub stability: bool,
    pub minimizer: bool,
    /// Sampling intervals for the Jacobi determinant scan.
    pub samples: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            stability: true,
            minimizer: true,
            samples: coulomb_braids::secondvar::DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the group named in the waypoint file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<GroupKind>,
    /// Waypoint file; relative paths are taken from the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<PathBuf>,
    /// Unset means `2N`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_start: Option<f64>,
    pub output: PathBuf,
    pub interactions: bool,
    pub period: f64,
    pub twist: TwistSection,
    pub ode: OdeSection,
    pub shooting: ShootingSection,
    pub seeding: SeedingSection,
    pub continuation: ContinuationSection,
    pub audit: AuditSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            symmetry: None,
            seed: None,
            q_start: None,
            output: PathBuf::from("out"),
            interactions: true,
            period: 1.0,
            twist: TwistSection::default(),
            ode: OdeSection::default(),
            shooting: ShootingSection::default(),
            seeding: SeedingSection::default(),
            continuation: ContinuationSection::default(),
            audit: AuditSection::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parse a config file and resolve the seed path against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(seed) = &cfg.seed {
            if seed.is_relative() {
                cfg.seed = Some(base.join(seed));
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        positive("ode.rtol", self.ode.rtol)?;
        positive("ode.atol", self.ode.atol)?;
        positive("ode.max_step", self.ode.max_step)?;
        positive("shooting.tol", self.shooting.tol)?;
        positive("shooting.gamma_min", self.shooting.gamma_min)?;
        positive("shooting.rank_tol", self.shooting.rank_tol)?;
        positive("period", self.period)?;
        positive("seeding.guard_fraction", self.seeding.guard_fraction)?;
        positive("seeding.orbit_guard_fraction", self.seeding.orbit_guard_fraction)?;
        let c = &self.continuation;
        positive("continuation.delta", c.delta)?;
        positive("continuation.delta_min", c.delta_min)?;
        positive("continuation.delta_max", c.delta_max)?;
        positive("continuation.epsilon_first_step", c.epsilon_first_step)?;
        positive("continuation.epsilon_stop", c.epsilon_stop)?;
        positive("continuation.charge_first_step", c.charge_first_step)?;
        if let Some(q) = self.q_start {
            positive("q_start", q)?;
        }
        if let Some(f) = self.seeding.radius_factor {
            positive("seeding.radius_factor", f)?;
        }
        if !(c.delta_min <= c.delta && c.delta <= c.delta_max) {
            return Err(CliError::Config(
                "continuation.delta must lie in [delta_min, delta_max]".into(),
            ));
        }
        if self.shooting.nodes == 0 || self.seeding.mesh == 0 || self.audit.samples == 0 {
            return Err(CliError::Config(
                "shooting.nodes, seeding.mesh and audit.samples must be at least 1".into(),
            ));
        }
        match &self.seed {
            None => return Err(CliError::Config("no waypoint file given (`seed`)".into())),
            Some(p) if !p.is_file() => {
                return Err(CliError::Config(format!("waypoint file {} not found", p.display())))
            }
            _ => {}
        }
        Ok(())
    }

    /// The waypoint file with the config's group and twist overrides applied.
    pub fn waypoints(&self) -> Result<Waypoints, CliError> {
        let path = self
            .seed
            .as_ref()
            .ok_or_else(|| CliError::Config("no waypoint file given (`seed`)".into()))?;
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut w: Waypoints = text
            .parse()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(g) = self.symmetry {
            w.group = g;
        }
        if let Some(a) = self.twist.axis {
            w.twist_axis = a;
        }
        if let Some(f) = &self.twist.fraction {
            w.twist_fraction = coulomb_braids::seeding::parse_fraction(f)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(m) = self.twist.repetitions {
            w.repetitions = m;
        }
        Ok(w)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            rtol: self.ode.rtol,
            atol: self.ode.atol,
            max_step: self.ode.max_step,
            max_steps: self.ode.max_steps,
            ..IntegratorConfig::default()
        }
    }

    pub fn shooting_config(&self) -> ShootingConfig {
        ShootingConfig {
            nodes: self.shooting.nodes,
            tol: self.shooting.tol,
            max_iters: self.shooting.max_iters,
            gamma_min: self.shooting.gamma_min,
            rank_tol: self.shooting.rank_tol,
            ode: self.integrator(),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        let c = &self.continuation;
        let control = StepControl {
            delta: c.delta,
            delta_min: c.delta_min,
            delta_max: c.delta_max,
            ..StepControl::default()
        };
        PipelineConfig {
            q_start: self.q_start,
            interactions: self.interactions,
            seed: coulomb_braids::SeedOptions {
                period: self.period,
                radius_factor: self.seeding.radius_factor,
                guard_fraction: self.seeding.guard_fraction,
                ..d.seed
            },
            shooting: self.shooting_config(),
            epsilon_first_step: c.epsilon_first_step,
            epsilon_stop: c.epsilon_stop,
            epsilon_max_records: c.epsilon_max_records,
            epsilon_control: control,
            charge_first_step: c.charge_first_step,
            charge_control: control,
            charge_stop: coulomb_braids::StopCriteria {
                lambda_min: c.q_min,
                lambda_max: c.q_max.unwrap_or(f64::INFINITY),
                max_records: c.max_records,
                return_lambda: c.return_q,
                corrector_iters: c.corrector_iters,
            },
            orbit_guard_fraction: self.seeding.orbit_guard_fraction,
            mesh: self.seeding.mesh,
        }
    }
}
