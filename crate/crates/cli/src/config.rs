//! Experiment configuration: one TOML document per run.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use percolab_core::estimators::{BisectionOptions, CrossingCriterion};
use percolab_core::growth::StoppingRule;
use percolab_core::model::ConnectionFunction;
use serde::{Deserialize, Serialize};

use crate::error::{config_error, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Giant,
    Theta,
    LambdaC,
    Events,
    BlockField,
    Mecke,
    Fkg,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Sample,
        Command::Giant,
        Command::Theta,
        Command::LambdaC,
        Command::Events,
        Command::BlockField,
        Command::Mecke,
        Command::Fkg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Giant => "giant",
            Command::Theta => "theta",
            Command::LambdaC => "lambda-c",
            Command::Events => "events",
            Command::BlockField => "block-field",
            Command::Mecke => "mecke",
            Command::Fkg => "fkg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeckeSettings {
    /// Radius of the target disk `D_K`.
    pub k: f64,
    /// Also run the second-order identity.
    pub second_order: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSettings {
    pub k: f64,
    /// Outer radii for `U`.
    pub l: Vec<f64>,
    /// Separations for `F`; the block field uses the first.
    pub m: Vec<f64>,
    /// Block field side, in lattice sites.
    pub grid: usize,
    /// L-infinity distance for the dependence check.
    pub distance: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaCSettings {
    pub criterion: CrossingCriterion,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkgSettings {
    /// `{L_1 >= fraction * lambda * theta_hat * s^2}`.
    pub largest_fraction: f64,
    /// `{D_radius <-> boundary}`.
    pub disk_radius: f64,
    /// Replicates of the theta estimate that sets the `L_1` threshold.
    pub theta_replicates: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSettings {
    /// Edge list of replicate 0 for each grid cell (sample, giant).
    pub dump_edges: bool,
    /// Growth trace of replicate 0 for each intensity (theta).
    pub trace: bool,
}

/// Full effective configuration of a run. Everything that affects an
/// emitted byte lives here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub phi: ConnectionFunction,
    /// Intensity grid, strictly increasing.
    pub lambda: Vec<f64>,
    /// Box-side grid, strictly increasing.
    pub s: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub rule: StoppingRule,
    pub out: PathBuf,
    /// Worker threads; absent means available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub mecke: MeckeSettings,
    pub events: EventSettings,
    pub lambda_c: LambdaCSettings,
    pub fkg: FkgSettings,
    #[serde(default)]
    pub debug: DebugSettings,
}

impl ExperimentConfig {
    /// Defaults sized for the acceptance experiments of each command.
    pub fn defaults(command: Command) -> Self {
        let bisection = BisectionOptions::default();
        let (lambda, s, replicates) = match command {
            Command::Sample => (vec![1.0], vec![10.0], 10),
            Command::Giant => (vec![2.0], vec![32.0, 64.0, 128.0], 200),
            Command::Theta => (vec![2.0], vec![], 10_000),
            Command::LambdaC => (vec![], vec![64.0, 128.0], bisection.replicates),
            Command::Events => (vec![2.0], vec![], 1_000),
            Command::BlockField => (vec![2.0], vec![], 8),
            Command::Mecke => (vec![1.0], vec![16.0], 2_000),
            Command::Fkg => (vec![2.0], vec![32.0], 2_000),
        };
        Self {
            command,
            phi: ConnectionFunction::unit_disk(),
            lambda,
            s,
            replicates,
            seed: 1,
            rule: StoppingRule::default(),
            out: PathBuf::from(format!("results/{}", command.name())),
            workers: None,
            mecke: MeckeSettings {
                k: 1.0,
                second_order: false,
            },
            events: EventSettings {
                k: 2.0,
                l: vec![6.0, 10.0, 14.0],
                m: vec![14.0],
                grid: 20,
                distance: 8,
            },
            lambda_c: LambdaCSettings {
                criterion: CrossingCriterion::default(),
                lower: bisection.lower,
                upper: bisection.upper,
                width: bisection.width,
                max_iterations: bisection.max_iterations,
            },
            fkg: FkgSettings {
                largest_fraction: 0.5,
                disk_radius: 1.0,
                theta_replicates: 1_000,
            },
            debug: DebugSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_owned)
                .unwrap_or_else(|| "config".to_owned());
            CliError::Config {
                field,
                reason: e.message().trim().to_owned(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            field: "config".into(),
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn bisection(&self) -> BisectionOptions {
        BisectionOptions {
            lower: self.lambda_c.lower,
            upper: self.lambda_c.upper,
            width: self.lambda_c.width,
            max_iterations: self.lambda_c.max_iterations,
            replicates: self.replicates,
        }
    }

    /// Range and consistency checks; errors name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let needs_lambda = !matches!(self.command, Command::LambdaC);
        let needs_s = matches!(
            self.command,
            Command::Sample | Command::Giant | Command::LambdaC | Command::Mecke | Command::Fkg
        );
        check_grid("lambda", &self.lambda, needs_lambda, true)?;
        check_grid("s", &self.s, needs_s, false)?;
        if self.replicates == 0 {
            return Err(config_error("replicates", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config_error("workers", "must be at least 1"));
        }
        if self.rule.max_size == 0 {
            return Err(config_error("kmax", "must be at least 1"));
        }
        if self.rule.escape_radius.is_nan() || self.rule.escape_radius <= 0.0 {
            return Err(config_error("rmax_escape", "must be > 0"));
        }
        if !(self.mecke.k.is_finite() && self.mecke.k >= 0.0) {
            return Err(config_error("mecke.k", "must be finite and >= 0"));
        }
        let ev = &self.events;
        if !(ev.k.is_finite() && ev.k > 0.0) {
            return Err(config_error("events.k", "must be finite and > 0"));
        }
        if let Some(l) = ev.l.iter().find(|&&l| !(l.is_finite() && l > ev.k)) {
            return Err(config_error("events.l", format!("every L must exceed K = {}, got {l}", ev.k)));
        }
        if let Some(m) = ev.m.iter().find(|&&m| !(m.is_finite() && m > 2.0 * ev.k)) {
            return Err(config_error("events.m", format!("every M must exceed 2K = {}, got {m}", 2.0 * ev.k)));
        }
        if self.command == Command::BlockField {
            match ev.m.first() {
                Some(&m) if m > 3.0 * ev.k => {}
                _ => return Err(config_error("events.m", "block field needs a first M > 3K")),
            }
            if ev.grid == 0 {
                return Err(config_error("events.grid", "must be at least 1"));
            }
        }
        let lc = &self.lambda_c;
        if !(lc.lower > 0.0 && lc.lower < lc.upper && lc.upper.is_finite()) {
            return Err(config_error("lambda_c.lower", "need 0 < lower < upper"));
        }
        if !(lc.width > 0.0) {
            return Err(config_error("lambda_c.width", "must be > 0"));
        }
        let target = lc.criterion.target();
        if !(target > 0.0 && target < 1.0) {
            return Err(config_error("lambda_c.criterion", "target must lie in (0, 1)"));
        }
        if !(self.fkg.largest_fraction.is_finite() && self.fkg.largest_fraction >= 0.0) {
            return Err(config_error("fkg.largest_fraction", "must be finite and >= 0"));
        }
        if !(self.fkg.disk_radius.is_finite() && self.fkg.disk_radius >= 0.0) {
            return Err(config_error("fkg.disk_radius", "must be finite and >= 0"));
        }
        Ok(())
    }
}

fn check_grid(field: &str, grid: &[f64], required: bool, allow_zero: bool) -> Result<(), CliError> {
    if required && grid.is_empty() {
        return Err(config_error(field, "grid must be nonempty"));
    }
    for &v in grid {
        let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
        if !ok {
            return Err(config_error(field, format!("invalid value {v}")));
        }
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(config_error(field, "grid must be strictly increasing"));
    }
    Ok(())
}
