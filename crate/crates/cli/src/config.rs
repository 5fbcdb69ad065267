//! Resolution of experiment settings: built-in defaults, then the config
//! file, then command-line flags, each layer overriding the previous one.
//!
//! The config file is flat UTF-8 `key = value` text; `#` starts a comment;
//! unknown keys fail fast.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fvlab::paths::PathConfig;

use crate::{CliError, CommonArgs, ConstantsArgs, ExtinctArgs, FwArgs, HittingArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Law {
    Bessel,
    Reflected,
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Bessel => "bessel",
            Law::Reflected => "reflected",
        }
    }
}

/// Fully resolved settings of one command invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub experiment: &'static str,
    pub nu: f64,
    pub beta: f64,
    pub n_particles: usize,
    pub replicas: u64,
    pub horizon: f64,
    pub dt: f64,
    pub eps_abs: f64,
    pub seed: u64,
    pub out: Option<String>,
    pub format: OutputFormat,
    pub assert_mode: bool,
    pub dump_paths: Option<PathBuf>,
    // Command-specific extensions (defaults otherwise).
    pub law: Law,
    pub scaling: bool,
    pub a: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub start: f64,
    pub path_replicas: u64,
    // Which of nu/beta were given explicitly (flag or file), for
    // consistency checks.
    nu_given: bool,
    beta_given: bool,
}

impl Settings {
    /// Layered resolution for the common surface.
    pub fn resolve(experiment: &'static str, args: &CommonArgs) -> Result<Settings, CliError> {
        let file = match &args.config {
            Some(path) => load_config_file(path)?,
            None => BTreeMap::new(),
        };
        let lookup_f64 = |key: &str| -> Result<Option<f64>, CliError> {
            match file.get(key) {
                None => Ok(None),
                Some(raw) => raw
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| CliError::usage(format!("config key {key}: bad number {raw:?}"))),
            }
        };
        let lookup_u64 = |key: &str| -> Result<Option<u64>, CliError> {
            match file.get(key) {
                None => Ok(None),
                Some(raw) => raw
                    .parse::<u64>()
                    .map(Some)
                    .map_err(|_| CliError::usage(format!("config key {key}: bad integer {raw:?}"))),
            }
        };

        let default_replicas = match experiment {
            "sign-test" | "hitting-law" => 100_000,
            "density-check" | "fw-check" | "perpetuity" => 10_000,
            "coupling" => 100,
            _ => 1_000,
        };
        let default_horizon = if experiment == "coupling" { 5.0 } else { 1e3 };
        let default_nu = match experiment {
            "coupling" => 0.5,
            "hitting-law" => -4.0,
            _ => -1.0,
        };
        let default_n = if experiment == "coupling" { 4 } else { 2 };

        let nu_flag_or_file = match args.nu {
            Some(v) => Some(v),
            None => lookup_f64("nu")?,
        };
        let beta_flag_or_file = match args.beta {
            Some(v) => Some(v),
            None => lookup_f64("beta")?,
        };

        let law = match file.get("law").map(String::as_str) {
            None => Law::Bessel,
            Some("bessel") => Law::Bessel,
            Some("reflected") => Law::Reflected,
            Some(other) => {
                return Err(CliError::usage(format!(
                    "config key law: expected bessel or reflected, got {other:?}"
                )))
            }
        };

        let settings = Settings {
            experiment,
            nu: nu_flag_or_file.unwrap_or(default_nu),
            beta: beta_flag_or_file.unwrap_or(3.0),
            n_particles: match args.n_particles {
                Some(v) => v,
                None => lookup_u64("n_particles")?.map(|v| v as usize).unwrap_or(default_n),
            },
            replicas: match args.replicas {
                Some(v) => v,
                None => lookup_u64("replicas")?.unwrap_or(default_replicas),
            },
            horizon: match args.horizon {
                Some(v) => v,
                None => lookup_f64("horizon")?.unwrap_or(default_horizon),
            },
            dt: match args.dt {
                Some(v) => v,
                None => lookup_f64("dt")?.unwrap_or(1e-3),
            },
            eps_abs: match args.eps_abs {
                Some(v) => v,
                None => lookup_f64("eps_abs")?.unwrap_or(1e-6),
            },
            seed: match args.seed {
                Some(v) => v,
                None => lookup_u64("seed")?.unwrap_or(42),
            },
            out: args.out.clone().or_else(|| file.get("out").cloned()),
            format: match (args.format, file.get("format").map(String::as_str)) {
                (Some(f), _) => f,
                (None, Some("csv")) => OutputFormat::Csv,
                (None, Some("json")) => OutputFormat::Json,
                (None, Some(other)) => {
                    return Err(CliError::usage(format!(
                        "config key format: expected csv or json, got {other:?}"
                    )))
                }
                (None, None) => OutputFormat::Json,
            },
            assert_mode: args.assert,
            dump_paths: args.dump_paths.clone(),
            law,
            scaling: false,
            a: lookup_f64("a")?.unwrap_or(1.0),
            gamma: lookup_f64("gamma")?.unwrap_or(0.5),
            delta: lookup_f64("delta")?.unwrap_or(0.3),
            epsilon: lookup_f64("epsilon")?.unwrap_or(0.5),
            start: lookup_f64("start")?.unwrap_or(1.0),
            path_replicas: 0,
            nu_given: nu_flag_or_file.is_some(),
            beta_given: beta_flag_or_file.is_some(),
        };
        settings.validate_common()?;
        Ok(settings)
    }

    fn validate_common(&self) -> Result<(), CliError> {
        if !(self.dt.is_finite() && self.dt > 0.0) || !(self.eps_abs.is_finite() && self.eps_abs > 0.0) || !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(CliError::usage(format!(
                "dt, eps-abs and horizon must be positive (got {}, {}, {})",
                self.dt, self.eps_abs, self.horizon
            )));
        }
        if self.replicas == 0 {
            return Err(CliError::usage("replicas must be at least 1"));
        }
        match self.experiment {
            "sign-test" | "density-check" | "perpetuity" | "coupling" => {
                if self.beta_given {
                    return Err(CliError::usage(format!(
                        "--beta does not apply to {}",
                        self.experiment
                    )));
                }
                if !(self.nu.is_finite() && self.nu < 2.0) {
                    return Err(CliError::usage(format!(
                        "{} requires nu < 2, got {}",
                        self.experiment, self.nu
                    )));
                }
            }
            "fw-check" | "constants" if self.nu_given => {
                return Err(CliError::usage(format!(
                    "--nu does not apply to {}",
                    self.experiment
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn apply_extinct(&mut self, args: &ExtinctArgs) -> Result<(), CliError> {
        if let Some(law) = args.law {
            self.law = law;
        }
        self.scaling = args.scaling;
        match self.law {
            Law::Bessel => {
                if self.beta_given {
                    return Err(CliError::usage(
                        "--beta does not apply to the bessel law (use --nu)",
                    ));
                }
                if !(self.nu.is_finite() && self.nu < 2.0) {
                    return Err(CliError::usage(format!(
                        "bessel law requires nu < 2, got {}",
                        self.nu
                    )));
                }
            }
            Law::Reflected => {
                if self.nu_given {
                    return Err(CliError::usage(
                        "--nu does not apply to the reflected law (use --beta)",
                    ));
                }
                if !(self.beta.is_finite() && self.beta > 2.0) {
                    return Err(CliError::usage(format!(
                        "reflected law requires beta > 2, got {}",
                        self.beta
                    )));
                }
                if self.scaling {
                    return Err(CliError::usage(
                        "--scaling applies only to the bessel law",
                    ));
                }
            }
        }
        if self.scaling && self.n_particles != 2 {
            return Err(CliError::usage(
                "--scaling is the two-particle construction; use --n-particles 2",
            ));
        }
        if self.n_particles < 2 {
            return Err(CliError::usage("the particle system needs N >= 2"));
        }
        Ok(())
    }

    pub fn apply_fw(&mut self, args: &FwArgs) -> Result<(), CliError> {
        if let Some(a) = args.a {
            self.a = a;
        }
        if let Some(gamma) = args.gamma {
            self.gamma = gamma;
        }
        if let Some(delta) = args.delta {
            self.delta = delta;
        }
        Ok(())
    }

    pub fn apply_constants(&mut self, args: &ConstantsArgs) -> Result<(), CliError> {
        if let Some(a) = args.a {
            self.a = a;
        }
        if let Some(gamma) = args.gamma {
            self.gamma = gamma;
        }
        if let Some(epsilon) = args.epsilon {
            self.epsilon = epsilon;
        }
        Ok(())
    }

    pub fn apply_hitting(&mut self, args: &HittingArgs) -> Result<(), CliError> {
        if let Some(start) = args.start {
            self.start = start;
        }
        self.path_replicas = args.path_replicas.unwrap_or(0);
        if !(self.nu.is_finite() && self.nu < 2.0) {
            return Err(CliError::usage(format!(
                "hitting-law requires nu < 2 (no finite hitting time otherwise), got {}",
                self.nu
            )));
        }
        Ok(())
    }

    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            dt_base: self.dt,
            kappa: 0.01,
            eps_abs: self.eps_abs,
            horizon: self.horizon,
        }
    }
}

fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    const KNOWN_KEYS: [&str; 17] = [
        "nu",
        "beta",
        "n_particles",
        "replicas",
        "horizon",
        "dt",
        "eps_abs",
        "seed",
        "out",
        "format",
        "law",
        "scaling",
        "a",
        "gamma",
        "delta",
        "epsilon",
        "start",
    ];
    let text = std::fs::read_to_string(path)
        .map_err(|err| CliError::usage(format!("cannot read config {}: {err}", path.display())))?;
    let mut map = BTreeMap::new();
    for (line_no, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!(
                "{}:{}: expected key = value, got {raw_line:?}",
                path.display(),
                line_no + 1
            )));
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!(
                "{}:{}: unknown config key {key:?}",
                path.display(),
                line_no + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}
