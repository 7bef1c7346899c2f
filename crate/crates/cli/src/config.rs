//! Flat key=value run configuration with section prefixes
//! (`pneumo.tau_fill=1.078`). Layering: built-in defaults, then an
//! optional `--config` file, then `--set key=value` overrides.

use anyhow::{anyhow, bail, Result};

use plg_core::locomotion::MarkerEnd;
use plg_core::pneumo::PneumoParams;

/// Built-in defaults, versioned with the repository.
pub const DEFAULTS: &str = include_str!("../../../defaults.cfg");

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pneumo: PneumoParams,
    pub tau_release_ms: f64,
    pub body_total_length_mm: f64,
    pub body_total_mass_g: f64,
    pub stiffness_n_per_mm: f64,
    pub damping_ns_per_mm: f64,
    pub marker: MarkerEnd,
    pub mu_forward: f64,
    pub mu_backward: f64,
    pub v_smoothing_mm_s: f64,
    pub gravity_mm_s2: f64,
    pub duration_s: f64,
    pub loco_dt_s: f64,
    pub seed: u64,
}

impl RunConfig {
    /// Built-in defaults only.
    pub fn defaults() -> Result<RunConfig> {
        let mut config = RunConfig {
            pneumo: PneumoParams::default(),
            tau_release_ms: 267.0,
            body_total_length_mm: 263.0,
            body_total_mass_g: 191.0,
            stiffness_n_per_mm: 0.5,
            damping_ns_per_mm: 0.05,
            marker: MarkerEnd::LastFoot,
            mu_forward: 0.3,
            mu_backward: 0.3,
            v_smoothing_mm_s: 0.1,
            gravity_mm_s2: 9810.0,
            duration_s: 66.0,
            loco_dt_s: plg_core::locomotion::DEFAULT_DT_S,
            seed: 0,
        };
        config.apply_text(DEFAULTS, "built-in defaults")?;
        Ok(config)
    }

    /// Defaults, then the optional config file, then `--set` overrides.
    pub fn load(config_file: Option<&std::path::Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut config = RunConfig::defaults()?;
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow!("cannot read config {}: {e}", path.display()))?;
            config.apply_text(&text, &path.display().to_string())?;
        }
        for entry in overrides {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| anyhow!("--set needs key=value, got {entry:?}"))?;
            config.apply(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key=value", i + 1))?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| anyhow!("{origin}:{}: {e}", i + 1))?;
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let float = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| anyhow!("key {key}: not a number: {value:?}"))
        };
        match key {
            "pneumo.tau_fill" => self.pneumo.tau_fill_s = float()?,
            "pneumo.tau_vent" => self.pneumo.tau_vent_s = float()?,
            "pneumo.p_threshold_on" => self.pneumo.p_threshold_on_bar = float()?,
            "pneumo.p_threshold_off" => self.pneumo.p_threshold_off_bar = float()?,
            "pneumo.output_ratio" => self.pneumo.output_ratio_default = float()?,
            "pneumo.dt" => self.pneumo.dt_s = float()?,
            "pneumo.contention_grace_steps" => {
                self.pneumo.contention_grace_steps = value
                    .parse::<usize>()
                    .map_err(|_| anyhow!("key {key}: not an integer: {value:?}"))?;
            }
            "actuator.tau_release_ms" => self.tau_release_ms = float()?,
            "body.total_length_mm" => self.body_total_length_mm = float()?,
            "body.total_mass_g" => self.body_total_mass_g = float()?,
            "body.stiffness_n_per_mm" => self.stiffness_n_per_mm = float()?,
            "body.damping_ns_per_mm" => self.damping_ns_per_mm = float()?,
            "body.marker" => {
                self.marker = match value {
                    "last" => MarkerEnd::LastFoot,
                    "first" => MarkerEnd::FirstFoot,
                    other => bail!("key body.marker: expected last or first, got {other:?}"),
                };
            }
            "friction.mu_forward" => self.mu_forward = float()?,
            "friction.mu_backward" => self.mu_backward = float()?,
            "friction.v_smoothing_mm_s" => self.v_smoothing_mm_s = float()?,
            "friction.gravity_mm_s2" => self.gravity_mm_s2 = float()?,
            "sim.duration_s" => self.duration_s = float()?,
            "sim.dt_s" => self.loco_dt_s = float()?,
            "sim.seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| anyhow!("key {key}: not an integer: {value:?}"))?;
            }
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn friction(&self) -> plg_core::locomotion::FrictionModel {
        plg_core::locomotion::FrictionModel {
            mu_forward: self.mu_forward,
            mu_backward: self.mu_backward,
            v_smoothing_mm_s: self.v_smoothing_mm_s,
            gravity_mm_s2: self.gravity_mm_s2,
        }
    }
}
