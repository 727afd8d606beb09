//! Flat key-value configuration with unit-suffixed keys, merged in
//! precedence order: built-in defaults < config file < command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment_stats::{ExperimentConfig, GateKind};

/// A partial configuration: every field optional, later overlays win.
/// Keys carry their unit so unit mistakes fail loudly at the parser.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    #[serde(rename = "BL_T", skip_serializing_if = "Option::is_none")]
    pub bl_t: Option<f64>,
    #[serde(rename = "BR_T", skip_serializing_if = "Option::is_none")]
    pub br_t: Option<f64>,
    #[serde(rename = "gL", skip_serializing_if = "Option::is_none")]
    pub gl: Option<f64>,
    #[serde(rename = "gR", skip_serializing_if = "Option::is_none")]
    pub gr: Option<f64>,
    #[serde(rename = "tc_ueV", skip_serializing_if = "Option::is_none")]
    pub tc_uev: Option<f64>,
    #[serde(rename = "U0_ueV", skip_serializing_if = "Option::is_none")]
    pub u0_uev: Option<f64>,
    #[serde(rename = "U0p_ueV", skip_serializing_if = "Option::is_none")]
    pub u0p_uev: Option<f64>,
    #[serde(rename = "eps_on_ueV", skip_serializing_if = "Option::is_none")]
    pub eps_on_uev: Option<f64>,
    #[serde(rename = "eps_off_ueV", skip_serializing_if = "Option::is_none")]
    pub eps_off_uev: Option<f64>,

    #[serde(rename = "nit_per_cm2", skip_serializing_if = "Option::is_none")]
    pub nit_per_cm2: Option<f64>,
    #[serde(rename = "L0_nm", skip_serializing_if = "Option::is_none")]
    pub l0_nm: Option<f64>,
    #[serde(rename = "margin_nm", skip_serializing_if = "Option::is_none")]
    pub margin_nm: Option<f64>,
    #[serde(rename = "dot_sep_nm", skip_serializing_if = "Option::is_none")]
    pub dot_sep_nm: Option<f64>,
    #[serde(rename = "sigma_nm", skip_serializing_if = "Option::is_none")]
    pub sigma_nm: Option<f64>,
    #[serde(rename = "z_setback_nm", skip_serializing_if = "Option::is_none")]
    pub z_setback_nm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_mode: Option<bool>,

    #[serde(rename = "t2star_us", skip_serializing_if = "Option::is_none")]
    pub t2star_us: Option<f64>,
    #[serde(rename = "tau_rtn_ms", skip_serializing_if = "Option::is_none")]
    pub tau_rtn_ms: Option<f64>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composite_reversed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subtract_ensemble_mean: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overhauser: Option<bool>,
}

fn parse_gate(s: &str) -> Result<GateKind> {
    match s {
        "cz" => Ok(GateKind::Cz),
        "composite" => Ok(GateKind::Composite),
        other => Err(Error::InvalidConfig(format!(
            "unknown gate '{other}' (expected 'cz' or 'composite')"
        ))),
    }
}

impl ConfigOverlay {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Overlays `other` on top of `self`; fields set in `other` win.
    pub fn merge(mut self, other: ConfigOverlay) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            bl_t, br_t, gl, gr, tc_uev, u0_uev, u0p_uev, eps_on_uev, eps_off_uev, nit_per_cm2,
            l0_nm, margin_nm, dot_sep_nm, sigma_nm, z_setback_nm, point_mode, t2star_us,
            tau_rtn_ms, gate, devices, trajectories, seed, histogram_bins, composite_reversed,
            subtract_ensemble_mean, shift_scale, overhauser
        );
        self
    }

    /// Applies this overlay onto a full config.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        macro_rules! set {
            ($($src:ident => $($path:ident).+),* $(,)?) => {
                $( if let Some(v) = self.$src { cfg.$($path).+ = v; } )*
            };
        }
        set!(
            bl_t => device.bl_t,
            br_t => device.br_t,
            gl => device.gl,
            gr => device.gr,
            tc_uev => device.tc_uev,
            u0_uev => device.u0_uev,
            u0p_uev => device.u0p_uev,
            eps_on_uev => device.epsilon_on_uev,
            eps_off_uev => device.epsilon_off_uev,
            nit_per_cm2 => sampling.density_per_cm2,
            l0_nm => sampling.area_side_nm,
            margin_nm => sampling.margin_nm,
            sigma_nm => geometry.sigma_nm,
            z_setback_nm => geometry.z_setback_nm,
            point_mode => geometry.point_mode,
            devices => n_devices,
            trajectories => n_trajectories,
            seed => master_seed,
            histogram_bins => histogram_bins,
            composite_reversed => composite_reversed,
            subtract_ensemble_mean => subtract_ensemble_mean,
            shift_scale => shift_scale,
            overhauser => overhauser_enabled,
        );
        if let Some(sep) = self.dot_sep_nm {
            if !(sep > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "dot_sep_nm must be > 0, got {sep}"
                )));
            }
            cfg.geometry.center_l_nm = [-sep / 2.0, 0.0];
            cfg.geometry.center_r_nm = [sep / 2.0, 0.0];
        }
        if let Some(us) = self.t2star_us {
            cfg.t2_star_ns = us * 1e3;
        }
        if let Some(ms) = self.tau_rtn_ms {
            cfg.tau_rtn_ns = ms * 1e6;
        }
        if let Some(g) = &self.gate {
            cfg.gate = parse_gate(g)?;
        }
        Ok(())
    }
}

/// Defaults, then the optional config file, then the CLI overlay.
pub fn resolve_config(
    file: Option<&Path>,
    cli_overlay: ConfigOverlay,
) -> Result<ExperimentConfig> {
    let mut overlay = ConfigOverlay::default();
    if let Some(path) = file {
        overlay = overlay.merge(ConfigOverlay::from_file(path)?);
    }
    overlay = overlay.merge(cli_overlay);
    let mut cfg = ExperimentConfig::default();
    overlay.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_empty_overlay() {
        let cfg = resolve_config(None, ConfigOverlay::default()).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn toml_keys_map_with_unit_conversion() {
        let o = ConfigOverlay::from_toml_str(
            r#"
            tc_ueV = 2.0
            BL_T = 0.6
            t2star_us = 50.0
            tau_rtn_ms = 2.0
            nit_per_cm2 = 1e10
            L0_nm = 80.0
            sigma_nm = 12.0
            z_setback_nm = 14.0
            dot_sep_nm = 40.0
            gate = "composite"
            devices = 10
            seed = 42
            "#,
        )
        .unwrap();
        let mut cfg = ExperimentConfig::default();
        o.apply(&mut cfg).unwrap();
        assert_eq!(cfg.device.tc_uev, 2.0);
        assert_eq!(cfg.device.bl_t, 0.6);
        assert_eq!(cfg.t2_star_ns, 5e4);
        assert_eq!(cfg.tau_rtn_ns, 2e6);
        assert_eq!(cfg.sampling.density_per_cm2, 1e10);
        assert_eq!(cfg.sampling.area_side_nm, 80.0);
        assert_eq!(cfg.geometry.sigma_nm, 12.0);
        assert_eq!(cfg.geometry.z_setback_nm, 14.0);
        assert_eq!(cfg.geometry.center_l_nm, [-20.0, 0.0]);
        assert_eq!(cfg.geometry.center_r_nm, [20.0, 0.0]);
        assert_eq!(cfg.gate, GateKind::Composite);
        assert_eq!(cfg.n_devices, 10);
        assert_eq!(cfg.master_seed, 42);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigOverlay::from_toml_str("tc_uev = 1.0").is_err());
        assert!(ConfigOverlay::from_toml_str("t2star_ns = 1.0").is_err());
    }

    #[test]
    fn bad_gate_name_rejected() {
        let o = ConfigOverlay {
            gate: Some("cnot".into()),
            ..Default::default()
        };
        assert!(o.apply(&mut ExperimentConfig::default()).is_err());
    }

    #[test]
    fn later_overlay_wins() {
        let file = ConfigOverlay {
            tc_uev: Some(2.0),
            seed: Some(1),
            ..Default::default()
        };
        let cli = ConfigOverlay {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.merge(cli);
        assert_eq!(merged.tc_uev, Some(2.0));
        assert_eq!(merged.seed, Some(9));
    }

    #[test]
    fn resolve_validates_final_config() {
        let cli = ConfigOverlay {
            eps_on_uev: Some(9_999.0), // too close to resonance
            ..Default::default()
        };
        assert!(resolve_config(None, cli).is_err());
    }
}
