//! Checked-in run configurations for the benchmark experiments.

use crate::config::{RawConfig, RunConfig};
use crate::CliError;

/// `(name, config text)` of every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("cubic_401", include_str!("../presets/cubic_401.cfg")),
    ("fhn_2001", include_str!("../presets/fhn_2001.cfg")),
    ("linear_201", include_str!("../presets/linear_201.cfg")),
    ("linear_31", include_str!("../presets/linear_31.cfg")),
    ("linear_31_rk4", include_str!("../presets/linear_31_rk4.cfg")),
    ("linear_41", include_str!("../presets/linear_41.cfg")),
    ("linear_801", include_str!("../presets/linear_801.cfg")),
    ("linear_deep_801", include_str!("../presets/linear_deep_801.cfg")),
    ("linear_fixed_point_801", include_str!("../presets/linear_fixed_point_801.cfg")),
    ("linear_noise_004", include_str!("../presets/linear_noise_004.cfg")),
    ("logistic_51", include_str!("../presets/logistic_51.cfg")),
    ("logistic_51_deep", include_str!("../presets/logistic_51_deep.cfg")),
    ("lorenz_clean", include_str!("../presets/lorenz_clean.cfg")),
    ("lorenz_clean_long", include_str!("../presets/lorenz_clean_long.cfg")),
    ("lorenz_noise_001", include_str!("../presets/lorenz_noise_001.cfg")),
    ("lv_101", include_str!("../presets/lv_101.cfg")),
];

pub fn preset_text(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| CliError::config(format!("unknown preset `{name}`")))
}

pub fn preset_raw(name: &str) -> Result<RawConfig, CliError> {
    RawConfig::parse(preset_text(name)?)
}

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    RunConfig::from_raw(&preset_raw(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap();
            assert!(cfg.model.is_some(), "{name}");
            assert!(cfg.intervals().is_ok(), "{name}");
        }
        assert!(preset("nope").is_err());
    }
}
