//! Built-in scenario analogues and the default sweep.

use std::path::Path;

use super::config::ScenarioConfig;
use super::sweep::{SweepConfig, SweepSpec};
use crate::error::{Error, Result};

const PRESETS: [(&str, &str); 4] = [
    ("home_to_work", include_str!("../../scenarios/home_to_work.toml")),
    ("work_to_home", include_str!("../../scenarios/work_to_home.toml")),
    ("car", include_str!("../../scenarios/car.toml")),
    ("airport", include_str!("../../scenarios/airport.toml")),
];

pub const DEFAULT_SWEEP: &str = include_str!("../../scenarios/sweep.toml");

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<ScenarioConfig> {
    let text = source(name).ok_or_else(|| Error::Config(format!("no built-in scenario named {name:?}")))?;
    ScenarioConfig::from_toml(text)
}

/// A preset name, or a scenario file path relative to `base`.
pub fn resolve(reference: &str, base: &Path) -> Result<ScenarioConfig> {
    if let Some(text) = source(reference) {
        return ScenarioConfig::from_toml(text);
    }
    let path = base.join(reference);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("scenario {reference:?}: {e} ({})", path.display())))?;
    ScenarioConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_sweep(text: &str, base: &Path) -> Result<SweepConfig> {
    let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    SweepConfig::from_spec(spec, |r| resolve(r, base))
}

pub fn default_sweep() -> Result<SweepConfig> {
    parse_sweep(DEFAULT_SWEEP, Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for n in names() {
            let c = load(n).unwrap();
            assert_eq!(c.name, n);
        }
        let sweep = default_sweep().unwrap();
        assert_eq!(sweep.scenarios.len(), 3);
        assert_eq!(sweep.benign.len(), 4);
    }

    #[test]
    fn airport_density() {
        let c = load("airport").unwrap();
        let per_hour = c.resolved_devices().len() as f64 / (c.duration_s / 3600.0);
        assert!(per_hour >= 200.0, "{per_hour}");
        assert!((c.duration_s - 3.0 * 3600.0).abs() < 1e-9);
    }
}
