//! Version-controlled experiment configs reproducing each published figure.

use crate::config::{ConfigError, ConfigSet};

macro_rules! entries {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../catalog/", $name, ".conf")))),*]
    };
}

/// `(name, config text)` in presentation order.
pub const ENTRIES: &[(&str, &str)] = entries!(
    "fig1",
    "fig2",
    "fig3",
    "fig4",
    "fig5",
    "fig6",
    "fig7",
    "fig8",
    "fig9",
    "fig10",
    "fig11",
    "fig12",
    "inverse",
    "threshold-gaussian",
    "threshold-dirac",
);

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    ENTRIES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// First comment line of an entry.
pub fn description(name: &str) -> Option<&'static str> {
    text(name)?.lines().find_map(|l| l.strip_prefix('#')).map(str::trim)
}

pub fn load(name: &str) -> Option<Result<ConfigSet, ConfigError>> {
    text(name).map(ConfigSet::from_text)
}
