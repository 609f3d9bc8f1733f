//! Built-in scenario and sweep files, compiled into the binary.

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../presets/", $name, ".toml")))),*]
    };
}

pub const SCENARIOS: &[(&str, &str)] = presets!(
    "table2-vbr",
    "table5-A",
    "table5-B",
    "table5-C",
    "table5-D",
    "fig5-droptail",
    "fig5-aqm",
    "fig5-ecn",
    "l4s-10-15",
);

pub const SWEEPS: &[(&str, &str)] = presets!("fig6-grid", "codel-target");

pub fn scenario_source(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn sweep_source(name: &str) -> Option<&'static str> {
    SWEEPS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn source(name: &str) -> Option<&'static str> {
    scenario_source(name).or_else(|| sweep_source(name))
}
