use super::Scenario;

const BUILTIN: &[(&str, &str)] = &[
    ("baseline", include_str!("../../scenarios/baseline.json")),
    (
        "lock_contention",
        include_str!("../../scenarios/lock_contention.json"),
    ),
    (
        "cpu_saturation",
        include_str!("../../scenarios/cpu_saturation.json"),
    ),
    (
        "controller_port_congestion",
        include_str!("../../scenarios/controller_port_congestion.json"),
    ),
    (
        "volume_contention",
        include_str!("../../scenarios/volume_contention.json"),
    ),
    (
        "plan_change",
        include_str!("../../scenarios/plan_change.json"),
    ),
    (
        "zoning_change",
        include_str!("../../scenarios/zoning_change.json"),
    ),
    ("combined", include_str!("../../scenarios/combined.json")),
];

/// Names of the scenarios bundled with the library: a fault-free baseline,
/// one per fault kind, and a combined two-fault scenario.
pub fn builtin_scenario_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(name, _)| *name)
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_json(text).expect("bundled scenarios parse"))
}
