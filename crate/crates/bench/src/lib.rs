//! Shared inputs for the diagnosis benchmarks.

use apgdiag_core::sim::{builtin_scenario, generate, Dataset, Scenario};

/// Bundled scenario and its generated dataset.
pub fn scenario_dataset(name: &str) -> (Scenario, Dataset) {
    let scenario = builtin_scenario(name).expect("bundled scenario");
    let dataset = generate(&scenario).expect("bundled scenarios generate");
    (scenario, dataset)
}

/// Id of the first run in which every fault of the scenario is active.
pub fn faulted_run(scenario: &Scenario, query_id: &str) -> String {
    let slot = scenario
        .all_faults_active_slot()
        .unwrap_or(scenario.total_runs() - 1);
    scenario.run_id(query_id, slot)
}
