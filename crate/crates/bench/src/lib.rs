//! Shared fixtures for the benchmarks.

use coopalign::fusion::{rasterize_bev, BevGrid};
use coopalign::geometry::seeded_rng;
use coopalign::harness::{generate_scenario, scenario_seed, ExperimentConfig, Scenario};

pub fn scenario(cfg: &ExperimentConfig, index: usize) -> Scenario {
    let seed = scenario_seed(cfg.seed, index);
    generate_scenario(&cfg.scenario, seed, &mut seeded_rng(seed)).expect("default scenario is feasible")
}

/// Above-ground occupancy of one agent's latest scan on the configured grid.
pub fn agent_grid(cfg: &ExperimentConfig, scenario: &Scenario, agent: usize) -> BevGrid {
    let cloud = scenario.agents[agent]
        .cloud()
        .iter()
        .filter(|p| p.z > cfg.ground_clearance)
        .copied()
        .collect();
    rasterize_bev(&cloud, &cfg.grid)
}
