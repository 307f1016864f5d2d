//! Shared fixtures for the criterion benches.

use srnet_core::scenario::dataset::{generate_dataset, Dataset, GenConfig};
use srnet_core::scenario::{EdgeRegion, RateSpec, ScenarioConfig};
use srnet_core::ConstraintSet;

/// A small feasible dataset with prepared geometry.
pub fn fixtures(k: usize, count: usize, seed: u64) -> (Dataset, Vec<ConstraintSet>) {
    let region = EdgeRegion::new(0.0, 3.0).expect("region");
    let scenario = ScenarioConfig::new(k, region, RateSpec::Fixed(0.2));
    let (ds, _) = generate_dataset(&GenConfig::new(scenario, count, seed)).expect("dataset");
    let css = ds
        .samples
        .iter()
        .map(|ch| ConstraintSet::build(ch).expect("constraint set"))
        .collect();
    (ds, css)
}
