//! Shared setup for the criterion benchmarks.

use railchain_core::engine::Envelope;
use railchain_core::model::NetworkState;
use railchain_core::sim::{generate, ScenarioSpec};

/// A mid-sized scenario: state plus the booking stream.
pub fn benchmark_scenario() -> (NetworkState, Vec<Envelope>) {
    let spec = ScenarioSpec {
        stations: 20,
        yards: 3,
        trains_per_corridor: 3,
        days: 4,
        tightness: 0.8,
        requests: 150,
        short_lead_share: 0.55,
        delivery_window_hours: 40,
        seed: 42,
    };
    let scenario = generate(&spec).expect("benchmark scenario");
    let mut engine = railchain_core::engine::Engine::new(Default::default());
    engine.apply(scenario.init.clone(), true).expect("init state");
    let state = engine.state().clone();
    (state, scenario.bookings)
}
