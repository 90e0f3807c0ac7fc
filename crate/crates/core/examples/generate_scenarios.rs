//! Random training traffic and the deterministic suite.
//!
//! `cargo run --example generate_scenarios -- <seed>`

use lanebench::scenarios::{enumerate_deterministic, gen_training, ScenarioClass, TrafficConfig};
use lanebench::sim::to_kmh;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scene = gen_training(seed, &TrafficConfig::training()).unwrap();
    println!("training scene, seed {seed}:");
    for v in &scene.world.vehicles {
        let tag = if v.id == scene.world.ego_id { "ego" } else { "" };
        println!("  {:>3}  lane {}  s {:7.1} m  {:5.1} km/h {tag}", v.id.0, v.lane_index, v.s, to_kmh(v.speed));
    }

    let set = enumerate_deterministic();
    println!("\ndeterministic suite: {} scenarios", set.len());
    for class in ScenarioClass::ALL {
        println!("  {}  {}", class.label(), set.count(class));
    }
    let first_d = set.scenarios.iter().find(|s| s.class == ScenarioClass::D).unwrap();
    println!("\nfirst class (d) record:\n{}", serde_json::to_string_pretty(first_d).unwrap());
}
