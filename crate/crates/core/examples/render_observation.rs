//! Renders the observation of a training scene, steps a few decisions and
//! writes every frame as a PNG.
//!
//! `cargo run --example render_observation -- <out dir>`

use std::path::PathBuf;

use lanebench::env::{Action, EnvConfig, HighwayEnv, PaletteColor};
use lanebench::scenarios::{gen_training, TrafficConfig};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "frames".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let scene = gen_training(3, &TrafficConfig::training()).unwrap();
    let mut env = HighwayEnv::new(scene, EnvConfig::default(), 3);
    let mut obs = env.observe();
    for (i, action) in [Action::Keep, Action::Left, Action::Keep, Action::Keep, Action::Right].into_iter().enumerate() {
        obs.save_png(&dir.join(format!("frame-{i:04}.png"))).unwrap();
        println!(
            "frame {i}: ego pixels {:3}, social pixels {:4}, ego box {:?}",
            obs.count(PaletteColor::Ego),
            obs.count(PaletteColor::Social),
            obs.bbox(PaletteColor::Ego)
        );
        let out = env.step(action);
        println!(
            "  {:?} -> reward {:+.3} (speed {:+.3}, lane change {:+.1}, collision {:+.1})",
            action, out.reward.total, out.reward.r_v, out.reward.r_l, out.reward.r_c
        );
        obs = out.observation;
        if out.done {
            break;
        }
    }
    println!("frames written to {}", dir.display());
}
