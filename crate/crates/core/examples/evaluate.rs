//! Stochastic test of MOBIL, or of a checkpoint passed as the first
//! argument, printed as Markdown.
//!
//! `cargo run --release --example evaluate -- [checkpoint] [episodes]`

use lanebench::drl::CheckpointPolicy;
use lanebench::env::EnvConfig;
use lanebench::eval::{emit_stochastic, run_stochastic_par, EvalConfig, ReportFormat};
use lanebench::mobil::MobilPolicy;
use lanebench::nn::load_checkpoint;

fn main() {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().filter(|a| a != "mobil");
    let cfg = EvalConfig {
        stochastic_episodes: args.next().map_or(50, |n| n.parse().unwrap()),
        ..EvalConfig::default()
    };
    let env = EnvConfig::default();
    let (agent, report) = match ckpt {
        Some(path) => {
            let c = load_checkpoint(std::path::Path::new(&path)).unwrap_or_else(|e| panic!("{path}: {e}"));
            let policy = CheckpointPolicy::new("Checkpoint", c.network).unwrap();
            ("Checkpoint", run_stochastic_par(&policy, &cfg, &env).unwrap().0)
        }
        None => ("MOBIL", run_stochastic_par(&MobilPolicy::default(), &cfg, &env).unwrap().0),
    };
    print!("{}", emit_stochastic(agent, &report, ReportFormat::Markdown));
}
