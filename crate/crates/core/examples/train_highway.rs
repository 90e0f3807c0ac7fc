//! Trains an agent on random highway traffic over a 300 m segment and
//! writes its checkpoint and learning curve.
//!
//! `cargo run --release --example train_highway -- [ppo|a2c|d3qn] [steps] [out dir]`

use std::collections::BTreeMap;
use std::path::PathBuf;

use lanebench::drl::{random_baseline, train, Algo, HighwayTrainEnv, TrainConfig};
use lanebench::nn::{save_checkpoint, Checkpoint};

fn main() {
    let mut args = std::env::args().skip(1);
    let algo: Algo = args.next().map_or(Algo::Ppo, |a| a.parse().unwrap());
    let steps = args.next().map_or(20_000, |s| s.parse().unwrap());
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "highway-run".into()));
    std::fs::create_dir_all(&dir).unwrap();

    let baseline = random_baseline(&mut HighwayTrainEnv::reduced(300.0), 200, 1);
    println!("random policy return: {baseline:.3}");

    let cfg = TrainConfig {
        total_steps: steps,
        ..TrainConfig::default()
    };
    let out = train(algo, |_| HighwayTrainEnv::reduced(300.0), &cfg).unwrap();
    let pts = &out.curve.points;
    for p in pts.iter().step_by((pts.len() / 10).max(1)) {
        println!("step {:7}  smoothed return {:7.3}", p.step, p.smoothed);
    }
    if let Some(p) = pts.last() {
        println!("final smoothed return {:.3} over {} episodes", p.smoothed, pts.len());
    }

    std::fs::write(dir.join("curve.tsv"), out.curve.to_table()).unwrap();
    let meta = BTreeMap::from([("algo".to_string(), algo.to_string()), ("step".to_string(), steps.to_string())]);
    let path = dir.join("final.ckpt");
    save_checkpoint(&path, &Checkpoint { network: out.network, meta }).unwrap();
    println!("checkpoint: {}", path.display());
}
