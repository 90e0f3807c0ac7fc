//! Highway lane-change decision-making benchmark.
//!
//! The crate bundles everything needed to train and evaluate lane-change
//! policies on a straight two- or three-lane highway:
//!
//! * [`sim`] – deterministic kinematic traffic simulation with IDM car following
//! * [`scenarios`] – random training/test traffic and the 422 deterministic scenarios
//! * [`env`] – the image-observation decision process (rendering, reward, rule mask)
//! * [`mobil`] – the rule-based MOBIL baseline
//! * [`nn`] – a small dense/convolutional network core with reverse-mode gradients
//! * [`drl`] – D3QN, A2C and PPO trainers
//! * [`eval`] – batch evaluation and report tables
//! * [`config`] / [`cli`] – run configuration and the command layer used by the binary
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod cli;
pub mod config;
pub mod drl;
pub mod env;
pub mod eval;
pub mod mobil;
pub mod nn;
pub mod rng;
pub mod scenarios;
pub mod sim;
