//! Runs the MOBIL baseline over the full deterministic suite and prints
//! the per-class and aggregate tables.

use lanebench::env::EnvConfig;
use lanebench::eval::{emit_deterministic, run_deterministic, EvalConfig, ReportFormat};
use lanebench::mobil::MobilPolicy;
use lanebench::scenarios::enumerate_deterministic;

fn main() {
    let set = enumerate_deterministic();
    let mut policy = MobilPolicy::default();
    let (report, records) =
        run_deterministic(&mut policy, &set, &EvalConfig::default(), &EnvConfig::default()).expect("suite runs");
    print!("{}", emit_deterministic("MOBIL", &report, ReportFormat::Plain));
    if std::env::args().any(|a| a == "--verbose") {
        for r in records.iter().filter(|r| r.collided || !r.succeeded) {
            let scn = set.get(r.key as u32).unwrap();
            println!("{:?} {:?} {:?}", scn.class, scn.params, r);
        }
    }
}
