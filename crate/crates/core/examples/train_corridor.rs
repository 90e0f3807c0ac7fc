//! Trains D3QN, A2C and PPO on the three-cell corridor and compares the
//! greedy policies with value iteration.

use lanebench::drl::{greedy_action, train, Algo, Corridor, CORRIDOR_STATES};
use lanebench::nn::Tensor;

fn value_iteration(gamma: f64) -> Vec<usize> {
    let mut v = [0.0; CORRIDOR_STATES];
    let q = |v: &[f64; CORRIDOR_STATES], s, a| {
        let (next, r, terminal) = Corridor::transition(s, a);
        r + if terminal { 0.0 } else { gamma * v[next] }
    };
    for _ in 0..200 {
        v = std::array::from_fn(|s| (0..3).map(|a| q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max));
    }
    (0..CORRIDOR_STATES)
        .map(|s| (0..3).max_by(|&a, &b| q(&v, s, a).total_cmp(&q(&v, s, b))).unwrap())
        .collect()
}

fn main() {
    let optimal = value_iteration(0.9);
    println!("value iteration: {optimal:?}  (0 stay, 1 left, 2 right)");
    let states = Tensor::from_fn(&[3, 3], |i| if i % 3 == i / 3 { 1.0 } else { 0.0 });
    for algo in Algo::ALL {
        for seed in 0..3 {
            let out = train(algo, |_| Corridor::new(), &Corridor::train_config(seed)).unwrap();
            let greedy = greedy_action(&out.network, &states).unwrap();
            let last = out.curve.points.last().map_or(0.0, |p| p.smoothed);
            let verdict = if greedy == optimal { "optimal" } else { "suboptimal" };
            println!("{algo:>5} seed {seed}: {greedy:?} {verdict}, smoothed return {last:.3}");
        }
    }
}
