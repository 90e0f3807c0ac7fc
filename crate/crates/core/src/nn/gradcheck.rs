//! Reverse-mode gradients against central finite differences.

use rand::Rng as _;

use super::*;
use crate::rng::{rng_for, stream, Rng};

/// Loss `Σ_heads Σ c ⊙ output` with fixed random coefficients `c`.
struct LinearLoss {
    coeffs: Vec<(String, Tensor)>,
}

impl LinearLoss {
    fn new(net: &Network, batch: usize, rng: &mut Rng) -> Self {
        let coeffs = net
            .spec
            .heads
            .iter()
            .map(|h| (h.name.clone(), Tensor::from_fn(&[batch, h.outputs], |_| rng.random_range(-1.0..1.0))))
            .collect();
        Self { coeffs }
    }

    fn value(&self, net: &Network, x: &Tensor) -> f64 {
        let f = net.forward(x).unwrap();
        self.coeffs
            .iter()
            .map(|(n, c)| f.output(n).data().iter().zip(c.data()).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    fn grads(&self, net: &Network, x: &Tensor) -> Gradients {
        let f = net.forward(x).unwrap();
        let refs: Vec<(&str, &Tensor)> = self.coeffs.iter().map(|(n, c)| (n.as_str(), c)).collect();
        net.backward(&f, &refs).unwrap()
    }
}

struct Agreement {
    agree: usize,
    compared: usize,
    /// Coordinates whose stencil crosses a ReLU kink; the function is not
    /// differentiable there, so finite differences are no oracle.
    kinked: usize,
}

impl Agreement {
    fn fraction(&self) -> f64 {
        self.agree as f64 / self.compared as f64
    }

    fn assert_passes(&self) {
        let total = self.compared + self.kinked;
        assert!(self.compared * 10 >= total * 9, "{} of {total} coordinates straddle a kink", self.kinked);
        assert!(self.fraction() >= 0.99, "agreement {} over {} coordinates", self.fraction(), self.compared);
    }
}

/// Compares analytic and central-difference partials (`h = 1e-4` relative)
/// at each coordinate; agreement means relative error within `1e-3`.
fn agreement(net: &Network, x: &Tensor, coords: &[(usize, usize)], seed: u64) -> Agreement {
    let mut rng = rng_for(seed, stream::MINIBATCH);
    let loss = LinearLoss::new(net, x.rows(), &mut rng);
    let analytic = loss.grads(net, x);
    let pattern = |n: &Network| n.relu_pattern(&n.forward(x).unwrap());
    let base = pattern(net);
    let mut probe = net.clone();
    let mut result = Agreement {
        agree: 0,
        compared: 0,
        kinked: 0,
    };
    for &(t, i) in coords {
        let theta = net.params.tensors[t].data()[i];
        let h = 1e-4 * theta.abs().max(1.0);
        probe.params.tensors[t].data_mut()[i] = theta + h;
        let up = loss.value(&probe, x);
        let smooth_up = pattern(&probe) == base;
        probe.params.tensors[t].data_mut()[i] = theta - h;
        let down = loss.value(&probe, x);
        let smooth_down = pattern(&probe) == base;
        probe.params.tensors[t].data_mut()[i] = theta;
        if !(smooth_up && smooth_down) {
            result.kinked += 1;
            continue;
        }
        result.compared += 1;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.tensors[t].data()[i];
        let scale = a.abs().max(numeric.abs());
        if scale < 1e-9 || (a - numeric).abs() / scale <= 1e-3 {
            result.agree += 1;
        }
    }
    result
}

fn all_coords(net: &Network) -> Vec<(usize, usize)> {
    net.params
        .tensors
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |i| (t, i)))
        .collect()
}

fn random_input(spec: &NetworkSpec, batch: usize, seed: u64) -> Tensor {
    let mut rng = rng_for(seed, stream::SCENARIO);
    let mut shape = vec![batch];
    shape.extend(&spec.input);
    Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0))
}

fn check_small(spec: NetworkSpec, seed: u64) {
    let net = Network::new(spec, &mut rng_for(seed, stream::INIT)).unwrap();
    assert!(net.param_count() <= 1000, "{} params", net.param_count());
    let x = random_input(&net.spec, 3, seed);
    agreement(&net, &x, &all_coords(&net), seed).assert_passes();
}

fn head(name: &str, inputs: usize, outputs: usize, activation: Activation) -> HeadSpec {
    HeadSpec {
        name: name.into(),
        inputs,
        outputs,
        activation,
        init: Init::default(),
    }
}

#[test]
fn dense_layer() {
    for seed in 0..5 {
        check_small(
            NetworkSpec {
                input: vec![6],
                layers: vec![LayerSpec::dense(6, 10)],
                heads: vec![head("out", 10, 4, Activation::Identity)],
            },
            seed,
        );
    }
}

#[test]
fn relu_layer() {
    for seed in 0..5 {
        check_small(
            NetworkSpec {
                input: vec![5],
                layers: vec![LayerSpec::dense(5, 12), LayerSpec::Relu, LayerSpec::dense(12, 8), LayerSpec::Relu],
                heads: vec![head("out", 8, 3, Activation::Identity)],
            },
            seed,
        );
    }
}

#[test]
fn conv_layer_and_flatten() {
    for seed in 0..5 {
        check_small(
            NetworkSpec {
                input: vec![2, 7, 7],
                layers: vec![LayerSpec::conv(2, 3, 3, 2), LayerSpec::Flatten],
                heads: vec![head("out", 27, 2, Activation::Identity)],
            },
            seed,
        );
    }
}

#[test]
fn stacked_conv_with_relu() {
    for seed in 0..3 {
        check_small(
            NetworkSpec {
                input: vec![3, 10, 10],
                layers: vec![
                    LayerSpec::conv(3, 4, 4, 2),
                    LayerSpec::Relu,
                    LayerSpec::conv(4, 4, 2, 1),
                    LayerSpec::Relu,
                    LayerSpec::Flatten,
                ],
                heads: vec![head("out", 4 * 3 * 3, 3, Activation::Identity)],
            },
            seed,
        );
    }
}

#[test]
fn softmax_head() {
    for seed in 0..5 {
        check_small(
            NetworkSpec {
                input: vec![4],
                layers: vec![LayerSpec::dense(4, 16), LayerSpec::Relu],
                heads: vec![head("policy", 16, 3, Activation::Softmax), head("value", 16, 1, Activation::Identity)],
            },
            seed,
        );
    }
}

#[test]
fn composed_default_architecture() {
    for spec in [default_dueling_spec(3), default_actor_critic_spec(3)] {
        let net = Network::new(spec, &mut rng_for(11, stream::INIT)).unwrap();
        let mut rng = rng_for(11, stream::SCENARIO);
        let x = Tensor::from_fn(&[2, 3, 64, 64], |_| rng.random_range(0.0..1.0));
        // Every bias plus a stratified sample of weights from every tensor.
        let mut coords = vec![];
        for (t, p) in net.params.tensors.iter().enumerate() {
            let take = p.len().min(60);
            coords.extend((0..take).map(|j| (t, j * p.len() / take)));
        }
        agreement(&net, &x, &coords, 11).assert_passes();
    }
}

