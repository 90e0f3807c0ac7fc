//! Compares reverse-mode gradients of the default dueling network with
//! central finite differences on a few hundred coordinates.

use lanebench::nn::{default_dueling_spec, Network, Tensor};
use lanebench::rng::{rng_for, stream};
use rand::Rng;

fn main() {
    let net = Network::new(default_dueling_spec(3), &mut rng_for(0, stream::INIT)).unwrap();
    println!("default dueling network: {} parameters", net.param_count());
    let mut rng = rng_for(0, stream::SCENARIO);
    let x = Tensor::from_fn(&[2, 3, 64, 64], |_| rng.random_range(0.0..1.0));
    let coeff = Tensor::from_fn(&[2, 3], |_| rng.random_range(-1.0..1.0));
    let loss = |n: &Network| -> f64 {
        let f = n.forward(&x).unwrap();
        f.output("advantage").data().iter().zip(coeff.data()).map(|(a, c)| a * c).sum::<f64>()
            + f.output("value").data().iter().sum::<f64>()
    };
    let fwd = net.forward(&x).unwrap();
    let ones = Tensor::from_fn(&[2, 1], |_| 1.0);
    let grads = net.backward(&fwd, &[("advantage", &coeff), ("value", &ones)]).unwrap();

    let base = net.relu_pattern(&fwd);
    let mut probe = net.clone();
    let (mut agree, mut compared, mut kinked) = (0, 0, 0);
    for (t, p) in net.params.tensors.iter().enumerate() {
        let take = p.len().min(40);
        for j in 0..take {
            let i = j * p.len() / take;
            let theta = p.data()[i];
            let h = 1e-4 * theta.abs().max(1.0);
            probe.params.tensors[t].data_mut()[i] = theta + h;
            let up = loss(&probe);
            let smooth_up = probe.relu_pattern(&probe.forward(&x).unwrap()) == base;
            probe.params.tensors[t].data_mut()[i] = theta - h;
            let down = loss(&probe);
            let smooth_down = probe.relu_pattern(&probe.forward(&x).unwrap()) == base;
            probe.params.tensors[t].data_mut()[i] = theta;
            if !(smooth_up && smooth_down) {
                kinked += 1;
                continue;
            }
            compared += 1;
            let numeric = (up - down) / (2.0 * h);
            let a = grads.tensors[t].data()[i];
            let scale = a.abs().max(numeric.abs());
            if scale < 1e-9 || (a - numeric).abs() / scale <= 1e-3 {
                agree += 1;
            }
        }
    }
    println!("{agree}/{compared} coordinates agree within 1e-3 relative error ({kinked} skipped at ReLU kinks)");
}
