use serde::{Deserialize, Serialize};

use super::{Gradients, Params, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum OptimizerRule {
    Sgd { lr: Real },
    Adam { lr: Real, beta1: Real, beta2: Real, eps: Real },
}

impl OptimizerRule {
    pub fn adam(lr: Real) -> Self {
        Self::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> Real {
        match *self {
            Self::Sgd { lr } | Self::Adam { lr, .. } => lr,
        }
    }
}

/// Step counter and Adam moment estimates. Empty until the first Adam step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Option<Params>,
    pub second_moment: Option<Params>,
}

/// Pure update: returns new parameters and state, leaving the inputs untouched.
pub fn apply_update(
    params: &Params,
    grads: &Gradients,
    state: &OptimizerState,
    rule: &OptimizerRule,
) -> (Params, OptimizerState) {
    let mut p = params.clone();
    let mut s = state.clone();
    apply_update_in_place(&mut p, grads, &mut s, rule);
    (p, s)
}

/// In-place form of [`apply_update`] with identical arithmetic.
pub fn apply_update_in_place(params: &mut Params, grads: &Gradients, state: &mut OptimizerState, rule: &OptimizerRule) {
    assert!(params.congruent(grads), "gradients are not congruent with parameters");
    state.step += 1;
    match *rule {
        OptimizerRule::Sgd { lr } => {
            for (p, g) in params.iter_mut().zip(grads.iter()) {
                *p -= lr * g;
            }
        }
        OptimizerRule::Adam { lr, beta1, beta2, eps } => {
            let m = state.first_moment.get_or_insert_with(|| Params::zeros_like(grads));
            let v = state.second_moment.get_or_insert_with(|| Params::zeros_like(grads));
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((p, &g), m), v) in params.iter_mut().zip(grads.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn one(v: Real) -> Params {
        Params {
            tensors: vec![Tensor::scalar(v)],
        }
    }

    #[test]
    fn sgd_single_step() {
        let (p, s) = apply_update(&one(1.0), &one(1.0), &OptimizerState::default(), &OptimizerRule::Sgd { lr: 0.1 });
        assert_eq!(p.tensors[0].data(), &[0.9]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn update_is_pure() {
        let params = one(2.0);
        let state = OptimizerState::default();
        let _ = apply_update(&params, &one(3.0), &state, &OptimizerRule::adam(0.1));
        assert_eq!(params, one(2.0));
        assert_eq!(state, OptimizerState::default());
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let rule = OptimizerRule::adam(0.01);
        let (p, s) = apply_update(&one(1.0), &one(0.5), &OptimizerState::default(), &rule);
        let (p2, s2) = apply_update(&p, &one(0.0), &s, &rule);
        let moved = p.tensors[0].data()[0] - p2.tensors[0].data()[0];
        // Adam still moves along the decayed first moment; the raw gradient term is zero.
        let m1 = s.first_moment.as_ref().unwrap().tensors[0].data()[0];
        let v1 = s.second_moment.as_ref().unwrap().tensors[0].data()[0];
        assert_eq!(s2.first_moment.unwrap().tensors[0].data()[0], 0.9 * m1);
        assert_eq!(s2.second_moment.unwrap().tensors[0].data()[0], 0.999 * v1);
        assert!(moved > 0.0);
        let (p3, _) = apply_update(&one(1.0), &one(0.0), &OptimizerState::default(), &rule);
        assert_eq!(p3, one(1.0));
        let (p4, _) = apply_update(&one(1.0), &one(0.0), &OptimizerState::default(), &OptimizerRule::Sgd { lr: 0.5 });
        assert_eq!(p4, one(1.0));
    }

    #[test]
    fn adam_three_steps_on_quadratic_match_hand_stepping() {
        // f(θ) = (θ - 3)², g = 2(θ - 3), θ0 = 0, lr = 0.1.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let rule = OptimizerRule::Adam {
            lr,
            beta1: b1,
            beta2: b2,
            eps,
        };
        let mut params = one(0.0);
        let mut state = OptimizerState::default();
        for _ in 0..3 {
            let g = 2.0 * (params.tensors[0].data()[0] - 3.0);
            (params, state) = apply_update(&params, &one(g), &state, &rule);
        }
        // Hand-stepped reference.
        // t=1: g=-6, m=-0.6, v=0.036, m̂=-6, v̂=36, θ=0.1
        // t=2: g=-5.8, m=-1.12, v=0.069604, m̂=-5.894737, v̂=34.8194, θ≈0.199898
        // t=3: evaluated below with the same recursion written out longhand.
        let mut theta: f64 = 0.0;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let gs = |th: f64| 2.0 * (th - 3.0);
        let g1 = gs(theta);
        m = b1 * m + (1.0 - b1) * g1;
        v = b2 * v + (1.0 - b2) * g1 * g1;
        theta -= lr * (m / (1.0 - b1)) / ((v / (1.0 - b2)).sqrt() + eps);
        assert!((theta - 0.1).abs() < 1e-8);
        let g2 = gs(theta);
        m = b1 * m + (1.0 - b1) * g2;
        v = b2 * v + (1.0 - b2) * g2 * g2;
        theta -= lr * (m / (1.0 - b1 * b1)) / ((v / (1.0 - b2 * b2)).sqrt() + eps);
        let g3 = gs(theta);
        m = b1 * m + (1.0 - b1) * g3;
        v = b2 * v + (1.0 - b2) * g3 * g3;
        theta -= lr * (m / (1.0 - b1 * b1 * b1)) / ((v / (1.0 - b2 * b2 * b2)).sqrt() + eps);
        assert_eq!(params.tensors[0].data()[0], theta);
        assert_eq!(state.step, 3);
    }
}
