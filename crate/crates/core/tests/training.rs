use lanebench::drl::{train, Algo, Corridor, HighwayTrainEnv, TrainConfig, TrainError};
use lanebench::nn::{write_checkpoint, Checkpoint, Network};
use lanebench::rng::{rng_for, stream};

fn bytes(net: &Network) -> Vec<u8> {
    write_checkpoint(&Checkpoint::new(net.clone()))
}

#[test]
fn zero_steps_returns_the_initialization() {
    for algo in Algo::ALL {
        let cfg = TrainConfig {
            total_steps: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let out = train(algo, |_| Corridor::new(), &cfg).unwrap();
        assert!(out.curve.points.is_empty());
        assert_eq!(out.updates, 0);
        let init = Network::new(algo.network_spec(&Corridor::new()), &mut rng_for(4, stream::INIT)).unwrap();
        assert_eq!(out.network.params, init.params);
        assert_eq!(out.checkpoints.len(), 1);
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    for algo in Algo::ALL {
        let mut cfg = TrainConfig {
            total_steps: 400,
            seed: 12,
            checkpoint_every: 200,
            ..TrainConfig::default()
        };
        cfg.d3qn.learning_starts = 50;
        cfg.ppo.n_steps = 16;
        cfg.ppo.minibatch = 32;
        let a = train(algo, |_| HighwayTrainEnv::reduced(300.0), &cfg).unwrap();
        let b = train(algo, |_| HighwayTrainEnv::reduced(300.0), &cfg).unwrap();
        assert_eq!(a.curve, b.curve);
        assert!(a.updates > 0);
        assert_eq!(a.checkpoints.len(), b.checkpoints.len());
        for ((sa, na), (sb, nb)) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert_eq!(sa, sb);
            assert_eq!(bytes(na), bytes(nb));
        }
        cfg.seed = 13;
        let c = train(algo, |_| HighwayTrainEnv::reduced(300.0), &cfg).unwrap();
        assert_ne!(bytes(&a.network), bytes(&c.network));
    }
}

#[test]
fn exploding_learning_rate_aborts_with_a_diagnostic() {
    let cfg = TrainConfig {
        total_steps: 5_000,
        learning_rate: Some(1e300),
        max_grad_norm: 1e300,
        ..Corridor::train_config(0)
    };
    match train(Algo::A2c, |_| Corridor::new(), &cfg) {
        Err(TrainError::NonFinite(d)) => {
            assert_eq!(d.algo, Algo::A2c);
            assert!(d.step > 0);
        }
        other => panic!("expected a non-finite abort, got {:?}", other.map(|o| o.updates)),
    }
}

#[test]
fn invalid_config_is_rejected() {
    let cfg = TrainConfig {
        gamma: -0.1,
        ..TrainConfig::default()
    };
    assert!(matches!(train(Algo::Ppo, |_| Corridor::new(), &cfg), Err(TrainError::Config(_))));
}
