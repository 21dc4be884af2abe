//! Hand-written backward passes against central finite differences.

use sea_core::encoder::{
    gradient_check, initialize, sample_batch, Activation, EncoderConfig, LossKind, ModelKind,
};
use sea_core::kg::synth::{generate_synthetic_pair, SynthConfig};
use sea_core::rng;

const EPSILON: f64 = 1e-5;
// Central differences at ε = 1e-5 carry ~1e-10 of round-off, so entries
// smaller than the floor are judged by absolute error against 1e-4·FLOOR.
const FLOOR: f64 = 1e-5;

fn check(model: ModelKind, loss: LossKind, activation: Activation, seed: u64) -> f64 {
    let task = generate_synthetic_pair(&SynthConfig {
        entity_count: 8,
        avg_degree: 1.5,
        seed_ratio: 0.5,
        rng_seed: seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = EncoderConfig {
        model,
        loss,
        activation,
        dim: 4,
        negative_count: 2,
        fanouts: vec![3, 3],
        rng_seed: seed,
        ..EncoderConfig::default()
    };
    let m = initialize(&task, &cfg).unwrap();
    let sampled = sample_batch(&task, &cfg, &task.train_pairs, &mut rng::seeded(seed + 1)).unwrap();
    let report = gradient_check(&m, &sampled, &cfg.loss_params(), EPSILON, FLOOR).unwrap();
    assert!(report.checked > 0);
    report.max_relative_error
}

#[test]
fn all_models_and_losses_match_finite_differences() {
    for model in ModelKind::ALL {
        for loss in [LossKind::Triplet, LossKind::HardSampleMining] {
            for seed in 0..5 {
                let err = check(model, loss, Activation::Tanh, seed);
                assert!(err < 1e-4, "{model} {loss:?} seed {seed}: {err:e}");
            }
        }
    }
}

#[test]
fn linear_activation_matches_finite_differences() {
    for model in ModelKind::ALL {
        let err = check(model, LossKind::HardSampleMining, Activation::None, 7);
        assert!(err < 1e-4, "{model}: {err:e}");
    }
}
