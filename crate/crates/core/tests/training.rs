use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use sea_core::encoder::{
    apply_update, batch_gradients, embed_all, forward, initialize, sample_batch, train, AdamConfig,
    EncoderConfig, LossKind, ModelKind, Side,
};
use sea_core::eval::evaluate;
use sea_core::inference::raw_alignment;
use sea_core::kg::{generate_synthetic_pair, AlignmentTask, KnowledgeGraph, SynthConfig};
use sea_core::rng;
use sea_core::sampler::sample_khop;

fn small_task(seed: u64) -> AlignmentTask {
    generate_synthetic_pair(&SynthConfig {
        entity_count: 40,
        avg_degree: 2.0,
        seed_ratio: 0.5,
        rng_seed: seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn small_cfg(model: ModelKind, loss: LossKind) -> EncoderConfig {
    EncoderConfig {
        model,
        loss,
        dim: 8,
        // Fan-outs above every degree make the sampled blocks exact.
        fanouts: vec![1000, 1000],
        ..EncoderConfig::default()
    }
}

/// Gradient rows summed per global row id.
fn by_row(rows: &[usize], values: &ndarray::Array2<f64>) -> BTreeMap<usize, Vec<f64>> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&r, v) in rows.iter().zip(values.outer_iter()) {
        let slot = out.entry(r).or_insert_with(|| vec![0.0; v.len()]);
        slot.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
    }
    out
}

#[test]
fn permuting_positive_pairs_permutes_gradients() {
    for model in ModelKind::ALL {
        for loss in [LossKind::Triplet, LossKind::HardSampleMining] {
            let task = small_task(1);
            let cfg = small_cfg(model, loss);
            let m = initialize(&task, &cfg).unwrap();
            let pairs = &task.train_pairs[..8];
            let mut reversed = pairs.to_vec();
            reversed.reverse();

            let a = sample_batch(&task, &cfg, pairs, &mut rng::seeded(0)).unwrap();
            let b = sample_batch(&task, &cfg, &reversed, &mut rng::seeded(0)).unwrap();
            let ga = batch_gradients(&m, &a, &cfg.loss_params()).unwrap();
            let gb = batch_gradients(&m, &b, &cfg.loss_params()).unwrap();

            assert!((ga.loss - gb.loss).abs() < 1e-12, "{model} {loss:?}");
            let (ra, rb) = (by_row(&ga.table.rows, &ga.table.values), by_row(&gb.table.rows, &gb.table.values));
            assert_eq!(ra.keys().collect::<Vec<_>>(), rb.keys().collect::<Vec<_>>());
            for (row, va) in &ra {
                for (x, y) in va.iter().zip(&rb[row]) {
                    assert!((x - y).abs() < 1e-12, "{model} {loss:?} row {row}");
                }
            }
            for (x, y) in ga.attention.values.iter().zip(gb.attention.values.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn update_touches_only_sampled_rows() {
    let task = generate_synthetic_pair(&SynthConfig::default()).unwrap();
    let cfg = EncoderConfig {
        fanouts: vec![2, 2],
        negative_count: 4,
        loss: LossKind::Triplet,
        ..EncoderConfig::default()
    };
    let mut m = initialize(&task, &cfg).unwrap();
    let before = m.params.table.clone();
    let sampled = sample_batch(&task, &cfg, &task.train_pairs[..6], &mut rng::seeded(3)).unwrap();
    let grads = batch_gradients(&m, &sampled, &cfg.loss_params()).unwrap();

    let offset = before.offset(Side::Target);
    let reachable: HashSet<usize> = sampled
        .source_blocks
        .input_nodes()
        .iter()
        .copied()
        .chain(sampled.target_blocks.input_nodes().iter().map(|v| v + offset))
        .collect();
    assert!(grads.table.rows.iter().all(|r| reachable.contains(r)));

    apply_update(
        m.params.table.matrix_mut().view_mut(),
        &grads.table,
        &mut m.optimizer.table,
        &AdamConfig::new(cfg.learning_rate),
    )
    .unwrap();
    let mut changed = 0;
    for r in 0..before.rows() {
        let (old, new) = (before.matrix().row(r), m.params.table.matrix().row(r));
        if reachable.contains(&r) {
            changed += usize::from(old != new);
        } else {
            assert!(old.iter().zip(new.iter()).all(|(a, b)| a.to_bits() == b.to_bits()), "row {r}");
        }
    }
    assert!(changed > 0);
    assert!(reachable.len() < before.rows());
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..40).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_outputs_have_unit_norm(
        (n, edges) in arb_graph(),
        attention in any::<bool>(),
        layers in 1usize..4,
        seed in any::<u64>(),
    ) {
        let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let kg = KnowledgeGraph::from_edges(n, &edges).unwrap();
        let task = AlignmentTask::new(kg.clone(), kg.clone(), vec![(0, 0)], vec![]).unwrap();
        let cfg = EncoderConfig {
            model: if attention { ModelKind::AttentionLite } else { ModelKind::GcnAlignLite },
            layers,
            dim: 5,
            fanouts: vec![3; layers],
            rng_seed: seed,
            ..EncoderConfig::default()
        };
        let m = initialize(&task, &cfg).unwrap();
        let targets: Vec<usize> = (0..n).step_by(3).collect();
        let blocks = sample_khop(&kg, &targets, &cfg.fanouts, &mut rng::seeded(seed)).unwrap();
        let pass = forward(&blocks, &m.params, Side::Source, &m.arch).unwrap();
        for row in pass.output.outer_iter() {
            prop_assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-9);
        }
    }
}

fn raw_hits1(task: &AlignmentTask, m: &sea_core::encoder::Model) -> f64 {
    let emb = embed_all(task, m).unwrap();
    evaluate(&raw_alignment(&emb, 10), &task.test_pairs, &[1]).unwrap().hits_at(1)
}

#[test]
fn training_propagates_seed_alignment() {
    let task = generate_synthetic_pair(&SynthConfig::default()).unwrap();
    for model in ModelKind::ALL {
        let cfg = EncoderConfig {
            model,
            eval_every: 0,
            ..EncoderConfig::default()
        };
        let untrained = raw_hits1(&task, &initialize(&task, &cfg).unwrap());
        let (m, stats) = train(&task, &cfg).unwrap();
        let trained = raw_hits1(&task, &m);
        assert!(trained - untrained >= 0.5, "{model}: {untrained} -> {trained}");
        let (first, last) = (stats.epochs.first().unwrap(), stats.epochs.last().unwrap());
        assert!(last.loss < first.loss, "{model}: {} -> {}", first.loss, last.loss);
    }
}

#[test]
fn triplet_training_lowers_the_loss() {
    let task = generate_synthetic_pair(&SynthConfig::default()).unwrap();
    let cfg = EncoderConfig {
        loss: LossKind::Triplet,
        margin: 1.0,
        negative_count: 5,
        epochs: 50,
        eval_every: 0,
        ..EncoderConfig::default()
    };
    let (_, stats) = train(&task, &cfg).unwrap();
    assert!(stats.epochs.last().unwrap().loss < stats.epochs[0].loss);
}

#[test]
fn identical_configs_train_identical_models() {
    let task = small_task(2);
    let cfg = EncoderConfig {
        epochs: 20,
        batch_size: 5,
        negative_count: 2,
        fanouts: vec![3, 3],
        ..small_cfg(ModelKind::AttentionLite, LossKind::Triplet)
    };
    let (a, sa) = train(&task, &cfg).unwrap();
    let (b, sb) = train(&task, &cfg).unwrap();
    assert_eq!(a, b);
    let losses = |s: &sea_core::encoder::TrainStats| s.epochs.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&sa), losses(&sb));
}
