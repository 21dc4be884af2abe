use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;
use sea_core::encoder::EmbeddingTable;
use sea_core::eval::evaluate;
use sea_core::inference::{
    csls_adjust, fuse, infer_alignment, local_similarity, partition_entities, topk_global,
    InferenceOptions, Partition, SparseSimilarity,
};
use sea_core::kg::{AlignedPair, AlignmentTask, KnowledgeGraph};
use sea_core::rng;

/// A task with edgeless graphs; inference only reads its pairs and sizes.
fn bare_task(s: usize, t: usize, train: Vec<AlignedPair>, test: Vec<AlignedPair>) -> AlignmentTask {
    AlignmentTask::new(
        KnowledgeGraph::from_edges(s, &[]).unwrap(),
        KnowledgeGraph::from_edges(t, &[]).unwrap(),
        train,
        test,
    )
    .unwrap()
}

fn random_unit_rows(seed: u64, rows: usize, dim: usize) -> Array2<f64> {
    let mut r = rng::seeded(seed);
    let mut m = Array2::from_shape_simple_fn((rows, dim), || r.random::<f64>() - 0.5);
    for mut row in m.outer_iter_mut() {
        let n = row.dot(&row).sqrt();
        row.mapv_inplace(|x| x / n);
    }
    m
}

#[test]
fn identical_tables_align_to_identity_in_both_modes() {
    let n = 60;
    let side = random_unit_rows(1, n, 8);
    let table = EmbeddingTable::from_sides(side.view(), side.view()).unwrap();
    let pairs: Vec<AlignedPair> = (0..n).map(|i| (i, i)).collect();
    let task = bare_task(n, n, pairs[..20].to_vec(), pairs[20..].to_vec());
    for normalize in [false, true] {
        for num_groups in [1, 4] {
            let opts = InferenceOptions {
                normalize,
                num_groups,
                ..InferenceOptions::default()
            };
            let out = infer_alignment(&table, &task, &opts).unwrap();
            for s in 0..n {
                assert_eq!(out.similarity.top_ids(s, 1), [s], "normalize={normalize} G={num_groups}");
            }
            assert_eq!(evaluate(&out.similarity, &task.test_pairs, &[1]).unwrap().hits_at(1), 1.0);
        }
    }
}

#[test]
fn one_group_zero_weight_reduces_to_csls() {
    let (s, t) = (50, 70);
    let table = EmbeddingTable::from_sides(random_unit_rows(2, s, 6).view(), random_unit_rows(3, t, 6).view()).unwrap();
    let train: Vec<AlignedPair> = (0..10).map(|i| (i, i)).collect();
    let task = bare_task(s, t, train, vec![]);
    let opts = InferenceOptions {
        num_groups: 1,
        weight: 0.0,
        k: 15,
        ..InferenceOptions::default()
    };
    let out = infer_alignment(&table, &task, &opts).unwrap();
    let (fwd, rev) = topk_global(&table, 15);
    let csls = csls_adjust(&fwd, &rev, opts.csls_neighborhood).unwrap().similarity;
    for r in 0..s {
        assert_eq!(out.similarity.top_ids(r, 15), csls.top_ids(r, 15));
    }
}

#[test]
fn two_separated_clusters_become_two_groups() {
    // Sources 0..10 near e1, 10..20 near e2; targets mirror them.
    let mut r = rng::seeded(4);
    let mut point = |i: usize| {
        let base = if i < 10 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut v: Vec<f64> = base.iter().map(|b| b + 0.05 * (r.random::<f64>() - 0.5)).collect();
        v[2] = 0.05 * (r.random::<f64>() - 0.5);
        v
    };
    let src: Vec<f64> = (0..20).flat_map(&mut point).collect();
    let tgt: Vec<f64> = (0..20).flat_map(&mut point).collect();
    let table = EmbeddingTable::from_sides(
        Array2::from_shape_vec((20, 3), src).unwrap().view(),
        Array2::from_shape_vec((20, 3), tgt).unwrap().view(),
    )
    .unwrap();
    let train = vec![(0, 0), (1, 1), (12, 12), (13, 13), (5, 5), (17, 17)];
    let test: Vec<AlignedPair> = (0..20).filter(|i| ![0, 1, 5, 12, 13, 17].contains(i)).map(|i| (i, i)).collect();
    let task = bare_task(20, 20, train, test.clone());
    for seed in 0..10 {
        let p = partition_entities(&table, &task, 2, &mut rng::seeded(seed)).unwrap();
        assert_eq!(p.groups.len(), 2);
        let g0 = p.source_group[0];
        for i in 0..20 {
            let want = if i < 10 { g0 } else { 1 - g0 };
            assert_eq!((p.source_group[i], p.target_group[i]), (want, want), "seed {seed} entity {i}");
        }
        assert!(p.equivalence_rates(&test).iter().all(|r| *r == Some(1.0)));
    }
}

#[test]
fn group_count_divides_local_work() {
    let n = 2000;
    let table = EmbeddingTable::from_sides(random_unit_rows(5, n, 16).view(), random_unit_rows(6, n, 16).view()).unwrap();
    let train: Vec<AlignedPair> = (0..600).map(|i| (i, i)).collect();
    let task = bare_task(n, n, train, vec![]);
    let work = |g: usize| {
        let p = partition_entities(&table, &task, g, &mut rng::seeded(1)).unwrap();
        local_similarity(&table, &p).iter().map(|b| b.evaluations()).sum::<u64>() as f64
    };
    let base = work(1);
    assert_eq!(base, (n * n) as f64);
    for g in [4, 16] {
        let ratio = work(g) / base;
        let ideal = 1.0 / g as f64;
        assert!(ratio >= ideal / 2.0 && ratio <= ideal * 2.0, "G={g}: {ratio}");
    }
}

fn arb_rows(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<(usize, f64)>>> {
    prop::collection::vec(
        prop::collection::btree_map(0..cols, -1.0f64..1.0, 0..=cols).prop_map(|m| m.into_iter().collect()),
        rows,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn csls_preserves_row_order_under_equal_penalties(
        rows in arb_rows(12, 9),
        penalty in prop::collection::vec(-1.0f64..1.0, 3),
        neighborhood in 1usize..6,
    ) {
        let sparse = SparseSimilarity::new(9, rows).unwrap();
        // Every target sees the same reverse row, so r_t is constant.
        let reverse = SparseSimilarity::new(3, vec![penalty.iter().copied().enumerate().collect(); 9]).unwrap();
        let out = csls_adjust(&sparse, &reverse, neighborhood).unwrap().similarity;
        for r in 0..12 {
            let before: Vec<usize> = sparse.row(r).iter().map(|e| e.0).collect();
            let after: Vec<usize> = out.row(r).iter().map(|e| e.0).collect();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn fused_scores_are_affine_in_weight(
        global in arb_rows(6, 8),
        local in prop::collection::vec(-1.0f64..1.0, 48),
        w in 0.0f64..1.0,
    ) {
        let global = SparseSimilarity::new(8, global).unwrap();
        let p = Partition::single(6, 8);
        let block = sea_core::inference::LocalSimBlock {
            group: 0,
            source_ids: p.groups[0].source.clone(),
            target_ids: p.groups[0].target.clone(),
            scores: Array2::from_shape_vec((6, 8), local).unwrap(),
        };
        let blocks = [block];
        // k covers every candidate, so the candidate set does not depend on w.
        let at = |w: f64| fuse(&blocks, &global, w, 8).unwrap();
        let (f0, f1, fw) = (at(0.0), at(1.0), at(w));
        for r in 0..6 {
            for &(c, v) in fw.row(r) {
                let want = (1.0 - w) * f0.score(r, c).unwrap() + w * f1.score(r, c).unwrap();
                prop_assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_pairs_always_share_a_group(seed in any::<u64>(), groups in 1usize..8) {
        let n = 80;
        let table = EmbeddingTable::from_sides(
            random_unit_rows(seed, n, 4).view(),
            random_unit_rows(seed ^ 1, n, 4).view(),
        ).unwrap();
        let train: Vec<AlignedPair> = (0..30).map(|i| (i, (i * 7) % n)).collect();
        let task = bare_task(n, n, train.clone(), vec![]);
        let p = partition_entities(&table, &task, groups, &mut rng::seeded(seed)).unwrap();
        for (s, t) in train {
            prop_assert_eq!(p.source_group[s], p.target_group[t]);
        }
        let covered: usize = p.groups.iter().map(|g| g.source.len()).sum();
        prop_assert_eq!(covered, n);
        prop_assert!(p.groups.iter().all(|g| !g.source.is_empty() || !g.target.is_empty()));
    }

    #[test]
    fn eval_is_monotone_and_order_free(
        rows in arb_rows(10, 10),
        perm in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(),
        shuffle in Just((0..10usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let sim = SparseSimilarity::new(10, rows).unwrap();
        let pairs: Vec<AlignedPair> = perm.into_iter().enumerate().collect();
        let ks = [1, 2, 5, 10];
        let report = evaluate(&sim, &pairs, &ks).unwrap();
        for w in ks.windows(2) {
            prop_assert!(report.hits_at(w[0]) <= report.hits_at(w[1]));
        }
        prop_assert!(report.hits_at(1) <= report.mrr + 1e-15 && report.mrr <= 1.0);
        let shuffled: Vec<AlignedPair> = shuffle.iter().map(|&i| pairs[i]).collect();
        let again = evaluate(&sim, &shuffled, &ks).unwrap();
        prop_assert_eq!(&again.hits, &report.hits);
        prop_assert_eq!(&again.ranks, &report.ranks);
        prop_assert!((again.mrr - report.mrr).abs() < 1e-15);
    }

    #[test]
    fn candidates_below_the_truth_change_nothing(
        rows in arb_rows(6, 12),
        extra in -3.0f64..-2.0,
    ) {
        let pairs: Vec<AlignedPair> = (0..6).map(|i| (i, i)).collect();
        let sim = SparseSimilarity::new(12, rows.clone()).unwrap();
        let mut padded = rows;
        for row in &mut padded {
            if !row.iter().any(|e| e.0 == 11) {
                row.push((11, extra));
            }
        }
        let a = evaluate(&sim, &pairs, &[1, 3]).unwrap();
        let b = evaluate(&SparseSimilarity::new(12, padded).unwrap(), &pairs, &[1, 3]).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn hand_sized_local_block() {
    let table = EmbeddingTable::from_sides(array![[1.0, 0.0], [0.6, 0.8]].view(), array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
    let blocks = local_similarity(&table, &Partition::single(2, 2));
    assert_eq!(blocks[0].scores, array![[0.0, 1.0], [0.8, 0.6]]);
}
