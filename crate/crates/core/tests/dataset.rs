use std::path::PathBuf;

use sea_core::kg::{generate_synthetic_pair, load_dataset, write_dataset, Split, SynthConfig, Triple};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

fn names(prefix: &str, ids: &[&str]) -> Vec<String> {
    ids.iter().map(|s| format!("{prefix}{s}")).collect()
}

#[test]
fn fixture_loads_into_the_transcribed_task() {
    let task = load_dataset(&fixture(), Split::Files).unwrap();

    let src = &task.source;
    assert_eq!(
        src.entity_names(),
        names("http://a/", &["Paris", "France", "Lyon", "EU", "Berlin", "Germany"])
    );
    assert_eq!(src.relation_names(), names("http://a/", &["capitalOf", "locatedIn", "memberOf"]));
    assert_eq!(
        src.triples(),
        [
            Triple::new(0, 0, 1),
            Triple::new(2, 1, 1),
            Triple::new(1, 2, 3),
            Triple::new(4, 0, 5),
            Triple::new(5, 2, 3),
        ]
    );

    let tgt = &task.target;
    assert_eq!(
        tgt.entity_names(),
        names("http://b/", &["Parigi", "Francia", "UE", "Lione", "Germania", "Berlino"])
    );
    assert_eq!(tgt.relation_names(), names("http://b/", &["capitale", "membro", "situata"]));
    assert_eq!(
        tgt.triples(),
        [
            Triple::new(0, 0, 1),
            Triple::new(1, 1, 2),
            Triple::new(3, 2, 1),
            Triple::new(4, 1, 2),
            Triple::new(5, 0, 4),
        ]
    );

    assert_eq!(task.train_pairs, [(0, 0), (1, 1)]);
    assert_eq!(task.test_pairs, [(2, 3), (3, 2), (4, 5)]);

    // France: Paris, Lyon, EU and itself; Paris: France and itself.
    let france = src.adjacency().in_edges(1);
    let ids: Vec<usize> = france.iter().map(|e| e.neighbor).collect();
    assert_eq!(ids, [0, 1, 2, 3]);
    assert!((france[0].weight - 1.0 / 8f64.sqrt()).abs() < 1e-15);
    assert!((france[1].weight - 0.25).abs() < 1e-15);
}

#[test]
fn ratio_split_covers_every_link_once() {
    let task = load_dataset(&fixture(), Split::Ratio(0.4)).unwrap();
    assert_eq!(task.train_pairs.len(), 2);
    assert_eq!(task.test_pairs.len(), 3);
    let mut all: Vec<_> = task.train_pairs.iter().chain(&task.test_pairs).copied().collect();
    all.sort_unstable();
    assert_eq!(all, [(0, 0), (1, 1), (2, 3), (3, 2), (4, 5)]);
    assert_eq!(load_dataset(&fixture(), Split::Ratio(0.4)).unwrap(), task);
}

#[test]
fn auto_split_prefers_split_files() {
    let task = load_dataset(&fixture(), Split::Auto { train_ratio: 0.9 }).unwrap();
    assert_eq!(task.train_pairs.len(), 2);
}

#[test]
fn written_task_reloads_identically() {
    for cfg in [
        SynthConfig::default(),
        SynthConfig {
            entity_count: 300,
            edge_noise: 0.1,
            hub_count: 10,
            rng_seed: 9,
            ..SynthConfig::default()
        },
    ] {
        let task = generate_synthetic_pair(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&task, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path(), Split::Files).unwrap(), task);
    }
}

#[test]
fn loaded_fixture_round_trips() {
    let task = load_dataset(&fixture(), Split::Files).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&task, dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path(), Split::Files).unwrap(), task);
}
