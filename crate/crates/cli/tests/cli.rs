use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use sea_core::config::RunConfig;
use sea_core::encoder::{checkpoint, initialize, EncoderConfig};
use sea_core::kg::synth::generate_synthetic_pair;
use sea_core::kg::SynthConfig;
use sea_core::run::RunReport;

fn sea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sea"))
        .args(args)
        .env("SEA_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = sea(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_report(dir: &Path) -> RunReport {
    serde_json::from_slice(&std::fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn zero_epochs_writes_the_seeded_initialization() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--synth", "--entities", "200", "--epochs", "0", "--out", p(dir.path())]);
    let written = std::fs::read(dir.path().join("checkpoint.bin")).unwrap();

    let task = generate_synthetic_pair(&SynthConfig::default()).unwrap();
    let expected = initialize(&task, &RunConfig::default().encoder).unwrap();
    assert_eq!(written, checkpoint::to_bytes(&expected));
    assert_eq!(std::fs::read_to_string(dir.path().join("stats.jsonl")).unwrap(), "");
}

#[test]
fn missing_dataset_is_reported_by_path() {
    let out = sea(&["train", "--dataset", "/no/such/dataset-dir"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dataset-dir"));
}

#[test]
fn unknown_flags_are_errors_and_help_lists_every_flag() {
    let out = sea(&["train", "--epochz", "3"]);
    assert!(!out.status.success());

    let help = String::from_utf8(ok(&["train", "--help"]).stdout).unwrap();
    for flag in [
        "--dataset", "--synth", "--model", "--layers", "--dim", "--loss", "--margin", "--lr", "--epochs",
        "--batch-size", "--negatives", "--fanouts", "--seed", "--groups", "--topk", "--no-normalize", "--out",
        "--config", "--hits",
    ] {
        assert!(help.contains(flag), "train --help lacks {flag}");
    }
    let help = String::from_utf8(ok(&["serve", "--help"]).stdout).unwrap();
    assert!(help.contains("--port"));
    let help = String::from_utf8(ok(&["--help"]).stdout).unwrap();
    assert!(help.contains("SEA_LOG"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    let mut cfg = RunConfig::default();
    cfg.encoder.dim = 24;
    cfg.encoder.epochs = 7;
    std::fs::write(&file, cfg.to_toml()).unwrap();

    let shown = ok(&["config", "--config", p(&file), "--epochs", "3", "--fanouts", "4,6"]).stdout;
    let resolved = RunConfig::from_toml(std::str::from_utf8(&shown).unwrap()).unwrap();
    assert_eq!(resolved.encoder.dim, 24);
    assert_eq!(resolved.encoder.epochs, 3);
    assert_eq!(resolved.encoder.fanouts, [4, 6]);

    let shown = ok(&["config", "--loss", "triplet", "--layers", "3"]).stdout;
    let resolved = RunConfig::from_toml(std::str::from_utf8(&shown).unwrap()).unwrap();
    assert_eq!(resolved.encoder.margin, EncoderConfig::default_margin(resolved.encoder.loss));
    assert_eq!(resolved.encoder.fanouts, [10, 10, 10]);

    std::fs::write(&file, "[encoder]\ndim = 8\nlearning_rat = 0.1\n").unwrap();
    let out = sea(&["config", "--config", p(&file)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let out = sea(&["train", "--synth", "--lr=-1"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("encoder.learning_rate"));
}

#[test]
fn eval_reports_requested_cutoffs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    ok(&["train", "--synth", "--entities", "120", "--epochs", "20", "--dim", "16", "--out", p(&train)]);
    let ckpt = train.join("checkpoint.bin");

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out_a = ok(&["eval", "--checkpoint", p(&ckpt), "--synth", "--entities", "120", "--out", p(&a)]);
    ok(&["eval", "--checkpoint", p(&ckpt), "--synth", "--entities", "120", "--out", p(&b)]);
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());
    let report = read_report(&a);
    assert_eq!(report.normalized.hits.keys().copied().collect::<Vec<_>>(), [1, 10]);
    let table = String::from_utf8(out_a.stdout).unwrap();
    assert!(table.contains("Hits@1") && table.contains("MRR"));

    let c = dir.path().join("c");
    ok(&["eval", "--checkpoint", p(&ckpt), "--synth", "--entities", "120", "--hits", "5,1,3", "--out", p(&c)]);
    assert_eq!(read_report(&c).naive.hits.keys().copied().collect::<Vec<_>>(), [1, 3, 5]);

    // The checkpoint does not fit a task of another size.
    let out = sea(&["eval", "--checkpoint", p(&ckpt), "--synth", "--entities", "150"]);
    assert!(!out.status.success());
}

#[test]
fn normalization_beats_naive_ranking_on_the_hub_task() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    ok(&["train", "--profile", "hub-synthetic", "--eval-every", "0", "--out", p(&train)]);
    let ckpt = train.join("checkpoint.bin");
    let naive = dir.path().join("naive");
    let full = dir.path().join("full");
    ok(&["eval", "--checkpoint", p(&ckpt), "--profile", "hub-synthetic", "--no-normalize", "--out", p(&naive)]);
    ok(&["eval", "--checkpoint", p(&ckpt), "--profile", "hub-synthetic", "--out", p(&full)]);
    let naive = read_report(&naive);
    let full = read_report(&full);
    assert!(!naive.inference.normalize && full.inference.normalize);
    assert!(full.selected().hits[&1] > naive.selected().hits[&1]);
}

#[test]
fn generated_datasets_train_like_the_synthetic_source() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["generate", "--entities", "80", "--out", p(&data)]);
    for f in ["rel_triples_1", "rel_triples_2", "ent_links", "train_links", "test_links"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let from_dir = dir.path().join("dir");
    let from_synth = dir.path().join("synth");
    let common = ["--epochs", "5", "--dim", "8"];
    let mut a = vec!["train", "--dataset", p(&data), "--out", p(&from_dir)];
    a.extend(common);
    let mut b = vec!["train", "--synth", "--entities", "80", "--out", p(&from_synth)];
    b.extend(common);
    ok(&a);
    ok(&b);
    for f in ["checkpoint.bin", "stats.jsonl"] {
        assert_eq!(std::fs::read(from_dir.join(f)).unwrap(), std::fs::read(from_synth.join(f)).unwrap(), "{f}");
    }
}

struct Server {
    child: std::process::Child,
    lines: std::sync::mpsc::Receiver<String>,
}

impl Server {
    fn start(args: &[&str]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_sea"))
            .arg("serve")
            .args(args)
            .env("SEA_LOG", "info")
            .stderr(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .unwrap();
        let stderr = child.stderr.take().unwrap();
        let (tx, lines) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(Result::ok) {
                let _ = tx.send(line);
            }
        });
        Self { child, lines }
    }

    fn wait_for(&self, needle: &str) -> String {
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = self.lines.recv_timeout(left).unwrap_or_else(|_| panic!("no `{needle}` in time"));
            if line.contains(needle) {
                return line;
            }
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(unix)]
#[test]
fn serve_lifecycle() {
    let server = Server::start(&["--port", "0"]);
    let line = server.wait_for("listening on");
    let port: u16 = line.rsplit(':').next().unwrap().trim().parse().unwrap();

    // A second server on the same port must fail.
    let out = sea(&["serve", "--port", &port.to_string()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot listen"));

    let status = Command::new("kill").args(["-TERM", &server.child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let mut server = server;
    let deadline = Instant::now() + Duration::from_secs(30);
    let exit = loop {
        if let Some(s) = server.child.try_wait().unwrap() {
            break s;
        }
        assert!(Instant::now() < deadline, "server did not stop");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert!(exit.success());
}

#[test]
fn serve_preloads_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--synth", "--entities", "60", "--epochs", "2", "--dim", "8", "--out", p(dir.path())]);
    let ckpt = dir.path().join("checkpoint.bin");
    let server = Server::start(&["--port", "0", "--checkpoint", p(&ckpt), "--synth", "--entities", "60"]);
    assert!(server.wait_for("preloaded run").contains("run-1"));
    server.wait_for("listening on");
}
