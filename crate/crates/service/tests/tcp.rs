use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use sea_core::config::{DatasetSource, RunConfig};
use sea_core::encoder::EncoderConfig;
use sea_core::kg::SynthConfig;
use sea_service::{serve, AppState, ServiceOptions};
use tokio::sync::oneshot;

struct Reply {
    status: u16,
    head: String,
    body: String,
}

fn request(addr: SocketAddr, method: &str, path: &str, extra: &str, body: &str) -> Reply {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n{extra}\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    Reply {
        status,
        head: head.to_ascii_lowercase(),
        body: body.to_owned(),
    }
}

fn long_run(out: Option<&std::path::Path>) -> String {
    let cfg = RunConfig {
        dataset: DatasetSource::Synthetic(SynthConfig {
            entity_count: 2000,
            ..SynthConfig::default()
        }),
        encoder: EncoderConfig {
            epochs: 10_000,
            ..EncoderConfig::default()
        },
        output_dir: out.map(Into::into),
        ..RunConfig::default()
    };
    serde_json::to_string(&cfg).unwrap()
}

async fn start(options: ServiceOptions) -> (SocketAddr, oneshot::Sender<()>, tokio::task::JoinHandle<std::io::Result<()>>) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let server = tokio::spawn(serve(listener, AppState::new(options), async {
        let _ = rx.await;
    }));
    (addr, tx, server)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn polling_stays_fast_while_training() {
    let (addr, stop, server) = start(ServiceOptions::default()).await;
    let body = long_run(None);
    let created = blocking(move || request(addr, "POST", "/api/v1/runs", "", &body)).await;
    assert_eq!(created.status, 201, "{}", created.body);
    assert!(created.head.contains("location: /api/v1/runs/run-1"));

    let latencies = blocking(move || {
        // Wait until training is under way, then time a burst of polls.
        let deadline = Instant::now() + Duration::from_secs(60);
        while !request(addr, "GET", "/api/v1/runs/run-1", "", "").body.contains("\"training\"") {
            assert!(Instant::now() < deadline);
            std::thread::sleep(Duration::from_millis(5));
        }
        (0..50)
            .map(|_| {
                let t = Instant::now();
                let r = request(addr, "GET", "/api/v1/runs/run-1/progress", "", "");
                assert_eq!(r.status, 200);
                std::thread::sleep(Duration::from_millis(5));
                t.elapsed()
            })
            .collect::<Vec<_>>()
    })
    .await;
    let worst = latencies.iter().max().unwrap();
    assert!(*worst < Duration::from_millis(100), "slowest poll took {worst:?}");

    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cors_headers() {
    let (addr, stop, server) = start(ServiceOptions::default()).await;
    let r = blocking(move || request(addr, "GET", "/api/v1/health", "Origin: http://localhost:5173\r\n", "")).await;
    assert_eq!(r.status, 200);
    assert!(r.head.contains("access-control-allow-origin: *"), "{}", r.head);
    stop.send(()).unwrap();
    server.await.unwrap().unwrap();

    let options = ServiceOptions {
        allowed_origins: vec!["http://ui.example".into()],
    };
    let (addr, stop, server) = start(options).await;
    let (allowed, other) = blocking(move || {
        (
            request(addr, "GET", "/api/v1/health", "Origin: http://ui.example\r\n", ""),
            request(addr, "GET", "/api/v1/health", "Origin: http://elsewhere\r\n", ""),
        )
    })
    .await;
    assert!(allowed.head.contains("access-control-allow-origin: http://ui.example"));
    assert!(!other.head.contains("access-control-allow-origin"));
    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn shutdown_cancels_the_run_and_flushes_stats() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, stop, server) = start(ServiceOptions::default()).await;
    let body = long_run(Some(dir.path()));
    let created = blocking(move || request(addr, "POST", "/api/v1/runs", "", &body)).await;
    assert_eq!(created.status, 201, "{}", created.body);

    let completed = blocking(move || {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let r = request(addr, "GET", "/api/v1/runs/run-1", "", "");
            let handle: serde_json::Value = serde_json::from_str(&r.body).unwrap();
            let n = handle["epochs_completed"].as_u64().unwrap();
            if n >= 2 {
                return n;
            }
            assert!(Instant::now() < deadline);
            std::thread::sleep(Duration::from_millis(10));
        }
    })
    .await;

    let started = Instant::now();
    stop.send(()).unwrap();
    server.await.unwrap().unwrap();
    assert!(started.elapsed() < Duration::from_secs(30));

    let stats = std::fs::read_to_string(dir.path().join("stats.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = stats.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() as u64 >= completed);
    assert!(lines.len() < 10_000);
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["epoch"].as_u64().unwrap() as usize, i + 1);
    }
    assert!(stats.ends_with('\n'));
    // A cancelled run never publishes a checkpoint.
    assert!(!dir.path().join("checkpoint.bin").exists());
    assert!(TcpStream::connect(addr).is_err());
}
