mod common;

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use common::*;
use nds_core::protocol::{ApiError, BundleManifest, DatasetStatus, DatasetSummary};
use nds_core::selection::Recommendation;
use nds_server::Registry;
use serde_json::{json, Value};

fn spawn(root: &std::path::Path) -> SocketAddr {
    let registry = Registry::open(root).unwrap();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            nds_server::serve(registry, listener).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn get(agent: &ureq::Agent, url: &str) -> (u16, Vec<u8>) {
    let mut resp = agent.get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_vec().unwrap())
}

fn post(agent: &ureq::Agent, url: &str, body: &str) -> (u16, Vec<u8>) {
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_vec().unwrap())
}

#[test]
fn full_api_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = format!("http://{}", spawn(dir.path()));
    let agent = agent();

    let manifest = source("blobs", 90, 3).to_jsonl();
    let (code, body) = post(&agent, &format!("{base}/v1/datasets"), &manifest);
    assert_eq!(code, 201);
    let summary: DatasetSummary = serde_json::from_slice(&body).unwrap();
    assert_eq!(summary.status, DatasetStatus::Registered);
    assert_eq!(post(&agent, &format!("{base}/v1/datasets"), &manifest).0, 200);

    let (code, body) = post(&agent, &format!("{base}/v1/datasets"), "{\"meta\": 3}");
    assert_eq!(code, 422);
    let err: ApiError = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.code, "parse-error");

    let build = serde_json::to_string(&quick_build(3)).unwrap();
    let (code, _) = post(&agent, &format!("{base}/v1/datasets/blobs/build"), &build);
    assert_eq!(code, 202);
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (_, body) = get(&agent, &format!("{base}/v1/datasets/blobs/status"));
        let s: DatasetSummary = serde_json::from_slice(&body).unwrap();
        if s.status == DatasetStatus::Ready {
            break;
        }
        assert_ne!(s.status, DatasetStatus::Failed, "{:?}", s.error);
        assert!(Instant::now() < deadline, "build did not finish");
        std::thread::sleep(Duration::from_millis(50));
    }
    assert_eq!(post(&agent, &format!("{base}/v1/datasets/blobs/build"), &build).0, 200);

    let (code, body) = get(&agent, &format!("{base}/v1/datasets"));
    assert_eq!(code, 200);
    let list: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(list["datasets"][0]["k"], 3);

    let (code, body) = get(&agent, &format!("{base}/v1/experts?datasets=blobs"));
    assert_eq!(code, 200);
    let bundle: BundleManifest = serde_json::from_slice(&body).unwrap();
    assert_eq!(bundle.k(), 3);
    for entry in &bundle.experts {
        let (code, blob) = get(&agent, &format!("{base}{}", entry.href));
        assert_eq!(code, 200);
        assert_eq!(nds_core::manifest::sha256_hex(&blob), entry.sha256);
    }

    let request = json!({
        "report": {"dataset_ref": "blobs", "mode": "proxy", "z": [0.3, 0.9, 0.5], "target_size": 12, "client_nonce": "abc"},
        "budget": 7,
        "seed": 3
    })
    .to_string();
    let (code, body) = post(&agent, &format!("{base}/v1/recommendations"), &request);
    assert_eq!(code, 200);
    let rec: Recommendation = serde_json::from_slice(&body).unwrap();
    assert_eq!(rec.items.len(), 7);
    assert_eq!(rec.seed, 3);
    assert_eq!(rec.temperature, 0.1);
    let (code, text) = post(&agent, &format!("{base}/v1/recommendations?format=text"), &request);
    assert_eq!(code, 200);
    assert_eq!(String::from_utf8(text).unwrap(), rec.url_list());

    let wrong_k = request
        .replace("[0.3, 0.9, 0.5]", "[0.3, 0.9]")
        .replace("[0.3,0.9,0.5]", "[0.3,0.9]");
    let (code, body) = post(&agent, &format!("{base}/v1/recommendations"), &wrong_k);
    assert_eq!(code, 422);
    let err: ApiError = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.code, "length-mismatch");
    assert_eq!(err.detail, json!({"expected": 3, "found": 2}));

    let (code, body) = get(&agent, &format!("{base}/v1/experts?datasets=nope"));
    assert_eq!(code, 404);
    assert_eq!(
        serde_json::from_slice::<ApiError>(&body).unwrap().code,
        "unknown-dataset"
    );
    assert_eq!(get(&agent, &format!("{base}/v1/nothing")).0, 404);

    // The request log holds access lines and the recommendation reports only.
    let log = std::fs::read_to_string(dir.path().join("requests.log")).unwrap();
    let mut saw_report = false;
    for line in log.lines() {
        let entry: Value = serde_json::from_str(line).unwrap();
        match entry["event"].as_str().unwrap() {
            "access" => {
                let mut keys: Vec<_> = entry.as_object().unwrap().keys().cloned().collect();
                keys.sort();
                assert_eq!(keys, ["body_bytes", "event", "method", "path", "query", "status", "ts"]);
            }
            "recommendation" => {
                saw_report = true;
                let report = entry["request"]["report"].as_object().unwrap();
                for (key, value) in report {
                    assert!(key == "z" || !value.is_array(), "{key}");
                }
            }
            other => panic!("unexpected log event {other}"),
        }
    }
    assert!(saw_report);
}
