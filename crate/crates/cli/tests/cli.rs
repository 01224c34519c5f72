mod common;

use std::path::Path;

use common::*;
use nds_core::selection::Recommendation;

fn ready_server(dir: &Path) -> (Server, FixtureFiles) {
    let files = write_fixture(dir, &small_fixture());
    let server = Server::start(&dir.join("store"));
    ok(&nds(
        &server.url,
        &["register", "--manifest", files.source.to_str().unwrap()],
    ));
    ok(&nds(
        &server.url,
        &[
            "build",
            "--dataset",
            "fixture",
            "--k",
            "5",
            "--epochs",
            "5",
            "--hidden",
            "16",
        ],
    ));
    (server, files)
}

fn read_rec(dir: &Path) -> Recommendation {
    serde_json::from_str(&std::fs::read_to_string(dir.join("recommendation.json")).unwrap()).unwrap()
}

#[test]
fn e2e_round_trip_is_exact_deterministic_and_private() {
    let dir = tempfile::tempdir().unwrap();
    let (server, files) = ready_server(dir.path());
    let capture = Capture::start(&server.url);
    let target = files.target.to_str().unwrap();

    let out1 = dir.path().join("run1");
    let table = ok(&nds(
        &capture.url,
        &[
            "e2e",
            "--datasets",
            "fixture",
            "--target",
            target,
            "--budget",
            "60",
            "--seed",
            "4",
            "--out",
            out1.to_str().unwrap(),
        ],
    ));
    assert!(table.contains("weight"), "{table}");
    let urls = std::fs::read_to_string(out1.join("urls.txt")).unwrap();
    assert_eq!(urls.lines().count(), 60);
    assert!(urls.lines().all(|u| u.starts_with("https://fixture.example.org/")));

    let out2 = dir.path().join("run2");
    ok(&nds(
        &capture.url,
        &[
            "e2e",
            "--datasets",
            "fixture",
            "--target",
            target,
            "--budget",
            "60",
            "--seed",
            "4",
            "--out",
            out2.to_str().unwrap(),
        ],
    ));
    assert_eq!(urls, std::fs::read_to_string(out2.join("urls.txt")).unwrap());
    assert_eq!(read_rec(&out1).weights, read_rec(&out2).weights);

    let traffic = capture.take();
    assert!(traffic.iter().any(|r| r.head.starts_with("POST /v1/recommendations")));
    assert!(traffic
        .iter()
        .any(|r| r.head.starts_with("GET /v1/datasets/fixture/experts/")));
    let problems = privacy_violations(&traffic, &files.fixture.target);
    assert!(problems.is_empty(), "{problems:#?}");
}

#[test]
fn separate_commands_match_e2e() {
    let dir = tempfile::tempdir().unwrap();
    let (server, files) = ready_server(dir.path());
    let out = dir.path().join("steps");
    let bundle = out.join("bundle");
    let fetched = ok(&nds(
        &server.url,
        &["fetch", "--datasets", "fixture", "--out", bundle.to_str().unwrap()],
    ));
    assert_eq!(fetched.lines().count(), 6);
    ok(&nds(
        &server.url,
        &[
            "adapt",
            "--bundle",
            bundle.to_str().unwrap(),
            "--target",
            files.target.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let report = out.join("report.json");
    ok(&nds(
        &server.url,
        &[
            "recommend",
            "--report",
            report.to_str().unwrap(),
            "--budget",
            "25",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let rec = read_rec(&out);
    assert_eq!(rec.items.len(), 25);
    assert_eq!(rec.seed, 9);
    let text = std::fs::read_to_string(out.join("urls.txt")).unwrap();
    assert_eq!(text, rec.url_list());
}

#[test]
fn fetch_reuses_valid_cache_and_replaces_tampered_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let (server, files) = ready_server(dir.path());
    let bundle = dir.path().join("bundle");
    let b = bundle.to_str().unwrap();
    ok(&nds(&server.url, &["fetch", "--datasets", "fixture", "--out", b]));
    let blob = bundle.join("experts").join("expert_002.bin");
    let original = std::fs::read(&blob).unwrap();

    let mut bad = original.clone();
    let last = bad.len() - 1;
    bad[last] ^= 0xff;
    std::fs::write(&blob, &bad).unwrap();
    let out = nds(
        &server.url,
        &[
            "adapt",
            "--bundle",
            b,
            "--target",
            files.target.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(6), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum mismatch"));

    let again = nds(&server.url, &["fetch", "--datasets", "fixture", "--out", b]);
    ok(&again);
    assert!(String::from_utf8_lossy(&again.stderr).contains("cached=4"));
    assert_eq!(std::fs::read(&blob).unwrap(), original);
}

#[test]
fn offline_server_is_a_network_error_with_a_hint() {
    let out = nds(
        "http://127.0.0.1:9",
        &["fetch", "--datasets", "x", "--out", "/nonexistent"],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cannot reach server") && err.contains("retry"), "{err}");
}

#[test]
fn wrong_k_surfaces_the_server_error_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let (server, files) = ready_server(dir.path());
    let out = dir.path().join("o");
    ok(&nds(
        &server.url,
        &[
            "e2e",
            "--datasets",
            "fixture",
            "--target",
            files.target.to_str().unwrap(),
            "--budget",
            "5",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let report_path = out.join("report.json");
    let mut report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    report["z"].as_array_mut().unwrap().truncate(3);
    std::fs::write(&report_path, report.to_string()).unwrap();

    let res = nds(
        &server.url,
        &[
            "recommend",
            "--report",
            report_path.to_str().unwrap(),
            "--budget",
            "5",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(res.status.code(), Some(4));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(
        err.contains("422") && err.contains("length-mismatch: length mismatch: expected 5, got 3"),
        "{err}"
    );
}

#[test]
fn explicit_server_flag_beats_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (server, _) = ready_server(dir.path());
    let out = nds("http://127.0.0.1:9", &["--server", &server.url, "datasets"]);
    assert!(ok(&out).contains("ready"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (server, files) = ready_server(dir.path());
    let out = dir.path().join("o");
    let status = std::process::Command::new(NDS)
        .args(["e2e", "--datasets", "fixture", "--budget", "5", "--target"])
        .arg(&files.target)
        .arg("--out")
        .arg(&out)
        .env("SERVER_URL", &server.url)
        .env("SEED", "31")
        .output()
        .unwrap();
    ok(&status);
    assert_eq!(read_rec(&out).seed, 31);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(nds("http://127.0.0.1:9", &["frobnicate"]).status.code(), Some(2));
    assert_eq!(nds("http://127.0.0.1:9", &["recommend"]).status.code(), Some(2));
    assert_eq!(
        nds("http://127.0.0.1:9", &["fetch", "--datasets", " , "]).status.code(),
        Some(2)
    );
}

#[test]
fn privacy_check_flags_leaked_target_data() {
    let fixture = nds_lab::fixture::Fixture::generate(&small_fixture());
    let leaked_id = fixture.target.items[3].id.clone();
    let body = format!(r#"{{"report": {{"z": [0.5], "extra": "{leaked_id}"}}, "budget": 3}}"#);
    let traffic = vec![Captured {
        head: "POST /v1/recommendations HTTP/1.1\r\n\r\n".into(),
        body: body.into_bytes(),
    }];
    let problems = privacy_violations(&traffic, &fixture.target);
    assert!(
        problems.iter().any(|p| p.contains("carries target data")),
        "{problems:?}"
    );
    assert!(
        problems.iter().any(|p| p.contains("unexpected report field `extra`")),
        "{problems:?}"
    );
}
