//! End-to-end tests of the `up2p` binary: exit codes, pipeline flow, and the
//! fail-closed posture on tampered evidence.

use std::path::Path;
use std::process::{Command, Output};

fn up2p(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_up2p"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

/// Generate the demo, run the investigation, and hand back the directory.
fn demo_with_evidence() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = up2p(&["simdemo", "--out", "demo"], dir.path());
    assert!(out.status.success(), "simdemo failed: {}", stderr_of(&out));
    let out = up2p(
        &[
            "investigate",
            "--config",
            "demo/investigation.json",
            "--sim",
            "demo/simnet.json",
            "--out",
            "demo/evidence.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "investigate failed: {}", stderr_of(&out));
    dir
}

#[test]
fn demo_pipeline_end_to_end() {
    let dir = demo_with_evidence();
    let base = dir.path();
    assert!(base.join("demo/evidence.jsonl").exists());

    let verify = up2p(&["verify-evidence", "--evidence", "demo/evidence.jsonl"], base);
    assert!(verify.status.success());
    assert!(stderr_of(&verify).contains("OK,"));
    assert!(stdout_of(&verify).contains("\"ok\":true"));

    let analyze = up2p(
        &[
            "analyze",
            "--evidence",
            "demo/evidence.jsonl",
            "--geo",
            "demo/geo.csv",
            "--subscribers",
            "demo/subscribers.csv",
            "--out",
            "demo/report.json",
        ],
        base,
    );
    assert!(analyze.status.success(), "{}", stderr_of(&analyze));
    // Chain verification result printed before anything else.
    assert!(stderr_of(&analyze).starts_with("chain OK"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(base.join("demo/report.json")).unwrap()).unwrap();
    for field in [
        "uniqueIpCount",
        "avgSwarmsPerIp",
        "largestSwarmPeak",
        "smallestSwarmTrough",
        "meanSnapshotSeconds",
        "perCountry",
        "connectionTimeHistogram",
        "categoryDistribution",
        "churnSeries",
    ] {
        assert!(report.get(field).is_some(), "report missing {field}");
    }
    // Conservation: per-country unique IPs sum to the total.
    let total = report["uniqueIpCount"].as_u64().unwrap();
    let sum: u64 = report["perCountry"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row["uniqueIps"].as_u64().unwrap())
        .sum();
    assert_eq!(sum, total);

    let heatmap = up2p(
        &[
            "export-heatmap",
            "--evidence",
            "demo/evidence.jsonl",
            "--geo",
            "demo/geo.csv",
            "--cell",
            "1",
            "--out",
            "demo/heatmap",
        ],
        base,
    );
    assert!(heatmap.status.success(), "{}", stderr_of(&heatmap));
    let csv = std::fs::read_to_string(base.join("demo/heatmap.csv")).unwrap();
    assert!(csv.starts_with("lat_bin,lon_bin,count\n"));
    let cell_total: u64 = csv
        .lines()
        .skip(1)
        .map(|line| line.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    // Heatmap counts sum to the geolocated unique-IP total (countries other
    // than the unresolved bucket).
    let geolocated: u64 = report["perCountry"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|row| row["country"] != "--")
        .map(|row| row["uniqueIps"].as_u64().unwrap())
        .sum();
    assert_eq!(cell_total, geolocated);
    let geojson: serde_json::Value =
        serde_json::from_slice(&std::fs::read(base.join("demo/heatmap.geojson")).unwrap())
            .unwrap();
    assert_eq!(geojson["type"], "FeatureCollection");
}

#[test]
fn investigate_is_idempotent() {
    let dir = demo_with_evidence();
    let base = dir.path();
    let first = std::fs::read(base.join("demo/evidence.jsonl")).unwrap();
    let rerun = up2p(
        &[
            "investigate",
            "--config",
            "demo/investigation.json",
            "--sim",
            "demo/simnet.json",
            "--out",
            "demo/evidence2.jsonl",
        ],
        base,
    );
    assert!(rerun.status.success());
    let second = std::fs::read(base.join("demo/evidence2.jsonl")).unwrap();
    assert_eq!(first, second, "same inputs must produce identical evidence");
}

#[test]
fn sim_and_live_are_mutually_exclusive() {
    let dir = demo_with_evidence();
    let out = up2p(
        &[
            "investigate",
            "--config",
            "demo/investigation.json",
            "--sim",
            "demo/simnet.json",
            "--live",
            "--out",
            "x.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn investigate_requires_an_environment() {
    let dir = demo_with_evidence();
    let out = up2p(
        &[
            "investigate",
            "--config",
            "demo/investigation.json",
            "--out",
            "x.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_usage_error_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = up2p(
        &[
            "investigate",
            "--config",
            "nope/missing.json",
            "--sim",
            "also-missing.json",
            "--out",
            "x.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("nope/missing.json"));
}

#[test]
fn unknown_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = up2p(&["verify-evidence", "--evidence", "x", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_evidence_is_refused() {
    let dir = demo_with_evidence();
    let base = dir.path();
    let path = base.join("demo/evidence.jsonl");
    let mut bytes = std::fs::read(&path).unwrap();
    // Flip a payload byte somewhere in the middle of the record region.
    let target = bytes.len() / 2;
    bytes[target] ^= 0x01;
    std::fs::write(base.join("demo/tampered.jsonl"), &bytes).unwrap();

    let verify = up2p(&["verify-evidence", "--evidence", "demo/tampered.jsonl"], base);
    assert_eq!(verify.status.code(), Some(1));

    let analyze = up2p(
        &[
            "analyze",
            "--evidence",
            "demo/tampered.jsonl",
            "--geo",
            "demo/geo.csv",
            "--out",
            "demo/report.json",
        ],
        base,
    );
    assert_eq!(analyze.status.code(), Some(1));
}

#[test]
fn analyze_without_subscribers_omits_percentages() {
    let dir = demo_with_evidence();
    let base = dir.path();
    let analyze = up2p(
        &[
            "analyze",
            "--evidence",
            "demo/evidence.jsonl",
            "--geo",
            "demo/geo.csv",
            "--out",
            "demo/report-nosubs.json",
        ],
        base,
    );
    assert!(analyze.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(base.join("demo/report-nosubs.json")).unwrap())
            .unwrap();
    for row in report["perCountry"].as_array().unwrap() {
        assert!(row.get("percentOfBroadband").is_none());
        assert!(row.get("broadbandSubscribers").is_none());
    }
}

#[test]
fn geolocate_fixture_lookup() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("geo.csv"),
        "start_ip,end_ip,country,city,lat,lon,isp\n1.0.0.0,1.0.0.255,XX,,0,0,\n",
    )
    .unwrap();
    let hit = up2p(&["geolocate", "--ip", "1.0.0.17", "--geo", "geo.csv"], dir.path());
    assert!(hit.status.success());
    assert!(stdout_of(&hit).contains("\"country\":\"XX\""));
    let miss = up2p(&["geolocate", "--ip", "2.0.0.1", "--geo", "geo.csv"], dir.path());
    assert!(miss.status.success());
    assert_eq!(stdout_of(&miss).trim(), "null");
}

#[test]
fn metainfo_stats_over_generated_torrents() {
    let dir = tempfile::tempdir().unwrap();
    for (name, size) in [("a", 10_000u64), ("b", 50_000)] {
        let content = up2p_core::simnet::generate_content(7, name, size);
        let torrent = up2p_core::simnet::generate_torrent(name, &content, 16_384);
        std::fs::write(dir.path().join(format!("{name}.torrent")), torrent).unwrap();
    }
    let out = up2p(&["metainfo-stats", "a.torrent", "b.torrent"], dir.path());
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stats: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(stats["contentSize"]["min"], 10_000);
    assert_eq!(stats["contentSize"]["max"], 50_000);
    assert_eq!(stats["contentSize"]["mean"], 30_000.0);
    assert_eq!(stats["chunkCount"]["max"], 4); // ceil(50000/16384)
}

#[test]
fn stats_on_missing_torrent_fails_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = up2p(&["metainfo-stats", "ghost.torrent"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("ghost.torrent"));
}
