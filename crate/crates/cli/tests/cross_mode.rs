use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};

use cuechart_testkit::scenario::{chart, profile, transcript};
use cuechart_testkit::{climate_scenario_dir, climate_session_dir, data_dir};
use serde_json::{json, Value};

struct Serve(Child);

impl Drop for Serve {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

/// Starts `cuechart serve` on a free port and returns its base URL.
fn serve(log_dir: &std::path::Path) -> (Serve, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cuechart"))
        .args(["serve", "--port", "0", "--backend", "replay", "--candidates", "8"])
        .arg("--data-dir")
        .arg(data_dir())
        .arg("--replay-dir")
        .arg(climate_scenario_dir())
        .arg("--log-dir")
        .arg(log_dir)
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_string();
    (Serve(child), url)
}

fn suggest(extra: &[&str]) -> std::process::Output {
    suggest_with(&climate_session_dir().join("transcript.json"), extra)
}

fn suggest_with(transcript: &std::path::Path, extra: &[&str]) -> std::process::Output {
    let session = climate_session_dir();
    Command::new(env!("CARGO_BIN_EXE_cuechart"))
        .arg("suggest")
        .arg("--data-dir")
        .arg(data_dir())
        .arg("--transcript")
        .arg(transcript)
        .arg("--chart")
        .arg(session.join("chart.json"))
        .arg("--profile")
        .arg(session.join("profile.json"))
        .arg("--replay-dir")
        .arg(climate_scenario_dir())
        .args(extra)
        .output()
        .unwrap()
}

#[tokio::test]
async fn offline_report_matches_service_round() {
    let logs = tempfile::tempdir().unwrap();
    let (_server, base) = serve(logs.path());
    let client = reqwest::Client::new();
    let send = |req: reqwest::RequestBuilder| async move {
        let body: Value = req.send().await.unwrap().json().await.unwrap();
        assert_eq!(body["ok"], true, "{body}");
        body["data"].clone()
    };
    let id = send(client.post(format!("{base}/sessions")).json(&json!({})))
        .await["sessionId"]
        .as_str()
        .unwrap()
        .to_string();
    for (speaker, text) in transcript() {
        send(client.post(format!("{base}/sessions/{id}/utterances")).json(&json!({"speaker": speaker, "text": text}))).await;
    }
    let c = chart();
    send(client.put(format!("{base}/sessions/{id}/active-chart")).json(&json!({"spec": c.spec, "title": c.title}))).await;
    send(client.put(format!("{base}/sessions/{id}/profile")).json(&profile())).await;
    let mut round = send(client.post(format!("{base}/sessions/{id}/rounds"))).await;
    for key in ["roundId", "timings", "cacheHits"] {
        round.as_object_mut().unwrap().remove(key);
    }

    let offline = suggest(&["--content-only"]);
    assert!(offline.status.success(), "{}", String::from_utf8_lossy(&offline.stderr));
    let service = serde_json::to_string_pretty(&round).unwrap() + "\n";
    assert_eq!(String::from_utf8(offline.stdout).unwrap(), service);
    assert!(logs.path().join(format!("{id}.jsonl")).is_file());
}

#[test]
fn suggest_errors_are_json_on_stderr() {
    let out = suggest_with(std::path::Path::new("/missing/transcript.json"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "FileNotFound");
    assert!(err["error"]["message"].as_str().unwrap().contains("/missing/transcript.json"));
}

#[test]
fn suggest_with_three_candidates() {
    let out = suggest(&["--candidates", "3"]);
    assert!(out.status.success());
    let round: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(round["candidateCount"], 3);
    assert_eq!(round["ranked"].as_array().unwrap().len(), 3);
    assert!(round["timings"]["total"].is_u64());
}
