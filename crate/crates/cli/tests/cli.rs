use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;

use narrowgap::dynamics::{thrust_from_throttle, ThrustMapParams};
use narrowgap::env::protocol::{Request, Response};
use narrowgap::env::{generate_dataset, EpisodeConfig, FlatArray, LineClient, SeedGenConfig, SeedTrajectoryDataset};
use narrowgap::geometry::{clearance_check, Clearance};
use narrowgap::seeding::rng_from;
use serde_json::{json, Value};
use tempfile::TempDir;

fn narrowgap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narrowgap")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("episode.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn rollout_hover_times_out_with_valid_logs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "track = \"easy\"\nhorizon = 40\ninformed_reset_probability = 0.0\n");
    let out = tmp.path().join("run");
    let o = narrowgap(&["rollout", "--config", &cfg, "--policy", "hover", "--episodes", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["timeouts"], 3);
    for ep in summary["per_episode"].as_array().unwrap() {
        assert_eq!(ep["outcome"], "timeout");
    }
    for (name, bytes) in read_dir_bytes(&out.join("episodes")) {
        let lines: Vec<Value> = bytes
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 40, "{name}");
        assert_eq!(lines.last().unwrap()["done"], true);
    }
    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 3);
    // the manifest's config text alone reproduces the run
    EpisodeConfig::from_toml_str(manifest["config"].as_str().unwrap()).unwrap().resolve().unwrap();
}

#[test]
fn rollout_is_reproducible_and_worker_independent() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        let o = narrowgap(&[
            "rollout", "--preset", "single_rect", "--seed", "42", "--episodes", "4", "--workers", workers, "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (read_dir_bytes(&out.join("episodes")), fs::read(out.join("summary.json")).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "3"));
    let other = narrowgap(&["eval", "--preset", "single_rect", "--seed", "43", "--episodes", "4"]);
    assert_ne!(other.stdout, a.1);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(code(&narrowgap(&["rollout", "--config", "/definitely/missing.toml", "--out", p(&out)])), 2);
    let bad = write_config(tmp.path(), "horizon = 0\n");
    assert_eq!(code(&narrowgap(&["rollout", "--config", &bad, "--out", p(&out)])), 2);
    assert_eq!(code(&narrowgap(&["rollout", "--preset", "no_such_track", "--out", p(&out)])), 2);
    assert_eq!(code(&narrowgap(&["eval", "--workers", "0"])), 2);
    assert_eq!(code(&narrowgap(&["eval", "--policy", "remote"])), 2);
    assert_eq!(code(&narrowgap(&["frobnicate"])), 2);
}

#[test]
fn dataset_of_100_is_collision_free() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("d.jsonl");
    let o = narrowgap(&["dataset", "--preset", "single_rect", "--count", "100", "--seed", "5", "--out", p(&path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["trajectories"], 100);
    let data = SeedTrajectoryDataset::load(&path).unwrap();
    assert_eq!(data.len(), 100);
    let collider = EpisodeConfig::default().collider;
    for t in &data.trajectories {
        for s in &t.samples {
            for g in &t.gaps {
                assert_ne!(clearance_check(&s.state(), g, &collider).class, Clearance::Collision);
            }
        }
    }
    // same seed and track as the library call
    let cfg = EpisodeConfig::from_toml_str("track = \"single_rect\"").unwrap().resolve().unwrap();
    let direct = generate_dataset(&cfg.track, 100, &cfg.episode.collider, &SeedGenConfig::default(), &mut rng_from(5)).unwrap();
    assert_eq!(data, direct);
}

#[test]
fn empty_dataset_is_valid() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("d.jsonl");
    assert_eq!(code(&narrowgap(&["dataset", "--count", "0", "--out", p(&path)])), 0);
    assert!(SeedTrajectoryDataset::load(&path).unwrap().is_empty());
}

#[test]
fn planner_mc_csv() {
    let tmp = TempDir::new().unwrap();
    let grid = tmp.path().join("grid.toml");
    fs::write(&grid, "epsilon = [0.0, 2.0]\ndelta = [0.0]\nphi_gap = [0.0]\nseeds = 12\n").unwrap();
    let run = |seed: &str| {
        let o = narrowgap(&["planner-mc", "--grid", p(&grid), "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let a = run("9");
    assert_eq!(a, run("9"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "epsilon,delta,x0,phi_gap,success_rate,ci_lo,ci_hi,n");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",12"));

    fs::write(&grid, "epsilon = []\n").unwrap();
    assert_eq!(code(&narrowgap(&["planner-mc", "--grid", p(&grid)])), 2);
    assert_eq!(code(&narrowgap(&["planner-mc", "--episodes", "0"])), 2);
}

#[test]
fn render_mask_writes_pgm() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("m.pgm");
    let o = narrowgap(&["render-mask", "--preset", "single_rect", "--pose", "-1.5,0,1.5,0,0,0", "--out", p(&path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(&path).unwrap();
    let header = b"P5\n320 256\n255\n";
    assert!(bytes.starts_with(header));
    let pixels = &bytes[header.len()..];
    assert_eq!(pixels.len(), 320 * 256);
    assert!(pixels.iter().any(|&v| v != 0));
    // looking away from the gap
    let o = narrowgap(&["render-mask", "--preset", "single_rect", "--pose", "-1.5,0,1.5,0,0,180", "--out", p(&path)]);
    assert_eq!(code(&o), 0);
    assert!(fs::read(&path).unwrap()[header.len()..].iter().all(|&v| v == 0));
    assert_eq!(code(&narrowgap(&["render-mask", "--gap", "3", "--out", p(&path)])), 2);
}

#[test]
fn fit_thrust_recovers_parameters() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("cal.csv");
    let truth = ThrustMapParams { lambda1: 2.2, lambda2: 1.1, lambda3: 0.4, ..ThrustMapParams::default() };
    let mut text = String::from("voltage,throttle,thrust\n");
    for v in [13.5, 15.0, 16.5] {
        for i in 1..=10 {
            let u = i as f64 / 10.0;
            text += &format!("{v},{u},{}\n", thrust_from_throttle(u, v, &truth).unwrap());
        }
    }
    fs::write(&csv, text).unwrap();
    let o = narrowgap(&["fit-thrust", "--csv", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit: Value = serde_json::from_slice(&o.stdout).unwrap();
    for (k, want) in [("lambda1", 2.2), ("lambda2", 1.1), ("lambda3", 0.4)] {
        assert!((fit["params"][k].as_f64().unwrap() - want).abs() < 1e-6, "{k}: {}", fit["params"][k]);
    }
    fs::write(&csv, "voltage,throttle,thrust\n15,0.5,3\n").unwrap();
    assert_eq!(code(&narrowgap(&["fit-thrust", "--csv", p(&csv)])), 2);
}

#[test]
fn presets_listed_and_shown() {
    let o = narrowgap(&["presets"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("track6") && text.contains("single_distill"));
    let o = narrowgap(&["presets", "--show", "track1"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("[[gaps]]"));
    assert_eq!(code(&narrowgap(&["presets", "--show", "nope"])), 2);
}

#[test]
fn serve_answers_batch_requests() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_narrowgap"))
        .args(["serve", "--preset", "single_rect", "--envs", "2", "--addr", "127.0.0.1:0", "--max-connections", "1"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();
    let mut client = LineClient::connect(addr.as_str()).unwrap();
    assert_eq!(client.spec().unwrap().num_envs, 2);
    client.reset(&[1, 2]).unwrap();
    let s = client.step(FlatArray::new(vec![2, 4], [9.81, 0.0, 0.0, 0.0].repeat(2)).unwrap()).unwrap();
    assert_eq!(s.reward.shape, vec![2]);
    drop(client);
    assert!(child.wait().unwrap().success());
}

#[test]
fn rollout_with_remote_policy() {
    // minimal policy server: hover for every request
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut out = stream.try_clone().unwrap();
        let mut served = 0;
        for line in BufReader::new(stream).lines() {
            let req: Request = serde_json::from_str(&line.unwrap()).unwrap();
            assert_eq!(req.method, "act");
            let k = req.observations.unwrap().features.shape[0];
            let actions = FlatArray::new(vec![k, 4], [9.81, 0.0, 0.0, 0.0].repeat(k)).unwrap();
            let resp = Response::ok(json!({ "actions": actions }));
            writeln!(out, "{}", serde_json::to_string(&resp).unwrap()).unwrap();
            served += 1;
        }
        served
    });
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "track = \"easy\"\nhorizon = 25\ninformed_reset_probability = 0.0\n");
    let out = tmp.path().join("remote");
    let o = narrowgap(&[
        "rollout", "--config", &cfg, "--policy", "remote", "--remote", &addr.to_string(), "--episodes", "2", "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(server.join().unwrap(), 50);

    // a scripted hover run logs the same episodes
    let local = tmp.path().join("local");
    let o = narrowgap(&["rollout", "--config", &cfg, "--policy", "hover", "--episodes", "2", "--out", p(&local)]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_dir_bytes(&out.join("episodes")), read_dir_bytes(&local.join("episodes")));
}
