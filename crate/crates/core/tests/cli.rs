//! End-to-end checks of the `connav` binary.

use connav::eval::EvalReport;
use connav::rl::DiagnosticsLog;
use connav::world::{Rect, Vec2, WorldMap};
use std::path::Path;
use std::process::{Command, Output};

fn connav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_connav")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = connav(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn gen_maps_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["gen-maps", "--count", "100", "--seed", "7", "--out", a.to_str().unwrap()]);
    ok(&["gen-maps", "--count", "100", "--seed", "7", "--out", b.to_str().unwrap()]);
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(fa.len(), 100);
    assert_eq!(fa, fb);
    let map = WorldMap::load(a.join("map_0042.json")).unwrap();
    assert_eq!(map.n_robots(), 3);
}

#[test]
fn gen_maps_zero_count_creates_empty_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("none");
    ok(&["gen-maps", "--count", "0", "--out", out.to_str().unwrap()]);
    assert!(out.is_dir());
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn gen_maps_unwritable_dir_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    std::fs::write(&file, b"x").unwrap();
    let target = file.join("maps");
    let out = connav(&["gen-maps", "--count", "3", "--out", target.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(target.to_str().unwrap()), "{err}");
}

#[test]
fn bad_config_key_is_rejected() {
    let out = connav(&["gen-maps", "--count", "1", "--set", "no_such_key=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

fn eval_report(args: &[&str]) -> EvalReport {
    let out = ok(args);
    serde_json::from_slice(&out.stdout).expect("report JSON on stdout")
}

#[test]
fn static_team_never_succeeds_and_stays_connected() {
    let r = eval_report(&["eval", "--controller", "static", "--set", "eval_maps=5", "--set", "t_max=40"]);
    assert_eq!(r.episodes, 5);
    assert_eq!(r.success_rate, 0.0);
    assert_eq!(r.connectivity_rate, 1.0);
    assert_eq!(r.successes + r.collisions + r.timeouts, r.episodes);
}

#[test]
fn expert_single_robot_on_empty_map() {
    let tmp = tempfile::tempdir().unwrap();
    let map = WorldMap {
        bounds: Rect::new(Vec2::ZERO, Vec2::new(8.0, 8.0)),
        obstacles: Vec::new(),
        goal: Vec2::new(7.0, 4.0),
        goal_radius: 0.5,
        spawns: vec![Vec2::new(1.0, 4.0)],
    };
    map.save(tmp.path().join("m.json")).unwrap();
    let r = eval_report(&["eval", "--controller", "expert", "--robots", "1", "--maps", tmp.path().to_str().unwrap()]);
    assert_eq!(r.successes, 1);
    // 6 m to the goal, 5.68 m to the zone's inner edge, at 0.7 m/s
    let t = r.travel_time_mean.unwrap();
    assert!((5.68 / 0.7..=6.0 / 0.7 + 1.0).contains(&t), "{t}");
}

#[test]
fn train_eval_export_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let maps = tmp.path().join("maps");
    ok(&["gen-maps", "--count", "10", "--seed", "3", "--out", maps.to_str().unwrap()]);
    let cfg = tmp.path().join("exp.cfg");
    std::fs::write(&cfg, "# tiny run\nn_batch = 512\nt_max = 100\nlbfgs_iters = 5\ncheckpoint_every = 2\n").unwrap();
    let args = |run: &str| -> Vec<String> {
        [
            "train", "--config", cfg.to_str().unwrap(), "--algo", "trpo", "--bc", "on", "--robots", "3", "--steps", "3000",
            "--seed", "5", "--maps", maps.to_str().unwrap(), "--out", tmp.path().join(run).to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    for run in ["r1", "r2"] {
        let a = args(run);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let log1 = std::fs::read(tmp.path().join("r1/diagnostics.jsonl")).unwrap();
    assert_eq!(log1, std::fs::read(tmp.path().join("r2/diagnostics.jsonl")).unwrap());
    let (header, records) = DiagnosticsLog::read(&tmp.path().join("r1/diagnostics.jsonl")).unwrap();
    assert_eq!(header["config"]["algo"], "trpo");
    assert_eq!(header["config"]["n_batch"], 512);
    assert!(records.len() >= 5);
    // TRPO never takes a constrained or recovery step but still logs J_c
    assert!(records.iter().all(|r| r.mode == "trpo" && r.j_c.is_finite() && r.j_c >= 0.0));
    assert!(records.iter().all(|r| !r.accepted || r.kl <= 0.01));

    let ck = tmp.path().join("r1/checkpoint.json");
    let a = eval_report(&["eval", "--checkpoint", ck.to_str().unwrap(), "--maps", maps.to_str().unwrap()]);
    let b = eval_report(&["eval", "--checkpoint", ck.to_str().unwrap(), "--maps", maps.to_str().unwrap()]);
    assert_eq!(a, b);
    assert_eq!(a.episodes, 10);
    assert_eq!(a.successes + a.collisions + a.timeouts, a.episodes);

    // a checkpoint for three robots cannot drive a two-robot team
    let out = connav(&["eval", "--checkpoint", ck.to_str().unwrap(), "--robots", "2"]);
    assert!(!out.status.success());

    let csv = tmp.path().join("traj.csv");
    ok(&[
        "export-traj",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--map",
        maps.join("map_0000.json").to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    let rows = connav::env::read_trajectory_csv(&csv).unwrap();
    assert!(!rows.is_empty() && rows.len() % 3 == 0);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--set", "n_batch=400", "--set", "t_max=80", "--set", "lbfgs_iters=4", "--set", "train_maps=4"];
    let full = tmp.path().join("full");
    let part = tmp.path().join("part");
    let run = |out: &Path, steps: &str, resume: bool| {
        let mut a: Vec<&str> = vec!["train", "--steps", steps, "--seed", "9", "--out", out.to_str().unwrap()];
        a.extend(common);
        a.extend(["--set", "checkpoint_every=1"]);
        if resume {
            a.push("--resume");
        }
        ok(&a);
    };
    run(&full, "2000", false);
    run(&part, "800", false);
    run(&part, "2000", true);
    assert_eq!(
        std::fs::read(full.join("diagnostics.jsonl")).unwrap(),
        std::fs::read(part.join("diagnostics.jsonl")).unwrap()
    );
    assert_eq!(std::fs::read(full.join("checkpoint.json")).unwrap(), std::fs::read(part.join("checkpoint.json")).unwrap());
}
