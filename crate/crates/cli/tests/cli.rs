use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hoi_kinematics::camera::Camera;
use hoi_kinematics::ik::IkProblem;
use hoi_kinematics::kinematics::{fk, PoseState};
use hoi_kinematics::linalg::Vec3;
use hoi_kinematics::skeleton::KinematicTree;
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn hoikin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoikin"))
        .args(args)
        .env_remove("HOIKIN_SKELETON")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fk_matches_reference_positions() {
    let pose = data("pose.json");
    let got: Value = serde_json::from_str(&stdout(&hoikin(&["fk", "--pose", path_str(&pose)]))).unwrap();
    let want: Value = serde_json::from_str(&std::fs::read_to_string(data("fk_expected.json")).unwrap()).unwrap();
    let (got, want) = (got.as_array().unwrap(), want.as_array().unwrap());
    assert_eq!(got.len(), 24);
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g["name"], w["name"]);
        for k in 0..3 {
            let (a, b) = (g["position"][k].as_f64().unwrap(), w["position"][k].as_f64().unwrap());
            assert!((a - b).abs() <= 1e-9, "{}: {a} vs {b}", g["name"]);
        }
    }
}

#[test]
fn fk_csv_has_one_row_per_joint() {
    let text = stdout(&hoikin(&["fk", "--pose", path_str(&data("pose.json")), "--format", "csv"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,name,x,y,z"));
    assert_eq!(lines.count(), 24);
}

#[test]
fn skeleton_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let sk = dir.path().join("sk.json");
    std::fs::write(&sk, hoi_kinematics::skeleton::SYNTHETIC_SKELETON_JSON).unwrap();
    let pose = data("pose.json");
    let base = stdout(&hoikin(&["fk", "--pose", path_str(&pose)]));
    let out = Command::new(env!("CARGO_BIN_EXE_hoikin"))
        .args(["fk", "--pose", path_str(&pose)])
        .env("HOIKIN_SKELETON", &sk)
        .output()
        .unwrap();
    assert_eq!(stdout(&out), base);

    let missing = Command::new(env!("CARGO_BIN_EXE_hoikin"))
        .args(["fk", "--pose", path_str(&pose)])
        .env("HOIKIN_SKELETON", dir.path().join("absent.json"))
        .output()
        .unwrap();
    assert!(!missing.status.success());
}

#[test]
fn eval_matches_reference_metrics() {
    let (pred, truth) = (data("pred.obj"), data("truth.obj"));
    let text = stdout(&hoikin(&[
        "eval", "--pred", path_str(&pred), "--truth", path_str(&truth), "--sequence", "demo", "--frame", "3",
    ]));
    let want = std::fs::read_to_string(data("eval_expected.csv")).unwrap();
    let parse = |s: &str| -> Vec<String> { s.lines().nth(1).unwrap().split(',').map(str::to_string).collect() };
    let (g, w) = (parse(&text), parse(&want));
    assert_eq!(text.lines().next(), want.lines().next());
    assert_eq!(g[..2], w[..2]);
    for k in 2..4 {
        let (a, b): (f64, f64) = (g[k].parse().unwrap(), w[k].parse().unwrap());
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

#[test]
fn eval_of_identical_meshes_is_zero() {
    let truth = data("truth.obj");
    let text = stdout(&hoikin(&["eval", "--pred", path_str(&truth), "--truth", path_str(&truth), "--format", "json"]));
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["chamfer_cm"].as_f64(), Some(0.0));
    assert!(v["pa_chamfer_cm"].as_f64().unwrap() < 1e-9);
}

#[test]
fn malformed_json_fails_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"theta\": [[0, 0, 0],\n  oops]}").unwrap();
    let out = hoikin(&["fk", "--pose", path_str(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json"), "{err}");
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_input_fails() {
    let out = hoikin(&["eval", "--pred", "/nonexistent/a.obj", "--truth", "/nonexistent/b.obj"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn zero_threshold_labels_nothing() {
    let scene = data("scene_touch.json");
    let text = stdout(&hoikin(&["contact", "--scene", path_str(&scene), "--threshold", "0", "--format", "json"]));
    let v: Value = serde_json::from_str(&text).unwrap();
    let labels = v["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 6);
    assert!(labels.iter().all(|l| l.as_u64() == Some(15)));
}

#[test]
fn touching_scene_labels_the_wrist_cluster() {
    let scene = data("scene_touch.json");
    let text = stdout(&hoikin(&["contact", "--scene", path_str(&scene), "--format", "csv"]));
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(labels.len(), 6);
    assert!(labels[..5].iter().all(|l| *l == labels[0] && *l != "15"));
    assert_eq!(labels[5], "15");
}

#[test]
fn binary_labels_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("labels.bin");
    let scene = data("scene_touch.json");
    stdout(&hoikin(&["contact", "--scene", path_str(&scene), "--format", "bin", "--out", path_str(&out)]));
    let labels = hoi_kinematics::io::read_labels(&out).unwrap();
    assert_eq!(labels.len(), 6);
    assert_eq!(labels[5], 15);
}

#[test]
fn ik_on_touching_scene_reaches_the_contact() {
    let dir = tempfile::tempdir().unwrap();
    let pose_out = dir.path().join("pose.json");
    let scene = data("scene_touch.json");
    let text = stdout(&hoikin(&[
        "ik", "--scene", path_str(&scene), "--solver", "both", "--pose-out", path_str(&pose_out),
    ]));
    let v: Value = serde_json::from_str(&text).unwrap();
    let runs = v.as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for r in runs {
        assert_eq!(r["report"]["stop_reason"], "converged");
        assert!(r["report"]["final_target_distance"].as_f64().unwrap() < 0.01);
    }

    let tree = KinematicTree::<f64>::synthetic();
    let poses: Vec<PoseState<f64>> = serde_json::from_str(&std::fs::read_to_string(&pose_out).unwrap()).unwrap();
    let joint = runs[0]["report"]["target_joint"].as_u64().unwrap() as usize;
    let centroid = Vec3::new(0.71, 0.49, 2.458);
    for p in &poses {
        let q = fk(&tree, p).unwrap().positions[joint];
        assert!((q - centroid).norm() < 0.01);
    }
}

fn at_target_problem() -> IkProblem<f64> {
    let tree = KinematicTree::<f64>::synthetic();
    let mut pose = PoseState::zero(tree.joint_count());
    pose.translation = Vec3::new(0.0, -0.9, 2.5);
    let camera = Camera::new(1000.0, 1000.0, 512.0, 512.0, 1024, 1024);
    let positions = fk(&tree, &pose).unwrap().positions;
    let part = tree.part(5).unwrap();
    IkProblem {
        root_2d: camera.project(&positions[0]).unwrap(),
        target_points: vec![positions[part.target]],
        part_label: 5,
        pose,
        camera,
    }
}

#[test]
fn ik_already_at_target_does_no_work() {
    let dir = tempfile::tempdir().unwrap();
    let problems = dir.path().join("problem.json");
    std::fs::write(&problems, serde_json::to_string(&at_target_problem()).unwrap()).unwrap();
    let text = stdout(&hoikin(&["ik", "--problems", path_str(&problems), "--solver", "both", "--format", "csv"]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.contains("already_converged"), "{r}");
    }
}

#[test]
fn ik_exit_code_two_when_target_not_reached() {
    let dir = tempfile::tempdir().unwrap();
    let problems = dir.path().join("problem.json");
    let mut p = at_target_problem();
    p.target_points[0] += Vec3::new(0.0, 0.0, -0.05);
    std::fs::write(&problems, serde_json::to_string(&p).unwrap()).unwrap();
    let out = hoikin(&["ik", "--problems", path_str(&problems), "--max-iters", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let problems = dir.path().join("problem.json");
    let mut p = at_target_problem();
    p.target_points[0] += Vec3::new(0.0, 0.0, -0.03);
    std::fs::write(&problems, serde_json::to_string(&p).unwrap()).unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"max_iters": 3}"#).unwrap();
    let iterations = |extra: &[&str]| -> u64 {
        let mut args = vec!["ik", "--problems", path_str(&problems), "--config", path_str(&config)];
        args.extend_from_slice(extra);
        let out = hoikin(&args);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v[0]["report"]["iterations"].as_u64().unwrap()
    };
    assert_eq!(iterations(&[]), 3);
    assert_eq!(iterations(&["--max-iters", "5"]), 5);

    std::fs::write(&config, r#"{"max_iter": 3}"#).unwrap();
    assert!(!hoikin(&["ik", "--problems", path_str(&problems), "--config", path_str(&config)]).status.success());
}

#[test]
fn invalid_gamma_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let problems = dir.path().join("problem.json");
    std::fs::write(&problems, serde_json::to_string(&at_target_problem()).unwrap()).unwrap();
    let out = hoikin(&["ik", "--problems", path_str(&problems), "--gamma", "0"]);
    assert!(!out.status.success());
}

#[test]
fn bench_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> Vec<u8> {
        let out = dir.path().join(name);
        stdout(&hoikin(&[
            "bench", "--count", "4", "--gammas", "30,90", "--seed", "3", "--out", path_str(&out),
        ]));
        std::fs::read(out).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().starts_with("neural,30"));
    assert!(text.lines().nth(3).unwrap().starts_with("trm,"));
}

#[test]
fn bench_rejects_empty_suite() {
    let out = hoikin(&["bench", "--count", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bench_suite_feeds_ik() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.json");
    stdout(&hoikin(&[
        "bench", "--count", "2", "--gammas", "30", "--solver", "trm", "--suite-out", path_str(&suite), "--format", "md",
    ]));
    let text = stdout(&hoikin(&["ik", "--problems", path_str(&suite), "--solver", "trm", "--format", "csv"]));
    assert_eq!(text.lines().count(), 3);
}
