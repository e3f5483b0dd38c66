use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brushopt::cli::{RunManifest, TrajectoryFile};
use brushopt::CalibrationModel;

fn db() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample_graphics.txt")
}

fn brushopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brushopt")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn quick_optimize(out: &Path) -> Output {
    let db = db();
    brushopt(&[
        "optimize", "--char", "一", "--db", s(&db), "--out", s(out), "--size", "48", "--orders", "3..4",
        "--max-iters", "6",
    ])
}

#[test]
fn optimize_smoke_and_resimulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = quick_optimize(&out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.codepoint, "U+4E00");
    assert_eq!(manifest.strokes.len(), 1);
    for f in &manifest.files {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(out.join("character_simulated.png").is_file());
    assert!(out.join("character_diff.png").is_file());
    let log = std::fs::read_to_string(out.join("stroke_00_log.csv")).unwrap();
    assert!(log.starts_with("iter,lambda,cost,accepted\n"));

    let traj = out.join("stroke_00_trajectory.json");
    let file = TrajectoryFile::load(&traj).unwrap();
    assert_eq!(file.nodes.len(), file.order + 1);
    assert_eq!(file.dense.len(), 4 * 48);
    let png = dir.path().join("resim.png");
    let res = brushopt(&["simulate", "--traj", s(&traj), "--size", "48", "--out", s(&png)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read(&png).unwrap(), std::fs::read(out.join("stroke_00_simulated.png")).unwrap());
}

#[test]
fn pgm_output_and_char_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = brushopt(&[
        "optimize", "--char", "U+4E00", "--db", s(&db()), "--out", s(&out), "--size", "32", "--orders", "3..3",
        "--max-iters", "2", "--format", "pgm", "--model", "simple", "--thread-state",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bytes = std::fs::read(out.join("character_reference.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n32 32\n255\n"));
}

#[test]
fn missing_database_is_a_usage_error() {
    let res = brushopt(&["optimize", "--char", "一", "--out", "/tmp/unused"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unknown_character_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let res = brushopt(&["optimize", "--char", "龘", "--db", s(&db()), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("not-found"));
    let res = brushopt(&["extract", "--char", "龘", "--db", s(&db()), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn airborne_trajectory_simulates_blank() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.json");
    std::fs::write(
        &traj,
        r#"{"order":3,"nodes":[1,0.5,-0.5,-1],"x":[5,10,15,20],"y":[5,5,5,5],"z":[-0.3,-0.3,-0.3,-0.3],"dense":[]}"#,
    )
    .unwrap();
    let pgm = dir.path().join("blank.pgm");
    let res = brushopt(&["simulate", "--traj", s(&traj), "--size", "24", "--out", s(&pgm)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bytes = std::fs::read(&pgm).unwrap();
    let header = b"P5\n24 24\n255\n".len();
    assert!(bytes[header..].iter().all(|&b| b == 255));
}

#[test]
fn malformed_trajectory_is_a_parse_failure() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.json");
    std::fs::write(&traj, "{\"order\": 3, \"x\": [").unwrap();
    let res = brushopt(&["simulate", "--traj", s(&traj), "--out", s(&dir.path().join("x.png"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("parse"));
}

#[test]
fn calibrate_recovers_exact_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("marks.csv");
    let mut text = String::from("z,width,drag,offset\n");
    for i in 1..=6 {
        let z = i as f64 * 0.2;
        text.push_str(&format!("{z},{},{},{}\n", 3.0 * z, 6.0 * z, 10.0 * z - 4.0 * z * z));
    }
    std::fs::write(&csv, text).unwrap();
    let model_path = dir.path().join("model.json");
    let res = brushopt(&["calibrate", "--data", s(&csv), "--out", s(&model_path)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let model = CalibrationModel::load(&model_path).unwrap();
    assert!((model.width[1] - 3.0).abs() < 1e-9);
    assert!((model.drag[1] - 6.0).abs() < 1e-9);
    assert!((model.offset[1] - 10.0).abs() < 1e-9 && (model.offset[2] + 4.0).abs() < 1e-9);
    assert!((model.z_max - 1.2).abs() < 1e-12);

    std::fs::write(&csv, "z,width,drag,offset\n0.5,1,2,3\n1.0,2,4,5\n").unwrap();
    let res = brushopt(&["calibrate", "--data", s(&csv), "--degrees", "3,1,1", "--out", s(&model_path)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("insufficient-data"));
}

#[test]
fn extract_writes_one_image_per_stroke() {
    let dir = tempfile::tempdir().unwrap();
    let res = brushopt(&["extract", "--char", "鸟", "--db", s(&db()), "--out", s(dir.path()), "--size", "64"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let refs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            let name = e.as_ref().unwrap().file_name().into_string().unwrap();
            name.starts_with("stroke_") && name.ends_with("_reference.png")
        })
        .count();
    assert_eq!(refs, 5);
    assert!(dir.path().join("stroke_04_skeleton.json").is_file());
}
