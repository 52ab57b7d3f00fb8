use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use egopose_core::hash::sha256_hex;
use egopose_core::record::{DatasetManifest, Split};

fn egopose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egopose"))
        .args(args)
        .env_remove("EGOPOSE_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 30 motions of 2 frames each, shared by the training and eval tests.
fn dataset() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = scratch("dataset");
        ok(&egopose(&["gen", "--motions", "30", "--seed", "7", "--duration", "0.4", "--out", s(&root)]));
        root
    })
}

fn tiny_experiment(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    let exp = serde_json::json!({
        "model": {
            "pose2d": { "base_width": 4, "stages": 2, "input_size": 64 },
            "pose3d": { "heatmap_size": 16, "encoder_channels": [8, 8], "embedding_dim": 32, "pose_hidden": 32 }
        },
        "train": {
            "epochs": 2, "batch_size": 4, "runs": 1,
            "max_train_frames": 8, "max_val_frames": 4, "max_eval_frames": 6
        }
    });
    std::fs::write(&path, exp.to_string()).unwrap();
    path
}

fn manifest_count(root: &Path) -> (usize, Vec<String>) {
    let mut motions = 0;
    let mut cats = Vec::new();
    for split in Split::ALL {
        let m = DatasetManifest::load(root, split).unwrap();
        motions += m.motions.len();
        cats.extend(m.motions.iter().map(|x| x.category.clone()));
    }
    cats.sort();
    cats.dedup();
    (motions, cats)
}

#[test]
fn gen_writes_the_requested_motions_reproducibly() {
    let root = dataset();
    let (motions, cats) = manifest_count(root);
    assert_eq!(motions, 30);
    assert_eq!(cats.len(), 30);
    assert!(root.join("provenance.json").is_file());

    let again = scratch("gen_again");
    let out = ok(&egopose(&["gen", "--motions", "30", "--seed", "7", "--duration", "0.4", "--out", s(&again)]));
    assert!(out.contains("motions: 30"), "{out}");
    for split in Split::ALL {
        let name = DatasetManifest::file_name(split);
        let a = std::fs::read(root.join(&name)).unwrap();
        let b = std::fs::read(again.join(&name)).unwrap();
        assert_eq!(sha256_hex(&a), sha256_hex(&b));
    }
}

#[test]
fn gen_restricts_categories() {
    let root = scratch("gen_categories");
    ok(&egopose(&[
        "gen", "--motions", "6", "--categories", "jumping,boxing", "--duration", "0.2", "--out", s(&root),
    ]));
    let (motions, cats) = manifest_count(&root);
    assert_eq!(motions, 6);
    assert_eq!(cats, vec!["boxing".to_string(), "jumping".to_string()]);
}

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(egopose(&["gen", "--motions", "abc"]).status.code(), Some(1));
    assert_eq!(egopose(&["frobnicate"]).status.code(), Some(1));
    let out = egopose(&["gen", "--categories", "no-such-motion", "--out", s(&scratch("bad_cat"))]);
    assert_eq!(out.status.code(), Some(1));
    let out = egopose(&["train", "--out", "/tmp/x", "--strategy", "sideways", "--data-root", "/"]);
    assert_eq!(out.status.code(), Some(1));
    let out = egopose(&["train", "--out", "/tmp/x", "--variant", "monocular", "--weight-sharing", "false"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_documents_flags_and_exits_0() {
    let out = egopose(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["gen", "spawn", "train", "eval", "stats", "ablate"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert!(text.contains("EGOPOSE_DATA_ROOT"));
    let train = String::from_utf8_lossy(&egopose(&["train", "--help"]).stdout).into_owned();
    for flag in ["--config", "--seed", "--out", "--strategy", "--variant", "--backbone", "--weight-sharing", "--runs"] {
        assert!(train.contains(flag), "{flag} missing from train help");
    }
    let gen = String::from_utf8_lossy(&egopose(&["gen", "--help"]).stdout).into_owned();
    assert!(gen.contains("--categories") && gen.contains("--motions"));
    let eval = String::from_utf8_lossy(&egopose(&["eval", "--help"]).stdout).into_owned();
    assert!(eval.contains("--by-category"));
}

#[test]
fn missing_dataset_is_a_data_error_naming_the_path() {
    let out = egopose(&["train", "--out", s(&scratch("nodata")), "--data-root", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/definitely/not/here"));
    let empty = scratch("empty_root");
    let out = egopose(&["train", "--out", s(&scratch("nodata2")), "--data-root", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}

#[test]
fn separate_training_writes_report_and_two_checkpoints_then_evaluates() {
    let dir = scratch("train_separate");
    let cfg = tiny_experiment(&dir);
    let out_dir = dir.join("run");
    let stdout = ok(&egopose(&[
        "train", "--config", s(&cfg), "--strategy", "separate", "--runs", "1", "--seed", "1", "--out", s(&out_dir),
        "--data-root", s(dataset()),
    ]));
    assert!(stdout.contains("seed 1"), "{stdout}");
    let run = out_dir.join("seed_1");
    assert!(run.join("report.json").is_file());
    assert!(run.join("pose2d.ckpt").is_file());
    assert!(run.join("pose3d.ckpt").is_file());
    assert!(!run.join("model.ckpt").exists());
    assert!(out_dir.join("provenance.json").is_file());
    let prov: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seeds"], serde_json::json!([1]));
    assert!(prov["config_hash"].as_str().unwrap().len() == 64);

    // Evaluation is idempotent.
    let eval_a = dir.join("eval_a");
    let eval_b = dir.join("eval_b");
    for out in [&eval_a, &eval_b] {
        let args = ["eval", "--run", s(&out_dir), "--split", "test", "--out", s(out), "--data-root", s(dataset())];
        ok(&egopose(&args));
    }
    assert_eq!(
        std::fs::read(eval_a.join("eval_test.json")).unwrap(),
        std::fs::read(eval_b.join("eval_test.json")).unwrap()
    );

    // A checkpoint built from another config is refused.
    let other = dir.join("other.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&cfg).unwrap()).unwrap();
    v["model"]["pose3d"]["pose_hidden"] = serde_json::json!(16);
    std::fs::write(&other, v.to_string()).unwrap();
    let out = egopose(&["eval", "--run", s(&out_dir), "--config", s(&other), "--data-root", s(dataset())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn end_to_end_training_writes_one_combined_checkpoint() {
    let dir = scratch("train_e2e");
    let cfg = tiny_experiment(&dir);
    let out_dir = dir.join("run");
    ok(&egopose(&[
        "train", "--config", s(&cfg), "--strategy", "end2end", "--seed", "4", "--out", s(&out_dir),
        "--data-root", s(dataset()),
    ]));
    let run = out_dir.join("seed_4");
    assert!(run.join("model.ckpt").is_file());
    assert!(!run.join("pose2d.ckpt").exists());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["strategy"], "end2end");
}

#[test]
fn monocular_variant_trains_from_the_left_view() {
    let dir = scratch("train_mono");
    let cfg = tiny_experiment(&dir);
    let out_dir = dir.join("run");
    ok(&egopose(&[
        "train", "--config", s(&cfg), "--variant", "monocular", "--out", s(&out_dir), "--data-root", s(dataset()),
    ]));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("seed_1/report.json")).unwrap()).unwrap();
    assert_eq!(report["variant"], "monocular");
}

#[test]
fn training_reruns_are_identical() {
    let dir = scratch("rerun");
    let cfg = tiny_experiment(&dir);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.join(name);
        ok(&egopose(&["train", "--config", s(&cfg), "--seed", "9", "--out", s(&out), "--data-root", s(dataset())]));
        files.push(
            ["pose2d.ckpt", "pose3d.ckpt"]
                .iter()
                .map(|f| sha256_hex(&std::fs::read(out.join("seed_9").join(f)).unwrap()))
                .collect::<Vec<_>>(),
        );
        let report = egopose_train::RunReport::load(&out.join("seed_9/report.json")).unwrap();
        files.push(vec![report.checksum()]);
    }
    assert_eq!(files[0], files[2]);
    assert_eq!(files[1], files[3]);
}

#[test]
fn oracle_eval_is_zero_with_one_row_per_category() {
    let root = scratch("oracle");
    let gen_cfg = root.join("gen.json");
    std::fs::write(&gen_cfg, r#"{"split_ratios": [0.0, 0.0, 1.0], "duration_s": 0.2}"#).unwrap();
    ok(&egopose(&["gen", "--config", s(&gen_cfg), "--motions", "30", "--out", s(&root)]));
    let out = ok(&egopose(&["eval", "--oracle", "--by-category", "--data-root", s(&root), "--out", s(&root)]));
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 31, "{out}");
    assert!(rows.last().unwrap().starts_with("overall"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("oracle_test.json")).unwrap()).unwrap();
    assert_eq!(report["per_category"].as_array().unwrap().len(), 30);
    for row in report["per_category"].as_array().unwrap().iter().chain([&report["overall"]]) {
        assert!(row["mpjpe"]["mean"].as_f64().unwrap().abs() < 1e-9);
        assert!(row["pa_mpjpe"]["mean"].as_f64().unwrap().abs() < 1e-6);
    }
}

#[test]
fn stats_reports_distributions_and_writes_plots() {
    let out = scratch("stats");
    let text = ok(&egopose(&["stats", "--data-root", s(dataset()), "--out", s(&out)]));
    assert!(text.contains("head") && text.contains("left_foot"), "{text}");
    assert!(out.join("head_scatter.png").is_file());
    assert!(out.join("left_foot_scatter.png").is_file());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(report["frames"], 60);

    let empty = scratch("stats_empty");
    assert_eq!(egopose(&["stats", "--data-root", s(&empty)]).status.code(), Some(2));
}

#[test]
fn spawn_places_separated_characters_deterministically() {
    let args = ["spawn", "--seed", "3", "--groups", "4", "--min-separation", "150"];
    let a = ok(&egopose(&args));
    assert_eq!(a, ok(&egopose(&args)));
    let groups: serde_json::Value = serde_json::from_str(&a).unwrap();
    for g in groups.as_array().unwrap() {
        let pts: Vec<(f64, f64)> = g["placements"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| (p["position"][0].as_f64().unwrap(), p["position"][1].as_f64().unwrap()))
            .collect();
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                assert!((p.0 - q.0).hypot(p.1 - q.1) >= 150.0);
            }
        }
    }
    let bad = egopose(&["spawn", "--min-separation", "5000", "--neighbor-radius", "100"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn ablate_runs_a_one_cell_grid() {
    let dir = scratch("ablate");
    let cfg = tiny_experiment(&dir);
    let out_dir = dir.join("grid");
    let text = ok(&egopose(&[
        "ablate", "--config", s(&cfg), "--backbones", "18", "--variants", "stereo-shared", "--strategies",
        "separate", "--sharing", "true", "--out", s(&out_dir), "--data-root", s(dataset()),
    ]));
    assert!(text.contains("stereo-shared"), "{text}");
    assert!(text.contains(" (0.00)"), "{text}");
    let results: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("ablation.json")).unwrap()).unwrap();
    let cells = results.as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["reports"].as_array().unwrap().len(), 1);
}
