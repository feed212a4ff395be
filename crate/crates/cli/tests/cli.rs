use std::path::Path;
use std::process::Command;

use gridfuse_cli::{cmd_eval, cmd_fuse, cmd_synth, CommonArgs, EvalArgs, FuseArgs, SynthArgs};
use gridfuse_core::eval::GroundTruthObject;
use gridfuse_core::io::{write_fused_objects, write_kitti_labels};
use gridfuse_core::synth::KITTI_SAMPLE_CALIB;
use gridfuse_core::{BoundingBox2D, FusedObject, MotionState};

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/scenes/demo.toml");

fn synth_into(dir: &Path) {
    cmd_synth(&SynthArgs {
        spec: DEMO.into(),
        out: dir.to_path_buf(),
        ..SynthArgs::default()
    })
    .unwrap();
}

fn fuse_dataset(dir: &Path, workers: usize) -> gridfuse_cli::RunReport {
    cmd_fuse(&FuseArgs {
        dataset: Some(dir.to_path_buf()),
        output: Some(dir.join(format!("fused-{workers}.jsonl"))),
        workers: Some(workers),
        ..FuseArgs::default()
    })
    .unwrap()
}

fn dynamic_car(conf: f64, x0: f64) -> FusedObject {
    let b = BoundingBox2D::new("Car", conf, x0, 100.0, x0 + 50.0, 150.0).unwrap();
    FusedObject::new("Car", MotionState::Dynamic, (12.0, 0.0), (1.0, 0.0), Some(0.0), 3, 0, false, b, 0)
        .unwrap()
}

#[test]
fn empty_dataset_reports_zero_frames() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("detections.csv"), "").unwrap();
    std::fs::write(d.join("grid.csv"), "").unwrap();
    std::fs::write(d.join("calib.txt"), KITTI_SAMPLE_CALIB).unwrap();
    let report = cmd_fuse(&FuseArgs {
        dataset: Some(d.to_path_buf()),
        ..FuseArgs::default()
    })
    .unwrap();
    assert_eq!((report.frames_processed, report.objects_emitted), (0, 0));
    assert_eq!(std::fs::read_to_string(d.join("fused.jsonl")).unwrap(), "");
}

#[test]
fn malformed_grid_line_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d);
    let grid = d.join("grid.csv");
    let mut text = std::fs::read_to_string(&grid).unwrap();
    text.push_str("0,1.0,abc,0,0,S\n");
    let bad_line = text.lines().count();
    std::fs::write(&grid, text).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_gridfuse"))
        .args(["fuse", "--dataset"])
        .arg(d)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid.csv"), "{stderr}");
    assert!(stderr.contains(&format!("line {bad_line}")), "{stderr}");
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_into(a.path());
    synth_into(b.path());
    for name in ["detections.csv", "grid.csv", "calib.txt", "expected.jsonl", "config.txt", "labels/000003.txt"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn object_behind_camera_is_unprojectable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("behind.toml");
    std::fs::write(
        &spec,
        "seed = 3\nn_frames = 1\n[[objects]]\nclass = \"Truck\"\nmotion = \"static\"\nx = -8.0\ny = 0.0\npoints = 4\n",
    )
    .unwrap();
    let err = cmd_synth(&SynthArgs {
        spec,
        out: dir.path().join("out"),
        ..SynthArgs::default()
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let msg = err.to_string();
    assert!(msg.contains("object 0") && msg.contains("Truck"), "{msg}");
}

#[test]
fn fuse_then_eval_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d);
    let report = fuse_dataset(d, 2);
    let fused = std::fs::read_to_string(d.join("fused-2.jsonl")).unwrap();
    assert_eq!(fused, std::fs::read_to_string(d.join("expected.jsonl")).unwrap());
    assert_eq!(report.objects_emitted, fused.lines().count());

    let out = Command::new(env!("CARGO_BIN_EXE_gridfuse"))
        .arg("eval")
        .arg("--predictions")
        .arg(d.join("fused-2.jsonl"))
        .arg("--labels")
        .arg(d.join("labels"))
        .arg("--output")
        .arg(d.join("metrics.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "1.000000\n");
}

#[test]
fn hand_computed_ap_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let preds = [dynamic_car(0.9, 100.0), dynamic_car(0.8, 600.0), dynamic_car(0.7, 300.0)];
    std::fs::write(d.join("preds.jsonl"), write_fused_objects(&preds)).unwrap();
    let gts = [
        GroundTruthObject::new(0, "dynamicCar", 100.0, 100.0, 150.0, 150.0, None).unwrap(),
        GroundTruthObject::new(0, "dynamicCar", 300.0, 100.0, 350.0, 150.0, None).unwrap(),
    ];
    std::fs::write(d.join("000000.txt"), write_kitti_labels(&gts)).unwrap();
    let outcome = cmd_eval(&EvalArgs {
        predictions: d.join("preds.jsonl"),
        labels: d.join("000000.txt"),
        output: Some(d.join("metrics.jsonl")),
        ..EvalArgs::default()
    })
    .unwrap();
    assert_eq!(outcome.map_line, "0.833333");
    assert!((outcome.report.map - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d);
    let one = fuse_dataset(d, 1);
    let four = fuse_dataset(d, 4);
    assert_eq!(
        std::fs::read(d.join("fused-1.jsonl")).unwrap(),
        std::fs::read(d.join("fused-4.jsonl")).unwrap()
    );
    assert_eq!(
        (one.frames_processed, one.objects_emitted, one.discarded_regions),
        (four.frames_processed, four.objects_emitted, four.discarded_regions)
    );
}

#[test]
fn config_ground_height_is_overridden_by_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d);
    // a wrong ground height moves every projected point; the flag restores it
    std::fs::write(d.join("wrong.conf"), "ground_height = 5.0\n").unwrap();
    let args = |gh: Option<f64>| FuseArgs {
        common: CommonArgs {
            config: Some(d.join("wrong.conf")),
            ground_height: gh,
            ..CommonArgs::default()
        },
        dataset: Some(d.to_path_buf()),
        output: Some(d.join("out.jsonl")),
        ..FuseArgs::default()
    };
    cmd_fuse(&args(Some(-1.73))).unwrap();
    assert_eq!(
        std::fs::read_to_string(d.join("out.jsonl")).unwrap(),
        std::fs::read_to_string(d.join("expected.jsonl")).unwrap()
    );
    cmd_fuse(&args(None)).unwrap();
    assert_ne!(
        std::fs::read_to_string(d.join("out.jsonl")).unwrap(),
        std::fs::read_to_string(d.join("expected.jsonl")).unwrap()
    );
}
