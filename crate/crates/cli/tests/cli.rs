use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use obbkit::io::{write_tensor, Tensor};
use tempfile::TempDir;

fn obbkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obbkit"))
        .args(args)
        .output()
        .expect("spawn obbkit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn iou_identical_quads() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.txt", "0 0 4 0 4 2 0 2\n10 10 12 11 11 13 9 12\n");
    let o = obbkit(&["iou", "--quads", s(&a), s(&a)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1.000000\n1.000000\n");
}

#[test]
fn iou_rotated_square() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.txt", "0 0 1 0 1 1 0 1\n");
    let h = 0.5 * std::f64::consts::SQRT_2;
    let b = write(
        dir.path(),
        "b.txt",
        &format!("0.5 {} {} 0.5 0.5 {} {} 0.5\n", 0.5 - h, 0.5 + h, 0.5 + h, 0.5 - h),
    );
    let o = obbkit(&["iou", "--quads", s(&a), s(&b)]);
    assert_eq!(stdout(&o), "0.707107\n");
}

#[test]
fn iou_hboxes() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.txt", "1 1 2 2\n");
    let b = write(dir.path(), "b.txt", "2 1 2 2\n");
    let o = obbkit(&["iou", "--hboxes", s(&a), s(&b)]);
    assert_eq!(stdout(&o), format!("{:.6}\n", 1.0 / 3.0));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.txt", "0 0 4 0 4 2 0 2\n");
    let bad = write(dir.path(), "bad.txt", "0 0 4 0 4 2 0\n");
    assert_eq!(obbkit(&["iou", "--quads", s(&a)]).status.code(), Some(2));
    assert_eq!(obbkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(obbkit(&["nms", "--dets", s(&a), "--iou", "1.5"]).status.code(), Some(2));
    let o = obbkit(&["iou", "--quads", s(&a), s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    let missing = dir.path().join("missing.txt");
    assert_eq!(obbkit(&["iou", "--quads", s(&a), s(&missing)]).status.code(), Some(1));
    assert_eq!(obbkit(&["tile", "--width", "10", "--height", "10", "--stride", "2000"]).status.code(), Some(2));
}

#[test]
fn help_lists_defaults() {
    for (cmd, needles) in [
        ("proposals", &["[default: 0.8]", "[default: 1000]", "[default: 2000]"][..]),
        ("postprocess", &["[default: 0.05]", "[default: 0.1]"][..]),
        ("tile", &["[default: 1024]", "[default: 824]"][..]),
        ("roialign", &["[default: 7]", "[default: 2]"][..]),
    ] {
        let o = obbkit(&[cmd, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        for n in needles {
            assert!(text.contains(n), "{cmd} help lacks {n}");
        }
    }
}

#[test]
fn roialign_constant_tensor() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("f.obbt");
    write_tensor(&Tensor::new(vec![1, 32, 40], vec![3.5; 32 * 40]).unwrap(), &feat).unwrap();
    let o = obbkit(&["roialign", "--feat", s(&feat), "--roi", "25 12 8 4 0", "--m", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 49);
    assert!(out.lines().all(|l| l == "3.500000"));
}

#[test]
fn roialign_rect_projection_and_channels() {
    let dir = TempDir::new().unwrap();
    let feat = dir.path().join("f.obbt");
    let mut data = vec![1.0f32; 32 * 40];
    data.extend(vec![-2.0f32; 32 * 40]);
    write_tensor(&Tensor::new(vec![2, 32, 40], data).unwrap(), &feat).unwrap();
    let o = obbkit(&[
        "roialign", "--feat", s(&feat), "--rect", "100 48 32 16 -0.3", "--stride", "4", "--m", "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 9);
    assert!(out.lines().all(|l| l == "1.000000 -2.000000"));
}

#[test]
fn decode_then_encode_roundtrip() {
    let dir = TempDir::new().unwrap();
    let anchors = write(dir.path(), "anc.txt", "50 50 32 16\n10 20 8 8\n");
    let deltas = write(dir.path(), "d.txt", "0.1 -0.2 0.3 0.1 0.2 -0.1\n0 0 0 0 0 0\n");
    let o = obbkit(&["decode", "--anchors", s(&anchors), "--deltas", s(&deltas)]);
    assert!(o.status.success());
    let boxes = write(dir.path(), "b.txt", &stdout(&o));
    let o = obbkit(&["encode", "--anchors", s(&anchors), "--boxes", s(&boxes)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let back: Vec<f64> = stdout(&o).split_whitespace().map(|t| t.parse().unwrap()).collect();
    let want = [0.1, -0.2, 0.3, 0.1, 0.2, -0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    for (b, w) in back.iter().zip(want) {
        assert!((b - w).abs() < 1e-5, "{back:?}");
    }
    let o = obbkit(&["decode", "--anchors", s(&anchors), "--deltas", s(&deltas), "--vertices"]);
    assert_eq!(stdout(&o).lines().nth(1).unwrap(), "10.000000 16.000000 14.000000 20.000000 10.000000 24.000000 6.000000 20.000000");
}

#[test]
fn nms_and_postprocess() {
    let dir = TempDir::new().unwrap();
    let dets = write(
        dir.path(),
        "d.txt",
        "car 0.9 0 0 10 0 10 10 0 10\n\
         car 0.8 1 0 11 0 11 10 1 10\n\
         ship 0.7 1 0 11 0 11 10 1 10\n\
         car 0.01 50 50 60 50 60 60 50 60\n",
    );
    let o = obbkit(&["nms", "--dets", s(&dets), "--iou", "0.5"]);
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = obbkit(&["nms", "--dets", s(&dets), "--iou", "0.5", "--per-class"]);
    assert_eq!(stdout(&o).lines().count(), 3);
    let o = obbkit(&["postprocess", "--dets", s(&dets)]);
    assert_eq!(
        stdout(&o),
        "car 0.900000 0.000000 0.000000 10.000000 0.000000 10.000000 10.000000 0.000000 10.000000\n\
         ship 0.700000 1.000000 0.000000 11.000000 0.000000 11.000000 10.000000 1.000000 10.000000\n"
    );
}

#[test]
fn proposals_select_and_recall() {
    let dir = TempDir::new().unwrap();
    let input = write(
        dir.path(),
        "p.txt",
        "0 0.9 50 50 20 10 0 0\n\
         0 0.8 50 50 20 10 0 0\n\
         1 0.7 200 200 40 20 5 -2\n",
    );
    let o = obbkit(&["proposals", "--input", s(&input)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let props = stdout(&o);
    assert_eq!(props.lines().count(), 2);
    assert!(props.starts_with("proposal 0.900000 "));
    let pfile = write(dir.path(), "props.txt", &props);
    let gts = write(
        dir.path(),
        "g.txt",
        "40 45 60 45 60 55 40 55 car 0\n500 500 510 500 510 510 500 510 car 0\n",
    );
    let o = obbkit(&["eval-recall", "--proposals", s(&pfile), "--gts", s(&gts), "--k", "1,2"]);
    assert_eq!(stdout(&o), "recall@1 0.500000\nrecall@2 0.500000\n");
}

#[test]
fn eval_map_perfect_detections() {
    let dir = TempDir::new().unwrap();
    let gts = write(
        dir.path(),
        "g.txt",
        "imagesource:synthetic\ngsd:0.5\n\
         0 0 10 0 10 5 0 5 plane 0\n\
         20 20 30 22 28 32 18 30 ship 0\n\
         50 50 60 50 60 60 50 60 ship 1\n",
    );
    let dets = write(
        dir.path(),
        "d.txt",
        "plane 0.9 0 0 10 0 10 5 0 5\nship 0.8 20 20 30 22 28 32 18 30\n",
    );
    for metric in ["voc07", "voc12"] {
        let o = obbkit(&["eval-map", "--dets", s(&dets), "--gts", s(&gts), "--metric", metric]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o), "plane 1.000000\nship 1.000000\nmAP 1.000000\n");
    }
    let o = obbkit(&[
        "eval-map", "--dets", s(&dets), "--gts", s(&gts), "--classes", "plane,ship,harbor",
    ]);
    assert_eq!(stdout(&o), "plane 1.000000\nship 1.000000\nharbor n/a\nmAP 1.000000\n");
    let o = obbkit(&["eval-map", "--dets", s(&dets), "--gts", s(&gts), "--classes", "plane"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tile_split_and_merge() {
    let dir = TempDir::new().unwrap();
    let ann = write(
        dir.path(),
        "ann.txt",
        "100 100 140 100 140 120 100 120 car 0\n\
         1500 900 1540 900 1540 920 1500 920 ship 1\n",
    );
    let tiles = dir.path().join("tiles");
    let o = obbkit(&[
        "tile", "--width", "2048", "--height", "1024", "--annotations", s(&ann), "--out-dir", s(&tiles),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "0 0\n824 0\n1024 0\n");
    let t0 = fs::read_to_string(tiles.join("0_0.txt")).unwrap();
    assert_eq!(t0.lines().count(), 1);
    let t2 = fs::read_to_string(tiles.join("1024_0.txt")).unwrap();
    assert!(t2.starts_with("476.000000 900.000000 "));
    assert!(t2.trim_end().ends_with("ship 1"));

    // the same object seen by two overlapping patches
    let a = write(dir.path(), "a.txt", "car 0.9 900 10 940 10 940 30 900 30\n");
    let b = write(dir.path(), "b.txt", "car 0.8 76 10 116 10 116 30 76 30\n");
    let out = dir.path().join("merged.txt");
    let o = obbkit(&[
        "merge", "--inputs", s(&a), s(&b), "--offsets", "0,0", "824,0", "--out", s(&out),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1);
    assert_eq!(obbkit(&["merge", "--inputs", s(&a), s(&b), "--offsets", "0,0"]).status.code(), Some(2));
}

#[test]
fn thread_override_keeps_output() {
    let dir = TempDir::new().unwrap();
    let gts = write(dir.path(), "g.txt", "0 0 10 0 10 5 0 5 plane 0\n");
    let dets = write(dir.path(), "d.txt", "plane 0.9 0 0 10 0 10 5 0 5\nplane 0.5 0 0 9 0 9 5 0 5\n");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_obbkit"))
            .env("OBB_THREADS", threads)
            .args(["eval-map", "--dets", s(&dets), "--gts", s(&gts)])
            .output()
            .unwrap()
    };
    let one = run("1");
    assert_eq!(stdout(&one), stdout(&run("0")));
    assert_eq!(run("many").status.code(), Some(2));
}
