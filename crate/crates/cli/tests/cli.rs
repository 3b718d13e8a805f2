use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::Rgb;
use pointbox_core::dataset::{frame_file_name, parse_detection_label};
use pointbox_core::synth::{render, SceneSpec, Target};
use pointbox_core::{pic_box, PicConfig, TrajectoryPoint};
use tempfile::TempDir;

const SUBCOMMANDS: [&str; 7] = ["annotate", "evaluate", "build", "render", "masks", "synth", "mock-server"];

fn pointbox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointbox"))
        .args(args)
        .env_remove("POINTBOX_W0")
        .env_remove("POINTBOX_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// frames/, truth/ and trajectory.csv for a dark square drifting right.
fn sequence(dir: &Path, frames: u64, size: u32) -> PathBuf {
    let seq = dir.join("seq");
    fs::create_dir_all(seq.join("frames")).unwrap();
    fs::create_dir_all(seq.join("truth")).unwrap();
    let mut csv = String::from("frame,x,y\n");
    for i in 0..frames {
        let cx = 40.0 + 3.0 * i as f64;
        let spec = SceneSpec::blank(120, 90, 210).with_target(Target::rect(cx, 45.0, size, size, 30));
        let (frame, truth) = render(&spec).unwrap();
        let stem = frame_file_name(i);
        frame.save_png(seq.join("frames").join(format!("{stem}.png"))).unwrap();
        let b = truth[0];
        let line = format!(
            "0 {:.6} {:.6} {:.6} {:.6}\n",
            (b.left as f64 + b.width as f64 / 2.0) / 120.0,
            (b.top as f64 + b.height as f64 / 2.0) / 90.0,
            b.width as f64 / 120.0,
            b.height as f64 / 90.0
        );
        fs::write(seq.join("truth").join(format!("{stem}.txt")), line).unwrap();
        csv.push_str(&format!("{i},{cx},45\n"));
    }
    fs::write(seq.join("trajectory.csv"), csv).unwrap();
    seq
}

fn annotate(seq: &Path, out: &Path, extra: &[&str]) -> Output {
    let (frames, trajectory) = (seq.join("frames"), seq.join("trajectory.csv"));
    let mut args = vec!["annotate", "--frames", s(&frames), "--trajectory", s(&trajectory), "--out", s(out)];
    args.extend_from_slice(extra);
    pointbox(&args)
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn help_documents_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("annotate", &["--w0", "--delta", "--epsilon", "--max-iters", "--return-expanded", "--stride", "--jobs", "--out", "--dump-traces"]),
        ("evaluate", &["--w0", "--threshold", "--polarity", "--fixed-size", "--methods", "--out"]),
        ("build", &["--plan", "--stride", "--endpoint", "--mock", "--jobs", "--out", "--w0"]),
        ("render", &["--labels", "--masks", "--traces", "--out"]),
        ("masks", &["--endpoint", "--mock", "--jobs", "--out"]),
        ("synth", &["--spec", "--sequence", "--out"]),
        ("mock-server", &["--listen", "--fail-first"]),
    ];
    for (sub, flags) in expected {
        let o = pointbox(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub} --help");
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
        assert!(text.contains("--config"), "{sub} --help lacks --config");
    }
    assert_eq!(SUBCOMMANDS.len(), expected.len());
    let top = pointbox(&["--help"]);
    assert_eq!(code(&top), 0);
    for sub in SUBCOMMANDS {
        assert!(String::from_utf8_lossy(&top.stdout).contains(sub));
    }
}

#[test]
fn usage_errors_are_input_errors() {
    assert_eq!(code(&pointbox(&["annotate", "--bogus"])), 1);
    assert_eq!(code(&pointbox(&[])), 1);
}

#[test]
fn three_frames_three_labels() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 3, 10);
    let out = tmp.path().join("out");
    let o = annotate(&seq, &out, &["--dump-traces"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut labels: Vec<_> = fs::read_dir(out.join("labels")).unwrap().map(|e| e.unwrap().file_name()).collect();
    labels.sort();
    assert_eq!(labels, ["frame_000000.txt", "frame_000001.txt", "frame_000002.txt"]);
    assert_eq!(fs::read_dir(out.join("traces")).unwrap().count(), 3);
}

#[test]
fn labels_match_library_in_both_convergence_modes() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 1, 10);
    let frame = pointbox_core::GrayFrame::load(seq.join("frames/frame_000000.png")).unwrap();
    let point = TrajectoryPoint::new(40.0, 45.0, 0);

    let mut outputs = Vec::new();
    for (flag, expanded) in [(None, false), (Some("--return-expanded"), true)] {
        let out = tmp.path().join(format!("out-{expanded}"));
        let extra: Vec<&str> = flag.into_iter().collect();
        assert_eq!(code(&annotate(&seq, &out, &extra)), 0);
        let parsed = parse_detection_label(&read(out.join("labels/frame_000000.txt"))).unwrap();
        let config = PicConfig { return_expanded: expanded, ..PicConfig::default() };
        let (want, _) = pic_box(&frame, &point, &config).unwrap();
        let got = pointbox_core::dataset::denormalize(&parsed[0], 120, 90, want.source).unwrap();
        assert_eq!(got, want);
        outputs.push(got);
    }
    assert_ne!(outputs[0], outputs[1]);
}

#[test]
fn defaults_are_8_5_4() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 2, 10);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&annotate(&seq, &a, &["--dump-traces"])), 0);
    assert_eq!(code(&annotate(&seq, &b, &["--w0", "8", "--delta", "5", "--epsilon", "4"])), 0);
    assert_eq!(read(a.join("labels/frame_000001.txt")), read(b.join("labels/frame_000001.txt")));
    let dump: serde_json::Value = serde_json::from_str(&read(a.join("traces/frame_000000.json"))).unwrap();
    assert_eq!(dump["config"]["w0"], 8);
    assert_eq!(dump["config"]["delta"], 5);
    assert_eq!(dump["config"]["epsilon"], 4.0);
}

#[test]
fn flags_beat_env_config_and_defaults() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 1, 10);
    let config = tmp.path().join("pointbox.toml");
    fs::write(&config, "w0 = 16\ndelta = 3\n").unwrap();
    let w0_of = |out: &Path| -> serde_json::Value {
        let dump: serde_json::Value = serde_json::from_str(&read(out.join("traces/frame_000000.json"))).unwrap();
        dump["config"].clone()
    };
    let (frames, trajectory) = (seq.join("frames"), seq.join("trajectory.csv"));
    let base = ["annotate", "--frames", s(&frames), "--trajectory", s(&trajectory), "--dump-traces"];

    let from_file = tmp.path().join("f");
    let mut args = vec!["--config", s(&config)];
    args.extend_from_slice(&base);
    args.extend_from_slice(&["--out", s(&from_file)]);
    assert_eq!(code(&pointbox(&args)), 0);
    assert_eq!(w0_of(&from_file)["w0"], 16);
    assert_eq!(w0_of(&from_file)["delta"], 3);

    let from_env = tmp.path().join("e");
    let o = Command::new(env!("CARGO_BIN_EXE_pointbox"))
        .args(["--config", s(&config)])
        .args(base)
        .args(["--out", s(&from_env)])
        .env("POINTBOX_W0", "4")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(w0_of(&from_env)["w0"], 4);
    assert_eq!(w0_of(&from_env)["delta"], 3);

    let from_flag = tmp.path().join("g");
    let o = Command::new(env!("CARGO_BIN_EXE_pointbox"))
        .args(["--config", s(&config)])
        .args(base)
        .args(["--out", s(&from_flag), "--w0", "12"])
        .env("POINTBOX_W0", "4")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(w0_of(&from_flag)["w0"], 12);

    fs::write(&config, "w_zero = 1\n").unwrap();
    let mut args = vec!["--config", s(&config)];
    args.extend_from_slice(&base);
    let rejected = tmp.path().join("h");
    args.extend_from_slice(&["--out", s(&rejected)]);
    assert_eq!(code(&pointbox(&args)), 1);
}

#[test]
fn missing_frame_is_itemized_failure() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 3, 10);
    fs::remove_file(seq.join("frames/frame_000001.png")).unwrap();
    let out = tmp.path().join("out");
    let o = annotate(&seq, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame_000001"));
    assert_eq!(fs::read_dir(out.join("labels")).unwrap().count(), 2);
}

#[test]
fn malformed_trajectory_is_input_error() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 1, 10);
    fs::write(seq.join("trajectory.csv"), "frame,x,y\n0,12,oops\n").unwrap();
    let o = annotate(&seq, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2"));
}

fn evaluate(seq: &Path, out: &Path, methods: &str) -> Output {
    pointbox(&[
        "evaluate",
        "--frames",
        s(&seq.join("frames")),
        "--trajectory",
        s(&seq.join("trajectory.csv")),
        "--truth",
        s(&seq.join("truth")),
        "--methods",
        methods,
        "--out",
        s(out),
    ])
}

#[test]
fn evaluate_reports_three_methods() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 4, 14);
    let out = tmp.path().join("eval");
    let o = evaluate(&seq, &out, "pic,fixed,threshold");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let summary: serde_json::Value = serde_json::from_str(&read(out.join("summary.json"))).unwrap();
    let rows = summary["methods"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let mean = |name: &str| rows.iter().find(|r| r["method"] == name).unwrap()["mean_iou"].as_f64().unwrap();
    assert_eq!(mean("threshold"), 1.0);
    assert!(mean("fixed") < 1.0);
    assert_eq!(read(out.join("records.csv")).lines().count(), 1 + 3 * 4);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("pic") && table.contains("fixed") && table.contains("threshold"));
}

#[test]
fn evaluate_rejects_misaligned_truth() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 2, 10);
    fs::write(seq.join("truth/frame_000001.txt"), "0 0.5 0.5 0.1 0.1\n0 0.2 0.2 0.1 0.1\n").unwrap();
    let out = tmp.path().join("eval");
    let o = evaluate(&seq, &out, "pic");
    assert_eq!(code(&o), 1);
    assert!(!out.join("summary.json").exists());
    assert_eq!(code(&evaluate(&seq, &tmp.path().join("e2"), "pic,magic")), 1);
}

fn synthetic_root(dir: &Path) -> PathBuf {
    let root = dir.join("root");
    for (d, c) in [(1, 0), (1, 1), (2, 0), (5, 0)] {
        let cell = root.join(format!("d{d}/c{c}"));
        fs::create_dir_all(cell.join("frames")).unwrap();
        let mut csv = String::from("frame,x,y\n");
        for i in 0..25u64 {
            let cx = 30.0 + i as f64;
            let spec = SceneSpec::blank(96, 64, 190).with_target(Target::rect(cx, 30.0, 8, 6, 20));
            let (frame, _) = render(&spec).unwrap();
            frame.save_png(cell.join("frames").join(format!("{}.png", frame_file_name(i)))).unwrap();
            csv.push_str(&format!("{i},{cx},30\n"));
        }
        fs::write(cell.join("trajectory.csv"), csv).unwrap();
    }
    root
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn build_is_repeatable_and_follows_plan() {
    let tmp = TempDir::new().unwrap();
    let root = synthetic_root(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = pointbox(&["build", "--root", s(&root), "--out", s(out), "--jobs", jobs]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(tree(&a), tree(&b));
    // Stride 10 over frames 0..25 keeps 0, 10, 20.
    let mut train: Vec<_> = fs::read_dir(a.join("labels/train")).unwrap().map(|e| e.unwrap().file_name()).collect();
    train.sort();
    assert_eq!(train, ["d1_c0_frame_000000.txt", "d1_c0_frame_000010.txt", "d1_c0_frame_000020.txt"]);
    assert_eq!(fs::read_dir(a.join("labels/valid")).unwrap().count(), 3);
    assert_eq!(fs::read_dir(a.join("labels/test")).unwrap().count(), 3);
    assert!(!a.join("labels-seg").exists());
    let manifest: serde_json::Value = serde_json::from_str(&read(a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["sequences"]["d5/c0"]["images"], 0);
}

#[test]
fn build_with_mock_segmentation_writes_polygons() {
    let tmp = TempDir::new().unwrap();
    let root = synthetic_root(tmp.path());
    let out = tmp.path().join("ds");
    let o = pointbox(&["build", "--root", s(&root), "--out", s(&out), "--stride", "25", "--mock"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let seg = read(out.join("labels-seg/train/d1_c0_frame_000000.txt"));
    assert_eq!(seg.lines().count(), 1);
    assert_eq!(seg.split_whitespace().count(), 1 + 8);
}

#[test]
fn build_with_unreachable_service_fails_with_service_code() {
    let tmp = TempDir::new().unwrap();
    let root = synthetic_root(tmp.path());
    let o = pointbox(&[
        "build",
        "--root",
        s(&root),
        "--out",
        s(&tmp.path().join("ds")),
        "--endpoint",
        "http://127.0.0.1:1/v1/segment",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_labels(dir: &Path, stem: &str, text: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(format!("{stem}.txt")), text).unwrap();
}

#[test]
fn render_draws_box_at_label_coordinates() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 2, 10);
    let labels = tmp.path().join("labels");
    // 20x10 box at (30, 40) on a 120x90 frame.
    write_labels(&labels, "frame_000000", "0 0.333333 0.500000 0.166667 0.111111\n");
    write_labels(&labels, "frame_000001", "");
    let out = tmp.path().join("render");
    let o = pointbox(&["render", "--frames", s(&seq.join("frames")), "--labels", s(&labels), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let img = image::open(out.join("frame_000000.png")).unwrap().to_rgb8();
    let red = Rgb([255, 40, 40]);
    for (x, y) in [(30, 40), (49, 40), (30, 49), (49, 49), (40, 40)] {
        assert_eq!(*img.get_pixel(x, y), red, "({x}, {y})");
    }
    assert_ne!(*img.get_pixel(40, 45), red);
    assert_ne!(*img.get_pixel(50, 40), red);

    assert_eq!(fs::read(out.join("frame_000001.png")).unwrap(), fs::read(seq.join("frames/frame_000001.png")).unwrap());
}

#[test]
fn render_nests_trace_steps() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 1, 10);
    let ann = tmp.path().join("ann");
    assert_eq!(code(&annotate(&seq, &ann, &["--dump-traces"])), 0);
    let out = tmp.path().join("render");
    let o = pointbox(&["render", "--frames", s(&seq.join("frames")), "--traces", s(&ann.join("traces")), "--out", s(&out)]);
    assert_eq!(code(&o), 0);

    let dump: serde_json::Value = serde_json::from_str(&read(ann.join("traces/frame_000000.json"))).unwrap();
    let boxes = dump["points"][0]["trace"]["boxes"].as_array().unwrap();
    assert!(boxes.len() > 2);
    let img = image::open(out.join("frame_000000.png")).unwrap().to_rgb8();
    let source = image::open(seq.join("frames/frame_000000.png")).unwrap().to_rgb8();
    for b in boxes {
        let (l, t) = (b["left"].as_i64().unwrap() as u32, b["top"].as_i64().unwrap() as u32);
        let w = b["width"].as_u64().unwrap() as u32;
        assert_ne!(img.get_pixel(l, t), source.get_pixel(l, t));
        assert_ne!(img.get_pixel(l + w - 1, t), source.get_pixel(l + w - 1, t));
    }
}

#[test]
fn render_without_label_copies_frame() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 1, 10);
    let labels = tmp.path().join("labels");
    fs::create_dir_all(&labels).unwrap();
    let out = tmp.path().join("render");
    let o = pointbox(&["render", "--frames", s(&seq.join("frames")), "--labels", s(&labels), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(out.join("frame_000000.png")).unwrap(), fs::read(seq.join("frames/frame_000000.png")).unwrap());
}

#[test]
fn masks_with_mock_trace_prompt_rects() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 2, 10);
    let labels = tmp.path().join("labels");
    write_labels(&labels, "frame_000000", "0 0.333333 0.500000 0.166667 0.111111\n0 0.500000 0.500000 1.000000 1.000000\n");
    write_labels(&labels, "frame_000001", "");
    let out = tmp.path().join("seg");
    let o = pointbox(&["masks", "--frames", s(&seq.join("frames")), "--labels", s(&labels), "--out", s(&out), "--mock"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let text = read(out.join("frame_000000.txt"));
    let polygons: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    let expect = [[30.0, 40.0, 50.0, 40.0, 50.0, 50.0, 30.0, 50.0], [0.0, 0.0, 120.0, 0.0, 120.0, 90.0, 0.0, 90.0]];
    assert_eq!(polygons.len(), 2);
    for (poly, want) in polygons.iter().zip(expect) {
        let pixels: Vec<f64> = poly.iter().enumerate().map(|(i, v)| v * if i % 2 == 0 { 120.0 } else { 90.0 }).collect();
        assert_eq!(pixels.len(), want.len());
        for (g, w) in pixels.iter().zip(want) {
            assert!((g - w).abs() <= 1.0, "{pixels:?} vs {want:?}");
        }
    }
    assert_eq!(read(out.join("frame_000001.txt")), "");
}

#[test]
fn masks_unreachable_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let seq = sequence(tmp.path(), 1, 10);
    let labels = tmp.path().join("labels");
    write_labels(&labels, "frame_000000", "0 0.5 0.5 0.1 0.1\n");
    let out = tmp.path().join("seg");
    let o = pointbox(&[
        "masks",
        "--frames",
        s(&seq.join("frames")),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "--endpoint",
        "http://127.0.0.1:1/v1/segment",
    ]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
    let o = pointbox(&["masks", "--frames", s(&seq.join("frames")), "--labels", s(&labels), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn synth_writes_scene_and_truth() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("scene.json");
    fs::write(
        &spec,
        r#"{"width": 40, "height": 30, "background": 200,
            "targets": [{"shape": "rect", "center_x": 20, "center_y": 15, "width": 10, "height": 10, "intensity": 50}]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&pointbox(&["synth", "--spec", s(&spec), "--out", s(&out)])), 0);
    let frame = pointbox_core::GrayFrame::load(out.join("scene.png")).unwrap();
    assert_eq!(frame.intensities().iter().filter(|v| **v == 50).count(), 100);
    assert_eq!(read(out.join("scene.txt")), "0 0.500000 0.500000 0.250000 0.333333\n");
}
