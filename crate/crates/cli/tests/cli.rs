use std::path::Path;
use std::process::{Command, Output};

use homing_bench::manifest::sha256_hex;

fn bench(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homing-bench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HOMING_BENCH_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["presets"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for (name, _, _) in homing_bench::config::PRESETS {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn missing_model_exits_3_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["eval", "--preset", "ci-reduced"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let expected = dir.path().join("model.bin");
    assert!(stderr(&o).contains(&expected.display().to_string()), "{}", stderr(&o));

    let o = bench(&["stream", "--preset", "ci-reduced", "--override", "stream.model=\"/nowhere/net.bin\""], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/nowhere/net.bin"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let cases: Vec<Vec<String>> = vec![
        vec!["train".into(), "--preset".into(), "no-such-preset".into()],
        vec!["train".into(), "--config".into(), dir.path().join("absent.toml").display().to_string()],
        vec!["train".into(), "--preset".into(), "ci-reduced".into(), "--override".into(), "train.learning_rate=-1".into()],
        vec!["train".into(), "--preset".into(), "ci-reduced".into(), "--override".into(), "dataset.gaze_count=7".into()],
        vec!["train".into(), "--preset".into(), "ci-reduced".into(), "--override".into(), "no_equals_sign".into()],
        vec!["train".into(), "--preset".into(), "ci-reduced".into(), "--override".into(), "train.bogus=1".into()],
        vec!["train".into(), "--config".into(), cfg.display().to_string()],
        vec!["bogus-command".into()],
    ];
    std::fs::write(&cfg, "[train\nlearning_rate = ").unwrap();
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = bench(&refs, &dir.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }

    let o = Command::new(env!("CARGO_BIN_EXE_homing-bench"))
        .args(["world", "--preset", "ci-reduced", "--out"])
        .arg(dir.path())
        .env("HOMING_BENCH_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn world_command_records_hashed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(&["world", "--preset", "ci-reduced", "--seed", "5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(dir.path().join("world.manifest.toml")).unwrap())
        .unwrap();
    assert_eq!(manifest["command"].as_str(), Some("world"));
    assert_eq!(manifest["seed"].as_integer(), Some(5));
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let names: Vec<&str> = artifacts.iter().map(|a| a["path"].as_str().unwrap()).collect();
    for expected in ["config.toml", "world.toml", "nest_catadioptric.pgm", "nest_panorama.pgm", "nest_panorama.toml"] {
        assert!(names.contains(&expected), "{expected} not in {names:?}");
    }
    for a in artifacts {
        let bytes = std::fs::read(dir.path().join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
}

#[test]
fn overrides_are_applied_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(
        &["dataset", "--preset", "ci-reduced", "--override", "dataset.gaze_count=4", "--override", "dataset.pattern=\"grid\""],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("dataset_summary.txt")).unwrap();
    assert!(summary.contains("locations: 99") && summary.contains("examples: 396"), "{summary}");
    let manifest = std::fs::read_to_string(dir.path().join("dataset.manifest.toml")).unwrap();
    assert!(manifest.contains("dataset.gaze_count=4"));
    let csv = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 397);
}

#[test]
fn model_of_another_resolution_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let arch = homing_core::network::Architecture::compact(21, 72);
    let params = homing_core::network::Params::<f64>::init(arch, 0).unwrap();
    homing_core::network::save_params(&params, &dir.path().join("model.bin")).unwrap();
    let o = bench(&["eval", "--preset", "ci-reduced"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("21x72"));
}

#[test]
fn non_finite_model_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let layout = homing_core::omni::PanoramaLayout::REDUCED;
    let mut params =
        homing_core::network::Params::<f64>::init(homing_core::network::Architecture::for_layout(&layout), 0).unwrap();
    params.as_mut_slice()[3] = f64::NAN;
    homing_core::network::save_params(&params, &dir.path().join("model.bin")).unwrap();
    let o = bench(&["eval", "--preset", "ci-reduced"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn reduced_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for cmd in ["world", "dataset", "train", "eval", "stream", "gradcam"] {
        let o = bench(&[cmd, "--preset", "ci-reduced"], out);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(out.join(format!("{cmd}.manifest.toml")).exists());
    }
    let train = std::fs::read_to_string(out.join("train_summary.txt")).unwrap();
    assert!(train.contains("examples: 36000"), "{train}");
    let err: f64 = train
        .lines()
        .find_map(|l| l.strip_prefix("training_error_deg: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 60.0, "training error {err}");

    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().next(), Some("x,y,pred_x,pred_y,err_deg,confidence"));
    assert!(out.join("eval_quiver.svg").exists());
    for i in 0..4 {
        assert!(out.join(format!("stream_{i:02}.csv")).exists());
    }
    let rows = std::fs::read_to_string(out.join("gradcam_rows.csv")).unwrap();
    assert!(rows.lines().count() > 2);
}

#[test]
fn paper_figure_5b_preset_flies_missions() {
    let dir = tempfile::tempdir().unwrap();
    let o = bench(
        &[
            "home", "--preset", "paper-figure-5b",
            "--override", "imaging=\"reduced\"",
            "--override", "mission.outbound_count=3",
            "--override", "mission.max_homing_steps=80",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.contains("runs: 3"), "{report}");
    let summary = std::fs::read_to_string(dir.path().join("homing_summary.txt")).unwrap();
    assert!(summary.contains("successful_runs_respect_straight_line_bound: true"), "{summary}");
    for k in 0..3 {
        let csv = std::fs::read_to_string(dir.path().join(format!("run_seed1_start{k:02}.csv"))).unwrap();
        for phase in ["learning", "outbound", "inbound", "homing"] {
            assert!(csv.lines().any(|l| l.starts_with(phase)), "start {k} lacks {phase}");
        }
    }
    assert!(dir.path().join("missions.svg").exists());
}
