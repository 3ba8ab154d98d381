use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crowd_enhance::baselines::{self, Method};
use crowd_enhance::synth::signals::{generate, SignalKind};
use crowd_enhance::{load_wav, save_wav, AudioClip, StftParams, WavFormat};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crowd-enhance"));
    cmd.env_remove("CROWD_ENHANCE_WORKERS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn mix(dir: &Path, seed: &str, k: &str) {
    ok(&[
        "mix", "--out-dir", s(dir), "--k", k, "--snr-db", "0", "--seed", seed, "--duration", "2",
    ]);
}

fn channels(dir: &Path, k: usize) -> Vec<PathBuf> {
    (0..k).map(|i| dir.join(format!("ch{i}.wav"))).collect()
}

#[test]
fn help_lists_defaults() {
    let out = ok(&["enhance", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["--lambda1", "1.15", "--lambda2", "0.01", "--gamma", "1.1", "2048", "512", "--skip-align"] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
    let top = String::from_utf8(ok(&["--help"]).stdout).unwrap();
    for sub in ["enhance", "align", "mix", "baseline", "eval", "sweep"] {
        assert!(top.contains(sub));
    }
}

#[test]
fn mix_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    mix(a.path(), "5", "4");
    mix(b.path(), "5", "4");
    for name in ["source.wav", "ch0.wav", "ch3.wav", "manifest.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["k"], 4);
    assert_eq!(manifest["gains"].as_array().unwrap().len(), 4);

    let c = tempfile::tempdir().unwrap();
    mix(c.path(), "6", "4");
    assert_ne!(
        std::fs::read(a.path().join("ch0.wav")).unwrap(),
        std::fs::read(c.path().join("ch0.wav")).unwrap()
    );
}

#[test]
fn mix_rejects_noise_that_cannot_differ() {
    let dir = tempfile::tempdir().unwrap();
    let noise = dir.path().join("n.wav");
    save_wav(&noise, &AudioClip::new(vec![0.25], 16_000, "n").unwrap(), WavFormat::Float32).unwrap();
    let out = run(&["mix", "--out-dir", s(dir.path()), "--noise", s(&noise), "--k", "2", "--duration", "0.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("identical noise"));
}

#[test]
fn eval_of_self_is_capped() {
    let dir = tempfile::tempdir().unwrap();
    mix(dir.path(), "1", "2");
    let src = dir.path().join("source.wav");
    let out = ok(&["eval", "--ref", s(&src), "--est", s(&src)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metric"], "si_snr");
    assert_eq!(v["value"], 100.0);
    let noisy = ok(&["eval", "--ref", s(&src), "--est", s(&dir.path().join("ch0.wav")), "--metric", "snr"]);
    let v: serde_json::Value = serde_json::from_slice(&noisy.stdout).unwrap();
    assert_eq!(v["metric"], "snr");
    assert!(v["value"].as_f64().unwrap() < 20.0);
}

#[test]
fn baseline_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    mix(dir.path(), "2", "3");
    let inputs = channels(dir.path(), 3);
    let out = dir.path().join("maxelim.wav");
    let mut args = vec!["baseline", "--method", "max-elim", "-o", s(&out)];
    args.extend(inputs.iter().map(|p| s(p)));
    ok(&args);

    let clips: Vec<AudioClip> = inputs.iter().map(|p| load_wav(p).unwrap()).collect();
    let views: Vec<&[f64]> = clips.iter().map(|c| c.samples()).collect();
    let expected = baselines::run_samples(Method::MaxElim, &views, StftParams::default()).unwrap();
    let got = load_wav(&out).unwrap();
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.samples().iter().zip(&expected) {
        // float32 storage
        assert!((g - e).abs() <= 1e-6 * e.abs().max(1.0));
    }
}

#[test]
fn enhance_pre_aligned_channels() {
    let dir = tempfile::tempdir().unwrap();
    mix(dir.path(), "3", "5");
    let out = dir.path().join("out.wav");
    let masks = dir.path().join("masks");
    let mut args = vec!["enhance", "--skip-align", "-o", s(&out), "--dump-masks", s(&masks)];
    let inputs = channels(dir.path(), 5);
    args.extend(inputs.iter().map(|p| s(p)));
    let res = ok(&args);
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["clips"].as_array().unwrap().len(), 5);
    assert_eq!(std::fs::read_dir(&masks).unwrap().count(), 5);

    let src = dir.path().join("source.wav");
    let score = |p: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&ok(&["eval", "--ref", s(&src), "--est", s(p)]).stdout).unwrap();
        v["value"].as_f64().unwrap()
    };
    assert!(score(&out) > score(&inputs[0]));
}

#[test]
fn single_input_passes_through_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    mix(dir.path(), "4", "1");
    let out = dir.path().join("out.wav");
    let res = ok(&["enhance", "-o", s(&out), s(&dir.path().join("ch0.wav"))]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    assert_eq!(load_wav(&out).unwrap(), load_wav(dir.path().join("ch0.wav")).unwrap().with_label("out"));
}

#[test]
fn unrelated_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    save_wav(&a, &generate(SignalKind::Speech, 64_000, 16_000, 1), WavFormat::Float32).unwrap();
    save_wav(&b, &generate(SignalKind::White, 64_000, 16_000, 2), WavFormat::Float32).unwrap();
    let out = run(&["enhance", "-o", s(&dir.path().join("o.wav")), s(&a), s(&b)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no common content"));
}

#[test]
fn align_reports_shift() {
    let dir = tempfile::tempdir().unwrap();
    let master = generate(SignalKind::Speech, 12 * 16_000, 16_000, 9);
    let a = AudioClip::new(master.samples()[..8 * 16_000].to_vec(), 16_000, "a").unwrap();
    let b = AudioClip::new(master.samples()[32_000..10 * 16_000].to_vec(), 16_000, "b").unwrap();
    let (pa, pb) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    save_wav(&pa, &a, WavFormat::Float32).unwrap();
    save_wav(&pb, &b, WavFormat::Float32).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&ok(&["align", s(&pa), s(&pb)]).stdout).unwrap();
    let clips = v["clips"].as_array().unwrap();
    let off = |i: usize| clips[i]["offset_seconds"].as_f64().unwrap();
    assert!(((off(1) - off(0)) - 2.0).abs() <= 512.0 / 16_000.0, "{v}");
}

#[test]
fn sweep_rows_and_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let conf = fixture("small_sweep.conf");
    ok(&["sweep", s(&conf), "--out-dir", s(a.path()), "--workers", "1"]);
    let res = bin()
        .args(["sweep", s(&conf), "--out-dir", s(b.path())])
        .env("CROWD_ENHANCE_WORKERS", "3")
        .output()
        .unwrap();
    assert!(res.status.success());
    let csv = std::fs::read_to_string(a.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,snr_db,k,trial,si_snr");
    assert_eq!(lines.len(), 1 + 2 * 2 * 4);
    assert_eq!(csv, std::fs::read_to_string(b.path().join("results.csv")).unwrap());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 8);

    let short = tempfile::tempdir().unwrap();
    ok(&["sweep", s(&conf), "--out-dir", s(short.path()), "--trials", "1"]);
    let n = std::fs::read_to_string(short.path().join("results.csv")).unwrap().lines().count();
    assert_eq!(n, 1 + 2 * 4);
}

#[test]
fn sweep_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "trials = 2\nwindow = hann\n").unwrap();
    let out = run(&["sweep", s(&conf), "--out-dir", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `window`"));
}
