use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dociiw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dociiw")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(out: &Path, seed: &str) -> Output {
    dociiw(&["synth", "--out", p(out), "--seed", seed, "--size", "16", "--samples", "6", "--config", p(&small_config(out))])
}

/// Keeps the validation split small; written next to (not inside) `out`.
fn small_config(out: &Path) -> std::path::PathBuf {
    let path = out.with_extension("toml");
    fs::write(&path, "[synth]\nval_samples = 2\n").unwrap();
    path
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&dociiw(&[])), 2);
    assert_eq!(code(&dociiw(&["no-such-command"])), 2);
    assert_eq!(code(&dociiw(&["synth", "--size", "abc"])), 2);
    assert_eq!(code(&dociiw(&["eval"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[synth]\nsise = 3\n").unwrap();
    let o = dociiw(&["synth", "--config", p(&bad), "--out", p(&dir.path().join("d"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sise"));

    let o = dociiw(&["synth", "--size", "4", "--out", p(&dir.path().join("d"))]);
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_dociiw")).args(["selftest"]).env("DOCIIW_THREADS", "many").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn help_exits_0() {
    let o = dociiw(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["synth", "train-wb", "train-smt", "infer", "eval", "gradcheck", "selftest"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn synth_is_reproducible_and_records_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&synth(&a, "5")), 0);
    assert_eq!(code(&synth(&b, "5")), 0);
    assert_eq!(code(&synth(&c, "6")), 0);
    let read = |d: &Path| fs::read(d.join("manifest.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(read(&a).iter().filter(|b| **b == b'\n').count(), 8);
    let resolved = fs::read_to_string(a.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 5") && resolved.contains("size = 16") && resolved.contains("train_samples = 6"));
}

#[test]
fn missing_manifest_is_a_contract_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = dociiw(&["train-wb", "--manifest", p(&dir.path().join("nothing")), "--out", p(&dir.path().join("run"))]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn selftest_and_gradcheck_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = dociiw(&["selftest", "--out", p(&dir.path().join("s"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failed"));
    let o = dociiw(&["gradcheck", "--out", p(&dir.path().join("g")), "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("g/report.json").exists());
}

#[test]
fn train_infer_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&synth(&data, "1")), 0);
    let (wb, smt) = (dir.path().join("wb"), dir.path().join("smt"));
    let train = |cmd: &str, out: &Path, extra: &[&str]| {
        let mut args = vec![cmd, "--manifest", p(&data), "--out", p(out), "--epochs", "2", "--batch", "2", "--threads", "1"];
        args.extend_from_slice(extra);
        let o = dociiw(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    train("train-wb", &wb, &[]);
    let wb_ckpt = wb.join("final.ckpt");
    assert!(wb_ckpt.exists() && wb.join("log.jsonl").exists() && wb.join("resolved_config.toml").exists());
    train("train-smt", &smt, &[]);
    train("train-smt", &dir.path().join("chained"), &["--wb-checkpoint", p(&wb_ckpt)]);
    let smt_ckpt = smt.join("final.ckpt");

    // 21×13 is not a multiple of the network's 8-pixel stride.
    let png = dir.path().join("odd.png");
    let img = image::RgbImage::from_fn(21, 13, |x, y| image::Rgb([(40 + 9 * x) as u8, (90 + 5 * y) as u8, 120]));
    img.save(&png).unwrap();
    let pfm = data.join("samples/s00000_input.pfm");
    let out = dir.path().join("dec");
    let o = dociiw(&["infer", p(&png), p(&pfm), "--wb-ckpt", p(&wb_ckpt), "--smt-ckpt", p(&smt_ckpt), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["odd/index.json", "odd/reflectance.pfm", "odd_preview.png", "s00000_input/index.json", "s00000_input_preview.png"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let preview = image::open(out.join("odd_preview.png")).unwrap();
    assert_eq!((preview.width(), preview.height()), (5 * 21 + 8, 13));

    let o = dociiw(&["infer", p(&png), "--wb-ckpt", p(&smt_ckpt), "--smt-ckpt", p(&smt_ckpt), "--out", p(&out)]);
    assert_eq!(code(&o), 1);

    let ev = dir.path().join("eval");
    let o = dociiw(&["eval", "--manifest", p(&data), "--wb-ckpt", p(&wb_ckpt), "--smt-ckpt", p(&smt_ckpt), "--out", p(&ev)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["count"], 2);
    for k in ["ms_ssim", "ld", "shading_l1", "material_l1", "wb_l1"] {
        assert!(report["metrics"][k].is_number(), "{k}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("mean"));
}

#[test]
fn eval_pairs_without_ocr_binary() {
    let dir = tempfile::tempdir().unwrap();
    let img = image::RgbImage::from_fn(48, 48, |x, y| image::Rgb([((x * 37 + y * 11) % 251) as u8; 3]));
    img.save(dir.path().join("a.png")).unwrap();
    img.save(dir.path().join("b.png")).unwrap();
    let list = dir.path().join("pairs.jsonl");
    fs::write(&list, "{\"id\":\"one\",\"image\":\"a.png\",\"reference\":\"b.png\",\"text\":\"HELLO\"}\n").unwrap();
    let out = dir.path().join("ev");
    let o = dociiw(&["eval", "--pairs", p(&list), "--ocr-cmd", "no-such-ocr-binary-xyz {input}", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!((report["metrics"]["ms_ssim"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(report["notes"][0].as_str().unwrap().contains("OCR"));
}
