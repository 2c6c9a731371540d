use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use goquant::format::{self, NamedArray, TensorFile};
use goquant::matrix::Matrix;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_goquant"));
    c.env_remove("GOQUANT_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn goquant")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Deterministic pseudo-random fill without pulling in an RNG.
fn filled(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let data = (0..rows * cols)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn write_tensors(path: &Path, items: &[(&str, Matrix)]) {
    let file = TensorFile {
        tensors: items.iter().map(|(n, m)| NamedArray::from_matrix(*n, m)).collect(),
    };
    format::save_tensor_file(path, &file).unwrap();
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let f = Self { dir };
        write_tensors(
            &f.path("w.gqt"),
            &[("fc2", filled(16, 200, 2)), ("fc1", filled(32, 256, 1))],
        );
        write_tensors(
            &f.path("x.gqt"),
            &[("fc1", filled(8, 256, 3)), ("fc2", filled(8, 200, 4))],
        );
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn quantize(&self, out: &str, extra: &[&str]) -> Output {
        let (w, o) = (self.p("w.gqt"), self.p(out));
        let mut args = vec!["quantize", "--weights", &w, "--out", &o];
        args.extend_from_slice(extra);
        run(&args)
    }
}

fn porcelain_value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from:\n{out}"))
        .to_string()
}

#[test]
fn geo_without_calib_succeeds() {
    let f = Fixture::new();
    let o = f.quantize("m.gq", &["--porcelain"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(porcelain_value(&s, "tensors"), "2");
    let rel: f64 = porcelain_value(&s, "tensor.fc1.frobenius_rel").parse().unwrap();
    assert!(rel > 0.0 && rel < 0.5);
    // Reports come out in name order regardless of file order.
    assert!(s.find("tensor.fc1.").unwrap() < s.find("tensor.fc2.").unwrap());
}

#[test]
fn ref_without_calib_is_usage_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &["--mode", "ref"])), 1);
    assert!(!f.path("m.gq").exists());
}

#[test]
fn ref_with_calib_succeeds() {
    let f = Fixture::new();
    let c = f.p("x.gqt");
    assert_eq!(code(&f.quantize("m.gq", &["--mode", "ref", "--calib", &c])), 0);
}

#[test]
fn calib_shape_mismatch_is_data_error() {
    let f = Fixture::new();
    write_tensors(&f.path("bad.gqt"), &[("fc1", filled(4, 10, 5)), ("fc2", filled(4, 200, 6))]);
    let c = f.p("bad.gqt");
    assert_eq!(code(&f.quantize("m.gq", &["--calib", &c])), 2);
}

#[test]
fn quantize_is_deterministic() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("a.gq", &[])), 0);
    assert_eq!(code(&f.quantize("b.gq", &[])), 0);
    let a = std::fs::read(f.path("a.gq")).unwrap();
    let b = std::fs::read(f.path("b.gq")).unwrap();
    assert_eq!(a, b);

    let o = bin()
        .env("GOQUANT_THREADS", "1")
        .args(["quantize", "--weights", &f.p("w.gqt"), "--out", &f.p("c.gq")])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(f.path("c.gq")).unwrap(), a);
}

#[test]
fn bad_thread_env_is_usage_error() {
    let o = bin().env("GOQUANT_THREADS", "zero").args(["verify", "--trials", "1"]).output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_applies_below_flags() {
    let f = Fixture::new();
    std::fs::write(
        f.path("exp.cfg"),
        format!("weights = {}\nout = {}\nbits = 4\nk = 1\n", f.p("w.gqt"), f.p("cfg.gq")),
    )
    .unwrap();
    let cfg = f.p("exp.cfg");
    assert_eq!(code(&run(&["quantize", "--config", &cfg])), 0);
    let m = format::load_model_file(f.path("cfg.gq")).unwrap();
    assert!(m.tensors.iter().all(|t| t.tensor.config.bits == 4 && t.tensor.config.k == 1));

    assert_eq!(code(&run(&["quantize", "--config", &cfg, "--k", "2"])), 0);
    let m = format::load_model_file(f.path("cfg.gq")).unwrap();
    assert!(m.tensors.iter().all(|t| t.tensor.config.bits == 4 && t.tensor.config.k == 2));

    std::fs::write(f.path("typo.cfg"), "bitz = 4\n").unwrap();
    assert_eq!(code(&run(&["quantize", "--config", &f.p("typo.cfg")])), 1);
}

#[test]
fn bad_flags_are_usage_errors() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &["--bits", "5"])), 1);
    assert_eq!(code(&f.quantize("m.gq", &["--micro", "24"])), 1);
    assert_eq!(code(&run(&["quantize", "--bogus"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["quantize", "--out", "x.gq"])), 1);
}

#[test]
fn eval_k2_beats_k1() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("k1.gq", &["--k", "1"])), 0);
    assert_eq!(code(&f.quantize("k2.gq", &["--k", "2"])), 0);
    let mse = |model: &str| -> f64 {
        let o = run(&[
            "eval",
            "--model",
            &f.p(model),
            "--weights",
            &f.p("w.gqt"),
            "--inputs",
            &f.p("x.gqt"),
            "--metrics",
            "mse,outgap",
            "--porcelain",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let s = stdout(&o);
        assert!(!s.contains(".cosine="));
        porcelain_value(&s, "tensor.fc1.mse").parse().unwrap()
    };
    assert!(mse("k2.gq") < mse("k1.gq"));
}

#[test]
fn eval_zero_input_gives_zero_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &[])), 0);
    write_tensors(
        &f.path("zero.gqt"),
        &[("fc1", Matrix::zeros(3, 256)), ("fc2", Matrix::zeros(3, 200))],
    );
    let o = run(&[
        "eval",
        "--model",
        &f.p("m.gq"),
        "--weights",
        &f.p("w.gqt"),
        "--inputs",
        &f.p("zero.gqt"),
        "--porcelain",
    ]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert_eq!(porcelain_value(&s, "tensor.fc1.mse").parse::<f64>().unwrap(), 0.0);
    assert_eq!(porcelain_value(&s, "tensor.fc1.cosine").parse::<f64>().unwrap(), 1.0);
}

#[test]
fn eval_missing_tensor_is_data_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &[])), 0);
    write_tensors(&f.path("partial.gqt"), &[("fc1", filled(2, 256, 9))]);
    let o = run(&[
        "eval",
        "--model",
        &f.p("m.gq"),
        "--weights",
        &f.p("w.gqt"),
        "--inputs",
        &f.p("partial.gqt"),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fc2"));
}

#[test]
fn eval_unknown_metric_is_usage_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &[])), 0);
    let o = run(&[
        "eval",
        "--model",
        &f.p("m.gq"),
        "--weights",
        &f.p("w.gqt"),
        "--inputs",
        &f.p("x.gqt"),
        "--metrics",
        "psnr",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_reports_one_multiply_per_basis_per_block() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &[])), 0);
    let o = run(&["bench", "--model", &f.p("m.gq"), "--inputs", &f.p("x.gqt"), "--audit", "--porcelain"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    // fc1: d_in 256 -> 2 macro-blocks; fc2: d_in 200 -> 2.
    for t in ["fc1", "fc2"] {
        assert_eq!(porcelain_value(&s, &format!("tensor.{t}.int_muls_per_output")), "4");
        assert_eq!(porcelain_value(&s, &format!("tensor.{t}.loop_muls")), "0");
    }
}

#[test]
fn bench_overflow_is_numeric_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &["--bits", "4"])), 0);
    let o = run(&["bench", "--model", &f.p("m.gq"), "--inputs", &f.p("x.gqt"), "--acc-bits", "16"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn inspect_reports_overhead_and_histogram() {
    let f = Fixture::new();
    assert_eq!(code(&f.quantize("m.gq", &[])), 0);
    let o = run(&["inspect", "--model", &f.p("m.gq"), "--porcelain"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    let model = format::load_model_file(f.path("m.gq")).unwrap();
    for nt in &model.tensors {
        let p = format!("tensor.{}", nt.name);
        let overhead: f64 = porcelain_value(&s, &format!("{p}.overhead_bits_per_weight")).parse().unwrap();
        // 3 bits + 2*8/128 scale bits + (4 + 32/2)/32 metadata bits.
        assert!((overhead - (16.0 / 128.0 + 20.0 / 32.0)).abs() < 1e-6);
        let micro: usize = porcelain_value(&s, &format!("{p}.micro_blocks")).parse().unwrap();
        let hist: usize = s
            .lines()
            .filter_map(|l| l.strip_prefix(&format!("{p}.stride.")))
            .map(|l| l.split('=').nth(1).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(hist, micro);
        assert_eq!(micro, nt.tensor.micro.len());
    }
}

#[test]
fn inspect_empty_model_prints_header_only() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("empty.gq");
    format::save_model_file(&p, &format::Model::default()).unwrap();
    let o = run(&["inspect", "--model", p.to_str().unwrap(), "--porcelain"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "version=1\ntensors=0\nbytes=10\n");
}

#[test]
fn inspect_corrupt_file_is_data_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("junk.gq");
    std::fs::write(&p, b"NOPE\x01\x00\x00\x00\x00\x00").unwrap();
    let o = run(&["inspect", "--model", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad magic"));
}

#[test]
fn verify_passes_on_clean_build() {
    let o = run(&["verify", "--trials", "200"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn verify_fails_with_injected_sign_flip() {
    let o = run(&["verify", "--trials", "50", "--inject-fault", "sign-flip", "--porcelain"]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("result=fail"));
}

#[test]
fn verify_large_micro_needs_big_flag() {
    assert_eq!(code(&run(&["verify", "--micro", "32"])), 1);
    assert_eq!(code(&run(&["verify", "--micro", "16", "--trials", "5"])), 0);
}
