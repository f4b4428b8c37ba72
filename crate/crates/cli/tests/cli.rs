//! End-to-end runs of the binary against a tiny synthetic MNIST tree.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robustlab::data::{write_idx, IdxArray, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robustlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("ROBUSTLAB_DATA_DIR").output().expect("spawn robustlab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Threes are bright on the left half, sevens on the right; a few other
/// digits are mixed in to exercise the class filter.
fn write_mnist(dir: &Path, n: usize, prefix: &str) {
    let mut images = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label: u8 = match i % 5 {
            0 | 2 => 3,
            1 | 3 => 7,
            _ => 1,
        };
        for p in 0..784 {
            let col = p % 28;
            let bright = match label {
                3 => col < 14,
                7 => col >= 14,
                _ => p % 2 == 0,
            };
            let jitter = ((i * 31 + p * 17) % 50) as u8;
            images.push(if bright { 200 + jitter } else { jitter });
        }
        labels.push(label);
    }
    let img = IdxArray { magic: IDX_IMAGES_MAGIC, dims: vec![n, 28, 28], data: images };
    let lab = IdxArray { magic: IDX_LABELS_MAGIC, dims: vec![n], data: labels };
    std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), write_idx(&img)).unwrap();
    std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), write_idx(&lab)).unwrap();
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mnist = dir.path().join("data/mnist");
        std::fs::create_dir_all(&mnist).unwrap();
        write_mnist(&mnist, 100, "train");
        write_mnist(&mnist, 40, "t10k");
        std::fs::write(
            dir.path().join("small.cfg"),
            "# short run on the fixture\nrecipe = expert-l2\nsteps = 30\nbatch_size = 8\nlr = 1e-3\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn s(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }

    fn train(&self, out: &str) -> Output {
        run(&[
            "train",
            "--config",
            &self.s("small.cfg"),
            "--data-dir",
            &self.s("data"),
            "--out",
            &self.s(out),
            "--quiet",
        ])
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["train", "attack", "sweep", "fool", "export-weights"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unknown_recipe_is_a_usage_error_listing_recipes() {
    let fx = Fixture::new();
    let out = run(&["train", "--recipe", "nope", "--data-dir", &fx.s("data"), "--out", &fx.s("m.bin")]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("unknown recipe `nope`") && err.contains("expert-l2"), "{err}");
}

#[test]
fn bad_flags_and_configs_exit_with_2() {
    let fx = Fixture::new();
    assert_eq!(code(&run(&["attack"])), 2);
    std::fs::write(fx.path("bad.cfg"), "steps = 10\nbatch_size = many\n").unwrap();
    let out = run(&["train", "--config", &fx.s("bad.cfg"), "--data-dir", &fx.s("data"), "--out", &fx.s("m.bin")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn missing_data_exits_with_3() {
    let fx = Fixture::new();
    let out = run(&["train", "--recipe", "expert-l2", "--data-dir", &fx.s("nowhere"), "--out", &fx.s("m.bin")]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn data_dir_comes_from_the_environment() {
    let fx = Fixture::new();
    let out = bin()
        .args(["train", "--config", &fx.s("small.cfg"), "--out", &fx.s("env.bin"), "--quiet"])
        .env("ROBUSTLAB_DATA_DIR", fx.path("data"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn divergence_exits_with_4() {
    let fx = Fixture::new();
    std::fs::write(fx.path("wild.cfg"), "init = zeros\noptimizer = sgd\nlr = 1e308\nsteps = 5\nbatch_size = 8\n").unwrap();
    let out = run(&["train", "--config", &fx.s("wild.cfg"), "--data-dir", &fx.s("data"), "--out", &fx.s("w.bin"), "--quiet"]);
    assert_eq!(code(&out), 4, "{}{}", stderr(&out), std::fs::read_to_string(fx.path("w.bin.log.csv")).unwrap_or_default());
}

#[test]
fn train_writes_model_log_and_manifest() {
    let fx = Fixture::new();
    let out = fx.train("m.bin");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = read(&fx.path("m.bin.manifest"));
    assert!(manifest.contains("data.train_images"));
    let log = read(&fx.path("m.bin.log.csv"));
    assert!(log.starts_with("# manifest sha256="));
    assert!(log.lines().nth(1).unwrap().starts_with("epoch,loss,clean_acc"));
}

#[test]
fn runs_are_deterministic() {
    let fx = Fixture::new();
    // the manifest records the output path, so repeat runs reuse it
    assert_eq!(code(&fx.train("a.bin")), 0);
    let first = std::fs::read(fx.path("a.bin")).unwrap();
    assert_eq!(code(&fx.train("a.bin")), 0);
    assert_eq!(first, std::fs::read(fx.path("a.bin")).unwrap());

    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let o = run(&[
            "--threads", threads, "sweep", "--model", &fx.s("a.bin"), "--data-dir", &fx.s("data"),
            "--attack", "pgd", "--random-start", "--steps", "3", "--grid", "0:0.3:0.1",
            "--out", &fx.s("s.csv"),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push(read(&fx.path("s.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn attack_sweep_fool_and_export() {
    let fx = Fixture::new();
    assert_eq!(code(&fx.train("m.bin")), 0);
    let model = fx.s("m.bin");
    let data = fx.s("data");

    let o = run(&[
        "attack", "--model", &model, "--data-dir", &data, "--attack", "fgsm", "--eps", "0.25",
        "--out", &fx.s("a.csv"), "--images", &fx.s("a.png"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = read(&fx.path("a.csv"));
    let header = csv.lines().next().unwrap();
    let manifest = read(&fx.path("a.csv.manifest"));
    assert!(header.starts_with("# manifest sha256="));
    assert!(manifest.contains("attack.eps = 0.25"), "{manifest}");
    assert_eq!(csv.lines().count(), 2 + 32, "32 test images of 3 or 7");
    assert!(fx.path("a.png").exists());

    let o = run(&[
        "sweep", "--model", &model, "--data-dir", &data, "--attack", "top-weight-pixel",
        "--grid", "0,2,4,8", "--out", &fx.s("tw.csv"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = robustlab::eval::sweep_from_csv(&read(&fx.path("tw.csv"))).unwrap();
    assert_eq!(curve.points.len(), 4);

    let o = run(&[
        "fool", "--model", &model, "--data-dir", &data, "--mode", "sweep", "--grid", "0,8/255",
        "--samples", "5", "--out", &fx.s("f.csv"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pts = robustlab::eval::fooling_from_csv(&read(&fx.path("f.csv"))).unwrap();
    assert_eq!(pts[0].asr, 0.5);

    let o = run(&["export-weights", "--model", &model, "--out", &fx.s("w.pgm")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read(fx.path("w.pgm")).unwrap().starts_with(b"P5\n28 28\n255\n"));
}

#[test]
fn jsma_needs_a_budget() {
    let fx = Fixture::new();
    assert_eq!(code(&fx.train("m.bin")), 0);
    let o = run(&[
        "attack", "--model", &fx.s("m.bin"), "--data-dir", &fx.s("data"), "--attack", "jsma",
        "--out", &fx.s("j.csv"),
    ]);
    assert_eq!(code(&o), 2);
}
