use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsbit::data::dataset::DatasetConfig;
use hsbit::data::{generate_library, read_mask, write_cube, HyperCube};
use hsbit::model::{build, write_checkpoint, Head, ModelSpec};

const SMALL: &str = "\
bands = 16
scene.height = 300
scene.width = 90
scene.blobs = 0,2,2,1,2,1,1,1
scene.margin = 6
extra.height = 160
extra.width = 90
extra.blobs = 0,2,2,0,2,0,0,0
extra.margin = 6
preset = baseline-bitfield
epochs = 2
patch = 16
steps_per_epoch = 3
model.channels = 4,8,8
model.reduction = 4
";

fn hsbit(args: &[&str]) -> Output {
    hsbit_env(args, &[])
}

fn hsbit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hsbit"));
    cmd.args(args).env_remove("HSBIT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir` with its bytes.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.txt"), SMALL).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn generate(&self, name: &str) -> PathBuf {
        let out = self.path(name);
        ok(&hsbit(&["generate", "--config", p(&self.path("small.txt")), "--seed", "3", "--out", p(&out)]));
        out
    }

    fn train(&self, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let config = self.path("small.txt");
        let mut args = vec!["train", "--config", p(&config), "--data", p(data), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&hsbit(&args));
        out
    }
}

#[test]
fn generate_is_deterministic_and_regenerates_from_its_manifest() {
    let f = Fixture::new();
    let a = f.generate("a");
    let b = f.generate("b");
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_eq!(snapshot(&a).len(), 11);
    let c = f.path("c");
    ok(&hsbit(&["generate", "--config", p(&a.join("manifest.txt")), "--out", p(&c)]));
    assert_eq!(snapshot(&a), snapshot(&c));
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new();
    let out = f.path("d");
    ok(&hsbit(&["generate", "--config", p(&f.path("small.txt")), "--seed", "5", "--bands", "12", "--out", p(&out)]));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=5\n") && manifest.contains("bands=12\n"), "{manifest}");
    assert!(manifest.contains("scene.height=300\n"));

    let run = f.train(&out, "r", &["--epochs", "1", "--patch", "24", "--threshold", "0.25"]);
    let manifest = std::fs::read_to_string(run.join("run.txt")).unwrap();
    for line in ["epochs=1\n", "patch=24\n", "threshold=0.25\n", "steps_per_epoch=3\n", "seed=5\n", "dataset.seed=5\n"] {
        assert!(manifest.contains(line), "{line:?} missing from {manifest}");
    }
    assert_eq!(std::fs::read_to_string(run.join("history.csv")).unwrap().lines().count(), 2);
}

#[test]
fn train_and_eval_are_deterministic_and_leave_inputs_alone() {
    let f = Fixture::new();
    let data = f.generate("d");
    let before = snapshot(&data);
    let r1 = f.train(&data, "r1", &[]);
    let r2 = f.train(&data, "r2", &[]);
    assert_eq!(snapshot(&r1), snapshot(&r2));
    assert_eq!(snapshot(&data), before);

    let model = r1.join("model.hsbm");
    let eval = |name: &str, threads: &str| {
        let out = f.path(name);
        ok(&hsbit_env(&["eval", "--model", p(&model), "--data", p(&data), "--out", p(&out)], &[("HSBIT_THREADS", threads)]));
        out
    };
    let e1 = eval("e1", "1");
    let e2 = eval("e2", "1");
    let e3 = eval("e3", "3");
    assert_eq!(snapshot(&e1), snapshot(&e2));
    assert_eq!(snapshot(&e1), snapshot(&e3));
    let report = std::fs::read_to_string(e1.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 10);
    let manifest = std::fs::read_to_string(e1.join("eval.txt")).unwrap();
    assert!(manifest.contains("preset=baseline-bitfield\n") && manifest.contains("split=test\n"));
    assert_eq!(snapshot(&data), before);
    assert_eq!(snapshot(&r1), snapshot(&r2));
}

#[test]
fn report_merges_three_presets() {
    let f = Fixture::new();
    let data = f.generate("d");
    let mut dirs = Vec::new();
    for preset in ["baseline", "baseline-bitfield", "bitfield"] {
        let run = f.train(&data, &format!("r-{preset}"), &["--preset", preset, "--epochs", "1"]);
        let out = f.path(&format!("e-{preset}"));
        ok(&hsbit(&["eval", "--model", p(&run.join("model.hsbm")), "--data", p(&data), "--out", p(&out)]));
        dirs.push(out);
    }
    let table = f.path("table.csv");
    let mut args = vec!["report", "--out", p(&table)];
    args.extend(dirs.iter().map(|d| p(d)));
    let out = hsbit(&args);
    ok(&out);
    let csv = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|l| l.split(',').count() == 3 + 9));
    assert!(lines[0].contains("Baseline F1") && lines[0].contains("Baseline-Bitfield F1") && lines[0].contains("Bitfield F1"));
    assert!(lines[4].starts_with("PP+PE,011,"));
    assert!(lines[9].starts_with("Average,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Average"));
}

#[test]
fn predict_on_background_cube_writes_an_all_zero_mask() {
    let f = Fixture::new();
    let bands = 16;
    let library = generate_library(DatasetConfig::new(0).seed, bands).unwrap();
    let values = library.background().repeat(20 * 28);
    let cube = HyperCube::from_vec(20, 28, bands, values).unwrap();
    let input = f.path("bg.hsc");
    write_cube(&input, &cube).unwrap();

    // an untrained network whose head says "absent" for every bit
    let mut spec = ModelSpec::new(Head::Bitfield);
    spec.bands = bands;
    spec.encoder_channels = vec![4, 8, 8];
    spec.spectral_reduction = 4;
    let mut model = build(&spec).unwrap();
    model.parameter_mut("head.bias").unwrap().data_mut().fill(-20.0);
    let ckpt = f.path("m.hsbm");
    write_checkpoint(&ckpt, &model).unwrap();

    let out = f.path("bg.hbm");
    let view = f.path("bg.ppm");
    ok(&hsbit(&["predict", "--model", p(&ckpt), "--input", p(&input), "--out", p(&out), "--view", p(&view)]));
    let mask = read_mask(&out).unwrap();
    assert_eq!((mask.height(), mask.width()), (20, 28));
    assert!(mask.data().iter().all(|b| b.is_background()));
    assert!(std::fs::read(&view).unwrap().starts_with(b"P6\n28 20\n255\n"));
    let sidecar = std::fs::read_to_string(f.path("bg.hbm.txt")).unwrap();
    assert!(sidecar.contains("threshold=0.5\n"));
}

#[test]
fn export_writes_pixmaps() {
    let f = Fixture::new();
    let data = f.generate("d");
    let out = f.path("x");
    ok(&hsbit(&["export", "--input", p(&data.join("test.hsc")), "--mask", p(&data.join("test.hbm")), "--out", p(&out), "--bands", "1,5,9"]));
    let truth = read_mask(&data.join("test.hbm")).unwrap();
    let header = format!("P6\n{} {}\n255\n", truth.width(), truth.height());
    for name in ["cube.ppm", "mask.ppm"] {
        let bytes = std::fs::read(out.join(name)).unwrap();
        assert!(bytes.starts_with(header.as_bytes()));
        assert_eq!(bytes.len(), header.len() + truth.width() * truth.height() * 3);
    }
    let bad = hsbit(&["export", "--input", p(&data.join("test.hsc")), "--out", p(&out), "--bands", "1,5,99"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("--bands"));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(code(&hsbit(&["--help"])), 0);
    assert_eq!(code(&hsbit(&[])), 1);
    assert_eq!(code(&hsbit(&["frobnicate"])), 1);
    assert_eq!(code(&hsbit(&["generate"])), 1);

    let data = f.generate("d");
    let bad_preset = hsbit(&["train", "--data", p(&data), "--out", p(&f.path("r")), "--preset", "bitfeld"]);
    assert_eq!(code(&bad_preset), 1);
    assert!(stderr(&bad_preset).contains("--preset"));
    let no_preset = hsbit(&["train", "--data", p(&data), "--out", p(&f.path("r"))]);
    assert_eq!(code(&no_preset), 1);

    let threads = hsbit_env(&["eval", "--model", "x", "--data", p(&data), "--out", p(&f.path("e"))], &[("HSBIT_THREADS", "0")]);
    assert_eq!(code(&threads), 1);
    assert!(stderr(&threads).contains("HSBIT_THREADS"));

    // a cube handed over as a checkpoint
    let wrong = hsbit(&["eval", "--model", p(&data.join("test.hsc")), "--data", p(&data), "--out", p(&f.path("e"))]);
    assert_eq!(code(&wrong), 2);
    assert!(stderr(&wrong).contains("test.hsc"));

    let missing = hsbit(&["train", "--config", p(&f.path("small.txt")), "--data", p(&f.path("nowhere")), "--out", p(&f.path("r"))]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("nowhere"));

    std::fs::write(data.join("train.hsc"), b"HSC1").unwrap();
    let truncated = hsbit(&["train", "--config", p(&f.path("small.txt")), "--data", p(&data), "--out", p(&f.path("r"))]);
    assert_eq!(code(&truncated), 2);
    assert!(stderr(&truncated).contains("train.hsc"));
}

#[test]
fn divergent_training_exits_with_three() {
    let f = Fixture::new();
    let data = f.generate("d");
    let config = f.path("wild.txt");
    std::fs::write(&config, format!("{SMALL}lr = 1e30\n")).unwrap();
    let out = hsbit(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&f.path("r"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("loss"), "{}", stderr(&out));
}

#[test]
fn non_finite_training_data_exits_with_three() {
    let f = Fixture::new();
    let data = f.generate("d");
    let cube = hsbit::data::read_cube(&data.join("train.hsc")).unwrap();
    let nan = HyperCube::from_vec(cube.height(), cube.width(), cube.bands(), vec![f32::NAN; cube.data().len()]).unwrap();
    write_cube(&data.join("train.hsc"), &nan).unwrap();
    let out = hsbit(&["train", "--config", p(&f.path("small.txt")), "--data", p(&data), "--out", p(&f.path("r"))]);
    assert_eq!(code(&out), 3);
}
