use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsbit::data::dataset::{generate_dataset, DatasetConfig, DatasetSlices, MANIFEST};
use hsbit::data::io::{default_view_bands, false_color, mask_view};
use hsbit::data::{read_cube, read_mask, write_mask};
use hsbit::experiments::report::{comparison_csv, overlap_csv, parse_report, render_table, report_csv};
use hsbit::experiments::run::{dataset_hash, CHECKPOINT, HISTORY, OVERLAP, REPORT, RUN_MANIFEST};
use hsbit::experiments::{evaluate, overlap_composition, train, Preset, PresetKind, TrainingSet};
use hsbit::kv::KvFile;
use hsbit::model::{read_checkpoint, write_checkpoint};
use hsbit::{Error, Result};

const EVAL_MANIFEST: &str = "eval.txt";
const SPLIT_NAMES: [&str; 4] = ["test", "validation", "train", "extra"];

#[derive(Parser)]
#[command(name = "hsbit", version, about = "Bitfield-encoded segmentation of overlapping plastic flakes in hyperspectral scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene, its slices and masks.
    Generate(GenerateArgs),
    /// Train a preset on a generated dataset.
    Train(TrainArgs),
    /// Score a checkpoint on one slice of a dataset.
    Eval(EvalArgs),
    /// Predict a mask for a cube.
    Predict(PredictArgs),
    /// Write false-colour and mask pixmaps.
    Export(ExportArgs),
    /// Merge per-preset reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bands: Option<usize>,
    /// Plain `key = value` file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    preset: Option<PresetKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threshold: Option<f32>,
    /// test, validation, train or extra
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output HBM1 mask.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threshold: Option<f32>,
    /// Optional P6 pixmap of the predicted mask.
    #[arg(long)]
    view: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// HSC1 cube.
    #[arg(long)]
    input: Option<PathBuf>,
    /// HBM1 mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output directory for `cube.ppm` and `mask.ppm`.
    #[arg(long)]
    out: PathBuf,
    /// Three comma-separated band indices for the false-colour view.
    #[arg(long, value_parser = parse_bands)]
    bands: Option<[usize; 3]>,
}

#[derive(Args)]
struct ReportArgs {
    /// Eval or run directories, or report files, one per preset.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = threads().and_then(|threads| match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a, threads),
        Command::Predict(a) => predict(a),
        Command::Export(a) => export(a),
        Command::Report(a) => report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn threads() -> Result<usize> {
    match std::env::var("HSBIT_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Usage(format!("HSBIT_THREADS={v:?} must be a positive integer"))),
        },
    }
}

fn config_file(path: Option<&Path>) -> Result<KvFile> {
    path.map_or_else(|| Ok(KvFile::new()), KvFile::read)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// `<file>.txt` next to a single-file output.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".txt");
    PathBuf::from(name)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let file = config_file(a.config.as_deref())?;
    let mut config = DatasetConfig::new(0);
    config.apply(&file)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(bands) = a.bands {
        config.bands = bands;
    }
    let dataset = generate_dataset(&config)?;
    dataset.write(&a.out)?;
    let m = dataset.manifest();
    println!(
        "wrote {} (seed {}, {} bands, annotation agreement {})",
        a.out.display(),
        config.seed,
        config.bands,
        m.get("annotation.agreement").unwrap_or("?")
    );
    Ok(())
}

/// Defaults, then the config file, then flags. The seed defaults to the
/// dataset's own.
fn resolve_preset(a: &TrainArgs, dataset_seed: u64) -> Result<Preset> {
    let file = config_file(a.config.as_deref())?;
    let kind = match (a.preset, file.get("preset")) {
        (Some(k), _) => k,
        (None, Some(name)) => name.parse()?,
        (None, None) => return Err(Error::Usage("no preset: pass --preset or set `preset` in --config".into())),
    };
    let mut preset = Preset::new(kind, dataset_seed);
    preset.apply(&file)?;
    if let Some(v) = a.seed {
        preset.seed = v;
    }
    if let Some(v) = a.epochs {
        preset.epochs = v;
    }
    if let Some(v) = a.patch {
        preset.patch = v;
    }
    if let Some(v) = a.threshold {
        preset.threshold = v;
    }
    preset.validate()?;
    Ok(preset)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let manifest = KvFile::read(&a.data.join(MANIFEST))?;
    let preset = resolve_preset(&a, manifest.parse_opt("seed")?.unwrap_or(0))?;
    let data = DatasetSlices::read(&a.data)?;
    let set = TrainingSet::for_preset(&preset, &data)?;
    let (model, history) = train(&preset, &set, std::slice::from_ref(&data.validation))?;
    create_dir(&a.out)?;
    write_checkpoint(&a.out.join(CHECKPOINT), &model)?;
    write_text(&a.out.join(HISTORY), &history.to_csv())?;
    let mut run = preset.to_kv();
    run.set("dataset.path", a.data.display());
    run.set("dataset.seed", manifest.get("seed").unwrap_or("unknown"));
    run.set("dataset.sha256", dataset_hash(&a.data)?);
    run.set("train.windows", set.windows.len());
    run.set("train.pixels", set.category_counts().iter().map(u64::to_string).collect::<Vec<_>>().join(","));
    run.set("best_epoch", history.best_epoch.map_or("none".to_string(), |e| (e + 1).to_string()));
    run.write(&a.out.join(RUN_MANIFEST))?;
    if let Some(e) = history.best_epoch {
        println!(
            "{}: best epoch {} of {}, validation macro-F1 {:.3}",
            preset.kind,
            e + 1,
            history.len(),
            history.val_macro_f1[e]
        );
    }
    println!("wrote {}", a.out.join(CHECKPOINT).display());
    Ok(())
}

fn eval(a: EvalArgs, threads: usize) -> Result<()> {
    if !SPLIT_NAMES.contains(&a.split.as_str()) {
        return Err(Error::Usage(format!("--split {:?}: expected one of {}", a.split, SPLIT_NAMES.join(", "))));
    }
    let model = read_checkpoint(&a.model)?;
    let run = a.model.parent().map(|d| d.join(RUN_MANIFEST)).filter(|p| p.is_file());
    let run = run.as_deref().map(KvFile::read).transpose()?;
    let threshold = a
        .threshold
        .or_else(|| run.as_ref().and_then(|r| r.get("threshold")).and_then(|t| t.parse().ok()))
        .unwrap_or(hsbit::encoding::DEFAULT_THRESHOLD);
    let manifest = KvFile::read(&a.data.join(MANIFEST))?;
    let blobs = match manifest.get("scene.blobs") {
        Some(v) => hsbit::data::dataset::parse_counts(v)?,
        None => hsbit::data::scene::DEFAULT_BLOB_COUNTS,
    };
    let cube = read_cube(&a.data.join(format!("{}.hsc", a.split)))?;
    let truth = read_mask(&a.data.join(format!("{}.hbm", a.split)))?;
    let evaluation = evaluate(&model, &[(cube, truth.clone())], threshold, threads)?;
    let overlap = overlap_composition(&[(&truth, &evaluation.predictions[0])])?;
    let report = report_csv(&evaluation.metrics, &blobs);
    create_dir(&a.out)?;
    write_text(&a.out.join(REPORT), &report)?;
    write_text(&a.out.join(OVERLAP), &overlap_csv(&overlap))?;
    write_mask(&a.out.join(format!("{}_prediction.hbm", a.split)), &evaluation.predictions[0])?;

    let mut kv = KvFile::new();
    if let Some(preset) = run.as_ref().and_then(|r| r.get("preset")) {
        kv.set("preset", preset);
    }
    kv.set("model.path", a.model.display());
    kv.set("model.sha256", sha256_file(&a.model)?);
    kv.set("dataset.path", a.data.display());
    kv.set("dataset.sha256", dataset_hash(&a.data)?);
    kv.set("split", &a.split);
    kv.set("threshold", threshold);
    let avg = evaluation.metrics.macro_average();
    kv.set("macro_f1", format!("{:.6}", avg.f1));
    kv.set("macro_precision", format!("{:.6}", avg.precision));
    kv.set("macro_recall", format!("{:.6}", avg.recall));
    kv.write(&a.out.join(EVAL_MANIFEST))?;
    print!("{}", render_table(&report));
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let cube = read_cube(&a.input)?;
    let threshold = a.threshold.unwrap_or(hsbit::encoding::DEFAULT_THRESHOLD);
    let mask = model.predict(&cube, threshold)?.into_bitfield();
    write_mask(&a.out, &mask)?;
    if let Some(view) = &a.view {
        write_bytes(view, &mask_view(&mask))?;
    }
    let mut kv = KvFile::new();
    kv.set("model.path", a.model.display());
    kv.set("model.sha256", sha256_file(&a.model)?);
    kv.set("input.path", a.input.display());
    kv.set("input.sha256", sha256_file(&a.input)?);
    kv.set("threshold", threshold);
    kv.set("pixels", mask.category_counts().iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    kv.write(&sidecar(&a.out))?;
    println!("wrote {} ({}x{})", a.out.display(), mask.height(), mask.width());
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn export(a: ExportArgs) -> Result<()> {
    if a.input.is_none() && a.mask.is_none() {
        return Err(Error::Usage("export needs --input and/or --mask".into()));
    }
    create_dir(&a.out)?;
    if let Some(input) = &a.input {
        let cube = read_cube(input)?;
        let bands = a.bands.unwrap_or_else(|| default_view_bands(cube.bands()));
        let image = false_color(&cube, bands).map_err(|e| match e {
            Error::Usage(m) => Error::Usage(format!("--bands: {m}")),
            other => other,
        })?;
        write_bytes(&a.out.join("cube.ppm"), &image)?;
    }
    if let Some(path) = &a.mask {
        write_bytes(&a.out.join("mask.ppm"), &mask_view(&read_mask(path)?))?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn parse_bands(text: &str) -> std::result::Result<[usize; 3], String> {
    let v: Vec<usize> = text.split(',').map(|b| b.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|e| format!("{e}"))?;
    <[usize; 3]>::try_from(v).map_err(|v| format!("expected three band indices, got {}", v.len()))
}

fn report(a: ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    for path in &a.runs {
        let (file, dir) = if path.is_dir() { (path.join(REPORT), path.as_path()) } else { (path.clone(), path.parent().unwrap_or(Path::new("."))) };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::Io { path: file.clone(), source: e })?;
        let rows = parse_report(&text).map_err(|e| match e {
            Error::Format { offset, message } => Error::Format { offset, message: format!("{}: {message}", file.display()) },
            other => other,
        })?;
        runs.push((run_name(dir)?, rows));
    }
    let table = comparison_csv(&runs)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(&a.out, &table)?;
    let mut kv = KvFile::new();
    for (i, path) in a.runs.iter().enumerate() {
        kv.set(format!("run.{}", i + 1), path.display());
        kv.set(format!("run.{}.name", i + 1), &runs[i].0);
    }
    kv.write(&sidecar(&a.out))?;
    print!("{}", render_table(&table));
    Ok(())
}

/// The preset title recorded in an eval or run manifest, else the directory
/// name.
fn run_name(dir: &Path) -> Result<String> {
    for name in [EVAL_MANIFEST, RUN_MANIFEST] {
        let path = dir.join(name);
        if path.is_file() {
            if let Some(preset) = KvFile::read(&path)?.get("preset") {
                return Ok(preset.parse::<PresetKind>().map_or(preset.to_string(), |k| k.title().to_string()));
            }
        }
    }
    Ok(dir.file_name().map_or("run".to_string(), |n| n.to_string_lossy().into_owned()))
}
