use std::path::Path;

use sha2::{Digest, Sha256};

use super::evaluate::{evaluate, Evaluation};
use super::metrics::{overlap_composition, OverlapAnalysis};
use super::preset::Preset;
use super::report::{overlap_csv, report_csv};
use super::train::{train, TrainHistory, TrainingSet};
use crate::data::dataset::{DatasetSlices, EXTRA, MANIFEST, SPLITS};
use crate::data::io::read_bytes;
use crate::data::scene::DEFAULT_BLOB_COUNTS;
use crate::encoding::NUM_CATEGORIES;
use crate::kv::KvFile;
use crate::model::{write_checkpoint, TrainedModel};
use crate::{Error, Result};

pub const CHECKPOINT: &str = "model.hsbm";
pub const REPORT: &str = "report.csv";
pub const HISTORY: &str = "history.csv";
pub const OVERLAP: &str = "overlap.csv";
pub const RUN_MANIFEST: &str = "run.txt";

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub preset: Preset,
    pub model: TrainedModel,
    pub history: TrainHistory,
    pub evaluation: Evaluation,
    pub overlap: OverlapAnalysis,
    pub training_pixels: [u64; NUM_CATEGORIES],
}

impl RunOutcome {
    pub fn report(&self, blobs: &[usize; NUM_CATEGORIES]) -> String {
        report_csv(&self.evaluation.metrics, blobs)
    }
}

/// SHA-256 over the slice and extra-scene files, in a fixed order.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    for name in SPLITS.iter().chain(std::iter::once(&EXTRA)) {
        for ext in ["hsc", "hbm"] {
            h.update(read_bytes(&dir.join(format!("{name}.{ext}")))?);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Trains on the preset's corpus, selects on the validation slice and
/// scores the test slice.
pub fn run_on(preset: &Preset, data: &DatasetSlices, threads: usize) -> Result<RunOutcome> {
    let set = TrainingSet::for_preset(preset, data)?;
    let (model, history) = train(preset, &set, std::slice::from_ref(&data.validation))?;
    let evaluation = evaluate(&model, std::slice::from_ref(&data.test), preset.threshold, threads)?;
    let overlap = overlap_composition(&[(&data.test.1, &evaluation.predictions[0])])?;
    Ok(RunOutcome {
        preset: preset.clone(),
        model,
        history,
        evaluation,
        overlap,
        training_pixels: set.category_counts(),
    })
}

/// [`run_on`] over a generated dataset directory, writing the checkpoint,
/// history, report, overlap analysis and a run manifest into `out`.
pub fn run_preset(preset: &Preset, dataset: &Path, out: &Path, threads: usize) -> Result<RunOutcome> {
    let manifest = KvFile::read(&dataset.join(MANIFEST))?;
    let blobs = match manifest.get("scene.blobs") {
        Some(v) => crate::data::dataset::parse_counts(v).map_err(|e| Error::Config(format!("{MANIFEST}: {e}")))?,
        None => DEFAULT_BLOB_COUNTS,
    };
    let data = DatasetSlices::read(dataset)?;
    let outcome = run_on(preset, &data, threads)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_checkpoint(&out.join(CHECKPOINT), &outcome.model)?;
    let write = |name: &str, text: &str| std::fs::write(out.join(name), text).map_err(|e| Error::io(out.join(name), e));
    write(HISTORY, &outcome.history.to_csv())?;
    write(REPORT, &outcome.report(&blobs))?;
    write(OVERLAP, &overlap_csv(&outcome.overlap))?;

    let mut run = preset.to_kv();
    run.set("dataset.path", dataset.display());
    run.set("dataset.seed", manifest.get("seed").unwrap_or("unknown"));
    run.set("dataset.sha256", dataset_hash(dataset)?);
    run.set("train.pixels", outcome.training_pixels.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
    run.set("best_epoch", outcome.history.best_epoch.map_or("none".to_string(), |e| (e + 1).to_string()));
    let avg = outcome.evaluation.metrics.macro_average();
    run.set("test.macro_f1", format!("{:.6}", avg.f1));
    run.set("test.macro_precision", format!("{:.6}", avg.precision));
    run.set("test.macro_recall", format!("{:.6}", avg.recall));
    run.write(&out.join(RUN_MANIFEST))?;
    Ok(outcome)
}
