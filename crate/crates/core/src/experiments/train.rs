use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::CategoryMetrics;
use super::preset::Preset;
use crate::data::dataset::{derive_seed, DatasetSlices};
use crate::data::HyperCube;
use crate::encoding::{BitfieldMask, NUM_PRIMARY};
use crate::model::{build, BandNorm, Head, TrainedModel};
use crate::numerics::{AdamConfig, AdamState, Graph, Tensor};
use crate::{Error, Result};

pub type Labeled = (HyperCube, BitfieldMask);

/// Training images with the patch origins that may be sampled from them.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub images: Vec<Labeled>,
    /// `(image, row, col)` of every admissible patch.
    pub windows: Vec<(usize, usize, usize)>,
    pub patch: usize,
}

fn origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    if extent < patch {
        return Vec::new();
    }
    let mut v: Vec<usize> = (0..=extent - patch).step_by(stride).collect();
    if *v.last().unwrap() != extent - patch {
        v.push(extent - patch);
    }
    v
}

impl TrainingSet {
    /// Every `patch × patch` window on a `stride` grid (plus the far edge);
    /// with `primary_only`, windows holding any overlap pixel are dropped.
    pub fn new(images: Vec<Labeled>, patch: usize, stride: usize, primary_only: bool) -> Result<Self> {
        let mut windows = Vec::new();
        for (i, (cube, mask)) in images.iter().enumerate() {
            if (cube.height(), cube.width()) != (mask.height(), mask.width()) {
                return Err(Error::Dimension(format!("training image {i}: cube and mask extents differ")));
            }
            // overlap pixels per column prefix, per row, to test windows quickly
            let w = mask.width();
            let mut prefix = vec![0u32; (mask.height() + 1) * (w + 1)];
            for r in 0..mask.height() {
                for c in 0..w {
                    let v = u32::from(mask.get(r, c).is_overlap());
                    prefix[(r + 1) * (w + 1) + c + 1] =
                        v + prefix[r * (w + 1) + c + 1] + prefix[(r + 1) * (w + 1) + c] - prefix[r * (w + 1) + c];
                }
            }
            let overlap_in = |r: usize, c: usize| {
                let at = |y: usize, x: usize| prefix[y * (w + 1) + x];
                at(r + patch, c + patch) + at(r, c) - at(r, c + patch) - at(r + patch, c)
            };
            for r in origins(cube.height(), patch, stride) {
                for c in origins(cube.width(), patch, stride) {
                    if !primary_only || overlap_in(r, c) == 0 {
                        windows.push((i, r, c));
                    }
                }
            }
        }
        if windows.is_empty() {
            return Err(Error::Preset(format!(
                "no admissible {patch}x{patch} training window{}",
                if primary_only { " free of overlap pixels" } else { "" }
            )));
        }
        Ok(Self { images, windows, patch })
    }

    /// The training corpus of `preset`: the train slice, plus the extra
    /// primary-only scene and overlap-free windows for primary-only presets.
    pub fn for_preset(preset: &Preset, data: &DatasetSlices) -> Result<Self> {
        let mut images = vec![data.train.clone()];
        if preset.kind.primary_only() {
            images.push(data.extra.clone());
        }
        Self::new(images, preset.patch, preset.window_stride, preset.kind.primary_only())
    }

    /// Pixel counts per category over all admissible windows (each pixel
    /// once), for manifests.
    pub fn category_counts(&self) -> [u64; crate::encoding::NUM_CATEGORIES] {
        let mut out = [0u64; crate::encoding::NUM_CATEGORIES];
        for (i, (_, mask)) in self.images.iter().enumerate() {
            let mut covered = vec![false; mask.data().len()];
            for &(_, r, c) in self.windows.iter().filter(|w| w.0 == i) {
                for y in r..r + self.patch {
                    covered[y * mask.width() + c..y * mask.width() + c + self.patch].fill(true);
                }
            }
            for (b, _) in mask.data().iter().zip(&covered).filter(|(_, &c)| c) {
                out[b.index()] += 1;
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_macro_f1: Vec<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_macro_f1,best\n");
        for e in 0..self.len() {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                e + 1,
                self.train_loss[e],
                self.val_loss[e],
                self.val_macro_f1[e],
                u8::from(self.best_epoch == Some(e))
            ));
        }
        out
    }
}

struct Batch {
    input: Tensor,
    targets: Vec<f32>,
    classes: Vec<usize>,
}

fn sample_batch(set: &TrainingSet, preset: &Preset, rng: &mut ChaCha8Rng) -> Result<Batch> {
    let (p, n) = (set.patch, preset.batch);
    let bands = set.images[0].0.bands();
    let plane = p * p;
    let mut input = Vec::with_capacity(n * bands * plane);
    let mut targets = vec![0.0f32; n * NUM_PRIMARY * plane];
    let mut classes = vec![0usize; n * plane];
    for b in 0..n {
        let (img, row, col) = set.windows[rng.random_range(0..set.windows.len())];
        let (flip_v, flip_h) = if preset.augment { (rng.random_bool(0.5), rng.random_bool(0.5)) } else { (false, false) };
        let (cube, mask) = &set.images[img];
        let window = cube.window_chw(row as isize, col as isize, p, p);
        let src = |y: usize, x: usize| {
            let sy = if flip_v { p - 1 - y } else { y };
            let sx = if flip_h { p - 1 - x } else { x };
            (sy, sx)
        };
        let start = input.len();
        input.resize(start + bands * plane, 0.0);
        for y in 0..p {
            for x in 0..p {
                let (sy, sx) = src(y, x);
                for k in 0..bands {
                    input[start + k * plane + y * p + x] = window[k * plane + sy * p + sx];
                }
                let label = mask.get(row + sy, col + sx);
                classes[b * plane + y * p + x] = label.index();
                for (k, t) in label.to_target().iter().enumerate() {
                    targets[(b * NUM_PRIMARY + k) * plane + y * p + x] = *t;
                }
            }
        }
    }
    Ok(Batch { input: Tensor::new(&[n, bands, p, p], input)?, targets, classes })
}

/// Validation loss and pooled metrics of `model` over `scenes`.
pub fn validate(model: &TrainedModel, scenes: &[Labeled], threshold: f32) -> Result<(f64, CategoryMetrics)> {
    let mut metrics = CategoryMetrics::default();
    let (mut total, mut count) = (0.0f64, 0usize);
    for (cube, truth) in scenes {
        let scores = model.forward_cube(cube)?;
        let plane = cube.height() * cube.width();
        for (i, label) in truth.data().iter().enumerate() {
            match model.spec.head {
                Head::Bitfield => {
                    for (k, t) in label.to_target().iter().enumerate() {
                        total += ((scores[k * plane + i] - t) as f64).powi(2);
                        count += 1;
                    }
                }
                Head::Baseline => {
                    total -= (scores[label.index() * plane + i] as f64).max(1e-12).ln();
                    count += 1;
                }
            }
        }
        let pred = model.decode_scores(cube.height(), cube.width(), &scores, threshold)?.into_bitfield();
        metrics.add(truth, &pred)?;
    }
    Ok((total / count.max(1) as f64, metrics))
}

/// Seeded Adam training on random patches of `set`. After each epoch the
/// model is scored on `validation`; the parameters with the best validation
/// macro-F1 are returned (the last epoch's when `validation` is empty).
/// Band statistics are fitted on the training images before the first step.
pub fn train(preset: &Preset, set: &TrainingSet, validation: &[Labeled]) -> Result<(TrainedModel, TrainHistory)> {
    preset.validate()?;
    if set.patch != preset.patch {
        return Err(Error::Preset(format!("training set windows are {} px, preset wants {}", set.patch, preset.patch)));
    }
    let bands = set.images[0].0.bands();
    let mut model = build(&preset.model_spec(bands))?;
    model.set_band_norm(BandNorm::fit(set.images.iter().map(|(cube, _)| cube))?)?;
    model.meta.seed = preset.seed;
    let mut history = TrainHistory::default();
    if preset.epochs == 0 {
        return Ok((model, history));
    }
    let config = AdamConfig { lr: preset.lr, ..AdamConfig::default() };
    let mut adam = AdamState::new(config, model.parameters().iter().map(|(_, t)| t));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(preset.seed, 4));
    let mut best: Option<(f64, TrainedModel)> = None;
    for epoch in 0..preset.epochs {
        let mut epoch_loss = 0.0f64;
        for step in 0..preset.steps_per_epoch {
            let batch = sample_batch(set, preset, &mut rng)?;
            let mut g = Graph::new();
            let x = g.leaf(batch.input);
            let vars = model.forward_graph(&mut g, x, true)?;
            let loss = match preset.kind.head() {
                Head::Bitfield => {
                    let shape = g.value(vars.output).shape().to_vec();
                    let t = g.leaf(Tensor::new(&shape, batch.targets)?);
                    g.mse_loss(vars.output, t)?
                }
                Head::Baseline => g.cross_entropy(vars.logits, &batch.classes)?,
            };
            let value = g.value(loss).item()? as f64;
            if !value.is_finite() {
                return Err(Error::Numerical(format!("loss {value} at epoch {} step {}", epoch + 1, step + 1)));
            }
            epoch_loss += value;
            let grads = g.backward(loss)?;
            let grad_slices: Vec<Vec<f32>> = vars
                .params
                .iter()
                .map(|&v| grads.raw(v).map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).len()]))
                .collect();
            let refs: Vec<&[f32]> = grad_slices.iter().map(Vec::as_slice).collect();
            adam.step(&mut model.tensors_mut(), &refs)?;
        }
        let train_loss = epoch_loss / preset.steps_per_epoch as f64;
        let (val_loss, metrics) = if validation.is_empty() {
            (f64::NAN, CategoryMetrics::default())
        } else {
            validate(&model, validation, preset.threshold)?
        };
        if !val_loss.is_finite() && !validation.is_empty() {
            return Err(Error::Numerical(format!("validation loss {val_loss} at epoch {}", epoch + 1)));
        }
        let f1 = metrics.macro_average().f1;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.val_macro_f1.push(f1);
        model.meta.epochs = (epoch + 1) as u32;
        model.meta.final_train_loss = train_loss;
        model.meta.final_val_loss = val_loss;
        if validation.is_empty() || best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            history.best_epoch = Some(epoch);
            best = Some((f1, model.clone()));
        }
    }
    let mut chosen = best.map(|(_, m)| m).unwrap_or(model);
    // losses stay those of the selected epoch
    chosen.meta.epochs = preset.epochs as u32;
    Ok((chosen, history))
}
