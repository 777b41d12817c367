use std::fmt;
use std::str::FromStr;

use crate::data::dataset::derive_seed;
use crate::encoding::DEFAULT_THRESHOLD;
use crate::kv::KvFile;
use crate::model::{Head, ModelSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetKind {
    /// Softmax over eight categories, cross-entropy, all categories.
    Baseline,
    /// TanH bitfield head, MSE, all categories.
    BaselineBitfield,
    /// TanH bitfield head, MSE, primary-only training plus extra blobs.
    Bitfield,
}

impl PresetKind {
    pub const ALL: [PresetKind; 3] = [PresetKind::Baseline, PresetKind::BaselineBitfield, PresetKind::Bitfield];

    pub fn name(self) -> &'static str {
        match self {
            PresetKind::Baseline => "baseline",
            PresetKind::BaselineBitfield => "baseline-bitfield",
            PresetKind::Bitfield => "bitfield",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            PresetKind::Baseline => "Baseline",
            PresetKind::BaselineBitfield => "Baseline-Bitfield",
            PresetKind::Bitfield => "Bitfield",
        }
    }

    pub fn head(self) -> Head {
        match self {
            PresetKind::Baseline => Head::Baseline,
            _ => Head::Bitfield,
        }
    }

    /// Whether overlap categories are withheld from training.
    pub fn primary_only(self) -> bool {
        self == PresetKind::Bitfield
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown preset {s:?} (expected baseline, baseline-bitfield or bitfield)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub kind: PresetKind,
    pub threshold: f32,
    pub epochs: usize,
    pub patch: usize,
    pub batch: usize,
    pub lr: f32,
    pub steps_per_epoch: usize,
    /// Spacing of candidate patch origins.
    pub window_stride: usize,
    /// Random horizontal and vertical flips of training patches.
    pub augment: bool,
    pub spectral_reduction: usize,
    pub encoder_channels: Vec<usize>,
    pub depth: usize,
    pub seed: u64,
}

impl Preset {
    pub fn new(kind: PresetKind, seed: u64) -> Self {
        let model = ModelSpec::new(kind.head());
        Self {
            kind,
            threshold: DEFAULT_THRESHOLD,
            epochs: 30,
            patch: 64,
            batch: 4,
            lr: 1e-3,
            steps_per_epoch: 8,
            window_stride: 4,
            augment: true,
            spectral_reduction: model.spectral_reduction,
            encoder_channels: model.encoder_channels,
            depth: model.depth,
            seed,
        }
    }

    pub fn model_spec(&self, bands: usize) -> ModelSpec {
        ModelSpec {
            bands,
            head: self.kind.head(),
            spectral_reduction: self.spectral_reduction,
            encoder_channels: self.encoder_channels.clone(),
            depth: self.depth,
            seed: derive_seed(self.seed, 3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > -1.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (-1, 1)", self.threshold)));
        }
        let m = 1usize << self.depth.min(16);
        if self.patch == 0 || self.patch % m != 0 {
            return Err(Error::Config(format!("patch {} must be a positive multiple of {m}", self.patch)));
        }
        if self.batch == 0 || self.steps_per_epoch == 0 || self.window_stride == 0 {
            return Err(Error::Config("batch, steps_per_epoch and window_stride must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("preset", self.kind);
        kv.set("seed", self.seed);
        kv.set("threshold", self.threshold);
        kv.set("epochs", self.epochs);
        kv.set("patch", self.patch);
        kv.set("batch", self.batch);
        kv.set("lr", self.lr);
        kv.set("steps_per_epoch", self.steps_per_epoch);
        kv.set("window_stride", self.window_stride);
        kv.set("augment", self.augment);
        kv.set("model.reduction", self.spectral_reduction);
        kv.set(
            "model.channels",
            self.encoder_channels.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        kv.set("model.depth", self.depth);
        kv
    }

    /// Overrides every field present in `kv`; `preset` itself is ignored.
    pub fn apply(&mut self, kv: &KvFile) -> Result<()> {
        fn set<T: FromStr>(kv: &KvFile, key: &str, slot: &mut T) -> Result<()> {
            if let Some(v) = kv.parse_opt(key)? {
                *slot = v;
            }
            Ok(())
        }
        set(kv, "seed", &mut self.seed)?;
        set(kv, "threshold", &mut self.threshold)?;
        set(kv, "epochs", &mut self.epochs)?;
        set(kv, "patch", &mut self.patch)?;
        set(kv, "batch", &mut self.batch)?;
        set(kv, "lr", &mut self.lr)?;
        set(kv, "steps_per_epoch", &mut self.steps_per_epoch)?;
        set(kv, "window_stride", &mut self.window_stride)?;
        set(kv, "augment", &mut self.augment)?;
        set(kv, "model.reduction", &mut self.spectral_reduction)?;
        set(kv, "model.depth", &mut self.depth)?;
        if let Some(v) = kv.get("model.channels") {
            self.encoder_channels = v
                .split(',')
                .map(|c| c.trim().parse().map_err(|_| Error::Config(format!("model.channels: bad entry {c:?}"))))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }
}
