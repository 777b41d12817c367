//! A generated dataset: one labelled scene cut into test/train/validation
//! slices, plus a primary-only extra scene, with a key=value manifest.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::annotate::{agreement_report, annotate, AnnotateConfig};
use super::io::{read_cube, read_mask, write_cube, write_mask};
use super::library::{generate_library, NoiseModel, SpectralLibrary, DEFAULT_BANDS};
use super::scene::{generate_scene, LabeledScene, SceneConfig};
use super::split::{slice_scene, SlicedScene};
use super::HyperCube;
use crate::encoding::{Bitfield, BitfieldMask, NUM_CATEGORIES};
use crate::kv::KvFile;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";
pub const SPLITS: [&str; 3] = ["test", "train", "validation"];
pub const EXTRA: &str = "extra";

/// Independent sub-seed for a named purpose.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub bands: usize,
    pub noise: NoiseModel,
    /// Scene geometry; the `seed` fields are derived from `seed`.
    pub scene: SceneConfig,
    pub extra: SceneConfig,
    pub annotate: AnnotateConfig,
}

impl DatasetConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            bands: DEFAULT_BANDS,
            noise: NoiseModel::default(),
            scene: SceneConfig { seed: 0, ..SceneConfig::default() },
            extra: SceneConfig::extra_primary(0),
            annotate: AnnotateConfig::default(),
        }
    }

    fn scene_config(&self) -> SceneConfig {
        SceneConfig { seed: derive_seed(self.seed, 1), ..self.scene.clone() }
    }

    fn extra_config(&self) -> SceneConfig {
        SceneConfig { seed: derive_seed(self.seed, 2), ..self.extra.clone() }
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("seed", self.seed);
        kv.set("bands", self.bands);
        kv.set("noise.additive", self.noise.additive);
        kv.set("noise.multiplicative", self.noise.multiplicative);
        for (prefix, s) in [("scene", &self.scene), ("extra", &self.extra)] {
            kv.set(format!("{prefix}.height"), s.height);
            kv.set(format!("{prefix}.width"), s.width);
            kv.set(format!("{prefix}.margin"), s.margin);
            kv.set(format!("{prefix}.gap"), s.gap);
            kv.set(format!("{prefix}.blobs"), join(&s.blob_counts));
            kv.set(format!("{prefix}.flake_half_height"), join(&[s.flake_half_height.0, s.flake_half_height.1]));
            kv.set(format!("{prefix}.flake_width"), join(&[s.flake_width.0, s.flake_width.1]));
            kv.set(format!("{prefix}.beta"), join(&[s.beta.0, s.beta.1]));
        }
        kv.set("annotate.min_contrast", self.annotate.min_contrast);
        kv.set("annotate.closing_iterations", self.annotate.closing_iterations);
        kv.set("annotate.min_region", self.annotate.min_region);
        kv
    }

    /// Overrides every field present in `kv`.
    pub fn apply(&mut self, kv: &KvFile) -> Result<()> {
        fn set<T: std::str::FromStr>(kv: &KvFile, key: &str, slot: &mut T) -> Result<()> {
            if let Some(v) = kv.parse_opt(key)? {
                *slot = v;
            }
            Ok(())
        }
        set(kv, "seed", &mut self.seed)?;
        set(kv, "bands", &mut self.bands)?;
        set(kv, "noise.additive", &mut self.noise.additive)?;
        set(kv, "noise.multiplicative", &mut self.noise.multiplicative)?;
        for (prefix, s) in [("scene", &mut self.scene), ("extra", &mut self.extra)] {
            set(kv, &format!("{prefix}.height"), &mut s.height)?;
            set(kv, &format!("{prefix}.width"), &mut s.width)?;
            set(kv, &format!("{prefix}.margin"), &mut s.margin)?;
            set(kv, &format!("{prefix}.gap"), &mut s.gap)?;
            if let Some(v) = kv.get(&format!("{prefix}.blobs")) {
                s.blob_counts = split_array(v, &format!("{prefix}.blobs"))?;
            }
            for (key, slot) in [("flake_half_height", &mut s.flake_half_height), ("flake_width", &mut s.flake_width)] {
                if let Some(v) = kv.get(&format!("{prefix}.{key}")) {
                    let [a, b] = split_array(v, &format!("{prefix}.{key}"))?;
                    *slot = (a, b);
                }
            }
            if let Some(v) = kv.get(&format!("{prefix}.beta")) {
                let [a, b] = split_array(v, &format!("{prefix}.beta"))?;
                s.beta = (a, b);
            }
        }
        set(kv, "annotate.min_contrast", &mut self.annotate.min_contrast)?;
        set(kv, "annotate.closing_iterations", &mut self.annotate.closing_iterations)?;
        set(kv, "annotate.min_region", &mut self.annotate.min_region)?;
        Ok(())
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_array<T: std::str::FromStr + Copy + Default, const N: usize>(text: &str, key: &str) -> Result<[T; N]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(Error::Config(format!("{key} needs {N} comma-separated values, got {text:?}")));
    }
    let mut out = [T::default(); N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {p:?}")))?;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub library: SpectralLibrary,
    pub scene: LabeledScene,
    pub annotated: BitfieldMask,
    pub split: SlicedScene,
    pub extra: LabeledScene,
}

pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    let library = generate_library(config.seed, config.bands)?.with_noise(config.noise);
    let scene = generate_scene(&config.scene_config(), &library)?;
    let annotated = annotate(&scene.cube, &library, &config.annotate);
    let split = slice_scene(&scene.cube, &scene.truth)?;
    let extra = generate_scene(&config.extra_config(), &library)?;
    Ok(Dataset { config: config.clone(), library, scene, annotated, split, extra })
}

fn counts_line(mask: &BitfieldMask) -> String {
    join(&mask.category_counts())
}

impl Dataset {
    pub fn manifest(&self) -> KvFile {
        let mut kv = self.config.to_kv();
        let b = self.split.bounds;
        kv.set("slice.rows", format!("{},{}", b.row0, b.row1));
        kv.set("slice.cols", format!("{},{}", b.col0, b.col1));
        kv.set("pixels.scene", counts_line(&self.scene.truth));
        for (name, s) in self.split.slices() {
            kv.set(format!("pixels.{name}"), counts_line(&s.truth));
        }
        kv.set("pixels.extra", counts_line(&self.extra.truth));
        let report = agreement_report(&self.annotated, &self.scene.truth, 2);
        kv.set("annotation.agreement", format!("{:.6}", report.agreement));
        kv.set("annotation.near_overlap_border", format!("{:.6}", report.near_fraction()));
        kv
    }

    /// Writes `<split>.hsc`/`<split>.hbm` for the three slices and the extra
    /// scene, the full truth and annotated masks, and the manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, s) in self.split.slices() {
            write_cube(&dir.join(format!("{name}.hsc")), &s.cube)?;
            write_mask(&dir.join(format!("{name}.hbm")), &s.truth)?;
        }
        write_cube(&dir.join(format!("{EXTRA}.hsc")), &self.extra.cube)?;
        write_mask(&dir.join(format!("{EXTRA}.hbm")), &self.extra.truth)?;
        write_mask(&dir.join("scene_truth.hbm"), &self.scene.truth)?;
        write_mask(&dir.join("scene_annotated.hbm"), &self.annotated)?;
        self.manifest().write(&dir.join(MANIFEST))
    }

    pub fn slices(&self) -> DatasetSlices {
        let pair = |s: &super::split::SceneSlice| (s.cube.clone(), s.truth.clone());
        DatasetSlices {
            test: pair(&self.split.test),
            train: pair(&self.split.train),
            validation: pair(&self.split.validation),
            extra: (self.extra.cube.clone(), self.extra.truth.clone()),
        }
    }
}

/// Labelled cubes as consumed by training and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSlices {
    pub test: (HyperCube, BitfieldMask),
    pub train: (HyperCube, BitfieldMask),
    pub validation: (HyperCube, BitfieldMask),
    pub extra: (HyperCube, BitfieldMask),
}

impl DatasetSlices {
    pub fn read(dir: &Path) -> Result<Self> {
        let load = |name: &str| -> Result<(HyperCube, BitfieldMask)> {
            let cube = read_cube(&dir.join(format!("{name}.hsc")))?;
            let mask = read_mask(&dir.join(format!("{name}.hbm")))?;
            if (cube.height(), cube.width()) != (mask.height(), mask.width()) {
                return Err(Error::Dimension(format!(
                    "{name}: cube {}x{} but mask {}x{}",
                    cube.height(),
                    cube.width(),
                    mask.height(),
                    mask.width()
                )));
            }
            Ok((cube, mask))
        };
        Ok(Self { test: load("test")?, train: load("train")?, validation: load("validation")?, extra: load(EXTRA)? })
    }
}

/// Category pixel counts parsed back from a manifest line.
pub fn parse_counts(text: &str) -> Result<[usize; NUM_CATEGORIES]> {
    split_array(text, "pixel counts")
}

/// Categories with at least one pixel in `mask`.
pub fn present_categories(mask: &BitfieldMask) -> Vec<Bitfield> {
    let counts = mask.category_counts();
    Bitfield::all().filter(|b| counts[b.index()] > 0).collect()
}
