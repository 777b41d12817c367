use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::geometry::{rasterize, random_flake};
use super::{HyperCube, SpectralLibrary};
use crate::encoding::{Bitfield, BitfieldMask, Polymer, NUM_CATEGORIES};
use crate::{Error, Result};

/// Blob counts per powerset category in the default scene.
pub const DEFAULT_BLOB_COUNTS: [usize; NUM_CATEGORIES] = [0, 8, 8, 2, 9, 3, 3, 3];
/// Extra primary-only blobs for the primary-only training corpus.
pub const EXTRA_PRIMARY_COUNTS: [usize; NUM_CATEGORIES] = [0, 8, 8, 0, 7, 0, 0, 0];

const PLACEMENT_ATTEMPTS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Indexed by powerset category; entry 0 is ignored.
    pub blob_counts: [usize; NUM_CATEGORIES],
    /// Range of a flake's vertical semi-axis in pixels.
    pub flake_half_height: (f64, f64),
    /// Range of a flake's width as a fraction of the foreground band.
    pub flake_width: (f64, f64),
    /// Background border kept on every side.
    pub margin: usize,
    /// Background rows between consecutive blobs.
    pub gap: usize,
    pub beta: (f32, f32),
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 896,
            width: 240,
            blob_counts: DEFAULT_BLOB_COUNTS,
            flake_half_height: (6.0, 9.0),
            flake_width: (0.85, 1.0),
            margin: 18,
            gap: 3,
            beta: (0.35, 0.65),
            seed: 7,
        }
    }
}

impl SceneConfig {
    /// Scene holding only the extra primary blobs.
    pub fn extra_primary(seed: u64) -> Self {
        Self { height: 512, blob_counts: EXTRA_PRIMARY_COUNTS, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.beta;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::Config(format!("beta range [{lo}, {hi}] must lie inside (0, 1)")));
        }
        let (a, b) = self.flake_half_height;
        if !(a >= 1.0 && a <= b) {
            return Err(Error::Config(format!("flake half height range [{a}, {b}] invalid")));
        }
        let (a, b) = self.flake_width;
        if !(a > 0.0 && a <= b && b <= 1.0) {
            return Err(Error::Config(format!("flake width range [{a}, {b}] must lie in (0, 1]")));
        }
        if self.width < 2 * self.margin + 4 || self.height < 2 * self.margin + 4 {
            return Err(Error::Config(format!(
                "{}x{} image leaves no room inside a {}-pixel margin",
                self.height, self.width, self.margin
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub category: Bitfield,
    /// Flat `row·W + col` indices, ascending.
    pub pixels: Vec<usize>,
    /// Mixing weight of each constituent; sums to 1.
    pub weights: Vec<(Polymer, f32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScene {
    pub cube: HyperCube,
    pub truth: BitfieldMask,
    pub blobs: Vec<Blob>,
}

struct Flake {
    polymer: Polymer,
    runs: Vec<(usize, usize, usize)>,
}

fn draw_weights(rng: &mut ChaCha8Rng, category: Bitfield, beta: (f32, f32)) -> Vec<(Polymer, f32)> {
    let polymers: Vec<Polymer> = category.polymers().collect();
    let draw = |rng: &mut ChaCha8Rng| if beta.0 < beta.1 { rng.random_range(beta.0..=beta.1) } else { beta.0 };
    match polymers.len() {
        1 => vec![(polymers[0], 1.0)],
        2 => {
            let b = draw(rng);
            vec![(polymers[0], b), (polymers[1], 1.0 - b)]
        }
        _ => {
            let raw: Vec<f32> = polymers.iter().map(|_| draw(rng)).collect();
            let total: f32 = raw.iter().sum();
            polymers.into_iter().zip(raw).map(|(p, u)| (p, u / total)).collect()
        }
    }
}

/// Lays blobs out in vertical lanes, one blob per lane. Returns the flakes of
/// each blob or the categories that did not fit.
fn layout(
    config: &SceneConfig,
    order: &[Bitfield],
    rng: &mut ChaCha8Rng,
    shrink: f64,
) -> std::result::Result<Vec<Vec<Flake>>, Vec<Bitfield>> {
    let band_lo = config.margin as f64;
    let band = (config.width - 2 * config.margin) as f64;
    let bottom = (config.height - config.margin) as f64;
    let mut y = config.margin as f64;
    let mut placed = Vec::with_capacity(order.len());
    let mut unplaced = Vec::new();
    for &category in order {
        let mut polymers: Vec<Polymer> = category.polymers().collect();
        polymers.shuffle(rng);
        let ry = rng.random_range(config.flake_half_height.0..=config.flake_half_height.1) * shrink;
        let offset = match polymers.len() {
            1 => 0.0,
            2 => ry * rng.random_range(0.5..0.7),
            _ => ry * rng.random_range(0.35..0.45),
        };
        let extent = 2.0 * ry + offset * (polymers.len() - 1) as f64;
        if y + extent > bottom {
            unplaced.push(category);
            continue;
        }
        let flakes = polymers
            .iter()
            .enumerate()
            .map(|(i, &polymer)| {
                let rx = 0.5 * band * rng.random_range(config.flake_width.0..=config.flake_width.1);
                let slack = band - 2.0 * rx;
                let cx = band_lo + rx + if slack > 0.0 { rng.random_range(0.0..slack) } else { 0.0 };
                let cy = y + ry + offset * i as f64;
                let outline = random_flake(rng, cx, cy, rx, ry);
                Flake { polymer, runs: rasterize(&outline, config.height, config.width) }
            })
            .collect();
        placed.push(flakes);
        y += extent.ceil() + config.gap as f64;
    }
    if unplaced.is_empty() {
        Ok(placed)
    } else {
        Err(unplaced)
    }
}

/// Renders a scene of stacked flakes. Single-class pixels take the pure
/// signature, overlap pixels the blob's convex mix of the covering flakes;
/// illumination and additive noise come from `library.noise`.
pub fn generate_scene(config: &SceneConfig, library: &SpectralLibrary) -> Result<LabeledScene> {
    config.validate()?;
    let (height, width, bands) = (config.height, config.width, library.bands);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<Bitfield> = Vec::new();
    for (index, &count) in config.blob_counts.iter().enumerate().skip(1) {
        order.extend(std::iter::repeat_n(Bitfield::from_index(index)?, count));
    }
    order.shuffle(&mut rng);

    let mut attempt = 0;
    let lanes = loop {
        match layout(config, &order, &mut rng, 1.0 - 0.1 * attempt as f64) {
            Ok(lanes) => break lanes,
            Err(unplaced) if attempt + 1 == PLACEMENT_ATTEMPTS => {
                let names: Vec<String> = unplaced.iter().map(|b| b.name()).collect();
                return Err(Error::Generation(format!(
                    "{} blob(s) did not fit a {height}x{width} image after {PLACEMENT_ATTEMPTS} attempts: {}",
                    unplaced.len(),
                    names.join(", ")
                )));
            }
            Err(_) => attempt += 1,
        }
    };

    let mut truth = BitfieldMask::background(height, width);
    let mut cube = HyperCube::zeros(height, width, bands);
    for r in 0..height {
        for c in 0..width {
            cube.pixel_mut(r, c).copy_from_slice(library.background());
        }
    }
    let mut blobs = Vec::with_capacity(lanes.len());
    for (flakes, &category) in lanes.iter().zip(&order) {
        let weights = draw_weights(&mut rng, category, config.beta);
        let mut pixels = Vec::new();
        for flake in flakes {
            for &(r, c0, c1) in &flake.runs {
                for c in c0..c1 {
                    let idx = r * width + c;
                    let current = truth.data()[idx];
                    if current.is_background() {
                        pixels.push(idx);
                    }
                    truth.set(r, c, current.with(flake.polymer));
                }
            }
        }
        pixels.sort_unstable();
        for &idx in &pixels {
            let label = truth.data()[idx];
            let local: Vec<(Polymer, f32)> = weights.iter().copied().filter(|(p, _)| label.has(*p)).collect();
            let total: f32 = local.iter().map(|(_, w)| w).sum();
            let spectrum = if local.len() == 1 {
                library.signature(local[0].0).to_vec()
            } else if local.len() == weights.len() {
                library.mix(&local)
            } else {
                let renorm: Vec<(Polymer, f32)> = local.iter().map(|&(p, w)| (p, w / total)).collect();
                library.mix(&renorm)
            };
            cube.pixel_mut(idx / width, idx % width).copy_from_slice(&spectrum);
        }
        blobs.push(Blob { category, pixels, weights });
    }

    add_noise(&mut cube, library, config.seed);
    Ok(LabeledScene { cube, truth, blobs })
}

fn add_noise(cube: &mut HyperCube, library: &SpectralLibrary, seed: u64) {
    let noise = library.noise;
    if noise.additive == 0.0 && noise.multiplicative == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (h, w) = (cube.height(), cube.width());
    for r in 0..h {
        for c in 0..w {
            let z: f32 = StandardNormal.sample(&mut rng);
            let illumination = 1.0 + noise.multiplicative * z;
            for v in cube.pixel_mut(r, c) {
                let n: f32 = if noise.additive > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
                *v = (illumination * *v + noise.additive * n).clamp(0.0, 1.0);
            }
        }
    }
}
