//! Synthetic polymer signatures standing in for measured SWIR spectra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{Bitfield, Polymer, NUM_PRIMARY};
use crate::{Error, Result};

pub const DEFAULT_BANDS: usize = 224;
pub const MIN_BANDS: usize = 8;
const MAX_RESAMPLES: usize = 100;
const PEAKS: usize = 5;
/// Mean reflectance a polymer signature must keep above the background so
/// foreground detection has contrast to work with.
const MIN_SIGNATURE_MEAN: f32 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation of per-band additive noise.
    pub additive: f32,
    /// Standard deviation of the per-pixel illumination factor around 1.
    pub multiplicative: f32,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { additive: 0.01, multiplicative: 0.02 }
    }
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel { additive: 0.0, multiplicative: 0.0 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralLibrary {
    pub seed: u64,
    pub bands: usize,
    signatures: [Vec<f32>; NUM_PRIMARY],
    background: Vec<f32>,
    pub noise: NoiseModel,
}

/// Minimum pairwise L2 distance between polymer signatures: 1.0 at 224
/// bands, scaled by `sqrt(B / 224)` so the per-band contrast is the same at
/// any band count.
pub fn separation_threshold(bands: usize) -> f32 {
    (bands as f32 / DEFAULT_BANDS as f32).sqrt()
}

pub fn l2_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt()
}

fn gaussian_mixture(rng: &mut ChaCha8Rng, bands: usize) -> Vec<f32> {
    let peaks: Vec<(f32, f32, f32)> = (0..PEAKS)
        .map(|_| {
            let amplitude = rng.random_range(-0.15..0.45);
            let center = rng.random_range(0.0..1.0);
            let width = rng.random_range(0.02..0.15);
            (amplitude, center, width)
        })
        .collect();
    (0..bands)
        .map(|b| {
            let lambda = b as f32 / (bands - 1) as f32;
            let v: f32 = 0.2
                + peaks
                    .iter()
                    .map(|&(a, mu, sigma)| a * (-(lambda - mu).powi(2) / (2.0 * sigma * sigma)).exp())
                    .sum::<f32>();
            v.clamp(0.0, 1.0)
        })
        .collect()
}

/// Draws three polymer signatures, each `clamp(0.2 + Σ₅ aⱼ·exp(−(λ−μⱼ)²/2σⱼ²), 0, 1)`
/// over normalised wavelength λ ∈ [0, 1], plus a dark rippled background.
/// Resamples until all pairs are at least [`separation_threshold`] apart.
pub fn generate_library(seed: u64, bands: usize) -> Result<SpectralLibrary> {
    if bands < MIN_BANDS {
        return Err(Error::Config(format!("need at least {MIN_BANDS} bands, got {bands}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let background = (0..bands)
        .map(|b| {
            let lambda = b as f32 / (bands - 1) as f32;
            0.05 + 0.005 * (std::f32::consts::TAU * 3.0 * lambda + phase).sin()
        })
        .collect();
    let delta = separation_threshold(bands);
    for _ in 0..MAX_RESAMPLES {
        let signatures: [Vec<f32>; NUM_PRIMARY] = std::array::from_fn(|_| gaussian_mixture(&mut rng, bands));
        let separated = (0..NUM_PRIMARY)
            .flat_map(|i| (i + 1..NUM_PRIMARY).map(move |j| (i, j)))
            .all(|(i, j)| l2_distance(&signatures[i], &signatures[j]) >= delta);
        let bright = signatures
            .iter()
            .all(|s| s.iter().sum::<f32>() / bands as f32 >= MIN_SIGNATURE_MEAN);
        if separated && bright {
            return Ok(SpectralLibrary { seed, bands, signatures, background, noise: NoiseModel::default() });
        }
    }
    Err(Error::Generation(format!(
        "no signature set with pairwise separation {delta} after {MAX_RESAMPLES} resamples"
    )))
}

impl SpectralLibrary {
    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn signature(&self, polymer: Polymer) -> &[f32] {
        &self.signatures[polymer as usize]
    }

    pub fn background(&self) -> &[f32] {
        &self.background
    }

    /// Convex combination `Σ wₚ·sₚ` of the polymer signatures.
    pub fn mix(&self, weights: &[(Polymer, f32)]) -> Vec<f32> {
        let mut out = vec![0.0; self.bands];
        for &(p, w) in weights {
            for (o, &s) in out.iter_mut().zip(self.signature(p)) {
                *o += w * s;
            }
        }
        out
    }

    /// Reference spectrum of a category: the background signature, a pure
    /// signature, or the equal-weight mix of the constituents.
    pub fn reference(&self, category: Bitfield) -> Vec<f32> {
        if category.is_background() {
            return self.background.clone();
        }
        let weight = 1.0 / category.count() as f32;
        let weights: Vec<(Polymer, f32)> = category.polymers().map(|p| (p, weight)).collect();
        self.mix(&weights)
    }

    pub fn min_separation(&self) -> f32 {
        let mut best = f32::INFINITY;
        for i in 0..NUM_PRIMARY {
            for j in i + 1..NUM_PRIMARY {
                best = best.min(l2_distance(&self.signatures[i], &self.signatures[j]));
            }
        }
        best
    }

    /// Little-endian dump of every spectrum, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.signatures
            .iter()
            .chain(std::iter::once(&self.background))
            .flat_map(|s| s.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }
}
