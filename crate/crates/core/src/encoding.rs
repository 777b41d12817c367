//! Bitfield labels: one bit per primary polymer, several bits for overlaps.
//!
//! Bit 0 is PP, bit 1 is PE, bit 2 is PET. The powerset category of a
//! bitfield is simply its unsigned value, and the textual form prints the
//! highest bit first, so PP+PE is `011`.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Number of primary classes (bits per label).
pub const NUM_PRIMARY: usize = 3;
/// Number of powerset categories, background included.
pub const NUM_CATEGORIES: usize = 1 << NUM_PRIMARY;

/// Default decoding threshold.
pub const DEFAULT_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polymer {
    Pp = 0,
    Pe = 1,
    Pet = 2,
}

impl Polymer {
    pub const ALL: [Polymer; NUM_PRIMARY] = [Polymer::Pp, Polymer::Pe, Polymer::Pet];

    pub fn from_index(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::Usage(format!("primary class id {id} outside [0, {NUM_PRIMARY})")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Polymer::Pp => "PP",
            Polymer::Pe => "PE",
            Polymer::Pet => "PET",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitfield(u8);

impl Bitfield {
    pub const BACKGROUND: Bitfield = Bitfield(0);

    /// Sets exactly the bits of the listed primary class ids.
    pub fn encode(classes: &[usize]) -> Result<Self> {
        classes.iter().try_fold(Self::BACKGROUND, |acc, &id| {
            Polymer::from_index(id).map(|p| acc.with(p))
        })
    }

    pub fn from_polymers(polymers: &[Polymer]) -> Self {
        polymers.iter().fold(Self::BACKGROUND, |acc, &p| acc.with(p))
    }

    pub fn with(self, polymer: Polymer) -> Self {
        Bitfield(self.0 | (1 << polymer as u8))
    }

    /// Inverse of [`Bitfield::index`].
    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_CATEGORIES {
            return Err(Error::Usage(format!("powerset index {index} outside [0, {NUM_CATEGORIES})")));
        }
        Ok(Bitfield(index as u8))
    }

    /// Powerset category: the unsigned value of the bit vector.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn has(self, polymer: Polymer) -> bool {
        self.bit(polymer as usize)
    }

    pub fn bit(self, i: usize) -> bool {
        i < NUM_PRIMARY && self.0 & (1 << i) != 0
    }

    pub fn bits(self) -> [bool; NUM_PRIMARY] {
        std::array::from_fn(|i| self.bit(i))
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_background(self) -> bool {
        self.0 == 0
    }

    pub fn is_primary(self) -> bool {
        self.count() == 1
    }

    pub fn is_overlap(self) -> bool {
        self.count() >= 2
    }

    pub fn is_subset_of(self, other: Bitfield) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn polymers(self) -> impl Iterator<Item = Polymer> {
        Polymer::ALL.into_iter().filter(move |&p| self.has(p))
    }

    /// Regression target: +1 for active bits, −1 for inactive ones.
    pub fn to_target(self) -> [f32; NUM_PRIMARY] {
        std::array::from_fn(|i| if self.bit(i) { 1.0 } else { -1.0 })
    }

    /// `Background`, `PP`, `PP+PE`, ...
    pub fn name(self) -> String {
        if self.is_background() {
            return "Background".to_string();
        }
        self.polymers().map(Polymer::name).collect::<Vec<_>>().join("+")
    }

    /// All categories in powerset order `000`..`111`.
    pub fn all() -> impl Iterator<Item = Bitfield> {
        (0..NUM_CATEGORIES as u8).map(Bitfield)
    }
}

impl fmt::Display for Bitfield {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..NUM_PRIMARY).rev() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitfield {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != NUM_PRIMARY || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::Usage(format!("expected {NUM_PRIMARY} binary digits, got {s:?}")));
        }
        let value = s.bytes().fold(0u8, |acc, b| (acc << 1) | (b - b'0'));
        Ok(Bitfield(value))
    }
}

/// Bit `i` is active iff `scores[i] > threshold`.
pub fn decode(scores: &[f32], threshold: f32) -> Bitfield {
    scores
        .iter()
        .take(NUM_PRIMARY)
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .fold(Bitfield::BACKGROUND, |acc, (i, _)| Bitfield(acc.0 | (1 << i)))
}

pub fn powerset_to_index(b: Bitfield) -> usize {
    b.index()
}

pub fn index_to_bitfield(index: usize) -> Result<Bitfield> {
    Bitfield::from_index(index)
}

pub fn bitfield_to_target(b: Bitfield) -> [f32; NUM_PRIMARY] {
    b.to_target()
}

/// Per-pixel bitfield labels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitfieldMask {
    height: usize,
    width: usize,
    data: Vec<Bitfield>,
}

impl BitfieldMask {
    pub fn background(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![Bitfield::BACKGROUND; height * width] }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Bitfield>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!("{} labels for a {height}x{width} mask", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Bitfield] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Bitfield {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Bitfield) {
        self.data[row * self.width + col] = value;
    }

    /// Pixel count per powerset category.
    pub fn category_counts(&self) -> [usize; NUM_CATEGORIES] {
        let mut counts = [0; NUM_CATEGORIES];
        for b in &self.data {
            counts[b.index()] += 1;
        }
        counts
    }

    pub fn to_powerset(&self) -> PowersetMask {
        PowersetMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|b| b.0).collect(),
        }
    }

    /// Copies the `rows × cols` window at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Self> {
        if row + rows > self.height || col + cols > self.width {
            return Err(Error::Dimension(format!(
                "crop {rows}x{cols} at ({row},{col}) exceeds {}x{} mask",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            data.extend_from_slice(&self.data[r * self.width + col..r * self.width + col + cols]);
        }
        Ok(Self { height: rows, width: cols, data })
    }

    /// Side-by-side concatenation of equally tall masks.
    pub fn hconcat(parts: &[&BitfieldMask]) -> Result<Self> {
        let height = parts.first().map_or(0, |m| m.height);
        if parts.iter().any(|m| m.height != height) {
            return Err(Error::Dimension("hconcat of masks with different heights".into()));
        }
        let width = parts.iter().map(|m| m.width).sum();
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for m in parts {
                data.extend_from_slice(&m.data[r * m.width..(r + 1) * m.width]);
            }
        }
        Ok(Self { height, width, data })
    }

    /// Stacks equally wide masks top to bottom.
    pub fn vconcat(parts: &[&BitfieldMask]) -> Result<Self> {
        let width = parts.first().map_or(0, |m| m.width);
        if parts.iter().any(|m| m.width != width) {
            return Err(Error::Dimension("vconcat of masks with different widths".into()));
        }
        let data: Vec<Bitfield> = parts.iter().flat_map(|m| m.data.iter().copied()).collect();
        Ok(Self { height: data.len() / width.max(1), width, data })
    }
}

/// Per-pixel powerset category indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowersetMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl PowersetMask {
    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!("{} labels for a {height}x{width} mask", data.len())));
        }
        if let Some(bad) = data.iter().find(|&&v| v as usize >= NUM_CATEGORIES) {
            return Err(Error::Usage(format!("powerset index {bad} outside [0, {NUM_CATEGORIES})")));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn to_bitfield(&self) -> BitfieldMask {
        BitfieldMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| Bitfield(v)).collect(),
        }
    }

    /// Channel-major one-hot raster `[NUM_CATEGORIES, H, W]`.
    pub fn to_one_hot(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; NUM_CATEGORIES * plane];
        for (i, &v) in self.data.iter().enumerate() {
            out[v as usize * plane + i] = 1.0;
        }
        out
    }

    /// Per-pixel argmax of a `[NUM_CATEGORIES, H, W]` raster; ties go to
    /// the lowest category index.
    pub fn from_scores(height: usize, width: usize, scores: &[f32]) -> Result<Self> {
        let plane = height * width;
        if scores.len() != NUM_CATEGORIES * plane {
            return Err(Error::Dimension(format!(
                "{} scores for {NUM_CATEGORIES}x{height}x{width}",
                scores.len()
            )));
        }
        let data = (0..plane)
            .map(|i| {
                let mut best = 0;
                for c in 1..NUM_CATEGORIES {
                    if scores[c * plane + i] > scores[best * plane + i] {
                        best = c;
                    }
                }
                best as u8
            })
            .collect();
        Ok(Self { height, width, data })
    }
}
