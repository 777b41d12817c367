use crate::encoding::{Bitfield, BitfieldMask, NUM_CATEGORIES};
use crate::{Error, Result};

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }

    /// Category seen in truth or prediction.
    pub fn is_defined(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Unweighted mean of per-category scores.
pub fn macro_average(scores: &[Score]) -> Score {
    let n = scores.len().max(1) as f64;
    Score {
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
    }
}

/// Pixel counts pooled over every scored image, one entry per powerset
/// category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CategoryMetrics {
    pub counts: [Counts; NUM_CATEGORIES],
}

impl CategoryMetrics {
    pub fn from_masks(truth: &BitfieldMask, prediction: &BitfieldMask) -> Result<Self> {
        let mut m = Self::default();
        m.add(truth, prediction)?;
        Ok(m)
    }

    pub fn add(&mut self, truth: &BitfieldMask, prediction: &BitfieldMask) -> Result<()> {
        if (truth.height(), truth.width()) != (prediction.height(), prediction.width()) {
            return Err(Error::Dimension(format!(
                "truth {}x{} vs prediction {}x{}",
                truth.height(),
                truth.width(),
                prediction.height(),
                prediction.width()
            )));
        }
        for (t, p) in truth.data().iter().zip(prediction.data()) {
            if t == p {
                self.counts[t.index()].tp += 1;
            } else {
                self.counts[t.index()].fn_ += 1;
                self.counts[p.index()].fp += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &CategoryMetrics) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
    }

    pub fn get(&self, category: Bitfield) -> Counts {
        self.counts[category.index()]
    }

    pub fn score(&self, category: Bitfield) -> Score {
        let c = self.get(category);
        Score { f1: c.f1(), precision: c.precision(), recall: c.recall() }
    }

    /// Macro average over categories that occur in truth or prediction; with
    /// every category present this is the plain mean over all eight.
    pub fn macro_average(&self) -> Score {
        let scores: Vec<Score> =
            Bitfield::all().filter(|b| self.get(*b).is_defined()).map(|b| self.score(b)).collect();
        macro_average(&scores)
    }
}

/// Recall statistics over pixels of one overlap category.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapComposition {
    pub category: Bitfield,
    pub pixels: u64,
    /// Prediction equals the true category.
    pub exact_recall: f64,
    /// Per true constituent: fraction of pixels with that bit predicted.
    pub bit_recall: Vec<(crate::encoding::Polymer, f64)>,
    /// Mean of `bit_recall`.
    pub constituent_recall: f64,
    /// Prediction is a non-empty subset of the true constituents.
    pub subset_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OverlapAnalysis {
    pub categories: Vec<OverlapComposition>,
    /// Pooled over every two-way overlap pixel.
    pub two_way_exact_recall: f64,
    pub two_way_constituent_recall: f64,
    pub two_way_pixels: u64,
}

#[derive(Clone, Copy, Default)]
struct OverlapTally {
    pixels: u64,
    exact: u64,
    subset: u64,
    bits: [u64; 3],
}

/// Per overlap category: exact recall, constituent-bit recall and the
/// non-empty-subset fraction. Categories without pixels are omitted.
pub fn overlap_composition(pairs: &[(&BitfieldMask, &BitfieldMask)]) -> Result<OverlapAnalysis> {
    let mut tally = [OverlapTally::default(); NUM_CATEGORIES];
    for (truth, pred) in pairs {
        if truth.data().len() != pred.data().len() {
            return Err(Error::Dimension("truth and prediction sizes differ".into()));
        }
        for (&t, &p) in truth.data().iter().zip(pred.data()) {
            if !t.is_overlap() {
                continue;
            }
            let e = &mut tally[t.index()];
            e.pixels += 1;
            e.exact += u64::from(t == p);
            e.subset += u64::from(!p.is_background() && p.is_subset_of(t));
            for poly in t.polymers() {
                e.bits[poly as usize] += u64::from(p.has(poly));
            }
        }
    }
    let mut out = OverlapAnalysis::default();
    let (mut exact2, mut bits2, mut bit_total2) = (0u64, 0u64, 0u64);
    for b in Bitfield::all().filter(|b| b.is_overlap()) {
        let e = tally[b.index()];
        if e.pixels == 0 {
            continue;
        }
        let bit_recall: Vec<_> = b.polymers().map(|p| (p, ratio(e.bits[p as usize], e.pixels))).collect();
        let constituent_recall = bit_recall.iter().map(|(_, r)| r).sum::<f64>() / bit_recall.len() as f64;
        if b.count() == 2 {
            out.two_way_pixels += e.pixels;
            exact2 += e.exact;
            bits2 += b.polymers().map(|p| e.bits[p as usize]).sum::<u64>();
            bit_total2 += 2 * e.pixels;
        }
        out.categories.push(OverlapComposition {
            category: b,
            pixels: e.pixels,
            exact_recall: ratio(e.exact, e.pixels),
            bit_recall,
            constituent_recall,
            subset_fraction: ratio(e.subset, e.pixels),
        });
    }
    out.two_way_exact_recall = ratio(exact2, out.two_way_pixels);
    out.two_way_constituent_recall = ratio(bits2, bit_total2);
    Ok(out)
}
