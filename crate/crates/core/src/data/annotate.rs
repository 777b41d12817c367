//! Automatic mask annotation: threshold the mean image, close small gaps,
//! label blobs and assign each region the nearest reference category.

use std::collections::VecDeque;

use super::library::l2_distance;
use super::{HyperCube, SpectralLibrary};
use crate::encoding::{Bitfield, BitfieldMask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnotateConfig {
    /// Minimum gap between foreground and background mean reflectance for
    /// the Otsu split to count as foreground at all.
    pub min_contrast: f32,
    pub closing_iterations: usize,
    /// Sub-regions smaller than this are merged into their largest neighbour.
    pub min_region: usize,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self { min_contrast: 0.05, closing_iterations: 1, min_region: 12 }
    }
}

const OTSU_BINS: usize = 256;

/// Otsu's threshold over `values`; `None` when the values are constant.
pub fn otsu_threshold(values: &[f32]) -> Option<f32> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(hi > lo) {
        return None;
    }
    let scale = OTSU_BINS as f32 / (hi - lo);
    let mut hist = [0u64; OTSU_BINS];
    for &v in values {
        hist[(((v - lo) * scale) as usize).min(OTSU_BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let (mut best, mut best_bin) = (-1.0f64, 0usize);
    for (i, &n) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += n as f64;
        sum0 += i as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_bin = i;
        }
    }
    Some(lo + (best_bin + 1) as f32 / scale)
}

fn neighbours(idx: usize, height: usize, width: usize) -> impl Iterator<Item = usize> {
    let (r, c) = ((idx / width) as isize, (idx % width) as isize);
    (-1..=1isize)
        .flat_map(move |dr| (-1..=1isize).map(move |dc| (r + dr, c + dc)))
        .filter(move |&(y, x)| {
            (y, x) != (r, c) && y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width
        })
        .map(move |(y, x)| y as usize * width + x as usize)
}

/// 3×3 dilation; only in-image neighbours are considered.
pub fn dilate(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    (0..mask.len()).map(|i| mask[i] || neighbours(i, height, width).any(|j| mask[j])).collect()
}

/// 3×3 erosion; only in-image neighbours are considered.
pub fn erode(mask: &[bool], height: usize, width: usize) -> Vec<bool> {
    (0..mask.len()).map(|i| mask[i] && neighbours(i, height, width).all(|j| mask[j])).collect()
}

pub fn close(mask: &[bool], height: usize, width: usize, iterations: usize) -> Vec<bool> {
    let mut out = mask.to_vec();
    for _ in 0..iterations {
        out = dilate(&out, height, width);
    }
    for _ in 0..iterations {
        out = erode(&out, height, width);
    }
    out
}

/// 8-connected labelling of active pixels where neighbours join when
/// `same(a, b)` holds. Labels start at 0 in raster order of first pixel;
/// inactive pixels get `u32::MAX`.
pub fn label_components(
    height: usize,
    width: usize,
    active: impl Fn(usize) -> bool,
    same: impl Fn(usize, usize) -> bool,
) -> (Vec<u32>, usize) {
    let mut labels = vec![u32::MAX; height * width];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..height * width {
        if labels[start] != u32::MAX || !active(start) {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(p, height, width) {
                if labels[q] == u32::MAX && active(q) && same(p, q) {
                    labels[q] = count;
                    queue.push_back(q);
                }
            }
        }
        count += 1;
    }
    (labels, count as usize)
}

fn nearest(spectrum: &[f32], references: &[(Bitfield, Vec<f32>)]) -> usize {
    let mut best = (f32::INFINITY, 0);
    for (i, (_, r)) in references.iter().enumerate() {
        let d = l2_distance(spectrum, r);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Foreground mask of `cube`: Otsu split of the mean image followed by the
/// configured closing. Empty when foreground and background are too close.
pub fn foreground(cube: &HyperCube, config: &AnnotateConfig) -> Vec<bool> {
    let (h, w) = (cube.height(), cube.width());
    let mean = cube.mean_image();
    let Some(t) = otsu_threshold(&mean) else {
        return vec![false; h * w];
    };
    let fg: Vec<bool> = mean.iter().map(|&m| m > t).collect();
    let avg = |want: bool| {
        let (s, n) = mean
            .iter()
            .zip(&fg)
            .filter(|(_, &f)| f == want)
            .fold((0.0f64, 0usize), |(s, n), (&m, _)| (s + m as f64, n + 1));
        if n == 0 { 0.0 } else { s / n as f64 }
    };
    if ((avg(true) - avg(false)) as f32) < config.min_contrast {
        return vec![false; h * w];
    }
    close(&fg, h, w, config.closing_iterations)
}

/// Annotates `cube` against the seven non-background references of
/// `library`. Each blob is split into regions of pixels sharing the same
/// nearest reference (judged on the 3×3 foreground mean around the pixel); regions under `min_region` pixels are merged into the
/// neighbour they touch most, and every final region takes the category
/// nearest to its mean spectrum.
pub fn annotate(cube: &HyperCube, library: &SpectralLibrary, config: &AnnotateConfig) -> BitfieldMask {
    let (h, w) = (cube.height(), cube.width());
    let fg = foreground(cube, config);
    let references: Vec<(Bitfield, Vec<f32>)> =
        Bitfield::all().skip(1).map(|b| (b, library.reference(b))).collect();
    let bands = cube.bands();
    let mut local = vec![0.0f32; bands];
    let nearest_px: Vec<u8> = (0..h * w)
        .map(|i| {
            if !fg[i] {
                return u8::MAX;
            }
            local.copy_from_slice(cube.spectrum(i));
            let mut n = 1.0f32;
            for j in neighbours(i, h, w).filter(|&j| fg[j]) {
                for (a, &v) in local.iter_mut().zip(cube.spectrum(j)) {
                    *a += v;
                }
                n += 1.0;
            }
            local.iter_mut().for_each(|a| *a /= n);
            nearest(&local, &references) as u8
        })
        .collect();
    let (regions, count) = label_components(h, w, |i| fg[i], |a, b| nearest_px[a] == nearest_px[b]);

    let mut size = vec![0usize; count];
    for &r in regions.iter().filter(|&&r| r != u32::MAX) {
        size[r as usize] += 1;
    }
    let mut parent: Vec<usize> = (0..count).collect();
    let mut small: Vec<usize> = (0..count).filter(|&r| size[r] < config.min_region).collect();
    small.sort_by_key(|&r| (size[r], r));
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &r) in regions.iter().enumerate() {
        if r != u32::MAX {
            members[r as usize].push(i);
        }
    }
    for r in small {
        let root = find(&mut parent, r);
        if size[root] >= config.min_region {
            continue;
        }
        let mut contacts: Vec<(usize, usize)> = Vec::new();
        for &p in &members[r] {
            for q in neighbours(p, h, w) {
                if regions[q] == u32::MAX {
                    continue;
                }
                let other = find(&mut parent, regions[q] as usize);
                if other == root {
                    continue;
                }
                match contacts.iter_mut().find(|(o, _)| *o == other) {
                    Some((_, n)) => *n += 1,
                    None => contacts.push((other, 1)),
                }
            }
        }
        if let Some(&(target, _)) = contacts.iter().max_by_key(|&&(o, n)| (n, std::cmp::Reverse(o))) {
            parent[root] = target;
            size[target] += size[root];
        }
    }

    let mut sums = vec![vec![0.0f64; bands]; count];
    let mut counts = vec![0usize; count];
    let roots: Vec<usize> = (0..count).map(|r| find(&mut parent, r)).collect();
    for (i, &r) in regions.iter().enumerate() {
        if r == u32::MAX {
            continue;
        }
        let root = roots[r as usize];
        counts[root] += 1;
        for (s, &v) in sums[root].iter_mut().zip(cube.spectrum(i)) {
            *s += v as f64;
        }
    }
    let category: Vec<Bitfield> = (0..count)
        .map(|r| {
            if counts[r] == 0 {
                return Bitfield::BACKGROUND;
            }
            let mean: Vec<f32> = sums[r].iter().map(|s| (s / counts[r] as f64) as f32).collect();
            references[nearest(&mean, &references)].0
        })
        .collect();
    let data = regions
        .iter()
        .map(|&r| if r == u32::MAX { Bitfield::BACKGROUND } else { category[roots[r as usize]] })
        .collect();
    BitfieldMask::from_vec(h, w, data).expect("annotation keeps the cube extent")
}

/// Fraction of pixels where the two masks agree.
pub fn pixel_agreement(a: &BitfieldMask, b: &BitfieldMask) -> f64 {
    let same = a.data().iter().zip(b.data()).filter(|(x, y)| x == y).count();
    same as f64 / a.data().len().max(1) as f64
}

/// Chessboard distance from each pixel to the nearest border between an
/// overlap region and anything else (both sides of the border count as
/// distance 0). `u32::MAX` when the mask has no overlap pixels.
pub fn overlap_border_distance(truth: &BitfieldMask) -> Vec<u32> {
    let (h, w) = (truth.height(), truth.width());
    let d = truth.data();
    let mut dist = vec![u32::MAX; h * w];
    let mut queue = VecDeque::new();
    for i in 0..h * w {
        let on_border = neighbours(i, h, w).any(|j| d[j] != d[i] && (d[i].is_overlap() || d[j].is_overlap()));
        if on_border {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in neighbours(p, h, w) {
            if dist[q] == u32::MAX {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        }
    }
    dist
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgreementReport {
    pub agreement: f64,
    pub disagreements: usize,
    /// Disagreeing pixels within `radius` of an overlap border.
    pub near_overlap_border: usize,
    pub radius: u32,
}

impl AgreementReport {
    pub fn near_fraction(&self) -> f64 {
        if self.disagreements == 0 { 1.0 } else { self.near_overlap_border as f64 / self.disagreements as f64 }
    }
}

pub fn agreement_report(annotated: &BitfieldMask, truth: &BitfieldMask, radius: u32) -> AgreementReport {
    let dist = overlap_border_distance(truth);
    let mut disagreements = 0;
    let mut near = 0;
    for (i, (a, t)) in annotated.data().iter().zip(truth.data()).enumerate() {
        if a != t {
            disagreements += 1;
            if dist[i] <= radius {
                near += 1;
            }
        }
    }
    AgreementReport {
        agreement: pixel_agreement(annotated, truth),
        disagreements,
        near_overlap_border: near,
        radius,
    }
}
