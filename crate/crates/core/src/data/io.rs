//! "HSC1" cube and "HBM1" mask files plus P6 pixmap exports.

use std::path::Path;

use super::HyperCube;
use crate::encoding::{Bitfield, BitfieldMask, NUM_CATEGORIES, NUM_PRIMARY};
use crate::{Error, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"HSC1";
pub const MASK_MAGIC: &[u8; 4] = b"HBM1";

/// Little-endian cursor that reports the offset of the first short read.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::format(
                0,
                format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(expected)),
            ));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.pos as u64, "size overflow"))?, what)?;
        Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.pos as u64, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn dim(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Dimension(format!("{what} {n} does not fit in u32")))
}

pub fn cube_to_bytes(cube: &HyperCube) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + cube.data().len() * 4);
    out.extend_from_slice(CUBE_MAGIC);
    for (n, what) in [(cube.height(), "height"), (cube.width(), "width"), (cube.bands(), "bands")] {
        out.extend_from_slice(&dim(n, what)?.to_le_bytes());
    }
    for v in cube.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn cube_from_bytes(bytes: &[u8]) -> Result<HyperCube> {
    let mut r = Reader::new(bytes);
    r.magic(CUBE_MAGIC)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let b = r.u32("bands")? as usize;
    let n = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(b))
        .ok_or_else(|| Error::format(4, "cube extent overflows"))?;
    let data = r.f32s(n, "cube payload")?;
    r.finish()?;
    HyperCube::from_vec(h, w, b, data)
}

pub fn mask_to_bytes(mask: &BitfieldMask) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + mask.data().len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&dim(mask.height(), "height")?.to_le_bytes());
    out.extend_from_slice(&dim(mask.width(), "width")?.to_le_bytes());
    out.push(NUM_PRIMARY as u8);
    out.extend(mask.data().iter().map(|b| b.index() as u8));
    Ok(out)
}

pub fn mask_from_bytes(bytes: &[u8]) -> Result<BitfieldMask> {
    let mut r = Reader::new(bytes);
    r.magic(MASK_MAGIC)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let k_offset = r.offset();
    let k = r.u8("bit count")? as usize;
    if k != NUM_PRIMARY {
        return Err(Error::format(k_offset, format!("mask has {k} bits per pixel, expected {NUM_PRIMARY}")));
    }
    let start = r.offset();
    let n = h.checked_mul(w).ok_or_else(|| Error::format(4, "mask extent overflows"))?;
    let payload = r.take(n, "mask payload")?;
    r.finish()?;
    let mut data = Vec::with_capacity(n);
    for (i, &v) in payload.iter().enumerate() {
        if v as usize >= NUM_CATEGORIES {
            return Err(Error::format(
                start + i as u64,
                format!("powerset index {v} at pixel {i} is not below {NUM_CATEGORIES}"),
            ));
        }
        data.push(Bitfield::from_index(v as usize)?);
    }
    BitfieldMask::from_vec(h, w, data)
}

pub fn write_cube(path: &Path, cube: &HyperCube) -> Result<()> {
    write_bytes(path, &cube_to_bytes(cube)?)
}

pub fn read_cube(path: &Path) -> Result<HyperCube> {
    cube_from_bytes(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn write_mask(path: &Path, mask: &BitfieldMask) -> Result<()> {
    write_bytes(path, &mask_to_bytes(mask)?)
}

pub fn read_mask(path: &Path) -> Result<BitfieldMask> {
    mask_from_bytes(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, message } => Error::format(offset, format!("{}: {message}", path.display())),
        other => other,
    }
}

/// Category colours for mask exports, indexed by powerset category.
pub const PALETTE: [[u8; 3]; NUM_CATEGORIES] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [145, 30, 180],
    [70, 240, 240],
    [255, 255, 255],
];

fn ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    out
}

/// False-colour view: three bands mapped to RGB, each stretched from its
/// own min..max to 0..255.
pub fn false_color(cube: &HyperCube, bands: [usize; 3]) -> Result<Vec<u8>> {
    if let Some(&b) = bands.iter().find(|&&b| b >= cube.bands()) {
        return Err(Error::Usage(format!("band {b} outside a {}-band cube", cube.bands())));
    }
    let n = cube.height() * cube.width();
    let mut rgb = vec![0u8; n * 3];
    for (ch, &band) in bands.iter().enumerate() {
        let values: Vec<f32> = (0..n).map(|i| cube.spectrum(i)[band]).collect();
        let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (i, v) in values.iter().enumerate() {
            rgb[i * 3 + ch] = (((v - lo) / span) * 255.0).round() as u8;
        }
    }
    Ok(ppm(cube.width(), cube.height(), &rgb))
}

/// Default false-colour bands: evenly spaced across the spectrum.
pub fn default_view_bands(bands: usize) -> [usize; 3] {
    [bands / 6, bands / 2, bands * 5 / 6]
}

pub fn mask_view(mask: &BitfieldMask) -> Vec<u8> {
    let rgb: Vec<u8> = mask.data().iter().flat_map(|b| PALETTE[b.index()]).collect();
    ppm(mask.width(), mask.height(), &rgb)
}

pub fn export_view(cube_path: &Path, cube: &HyperCube, mask: Option<(&Path, &BitfieldMask)>) -> Result<()> {
    write_bytes(cube_path, &false_color(cube, default_view_bands(cube.bands()))?)?;
    if let Some((path, mask)) = mask {
        write_bytes(path, &mask_view(mask))?;
    }
    Ok(())
}
