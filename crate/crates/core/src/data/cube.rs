use crate::{Error, Result};

/// Reflectance raster stored band-interleaved-by-pixel: the spectrum of
/// pixel `(r, c)` is the contiguous run `data[(r·W + c)·B ..][..B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
}

impl HyperCube {
    pub fn zeros(height: usize, width: usize, bands: usize) -> Self {
        Self { height, width, bands, data: vec![0.0; height * width * bands] }
    }

    pub fn from_vec(height: usize, width: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * bands {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width}x{bands} cube",
                data.len()
            )));
        }
        Ok(Self { height, width, bands, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let start = (row * self.width + col) * self.bands;
        &mut self.data[start..start + self.bands]
    }

    /// Spectrum of the pixel with flat index `row·W + col`.
    pub fn spectrum(&self, index: usize) -> &[f32] {
        &self.data[index * self.bands..(index + 1) * self.bands]
    }

    /// Per-pixel mean over bands.
    pub fn mean_image(&self) -> Vec<f32> {
        if self.bands == 0 {
            return vec![0.0; self.height * self.width];
        }
        self.data
            .chunks(self.bands)
            .map(|s| s.iter().sum::<f32>() / self.bands as f32)
            .collect()
    }

    pub fn crop(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Self> {
        if row + rows > self.height || col + cols > self.width {
            return Err(Error::Dimension(format!(
                "crop {rows}x{cols} at ({row},{col}) exceeds {}x{} cube",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(rows * cols * self.bands);
        for r in row..row + rows {
            let start = (r * self.width + col) * self.bands;
            data.extend_from_slice(&self.data[start..start + cols * self.bands]);
        }
        Ok(Self { height: rows, width: cols, bands: self.bands, data })
    }

    pub fn hconcat(parts: &[&HyperCube]) -> Result<Self> {
        let (height, bands) = parts.first().map_or((0, 0), |c| (c.height, c.bands));
        if parts.iter().any(|c| c.height != height || c.bands != bands) {
            return Err(Error::Dimension("hconcat of cubes with different heights or bands".into()));
        }
        let width = parts.iter().map(|c| c.width).sum();
        let mut data = Vec::with_capacity(height * width * bands);
        for r in 0..height {
            for c in parts {
                let row = c.width * bands;
                data.extend_from_slice(&c.data[r * row..(r + 1) * row]);
            }
        }
        Ok(Self { height, width, bands, data })
    }

    pub fn vconcat(parts: &[&HyperCube]) -> Result<Self> {
        let (width, bands) = parts.first().map_or((0, 0), |c| (c.width, c.bands));
        if parts.iter().any(|c| c.width != width || c.bands != bands) {
            return Err(Error::Dimension("vconcat of cubes with different widths or bands".into()));
        }
        let height = parts.iter().map(|c| c.height).sum();
        let data = parts.iter().flat_map(|c| c.data.iter().copied()).collect();
        Ok(Self { height, width, bands, data })
    }

    /// Channel-major `[B, rows, cols]` copy of a window, the layout the
    /// network consumes. Coordinates outside the cube replicate the nearest
    /// edge pixel.
    pub fn window_chw(&self, row: isize, col: isize, rows: usize, cols: usize) -> Vec<f32> {
        let plane = rows * cols;
        let mut out = vec![0.0; self.bands * plane];
        for y in 0..rows {
            let r = (row + y as isize).clamp(0, self.height as isize - 1) as usize;
            for x in 0..cols {
                let c = (col + x as isize).clamp(0, self.width as isize - 1) as usize;
                for (b, &v) in self.pixel(r, c).iter().enumerate() {
                    out[b * plane + y * cols + x] = v;
                }
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
