use super::HyperCube;
use crate::encoding::BitfieldMask;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSlice {
    pub cube: HyperCube,
    pub truth: BitfieldMask,
    /// Top-left corner in the source image.
    pub row: usize,
    pub col: usize,
}

/// Foreground box kept after margin removal, half-open.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

/// Removed margin strips, kept so the source can be rebuilt exactly.
#[derive(Clone, Debug, PartialEq)]
struct Margins {
    top: (HyperCube, BitfieldMask),
    bottom: (HyperCube, BitfieldMask),
    left: (HyperCube, BitfieldMask),
    right: (HyperCube, BitfieldMask),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicedScene {
    pub test: SceneSlice,
    pub train: SceneSlice,
    pub validation: SceneSlice,
    pub bounds: Bounds,
    margins: Margins,
}

fn strip(cube: &HyperCube, mask: &BitfieldMask, r: usize, c: usize, rows: usize, cols: usize) -> Result<(HyperCube, BitfieldMask)> {
    Ok((cube.crop(r, c, rows, cols)?, mask.crop(r, c, rows, cols)?))
}

/// Drops leading and trailing all-background rows and columns (judged on
/// `truth`), trims the remaining width down to a multiple of three by
/// shaving columns off the right, and cuts three equal vertical slices:
/// left is test, middle is train, right is validation.
pub fn slice_scene(cube: &HyperCube, truth: &BitfieldMask) -> Result<SlicedScene> {
    let (h, w) = (truth.height(), truth.width());
    if cube.height() != h || cube.width() != w {
        return Err(Error::Dimension(format!(
            "cube {}x{} and mask {h}x{w} differ",
            cube.height(),
            cube.width()
        )));
    }
    let fg = |r: usize, c: usize| !truth.get(r, c).is_background();
    let rows: Vec<usize> = (0..h).filter(|&r| (0..w).any(|c| fg(r, c))).collect();
    let cols: Vec<usize> = (0..w).filter(|&c| (0..h).any(|r| fg(r, c))).collect();
    let (Some(&row0), Some(&last_row), Some(&col0), Some(&last_col)) =
        (rows.first(), rows.last(), cols.first(), cols.last())
    else {
        return Err(Error::Slice("image is all background".into()));
    };
    let row1 = last_row + 1;
    let part = (last_col + 1 - col0) / 3;
    if part == 0 {
        return Err(Error::Slice(format!("foreground only {} column(s) wide", last_col + 1 - col0)));
    }
    let col1 = col0 + 3 * part;
    let height = row1 - row0;
    let cut = |k: usize| -> Result<SceneSlice> {
        let col = col0 + k * part;
        let (cube, truth) = strip(cube, truth, row0, col, height, part)?;
        Ok(SceneSlice { cube, truth, row: row0, col })
    };
    let margins = Margins {
        top: strip(cube, truth, 0, 0, row0, w)?,
        bottom: strip(cube, truth, row1, 0, h - row1, w)?,
        left: strip(cube, truth, row0, 0, height, col0)?,
        right: strip(cube, truth, row0, col1, height, w - col1)?,
    };
    Ok(SlicedScene {
        test: cut(0)?,
        train: cut(1)?,
        validation: cut(2)?,
        bounds: Bounds { row0, row1, col0, col1 },
        margins,
    })
}

impl SlicedScene {
    /// Stitches slices and margins back into the source image.
    pub fn reassemble(&self) -> Result<(HyperCube, BitfieldMask)> {
        let m = &self.margins;
        let band = HyperCube::hconcat(&[
            &m.left.0,
            &self.test.cube,
            &self.train.cube,
            &self.validation.cube,
            &m.right.0,
        ])?;
        let band_mask = BitfieldMask::hconcat(&[
            &m.left.1,
            &self.test.truth,
            &self.train.truth,
            &self.validation.truth,
            &m.right.1,
        ])?;
        Ok((
            HyperCube::vconcat(&[&m.top.0, &band, &m.bottom.0])?,
            BitfieldMask::vconcat(&[&m.top.1, &band_mask, &m.bottom.1])?,
        ))
    }

    pub fn slices(&self) -> [(&'static str, &SceneSlice); 3] {
        [("test", &self.test), ("train", &self.train), ("validation", &self.validation)]
    }
}
