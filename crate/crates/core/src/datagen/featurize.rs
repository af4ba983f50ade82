//! Deterministic hand-crafted features for voxel grids and rendered views.
//!
//! Histograms use `bins` equal-width bins over `[0, 1]`; the last bin is
//! closed on the right so a value of exactly 1.0 lands in it. Histograms are
//! normalized to fractions, so they are independent of how many cells or
//! pixels contributed.

use crate::error::{Error, Result};

/// Dense colored occupancy grid with channels `(R, G, B, A)` in `[0, 1]`.
///
/// A cell is occupied when its alpha channel exceeds 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    data: Vec<f64>,
}

pub const VOXEL_CHANNELS: usize = 4;

impl VoxelGrid {
    pub fn empty(dims: [usize; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid("voxel grid resolution must be positive"));
        }
        Ok(Self {
            dims,
            data: vec![0.0; dims.iter().product::<usize>() * VOXEL_CHANNELS],
        })
    }

    pub fn from_data(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let grid = Self::empty(dims)?;
        if data.len() != grid.data.len() {
            return Err(Error::dim("voxel grid data", grid.data.len(), data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("voxel channel value {v} outside [0, 1]")));
        }
        Ok(Self { dims, data })
    }

    /// Raw 0-255 channel bytes, normalized into `[0, 1]`.
    pub fn from_u8(dims: [usize; 3], bytes: &[u8]) -> Result<Self> {
        Self::from_data(dims, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Grid with the listed cells set to the given RGBA values, in any order.
    pub fn from_cells(dims: [usize; 3], cells: &[([usize; 3], [f64; 4])]) -> Result<Self> {
        let mut grid = Self::empty(dims)?;
        for &(pos, rgba) in cells {
            grid.set(pos, rgba)?;
        }
        Ok(grid)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn offset(&self, [x, y, z]: [usize; 3]) -> Option<usize> {
        let [nx, ny, nz] = self.dims;
        (x < nx && y < ny && z < nz).then(|| ((x * ny + y) * nz + z) * VOXEL_CHANNELS)
    }

    pub fn set(&mut self, pos: [usize; 3], rgba: [f64; 4]) -> Result<()> {
        let off = self
            .offset(pos)
            .ok_or_else(|| Error::invalid(format!("voxel {pos:?} outside grid {:?}", self.dims)))?;
        if rgba.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("voxel channels {rgba:?} outside [0, 1]")));
        }
        self.data[off..off + VOXEL_CHANNELS].copy_from_slice(&rgba);
        Ok(())
    }

    pub fn get(&self, pos: [usize; 3]) -> Option<[f64; 4]> {
        self.offset(pos).map(|o| {
            let mut c = [0.0; 4];
            c.copy_from_slice(&self.data[o..o + VOXEL_CHANNELS]);
            c
        })
    }

    fn cells(&self) -> impl Iterator<Item = ([usize; 3], &[f64])> {
        let [_, ny, nz] = self.dims;
        self.data
            .chunks_exact(VOXEL_CHANNELS)
            .enumerate()
            .map(move |(i, c)| ([i / (ny * nz), (i / nz) % ny, i % nz], c))
    }
}

/// Equal-width bin index over `[0, 1]` with the last bin right-closed.
pub fn bin_index(value: f64, bins: usize) -> usize {
    let b = (value.clamp(0.0, 1.0) * bins as f64).floor() as usize;
    b.min(bins - 1)
}

/// `[occupancy fraction, centroid x/y/z, R hist, G hist, B hist]`, length `4 + 3·bins`.
pub fn featurize_voxel(grid: &VoxelGrid, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::invalid("bins must be at least 1"));
    }
    let [nx, ny, nz] = grid.dims;
    let mut occupied = 0usize;
    let mut centroid = [0.0f64; 3];
    let mut hist = vec![0.0f64; 3 * bins];
    for (pos, c) in grid.cells() {
        if c[3] <= 0.5 {
            continue;
        }
        occupied += 1;
        for (axis, (&p, &n)) in pos.iter().zip(&[nx, ny, nz]).enumerate() {
            centroid[axis] += (p as f64 + 0.5) / n as f64;
        }
        for ch in 0..3 {
            hist[ch * bins + bin_index(c[ch], bins)] += 1.0;
        }
    }
    if occupied == 0 {
        return Err(Error::invalid("voxel grid has no occupied cells"));
    }
    let n = occupied as f64;
    let mut out = Vec::with_capacity(4 + 3 * bins);
    out.push(n / (nx * ny * nz) as f64);
    out.extend(centroid.iter().map(|c| c / n));
    out.extend(hist.iter().map(|h| h / n));
    Ok(out)
}

/// An `H×W×3` image with channel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::dim("image data", height * width * 3, data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let o = (y * self.width + x) * 3;
        &self.data[o..o + 3]
    }
}

/// `[R hist, G hist, B hist, mean intensity, TL, TR, BL, BR quadrant means]`,
/// length `3·bins + 5`. Intensity is the mean of the three channels; pixel
/// `(y, x)` lies in quadrant row `2y / H` and column `2x / W`. A quadrant with
/// no pixels (a 1-pixel-tall or -wide image) reports the global mean.
pub fn featurize_view(image: &Image, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::invalid("bins must be at least 1"));
    }
    let (h, w) = (image.height, image.width);
    let mut hist = vec![0.0f64; 3 * bins];
    let mut quad_sum = [0.0f64; 4];
    let mut quad_n = [0usize; 4];
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = image.pixel(y, x);
            for ch in 0..3 {
                hist[ch * bins + bin_index(p[ch], bins)] += 1.0;
            }
            let intensity = (p[0] + p[1] + p[2]) / 3.0;
            let q = (2 * y / h) * 2 + 2 * x / w;
            quad_sum[q] += intensity;
            quad_n[q] += 1;
            total += intensity;
        }
    }
    let npix = (h * w) as f64;
    let mean = total / npix;
    let mut out: Vec<f64> = hist.iter().map(|c| c / npix).collect();
    out.push(mean);
    out.extend(
        quad_sum
            .iter()
            .zip(&quad_n)
            .map(|(&s, &n)| if n == 0 { mean } else { s / n as f64 }),
    );
    Ok(out)
}
