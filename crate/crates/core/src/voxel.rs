//! Temporal voxel grids and the event ROI mask.
//!
//! The mask pipeline runs on a voxel grid:
//!
//! 1. `|v| / max|v|` over the whole grid
//! 2. per temporal channel, a separable Gaussian blur
//! 3. threshold (`> threshold`, 0.01 by default)
//! 4. binary dilation with a square structuring element
//! 5. binary median filter
//!
//! and the channel masks are OR-ed together. All filters replicate the
//! border pixels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{EventStream, Timestamp};

/// `bins x height x width` signed polarity accumulator, bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    bins: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, height: usize, width: usize) -> Self {
        Self { bins, height, width, values: vec![0.0; bins * height * width] }
    }

    pub fn from_values(bins: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if bins < 1 {
            return Err(Error::Config("voxel grid needs at least one bin".into()));
        }
        if values.len() != bins * height * width {
            return Err(Error::Shape(format!(
                "grid {bins}x{height}x{width} needs {} values, got {}",
                bins * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("voxel grid contains non-finite values".into()));
        }
        Ok(Self { bins, height, width, values })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, bin: usize, y: usize, x: usize) -> f64 {
        self.values[(bin * self.height + y) * self.width + x]
    }

    pub fn channel(&self, bin: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[bin * n..(bin + 1) * n]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Accumulates the events of `[t0, t1)` into `bins` temporal bins.
///
/// An event at `t` sits at `u = (t - t0) / (t1 - t0) * (bins - 1)` and its
/// polarity is split linearly between bins `floor(u)` and `floor(u) + 1`.
pub fn voxelize(stream: &EventStream, t0: Timestamp, t1: Timestamp, bins: usize) -> Result<VoxelGrid> {
    if bins < 1 {
        return Err(Error::Config(format!("bins must be >= 1, got {bins}")));
    }
    if t0 >= t1 {
        return Err(Error::InvalidRange { t0, t1 });
    }
    let (w, h) = (stream.width() as usize, stream.height() as usize);
    let plane = w * h;
    let mut grid = VoxelGrid::zeros(bins, h, w);
    let values = &mut grid.values;
    let scale = (bins - 1) as f64 / (t1 - t0) as f64;
    let last = bins - 1;

    for e in stream.window(t0, t1) {
        let u = (e.t - t0) as f64 * scale;
        let k = (u as usize).min(last);
        let frac = u - k as f64;
        let p = e.p as f64;
        let idx = k * plane + e.y as usize * w + e.x as usize;
        values[idx] += p * (1.0 - frac);
        if k < last {
            values[idx + plane] += p * frac;
        }
    }
    Ok(grid)
}

/// `|v| / max|v|`; an all-zero grid stays all zero.
pub fn normalize_abs(grid: &VoxelGrid) -> VoxelGrid {
    let max = grid.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let values = if max > 0.0 {
        grid.values.iter().map(|v| v.abs() / max).collect()
    } else {
        vec![0.0; grid.values.len()]
    };
    VoxelGrid { bins: grid.bins, height: grid.height, width: grid.width, values }
}

/// Single-channel `height x width` image of floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "plane {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Sum-normalised 1-D Gaussian taps `exp(-i^2 / 2 sigma^2)` for
/// `i in -radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as i64;
    let taps: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Runs `f` over the clamped `2r+1` neighbourhood along rows, then columns.
fn separable<T: Copy + Send + Sync>(
    data: &[T],
    height: usize,
    width: usize,
    radius: usize,
    init: T,
    f: impl Fn(T, usize, T) -> T + Sync,
) -> Vec<T> {
    if height == 0 || width == 0 {
        return data.to_vec();
    }
    let r = radius as isize;
    let mut tmp = vec![init; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = init;
            for (j, d) in (-r..=r).enumerate() {
                acc = f(acc, j, row[clamp_index(x as isize + d, width)]);
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![init; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = init;
            for (j, d) in (-r..=r).enumerate() {
                acc = f(acc, j, tmp[clamp_index(y as isize + d, height) * width + x]);
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(plane: &Plane, sigma: f64, radius: usize) -> Result<Plane> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("gaussian sigma must be > 0, got {sigma}")));
    }
    let k = gaussian_kernel(sigma, radius);
    let data = separable(&plane.data, plane.height, plane.width, radius, 0.0, |acc, j, v| acc + k[j] * v);
    Ok(Plane { height: plane.height, width: plane.width, data })
}

/// Binary dilation with a `(2r+1)^2` square.
pub fn dilate(mask: &[u8], height: usize, width: usize, radius: usize) -> Vec<u8> {
    separable(mask, height, width, radius, 0u8, |acc, _, v| acc.max(v))
}

/// Binary median over a `(2r+1)^2` window: 1 where more than half the
/// window is set.
pub fn median_binary(mask: &[u8], height: usize, width: usize, radius: usize) -> Vec<u8> {
    let side = 2 * radius + 1;
    let half = (side * side / 2) as u32;
    let wide: Vec<u32> = mask.iter().map(|&v| v as u32).collect();
    separable(&wide, height, width, radius, 0u32, |acc, _, v| acc + v)
        .into_iter()
        .map(|count| u8::from(count > half))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiMaskConfig {
    pub gaussian_sigma: f64,
    pub gaussian_radius: usize,
    pub threshold: f64,
    pub dilate_radius: usize,
    pub median_radius: usize,
}

impl Default for RoiMaskConfig {
    fn default() -> Self {
        Self { gaussian_sigma: 1.0, gaussian_radius: 2, threshold: 0.01, dilate_radius: 2, median_radius: 1 }
    }
}

impl RoiMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config(format!("mask threshold must be > 0, got {}", self.threshold)));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::Config(format!("gaussian sigma must be > 0, got {}", self.gaussian_sigma)));
        }
        Ok(())
    }
}

/// Binary `height x width` mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u8>,
}

impl RoiMask {
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }
}

/// Mask of one already-normalised channel: blur, threshold, dilate, median.
pub fn channel_mask(normalized: &[f64], height: usize, width: usize, cfg: &RoiMaskConfig) -> Result<Vec<u8>> {
    let plane = Plane::new(height, width, normalized.to_vec())?;
    let blurred = gaussian_blur(&plane, cfg.gaussian_sigma, cfg.gaussian_radius)?;
    let binary: Vec<u8> = blurred.data.iter().map(|&v| u8::from(v > cfg.threshold)).collect();
    let dilated = dilate(&binary, height, width, cfg.dilate_radius);
    Ok(median_binary(&dilated, height, width, cfg.median_radius))
}

/// Event ROI mask of a voxel grid; channels are processed in parallel and
/// OR-ed together.
pub fn roi_mask(grid: &VoxelGrid, cfg: &RoiMaskConfig) -> Result<RoiMask> {
    cfg.validate()?;
    let (h, w) = (grid.height, grid.width);
    let norm = normalize_abs(grid);
    let channels = (0..grid.bins)
        .into_par_iter()
        .map(|b| channel_mask(norm.channel(b), h, w, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0u8; h * w];
    for m in &channels {
        for (o, &v) in values.iter_mut().zip(m) {
            *o |= v;
        }
    }
    Ok(RoiMask { height: h, width: w, values })
}
