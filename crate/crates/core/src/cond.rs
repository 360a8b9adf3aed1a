//! Deterministic arithmetic of the motion condition generator.
//!
//! Learned pieces (frame encoder, voxel feature extractor, fusion convs,
//! residual attention) sit behind [`FeatureProvider`] and
//! [`EventFeatureProvider`]. What remains here is the arithmetic that
//! combines their outputs into per-step conditions, and the latent MSE used
//! to train them.

use crate::error::{Error, Result};
use crate::interp::{self, Blend, InterpConfig};
use crate::sim::InterpInstance;
use crate::types::{FeatureMap, Frame};
use crate::voxel::{RoiMask, VoxelGrid};

/// Which way the frame cross-fade runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// `w_prev(k) = k / T`, `w_next(k) = (T - k) / T`: step 0 is built
    /// entirely from the later key frame.
    Reversed,
    /// `w_prev(k) = (T - k) / T`, `w_next(k) = k / T`: step 0 reproduces the
    /// earlier key frame and step `T` the later one.
    #[default]
    Corrected,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reversed" => Ok(Orientation::Reversed),
            "corrected" => Ok(Orientation::Corrected),
            other => Err(Error::Config(format!("unknown orientation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWeights {
    pub prev: f64,
    pub next: f64,
    pub evs: f64,
}

/// Per-step weights for a sequence of `T + 1` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    steps: usize,
    orientation: Orientation,
    weights: Vec<StepWeights>,
}

impl WeightSchedule {
    /// `T` (the last step index).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn at(&self, k: usize) -> StepWeights {
        self.weights[k]
    }

    pub fn weights(&self) -> &[StepWeights] {
        &self.weights
    }
}

/// Builds the temporal weights for `T` steps. Event features only enter the
/// intermediate steps `1..T`.
pub fn weight_schedule(steps: usize, orientation: Orientation) -> Result<WeightSchedule> {
    if steps < 1 {
        return Err(Error::Config("weight schedule needs T >= 1".into()));
    }
    let t = steps as f64;
    let weights = (0..=steps)
        .map(|k| {
            let rising = k as f64 / t;
            // 1 - rising keeps prev + next == 1 exactly in floating point
            let falling = 1.0 - rising;
            let (prev, next) = match orientation {
                Orientation::Reversed => (rising, falling),
                Orientation::Corrected => (falling, rising),
            };
            let evs = if k == 0 || k == steps { 0.0 } else { 1.0 };
            StepWeights { prev, next, evs }
        })
        .collect();
    Ok(WeightSchedule { steps, orientation, weights })
}

/// Weights applied to `h_t`, `h_{t+1}` and `h^e` by the fusion step.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionWeights {
    Scalar([f64; 3]),
    PerElement([FeatureMap; 3]),
}

/// `w1 * h_t + w2 * h_{t+1} + w3 * h_e + f_fuse`, elementwise.
pub fn fuse_mmf(
    h_t: &FeatureMap,
    h_t1: &FeatureMap,
    h_e: &FeatureMap,
    w: &FusionWeights,
    f_fuse: &FeatureMap,
) -> Result<FeatureMap> {
    h_t.ensure_same_shape(h_t1, "fuse_mmf h_t1")?;
    h_t.ensure_same_shape(h_e, "fuse_mmf h_e")?;
    h_t.ensure_same_shape(f_fuse, "fuse_mmf f_fuse")?;
    let (a, b, e, f) = (h_t.values(), h_t1.values(), h_e.values(), f_fuse.values());
    let values = match w {
        FusionWeights::Scalar([w1, w2, w3]) => {
            (0..a.len()).map(|i| w1 * a[i] + w2 * b[i] + w3 * e[i] + f[i]).collect()
        }
        FusionWeights::PerElement([w1, w2, w3]) => {
            for m in [w1, w2, w3] {
                h_t.ensure_same_shape(m, "fuse_mmf weight")?;
            }
            let (w1, w2, w3) = (w1.values(), w2.values(), w3.values());
            (0..a.len()).map(|i| w1[i] * a[i] + w2[i] * b[i] + w3[i] * e[i] + f[i]).collect()
        }
    };
    Ok(h_t.with_values(values))
}

/// Per-step conditions `c_k = w_evs(k) f_evs[k] + w_prev(k) h_t + w_next(k) h_{t+1}`.
///
/// With zero weight a term is skipped rather than multiplied, so boundary
/// steps of the corrected schedule reproduce the key-frame features
/// bit-for-bit.
pub fn assemble_conditions(
    h_t: &FeatureMap,
    h_t1: &FeatureMap,
    f_evs: &[FeatureMap],
    sched: &WeightSchedule,
) -> Result<Vec<FeatureMap>> {
    h_t.ensure_same_shape(h_t1, "assemble_conditions h_t1")?;
    if f_evs.len() != sched.steps() + 1 {
        return Err(Error::Shape(format!(
            "need {} event features, got {}",
            sched.steps() + 1,
            f_evs.len()
        )));
    }
    for f in f_evs {
        h_t.ensure_same_shape(f, "assemble_conditions f_evs")?;
    }
    let mut out = Vec::with_capacity(f_evs.len());
    for (k, f) in f_evs.iter().enumerate() {
        let w = sched.at(k);
        let mut values = vec![0.0; h_t.len()];
        let terms = [(w.evs, f), (w.prev, h_t), (w.next, h_t1)];
        let mut first = true;
        for (weight, map) in terms {
            if weight == 0.0 {
                continue;
            }
            for (o, &v) in values.iter_mut().zip(map.values()) {
                if first {
                    *o = weight * v;
                } else {
                    *o += weight * v;
                }
            }
            first = false;
        }
        out.push(h_t.with_values(values));
    }
    Ok(out)
}

/// `1 / (N + 2) * sum_i ||target_i - pred_i||^2` over the `N + 2` frames of
/// a sequence.
pub fn mmcg_objective(pred: &[FeatureMap], targets: &[FeatureMap]) -> Result<f64> {
    if pred.len() != targets.len() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", pred.len(), targets.len())));
    }
    if pred.len() < 2 {
        return Err(Error::Shape("objective needs at least the two key frames".into()));
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(targets) {
        total += t.sum_sq_diff(p)?;
    }
    Ok(total / pred.len() as f64)
}

/// Frame encoder stand-in. Must be deterministic and shape-stable.
pub trait FeatureProvider: Sync {
    fn encode(&self, frame: &Frame) -> Result<FeatureMap>;
}

/// Event encoder stand-in, fed with a voxel grid and its ROI mask.
pub trait EventFeatureProvider: Sync {
    fn encode(&self, grid: &VoxelGrid, mask: &RoiMask) -> Result<FeatureMap>;
}

/// One feature channel per colour channel, full resolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl FeatureProvider for IdentityProvider {
    fn encode(&self, frame: &Frame) -> Result<FeatureMap> {
        Ok(FeatureMap::from_frame(frame))
    }
}

/// Box-averages each channel by an integer factor (latent-resolution
/// stand-in). Trailing rows/columns that do not fill a block are dropped.
#[derive(Debug, Clone, Copy)]
pub struct DownsampleProvider {
    pub factor: usize,
}

impl FeatureProvider for DownsampleProvider {
    fn encode(&self, frame: &Frame) -> Result<FeatureMap> {
        let f = self.factor;
        if f == 0 {
            return Err(Error::Config("downsample factor must be >= 1".into()));
        }
        let full = FeatureMap::from_frame(frame);
        let (c, h, w) = full.shape();
        let (oh, ow) = (h / f, w / f);
        let src = full.values();
        let norm = 1.0 / (f * f) as f64;
        let mut values = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..f {
                        for dx in 0..f {
                            acc += src[(ch * h + oy * f + dy) * w + ox * f + dx];
                        }
                    }
                    values.push(acc * norm);
                }
            }
        }
        FeatureMap::new(c, oh, ow, values)
    }
}

/// Voxel grid restricted to the ROI: one channel per temporal bin, zero
/// outside the mask.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskedVoxelProvider;

impl EventFeatureProvider for MaskedVoxelProvider {
    fn encode(&self, grid: &VoxelGrid, mask: &RoiMask) -> Result<FeatureMap> {
        let (b, h, w) = (grid.bins(), grid.height(), grid.width());
        if mask.height != h || mask.width != w {
            return Err(Error::Shape(format!(
                "mask {}x{} vs grid {h}x{w}",
                mask.height, mask.width
            )));
        }
        let values = grid
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask.values[i % (h * w)] != 0 { v } else { 0.0 })
            .collect();
        FeatureMap::new(b, h, w, values)
    }
}

/// Coarse conditions for an instance: key-frame features at both ends and
/// event-integrated estimates (bidirectional, corrected weights) at the
/// intermediate steps, all through the identity provider.
///
/// The result has `T + 1 = skip + 2` entries and can serve either as
/// conditions or as the generator prediction in [`mmcg_objective`].
pub fn coarse_condition_provider(instance: &InterpInstance, contrast: f64) -> Result<Vec<FeatureMap>> {
    let cfg = InterpConfig { contrast, blend: Blend::Bidirectional, ..InterpConfig::default() };
    let mids = interp::interpolate(instance, &cfg)?;
    let provider = IdentityProvider;
    let mut out = Vec::with_capacity(mids.len() + 2);
    out.push(provider.encode(&instance.frame_a)?);
    for f in &mids {
        out.push(provider.encode(f)?);
    }
    out.push(provider.encode(&instance.frame_b)?);
    Ok(out)
}
