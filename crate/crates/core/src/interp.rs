//! Coarse event-based frame interpolation.
//!
//! Inverts the simulator's threshold model: a pixel's log intensity moves by
//! `c * p` for every event. Integrating forward from the earlier key frame
//! (or backward from the later one) gives an estimate whose log error is
//! below one contrast step when the events come from the same model.

use crate::cond::{weight_schedule, Orientation, StepWeights};
use crate::error::{Error, Result};
use crate::sim::{log_intensity, InterpInstance};
use crate::types::{Event, EventStream, Frame, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Blend {
    Forward,
    Backward,
    #[default]
    Bidirectional,
}

impl std::str::FromStr for Blend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Blend::Forward),
            "backward" => Ok(Blend::Backward),
            "bidirectional" => Ok(Blend::Bidirectional),
            other => Err(Error::Config(format!("unknown blend mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Blend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Blend::Forward => "forward",
            Blend::Backward => "backward",
            Blend::Bidirectional => "bidirectional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpConfig {
    pub contrast: f64,
    pub eps: f64,
    pub blend: Blend,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self { contrast: 0.15, eps: 1e-3, blend: Blend::Bidirectional }
    }
}

impl InterpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast.is_finite()) {
            return Err(Error::Config(format!("contrast must be > 0, got {}", self.contrast)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Integration direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `frame` is at the start of the stream; events with `t < t_target`
    /// are added.
    Forward,
    /// `frame` is at the end of the stream; events with `t >= t_target` are
    /// removed.
    Backward,
}

fn signed_counts(events: &[Event], width: usize, height: usize) -> Vec<i64> {
    let mut n = vec![0i64; width * height];
    for e in events {
        n[e.y as usize * width + e.x as usize] += e.p as i64;
    }
    n
}

fn check_dims(frame: &Frame, stream: &EventStream) -> Result<()> {
    if frame.width() != stream.width() as usize || frame.height() != stream.height() as usize {
        return Err(Error::Shape(format!(
            "frame is {}x{} but events are {}x{}",
            frame.width(),
            frame.height(),
            stream.width(),
            stream.height()
        )));
    }
    Ok(())
}

fn events_for(stream: &EventStream, t_target: Timestamp, direction: Direction) -> &[Event] {
    let evs = stream.events();
    let split = evs.partition_point(|e| e.t < t_target);
    match direction {
        Direction::Forward => &evs[..split],
        Direction::Backward => &evs[split..],
    }
}

/// Per-pixel log intensity (of channel 0 / luminance) after integration.
pub fn integrate_log(
    frame: &Frame,
    stream: &EventStream,
    t_target: Timestamp,
    contrast: f64,
    eps: f64,
    direction: Direction,
) -> Result<Vec<f64>> {
    check_dims(frame, stream)?;
    let luma = frame.luminance();
    let n = signed_counts(events_for(stream, t_target, direction), frame.width(), frame.height());
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    Ok(luma
        .pixels()
        .iter()
        .zip(&n)
        .map(|(&v, &k)| log_intensity(v, eps) + sign * k as f64 * contrast)
        .collect())
}

/// Applies the event-implied log gain to every channel of `frame`.
/// Pixels without net events are copied unchanged.
pub fn integrate_events(
    frame: &Frame,
    stream: &EventStream,
    t_target: Timestamp,
    cfg: &InterpConfig,
    direction: Direction,
) -> Result<Frame> {
    cfg.validate()?;
    check_dims(frame, stream)?;
    let n = signed_counts(events_for(stream, t_target, direction), frame.width(), frame.height());
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let ch = frame.channels();
    let mut pixels = frame.pixels().to_vec();
    for (i, &k) in n.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let gain = sign * k as f64 * cfg.contrast;
        for v in &mut pixels[i * ch..(i + 1) * ch] {
            *v = (log_intensity(*v, cfg.eps) + gain).exp() - cfg.eps;
        }
    }
    Ok(Frame::from_clamped(frame.width(), frame.height(), ch, pixels))
}

/// `w.prev * a + w.next * b`, skipping zero-weighted terms so boundary steps
/// reproduce their key frame exactly.
pub(crate) fn blend_frames(a: &Frame, b: &Frame, w: StepWeights) -> Frame {
    if w.next == 0.0 {
        return a.clone();
    }
    if w.prev == 0.0 {
        return b.clone();
    }
    let pixels = a.pixels().iter().zip(b.pixels()).map(|(x, y)| w.prev * x + w.next * y).collect();
    Frame::from_clamped(a.width(), a.height(), a.channels(), pixels)
}

/// Estimate at step `k` of `0..=T` of the instance.
pub fn estimate_step(instance: &InterpInstance, cfg: &InterpConfig, k: usize) -> Result<Frame> {
    cfg.validate()?;
    let steps = instance.steps();
    if k > steps {
        return Err(Error::Config(format!("step {k} outside 0..={steps}")));
    }
    let t = instance.timestamps[k];
    let fwd = || integrate_events(&instance.frame_a, &instance.events, t, cfg, Direction::Forward);
    let bwd = || integrate_events(&instance.frame_b, &instance.events, t, cfg, Direction::Backward);
    match cfg.blend {
        Blend::Forward => fwd(),
        Blend::Backward => bwd(),
        Blend::Bidirectional => {
            let w = weight_schedule(steps, Orientation::Corrected)?.at(k);
            Ok(blend_frames(&fwd()?, &bwd()?, w))
        }
    }
}

/// The `skip` intermediate frames of an instance.
pub fn interpolate(instance: &InterpInstance, cfg: &InterpConfig) -> Result<Vec<Frame>> {
    (1..instance.steps()).map(|k| estimate_step(instance, cfg, k)).collect()
}

/// Baseline without events: linear cross-fade of the key frames.
pub fn crossfade(instance: &InterpInstance) -> Result<Vec<Frame>> {
    let sched = weight_schedule(instance.steps(), Orientation::Corrected)?;
    Ok((1..instance.steps())
        .map(|k| blend_frames(&instance.frame_a, &instance.frame_b, sched.at(k)))
        .collect())
}
