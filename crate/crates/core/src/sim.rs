//! Log-intensity threshold event simulation and skip-N instance building.
//!
//! Each pixel keeps a reference log level `l0 + n * c`, where `l0` is the
//! log intensity of the first frame and `n` the signed number of events
//! emitted so far. Between two frames the log intensity is interpolated
//! linearly in time; every time it moves a full contrast step `c` away from
//! the reference an event is emitted at the interpolated crossing time and
//! the reference follows. The residual below one step carries over to the
//! next frame pair, so after any frame `|log(I + eps) - reference| < c`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{Event, EventStream, Frame, FrameSequence, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Log-intensity step per event.
    pub contrast: f64,
    /// Offset added before taking the log.
    pub eps: f64,
    /// Minimum spacing between two events of one pixel. While a pixel is
    /// refractory its pending change is carried forward, not dropped.
    pub refractory_us: u64,
    /// Reserved for stochastic extensions; the threshold model itself is
    /// deterministic.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { contrast: 0.15, eps: 1e-3, refractory_us: 0, seed: 0 }
    }
}

impl SimConfig {
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

/// Log-domain intensity used by both the simulator and the integrator.
#[inline]
pub fn log_intensity(v: f64, eps: f64) -> f64 {
    (v + eps).ln()
}

/// Reference level after `n` signed events.
#[inline]
pub fn reference_level(l0: f64, n: i64, contrast: f64) -> f64 {
    l0 + n as f64 * contrast
}

fn log_planes(seq: &FrameSequence, eps: f64) -> Vec<Vec<f64>> {
    seq.frames()
        .iter()
        .map(|f| f.luminance().pixels().iter().map(|&v| log_intensity(v, eps)).collect())
        .collect()
}

/// Crossing time of `level` on the segment `(t0, la) -> (t1, lb)`, kept
/// inside `[t0, t1)` so every event belongs to the interval that produced it.
#[inline]
fn crossing_time(t0: Timestamp, t1: Timestamp, la: f64, lb: f64, level: f64) -> Timestamp {
    let dt = t1 - t0;
    // Flat segments only cross when a refractory backlog is pending.
    let frac = if lb == la { 0.0 } else { ((level - la) / (lb - la)).clamp(0.0, 1.0) };
    let off = (frac * dt as f64).floor() as u64;
    t0 + off.min(dt - 1)
}

struct PixelState {
    l0: f64,
    n: i64,
    last: Option<Timestamp>,
}

fn simulate_pixel(
    logs: &[Vec<f64>],
    ts: &[Timestamp],
    idx: usize,
    x: u16,
    y: u16,
    cfg: &SimConfig,
    out: &mut Vec<Event>,
) {
    let c = cfg.contrast;
    let mut st = PixelState { l0: logs[0][idx], n: 0, last: None };
    for k in 0..ts.len() - 1 {
        let (la, lb) = (logs[k][idx], logs[k + 1][idx]);
        let (t0, t1) = (ts[k], ts[k + 1]);
        for dir in [1i64, -1] {
            loop {
                let r = reference_level(st.l0, st.n, c);
                let crossed = if dir > 0 { lb - r >= c } else { r - lb >= c };
                if !crossed {
                    break;
                }
                let target = reference_level(st.l0, st.n + dir, c);
                let mut t = crossing_time(t0, t1, la, lb, target);
                if let Some(last) = st.last {
                    if cfg.refractory_us > 0 {
                        t = t.max(last.saturating_add(cfg.refractory_us));
                        if t >= t1 {
                            break;
                        }
                    }
                }
                out.push(Event::new(t, x, y, dir as i8));
                st.n += dir;
                st.last = Some(t);
            }
        }
    }
}

/// Synthesises events from a frame sequence. RGB frames are reduced to
/// luminance first.
///
/// Output is sorted by `(t, y, x, p)` and independent of thread count.
pub fn simulate_events(seq: &FrameSequence, cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    let (w, h) = (seq.width(), seq.height());
    let (w16, h16) = match (u16::try_from(w), u16::try_from(h)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(Error::Shape(format!("{w}x{h} exceeds the 16-bit sensor coordinate range"))),
    };
    let logs = log_planes(seq, cfg.eps);
    let ts = seq.timestamps();

    let mut events: Vec<Event> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut row = Vec::new();
            for x in 0..w {
                simulate_pixel(&logs, ts, y * w + x, x as u16, y as u16, cfg, &mut row);
            }
            row
        })
        .collect();
    events.par_sort_unstable_by_key(|e| (e.t, e.y, e.x, e.p));
    EventStream::new(w16, h16, events)
}

/// A pair of key frames with the ground-truth frames between them and the
/// events of the half-open window `[t_a, t_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpInstance {
    pub frame_a: Frame,
    pub frame_b: Frame,
    pub intermediates: Vec<Frame>,
    /// Timestamps of `frame_a`, each intermediate, and `frame_b`.
    pub timestamps: Vec<Timestamp>,
    /// Sequence indices of the two key frames.
    pub key_indices: (usize, usize),
    pub events: EventStream,
    pub skip: usize,
}

impl InterpInstance {
    pub fn t_a(&self) -> Timestamp {
        self.timestamps[0]
    }

    pub fn t_b(&self) -> Timestamp {
        *self.timestamps.last().unwrap()
    }

    /// Number of steps `T` between the key frames; the instance spans
    /// `T + 1` time steps.
    pub fn steps(&self) -> usize {
        self.skip + 1
    }

    /// Key frames and ground truth in temporal order.
    pub fn all_frames(&self) -> Vec<&Frame> {
        std::iter::once(&self.frame_a)
            .chain(self.intermediates.iter())
            .chain(std::iter::once(&self.frame_b))
            .collect()
    }
}

/// Cuts a sequence into instances keyed at `i` and `i + skip + 1`,
/// advancing by `skip + 1`.
pub fn build_instances(seq: &FrameSequence, events: &EventStream, skip: usize) -> Result<Vec<InterpInstance>> {
    if skip < 1 {
        return Err(Error::Config("skip must be >= 1".into()));
    }
    if seq.len() < skip + 2 {
        return Err(Error::Instance(format!(
            "skip={skip} needs at least {} frames, sequence has {}",
            skip + 2,
            seq.len()
        )));
    }
    if events.width() as usize != seq.width() || events.height() as usize != seq.height() {
        return Err(Error::Shape(format!(
            "events are {}x{} but frames are {}x{}",
            events.width(),
            events.height(),
            seq.width(),
            seq.height()
        )));
    }
    let stride = skip + 1;
    let frames = seq.frames();
    let ts = seq.timestamps();
    let mut out = Vec::new();
    let mut i = 0;
    while i + stride < seq.len() {
        let j = i + stride;
        out.push(InterpInstance {
            frame_a: frames[i].clone(),
            frame_b: frames[j].clone(),
            intermediates: frames[i + 1..j].to_vec(),
            timestamps: ts[i..=j].to_vec(),
            key_indices: (i, j),
            events: events.slice_window(ts[i], ts[j])?,
            skip,
        });
        i = j;
    }
    Ok(out)
}
