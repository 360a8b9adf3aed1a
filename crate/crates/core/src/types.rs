//! Domain value types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Event timestamp in microseconds.
pub type Timestamp = u64;

/// A single polarity spike at a pixel.
///
/// Polarity is kept signed (`+1` / `-1`) so accumulation kernels can add it
/// directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: Timestamp,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

impl Event {
    pub const fn new(t: Timestamp, x: u16, y: u16, p: i8) -> Self {
        Self { t, x, y, p }
    }
}

/// Violations found by [`validate_events`]. Empty when the events form a
/// valid stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Positions `i` where `events[i].t < events[i - 1].t`.
    pub out_of_order: usize,
    pub out_of_bounds: usize,
    pub invalid_polarity: usize,
    /// Index of the first offending event, if any.
    pub first_violation: Option<usize>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.out_of_order == 0 && self.out_of_bounds == 0 && self.invalid_polarity == 0
    }

    pub fn total(&self) -> usize {
        self.out_of_order + self.out_of_bounds + self.invalid_polarity
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} out-of-order, {} out-of-bounds, {} invalid-polarity",
            self.out_of_order, self.out_of_bounds, self.invalid_polarity
        )?;
        if let Some(i) = self.first_violation {
            write!(f, " (first at index {i})")?;
        }
        Ok(())
    }
}

/// Checks ordering, bounds and polarity of raw events against a sensor size.
pub fn validate_events(width: u16, height: u16, events: &[Event]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut prev_t = None;
    for (i, e) in events.iter().enumerate() {
        let mut bad = false;
        if prev_t.is_some_and(|t| e.t < t) {
            report.out_of_order += 1;
            bad = true;
        }
        if e.x >= width || e.y >= height {
            report.out_of_bounds += 1;
            bad = true;
        }
        if e.p != 1 && e.p != -1 {
            report.invalid_polarity += 1;
            bad = true;
        }
        if bad && report.first_violation.is_none() {
            report.first_violation = Some(i);
        }
        prev_t = Some(e.t);
    }
    report
}

/// Time-sorted, bounds-checked events of one sensor. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream from events that must already be sorted by time.
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        let report = validate_events(width, height, &events);
        if !report.is_empty() {
            return Err(Error::Validation(report.to_string()));
        }
        Ok(Self { width, height, events })
    }

    /// Stable-sorts by timestamp, then validates.
    pub fn from_unsorted(width: u16, height: u16, mut events: Vec<Event>) -> Result<Self> {
        events.sort_by_key(|e| e.t);
        Self::new(width, height, events)
    }

    pub fn empty(width: u16, height: u16) -> Self {
        Self { width, height, events: Vec::new() }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn validate(&self) -> ValidationReport {
        validate_events(self.width, self.height, &self.events)
    }

    /// Borrowed view of the events with `t0 <= t < t1`. Empty when `t0 >= t1`.
    pub fn window(&self, t0: Timestamp, t1: Timestamp) -> &[Event] {
        if t0 >= t1 {
            return &[];
        }
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi]
    }

    /// Owned copy of the half-open window `[t0, t1)`.
    pub fn slice_window(&self, t0: Timestamp, t1: Timestamp) -> Result<EventStream> {
        if t0 >= t1 {
            return Err(Error::InvalidRange { t0, t1 });
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            events: self.window(t0, t1).to_vec(),
        })
    }

    pub fn polarity_sum(&self) -> i64 {
        self.events.iter().map(|e| e.p as i64).sum()
    }
}

/// Image with interleaved channels and intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("frame must have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "frame {width}x{height}x{channels} needs {} pixels, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::Validation(format!("frame intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, pixels })
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single-channel luminance (0.299 R + 0.587 G + 0.114 B). Grayscale
    /// frames are returned as a copy.
    pub fn luminance(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|c| (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]).clamp(0.0, 1.0))
            .collect();
        Frame { width: self.width, height: self.height, channels: 1, pixels }
    }

    /// Builds a frame from values that may have drifted outside `[0, 1]`;
    /// they are clamped and non-finite values become 0.
    pub(crate) fn from_clamped(width: usize, height: usize, channels: usize, mut pixels: Vec<f64>) -> Frame {
        for v in &mut pixels {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Frame { width, height, channels, pixels }
    }
}

/// Ordered frames with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    timestamps: Vec<Timestamp>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, timestamps: Vec<Timestamp>) -> Result<Self> {
        if frames.len() != timestamps.len() {
            return Err(Error::Shape(format!(
                "{} frames but {} timestamps",
                frames.len(),
                timestamps.len()
            )));
        }
        if frames.len() < 2 {
            return Err(Error::Shape("a frame sequence needs at least 2 frames".into()));
        }
        if let Some(i) = (1..frames.len()).find(|&i| !frames[i].same_shape(&frames[0])) {
            return Err(Error::Shape(format!("frame {i} differs in resolution from frame 0")));
        }
        if let Some(i) = (1..timestamps.len()).find(|&i| timestamps[i] <= timestamps[i - 1]) {
            return Err(Error::Validation(format!(
                "timestamps not strictly increasing at frame {i} ({} after {})",
                timestamps[i],
                timestamps[i - 1]
            )));
        }
        Ok(Self { frames, timestamps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// Channel-major (`C x H x W`) tensor of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature map contains non-finite values".into()));
        }
        Ok(Self { channels, height, width, values })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self { channels, height, width, values: vec![value; channels * height * width] }
    }

    /// Identity encoding of a frame: one channel per colour channel.
    pub fn from_frame(frame: &Frame) -> Self {
        let (w, h, c) = (frame.width, frame.height, frame.channels);
        let mut values = vec![0.0; w * h * c];
        for (i, px) in frame.pixels.chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                values[ch * w * h + i] = v;
            }
        }
        Self { channels: c, height: h, width: w, values }
    }

    /// Inverse of [`FeatureMap::from_frame`]; values are clamped to `[0, 1]`.
    pub fn to_frame(&self) -> Result<Frame> {
        let (w, h, c) = (self.width, self.height, self.channels);
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("cannot view {c} channels as a frame")));
        }
        let mut pixels = vec![0.0; w * h * c];
        for ch in 0..c {
            for i in 0..w * h {
                pixels[i * c + ch] = self.values[ch * w * h + i];
            }
        }
        Ok(Frame::from_clamped(w, h, c, pixels))
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn ensure_same_shape(&self, other: &FeatureMap, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two equally shaped maps.
    pub fn zip_map(&self, other: &FeatureMap, f: impl Fn(f64, f64) -> f64) -> Result<FeatureMap> {
        self.ensure_same_shape(other, "zip_map")?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(self.with_values(values))
    }

    pub fn sum_sq_diff(&self, other: &FeatureMap) -> Result<f64> {
        self.ensure_same_shape(other, "sum_sq_diff")?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// Same shape, new contents. `values` must have the right length.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> FeatureMap {
        debug_assert_eq!(values.len(), self.values.len());
        FeatureMap { channels: self.channels, height: self.height, width: self.width, values }
    }
}
