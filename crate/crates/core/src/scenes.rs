//! Synthetic scenes with known motion, used by tests and the CLI fixtures.

use std::f64::consts::PI;

use crate::error::Result;
use crate::types::{Frame, FrameSequence};

/// Bright square moving right over a dark background, wrapping around.
#[derive(Debug, Clone, Copy)]
pub struct TranslatingSquare {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub size: usize,
    /// Pixels per frame.
    pub speed: usize,
    pub foreground: f64,
    pub background: f64,
    pub frame_interval_us: u64,
}

impl Default for TranslatingSquare {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 13,
            size: 16,
            speed: 4,
            foreground: 0.8,
            background: 0.2,
            frame_interval_us: 10_000,
        }
    }
}

impl TranslatingSquare {
    pub fn render(&self) -> Result<FrameSequence> {
        let top = (self.height.saturating_sub(self.size)) / 2;
        let frames = (0..self.frames)
            .map(|i| {
                let left = (4 + i * self.speed) % self.width;
                let px = (0..self.width * self.height)
                    .map(|p| {
                        let (x, y) = (p % self.width, p / self.width);
                        let dx = (x + self.width - left) % self.width;
                        let inside = dx < self.size && y >= top && y < top + self.size;
                        if inside { self.foreground } else { self.background }
                    })
                    .collect();
                Frame::gray(self.width, self.height, px)
            })
            .collect::<Result<Vec<_>>>()?;
        let ts = (0..self.frames as u64).map(|i| i * self.frame_interval_us).collect();
        FrameSequence::new(frames, ts)
    }
}

/// Sinusoidal grating drifting right with a vertical shading term.
#[derive(Debug, Clone, Copy)]
pub struct TranslatingGradient {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Pixels per frame.
    pub speed: f64,
    /// Grating period in pixels.
    pub period: f64,
    pub frame_interval_us: u64,
}

impl Default for TranslatingGradient {
    fn default() -> Self {
        Self { width: 64, height: 64, frames: 20, speed: 1.5, period: 24.0, frame_interval_us: 5_000 }
    }
}

impl TranslatingGradient {
    pub fn render(&self) -> Result<FrameSequence> {
        let frames = (0..self.frames)
            .map(|i| {
                let shift = i as f64 * self.speed;
                let px = (0..self.width * self.height)
                    .map(|p| {
                        let (x, y) = ((p % self.width) as f64, (p / self.width) as f64);
                        let wave = 0.5 + 0.5 * (2.0 * PI * (x - shift) / self.period).sin();
                        let shade = 0.75 + 0.25 * (2.0 * PI * y / self.height as f64).cos();
                        0.05 + 0.9 * wave * shade
                    })
                    .collect();
                Frame::gray(self.width, self.height, px)
            })
            .collect::<Result<Vec<_>>>()?;
        let ts = (0..self.frames as u64).map(|i| i * self.frame_interval_us).collect();
        FrameSequence::new(frames, ts)
    }
}
