//! Slow, obviously-correct reference implementations used by the
//! integration tests. Nothing here shares code with the library.

#![allow(dead_code)]

use evfi::{Event, EventStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniformly random events on a `w x h` sensor in `[0, t_max)`, sorted.
pub fn random_stream(rng: &mut impl Rng, w: u16, h: u16, n: usize, t_max: u64) -> EventStream {
    let mut evs: Vec<Event> = (0..n)
        .map(|_| {
            Event::new(
                rng.random_range(0..t_max),
                rng.random_range(0..w),
                rng.random_range(0..h),
                if rng.random_bool(0.5) { 1 } else { -1 },
            )
        })
        .collect();
    evs.sort_by_key(|e| e.t);
    EventStream::new(w, h, evs).unwrap()
}

/// Number of pairs `i < j` with `t_i > t_j`.
pub fn inversions(ts: &[u64]) -> usize {
    let mut n = 0;
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            if ts[i] > ts[j] {
                n += 1;
            }
        }
    }
    n
}

/// Per-event voxel accumulation straight from the bilinear definition.
pub fn naive_voxelize(events: &[Event], w: usize, h: usize, t0: u64, t1: u64, bins: usize) -> Vec<f64> {
    let mut g = vec![0.0; bins * h * w];
    for e in events.iter().filter(|e| e.t >= t0 && e.t < t1) {
        let u = (e.t - t0) as f64 / (t1 - t0) as f64 * (bins - 1) as f64;
        for b in 0..bins {
            let wt = (1.0 - (u - b as f64).abs()).max(0.0);
            g[(b * h + e.y as usize) * w + e.x as usize] += e.p as f64 * wt;
        }
    }
    g
}

fn clamp(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Full 2-D Gaussian kernel, normalised over the whole square.
fn kernel_2d(sigma: f64, r: usize) -> Vec<f64> {
    let side = 2 * r + 1;
    let mut k = vec![0.0; side * side];
    let g: Vec<f64> = (0..side)
        .map(|i| {
            let d = i as f64 - r as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    for i in 0..side {
        for j in 0..side {
            k[i * side + j] = g[i] * g[j];
        }
    }
    let s: f64 = k.iter().sum();
    k.iter().map(|v| v / s).collect()
}

fn blur_2d(img: &[f64], h: usize, w: usize, sigma: f64, r: usize) -> Vec<f64> {
    let k = kernel_2d(sigma, r);
    let side = 2 * r + 1;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in 0..side {
                for dx in 0..side {
                    let yy = clamp(y as isize + dy as isize - r as isize, h);
                    let xx = clamp(x as isize + dx as isize - r as isize, w);
                    acc += k[dy * side + dx] * img[yy * w + xx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn window(m: &[u8], h: usize, w: usize, y: usize, x: usize, r: usize) -> Vec<u8> {
    let r = r as isize;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            v.push(m[clamp(y as isize + dy, h) * w + clamp(x as isize + dx, w)]);
        }
    }
    v
}

fn dilate_2d(m: &[u8], h: usize, w: usize, r: usize) -> Vec<u8> {
    (0..h * w).map(|i| *window(m, h, w, i / w, i % w, r).iter().max().unwrap()).collect()
}

fn median_2d(m: &[u8], h: usize, w: usize, r: usize) -> Vec<u8> {
    (0..h * w)
        .map(|i| {
            let mut v = window(m, h, w, i / w, i % w, r);
            v.sort_unstable();
            v[v.len() / 2]
        })
        .collect()
}

/// Five-stage mask: normalise, 2-D blur, threshold, dilate, median; OR over
/// bins.
pub struct NaiveMask {
    pub sigma: f64,
    pub blur_radius: usize,
    pub threshold: f64,
    pub dilate_radius: usize,
    pub median_radius: usize,
}

impl Default for NaiveMask {
    fn default() -> Self {
        Self { sigma: 1.0, blur_radius: 2, threshold: 0.01, dilate_radius: 2, median_radius: 1 }
    }
}

impl NaiveMask {
    pub fn run(&self, grid: &[f64], bins: usize, h: usize, w: usize) -> Vec<u8> {
        let max = grid.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut out = vec![0u8; h * w];
        for b in 0..bins {
            let chan: Vec<f64> = grid[b * h * w..(b + 1) * h * w]
                .iter()
                .map(|v| if max > 0.0 { v.abs() / max } else { 0.0 })
                .collect();
            let blurred = blur_2d(&chan, h, w, self.sigma, self.blur_radius);
            let bin: Vec<u8> = blurred.iter().map(|&v| (v > self.threshold) as u8).collect();
            let d = dilate_2d(&bin, h, w, self.dilate_radius);
            let m = median_2d(&d, h, w, self.median_radius);
            for (o, v) in out.iter_mut().zip(m) {
                *o |= v;
            }
        }
        out
    }
}

/// Scalar SSIM on one gray plane: every valid 11x11 window is summed
/// directly with the 2-D Gaussian weights.
pub fn naive_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let n = 11;
    let k = kernel_2d(1.5, 5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..n {
                for dx in 0..n {
                    let kw = k[dy * n + dx];
                    let (p, q) = (a[(y + dy) * w + x + dx], b[(y + dy) * w + x + dx]);
                    mx += kw * p;
                    my += kw * q;
                    sxx += kw * p * p;
                    syy += kw * q * q;
                    sxy += kw * p * q;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// 1-Wasserstein distance between two equal-size empirical samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}
