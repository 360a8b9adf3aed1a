//! `key = value` pipeline configuration files.
//!
//! ```text
//! # simulator / integrator
//! contrast = 0.15
//! eps = 0.001
//! refractory_us = 0
//! seed = 7
//! # instances and voxels
//! skip = 3
//! bins = 8
//! blend = bidirectional
//! # ROI mask
//! mask.sigma = 1.0
//! mask.radius = 2
//! mask.threshold = 0.01
//! mask.dilate = 2
//! mask.median = 1
//! # sampler
//! steps = 50
//! sigma_min = 0.02
//! sigma_max = 49.4
//! rho = 7
//! cfg_scale = 1.0
//! ```

use std::path::Path;
use std::str::FromStr;

use evfi::diffusion::SamplerConfig;
use evfi::interp::{Blend, InterpConfig};
use evfi::sim::SimConfig;
use evfi::voxel::RoiMaskConfig;
use evfi::{Error, Result};

pub const KEYS: &[&str] = &[
    "contrast",
    "eps",
    "refractory_us",
    "seed",
    "skip",
    "bins",
    "blend",
    "mask.sigma",
    "mask.radius",
    "mask.threshold",
    "mask.dilate",
    "mask.median",
    "steps",
    "sigma_min",
    "sigma_max",
    "rho",
    "cfg_scale",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub mask: RoiMaskConfig,
    pub blend: Blend,
    pub sampler: SamplerConfig,
    pub skip: usize,
    pub bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            mask: RoiMaskConfig::default(),
            blend: Blend::Bidirectional,
            sampler: SamplerConfig::default(),
            skip: 3,
            bins: 8,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    pub fn interp(&self) -> InterpConfig {
        InterpConfig { contrast: self.sim.contrast, eps: self.sim.eps, blend: self.blend }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "contrast" => self.sim.contrast = parse(key, value)?,
            "eps" => self.sim.eps = parse(key, value)?,
            "refractory_us" => self.sim.refractory_us = parse(key, value)?,
            "seed" => {
                self.sim.seed = parse(key, value)?;
                self.sampler.seed = self.sim.seed;
            }
            "skip" => self.skip = parse(key, value)?,
            "bins" => self.bins = parse(key, value)?,
            "blend" => self.blend = value.parse()?,
            "mask.sigma" => self.mask.gaussian_sigma = parse(key, value)?,
            "mask.radius" => self.mask.gaussian_radius = parse(key, value)?,
            "mask.threshold" => self.mask.threshold = parse(key, value)?,
            "mask.dilate" => self.mask.dilate_radius = parse(key, value)?,
            "mask.median" => self.mask.median_radius = parse(key, value)?,
            "steps" => self.sampler.steps = parse(key, value)?,
            "sigma_min" => self.sampler.sigma_min = parse(key, value)?,
            "sigma_max" => self.sampler.sigma_max = parse(key, value)?,
            "rho" => self.sampler.rho = parse(key, value)?,
            "cfg_scale" => self.sampler.cfg_scale = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?} (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.mask.validate()?;
        self.sampler.validate()?;
        if self.skip < 1 {
            return Err(Error::Config("skip must be >= 1".into()));
        }
        if self.bins < 1 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable() {
        let mut c = PipelineConfig::default();
        for k in KEYS {
            let v = if *k == "blend" { "forward" } else { "3" };
            c.set(k, v).unwrap();
        }
        assert_eq!(c.blend, Blend::Forward);
        assert_eq!(c.sampler.seed, 3);
    }

    #[test]
    fn parses_file_with_comments() {
        let c = PipelineConfig::parse_str("# hi\ncontrast = 0.2  # step\n\nskip=1\nmask.threshold = 0.05\n").unwrap();
        assert_eq!(c.sim.contrast, 0.2);
        assert_eq!(c.skip, 1);
        assert_eq!(c.mask.threshold, 0.05);
        assert_eq!(c.bins, 8);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::parse_str("contrst = 0.2").is_err());
        assert!(PipelineConfig::parse_str("contrast = -1").is_err());
        assert!(PipelineConfig::parse_str("skip = 0").is_err());
        assert!(PipelineConfig::parse_str("sigma_min = 100").is_err());
        assert!(PipelineConfig::parse_str("contrast 0.2").is_err());
        assert!(PipelineConfig::parse_str("blend = sideways").is_err());
        let e = PipelineConfig::parse_str("\nsteps = many").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
