//! Evaluation harness: run an interpolator over skip-N instances and score
//! its frames against the withheld ground truth.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::{self, InterpConfig};
use crate::io::write_atomic;
use crate::metrics::{psnr, ssim, Psnr};
use crate::sim::InterpInstance;
use crate::types::Frame;

pub trait Interpolator: Sync {
    fn name(&self) -> String;

    /// The `skip` intermediate frames of `instance`, in order.
    fn interpolate(&self, instance: &InterpInstance) -> Result<Vec<Frame>>;

    /// Settings echoed into the report.
    fn config(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EventInterpolator(pub InterpConfig);

impl Interpolator for EventInterpolator {
    fn name(&self) -> String {
        format!("event-{}", self.0.blend)
    }

    fn interpolate(&self, instance: &InterpInstance) -> Result<Vec<Frame>> {
        interp::interpolate(instance, &self.0)
    }

    fn config(&self) -> serde_json::Value {
        serde_json::json!({
            "contrast": self.0.contrast,
            "eps": self.0.eps,
            "blend": self.0.blend.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrossFade;

impl Interpolator for CrossFade {
    fn name(&self) -> String {
        "crossfade".into()
    }

    fn interpolate(&self, instance: &InterpInstance) -> Result<Vec<Frame>> {
        interp::crossfade(instance)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceResult {
    pub index: usize,
    pub key_indices: (usize, usize),
    /// Mean over frames with finite PSNR; `inf` if every frame is exact.
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
    pub frame_psnr: Vec<Psnr>,
    pub frame_ssim: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    /// Mean PSNR over all frames with finite PSNR.
    pub psnr_mean: Option<f64>,
    pub ssim_mean: Option<f64>,
    /// Frames whose PSNR was infinite (excluded from `psnr_mean`).
    pub inf_count: usize,
    pub frame_count: usize,
    pub instance_count: usize,
    pub failed_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub per_instance: Vec<InstanceResult>,
    pub aggregate: Aggregate,
}

fn score(index: usize, instance: &InterpInstance, method: &dyn Interpolator) -> InstanceResult {
    let mut result = InstanceResult {
        index,
        key_indices: instance.key_indices,
        psnr: None,
        ssim: None,
        frame_psnr: Vec::new(),
        frame_ssim: Vec::new(),
        error: None,
    };
    let run = || -> Result<(Vec<Psnr>, Vec<f64>)> {
        let frames = method.interpolate(instance)?;
        if frames.len() != instance.intermediates.len() {
            return Err(Error::Shape(format!(
                "interpolator returned {} frames, expected {}",
                frames.len(),
                instance.intermediates.len()
            )));
        }
        let mut p = Vec::with_capacity(frames.len());
        let mut s = Vec::with_capacity(frames.len());
        for (est, gt) in frames.iter().zip(&instance.intermediates) {
            p.push(psnr(est, gt)?);
            s.push(ssim(est, gt)?);
        }
        Ok((p, s))
    };
    match run() {
        Ok((p, s)) => {
            let finite: Vec<f64> = p.iter().filter_map(|v| v.db()).collect();
            result.psnr = Some(if finite.is_empty() {
                Psnr::Infinite
            } else {
                Psnr::Db(finite.iter().sum::<f64>() / finite.len() as f64)
            });
            result.ssim = Some(s.iter().sum::<f64>() / s.len().max(1) as f64);
            result.frame_psnr = p;
            result.frame_ssim = s;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Scores `method` on every instance. Instances run in parallel; results are
/// kept in instance order. A failing instance is recorded, not fatal.
pub fn evaluate(instances: &[InterpInstance], method: &dyn Interpolator) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::Config("no instances to evaluate".into()));
    }
    let per_instance: Vec<InstanceResult> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| score(i, inst, method))
        .collect();

    let ok = per_instance.iter().filter(|r| r.error.is_none());
    let frame_psnr: Vec<Psnr> = ok.clone().flat_map(|r| r.frame_psnr.iter().copied()).collect();
    let frame_ssim: Vec<f64> = ok.flat_map(|r| r.frame_ssim.iter().copied()).collect();
    let finite: Vec<f64> = frame_psnr.iter().filter_map(|p| p.db()).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);

    let aggregate = Aggregate {
        psnr_mean: mean(&finite),
        ssim_mean: mean(&frame_ssim),
        inf_count: frame_psnr.len() - finite.len(),
        frame_count: frame_psnr.len(),
        instance_count: instances.len(),
        failed_count: per_instance.iter().filter(|r| r.error.is_some()).count(),
    };
    let config = serde_json::json!({
        "method": method.name(),
        "params": method.config(),
        "skip": instances[0].skip,
    });
    Ok(EvalReport { config, per_instance, aggregate })
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).expect("report serialises");
    write_atomic(path.as_ref(), |w| {
        use std::io::Write;
        w.write_all(&json)?;
        w.write_all(b"\n")
    })
}
