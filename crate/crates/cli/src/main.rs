mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evfi::diffusion::{gaussian_oracle_denoiser, sample_batch, sigma_schedule};
use evfi::eval::{evaluate, write_report, CrossFade, EventInterpolator, Interpolator};
use evfi::interp::{interpolate, Blend};
use evfi::io::{
    read_events, read_frames, write_atomic, write_events_binary, write_events_text, write_frames, write_tensor, Tensor,
};
use evfi::scenes::{TranslatingGradient, TranslatingSquare};
use evfi::sim::{build_instances, simulate_events, InterpInstance};
use evfi::voxel::{roi_mask, voxelize};
use evfi::{Error, ErrorClass, EventStream, FrameSequence, Result};

use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "evfi", version, about = "Event-guided video frame interpolation toolkit")]
struct Cli {
    /// Worker threads for internal parallelism (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Pipeline configuration file (key = value lines); flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesise an event stream from a frame directory.
    #[command(allow_negative_numbers = true)]
    Simulate {
        /// Frame directory (frame_%06d.png + timestamps.txt).
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        /// Output event file; `.txt` writes text, anything else binary.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Log-intensity contrast threshold.
        #[arg(long)]
        contrast: Option<f64>,
        /// Offset added before taking the log.
        #[arg(long)]
        eps: Option<f64>,
        /// Refractory period per pixel in microseconds.
        #[arg(long)]
        refractory_us: Option<u64>,
        /// Seed recorded with the run.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Accumulate events into a voxel grid and compute its ROI mask.
    Voxelize {
        /// Event file (.evt binary or .txt).
        #[arg(long, value_name = "FILE")]
        events: PathBuf,
        /// Window start in microseconds (default: first event).
        #[arg(long)]
        t0: Option<u64>,
        /// Window end, exclusive (default: one past the last event).
        #[arg(long)]
        t1: Option<u64>,
        /// Number of temporal bins.
        #[arg(long)]
        bins: Option<usize>,
        /// Output tensor for the voxel grid, dims [bins, height, width].
        #[arg(long, visible_alias = "out", value_name = "FILE")]
        grid_out: PathBuf,
        /// Output tensor for the ROI mask, dims [height, width].
        #[arg(long, value_name = "FILE")]
        mask_out: Option<PathBuf>,
        #[command(flatten)]
        dims: TextDims,
    },
    /// Reconstruct withheld frames from key frames and events.
    #[command(allow_negative_numbers = true)]
    Interpolate {
        /// Frame directory; every (skip+1)-th frame is used as a key frame.
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        /// Event file covering the sequence.
        #[arg(long, value_name = "FILE")]
        events: PathBuf,
        /// Intermediate frames between key frames.
        #[arg(long)]
        skip: Option<usize>,
        /// forward, backward or bidirectional.
        #[arg(long)]
        mode: Option<Blend>,
        /// Contrast threshold assumed for the events.
        #[arg(long)]
        contrast: Option<f64>,
        /// Output frame directory (key frames and reconstructions).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        dims: TextDims,
    },
    /// Score an interpolator against withheld ground truth.
    #[command(allow_negative_numbers = true)]
    Evaluate {
        /// Frame directory with the full sequence.
        #[arg(long, value_name = "DIR")]
        frames: PathBuf,
        /// Event file covering the sequence.
        #[arg(long, value_name = "FILE")]
        events: PathBuf,
        /// Intermediate frames withheld between key frames.
        #[arg(long)]
        skip: Option<usize>,
        /// Interpolation method.
        #[arg(long, value_enum, default_value_t = Method::Event)]
        method: Method,
        /// Blend mode for the event method.
        #[arg(long)]
        mode: Option<Blend>,
        /// Contrast threshold assumed for the events.
        #[arg(long)]
        contrast: Option<f64>,
        /// JSON report path.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[command(flatten)]
        dims: TextDims,
    },
    /// Run the diffusion sampler on 1-D Gaussian data with the exact denoiser.
    #[command(allow_negative_numbers = true)]
    DiffuseDemo {
        /// Data mean.
        #[arg(long)]
        mu: f64,
        /// Data standard deviation.
        #[arg(long)]
        std: f64,
        /// Sampler steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Classifier-free guidance scale.
        #[arg(long)]
        cfg_scale: Option<f64>,
        /// Number of independent samples.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Base seed; sample i uses substream i.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report path.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
    /// Render a synthetic scene as a frame directory.
    MakeFixture {
        #[arg(long, value_enum, default_value_t = Scene::Square)]
        scene: Scene,
        /// Number of frames (default depends on the scene).
        #[arg(long)]
        count: Option<usize>,
        /// Output frame directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Sensor size, needed only for text event files.
#[derive(clap::Args, Debug)]
struct TextDims {
    /// Sensor width for text event files.
    #[arg(long)]
    width: Option<u16>,
    /// Sensor height for text event files.
    #[arg(long)]
    height: Option<u16>,
}

impl TextDims {
    fn get(&self) -> Option<(u16, u16)> {
        self.width.zip(self.height)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    Event,
    Crossfade,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scene {
    Square,
    Gradient,
}

fn load_events(path: &Path, dims: &TextDims, like: Option<&FrameSequence>) -> Result<EventStream> {
    let dims = dims.get().or_else(|| {
        like.and_then(|s| Some((u16::try_from(s.width()).ok()?, u16::try_from(s.height()).ok()?)))
    });
    read_events(path, dims)
}

fn instances(cfg: &PipelineConfig, frames: &Path, events: &Path, dims: &TextDims) -> Result<Vec<InterpInstance>> {
    let seq = read_frames(frames)?;
    let ev = load_events(events, dims, Some(&seq))?;
    build_instances(&seq, &ev, cfg.skip)
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set thread count: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };

    match cli.command {
        Command::Simulate { frames, out, contrast, eps, refractory_us, seed } => {
            if let Some(v) = contrast {
                cfg.sim.contrast = v;
            }
            if let Some(v) = eps {
                cfg.sim.eps = v;
            }
            if let Some(v) = refractory_us {
                cfg.sim.refractory_us = v;
            }
            if let Some(v) = seed {
                cfg.sim.seed = v;
            }
            cfg.validate()?;
            let seq = read_frames(&frames)?;
            let ev = simulate_events(&seq, &cfg.sim)?;
            if out.extension().is_some_and(|e| e == "txt") {
                write_events_text(&ev, &out)?;
            } else {
                write_events_binary(&ev, &out)?;
            }
            println!("{} events from {} frames -> {}", ev.len(), seq.len(), out.display());
        }
        Command::Voxelize { events, t0, t1, bins, grid_out, mask_out, dims } => {
            if let Some(b) = bins {
                cfg.bins = b;
            }
            cfg.validate()?;
            let ev = load_events(&events, &dims, None)?;
            let t0 = t0.unwrap_or_else(|| ev.events().first().map_or(0, |e| e.t));
            let t1 = t1.unwrap_or_else(|| ev.events().last().map_or(t0 + 1, |e| e.t + 1));
            let grid = voxelize(&ev, t0, t1, cfg.bins)?;
            let (b, h, w) = (grid.bins(), grid.height(), grid.width());
            write_tensor(&Tensor::new(vec![b, h, w], grid.values().to_vec())?, &grid_out)?;
            if let Some(path) = mask_out {
                let mask = roi_mask(&grid, &cfg.mask)?;
                let values = mask.values.iter().map(|&v| v as f64).collect();
                write_tensor(&Tensor::new(vec![h, w], values)?, &path)?;
                println!("mask: {} of {} pixels -> {}", mask.count(), h * w, path.display());
            }
            println!("grid {b}x{h}x{w} over [{t0}, {t1}), sum {} -> {}", grid.sum(), grid_out.display());
        }
        Command::Interpolate { frames, events, skip, mode, contrast, out, dims } => {
            if let Some(v) = skip {
                cfg.skip = v;
            }
            if let Some(v) = mode {
                cfg.blend = v;
            }
            if let Some(v) = contrast {
                cfg.sim.contrast = v;
            }
            cfg.validate()?;
            let inst = instances(&cfg, &frames, &events, &dims)?;
            let icfg = cfg.interp();
            let mut out_frames = Vec::new();
            let mut out_ts = Vec::new();
            for (i, instance) in inst.iter().enumerate() {
                let mids = interpolate(instance, &icfg)?;
                if i == 0 {
                    out_frames.push(instance.frame_a.clone());
                    out_ts.push(instance.t_a());
                }
                out_frames.extend(mids);
                out_frames.push(instance.frame_b.clone());
                out_ts.extend_from_slice(&instance.timestamps[1..]);
            }
            let n = out_frames.len();
            write_frames(&FrameSequence::new(out_frames, out_ts)?, &out)?;
            println!("{} instances, {n} frames -> {}", inst.len(), out.display());
        }
        Command::Evaluate { frames, events, skip, method, mode, contrast, report, dims } => {
            if let Some(v) = skip {
                cfg.skip = v;
            }
            if let Some(v) = mode {
                cfg.blend = v;
            }
            if let Some(v) = contrast {
                cfg.sim.contrast = v;
            }
            cfg.validate()?;
            let inst = instances(&cfg, &frames, &events, &dims)?;
            let interp: Box<dyn Interpolator> = match method {
                Method::Event => Box::new(EventInterpolator(cfg.interp())),
                Method::Crossfade => Box::new(CrossFade),
            };
            let r = evaluate(&inst, interp.as_ref())?;
            write_report(&r, &report)?;
            let a = &r.aggregate;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            println!(
                "{}: psnr {} dB, ssim {}, {} frames ({} inf), {} failed -> {}",
                interp.name(),
                fmt(a.psnr_mean),
                fmt(a.ssim_mean),
                a.frame_count,
                a.inf_count,
                a.failed_count,
                report.display()
            );
        }
        Command::DiffuseDemo { mu, std, steps, cfg_scale, samples, seed, report } => {
            if let Some(v) = steps {
                cfg.sampler.steps = v;
            }
            if let Some(v) = cfg_scale {
                cfg.sampler.cfg_scale = v;
            }
            if let Some(v) = seed {
                cfg.sampler.seed = v;
            }
            cfg.validate()?;
            if samples == 0 {
                return Err(Error::Config("samples must be >= 1".into()));
            }
            let cond = gaussian_oracle_denoiser(mu, std)?;
            let uncond = gaussian_oracle_denoiser(0.0, 1.0)?;
            let xs: Vec<f64> = sample_batch(&cond, &uncond, None, (1, 1, 1), &cfg.sampler, samples)?
                .into_iter()
                .map(|m| m.values()[0])
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            let body = serde_json::json!({
                "config": { "mu": mu, "std": std, "samples": samples, "sampler": cfg.sampler },
                "mean": mean,
                "std": sd,
                "schedule": sigma_schedule(&cfg.sampler)?,
            });
            let bytes = serde_json::to_vec_pretty(&body).expect("report serialises");
            write_atomic(&report, |w| {
                use std::io::Write;
                w.write_all(&bytes)?;
                w.write_all(b"\n")
            })?;
            println!("mean {mean:.4}, std {sd:.4} over {samples} samples -> {}", report.display());
        }
        Command::MakeFixture { scene, count, out } => {
            let seq = match scene {
                Scene::Square => {
                    let d = TranslatingSquare::default();
                    TranslatingSquare { frames: count.unwrap_or(d.frames), ..d }.render()?
                }
                Scene::Gradient => {
                    let d = TranslatingGradient::default();
                    TranslatingGradient { frames: count.unwrap_or(d.frames), ..d }.render()?
                }
            };
            write_frames(&seq, &out)?;
            println!("{} frames -> {}", seq.len(), out.display());
        }
    }
    Ok(())
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::Validation => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("error[{}]: {e}", class.as_str());
            ExitCode::from(exit_code(class))
        }
    }
}
