//! Acceptance criteria. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if a gated
//! criterion fails.

mod support;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use evfi::cond::{assemble_conditions, weight_schedule, Orientation};
use evfi::diffusion::{gaussian_oracle_denoiser, precondition, sample_batch, sample_sigma, NoiseDistParams, SamplerConfig};
use evfi::error::Error;
use evfi::eval::{evaluate, CrossFade, EventInterpolator};
use evfi::interp::{integrate_log, Direction, InterpConfig};
use evfi::io::{
    encode_events_binary, read_events_binary, read_events_text, read_frames, write_events_binary, write_events_text,
    write_frames,
};
use evfi::scenes::{TranslatingGradient, TranslatingSquare};
use evfi::sim::{build_instances, log_intensity, simulate_events, SimConfig};
use evfi::voxel::{roi_mask, voxelize, RoiMaskConfig};
use evfi::{FeatureMap, Frame, FrameSequence};
use rand::Rng;
use support::{mean_std, random_stream, rng, NaiveMask};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn ac1() -> Outcome {
    let mut worst = 0.0f64;
    let mut coeff_err = 0.0f64;
    for s in [0.05, 0.1, 0.5, 1.0, 2.0, 10.0] {
        let k = precondition(s).unwrap();
        worst = worst.max((k.loss_weight * k.c_out * k.c_out - 1.0).abs());
        let root = (s * s + 1.0f64).sqrt();
        for (got, want) in [
            (k.c_in, 1.0 / root),
            (k.c_skip, 1.0 / (s * s + 1.0)),
            (k.c_out, -s / root),
            (k.loss_weight, (1.0 + s * s) / (s * s)),
        ] {
            coeff_err = coeff_err.max((got - want).abs());
        }
    }
    outcome(worst <= 1e-12 && coeff_err == 0.0, format!("max |w*c_out^2 - 1| = {worst:.2e}, coeff err = {coeff_err:.1e}"))
}

fn ac2() -> Outcome {
    let o = gaussian_oracle_denoiser(3.0, 0.5).unwrap();
    let cfg = SamplerConfig { steps: 50, seed: 2024, ..Default::default() };
    let xs: Vec<f64> = sample_batch(&o, &o, None, (1, 1, 1), &cfg, 10_000)
        .unwrap()
        .iter()
        .map(|m| m.values()[0])
        .collect();
    let (m, s) = mean_std(&xs);
    outcome((m - 3.0).abs() <= 0.05 && (s - 0.5).abs() <= 0.05, format!("mean {m:.4}, std {s:.4}"))
}

fn ac3() -> Outcome {
    let p = NoiseDistParams::default();
    let mut r = rng(3);
    let logs: Vec<f64> = (0..100_000).map(|_| sample_sigma(&p, &mut r).unwrap().sigma().ln()).collect();
    let (m, s) = mean_std(&logs);
    outcome((m - 0.7).abs() <= 0.02 && (s - 1.6).abs() <= 0.02, format!("mean log sigma {m:.4}, std {s:.4}"))
}

fn ac4() -> Outcome {
    let seq = TranslatingGradient::default().render().unwrap();
    let c = 0.15;
    let cfg = SimConfig { contrast: c, ..Default::default() };
    let ev = simulate_events(&seq, &cfg).unwrap();
    let first = &seq.frames()[0];
    let mut worst = 0.0f64;
    for (frame, &t) in seq.frames().iter().zip(seq.timestamps()) {
        let est = integrate_log(first, &ev, t, c, cfg.eps, Direction::Forward).unwrap();
        for (e, &v) in est.iter().zip(frame.pixels()) {
            worst = worst.max((e - log_intensity(v, cfg.eps)).abs());
        }
    }
    outcome(worst <= c, format!("{} events, max log error {worst:.6} (c = {c})", ev.len()))
}

fn ac5() -> Outcome {
    let seq = TranslatingSquare::default().render().unwrap();
    let ev = simulate_events(&seq, &SimConfig::default()).unwrap();
    let inst = build_instances(&seq, &ev, 3).unwrap();
    let e = evaluate(&inst, &EventInterpolator(InterpConfig::default())).unwrap().aggregate;
    let f = evaluate(&inst, &CrossFade).unwrap().aggregate;
    match (e.psnr_mean, f.psnr_mean) {
        (Some(pe), Some(pf)) => outcome(
            pe - pf >= 3.0 && e.inf_count == 0,
            format!("event {pe:.2} dB vs cross-fade {pf:.2} dB, margin {:.2} dB", pe - pf),
        ),
        other => outcome(false, format!("missing PSNR means: {other:?}")),
    }
}

fn ac6() -> Outcome {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = random_stream(&mut r, 64, 48, 10_000, 1_000_000);
        let g = voxelize(&s, 0, 1_000_000, 8).unwrap();
        let want = s.polarity_sum() as f64;
        worst = worst.max((g.sum() - want).abs() / want.abs().max(1.0));
    }
    outcome(worst <= 1e-6, format!("max relative deviation {worst:.2e}"))
}

fn ac7() -> Outcome {
    let mut r = rng(7);
    let naive = NaiveMask::default();
    let cfg = RoiMaskConfig::default();
    let mut mismatches = 0;
    let mut set = 0;
    for _ in 0..50 {
        // log-uniform event counts: masks from nearly empty to saturated
        let n = (r.random_range(0.0f64..7.0).exp()) as usize;
        let s = random_stream(&mut r, 32, 32, n, 10_000);
        let g = voxelize(&s, 0, 10_000, 8).unwrap();
        let fast = roi_mask(&g, &cfg).unwrap();
        set += fast.count();
        if fast.values != naive.run(g.values(), 8, 32, 32) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/50 grids differ ({set} mask pixels set in total)"))
}

fn ac8() -> Outcome {
    let mut r = rng(8);
    let mut problems = Vec::new();
    let fm = |r: &mut rand_chacha::ChaCha8Rng| {
        FeatureMap::new(3, 4, 5, (0..60).map(|_| r.random_range(-10.0..10.0)).collect()).unwrap()
    };
    for t in 1..=8 {
        for orient in [Orientation::Reversed, Orientation::Corrected] {
            let s = weight_schedule(t, orient).unwrap();
            for k in 0..=t {
                let w = s.at(k);
                if w.prev + w.next != 1.0 {
                    problems.push(format!("T={t} k={k} {orient:?}: sum {}", w.prev + w.next));
                }
                let evs = if k == 0 || k == t { 0.0 } else { 1.0 };
                if w.evs != evs {
                    problems.push(format!("T={t} k={k}: w_evs {}", w.evs));
                }
            }
        }
        let (h0, h1) = (fm(&mut r), fm(&mut r));
        let f: Vec<FeatureMap> = (0..=t).map(|_| fm(&mut r)).collect();
        let c = assemble_conditions(&h0, &h1, &f, &weight_schedule(t, Orientation::Corrected).unwrap()).unwrap();
        let bits = |m: &FeatureMap| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if bits(&c[0]) != bits(&h0) || bits(&c[t]) != bits(&h1) {
            problems.push(format!("T={t}: boundary conditions differ from key features"));
        }
    }
    outcome(problems.is_empty(), if problems.is_empty() { "T = 1..8, both orientations".to_string() } else { problems.join("; ") })
}

fn ac9() -> Outcome {
    let mut r = rng(9);
    let dir = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for case in 0..200 {
        let (w, h) = (r.random_range(1..300u16), r.random_range(1..300u16));
        let n = r.random_range(0..400);
        let s = random_stream(&mut r, w, h, n, 1 << 40);
        let txt = dir.path().join("e.txt");
        let bin = dir.path().join("e.evt");
        write_events_text(&s, &txt).unwrap();
        write_events_binary(&s, &bin).unwrap();
        let t = read_events_text(&txt, w, h).unwrap();
        let b = read_events_binary(&bin).unwrap();
        if t != s || b != s {
            failures.push(format!("case {case}: event round trip"));
        }

        let (fw, fh, ch) = (r.random_range(1..20), r.random_range(1..20), if r.random_bool(0.5) { 1 } else { 3 });
        let frames = (0..3)
            .map(|_| Frame::new(fw, fh, ch, (0..fw * fh * ch).map(|_| r.random_range(0u8..=255) as f64 / 255.0).collect()).unwrap())
            .collect();
        let seq = FrameSequence::new(frames, vec![0, 33_333, 66_667]).unwrap();
        let fdir = dir.path().join(format!("frames{case}"));
        write_frames(&seq, &fdir).unwrap();
        if read_frames(&fdir).unwrap() != seq {
            failures.push(format!("case {case}: frame round trip"));
        }
    }

    let s = random_stream(&mut r, 10, 10, 50, 1000);
    let bytes = encode_events_binary(&s);
    let bad = dir.path().join("bad.evt");
    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    std::fs::write(&bad, &corrupt).unwrap();
    if !matches!(read_events_binary(&bad), Err(Error::Format { .. })) {
        failures.push("corrupted magic not reported as a format error".into());
    }
    std::fs::write(&bad, &bytes[..bytes.len() - 5]).unwrap();
    match read_events_binary(&bad) {
        Err(Error::Corruption { expected, actual, .. }) if expected == 50 * 14 && actual == 50 * 14 - 5 => {}
        other => failures.push(format!("truncated file: {other:?}")),
    }
    outcome(failures.is_empty(), if failures.is_empty() { "200 cases + corruption cases".to_string() } else { failures.join("; ") })
}

fn ac10() -> Outcome {
    let mut r = rng(10);
    let s = random_stream(&mut r, 346, 260, 5_000_000, 10_000_000);
    let start = Instant::now();
    let g = voxelize(&s, 0, 10_000_000, 8).unwrap();
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(g);
    let rate = s.len() as f64 / secs / 1e6;
    outcome(rate >= 5.0, format!("voxelize {rate:.1} M events/s single-threaded"))
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>, bool);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("AC-1  EDM identities", ac1, Some(Duration::from_secs(1)), true),
        ("AC-2  Gaussian sampler fidelity", ac2, Some(Duration::from_secs(30)), true),
        ("AC-3  noise distribution", ac3, Some(Duration::from_secs(5)), true),
        ("AC-4  simulator/integrator round trip", ac4, Some(Duration::from_secs(10)), true),
        ("AC-5  interpolation ordering", ac5, Some(Duration::from_secs(10)), true),
        ("AC-6  voxel conservation", ac6, Some(Duration::from_secs(5)), true),
        ("AC-7  ROI mask oracle", ac7, Some(Duration::from_secs(10)), true),
        ("AC-8  weight schedule", ac8, Some(Duration::from_secs(1)), true),
        ("AC-9  I/O round trips", ac9, Some(Duration::from_secs(10)), true),
        ("AC-10 voxelize throughput (soft)", ac10, None, false),
    ];
    let mut failed = 0;
    for (name, run, budget, gating) in criteria {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = budget.is_none_or(|b| took <= b);
        let pass = o.pass && in_time;
        let tag = match (pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        let budget = budget.map_or(String::new(), |b| format!(" / {:.0?}", b));
        println!("[{tag}] {name}: {} ({took:.2?}{budget})", o.detail);
        if !pass && gating {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
