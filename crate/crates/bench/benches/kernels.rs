use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use evdeblur_bench::workload;
use evdeblur_core::edi::edi_mid_exposure;
use evdeblur_core::events::{log_luminance, simulate_events};
use evdeblur_core::losses::{ssim, ssim_with_grad};
use evdeblur_core::render::{backward_blurred, render, render_blurred};
use evdeblur_core::RadianceImage;

fn kernels(c: &mut Criterion) {
    let data = workload();
    let k = data.intrinsics;
    let view = &data.views[0];
    let traj = view.gt_trajectory;
    let n = data.config.n_latent;

    c.bench_function("render_sharp_64x64_200g", |b| {
        b.iter(|| render(black_box(&data.scene), &traj.pose_start, &k))
    });
    c.bench_function("render_blurred_n5", |b| {
        b.iter(|| render_blurred(black_box(&data.scene), &traj, n, &k).unwrap())
    });

    let rendered = render_blurred(&data.scene, &traj, n, &k).unwrap();
    let adjoints: Vec<RadianceImage> = (0..n).map(|_| RadianceImage::filled(k.width, k.height, 3, 1e-3)).collect();
    c.bench_function("backward_blurred_n5", |b| {
        b.iter(|| backward_blurred(black_box(&data.scene), &traj, &k, &rendered, &adjoints).unwrap())
    });

    let (a, t) = (&rendered.blurred, &view.blurred);
    c.bench_function("ssim_64x64", |b| b.iter(|| ssim(black_box(a), t).unwrap()));
    c.bench_function("ssim_with_grad_64x64", |b| b.iter(|| ssim_with_grad(black_box(a), t).unwrap()));

    let frames = view.frames.as_ref().expect("workload keeps frames");
    let times = traj.latent_timestamps(frames.len()).unwrap();
    let ev = data.config.event_config();
    let timed: Vec<(f64, RadianceImage)> =
        times.into_iter().zip(frames).map(|(t, f)| (t, log_luminance(f, &ev))).collect();
    c.bench_function("simulate_events_51_frames", |b| {
        b.iter(|| simulate_events(black_box(&timed), &ev).unwrap())
    });

    c.bench_function("edi_mid_exposure_32_bins", |b| {
        b.iter(|| edi_mid_exposure(black_box(&view.blurred), &view.events, &traj, ev.theta).unwrap())
    });
}

criterion_group!(benches, kernels);
criterion_main!(benches);
