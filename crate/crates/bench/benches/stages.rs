use criterion::{criterion_group, criterion_main, Criterion};
use salmap::config::PipelineConfig;
use salmap::imgcore::color::gray_plane;
use salmap::multiseg::segment_levels;
use salmap::regionfeat::{describe_partition, detect_circles, ImageFeatures};
use salmap::segment::{drlse_evolve, select_evolution_channel, DrlseParams};
use salmap::imgcore::BinaryMask;
use salmap_bench::sample_image;
use std::hint::black_box;

fn stages(c: &mut Criterion) {
    let img = sample_image();
    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("stages");
    g.sample_size(10);

    g.bench_function("multiseg_15_levels", |b| b.iter(|| segment_levels(black_box(&img), &cfg.multiseg).unwrap()));
    g.bench_function("circle_detection", |b| {
        let gray = gray_plane(&img);
        b.iter(|| detect_circles(black_box(&gray), &cfg.regionfeat.circle))
    });
    g.bench_function("pixel_features", |b| b.iter(|| ImageFeatures::compute(black_box(&img), &cfg.regionfeat).unwrap()));

    let partition = segment_levels(&img, &cfg.multiseg).unwrap();
    let features = ImageFeatures::compute(&img, &cfg.regionfeat).unwrap();
    g.bench_function("descriptors_all_levels", |b| {
        b.iter(|| describe_partition(black_box(&features), &partition, &cfg.regionfeat).unwrap())
    });

    let channel = select_evolution_channel(&img);
    let init = BinaryMask::from_fn(400, 300, |x, y| (40..360).contains(&x) && (30..270).contains(&y));
    g.bench_function("drlse_200_iterations", |b| {
        b.iter(|| drlse_evolve(black_box(&init), &channel, &DrlseParams::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
