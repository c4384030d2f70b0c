use coopalign::detection::{rotated_iou_bev, RotatedBox3D};
use coopalign::harness::{run_pipeline, ExperimentConfig, Method, NoiseLevel};
use coopalign::temporal::{encode, ViTParams};
use coopalign_bench::{agent_grid, scenario};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn iou(c: &mut Criterion) {
    let a = RotatedBox3D::new(0.0, 0.0, 0.8, 1.6, 1.9, 4.5, 0.3).unwrap();
    let b = RotatedBox3D::new(0.7, 0.4, 0.8, 1.6, 1.9, 4.5, -0.2).unwrap();
    c.bench_function("rotated_iou_bev", |bench| bench.iter(|| rotated_iou_bev(black_box(&a), black_box(&b))));
}

fn vit(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let s = scenario(&cfg, 2);
    let g = agent_grid(&cfg, &s, 0);
    let frames: Vec<_> = (0..2)
        .map(|_| {
            let mut f = coopalign::fusion::BevGrid::zeros(cfg.grid, cfg.vit.in_channels);
            for iy in 0..cfg.grid.height {
                for ix in 0..cfg.grid.width {
                    f.set(0, iy, ix, g.get(0, iy, ix));
                }
            }
            f
        })
        .collect();
    let params = ViTParams::init(&cfg.vit, 0, 0.1).unwrap();
    c.bench_function("vit_encode_20x20x2", |b| b.iter(|| encode(black_box(&params), &frames)));
}

fn pipeline(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let s = scenario(&cfg, 3);
    let mut group = c.benchmark_group("run_pipeline");
    for m in [Method::NoFusion, Method::GtNoise, Method::Pgc] {
        group.bench_function(m.name(), |b| b.iter(|| run_pipeline(black_box(&s), m, NoiseLevel(1.0, 1.0), &cfg)));
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = iou, vit, pipeline
}
criterion_main!(benches);
