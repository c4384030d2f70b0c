use coopalign::baselines::{graph_match_align, icp_align};
use coopalign::fusion::{fsa_oracle_estimate, warp_grid};
use coopalign::geometry::{random_pose, seeded_rng, Pose2D, PointCloud};
use coopalign::harness::ExperimentConfig;
use coopalign::pgc::{oracle_predict, ransac_pose, OracleErrorModel, RansacConfig};
use coopalign_bench::{agent_grid, scenario};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn ransac(c: &mut Criterion) {
    let mut group = c.benchmark_group("ransac_pose");
    for n in [256usize, 1024, 4096] {
        let mut rng = seeded_rng(n as u64);
        let pose = random_pose(&mut rng, 50.0);
        let cloud: PointCloud = (0..n)
            .map(|i| {
                let f = i as f64;
                nalgebra::Vector3::new((f * 0.37).sin() * 30.0, (f * 0.11).cos() * 30.0, (f * 0.05).sin() * 1.5 + 1.5)
            })
            .collect();
        let pred = oracle_predict(&cloud, &pose, &OracleErrorModel::default(), &mut rng).unwrap();
        let cfg = RansacConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &pred, |b, p| b.iter(|| ransac_pose(black_box(p), &cfg)));
    }
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let s = scenario(&cfg, 0);
    let (ego, nbr) = (s.observed_boxes(0), s.observed_boxes(1));
    c.bench_function("graph_match_align", |b| b.iter(|| graph_match_align(black_box(&ego), &nbr, &cfg.graph)));
    let (src, dst) = (s.agents[1].cloud().clone(), s.agents[0].cloud().clone());
    c.bench_function("icp_align", |b| b.iter(|| icp_align(black_box(&src), &dst, &cfg.icp)));
}

fn fsa(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let s = scenario(&cfg, 1);
    let ego = agent_grid(&cfg, &s, 0);
    let nbr = warp_grid(&ego, &Pose2D::new(1.0, -0.5, 4f64.to_radians()));
    c.bench_function("fsa_oracle_estimate", |b| b.iter(|| fsa_oracle_estimate(black_box(&ego), &nbr, &cfg.fsa)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = ransac, baselines, fsa
}
criterion_main!(benches);
