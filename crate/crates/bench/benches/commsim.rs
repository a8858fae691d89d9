use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use h2fmm::commsim::{run_comm, CommConfig, CommLayout, CommModel};
use h2fmm::DistributionKind;

fn commsim(c: &mut Criterion) {
    let mut group = c.benchmark_group("commsim");
    group.sample_size(10);
    for p in [64usize, 512] {
        let uniform = CommConfig::new(CommLayout::Uniform, p, 4096);
        group.bench_with_input(BenchmarkId::new("uniform", p), &uniform, |b, cfg| {
            b.iter(|| run_comm(cfg).unwrap())
        });
        let plummer = CommConfig::new(CommLayout::Particles(DistributionKind::Plummer), p, 256);
        for model in [CommModel::Hierarchical, CommModel::Direct] {
            let cfg = plummer.clone().with_model(model);
            group.bench_with_input(BenchmarkId::new(format!("plummer-{}", model.name()), p), &cfg, |b, cfg| {
                b.iter(|| run_comm(cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, commsim);
criterion_main!(benches);
