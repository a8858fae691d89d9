use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use h2fmm::tree::{balance_2to1, build_tree};
use h2fmm::DistributionKind;
use h2fmm_bench::particles;

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("tree");
    group.sample_size(10);
    for kind in DistributionKind::ALL {
        let ps = particles(kind, 1 << 16);
        group.bench_with_input(BenchmarkId::new("build", kind.name()), &ps, |b, ps| {
            b.iter(|| build_tree(ps.clone(), 16).unwrap())
        });
        let tree = build_tree(ps, 16).unwrap();
        group.bench_with_input(BenchmarkId::new("balance", kind.name()), &tree, |b, t| {
            b.iter(|| balance_2to1(t.clone()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, build);
criterion_main!(benches);
