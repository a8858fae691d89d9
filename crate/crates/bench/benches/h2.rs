use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use h2fmm::h2core::compress;
use h2fmm::tree::{balance_2to1, build_tree};
use h2fmm::{CompressOptions, DistributionKind, KernelKind, KernelSpec};
use h2fmm_bench::particles;

fn h2(c: &mut Criterion) {
    let kernel = KernelSpec::new(KernelKind::Laplace3d);
    let mut group = c.benchmark_group("h2");
    group.sample_size(10);
    for n in [1024usize, 4096] {
        let tree = balance_2to1(build_tree(particles(DistributionKind::RandomCube, n), 16).unwrap()).unwrap();
        let opts = CompressOptions::new(1e-6);
        group.bench_with_input(BenchmarkId::new("compress", n), &tree, |b, t| {
            b.iter(|| compress(t, &kernel, &opts).unwrap())
        });
        let m = compress(&tree, &kernel, &opts).unwrap();
        let x = vec![1.0; n];
        group.bench_with_input(BenchmarkId::new("matvec", n), &m, |b, m| b.iter(|| m.matvec(&x).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, h2);
criterion_main!(benches);
