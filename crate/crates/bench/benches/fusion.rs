use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use duality_core::corpus::LabelSpace;
use duality_core::demo::{AbstractPool, LabelMap};
use duality_core::fusion::fuse_predict;
use duality_core::rng;
use rand::Rng;
use std::hint::black_box;

fn distribution<R: Rng>(r: &mut R, keys: &[String]) -> Vec<(String, f64)> {
    let raw: Vec<f64> = keys.iter().map(|_| r.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    keys.iter().cloned().zip(raw.into_iter().map(|x| x / total)).collect()
}

fn fuse(c: &mut Criterion) {
    let mut group = c.benchmark_group("fuse_predict");
    for n in [2, 4, 14] {
        let labels = LabelSpace::new((0..n).map(|i| format!("label{i}")).collect()).unwrap();
        let mut r = rng::stream(n as u64, &["bench", "fusion"]);
        let map = LabelMap::random(&labels, AbstractPool::Symbols, &mut r).unwrap();
        let p_rand = distribution(&mut r, labels.labels());
        let p_abs = distribution(&mut r, &map.image());
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                fuse_predict(
                    "q",
                    black_box(&p_rand),
                    black_box(&p_abs),
                    Some(&map),
                    &labels,
                    0.6,
                    0.4,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, fuse);
criterion_main!(benches);
