use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use popdyn::branching::simulate_bgw;
use popdyn::ensemble::EnsembleSpec;
use popdyn::genealogy::kingman_sample;
use popdyn::offspring::OffspringLaw;

fn bgw_extinction(c: &mut Criterion) {
    let law = OffspringLaw::from_pmf(vec![0.25, 0.25, 0.5]).unwrap();
    let mut group = c.benchmark_group("bgw_200_generations");
    group.sample_size(10);
    for reps in [1_000usize, 10_000] {
        let ens = EnsembleSpec::new(1, reps);
        let job = |_: usize, rng: &mut popdyn::rng::RngStream| simulate_bgw(&law, 1, 200, rng).extinct();
        group.bench_with_input(BenchmarkId::new("sequential", reps), &ens, |b, e| b.iter(|| e.run_sequential(job)));
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", reps), &ens, |b, e| b.iter(|| e.run_parallel(job)));
    }
    group.finish();
}

fn kingman_mrca(c: &mut Criterion) {
    let mut group = c.benchmark_group("kingman_n50");
    group.sample_size(10);
    let ens = EnsembleSpec::new(2, 10_000);
    let job = |_: usize, rng: &mut popdyn::rng::RngStream| kingman_sample(50, 1.0, rng).unwrap().mrca_time();
    group.bench_function("sequential", |b| b.iter(|| ens.run_sequential(job)));
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| b.iter(|| ens.run_parallel(job)));
    group.finish();
}

criterion_group!(benches, bgw_extinction, kingman_mrca);
criterion_main!(benches);
