use criterion::{criterion_group, criterion_main, Criterion};
use ratekit::milestoning::{run_cells, MilestoneSet};
use ratekit::msm::{coarse_series, eigen_sensitivity, non_markovity, resample_rows};
use ratekit::rts::{resample_plan, run};
use ratekit::spectral::exact_rates;
use ratekit::{
    BasinSpec, Benchmark, Brownian, BrownianParams, CellPartition, ChainDynamics, ColorSpec, Dynamics, Ensemble,
    Region, RngStream, RtsParams, SiteMap,
};
use std::hint::black_box;

fn bench1d() -> (Brownian<Benchmark>, ChainDynamics, BasinSpec, SiteMap) {
    let params = BrownianParams {
        beta: 5.0,
        diffusion: 0.06,
        dt: 0.03,
        lo: -10.0,
        hi: 10.0,
    };
    let b = Brownian::new(Benchmark::Bench1d, params, 0.03).unwrap();
    let chain = b.lattice_chain().unwrap();
    let basins = BasinSpec::from_regions(
        b.lattice(),
        &Region::Below { threshold: 0.0 },
        &Region::Interval { lo: -7.0, hi: -5.0 },
        &Region::Interval { lo: 5.0, hi: 7.0 },
    )
    .unwrap();
    let map = CellPartition::uniform_1d(-10.0, 10.0, 32)
        .unwrap()
        .site_map(b.lattice())
        .unwrap();
    (b, chain, basins, map)
}

fn spectral(c: &mut Criterion) {
    let (b, chain, basins, map) = bench1d();
    c.bench_function("fine_matrix_bench1d", |bn| {
        bn.iter(|| black_box(b.lattice_chain().unwrap()))
    });
    c.bench_function("exact_rates_bench1d", |bn| {
        bn.iter(|| exact_rates(chain.matrix(), &basins, 0.03).unwrap())
    });
    c.bench_function("coarse_series_32_cells", |bn| {
        bn.iter(|| coarse_series(chain.matrix(), &map, &[1, 10, 100]).unwrap())
    });
    let p = coarse_series(chain.matrix(), &map, &[100]).unwrap().remove(0).matrix;
    c.bench_function("eigen_sensitivity_32", |bn| bn.iter(|| eigen_sensitivity(&p).unwrap()));
    let mut rng = RngStream::new(1);
    c.bench_function("resample_rows_32_n1000", |bn| {
        bn.iter(|| resample_rows(&p, 1000, &mut rng).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let (b, chain, basins, map) = bench1d();
    let mut rng = RngStream::new(2);
    let weights: Vec<f64> = (0..100).map(|_| 10f64.powf(-6.0 * rng.uniform())).collect();
    c.bench_function("resample_plan_100_to_10", |bn| {
        bn.iter(|| resample_plan(&weights, 10, &mut rng).unwrap())
    });
    let colors = ColorSpec::two_basin(&basins).unwrap();
    let mut ens = Ensemble::initialize(&chain, map.clone(), colors, RtsParams::new(10, 3), &[0.5, 0.5]).unwrap();
    c.bench_function("rts_100_steps", |bn| bn.iter(|| run(&chain, &mut ens, 100).unwrap()));
    let set = MilestoneSet::new(b.lattice(), map, (23, 24)).unwrap();
    c.bench_function("milestoning_cells_2000_steps", |bn| {
        bn.iter(|| run_cells(&chain, &set, 0, 2_000, 4).unwrap())
    });
    let seq: Vec<u8> = (0..100_000).map(|_| (rng.uniform() < 0.3) as u8).collect();
    c.bench_function("non_markovity_1e5", |bn| bn.iter(|| non_markovity(&seq).unwrap()));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = spectral, sampling
}
criterion_main!(kernels);
