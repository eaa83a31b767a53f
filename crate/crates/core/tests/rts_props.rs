use nalgebra::DMatrix;
use ratekit::msm::SiteMap;
use ratekit::rts::{run, Walker};
use ratekit::spectral::stationary_distribution;
use ratekit::{BasinSpec, ChainDynamics, ColorSpec, Ensemble, RngStream, RtsParams, TransitionMatrix};

/// Five-state Metropolis chain with two wells.
fn five_state() -> ChainDynamics {
    let e: [f64; 5] = [0.0, 1.5, 2.5, 1.0, 0.2];
    let mut p = DMatrix::zeros(5, 5);
    for i in 0..5usize {
        for j in [i.wrapping_sub(1), i + 1] {
            if j < 5 {
                p[(i, j)] = 0.3 * f64::min(1.0, (-(e[j] - e[i])).exp());
            }
        }
        p[(i, i)] = 1.0 - p.row(i).sum();
    }
    ChainDynamics::new(TransitionMatrix::from_dense(&p, 1).unwrap(), Some(e.to_vec()), 1.0).unwrap()
}

#[test]
fn color_masses_partition_the_total() {
    let d = five_state();
    let basins = BasinSpec::new(vec![true, true, false, false, false], vec![0], vec![4]).unwrap();
    let colors = ColorSpec::two_basin(&basins).unwrap();
    let mut ens = Ensemble::initialize(&d, SiteMap::identity(5), colors, RtsParams::new(8, 21), &[0.3, 0.7]).unwrap();
    for _ in 0..2_000 {
        let rec = run(&d, &mut ens, 1).unwrap().remove(0);
        let sum: f64 = rec.color_mass.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "step {}: {sum}", rec.step);
        // Transfers never exceed the mass they come from.
        for (c, row) in rec.transfers.iter().enumerate() {
            assert!(row.iter().sum::<f64>() <= rec.color_mass[c] + 1e-15);
        }
    }
    assert!(ens.mass_drift().abs() < 1e-12);
}

#[test]
fn short_runs_are_unbiased() {
    // Walkers start at equilibrium; every later ensemble average of f is
    // unbiased, so the mean over runs estimates the Boltzmann average.
    let d = five_state();
    let pi = stationary_distribution(d.matrix()).unwrap();
    let f = [0.0, 1.0, 4.0, 9.0, 16.0];
    let exact: f64 = pi.iter().zip(&f).map(|(p, v)| p * v).sum();
    let colors = ColorSpec::new(5, vec![vec![0]]).unwrap();
    let runs = 2_000;
    let estimates: Vec<f64> = (0..runs)
        .map(|r| {
            let mut rng = RngStream::derive(99, &[r]);
            let walkers = (0..5)
                .map(|s| Walker {
                    state: s,
                    weight: pi[s],
                    color: 0,
                    rng: rng.split(),
                })
                .collect();
            let mut ens = Ensemble::from_walkers(
                &d,
                walkers,
                SiteMap::new(vec![0, 0, 1, 1, 1], 2).unwrap(),
                colors.clone(),
                RtsParams::new(2, r),
            )
            .unwrap();
            run(&d, &mut ens, 8).unwrap();
            ens.weighted_mean(|&s| f[s])
        })
        .collect();
    let m = estimates.iter().sum::<f64>() / runs as f64;
    let var = estimates.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let se = (var / runs as f64).sqrt();
    assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
}

#[test]
fn worker_count_does_not_change_results() {
    let d = five_state();
    let basins = BasinSpec::new(vec![true, true, false, false, false], vec![0], vec![4]).unwrap();
    let go = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let colors = ColorSpec::two_basin(&basins).unwrap();
            let mut ens =
                Ensemble::initialize(&d, SiteMap::identity(5), colors, RtsParams::new(6, 4), &[0.5, 0.5]).unwrap();
            let recs = run(&d, &mut ens, 300).unwrap();
            (recs, ens.walkers)
        })
    };
    assert_eq!(go(1), go(3));
}
