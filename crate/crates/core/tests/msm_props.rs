use nalgebra::DMatrix;
use proptest::prelude::*;
use ratekit::linalg::dense::eigenvalues;
use ratekit::msm::{coarse_series, eigen_sensitivity, lift, lump, non_markovity, SiteMap};
use ratekit::{RngStream, TransitionMatrix};

fn stochastic(n: usize, raw: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::from_row_slice(n, n, &raw[..n * n]);
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

fn matrix_strategy(max: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (2..=max).prop_flat_map(|n| prop::collection::vec(0.01f64..1.0, n * n).prop_map(move |v| stochastic(n, &v)))
}

fn trace_power(m: &DMatrix<f64>, k: u32) -> f64 {
    let mut p = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        p = &p * m;
    }
    p.trace()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, max_global_rejects: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn lump_undoes_lift(p in matrix_strategy(6), sizes in prop::collection::vec(1usize..4, 6), seed in any::<u64>()) {
        let c = p.nrows();
        let cells: Vec<usize> = (0..c).flat_map(|k| std::iter::repeat_n(k, sizes[k])).collect();
        let map = SiteMap::new(cells, c).unwrap();
        let coarse = TransitionMatrix::from_dense(&p, 3).unwrap();
        let fine = lift(&coarse, &map).unwrap();
        let mut rng = RngStream::new(seed);
        let w: Vec<f64> = (0..map.n_sites()).map(|_| 0.1 + rng.uniform()).collect();
        let back = lump(&fine, &map, &w).unwrap().to_dense();
        prop_assert!((&back - &p).amax() < 1e-14);
        prop_assert_eq!(fine.lag(), 3);
        // Lifting adds only zero eigenvalues: traces of all powers agree.
        let f = fine.to_dense();
        for k in 1..=4 {
            prop_assert!((trace_power(&f, k) - trace_power(&p, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn sensitivity_is_first_order_exact(p in matrix_strategy(5), raw in prop::collection::vec(-1.0f64..1.0, 25)) {
        let n = p.nrows();
        let tm = TransitionMatrix::from_dense(&p, 1).unwrap();
        let ev = eigenvalues(&p).unwrap();
        // Complex or degenerate mu_2 has no single-valued derivative.
        prop_assume!(n == 2 || ev[1].im.abs() < 1e-10 && (ev[1].re - ev[2].re).abs() > 1e-3);
        let sens = eigen_sensitivity(&tm).unwrap();
        // Zero row sums keep the perturbed matrix stochastic.
        let mut dp = DMatrix::from_fn(n, n, |i, j| raw[i * n + j]);
        for mut row in dp.row_iter_mut() {
            let mean = row.sum() / n as f64;
            row.add_scalar_mut(-mean);
        }
        // Constant rows leave nothing to perturb.
        prop_assume!(dp.amax() > 0.0);
        let scale = 1e-5 / dp.amax();
        dp *= scale;
        // The second-order term is about kappa^2 |dP|^2 / gap, with kappa = |s| |r|
        // the eigenvalue condition number; keep it well below the tolerance.
        let kappa = sens.left.iter().map(|v| v * v).sum::<f64>().sqrt() * sens.right.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gap = ev.iter().enumerate().filter(|(k, _)| *k != 1).map(|(_, e)| (e.re - ev[1].re).hypot(e.im)).fold(f64::INFINITY, f64::min);
        prop_assume!(kappa * kappa * dp.norm_squared() / gap <= 1e-9);
        let q = &p + &dp;
        prop_assume!(q.iter().all(|v| *v >= 0.0));
        // Follow mu_2 itself: a perturbation can swap it with an eigenvalue of equal modulus.
        let mu = eigenvalues(&q)
            .unwrap()
            .into_iter()
            .min_by(|a, b| (a.re - sens.mu2).hypot(a.im).total_cmp(&(b.re - sens.mu2).hypot(b.im)))
            .unwrap()
            .re;
        prop_assert!((mu - sens.mu2 - sens.predict(&dp)).abs() <= 1e-8);
    }

    #[test]
    fn identity_partition_lumps_to_powers(p in matrix_strategy(6), tau in 1usize..6) {
        let n = p.nrows();
        let q = TransitionMatrix::from_dense(&p, 1).unwrap();
        let got = coarse_series(&q, &SiteMap::identity(n), &[tau]).unwrap().remove(0);
        let mut want = DMatrix::identity(n, n);
        for _ in 0..tau {
            want = &want * &p;
        }
        prop_assert!((got.matrix.to_dense() - want).amax() < 1e-12);
    }
}

fn markov_sequence(len: usize, seed: u64) -> Vec<u8> {
    let p = [
        [0.7, 0.2, 0.1, 0.0],
        [0.1, 0.6, 0.2, 0.1],
        [0.0, 0.3, 0.5, 0.2],
        [0.2, 0.0, 0.3, 0.5],
    ];
    let mut rng = RngStream::new(seed);
    let mut x = 0usize;
    (0..len)
        .map(|_| {
            let u = rng.uniform();
            let mut acc = 0.0;
            for (j, v) in p[x].iter().enumerate() {
                acc += v;
                if u < acc {
                    x = j;
                    break;
                }
            }
            x as u8
        })
        .collect()
}

#[test]
fn non_markovity_ignores_labels() {
    let seq = markov_sequence(50_000, 4);
    let r = non_markovity(&seq).unwrap();
    for perm in [[1u8, 0, 3, 2], [3, 2, 1, 0], [2, 3, 0, 1]] {
        let relabeled: Vec<u8> = seq.iter().map(|&s| perm[s as usize]).collect();
        let r2 = non_markovity(&relabeled).unwrap();
        assert!((r - r2).abs() < 1e-12, "{r} vs {r2}");
        let as_strings: Vec<&str> = relabeled.iter().map(|&s| ["a", "b", "c", "d"][s as usize]).collect();
        assert!((r - non_markovity(&as_strings).unwrap()).abs() < 1e-12);
    }
}
