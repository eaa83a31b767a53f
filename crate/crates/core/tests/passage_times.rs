use nalgebra::DMatrix;
use proptest::prelude::*;
use ratekit::milestoning::{mean_passage_time, milestone_matrix, run_cells, MilestoneSet};
use ratekit::msm::SiteMap;
use ratekit::rts::multicolor_mfpt;
use ratekit::{ChainDynamics, Lattice, TransitionMatrix};

/// Lazy birth-death chain with up-probabilities `up` and down-probabilities `down`.
fn birth_death(up: &[f64], down: &[f64]) -> TransitionMatrix {
    let n = up.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        if i + 1 < n {
            p[(i, i + 1)] = up[i];
        }
        if i > 0 {
            p[(i, i - 1)] = down[i];
        }
        p[(i, i)] = 1.0 - p.row(i).sum();
    }
    TransitionMatrix::from_dense(&p, 1).unwrap()
}

/// Steps from 0 to n-1: `sum_k sum_{j<=k} pi_j / (pi_k up_k)` with
/// `pi_{j+1} = pi_j up_j / down_{j+1}`.
fn closed_form(up: &[f64], down: &[f64]) -> f64 {
    let n = up.len();
    let mut pi = vec![1.0; n];
    for j in 0..n - 1 {
        pi[j + 1] = pi[j] * up[j] / down[j + 1];
    }
    let mut total = 0.0;
    let mut acc = 0.0;
    for k in 0..n - 1 {
        acc += pi[k];
        total += acc / (pi[k] * up[k]);
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn birth_death_matches_nested_sum(
        up in prop::collection::vec(0.05f64..0.5, 20),
        down in prop::collection::vec(0.05f64..0.5, 20),
        dt in 0.01f64..2.0,
    ) {
        let p = birth_death(&up, &down);
        let mut cemetery = vec![false; 20];
        cemetery[19] = true;
        let t = mean_passage_time(&p, &cemetery, dt).unwrap();
        let want = closed_form(&up, &down) * dt;
        prop_assert!((t[0] - want).abs() <= 1e-10 * want, "{} vs {}", t[0], want);
    }

    #[test]
    fn both_solvers_agree(raw in prop::collection::vec(0.0f64..1.0, 16), dt in 0.1f64..3.0, target in 0usize..4) {
        // Per-unit-time flux whose outflow stays below 1/dt.
        let f = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.3 * raw[4 * i + j] / dt });
        prop_assume!((0..4).all(|i| i == target || f.row(i).sum() > 0.0));
        let Ok(tm) = multicolor_mfpt(&f, target, dt) else { return Ok(()); };
        let mut p = f.clone() * dt;
        for i in 0..4 {
            p[(i, i)] = 1.0 - p.row(i).sum();
        }
        let cemetery: Vec<bool> = (0..4).map(|i| i == target).collect();
        let t = mean_passage_time(&TransitionMatrix::from_dense(&p, 1).unwrap(), &cemetery, dt).unwrap();
        prop_assert_eq!(t, tm);
    }
}

fn metropolis_walk(n: usize) -> ChainDynamics {
    let e: Vec<f64> = (0..n)
        .map(|i| 2.0 * ((i as f64 / (n - 1) as f64) - 0.5).powi(2))
        .collect();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in [i.wrapping_sub(1), i + 1] {
            if j < n {
                p[(i, j)] = 0.4 * f64::min(1.0, (-(e[j] - e[i])).exp());
            }
        }
        p[(i, i)] = 1.0 - p.row(i).sum();
    }
    ChainDynamics::new(TransitionMatrix::from_dense(&p, 1).unwrap(), Some(e), 1.0).unwrap()
}

fn sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn milestone_probability_error_scales_as_inverse_root_n() {
    // Three cells of five sites; P from the left milestone to the right one.
    let d = metropolis_walk(15);
    let lat = Lattice::line(0.0, 1.0, 15).unwrap();
    let map = SiteMap::new((0..15).map(|s| s / 5).collect(), 3).unwrap();
    let set = MilestoneSet::new(&lat, map, (1, 2)).unwrap();
    let (i, j) = (set.milestone(0, 1).unwrap(), set.milestone(1, 2).unwrap());
    let weights = [1.0 / 3.0; 3];
    let spread = |steps: usize| {
        let xs: Vec<f64> = (0..300u64)
            .map(|seed| {
                let st = run_cells(&d, &set, 100, steps, seed).unwrap();
                milestone_matrix(&st, &set, &weights).unwrap().matrix.get(i, j)
            })
            .collect();
        sd(&xs)
    };
    let ratio = spread(2_000) / spread(8_000);
    // Quadrupling n halves the standard error; 300 replicas resolve the ratio to about 6%.
    assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
}
