//! Equal-weight split/merge resampling of one group of walkers.

use crate::error::{RateError, Result};
use crate::rng::RngStream;
use crate::stats::compensated_sum;

/// Which input walkers survive, and how often.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    /// Input indices, one per output walker; repeated indices are splits.
    pub picks: Vec<usize>,
    /// Common output weight `W / target`.
    pub weight: f64,
    /// Passes through the main loop; never more than `inputs + target`.
    pub iterations: usize,
}

/// Replace walkers of weights `weights` by `target` walkers of weight
/// `W / target` without changing expectations.
///
/// Walkers are sorted by decreasing weight and consumed from the light end.
/// A walker at least as heavy as the target weight is copied
/// `floor(w / tw)` times and its remainder goes back on the list; lighter
/// walkers are merged pairwise, the survivor picked with probability
/// proportional to weight and inheriting the pair's weight.
pub fn resample_plan(weights: &[f64], target: usize, rng: &mut RngStream) -> Result<ResamplePlan> {
    if target == 0 {
        return Err(RateError::invalid("resample target must be at least 1"));
    }
    if weights.is_empty() {
        return Err(RateError::invalid("cannot resample an empty group"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(RateError::invalid(format!("walker weight {w} is not positive")));
    }
    let mut w = weights.to_vec();
    let total = compensated_sum(w.iter().copied());
    let tw = total / target as f64;
    let mut list0: Vec<usize> = (0..w.len()).collect();
    list0.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));

    let mut picks = Vec::with_capacity(target);
    let mut x = list0.pop().expect("group is non-empty");
    let mut iterations = 0;
    loop {
        iterations += 1;
        let wx = w[x];
        if wx >= tw || list0.is_empty() {
            // Guards against round-off in the floor and in the running count.
            let r = ((wx / tw).floor() as usize).max(1).min(target - picks.len());
            picks.extend(std::iter::repeat_n(x, r));
            if picks.len() < target && wx - r as f64 * tw > 0.0 {
                w[x] = wx - r as f64 * tw;
                list0.push(x);
            }
            match list0.pop() {
                Some(y) => x = y,
                None => break,
            }
        } else {
            let y = list0.pop().expect("checked non-empty");
            let wy = w[y];
            let wxy = wx + wy;
            if rng.uniform() < wy / wxy {
                x = y;
            }
            w[x] = wxy;
        }
    }
    // Round-off can leave the last remainder just below zero; pad with the
    // final survivor so the count is exact.
    while picks.len() < target {
        picks.push(*picks.last().expect("at least one pick"));
    }
    Ok(ResamplePlan {
        picks,
        weight: tw,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_balanced_group_is_unchanged() {
        let mut rng = RngStream::new(1);
        let plan = resample_plan(&[0.5, 0.5], 2, &mut rng).unwrap();
        let mut picks = plan.picks.clone();
        picks.sort();
        assert_eq!(picks, vec![0, 1]);
        assert_eq!(plan.weight, 0.5);
    }

    #[test]
    fn single_walker_is_split() {
        let mut rng = RngStream::new(1);
        let plan = resample_plan(&[1.0], 4, &mut rng).unwrap();
        assert_eq!(plan.picks, vec![0; 4]);
        assert_eq!(plan.weight, 0.25);
    }

    #[test]
    fn merge_frequencies_follow_weights() {
        let mut rng = RngStream::new(7);
        let trials = 100_000;
        let mut hits = [0usize; 3];
        for _ in 0..trials {
            let plan = resample_plan(&[0.6, 0.3, 0.1], 1, &mut rng).unwrap();
            assert_eq!(plan.picks.len(), 1);
            assert!((plan.weight - 1.0).abs() < 1e-15);
            hits[plan.picks[0]] += 1;
        }
        for (h, p) in hits.iter().zip([0.6, 0.3, 0.1]) {
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((*h as f64 - trials as f64 * p).abs() < 3.0 * sd, "{hits:?}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = RngStream::new(1);
        assert!(resample_plan(&[1.0], 0, &mut rng).is_err());
        assert!(resample_plan(&[], 1, &mut rng).is_err());
        assert!(resample_plan(&[1.0, 0.0], 1, &mut rng).is_err());
    }
}
