//! Entropy-based measure of memory in a discrete state sequence.

use crate::error::{RateError, Result};
use crate::stats::NeumaierSum;
use std::collections::HashMap;
use std::hash::Hash;

/// Shortest sequence accepted by [`non_markovity`].
pub const MIN_SEQUENCE: usize = 1000;

/// Plug-in entropy (natural log) of the empirical distribution in `counts`.
fn entropy<K>(counts: &HashMap<K, u64>, total: f64) -> f64 {
    // Sorted terms make the sum independent of hash order.
    let mut terms: Vec<f64> = counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let mut s = NeumaierSum::new();
    terms.into_iter().for_each(|t| s.add(t));
    s.value()
}

/// `R = (H(X_n | X_{n-1}) - H(X_n | X_{n-1}, X_{n-2})) / H(X_n | X_{n-1})`.
///
/// Both conditional entropies are plug-in estimates over the same windows
/// `(x_{t-2}, x_{t-1}, x_t)`, so `R` is 0 for a memoryless sequence up to
/// estimation noise and 1 when the last two states fix the next one. The
/// result is clamped to `[0, 1]`.
pub fn non_markovity<T: Eq + Hash + Copy>(seq: &[T]) -> Result<f64> {
    if seq.len() < MIN_SEQUENCE {
        return Err(RateError::InsufficientData(format!(
            "sequence of length {} is shorter than {MIN_SEQUENCE}",
            seq.len()
        )));
    }
    let mut singles = HashMap::new();
    let mut pairs = HashMap::new();
    let mut lead_pairs = HashMap::new();
    let mut triples = HashMap::new();
    for w in seq.windows(3) {
        *singles.entry(w[1]).or_insert(0u64) += 1;
        *pairs.entry((w[1], w[2])).or_insert(0u64) += 1;
        *lead_pairs.entry((w[0], w[1])).or_insert(0u64) += 1;
        *triples.entry((w[0], w[1], w[2])).or_insert(0u64) += 1;
    }
    let distinct: std::collections::HashSet<&T> = seq.iter().collect();
    if distinct.len() < 2 {
        return Err(RateError::InsufficientData("sequence visits a single state".into()));
    }
    let total = (seq.len() - 2) as f64;
    let h1 = entropy(&pairs, total) - entropy(&singles, total);
    let h2 = entropy(&triples, total) - entropy(&lead_pairs, total);
    if !(h1 > 1e-12) {
        return Err(RateError::numerical(
            "non-Markovity",
            "H(X_n | X_{n-1}) vanishes: the sequence is deterministic given one state, so R is undefined",
        ));
    }
    Ok(((h1 - h2) / h1).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn rejects_short_or_deterministic() {
        assert!(non_markovity(&[0u8; 10]).is_err());
        let alt: Vec<u8> = (0..5000).map(|i| (i % 2) as u8).collect();
        assert!(non_markovity(&alt).is_err());
    }

    #[test]
    fn markov_sequence_has_small_r() {
        let mut rng = RngStream::new(3);
        let mut x = 0u8;
        let seq: Vec<u8> = (0..200_000)
            .map(|_| {
                let stay = if x == 0 { 0.9 } else { 0.8 };
                if rng.uniform() >= stay {
                    x = 1 - x;
                }
                x
            })
            .collect();
        assert!(non_markovity(&seq).unwrap() < 0.02);
    }

    #[test]
    fn second_order_determinism_gives_one() {
        // Period 0,0,1,1: one state leaves the next a coin flip, two fix it.
        let seq: Vec<u8> = (0..20_000).map(|i| [0, 0, 1, 1][i % 4]).collect();
        assert_eq!(non_markovity(&seq).unwrap(), 1.0);
    }
}
