//! Small statistics helpers: compensated summation and block averaging.

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = NeumaierSum::new();
    it.into_iter().for_each(|x| s.add(x));
    s.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (n - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub block_len: usize,
    pub n_blocks: usize,
}

/// Minimum number of blocks kept when doubling the block length.
pub const MIN_BLOCKS: usize = 16;

/// Standard error of the mean of a correlated series by block averaging.
///
/// The block length is doubled from 1 while at least [`MIN_BLOCKS`] blocks
/// remain. The chosen length is the first one at which doubling no longer
/// raises the error estimate by more than that estimate's own statistical
/// uncertainty (`1 / sqrt(2 (m - 1))` relative, for `m` blocks); if the
/// estimate never levels off, the longest admissible block length is used.
pub fn block_average(xs: &[f64]) -> BlockEstimate {
    let n = xs.len();
    let m = if n == 0 { f64::NAN } else { mean(xs) };
    if n < 2 {
        return BlockEstimate {
            mean: m,
            stderr: f64::NAN,
            block_len: 1,
            n_blocks: n,
        };
    }
    let se_at = |len: usize| -> (f64, usize) {
        let nb = n / len;
        let means: Vec<f64> = (0..nb).map(|b| mean(&xs[b * len..(b + 1) * len])).collect();
        ((variance(&means) / nb as f64).sqrt(), nb)
    };
    let mut len = 1;
    let (mut se, mut nb) = se_at(1);
    while n / (2 * len) >= MIN_BLOCKS {
        let (se2, nb2) = se_at(2 * len);
        let noise = 1.0 / (2.0 * (nb as f64 - 1.0)).sqrt();
        if se2 <= se * (1.0 + noise) {
            break;
        }
        len *= 2;
        se = se2;
        nb = nb2;
    }
    BlockEstimate {
        mean: m,
        stderr: se,
        block_len: len,
        n_blocks: nb,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn compensation_recovers_small_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn white_noise_block_error_matches_naive() {
        let mut r = RngStream::new(1);
        let xs: Vec<f64> = (0..20_000).map(|_| r.normal()).collect();
        let b = block_average(&xs);
        let naive = (variance(&xs) / xs.len() as f64).sqrt();
        assert!((b.stderr / naive - 1.0).abs() < 0.2, "{} vs {naive}", b.stderr);
    }

    #[test]
    fn correlated_series_gets_longer_blocks() {
        // AR(1) with coefficient 0.95: integrated time ~ 39 steps.
        let mut r = RngStream::new(2);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                x = 0.95 * x + r.normal();
                x
            })
            .collect();
        let b = block_average(&xs);
        let naive = (variance(&xs) / xs.len() as f64).sqrt();
        // True error inflation is sqrt((1 + 0.95) / (1 - 0.95)) ~ 6.2.
        let ratio = b.stderr / naive;
        assert!(
            b.block_len >= 32 && ratio > 4.5 && ratio < 8.0,
            "len {} ratio {ratio}",
            b.block_len
        );
    }
}
