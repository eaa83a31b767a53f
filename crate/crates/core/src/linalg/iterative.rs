//! Slowest relaxation modes of large sparse chains.
//!
//! Inverse subspace iteration on the generator `L = I - P`, deflated against
//! the stationary mode, using the cancellation-free banded factorization.
//! Eigenvalues are returned as `l_k = 1 - mu_k`, which keeps full relative
//! precision even when `mu_2` is within 1e-10 of one.

use crate::error::{RateError, Result};
use crate::linalg::banded::{generator_mul, generator_vec_mul, MMatrixLu};
use crate::linalg::dense::{dense_eigen, orthonormalize};
use crate::linalg::sparse::CsrMatrix;
use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct SlowModes {
    pub stationary: Vec<f64>,
    /// `1 - mu_k` for k = 2, 3, ..., ascending.
    pub gaps: Vec<f64>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    /// Imaginary part of each returned Ritz value.
    pub imag: Vec<f64>,
    /// Largest imaginary part among the returned Ritz values.
    pub max_imag: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stationary distribution via the factorization; requires irreducibility.
pub fn stationary(p: &CsrMatrix) -> Result<(MMatrixLu, Vec<f64>)> {
    let n = p.nrows();
    let lu = MMatrixLu::factor(p, &vec![0.0; n])?;
    let rho = lu.null_left();
    Ok((lu, rho))
}

/// The `count` slowest non-stationary modes of an irreducible chain.
pub fn slow_modes(p: &CsrMatrix, count: usize) -> Result<SlowModes> {
    let n = p.nrows();
    if count == 0 || count + 1 > n {
        return Err(RateError::invalid(format!(
            "cannot extract {count} modes from a {n}-state chain"
        )));
    }
    let (lu, rho) = stationary(p)?;
    let block = (count + 4).min(n - 1);

    let right_op = |x: &mut Vec<f64>| {
        let s: f64 = dot(&rho, x);
        x.iter_mut().for_each(|v| *v -= s);
        lu.solve(x);
        let s: f64 = dot(&rho, x);
        x.iter_mut().for_each(|v| *v -= s);
    };
    let left_op = |y: &mut Vec<f64>| {
        let s: f64 = y.iter().sum();
        y.iter_mut().zip(&rho).for_each(|(v, r)| *v -= s * r);
        lu.solve_transpose(y);
        let s: f64 = y.iter().sum();
        y.iter_mut().zip(&rho).for_each(|(v, r)| *v -= s * r);
    };

    // Weighted inner products make the eigenvectors of reversible chains
    // orthogonal, so orthonormalization leaves no residue along the slowest
    // mode for the next solve to amplify.
    let w_right: Vec<f64> = rho.iter().map(|r| r.max(1e-300)).collect();
    let w_left: Vec<f64> = w_right.iter().map(|r| 1.0 / r).collect();
    let (rv, rt, it_r) = iterate(n, block, count, &w_right, &right_op, |x| generator_mul(p, x))?;
    let (lv, lt, it_l) = iterate(n, block, count, &w_left, &left_op, |y| generator_vec_mul(p, y))?;

    let mut gaps = Vec::with_capacity(count);
    let mut right = Vec::with_capacity(count);
    let mut left = Vec::with_capacity(count);
    let mut max_imag: f64 = 0.0;
    let mut imag = Vec::with_capacity(count);
    for k in 0..count {
        let (theta, im) = rt[k];
        max_imag = max_imag.max(im.abs());
        imag.push(im);
        let j = (0..lt.len())
            .min_by(|&a, &b| (lt[a].0 - theta).abs().total_cmp(&(lt[b].0 - theta).abs()))
            .unwrap_or(k);
        let mut r = rv[k].clone();
        let mut s = lv[j].clone();
        let big = r[crate::linalg::dense::argmax_abs(&r)];
        r.iter_mut().for_each(|v| *v /= big);
        let lr = generator_mul(p, &r);
        let sr = dot(&s, &r);
        if sr.abs() < 1e-300 {
            return Err(RateError::numerical(
                "slow modes",
                "left and right vectors are orthogonal",
            ));
        }
        // Two-sided Rayleigh quotient: error is quadratic in the vector errors.
        let refined = dot(&s, &lr) / sr;
        s.iter_mut().for_each(|v| *v /= sr);
        gaps.push(refined);
        right.push(r);
        left.push(s);
    }
    Ok(SlowModes {
        stationary: rho,
        gaps,
        right,
        left,
        imag,
        max_imag,
        iterations: it_r.max(it_l),
    })
}

type Ritz = (Vec<Vec<f64>>, Vec<(f64, f64)>, usize);

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Gram-Schmidt (two passes) in the inner product weighted by `w`.
fn orthonormalize_weighted(cols: &mut [Vec<f64>], w: &[f64]) {
    for j in 0..cols.len() {
        for _pass in 0..2 {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let d = wdot(w, &head[i], &tail[0]);
                tail[0].iter_mut().zip(&head[i]).for_each(|(x, q)| *x -= d * q);
            }
        }
        let norm = wdot(w, &cols[j], &cols[j]).sqrt();
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
}

fn iterate<F, G>(n: usize, m: usize, count: usize, w: &[f64], op: &F, apply_l: G) -> Result<Ritz>
where
    F: Fn(&mut Vec<f64>) + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let mut x: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            (0..n)
                .map(|i| {
                    ((i as f64 + 0.5) * std::f64::consts::PI * (j + 1) as f64 / n as f64).cos()
                        + 1e-3 * ((i * 7 + j * 13) % 11) as f64
                })
                .collect()
        })
        .collect();
    orthonormalize(&mut x);
    orthonormalize_weighted(&mut x, w);
    let mut prev: Vec<f64> = vec![f64::NAN; count];
    let max_iter = 300;
    for it in 1..=max_iter {
        x.par_iter_mut().for_each(op);
        orthonormalize_weighted(&mut x, w);
        let lx: Vec<Vec<f64>> = x.par_iter().map(|v| apply_l(v)).collect();
        let h = DMatrix::from_fn(m, m, |i, j| wdot(w, &x[i], &lx[j]));
        let eig = dense_eigen(&h, m)?;
        // Smallest |theta| first.
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| eig.values[a].norm().total_cmp(&eig.values[b].norm()));
        let thetas: Vec<(f64, f64)> = idx.iter().map(|&k| (eig.values[k].re, eig.values[k].im)).collect();
        // One-sided Ritz values carry an absolute rounding floor of a few ulps of
        // ||L|| <= 2; the two-sided refinement below restores relative accuracy.
        let converged = it >= 4
            && (0..count).all(|k| {
                let t = thetas[k].0;
                (t - prev[k]).abs() <= 1e-12 * t.abs() + 1e-14
            });
        for k in 0..count {
            prev[k] = thetas[k].0;
        }
        if converged || it == max_iter {
            if !converged {
                return Err(RateError::NoConvergence {
                    context: "subspace iteration".into(),
                    iterations: it,
                    residual: f64::NAN,
                });
            }
            let vecs: Vec<Vec<f64>> = idx
                .iter()
                .map(|&k| {
                    let y = &eig.right[k];
                    let mut v = vec![0.0; n];
                    for (c, col) in x.iter().enumerate() {
                        v.iter_mut().zip(col).for_each(|(a, b)| *a += y[c] * b);
                    }
                    v
                })
                .collect();
            return Ok((vecs, thetas, it));
        }
    }
    unreachable!()
}
