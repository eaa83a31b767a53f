//! Dense eigen-decomposition: Schur eigenvalues, inverse-iteration eigenvectors.

use crate::error::{RateError, Result};
use nalgebra::{Complex, DMatrix, DVector};

/// Eigenpairs sorted by decreasing modulus. Vectors are biorthonormal:
/// `left[k] . right[k] = 1` and `left[k] . right[m] ~ 0` for `k != m`.
/// For complex eigenvalues only the real parts of the vectors are kept.
#[derive(Debug, Clone)]
pub struct DenseEigen {
    pub values: Vec<Complex<f64>>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
}

const CLUSTER_TOL: f64 = 1e-10;

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let iterations = 100 * n.max(10);
    let schur = |a: DMatrix<f64>| nalgebra::linalg::Schur::try_new(a, f64::EPSILON, iterations);
    // Francis QR without exceptional shifts can cycle on some inputs. The
    // transpose and a diagonal similarity have the same spectrum but start
    // the iteration elsewhere.
    let schur = schur(m.clone())
        .or_else(|| schur(m.transpose()))
        .or_else(|| {
            let d = DVector::from_fn(n, |i, _| 1.0 + 0.37 * (i % 3) as f64);
            schur(DMatrix::from_fn(n, n, |i, j| m[(i, j)] * d[i] / d[j]))
        })
        .ok_or_else(|| RateError::NoConvergence {
            context: "Schur decomposition".into(),
            iterations,
            residual: f64::NAN,
        })?;
    let mut v: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    Ok(v)
}

/// Leading `k` eigenpairs of a square matrix.
pub fn dense_eigen(m: &DMatrix<f64>, k: usize) -> Result<DenseEigen> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(RateError::invalid(
            "eigen-decomposition needs a non-empty square matrix",
        ));
    }
    let k = k.min(n);
    let all = eigenvalues(m)?;
    let wanted = &all[..k];

    let mut values = Vec::with_capacity(k);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(k);

    let mut start = 0;
    while start < k {
        let mu = wanted[start];
        let tol = CLUSTER_TOL * mu.norm().max(1.0);
        let mut end = start + 1;
        while end < k && (wanted[end] - mu).norm() <= tol {
            end += 1;
        }
        let c = end - start;
        let (mut r, mut s) = if mu.im.abs() > 1e-10 {
            let r = complex_inverse_iteration(m, mu, false);
            let s = complex_inverse_iteration(m, mu, true);
            (vec![r], vec![s])
        } else {
            let sigma = wanted[start..end].iter().map(|z| z.re).sum::<f64>() / c as f64;
            let r = block_inverse_iteration(m, sigma, c, false, &right, &left)?;
            let s = block_inverse_iteration(m, sigma, c, true, &left, &right)?;
            (r, s)
        };
        // A complex pair shares one real vector per member.
        while r.len() < c {
            r.push(r[0].clone());
            s.push(s[0].clone());
        }
        biorthonormalize(&mut r, &mut s)?;
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by_key(|&j| argmax_abs(&r[j]));
        for (slot, &j) in order.iter().enumerate() {
            values.push(wanted[start + slot]);
            right.push(r[j].clone());
            left.push(s[j].clone());
        }
        start = end;
    }
    Ok(DenseEigen { values, right, left })
}

pub fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

fn start_vector(n: usize, j: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 1.0 + 0.5 * (0.7 * (i + 1) as f64 * (j + 1) as f64 + 0.3 * j as f64).sin())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt, applied twice. Columns that vanish are re-seeded.
pub fn orthonormalize(cols: &mut [Vec<f64>]) {
    let n = cols.first().map_or(0, |c| c.len());
    for j in 0..cols.len() {
        for _pass in 0..2 {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let d = dot(&head[i], &tail[0]);
                tail[0].iter_mut().zip(&head[i]).for_each(|(x, q)| *x -= d * q);
            }
        }
        let norm = dot(&cols[j], &cols[j]).sqrt();
        if norm > 0.0 && norm.is_finite() {
            cols[j].iter_mut().for_each(|x| *x /= norm);
        } else {
            cols[j] = start_vector(n, j + 17);
            let nn = dot(&cols[j], &cols[j]).sqrt();
            cols[j].iter_mut().for_each(|x| *x /= nn);
        }
    }
}

fn block_inverse_iteration(
    m: &DMatrix<f64>,
    sigma: f64,
    c: usize,
    transpose: bool,
    prev_same: &[Vec<f64>],
    prev_dual: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = m.nrows();
    let base = if transpose { m.transpose() } else { m.clone() };
    let mut shift = sigma;
    let lu = loop {
        let a = &base - DMatrix::identity(n, n) * shift;
        let lu = a.lu();
        if lu.is_invertible() {
            break lu;
        }
        shift += 1e-13 * sigma.abs().max(1.0);
    };
    let mut block: Vec<Vec<f64>> = (0..c).map(|j| start_vector(n, j)).collect();
    for _ in 0..4 {
        for v in block.iter_mut() {
            deflate(v, prev_same, prev_dual);
            let x = lu
                .solve(&DVector::from_column_slice(v))
                .ok_or_else(|| RateError::numerical("inverse iteration", "singular shifted matrix"))?;
            *v = x.iter().copied().collect();
        }
        orthonormalize(&mut block);
    }
    for v in block.iter_mut() {
        deflate(v, prev_same, prev_dual);
    }
    orthonormalize(&mut block);
    Ok(block)
}

/// Remove components along previously found eigenvectors: `v -= x_m (y_m . v)`
/// with `(x_m, y_m)` biorthonormal pairs.
fn deflate(v: &mut [f64], same: &[Vec<f64>], dual: &[Vec<f64>]) {
    for (x, y) in same.iter().zip(dual) {
        let d = dot(y, v);
        v.iter_mut().zip(x).for_each(|(a, b)| *a -= d * b);
    }
}

fn complex_inverse_iteration(m: &DMatrix<f64>, mu: Complex<f64>, transpose: bool) -> Vec<f64> {
    let n = m.nrows();
    let base = if transpose { m.transpose() } else { m.clone() };
    let mut a: DMatrix<Complex<f64>> = base.map(|x| Complex::new(x, 0.0));
    let mut shift = mu;
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let mut lu = a.clone().lu();
    while !lu.is_invertible() {
        let eps = Complex::new(1e-13 * mu.norm().max(1.0), 0.0);
        shift += eps;
        for i in 0..n {
            a[(i, i)] -= eps;
        }
        lu = a.clone().lu();
    }
    let mut v = DVector::from_iterator(n, start_vector(n, 0).into_iter().map(|x| Complex::new(x, 0.1 * x)));
    for _ in 0..4 {
        if let Some(x) = lu.solve(&v) {
            let norm = x.norm();
            v = x / Complex::new(norm, 0.0);
        }
    }
    // Rotate so the largest component is real.
    let big = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex::new(1.0, 0.0));
    let phase = big.conj() / Complex::new(big.norm().max(f64::MIN_POSITIVE), 0.0);
    v.iter().map(|z| (z * phase).re).collect()
}

/// Make `s_i . r_j = delta_ij` and scale each right vector to unit max-norm with
/// its largest component positive.
pub fn biorthonormalize(r: &mut [Vec<f64>], s: &mut [Vec<f64>]) -> Result<()> {
    let c = r.len();
    for v in r.iter_mut() {
        let big = v[argmax_abs(v)];
        if big != 0.0 {
            v.iter_mut().for_each(|x| *x /= big);
        }
    }
    let g = DMatrix::from_fn(c, c, |i, j| dot(&s[i], &r[j]));
    let ginv = g.clone().try_inverse().ok_or_else(|| {
        RateError::numerical(
            "eigenvector normalization",
            "left and right eigenvectors are orthogonal",
        )
    })?;
    // S_new = S * G^{-T}, written per vector: s_new_i = sum_k ginv[i, k] s_k
    let n = s.first().map_or(0, |v| v.len());
    let old: Vec<Vec<f64>> = s.to_vec();
    for i in 0..c {
        let mut v = vec![0.0; n];
        for (k, sk) in old.iter().enumerate() {
            let f = ginv[(i, k)];
            v.iter_mut().zip(sk).for_each(|(a, b)| *a += f * b);
        }
        s[i] = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_cycle_is_recovered() {
        // Plain Francis QR stalls on this row-stochastic matrix.
        let m = DMatrix::from_column_slice(
            5,
            5,
            &[
                0.10355034454225254,
                0.264437974251054,
                0.2900784019806435,
                0.1358866446029614,
                0.06202832760595226,
                0.29168090366084803,
                0.07667029369094279,
                0.24223810464115877,
                0.15889910346104466,
                0.2813599204271259,
                0.40054339254628785,
                0.1316999052552193,
                0.10641468873271992,
                0.3259908333577375,
                0.19126579199991336,
                0.004034962479036695,
                0.10596698878099516,
                0.2595237427499048,
                0.11773827381954294,
                0.2764836247877091,
                0.2001903967715748,
                0.42122483802178884,
                0.101745061895573,
                0.26148514475871365,
                0.18886233517929932,
            ],
        );
        assert!(nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 1000).is_none());
        let v = eigenvalues(&m).unwrap();
        assert!((v[0].re - 1.0).abs() < 1e-12 && v[0].im == 0.0);
        assert!((v.iter().map(|z| z.re).sum::<f64>() - m.trace()).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain() {
        let m = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let e = dense_eigen(&m, 2).unwrap();
        assert!((e.values[0].re - 1.0).abs() < 1e-14);
        assert!((e.values[1].re - 0.7).abs() < 1e-14);
        for k in 0..2 {
            let r = DVector::from_vec(e.right[k].clone());
            let pr = &m * &r;
            for i in 0..2 {
                assert!((pr[i] - e.values[k].re * r[i]).abs() < 1e-13);
            }
            assert!((dot(&e.left[k], &e.right[k]) - 1.0).abs() < 1e-13);
        }
        assert!(dot(&e.left[0], &e.right[1]).abs() < 1e-13);
    }

    #[test]
    fn identity_gives_biorthonormal_basis() {
        let m = DMatrix::<f64>::identity(3, 3);
        let e = dense_eigen(&m, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(&e.left[i], &e.right[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_has_complex_pair() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let v = eigenvalues(&m).unwrap();
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(v.iter().filter(|z| z.im.abs() > 0.5).count() == 2);
    }
}
