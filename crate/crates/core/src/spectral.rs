//! Reference spectra, exact rates, stationary distributions and committors.

use crate::dynamics::Dynamics;
use crate::error::{RateError, Result};
use crate::geometry::{Lattice, Region};
use crate::linalg::banded::MMatrixLu;
use crate::linalg::dense::{dense_eigen, eigenvalues};
use crate::linalg::iterative::slow_modes;
use crate::linalg::CsrMatrix;
use crate::transition::TransitionMatrix;
use petgraph::graph::DiGraph;

/// Largest dimension handled by the dense eigen-solver.
pub const DENSE_LIMIT: usize = 2000;

/// Imaginary parts above this are reported as genuinely complex.
pub const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Real parts, sorted by decreasing modulus.
    pub eigenvalues: Vec<f64>,
    pub imaginary: Vec<f64>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    pub lag: usize,
}

impl SpectralDecomposition {
    pub fn has_complex(&self) -> bool {
        self.imaginary.iter().any(|v| v.abs() > IMAG_TOL)
    }

    /// Relaxation rate `-ln(mu_k) / (lag dt)`; `None` for non-positive eigenvalues.
    pub fn relaxation_rate(&self, k: usize, dt: f64) -> Option<f64> {
        let mu = self.eigenvalues[k];
        (mu > 0.0).then(|| -mu.ln() / (self.lag as f64 * dt))
    }

    /// Flip pair `k` so that the right vector is positive on average over `abar`.
    pub fn orient(&mut self, k: usize, abar: &[bool]) {
        let s: f64 = self.right[k].iter().zip(abar).filter(|(_, &a)| a).map(|(v, _)| v).sum();
        if s < 0.0 {
            self.right[k].iter_mut().for_each(|v| *v = -*v);
            self.left[k].iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Reactant/product cores and the metastable split of all states.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinSpec {
    abar: Vec<bool>,
    a: Vec<usize>,
    b: Vec<usize>,
}

impl BasinSpec {
    /// `abar[i]` is true for states in the reactant half; everything else is in the product half.
    pub fn new(abar: Vec<bool>, a: Vec<usize>, b: Vec<usize>) -> Result<Self> {
        let n = abar.len();
        if a.is_empty() || b.is_empty() {
            return Err(RateError::invalid("basins A and B must be non-empty"));
        }
        if let Some(&i) = a.iter().find(|&&i| i >= n || !abar[i]) {
            return Err(RateError::invalid(format!(
                "state {i} of A lies outside the reactant half"
            )));
        }
        if let Some(&i) = b.iter().find(|&&i| i >= n || abar[i]) {
            return Err(RateError::invalid(format!(
                "state {i} of B lies outside the product half"
            )));
        }
        Ok(BasinSpec { abar, a, b })
    }

    /// Basins from regions evaluated at lattice sites; the product half is the
    /// complement of `abar`.
    pub fn from_regions(lattice: &Lattice, abar: &Region, a: &Region, b: &Region) -> Result<Self> {
        let flags = (0..lattice.len()).map(|s| abar.contains(lattice.point(s))).collect();
        Self::new(flags, a.sites(lattice), b.sites(lattice))
    }

    pub fn len(&self) -> usize {
        self.abar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abar.is_empty()
    }

    pub fn abar(&self) -> &[bool] {
        &self.abar
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    /// Stationary mass of the reactant and product halves.
    pub fn split_mass(&self, rho: &[f64]) -> (f64, f64) {
        let mut ra = 0.0;
        let mut rb = 0.0;
        for (r, &a) in rho.iter().zip(&self.abar) {
            if a {
                ra += r;
            } else {
                rb += r;
            }
        }
        (ra, rb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateEstimate {
    pub forward: f64,
    pub backward: f64,
    pub stderr_forward: Option<f64>,
    pub stderr_backward: Option<f64>,
}

/// Fine-lattice transition matrix of a dynamics.
pub fn build_fine_matrix<D: Dynamics>(dynamics: &D) -> Result<TransitionMatrix> {
    if dynamics.lattice().len() < 2 {
        return Err(RateError::invalid("fine grid needs at least two states"));
    }
    dynamics.fine_matrix()
}

/// Strongly connected components of the transition graph.
pub fn components(p: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, p.nnz());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for (j, v) in p.row(i) {
            if j != i && v > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort();
    comps
}

pub fn check_irreducible(p: &CsrMatrix) -> Result<()> {
    let comps = components(p);
    if comps.len() > 1 {
        return Err(RateError::Reducible {
            detail: "transition graph is not strongly connected".into(),
            components: comps,
        });
    }
    Ok(())
}

/// Stationary distribution of an irreducible chain.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    check_irreducible(p.csr())?;
    let (_, rho) = crate::linalg::iterative::stationary(p.csr())?;
    let back = p.csr().vec_mul(&rho);
    let res = back.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if res > 1e-10 {
        return Err(RateError::numerical(
            "stationary distribution",
            format!("residual {res:e} exceeds 1e-10"),
        ));
    }
    Ok(rho)
}

/// Leading `k` eigenpairs. Dense for small chains; for larger irreducible
/// chains the stationary pair plus the `k - 1` slowest relaxation modes.
pub fn spectral_decompose(p: &TransitionMatrix, k: usize) -> Result<SpectralDecomposition> {
    let n = p.dim();
    if k == 0 || k > n {
        return Err(RateError::invalid(format!(
            "requested {k} eigenpairs of a {n}-state matrix"
        )));
    }
    let (eigenvalues, imaginary, right, left) = if n <= DENSE_LIMIT {
        let e = dense_eigen(&p.to_dense(), k)?;
        let mut right = e.right;
        let mut left = e.left;
        // Scale the leading left vector to a probability vector when it is one.
        if (e.values[0].re - 1.0).abs() < 1e-10 && e.values[0].im.abs() < IMAG_TOL {
            let s: f64 = left[0].iter().sum();
            if s.abs() > 1e-300 {
                left[0].iter_mut().for_each(|v| *v /= s);
                right[0].iter_mut().for_each(|v| *v *= s);
            }
        }
        (
            e.values.iter().map(|z| z.re).collect::<Vec<_>>(),
            e.values.iter().map(|z| z.im).collect::<Vec<_>>(),
            right,
            left,
        )
    } else {
        check_irreducible(p.csr())?;
        let mut values = vec![1.0];
        let mut imaginary = vec![0.0];
        let mut right = vec![vec![1.0; n]];
        let mut left = Vec::with_capacity(k);
        if k > 1 {
            let m = slow_modes(p.csr(), k - 1)?;
            left.push(m.stationary.clone());
            for j in 0..k - 1 {
                values.push(1.0 - m.gaps[j]);
                imaginary.push(m.imag[j]);
            }
            right.extend(m.right);
            left.extend(m.left);
        } else {
            left.push(stationary_distribution(p)?);
        }
        (values, imaginary, right, left)
    };
    if imaginary.iter().any(|v| v.abs() > IMAG_TOL) {
        log::warn!("transition matrix has complex eigenvalues; ordering by modulus and keeping real parts");
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        imaginary,
        right,
        left,
        lag: p.lag(),
    })
}

/// `1 - mu_2` of an irreducible chain, to full relative precision even when
/// the gap is far below machine epsilon relative to one.
pub fn relaxation_gap(p: &TransitionMatrix) -> Result<f64> {
    let n = p.dim();
    if n < 2 {
        return Err(RateError::invalid("a single state has no relaxation mode"));
    }
    check_irreducible(p.csr())?;
    // Structure checks (complex or degenerate mu_2) only need absolute
    // accuracy; the gap itself comes from the cancellation-free solver.
    let gap = if n <= DENSE_LIMIT {
        let ev = eigenvalues(&p.to_dense())?;
        if ev[1].im.abs() > IMAG_TOL {
            return Err(RateError::numerical("relaxation gap", "second eigenvalue is complex"));
        }
        if n > 2 && (ev[1] - ev[2]).norm() <= 1e-10 {
            return Err(RateError::numerical(
                "relaxation gap",
                format!("no spectral gap: mu2 = {}, mu3 = {}", ev[1].re, ev[2].re),
            ));
        }
        let modes = slow_modes(p.csr(), 1)?;
        let gap = modes.gaps[0];
        if (gap - (1.0 - ev[1].re)).abs() > 1e-8 {
            return Err(RateError::numerical(
                "relaxation gap",
                format!(
                    "iterative gap {gap:e} disagrees with dense 1-mu2 = {:e}",
                    1.0 - ev[1].re
                ),
            ));
        }
        gap
    } else {
        let modes = slow_modes(p.csr(), 2)?;
        if modes.imag[0].abs() > IMAG_TOL {
            return Err(RateError::numerical("relaxation gap", "second eigenvalue is complex"));
        }
        if !(modes.gaps[0] < modes.gaps[1]) {
            return Err(RateError::numerical(
                "relaxation gap",
                format!(
                    "no spectral gap: 1-mu2 = {:e}, 1-mu3 = {:e}",
                    modes.gaps[0], modes.gaps[1]
                ),
            ));
        }
        modes.gaps[0]
    };
    if !(gap < 1.0) {
        return Err(RateError::numerical(
            "relaxation gap",
            format!(
                "mu2 = {} is not positive; the lag is too long or the matrix is invalid",
                1.0 - gap
            ),
        ));
    }
    Ok(gap)
}

/// `lambda_2 = -ln(mu_2) / (lag dt)` from the gap `1 - mu_2`.
pub fn rate_from_gap(gap: f64, lag: usize, dt: f64) -> f64 {
    -(-gap).ln_1p() / (lag as f64 * dt)
}

/// Exact two-state rates from the slowest relaxation mode.
pub fn exact_rates(p: &TransitionMatrix, basins: &BasinSpec, dt: f64) -> Result<RateEstimate> {
    if basins.len() != p.dim() {
        return Err(RateError::invalid(
            "basin specification does not match the matrix dimension",
        ));
    }
    if !(dt > 0.0) {
        return Err(RateError::invalid("time step must be positive"));
    }
    let lambda2 = rate_from_gap(relaxation_gap(p)?, p.lag(), dt);
    let (ra, rb) = basins.split_mass(&stationary_distribution(p)?);
    Ok(RateEstimate {
        forward: lambda2 * rb,
        backward: lambda2 * ra,
        stderr_forward: None,
        stderr_backward: None,
    })
}

/// Product of `I - P` restricted to `keep` with vector `x`, computed from
/// off-diagonal entries plus the mass leaving `keep`.
fn restricted_generator_mul(sub: &CsrMatrix, leak: &[f64], x: &[f64]) -> Vec<f64> {
    (0..sub.nrows())
        .map(|i| {
            leak[i] * x[i]
                + sub
                    .row(i)
                    .filter(|&(j, _)| j != i)
                    .map(|(j, v)| v * (x[i] - x[j]))
                    .sum::<f64>()
        })
        .collect()
}

/// Solve `(I - P_KK) x = b` on the complement of `absorbing`, where `K` is
/// the set of non-absorbing states.
fn absorbing_solve(
    p: &CsrMatrix,
    absorbing: &[bool],
    rhs: impl Fn(usize) -> f64,
    what: &str,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let keep: Vec<usize> = (0..p.nrows()).filter(|&i| !absorbing[i]).collect();
    if keep.is_empty() {
        return Ok((keep, Vec::new()));
    }
    let sub = p.submatrix(&keep);
    let leak: Vec<f64> = keep
        .iter()
        .map(|&i| p.row(i).filter(|&(j, _)| absorbing[j]).map(|(_, v)| v).sum())
        .collect();
    let lu = MMatrixLu::factor(&sub, &leak).map_err(|_| {
        RateError::numerical(
            what,
            "singular interior system: some states cannot reach the absorbing set",
        )
    })?;
    if lu.is_singular() {
        return Err(RateError::numerical(
            what,
            "singular interior system: some states cannot reach the absorbing set",
        ));
    }
    let b: Vec<f64> = keep.iter().map(|&i| rhs(i)).collect();
    let mut x = b.clone();
    lu.solve(&mut x);
    // One step of iterative refinement.
    let ax = restricted_generator_mul(&sub, &leak, &x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    lu.solve(&mut r);
    x.iter_mut().zip(&r).for_each(|(a, c)| *a += c);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(RateError::numerical(what, "non-finite solution"));
    }
    Ok((keep, x))
}

/// Probability of reaching B before A from every state.
pub fn committor(p: &TransitionMatrix, basins: &BasinSpec) -> Result<Vec<f64>> {
    let n = p.dim();
    if basins.len() != n {
        return Err(RateError::invalid(
            "basin specification does not match the matrix dimension",
        ));
    }
    let mut in_b = vec![false; n];
    basins.b().iter().for_each(|&i| in_b[i] = true);
    let mut absorbing = in_b.clone();
    basins.a().iter().for_each(|&i| absorbing[i] = true);
    let q = p.csr();
    let (keep, x) = absorbing_solve(
        q,
        &absorbing,
        |i| q.row(i).filter(|&(j, _)| in_b[j]).map(|(_, v)| v).sum(),
        "committor",
    )?;
    let mut pi: Vec<f64> = in_b.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    for (k, &i) in keep.iter().enumerate() {
        pi[i] = x[k].clamp(0.0, 1.0);
    }
    let res = (0..n)
        .filter(|&i| !absorbing[i])
        .map(|i| (pi[i] - q.row(i).map(|(j, v)| v * pi[j]).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    if res > 1e-10 {
        return Err(RateError::numerical(
            "committor",
            format!("residual {res:e} exceeds 1e-10"),
        ));
    }
    Ok(pi)
}

/// Mean number of steps to first reach `target` from each state (zero on the target).
pub fn mean_first_passage(p: &TransitionMatrix, target: &[bool]) -> Result<Vec<f64>> {
    let n = p.dim();
    if target.len() != n || !target.iter().any(|&t| t) {
        return Err(RateError::invalid("target set must be non-empty and match the matrix"));
    }
    let (keep, x) = absorbing_solve(p.csr(), target, |_| 1.0, "mean first passage")?;
    let mut m = vec![0.0; n];
    for (k, &i) in keep.iter().enumerate() {
        m[i] = x[k];
    }
    Ok(m)
}

/// Mean time to absorption in `cemetery`, in units of `dt`, from every state
/// (zero on the cemetery): deletes the cemetery rows and columns and solves
/// `(I - P) T / dt = 1`.
pub fn mean_passage_time(p: &TransitionMatrix, cemetery: &[bool], dt: f64) -> Result<Vec<f64>> {
    let n = p.dim();
    if cemetery.len() != n || !cemetery.iter().any(|&c| c) {
        return Err(RateError::invalid("cemetery must be a non-empty subset of the states"));
    }
    if !(dt > 0.0) {
        return Err(RateError::invalid("time step must be positive"));
    }
    // Reverse reachability from the cemetery.
    let mut reach = cemetery.to_vec();
    let pt = p.csr().transpose();
    let mut stack: Vec<usize> = (0..n).filter(|&i| cemetery[i]).collect();
    while let Some(j) = stack.pop() {
        for (i, v) in pt.row(j) {
            if v > 0.0 && !reach[i] {
                reach[i] = true;
                stack.push(i);
            }
        }
    }
    let stuck: Vec<&str> = (0..n).filter(|&i| !reach[i]).map(|i| p.labels()[i].as_str()).collect();
    if !stuck.is_empty() {
        return Err(RateError::numerical(
            "mean passage time",
            format!("no path to the cemetery from: {}", stuck.join(", ")),
        ));
    }
    let steps = mean_first_passage(p, cemetery)?;
    if steps.iter().any(|t| !(*t >= 0.0)) {
        return Err(RateError::numerical("mean passage time", "negative passage time"));
    }
    Ok(steps.into_iter().map(|t| t * dt).collect())
}
