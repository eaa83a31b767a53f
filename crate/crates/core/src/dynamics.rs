//! Elementary stochastic dynamics: Brownian (overdamped Langevin) motion,
//! Metropolis lattice walks, and sampling of an explicit Markov chain.

use crate::error::{RateError, Result};
use crate::geometry::{Lattice, Point};
use crate::linalg::CsrMatrix;
use crate::potential::Potential;
use crate::rng::RngStream;
use crate::transition::TransitionMatrix;
use std::fmt::Debug;

/// Text encoding of a walker state, used by checkpoints. Floating point values
/// are written as raw bit patterns so a resumed run is bit-identical.
pub trait StateCodec: Sized {
    fn encode(&self) -> String;
    fn decode(s: &str) -> Result<Self>;
}

impl StateCodec for f64 {
    fn encode(&self) -> String {
        format!("{:016x}", self.to_bits())
    }

    fn decode(s: &str) -> Result<Self> {
        u64::from_str_radix(s, 16)
            .map(f64::from_bits)
            .map_err(|e| RateError::Parse(format!("bad float bits '{s}': {e}")))
    }
}

impl StateCodec for usize {
    fn encode(&self) -> String {
        self.to_string()
    }

    fn decode(s: &str) -> Result<Self> {
        s.parse()
            .map_err(|e| RateError::Parse(format!("bad site index '{s}': {e}")))
    }
}

/// Outcome of one step confined to a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfinedMove<S> {
    pub state: S,
    /// Cell the unconstrained move would have entered, if it left the cell.
    pub crossed_into: Option<usize>,
    /// The mirrored move still left the cell, so the walker stayed put.
    pub fallback: bool,
}

pub trait Dynamics: Send + Sync {
    type State: Copy + Send + Sync + Debug + PartialEq + StateCodec;

    fn step(&self, s: Self::State, rng: &mut RngStream) -> Result<Self::State>;
    fn position(&self, s: Self::State) -> Point;
    fn energy(&self, s: Self::State) -> f64;
    fn beta(&self) -> f64;
    /// Physical time per step.
    fn dt(&self) -> f64;

    /// Fine lattice the dynamics is discretized on.
    fn lattice(&self) -> &Lattice;

    fn site_of(&self, s: Self::State) -> usize {
        self.lattice().nearest(self.position(s))
    }

    /// A state inside the region represented by `site` (uniform within a bin
    /// for continuous dynamics).
    fn state_in_site(&self, site: usize, rng: &mut RngStream) -> Self::State;

    /// Lower bound of the energy over the region represented by `site`.
    fn site_energy_floor(&self, site: usize) -> f64;

    /// One step that never leaves `cell`; `cells[site]` gives the cell of each site.
    fn confined_step(
        &self,
        s: Self::State,
        cells: &[usize],
        cell: usize,
        rng: &mut RngStream,
    ) -> Result<ConfinedMove<Self::State>>;

    /// Transition matrix of the dynamics on the fine lattice.
    fn fine_matrix(&self) -> Result<TransitionMatrix>;
}

fn point_label(p: Point, dims: usize) -> String {
    if dims == 1 {
        format!("{:.6}", p.x)
    } else {
        format!("{:.6};{:.6}", p.x, p.y)
    }
}

// ---------------------------------------------------------------------------
// Brownian dynamics

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianParams {
    pub beta: f64,
    pub diffusion: f64,
    pub dt: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BrownianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(RateError::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.diffusion >= 0.0 && self.diffusion.is_finite()) {
            return Err(RateError::invalid(format!(
                "diffusion must be non-negative, got {}",
                self.diffusion
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RateError::invalid(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if !(self.hi > self.lo) {
            return Err(RateError::invalid(format!("empty domain [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    fn drift(&self, pot: &dyn Potential, x: f64) -> f64 {
        x - self.beta * self.diffusion * pot.gradient(Point::on_line(x)).x * self.dt
    }

    fn noise_scale(&self) -> f64 {
        (2.0 * self.dt * self.diffusion).sqrt()
    }
}

/// Mirror `x` back into `[lo, hi]`.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    x.clamp(lo, hi)
}

/// Euler step `x' = x - beta D U'(x) dt + sqrt(2 dt D) w` with a supplied
/// standard normal `w`, reflected at the domain walls.
pub fn brownian_step_with_noise(x: f64, pot: &dyn Potential, p: &BrownianParams, w: f64) -> Result<f64> {
    let y = p.drift(pot, x) + p.noise_scale() * w;
    if !y.is_finite() {
        return Err(RateError::Propagation {
            position: format!("x = {x}"),
            detail: format!("non-finite update {y}"),
        });
    }
    Ok(reflect(y, p.lo, p.hi))
}

pub fn brownian_step(x: f64, pot: &dyn Potential, p: &BrownianParams, rng: &mut RngStream) -> Result<f64> {
    let w = if p.diffusion > 0.0 { rng.normal() } else { 0.0 };
    brownian_step_with_noise(x, pot, p, w)
}

pub struct Brownian<P> {
    potential: P,
    params: BrownianParams,
    lattice: Lattice,
}

impl<P: Potential> Brownian<P> {
    /// `dx` sets the bin width of the fine discretization.
    pub fn new(potential: P, params: BrownianParams, dx: f64) -> Result<Self> {
        params.validate()?;
        if potential.dim() != 1 {
            return Err(RateError::invalid("Brownian dynamics is implemented in one dimension"));
        }
        let lattice = Lattice::bins(params.lo, params.hi, dx)?;
        Ok(Brownian {
            potential,
            params,
            lattice,
        })
    }

    pub fn params(&self) -> &BrownianParams {
        &self.params
    }

    pub fn potential(&self) -> &P {
        &self.potential
    }
}

/// Mass of the standard normal on `[a, b]`, accurate in both tails.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    use std::f64::consts::SQRT_2;
    if b <= a {
        return 0.0;
    }
    let m = if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a / SQRT_2) - 0.5 * libm::erfc(b / SQRT_2)
    };
    m.max(0.0)
}

impl<P: Potential> Dynamics for Brownian<P> {
    type State = f64;

    fn step(&self, x: f64, rng: &mut RngStream) -> Result<f64> {
        brownian_step(x, &self.potential, &self.params, rng)
    }

    fn position(&self, x: f64) -> Point {
        Point::on_line(x)
    }

    fn energy(&self, x: f64) -> f64 {
        self.potential.energy(Point::on_line(x))
    }

    fn beta(&self) -> f64 {
        self.params.beta
    }

    fn dt(&self) -> f64 {
        self.params.dt
    }

    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn state_in_site(&self, site: usize, rng: &mut RngStream) -> f64 {
        let (a, b) = self.lattice.bin_edges(site);
        a + (b - a) * rng.uniform()
    }

    fn site_energy_floor(&self, site: usize) -> f64 {
        let (a, b) = self.lattice.bin_edges(site);
        let mut lo = f64::INFINITY;
        let mut slope: f64 = 0.0;
        for k in 0..=8 {
            let x = a + (b - a) * k as f64 / 8.0;
            lo = lo.min(self.energy(x));
            slope = slope.max(self.potential.gradient(Point::on_line(x)).x.abs());
        }
        // Between probe points the energy can dip by at most |U'| * spacing / 2.
        lo - slope * (b - a) / 16.0 - 1e-12
    }

    fn confined_step(&self, x: f64, cells: &[usize], cell: usize, rng: &mut RngStream) -> Result<ConfinedMove<f64>> {
        let y = self.step(x, rng)?;
        let n = self.lattice.len();
        let sx = self.lattice.nearest(Point::on_line(x));
        let sy = self.lattice.nearest(Point::on_line(y));
        // First site along the path that is outside the cell.
        let exit = if sy >= sx {
            (sx + 1..=sy).find(|&k| cells[k] != cell)
        } else {
            (sy..sx).rev().find(|&k| cells[k] != cell)
        };
        let Some(k) = exit else {
            return Ok(ConfinedMove {
                state: y,
                crossed_into: None,
                fallback: false,
            });
        };
        let (a, b) = self.lattice.bin_edges(k);
        let edge = if sy > sx { a } else { b };
        let mirrored = 2.0 * edge - y;
        let sm = self.lattice.nearest(Point::on_line(mirrored));
        let inside = mirrored >= self.params.lo
            && mirrored <= self.params.hi
            && sm < n
            && if sm <= sx {
                (sm..=sx).all(|s| cells[s] == cell)
            } else {
                (sx..=sm).all(|s| cells[s] == cell)
            };
        Ok(ConfinedMove {
            state: if inside { mirrored } else { x },
            crossed_into: Some(cells[k]),
            fallback: !inside,
        })
    }

    fn fine_matrix(&self) -> Result<TransitionMatrix> {
        let p = &self.params;
        let h = self.lattice.spacing();
        let sigma = p.noise_scale();
        if sigma < 0.5 * h {
            return Err(RateError::invalid(format!(
                "kernel width {sigma:.3e} is below half the grid spacing {h:.3e}; refine the grid or raise D*dt"
            )));
        }
        let n = self.lattice.len();
        let reach = (40.0 * sigma / h).ceil() as isize + 1;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let c = self.lattice.point(i).x;
            let m = p.drift(&self.potential, c);
            if !m.is_finite() {
                return Err(RateError::Propagation {
                    position: format!("x = {c}"),
                    detail: "non-finite drift".into(),
                });
            }
            let centre = ((m - p.lo) / h).floor() as isize;
            let mut row = Vec::new();
            for j in (centre - reach).max(0)..=(centre + reach).min(n as isize - 1) {
                let j = j as usize;
                let (a, b) = self.lattice.bin_edges(j);
                // Direct mass plus images folded back from both walls.
                let mut w = normal_mass((a - m) / sigma, (b - m) / sigma);
                let ml = 2.0 * p.lo - m;
                let mh = 2.0 * p.hi - m;
                w += normal_mass((a - ml) / sigma, (b - ml) / sigma);
                w += normal_mass((a - mh) / sigma, (b - mh) / sigma);
                if w > 0.0 {
                    row.push((j, w));
                }
            }
            rows.push(row);
        }
        let labels = (0..n).map(|i| point_label(self.lattice.point(i), 1)).collect();
        TransitionMatrix::normalized(CsrMatrix::from_rows(n, rows)?, Some(labels), 1)
    }
}

// ---------------------------------------------------------------------------
// Metropolis lattice walk

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridWalkerParams {
    pub beta: f64,
    /// Probability of proposing each individual neighbour. `None` means `1 / (2 d)`.
    pub move_prob: Option<f64>,
    /// Physical time per step.
    pub dt: f64,
}

pub struct GridWalker<P> {
    potential: P,
    lattice: Lattice,
    beta: f64,
    move_prob: f64,
    dt: f64,
    energies: Vec<f64>,
}

/// Metropolis acceptance `min(1, exp(-beta dU))`.
pub fn acceptance(beta: f64, du: f64) -> f64 {
    if du <= 0.0 {
        1.0
    } else {
        (-beta * du).exp()
    }
}

/// One Metropolis move on a lattice with precomputed site energies.
pub fn metropolis_step(
    site: usize,
    lattice: &Lattice,
    energies: &[f64],
    beta: f64,
    move_prob: f64,
    rng: &mut RngStream,
) -> usize {
    match propose(site, lattice, move_prob, rng) {
        Some(t) => {
            let du = energies[t] - energies[site];
            if du <= 0.0 || rng.uniform() < (-beta * du).exp() {
                t
            } else {
                site
            }
        }
        None => site,
    }
}

fn propose(site: usize, lattice: &Lattice, move_prob: f64, rng: &mut RngStream) -> Option<usize> {
    let u = rng.uniform();
    let k = (u / move_prob) as usize;
    if k >= 2 * lattice.dims() {
        return None;
    }
    lattice.neighbors(site)[k]
}

impl<P: Potential> GridWalker<P> {
    pub fn new(potential: P, lattice: Lattice, params: GridWalkerParams) -> Result<Self> {
        if !(params.beta > 0.0 && params.beta.is_finite()) {
            return Err(RateError::invalid(format!(
                "beta must be positive, got {}",
                params.beta
            )));
        }
        if !(params.dt > 0.0) {
            return Err(RateError::invalid("time step must be positive"));
        }
        if potential.dim() != lattice.dims() {
            return Err(RateError::invalid("potential and lattice dimensions differ"));
        }
        let d = lattice.dims();
        let move_prob = params.move_prob.unwrap_or(1.0 / (2 * d) as f64);
        if !(move_prob > 0.0 && move_prob * (2 * d) as f64 <= 1.0 + 1e-15) {
            return Err(RateError::invalid(format!(
                "move probability {move_prob} must lie in (0, 1/(2d)] for d = {d}"
            )));
        }
        let energies: Vec<f64> = (0..lattice.len()).map(|s| potential.energy(lattice.point(s))).collect();
        if let Some(s) = energies.iter().position(|e| !e.is_finite()) {
            return Err(RateError::Propagation {
                position: format!("{:?}", lattice.point(s)),
                detail: "non-finite energy".into(),
            });
        }
        Ok(GridWalker {
            potential,
            lattice,
            beta: params.beta,
            move_prob,
            dt: params.dt,
            energies,
        })
    }

    pub fn move_prob(&self) -> f64 {
        self.move_prob
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn potential(&self) -> &P {
        &self.potential
    }
}

impl<P: Potential> Dynamics for GridWalker<P> {
    type State = usize;

    fn step(&self, s: usize, rng: &mut RngStream) -> Result<usize> {
        Ok(metropolis_step(
            s,
            &self.lattice,
            &self.energies,
            self.beta,
            self.move_prob,
            rng,
        ))
    }

    fn position(&self, s: usize) -> Point {
        self.lattice.point(s)
    }

    fn energy(&self, s: usize) -> f64 {
        self.energies[s]
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn site_of(&self, s: usize) -> usize {
        s
    }

    fn state_in_site(&self, site: usize, _rng: &mut RngStream) -> usize {
        site
    }

    fn site_energy_floor(&self, site: usize) -> f64 {
        self.energies[site]
    }

    fn confined_step(
        &self,
        s: usize,
        cells: &[usize],
        cell: usize,
        rng: &mut RngStream,
    ) -> Result<ConfinedMove<usize>> {
        let t = metropolis_step(s, &self.lattice, &self.energies, self.beta, self.move_prob, rng);
        if cells[t] == cell {
            Ok(ConfinedMove {
                state: t,
                crossed_into: None,
                fallback: false,
            })
        } else {
            Ok(ConfinedMove {
                state: s,
                crossed_into: Some(cells[t]),
                fallback: false,
            })
        }
    }

    fn fine_matrix(&self) -> Result<TransitionMatrix> {
        let n = self.lattice.len();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(5);
            let mut out = 0.0;
            for t in self.lattice.neighbors(i).into_iter().flatten() {
                let q = self.move_prob * acceptance(self.beta, self.energies[t] - self.energies[i]);
                if q > 0.0 {
                    row.push((t, q));
                    out += q;
                }
            }
            row.push((i, 1.0 - out));
            rows.push(row);
        }
        let labels = (0..n)
            .map(|i| point_label(self.lattice.point(i), self.lattice.dims()))
            .collect();
        TransitionMatrix::new(CsrMatrix::from_rows(n, rows)?, Some(labels), 1)
    }
}

// ---------------------------------------------------------------------------
// Explicit chain

/// Samples an explicit transition matrix. By default states sit at integer
/// positions on a line.
pub struct ChainDynamics {
    matrix: TransitionMatrix,
    lattice: Lattice,
    energies: Vec<f64>,
    beta: f64,
    dt: f64,
    /// Running row sums, aligned with the stored entries of each row.
    cdf: Vec<Vec<f64>>,
}

impl ChainDynamics {
    /// `energies` define the equilibrium weights `exp(-U)` used for initial
    /// sampling; `None` derives them from the stationary distribution.
    pub fn new(matrix: TransitionMatrix, energies: Option<Vec<f64>>, dt: f64) -> Result<Self> {
        let n = matrix.dim();
        let energies = match energies {
            Some(e) => e,
            None => {
                let (_, rho) = crate::linalg::iterative::stationary(matrix.csr())?;
                rho.iter().map(|r| -r.ln()).collect()
            }
        };
        let lattice = Lattice::line(0.0, 1.0, n)?;
        Self::on_lattice(matrix, lattice, energies, 1.0, dt)
    }

    /// Chain whose states are the sites of `lattice`, with equilibrium weights
    /// `exp(-beta U)`.
    pub fn on_lattice(
        matrix: TransitionMatrix,
        lattice: Lattice,
        energies: Vec<f64>,
        beta: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = matrix.dim();
        if lattice.len() != n || energies.len() != n {
            return Err(RateError::invalid(
                "lattice and energy vector must match the chain dimension",
            ));
        }
        if !(dt > 0.0) || !(beta > 0.0) {
            return Err(RateError::invalid("time step and inverse temperature must be positive"));
        }
        let cdf = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                matrix
                    .csr()
                    .row(i)
                    .map(|(_, v)| {
                        acc += v;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(ChainDynamics {
            matrix,
            lattice,
            energies,
            beta,
            dt,
            cdf,
        })
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    fn sample_row(&self, i: usize, rng: &mut RngStream) -> usize {
        let cdf = &self.cdf[i];
        let (cols, _) = self.matrix.csr().row_slices(i);
        let u = rng.uniform() * cdf[cdf.len() - 1];
        cols[cdf.partition_point(|&c| c <= u).min(cols.len() - 1)]
    }
}

impl<P: Potential> Brownian<P> {
    /// The fine-lattice chain of this dynamics as a sampler: walkers hop
    /// between bin centres with the fine transition matrix, so sampled rates
    /// converge to the exact spectral rates of that matrix.
    pub fn lattice_chain(&self) -> Result<ChainDynamics> {
        let energies = (0..self.lattice.len())
            .map(|s| self.potential.energy(self.lattice.point(s)))
            .collect();
        ChainDynamics::on_lattice(
            self.fine_matrix()?,
            self.lattice.clone(),
            energies,
            self.params.beta,
            self.params.dt,
        )
    }
}

impl Dynamics for ChainDynamics {
    type State = usize;

    fn step(&self, s: usize, rng: &mut RngStream) -> Result<usize> {
        Ok(self.sample_row(s, rng))
    }

    fn position(&self, s: usize) -> Point {
        self.lattice.point(s)
    }

    fn energy(&self, s: usize) -> f64 {
        self.energies[s]
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn site_of(&self, s: usize) -> usize {
        s
    }

    fn state_in_site(&self, site: usize, _rng: &mut RngStream) -> usize {
        site
    }

    fn site_energy_floor(&self, site: usize) -> f64 {
        self.energies[site]
    }

    fn confined_step(
        &self,
        s: usize,
        cells: &[usize],
        cell: usize,
        rng: &mut RngStream,
    ) -> Result<ConfinedMove<usize>> {
        let t = self.sample_row(s, rng);
        if cells[t] == cell {
            return Ok(ConfinedMove {
                state: t,
                crossed_into: None,
                fallback: false,
            });
        }
        // On a line a long jump first leaves through the near side of the cell.
        let first = if self.lattice.dims() == 1 {
            let path: Box<dyn Iterator<Item = usize>> = if t > s {
                Box::new(s + 1..=t)
            } else {
                Box::new((t..s).rev())
            };
            path.map(|k| cells[k]).find(|&c| c != cell).unwrap_or(cells[t])
        } else {
            cells[t]
        };
        Ok(ConfinedMove {
            state: s,
            crossed_into: Some(first),
            fallback: false,
        })
    }

    fn fine_matrix(&self) -> Result<TransitionMatrix> {
        Ok(self.matrix.clone())
    }
}
