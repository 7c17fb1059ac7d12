//! Lattice systems on finite tori: the voter model and its coalescing
//! random-walk dual, branching random walk, and the stepping-stone
//! diffusion with its delayed-coalescence dual.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::duality::{matrix_exp_transition, RateMatrix};
use crate::ensemble::EnsembleSpec;
use crate::error::{check_domain, Error, Result};
use crate::numeric::{step_count, Matrix};
use crate::offspring::OffspringLaw;
use crate::stats::Estimate;
use crate::trajectory::Trajectory;

pub const VOTER_EVENT_CAP: u64 = 100_000_000;
pub const BRW_POPULATION_CAP: u64 = 1_000_000;
/// Stepping-stone steps need `dt (c + gamma)` below this.
pub const STEPPING_STONE_DT_BOUND: f64 = 0.05;

/// Opinion per site.
pub type SpinConfig = Vec<u8>;
/// Type-1 frequency per site.
pub type FreqConfig = Vec<f64>;

/// Serialized form of a [`TorusLattice`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub dim: usize,
    pub side: usize,
    pub kernel: Vec<(Vec<i64>, f64)>,
}

/// Finite torus `(Z/LZ)^d` with a symmetric jump kernel given as offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TorusSpec", into = "TorusSpec")]
pub struct TorusLattice {
    dim: usize,
    side: usize,
    kernel: Vec<(Vec<i64>, f64)>,
    /// `neighbors[site][k]` is `site + offset_k`.
    neighbors: Vec<Vec<usize>>,
}

impl TryFrom<TorusSpec> for TorusLattice {
    type Error = Error;
    fn try_from(s: TorusSpec) -> Result<Self> {
        Self::new(s.dim, s.side, s.kernel)
    }
}

impl From<TorusLattice> for TorusSpec {
    fn from(l: TorusLattice) -> Self {
        Self {
            dim: l.dim,
            side: l.side,
            kernel: l.kernel,
        }
    }
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize, kernel: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        if dim == 0 || side < 2 {
            return Err(Error::Invalid("torus needs d >= 1 and L >= 2".into()));
        }
        let mass: f64 = kernel.iter().map(|(_, p)| p).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("kernel mass {mass} != 1")));
        }
        for (off, p) in &kernel {
            if off.len() != dim || off.iter().all(|&x| x == 0) || !(*p >= 0.0) {
                return Err(Error::Invalid(format!("bad kernel entry {off:?}")));
            }
            let neg: Vec<i64> = off.iter().map(|x| -x).collect();
            let back: f64 = kernel.iter().filter(|(o, _)| *o == neg).map(|(_, q)| q).sum();
            let fwd: f64 = kernel.iter().filter(|(o, _)| o == off).map(|(_, q)| q).sum();
            if (back - fwd).abs() > 1e-12 {
                return Err(Error::Invalid(format!("kernel not symmetric at {off:?}")));
            }
        }
        let mut lat = Self {
            dim,
            side,
            kernel,
            neighbors: Vec::new(),
        };
        lat.neighbors = (0..lat.sites())
            .map(|x| lat.kernel.iter().map(|(off, _)| lat.shift(x, off)).collect())
            .collect();
        Ok(lat)
    }

    /// Uniform on the `2d` nearest neighbours.
    pub fn nearest_neighbor(dim: usize, side: usize) -> Result<Self> {
        let p = 1.0 / (2 * dim) as f64;
        let mut kernel = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [1, -1] {
                let mut off = vec![0; dim];
                off[i] = s;
                kernel.push((off, p));
            }
        }
        Self::new(dim, side, kernel)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn kernel(&self) -> &[(Vec<i64>, f64)] {
        &self.kernel
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|_| {
                let c = site % self.side;
                site /= self.side;
                c
            })
            .collect()
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.side + c % self.side)
    }

    pub fn shift(&self, site: usize, offset: &[i64]) -> usize {
        let l = self.side as i64;
        let c: Vec<usize> = self
            .coords(site)
            .iter()
            .zip(offset)
            .map(|(&x, &o)| (x as i64 + o).rem_euclid(l) as usize)
            .collect();
        self.site(&c)
    }

    pub fn step<R: Rng + ?Sized>(&self, site: usize, rng: &mut R) -> usize {
        let mut u: f64 = rng.random();
        for (k, (_, p)) in self.kernel.iter().enumerate() {
            if u < *p {
                return self.neighbors[site][k];
            }
            u -= p;
        }
        *self.neighbors[site].last().expect("nonempty kernel")
    }

    /// One-step transition matrix of the wrapped walk.
    pub fn transition_matrix(&self) -> Matrix {
        let n = self.sites();
        let mut m = Matrix::zeros(n, n);
        for x in 0..n {
            for (k, (_, p)) in self.kernel.iter().enumerate() {
                m[(x, self.neighbors[x][k])] += p;
            }
        }
        m
    }

    /// Generator of the walk jumping at `rate`.
    pub fn walk_generator(&self, rate: f64) -> RateMatrix {
        let p = self.transition_matrix();
        let rows: Vec<Vec<f64>> = (0..self.sites())
            .map(|x| (0..self.sites()).map(|y| if x == y { 0.0 } else { rate * p[(x, y)] }).collect())
            .collect();
        RateMatrix::from_rates(&rows).expect("valid walk")
    }

    /// Dense CSV grid: one row for `d = 1`, `L` rows of `L` for `d = 2`.
    pub fn write_grid_csv<W: Write, T: ToString>(&self, values: &[T], w: W) -> Result<()> {
        if self.dim > 2 || values.len() != self.sites() {
            return Err(Error::Invalid("grid output needs d <= 2 and one value per site".into()));
        }
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let width = self.side;
        for row in values.chunks(width) {
            out.write_record(row.iter().map(ToString::to_string))
                .map_err(|e| Error::Invalid(e.to_string()))?;
        }
        out.flush().map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Voter path: initial configuration plus effective flips `(time, site, new)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoterPath {
    pub initial: SpinConfig,
    pub flips: Vec<(f64, usize, u8)>,
    pub horizon: f64,
    pub events: u64,
}

impl VoterPath {
    pub fn config_at(&self, t: f64) -> SpinConfig {
        let mut eta = self.initial.clone();
        for &(s, x, v) in &self.flips {
            if s > t {
                break;
            }
            eta[x] = v;
        }
        eta
    }

    pub fn final_config(&self) -> SpinConfig {
        self.config_at(f64::INFINITY)
    }

    pub fn magnetization_at(&self, t: f64) -> usize {
        self.config_at(t).iter().map(|&v| v as usize).sum()
    }
}

fn check_spins(lat: &TorusLattice, eta: &[u8]) -> Result<usize> {
    if eta.len() != lat.sites() || eta.iter().any(|&v| v > 1) {
        return Err(Error::Invalid("spin configuration must give 0/1 at every site".into()));
    }
    Ok(eta.iter().map(|&v| v as usize).sum())
}

/// Site `x` adopts the opinion of `y` at rate `p(y - x)`, run with one clock
/// of rate `L^d` and rejection of non-flips; stops early at consensus.
pub fn voter_simulate<R: Rng + ?Sized>(
    lat: &TorusLattice,
    eta0: &[u8],
    horizon: f64,
    rng: &mut R,
) -> Result<VoterPath> {
    let mut ones = check_spins(lat, eta0)?;
    let n = lat.sites();
    let mut eta = eta0.to_vec();
    let mut path = VoterPath {
        initial: eta0.to_vec(),
        flips: Vec::new(),
        horizon,
        events: 0,
    };
    let clock = Exp::new(n as f64).expect("positive rate");
    let mut t = 0.0;
    while ones != 0 && ones != n {
        t += clock.sample(rng);
        if t > horizon {
            break;
        }
        path.events += 1;
        if path.events > VOTER_EVENT_CAP {
            return Err(Error::SeriesCap(VOTER_EVENT_CAP as usize));
        }
        let x = rng.random_range(0..n);
        let y = lat.step(x, rng);
        if eta[x] != eta[y] {
            eta[x] = eta[y];
            if eta[x] == 1 {
                ones += 1;
            } else {
                ones -= 1;
            }
            path.flips.push((t, x, eta[x]));
        }
    }
    Ok(path)
}

/// Runs to consensus; returns the winning opinion and the absorption time.
pub fn voter_consensus<R: Rng + ?Sized>(lat: &TorusLattice, eta0: &[u8], rng: &mut R) -> Result<(u8, f64)> {
    let mut ones = check_spins(lat, eta0)?;
    let n = lat.sites();
    let mut eta = eta0.to_vec();
    let clock = Exp::new(n as f64).expect("positive rate");
    let mut t = 0.0;
    let mut events = 0u64;
    while ones != 0 && ones != n {
        t += clock.sample(rng);
        events += 1;
        if events > VOTER_EVENT_CAP {
            return Err(Error::SeriesCap(VOTER_EVENT_CAP as usize));
        }
        let x = rng.random_range(0..n);
        let y = lat.step(x, rng);
        if eta[x] != eta[y] {
            eta[x] = eta[y];
            if eta[x] == 1 {
                ones += 1;
            } else {
                ones -= 1;
            }
        }
    }
    Ok(((ones == n) as u8, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coalescence {
    /// Walkers merge on landing at an occupied site.
    Instant,
    /// Each co-located pair merges at this rate.
    Rate(f64),
}

/// Surviving walkers: positions, and for each the indices of the starting
/// points it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub positions: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescingPath {
    pub times: Vec<f64>,
    pub states: Vec<WalkerState>,
}

impl CoalescingPath {
    pub fn final_state(&self) -> &WalkerState {
        self.states.last().expect("initial state recorded")
    }
}

/// Coalescing random walks started from `start` (repeats allowed), each
/// jumping at `walk_rate` with the lattice kernel.
pub fn coalescing_rw_dual<R: Rng + ?Sized>(
    lat: &TorusLattice,
    start: &[usize],
    horizon: f64,
    walk_rate: f64,
    kappa: Coalescence,
    rng: &mut R,
) -> Result<CoalescingPath> {
    if start.is_empty() || start.iter().any(|&x| x >= lat.sites()) {
        return Err(Error::Invalid("start sites must be nonempty and on the torus".into()));
    }
    check_domain("walk rate", walk_rate, walk_rate >= 0.0, "[0, inf)")?;
    let kappa_rate = match kappa {
        Coalescence::Instant => None,
        Coalescence::Rate(k) => {
            check_domain("kappa", k, k >= 0.0, "[0, inf)")?;
            Some(k)
        }
    };
    let mut s = WalkerState {
        positions: Vec::new(),
        blocks: Vec::new(),
    };
    for (i, &x) in start.iter().enumerate() {
        match (kappa_rate, s.positions.iter().position(|&y| y == x)) {
            (None, Some(w)) => s.blocks[w].push(i),
            _ => {
                s.positions.push(x);
                s.blocks.push(vec![i]);
            }
        }
    }
    let mut path = CoalescingPath {
        times: vec![0.0],
        states: vec![s.clone()],
    };
    let mut t = 0.0;
    loop {
        let m = s.positions.len();
        let pairs: Vec<(usize, usize)> = match kappa_rate {
            Some(k) if k > 0.0 => (0..m)
                .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
                .filter(|&(a, b)| s.positions[a] == s.positions[b])
                .collect(),
            _ => Vec::new(),
        };
        let jump_total = walk_rate * m as f64;
        let merge_total = kappa_rate.unwrap_or(0.0) * pairs.len() as f64;
        let total = jump_total + merge_total;
        if total <= 0.0 {
            break;
        }
        t += Exp::new(total).expect("positive rate").sample(rng);
        if t > horizon {
            break;
        }
        if rng.random::<f64>() * total < jump_total {
            let w = rng.random_range(0..m);
            let y = lat.step(s.positions[w], rng);
            s.positions[w] = y;
            if kappa_rate.is_none() {
                if let Some(o) = (0..m).find(|&o| o != w && s.positions[o] == y) {
                    let moved = s.blocks.swap_remove(w);
                    s.positions.swap_remove(w);
                    let o = if o == m - 1 { w } else { o };
                    s.blocks[o].extend(moved);
                    s.blocks[o].sort_unstable();
                }
            }
        } else {
            let (a, b) = pairs[rng.random_range(0..pairs.len())];
            let moved = s.blocks.swap_remove(b);
            s.positions.swap_remove(b);
            s.blocks[a].extend(moved);
            s.blocks[a].sort_unstable();
        }
        path.times.push(t);
        path.states.push(s.clone());
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedCheck {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub z: f64,
}

impl TwoSidedCheck {
    fn new(lhs: Estimate, rhs: Estimate) -> Self {
        let se = (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
        let d = lhs.mean - rhs.mean;
        let z = if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self { lhs, rhs, z }
    }
}

/// `E[prod_{x in A} eta_t(x)]` by the voter model against
/// `E[prod_{y in A_t} eta_0(y)]` by coalescing walks, on separate streams.
pub fn voter_duality_check(
    lat: &TorusLattice,
    eta0: &[u8],
    a: &[usize],
    t: f64,
    ens: &EnsembleSpec,
) -> Result<TwoSidedCheck> {
    check_spins(lat, eta0)?;
    let lhs: Vec<f64> = ens.run(|_, r| {
        let eta = voter_simulate(lat, eta0, t, r).map(|p| p.final_config());
        eta.map(|e| a.iter().map(|&x| e[x] as f64).product()).unwrap_or(f64::NAN)
    });
    let rhs: Vec<f64> = ens.derive(1).run(|_, r| {
        coalescing_rw_dual(lat, a, t, 1.0, Coalescence::Instant, r)
            .map(|p| p.final_state().positions.iter().map(|&y| eta0[y] as f64).product())
            .unwrap_or(f64::NAN)
    });
    if lhs.iter().chain(&rhs).any(|x| x.is_nan()) {
        return Err(Error::Invalid("voter or dual run failed".into()));
    }
    Ok(TwoSidedCheck::new(Estimate::from_samples(&lhs), Estimate::from_samples(&rhs)))
}

/// Migration strength `c`, resampling `gamma` and selection `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteppingStoneParams {
    pub c: f64,
    pub gamma: f64,
    pub s: f64,
}

impl SteppingStoneParams {
    pub fn neutral(c: f64, gamma: f64) -> Self {
        Self { c, gamma, s: 0.0 }
    }

    /// Pairwise coalescence rate of co-located dual walkers.
    pub fn dual_kappa(&self) -> f64 {
        2.0 * self.gamma
    }
}

fn stepping_stone_check(lat: &TorusLattice, p: &SteppingStoneParams, x0: &[f64], dt: f64) -> Result<()> {
    check_domain("c", p.c, p.c >= 0.0, "[0, inf)")?;
    check_domain("gamma", p.gamma, p.gamma >= 0.0, "[0, inf)")?;
    check_domain("dt", dt, dt > 0.0 && dt * (p.c + p.gamma) < STEPPING_STONE_DT_BOUND, "dt (c + gamma) < 0.05")?;
    if x0.len() != lat.sites() || x0.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Invalid("initial frequencies must lie in [0,1] at every site".into()));
    }
    Ok(())
}

fn stepping_stone_step<R: Rng + ?Sized>(
    lat: &TorusLattice,
    p: &SteppingStoneParams,
    x: &mut Vec<f64>,
    next: &mut Vec<f64>,
    dt: f64,
    rng: &mut R,
) {
    let sq = dt.sqrt();
    for site in 0..x.len() {
        let xi = x[site];
        let mig: f64 = lat
            .kernel
            .iter()
            .zip(&lat.neighbors[site])
            .map(|((_, q), &y)| q * (x[y] - xi))
            .sum();
        let c = xi.clamp(0.0, 1.0);
        let het = c * (1.0 - c);
        let z: f64 = StandardNormal.sample(rng);
        next[site] = xi + (p.c * mig + p.s * het) * dt + (2.0 * p.gamma * het).sqrt() * sq * z;
    }
    std::mem::swap(x, next);
}

fn clipped(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Euler–Maruyama for `dX(x) = c sum_y p(y-x)(X(y)-X(x)) dt + s X(1-X) dt
/// + sqrt(2 gamma X(1-X)) dW(x)` with full truncation: the unclipped state is
/// carried forward, the coefficients and the reported values use `[0,1]`.
pub fn stepping_stone_simulate<R: Rng + ?Sized>(
    lat: &TorusLattice,
    params: &SteppingStoneParams,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    stepping_stone_check(lat, params, x0, dt)?;
    let names: Vec<String> = (0..lat.sites()).map(|i| format!("x{i}")).collect();
    let mut traj = Trajectory::new(&names);
    let mut x = x0.to_vec();
    let mut next = x.clone();
    traj.push(0.0, x.clone());
    let steps = step_count(horizon, dt);
    for k in 1..=steps {
        stepping_stone_step(lat, params, &mut x, &mut next, dt, rng);
        traj.push(k as f64 * dt, clipped(&x));
    }
    Ok(traj)
}

pub fn stepping_stone_final<R: Rng + ?Sized>(
    lat: &TorusLattice,
    params: &SteppingStoneParams,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<FreqConfig> {
    stepping_stone_check(lat, params, x0, dt)?;
    let mut x = x0.to_vec();
    let mut next = x.clone();
    for _ in 0..step_count(horizon, dt) {
        stepping_stone_step(lat, params, &mut x, &mut next, dt, rng);
    }
    Ok(clipped(&x))
}

/// Two delayed-coalescing walkers from `0` and `xi`, jumping at `c` and
/// merging at `2 gamma` while co-located; each replicate contributes
/// `theta` if merged by `t` and `theta^2` otherwise.
pub fn stepping_stone_moment_dual(
    lat: &TorusLattice,
    params: &SteppingStoneParams,
    xi: usize,
    theta: f64,
    t: f64,
    ens: &EnsembleSpec,
) -> Result<Estimate> {
    check_domain("theta", theta, (0.0..=1.0).contains(&theta), "[0, 1]")?;
    if xi >= lat.sites() {
        return Err(Error::Invalid("xi off the torus".into()));
    }
    let kappa = Coalescence::Rate(params.dual_kappa());
    let xs: Vec<f64> = ens.run(|_, r| {
        match coalescing_rw_dual(lat, &[0, xi], t, params.c, kappa, r) {
            Ok(p) if p.final_state().positions.len() == 1 => theta,
            Ok(_) => theta * theta,
            Err(_) => f64::NAN,
        }
    });
    Ok(Estimate::from_samples(&xs))
}

/// Probability that two walkers from `0` and `xi` have merged by `t`, from
/// the difference walk (rate `2 walk_rate`) plus a merged state.
pub fn coalescence_probability(lat: &TorusLattice, walk_rate: f64, kappa: Coalescence, xi: usize, t: f64) -> Result<f64> {
    let n = lat.sites();
    if xi >= n {
        return Err(Error::Invalid("xi off the torus".into()));
    }
    if xi == 0 && kappa == Coalescence::Instant {
        return Ok(1.0);
    }
    let p = lat.transition_matrix();
    let mut rows = vec![vec![0.0; n + 1]; n + 1];
    for d in 0..n {
        for e in 0..n {
            if d == e {
                continue;
            }
            let r = 2.0 * walk_rate * p[(d, e)];
            if e == 0 && kappa == Coalescence::Instant {
                rows[d][n] += r;
            } else {
                rows[d][e] += r;
            }
        }
    }
    if let Coalescence::Rate(k) = kappa {
        rows[0][n] += k;
    }
    let m = matrix_exp_transition(&RateMatrix::from_rates(&rows)?, t)?;
    Ok(m[(xi, n)])
}

/// Exact two-point function `E[X_0(t) X_xi(t)]` for constant start `theta`.
pub fn stepping_stone_two_point_exact(
    lat: &TorusLattice,
    walk_rate: f64,
    kappa: Coalescence,
    xi: usize,
    theta: f64,
    t: f64,
) -> Result<f64> {
    let pc = coalescence_probability(lat, walk_rate, kappa, xi, t)?;
    Ok(theta * pc + theta * theta * (1.0 - pc))
}

/// `2 q0 qe / (kappa + 2 q0 qe)`; equals one when `kappa = 0`.
pub fn escape_probability(q0: f64, qe: f64, kappa: f64) -> Result<f64> {
    check_domain("q0", q0, q0 > 0.0, "(0, inf)")?;
    check_domain("qe", qe, (0.0..=1.0).contains(&qe), "[0, 1]")?;
    check_domain("kappa", kappa, kappa >= 0.0, "[0, inf]")?;
    if kappa == 0.0 {
        return Ok(1.0);
    }
    if kappa.is_infinite() {
        return Ok(0.0);
    }
    let a = 2.0 * q0 * qe;
    Ok(a / (kappa + a))
}

/// Walk at rate 1 with the lattice kernel, branch at `branch_rate` into
/// `law` offspring at the parent's site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrwRun {
    pub occupancy: Vec<u64>,
    pub capped: bool,
    pub extinct: bool,
}

pub fn brw_simulate<R: Rng + ?Sized>(
    lat: &TorusLattice,
    branch_rate: f64,
    law: &OffspringLaw,
    x0: &[u64],
    horizon: f64,
    rng: &mut R,
) -> Result<BrwRun> {
    check_domain("branch rate", branch_rate, branch_rate >= 0.0, "[0, inf)")?;
    if x0.len() != lat.sites() {
        return Err(Error::Invalid("one initial count per site".into()));
    }
    let mut occ = x0.to_vec();
    let mut total: u64 = occ.iter().sum();
    let exp = Exp::new(1.0).expect("unit rate");
    let mut t = 0.0;
    let mut capped = false;
    while total > 0 {
        t += exp.sample(rng) / (total as f64 * (1.0 + branch_rate));
        if t > horizon {
            break;
        }
        let mut pick = rng.random_range(0..total);
        let mut site = 0;
        while pick >= occ[site] {
            pick -= occ[site];
            site += 1;
        }
        occ[site] -= 1;
        if rng.random::<f64>() * (1.0 + branch_rate) < 1.0 {
            occ[lat.step(site, rng)] += 1;
        } else {
            let k = law.sample(rng) as u64;
            occ[site] += k;
            total = total - 1 + k;
            if total > BRW_POPULATION_CAP {
                capped = true;
                break;
            }
        }
    }
    Ok(BrwRun {
        extinct: total == 0,
        occupancy: occ,
        capped,
    })
}

/// `e^{branch_rate (m-1) t} x0 e^{t Q}` with `Q` the rate-one walk.
pub fn brw_mean_occupancy(lat: &TorusLattice, branch_rate: f64, mean_offspring: f64, x0: &[u64], t: f64) -> Result<Vec<f64>> {
    let p = matrix_exp_transition(&lat.walk_generator(1.0), t)?;
    let x: Vec<f64> = x0.iter().map(|&v| v as f64).collect();
    let growth = (branch_rate * (mean_offspring - 1.0) * t).exp();
    Ok(p.vec_mul(&x).into_iter().map(|v| v * growth).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrwMeanReport {
    pub exact: Vec<f64>,
    pub mc: Vec<Estimate>,
    pub max_relative_error: f64,
    pub max_abs_z: f64,
    pub capped: usize,
}

pub fn brw_mean_check(
    lat: &TorusLattice,
    branch_rate: f64,
    law: &OffspringLaw,
    x0: &[u64],
    t: f64,
    ens: &EnsembleSpec,
) -> Result<BrwMeanReport> {
    let exact = brw_mean_occupancy(lat, branch_rate, law.mean(), x0, t)?;
    let runs: Vec<Option<BrwRun>> = ens.run(|_, r| brw_simulate(lat, branch_rate, law, x0, t, r).ok());
    let runs: Vec<BrwRun> = runs.into_iter().collect::<Option<_>>().ok_or(Error::Invalid("BRW run failed".into()))?;
    let mc: Vec<Estimate> = (0..lat.sites())
        .map(|x| Estimate::from_samples(&runs.iter().map(|r| r.occupancy[x] as f64).collect::<Vec<_>>()))
        .collect();
    let max_relative_error = mc
        .iter()
        .zip(&exact)
        .map(|(e, x)| (e.mean - x).abs() / x.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let max_abs_z = mc.iter().zip(&exact).map(|(e, &x)| e.z_score(x).abs()).fold(0.0, f64::max);
    Ok(BrwMeanReport {
        exact,
        mc,
        max_relative_error,
        max_abs_z,
        capped: runs.iter().filter(|r| r.capped).count(),
    })
}
