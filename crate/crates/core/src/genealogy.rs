//! Genealogies: Kingman and Λ-coalescents, the Moran and lookdown particle
//! systems, and the Poisson–Dirichlet / GEM / Ewens sampling machinery.

use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_domain, Error, Result};

const QUAD_INTERVALS: usize = 4096;
const QUAD_TOL: f64 = 1e-9;

/// Set partition of `{1..n}`; blocks are sorted and listed by least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = blocks.iter().map(Vec::len).sum();
        let mut seen = vec![false; n + 1];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::Invalid("empty block".into()));
            }
            for &x in b.iter() {
                if x == 0 || x > n || seen[x] {
                    return Err(Error::Invalid(format!("blocks do not partition 1..{n}")));
                }
                seen[x] = true;
            }
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Multiplicities `a_j` = number of blocks of size `j`, for `j = 1..=n`.
    pub fn multiplicities(&self) -> Vec<usize> {
        let n = self.n();
        let mut a = vec![0usize; n];
        for b in &self.blocks {
            a[b.len() - 1] += 1;
        }
        a
    }

    /// Merges the blocks at the given positions.
    fn merge(&self, which: &[usize]) -> Self {
        let mut merged = Vec::new();
        let mut rest = Vec::with_capacity(self.blocks.len() - which.len() + 1);
        for (i, b) in self.blocks.iter().enumerate() {
            if which.contains(&i) {
                merged.extend_from_slice(b);
            } else {
                rest.push(b.clone());
            }
        }
        rest.push(merged);
        Self::new(rest).expect("merging keeps a partition")
    }

    pub fn to_text(&self) -> String {
        self.blocks
            .iter()
            .map(|b| format!("{{{}}}", b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect::<Vec<_>>()
            .join("")
    }
}

/// Event times with the partition after each event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescentPath {
    pub n: usize,
    pub times: Vec<f64>,
    pub partitions: Vec<Partition>,
}

impl CoalescentPath {
    pub fn mrca_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn block_counts(&self) -> Vec<usize> {
        std::iter::once(self.n).chain(self.partitions.iter().map(Partition::len)).collect()
    }

    /// Time spent with `k` blocks for each level visited, as `(k, time)`.
    pub fn holding_times(&self) -> Vec<(usize, f64)> {
        let counts = self.block_counts();
        let mut prev = 0.0;
        self.times
            .iter()
            .zip(&counts)
            .map(|(&t, &k)| {
                let h = t - prev;
                prev = t;
                (k, h)
            })
            .collect()
    }

    pub fn write_events_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["event", "time", "blocks", "partition"])?;
        for (i, (t, p)) in self.times.iter().zip(&self.partitions).enumerate() {
            out.write_record([(i + 1).to_string(), t.to_string(), p.len().to_string(), p.to_text()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Ultrametric Newick tree with leaves `1..n` and branch lengths.
    pub fn to_newick(&self) -> String {
        let mut nodes: Vec<(Vec<usize>, String, f64)> =
            (1..=self.n).map(|i| (vec![i], i.to_string(), 0.0)).collect();
        for (t, p) in self.times.iter().zip(&self.partitions) {
            for block in p.blocks() {
                let parts: Vec<usize> = (0..nodes.len())
                    .filter(|&i| block.contains(&nodes[i].0[0]))
                    .collect();
                if parts.len() < 2 {
                    continue;
                }
                let children: Vec<String> = parts
                    .iter()
                    .map(|&i| format!("{}:{}", nodes[i].1, t - nodes[i].2))
                    .collect();
                let text = format!("({})", children.join(","));
                for &i in parts.iter().rev() {
                    nodes.remove(i);
                }
                nodes.push((block.clone(), text, *t));
            }
        }
        let roots: Vec<String> = nodes.into_iter().map(|n| n.1).collect();
        if roots.len() == 1 {
            format!("{};", roots[0])
        } else {
            format!("({});", roots.join(","))
        }
    }
}

/// Kingman coalescent: with `k` blocks the next merger comes after
/// Exp(`gamma k(k-1)/2`) and joins a uniform pair.
pub fn kingman_sample<R: Rng + ?Sized>(n: usize, gamma: f64, rng: &mut R) -> Result<CoalescentPath> {
    check_domain("gamma", gamma, gamma > 0.0, "(0, inf)")?;
    let mut path = CoalescentPath {
        n,
        times: Vec::new(),
        partitions: Vec::new(),
    };
    let mut part = Partition::singletons(n);
    let mut t = 0.0;
    let exp = Exp::new(1.0).expect("unit rate");
    while part.len() > 1 {
        let k = part.len() as f64;
        let s: f64 = exp.sample(rng);
        t += s / (gamma * k * (k - 1.0) / 2.0);
        let pair = sample_indices(rng, part.len(), 2).into_vec();
        part = part.merge(&pair);
        path.times.push(t);
        path.partitions.push(part.clone());
    }
    Ok(path)
}

/// Level holding times only, `T_n, T_{n-1}, ..., T_2`.
pub fn kingman_holding_times<R: Rng + ?Sized>(n: usize, gamma: f64, rng: &mut R) -> Vec<f64> {
    let exp = Exp::new(1.0).expect("unit rate");
    (2..=n)
        .rev()
        .map(|k| {
            let s: f64 = exp.sample(rng);
            s / (gamma * (k * (k - 1)) as f64 / 2.0)
        })
        .collect()
}

/// `E[T_MRCA] = (2/gamma)(1 - 1/n)`.
pub fn kingman_mrca_mean(n: usize, gamma: f64) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 / gamma * (1.0 - 1.0 / n as f64)
    }
}

/// Finite measure on `[0,1]`: an atom at 0 plus a piecewise-constant
/// density given as `(lo, hi, height)` pieces inside `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMeasure {
    pub atom0: f64,
    pub pieces: Vec<(f64, f64, f64)>,
}

impl LambdaMeasure {
    pub fn new(atom0: f64, pieces: Vec<(f64, f64, f64)>) -> Result<Self> {
        check_domain("atom at 0", atom0, atom0 >= 0.0, "[0, inf)")?;
        for &(lo, hi, c) in &pieces {
            if !(0.0 <= lo && lo < hi && hi <= 1.0 && c >= 0.0) {
                return Err(Error::Invalid(format!("bad density piece ({lo}, {hi}, {c})")));
            }
        }
        let m = Self { atom0, pieces };
        if !(m.total_mass() > 0.0) {
            return Err(Error::Invalid("Lambda must have positive mass".into()));
        }
        Ok(m)
    }

    pub fn kingman(gamma: f64) -> Result<Self> {
        Self::new(gamma, Vec::new())
    }

    /// Bolthausen–Sznitman: Lebesgue measure on `[0,1]`.
    pub fn uniform() -> Self {
        Self::new(0.0, vec![(0.0, 1.0, 1.0)]).expect("valid")
    }

    pub fn total_mass(&self) -> f64 {
        self.atom0 + self.pieces.iter().map(|&(lo, hi, c)| c * (hi - lo)).sum::<f64>()
    }

    /// Rate `lambda_{b,k}` at which a given `k`-subset of `b` blocks merges.
    pub fn rate(&self, b: usize, k: usize) -> f64 {
        assert!(2 <= k && k <= b, "need 2 <= k <= b");
        let (a, bb) = ((k - 1) as f64, (b - k + 1) as f64);
        let beta = ln_beta(a, bb).exp();
        let mut r = if k == 2 { self.atom0 } else { 0.0 };
        for &(lo, hi, c) in &self.pieces {
            r += c * beta * (beta_reg(a, bb, hi) - beta_reg(a, bb, lo));
        }
        r
    }

    /// `sum_k C(b,k) lambda_{b,k}`.
    pub fn total_rate(&self, b: usize) -> f64 {
        (2..=b).map(|k| binomial(b, k) * self.rate(b, k)).sum()
    }

    /// Total rate from `int (1 - (1-y)^b - b y (1-y)^{b-1}) / y^2 Lambda(dy)`
    /// by composite Simpson quadrature.
    pub fn total_rate_quadrature(&self, b: usize) -> f64 {
        let bf = b as f64;
        let g = |y: f64| {
            if y < 1e-5 {
                // series in y; the leading term is C(b,2)
                let c2 = bf * (bf - 1.0) / 2.0;
                let c3 = bf * (bf - 1.0) * (bf - 2.0) / 6.0;
                c2 - 2.0 * c3 * y
            } else {
                let q = 1.0 - y;
                (1.0 - q.powi(b as i32) - bf * y * q.powi(b as i32 - 1)) / (y * y)
            }
        };
        let mut total = self.atom0 * bf * (bf - 1.0) / 2.0;
        for &(lo, hi, c) in &self.pieces {
            let h = (hi - lo) / QUAD_INTERVALS as f64;
            let mut s = g(lo) + g(hi);
            for i in 1..QUAD_INTERVALS {
                s += g(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            total += c * s * h / 3.0;
        }
        total
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
        .exp()
        .round()
}

/// Λ-coalescent path: at `b` blocks wait Exp(`lambda_b`), pick the merger
/// size `k` with probability `C(b,k) lambda_{b,k} / lambda_b`, then merge a
/// uniform `k`-subset.
pub fn lambda_coalescent_sample<R: Rng + ?Sized>(
    n: usize,
    lambda: &LambdaMeasure,
    rng: &mut R,
) -> Result<CoalescentPath> {
    let mut path = CoalescentPath {
        n,
        times: Vec::new(),
        partitions: Vec::new(),
    };
    let mut part = Partition::singletons(n);
    let mut t = 0.0;
    let exp = Exp::new(1.0).expect("unit rate");
    let mut tables: Vec<Option<Vec<f64>>> = vec![None; n + 1];
    while part.len() > 1 {
        let b = part.len();
        if tables[b].is_none() {
            let rates: Vec<f64> = (2..=b).map(|k| binomial(b, k) * lambda.rate(b, k)).collect();
            let total: f64 = rates.iter().sum();
            let quad = lambda.total_rate_quadrature(b);
            if (total - quad).abs() > QUAD_TOL * total.max(1.0) {
                return Err(Error::Quadrature(format!(
                    "total merger rate at {b} blocks: {total} vs quadrature {quad}"
                )));
            }
            tables[b] = Some(rates);
        }
        let rates = tables[b].as_ref().expect("filled above");
        let total: f64 = rates.iter().sum();
        t += exp.sample(rng) / total;
        let mut u = rng.random::<f64>() * total;
        let mut k = b;
        for (i, r) in rates.iter().enumerate() {
            if u < *r {
                k = i + 2;
                break;
            }
            u -= r;
        }
        let subset = sample_indices(rng, b, k).into_vec();
        part = part.merge(&subset);
        path.times.push(t);
        path.partitions.push(part.clone());
    }
    Ok(path)
}

/// Per-particle type change: at rate `rate` a particle's type is redrawn
/// from `kernel[current]`, or from the fixed `source` (house of cards).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationOp {
    None,
    HouseOfCards { rate: f64, source: Vec<f64> },
    Kernel { rate: f64, kernel: Vec<Vec<f64>> },
}

impl MutationOp {
    fn rate(&self) -> f64 {
        match self {
            MutationOp::None => 0.0,
            MutationOp::HouseOfCards { rate, .. } | MutationOp::Kernel { rate, .. } => *rate,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> usize {
        let row = match self {
            MutationOp::None => return current,
            MutationOp::HouseOfCards { source, .. } => source.as_slice(),
            MutationOp::Kernel { kernel, .. } => kernel[current].as_slice(),
        };
        let mut u: f64 = rng.random();
        for (j, &p) in row.iter().enumerate() {
            if u < p {
                return j;
            }
            u -= p;
        }
        row.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticleModel {
    /// Each ordered pair `(i, j)` fires at rate `gamma/2`; `j` copies `i`.
    Moran,
    /// For `i < j`, `j` copies `i` at rate `gamma`.
    Lookdown,
}

/// Type counts after every event (empirical measure times `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticlePath {
    pub times: Vec<f64>,
    pub counts: Vec<Vec<u32>>,
    pub final_types: Vec<usize>,
}

impl ParticlePath {
    pub fn final_counts(&self) -> &[u32] {
        self.counts.last().expect("initial state recorded")
    }
}

pub fn moran_simulate<R: Rng + ?Sized>(
    initial: &[usize],
    types: usize,
    gamma: f64,
    mutation: &MutationOp,
    horizon: f64,
    rng: &mut R,
) -> Result<ParticlePath> {
    particle_simulate(ParticleModel::Moran, initial, types, gamma, mutation, horizon, true, rng)
}

/// The empirical measure matches the Moran model's when the initial types
/// are exchangeable over levels.
pub fn lookdown_simulate<R: Rng + ?Sized>(
    initial: &[usize],
    types: usize,
    gamma: f64,
    mutation: &MutationOp,
    horizon: f64,
    rng: &mut R,
) -> Result<ParticlePath> {
    particle_simulate(ParticleModel::Lookdown, initial, types, gamma, mutation, horizon, true, rng)
}

/// Shared event loop; with `record == false` only the initial and final
/// counts are kept.
#[allow(clippy::too_many_arguments)]
pub fn particle_simulate<R: Rng + ?Sized>(
    model: ParticleModel,
    initial: &[usize],
    types: usize,
    gamma: f64,
    mutation: &MutationOp,
    horizon: f64,
    record: bool,
    rng: &mut R,
) -> Result<ParticlePath> {
    let n = initial.len();
    if n < 2 {
        return Err(Error::Invalid("need at least two particles".into()));
    }
    check_domain("gamma", gamma, gamma >= 0.0, "[0, inf)")?;
    if initial.iter().any(|&x| x >= types) {
        return Err(Error::Invalid("initial type out of range".into()));
    }
    let mut x = initial.to_vec();
    let count = |x: &[usize]| {
        let mut c = vec![0u32; types];
        x.iter().for_each(|&t| c[t] += 1);
        c
    };
    let mut path = ParticlePath {
        times: vec![0.0],
        counts: vec![count(&x)],
        final_types: Vec::new(),
    };
    let pairs = (n * (n - 1)) as f64;
    let resample = match model {
        ParticleModel::Moran => gamma / 2.0 * pairs,
        ParticleModel::Lookdown => gamma * pairs / 2.0,
    };
    let mutate = mutation.rate() * n as f64;
    let total = resample + mutate;
    if total > 0.0 {
        let exp = Exp::new(total).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += exp.sample(rng);
            if t > horizon {
                break;
            }
            if rng.random::<f64>() * total < resample {
                let (i, j) = match model {
                    ParticleModel::Moran => {
                        let pair = sample_indices(rng, n, 2);
                        (pair.index(0), pair.index(1))
                    }
                    ParticleModel::Lookdown => {
                        let pair = sample_indices(rng, n, 2);
                        let (a, b) = (pair.index(0), pair.index(1));
                        (a.min(b), a.max(b))
                    }
                };
                x[j] = x[i];
            } else {
                let i = rng.random_range(0..n);
                x[i] = mutation.draw(x[i], rng);
            }
            if record {
                path.times.push(t);
                path.counts.push(count(&x));
            }
        }
    }
    if !record {
        path.times.push(horizon);
        path.counts.push(count(&x));
    }
    path.final_types = x;
    Ok(path)
}

/// Hoppe urn: customer `i+1` starts a new block with probability
/// `theta/(theta+i)`, otherwise joins the block of a uniform earlier one.
pub fn ewens_sample<R: Rng + ?Sized>(n: usize, theta: f64, rng: &mut R) -> Result<Partition> {
    check_domain("theta", theta, theta > 0.0, "(0, inf)")?;
    let mut label = Vec::with_capacity(n);
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if rng.random::<f64>() * (theta + i as f64) < theta {
            label.push(blocks.len());
            blocks.push(vec![i + 1]);
        } else {
            let b = label[rng.random_range(0..i)];
            label.push(b);
            blocks[b].push(i + 1);
        }
    }
    Partition::new(blocks)
}

/// Ewens sampling formula for multiplicities `a` (`a[j-1]` blocks of size
/// `j`): `n! Gamma(theta)/Gamma(n+theta) prod theta^{a_j}/(j^{a_j} a_j!)`.
pub fn ewens_probability(a: &[usize], theta: f64) -> Result<f64> {
    check_domain("theta", theta, theta > 0.0, "(0, inf)")?;
    let n: usize = a.iter().enumerate().map(|(j, &aj)| (j + 1) * aj).sum();
    if n == 0 || a.len() > n {
        return Err(Error::Invalid("multiplicities must describe a partition of n >= 1".into()));
    }
    let mut log = ln_gamma(n as f64 + 1.0) + ln_gamma(theta) - ln_gamma(n as f64 + theta);
    for (j, &aj) in a.iter().enumerate() {
        let aj = aj as f64;
        log += aj * theta.ln() - aj * ((j + 1) as f64).ln() - ln_gamma(aj + 1.0);
    }
    Ok(log.exp())
}

/// All integer partitions of `n` as multiplicity vectors of length `n`.
pub fn integer_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(rem: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rem == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=max.min(rem)).rev() {
            cur[part - 1] += 1;
            rec(rem - part, part, cur, out);
            cur[part - 1] -= 1;
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, n, &mut vec![0; n], &mut out);
    }
    out
}

/// `h_n = (n-1)! / ((1+theta)(2+theta)...(n-1+theta))`.
pub fn homozygosity(n: usize, theta: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Invalid("homozygosity needs n >= 2".into()));
    }
    check_domain("theta", theta, theta >= 0.0, "[0, inf)")?;
    Ok((1..n).map(|j| j as f64 / (j as f64 + theta)).product())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomOrder {
    SizeBiased,
    Decreasing,
}

/// Masses summing to one together with the truncated `remainder`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomVector {
    pub atoms: Vec<f64>,
    pub remainder: f64,
    pub order: AtomOrder,
}

impl AtomVector {
    pub fn sorted_decreasing(mut self) -> Self {
        self.atoms.sort_by(|a, b| b.total_cmp(a));
        self.order = AtomOrder::Decreasing;
        self
    }

    pub fn largest(&self) -> f64 {
        self.atoms.iter().copied().fold(0.0, f64::max)
    }

    pub fn power_sum(&self, n: i32) -> f64 {
        self.atoms.iter().map(|a| a.powi(n)).sum()
    }
}

/// Stick breaking with Beta(1, `theta`) fractions until less than `eps` of
/// the stick is left.
pub fn gem_sample<R: Rng + ?Sized>(theta: f64, eps: f64, rng: &mut R) -> Result<AtomVector> {
    check_domain("theta", theta, theta > 0.0, "(0, inf)")?;
    check_domain("eps", eps, eps > 0.0 && eps < 1.0, "(0, 1)")?;
    let mut rest = 1.0;
    let mut atoms = Vec::new();
    while rest >= eps {
        let u: f64 = rng.random();
        // 1 - U^{1/theta} is Beta(1, theta)
        let v = -(u.ln() / theta).exp_m1();
        atoms.push(rest * v);
        rest *= 1.0 - v;
    }
    Ok(AtomVector {
        atoms,
        remainder: rest,
        order: AtomOrder::SizeBiased,
    })
}

/// Poisson–Dirichlet(`theta`) from the jumps of a gamma subordinator on
/// `[0, theta]`: points of intensity `theta e^{-u}/u du` above `u_min`, where
/// the mass below, `theta (1 - e^{-u_min})`, equals `eps`. That expected mass
/// is added to the total and reported as the remainder.
pub fn pd_sample_via_gamma<R: Rng + ?Sized>(theta: f64, eps: f64, rng: &mut R) -> Result<AtomVector> {
    check_domain("theta", theta, theta > 0.0, "(0, inf)")?;
    check_domain("eps", eps, eps > 0.0 && eps < theta, "(0, theta)")?;
    let u_min = -(-eps / theta).ln_1p();
    let mut jumps = Vec::new();
    if u_min < 1.0 {
        // log-uniform proposals on [u_min, 1] with intensity theta/u, kept
        // with probability e^{-u}
        let span = -u_min.ln();
        let count = Poisson::new(theta * span).expect("positive mean").sample(rng) as usize;
        for _ in 0..count {
            let u = u_min * (span * rng.random::<f64>()).exp();
            if rng.random::<f64>() < (-u).exp() {
                jumps.push(u);
            }
        }
    }
    // on [max(1, u_min), inf): proposals 1 + Exp(1) at intensity theta e^{-u},
    // kept with probability 1/u
    let start = u_min.max(1.0);
    let count = Poisson::new(theta * (-start).exp()).expect("positive mean").sample(rng) as usize;
    let exp = Exp::new(1.0).expect("unit rate");
    for _ in 0..count {
        let u = start + exp.sample(rng);
        if rng.random::<f64>() < 1.0 / u {
            jumps.push(u);
        }
    }
    let missed = eps;
    let total: f64 = jumps.iter().sum::<f64>() + missed;
    let mut atoms: Vec<f64> = jumps.into_iter().map(|u| u / total).collect();
    atoms.sort_by(|a, b| b.total_cmp(a));
    Ok(AtomVector {
        atoms,
        remainder: missed / total,
        order: AtomOrder::Decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::EnsembleSpec;
    use crate::rng::RngStream;
    use crate::stats::{chi_square_gof, ks_two_sample, Estimate};
    use rand::seq::SliceRandom;
    use std::collections::HashMap;

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![1, 3], vec![2]]).is_ok());
        assert!(Partition::new(vec![vec![1, 1]]).is_err());
        assert!(Partition::new(vec![vec![1], vec![]]).is_err());
        assert!(Partition::new(vec![vec![4]]).is_err());
        let p = Partition::new(vec![vec![3, 1], vec![2]]).unwrap();
        assert_eq!(p.to_text(), "{1,3}{2}");
        assert_eq!(p.multiplicities(), vec![1, 1, 0]);
    }

    #[test]
    fn kingman_trivial_and_shape() {
        let mut rng = RngStream::new(1, 0);
        let p = kingman_sample(1, 1.0, &mut rng).unwrap();
        assert!(p.times.is_empty());
        let p = kingman_sample(6, 1.0, &mut rng).unwrap();
        assert_eq!(p.block_counts(), vec![6, 5, 4, 3, 2, 1]);
        assert!(p.times.windows(2).all(|w| w[0] < w[1]));
        let newick = p.to_newick();
        assert!(newick.ends_with(';'));
        for leaf in 1..=6 {
            assert!(newick.contains(&leaf.to_string()));
        }
        let mut buf = Vec::new();
        p.write_events_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn kingman_level_means_and_mrca() {
        let ens = EnsembleSpec::new(2, 100_000);
        let gamma = 1.5;
        let h: Vec<Vec<f64>> = ens.run(|_, r| kingman_holding_times(5, gamma, r));
        for (idx, k) in (2..=5).rev().enumerate() {
            let xs: Vec<f64> = h.iter().map(|v| v[idx]).collect();
            let target = 2.0 / (gamma * (k * (k - 1)) as f64);
            assert!(Estimate::from_samples(&xs).z_score(target).abs() < 3.5);
        }
        let mrca: Vec<f64> = ens.derive(1).with_reps(40_000).run(|_, r| kingman_sample(10, 1.0, r).unwrap().mrca_time());
        assert!(Estimate::from_samples(&mrca).z_score(kingman_mrca_mean(10, 1.0)).abs() < 3.5);
    }

    #[test]
    fn lambda_rates() {
        let bs = LambdaMeasure::uniform();
        for b in 2..8 {
            for k in 2..=b {
                let exact = (ln_gamma((k - 1) as f64) + ln_gamma((b - k + 1) as f64) - ln_gamma(b as f64)).exp();
                assert!((bs.rate(b, k) - exact).abs() < 1e-12);
            }
            assert!((bs.total_rate(b) - bs.total_rate_quadrature(b)).abs() < 1e-8);
        }
        let mixed = LambdaMeasure::new(0.3, vec![(0.0, 0.2, 2.0), (0.5, 1.0, 0.4)]).unwrap();
        assert!((mixed.rate(2, 2) - mixed.total_mass()).abs() < 1e-13);
        for b in 2..10 {
            assert!((mixed.total_rate(b) - mixed.total_rate_quadrature(b)).abs() < 1e-8 * mixed.total_rate(b));
        }
        assert!(LambdaMeasure::new(0.0, vec![(0.5, 0.2, 1.0)]).is_err());
    }

    #[test]
    fn lambda_kingman_reduction() {
        let l = LambdaMeasure::kingman(1.0).unwrap();
        let ens = EnsembleSpec::new(3, 20_000);
        let paths: Vec<CoalescentPath> = ens.run(|_, r| lambda_coalescent_sample(8, &l, r).unwrap());
        assert!(paths.iter().all(|p| p.block_counts().windows(2).all(|w| w[0] == w[1] + 1)));
        let t: Vec<f64> = paths.iter().map(CoalescentPath::mrca_time).collect();
        assert!(Estimate::from_samples(&t).z_score(kingman_mrca_mean(8, 1.0)).abs() < 3.5);
    }

    #[test]
    fn lambda_two_blocks() {
        let l = LambdaMeasure::new(0.0, vec![(0.2, 0.6, 5.0)]).unwrap();
        let ens = EnsembleSpec::new(4, 40_000);
        let t: Vec<f64> = ens.run(|_, r| lambda_coalescent_sample(2, &l, r).unwrap().mrca_time());
        assert!(Estimate::from_samples(&t).z_score(1.0 / l.total_mass()).abs() < 3.5);
    }

    #[test]
    fn bolthausen_sznitman_merger_sizes() {
        let l = LambdaMeasure::uniform();
        let ens = EnsembleSpec::new(5, 40_000);
        let first: Vec<usize> = ens.run(|_, r| 6 - lambda_coalescent_sample(6, &l, r).unwrap().partitions[0].len() + 1);
        let probs: Vec<f64> = (2..=6).map(|k| binomial(6, k) * l.rate(6, k) / l.total_rate(6)).collect();
        let mut counts = vec![0u64; 5];
        first.iter().for_each(|&k| counts[k - 2] += 1);
        assert!(chi_square_gof(&counts, &probs, 5.0).p_value > 0.001);
    }

    #[test]
    fn particles_without_resampling() {
        let m = MutationOp::HouseOfCards {
            rate: 1.0,
            source: vec![0.25, 0.75],
        };
        let ens = EnsembleSpec::new(6, 20_000);
        for model in [ParticleModel::Moran, ParticleModel::Lookdown] {
            let x: Vec<f64> = ens.run(|_, r| {
                particle_simulate(model, &[0, 0, 0], 2, 0.0, &m, 1.0, false, r).unwrap().final_counts()[1] as f64 / 3.0
            });
            // each particle is type 1 w.p. 0.75 (1 - e^{-1})
            let target = 0.75 * (1.0 - (-1f64).exp());
            assert!(Estimate::from_samples(&x).z_score(target).abs() < 3.5);
        }
    }

    #[test]
    fn two_particle_identity_time() {
        let gamma = 1.3;
        let ens = EnsembleSpec::new(7, 40_000);
        for model in [ParticleModel::Moran, ParticleModel::Lookdown] {
            let t: Vec<f64> = ens.run(|_, r| {
                let p = particle_simulate(model, &[0, 1], 2, gamma, &MutationOp::None, 100.0, true, r).unwrap();
                p.times[1]
            });
            assert!(Estimate::from_samples(&t).z_score(1.0 / gamma).abs() < 3.5);
        }
    }

    #[test]
    fn moran_and_lookdown_agree() {
        let init: Vec<usize> = (0..10).map(|i| (i < 4) as usize).collect();
        let m = MutationOp::Kernel {
            rate: 0.2,
            kernel: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        let ens = EnsembleSpec::new(8, 30_000);
        let a: Vec<f64> = ens.run(|_, r| {
            particle_simulate(ParticleModel::Moran, &init, 2, 1.0, &m, 1.0, false, r).unwrap().final_counts()[0] as f64
        });
        let b: Vec<f64> = ens.derive(1).run(|_, r| {
            let mut levels = init.clone();
            levels.shuffle(r);
            particle_simulate(ParticleModel::Lookdown, &levels, 2, 1.0, &m, 1.0, false, r).unwrap().final_counts()[0]
                as f64
        });
        assert!(ks_two_sample(&a, &b) < 0.025);
    }

    #[test]
    fn ewens_examples() {
        for theta in [0.3, 1.0, 4.0] {
            assert!((ewens_probability(&[0, 1], theta).unwrap() - 1.0 / (1.0 + theta)).abs() < 1e-14);
        }
        assert!((ewens_probability(&[0, 0, 1], 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((ewens_probability(&[1, 1, 0], 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((ewens_probability(&[3, 0, 0], 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        assert!(ewens_probability(&[0, 0, 0, 0, 1], 1e-9).unwrap() > 1.0 - 1e-8);
        assert!(ewens_probability(&[], 1.0).is_err());
        assert!((homozygosity(3, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((homozygosity(5, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ewens_sums_to_one() {
        for n in 1..=12 {
            for theta in [0.1, 1.0, 7.5] {
                let s: f64 = integer_partitions(n).iter().map(|a| ewens_probability(a, theta).unwrap()).sum();
                assert!((s - 1.0).abs() < 1e-12, "n={n} theta={theta}: {s}");
            }
        }
        assert_eq!(integer_partitions(6).len(), 11);
    }

    #[test]
    fn hoppe_matches_formula() {
        let theta = 1.0;
        let ens = EnsembleSpec::new(9, 100_000);
        let draws: Vec<Vec<usize>> = ens.run(|_, r| ewens_sample(5, theta, r).unwrap().multiplicities());
        let parts = integer_partitions(5);
        let mut idx = HashMap::new();
        for (i, p) in parts.iter().enumerate() {
            idx.insert(p.clone(), i);
        }
        let mut counts = vec![0u64; parts.len()];
        draws.iter().for_each(|d| counts[idx[d]] += 1);
        let probs: Vec<f64> = parts.iter().map(|a| ewens_probability(a, theta).unwrap()).collect();
        assert!(chi_square_gof(&counts, &probs, 5.0).p_value > 0.001);
    }

    #[test]
    fn gem_properties() {
        let mut rng = RngStream::new(10, 0);
        for _ in 0..100 {
            let g = gem_sample(2.0, 1e-6, &mut rng).unwrap();
            assert!((g.atoms.iter().sum::<f64>() + g.remainder - 1.0).abs() < 1e-12);
            assert!(g.remainder < 1e-6);
        }
        let ens = EnsembleSpec::new(11, 50_000);
        let q1: Vec<f64> = ens.run(|_, r| gem_sample(2.0, 1e-3, r).unwrap().atoms[0]);
        assert!(Estimate::from_samples(&q1).z_score(1.0 / 3.0).abs() < 3.5);
        let tiny = gem_sample(1e-6, 1e-3, &mut rng).unwrap();
        assert!(tiny.atoms[0] > 0.99);
    }

    #[test]
    fn pd_properties() {
        let mut rng = RngStream::new(12, 0);
        let p = pd_sample_via_gamma(1.0, 1e-8, &mut rng).unwrap();
        assert!(p.atoms.windows(2).all(|w| w[0] >= w[1]));
        assert!((p.atoms.iter().sum::<f64>() + p.remainder - 1.0).abs() < 1e-12);
        let ens = EnsembleSpec::new(13, 40_000);
        let h2: Vec<f64> = ens.run(|_, r| pd_sample_via_gamma(1.5, 1e-8, r).unwrap().power_sum(2));
        assert!(Estimate::from_samples(&h2).z_score(homozygosity(2, 1.5).unwrap()).abs() < 3.5);
    }

    #[test]
    fn pd_log_decay() {
        let ens = EnsembleSpec::new(14, 400);
        let logs: Vec<Vec<f64>> = ens.run(|_, r| {
            let p = pd_sample_via_gamma(1.0, 1e-80, r).unwrap();
            (20..=100).map(|k| -p.atoms.get(k - 1).copied().unwrap_or(f64::MIN_POSITIVE).ln()).collect()
        });
        let ks: Vec<f64> = (20..=100).map(|k| k as f64).collect();
        let ys: Vec<f64> = (0..ks.len()).map(|i| logs.iter().map(|l| l[i]).sum::<f64>() / logs.len() as f64).collect();
        let (mk, my) = (ks.iter().sum::<f64>() / ks.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
        let slope = ks.iter().zip(&ys).map(|(k, y)| (k - mk) * (y - my)).sum::<f64>()
            / ks.iter().map(|k| (k - mk).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() < 0.1, "{slope}");
    }

    #[test]
    fn gem_sorted_matches_pd() {
        let ens = EnsembleSpec::new(15, 20_000);
        let a: Vec<f64> = ens.run(|_, r| gem_sample(1.0, 1e-9, r).unwrap().sorted_decreasing().largest());
        let b: Vec<f64> = ens.derive(1).run(|_, r| pd_sample_via_gamma(1.0, 1e-9, r).unwrap().largest());
        assert!(ks_two_sample(&a, &b) < 0.03);
    }
}
