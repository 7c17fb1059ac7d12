//! Dual processes checked numerically: the set-valued dual of a finite
//! Markov chain and the Kingman block-counting dual of the neutral
//! Wright–Fisher diffusion.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{check_domain, Error, Result};
use crate::numeric::{solve_linear, Matrix};
use crate::stats::Estimate;

/// Largest state space for which the set dual is built.
pub const MAX_DUAL_TYPES: usize = 12;
const SERIES_TERM_CAP: usize = 10_000;
const SERIES_TERM_TOL: f64 = 1e-20;
/// Poisson mean per uniformization chunk for vector actions.
const CHUNK_MEAN: f64 = 30.0;

/// Generator of a finite continuous-time chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RateMatrix(Matrix);

impl RateMatrix {
    pub fn new(q: Matrix) -> Result<Self> {
        if !q.is_square() || q.rows() == 0 {
            return Err(Error::Invalid("generator must be square and nonempty".into()));
        }
        for i in 0..q.rows() {
            let row = q.row(i);
            let scale = row.iter().map(|x| x.abs()).fold(1.0, f64::max);
            for (j, &x) in row.iter().enumerate() {
                if i != j && !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::Invalid(format!("off-diagonal rate ({i},{j}) = {x}")));
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > 1e-9 * scale {
                return Err(Error::Invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self(q))
    }

    /// Generator from off-diagonal rates; the diagonal is filled in.
    pub fn from_rates(rows: &[Vec<f64>]) -> Result<Self> {
        let mut q = Matrix::from_rows(rows)?;
        for i in 0..q.rows() {
            q[(i, i)] = 0.0;
            let out: f64 = q.row(i).iter().sum();
            q[(i, i)] = -out;
        }
        Self::new(q)
    }

    /// Random generator with all off-diagonal rates in `(0.05, 2)`, hence
    /// irreducible.
    pub fn random_irreducible<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if i == j { 0.0 } else { rng.random_range(0.05..2.0) })
                    .collect()
            })
            .collect();
        Self::from_rates(&rows).expect("valid by construction")
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.size()).map(|i| -self.0[(i, i)]).fold(0.0, f64::max)
    }

    /// Solves `pi Q = 0`, `sum pi = 1`; assumes a unique stationary law.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let k = self.size();
        let mut a = self.0.transpose();
        for j in 0..k {
            a[(k - 1, j)] = 1.0;
        }
        let mut b = vec![0.0; k];
        b[k - 1] = 1.0;
        solve_linear(&a, &b)
    }
}

impl TryFrom<Vec<Vec<f64>>> for RateMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(Matrix::from_rows(&rows)?)
    }
}

impl From<RateMatrix> for Vec<Vec<f64>> {
    fn from(q: RateMatrix) -> Self {
        q.0.to_rows()
    }
}

/// `e^{tQ}` by uniformization on `[0, t/2^m]` with `q_max t / 2^m <= 1`,
/// followed by `m` squarings.
pub fn matrix_exp_transition(q: &RateMatrix, t: f64) -> Result<Matrix> {
    check_domain("t", t, t >= 0.0 && t.is_finite(), "[0, inf)")?;
    let k = q.size();
    let qmax = q.max_exit_rate();
    if t == 0.0 || qmax == 0.0 {
        return Ok(Matrix::identity(k));
    }
    let mut squarings = 0u32;
    let mut s = t;
    while qmax * s > 1.0 {
        s /= 2.0;
        squarings += 1;
    }
    let jump = Matrix::identity(k).add(&q.0.scale(1.0 / qmax));
    let lambda = qmax * s;
    let mut weight = (-lambda).exp();
    let mut power = Matrix::identity(k);
    let mut sum = power.scale(weight);
    let mut n = 0;
    loop {
        n += 1;
        if n > SERIES_TERM_CAP {
            return Err(Error::SeriesCap(SERIES_TERM_CAP));
        }
        weight *= lambda / n as f64;
        if weight < SERIES_TERM_TOL {
            break;
        }
        power = power.matmul(&jump);
        sum = sum.add(&power.scale(weight));
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    Ok(sum)
}

/// Sparse generator: outgoing `(target, rate)` lists per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGenerator {
    pub out: Vec<Vec<(usize, f64)>>,
}

impl SparseGenerator {
    pub fn size(&self) -> usize {
        self.out.len()
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.out[i].iter().map(|&(_, r)| r).sum()
    }

    pub fn to_rate_matrix(&self) -> Result<RateMatrix> {
        let n = self.size();
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in self.out.iter().enumerate() {
            for &(j, r) in row {
                rows[i][j] += r;
            }
        }
        RateMatrix::from_rates(&rows)
    }

    /// Row vector `mu e^{tH}` by chunked uniformization.
    pub fn evolve(&self, mu: &[f64], t: f64) -> Result<Vec<f64>> {
        check_domain("t", t, t >= 0.0 && t.is_finite(), "[0, inf)")?;
        let exits: Vec<f64> = (0..self.size()).map(|i| self.exit_rate(i)).collect();
        let qmax = exits.iter().copied().fold(0.0, f64::max);
        let mut v = mu.to_vec();
        if t == 0.0 || qmax == 0.0 {
            return Ok(v);
        }
        let chunks = (qmax * t / CHUNK_MEAN).ceil().max(1.0) as usize;
        let lambda = qmax * t / chunks as f64;
        for _ in 0..chunks {
            let mut weight = (-lambda).exp();
            let mut term = v.clone();
            let mut acc: Vec<f64> = term.iter().map(|x| x * weight).collect();
            let mut n = 0;
            loop {
                n += 1;
                if n > SERIES_TERM_CAP {
                    return Err(Error::SeriesCap(SERIES_TERM_CAP));
                }
                weight *= lambda / n as f64;
                if n as f64 > lambda && weight < SERIES_TERM_TOL {
                    break;
                }
                // term <- term (I + H/qmax)
                let mut next: Vec<f64> = term.iter().zip(&exits).map(|(x, e)| x * (1.0 - e / qmax)).collect();
                for (i, row) in self.out.iter().enumerate() {
                    if term[i] != 0.0 {
                        for &(j, r) in row {
                            next[j] += term[i] * r / qmax;
                        }
                    }
                }
                term = next;
                acc.iter_mut().zip(&term).for_each(|(a, x)| *a += weight * x);
            }
            v = acc;
        }
        Ok(v)
    }
}

/// Set-valued dual of `Q` on subsets of `{0..K-1}` encoded as bitmasks:
/// `A -> A + {j}` at rate `sum_{l in A} q_{jl}` for `j` outside `A`, and
/// `A -> A - {j}` at rate `sum_{l not in A} q_{jl}` for `j` in `A`.
pub fn set_dual_generator(q: &RateMatrix) -> Result<SparseGenerator> {
    let k = q.size();
    if k > MAX_DUAL_TYPES {
        return Err(Error::Invalid(format!("set dual limited to {MAX_DUAL_TYPES} states, got {k}")));
    }
    let full = 1usize << k;
    let mut out = vec![Vec::new(); full];
    for (a, row) in out.iter_mut().enumerate() {
        for j in 0..k {
            let inside = a & (1 << j) != 0;
            let rate: f64 = (0..k)
                .filter(|&l| l != j && (a & (1 << l) != 0) != inside)
                .map(|l| q.rate(j, l))
                .sum();
            if rate > 0.0 {
                row.push((a ^ (1 << j), rate));
            }
        }
    }
    Ok(SparseGenerator { out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    pub case: String,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

/// `P_j(X_t = l)` against `P_{{l}}(j in A_t)`.
pub fn verify_mc_duality(q: &RateMatrix, j: usize, l: usize, t: f64) -> Result<DualityCheck> {
    let k = q.size();
    if j >= k || l >= k {
        return Err(Error::Invalid("state index out of range".into()));
    }
    let lhs = matrix_exp_transition(q, t)?[(j, l)];
    let h = set_dual_generator(q)?;
    let mut mu = vec![0.0; h.size()];
    mu[1 << l] = 1.0;
    let law = h.evolve(&mu, t)?;
    let rhs: f64 = law.iter().enumerate().filter(|(a, _)| a & (1 << j) != 0).map(|(_, p)| p).sum();
    Ok(DualityCheck {
        case: format!("K={k} j={j} l={l} t={t}"),
        lhs,
        rhs,
        diff: (lhs - rhs).abs(),
    })
}

/// Mass of the dual started from `{l}` on the empty and the full set at `t`.
pub fn set_dual_absorption(q: &RateMatrix, l: usize, t: f64) -> Result<(f64, f64)> {
    let h = set_dual_generator(q)?;
    let mut mu = vec![0.0; h.size()];
    mu[1 << l] = 1.0;
    let law = h.evolve(&mu, t)?;
    Ok((law[0], law[h.size() - 1]))
}

#[derive(Debug, Clone, Copy)]
pub enum DualEval<'a> {
    /// Solve the block-counting chain exactly.
    Exact,
    /// Simulate the block-counting chain.
    MonteCarlo(&'a EnsembleSpec),
}

/// Kingman block-counting chain: `k -> k-1` at rate `gamma k(k-1)/2`.
pub fn kingman_death_generator(n: usize, gamma: f64) -> RateMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    for k in 2..=n {
        rows[k - 1][k - 2] = gamma * (k * (k - 1)) as f64 / 2.0;
    }
    RateMatrix::from_rates(&rows).expect("valid by construction")
}

/// Number of blocks at time `t` starting from `n`.
pub fn kingman_blocks_at<R: Rng + ?Sized>(n: usize, gamma: f64, t: f64, rng: &mut R) -> usize {
    let exp = Exp::new(1.0).expect("unit rate");
    let mut k = n;
    let mut s = 0.0;
    while k > 1 {
        s += exp.sample(rng) / (gamma * (k * (k - 1)) as f64 / 2.0);
        if s > t {
            break;
        }
        k -= 1;
    }
    k
}

/// `E[p_t^n] = E[p0^{N_t}]` for the neutral two-allele diffusion with
/// generator `(gamma/2) p(1-p) d^2/dp^2`; the exact mode has zero SE.
pub fn wf_moment_dual(p0: f64, gamma: f64, n: usize, t: f64, eval: DualEval<'_>) -> Result<Estimate> {
    check_domain("p0", p0, (0.0..=1.0).contains(&p0), "[0, 1]")?;
    check_domain("gamma", gamma, gamma >= 0.0, "[0, inf)")?;
    if n == 0 {
        return Err(Error::Invalid("moment order must be >= 1".into()));
    }
    match eval {
        DualEval::Exact => {
            let p = matrix_exp_transition(&kingman_death_generator(n, gamma), t)?;
            let mean = (1..=n).map(|k| p[(n - 1, k - 1)] * p0.powi(k as i32)).sum();
            Ok(Estimate { mean, se: 0.0, n: 0 })
        }
        DualEval::MonteCarlo(ens) => {
            let xs: Vec<f64> = ens.run(|_, r| p0.powi(kingman_blocks_at(n, gamma, t, r) as i32));
            Ok(Estimate::from_samples(&xs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn two_state() -> RateMatrix {
        RateMatrix::from_rates(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn checked(rows: &[Vec<f64>]) -> Result<RateMatrix> {
        RateMatrix::new(Matrix::from_rows(rows)?)
    }

    #[test]
    fn validation() {
        assert!(checked(&[vec![-1.0, 1.0], vec![0.5, -0.5]]).is_ok());
        assert!(checked(&[vec![-1.0, 0.5], vec![0.5, -0.5]]).is_err());
        assert!(checked(&[vec![1.0, -1.0], vec![0.5, -0.5]]).is_err());
    }

    #[test]
    fn two_state_exponential() {
        let q = two_state();
        assert_eq!(matrix_exp_transition(&q, 0.0).unwrap(), Matrix::identity(2));
        for t in [0.01, 0.5, 1.0, 3.0, 40.0] {
            let p = matrix_exp_transition(&q, t).unwrap();
            let exact = (1.0 + (-2.0 * t).exp()) / 2.0;
            assert!((p[(0, 0)] - exact).abs() < 1e-12, "t={t}");
            assert!((p[(0, 1)] - (1.0 - exact)).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let mut rng = RngStream::new(1, 0);
        for k in 2..8 {
            let q = RateMatrix::random_irreducible(k, &mut rng);
            for t in [0.1, 2.0, 50.0] {
                let p = matrix_exp_transition(&q, t).unwrap();
                for i in 0..k {
                    assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(p.row(i).iter().all(|&x| x >= 0.0));
                }
            }
        }
    }

    #[test]
    fn sparse_matches_dense() {
        let mut rng = RngStream::new(2, 0);
        let q = RateMatrix::random_irreducible(4, &mut rng);
        let h = set_dual_generator(&q).unwrap();
        let dense = matrix_exp_transition(&h.to_rate_matrix().unwrap(), 0.7).unwrap();
        let mut mu = vec![0.0; 16];
        mu[5] = 1.0;
        let v = h.evolve(&mu, 0.7).unwrap();
        for a in 0..16 {
            assert!((v[a] - dense[(5, a)]).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_examples() {
        let q = two_state();
        let c = verify_mc_duality(&q, 0, 0, 0.0).unwrap();
        assert_eq!((c.lhs, c.rhs), (1.0, 1.0));
        let c = verify_mc_duality(&q, 0, 1, 0.0).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let c = verify_mc_duality(&q, 1, 1, 1.0).unwrap();
        let exact = (1.0 + (-2f64).exp()) / 2.0;
        assert!((c.lhs - exact).abs() < 1e-12 && (c.rhs - exact).abs() < 1e-12);
        let mut rng = RngStream::new(3, 0);
        let q = RateMatrix::random_irreducible(4, &mut rng);
        for j in 0..4 {
            for l in 0..4 {
                assert!(verify_mc_duality(&q, j, l, 1.3).unwrap().diff < 1e-9);
            }
        }
    }

    #[test]
    fn dual_absorbs_at_stationary_weight() {
        let mut rng = RngStream::new(4, 0);
        let q = RateMatrix::random_irreducible(4, &mut rng);
        let pi = q.stationary().unwrap();
        for l in 0..4 {
            let (empty, full) = set_dual_absorption(&q, l, 100.0).unwrap();
            assert!((empty + full - 1.0).abs() < 1e-9);
            assert!((full - pi[l]).abs() < 1e-6);
        }
    }

    #[test]
    fn set_dual_size_limit() {
        let q = RateMatrix::from_rates(&vec![vec![1.0; 13]; 13]).unwrap();
        assert!(set_dual_generator(&q).is_err());
    }

    #[test]
    fn moment_dual_closed_forms() {
        for p0 in [0.0, 0.3, 1.0] {
            let m1 = wf_moment_dual(p0, 1.0, 1, 2.0, DualEval::Exact).unwrap();
            assert!((m1.mean - p0).abs() < 1e-14);
        }
        for t in [0.1, 1.0, 5.0] {
            let p0 = 0.3f64;
            let m2 = wf_moment_dual(p0, 1.0, 2, t, DualEval::Exact).unwrap().mean;
            let exact = p0 * p0 * (-t).exp() + p0 * (1.0 - (-t).exp());
            assert!((m2 - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_dual_exact_vs_chain_mc() {
        let ens = EnsembleSpec::new(5, 100_000);
        let exact = wf_moment_dual(0.5, 1.0, 3, 1.0, DualEval::Exact).unwrap().mean;
        let mc = wf_moment_dual(0.5, 1.0, 3, 1.0, DualEval::MonteCarlo(&ens)).unwrap();
        assert!(mc.z_score(exact).abs() < 3.5);
    }

    #[test]
    fn moments_decrease_in_order() {
        for p0 in [0.1, 0.5, 0.9] {
            let ms: Vec<f64> = (1..=8).map(|n| wf_moment_dual(p0, 1.0, n, 0.7, DualEval::Exact).unwrap().mean).collect();
            assert!(ms.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
