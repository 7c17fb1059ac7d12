//! Wright–Fisher chains with selection and mutation, their diffusion
//! limits, the Dirichlet stationary law and the closed moment system.
//!
//! Diffusion convention: generator
//! `(gamma/2) sum p_i (delta_ij - p_j) d_i d_j + sum b_i(p) d_i` where the
//! house-of-cards drift is `(theta/2)(nu_i - p_i)`, general mutation is
//! `m (sum_j q_ji p_j - p_i)` and selection adds
//! `p_i (sum_j sigma_ij p_j - sum_kl sigma_kl p_k p_l)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::ensemble::EnsembleSpec;
use crate::error::{check_domain, Error, Result};
use crate::numeric::{rk4_step, solve_linear, step_count, Matrix};
use crate::rng::multinomial;
use crate::simplex::SimplexPoint;
use crate::stats::Estimate;
use crate::trajectory::Trajectory;

pub const FIXATION_CAP: u64 = 10_000_000;
const STATIONARY_NODES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainMode {
    /// `n` gene copies resampled multinomially each generation.
    Haploid,
    /// `n` diploid individuals: random union of gametes, viability
    /// selection on genotypes, gamete mutation, then resampling.
    Diploid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfChainSpec {
    pub n: u64,
    /// `m_ij`: probability that a type-`i` gamete becomes type `j`.
    pub mutation: Matrix,
    /// Symmetric viabilities `V_ij > 0`.
    pub viability: Matrix,
    pub mode: ChainMode,
}

impl WfChainSpec {
    pub fn new(n: u64, mutation: Matrix, viability: Matrix, mode: ChainMode) -> Result<Self> {
        let k = mutation.rows();
        if n == 0 || k == 0 {
            return Err(Error::Invalid("population size and allele count must be positive".into()));
        }
        if mutation.cols() != k || viability.rows() != k || viability.cols() != k {
            return Err(Error::Invalid("mutation and viability matrices must be K x K".into()));
        }
        for i in 0..k {
            let row = mutation.row(i);
            if row.iter().any(|&x| x < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!("mutation row {i} is not a distribution")));
            }
        }
        if !viability.is_symmetric(1e-12) || viability.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Invalid("viabilities must be symmetric and positive".into()));
        }
        Ok(Self {
            n,
            mutation,
            viability,
            mode,
        })
    }

    pub fn neutral(n: u64, k: usize) -> Self {
        Self::new(n, Matrix::identity(k), Matrix::from_rows(&vec![vec![1.0; k]; k]).expect("square"), ChainMode::Haploid)
            .expect("valid neutral spec")
    }

    pub fn types(&self) -> usize {
        self.mutation.rows()
    }

    /// `V_ij = v_i v_j`, under which Hardy–Weinberg proportions survive
    /// selection and the allele frequencies alone are Markov.
    pub fn is_multiplicative(&self) -> bool {
        let k = self.types();
        let v: Vec<f64> = (0..k).map(|i| self.viability[(i, i)].sqrt()).collect();
        (0..k).all(|i| (0..k).all(|j| (self.viability[(i, j)] - v[i] * v[j]).abs() <= 1e-12 * self.viability[(i, j)]))
    }

    /// Genotype proportions `P^{sel,mut}_ij` (`i <= j`, row-major over the
    /// upper triangle) after random union, selection and mutation.
    pub fn genotype_probs(&self, p: &[f64]) -> Vec<f64> {
        let k = self.types();
        let (v, m) = (&self.viability, &self.mutation);
        let mut sel = Vec::with_capacity(k * (k + 1) / 2);
        for a in 0..k {
            for b in a..k {
                let hw = if a == b { p[a] * p[a] } else { 2.0 * p[a] * p[b] };
                sel.push(v[(a, b)] * hw);
            }
        }
        let z: f64 = sel.iter().sum();
        sel.iter_mut().for_each(|x| *x /= z);
        let mut out = Vec::with_capacity(sel.len());
        for i in 0..k {
            for j in i..k {
                let mut acc = 0.0;
                let mut idx = 0;
                for a in 0..k {
                    for b in a..k {
                        acc += (m[(a, i)] * m[(b, j)] + m[(a, j)] * m[(b, i)]) * sel[idx];
                        idx += 1;
                    }
                }
                out.push(if i == j { 0.5 * acc } else { acc });
            }
        }
        out
    }

    /// Allele frequencies after selection and mutation.
    pub fn selected_mutated(&self, p: &[f64]) -> Vec<f64> {
        allele_marginal(self.types(), &self.genotype_probs(p))
    }
}

/// `p_i = P_ii + (1/2) sum_{j != i} P_ij` over upper-triangle genotypes.
fn allele_marginal(k: usize, geno: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; k];
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            if i == j {
                p[i] += geno[idx];
            } else {
                p[i] += 0.5 * geno[idx];
                p[j] += 0.5 * geno[idx];
            }
            idx += 1;
        }
    }
    p
}

/// One generation of the chain.
pub fn wf_chain_step<R: Rng + ?Sized>(spec: &WfChainSpec, p: &SimplexPoint, rng: &mut R) -> SimplexPoint {
    let k = spec.types();
    let next = match spec.mode {
        ChainMode::Haploid => {
            let q = spec.selected_mutated(p.as_slice());
            frequencies(&multinomial(spec.n, &q, rng), spec.n)
        }
        ChainMode::Diploid if spec.is_multiplicative() => {
            let q = spec.selected_mutated(p.as_slice());
            frequencies(&multinomial(2 * spec.n, &q, rng), 2 * spec.n)
        }
        ChainMode::Diploid => {
            let geno = spec.genotype_probs(p.as_slice());
            let counts = multinomial(spec.n, &geno, rng);
            allele_marginal(k, &frequencies(&counts, spec.n))
        }
    };
    SimplexPoint::project(next).expect("resampled frequencies are a distribution")
}

fn frequencies(counts: &[u64], n: u64) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationSummary {
    pub n: u64,
    pub p0: f64,
    /// Generations until one allele is lost.
    pub time: Estimate,
    /// Fraction of replicates absorbed with allele 1 fixed.
    pub fixed_at_one: Estimate,
    /// Replicates stopped by the generation cap.
    pub capped: usize,
}

/// Neutral two-allele chain `X' ~ Binomial(N, X/N)` from `round(p0 N)`,
/// run to absorption in every replicate.
pub fn wf_fixation_experiment(n: u64, p0: f64, ens: &EnsembleSpec) -> Result<FixationSummary> {
    check_domain("p0", p0, (0.0..=1.0).contains(&p0), "[0, 1]")?;
    if n == 0 {
        return Err(Error::Invalid("population size must be positive".into()));
    }
    let x0 = (p0 * n as f64).round() as u64;
    let runs = ens.run(|_, rng| {
        let mut x = x0;
        let mut t = 0u64;
        while x > 0 && x < n && t < FIXATION_CAP {
            x = Binomial::new(n, x as f64 / n as f64).expect("valid binomial").sample(rng);
            t += 1;
        }
        (t, x)
    });
    let times: Vec<f64> = runs.iter().map(|&(t, _)| t as f64).collect();
    let ones = runs.iter().filter(|&&(_, x)| x == n).count();
    Ok(FixationSummary {
        n,
        p0,
        time: Estimate::from_samples(&times),
        fixed_at_one: Estimate::proportion(ones, runs.len()),
        capped: runs.iter().filter(|&&(_, x)| x > 0 && x < n).count(),
    })
}

/// Exact expected absorption time of the binomial chain from `x0` copies,
/// from the linear system `(I - Q) t = 1` on the transient states.
pub fn wf_fixation_time_exact(n: u64, x0: u64) -> Result<f64> {
    if x0 == 0 || x0 >= n {
        return Ok(0.0);
    }
    let m = (n - 1) as usize;
    let mut a = Matrix::identity(m);
    for i in 1..n {
        let p = i as f64 / n as f64;
        let ln_p = p.ln();
        let ln_q = (1.0 - p).ln();
        for j in 1..n {
            let lp = ln_gamma(n as f64 + 1.0) - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0)
                + j as f64 * ln_p
                + (n - j) as f64 * ln_q;
            a[((i - 1) as usize, (j - 1) as usize)] -= lp.exp();
        }
    }
    let t = solve_linear(&a, &vec![1.0; m])?;
    Ok(t[(x0 - 1) as usize])
}

/// Diffusion approximation of the mean absorption time in generations,
/// `-2N [p ln p + (1-p) ln(1-p)]`, from `(1/2) p(1-p) g'' = -1` on the
/// time scale of `N` generations per unit.
pub fn diffusion_fixation_generations(n: u64, p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    -2.0 * n as f64 * (h(p) + h(1.0 - p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationSpec {
    None,
    /// Drift `(theta/2)(nu_i - p_i)`.
    HouseOfCards { theta: f64, nu: Vec<f64> },
    /// Drift `rate (sum_j q_ji p_j - p_i)` with row-stochastic `q`.
    General { rate: f64, kernel: Matrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfDiffusionSpec {
    pub gamma: f64,
    pub mutation: MutationSpec,
    pub sigma: Option<Matrix>,
}

impl WfDiffusionSpec {
    pub fn neutral(gamma: f64) -> Self {
        Self {
            gamma,
            mutation: MutationSpec::None,
            sigma: None,
        }
    }

    pub fn house_of_cards(gamma: f64, theta: f64, nu: Vec<f64>) -> Self {
        Self {
            gamma,
            mutation: MutationSpec::HouseOfCards { theta, nu },
            sigma: None,
        }
    }

    pub fn with_selection(mut self, sigma: Matrix) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        check_domain("gamma", self.gamma, self.gamma >= 0.0, "[0, inf)")?;
        match &self.mutation {
            MutationSpec::None => {}
            MutationSpec::HouseOfCards { theta, nu } => {
                check_domain("theta", *theta, *theta >= 0.0, "[0, inf)")?;
                if nu.len() != k {
                    return Err(Error::Invalid("mutation source has the wrong length".into()));
                }
                SimplexPoint::new(nu.clone())?;
            }
            MutationSpec::General { rate, kernel } => {
                check_domain("mutation rate", *rate, *rate >= 0.0, "[0, inf)")?;
                if kernel.rows() != k || kernel.cols() != k {
                    return Err(Error::Invalid("mutation kernel has the wrong shape".into()));
                }
            }
        }
        if let Some(s) = &self.sigma {
            if s.rows() != k || s.cols() != k {
                return Err(Error::Invalid("selection matrix has the wrong shape".into()));
            }
        }
        Ok(())
    }

    pub fn drift(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        match &self.mutation {
            MutationSpec::None => {}
            MutationSpec::HouseOfCards { theta, nu } => {
                for i in 0..p.len() {
                    out[i] += 0.5 * theta * (nu[i] - p[i]);
                }
            }
            MutationSpec::General { rate, kernel } => {
                let inflow = kernel.vec_mul(p);
                for i in 0..p.len() {
                    out[i] += rate * (inflow[i] - p[i]);
                }
            }
        }
        if let Some(s) = &self.sigma {
            let vi = s.mul_vec(p);
            let vbar: f64 = vi.iter().zip(p).map(|(a, b)| a * b).sum();
            for i in 0..p.len() {
                out[i] += p[i] * (vi[i] - vbar);
            }
        }
    }

    fn step<R: Rng + ?Sized>(&self, p: &mut [f64], buf: &mut Buffers, h: f64, rng: &mut R) {
        let k = p.len();
        self.drift(p, &mut buf.drift);
        let sd = (self.gamma * h).sqrt();
        if k == 2 {
            let z: f64 = StandardNormal.sample(rng);
            let x = p[0];
            let next = (x + buf.drift[0] * h + sd * (x * (1.0 - x)).max(0.0).sqrt() * z).clamp(0.0, 1.0);
            p[0] = next;
            p[1] = 1.0 - next;
            return;
        }
        // dp_i = sqrt(p_i) dW_i - p_i sum_j sqrt(p_j) dW_j has covariance
        // p_i (delta_ij - p_j) exactly on the simplex
        let mut common = 0.0;
        for i in 0..k {
            let z: f64 = StandardNormal.sample(rng);
            buf.noise[i] = p[i].max(0.0).sqrt() * z;
            common += buf.noise[i];
        }
        let mut total = 0.0;
        for i in 0..k {
            let x = p[i] + buf.drift[i] * h + sd * (buf.noise[i] - p[i] * common);
            p[i] = x.max(0.0);
            total += p[i];
        }
        if total > 0.0 {
            p.iter_mut().for_each(|x| *x /= total);
        }
    }
}

struct Buffers {
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl Buffers {
    fn new(k: usize) -> Self {
        Self {
            drift: vec![0.0; k],
            noise: vec![0.0; k],
        }
    }
}

/// Euler–Maruyama path, clipped to the simplex after every step.
pub fn wf_diffusion_simulate<R: Rng + ?Sized>(
    spec: &WfDiffusionSpec,
    p0: &SimplexPoint,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let k = p0.dim();
    spec.validate(k)?;
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    let names: Vec<String> = (1..=k).map(|i| format!("p{i}")).collect();
    let mut tr = Trajectory::new(&names);
    let mut p = p0.as_slice().to_vec();
    let mut buf = Buffers::new(k);
    tr.push(0.0, p.clone());
    for i in 0..step_count(horizon, dt) {
        let t = i as f64 * dt;
        let h = dt.min(horizon - t);
        spec.step(&mut p, &mut buf, h, rng);
        tr.push(t + h, p.clone());
    }
    Ok(tr)
}

/// State at `T` of the same scheme without storing the path.
pub fn wf_diffusion_final<R: Rng + ?Sized>(
    spec: &WfDiffusionSpec,
    p0: &SimplexPoint,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = p0.dim();
    spec.validate(k)?;
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    let mut p = p0.as_slice().to_vec();
    let mut buf = Buffers::new(k);
    for i in 0..step_count(horizon, dt) {
        let h = dt.min(horizon - i as f64 * dt);
        spec.step(&mut p, &mut buf, h, rng);
    }
    Ok(p)
}

/// Dirichlet draw by normalized gammas, computed in log space so tiny
/// shape parameters do not underflow to an all-zero vector.
pub fn dirichlet_sample<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<SimplexPoint> {
    if theta.is_empty() || theta.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::Invalid("Dirichlet parameters must be positive".into()));
    }
    let logs: Vec<f64> = theta
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("shape >= 1").sample(rng).ln()
            } else {
                // G(a) = G(a + 1) U^{1/a}
                let g = Gamma::new(a + 1.0, 1.0).expect("shape > 1").sample(rng).ln();
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                g + u.ln() / a
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    SimplexPoint::project(logs.iter().map(|l| (l - top).exp()).collect())
}

/// `E prod p_i^{k_i}` under Dirichlet(`theta`); `k` may omit trailing
/// zero exponents.
pub fn dirichlet_moment(theta: &[f64], k: &[u32]) -> Result<f64> {
    if k.len() > theta.len() || theta.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Invalid("Dirichlet moment needs positive parameters and |k| <= K".into()));
    }
    let total: f64 = theta.iter().sum();
    let order: u32 = k.iter().sum();
    let mut log = ln_gamma(total) - ln_gamma(total + order as f64);
    for (a, &ki) in theta.iter().zip(k) {
        log += ln_gamma(a + ki as f64) - ln_gamma(*a);
    }
    Ok(log.exp())
}

/// Two-allele stationary law with selection,
/// `C exp(V_bar(p)/gamma) p^{a-1} (1-p)^{b-1}` with `(a, b) = theta nu / gamma`
/// and `V_bar = sum sigma_ij p_i p_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStationary {
    pub sigma: Matrix,
    pub shape: [f64; 2],
    pub gamma: f64,
    log_norm: f64,
    nodes: Vec<f64>,
    cum_weights: Vec<f64>,
}

impl SelectionStationary {
    pub fn new(sigma: &Matrix, theta_nu: [f64; 2], gamma: f64) -> Result<Self> {
        if sigma.rows() != 2 || sigma.cols() != 2 {
            return Err(Error::Invalid("selection density is two-allele only".into()));
        }
        check_domain("gamma", gamma, gamma > 0.0, "(0, inf)")?;
        let shape = [theta_nu[0] / gamma, theta_nu[1] / gamma];
        let beta = Beta::new(shape[0], shape[1]).map_err(|e| Error::Invalid(e.to_string()))?;
        let vbar = |x: f64| mean_fitness_2(sigma, x);
        // Beta-quantile midpoints turn the normalizing integral into an
        // average that is insensitive to the boundary singularities
        let nodes: Vec<f64> = (0..STATIONARY_NODES)
            .map(|i| beta.inverse_cdf((i as f64 + 0.5) / STATIONARY_NODES as f64))
            .collect();
        let logs: Vec<f64> = nodes.iter().map(|&x| vbar(x) / gamma).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cum = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        for l in &logs {
            acc += (l - top).exp();
            cum.push(acc);
        }
        let mean_weight = acc / nodes.len() as f64;
        cum.iter_mut().for_each(|c| *c /= acc);
        let log_beta = ln_gamma(shape[0]) + ln_gamma(shape[1]) - ln_gamma(shape[0] + shape[1]);
        Ok(Self {
            sigma: sigma.clone(),
            shape,
            gamma,
            log_norm: top + mean_weight.ln() + log_beta,
            nodes,
            cum_weights: cum,
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let log = mean_fitness_2(&self.sigma, x) / self.gamma
            + (self.shape[0] - 1.0) * x.ln()
            + (self.shape[1] - 1.0) * (1.0 - x).ln();
        (log - self.log_norm).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = self.nodes.partition_point(|&n| n <= x);
        if i == 0 {
            0.0
        } else {
            self.cum_weights[i - 1]
        }
    }
}

fn mean_fitness_2(sigma: &Matrix, x: f64) -> f64 {
    let p = [x, 1.0 - x];
    (0..2).map(|i| (0..2).map(|j| sigma[(i, j)] * p[i] * p[j]).sum::<f64>()).sum()
}

/// Normalized stationary density on `grid`.
pub fn selection_stationary_density(sigma: &Matrix, theta_nu: [f64; 2], gamma: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let law = SelectionStationary::new(sigma, theta_nu, gamma)?;
    Ok(grid.iter().map(|&x| law.density(x)).collect())
}

/// Mixed moments `m_k = E prod_{i<K} p_i^{k_i}` of the neutral diffusion with
/// house-of-cards mutation, for every `k` with `|k| <= max_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSystem {
    pub gamma: f64,
    pub theta: f64,
    pub nu: Vec<f64>,
    pub indices: Vec<Vec<u32>>,
}

impl MomentSystem {
    pub fn new(gamma: f64, theta: f64, nu: &[f64], max_order: u32) -> Result<Self> {
        check_domain("gamma", gamma, gamma >= 0.0, "[0, inf)")?;
        check_domain("theta", theta, theta >= 0.0, "[0, inf)")?;
        SimplexPoint::new(nu.to_vec())?;
        let free = nu.len() - 1;
        let mut indices = vec![vec![0u32; free]];
        for _ in 0..max_order {
            let mut next = Vec::new();
            for k in &indices {
                for i in 0..free {
                    let mut c = k.clone();
                    c[i] += 1;
                    if c.iter().sum::<u32>() <= max_order && !indices.contains(&c) && !next.contains(&c) {
                        next.push(c);
                    }
                }
            }
            indices.extend(next);
        }
        indices.sort_by_key(|k| (k.iter().sum::<u32>(), std::cmp::Reverse(k.clone())));
        Ok(Self {
            gamma,
            theta,
            nu: nu.to_vec(),
            indices,
        })
    }

    pub fn position(&self, k: &[u32]) -> Option<usize> {
        self.indices.iter().position(|x| x == k)
    }

    /// `dm_k/dt = sum_i k_i (gamma (k_i - 1) + theta nu_i)/2 m_{k - e_i}
    ///            - |k| (gamma (|k| - 1) + theta)/2 m_k`.
    pub fn rhs(&self, m: &[f64]) -> Vec<f64> {
        self.indices
            .iter()
            .enumerate()
            .map(|(idx, k)| {
                let n = k.iter().sum::<u32>() as f64;
                let mut d = -n * (self.gamma * (n - 1.0) + self.theta) / 2.0 * m[idx];
                for (i, &ki) in k.iter().enumerate() {
                    if ki > 0 {
                        let mut lower = k.clone();
                        lower[i] -= 1;
                        let j = self.position(&lower).expect("index set is closed downward");
                        let ki = ki as f64;
                        d += ki * (self.gamma * (ki - 1.0) + self.theta * self.nu[i]) / 2.0 * m[j];
                    }
                }
                d
            })
            .collect()
    }

    pub fn initial(&self, p0: &SimplexPoint) -> Vec<f64> {
        self.indices
            .iter()
            .map(|k| k.iter().zip(p0.as_slice()).map(|(&e, &p)| p.powi(e as i32)).product())
            .collect()
    }

    /// Dirichlet(`theta nu / gamma`) moments, the fixed point of the system.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let alpha: Vec<f64> = self.nu.iter().map(|v| self.theta * v / self.gamma).collect();
        self.indices.iter().map(|k| dirichlet_moment(&alpha, k)).collect()
    }
}

/// RK4 solution of the moment system from `p0`; state column `j` of the
/// trajectory is `m_{indices[j]}`.
pub fn wf_moment_ode(system: &MomentSystem, p0: &SimplexPoint, horizon: f64, dt: f64) -> Result<Trajectory> {
    if p0.dim() != system.nu.len() {
        return Err(Error::Invalid("initial point and mutation source disagree on K".into()));
    }
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    let names: Vec<String> = system
        .indices
        .iter()
        .map(|k| format!("m{}", k.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("_")))
        .collect();
    let mut tr = Trajectory::new(&names);
    let mut m = system.initial(p0);
    tr.push(0.0, m.clone());
    let f = |_t: f64, y: &[f64]| system.rhs(y);
    for i in 0..step_count(horizon, dt) {
        let t = i as f64 * dt;
        let h = dt.min(horizon - t);
        m = rk4_step(&f, t, &m, h);
        tr.push(t + h, m.clone());
    }
    Ok(tr)
}
