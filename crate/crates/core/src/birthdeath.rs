//! Linear birth–death processes (exact laws and Gillespie simulation) and
//! the Feller continuous-state branching diffusion with immigration.
//!
//! The diffusion convention is `dX = (mX + c) dt + sqrt(2 gamma X) dW`,
//! i.e. generator `(mx + c) f' + gamma x f''`. It is the one under which the
//! Laplace exponent solves `u' = m u - gamma u^2` and the extinction
//! probability at `m = 0` is `exp(-x / (gamma t))`.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{check_domain, Error, Result};
use crate::numeric::step_count;
use crate::stats::{ks_one_sample, Estimate};
use crate::trajectory::Trajectory;

pub const EVENT_CAP: u64 = 100_000_000;
const LAW_TAIL: f64 = 1e-16;
const SERIES_SWITCH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdParams {
    pub b: f64,
    pub d: f64,
}

impl BdParams {
    pub fn new(b: f64, d: f64) -> Result<Self> {
        check_domain("b", b, b >= 0.0 && b.is_finite(), "[0, inf)")?;
        check_domain("d", d, d >= 0.0 && d.is_finite(), "[0, inf)")?;
        if b + d <= 0.0 {
            return Err(Error::Invalid("b + d must be positive".into()));
        }
        Ok(Self { b, d })
    }

    fn critical(&self) -> bool {
        ((self.b - self.d) / (self.b + self.d)).abs() < 1e-12
    }
}

/// Piecewise-constant path: `states[i]` holds on `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub states: Vec<u64>,
    pub horizon: f64,
    pub capped: bool,
}

impl JumpPath {
    pub fn value_at(&self, t: f64) -> u64 {
        let i = self.times.partition_point(|&s| s <= t);
        self.states[i.saturating_sub(1)]
    }

    pub fn final_state(&self) -> u64 {
        *self.states.last().expect("non-empty path")
    }

    pub fn to_trajectory(&self) -> Trajectory {
        let mut tr = Trajectory::new(&["X"]);
        for (&t, &x) in self.times.iter().zip(&self.states) {
            tr.push(t, vec![x as f64]);
        }
        tr
    }
}

/// Exact event simulation on `[0, T]`.
pub fn bd_gillespie<R: Rng + ?Sized>(p: &BdParams, x0: u64, horizon: f64, rng: &mut R) -> JumpPath {
    let mut path = JumpPath {
        times: vec![0.0],
        states: vec![x0],
        horizon,
        capped: false,
    };
    let mut events = 0u64;
    gillespie_loop(p, x0, horizon, rng, |t, x| {
        events += 1;
        path.times.push(t);
        path.states.push(x);
        events < EVENT_CAP
    })
    .map_or_else(|| path.capped = true, |_| ());
    path
}

/// State at time `T` only, without storing the path. `None` when the
/// event cap is hit.
pub fn bd_state_at<R: Rng + ?Sized>(p: &BdParams, x0: u64, horizon: f64, rng: &mut R) -> Option<u64> {
    let mut events = 0u64;
    gillespie_loop(p, x0, horizon, rng, |_, _| {
        events += 1;
        events < EVENT_CAP
    })
}

fn gillespie_loop<R, F>(p: &BdParams, x0: u64, horizon: f64, rng: &mut R, mut on_event: F) -> Option<u64>
where
    R: Rng + ?Sized,
    F: FnMut(f64, u64) -> bool,
{
    let total = p.b + p.d;
    let birth = p.b / total;
    let exp = Exp::new(1.0).expect("unit rate");
    let (mut t, mut x) = (0.0, x0);
    while x > 0 {
        let dt: f64 = exp.sample(rng) / (total * x as f64);
        t += dt;
        if t > horizon {
            break;
        }
        if rng.random::<f64>() < birth {
            x += 1;
        } else {
            x -= 1;
        }
        if !on_event(t, x) {
            return None;
        }
    }
    Some(x)
}

/// `(f(t), g(t))` with `p_0 = f` and `p_n = (1-f)(1-g) g^{n-1}` from one
/// ancestor.
pub fn bd_fg(p: &BdParams, t: f64) -> (f64, f64) {
    if p.critical() {
        let bt = p.b * t;
        return (bt / (1.0 + bt), bt / (1.0 + bt));
    }
    // expm1 keeps small (b-d)t accurate
    let r = p.b - p.d;
    let em1 = (r * t).exp_m1();
    let den = p.b * em1 + r;
    (p.d * em1 / den, p.b * em1 / den)
}

/// One-ancestor law at time `t`: `pmf[n] = p_n(t)` for `n < pmf.len()`,
/// and `tail = P(X_t >= pmf.len())` in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdLaw {
    pub pmf: Vec<f64>,
    pub tail: f64,
}

impl BdLaw {
    pub fn total(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.tail
    }
}

/// `p_n(t)` for `n = 0..` until the tail drops below 1e-16 or `max_n`
/// entries are listed.
pub fn bd_law(p: &BdParams, t: f64, max_n: usize) -> Result<BdLaw> {
    check_domain("t", t, t >= 0.0, "[0, inf)")?;
    let (f, g) = bd_fg(p, t);
    let mut pmf = vec![f];
    let mut term = (1.0 - f) * (1.0 - g);
    // P(X_t > n) = (1 - f) g^n
    let mut tail = 1.0 - f;
    while tail > LAW_TAIL && pmf.len() < max_n.max(2) {
        pmf.push(term);
        tail *= g;
        term *= g;
    }
    Ok(BdLaw { pmf, tail })
}

/// `E exp(-theta X_t)` from `x0` ancestors.
pub fn bd_laplace(p: &BdParams, x0: u64, theta: f64, t: f64) -> Result<f64> {
    check_domain("theta", theta, theta >= 0.0, "[0, inf)")?;
    check_domain("t", t, t >= 0.0, "[0, inf)")?;
    Ok(bd_pgf(p, (-theta).exp(), t).powi(x0 as i32))
}

/// Single-ancestor generating function `E s^{X_t}`.
pub fn bd_pgf(p: &BdParams, s: f64, t: f64) -> f64 {
    let sm1 = s - 1.0;
    if p.critical() {
        let bt = p.b * t;
        return (1.0 - (bt - 1.0) * sm1) / (1.0 - bt * sm1);
    }
    let e = ((p.b - p.d) * t).exp();
    let c = p.b * s - p.d;
    (p.d * sm1 * e - c) / (p.b * sm1 * e - c)
}

/// `(E X_t, E X_t^2)` from `x0` ancestors.
pub fn bd_moments(p: &BdParams, x0: u64, t: f64) -> (f64, f64) {
    let x = x0 as f64;
    if p.critical() {
        return (x, x * x + 2.0 * p.b * t * x);
    }
    let r = p.b - p.d;
    let e = (r * t).exp();
    (x * e, x * x * e * e + x * (p.b + p.d) / r * e * (e - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedLimit {
    pub survival: Estimate,
    /// `X_t / t` on survivors, in replicate order.
    pub scaled: Vec<f64>,
    pub conditional_mean: Option<Estimate>,
    /// KS distance to the exponential law with mean `b`.
    pub ks: Option<f64>,
    pub inconclusive: bool,
}

/// Law of `X_t / t` given survival for the critical process started from
/// one individual, against its exponential limit with mean `b`.
pub fn critical_bd_conditioned_limit(b: f64, t: f64, ens: &EnsembleSpec) -> Result<ConditionedLimit> {
    let p = BdParams::new(b, b)?;
    let finals = ens.run(|_, rng| bd_state_at(&p, 1, t, rng));
    if finals.iter().any(Option::is_none) {
        return Err(Error::Invalid("event cap reached".into()));
    }
    let scaled: Vec<f64> = finals.iter().flatten().filter(|&&x| x > 0).map(|&x| x as f64 / t).collect();
    let survival = Estimate::proportion(scaled.len(), finals.len());
    let inconclusive = scaled.is_empty();
    Ok(ConditionedLimit {
        survival,
        conditional_mean: (!inconclusive).then(|| Estimate::from_samples(&scaled)),
        ks: (!inconclusive).then(|| ks_one_sample(&scaled, |x| 1.0 - (-x / b).exp())),
        scaled,
        inconclusive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsbpParams {
    pub m: f64,
    pub gamma: f64,
    pub c: f64,
}

impl CsbpParams {
    pub fn new(m: f64, gamma: f64, c: f64) -> Result<Self> {
        check_domain("m", m, m.is_finite(), "finite")?;
        check_domain("gamma", gamma, gamma > 0.0 && gamma.is_finite(), "(0, inf)")?;
        check_domain("c", c, c >= 0.0 && c.is_finite(), "[0, inf)")?;
        Ok(Self { m, gamma, c })
    }

    /// Stationary gamma law `(shape, rate)` of the subcritical process with
    /// immigration.
    pub fn stationary_gamma(&self) -> Option<(f64, f64)> {
        (self.m < 0.0 && self.c > 0.0).then(|| (self.c / self.gamma, -self.m / self.gamma))
    }

    fn step(&self, x: f64, dt: f64, dw: f64) -> f64 {
        let xp = x.max(0.0);
        let next = x + (self.m * xp + self.c) * dt + (2.0 * self.gamma * xp).sqrt() * dw;
        if self.c == 0.0 && next <= 0.0 {
            0.0
        } else {
            next
        }
    }
}

/// Euler–Maruyama path with full truncation; without immigration the state
/// is absorbed at 0.
pub fn csbp_simulate<R: Rng + ?Sized>(
    p: &CsbpParams,
    x0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    check_domain("x0", x0, x0 >= 0.0, "[0, inf)")?;
    let mut tr = Trajectory::new(&["X"]);
    let mut x = x0;
    tr.push(0.0, vec![x]);
    for i in 0..step_count(horizon, dt) {
        let t = i as f64 * dt;
        let h = dt.min(horizon - t);
        let z: f64 = StandardNormal.sample(rng);
        x = p.step(x, h, z * h.sqrt());
        tr.push(t + h, vec![x]);
    }
    Ok(tr)
}

/// Value at `T` of the same scheme, without storing the path.
pub fn csbp_final<R: Rng + ?Sized>(p: &CsbpParams, x0: f64, horizon: f64, dt: f64, rng: &mut R) -> f64 {
    let mut x = x0;
    for i in 0..step_count(horizon, dt) {
        if p.c == 0.0 && x <= 0.0 {
            return 0.0;
        }
        let h = dt.min(horizon - i as f64 * dt);
        let z: f64 = StandardNormal.sample(rng);
        x = p.step(x, h, z * h.sqrt());
    }
    x
}

/// Final values for step sizes `dt0, dt0/2, ..., dt0/2^(levels-1)` driven by
/// one Brownian path, so differences between levels reflect the scheme and
/// not sampling noise. `horizon` must be a multiple of `dt0`.
pub fn csbp_coupled_ladder<R: Rng + ?Sized>(
    p: &CsbpParams,
    x0: f64,
    horizon: f64,
    dt0: f64,
    levels: usize,
    rng: &mut R,
) -> Vec<f64> {
    let fine_per_coarse = 1usize << (levels - 1);
    let fine_dt = dt0 / fine_per_coarse as f64;
    let coarse_steps = (horizon / dt0).round() as usize;
    let mut state = vec![x0; levels];
    let mut acc = vec![0.0; levels];
    let sd = fine_dt.sqrt();
    for k in 0..coarse_steps * fine_per_coarse {
        if p.c == 0.0 && state.iter().all(|&x| x <= 0.0) {
            break;
        }
        let z: f64 = StandardNormal.sample(rng);
        // level l steps once every 2^(levels-1-l) fine increments
        for l in 0..levels {
            acc[l] += z * sd;
            let stride = 1usize << (levels - 1 - l);
            if (k + 1) % stride == 0 {
                state[l] = p.step(state[l], fine_dt * stride as f64, acc[l]);
                acc[l] = 0.0;
            }
        }
    }
    state
}

/// `u(theta, t)` with `E_x exp(-theta X_t) = exp(-x u)` for `c = 0`.
/// `theta = inf` gives the extinction exponent.
pub fn csbp_laplace_exponent(p: &CsbpParams, theta: f64, t: f64) -> f64 {
    let a = p.m * t;
    let growth = a.exp();
    let phi = expm1_over(a);
    if theta.is_infinite() {
        return growth / (p.gamma * t * phi);
    }
    theta * growth / (1.0 + p.gamma * theta * t * phi)
}

fn expm1_over(a: f64) -> f64 {
    if a.abs() < SERIES_SWITCH {
        1.0 + a / 2.0 + a * a / 6.0
    } else {
        a.exp_m1() / a
    }
}

/// `E_{x0} exp(-theta X_t)`, including the immigration factor
/// `(1 + gamma theta t phi(mt))^{-c/gamma}` with `phi(a) = (e^a - 1)/a`.
pub fn csbp_laplace(p: &CsbpParams, x0: f64, theta: f64, t: f64) -> Result<f64> {
    check_domain("theta", theta, theta >= 0.0, "[0, inf]")?;
    check_domain("t", t, t >= 0.0, "[0, inf)")?;
    if t == 0.0 {
        return Ok((-theta * x0).exp());
    }
    let u = csbp_laplace_exponent(p, theta, t);
    let mut log = -x0 * u;
    if p.c > 0.0 {
        if theta.is_infinite() {
            return Ok(0.0);
        }
        log -= p.c / p.gamma * (p.gamma * theta * t * expm1_over(p.m * t)).ln_1p();
    }
    Ok(log.exp())
}

/// `P_{x0}(X_t = 0)` without immigration.
pub fn csbp_extinction_probability(p: &CsbpParams, x0: f64, t: f64) -> f64 {
    (-x0 * csbp_laplace_exponent(p, f64::INFINITY, t)).exp()
}

/// Central-difference residual of `du/dt = m u - gamma u^2`.
pub fn csbp_riccati_residual(p: &CsbpParams, theta: f64, t: f64, h: f64) -> f64 {
    let du = (csbp_laplace_exponent(p, theta, t + h) - csbp_laplace_exponent(p, theta, t - h)) / (2.0 * h);
    let u = csbp_laplace_exponent(p, theta, t);
    du - (p.m * u - p.gamma * u * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::stats::{chi_square_gof, two_sample_z};
    use proptest::prelude::*;

    #[test]
    fn gillespie_absorbing_zero() {
        let p = BdParams::new(1.0, 1.0).unwrap();
        let path = bd_gillespie(&p, 0, 10.0, &mut RngStream::new(1, 0));
        assert_eq!(path.states, vec![0]);
        assert_eq!(path.value_at(5.0), 0);
    }

    #[test]
    fn yule_mean() {
        let p = BdParams::new(1.0, 0.0).unwrap();
        let ens = EnsembleSpec::new(2, 50_000);
        let x: Vec<f64> = ens.run(|_, r| bd_state_at(&p, 3, 1.0, r).unwrap() as f64);
        let est = Estimate::from_samples(&x);
        assert!(est.z_score(3.0 * 1f64.exp()).abs() < 3.5, "{est:?}");
    }

    #[test]
    fn critical_extinction_half() {
        let p = BdParams::new(1.0, 1.0).unwrap();
        let ens = EnsembleSpec::new(3, 50_000);
        let dead: Vec<bool> = ens.run(|_, r| bd_state_at(&p, 1, 1.0, r).unwrap() == 0);
        let est = Estimate::proportion(dead.iter().filter(|&&d| d).count(), dead.len());
        assert!(est.z_score(0.5).abs() < 3.5, "{est:?}");
    }

    #[test]
    fn path_matches_state_at() {
        let p = BdParams::new(1.5, 1.0).unwrap();
        let path = bd_gillespie(&p, 2, 3.0, &mut RngStream::new(9, 4));
        let x = bd_state_at(&p, 2, 3.0, &mut RngStream::new(9, 4)).unwrap();
        assert_eq!(path.final_state(), x);
        assert!(path.times.windows(2).all(|w| w[0] < w[1]));
        assert!(path.states.windows(2).all(|w| w[0].abs_diff(w[1]) == 1));
    }

    #[test]
    fn law_examples() {
        let p = BdParams::new(2.0, 1.0).unwrap();
        let start = bd_law(&p, 0.0, 100).unwrap();
        assert_eq!((start.pmf, start.tail), (vec![0.0, 1.0], 0.0));
        let late = bd_law(&p, 40.0, 10).unwrap().pmf;
        assert!((late[0] - 0.5).abs() < 1e-12);
        let c = bd_law(&BdParams::new(1.0, 1.0).unwrap(), 1.0, 1000).unwrap().pmf;
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn law_sums_to_one() {
        for &(b, d) in &[(2.0, 1.0), (1.0, 2.0), (3.0, 3.0), (5.0, 0.5), (0.0, 1.0), (1.0, 0.0)] {
            let p = BdParams::new(b, d).unwrap();
            for &t in &[0.1, 1.0, 3.0, 10.0] {
                let s = bd_law(&p, t, 100_000).unwrap().total();
                assert!((s - 1.0).abs() < 1e-10, "b={b} d={d} t={t}: {s}");
            }
        }
    }

    #[test]
    fn law_matches_gillespie() {
        let p = BdParams::new(2.0, 1.0).unwrap();
        let law = bd_law(&p, 1.0, 10_000).unwrap().pmf;
        let ens = EnsembleSpec::new(4, 40_000);
        let x = ens.run(|_, r| bd_state_at(&p, 1, 1.0, r).unwrap());
        let mut counts = vec![0u64; law.len()];
        for v in x {
            let i = (v as usize).min(law.len() - 1);
            counts[i] += 1;
        }
        let test = chi_square_gof(&counts, &law, 5.0);
        assert!(test.p_value > 0.001, "{test:?}");
    }

    #[test]
    fn laplace_examples() {
        let p = BdParams::new(1.0, 1.0).unwrap();
        assert_eq!(bd_laplace(&p, 3, 0.0, 2.0).unwrap(), 1.0);
        assert!((bd_laplace(&p, 3, 0.7, 0.0).unwrap() - (-2.1f64).exp()).abs() < 1e-14);
        let s = (-1f64).exp();
        let v = bd_laplace(&p, 1, 1.0, 1.0).unwrap();
        assert!((v - 1.0 / (1.0 - (s - 1.0))).abs() < 1e-15);
        let q = BdParams::new(2.0, 1.0).unwrap();
        assert!((bd_laplace(&q, 2, 0.3, 0.0).unwrap() - (-0.6f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn laplace_matches_mc() {
        let p = BdParams::new(1.0, 1.0).unwrap();
        let ens = EnsembleSpec::new(5, 40_000);
        let v: Vec<f64> = ens.run(|_, r| (-(bd_state_at(&p, 1, 1.0, r).unwrap() as f64)).exp());
        let est = Estimate::from_samples(&v);
        assert!(est.z_score(bd_laplace(&p, 1, 1.0, 1.0).unwrap()).abs() < 3.5);
    }

    #[test]
    fn laplace_pgf_and_mean() {
        for &(b, d) in &[(2.0, 1.0), (1.0, 1.0), (0.5, 1.5)] {
            let p = BdParams::new(b, d).unwrap();
            let law = bd_law(&p, 1.3, 100_000).unwrap().pmf;
            let s: f64 = 0.4;
            let direct: f64 = law.iter().enumerate().map(|(n, q)| q * s.powi(n as i32)).sum();
            assert!((bd_laplace(&p, 1, -s.ln(), 1.3).unwrap() - direct).abs() < 1e-12);
            let h = 1e-5;
            let l = |th: f64| bd_laplace(&p, 2, th, 1.3).unwrap();
            let mean = (3.0 * l(0.0) - 4.0 * l(h) + l(2.0 * h)) / (2.0 * h);
            assert!((mean - bd_moments(&p, 2, 1.3).0).abs() < 1e-6, "{mean}");
        }
    }

    #[test]
    fn moments_examples() {
        let p = BdParams::new(2.0, 1.0).unwrap();
        assert_eq!(bd_moments(&p, 3, 0.0), (3.0, 9.0));
        let (m, _) = bd_moments(&p, 1, 1.0);
        assert!((m - 1f64.exp()).abs() < 1e-15);
        let c = BdParams::new(1.5, 1.5).unwrap();
        let (m, s) = bd_moments(&c, 2, 2.0);
        assert!((s - m * m - 2.0 * 1.5 * 2.0 * 2.0).abs() < 1e-12);
        let ens = EnsembleSpec::new(6, 40_000);
        let x: Vec<f64> = ens.run(|_, r| bd_state_at(&p, 1, 1.0, r).unwrap() as f64);
        assert!(Estimate::from_samples(&x).z_score(1f64.exp()).abs() < 3.5);
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!(Estimate::from_samples(&sq).z_score(bd_moments(&p, 1, 1.0).1).abs() < 3.5);
    }

    #[test]
    fn conditioned_limit_small() {
        let ens = EnsembleSpec::new(7, 100_000);
        let r = critical_bd_conditioned_limit(1.0, 20.0, &ens).unwrap();
        assert!(r.survival.z_score(1.0 / 21.0).abs() < 3.5);
        let cm = r.conditional_mean.unwrap();
        // exact conditional mean of X_t / t is (1 + bt) / t
        assert!(cm.z_score(21.0 / 20.0).abs() < 3.5);
        assert!(r.ks.unwrap() < 0.06);
    }

    #[test]
    fn csbp_zero_stays_zero() {
        let p = CsbpParams::new(0.5, 1.0, 0.0).unwrap();
        let tr = csbp_simulate(&p, 0.0, 1.0, 0.01, &mut RngStream::new(1, 0)).unwrap();
        assert!(tr.component(0).iter().all(|&x| x == 0.0));
        assert!(csbp_simulate(&p, 1.0, 1.0, 0.0, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn csbp_mean_with_immigration() {
        let p = CsbpParams::new(-0.5, 1.0, 0.8).unwrap();
        let ens = EnsembleSpec::new(8, 20_000);
        let x: Vec<f64> = ens.run(|_, r| csbp_final(&p, 1.0, 2.0, 1e-3, r));
        let e = (-1f64).exp();
        let target = e + 0.8 * (1.0 - e) / 0.5;
        assert!(Estimate::from_samples(&x).z_score(target).abs() < 3.5);
    }

    #[test]
    fn csbp_gamma_equilibrium() {
        let p = CsbpParams::new(-1.0, 1.0, 2.0).unwrap();
        let (shape, rate) = p.stationary_gamma().unwrap();
        let ens = EnsembleSpec::new(9, 5_000);
        let x: Vec<f64> = ens.run(|_, r| csbp_final(&p, 1.0, 10.0, 1e-3, r));
        let law = statrs::distribution::Gamma::new(shape, rate).unwrap();
        use statrs::distribution::ContinuousCDF;
        let ks = ks_one_sample(&x, |v| law.cdf(v.max(0.0)));
        assert!(ks < 1.95 / (x.len() as f64).sqrt(), "{ks}");
    }

    #[test]
    fn csbp_laplace_examples() {
        let p = CsbpParams::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(csbp_laplace(&p, 1.0, 0.0, 1.0).unwrap(), 1.0);
        assert!((csbp_laplace(&p, 1.0, f64::INFINITY, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((csbp_laplace(&p, 1.0, 1e12, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-11);
        let q = CsbpParams::new(1.0, 1.0, 0.0).unwrap();
        let e = 1f64.exp();
        let v = csbp_laplace(&q, 1.0, 1.0, 1.0).unwrap();
        assert!((v - (-e / (1.0 + (e - 1.0))).exp()).abs() < 1e-15);
    }

    #[test]
    fn csbp_laplace_continuous_in_m() {
        for &m in &[1e-9, -1e-9, 1e-7, 2e-6, -2e-6] {
            let a = csbp_laplace_exponent(&CsbpParams::new(m, 0.7, 0.0).unwrap(), 1.3, 2.0);
            let b = csbp_laplace_exponent(&CsbpParams::new(0.0, 0.7, 0.0).unwrap(), 1.3, 2.0);
            assert!((a - b).abs() < 1e-5, "m={m}: {a} vs {b}");
        }
    }

    #[test]
    fn csbp_laplace_matches_mc() {
        let p = CsbpParams::new(0.3, 1.0, 0.5).unwrap();
        let ens = EnsembleSpec::new(10, 20_000);
        let v: Vec<f64> = ens.run(|_, r| (-csbp_final(&p, 1.0, 1.0, 1e-3, r)).exp());
        let target = csbp_laplace(&p, 1.0, 1.0, 1.0).unwrap();
        assert!(Estimate::from_samples(&v).z_score(target).abs() < 3.5);
    }

    #[test]
    fn coupled_ladder_matches_single_level() {
        let p = CsbpParams::new(0.0, 1.0, 0.0).unwrap();
        let ens = EnsembleSpec::new(11, 20_000);
        let ladder: Vec<Vec<f64>> = ens.run(|_, r| csbp_coupled_ladder(&p, 1.0, 1.0, 1.0 / 16.0, 3, r));
        let single: Vec<f64> = ens.derive(1).run(|_, r| csbp_final(&p, 1.0, 1.0, 1.0 / 64.0, r));
        let a: Vec<f64> = ladder.iter().map(|l| (l[2] == 0.0) as u8 as f64).collect();
        let b: Vec<f64> = single.iter().map(|&x| (x == 0.0) as u8 as f64).collect();
        let z = two_sample_z(&Estimate::from_samples(&a), &Estimate::from_samples(&b));
        assert!(z.abs() < 4.0, "{z}");
    }

    proptest! {
        #[test]
        fn riccati_residual_small(m in -2.0f64..2.0, gamma in 0.2f64..3.0, theta in 0.0f64..5.0, t in 0.1f64..3.0) {
            let p = CsbpParams::new(m, gamma, 0.0).unwrap();
            prop_assert!(csbp_riccati_residual(&p, theta, t, 1e-5).abs() < 1e-6);
        }

        #[test]
        fn bd_law_normalized(b in 0.0f64..5.0, d in 0.0f64..5.0, t in 0.0f64..10.0) {
            prop_assume!(b + d > 0.01);
            let law = bd_law(&BdParams::new(b, d).unwrap(), t, 100_000).unwrap();
            prop_assert!((law.total() - 1.0).abs() < 1e-10);
        }
    }
}
