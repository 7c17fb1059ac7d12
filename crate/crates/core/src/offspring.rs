//! Offspring laws and their probability generating functions.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_domain, Error, Result};

/// Tail mass below which named families are cut off before renormalizing.
pub const TRUNCATION_TAIL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Explicit,
    /// `p_k = a (1 - a)^k`, `k >= 0`.
    Geometric { success: f64 },
    Poisson { mean: f64 },
}

/// Probability law of the number of offspring of one individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    family: Family,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl OffspringLaw {
    /// Law with `P(k) = pmf[k]`. Trailing zeros are dropped.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        Self::build(Family::Explicit, pmf)
    }

    /// Geometric law `p_k = a (1 - a)^k` truncated where the tail drops
    /// below [`TRUNCATION_TAIL`].
    pub fn geometric(success: f64) -> Result<Self> {
        check_domain("success", success, success > 0.0 && success <= 1.0, "(0, 1]")?;
        let mut pmf = Vec::new();
        let mut tail = 1.0;
        let mut p = success;
        while tail >= TRUNCATION_TAIL && pmf.len() < 100_000 {
            pmf.push(p);
            tail -= p;
            p *= 1.0 - success;
            if success == 1.0 {
                break;
            }
        }
        let z: f64 = pmf.iter().sum();
        Self::build(
            Family::Geometric { success },
            pmf.into_iter().map(|x| x / z).collect(),
        )
    }

    /// `p_k = 2^{-(k+1)}`: mean 1, variance 2.
    pub fn geometric_half() -> Self {
        Self::geometric(0.5).expect("valid parameter")
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        check_domain("mean", mean, mean >= 0.0 && mean.is_finite(), "[0, inf)")?;
        let mut pmf = Vec::new();
        let mut p = (-mean).exp();
        let mut cum = 0.0;
        let mut k = 0usize;
        loop {
            pmf.push(p);
            cum += p;
            k += 1;
            // stop once past the mode with the remaining tail negligible
            if (k as f64 > mean && 1.0 - cum < TRUNCATION_TAIL) || k > 100_000 {
                break;
            }
            p *= mean / k as f64;
        }
        let z: f64 = pmf.iter().sum();
        Self::build(
            Family::Poisson { mean },
            pmf.into_iter().map(|x| x / z).collect(),
        )
    }

    fn build(family: Family, mut pmf: Vec<f64>) -> Result<Self> {
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Invalid("offspring probabilities must be finite and >= 0".into()));
        }
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        let total: f64 = pmf.iter().sum();
        if pmf.is_empty() || (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Invalid(format!(
                "offspring probabilities sum to {total}, not 1"
            )));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let second: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k) as f64 * p)
            .sum();
        let variance = (second - mean * mean).max(0.0);
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            family,
            pmf,
            cdf,
            mean,
            variance,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn max_offspring(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn p(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `(m, sigma^2)`.
    pub fn moments(&self) -> (f64, f64) {
        (self.mean, self.variance)
    }

    /// `f(s) = sum_k p_k s^k` by Horner's rule.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        check_domain("s", s, (0.0..=1.0).contains(&s), "[0, 1]")?;
        Ok(self.pgf_unchecked(s))
    }

    fn pgf_unchecked(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// `f'(s)`.
    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, p)| acc * s + k as f64 * p)
    }

    /// `f_n(s)`, the n-fold composition; `f_0(s) = s`.
    pub fn pgf_iterate(&self, n: usize, s: f64) -> Result<f64> {
        check_domain("s", s, (0.0..=1.0).contains(&s), "[0, 1]")?;
        Ok((0..n).fold(s, |acc, _| self.pgf_unchecked(acc)))
    }

    /// Smallest root of `f(s) = s` in `[0, 1]`.
    pub fn extinction_probability(&self) -> Result<f64> {
        if self.p(1) >= 1.0 {
            return Err(Error::Invalid(
                "p_1 = 1: every individual has exactly one child, extinction is degenerate".into(),
            ));
        }
        if self.p(0) == 0.0 {
            return Ok(0.0);
        }
        if self.mean <= 1.0 {
            return Ok(1.0);
        }
        // f(s) - s > 0 on [0, q), so the iterates increase to q
        let mut s = 0.0;
        for _ in 0..20_000 {
            let next = self.pgf_unchecked(s);
            if (next - s).abs() < 1e-15 {
                return Ok(next);
            }
            s = next;
        }
        // slow geometric convergence when f'(q) is close to 1
        let g = |x: f64| self.pgf_unchecked(x) - x;
        let mut hi = 1.0 - 1e-3;
        while g(hi) >= 0.0 {
            hi = 0.5 * (hi + 1.0);
            if 1.0 - hi < 1e-15 {
                return Err(Error::NoConvergence {
                    what: "extinction probability",
                    iterations: 20_000,
                });
            }
        }
        crate::numeric::bisect(g, s, hi, 1e-16, 1e-14, 200)
    }

    /// Size-biased law `k p_k / m`.
    pub fn size_biased(&self) -> Result<Self> {
        if self.mean <= 0.0 {
            return Err(Error::Invalid("size-biasing needs a positive mean".into()));
        }
        let pmf = self
            .pmf
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p / self.mean)
            .collect::<Vec<_>>();
        let z: f64 = pmf.iter().sum();
        Self::build(Family::Explicit, pmf.into_iter().map(|x| x / z).collect())
    }

    /// One draw by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        match self.cdf.iter().position(|&c| u < c) {
            Some(k) => k,
            None => self.max_offspring(),
        }
    }

    /// Total offspring of `parents` independent individuals.
    ///
    /// Small generations draw each individual; large ones draw the
    /// multinomial vector of family-size counts by conditional binomials.
    /// Both are exact.
    pub fn sample_total<R: Rng + ?Sized>(&self, parents: u64, rng: &mut R) -> u64 {
        if parents <= self.pmf.len() as u64 * 2 {
            return (0..parents).map(|_| self.sample(rng) as u64).sum();
        }
        let mut remaining = parents;
        let mut mass = 1.0;
        let mut total = 0u64;
        for (k, &p) in self.pmf.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let c = if k == self.pmf.len() - 1 || mass <= 0.0 {
                remaining
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(remaining, q).expect("valid binomial").sample(rng)
            };
            total = total.saturating_add(c.saturating_mul(k as u64));
            remaining -= c;
            mass -= p;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn law(p: &[f64]) -> OffspringLaw {
        OffspringLaw::from_pmf(p.to_vec()).unwrap()
    }

    #[test]
    fn pgf_examples() {
        assert_eq!(law(&[0.5, 0.0, 0.5]).pgf(0.0).unwrap(), 0.5);
        assert!((law(&[0.2, 0.3, 0.5]).pgf(1.0).unwrap() - 1.0).abs() < 1e-15);
        let g = OffspringLaw::geometric_half();
        assert!((g.pgf(0.5).unwrap() - 1.0 / 1.5).abs() < 1e-11);
    }

    #[test]
    fn pgf_domain() {
        let l = law(&[0.5, 0.5]);
        assert!(matches!(l.pgf(1.5), Err(Error::Domain { .. })));
        assert!(l.pgf(-0.1).is_err());
        assert!(l.pgf_iterate(3, 2.0).is_err());
    }

    #[test]
    fn iterate_examples() {
        let l = law(&[0.25, 0.25, 0.5]);
        assert_eq!(l.pgf_iterate(0, 0.3).unwrap(), 0.3);
        assert_eq!(l.pgf_iterate(1, 0.0).unwrap(), 0.25);
        assert!((l.pgf_iterate(2, 0.0).unwrap() - 11.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn extinction_examples() {
        assert_eq!(law(&[0.5, 0.0, 0.5]).extinction_probability().unwrap(), 1.0);
        let q = law(&[0.25, 0.25, 0.5]).extinction_probability().unwrap();
        assert!((q - 0.5).abs() < 1e-12);
        assert_eq!(law(&[0.0, 0.0, 1.0]).extinction_probability().unwrap(), 0.0);
        assert!(law(&[0.0, 1.0]).extinction_probability().is_err());
    }

    #[test]
    fn near_critical_uses_fallback() {
        // m = 1.0002: iteration converges at rate f'(q) ~ 0.9996
        let l = law(&[0.4999, 0.0, 0.5001]);
        let q = l.extinction_probability().unwrap();
        assert!((l.pgf(q).unwrap() - q).abs() < 1e-12);
        assert!((q - 0.4999 / 0.5001).abs() < 1e-9);
    }

    #[test]
    fn moments_examples() {
        assert_eq!(law(&[0.5, 0.0, 0.5]).moments(), (1.0, 1.0));
        assert_eq!(law(&[0.0, 1.0]).moments(), (1.0, 0.0));
        let (m, v) = OffspringLaw::geometric_half().moments();
        assert!((m - 1.0).abs() < 1e-9 && (v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn truncated_families_normalized() {
        for l in [
            OffspringLaw::geometric_half(),
            OffspringLaw::poisson(3.0).unwrap(),
            OffspringLaw::poisson(0.0).unwrap(),
        ] {
            assert!((l.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let p = OffspringLaw::poisson(2.0).unwrap();
        assert!((p.mean() - 2.0).abs() < 1e-10);
        assert!((p.variance() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_pmf() {
        assert!(OffspringLaw::from_pmf(vec![0.5, 0.4]).is_err());
        assert!(OffspringLaw::from_pmf(vec![-0.1, 1.1]).is_err());
        assert!(OffspringLaw::from_pmf(vec![]).is_err());
    }

    #[test]
    fn size_biased_examples() {
        assert_eq!(law(&[0.0, 1.0]).size_biased().unwrap().pmf(), &[0.0, 1.0]);
        assert_eq!(law(&[0.5, 0.0, 0.5]).size_biased().unwrap().pmf(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sample_total_mean_and_variance() {
        let l = law(&[0.2, 0.3, 0.1, 0.4]);
        let mut rng = RngStream::new(3, 0);
        for parents in [3u64, 500] {
            let reps = 20_000;
            let xs: Vec<f64> = (0..reps)
                .map(|_| l.sample_total(parents, &mut rng) as f64)
                .collect();
            let e = crate::stats::Estimate::from_samples(&xs);
            assert!(e.within(parents as f64 * l.mean(), 4.0, 0.0), "{e:?}");
            let var = xs.iter().map(|x| (x - e.mean).powi(2)).sum::<f64>() / reps as f64;
            let target = parents as f64 * l.variance();
            assert!((var / target - 1.0).abs() < 0.05, "{var} vs {target}");
        }
    }

    fn arb_law() -> impl Strategy<Value = OffspringLaw> {
        prop::collection::vec(0.01f64..1.0, 2..7).prop_map(|w| {
            let z: f64 = w.iter().sum();
            OffspringLaw::from_pmf(w.into_iter().map(|x| x / z).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn pgf_monotone_convex(l in arb_law(), s in prop::collection::vec(0.0f64..1.0, 3)) {
            let mut s = s;
            s.sort_by(f64::total_cmp);
            let h = 1e-3;
            for &x in &s {
                let x = x.min(1.0 - 2.0 * h);
                let (a, b, c) = (l.pgf(x).unwrap(), l.pgf(x + h).unwrap(), l.pgf(x + 2.0 * h).unwrap());
                prop_assert!(b >= a - 1e-15);
                prop_assert!(c - 2.0 * b + a >= -1e-10);
            }
        }

        #[test]
        fn extinction_is_fixed_point(l in arb_law(), n in 0usize..30) {
            let q = l.extinction_probability().unwrap();
            prop_assert!((l.pgf(q).unwrap() - q).abs() < 1e-12);
            prop_assert!((l.pgf_iterate(n, q).unwrap() - q).abs() < 1e-10);
            if (l.mean() - 1.0).abs() > 0.1 {
                prop_assert!((q - l.pgf_iterate(200, 0.0).unwrap()).abs() < 1e-6);
            }
        }

        #[test]
        fn iterates_at_zero_nondecreasing(l in arb_law()) {
            let mut prev = 0.0;
            for n in 0..50 {
                let v = l.pgf_iterate(n, 0.0).unwrap();
                prop_assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }
}
