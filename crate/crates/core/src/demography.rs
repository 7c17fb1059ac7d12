//! Age-structured growth: the Euler-Lotka characteristic equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Residual tolerance for an accepted Malthusian parameter.
pub const MALTHUS_TOL: f64 = 1e-10;

/// Birth intensity `m(s)` and lifetime CDF `L(s)` tabulated on an age grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeHistory {
    ages: Vec<f64>,
    birth_intensity: Vec<f64>,
    lifetime_cdf: Vec<f64>,
}

impl LifeHistory {
    pub fn new(ages: Vec<f64>, birth_intensity: Vec<f64>, lifetime_cdf: Vec<f64>) -> Result<Self> {
        if ages.len() < 2 || ages.len() != birth_intensity.len() || ages.len() != lifetime_cdf.len() {
            return Err(Error::Invalid(
                "age grid, birth intensity and lifetime CDF need equal length >= 2".into(),
            ));
        }
        if ages.windows(2).any(|w| w[1] <= w[0]) || ages[0] < 0.0 {
            return Err(Error::Invalid("age grid must be non-negative and strictly increasing".into()));
        }
        if birth_intensity.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Invalid("birth intensity must be >= 0".into()));
        }
        if lifetime_cdf.iter().any(|l| !(0.0..=1.0).contains(l))
            || lifetime_cdf.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::Invalid("lifetime CDF must be non-decreasing in [0, 1]".into()));
        }
        Ok(Self {
            ages,
            birth_intensity,
            lifetime_cdf,
        })
    }

    /// Tabulates `m` and `L` on `ages`.
    pub fn from_fns<M, L>(ages: Vec<f64>, m: M, l: L) -> Result<Self>
    where
        M: Fn(f64) -> f64,
        L: Fn(f64) -> f64,
    {
        let birth = ages.iter().map(|&s| m(s)).collect();
        let cdf = ages.iter().map(|&s| l(s)).collect();
        Self::new(ages, birth, cdf)
    }

    /// Uniform grid `0, h, 2h, ..., horizon`.
    pub fn uniform_grid(horizon: f64, h: f64) -> Vec<f64> {
        let n = (horizon / h).round() as usize;
        (0..=n).map(|i| i as f64 * h).collect()
    }

    fn reproductive_value(&self, i: usize) -> f64 {
        (1.0 - self.lifetime_cdf[i]) * self.birth_intensity[i]
    }

    /// `int_0^inf e^{-alpha s} (1 - L(s)) m(s) ds` by the trapezoid rule on
    /// the grid, plus the tail beyond the grid extrapolated with the
    /// exponential decay rate of the last grid interval.
    pub fn discounted_reproduction(&self, alpha: f64) -> f64 {
        let n = self.ages.len();
        let g = |i: usize| (-alpha * self.ages[i]).exp() * self.reproductive_value(i);
        let body: f64 = (1..n)
            .map(|i| 0.5 * (self.ages[i] - self.ages[i - 1]) * (g(i) + g(i - 1)))
            .sum();
        let last = self.reproductive_value(n - 1);
        if last == 0.0 {
            return body;
        }
        let prev = self.reproductive_value(n - 2);
        let decay = if prev > 0.0 {
            -(last / prev).ln() / (self.ages[n - 1] - self.ages[n - 2])
        } else {
            0.0
        };
        let rate = alpha + decay;
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        body + g(n - 1) / rate
    }

    /// `R_0 = int (1 - L) m ds`.
    pub fn net_reproduction(&self) -> f64 {
        self.discounted_reproduction(0.0)
    }

    pub fn euler_lotka_residual(&self, alpha: f64) -> f64 {
        self.discounted_reproduction(alpha) - 1.0
    }

    /// Malthusian parameter: the root `alpha >= 0` of the Euler-Lotka
    /// equation.
    pub fn solve_malthusian(&self) -> Result<f64> {
        let r0 = self.net_reproduction();
        if (r0 - 1.0).abs() <= MALTHUS_TOL {
            return Ok(0.0);
        }
        if r0 < 1.0 {
            return Err(Error::NoRoot(format!(
                "net reproduction {r0} <= 1: no positive Malthusian parameter"
            )));
        }
        let mut hi = 1.0;
        while self.euler_lotka_residual(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::NoRoot("could not bracket the Euler-Lotka root".into()));
            }
        }
        let alpha = bisect(
            |a| self.euler_lotka_residual(a),
            0.0,
            hi,
            0.0,
            MALTHUS_TOL * 0.1,
            400,
        )?;
        let res = self.euler_lotka_residual(alpha);
        if res.abs() >= MALTHUS_TOL {
            return Err(Error::NoConvergence {
                what: "Euler-Lotka bisection",
                iterations: 400,
            });
        }
        Ok(alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_lifetime_gives_b_minus_d() {
        let (b, d) = (1.5, 0.4);
        let lh = LifeHistory::from_fns(
            LifeHistory::uniform_grid(40.0, 1e-3),
            |_| b,
            |s| 1.0 - (-d * s).exp(),
        )
        .unwrap();
        let alpha = lh.solve_malthusian().unwrap();
        assert!((alpha - (b - d)).abs() < 1e-6, "{alpha}");
        assert!(lh.euler_lotka_residual(alpha).abs() < MALTHUS_TOL);
    }

    #[test]
    fn immortal_unit_birth_rate() {
        let lh = LifeHistory::from_fns(LifeHistory::uniform_grid(30.0, 1e-3), |_| 1.0, |_| 0.0)
            .unwrap();
        let alpha = lh.solve_malthusian().unwrap();
        assert!((alpha - 1.0).abs() < 1e-6, "{alpha}");
    }

    #[test]
    fn critical_net_reproduction() {
        // m falls linearly from 1 to 0 on [0, 2]: R0 = 1, exact for trapezoid
        let lh = LifeHistory::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0], vec![0.0; 3]).unwrap();
        assert_eq!(lh.solve_malthusian().unwrap(), 0.0);
    }

    #[test]
    fn subcritical_has_no_root() {
        let lh = LifeHistory::from_fns(
            LifeHistory::uniform_grid(40.0, 1e-2),
            |_| 0.5,
            |s| 1.0 - (-s).exp(),
        )
        .unwrap();
        assert!(matches!(lh.solve_malthusian(), Err(Error::NoRoot(_))));
    }

    #[test]
    fn invalid_histories() {
        assert!(LifeHistory::new(vec![0.0, 0.0], vec![1.0; 2], vec![0.0; 2]).is_err());
        assert!(LifeHistory::new(vec![0.0, 1.0], vec![1.0; 2], vec![0.5, 0.2]).is_err());
        assert!(LifeHistory::new(vec![0.0, 1.0], vec![-1.0, 1.0], vec![0.0; 2]).is_err());
    }
}
