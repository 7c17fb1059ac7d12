//! Summary statistics and goodness-of-fit tests used by the validation
//! experiments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Fraction of `true` with the binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.se > 0.0 {
            d / self.se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY * d.signum()
        }
    }

    /// `|mean - target| <= k * se + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.se + slack
    }
}

/// z-score of the difference of two independent estimates.
pub fn two_sample_z(a: &Estimate, b: &Estimate) -> f64 {
    let se = (a.se * a.se + b.se * b.se).sqrt();
    let d = a.mean - b.mean;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `observed` counts against cell probabilities
/// `probs` (which should sum to one; any deficit is treated as an extra
/// cell with zero observations). Adjacent cells are pooled left to right
/// until each expected count reaches `min_expected`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let mut exp: Vec<f64> = probs.iter().map(|p| p * n).collect();
    let deficit = 1.0 - probs.iter().sum::<f64>();
    if deficit * n > 1e-9 {
        obs.push(0.0);
        exp.push(deficit * n);
    }
    chi_square_counts(&obs, &exp, min_expected)
}

/// Pearson statistic for observed vs expected counts with pooling.
pub fn chi_square_counts(observed: &[f64], expected: &[f64], min_expected: f64) -> ChiSquareTest {
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            pooled.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => pooled.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = pooled
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = pooled.len().saturating_sub(1);
    let p_value = chi_square_sf(statistic, dof);
    ChiSquareTest {
        statistic,
        dof,
        p_value,
    }
}

pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN)
}

/// One-sample Kolmogorov-Smirnov distance between the empirical law of
/// `data` and a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> f64 {
    let mut xs = data.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // ties share one jump of the empirical CDF
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Equal-width histogram on `[lo, hi]`; values outside are clamped into the
/// end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0);
        Self {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    pub fn from_samples(lo: f64, hi: f64, bins: usize, xs: &[f64]) -> Self {
        let mut h = Self::new(lo, hi, bins);
        for &x in xs {
            h.add(x);
        }
        h
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins())
            .map(|i| self.lo + i as f64 * self.width())
            .collect()
    }

    pub fn add(&mut self, x: f64) {
        let b = ((x - self.lo) / self.width()).floor();
        let b = if b.is_nan() {
            return;
        } else {
            (b.max(0.0) as usize).min(self.bins() - 1)
        };
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Goodness of fit against a CDF on `[lo, hi]`.
    pub fn chi_square_vs_cdf<F: Fn(f64) -> f64>(&self, cdf: F) -> ChiSquareTest {
        let edges = self.edges();
        let mut probs: Vec<f64> = edges.windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect();
        // clamped tails belong to the end bins
        probs[0] += cdf(self.lo);
        let last = probs.len() - 1;
        probs[last] += 1.0 - cdf(self.hi);
        chi_square_gof(&self.counts, &probs, 5.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constants() {
        let e = Estimate::from_samples(&[2.0, 2.0, 2.0]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.se, 0.0);
        assert_eq!(e.z_score(2.0), 0.0);
    }

    #[test]
    fn proportion_se() {
        let e = Estimate::proportion(25, 100);
        assert!((e.se - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let t = chi_square_gof(&[25, 25, 50], &[0.25, 0.25, 0.5], 5.0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_pools_sparse_cells() {
        let t = chi_square_gof(&[50, 48, 1, 1], &[0.5, 0.48, 0.01, 0.01], 5.0);
        // the two sparse cells fold into the second one
        assert_eq!(t.dof, 1);
    }

    #[test]
    fn chi_square_known_value() {
        // statistic 3.84146 at 1 dof is the 5% point
        let p = chi_square_sf(3.841_458_820_694_124, 1);
        assert!((p - 0.05).abs() < 1e-9);
    }

    #[test]
    fn ks_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn ks_two_sample_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]), 1.0);
    }

    #[test]
    fn histogram_clamps() {
        let h = Histogram::from_samples(0.0, 1.0, 4, &[-1.0, 0.1, 0.3, 0.99, 2.0]);
        assert_eq!(h.counts, vec![2, 1, 0, 2]);
    }
}
