//! Reed–Frost chain-binomial epidemic.

use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{check_domain, Error, Result};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReedFrostState {
    pub s: u64,
    pub i: u64,
    pub r: u64,
}

impl ReedFrostState {
    pub fn total(&self) -> u64 {
        self.s + self.i + self.r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicPath {
    pub states: Vec<ReedFrostState>,
}

impl EpidemicPath {
    /// Everyone ever infected, including the initial cases.
    pub fn final_size(&self) -> u64 {
        let last = self.states.last().expect("initial state recorded");
        last.r + last.i
    }

    pub fn generations(&self) -> usize {
        self.states.len() - 1
    }
}

/// `S' ~ Bin(S, e^{-lambda I / N})`, `I' = S - S'`, `R' = R + I`, from
/// `S = N - I0` until no one is infectious.
pub fn reed_frost_simulate<R: Rng + ?Sized>(n: u64, lambda: f64, i0: u64, rng: &mut R) -> Result<EpidemicPath> {
    check_domain("lambda", lambda, lambda >= 0.0 && lambda.is_finite(), "[0, inf)")?;
    if i0 == 0 || i0 > n {
        return Err(Error::Invalid(format!("need 1 <= I0 <= N, got I0 = {i0}, N = {n}")));
    }
    let mut st = ReedFrostState { s: n - i0, i: i0, r: 0 };
    let mut path = EpidemicPath { states: vec![st] };
    let escape_one = (-lambda / n as f64).exp();
    while st.i > 0 {
        let escape = escape_one.powf(st.i as f64);
        let s_next = if st.s == 0 {
            0
        } else {
            Binomial::new(st.s, escape).expect("valid probability").sample(rng)
        };
        st = ReedFrostState {
            s: s_next,
            i: st.s - s_next,
            r: st.r + st.i,
        };
        path.states.push(st);
    }
    Ok(path)
}

/// Final size only.
pub fn reed_frost_final_size<R: Rng + ?Sized>(n: u64, lambda: f64, i0: u64, rng: &mut R) -> Result<u64> {
    reed_frost_simulate(n, lambda, i0, rng).map(|p| p.final_size())
}

/// Final size above `sqrt(N)`.
pub fn is_large_outbreak(n: u64, final_size: u64) -> bool {
    final_size as f64 > (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub lambda: f64,
    pub large_outbreak: Estimate,
    pub mean_final_size: Estimate,
}

pub fn reed_frost_threshold_scan(n: u64, lambdas: &[f64], i0: u64, ens: &EnsembleSpec) -> Result<Vec<ThresholdRow>> {
    lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let sizes: Vec<Option<u64>> = ens.derive(k as u64).run(|_, r| reed_frost_final_size(n, lambda, i0, r).ok());
            let sizes: Vec<u64> = sizes.into_iter().collect::<Option<_>>().ok_or(Error::Invalid("bad epidemic".into()))?;
            let large = sizes.iter().filter(|&&s| is_large_outbreak(n, s)).count();
            let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
            Ok(ThresholdRow {
                lambda,
                large_outbreak: Estimate::proportion(large, sizes.len()),
                mean_final_size: Estimate::from_samples(&xs),
            })
        })
        .collect()
}

pub fn write_threshold_csv<W: Write>(rows: &[ThresholdRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "p_large", "p_large_se", "mean_final_size", "mean_final_size_se"])?;
    for r in rows {
        out.write_record([
            r.lambda.to_string(),
            r.large_outbreak.mean.to_string(),
            r.large_outbreak.se.to_string(),
            r.mean_final_size.mean.to_string(),
            r.mean_final_size.se.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
