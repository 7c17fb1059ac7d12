use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIMPLEX_TOL: f64 = 1e-9;

/// Frequency vector on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Invalid("empty frequency vector".into()));
        }
        if p.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Invalid("frequencies must be >= 0".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() >= SIMPLEX_TOL {
            return Err(Error::Invalid(format!("frequencies sum to {total}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Point mass on type `i` of `k`.
    pub fn vertex(k: usize, i: usize) -> Self {
        let mut p = vec![0.0; k];
        p[i] = 1.0;
        Self(p)
    }

    /// Two-type point `(p, 1 - p)`.
    pub fn two(p: f64) -> Result<Self> {
        Self::new(vec![p, 1.0 - p])
    }

    /// Clips negative entries to zero and divides by the sum.
    pub fn project(mut p: Vec<f64>) -> Result<Self> {
        for x in p.iter_mut() {
            if *x < 0.0 || x.is_nan() {
                *x = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::Invalid("cannot project a zero vector onto the simplex".into()));
        }
        p.iter_mut().for_each(|x| *x /= total);
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}
