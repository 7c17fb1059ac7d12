//! Seeded replicate ensembles.
//!
//! Replicate `i` always runs on stream `(seed, i)`, and results come back
//! in index order, so any reduction over the returned vector is independent
//! of how replicates were scheduled. With the `parallel` feature the
//! replicates are spread over the current rayon pool; without it they run
//! in a plain loop.

use serde::{Deserialize, Serialize};

use crate::rng::{mix_seed, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub reps: usize,
}

impl EnsembleSpec {
    pub fn new(seed: u64, reps: usize) -> Self {
        Self { seed, reps }
    }

    /// Independent ensemble for a named sub-experiment.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: mix_seed(self.seed, tag),
            reps: self.reps,
        }
    }

    pub fn with_reps(&self, reps: usize) -> Self {
        Self {
            seed: self.seed,
            reps,
        }
    }

    pub fn stream(&self, replicate: usize) -> RngStream {
        RngStream::new(self.seed, replicate as u64)
    }

    /// Runs `f` once per replicate with the default strategy for this build.
    pub fn run<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut RngStream) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            self.run_parallel(f)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.run_sequential(f)
        }
    }

    pub fn run_sequential<T, F>(&self, f: F) -> Vec<T>
    where
        F: Fn(usize, &mut RngStream) -> T,
    {
        (0..self.reps)
            .map(|i| {
                let mut rng = self.stream(i);
                f(i, &mut rng)
            })
            .collect()
    }

    #[cfg(feature = "parallel")]
    pub fn run_parallel<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut RngStream) -> T + Sync + Send,
    {
        use rayon::prelude::*;
        (0..self.reps)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.stream(i);
                f(i, &mut rng)
            })
            .collect()
    }
}

/// Number of worker threads the parallel strategy would use.
pub fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn empty_ensemble() {
        let e = EnsembleSpec::new(1, 0);
        let out: Vec<f64> = e.run(|_, rng| rng.random());
        assert!(out.is_empty());
    }

    #[test]
    fn strategies_agree_bitwise() {
        let e = EnsembleSpec::new(42, 500);
        let f = |i: usize, rng: &mut RngStream| -> f64 { i as f64 + rng.random::<f64>() };
        let a = e.run_sequential(f);
        let b = e.run(f);
        assert_eq!(a, b);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn pool_size_does_not_change_results() {
        let e = EnsembleSpec::new(9, 1000);
        let f = |_: usize, rng: &mut RngStream| -> u64 { rng.random::<u64>() };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| e.run_parallel(f));
        let eight = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| e.run_parallel(f));
        assert_eq!(one, eight);
    }

    #[test]
    fn derived_ensembles_differ() {
        let e = EnsembleSpec::new(5, 3);
        let a: Vec<u64> = e.derive(1).run(|_, r| r.random());
        let b: Vec<u64> = e.derive(2).run(|_, r| r.random());
        assert_ne!(a, b);
    }
}
