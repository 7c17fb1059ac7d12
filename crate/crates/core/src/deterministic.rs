//! Infinite-population ODE models: logistic growth, two-species
//! Lotka-Volterra competition, SIR, and the mutation-selection replicator
//! equation with Fisher's fundamental theorem diagnostics.
//!
//! All integrators are fixed-step RK4 so trajectories are reproducible bit
//! for bit.

use serde::{Deserialize, Serialize};

use crate::error::{check_domain, Error, Result};
use crate::numeric::{rk4_step, step_count, Matrix};
pub use crate::simplex::SimplexPoint;
pub use crate::trajectory::Trajectory as OdeTrajectory;

/// Threshold on `2 Var_p(V)` below which the Fisher comparison is skipped:
/// the finite-difference derivative is then dominated by rounding.
pub const FISHER_VAR_FLOOR: f64 = 1e-6;
const BLOWUP: f64 = 1e12;
const SIMPLEX_ABORT: f64 = 1e-6;

/// `x(t) = N x0 e^{at} / (N + x0 (e^{at} - 1))` on `grid`.
pub fn logistic_solve(alpha: f64, capacity: f64, x0: f64, grid: &[f64]) -> Result<OdeTrajectory> {
    check_domain("N", capacity, capacity > 0.0, "(0, inf)")?;
    check_domain("x0", x0, x0 >= 0.0, "[0, inf)")?;
    check_domain("alpha", alpha, alpha >= 0.0, "[0, inf)")?;
    let mut tr = OdeTrajectory::new(&["x"]);
    for &t in grid {
        let g = (alpha * t).exp();
        let x = if x0 == 0.0 {
            0.0
        } else if g.is_infinite() {
            capacity
        } else {
            capacity * x0 * g / (capacity + x0 * (g - 1.0))
        };
        tr.push(t, vec![x]);
    }
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LotkaVolterra {
    pub r: [f64; 2],
    pub k: [f64; 2],
    pub a12: f64,
    pub a21: f64,
}

impl LotkaVolterra {
    fn rhs(&self, x: &[f64]) -> Vec<f64> {
        vec![
            self.r[0] * x[0] * (1.0 - x[0] / self.k[0] - self.a12 * x[1] / self.k[0]),
            self.r[1] * x[1] * (1.0 - x[1] / self.k[1] - self.a21 * x[0] / self.k[1]),
        ]
    }

    /// `1/a21 > K1/K2 > a12`.
    pub fn coexistence(&self) -> bool {
        let ratio = self.k[0] / self.k[1];
        let upper = if self.a21 > 0.0 {
            1.0 / self.a21
        } else {
            f64::INFINITY
        };
        upper > ratio && ratio > self.a12
    }

    /// Interior equilibrium when the linear system is non-singular.
    pub fn interior_fixed_point(&self) -> Option<[f64; 2]> {
        let det = 1.0 - self.a12 * self.a21;
        if det.abs() < 1e-14 {
            return None;
        }
        Some([
            (self.k[0] - self.a12 * self.k[1]) / det,
            (self.k[1] - self.a21 * self.k[0]) / det,
        ])
    }
}

pub fn lotka_volterra_integrate(
    lv: &LotkaVolterra,
    x0: [f64; 2],
    tmax: f64,
    dt: f64,
) -> Result<(OdeTrajectory, bool)> {
    if lv.r.iter().chain(&lv.k).any(|v| !(*v > 0.0)) || lv.a12 < 0.0 || lv.a21 < 0.0 {
        return Err(Error::Invalid("Lotka-Volterra rates and capacities must be positive".into()));
    }
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    let f = |_t: f64, x: &[f64]| lv.rhs(x);
    let mut tr = OdeTrajectory::new(&["x1", "x2"]);
    let mut x = x0.to_vec();
    tr.push(0.0, x.clone());
    for i in 0..step_count(tmax, dt) {
        let t = i as f64 * dt;
        let h = dt.min(tmax - t);
        x = rk4_step(&f, t, &x, h);
        if let Some(big) = x.iter().find(|v| !v.is_finite() || v.abs() > BLOWUP) {
            return Err(Error::BlowUp {
                t: t + h,
                value: *big,
            });
        }
        tr.push(t + h, x.clone());
    }
    Ok((tr, lv.coexistence()))
}

/// SIR run: trajectory over `(S, I, R)` plus `R0 = beta S(0) / gamma`.
pub fn sir_integrate(
    beta: f64,
    gamma: f64,
    s0: f64,
    i0: f64,
    tmax: f64,
    dt: f64,
) -> Result<(OdeTrajectory, f64)> {
    check_domain("beta", beta, beta >= 0.0, "[0, inf)")?;
    check_domain("gamma", gamma, gamma > 0.0, "(0, inf)")?;
    check_domain("S0", s0, s0 >= 0.0, "[0, inf)")?;
    check_domain("I0", i0, i0 >= 0.0, "[0, inf)")?;
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    let f = |_t: f64, y: &[f64]| {
        let inf = beta * y[0] * y[1];
        vec![-inf, inf - gamma * y[1], gamma * y[1]]
    };
    let mut tr = OdeTrajectory::new(&["S", "I", "R"]);
    let mut y = vec![s0, i0, 0.0];
    tr.push(0.0, y.clone());
    for i in 0..step_count(tmax, dt) {
        let t = i as f64 * dt;
        let h = dt.min(tmax - t);
        y = rk4_step(&f, t, &y, h);
        tr.push(t + h, y.clone());
    }
    Ok((tr, beta * s0 / gamma))
}

/// Fitness matrix with optional mutation.
///
/// The mutation term is `m (sum_j q_ji p_j - p_i)` with a row-stochastic
/// kernel `q`; the usual convention leaves the diagonal at zero, and a
/// kernel with identical rows (diagonal included) is type-independent
/// house-of-cards mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSpec {
    pub v: Matrix,
    pub mutation_rate: f64,
    pub mutation_kernel: Option<Matrix>,
}

impl FitnessSpec {
    pub fn diploid(v: Matrix) -> Result<Self> {
        if !v.is_symmetric(1e-12) {
            return Err(Error::Invalid("fitness matrix must be square and symmetric".into()));
        }
        Ok(Self {
            v,
            mutation_rate: 0.0,
            mutation_kernel: None,
        })
    }

    /// Haploid fitnesses embedded additively, `V(i,j) = v_i + v_j`, which
    /// makes the replicator field `p_i (v_i - v_bar)`.
    pub fn haploid(v: &[f64]) -> Self {
        let k = v.len();
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(i, j)] = v[i] + v[j];
            }
        }
        Self {
            v: m,
            mutation_rate: 0.0,
            mutation_kernel: None,
        }
    }

    pub fn with_mutation(mut self, rate: f64, kernel: Matrix) -> Result<Self> {
        check_domain("mutation rate", rate, rate >= 0.0, "[0, inf)")?;
        let k = self.types();
        if kernel.rows() != k || kernel.cols() != k {
            return Err(Error::Invalid("mutation kernel has the wrong shape".into()));
        }
        for j in 0..k {
            let row = kernel.row(j);
            if row.iter().any(|&x| x < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!("mutation kernel row {j} is not a distribution")));
            }
        }
        self.mutation_rate = rate;
        self.mutation_kernel = Some(kernel);
        Ok(self)
    }

    /// Type-independent mutation toward `target`: every row equals `target`.
    pub fn with_house_of_cards(self, rate: f64, target: &[f64]) -> Result<Self> {
        let rows = vec![target.to_vec(); self.types()];
        self.with_mutation(rate, Matrix::from_rows(&rows)?)
    }

    pub fn types(&self) -> usize {
        self.v.rows()
    }

    /// `V(i) = sum_j V(i,j) p_j`.
    pub fn marginal_fitness(&self, p: &[f64]) -> Vec<f64> {
        self.v.mul_vec(p)
    }

    pub fn mean_fitness(&self, p: &[f64]) -> f64 {
        self.marginal_fitness(p).iter().zip(p).map(|(v, q)| v * q).sum()
    }

    /// `Var_p(V) = sum_i p_i (V(i) - V_bar)^2`.
    pub fn fitness_variance(&self, p: &[f64]) -> f64 {
        let vi = self.marginal_fitness(p);
        let vbar: f64 = vi.iter().zip(p).map(|(v, q)| v * q).sum();
        vi.iter().zip(p).map(|(v, q)| q * (v - vbar).powi(2)).sum()
    }

    /// Replicator vector field with mutation.
    pub fn replicator_field(&self, p: &[f64]) -> Vec<f64> {
        let vi = self.marginal_fitness(p);
        let vbar: f64 = vi.iter().zip(p).map(|(v, q)| v * q).sum();
        let mut dp: Vec<f64> = p.iter().zip(&vi).map(|(q, v)| q * (v - vbar)).collect();
        if let (Some(kernel), m) = (&self.mutation_kernel, self.mutation_rate) {
            if m > 0.0 {
                let inflow = kernel.vec_mul(p);
                for i in 0..p.len() {
                    dp[i] += m * (inflow[i] - p[i]);
                }
            }
        }
        dp
    }

    /// House-of-cards target when every kernel row is identical.
    pub fn type_independent_target(&self) -> Option<Vec<f64>> {
        let kernel = self.mutation_kernel.as_ref()?;
        let first = kernel.row(0);
        (1..kernel.rows())
            .all(|j| kernel.row(j).iter().zip(first).all(|(a, b)| (a - b).abs() < 1e-14))
            .then(|| first.to_vec())
    }

    /// Lyapunov potential `V_bar + 2 m sum_i q_i ln p_i` of the
    /// mutation-selection flow under type-independent mutation; the flow is
    /// half its Shahshahani gradient.
    pub fn mutation_selection_potential(&self, p: &[f64]) -> Option<f64> {
        let q = self.type_independent_target()?;
        let entropy: f64 = q
            .iter()
            .zip(p)
            .map(|(qi, pi)| if *qi > 0.0 { qi * pi.ln() } else { 0.0 })
            .sum();
        Some(self.mean_fitness(p) + 2.0 * self.mutation_rate * entropy)
    }
}

/// Shahshahani gradient `(grad_g F)_i = p_i (dF/dp_i - sum_j p_j dF/dp_j)`
/// from the Euclidean gradient of `F`.
pub fn shahshahani_gradient(p: &SimplexPoint, euclidean_grad: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = p.as_slice().iter().position(|&x| x <= 0.0) {
        return Err(Error::Boundary { index: i });
    }
    let avg: f64 = p.as_slice().iter().zip(euclidean_grad).map(|(a, b)| a * b).sum();
    Ok(p.as_slice()
        .iter()
        .zip(euclidean_grad)
        .map(|(pi, g)| pi * (g - avg))
        .collect())
}

/// Half the Shahshahani gradient of mean fitness; equals the selection
/// field `p_i (V(i) - V_bar)`.
pub fn selection_gradient(fit: &FitnessSpec, p: &SimplexPoint) -> Result<Vec<f64>> {
    // dV_bar/dp_i = 2 V(i) for symmetric V
    let grad: Vec<f64> = fit.marginal_fitness(p.as_slice()).iter().map(|v| 2.0 * v).collect();
    Ok(shahshahani_gradient(p, &grad)?.into_iter().map(|g| 0.5 * g).collect())
}

/// Fisher's fundamental theorem check along a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherDiagnostic {
    /// Smallest central-difference `dV_bar/dt` on the grid.
    pub min_rate: f64,
    /// Largest `|dV_bar/dt - 2 Var| / (2 Var)` where `2 Var >= FISHER_VAR_FLOOR`.
    pub max_relative_error: f64,
    pub points_compared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatorRun {
    pub trajectory: OdeTrajectory,
    pub fisher: FisherDiagnostic,
}

/// RK4 on the replicator equation, projecting onto the simplex after each
/// step. Records `mean_fitness` and `fitness_variance` (and `potential`
/// for type-independent mutation).
pub fn replicator_integrate(
    fit: &FitnessSpec,
    p0: &SimplexPoint,
    tmax: f64,
    dt: f64,
) -> Result<ReplicatorRun> {
    if p0.dim() != fit.types() {
        return Err(Error::Invalid("initial point and fitness matrix disagree on K".into()));
    }
    check_domain("dt", dt, dt > 0.0, "(0, inf)")?;
    let names: Vec<String> = (1..=fit.types()).map(|i| format!("p{i}")).collect();
    let mut tr = OdeTrajectory::new(&names);
    let f = |_t: f64, p: &[f64]| fit.replicator_field(p);
    let mut p = p0.as_slice().to_vec();
    tr.push(0.0, p.clone());
    for i in 0..step_count(tmax, dt) {
        let t = i as f64 * dt;
        let h = dt.min(tmax - t);
        let next = rk4_step(&f, t, &p, h);
        let violation = next
            .iter()
            .map(|&x| (-x).max(0.0))
            .fold((next.iter().sum::<f64>() - 1.0).abs(), f64::max);
        if violation > SIMPLEX_ABORT {
            return Err(Error::SimplexViolation { violation });
        }
        p = SimplexPoint::project(next)?.into_vec();
        tr.push(t + h, p.clone());
    }
    let vbar: Vec<f64> = tr.states.iter().map(|s| fit.mean_fitness(s)).collect();
    let var: Vec<f64> = tr.states.iter().map(|s| fit.fitness_variance(s)).collect();
    let fisher = fisher_diagnostic(&tr.times, &vbar, &var);
    tr.add_series("mean_fitness", vbar);
    tr.add_series("fitness_variance", var);
    if fit.mutation_rate > 0.0 && fit.type_independent_target().is_some() {
        let w = tr
            .states
            .iter()
            .map(|s| fit.mutation_selection_potential(s).unwrap_or(f64::NAN))
            .collect();
        tr.add_series("potential", w);
    }
    Ok(ReplicatorRun {
        trajectory: tr,
        fisher,
    })
}

fn fisher_diagnostic(times: &[f64], vbar: &[f64], var: &[f64]) -> FisherDiagnostic {
    let mut min_rate = f64::INFINITY;
    let mut max_rel: f64 = 0.0;
    let mut points = 0;
    for i in 1..times.len().saturating_sub(1) {
        let rate = (vbar[i + 1] - vbar[i - 1]) / (times[i + 1] - times[i - 1]);
        min_rate = min_rate.min(rate);
        let target = 2.0 * var[i];
        if target >= FISHER_VAR_FLOOR {
            max_rel = max_rel.max((rate - target).abs() / target);
            points += 1;
        }
    }
    FisherDiagnostic {
        min_rate,
        max_relative_error: max_rel,
        points_compared: points,
    }
}
