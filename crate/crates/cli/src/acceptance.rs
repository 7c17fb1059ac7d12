//! Acceptance suite.
//!
//! Each numbered criterion is a list of checks. A check is either exact
//! (closed-form identities, deterministic solvers) or statistical (Monte
//! Carlo against an oracle); the `exact-laws` and `mc` suites run one kind
//! each. Criterion 19 re-runs everything that ran in an eight-worker pool
//! and compares the serialized reports byte for byte.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Instant;

use popdyn::birthdeath::{bd_law, bd_state_at, critical_bd_conditioned_limit, csbp_coupled_ladder, csbp_extinction_probability, BdParams, CsbpParams};
use popdyn::branching::{critical_limit_estimates, simulate_bgw_capped, CriticalLimit};
use popdyn::deterministic::{replicator_integrate, FitnessSpec};
use popdyn::duality::{set_dual_absorption, verify_mc_duality, wf_moment_dual, DualEval, RateMatrix};
use popdyn::ensemble::EnsembleSpec;
use popdyn::epidemics::reed_frost_threshold_scan;
use popdyn::genealogy::{ewens_probability, ewens_sample, gem_sample, homozygosity, integer_partitions, kingman_mrca_mean, kingman_sample, pd_sample_via_gamma};
use popdyn::numeric::Matrix;
use popdyn::offspring::OffspringLaw;
use popdyn::rng::RngStream;
use popdyn::simplex::SimplexPoint;
use popdyn::spatial::{brw_mean_check, brw_mean_occupancy, stepping_stone_final, stepping_stone_moment_dual, stepping_stone_two_point_exact, voter_duality_check, voter_simulate, Coalescence, SteppingStoneParams, TorusLattice};
use popdyn::stats::{chi_square_gof, ks_two_sample, two_sample_z, Estimate, Histogram};
use popdyn::wrightfisher::{wf_diffusion_final, wf_fixation_experiment, wf_fixation_time_exact, SelectionStationary, WfDiffusionSpec};
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::CliError;
use crate::report::SOFTWARE;
use CheckKind::{Exact, Statistical};

pub const DEFAULT_SEED: u64 = 20_251_015;
pub const DETERMINISM_WORKERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ExactLaws,
    Mc,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 3] = ["exact-laws", "mc", "all"];

    fn exact(self) -> bool {
        matches!(self, Suite::ExactLaws | Suite::All)
    }

    fn statistical(self) -> bool {
        matches!(self, Suite::Mc | Suite::All)
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact-laws" => Ok(Suite::ExactLaws),
            "mc" => Ok(Suite::Mc),
            "all" => Ok(Suite::All),
            _ => Err(CliError::Usage(format!("unknown suite {s:?}; available suites: {}", Suite::NAMES.join(", ")))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::ExactLaws => "exact-laws",
            Suite::Mc => "mc",
            Suite::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Exact,
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub value: f64,
    /// The pass condition on `value`, e.g. `< 1e-12`.
    pub limit: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub checks: Vec<Check>,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionRun {
    #[serde(flatten)]
    pub report: CriterionReport,
    pub passed: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub software: String,
    pub suite: Suite,
    pub seed: u64,
    pub workers: usize,
    pub criteria: Vec<CriterionRun>,
}

impl AcceptanceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: u32) -> Option<&CriterionRun> {
        self.criteria.iter().find(|c| c.report.id == id)
    }

    /// One `PASS`/`FAIL` line per criterion, failing checks indented below.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in &self.criteria {
            out.push(format!(
                "criterion {:>2}  {}  {}  ({:.1} s)",
                c.report.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.report.title,
                c.seconds
            ));
            for f in c.report.failures() {
                out.push(format!("      failed: {} = {} (want {})", f.name, f.value, f.limit));
            }
        }
        out
    }
}

struct Sheet {
    suite: Suite,
    checks: Vec<Check>,
}

impl Sheet {
    fn push(&mut self, name: impl Into<String>, kind: CheckKind, value: f64, limit: String, pass: bool) {
        self.checks.push(Check {
            name: name.into(),
            kind,
            value,
            limit,
            pass,
        });
    }

    fn below(&mut self, name: impl Into<String>, kind: CheckKind, value: f64, limit: f64) {
        self.push(name, kind, value, format!("< {limit:e}"), value < limit);
    }

    fn above(&mut self, name: impl Into<String>, kind: CheckKind, value: f64, limit: f64) {
        self.push(name, kind, value, format!("> {limit:e}"), value > limit);
    }

    fn within(&mut self, name: impl Into<String>, kind: CheckKind, value: f64, lo: f64, hi: f64) {
        self.push(name, kind, value, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&value));
    }

    /// `|estimate - target| <= k se + slack`, reported as the z-score.
    fn z(&mut self, name: impl Into<String>, e: &Estimate, target: f64, k: f64, slack: f64) {
        let limit = if slack > 0.0 {
            format!("|diff| <= {k} se + {slack:e}")
        } else {
            format!("|z| <= {k}")
        };
        self.push(name, CheckKind::Statistical, e.z_score(target), limit, e.within(target, k, slack));
    }
}

struct Ctx {
    seed: u64,
    suite: Suite,
    critical: OnceLock<popdyn::Result<CriticalLimit>>,
}

impl Ctx {
    fn ens(&self, criterion: u64, reps: usize) -> EnsembleSpec {
        EnsembleSpec::new(self.seed, reps).derive(criterion)
    }

    fn rng(&self, criterion: u64) -> RngStream {
        self.ens(criterion, 0).derive(u64::MAX).stream(0)
    }

    fn sheet(&self) -> Sheet {
        Sheet {
            suite: self.suite,
            checks: Vec::new(),
        }
    }

    /// The critical BGW ensemble shared by criteria 2 and 3.
    fn critical(&self) -> popdyn::Result<&CriticalLimit> {
        self.critical
            .get_or_init(|| {
                let law = OffspringLaw::from_pmf(vec![0.5, 0.0, 0.5])?;
                critical_limit_estimates(&law, 500, &self.ens(2, 200_000))
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

type CriterionFn = fn(&Ctx) -> popdyn::Result<Vec<Check>>;

const CRITERIA: &[(u32, &str, CriterionFn)] = &[
    (1, "BGW extinction probability", extinction_probability),
    (2, "Kolmogorov survival asymptotic", kolmogorov),
    (3, "Yaglom conditional limit", yaglom),
    (4, "linear birth-death exact law", birth_death_law),
    (5, "Feller CSBP extinction", csbp_extinction),
    (6, "critical birth-death conditioned law", critical_bd),
    (7, "Wright-Fisher fixation", wf_fixation),
    (8, "Dirichlet and selection stationarity", stationarity),
    (9, "Kingman coalescent", kingman),
    (10, "Ewens sampling formula", ewens),
    (11, "GEM and Poisson-Dirichlet largest atom", gem_pd),
    (12, "finite Markov chain duality", chain_duality),
    (13, "Wright-Fisher moment duality", moment_duality),
    (14, "voter model duality", voter),
    (15, "stepping-stone moment dual", stepping_stone),
    (16, "branching random walk mean", brw_mean),
    (17, "Reed-Frost threshold", reed_frost),
    (18, "Fisher's fundamental theorem", fisher),
];

pub fn criterion_titles() -> Vec<(u32, &'static str)> {
    let mut v: Vec<(u32, &str)> = CRITERIA.iter().map(|&(id, title, _)| (id, title)).collect();
    v.push((19, "determinism across reruns and workers"));
    v
}

fn run_criteria(seed: u64, suite: Suite) -> Vec<CriterionRun> {
    let ctx = Ctx {
        seed,
        suite,
        critical: OnceLock::new(),
    };
    let mut out = Vec::new();
    for &(id, title, f) in CRITERIA {
        let start = Instant::now();
        let checks = match f(&ctx) {
            Ok(c) => c,
            Err(e) => vec![Check {
                name: format!("error: {e}"),
                kind: CheckKind::Exact,
                value: f64::NAN,
                limit: "no error".into(),
                pass: false,
            }],
        };
        if checks.is_empty() {
            continue;
        }
        let report = CriterionReport {
            id,
            title: title.to_string(),
            checks,
        };
        out.push(CriterionRun {
            passed: report.passed(),
            report,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    out
}

#[cfg(feature = "parallel")]
fn rerun_with_workers(seed: u64, suite: Suite, workers: usize) -> Result<Vec<CriterionRun>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| e.to_string())?;
    Ok(pool.install(|| run_criteria(seed, suite)))
}

#[cfg(not(feature = "parallel"))]
fn rerun_with_workers(seed: u64, suite: Suite, _workers: usize) -> Result<Vec<CriterionRun>, String> {
    Ok(run_criteria(seed, suite))
}

/// Runs every criterion of `suite`. Failures are recorded, never raised.
pub fn run_acceptance(suite: Suite, seed: u64) -> AcceptanceReport {
    let mut criteria = run_criteria(seed, suite);
    let start = Instant::now();
    let mut sheet = Sheet {
        suite,
        checks: Vec::new(),
    };
    match rerun_with_workers(seed, suite, DETERMINISM_WORKERS) {
        Ok(again) => {
            let first: HashMap<u32, Vec<u8>> = criteria.iter().map(|c| (c.report.id, report_bytes(&c.report))).collect();
            for c in &again {
                let same = first.get(&c.report.id).is_some_and(|b| *b == report_bytes(&c.report));
                sheet.push(
                    format!("criterion {} identical with {DETERMINISM_WORKERS} workers", c.report.id),
                    CheckKind::Exact,
                    same as u8 as f64,
                    "= 1".into(),
                    same,
                );
            }
            let same_set = again.len() == criteria.len();
            sheet.push("same criteria on rerun", CheckKind::Exact, again.len() as f64, format!("= {}", criteria.len()), same_set);
        }
        Err(e) => sheet.push(format!("error: {e}"), CheckKind::Exact, f64::NAN, "no error".into(), false),
    }
    let report = CriterionReport {
        id: 19,
        title: "determinism across reruns and workers".into(),
        checks: sheet.checks,
    };
    criteria.push(CriterionRun {
        passed: report.passed(),
        report,
        seconds: start.elapsed().as_secs_f64(),
    });
    AcceptanceReport {
        software: SOFTWARE.to_string(),
        suite,
        seed,
        workers: popdyn::ensemble::worker_count(),
        criteria,
    }
}

fn report_bytes(r: &CriterionReport) -> Vec<u8> {
    serde_json::to_vec(r).expect("criterion reports always serialize")
}


fn random_law(rng: &mut RngStream) -> popdyn::Result<OffspringLaw> {
    loop {
        let k = rng.random_range(2..=6);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = w.iter().sum();
        let law = OffspringLaw::from_pmf(w.into_iter().map(|x| x / s).collect())?;
        // near-critical laws converge too slowly for a 200-generation test
        if (law.mean() - 1.0).abs() > 0.1 {
            return Ok(law);
        }
    }
}

fn extinction_probability(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let mut rng = ctx.rng(1);
    for k in 0..20 {
        let law = random_law(&mut rng)?;
        let q = law.extinction_probability()?;
        if s.suite.exact() {
            s.below(format!("law {k}: |f(q) - q|"), Exact, (law.pgf(q)? - q).abs(), 1e-12);
        }
        if s.suite.statistical() {
            let dead = ctx.ens(1, 100_000).derive(k).run(|_, r| simulate_bgw_capped(&law, 1, 200, 10_000, r).extinct());
            let e = Estimate::proportion(dead.iter().filter(|&&d| d).count(), dead.len());
            s.z(format!("law {k}: extinction frequency at n = 200 vs q"), &e, q, 3.0, 0.0);
        }
    }
    Ok(s.checks)
}

fn kolmogorov(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.exact() {
        let law = OffspringLaw::from_pmf(vec![0.5, 0.0, 0.5])?;
        let exact = 500.0 * (1.0 - law.pgf_iterate(500, 0.0)?);
        s.within("n P[Z_n > 0] from the pgf iterate, n = 500", Exact, exact, 1.8, 2.2);
    }
    if s.suite.statistical() {
        let c = ctx.critical()?;
        s.within("n P[Z_n > 0] estimate, n = 500", Statistical, c.scaled_survival, 1.8, 2.2);
    }
    Ok(s.checks)
}

fn yaglom(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.statistical() {
        let c = ctx.critical()?;
        s.below("KS(Z_n / n | survival, Exp(1/2))", Statistical, c.ks_exponential.unwrap_or(f64::NAN), 0.05);
    }
    Ok(s.checks)
}

fn birth_death_law(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let p = BdParams::new(2.0, 1.0)?;
    if s.suite.exact() {
        let late = bd_law(&p, 20.0, 10)?;
        s.below("|p_0(20) - d/b|", Exact, (late.pmf[0] - 0.5).abs(), 1e-3);
    }
    if s.suite.statistical() {
        let law = bd_law(&p, 1.0, 200)?;
        let x: Vec<Option<u64>> = ctx.ens(4, 100_000).run(|_, r| bd_state_at(&p, 1, 1.0, r));
        let cells = 30;
        let mut counts = vec![0u64; cells];
        for v in x {
            let v = v.ok_or_else(|| popdyn::Error::Invalid("event cap reached".into()))?;
            counts[(v as usize).min(cells - 1)] += 1;
        }
        let mut probs = law.pmf[..cells].to_vec();
        probs[cells - 1] = 1.0 - law.pmf[..cells - 1].iter().sum::<f64>();
        s.above("chi-square p, Gillespie vs exact law at t = 1", Statistical, chi_square_gof(&counts, &probs, 5.0).p_value, 1e-3);
    }
    Ok(s.checks)
}

fn csbp_extinction(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let p = CsbpParams::new(0.0, 1.0, 0.0)?;
    let target = (-1.0f64).exp();
    if s.suite.exact() {
        s.below("|P[X_1 = 0] - 1/e| from the Laplace exponent", Exact, (csbp_extinction_probability(&p, 1.0, 1.0) - target).abs(), 1e-12);
    }
    if s.suite.statistical() {
        // dt = 4e-3, 2e-3, 1e-3 driven by one Brownian path per replicate
        let ladders = ctx.ens(5, 100_000).run(|_, r| csbp_coupled_ladder(&p, 1.0, 1.0, 4e-3, 3, r));
        let fractions: Vec<f64> = (0..3)
            .map(|l| ladders.iter().filter(|x| x[l] <= 0.0).count() as f64 / ladders.len() as f64)
            .collect();
        s.within("extinct fraction at dt = 1e-3", Statistical, fractions[2], target - 0.01, target + 0.01);
        let errors: Vec<f64> = fractions.iter().map(|f| (f - target).abs()).collect();
        let worst_step = errors.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        s.below("largest change in |error| under dt halving", Statistical, worst_step, 0.0);
    }
    Ok(s.checks)
}

fn critical_bd(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.statistical() {
        let c = critical_bd_conditioned_limit(1.0, 50.0, &ctx.ens(6, 1_000_000))?;
        s.below("KS(X_t / t | survival, Exp(1)), t = 50", Statistical, c.ks.unwrap_or(f64::NAN), 0.05);
    }
    Ok(s.checks)
}

fn wf_fixation(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let stated = 100.0 * std::f64::consts::LN_2;
    let exact = wf_fixation_time_exact(100, 50)?;
    if s.suite.exact() {
        s.within("exact chain mean absorption time vs 100 ln 2 +- 5%", Exact, exact, 0.95 * stated, 1.05 * stated);
    }
    if s.suite.statistical() {
        let f = wf_fixation_experiment(100, 0.5, &ctx.ens(7, 20_000))?;
        s.within("mean fixation generations vs 100 ln 2 +- 5%", Statistical, f.time.mean, 0.95 * stated, 1.05 * stated);
        s.z("mean fixation generations vs exact chain expectation", &f.time, exact, 3.0, 0.0);
        s.z("absorption-at-1 frequency vs 1/2", &f.fixed_at_one, 0.5, 3.0, 0.0);
    }
    Ok(s.checks)
}

fn stationarity(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let beta = Beta::new(1.0, 2.0).map_err(|e| popdyn::Error::Invalid(e.to_string()))?;
    let sigma = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?;
    let selected = SelectionStationary::new(&sigma, [1.0, 2.0], 1.0)?;
    if s.suite.exact() {
        let neutral = SelectionStationary::new(&Matrix::zeros(2, 2), [1.0, 2.0], 1.0)?;
        let gap = (1..100)
            .map(|i| i as f64 / 100.0)
            .map(|x| (neutral.cdf(x) - beta.cdf(x)).abs())
            .fold(0.0, f64::max);
        s.below("zero selection stationary cdf vs Beta(1,2)", Exact, gap, 1e-3);
    }
    if s.suite.statistical() {
        let (horizon, dt, reps) = (8.0, 1e-3, 20_000);
        let start = SimplexPoint::two(0.5)?;
        let neutral = WfDiffusionSpec::house_of_cards(1.0, 3.0, vec![1.0 / 3.0, 2.0 / 3.0]);
        let run = |spec: &WfDiffusionSpec, tag: u64| -> popdyn::Result<Vec<f64>> {
            ctx.ens(8, reps).derive(tag).run(|_, r| wf_diffusion_final(spec, &start, horizon, dt, r).map(|p| p[0])).into_iter().collect()
        };
        let x = run(&neutral, 0)?;
        let p = Histogram::from_samples(0.0, 1.0, 20, &x).chi_square_vs_cdf(|v| beta.cdf(v)).p_value;
        s.above("chi-square p, house-of-cards histogram vs Beta(1,2)", Statistical, p, 1e-3);
        let x = run(&neutral.clone().with_selection(sigma), 1)?;
        let p = Histogram::from_samples(0.0, 1.0, 20, &x).chi_square_vs_cdf(|v| selected.cdf(v)).p_value;
        s.above("chi-square p, selection histogram vs stationary density", Statistical, p, 1e-3);
    }
    Ok(s.checks)
}

fn kingman(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let n = 10;
    if s.suite.exact() {
        s.below("|E[T_MRCA] - 1.8| from the level sum", Exact, (kingman_mrca_mean(n, 1.0) - 1.8).abs(), 1e-12);
    }
    if s.suite.statistical() {
        let paths = ctx.ens(9, 100_000).run(|_, r| kingman_sample(n, 1.0, r)).into_iter().collect::<popdyn::Result<Vec<_>>>()?;
        let mrca: Vec<f64> = paths.iter().map(|p| p.mrca_time()).collect();
        s.z("mean MRCA time vs 2 - 2/n", &Estimate::from_samples(&mrca), 1.8, 3.0, 0.0);
        let holding: Vec<Vec<(usize, f64)>> = paths.iter().map(|p| p.holding_times()).collect();
        for k in (2..=n).rev() {
            let rate = (k * (k - 1)) as f64 / 2.0;
            let scaled: Vec<f64> = holding.iter().flatten().filter(|&&(kk, _)| kk == k).map(|&(_, h)| h * rate).collect();
            let p = Histogram::from_samples(0.0, 5.0, 25, &scaled).chi_square_vs_cdf(|x| 1.0 - (-x).exp()).p_value;
            s.above(format!("chi-square p, holding time with {k} blocks vs exponential"), Statistical, p, 1e-3);
        }
    }
    Ok(s.checks)
}

fn ewens(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let thetas = [0.5, 1.0, 2.0];
    if s.suite.exact() {
        let mut worst: f64 = 0.0;
        for n in 1..=12 {
            let parts = integer_partitions(n);
            for &theta in &thetas {
                let total: f64 = parts.iter().map(|a| ewens_probability(a, theta)).sum::<popdyn::Result<f64>>()?;
                worst = worst.max((total - 1.0).abs());
            }
        }
        s.below("max |sum of Ewens probabilities - 1|, n <= 12", Exact, worst, 1e-12);
    }
    if s.suite.statistical() {
        let n = 6;
        let parts = integer_partitions(n);
        let index: HashMap<Vec<usize>, usize> = parts.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        for (tag, &theta) in thetas.iter().enumerate() {
            let draws = ctx.ens(10, 1_000_000).derive(tag as u64).run(|_, r| ewens_sample(n, theta, r).map(|p| index[&p.multiplicities()]));
            let mut counts = vec![0u64; parts.len()];
            for d in draws {
                counts[d?] += 1;
            }
            let probs: Vec<f64> = parts.iter().map(|a| ewens_probability(a, theta)).collect::<popdyn::Result<_>>()?;
            s.above(format!("chi-square p, Hoppe urn n = 6, theta = {theta}"), Statistical, chi_square_gof(&counts, &probs, 5.0).p_value, 1e-3);
        }
        let draws = ctx.ens(10, 100_000).derive(99).run(|_, r| pd_sample_via_gamma(1.0, 1e-10, r)).into_iter().collect::<popdyn::Result<Vec<_>>>()?;
        for k in 2..=3 {
            let xs: Vec<f64> = draws.iter().map(|a| a.power_sum(k)).collect();
            let exact = homozygosity(k as usize, 1.0)?;
            s.z(format!("PD(1) E[sum xi^{k}] vs h_{k}"), &Estimate::from_samples(&xs), exact, 3.0, 0.0);
        }
    }
    Ok(s.checks)
}

fn gem_pd(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.statistical() {
        let ens = ctx.ens(11, 100_000);
        let gem = ens.derive(0).run(|_, r| gem_sample(1.0, 1e-10, r).map(|a| a.sorted_decreasing().largest())).into_iter().collect::<popdyn::Result<Vec<_>>>()?;
        let pd = ens.derive(1).run(|_, r| pd_sample_via_gamma(1.0, 1e-10, r).map(|a| a.largest())).into_iter().collect::<popdyn::Result<Vec<_>>>()?;
        s.below("two-sample KS of the largest atom, theta = 1", Statistical, ks_two_sample(&gem, &pd), 0.02);
    }
    Ok(s.checks)
}

fn chain_duality(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.exact() {
        let mut rng = ctx.rng(12);
        let mut worst: f64 = 0.0;
        for case in 0..100 {
            let k = 2 + case % 4;
            let q = RateMatrix::random_irreducible(k, &mut rng);
            for t in [0.1, 1.0, 10.0] {
                for j in 0..k {
                    for l in 0..k {
                        worst = worst.max(verify_mc_duality(&q, j, l, t)?.diff);
                    }
                }
            }
        }
        s.below("max |lhs - rhs| over 100 random generators", Exact, worst, 1e-8);
        let mut worst: f64 = 0.0;
        for k in 2..=5 {
            let q = RateMatrix::random_irreducible(k, &mut rng);
            let pi = q.stationary()?;
            for (l, &w) in pi.iter().enumerate() {
                let (_, full) = set_dual_absorption(&q, l, 100.0)?;
                worst = worst.max((full - w).abs());
            }
        }
        s.below("max |absorption weight - stationary weight|", Exact, worst, 1e-6);
    }
    Ok(s.checks)
}

fn moment_duality(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let (p0, gamma, t, dt): (f64, f64, f64, f64) = (0.5, 1.0, 1.0, 1e-3);
    if s.suite.exact() {
        let e = (-gamma * t).exp();
        let closed = e * p0 * p0 + (1.0 - e) * p0;
        let dual = wf_moment_dual(p0, gamma, 2, t, DualEval::Exact)?.mean;
        s.below("|dual E[p_t^2] - closed form|", Exact, (dual - closed).abs(), 1e-12);
    }
    if s.suite.statistical() {
        let start = SimplexPoint::two(p0)?;
        let finals = ctx
            .ens(13, 100_000)
            .run(|_, r| wf_diffusion_final(&WfDiffusionSpec::neutral(gamma), &start, t, dt, r).map(|p| p[0]))
            .into_iter()
            .collect::<popdyn::Result<Vec<_>>>()?;
        for n in 1..=3 {
            let dual = wf_moment_dual(p0, gamma, n, t, DualEval::Exact)?.mean;
            let mc = Estimate::from_samples(&finals.iter().map(|x| x.powi(n as i32)).collect::<Vec<_>>());
            s.z(format!("diffusion E[p_t^{n}] vs dual"), &mc, dual, 3.0, 5.0 * dt);
        }
    }
    Ok(s.checks)
}

fn voter(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.statistical() {
        let lat = TorusLattice::nearest_neighbor(1, 10)?;
        let mut rng = ctx.rng(14);
        let eta0: Vec<u8> = (0..10).map(|_| rng.random_bool(0.5) as u8).collect();
        for (tag, t) in [0.5, 1.0].into_iter().enumerate() {
            let chk = voter_duality_check(&lat, &eta0, &[2, 5], t, &ctx.ens(14, 100_000).derive(tag as u64))?;
            s.below(format!("|z| two-point product identity, t = {t}"), Statistical, chk.z.abs(), 3.0);
        }
        let m0: usize = eta0.iter().map(|&v| v as usize).sum();
        let paths = ctx.ens(14, 100_000).derive(9).run(|_, r| voter_simulate(&lat, &eta0, 1.0, r)).into_iter().collect::<popdyn::Result<Vec<_>>>()?;
        for t in [0.5, 1.0] {
            let m: Vec<f64> = paths.iter().map(|p| p.magnetization_at(t) as f64).collect();
            s.z(format!("magnetization drift at t = {t}"), &Estimate::from_samples(&m), m0 as f64, 3.0, 0.0);
        }
    }
    Ok(s.checks)
}

fn stepping_stone(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.statistical() {
        let lat = TorusLattice::nearest_neighbor(1, 3)?;
        let p = SteppingStoneParams::neutral(1.0, 1.0);
        let theta = 0.3;
        let ens = ctx.ens(15, 100_000);
        let direct = ens
            .run(|_, r| stepping_stone_final(&lat, &p, &[theta; 3], 1.0, 1e-3, r).map(|x| x[0] * x[1]))
            .into_iter()
            .collect::<popdyn::Result<Vec<_>>>()?;
        let direct = Estimate::from_samples(&direct);
        let dual = stepping_stone_moment_dual(&lat, &p, 1, theta, 1.0, &ens.derive(1))?;
        s.below("|z| direct E[X(0) X(1)] vs dual", Statistical, two_sample_z(&direct, &dual).abs(), 3.0);
        let exact = stepping_stone_two_point_exact(&lat, 1.0, Coalescence::Rate(p.dual_kappa()), 1, theta, 1.0)?;
        s.z("dual estimate vs exact two-walker solution", &dual, exact, 3.0, 0.0);
    }
    Ok(s.checks)
}

fn brw_mean(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    let lat = TorusLattice::nearest_neighbor(1, 8)?;
    let mut x0 = vec![0u64; 8];
    x0[0] = 20;
    x0[3] = 5;
    for (tag, m) in [0.8, 1.0, 1.2].into_iter().enumerate() {
        if s.suite.exact() {
            let mean = brw_mean_occupancy(&lat, 1.0, m, &x0, 1.0)?;
            let total = 25.0 * (m - 1.0f64).exp();
            s.below(format!("m = {m}: |total mean mass - 25 e^(m-1)| / total"), Exact, (mean.iter().sum::<f64>() - total).abs() / total, 1e-12);
        }
        if s.suite.statistical() {
            let law = OffspringLaw::from_pmf(vec![1.0 - m / 2.0, 0.0, m / 2.0])?;
            let rep = brw_mean_check(&lat, 1.0, &law, &x0, 1.0, &ctx.ens(16, 100_000).derive(tag as u64))?;
            s.below(format!("m = {m}: max relative error of per-site means"), Statistical, rep.max_relative_error, 0.05);
        }
    }
    Ok(s.checks)
}

fn reed_frost(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.statistical() {
        let grid = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
        let rows = reed_frost_threshold_scan(10_000, &grid, 1, &ctx.ens(17, 10_000))?;
        s.below("large-outbreak probability at lambda = 0.5", Statistical, rows[0].large_outbreak.mean, 0.01);
        s.above("large-outbreak probability at lambda = 2", Statistical, rows[5].large_outbreak.mean, 0.3);
        let drop = rows.windows(2).map(|w| w[0].large_outbreak.mean - w[1].large_outbreak.mean).fold(0.0, f64::max);
        s.push("largest decrease along the lambda grid", Statistical, drop, "= 0".into(), drop == 0.0);
    }
    Ok(s.checks)
}

fn fisher(ctx: &Ctx) -> popdyn::Result<Vec<Check>> {
    let mut s = ctx.sheet();
    if s.suite.exact() {
        let mut rng = ctx.rng(18);
        let (mut min_rate, mut max_err) = (f64::INFINITY, 0.0f64);
        for _ in 0..10 {
            let k = rng.random_range(2..=4);
            let mut rows = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in i..k {
                    let v = rng.random_range(0.0..2.0);
                    rows[i][j] = v;
                    rows[j][i] = v;
                }
            }
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            let p0 = SimplexPoint::new(w.iter().map(|x| x / total).collect())?;
            let run = replicator_integrate(&FitnessSpec::diploid(Matrix::from_rows(&rows)?)?, &p0, 5.0, 1e-3)?;
            min_rate = min_rate.min(run.fisher.min_rate);
            max_err = max_err.max(run.fisher.max_relative_error);
        }
        s.push("min dV/dt over 10 random fitness matrices", Exact, min_rate, ">= -1e-8".into(), min_rate >= -1e-8);
        s.below("max |dV/dt - 2 Var| / 2 Var", Exact, max_err, 1e-3);
    }
    Ok(s.checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_parsing() {
        assert_eq!("mc".parse::<Suite>().unwrap(), Suite::Mc);
        assert_eq!("exact-laws".parse::<Suite>().unwrap(), Suite::ExactLaws);
        let err = "fast".parse::<Suite>().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        for name in Suite::NAMES {
            assert!(err.to_string().contains(name));
            assert_eq!(name.parse::<Suite>().unwrap().to_string(), name);
        }
    }

    #[test]
    fn sheet_bands() {
        let mut s = Sheet {
            suite: Suite::All,
            checks: Vec::new(),
        };
        s.below("a", Exact, 0.5, 1.0);
        s.above("b", Exact, 0.5, 1.0);
        s.within("c", Exact, 1.0, 1.0, 2.0);
        s.below("d", Exact, f64::NAN, 1.0);
        let e = Estimate { mean: 1.0, se: 0.0, n: 10 };
        s.z("e", &e, 1.0, 3.0, 0.0);
        let pass: Vec<bool> = s.checks.iter().map(|c| c.pass).collect();
        assert_eq!(pass, [true, false, true, false, true]);
    }

    #[test]
    fn titles_cover_all_criteria() {
        let ids: Vec<u32> = criterion_titles().iter().map(|t| t.0).collect();
        assert_eq!(ids, (1..=19).collect::<Vec<_>>());
    }
}
