//! Seeded execution of a single scenario.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use popdyn::birthdeath::{bd_moments, bd_pgf, bd_state_at, csbp_extinction_probability, csbp_final, BdParams, CsbpParams};
use popdyn::branching::simulate_bgw;
use popdyn::genealogy::{ewens_sample, kingman_mrca_mean, kingman_sample};
use popdyn::offspring::OffspringLaw;
use popdyn::rng::RngStream;
use popdyn::simplex::SimplexPoint;
use popdyn::spatial::{voter_simulate, TorusLattice};
use popdyn::stats::Estimate;
use popdyn::wrightfisher::{wf_chain_step, wf_diffusion_final, wf_fixation_time_exact, wf_moment_ode, MomentSystem, WfChainSpec, WfDiffusionSpec};
use popdyn::epidemics::{is_large_outbreak, reed_frost_final_size};
use serde::Serialize;

use crate::config::{DataFormat, ModelConfig, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::report::{Comparison, RunReport, StatisticRow, Tolerance};

/// Largest population for which the exact fixation time is solved.
const EXACT_FIXATION_MAX_N: u64 = 2_000;

pub struct ModelInfo {
    pub id: &'static str,
    pub parameters: &'static str,
    pub statistics: &'static [&'static str],
}

pub const MODELS: &[ModelInfo] = &[
    ModelInfo {
        id: "bgw",
        parameters: "pmf, generations, initial = 1",
        statistics: &["extinct", "final_size"],
    },
    ModelInfo {
        id: "birth-death",
        parameters: "b, d, x0 = 1, t",
        statistics: &["extinct", "final_size"],
    },
    ModelInfo {
        id: "csbp",
        parameters: "m, gamma, c = 0, x0, t, dt = 1e-3",
        statistics: &["extinct", "final_mass"],
    },
    ModelInfo {
        id: "wright-fisher",
        parameters: "n, p0",
        statistics: &["fixed_at_one", "fixation_time"],
    },
    ModelInfo {
        id: "wf-diffusion",
        parameters: "gamma, theta = 0, nu, p0, t, dt = 1e-3",
        statistics: &["p", "p_squared"],
    },
    ModelInfo {
        id: "kingman",
        parameters: "n, gamma",
        statistics: &["mrca_time", "total_length"],
    },
    ModelInfo {
        id: "ewens",
        parameters: "n, theta",
        statistics: &["blocks", "singletons"],
    },
    ModelInfo {
        id: "voter",
        parameters: "dim = 1, side, density, t",
        statistics: &["magnetization"],
    },
    ModelInfo {
        id: "reed-frost",
        parameters: "n, lambda, i0 = 1",
        statistics: &["final_size", "large_outbreak"],
    },
];

pub fn model_info(id: &str) -> Option<&'static ModelInfo> {
    MODELS.iter().find(|m| m.id == id)
}

/// Per-replicate values, one row per replicate in index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["replicate".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| CliError::io("csv output", e))?;
        Ok(())
    }
}

pub struct Outcome {
    pub report: RunReport,
    pub samples: SampleTable,
}

/// Oracle for one statistic and the band it must fall in.
type Oracle = Option<(f64, Tolerance)>;

struct Plan {
    statistics: Vec<&'static str>,
    oracles: Vec<Oracle>,
}

fn sde_band(dt: f64) -> Tolerance {
    Tolerance { sigmas: 3.0, slack: 5.0 * dt }
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn plan(model: &ModelConfig) -> Result<Plan> {
    let exact = |v: f64| Some((v, Tolerance::THREE_SE));
    let (statistics, oracles): (&[&str], Vec<Oracle>) = match model {
        ModelConfig::Bgw { pmf, generations, initial } => {
            let law = OffspringLaw::from_pmf(pmf.clone())?;
            let f_n = law.pgf_iterate(*generations, 0.0)?;
            (
                &["extinct", "final_size"],
                vec![
                    exact(f_n.powf(*initial as f64)),
                    exact(*initial as f64 * law.mean().powi(*generations as i32)),
                ],
            )
        }
        ModelConfig::BirthDeath { b, d, x0, t } => {
            let p = BdParams::new(*b, *d)?;
            (
                &["extinct", "final_size"],
                vec![exact(bd_pgf(&p, 0.0, *t).powf(*x0 as f64)), exact(bd_moments(&p, *x0, *t).0)],
            )
        }
        ModelConfig::Csbp { m, gamma, c, x0, t, dt } => {
            let p = CsbpParams::new(*m, *gamma, *c)?;
            let growth = (m * t).exp();
            let mean = x0 * growth + if *m == 0.0 { c * t } else { c * (growth - 1.0) / m };
            let band = sde_band(*dt);
            (
                &["extinct", "final_mass"],
                vec![
                    (*c == 0.0).then(|| (csbp_extinction_probability(&p, *x0, *t), band)),
                    Some((mean, band)),
                ],
            )
        }
        ModelConfig::WrightFisher { n, p0 } => {
            let x0 = (p0 * *n as f64).round() as u64;
            let time = if *n <= EXACT_FIXATION_MAX_N {
                exact(wf_fixation_time_exact(*n, x0)?)
            } else {
                None
            };
            (&["fixed_at_one", "fixation_time"], vec![exact(x0 as f64 / *n as f64), time])
        }
        ModelConfig::WfDiffusion { gamma, theta, nu, p0, t, dt } => {
            let sys = MomentSystem::new(*gamma, *theta, nu, 2)?;
            let tr = wf_moment_ode(&sys, &SimplexPoint::two(*p0)?, *t, (*dt).min(1e-2))?;
            let m = tr.last_state().expect("moment ODE records its start");
            let band = sde_band(*dt);
            (
                &["p", "p_squared"],
                vec![Some((m[sys.position(&[1]).expect("first moment")], band)), Some((m[sys.position(&[2]).expect("second moment")], band))],
            )
        }
        ModelConfig::Kingman { n, gamma } => (
            &["mrca_time", "total_length"],
            vec![exact(kingman_mrca_mean(*n, *gamma)), exact(2.0 / gamma * harmonic(n.saturating_sub(1)))],
        ),
        ModelConfig::Ewens { n, theta } => (
            &["blocks", "singletons"],
            vec![
                exact((0..*n).map(|i| theta / (theta + i as f64)).sum()),
                exact(*n as f64 * theta / (theta + *n as f64 - 1.0)),
            ],
        ),
        ModelConfig::Voter { dim, side, density, .. } => {
            let lat = TorusLattice::nearest_neighbor(*dim, *side)?;
            let ones = initial_spins(&lat, *density)?.iter().filter(|&&v| v == 1).count();
            (&["magnetization"], vec![exact(ones as f64)])
        }
        ModelConfig::ReedFrost { .. } => (&["final_size", "large_outbreak"], vec![None, None]),
    };
    Ok(Plan {
        statistics: statistics.to_vec(),
        oracles,
    })
}

fn initial_spins(lat: &TorusLattice, density: f64) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&density) {
        return Err(CliError::Schema(format!("voter density must lie in [0, 1], got {density}")));
    }
    let ones = (density * lat.sites() as f64).round() as usize;
    Ok((0..lat.sites()).map(|i| (i < ones) as u8).collect())
}

/// Every statistic of the model for one replicate, in `MODELS` order.
fn replicate(model: &ModelConfig, ctx: &Context, rng: &mut RngStream) -> popdyn::Result<Vec<f64>> {
    Ok(match (model, ctx) {
        (ModelConfig::Bgw { generations, initial, .. }, Context::Law(law)) => {
            let z = simulate_bgw(law, *initial, *generations, rng).last();
            vec![(z == 0) as u8 as f64, z as f64]
        }
        (ModelConfig::BirthDeath { x0, t, .. }, Context::Bd(p)) => {
            let x = bd_state_at(p, *x0, *t, rng).ok_or_else(|| popdyn::Error::Invalid("event cap reached".into()))?;
            vec![(x == 0) as u8 as f64, x as f64]
        }
        (ModelConfig::Csbp { x0, t, dt, .. }, Context::Csbp(p)) => {
            let x = csbp_final(p, *x0, *t, *dt, rng);
            vec![(x <= 0.0) as u8 as f64, x]
        }
        (ModelConfig::WrightFisher { p0, .. }, Context::Chain(spec)) => {
            let n = spec.n as f64;
            let mut p = SimplexPoint::two((p0 * n).round() / n)?;
            let mut t = 0u64;
            while p[0] > 0.0 && p[0] < 1.0 {
                p = wf_chain_step(spec, &p, rng);
                t += 1;
            }
            vec![(p[0] == 1.0) as u8 as f64, t as f64]
        }
        (ModelConfig::WfDiffusion { p0, t, dt, .. }, Context::Diffusion(spec)) => {
            let p = wf_diffusion_final(spec, &SimplexPoint::two(*p0)?, *t, *dt, rng)?[0];
            vec![p, p * p]
        }
        (ModelConfig::Kingman { n, gamma }, Context::None) => {
            let path = kingman_sample(*n, *gamma, rng)?;
            let length = path.holding_times().iter().map(|&(k, h)| k as f64 * h).sum();
            vec![path.mrca_time(), length]
        }
        (ModelConfig::Ewens { n, theta }, Context::None) => {
            let part = ewens_sample(*n, *theta, rng)?;
            let singletons = part.blocks().iter().filter(|b| b.len() == 1).count();
            vec![part.len() as f64, singletons as f64]
        }
        (ModelConfig::Voter { t, .. }, Context::Voter(lat, eta0)) => {
            vec![voter_simulate(lat, eta0, *t, rng)?.magnetization_at(*t) as f64]
        }
        (ModelConfig::ReedFrost { n, lambda, i0 }, Context::None) => {
            let size = reed_frost_final_size(*n, *lambda, *i0, rng)?;
            vec![size as f64, is_large_outbreak(*n, size) as u8 as f64]
        }
        _ => unreachable!("context is built from the same model"),
    })
}

/// Validated model objects shared by every replicate.
enum Context {
    None,
    Law(OffspringLaw),
    Bd(BdParams),
    Csbp(CsbpParams),
    Chain(WfChainSpec),
    Diffusion(WfDiffusionSpec),
    Voter(TorusLattice, Vec<u8>),
}

fn context(model: &ModelConfig) -> Result<Context> {
    Ok(match model {
        ModelConfig::Bgw { pmf, .. } => Context::Law(OffspringLaw::from_pmf(pmf.clone())?),
        ModelConfig::BirthDeath { b, d, .. } => Context::Bd(BdParams::new(*b, *d)?),
        ModelConfig::Csbp { m, gamma, c, dt, .. } => {
            if *dt <= 0.0 {
                return Err(CliError::Schema("dt must be positive".into()));
            }
            Context::Csbp(CsbpParams::new(*m, *gamma, *c)?)
        }
        ModelConfig::WrightFisher { n, p0 } => {
            if !(0.0..=1.0).contains(p0) {
                return Err(CliError::Schema(format!("p0 must lie in [0, 1], got {p0}")));
            }
            Context::Chain(WfChainSpec::neutral(*n, 2))
        }
        ModelConfig::WfDiffusion { gamma, theta, nu, .. } => {
            let spec = WfDiffusionSpec::house_of_cards(*gamma, *theta, nu.to_vec());
            spec.validate(2)?;
            Context::Diffusion(spec)
        }
        ModelConfig::Voter { dim, side, density, .. } => {
            let lat = TorusLattice::nearest_neighbor(*dim, *side)?;
            let eta0 = initial_spins(&lat, *density)?;
            Context::Voter(lat, eta0)
        }
        ModelConfig::Kingman { .. } | ModelConfig::Ewens { .. } | ModelConfig::ReedFrost { .. } => Context::None,
    })
}

/// Runs the ensemble and summarizes the requested statistics. Numbers in
/// the report depend only on the config, never on the worker count.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Outcome> {
    let start = Instant::now();
    let plan = plan(&config.model)?;
    let selected: Vec<usize> = if config.statistics.is_empty() {
        (0..plan.statistics.len()).collect()
    } else {
        config
            .statistics
            .iter()
            .map(|s| {
                plan.statistics.iter().position(|&x| x == s).ok_or_else(|| {
                    CliError::Schema(format!(
                        "model {} has no statistic {s:?}; available: {}",
                        config.model.id(),
                        plan.statistics.join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?
    };
    let ctx = context(&config.model)?;
    let ens = config.ensemble();
    let raw = ens.run(|_, rng| replicate(&config.model, &ctx, rng));
    let mut rows = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        let all = r.map_err(|source| CliError::Replicate { replicate: i, source })?;
        rows.push(selected.iter().map(|&j| all[j]).collect::<Vec<f64>>());
    }
    let samples = SampleTable {
        columns: selected.iter().map(|&j| plan.statistics[j].to_string()).collect(),
        rows,
    };
    let statistics = if samples.rows.is_empty() {
        Vec::new()
    } else {
        selected
            .iter()
            .enumerate()
            .map(|(col, &j)| {
                let e = Estimate::from_samples(&samples.column(col));
                StatisticRow {
                    name: plan.statistics[j].to_string(),
                    estimate: e.mean,
                    se: e.se,
                    n: e.n,
                    comparison: plan.oracles[j].map(|(oracle, tolerance)| Comparison {
                        oracle,
                        tolerance,
                        z: e.z_score(oracle),
                        pass: tolerance.accepts(e.mean, e.se, oracle),
                    }),
                }
            })
            .collect()
    };
    let report = RunReport::new(config.clone(), ens.reps, statistics, start.elapsed().as_secs_f64());
    Ok(Outcome { report, samples })
}

/// Writes `report.json` and the per-replicate table into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path, format: DataFormat) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let report_path = dir.join("report.json");
    let file = std::fs::File::create(&report_path).map_err(|e| CliError::io(&report_path, e))?;
    serde_json::to_writer_pretty(file, &outcome.report)?;
    let config_path = dir.join("scenario.toml");
    std::fs::write(&config_path, outcome.report.config.to_toml()).map_err(|e| CliError::io(&config_path, e))?;
    match format {
        DataFormat::Csv => {
            let path = dir.join("replicates.csv");
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            outcome.samples.write_csv(file)
        }
        DataFormat::Json => {
            let path = dir.join("replicates.json");
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            Ok(serde_json::to_writer(file, &outcome.samples)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EnsembleConfig, OutputConfig};

    fn scenario(model: ModelConfig, reps: usize) -> ScenarioConfig {
        ScenarioConfig {
            statistics: Vec::new(),
            ensemble: EnsembleConfig { seed: 11, reps },
            model,
            output: OutputConfig::default(),
        }
    }

    #[test]
    fn every_model_is_listed_with_its_statistics() {
        let models = [
            ModelConfig::Bgw { pmf: vec![0.5, 0.0, 0.5], generations: 5, initial: 1 },
            ModelConfig::BirthDeath { b: 1.0, d: 1.0, x0: 1, t: 1.0 },
            ModelConfig::Csbp { m: 0.0, gamma: 1.0, c: 0.0, x0: 1.0, t: 0.1, dt: 1e-2 },
            ModelConfig::WrightFisher { n: 10, p0: 0.5 },
            ModelConfig::WfDiffusion { gamma: 1.0, theta: 1.0, nu: [0.5, 0.5], p0: 0.5, t: 0.1, dt: 1e-2 },
            ModelConfig::Kingman { n: 4, gamma: 1.0 },
            ModelConfig::Ewens { n: 4, theta: 1.0 },
            ModelConfig::Voter { dim: 1, side: 4, density: 0.5, t: 0.5 },
            ModelConfig::ReedFrost { n: 50, lambda: 1.5, i0: 1 },
        ];
        for m in models {
            let info = model_info(m.id()).unwrap();
            let out = run_scenario(&scenario(m, 3)).unwrap();
            let names: Vec<&str> = out.report.statistics.iter().map(|s| s.name.as_str()).collect();
            assert_eq!(names, info.statistics);
            assert_eq!(out.samples.rows.len(), 3);
        }
    }

    #[test]
    fn statistic_selection() {
        let mut c = scenario(ModelConfig::Kingman { n: 5, gamma: 1.0 }, 10);
        c.statistics = vec!["total_length".into()];
        let out = run_scenario(&c).unwrap();
        assert_eq!(out.samples.columns, vec!["total_length"]);
        c.statistics = vec!["tmrca".into()];
        let err = run_scenario(&c).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("mrca_time"));
    }

    #[test]
    fn model_errors_are_reported() {
        let c = scenario(ModelConfig::Kingman { n: 5, gamma: -1.0 }, 4);
        let err = run_scenario(&c).err().unwrap();
        assert!(matches!(err, CliError::Replicate { replicate: 0, .. }));
        let c = scenario(ModelConfig::Bgw { pmf: vec![0.5, 0.6], generations: 3, initial: 1 }, 4);
        assert!(run_scenario(&c).is_err());
    }

    #[test]
    fn oracle_values() {
        let oracle = |m: ModelConfig, j: usize| plan(&m).unwrap().oracles[j].unwrap().0;
        assert_eq!(oracle(ModelConfig::Ewens { n: 1, theta: 2.0 }, 0), 1.0);
        assert_eq!(oracle(ModelConfig::Ewens { n: 1, theta: 2.0 }, 1), 1.0);
        // two lineages: T_2 ~ Exp(gamma), length 2 T_2
        assert!((oracle(ModelConfig::Kingman { n: 2, gamma: 2.0 }, 0) - 0.5).abs() < 1e-15);
        assert!((oracle(ModelConfig::Kingman { n: 2, gamma: 2.0 }, 1) - 1.0).abs() < 1e-15);
        let bgw = ModelConfig::Bgw { pmf: vec![0.25, 0.5, 0.25], generations: 1, initial: 2 };
        assert!((oracle(bgw.clone(), 0) - 0.0625).abs() < 1e-15);
        assert!((oracle(bgw, 1) - 2.0).abs() < 1e-15);
    }
}
