use popdyn::ensemble::EnsembleSpec;
use popdyn::offspring::OffspringLaw;
use popdyn::rng::RngStream;
use popdyn::spatial::*;
use popdyn::stats::Estimate;
use rand::Rng;

#[test]
fn voter_magnetization_is_a_martingale() {
    let lat = TorusLattice::nearest_neighbor(1, 10).unwrap();
    let mut rng = RngStream::new(71, 0);
    let eta0: Vec<u8> = (0..10).map(|_| rng.random_bool(0.4) as u8).collect();
    let m0: usize = eta0.iter().map(|&v| v as usize).sum();
    let paths: Vec<VoterPath> = EnsembleSpec::new(72, 20_000).run(|_, r| voter_simulate(&lat, &eta0, 5.0, r).unwrap());
    for t in [0.5, 1.0, 2.0, 5.0] {
        let xs: Vec<f64> = paths.iter().map(|p| p.magnetization_at(t) as f64).collect();
        assert!(Estimate::from_samples(&xs).z_score(m0 as f64).abs() < 3.5, "t={t}");
    }
}

#[test]
fn voter_consensus_probability_is_density() {
    let lat = TorusLattice::nearest_neighbor(1, 20).unwrap();
    let eta0: Vec<u8> = (0..20).map(|i| (i % 4 == 0) as u8).collect();
    let wins: Vec<f64> = EnsembleSpec::new(73, 10_000).run(|_, r| voter_consensus(&lat, &eta0, r).unwrap().0 as f64);
    assert!(Estimate::from_samples(&wins).z_score(0.25).abs() < 3.5);
}

#[test]
fn voter_two_point_duality() {
    let lat = TorusLattice::nearest_neighbor(1, 10).unwrap();
    let mut rng = RngStream::new(74, 0);
    let eta0: Vec<u8> = (0..10).map(|_| rng.random_bool(0.5) as u8).collect();
    let chk = voter_duality_check(&lat, &eta0, &[2, 5], 1.0, &EnsembleSpec::new(75, 20_000)).unwrap();
    assert!(chk.z.abs() < 3.5, "{chk:?}");
    let ones = vec![1u8; 10];
    let chk = voter_duality_check(&lat, &ones, &[2, 5], 1.0, &EnsembleSpec::new(76, 100)).unwrap();
    assert_eq!((chk.lhs.mean, chk.rhs.mean), (1.0, 1.0));
    let chk = voter_duality_check(&lat, &eta0, &[2, 5], 0.0, &EnsembleSpec::new(77, 100)).unwrap();
    assert_eq!(chk.lhs.mean, (eta0[2] * eta0[5]) as f64);
    assert_eq!(chk.rhs.mean, (eta0[2] * eta0[5]) as f64);
}

#[test]
fn stepping_stone_direct_vs_dual() {
    let lat = TorusLattice::nearest_neighbor(1, 3).unwrap();
    let p = SteppingStoneParams::neutral(1.0, 1.0);
    let theta = 0.3;
    let ens = EnsembleSpec::new(78, 20_000);
    let finals: Vec<Vec<f64>> = ens.run(|_, r| stepping_stone_final(&lat, &p, &[theta; 3], 1.0, 1e-3, r).unwrap());
    let direct = Estimate::from_samples(&finals.iter().map(|x| x[0] * x[1]).collect::<Vec<_>>());
    let dual = stepping_stone_moment_dual(&lat, &p, 1, theta, 1.0, &ens.derive(1)).unwrap();
    let se = (direct.se.powi(2) + dual.se.powi(2)).sqrt();
    assert!((direct.mean - dual.mean).abs() < 3.5 * se, "{direct:?} {dual:?}");
    let exact = stepping_stone_two_point_exact(&lat, 1.0, Coalescence::Rate(p.dual_kappa()), 1, theta, 1.0).unwrap();
    assert!(dual.z_score(exact).abs() < 3.5);
    let mean0 = Estimate::from_samples(&finals.iter().map(|x| x[0]).collect::<Vec<_>>());
    assert!(mean0.z_score(theta).abs() < 3.5);
}

#[test]
fn stepping_stone_heterozygosity_decays() {
    let lat = TorusLattice::nearest_neighbor(1, 4).unwrap();
    let p = SteppingStoneParams::neutral(1.0, 1.0);
    let runs = EnsembleSpec::new(79, 5_000).run(|_, r| stepping_stone_simulate(&lat, &p, &[0.5; 4], 2.0, 1e-3, r).unwrap());
    let het: Vec<f64> = [0usize, 500, 1000, 1500, 2000]
        .iter()
        .map(|&k| runs.iter().map(|tr| tr.states[k][0] * (1.0 - tr.states[k][0])).sum::<f64>() / runs.len() as f64)
        .collect();
    assert!(het.windows(2).all(|w| w[1] < w[0]), "{het:?}");
}

#[test]
fn brw_mean_propagation() {
    let lat = TorusLattice::nearest_neighbor(1, 8).unwrap();
    let mut x0 = vec![0u64; 8];
    x0[0] = 20;
    x0[3] = 5;
    for m in [0.8, 1.2] {
        // offspring 0 or 2 with mean m
        let law = OffspringLaw::from_pmf(vec![1.0 - m / 2.0, 0.0, m / 2.0]).unwrap();
        let rep = brw_mean_check(&lat, 1.0, &law, &x0, 1.0, &EnsembleSpec::new(80, 20_000)).unwrap();
        assert!(rep.max_abs_z < 4.0, "m={m}: {rep:?}");
        assert!(rep.max_relative_error < 0.05);
    }
}

#[test]
fn critical_brw_dies_out() {
    let lat = TorusLattice::nearest_neighbor(1, 8).unwrap();
    let law = OffspringLaw::from_pmf(vec![0.5, 0.0, 0.5]).unwrap();
    let mut x0 = vec![0u64; 8];
    x0[0] = 1;
    let ens = EnsembleSpec::new(81, 4_000);
    let extinct = |t: f64| {
        let runs: Vec<bool> = ens.run(|_, r| brw_simulate(&lat, 1.0, &law, &x0, t, r).unwrap().extinct);
        runs.iter().filter(|&&e| e).count() as f64 / runs.len() as f64
    };
    let (a, b) = (extinct(10.0), extinct(400.0));
    assert!(a < b && b > 0.99, "{a} {b}");
}
