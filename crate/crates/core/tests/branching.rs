use popdyn::branching::*;
use popdyn::demography::LifeHistory;
use popdyn::ensemble::EnsembleSpec;
use popdyn::numeric::Matrix;
use popdyn::offspring::OffspringLaw;
use popdyn::rng::RngStream;
use popdyn::stats::Estimate;
use proptest::prelude::*;

fn pmf_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 2..7).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pgf_monotone_and_convex(pmf in pmf_strategy()) {
        let law = OffspringLaw::from_pmf(pmf).unwrap();
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let f: Vec<f64> = grid.iter().map(|&s| law.pgf(s).unwrap()).collect();
        prop_assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        prop_assert!(f.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-10));
    }

    #[test]
    fn extinction_is_iterate_limit_and_fixed_point(pmf in pmf_strategy()) {
        let law = OffspringLaw::from_pmf(pmf).unwrap();
        prop_assume!((law.mean() - 1.0).abs() > 0.1);
        let q = law.extinction_probability().unwrap();
        prop_assert!((law.pgf(q).unwrap() - q).abs() < 1e-12);
        prop_assert!((law.pgf_iterate(200, 0.0).unwrap() - q).abs() < 1e-6);
        for n in [1, 5, 50] {
            prop_assert!((law.pgf_iterate(n, q).unwrap() - q).abs() < 1e-10);
        }
    }

    #[test]
    fn malthusian_residual(b in 0.2f64..3.0, d in 0.05f64..2.0) {
        let ages = LifeHistory::uniform_grid(60.0, 0.005);
        let life = LifeHistory::from_fns(ages, |_| b, |s| 1.0 - (-d * s).exp()).unwrap();
        prop_assume!(life.net_reproduction() > 1.0);
        if let Ok(alpha) = life.solve_malthusian() {
            prop_assert!(life.euler_lotka_residual(alpha).abs() < 1e-10);
        }
    }

    #[test]
    fn contour_counts_levels(pmf in pmf_strategy(), seed in any::<u64>()) {
        let law = OffspringLaw::from_pmf(pmf).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let tree = sample_bgw_tree(&law, 2_000, &mut rng);
        let (contour, height) = contour_and_height(&tree);
        prop_assert_eq!(contour.len(), 2 * tree.len() - 1);
        let levels = tree.level_counts();
        for (n, &count) in levels.iter().enumerate() {
            prop_assert_eq!(height.iter().filter(|&&h| h == n).count() as u64, count);
        }
    }
}

#[test]
fn martingale_variance_limit() {
    // m = 1.5, sigma^2 = 0.75 -> Var(W) = 0.75 / (2.25 - 1.5) = 1
    let law = OffspringLaw::from_pmf(vec![0.25, 0.0, 0.75]).unwrap();
    let m = law.mean();
    let target = law.variance() / (m * m - m);
    let ens = EnsembleSpec::new(31, 20_000);
    let w: Vec<Vec<f64>> = ens.run(|_, r| {
        let tr = simulate_bgw(&law, 1, 18, r).with_normalized(m);
        tr.normalized.unwrap()
    });
    for n in [5, 10, 18] {
        let xs: Vec<f64> = w.iter().map(|v| v[n]).collect();
        let e = Estimate::from_samples(&xs);
        assert!(e.z_score(1.0).abs() < 3.5, "mean of W_{n}");
        if n == 18 {
            let var = xs.iter().map(|x| (x - e.mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!((var - target).abs() < 0.1 * target, "Var(W) = {var}");
        }
    }
}

#[test]
fn extinction_frequency_matches_q() {
    let law = OffspringLaw::poisson(1.4).unwrap();
    let q = law.extinction_probability().unwrap();
    let ens = EnsembleSpec::new(32, 20_000);
    let dead: Vec<bool> = ens.run(|_, r| simulate_bgw_capped(&law, 1, 200, 10_000, r).extinct());
    let e = Estimate::proportion(dead.iter().filter(|&&d| d).count(), dead.len());
    assert!(e.z_score(q).abs() < 3.0);
}

#[test]
fn multitype_direction() {
    let m = Matrix::from_rows(&[vec![0.6, 0.9], vec![0.8, 0.5]]).unwrap();
    let pf = perron_frobenius(&m, 1e-13).unwrap();
    let ens = EnsembleSpec::new(33, 300);
    let runs: Vec<(Vec<Vec<u64>>, bool)> = ens.run(|_, r| simulate_multitype_poisson(&m, &[1, 0], 30, 100_000, r).unwrap());
    let mut survivors = 0;
    for (path, _) in &runs {
        let z = path.last().unwrap();
        let total: u64 = z.iter().sum();
        if total < 100 {
            continue;
        }
        survivors += 1;
        let dot: f64 = z.iter().zip(&pf.v).map(|(&a, b)| a as f64 * b).sum();
        let nz = z.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        let nv = pf.v.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(dot / (nz * nv) > 0.99);
    }
    assert!(survivors > 50);
}

#[test]
fn tree_levels_match_generation_counts() {
    let law = OffspringLaw::from_pmf(vec![0.3, 0.4, 0.3]).unwrap();
    let ens = EnsembleSpec::new(34, 40_000);
    let level3: Vec<f64> = ens.run(|_, r| {
        let t = sample_bgw_tree(&law, 1_000_000, r);
        t.level_counts().get(3).copied().unwrap_or(0) as f64
    });
    let gen3: Vec<f64> = ens.derive(1).run(|_, r| simulate_bgw(&law, 1, 3, r).last() as f64);
    let (a, b) = (Estimate::from_samples(&level3), Estimate::from_samples(&gen3));
    assert!(popdyn::stats::two_sample_z(&a, &b).abs() < 3.5);
}
