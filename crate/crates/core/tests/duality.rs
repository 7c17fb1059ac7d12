use popdyn::duality::*;
use popdyn::ensemble::EnsembleSpec;
use popdyn::rng::RngStream;
use popdyn::simplex::SimplexPoint;
use popdyn::stats::Estimate;
use popdyn::wrightfisher::{wf_diffusion_final, WfDiffusionSpec};

#[test]
fn hundred_random_generators() {
    let mut rng = RngStream::new(61, 0);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let k = 2 + case % 4;
        let q = RateMatrix::random_irreducible(k, &mut rng);
        for t in [0.1, 1.0, 10.0] {
            for j in 0..k {
                for l in 0..k {
                    worst = worst.max(verify_mc_duality(&q, j, l, t).unwrap().diff);
                }
            }
        }
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn absorption_weights_are_stationary() {
    let mut rng = RngStream::new(62, 0);
    for k in 2..=5 {
        let q = RateMatrix::random_irreducible(k, &mut rng);
        let pi = q.stationary().unwrap();
        for l in 0..k {
            let (empty, full) = set_dual_absorption(&q, l, 100.0).unwrap();
            assert!((empty + full - 1.0).abs() < 1e-9);
            assert!((full - pi[l]).abs() < 1e-6);
        }
    }
}

#[test]
fn moment_dual_against_diffusion() {
    let (p0, t, dt) = (0.5, 1.0, 1e-3);
    let finals: Vec<f64> = EnsembleSpec::new(63, 100_000)
        .run(|_, r| wf_diffusion_final(&WfDiffusionSpec::neutral(1.0), &SimplexPoint::two(p0).unwrap(), t, dt, r).unwrap()[0]);
    for n in 1..=3 {
        let exact = wf_moment_dual(p0, 1.0, n, t, DualEval::Exact).unwrap().mean;
        let mc = Estimate::from_samples(&finals.iter().map(|x| x.powi(n as i32)).collect::<Vec<_>>());
        assert!(mc.within(exact, 3.0, 0.005), "n={n}: {mc:?} vs {exact}");
    }
}
