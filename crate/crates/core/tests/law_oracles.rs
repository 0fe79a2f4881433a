use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spde_weak::covariance::CovarianceModel;
use spde_weak::fem1d::DiscreteSpace;
use spde_weak::law::{
    continuous_law, discrete_law, expect_functional, kolmogorov_value, strong_error_sq, weak_error,
    Functional,
};
use spde_weak::mc::{coupled_refinement_error, mc_expect, mc_expect_functional, GaussianSampler, NoiseStream};
use spde_weak::spectral::{SpectralModel, ThetaScheme};
use spde_weak::{fit_rate, linalg};

fn dirichlet(k: usize) -> SpectralModel {
    SpectralModel::dirichlet_laplacian_1d(k).unwrap()
}

#[test]
fn weak_error_decreases_with_steps() {
    let model = dirichlet(32);
    let space = DiscreteSpace::spectral(32, &model).unwrap();
    let q = CovarianceModel::white(32);
    let phi = Functional::cosine_mode(1, 0.0);
    let errs: Vec<f64> = [8, 16, 32, 64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let scheme = ThetaScheme::new(1.0, 1.0, n).unwrap();
            weak_error(&model, &space, &q, &scheme, &[], &phi).unwrap()
        })
        .collect();
    assert!(errs.iter().all(|&e| e > 0.0));
    for w in errs.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{errs:?}");
    }
}

#[test]
fn deterministic_weak_error_is_first_order() {
    let model = dirichlet(16);
    let space = DiscreteSpace::spectral(16, &model).unwrap();
    let q = CovarianceModel::zero(16);
    let phi = Functional::cosine_mode(1, 0.5);
    let pts: Vec<(f64, f64)> = [64, 128, 256, 512, 1024]
        .iter()
        .map(|&n| {
            let scheme = ThetaScheme::new(1.0, 1.0, n).unwrap();
            (scheme.dt(), weak_error(&model, &space, &q, &scheme, &[1.0], &phi).unwrap())
        })
        .collect();
    let fit = fit_rate(&pts).unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.1, "{}", fit.slope);
}

#[test]
fn strong_error_vanishes_under_refinement() {
    let model = dirichlet(8);
    let space = DiscreteSpace::spectral(8, &model).unwrap();
    let q = CovarianceModel::white(8);
    let values: Vec<f64> = (10..=14)
        .map(|p| {
            let scheme = ThetaScheme::new(1.0, 1.0, 1 << p).unwrap();
            strong_error_sq(&model, &space, &q, &scheme, &[]).unwrap()
        })
        .collect();
    for w in values.windows(2) {
        assert!(w[1] < w[0] && w[1] <= 10.0 * w[0]);
    }
    assert!(values[4] < 1e-4, "{values:?}");
}

#[test]
fn discrete_law_tends_to_continuous_law() {
    let model = dirichlet(32);
    let space = DiscreteSpace::spectral(32, &model).unwrap();
    let q = CovarianceModel::white(32);
    let scheme = ThetaScheme::new(1.0, 1.0, 1 << 12).unwrap();
    let d = discrete_law(&space, &q, &scheme, &[]).unwrap();
    let c = continuous_law(&model, &q, &[], 1.0).unwrap();
    assert!((d.cov - c.cov).amax() <= 1e-4);
}

#[test]
fn laws_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let k = rng.gen_range(2..12);
        let model = dirichlet(k);
        let coeffs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let q = CovarianceModel::from_kernel(&model, &coeffs).unwrap();
        let space = DiscreteSpace::p1(rng.gen_range(2..10), &model).unwrap();
        let scheme = ThetaScheme::new(rng.gen_range(0.55..1.0), 1.0, rng.gen_range(1..64)).unwrap();
        let d = discrete_law(&space, &q, &scheme, &[]).unwrap();
        let c = continuous_law(&model, &q, &[], 1.0).unwrap();
        for cov in [&d.cov, &c.cov] {
            assert!(linalg::relative_asymmetry(cov) <= 1e-12);
            linalg::check_psd(cov).unwrap();
        }
    }
}

#[test]
fn weak_order_is_twice_strong_order_for_all_mode_functional() {
    let model = dirichlet(64);
    let space = DiscreteSpace::spectral(64, &model).unwrap();
    let q = CovarianceModel::white(64);
    let phi = Functional::cosine_band(64, 0.0);
    let mut weak = Vec::new();
    let mut strong = Vec::new();
    for n in [8, 16, 32, 64, 128, 256] {
        let scheme = ThetaScheme::new(1.0, 1.0, n).unwrap();
        weak.push((scheme.dt(), weak_error(&model, &space, &q, &scheme, &[], &phi).unwrap()));
        strong.push((scheme.dt(), strong_error_sq(&model, &space, &q, &scheme, &[]).unwrap().sqrt()));
    }
    let sw = fit_rate(&weak).unwrap().slope;
    let ss = fit_rate(&strong).unwrap().slope;
    assert!((sw - 2.0 * ss).abs() <= 0.1, "weak {sw}, strong {ss}");
}

#[test]
fn kolmogorov_value_is_a_martingale() {
    let model = dirichlet(6);
    let q = CovarianceModel::from_kernel(&model, &[0.3, 0.4, 0.3]).unwrap();
    let phi = Functional::cosine(vec![1.0, -0.5, 0.5], 0.2);
    let x = [0.8, 0.3, -0.4];
    let horizon = 1.0;
    let target = expect_functional(&continuous_law(&model, &q, &x, horizon).unwrap(), &phi, None).unwrap();
    let stream = NoiseStream::new(4242, 6).unwrap();
    for t in [0.0, 0.25, 0.5, 1.0] {
        let law = continuous_law(&model, &q, &x, t).unwrap();
        let sampler = GaussianSampler::new(&law).unwrap();
        let est = mc_expect(100_000, |p| {
            let xt = sampler.sample(&stream, p);
            let y = model.semigroup_apply(horizon - t, xt.as_slice()).unwrap();
            kolmogorov_value(&model, &q, horizon, t, &y, &phi).unwrap()
        })
        .unwrap();
        if t == 0.0 {
            assert!((est.estimate - target).abs() < 1e-14);
        } else {
            assert!((est.estimate - target).abs() <= 4.0 * est.stderr, "t = {t}");
        }
    }
}

fn mc_setup() -> (SpectralModel, DiscreteSpace, CovarianceModel, ThetaScheme) {
    let model = dirichlet(8);
    let space = DiscreteSpace::p1(5, &model).unwrap();
    let q = CovarianceModel::from_kernel(&model, &[0.2, 0.5, 0.3]).unwrap();
    let scheme = ThetaScheme::new(0.8, 1.0, 16).unwrap();
    (model, space, q, scheme)
}

#[test]
fn mc_coverage_over_seeds() {
    let (_, space, q, scheme) = mc_setup();
    let phi = Functional::cosine(vec![1.0, 1.0, 0.5], 0.4);
    let x = [0.3, 0.1];
    let exact = expect_functional(&discrete_law(&space, &q, &scheme, &x).unwrap(), &phi, Some(&space)).unwrap();
    let covered = (0..20u64)
        .filter(|&seed| {
            let stream = NoiseStream::new(seed, space.dim()).unwrap();
            let est = mc_expect_functional(&space, &q, &scheme, &x, &phi, &stream, 100_000).unwrap();
            (est.estimate - exact).abs() <= 4.0 * est.stderr
        })
        .count();
    assert!(covered >= 19, "{covered} of 20");
}

#[test]
fn stderr_follows_clt_scaling() {
    let (_, space, q, scheme) = mc_setup();
    let phi = Functional::cosine(vec![1.0, 1.0], 0.0);
    let mut ratio = 0.0;
    for seed in 0..10u64 {
        let stream = NoiseStream::new(100 + seed, space.dim()).unwrap();
        let full = mc_expect_functional(&space, &q, &scheme, &[], &phi, &stream, 20_000).unwrap();
        let half = mc_expect_functional(&space, &q, &scheme, &[], &phi, &stream, 10_000).unwrap();
        ratio += (half.stderr / full.stderr).powi(2) / 10.0;
    }
    assert!((ratio - 2.0).abs() <= 0.4, "{ratio}");
}

#[test]
fn coupled_error_respects_triangle_bound() {
    let model = dirichlet(8);
    let space = DiscreteSpace::spectral(8, &model).unwrap();
    let q = CovarianceModel::white(8);
    let stream = NoiseStream::new(77, 8).unwrap();
    let coarse = ThetaScheme::new(1.0, 1.0, 16).unwrap();
    let fine = ThetaScheme::new(1.0, 1.0, 32).unwrap();
    let est = coupled_refinement_error(&space, &space, &q, &fine, &coarse, &[], &stream, 20_000).unwrap();
    let ec = strong_error_sq(&model, &space, &q, &coarse, &[]).unwrap().sqrt();
    let ef = strong_error_sq(&model, &space, &q, &fine, &[]).unwrap().sqrt();
    let hi = (ec + ef).powi(2) + 4.0 * est.stderr;
    let lo = (ec - ef).powi(2) - 4.0 * est.stderr;
    assert!(est.estimate <= hi && est.estimate >= lo, "{} not in [{lo}, {hi}]", est.estimate);
}

#[test]
fn coupled_error_decays_at_strong_rate() {
    let model = dirichlet(64);
    let space = DiscreteSpace::spectral(64, &model).unwrap();
    let q = CovarianceModel::white(64);
    let stream = NoiseStream::new(5, 64).unwrap();
    let pts: Vec<(f64, f64)> = [8, 16, 32, 64, 128, 256]
        .iter()
        .map(|&n| {
            let coarse = ThetaScheme::new(1.0, 1.0, n).unwrap();
            let fine = ThetaScheme::new(1.0, 1.0, 2 * n).unwrap();
            let e = coupled_refinement_error(&space, &space, &q, &fine, &coarse, &[], &stream, 10_000).unwrap();
            (coarse.dt(), e.estimate)
        })
        .collect();
    let slope = fit_rate(&pts).unwrap().slope;
    assert!((slope - 0.5).abs() <= 0.15, "{slope}");
}

#[test]
fn coupled_error_across_spaces() {
    let model = dirichlet(16);
    let fine_space = DiscreteSpace::p1(16, &model).unwrap();
    let coarse_space = DiscreteSpace::p1(8, &model).unwrap();
    let q = CovarianceModel::from_kernel(&model, &[0.5, 0.5]).unwrap();
    let scheme = ThetaScheme::new(1.0, 1.0, 8).unwrap();
    let stream = NoiseStream::new(9, 16).unwrap();
    let e = coupled_refinement_error(&fine_space, &coarse_space, &q, &scheme, &scheme, &[], &stream, 2000).unwrap();
    assert!(e.estimate > 0.0 && e.estimate.is_finite());
    let again = coupled_refinement_error(&fine_space, &coarse_space, &q, &scheme, &scheme, &[], &stream, 2000).unwrap();
    assert_eq!(e.estimate.to_bits(), again.estimate.to_bits());
}
