//! Model quantities checked against brute-force simulation.

use blrmpk::datasets::BundledDataset;
use blrmpk::model::{dlt_rate_at_dose, logistic, marginal_logistic_normal};
use blrmpk::sampler::McmcConfig;
use blrmpk::{fit, Design, DoseGrid, ModelKind, ParameterPoint, PriorSpec, RateMethod, TrialDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Antithetic Monte Carlo estimate of E[logistic(a + b T)], T ~ N(mu, sigma^2).
fn mc_marginal(a: f64, b: f64, mu: f64, sigma: f64, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..n / 2 {
        let z: f64 = rng.sample(StandardNormal);
        acc += logistic(a + b * (mu + sigma * z)) + logistic(a + b * (mu - sigma * z));
    }
    acc / (2 * (n / 2)) as f64
}

#[test]
fn quadrature_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = rng.random_range(-4.0..2.0);
        let b = rng.random_range(0.05..3.0);
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.01..2.0);
        let quad = marginal_logistic_normal(a, b, mu, sigma);
        let mc = mc_marginal(a, b, mu, sigma, 1_000_000, &mut rng);
        worst = worst.max((quad - mc).abs());
    }
    assert!(worst < 1e-3, "largest quadrature/Monte-Carlo gap {worst}");
}

#[test]
fn joint_rate_uses_exposure_distribution() {
    let grid = DoseGrid::new(vec![1.0, 2.0, 4.0], Some(4.0)).unwrap();
    let p = ParameterPoint { log_alpha: -1.0, b_dlt: 0.3, g0: 0.2, g1: -0.5, log_sigma: (0.7f64).ln() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &dose in grid.doses() {
        let mu = p.g0 + p.g1.exp() * (dose / 4.0f64).ln();
        let oracle = mc_marginal(p.log_alpha, p.b_dlt.exp(), mu, 0.7, 400_000, &mut rng);
        let rate = dlt_rate_at_dose(&p, dose, &grid, ModelKind::JointPk, RateMethod::MarginalQuadrature).unwrap();
        assert!((rate - oracle).abs() < 2e-3, "dose {dose}: {rate} vs {oracle}");
        let plugin = dlt_rate_at_dose(&p, dose, &grid, ModelKind::JointPk, RateMethod::PluginMedian).unwrap();
        assert!((plugin - logistic(p.log_alpha + p.b_dlt.exp() * mu)).abs() < 1e-15);
    }
}

/// Median DLT rate at the reference dose under the prior, by direct
/// simulation of the prior and trapezoid integration over exposure.
fn prior_median_rate_at_reference(kind: ModelKind, n: usize) -> f64 {
    let prior = PriorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rates: Vec<f64> = (0..n)
        .map(|_| {
            let z = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
            let la = prior.mean_log_alpha + prior.sd_log_alpha * z(&mut rng);
            let slope = (prior.mean_b_dlt + prior.sd_b_dlt * z(&mut rng)).exp();
            match kind {
                ModelKind::DoseOnly => logistic(la),
                ModelKind::JointPk => {
                    let g0 = prior.mean_g0 + prior.sd_g0 * z(&mut rng);
                    let _g1 = z(&mut rng);
                    let sigma = (0.5 * (prior.sigma2_log_median + prior.sigma2_log_sd * z(&mut rng))).exp();
                    let steps = 400;
                    let h = 16.0 / steps as f64;
                    let mut acc = 0.0;
                    for k in 0..=steps {
                        let u = -8.0 + k as f64 * h;
                        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                        let dens = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
                        acc += w * dens * logistic(la + slope * (g0 + sigma * u));
                    }
                    acc * h
                }
            }
        })
        .collect();
    rates.sort_by(f64::total_cmp);
    rates[n / 2]
}

#[test]
fn prior_only_fit_matches_prior_simulation_at_reference_dose() {
    let grid = DoseGrid::new(vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 50.0], None).unwrap();
    let data = TrialDataset::empty(grid);
    for kind in [ModelKind::DoseOnly, ModelKind::JointPk] {
        let design = Design { mcmc: McmcConfig { seed: 5, ..Default::default() }, ..Default::default() };
        let f = fit(&data, kind, &design).unwrap();
        let fitted = f.summaries.last().unwrap().median_dlt_rate;
        let oracle = prior_median_rate_at_reference(kind, 100_000);
        assert!((fitted - 0.33).abs() <= 0.02, "{kind:?}: fitted median {fitted}");
        assert!((oracle - 0.33).abs() <= 0.02, "{kind:?}: simulated median {oracle}");
        assert!((fitted - oracle).abs() <= 0.02, "{kind:?}: {fitted} vs {oracle}");
    }
}

#[test]
fn dose_only_rate_ignores_exposure_parameters() {
    let grid = BundledDataset::App1.grid();
    let a = ParameterPoint { log_alpha: -0.5, b_dlt: 0.1, ..Default::default() };
    let b = ParameterPoint { g0: 3.0, g1: -2.0, log_sigma: 1.0, ..a };
    for &d in grid.doses() {
        let ra = dlt_rate_at_dose(&a, d, &grid, ModelKind::DoseOnly, RateMethod::MarginalQuadrature).unwrap();
        let rb = dlt_rate_at_dose(&b, d, &grid, ModelKind::DoseOnly, RateMethod::MarginalQuadrature).unwrap();
        assert_eq!(ra, rb);
    }
}
