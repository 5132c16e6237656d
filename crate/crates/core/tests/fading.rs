use approx::assert_relative_eq;
use rand::Rng;
use rand_distr::{LogNormal, Normal};
use uowc::phase::{PhaseFunctionParams, ScatteringBudget, COASTAL};
use uowc::rng::StreamFactory;
use uowc::stats::{density_histogram, fit_fading, scintillation_ensemble, scintillation_index, FitKind, RxConfig};
use uowc::transport::LinkConfig;
use uowc::Error;

#[test]
fn log_normal_samples_recover_their_index() {
    let sigma: f64 = 0.5;
    let dist = LogNormal::new(-0.5 * sigma * sigma, sigma).unwrap();
    let mut rng = StreamFactory::new(1).stream(0);
    let s: Vec<f64> = (0..20_000).map(|_| rng.sample(dist)).collect();
    let fit = fit_fading(&s, FitKind::LogNormal).unwrap();
    let truth = (sigma * sigma).exp_m1();
    assert_relative_eq!(fit.sigma_sim_sq, truth, max_relative = 0.1);
    assert_relative_eq!(fit.sigma_i_sq, truth, max_relative = 0.1);
    assert!(fit.r_squared > 0.97, "{}", fit.r_squared);
    assert!((fit.mu + 0.5 * sigma * sigma).abs() < 0.05, "{}", fit.mu);
}

#[test]
fn gaussian_samples() {
    let dist = Normal::new(10.0, 0.3).unwrap();
    let mut rng = StreamFactory::new(2).stream(0);
    let s: Vec<f64> = (0..20_000).map(|_| rng.sample(dist)).collect();
    let fit = fit_fading(&s, FitKind::Gaussian).unwrap();
    assert!((fit.mu - 1.0).abs() < 0.005);
    assert_relative_eq!(fit.sigma_i_sq, 9e-4, max_relative = 0.1);
    assert!(fit.r_squared > 0.97);
    assert_relative_eq!(fit.density(fit.mu), 1.0 / (fit.sigma * (2.0 * std::f64::consts::PI).sqrt()), max_relative = 1e-12);
}

#[test]
fn histogram_uses_square_root_rule() {
    let s: Vec<f64> = (0..200).map(|i| i as f64).collect();
    assert_eq!(density_histogram(&s).len(), 15);
}

#[test]
fn index_is_scale_free() {
    let s = [1.0, 2.0, 4.0, 3.0];
    let scaled: Vec<f64> = s.iter().map(|v| v * 7.5).collect();
    assert_relative_eq!(scintillation_index(&s).unwrap(), scintillation_index(&scaled).unwrap(), max_relative = 1e-12);
}

fn small_ensemble(bt_max: f64, seed: u64) -> uowc::Result<uowc::stats::FadingEnsemble> {
    let link = LinkConfig {
        z_link: 15.0,
        seed,
        ..Default::default()
    };
    let base = ScatteringBudget::from_preset(COASTAL, 0.0).unwrap();
    scintillation_ensemble(&link, &base, &PhaseFunctionParams::default(), 2000, &RxConfig::default(), 40, 5_000, bt_max)
}

#[test]
fn ensemble_draws_and_fit_kind() {
    let e = small_ensemble(0.2, 3).unwrap();
    assert_eq!(e.samples.len(), 40);
    assert!(e.turbulence.iter().all(|&b| (0.0..=0.2).contains(&b)));
    assert_eq!(e.fit.kind, FitKind::LogNormal);
    assert_eq!(e, small_ensemble(0.2, 3).unwrap());

    let calm = small_ensemble(0.0, 3).unwrap();
    assert_eq!(calm.fit.kind, FitKind::Gaussian);
    assert!(calm.turbulence.iter().all(|&b| b == 0.0));
}

#[test]
fn short_ensembles_are_rejected() {
    let link = LinkConfig::default();
    let base = ScatteringBudget::from_preset(COASTAL, 0.0).unwrap();
    let r = scintillation_ensemble(&link, &base, &PhaseFunctionParams::default(), 2000, &RxConfig::default(), 10, 100, 0.1);
    assert!(matches!(r, Err(Error::InsufficientData { .. })));
}

#[test]
fn turbulence_spreads_the_intensity() {
    let calm = small_ensemble(0.0, 5).unwrap();
    let rough = small_ensemble(0.3, 5).unwrap();
    assert!(rough.fit.sigma_sim_sq > calm.fit.sigma_sim_sq);
}
