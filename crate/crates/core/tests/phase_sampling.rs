mod common;

use approx::assert_relative_eq;
use rand::Rng;
use uowc::phase::{
    beta_hg, CompositeVsf, PhaseFunctionParams, ScatteringBudget, COASTAL, DEFAULT_RESOLUTION, HARBOUR, PRESETS,
};
use uowc::rng::StreamFactory;

use common::{ks_statistic, AngleCdf};

fn draws(vsf: &CompositeVsf, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamFactory::new(seed).stream(0);
    (0..n).map(|_| vsf.sample_theta(rng.random())).collect()
}

#[test]
fn ks_against_quadrature_for_every_preset() {
    let params = PhaseFunctionParams::default();
    for preset in PRESETS {
        let budget = ScatteringBudget::from_preset(preset, 0.0).unwrap();
        let vsf = CompositeVsf::compose(budget, params, DEFAULT_RESOLUTION).unwrap();
        let oracle = AngleCdf::new(&budget, &params);
        let mut s = draws(&vsf, 200_000, 11);
        let d = ks_statistic(&mut s, |t| oracle.eval(t));
        assert!(d < 0.005, "{}: KS = {d}", preset.name);
    }
}

#[test]
fn ks_with_turbulence_component() {
    let params = PhaseFunctionParams::default();
    for (preset, b_t) in [(COASTAL, 0.1), (HARBOUR, 1.0)] {
        let budget = ScatteringBudget::from_preset(preset, b_t).unwrap();
        let vsf = CompositeVsf::compose(budget, params, DEFAULT_RESOLUTION).unwrap();
        let oracle = AngleCdf::new(&budget, &params);
        let mut s = draws(&vsf, 200_000, 5);
        let d = ks_statistic(&mut s, |t| oracle.eval(t));
        assert!(d < 0.005, "{} b_t={b_t}: KS = {d}", preset.name);
    }
}

#[test]
fn table_cdf_matches_quadrature() {
    let params = PhaseFunctionParams::default();
    let budget = ScatteringBudget::from_preset(COASTAL, 0.05).unwrap();
    let vsf = CompositeVsf::compose(budget, params, DEFAULT_RESOLUTION).unwrap();
    let oracle = AngleCdf::new(&budget, &params);
    for theta in [1e-5, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.3, 0.58, 1.0, 2.0, 3.0] {
        assert!(
            (vsf.cdf(theta) - oracle.eval(theta)).abs() < 1e-3,
            "theta={theta}: {} vs {}",
            vsf.cdf(theta),
            oracle.eval(theta)
        );
    }
}

#[test]
fn forward_fraction_chi_square() {
    // Counts in ten equal-probability bins of the oracle.
    let params = PhaseFunctionParams::default();
    let budget = ScatteringBudget::from_preset(HARBOUR, 0.5).unwrap();
    let vsf = CompositeVsf::compose(budget, params, DEFAULT_RESOLUTION).unwrap();
    let oracle = AngleCdf::new(&budget, &params);
    let n = 100_000;
    let mut counts = [0usize; 10];
    for t in draws(&vsf, n, 23) {
        counts[((oracle.eval(t) * 10.0) as usize).min(9)] += 1;
    }
    let expected = n as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn hg_reference_values() {
    let g: f64 = 0.975;
    let direct = |t: f64, e: f64| (1.0 - g * g) / (4.0 * std::f64::consts::PI * (1.0 + g * g - 2.0 * g * t.cos()).powf(e));
    for theta in [0.0, 0.1, 1.0, 3.0] {
        assert_relative_eq!(beta_hg(theta, g, 1.5).unwrap(), direct(theta, 1.5), max_relative = 1e-12);
        assert_relative_eq!(beta_hg(theta, g, 1.0).unwrap(), direct(theta, 1.0), max_relative = 1e-12);
    }
    assert_relative_eq!(beta_hg(0.0, g, 1.0).unwrap(), 6.2866, max_relative = 1e-4);
    assert_relative_eq!(beta_hg(std::f64::consts::PI, g, 1.0).unwrap(), 1.0074e-3, max_relative = 1e-3);
}

#[test]
fn samples_stay_in_range() {
    let budget = ScatteringBudget::from_preset(HARBOUR, 2.0).unwrap();
    let vsf = CompositeVsf::compose(budget, PhaseFunctionParams::default(), 1000).unwrap();
    for t in draws(&vsf, 50_000, 2) {
        assert!((0.0..=std::f64::consts::PI).contains(&t));
    }
}
