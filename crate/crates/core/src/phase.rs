//! Volume scattering functions for seawater, suspended particles and
//! turbulence-induced small-angle scattering, their scattering-weighted
//! mixture, and inverse-CDF sampling of the polar scattering angle.
//!
//! All phase functions here are expressed in sr⁻¹. A function `β̃` is
//! normalized when `2π ∫₀^π β̃(θ) sin θ dθ = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

/// Scattering coefficient of pure seawater (m⁻¹).
pub const B_SEAWATER: f64 = 2.33e-3;

/// Smallest polar angle at which the Fournier-Forand term is evaluated.
/// Its density diverges at θ = 0 for negative exponents, so the component is
/// truncated below this angle and renormalized.
pub const FF_THETA_MIN: f64 = 1e-6;

/// Upper edge of the log-spaced part of the CDF table.
const LOG_KNOT_LIMIT: f64 = 0.1;

/// Largest allowed deviation of the mixture's quadrature from unity.
pub const NORMALIZATION_LIMIT: f64 = 1e-4;

/// Default number of CDF table knots.
pub const DEFAULT_RESOLUTION: usize = 20_000;

/// Named water type with tabulated absorption and total scattering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaterPreset {
    pub name: &'static str,
    /// Absorption coefficient (m⁻¹).
    pub absorption: f64,
    /// Tabulated total scattering coefficient (m⁻¹).
    pub b_petzold: f64,
}

pub const HARBOUR: WaterPreset = WaterPreset {
    name: "harbour",
    absorption: 0.295,
    b_petzold: 1.875,
};

pub const COASTAL: WaterPreset = WaterPreset {
    name: "coastal",
    absorption: 0.179,
    b_petzold: 0.219,
};

pub const CLEAR_OCEAN: WaterPreset = WaterPreset {
    name: "clear",
    absorption: 0.114,
    b_petzold: 0.037,
};

pub const PRESETS: [WaterPreset; 3] = [CLEAR_OCEAN, COASTAL, HARBOUR];

impl WaterPreset {
    pub fn by_name(name: &str) -> Option<WaterPreset> {
        PRESETS
            .iter()
            .copied()
            .find(|p| p.name.eq_ignore_ascii_case(name))
    }
}

/// Absorption and scattering coefficients of a water column, all in m⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringBudget {
    a: f64,
    b_sw: f64,
    b_p: f64,
    b_t: f64,
    b_petzold: f64,
}

impl ScatteringBudget {
    /// Splits `b_petzold` into seawater and particle parts and adds the
    /// turbulence term on top.
    pub fn new(a: f64, b_petzold: f64, b_sw: f64, b_t: f64) -> Result<Self> {
        check_range("a", a, 0.0, f64::INFINITY, "a >= 0")?;
        check_range("b_sw", b_sw, 0.0, f64::INFINITY, "b_sw >= 0")?;
        check_range("b_petzold", b_petzold, b_sw, f64::INFINITY, "b_petzold >= b_sw")?;
        check_range("b_t", b_t, 0.0, f64::INFINITY, "b_t >= 0")?;
        let budget = Self {
            a,
            b_sw,
            b_p: b_petzold - b_sw,
            b_t,
            b_petzold,
        };
        if budget.extinction() <= 0.0 {
            return Err(Error::Degenerate("extinction coefficient is zero".into()));
        }
        Ok(budget)
    }

    pub fn from_preset(preset: WaterPreset, b_t: f64) -> Result<Self> {
        Self::new(preset.absorption, preset.b_petzold, B_SEAWATER, b_t)
    }

    /// Same water with a different turbulence term.
    pub fn with_turbulence(&self, b_t: f64) -> Result<Self> {
        Self::new(self.a, self.b_petzold, self.b_sw, b_t)
    }

    pub fn absorption(&self) -> f64 {
        self.a
    }
    pub fn b_seawater(&self) -> f64 {
        self.b_sw
    }
    pub fn b_particle(&self) -> f64 {
        self.b_p
    }
    pub fn b_turbulence(&self) -> f64 {
        self.b_t
    }
    pub fn b_petzold(&self) -> f64 {
        self.b_petzold
    }

    /// b = b_sw + b_p + b_t
    pub fn scattering(&self) -> f64 {
        self.b_sw + self.b_p + self.b_t
    }

    /// c = a + b
    pub fn extinction(&self) -> f64 {
        self.a + self.scattering()
    }

    /// Single scattering albedo b / c.
    pub fn albedo(&self) -> f64 {
        self.scattering() / self.extinction()
    }

    /// Mixture weights (seawater, particle, turbulence), summing to one.
    pub fn weights(&self) -> [f64; 3] {
        let b = self.scattering();
        if b == 0.0 {
            return [0.0; 3];
        }
        [self.b_sw / b, self.b_p / b, self.b_t / b]
    }
}

/// Shape parameters of the particle and turbulence phase functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFunctionParams {
    /// Henyey-Greenstein average cosine.
    pub g: f64,
    /// Junge slope of the particle size distribution.
    pub m_junge: f64,
    /// Refractive index entering the Fournier-Forand δ term.
    pub n_water: f64,
    /// Power on the Henyey-Greenstein denominator: 1.5 is the textbook
    /// function, 1 the first-power variant.
    pub hg_exponent: f64,
}

impl Default for PhaseFunctionParams {
    fn default() -> Self {
        Self {
            g: 0.975,
            m_junge: 3.05,
            n_water: 1.33,
            hg_exponent: 1.5,
        }
    }
}

impl PhaseFunctionParams {
    pub fn validate(&self) -> Result<()> {
        check_range("g", self.g, 0.0, 1.0 - f64::EPSILON, "0 <= g < 1")?;
        check_range("n_water", self.n_water, 1.0 + f64::EPSILON, f64::INFINITY, "n > 1")?;
        check_range("hg_exponent", self.hg_exponent, 0.0, 10.0, "0 <= exponent <= 10")?;
        let v = self.ff_exponent();
        if !v.is_finite() || v == 0.0 {
            return Err(Error::Domain {
                name: "m_junge",
                value: self.m_junge,
                expected: "(3 - m) / 2 finite and nonzero",
            });
        }
        Ok(())
    }

    /// v = (3 − m) / 2
    pub fn ff_exponent(&self) -> f64 {
        (3.0 - self.m_junge) / 2.0
    }

    /// δ(θ) = 4 / (3 (n − 1)²) · sin²(θ/2)
    pub fn ff_delta(&self, theta: f64) -> f64 {
        let s = (theta / 2.0).sin();
        4.0 / (3.0 * (self.n_water - 1.0).powi(2)) * s * s
    }
}

fn check_theta(theta: f64) -> Result<()> {
    check_range("theta", theta, 0.0, PI, "0 <= theta <= pi")
}

/// Seawater phase function 0.06225 (1 + 0.835 cos²θ).
pub fn beta_seawater(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(seawater_unchecked(theta))
}

fn seawater_unchecked(theta: f64) -> f64 {
    let c = theta.cos();
    0.06225 * (1.0 + 0.835 * c * c)
}

/// Henyey-Greenstein phase function (1 − g²) / (4π (1 + g² − 2g cos θ)^exponent).
pub fn beta_hg(theta: f64, g: f64, exponent: f64) -> Result<f64> {
    check_theta(theta)?;
    check_range("g", g, 0.0, 1.0, "0 <= g <= 1")?;
    let base = 1.0 + g * g - 2.0 * g * theta.cos();
    if base <= 0.0 {
        return Err(Error::Degenerate(format!(
            "Henyey-Greenstein denominator base {base:e} <= 0"
        )));
    }
    Ok(hg_unchecked(theta, g, exponent))
}

fn hg_unchecked(theta: f64, g: f64, exponent: f64) -> f64 {
    let base = 1.0 + g * g - 2.0 * g * theta.cos();
    (1.0 - g * g) / (4.0 * PI * base.powf(exponent))
}

/// Fournier-Forand phase function. Defined on (0, π]; diverges at θ = 0.
pub fn beta_ff(theta: f64, params: &PhaseFunctionParams) -> Result<f64> {
    check_theta(theta)?;
    if theta == 0.0 {
        return Err(Error::Singularity("Fournier-Forand phase function"));
    }
    Ok(ff_unchecked(theta, params))
}

/// Half-width in δ of the window around δ = 1 that is bridged by interpolation.
const FF_DELTA_GUARD: f64 = 1e-4;

fn ff_unchecked(theta: f64, params: &PhaseFunctionParams) -> f64 {
    let delta = params.ff_delta(theta);
    if (1.0 - delta).abs() < FF_DELTA_GUARD {
        // removable 0/0 at δ = 1: bridge linearly between the window edges
        let theta_at = |d: f64| {
            let s = (d * 3.0 * (params.n_water - 1.0).powi(2) / 4.0).sqrt();
            2.0 * s.min(1.0).asin()
        };
        let (lo, hi) = (
            theta_at(1.0 - FF_DELTA_GUARD),
            theta_at(1.0 + FF_DELTA_GUARD),
        );
        let (f_lo, f_hi) = (ff_raw(lo, params), ff_raw(hi, params));
        let t = (theta - lo) / (hi - lo);
        return f_lo + t * (f_hi - f_lo);
    }
    ff_raw(theta, params)
}

fn ff_raw(theta: f64, params: &PhaseFunctionParams) -> f64 {
    let v = params.ff_exponent();
    let delta = params.ff_delta(theta);
    let delta_v = delta.powf(v);
    let delta_180 = params.ff_delta(PI);
    let delta_180_v = delta_180.powf(v);
    let half_sin = (theta / 2.0).sin();
    let one_minus = 1.0 - delta;

    let forward = (v * one_minus - (1.0 - delta_v)
        + (delta * (1.0 - delta_v) - v * one_minus) / (half_sin * half_sin))
        / (4.0 * PI * one_minus * one_minus * delta_v);
    let cos = theta.cos();
    let backward = (1.0 - delta_180_v) / (16.0 * PI * (delta_180 - 1.0) * delta_180_v)
        * (3.0 * cos * cos - 1.0);
    forward + backward
}

/// Azimuthal scattering angle φ = 2π ε.
pub fn sample_phi(epsilon: f64) -> f64 {
    2.0 * PI * epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Seawater,
    Particle,
    Turbulence,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Seawater, Component::Particle, Component::Turbulence];

    /// Unnormalized density of this component, with the turbulence term
    /// truncated below [`FF_THETA_MIN`].
    fn raw(self, theta: f64, params: &PhaseFunctionParams) -> f64 {
        match self {
            Component::Seawater => seawater_unchecked(theta),
            Component::Particle => hg_unchecked(theta, params.g, params.hg_exponent),
            Component::Turbulence if theta < FF_THETA_MIN => 0.0,
            Component::Turbulence => ff_unchecked(theta, params),
        }
    }
}

/// Polar-angle knots: θ = 0, then log-spaced on [FF_THETA_MIN, 0.1], then
/// linear up to π.
fn knots(resolution: usize) -> Vec<f64> {
    let n_log = resolution / 2;
    let n_lin = resolution - n_log - 1;
    let mut thetas = Vec::with_capacity(resolution);
    thetas.push(0.0);
    let (l0, l1) = (FF_THETA_MIN.ln(), LOG_KNOT_LIMIT.ln());
    for i in 0..n_log {
        thetas.push((l0 + (l1 - l0) * i as f64 / (n_log - 1) as f64).exp());
    }
    for i in 1..=n_lin {
        thetas.push(LOG_KNOT_LIMIT + (PI - LOG_KNOT_LIMIT) * i as f64 / n_lin as f64);
    }
    *thetas.last_mut().unwrap() = PI;
    thetas
}

/// Mass of each knot interval under the trapezoid rule for `2π f(θ) sin θ`.
fn interval_masses(thetas: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let pdf: Vec<f64> = thetas.iter().map(|&t| 2.0 * PI * f(t) * t.sin()).collect();
    thetas
        .windows(2)
        .zip(pdf.windows(2))
        .map(|(t, p)| 0.5 * (p[0] + p[1]) * (t[1] - t[0]))
        .collect()
}

/// Scattering-weighted mixture of the seawater, particle and turbulence
/// phase functions, with a tabulated CDF for inverse-transform sampling.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct CompositeVsf {
    budget: ScatteringBudget,
    params: PhaseFunctionParams,
    /// Per-component normalizers `2π ∫ β_i sin θ dθ`; zero for unused terms.
    norms: [f64; 3],
    thetas: Vec<f64>,
    cdf: Vec<f64>,
    /// guide[j] = last knot whose CDF is <= j / guide.len()
    guide: Vec<u32>,
}

impl CompositeVsf {
    pub fn compose(
        budget: ScatteringBudget,
        params: PhaseFunctionParams,
        resolution: usize,
    ) -> Result<Self> {
        params.validate()?;
        if resolution < 1000 {
            return Err(Error::Domain {
                name: "resolution",
                value: resolution as f64,
                expected: "resolution >= 1000",
            });
        }
        if budget.scattering() <= 0.0 {
            return Err(Error::Degenerate("total scattering coefficient is zero".into()));
        }
        let thetas = knots(resolution);
        let weights = budget.weights();

        let mut norms = [0.0; 3];
        let mut mixed = vec![0.0; thetas.len() - 1];
        for (i, component) in Component::ALL.iter().enumerate() {
            if weights[i] == 0.0 {
                continue;
            }
            let masses = interval_masses(&thetas, |t| component.raw(t, &params));
            let mut masses = masses;
            if *component == Component::Turbulence {
                // the truncated support starts at the second knot
                masses[0] = 0.0;
            }
            let norm: f64 = masses.iter().sum();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::Degenerate(format!(
                    "{component:?} phase function integrates to {norm}"
                )));
            }
            norms[i] = norm;
            for (m, x) in mixed.iter_mut().zip(&masses) {
                *m += weights[i] * x / norm;
            }
        }

        let mut cdf = Vec::with_capacity(thetas.len());
        cdf.push(0.0);
        let mut acc = 0.0;
        for m in &mixed {
            acc += m;
            cdf.push(acc);
        }
        let deviation = (acc - 1.0).abs();
        if deviation > NORMALIZATION_LIMIT {
            return Err(Error::Normalization {
                deviation,
                limit: NORMALIZATION_LIMIT,
            });
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        *cdf.last_mut().unwrap() = 1.0;

        let guide = build_guide(&cdf, thetas.len());
        Ok(Self {
            budget,
            params,
            norms,
            thetas,
            cdf,
            guide,
        })
    }

    pub fn budget(&self) -> &ScatteringBudget {
        &self.budget
    }

    pub fn params(&self) -> &PhaseFunctionParams {
        &self.params
    }

    pub fn resolution(&self) -> usize {
        self.thetas.len()
    }

    /// Knot angles and cumulative probabilities of the sampling table.
    pub fn table(&self) -> (&[f64], &[f64]) {
        (&self.thetas, &self.cdf)
    }

    /// Normalized density of one component, β̃_i(θ).
    pub fn component_density(&self, component: Component, theta: f64) -> f64 {
        let i = component as usize;
        if self.norms[i] == 0.0 {
            return 0.0;
        }
        component.raw(theta, &self.params) / self.norms[i]
    }

    /// Normalized mixture β̃(θ) = Σ (b_i / b) β̃_i(θ).
    pub fn density(&self, theta: f64) -> f64 {
        let w = self.budget.weights();
        Component::ALL
            .iter()
            .zip(w)
            .filter(|(_, w)| *w > 0.0)
            .map(|(c, w)| w * self.component_density(*c, theta))
            .sum()
    }

    /// Cumulative probability of polar angles up to θ, interpolated from the table.
    pub fn cdf(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta >= PI {
            return 1.0;
        }
        let k = self.thetas.partition_point(|&t| t <= theta) - 1;
        let (t0, t1) = (self.thetas[k], self.thetas[k + 1]);
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        c0 + (c1 - c0) * (theta - t0) / (t1 - t0)
    }

    /// Polar scattering angle for a uniform deviate ε ∈ [0, 1].
    pub fn sample_theta(&self, epsilon: f64) -> f64 {
        if !(epsilon > 0.0) {
            return 0.0;
        }
        if epsilon >= 1.0 {
            return PI;
        }
        let last = self.cdf.len() - 1;
        let bucket = ((epsilon * self.guide.len() as f64) as usize).min(self.guide.len() - 1);
        let mut k = self.guide[bucket] as usize;
        while k + 1 < last && self.cdf[k + 1] <= epsilon {
            k += 1;
        }
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let (t0, t1) = (self.thetas[k], self.thetas[k + 1]);
        let span = c1 - c0;
        if span <= 0.0 {
            return t0;
        }
        (t0 + (t1 - t0) * (epsilon - c0) / span).clamp(0.0, PI)
    }
}

fn build_guide(cdf: &[f64], size: usize) -> Vec<u32> {
    let mut guide = Vec::with_capacity(size);
    let mut k = 0usize;
    for j in 0..size {
        let level = j as f64 / size as f64;
        while k + 2 < cdf.len() && cdf[k + 1] <= level {
            k += 1;
        }
        guide.push(k as u32);
    }
    guide
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn seawater_values() {
        assert_relative_eq!(beta_seawater(0.0).unwrap(), 0.114_228_75, epsilon = 1e-12);
        assert_relative_eq!(beta_seawater(PI / 2.0).unwrap(), 0.06225, epsilon = 1e-12);
        assert_relative_eq!(beta_seawater(PI).unwrap(), 0.114_228_75, epsilon = 1e-12);
        assert!(beta_seawater(-0.1).is_err());
        assert!(beta_seawater(3.2).is_err());
    }

    #[test]
    fn hg_values() {
        // independent scalar evaluation: 0.049375 / (4π · 0.000625)
        let forward = 0.049375 / (4.0 * PI * 0.000625);
        assert_relative_eq!(beta_hg(0.0, 0.975, 1.0).unwrap(), forward, max_relative = 1e-12);
        assert_relative_eq!(forward, 6.2866, max_relative = 1e-4);
        let back = 0.049375 / (4.0 * PI * 3.900625);
        assert_relative_eq!(beta_hg(PI, 0.975, 1.0).unwrap(), back, max_relative = 1e-12);
        assert_relative_eq!(back, 1.0074e-3, max_relative = 1e-4);
        for theta in [0.0, 0.3, 1.7, PI] {
            for exponent in [1.0, 1.5] {
                assert_relative_eq!(
                    beta_hg(theta, 0.0, exponent).unwrap(),
                    1.0 / (4.0 * PI),
                    max_relative = 1e-12
                );
            }
        }
        assert!(matches!(beta_hg(0.0, 1.0, 1.0), Err(Error::Degenerate(_))));
        assert!(beta_hg(4.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn ff_parameters() {
        let p = PhaseFunctionParams::default();
        assert_relative_eq!(p.ff_exponent(), -0.025, epsilon = 1e-15);
        let expected = 4.0 / 3.0 / (0.33f64 * 0.33);
        assert_relative_eq!(p.ff_delta(PI), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 12.2437, max_relative = 1e-5);
    }

    #[test]
    fn ff_singularity_and_small_angle_weight() {
        let p = PhaseFunctionParams::default();
        assert!(matches!(beta_ff(0.0, &p), Err(Error::Singularity(_))));
        let near = beta_ff(1e-3, &p).unwrap();
        let far = beta_ff(0.1, &p).unwrap();
        assert!(near > far);
        assert!(beta_ff(PI, &p).unwrap() > 0.0);
    }

    #[test]
    fn ff_is_continuous_across_delta_one() {
        let p = PhaseFunctionParams::default();
        let theta_star = 2.0 * (3f64.sqrt() * 0.33 / 2.0).asin();
        let at = beta_ff(theta_star, &p).unwrap();
        let below = beta_ff(theta_star - 1e-3, &p).unwrap();
        let above = beta_ff(theta_star + 1e-3, &p).unwrap();
        assert!(at.is_finite());
        assert!((at - below).abs() < 1e-2 * at);
        assert!((at - above).abs() < 1e-2 * at);
    }

    #[test]
    fn budget_construction() {
        let b = ScatteringBudget::from_preset(COASTAL, 0.0).unwrap();
        assert_relative_eq!(b.b_particle(), 0.219 - 0.00233, epsilon = 1e-15);
        assert_relative_eq!(b.scattering(), 0.219, epsilon = 1e-15);
        assert_relative_eq!(b.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(ScatteringBudget::new(0.1, 0.001, B_SEAWATER, 0.0).is_err());
        assert!(ScatteringBudget::new(-0.1, 1.0, B_SEAWATER, 0.0).is_err());
        assert!(ScatteringBudget::new(0.0, 0.0, 0.0, 0.0).is_err());
        let turbulent = b.with_turbulence(0.1).unwrap();
        assert_relative_eq!(turbulent.scattering(), 0.319, epsilon = 1e-15);
        assert_relative_eq!(turbulent.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn seawater_only_mixture_is_normalized_seawater() {
        let budget = ScatteringBudget::new(0.1, B_SEAWATER, B_SEAWATER, 0.0).unwrap();
        let vsf = CompositeVsf::compose(budget, PhaseFunctionParams::default(), 5000).unwrap();
        for theta in [0.0, 0.5, 2.0, PI] {
            assert_eq!(
                vsf.density(theta),
                vsf.component_density(Component::Seawater, theta)
            );
        }
        // 0.06225 is the rounded analytic normalizer 1 / (4π (1 + 0.835 / 3))
        assert_relative_eq!(vsf.norms[0], 1.0, max_relative = 2e-5);
    }

    #[test]
    fn sample_endpoints_and_phi() {
        let vsf = CompositeVsf::compose(
            ScatteringBudget::from_preset(HARBOUR, 0.5).unwrap(),
            PhaseFunctionParams::default(),
            DEFAULT_RESOLUTION,
        )
        .unwrap();
        assert_eq!(vsf.sample_theta(0.0), 0.0);
        assert_eq!(vsf.sample_theta(1.0), PI);
        assert_eq!(sample_phi(0.0), 0.0);
        assert_eq!(sample_phi(0.5), PI);
        assert_eq!(sample_phi(1.0), 2.0 * PI);
        let (thetas, cdf) = vsf.table();
        assert_eq!(thetas.len(), cdf.len());
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!((cdf[0], *cdf.last().unwrap()), (0.0, 1.0));
    }

    #[test]
    fn isotropic_median_is_right_angle() {
        let params = PhaseFunctionParams {
            g: 0.0,
            ..Default::default()
        };
        let budget = ScatteringBudget::new(0.0, 1.0, 0.0, 0.0).unwrap();
        let vsf = CompositeVsf::compose(budget, params, 4000).unwrap();
        assert_relative_eq!(vsf.sample_theta(0.5), PI / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn rejects_coarse_table() {
        let budget = ScatteringBudget::from_preset(COASTAL, 0.0).unwrap();
        assert!(CompositeVsf::compose(budget, PhaseFunctionParams::default(), 999).is_err());
    }
}
