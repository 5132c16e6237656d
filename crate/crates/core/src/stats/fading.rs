//! Received-intensity fluctuations across an ensemble of turbulent channel
//! realizations, and log-normal / Gaussian fits to their histogram.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::response::RxConfig;
use crate::error::{check_range, Error, Result};
use crate::phase::{PhaseFunctionParams, ScatteringBudget};
use crate::rng::{derive_seed, StreamFactory};
use crate::transport::{simulate_fold, LinkConfig, Medium};

/// Smallest ensemble accepted by [`scintillation_ensemble`].
pub const MIN_ITERATIONS: usize = 30;

const BT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    LogNormal,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingFit {
    /// Normalized sample variance of the intensities.
    pub sigma_sim_sq: f64,
    /// Scintillation index of the fitted distribution. For a Gaussian fit
    /// this is its variance.
    pub sigma_i_sq: f64,
    /// Mean log-intensity (log-normal) or mean intensity (Gaussian).
    pub mu: f64,
    /// Spread parameter: σ of ln I, or σ of I.
    pub sigma: f64,
    pub r_squared: f64,
    pub kind: FitKind,
}

impl FadingFit {
    /// Fitted density at normalized intensity `x`.
    pub fn density(&self, x: f64) -> f64 {
        if self.sigma > 0.0 {
            pdf(self.kind, x, self.mu, self.sigma)
        } else {
            0.0
        }
    }
}

/// `(⟨I²⟩ − ⟨I⟩²) / ⟨I⟩²`.
pub fn scintillation_index(samples: &[f64]) -> Result<f64> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.is_empty() || !(mean > 0.0) {
        return Err(Error::Degenerate("intensity samples have no positive mean".into()));
    }
    let second = samples.iter().map(|v| v * v).sum::<f64>() / n;
    Ok(((second - mean * mean) / (mean * mean)).max(0.0))
}

/// Density histogram with `⌈√n⌉` equal bins spanning the samples, as
/// (bin centre, density) pairs.
pub fn density_histogram(samples: &[f64]) -> Vec<(f64, f64)> {
    let n = samples.len();
    let bins = (n as f64).sqrt().ceil().max(1.0) as usize;
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    if !(width > 0.0) {
        return Vec::new();
    }
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let k = (((s - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + (k as f64 + 0.5) * width, c as f64 / (n as f64 * width)))
        .collect()
}

fn pdf(kind: FitKind, x: f64, loc: f64, sigma: f64) -> f64 {
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    match kind {
        FitKind::Gaussian => norm * (-(x - loc).powi(2) / (2.0 * sigma * sigma)).exp(),
        FitKind::LogNormal if x > 0.0 => {
            norm / x * (-(x.ln() - loc).powi(2) / (2.0 * sigma * sigma)).exp()
        }
        FitKind::LogNormal => 0.0,
    }
}

/// Least-squares fit of `(loc, ln σ)` to histogram densities.
fn least_squares(kind: FitKind, hist: &[(f64, f64)], start: (f64, f64)) -> (f64, f64, f64) {
    let sse = |loc: f64, ls: f64| -> f64 {
        hist.iter()
            .map(|&(x, d)| (d - pdf(kind, x, loc, ls.exp())).powi(2))
            .sum()
    };
    let (mut loc, mut ls) = (start.0, start.1.ln());
    let mut ss = sse(loc, ls);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut a = Matrix2::zeros();
        let mut g = Vector2::zeros();
        for &(x, d) in hist {
            let s = ls.exp();
            let f = pdf(kind, x, loc, s);
            let u = match kind {
                FitKind::Gaussian => x - loc,
                FitKind::LogNormal if x > 0.0 => x.ln() - loc,
                FitKind::LogNormal => continue,
            };
            let j = Vector2::new(f * u / (s * s), f * (u * u / (s * s) - 1.0));
            a += j * j.transpose();
            g += j * (d - f);
        }
        let mut damped = a;
        for i in 0..2 {
            damped[(i, i)] += lambda * a[(i, i)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&g) else {
            break;
        };
        let (nl, ns) = (loc + step[0], ls + step[1]);
        let trial = sse(nl, ns);
        if trial.is_finite() && trial <= ss {
            let done = ss - trial <= 1e-15 * ss;
            loc = nl;
            ls = ns;
            ss = trial;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
    }
    (loc, ls.exp(), ss)
}

/// Normalizes `samples` by their mean and fits a distribution of `kind` to
/// the density histogram.
pub fn fit_fading(samples: &[f64], kind: FitKind) -> Result<FadingFit> {
    let sigma_sim_sq = scintillation_index(samples)?;
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let norm: Vec<f64> = samples.iter().map(|s| s / mean).collect();
    let hist = density_histogram(&norm);
    if hist.is_empty() {
        return Ok(FadingFit {
            sigma_sim_sq,
            sigma_i_sq: 0.0,
            mu: if kind == FitKind::Gaussian { 1.0 } else { 0.0 },
            sigma: 0.0,
            r_squared: 1.0,
            kind,
        });
    }
    let start = match kind {
        FitKind::Gaussian => (1.0, sigma_sim_sq.sqrt()),
        FitKind::LogNormal => {
            let logs: Vec<f64> = norm.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
            if logs.len() < 2 {
                return Err(Error::Degenerate("too few positive intensities".into()));
            }
            let m = logs.iter().sum::<f64>() / logs.len() as f64;
            let v = logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / logs.len() as f64;
            (m, v.sqrt().max(1e-6))
        }
    };
    let (mu, sigma, ss) = least_squares(kind, &hist, start);
    let dmean = hist.iter().map(|h| h.1).sum::<f64>() / hist.len() as f64;
    let ss_tot: f64 = hist.iter().map(|h| (h.1 - dmean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss / ss_tot } else { 1.0 };
    let sigma_i_sq = match kind {
        FitKind::LogNormal => (sigma * sigma).exp_m1(),
        FitKind::Gaussian => sigma * sigma,
    };
    Ok(FadingFit {
        sigma_sim_sq,
        sigma_i_sq,
        mu,
        sigma,
        r_squared,
        kind,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingEnsemble {
    pub fit: FadingFit,
    /// Received aperture weight per launched photon, one per iteration.
    pub samples: Vec<f64>,
    /// Turbulence coefficient drawn for each iteration (1/m).
    pub turbulence: Vec<f64>,
    pub photons_per_iter: u64,
}

/// Intensity received by the on-axis aperture of `rx` through `medium`.
pub fn aperture_intensity(link: &LinkConfig, medium: &Medium, rx: &RxConfig) -> Result<f64> {
    let r2 = rx.aperture_radius * rx.aperture_radius;
    let (w, _) = simulate_fold(
        link,
        medium,
        rx.fov_limit,
        || 0.0,
        |acc: &mut f64, r| {
            if r.x * r.x + r.y * r.y <= r2 {
                *acc += r.weight;
            }
        },
        |a, b| *a += b,
    )?;
    Ok(w / link.photon_count as f64)
}

/// Draws `n_iter` channel realizations with `b_t ~ U[0, bt_max]` on top of
/// `base`, records the aperture intensity of each and fits the normalized
/// histogram: Gaussian when `bt_max = 0`, log-normal otherwise.
#[allow(clippy::too_many_arguments)]
pub fn scintillation_ensemble(
    link: &LinkConfig,
    base: &ScatteringBudget,
    params: &PhaseFunctionParams,
    resolution: usize,
    rx: &RxConfig,
    n_iter: usize,
    photons_per_iter: u64,
    bt_max: f64,
) -> Result<FadingEnsemble> {
    if n_iter < MIN_ITERATIONS {
        return Err(Error::InsufficientData {
            found: n_iter,
            needed: MIN_ITERATIONS,
        });
    }
    check_range("bt_max", bt_max, 0.0, f64::INFINITY, ">= 0")?;
    rx.validate()?;
    let draws = StreamFactory::new(derive_seed(link.seed, BT_STREAM));

    let runs: Vec<(f64, f64)> = (0..n_iter as u64)
        .into_par_iter()
        .map(|i| {
            let b_t = bt_max * draws.stream(i).random::<f64>();
            let medium = Medium::new(base.with_turbulence(b_t)?, *params, resolution)?;
            let iter_link = LinkConfig {
                photon_count: photons_per_iter,
                seed: derive_seed(link.seed, i),
                ..*link
            };
            Ok((b_t, aperture_intensity(&iter_link, &medium, rx)?))
        })
        .collect::<Result<_>>()?;

    let (turbulence, samples): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();
    if samples.iter().all(|&s| s == 0.0) {
        return Err(Error::Degenerate("no weight reached the aperture in any iteration".into()));
    }
    let kind = if bt_max == 0.0 {
        FitKind::Gaussian
    } else {
        FitKind::LogNormal
    };
    Ok(FadingEnsemble {
        fit: fit_fading(&samples, kind)?,
        samples,
        turbulence,
        photons_per_iter,
    })
}
