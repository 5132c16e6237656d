//! Double-gamma impulse-response model and its least-squares fit.
//!
//! `h(t) = C1 t exp(-C2 t) + C3 t exp(-C4 t)` gives the probability per time
//! bin at time `t` after the ballistic arrival, so it shares units with the
//! Monte-Carlo histogram it is fitted to.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::response::compute_drms;
use crate::error::{Error, Result};

/// Minimum number of non-empty bins accepted by [`fit_dgf`].
pub const MIN_OCCUPIED_BINS: usize = 8;

const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgfFit {
    pub c1: f64,
    /// Decay rate of the first term (1/s).
    pub c2: f64,
    pub c3: f64,
    /// Decay rate of the second term (1/s).
    pub c4: f64,
    pub r_squared: f64,
    /// RMS delay spread of the fitted curve sampled on the histogram bins (s).
    pub d_rms: f64,
    /// Width of the histogram bins the constants refer to (s).
    pub bin_width: f64,
}

impl DgfFit {
    /// Builds a fit record from known constants, sampling `n_bins` bins of
    /// width `bin_width` for the delay spread.
    pub fn from_constants(
        c: [f64; 4],
        bin_width: f64,
        n_bins: usize,
    ) -> Result<Self> {
        if !(c[1] > 0.0 && c[3] > 0.0) {
            return Err(Error::Domain {
                name: "decay rate",
                value: c[1].min(c[3]),
                expected: "> 0",
            });
        }
        let mut fit = DgfFit {
            c1: c[0],
            c2: c[1],
            c3: c[2],
            c4: c[3],
            r_squared: 1.0,
            d_rms: 0.0,
            bin_width,
        };
        fit.d_rms = compute_drms(&fit.sample(n_bins), bin_width)?;
        Ok(fit)
    }

    pub fn constants(&self) -> [f64; 4] {
        [self.c1, self.c2, self.c3, self.c4]
    }

    /// Probability per bin at time `t` (s).
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.c1 * t * (-self.c2 * t).exp() + self.c3 * t * (-self.c4 * t).exp()
    }

    /// Probability density (1/s).
    pub fn density(&self, t: f64) -> f64 {
        self.eval(t) / self.bin_width
    }

    /// Integral of the density over all time: the channel gain.
    pub fn total_gain(&self) -> f64 {
        (self.c1 / (self.c2 * self.c2) + self.c3 / (self.c4 * self.c4)) / self.bin_width
    }

    /// Curve evaluated at the centres of `n` bins.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.eval((i as f64 + 0.5) * self.bin_width))
            .collect()
    }
}

/// Model in bin units: `tau` is time over bin width, `y` is probability
/// over the histogram peak. Parameters are `[a1, ln k2, a3, ln k4]`.
struct Scaled<'a> {
    tau: &'a [f64],
    y: &'a [f64],
}

impl Scaled<'_> {
    fn residuals(&self, p: &Vector4<f64>) -> Option<(f64, Vec<f64>)> {
        let (k2, k4) = (p[1].exp(), p[3].exp());
        if !(k2.is_finite() && k4.is_finite()) {
            return None;
        }
        let mut ss = 0.0;
        let r: Vec<f64> = self
            .tau
            .iter()
            .zip(self.y)
            .map(|(&t, &y)| {
                let r = y - p[0] * t * (-k2 * t).exp() - p[2] * t * (-k4 * t).exp();
                ss += r * r;
                r
            })
            .collect();
        ss.is_finite().then_some((ss, r))
    }

    fn normal_equations(&self, p: &Vector4<f64>, r: &[f64]) -> (Matrix4<f64>, Vector4<f64>) {
        let (k2, k4) = (p[1].exp(), p[3].exp());
        let mut a = Matrix4::zeros();
        let mut g = Vector4::zeros();
        for (&t, &ri) in self.tau.iter().zip(r) {
            let e2 = t * (-k2 * t).exp();
            let e4 = t * (-k4 * t).exp();
            let j = Vector4::new(e2, -p[0] * e2 * k2 * t, e4, -p[2] * e4 * k4 * t);
            a += j * j.transpose();
            g += j * ri;
        }
        (a, g)
    }

    /// Best amplitudes for fixed decay rates.
    fn amplitudes(&self, k2: f64, k4: f64) -> Option<(f64, f64)> {
        let mut a = Matrix2::zeros();
        let mut b = Vector2::zeros();
        for (&t, &y) in self.tau.iter().zip(self.y) {
            let phi = Vector2::new(t * (-k2 * t).exp(), t * (-k4 * t).exp());
            a += phi * phi.transpose();
            b += phi * y;
        }
        let x = a.lu().solve(&b)?;
        (x[0].is_finite() && x[1].is_finite()).then_some((x[0], x[1]))
    }

    /// Damped Gauss-Newton from `p`. Returns the end point, its residual sum
    /// of squares and whether the iteration settled.
    fn levenberg_marquardt(&self, mut p: Vector4<f64>) -> Option<(Vector4<f64>, f64, bool)> {
        let (mut ss, mut r) = self.residuals(&p)?;
        let mut lambda = 1e-3;
        for _ in 0..MAX_ITERATIONS {
            let (a, g) = self.normal_equations(&p, &r);
            let mut damped = a;
            for i in 0..4 {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-30);
            }
            let step = match damped.cholesky() {
                Some(c) => c.solve(&g),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return Some((p, ss, true));
                    }
                    continue;
                }
            };
            let trial = p + step;
            match self.residuals(&trial) {
                Some((ss_new, r_new)) if ss_new <= ss => {
                    let small_gain = ss - ss_new <= 1e-14 * ss.max(f64::MIN_POSITIVE);
                    let small_step = step.norm() <= 1e-12 * (p.norm() + 1e-12);
                    p = trial;
                    ss = ss_new;
                    r = r_new;
                    lambda = (lambda / 10.0).max(1e-15);
                    if small_gain || small_step || ss == 0.0 {
                        return Some((p, ss, true));
                    }
                }
                _ => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return Some((p, ss, true));
                    }
                }
            }
        }
        Some((p, ss, false))
    }
}

/// Fits the double-gamma model to a histogram of probability per bin whose
/// bins have width `bin_width`, with bin `i` centred at `(i + 0.5) · bin_width`.
pub fn fit_dgf(impulse_hist: &[f64], bin_width: f64) -> Result<DgfFit> {
    if !(bin_width > 0.0) {
        return Err(Error::Domain {
            name: "bin_width",
            value: bin_width,
            expected: "> 0",
        });
    }
    let occupied = impulse_hist.iter().filter(|&&h| h > 0.0).count();
    if occupied < MIN_OCCUPIED_BINS {
        return Err(Error::InsufficientData {
            found: occupied,
            needed: MIN_OCCUPIED_BINS,
        });
    }
    let peak = impulse_hist.iter().cloned().fold(0.0, f64::max);
    let y: Vec<f64> = impulse_hist.iter().map(|h| h / peak).collect();
    let tau: Vec<f64> = (0..y.len()).map(|i| i as f64 + 0.5).collect();
    let model = Scaled { tau: &tau, y: &y };

    let mass: f64 = y.iter().sum();
    let mean_tau = y.iter().zip(&tau).map(|(y, t)| y * t).sum::<f64>() / mass;
    let c0 = 2.0 / mean_tau;

    let mut starts = vec![(c0 * 10f64.sqrt(), c0 / 10f64.sqrt())];
    for i in -2..=6 {
        for j in -4..=2 {
            let (k2, k4) = (c0 * 10f64.powf(i as f64 / 2.0), c0 * 10f64.powf(j as f64 / 2.0));
            if k2 > 1.5 * k4 {
                starts.push((k2, k4));
            }
        }
    }

    let ss_tot = {
        let mean = mass / y.len() as f64;
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };
    let r_squared = |ss: f64| if ss_tot > 0.0 { 1.0 - ss / ss_tot } else { 1.0 };

    let mut best: Option<(Vector4<f64>, f64)> = None;
    let mut best_unsettled = f64::NEG_INFINITY;
    for &(k2, k4) in &starts {
        let Some((a1, a3)) = model.amplitudes(k2, k4) else {
            continue;
        };
        let Some((p, ss, settled)) =
            model.levenberg_marquardt(Vector4::new(a1, k2.ln(), a3, k4.ln()))
        else {
            continue;
        };
        if !settled {
            best_unsettled = best_unsettled.max(r_squared(ss));
            continue;
        }
        if best.as_ref().is_none_or(|b| ss < b.1) {
            best = Some((p, ss));
        }
    }
    let (p, ss) = best.ok_or(Error::NoConvergence {
        restarts: starts.len(),
        best_r_squared: best_unsettled,
    })?;

    let (mut t1, mut t2) = ((p[0], p[1].exp()), (p[2], p[3].exp()));
    if t2.1 > t1.1 {
        std::mem::swap(&mut t1, &mut t2);
    }
    let c = [
        t1.0 * peak / bin_width,
        t1.1 / bin_width,
        t2.0 * peak / bin_width,
        t2.1 / bin_width,
    ];
    let mut fit = DgfFit::from_constants(c, bin_width, impulse_hist.len())?;
    fit.r_squared = r_squared(ss).clamp(0.0, 1.0);
    Ok(fit)
}
