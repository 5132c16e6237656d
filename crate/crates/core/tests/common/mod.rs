//! Reference computations shared by the integration tests. Nothing here
//! calls into the sampling tables or closed forms under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use uowc::phase::{beta_ff, beta_hg, beta_seawater, PhaseFunctionParams, ScatteringBudget};

/// Adaptive Simpson quadrature on [a, b].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Tabulated CDF of the composite scattering angle, built by trapezoid
/// integration of the analytic component densities on a much finer grid
/// than the sampler uses. Mass below 1e-6 rad is ignored.
pub struct AngleCdf {
    thetas: Vec<f64>,
    cdf: Vec<f64>,
}

impl AngleCdf {
    pub fn new(budget: &ScatteringBudget, params: &PhaseFunctionParams) -> Self {
        const N: usize = 400_000;
        const FLOOR: f64 = 1e-6;
        let mut thetas = Vec::with_capacity(N);
        let (l0, l1) = (FLOOR.ln(), PI.ln());
        for i in 0..N {
            thetas.push((l0 + (l1 - l0) * i as f64 / (N - 1) as f64).exp());
        }
        *thetas.last_mut().unwrap() = PI;

        let [w_sw, w_p, w_t] = budget.weights();
        let components: [(f64, Box<dyn Fn(f64) -> f64>); 3] = [
            (w_sw, Box::new(|t| beta_seawater(t).unwrap())),
            (w_p, Box::new(|t| beta_hg(t, params.g, params.hg_exponent).unwrap())),
            (w_t, Box::new(|t| if t < FLOOR { 0.0 } else { beta_ff(t, params).unwrap() })),
        ];
        let mut cdf = vec![0.0; thetas.len()];
        for (w, f) in components.iter().filter(|c| c.0 > 0.0) {
            let pdf: Vec<f64> = thetas.iter().map(|&t| f(t) * t.sin()).collect();
            let mut acc = vec![0.0; thetas.len()];
            for i in 1..thetas.len() {
                acc[i] = acc[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * (thetas[i] - thetas[i - 1]);
            }
            let total = acc[acc.len() - 1];
            for (c, a) in cdf.iter_mut().zip(&acc) {
                *c += w * a / total;
            }
        }
        Self { thetas, cdf }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let k = self.thetas.partition_point(|&t| t <= theta);
        if k == 0 {
            return 0.0;
        }
        if k >= self.thetas.len() {
            return 1.0;
        }
        let (t0, t1) = (self.thetas[k - 1], self.thetas[k]);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        c0 + (c1 - c0) * (theta - t0) / (t1 - t0)
    }
}

/// Two-sided Kolmogorov-Smirnov distance between `samples` and `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Slot energies of a response density `h` (1/s) driven by a unit-area
/// rectangular pulse of width `t_b`, by nested quadrature.
pub fn slot_energies(h: &dyn Fn(f64) -> f64, t_b: f64, slots: usize) -> Vec<f64> {
    let received = |t: f64| {
        let lo = (t - t_b).max(0.0);
        if t <= 0.0 {
            0.0
        } else {
            integrate(h, lo, t, 1e-16) / t_b
        }
    };
    (0..slots)
        .map(|k| {
            let (a, b) = (k as f64 * t_b, (k + 1) as f64 * t_b);
            integrate(&received, a, b, 1e-15)
        })
        .collect()
}

/// Mean count in each slot for `bits`, straight from the definition.
pub fn convolve_rates(bits: &[u8], taps: &[f64], n_ph: f64, n_bg: f64) -> Vec<f64> {
    let mut out = vec![n_bg; bits.len()];
    for (i, &x) in bits.iter().enumerate() {
        if x == 1 {
            for (k, p) in taps.iter().enumerate() {
                if i + k < bits.len() {
                    out[i + k] += n_ph * p;
                }
            }
        }
    }
    out
}

/// ln of the Poisson mass, with ln y! summed directly.
pub fn ln_pois(y: u64, a: f64) -> f64 {
    let lf: f64 = (1..=y).map(|k| (k as f64).ln()).sum();
    if a == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y as f64 * a.ln() - a - lf
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// ln P(y^L) summed over all 2^L equiprobable input strings.
pub fn exhaustive_ln_probability(counts: &[u64], taps: &[f64], n_ph: f64, n_bg: f64) -> f64 {
    let l = counts.len();
    let terms: Vec<f64> = (0..1u64 << l)
        .map(|word| {
            let bits: Vec<u8> = (0..l).map(|i| ((word >> i) & 1) as u8).collect();
            let a = convolve_rates(&bits, taps, n_ph, n_bg);
            let ll: f64 = counts.iter().zip(&a).map(|(&y, &a)| ln_pois(y, a)).sum();
            ll - l as f64 * std::f64::consts::LN_2
        })
        .collect();
    log_sum_exp(&terms)
}

/// Entropy of a Poisson variable with mean `a`, in bits.
pub fn poisson_entropy_bits(a: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let top = (a + 40.0 * a.sqrt() + 40.0) as u64;
    let h: f64 = (0..=top)
        .map(|y| {
            let lp = ln_pois(y, a);
            -lp.exp() * lp
        })
        .sum();
    h / std::f64::consts::LN_2
}
