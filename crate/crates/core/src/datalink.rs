//! OOK over the fitted channel: ISI taps, Poisson photon counting and the
//! information rate with i.u.d. inputs, estimated by a normalized forward
//! recursion over the ISI trellis.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{check_range, Error, Result};
use crate::rng::{derive_seed, StreamFactory};
use crate::stats::DgfFit;
use crate::transport::SPEED_OF_LIGHT;

pub const PLANCK: f64 = 6.62607e-34;

/// Default cap on the channel memory in bit slots.
pub const DEFAULT_MAX_MEMORY: usize = 12;

/// Mean photons emitted per `1` bit: `2 P_t T_b λ / (h c)`.
pub fn photons_per_bit(p_t: f64, t_b: f64, wavelength: f64) -> f64 {
    2.0 * p_t * t_b * wavelength / (PLANCK * SPEED_OF_LIGHT)
}

/// Transmitter and background settings independent of the bit rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transmitter {
    /// Average optical power (W).
    pub p_t: f64,
    /// Wavelength (m).
    pub wavelength: f64,
    /// Mean background photons per slot.
    pub n_bg: f64,
}

impl Default for Transmitter {
    fn default() -> Self {
        Self {
            p_t: 20e-3,
            wavelength: 532e-9,
            n_bg: 1e-3,
        }
    }
}

impl Transmitter {
    pub fn validate(&self) -> Result<()> {
        check_range("p_t", self.p_t, 0.0, f64::INFINITY, ">= 0")?;
        check_range("wavelength", self.wavelength, f64::MIN_POSITIVE, f64::INFINITY, "> 0")?;
        check_range("n_bg", self.n_bg, 0.0, f64::INFINITY, ">= 0")
    }

    pub fn budget(&self, t_b: f64) -> PhotonBudget {
        PhotonBudget {
            n_ph: photons_per_bit(self.p_t, t_b, self.wavelength),
            n_bg: self.n_bg,
            p_t: self.p_t,
            wavelength: self.wavelength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonBudget {
    pub n_ph: f64,
    pub n_bg: f64,
    pub p_t: f64,
    pub wavelength: f64,
}

/// ISI taps per bit slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteChannel {
    pub taps: Vec<f64>,
    pub bit_duration: f64,
}

impl DiscreteChannel {
    pub fn new(taps: Vec<f64>, bit_duration: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Degenerate("channel needs at least one tap".into()));
        }
        if let Some(&bad) = taps.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain {
                name: "tap",
                value: bad,
                expected: "finite and >= 0",
            });
        }
        check_range("bit_duration", bit_duration, f64::MIN_POSITIVE, f64::INFINITY, "> 0")?;
        Ok(Self { taps, bit_duration })
    }

    pub fn memory(&self) -> usize {
        self.taps.len()
    }
}

/// `∫_x^∞ ∫_s^∞ h(u) du ds` for the fitted density.
fn double_tail(fit: &DgfFit, x: f64) -> f64 {
    let term = |c: f64, k: f64| c / fit.bin_width / (k * k * k) * (-k * x).exp() * (2.0 + k * x);
    term(fit.c1, fit.c2) + term(fit.c3, fit.c4)
}

/// Tap `k` (1-based) for a unit-area rectangular pulse of width `t_b`.
fn tap(fit: &DgfFit, t_b: f64, k: usize) -> f64 {
    let r = |j: usize| double_tail(fit, j as f64 * t_b);
    let p = if k == 1 {
        fit.total_gain() - (r(0) - r(1)) / t_b
    } else {
        (r(k - 2) - 2.0 * r(k - 1) + r(k)) / t_b
    };
    p.max(0.0)
}

/// Energy of the fitted response falling in each bit slot after a
/// rectangular pulse of width `t_b`. The memory is the fewest taps leaving
/// less than `mass_cutoff` of the total gain in the tail.
pub fn discretize_response(
    fit: &DgfFit,
    t_b: f64,
    mass_cutoff: f64,
    max_memory: usize,
) -> Result<DiscreteChannel> {
    check_range("t_b", t_b, f64::MIN_POSITIVE, f64::INFINITY, "> 0")?;
    check_range("mass_cutoff", mass_cutoff, f64::MIN_POSITIVE, 1.0 - f64::EPSILON, "0 < cutoff < 1")?;
    let gain = fit.total_gain();
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Degenerate("fitted response has no positive gain".into()));
    }
    let mut taps = Vec::new();
    let mut captured = 0.0;
    loop {
        if taps.len() == max_memory {
            return Err(Error::MemoryCap {
                max: max_memory,
                bit_duration: t_b,
            });
        }
        let p = tap(fit, t_b, taps.len() + 1);
        taps.push(p);
        captured += p;
        if gain - captured < mass_cutoff * gain {
            break;
        }
    }
    DiscreteChannel::new(taps, t_b)
}

/// `a_i = N_ph Σ_k p_k x_{i−k+1} + n_bg`, where `recent[j]` is `x_{i−j}`.
/// Bits older than `recent` are taken as zero.
pub fn mean_photon_rate(recent: &[u8], channel: &DiscreteChannel, budget: &PhotonBudget) -> f64 {
    let signal: f64 = channel
        .taps
        .iter()
        .zip(recent)
        .filter(|(_, &x)| x != 0)
        .map(|(p, _)| p)
        .sum();
    budget.n_ph * signal + budget.n_bg
}

/// Mean counts for a whole bit stream, starting from an all-zero history.
pub fn mean_rates(bits: &[u8], channel: &DiscreteChannel, budget: &PhotonBudget) -> Vec<f64> {
    (0..bits.len())
        .map(|i| {
            let signal: f64 = channel
                .taps
                .iter()
                .enumerate()
                .take(i + 1)
                .filter(|(k, _)| bits[i - k] != 0)
                .map(|(_, p)| p)
                .sum();
            budget.n_ph * signal + budget.n_bg
        })
        .collect()
}

/// Photon count with mean `a`.
pub fn sample_output<R: Rng + ?Sized>(a: f64, rng: &mut R) -> u64 {
    if a <= 0.0 {
        return 0;
    }
    Poisson::new(a).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

const FACTORIAL_TABLE: usize = 256;

fn factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; FACTORIAL_TABLE];
        for n in 1..FACTORIAL_TABLE {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

/// ln(n!).
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < FACTORIAL_TABLE {
        return factorial_table()[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// ln P(y | a) for a Poisson count.
pub fn ln_poisson(y: u64, a: f64) -> f64 {
    if a <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    y as f64 * a.ln() - a - ln_factorial(y)
}

/// `−(1/L) Σ log₂ P(y_i | a_i)` with `a_i` driven by the known inputs.
pub fn entropy_rate_given_x(
    bits: &[u8],
    counts: &[u64],
    channel: &DiscreteChannel,
    budget: &PhotonBudget,
) -> Result<f64> {
    if bits.len() != counts.len() || bits.is_empty() {
        return Err(Error::Degenerate("input and output streams must match and be non-empty".into()));
    }
    let a = mean_rates(bits, channel, budget);
    let total: f64 = counts.iter().zip(&a).map(|(&y, &a)| ln_poisson(y, a)).sum();
    Ok(-total / (counts.len() as f64 * std::f64::consts::LN_2))
}

/// Per-branch mean counts of the trellis. Branch `(s << 1) | b` leaves
/// state `s` (bit `j` of `s` is `x_{i−1−j}`) on input `b`.
fn branch_rates(channel: &DiscreteChannel, budget: &PhotonBudget) -> Vec<f64> {
    let m = channel.memory();
    (0..1usize << m)
        .map(|branch| {
            let mut signal = 0.0;
            for (k, p) in channel.taps.iter().enumerate() {
                if (branch >> k) & 1 == 1 {
                    signal += p;
                }
            }
            budget.n_ph * signal + budget.n_bg
        })
        .collect()
}

/// Natural log of `P(y_1..y_L)` under equiprobable inputs and an all-zero
/// starting history, by the normalized forward recursion.
pub fn ln_output_probability(
    counts: &[u64],
    channel: &DiscreteChannel,
    budget: &PhotonBudget,
) -> Result<f64> {
    let m = channel.memory();
    let states = 1usize << (m - 1);
    let mask = states - 1;
    let rates = branch_rates(channel, budget);
    let ln_rates: Vec<f64> = rates.iter().map(|&a| if a > 0.0 { a.ln() } else { f64::NEG_INFINITY }).collect();

    let mut alpha = vec![0.0; states];
    alpha[0] = 1.0;
    let mut next = vec![0.0; states];
    let mut ln_branch = vec![0.0; 2 * states];
    let mut total = 0.0;
    for (slot, &y) in counts.iter().enumerate() {
        let yf = y as f64;
        let lf = ln_factorial(y);
        let mut top = f64::NEG_INFINITY;
        for (br, lb) in ln_branch.iter_mut().enumerate() {
            let a = rates[br];
            *lb = if a > 0.0 {
                yf * ln_rates[br] - a - lf
            } else if y == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            if alpha[br >> 1] > 0.0 {
                top = top.max(*lb);
            }
        }
        if !top.is_finite() {
            return Err(Error::TrellisUnderflow { slot });
        }
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut sum = 0.0;
        for s in 0..states {
            let w = alpha[s];
            if w == 0.0 {
                continue;
            }
            for b in 0..2 {
                let br = (s << 1) | b;
                let g = 0.5 * w * (ln_branch[br] - top).exp();
                next[br & mask] += g;
                sum += g;
            }
        }
        if !(sum > 0.0) {
            return Err(Error::TrellisUnderflow { slot });
        }
        for v in next.iter_mut() {
            *v /= sum;
        }
        std::mem::swap(&mut alpha, &mut next);
        total += top + sum.ln();
    }
    Ok(total)
}

/// `−(1/L) log₂ P(y_1..y_L)`.
pub fn entropy_rate_output(counts: &[u64], channel: &DiscreteChannel, budget: &PhotonBudget) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Degenerate("empty output stream".into()));
    }
    let ln_p = ln_output_probability(counts, channel, budget)?;
    Ok(-ln_p / (counts.len() as f64 * std::f64::consts::LN_2))
}

/// Minimum stream length for [`mutual_information`].
pub const MIN_STREAM: usize = 1000;

/// i.u.d. information rate `H(Y) − H(Y|X)` in bits per symbol, clamped to
/// [0, 1], from one simulated stream of `l_bits` symbols.
pub fn mutual_information<R: Rng + ?Sized>(
    channel: &DiscreteChannel,
    budget: &PhotonBudget,
    l_bits: usize,
    rng: &mut R,
) -> Result<f64> {
    if l_bits < MIN_STREAM {
        return Err(Error::InsufficientData {
            found: l_bits,
            needed: MIN_STREAM,
        });
    }
    let bits: Vec<u8> = (0..l_bits).map(|_| rng.random::<bool>() as u8).collect();
    let counts: Vec<u64> = mean_rates(&bits, channel, budget)
        .into_iter()
        .map(|a| sample_output(a, rng))
        .collect();
    let h_y = entropy_rate_output(&counts, channel, budget)?;
    let h_y_x = entropy_rate_given_x(&bits, &counts, channel, budget)?;
    Ok((h_y - h_y_x).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub symbol_rate: f64,
    pub memory: usize,
    pub mutual_info: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub points: Vec<RatePoint>,
    pub r_max: f64,
}

/// Settings shared by every point of a rate sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSettings {
    pub l_bits: usize,
    pub mass_cutoff: f64,
    pub max_memory: usize,
    pub seed: u64,
}

impl Default for RateSettings {
    fn default() -> Self {
        Self {
            l_bits: 100_000,
            mass_cutoff: 0.01,
            max_memory: DEFAULT_MAX_MEMORY,
            seed: 1,
        }
    }
}

/// `points` log-spaced symbol rates over `decades`, ending at the fastest
/// rate whose channel memory still fits in `max_memory` (to within a grid
/// step of 1%).
pub fn feasible_rate_grid(
    fit: &DgfFit,
    mass_cutoff: f64,
    max_memory: usize,
    points: usize,
    decades: f64,
) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Config("rate grid needs at least two points".into()));
    }
    let fits = |rate: f64| match discretize_response(fit, 1.0 / rate, mass_cutoff, max_memory) {
        Ok(_) => Ok(true),
        Err(Error::MemoryCap { .. }) => Ok(false),
        Err(e) => Err(e),
    };
    let mut lo = 1e6;
    let mut hi = 1e6;
    while fits(hi)? {
        hi *= 2.0;
        if hi > 1e16 {
            break;
        }
    }
    if !fits(lo)? {
        return Err(Error::MemoryCap {
            max: max_memory,
            bit_duration: 1.0 / lo,
        });
    }
    lo = hi / 2.0;
    while hi / lo > 1.01 {
        let mid = (lo * hi).sqrt();
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let top = lo;
    Ok((0..points)
        .map(|i| top * 10f64.powf(-decades * (points - 1 - i) as f64 / (points - 1) as f64))
        .collect())
}

/// Information rate at each symbol rate of `grid` and its best product
/// with the symbol rate.
pub fn max_rate(fit: &DgfFit, tx: &Transmitter, grid: &[f64], settings: &RateSettings) -> Result<RateSweep> {
    tx.validate()?;
    let streams = StreamFactory::new(derive_seed(settings.seed, 0x5241_5445));
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(i, &symbol_rate)| {
            check_range("symbol_rate", symbol_rate, f64::MIN_POSITIVE, f64::INFINITY, "> 0")?;
            let t_b = 1.0 / symbol_rate;
            let channel = discretize_response(fit, t_b, settings.mass_cutoff, settings.max_memory)?;
            let mut rng = streams.stream(i as u64);
            let mutual_info = mutual_information(&channel, &tx.budget(t_b), settings.l_bits, &mut rng)?;
            Ok(RatePoint {
                symbol_rate,
                memory: channel.memory(),
                mutual_info,
                rate: mutual_info * symbol_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r_max = points.iter().map(|p| p.rate).fold(0.0, f64::max);
    Ok(RateSweep { points, r_max })
}
