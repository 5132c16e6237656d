//! Weighted photon tracking from the transmitter plane `z = 0` to the
//! receiver plane `z = z_link`.
//!
//! Each history draws exponential free paths with the extinction coefficient,
//! multiplies its weight by the single scattering albedo at every interaction,
//! and is redirected by angles sampled from the composite phase function.
//! Histories are independent and are spread over the rayon pool in fixed-size
//! chunks whose results are merged in index order.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::phase::{sample_phi, CompositeVsf, PhaseFunctionParams, ScatteringBudget};
use crate::rng::{open_unit, StreamFactory};

/// Vacuum speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Interaction events after which a history is abandoned.
pub const EVENT_CAP: u64 = 1_000_000;

/// Photons per work unit. Fixed so that merge order never depends on the
/// number of threads.
const CHUNK: u64 = 4096;

/// Below this |μz| margin the rotation uses the polar-aligned form.
const POLAR_EPS: f64 = 1e-12;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photon {
    pub position: Vec3,
    pub direction: Vec3,
    pub weight: f64,
    pub path_length: f64,
    pub scatter_count: u32,
}

/// Geometry and bookkeeping for a transport run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Link length (m).
    pub z_link: f64,
    /// Full cone angle of the source (rad).
    pub beam_divergence: f64,
    /// Histories whose weight drops below this are discarded.
    pub weight_threshold: f64,
    pub n_water: f64,
    pub photon_count: u64,
    pub seed: u64,
    /// Stratify the first free path over the photon index. Unbiased; removes
    /// most of the binomial noise of the unscattered component.
    pub stratified_first_step: bool,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            z_link: 30.0,
            beam_divergence: 1.5e-3,
            weight_threshold: 1e-6,
            n_water: 1.33,
            photon_count: 1_000_000,
            seed: 1,
            stratified_first_step: true,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("z_link", self.z_link, f64::MIN_POSITIVE, f64::INFINITY, "z_link > 0")?;
        check_range("beam_divergence", self.beam_divergence, 0.0, PI, "0 <= divergence <= pi")?;
        check_range(
            "weight_threshold",
            self.weight_threshold,
            f64::MIN_POSITIVE,
            1.0 - f64::EPSILON,
            "0 < threshold < 1",
        )?;
        check_range("n_water", self.n_water, 1.0, f64::INFINITY, "n >= 1")?;
        Ok(())
    }

    /// Speed of light in the water (m/s).
    pub fn light_speed(&self) -> f64 {
        SPEED_OF_LIGHT / self.n_water
    }

    /// Arrival time of an on-axis unscattered photon (s).
    pub fn ballistic_time(&self) -> f64 {
        self.z_link / self.light_speed()
    }
}

/// State of a photon when it crosses the receiver plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    pub photon: u64,
    pub x: f64,
    pub y: f64,
    /// Arrival time (s).
    pub t: f64,
    pub weight: f64,
    /// Angle between the propagation direction and +z (rad).
    pub incidence_angle: f64,
    pub scatter_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate {
    Arrived(ArrivalRecord),
    /// Weight fell below the threshold; carries the weight at discard.
    Absorbed(f64),
    /// Travelled back past `z = -z_link`.
    Lost,
}

/// A water column ready for transport: coefficients plus the sampling table,
/// which only exists when there is scattering.
#[derive(Debug, Clone)]
pub struct Medium {
    budget: ScatteringBudget,
    vsf: Option<CompositeVsf>,
}

impl Medium {
    pub fn new(budget: ScatteringBudget, params: PhaseFunctionParams, resolution: usize) -> Result<Self> {
        let vsf = if budget.scattering() > 0.0 {
            Some(CompositeVsf::compose(budget, params, resolution)?)
        } else {
            None
        };
        Ok(Self { budget, vsf })
    }

    pub fn from_vsf(vsf: CompositeVsf) -> Self {
        Self {
            budget: *vsf.budget(),
            vsf: Some(vsf),
        }
    }

    pub fn budget(&self) -> &ScatteringBudget {
        &self.budget
    }

    pub fn vsf(&self) -> Option<&CompositeVsf> {
        self.vsf.as_ref()
    }
}

/// Launches a photon from the origin, uniformly in polar angle within the
/// half cone and uniformly in azimuth.
pub fn emit_photon<R: Rng + ?Sized>(config: &LinkConfig, rng: &mut R) -> Photon {
    let half_angle = 0.5 * config.beam_divergence;
    let polar = half_angle * rng.random::<f64>();
    let azimuth = 2.0 * PI * rng.random::<f64>();
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Photon {
        position: [0.0; 3],
        direction: [sp * ca, sp * sa, cp],
        weight: 1.0,
        path_length: 0.0,
        scatter_count: 0,
    }
}

/// Free path Δs = −ln(ε) / c.
pub fn step_length(c: f64, epsilon: f64) -> Result<f64> {
    check_range("c", c, f64::MIN_POSITIVE, f64::INFINITY, "c > 0")?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            expected: "0 < epsilon <= 1",
        });
    }
    Ok(-epsilon.ln() / c)
}

/// W ← W · b / c at an interaction.
pub fn update_weight(mut photon: Photon, budget: &ScatteringBudget) -> Photon {
    photon.weight *= budget.albedo();
    photon.scatter_count += 1;
    photon
}

/// Rotates `direction` by polar angle `theta` and azimuth `phi` about itself.
pub fn scatter_direction(direction: Vec3, theta: f64, phi: f64) -> Vec3 {
    let [ux, uy, uz] = direction;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let rotated = if uz.abs() < 1.0 - POLAR_EPS {
        let root = (1.0 - uz * uz).sqrt();
        [
            st * (ux * uz * cp - uy * sp) / root + ux * ct,
            st * (uy * uz * cp + ux * sp) / root + uy * ct,
            -root * st * cp + uz * ct,
        ]
    } else {
        [st * cp, st * sp, uz.signum() * ct]
    };
    let norm = (rotated[0] * rotated[0] + rotated[1] * rotated[1] + rotated[2] * rotated[2]).sqrt();
    [rotated[0] / norm, rotated[1] / norm, rotated[2] / norm]
}

/// Follows one history until it reaches the receiver plane, is discarded,
/// or escapes backwards.
///
/// `first_epsilon` overrides the uniform deviate of the first free path.
pub fn propagate_photon<R: Rng + ?Sized>(
    config: &LinkConfig,
    medium: &Medium,
    index: u64,
    first_epsilon: Option<f64>,
    rng: &mut R,
) -> Result<Fate> {
    let budget = medium.budget();
    let c = budget.extinction();
    let albedo = budget.albedo();
    let mut photon = emit_photon(config, rng);
    let mut first = first_epsilon;

    for _ in 0..EVENT_CAP {
        let epsilon = first.take().unwrap_or_else(|| open_unit(rng));
        let ds = -epsilon.ln() / c;
        let [x, y, z] = photon.position;
        let [ux, uy, uz] = photon.direction;

        if z + ds * uz >= config.z_link {
            let partial = (config.z_link - z) / uz;
            let path = photon.path_length + partial;
            return Ok(Fate::Arrived(ArrivalRecord {
                photon: index,
                x: x + partial * ux,
                y: y + partial * uy,
                t: path / config.light_speed(),
                weight: photon.weight,
                incidence_angle: uz.clamp(-1.0, 1.0).acos(),
                scatter_count: photon.scatter_count,
            }));
        }

        photon.position = [x + ds * ux, y + ds * uy, z + ds * uz];
        photon.path_length += ds;
        if photon.position[2] < -config.z_link {
            return Ok(Fate::Lost);
        }

        photon.weight *= albedo;
        photon.scatter_count += 1;
        if photon.weight < config.weight_threshold {
            return Ok(Fate::Absorbed(photon.weight));
        }

        let Some(vsf) = medium.vsf() else {
            return Ok(Fate::Absorbed(photon.weight));
        };
        let theta = vsf.sample_theta(rng.random::<f64>());
        let phi = sample_phi(rng.random::<f64>());
        photon.direction = scatter_direction(photon.direction, theta, phi);
    }
    Err(Error::EventCap { cap: EVENT_CAP })
}

/// Counts and weights of history outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub launched: u64,
    pub arrived: u64,
    pub accepted: u64,
    pub absorbed: u64,
    pub lost: u64,
    pub capped: u64,
    /// Weight of all arrivals, before the field-of-view test.
    pub arrived_weight: f64,
    /// Weight of arrivals inside the field of view.
    pub accepted_weight: f64,
    /// Weight carried by histories at the moment they were discarded.
    pub discarded_weight: f64,
    pub min_arrival_time: f64,
}

impl Tally {
    fn empty() -> Self {
        Self {
            min_arrival_time: f64::INFINITY,
            ..Default::default()
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.launched += other.launched;
        self.arrived += other.arrived;
        self.accepted += other.accepted;
        self.absorbed += other.absorbed;
        self.lost += other.lost;
        self.capped += other.capped;
        self.arrived_weight += other.arrived_weight;
        self.accepted_weight += other.accepted_weight;
        self.discarded_weight += other.discarded_weight;
        self.min_arrival_time = self.min_arrival_time.min(other.min_arrival_time);
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// Accepted arrivals in photon-index order.
    pub arrivals: Vec<ArrivalRecord>,
    pub tally: Tally,
}

/// Runs `config.photon_count` histories and folds every arrival inside the
/// field of view into an accumulator.
///
/// `fold` sees arrivals of one chunk in index order; chunk accumulators are
/// then merged in chunk order, so the result is independent of the pool size.
pub fn simulate_fold<A, F, M>(
    config: &LinkConfig,
    medium: &Medium,
    fov_limit: f64,
    init: impl Fn() -> A + Sync,
    fold: F,
    merge: M,
) -> Result<(A, Tally)>
where
    A: Send,
    F: Fn(&mut A, &ArrivalRecord) + Sync,
    M: Fn(&mut A, A),
{
    config.validate()?;
    let n = config.photon_count;
    let factory = StreamFactory::new(config.seed);
    let chunks = n.div_ceil(CHUNK);

    let partials: Vec<(A, Tally)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = init();
            let mut tally = Tally::empty();
            let end = ((chunk + 1) * CHUNK).min(n);
            for index in chunk * CHUNK..end {
                let mut rng = factory.stream(index);
                let first = config
                    .stratified_first_step
                    .then(|| (index as f64 + open_unit(&mut rng)) / n as f64);
                tally.launched += 1;
                match propagate_photon(config, medium, index, first, &mut rng) {
                    Ok(Fate::Arrived(record)) => {
                        tally.arrived += 1;
                        tally.arrived_weight += record.weight;
                        tally.min_arrival_time = tally.min_arrival_time.min(record.t);
                        if record.incidence_angle <= fov_limit {
                            tally.accepted += 1;
                            tally.accepted_weight += record.weight;
                            fold(&mut acc, &record);
                        }
                    }
                    Ok(Fate::Absorbed(w)) => {
                        tally.absorbed += 1;
                        tally.discarded_weight += w;
                    }
                    Ok(Fate::Lost) => tally.lost += 1,
                    Err(_) => tally.capped += 1,
                }
            }
            (acc, tally)
        })
        .collect();

    let mut acc = init();
    let mut tally = Tally::empty();
    for (part, t) in partials {
        merge(&mut acc, part);
        tally.merge(&t);
    }
    Ok((acc, tally))
}

/// Runs all histories and returns the arrivals accepted by the receiver's
/// field of view.
pub fn run_simulation(config: &LinkConfig, medium: &Medium, fov_limit: f64) -> Result<SimulationOutput> {
    let (arrivals, tally) = simulate_fold(
        config,
        medium,
        fov_limit,
        Vec::new,
        |v: &mut Vec<ArrivalRecord>, r| v.push(*r),
        |v, mut other| v.append(&mut other),
    )?;
    Ok(SimulationOutput { arrivals, tally })
}
