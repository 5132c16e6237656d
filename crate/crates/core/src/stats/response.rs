//! Receiver-plane binning: spatial intensity map, impulse-response
//! histogram, beam width and RMS delay spread.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::transport::ArrivalRecord;

/// Receiver geometry and binning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxConfig {
    /// Side of a square spatial bin (m).
    pub grid_pitch: f64,
    /// Width of a time bin (s).
    pub time_bin: f64,
    /// Acceptance half-angle (rad).
    pub fov_limit: f64,
    /// Half-width of the binned plane (m).
    pub map_extent: f64,
    /// Radius of the on-axis aperture feeding the impulse histogram (m).
    pub aperture_radius: f64,
    /// Number of time bins after the ballistic arrival time.
    pub time_bins: usize,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            grid_pitch: 0.1,
            time_bin: 1e-10,
            fov_limit: 10f64.to_radians(),
            map_extent: 15.0,
            aperture_radius: 0.05,
            time_bins: 400,
        }
    }
}

impl RxConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name, v| check_range(name, v, f64::MIN_POSITIVE, f64::INFINITY, "> 0");
        pos("grid_pitch", self.grid_pitch)?;
        pos("time_bin", self.time_bin)?;
        pos("fov_limit", self.fov_limit)?;
        pos("map_extent", self.map_extent)?;
        pos("aperture_radius", self.aperture_radius)?;
        if self.time_bins == 0 {
            return Err(Error::Config("time_bins must be positive".into()));
        }
        if self.map_extent < 0.5 * self.grid_pitch {
            return Err(Error::Config("map_extent smaller than one bin".into()));
        }
        Ok(())
    }

    /// Number of bins on each side of the centre bin.
    pub fn half_bins(&self) -> usize {
        (self.map_extent / self.grid_pitch).round() as usize
    }
}

/// Binned receiver response, normalized per launched photon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelResponse {
    pub grid_pitch: f64,
    pub half_bins: usize,
    /// Row-major `[iy][ix]`, side `2 · half_bins + 1`; the centre bin is
    /// centred on the optical axis.
    pub spatial_map: Vec<f64>,
    pub time_bin: f64,
    /// Time of the left edge of the first bin (s).
    pub time_origin: f64,
    /// Probability per time bin inside the aperture.
    pub impulse_hist: Vec<f64>,
    pub aperture_radius: f64,
    /// Weight that fell outside the map, per launched photon.
    pub spatial_overflow: f64,
    pub spatial_overflow_count: u64,
    /// Aperture weight arriving after the last time bin, per launched photon.
    pub temporal_overflow: f64,
    pub photon_count: u64,
}

impl ChannelResponse {
    pub fn side(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn bin(&self, ix: usize, iy: usize) -> f64 {
        self.spatial_map[iy * self.side() + ix]
    }

    /// Coordinate of the centre of bin `i` along either axis.
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 - self.half_bins as f64) * self.grid_pitch
    }

    /// Probability in the on-axis bin.
    pub fn aligned_gain(&self) -> f64 {
        self.bin(self.half_bins, self.half_bins)
    }

    /// Total probability inside the map.
    pub fn spatial_mass(&self) -> f64 {
        self.spatial_map.iter().sum()
    }

    /// Total probability in the impulse histogram.
    pub fn impulse_mass(&self) -> f64 {
        self.impulse_hist.iter().sum()
    }

    /// Row index and column index of the largest bin.
    pub fn peak(&self) -> (usize, usize) {
        let side = self.side();
        let (k, _) = self
            .spatial_map
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
        (k % side, k / side)
    }

    /// Horizontal slice through the peak, as (x, value) pairs.
    pub fn profile_through_peak(&self) -> Vec<(f64, f64)> {
        let (_, iy) = self.peak();
        (0..self.side())
            .map(|ix| (self.bin_center(ix), self.bin(ix, iy)))
            .collect()
    }

    /// Centres of the time bins relative to `time_origin` (s).
    pub fn time_centers(&self) -> Vec<f64> {
        (0..self.impulse_hist.len())
            .map(|i| (i as f64 + 0.5) * self.time_bin)
            .collect()
    }
}

/// Incremental accumulator behind [`bin_arrivals`], usable inside a
/// parallel fold.
#[derive(Debug, Clone)]
pub struct ResponseAccumulator {
    rx: RxConfig,
    time_origin: f64,
    half_bins: usize,
    spatial: Vec<f64>,
    impulse: Vec<f64>,
    spatial_overflow: f64,
    spatial_overflow_count: u64,
    temporal_overflow: f64,
}

impl ResponseAccumulator {
    pub fn new(rx: &RxConfig, time_origin: f64) -> Self {
        let half_bins = rx.half_bins();
        let side = 2 * half_bins + 1;
        Self {
            rx: *rx,
            time_origin,
            half_bins,
            spatial: vec![0.0; side * side],
            impulse: vec![0.0; rx.time_bins],
            spatial_overflow: 0.0,
            spatial_overflow_count: 0,
            temporal_overflow: 0.0,
        }
    }

    fn index(&self, coord: f64) -> Option<usize> {
        let k = (coord / self.rx.grid_pitch + 0.5).floor() + self.half_bins as f64;
        (k >= 0.0 && k < (2 * self.half_bins + 1) as f64).then_some(k as usize)
    }

    pub fn add(&mut self, r: &ArrivalRecord) {
        match (self.index(r.x), self.index(r.y)) {
            (Some(ix), Some(iy)) => {
                let side = 2 * self.half_bins + 1;
                self.spatial[iy * side + ix] += r.weight;
            }
            _ => {
                self.spatial_overflow += r.weight;
                self.spatial_overflow_count += 1;
            }
        }
        if r.x * r.x + r.y * r.y <= self.rx.aperture_radius * self.rx.aperture_radius {
            let k = ((r.t - self.time_origin) / self.rx.time_bin).floor().max(0.0);
            if (k as usize) < self.impulse.len() {
                self.impulse[k as usize] += r.weight;
            } else {
                self.temporal_overflow += r.weight;
            }
        }
    }

    pub fn merge(&mut self, other: ResponseAccumulator) {
        for (a, b) in self.spatial.iter_mut().zip(other.spatial) {
            *a += b;
        }
        for (a, b) in self.impulse.iter_mut().zip(other.impulse) {
            *a += b;
        }
        self.spatial_overflow += other.spatial_overflow;
        self.spatial_overflow_count += other.spatial_overflow_count;
        self.temporal_overflow += other.temporal_overflow;
    }

    pub fn finish(self, photon_count: u64) -> Result<ChannelResponse> {
        if photon_count == 0 {
            return Err(Error::Degenerate("photon_count must be positive".into()));
        }
        let scale = 1.0 / photon_count as f64;
        Ok(ChannelResponse {
            grid_pitch: self.rx.grid_pitch,
            half_bins: self.half_bins,
            spatial_map: self.spatial.into_iter().map(|v| v * scale).collect(),
            time_bin: self.rx.time_bin,
            time_origin: self.time_origin,
            impulse_hist: self.impulse.into_iter().map(|v| v * scale).collect(),
            aperture_radius: self.rx.aperture_radius,
            spatial_overflow: self.spatial_overflow * scale,
            spatial_overflow_count: self.spatial_overflow_count,
            temporal_overflow: self.temporal_overflow * scale,
            photon_count,
        })
    }
}

/// Bins arrivals into the spatial map and the aperture's impulse histogram.
/// Time bins start at `time_origin`, normally the ballistic arrival time.
pub fn bin_arrivals(
    records: &[ArrivalRecord],
    rx: &RxConfig,
    time_origin: f64,
    photon_count: u64,
) -> Result<ChannelResponse> {
    rx.validate()?;
    let mut acc = ResponseAccumulator::new(rx, time_origin);
    for r in records {
        acc.add(r);
    }
    acc.finish(photon_count)
}

/// Full width at half maximum of the slice through the spatial peak,
/// linearly interpolated between bin centres.
pub fn compute_fwhm(response: &ChannelResponse) -> Result<f64> {
    let profile = response.profile_through_peak();
    let (peak_ix, _) = response.peak();
    let peak = profile[peak_ix].1;
    if !(peak > 0.0) {
        return Err(Error::Degenerate("spatial map has no positive maximum".into()));
    }
    let half = 0.5 * peak;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = peak_ix;
        for i in range {
            let (x0, v0) = profile[prev];
            let (x1, v1) = profile[i];
            if v1 < half {
                return Some(x0 + (x1 - x0) * (v0 - half) / (v0 - v1));
            }
            prev = i;
        }
        None
    };
    let right = crossing(&mut (peak_ix + 1..profile.len())).ok_or(Error::UndefinedWidth)?;
    let left = crossing(&mut (0..peak_ix).rev()).ok_or(Error::UndefinedWidth)?;
    Ok(right - left)
}

/// Power-weighted RMS delay spread of a histogram with bins of width
/// `time_bin`, using bin centres.
pub fn compute_drms(impulse_hist: &[f64], time_bin: f64) -> Result<f64> {
    let mass: f64 = impulse_hist.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::EmptyHistogram);
    }
    let center = |i: usize| i as f64 + 0.5;
    let mean = impulse_hist
        .iter()
        .enumerate()
        .map(|(i, h)| h * center(i))
        .sum::<f64>()
        / mass;
    let var = impulse_hist
        .iter()
        .enumerate()
        .map(|(i, h)| h * (center(i) - mean).powi(2))
        .sum::<f64>()
        / mass;
    Ok(var.max(0.0).sqrt() * time_bin)
}
