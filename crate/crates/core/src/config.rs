//! Run configuration, read from and written to TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datalink::{RateSettings, Transmitter, DEFAULT_MAX_MEMORY};
use crate::error::{check_range, Error, Result};
use crate::phase::{PhaseFunctionParams, ScatteringBudget, WaterPreset, B_SEAWATER, DEFAULT_RESOLUTION};
use crate::stats::{RxConfig, MIN_ITERATIONS};
use crate::transport::LinkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Simulate,
    Fit,
    Scintillation,
    Rate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Simulate, Stage::Fit, Stage::Scintillation, Stage::Rate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Fit => "fit",
            Stage::Scintillation => "scintillation",
            Stage::Rate => "rate",
        }
    }
}

/// Water column: a named preset or explicit coefficients, plus turbulence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaterConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_petzold: Option<f64>,
    pub b_sw: f64,
    pub b_t: f64,
}

impl Default for WaterConfig {
    fn default() -> Self {
        Self {
            preset: Some("coastal".into()),
            a: None,
            b_petzold: None,
            b_sw: B_SEAWATER,
            b_t: 0.0,
        }
    }
}

impl WaterConfig {
    /// Name and coefficients after expanding the preset.
    pub fn resolve(&self) -> Result<(String, ScatteringBudget)> {
        match (&self.preset, self.a, self.b_petzold) {
            (Some(name), None, None) => {
                let p = WaterPreset::by_name(name)
                    .ok_or_else(|| Error::Config(format!("unknown water preset `{name}`")))?;
                let budget = ScatteringBudget::new(p.absorption, p.b_petzold, self.b_sw, self.b_t)?;
                Ok((p.name.to_string(), budget))
            }
            (None, Some(a), Some(b)) => Ok(("custom".into(), ScatteringBudget::new(a, b, self.b_sw, self.b_t)?)),
            _ => Err(Error::Config(
                "water needs either `preset` or both `a` and `b_petzold`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub g: f64,
    pub m_junge: f64,
    pub n_water: f64,
    pub hg_exponent: f64,
    pub resolution: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        let p = PhaseFunctionParams::default();
        Self {
            g: p.g,
            m_junge: p.m_junge,
            n_water: p.n_water,
            hg_exponent: p.hg_exponent,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl PhaseConfig {
    pub fn params(&self) -> PhaseFunctionParams {
        PhaseFunctionParams {
            g: self.g,
            m_junge: self.m_junge,
            n_water: self.n_water,
            hg_exponent: self.hg_exponent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub z_link: f64,
    pub beam_divergence: f64,
    pub weight_threshold: f64,
    pub n_water: f64,
    pub photon_count: u64,
    pub stratified_first_step: bool,
}

impl Default for LinkSection {
    fn default() -> Self {
        let l = LinkConfig::default();
        Self {
            z_link: l.z_link,
            beam_divergence: l.beam_divergence,
            weight_threshold: l.weight_threshold,
            n_water: l.n_water,
            photon_count: l.photon_count,
            stratified_first_step: l.stratified_first_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScintillationConfig {
    pub bt_max: f64,
    pub iterations: usize,
    pub photons_per_iter: u64,
}

impl Default for ScintillationConfig {
    fn default() -> Self {
        Self {
            bt_max: 0.0,
            iterations: 200,
            photons_per_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub p_t: f64,
    pub wavelength: f64,
    pub n_bg: f64,
    pub l_bits: usize,
    pub mass_cutoff: f64,
    pub max_memory: usize,
    /// Symbol rates in the sweep.
    pub points: usize,
    /// Decades spanned by the sweep below its fastest feasible rate.
    pub decades: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        let tx = Transmitter::default();
        let s = RateSettings::default();
        Self {
            p_t: tx.p_t,
            wavelength: tx.wavelength,
            n_bg: tx.n_bg,
            l_bits: s.l_bits,
            mass_cutoff: s.mass_cutoff,
            max_memory: DEFAULT_MAX_MEMORY,
            points: 12,
            decades: 2.0,
        }
    }
}

impl RateConfig {
    pub fn transmitter(&self) -> Transmitter {
        Transmitter {
            p_t: self.p_t,
            wavelength: self.wavelength,
            n_bg: self.n_bg,
        }
    }

    pub fn settings(&self, seed: u64) -> RateSettings {
        RateSettings {
            l_bits: self.l_bits,
            mass_cutoff: self.mass_cutoff,
            max_memory: self.max_memory,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub water: WaterConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub rx: RxConfig,
    #[serde(default)]
    pub scintillation: ScintillationConfig,
    #[serde(default)]
    pub rate: RateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("uowc-out"),
            seed: 1,
            stages: Stage::ALL.to_vec(),
            water: WaterConfig::default(),
            phase: PhaseConfig::default(),
            link: LinkSection::default(),
            rx: RxConfig::default(),
            scintillation: ScintillationConfig::default(),
            rate: RateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn link_config(&self) -> LinkConfig {
        LinkConfig {
            z_link: self.link.z_link,
            beam_divergence: self.link.beam_divergence,
            weight_threshold: self.link.weight_threshold,
            n_water: self.link.n_water,
            photon_count: self.link.photon_count,
            seed: self.seed,
            stratified_first_step: self.link.stratified_first_step,
        }
    }

    pub fn wants(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Checks every section against the preconditions of the stages it feeds.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("no stages selected".into()));
        }
        self.water.resolve()?;
        self.phase.params().validate()?;
        if self.phase.resolution < 16 {
            return Err(Error::Config("phase.resolution must be at least 16".into()));
        }
        let link = self.link_config();
        link.validate()?;
        if link.photon_count == 0 {
            return Err(Error::Config("link.photon_count must be positive".into()));
        }
        self.rx.validate()?;
        if self.wants(Stage::Scintillation) {
            let s = &self.scintillation;
            check_range("bt_max", s.bt_max, 0.0, f64::INFINITY, ">= 0")?;
            if s.iterations < MIN_ITERATIONS {
                return Err(Error::Config(format!(
                    "scintillation.iterations must be at least {MIN_ITERATIONS}"
                )));
            }
            if s.photons_per_iter == 0 {
                return Err(Error::Config("scintillation.photons_per_iter must be positive".into()));
            }
        }
        if self.wants(Stage::Rate) {
            let r = &self.rate;
            self.rate.transmitter().validate()?;
            check_range("mass_cutoff", r.mass_cutoff, f64::MIN_POSITIVE, 1.0 - f64::EPSILON, "0 < cutoff < 1")?;
            check_range("decades", r.decades, f64::MIN_POSITIVE, 12.0, "0 < decades <= 12")?;
            if r.l_bits < crate::datalink::MIN_STREAM {
                return Err(Error::Config(format!(
                    "rate.l_bits must be at least {}",
                    crate::datalink::MIN_STREAM
                )));
            }
            if r.points < 2 || r.max_memory == 0 || r.max_memory > 24 {
                return Err(Error::Config(
                    "rate.points must be >= 2 and rate.max_memory in 1..=24".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.render().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = RunConfig::default().render().unwrap();
        text = text.replace("[water]", "[water]\ncolour = \"blue\"");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn water_needs_one_source() {
        let mut c = RunConfig::default();
        c.water.a = Some(0.2);
        assert!(c.validate().is_err());
        c.water.preset = None;
        c.water.b_petzold = Some(0.3);
        let (name, b) = c.water.resolve().unwrap();
        assert_eq!(name, "custom");
        assert_eq!(b.absorption(), 0.2);
        c.water.preset = Some("murky".into());
        c.water.a = None;
        c.water.b_petzold = None;
        assert!(c.water.resolve().is_err());
    }
}
