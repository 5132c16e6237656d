//! Stage orchestration, artifact persistence and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Stage};
use crate::datalink::{feasible_rate_grid, max_rate, RateSweep, PLANCK};
use crate::error::{Error, Result};
use crate::phase::FF_THETA_MIN;
use crate::stats::{
    compute_drms, compute_fwhm, density_histogram, fit_dgf, scintillation_ensemble, ChannelResponse, DgfFit,
    FadingEnsemble, FadingFit, FitKind, ResponseAccumulator,
};
use crate::transport::{simulate_fold, Medium, Tally, EVENT_CAP, SPEED_OF_LIGHT};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

const RESPONSE_FILE: &str = "response.json";
const DGF_FILE: &str = "dgf.json";

/// Every physical input of a run after preset expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsEcho {
    pub water: String,
    pub a: f64,
    pub b_petzold: f64,
    pub b_sw: f64,
    pub b_p: f64,
    pub b_t: f64,
    pub b: f64,
    pub c: f64,
    pub albedo: f64,
    pub g: f64,
    pub m_junge: f64,
    pub ff_exponent: f64,
    pub ff_theta_min: f64,
    pub phase_n_water: f64,
    pub hg_exponent: f64,
    pub z_link: f64,
    pub beam_divergence: f64,
    pub weight_threshold: f64,
    pub link_n_water: f64,
    pub speed_of_light: f64,
    pub ballistic_time: f64,
    pub event_cap: u64,
    pub fov_limit: f64,
    pub grid_pitch: f64,
    pub time_bin: f64,
    pub aperture_radius: f64,
    pub planck: f64,
    pub p_t: f64,
    pub wavelength: f64,
    pub n_bg: f64,
}

impl PhysicsEcho {
    fn from_config(config: &RunConfig) -> Result<Self> {
        let (water, budget) = config.water.resolve()?;
        let params = config.phase.params();
        let link = config.link_config();
        Ok(Self {
            water,
            a: budget.absorption(),
            b_petzold: budget.b_petzold(),
            b_sw: budget.b_seawater(),
            b_p: budget.b_particle(),
            b_t: budget.b_turbulence(),
            b: budget.scattering(),
            c: budget.extinction(),
            albedo: budget.albedo(),
            g: params.g,
            m_junge: params.m_junge,
            ff_exponent: params.ff_exponent(),
            ff_theta_min: FF_THETA_MIN,
            phase_n_water: params.n_water,
            hg_exponent: params.hg_exponent,
            z_link: link.z_link,
            beam_divergence: link.beam_divergence,
            weight_threshold: link.weight_threshold,
            link_n_water: link.n_water,
            speed_of_light: SPEED_OF_LIGHT,
            ballistic_time: link.ballistic_time(),
            event_cap: EVENT_CAP,
            fov_limit: config.rx.fov_limit,
            grid_pitch: config.rx.grid_pitch,
            time_bin: config.rx.time_bin,
            aperture_radius: config.rx.aperture_radius,
            planck: PLANCK,
            p_t: config.rate.p_t,
            wavelength: config.rate.wavelength,
            n_bg: config.rate.n_bg,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub files: Vec<FileEntry>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub tally: Tally,
    pub aligned_gain: f64,
    pub fwhm: Option<f64>,
    pub d_rms: Option<f64>,
    pub impulse_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingSummary {
    pub bt_max: f64,
    pub iterations: usize,
    pub photons_per_iter: u64,
    pub fit: FadingFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageResults {
    pub simulation: Option<SimulationSummary>,
    pub dgf: Option<DgfFit>,
    pub fading: Option<FadingSummary>,
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub version: String,
    pub config: RunConfig,
    pub physics: PhysicsEcho,
    pub stages: Vec<StageRecord>,
    pub results: StageResults,
    /// Set when a stage aborted the run.
    pub failure: Option<String>,
}

impl ResultManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// Short name of the channel, e.g. `coastal-30m-bt0.05`.
    pub fn label(&self) -> String {
        format!("{}-{}m-bt{}", self.physics.water, self.physics.z_link, self.physics.b_t)
    }

    fn channel(&self) -> String {
        format!("{}-{}m", self.physics.water, self.physics.z_link)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<FileEntry> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(dir, name, &bytes)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Comma-separated table with one header line.
fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Files of a previous run in the same directory are reusable when every
/// physics setting matches.
fn cached_manifest(config: &RunConfig) -> Option<ResultManifest> {
    let old = ResultManifest::load(&config.output_dir.join(MANIFEST_FILE)).ok()?;
    let same = RunConfig {
        stages: config.stages.clone(),
        output_dir: config.output_dir.clone(),
        ..old.config.clone()
    };
    (same == *config && old.version == VERSION).then_some(old)
}

fn verified(dir: &Path, record: &StageRecord) -> bool {
    record.files.iter().all(|f| {
        fs::read(dir.join(&f.path)).is_ok_and(|bytes| sha256_hex(&bytes) == f.sha256)
    })
}

struct Run<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
    manifest: ResultManifest,
}

impl Run<'_> {
    fn persist(&self) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn record(&mut self, stage: Stage, files: Vec<FileEntry>, seconds: f64) {
        self.manifest.stages.retain(|s| s.stage != stage);
        self.manifest.stages.push(StageRecord { stage, files, seconds });
        self.manifest.stages.sort_by_key(|s| s.stage);
    }

    fn upstream(&self, stage: Stage) -> Result<()> {
        match self.manifest.stage(stage) {
            Some(r) if verified(self.dir, r) => Ok(()),
            _ => Err(Error::MissingStage(stage.name())),
        }
    }

    fn simulate(&mut self) -> Result<Vec<FileEntry>> {
        let (_, budget) = self.config.water.resolve()?;
        let link = self.config.link_config();
        let rx = self.config.rx;
        let medium = Medium::new(budget, self.config.phase.params(), self.config.phase.resolution)?;
        let origin = link.ballistic_time();
        let (acc, tally) = simulate_fold(
            &link,
            &medium,
            rx.fov_limit,
            || ResponseAccumulator::new(&rx, origin),
            |a, r| a.add(r),
            |a, b| a.merge(b),
        )?;
        let response = acc.finish(link.photon_count)?;
        let summary = SimulationSummary {
            tally,
            aligned_gain: response.aligned_gain(),
            fwhm: compute_fwhm(&response).ok(),
            d_rms: compute_drms(&response.impulse_hist, response.time_bin).ok(),
            impulse_mass: response.impulse_mass(),
        };

        let side = response.side();
        let map_rows = (0..side).flat_map(|iy| {
            let r = &response;
            (0..side).map(move |ix| vec![r.bin_center(ix), r.bin_center(iy), r.bin(ix, iy)])
        });
        let profile = response.profile_through_peak().into_iter().map(|(x, v)| vec![x, v]);
        let impulse = response
            .time_centers()
            .into_iter()
            .zip(&response.impulse_hist)
            .map(|(t, &h)| vec![t, h]);
        let files = vec![
            write_json(self.dir, RESPONSE_FILE, &response)?,
            write_json(self.dir, "simulation.json", &summary)?,
            write_file(self.dir, "spatial_map.csv", csv(&["x_m", "y_m", "probability"], map_rows).as_bytes())?,
            write_file(self.dir, "profile.csv", csv(&["x_m", "probability"], profile).as_bytes())?,
            write_file(self.dir, "impulse.csv", csv(&["t_s", "probability"], impulse).as_bytes())?,
        ];
        self.manifest.results.simulation = Some(summary);
        Ok(files)
    }

    fn fit(&mut self) -> Result<Vec<FileEntry>> {
        self.upstream(Stage::Simulate)?;
        let response: ChannelResponse = read_json(&self.dir.join(RESPONSE_FILE))?;
        let fit = fit_dgf(&response.impulse_hist, response.time_bin)?;
        let rows = response
            .time_centers()
            .into_iter()
            .zip(&response.impulse_hist)
            .map(|(t, &h)| vec![t, h, fit.eval(t)]);
        let files = vec![
            write_json(self.dir, DGF_FILE, &fit)?,
            write_file(self.dir, "impulse_fit.csv", csv(&["t_s", "simulated", "dgf"], rows).as_bytes())?,
        ];
        self.manifest.results.dgf = Some(fit);
        Ok(files)
    }

    fn scintillation(&mut self) -> Result<Vec<FileEntry>> {
        let (_, budget) = self.config.water.resolve()?;
        let base = budget.with_turbulence(0.0)?;
        let s = self.config.scintillation;
        let ens: FadingEnsemble = scintillation_ensemble(
            &self.config.link_config(),
            &base,
            &self.config.phase.params(),
            self.config.phase.resolution,
            &self.config.rx,
            s.iterations,
            s.photons_per_iter,
            s.bt_max,
        )?;
        let mean = ens.samples.iter().sum::<f64>() / ens.samples.len() as f64;
        let normalized: Vec<f64> = ens.samples.iter().map(|v| v / mean).collect();
        let samples = ens
            .samples
            .iter()
            .zip(&ens.turbulence)
            .zip(&normalized)
            .enumerate()
            .map(|(i, ((&w, &bt), &n))| vec![i as f64, bt, w, n]);
        let fit = ens.fit;
        let pdf = density_histogram(&normalized)
            .into_iter()
            .map(|(x, d)| vec![x, d, fit.density(x)]);
        let files = vec![
            write_json(self.dir, "fading.json", &ens)?,
            write_file(
                self.dir,
                "fading_samples.csv",
                csv(&["iteration", "b_t", "intensity", "normalized"], samples).as_bytes(),
            )?,
            write_file(self.dir, "fading_pdf.csv", csv(&["intensity", "density", "fit"], pdf).as_bytes())?,
        ];
        self.manifest.results.fading = Some(FadingSummary {
            bt_max: s.bt_max,
            iterations: s.iterations,
            photons_per_iter: s.photons_per_iter,
            fit,
        });
        Ok(files)
    }

    fn rate(&mut self) -> Result<Vec<FileEntry>> {
        self.upstream(Stage::Fit)?;
        let fit: DgfFit = read_json(&self.dir.join(DGF_FILE))?;
        let r = self.config.rate;
        let grid = feasible_rate_grid(&fit, r.mass_cutoff, r.max_memory, r.points, r.decades)?;
        let sweep: RateSweep = max_rate(&fit, &r.transmitter(), &grid, &r.settings(self.config.seed))?;
        let rows = sweep
            .points
            .iter()
            .map(|p| vec![p.symbol_rate, p.memory as f64, p.mutual_info, p.rate]);
        let files = vec![
            write_json(self.dir, "rates.json", &sweep)?,
            write_file(
                self.dir,
                "rates.csv",
                csv(&["symbol_rate_hz", "memory", "mutual_info_bits", "rate_bps"], rows).as_bytes(),
            )?,
        ];
        self.manifest.results.r_max = Some(sweep.r_max);
        Ok(files)
    }
}

/// Runs the selected stages in order, writing artifacts and the manifest to
/// `config.output_dir`. Stages not selected keep their results from an
/// earlier run with identical physics settings.
pub fn run_pipeline(config: &RunConfig) -> Result<ResultManifest> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = cached_manifest(config).unwrap_or_else(|| ResultManifest {
        version: VERSION.to_string(),
        config: config.clone(),
        physics: PhysicsEcho::from_config(config).expect("validated"),
        stages: Vec::new(),
        results: StageResults::default(),
        failure: None,
    });
    manifest.config = config.clone();
    manifest.failure = None;
    let mut run = Run { config, dir, manifest };

    for stage in Stage::ALL.into_iter().filter(|s| config.wants(*s)) {
        let start = Instant::now();
        let outcome = match stage {
            Stage::Simulate => run.simulate(),
            Stage::Fit => run.fit(),
            Stage::Scintillation => run.scintillation(),
            Stage::Rate => run.rate(),
        };
        match outcome {
            Ok(files) => {
                run.record(stage, files, start.elapsed().as_secs_f64());
                run.persist()?;
            }
            Err(e) => {
                run.manifest.failure = Some(format!("{}: {e}", stage.name()));
                run.persist()?;
                return Err(e);
            }
        }
    }
    Ok(run.manifest)
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn sci(v: f64) -> String {
    format!("{v:.4e}")
}

/// Renders DGF, log-normal and Gaussian tables plus plot-data files from a
/// set of run manifests into `out_dir`. Nothing is written unless at least
/// one manifest carries a fit.
pub fn emit_tables(manifests: &[ResultManifest], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let has_fit = manifests
        .iter()
        .any(|m| m.results.dgf.is_some() || m.results.fading.is_some());
    if !has_fit {
        return Err(Error::MissingStage("fit"));
    }
    let mut runs: Vec<&ResultManifest> = manifests.iter().collect();
    runs.sort_by(|a, b| {
        (a.channel(), a.physics.b_t, a.results.fading.as_ref().map(|f| f.bt_max))
            .partial_cmp(&(b.channel(), b.physics.b_t, b.results.fading.as_ref().map(|f| f.bt_max)))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut outputs: BTreeMap<String, String> = BTreeMap::new();

    let t1: Vec<Vec<String>> = runs
        .iter()
        .filter_map(|m| {
            let f = m.results.dgf?;
            let mc = m.results.simulation.as_ref().and_then(|s| s.d_rms);
            Some(vec![
                m.channel(),
                m.physics.b_t.to_string(),
                sci(f.c1),
                sci(f.c2),
                sci(f.c3),
                sci(f.c4),
                format!("{:.4}", f.r_squared),
                mc.map_or("-".into(), sci),
                sci(f.d_rms),
            ])
        })
        .collect();
    if !t1.is_empty() {
        outputs.insert(
            "table1_dgf.txt".into(),
            table(&["channel", "b_t", "C1", "C2", "C3", "C4", "R2", "D_rms_mc", "D_rms_dgf"], &t1),
        );
    }

    let fading = |kind: FitKind| -> Vec<(&ResultManifest, &FadingSummary)> {
        runs.iter()
            .filter_map(|m| m.results.fading.as_ref().map(|f| (*m, f)))
            .filter(|(_, f)| f.fit.kind == kind)
            .collect()
    };
    let t2: Vec<Vec<String>> = fading(FitKind::LogNormal)
        .iter()
        .map(|(m, f)| {
            vec![
                m.channel(),
                f.bt_max.to_string(),
                format!("{:.4}", f.fit.sigma_sim_sq),
                format!("{:.4}", f.fit.sigma_i_sq),
                format!("{:.4}", f.fit.mu),
                format!("{:.2}", f.fit.r_squared),
            ]
        })
        .collect();
    if !t2.is_empty() {
        outputs.insert(
            "table2_lognormal.txt".into(),
            table(&["channel", "bt_max", "sigma_sim2", "sigma_I2", "mu", "R2"], &t2),
        );
    }
    let t3: Vec<Vec<String>> = fading(FitKind::Gaussian)
        .iter()
        .map(|(m, f)| {
            vec![
                m.channel(),
                sci(f.fit.sigma_i_sq),
                format!("{:.4}", f.fit.mu),
                format!("{:.2}", f.fit.r_squared),
            ]
        })
        .collect();
    if !t3.is_empty() {
        outputs.insert(
            "table3_gaussian.txt".into(),
            table(&["channel", "sigma2", "mean", "R2"], &t3),
        );
    }

    let mut channels: BTreeMap<String, Vec<&ResultManifest>> = BTreeMap::new();
    for m in &runs {
        channels.entry(m.channel()).or_default().push(m);
    }
    for (channel, ms) in &channels {
        let drms: Vec<Vec<f64>> = ms
            .iter()
            .filter_map(|m| {
                let f = m.results.dgf?;
                let mc = m.results.simulation.as_ref().and_then(|s| s.d_rms)?;
                Some(vec![m.physics.b_t, mc, f.d_rms])
            })
            .collect();
        if !drms.is_empty() {
            outputs.insert(
                format!("fig5_drms_{channel}.csv"),
                csv(&["b_t", "d_rms_mc_s", "d_rms_dgf_s"], drms),
            );
        }
        let gain: Vec<Vec<f64>> = ms
            .iter()
            .filter_map(|m| {
                let s = m.results.simulation.as_ref()?;
                Some(vec![m.physics.b_t, s.aligned_gain, s.fwhm?])
            })
            .collect();
        if !gain.is_empty() {
            outputs.insert(
                format!("fig3_gain_{channel}.csv"),
                csv(&["b_t", "aligned_gain", "fwhm_m"], gain),
            );
        }
        let si: Vec<Vec<f64>> = ms
            .iter()
            .filter_map(|m| m.results.fading.as_ref())
            .map(|f| vec![f.bt_max, f.fit.sigma_i_sq])
            .collect();
        if !si.is_empty() {
            outputs.insert(format!("fig9_scintillation_{channel}.csv"), csv(&["bt_max", "sigma_I2"], si));
        }
        let rates: Vec<Vec<f64>> = ms
            .iter()
            .filter_map(|m| Some(vec![m.results.fading.as_ref()?.fit.sigma_i_sq, m.results.r_max?]))
            .collect();
        if !rates.is_empty() {
            outputs.insert(format!("fig10_rate_{channel}.csv"), csv(&["sigma_I2", "r_max_bps"], rates));
        }
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (name, body) in outputs {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
