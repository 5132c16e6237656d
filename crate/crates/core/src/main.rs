use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uowc::config::{RunConfig, Stage};
use uowc::pipeline::{emit_tables, run_pipeline, ResultManifest, MANIFEST_FILE};
use uowc::{Error, Result};

#[derive(Parser)]
#[command(name = "uowc", version, about = "Monte-Carlo underwater optical wireless channel simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace photons and bin the receiver plane.
    Simulate(RunArgs),
    /// Fit the double-gamma model to a simulated impulse response.
    Fit(RunArgs),
    /// Fading ensemble over random turbulence strengths.
    Scintillation(RunArgs),
    /// Information-rate sweep on the fitted channel.
    Rate(RunArgs),
    /// Every stage listed in the configuration (all of them by default).
    Run(RunArgs),
    /// Render tables and plot data from finished runs.
    Report {
        /// Run directories (each holding a manifest) or manifest files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(short, long, default_value = "report")]
        out: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file; flags below override it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long, env = "UOWC_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Water preset: clear, coastal or harbour.
    #[arg(long, conflicts_with_all = ["a", "b_petzold"])]
    preset: Option<String>,
    /// Absorption coefficient (1/m), with --b-petzold instead of a preset.
    #[arg(long, requires = "b_petzold")]
    a: Option<f64>,
    #[arg(long, requires = "a")]
    b_petzold: Option<f64>,
    /// Turbulence scattering coefficient (1/m).
    #[arg(long)]
    b_t: Option<f64>,
    /// Link length (m).
    #[arg(long)]
    z_link: Option<f64>,
    #[arg(long)]
    photons: Option<u64>,
    #[arg(long)]
    hg_exponent: Option<f64>,
    /// Receiver acceptance half-angle in degrees.
    #[arg(long)]
    fov_deg: Option<f64>,
    #[arg(long)]
    bt_max: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    photons_per_iter: Option<u64>,
    /// Average transmit power (W).
    #[arg(long)]
    p_t: Option<f64>,
    #[arg(long)]
    n_bg: Option<f64>,
    #[arg(long)]
    l_bits: Option<usize>,
    #[arg(long)]
    max_memory: Option<usize>,
}

impl RunArgs {
    fn resolve(self, stages: Option<Vec<Stage>>) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(stages) = stages {
            c.stages = stages;
        }
        if let Some(v) = self.output_dir {
            c.output_dir = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.preset {
            c.water.preset = Some(v);
            c.water.a = None;
            c.water.b_petzold = None;
        }
        if let (Some(a), Some(b)) = (self.a, self.b_petzold) {
            c.water.preset = None;
            c.water.a = Some(a);
            c.water.b_petzold = Some(b);
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.water.b_t, self.b_t);
        set(&mut c.link.z_link, self.z_link);
        set(&mut c.phase.hg_exponent, self.hg_exponent);
        set(&mut c.rx.fov_limit, self.fov_deg.map(f64::to_radians));
        set(&mut c.scintillation.bt_max, self.bt_max);
        set(&mut c.rate.p_t, self.p_t);
        set(&mut c.rate.n_bg, self.n_bg);
        if let Some(v) = self.photons {
            c.link.photon_count = v;
        }
        if let Some(v) = self.iterations {
            c.scintillation.iterations = v;
        }
        if let Some(v) = self.photons_per_iter {
            c.scintillation.photons_per_iter = v;
        }
        if let Some(v) = self.l_bits {
            c.rate.l_bits = v;
        }
        if let Some(v) = self.max_memory {
            c.rate.max_memory = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run_stage(args: RunArgs, stages: Option<Vec<Stage>>) -> Result<()> {
    let config = args.resolve(stages)?;
    let manifest = run_pipeline(&config)?;
    let r = &manifest.results;
    println!("{}", manifest.label());
    if let Some(s) = &r.simulation {
        println!("  aligned gain  {:.4e}", s.aligned_gain);
        if let Some(w) = s.fwhm {
            println!("  FWHM          {w:.3} m");
        }
        if let Some(d) = s.d_rms {
            println!("  D_rms         {d:.4e} s");
        }
    }
    if let Some(f) = &r.dgf {
        println!(
            "  DGF           C1={:.4e} C2={:.4e} C3={:.4e} C4={:.4e} R2={:.4}",
            f.c1, f.c2, f.c3, f.c4, f.r_squared
        );
    }
    if let Some(f) = &r.fading {
        println!(
            "  fading        sigma_sim2={:.4} sigma_I2={:.4} mu={:.4} R2={:.3}",
            f.fit.sigma_sim_sq, f.fit.sigma_i_sq, f.fit.mu, f.fit.r_squared
        );
    }
    if let Some(v) = r.r_max {
        println!("  R_max         {v:.4e} bit/s");
    }
    println!("  manifest      {}", config.output_dir.join(MANIFEST_FILE).display());
    Ok(())
}

fn report(runs: Vec<PathBuf>, out: PathBuf) -> Result<()> {
    let manifests = runs
        .iter()
        .map(|p| {
            let path = if p.is_dir() { p.join(MANIFEST_FILE) } else { p.clone() };
            ResultManifest::load(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    for path in emit_tables(&manifests, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => run_stage(a, Some(vec![Stage::Simulate])),
        Command::Fit(a) => run_stage(a, Some(vec![Stage::Fit])),
        Command::Scintillation(a) => run_stage(a, Some(vec![Stage::Scintillation])),
        Command::Rate(a) => run_stage(a, Some(vec![Stage::Rate])),
        Command::Run(a) => run_stage(a, None),
        Command::Report { runs, out } => report(runs, out),
        Command::Config(a) => a.resolve(None).and_then(|c| {
            print!("{}", c.render()?);
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::MissingStage(_) = e {
                eprintln!("run the upstream stage first with the same settings and output directory");
            }
            ExitCode::FAILURE
        }
    }
}
