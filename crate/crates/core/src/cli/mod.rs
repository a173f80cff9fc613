//! The `beamrefine` command line.
//!
//! Exit codes: 0 on success, 1 for usage, configuration or I/O errors, 2
//! when the estimator fails.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::{array_gain, slepian_bank, ReductionBank};
use crate::channel::UserState;
use crate::estimator::{
    delay_doppler_objective, estimate_state, write_objective_csv, write_pseudospectrum_csv,
    FftSizes,
};
use crate::experiments::run_sweep;
use crate::metrics::{db_to_linear, noise_variance_for_snr_bbf, spectral_efficiency};
use crate::ofdm::{generate_symbols, radar_snapshots_single, validate_timing, TimingViolation};
use crate::Error;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "beamrefine",
    version,
    about = "OFDM beam refinement and user state acquisition simulator"
)]
pub struct Cli {
    /// Configuration file (key=value lines); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override a configuration key, e.g. --set array.n_rf=4. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Random seed (overrides run.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Spectral efficiency with and without refinement.
    Se,
    /// Angle, range and velocity RMSE.
    Rmse,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded end-to-end refinement and print a report.
    Refine {
        /// Disable receiver noise.
        #[arg(long)]
        noiseless: bool,
        /// Write the MUSIC pseudospectrum as CSV.
        #[arg(long, value_name = "PATH")]
        dump_spectrum: Option<PathBuf>,
        /// Write the delay-Doppler objective surface as CSV.
        #[arg(long, value_name = "PATH")]
        dump_objective: Option<PathBuf>,
        /// Write the radar snapshot grid as CSV.
        #[arg(long, value_name = "PATH")]
        dump_snapshots: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep and write CSV.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Write the Slepian beam patterns (dB) on a 1° grid as CSV.
    SlepianDump {
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

/// Failure of a CLI invocation, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Io(String),
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Estimation(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Config(m) | Self::Io(m) => f.write_str(m),
            Self::Estimation(m) => write!(f, "estimation failed: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Load the config file, then `--set` overrides, then `--seed`, and
/// validate the result.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.overrides {
        cfg.apply_assignment(assignment)
            .map_err(|m| CliError::Config(format!("--set {assignment}: {m}")))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn with_output<F>(out: Option<&Path>, stdout: &mut dyn Write, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match out {
        Some(path) => {
            let file = File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
        }
        None => f(stdout).map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Outcome of `refine`.
#[derive(Debug, Clone)]
pub struct RefineReport {
    pub true_angle_deg: f64,
    pub coarse_angle_deg: f64,
    pub refined_angle_deg: f64,
    pub range_m: f64,
    pub range_est_m: f64,
    pub speed_mps: f64,
    pub velocity_est_mps: f64,
    pub snr_bbf_db: f64,
    pub noiseless: bool,
    pub se_unrefined: f64,
    pub se_refined: f64,
    pub peak_on_boundary: bool,
    pub timing: Vec<TimingViolation>,
}

impl fmt::Display for RefineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "true angle      {:>12.6} deg", self.true_angle_deg)?;
        writeln!(
            f,
            "coarse angle    {:>12.6} deg  (error {:.6} deg)",
            self.coarse_angle_deg,
            self.coarse_angle_deg - self.true_angle_deg
        )?;
        writeln!(
            f,
            "refined angle   {:>12.6} deg  (error {:.6} deg)",
            self.refined_angle_deg,
            self.refined_angle_deg - self.true_angle_deg
        )?;
        writeln!(
            f,
            "range           {:>12.6} m    (true {:.6} m)",
            self.range_est_m, self.range_m
        )?;
        writeln!(
            f,
            "velocity        {:>12.6} m/s  (true {:.6} m/s)",
            self.velocity_est_mps, self.speed_mps
        )?;
        let noise = if self.noiseless {
            ", radar noise off"
        } else {
            ""
        };
        writeln!(f, "SNR_BBF         {:>12.3} dB{noise}", self.snr_bbf_db)?;
        writeln!(f, "SE unrefined    {:>12.6} bits/s/Hz", self.se_unrefined)?;
        writeln!(f, "SE refined      {:>12.6} bits/s/Hz", self.se_refined)?;
        if self.peak_on_boundary {
            writeln!(f, "warning: MUSIC peak on the scan boundary")?;
        }
        for v in &self.timing {
            writeln!(f, "warning: {v}")?;
        }
        Ok(())
    }
}

/// Optional artifact paths for `refine`.
#[derive(Debug, Default, Clone)]
pub struct RefineDumps {
    pub spectrum: Option<PathBuf>,
    pub objective: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
}

/// One seeded trial at the configured user, `ε` and `SNR_BBF`.
pub fn run_refine(cfg: &RunConfig, dumps: &RefineDumps) -> Result<RefineReport, CliError> {
    let config_err = |e: Error| CliError::Config(e.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let aod = cfg.user.aod_deg.to_radians();
    let mut state = UserState::new(aod, cfg.user.range_m, cfg.user.speed_mps, cfg.user.rcs_m2())
        .map_err(config_err)?;
    state.aoa = cfg.user.aoa_deg.to_radians();
    let state = state.with_phases(
        rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU),
        rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU),
    );
    let coarse = aod - cfg.refine.epsilon_deg.to_radians();
    let snr_bbf = db_to_linear(cfg.refine.snr_bbf_db);

    let mut ofdm = cfg.ofdm;
    ofdm.noise_variance = if cfg.refine.noiseless {
        0.0
    } else {
        noise_variance_for_snr_bbf(&state, &ofdm, snr_bbf).map_err(config_err)?
    };
    let timing = validate_timing(&ofdm, &[state]).map_err(config_err)?;

    let bank = slepian_bank(&cfg.array).map_err(config_err)?;
    let red = ReductionBank::new(&bank, coarse).map_err(config_err)?;
    let symbols = generate_symbols(&ofdm, &mut rng);
    let grid =
        radar_snapshots_single(&state, &red, &ofdm, &symbols, 0, &mut rng).map_err(config_err)?;
    let x = symbols.user_matrix(0).map_err(config_err)?;

    if let Some(path) = &dumps.snapshots {
        let file = File::create(path).map_err(io_err(path))?;
        grid.write_csv(BufWriter::new(file)).map_err(io_err(path))?;
    }

    let refinement =
        estimate_state(&grid, &red, &x, &ofdm, &cfg.estimator).map_err(|e| match e {
            Error::Config(m) => CliError::Config(m),
            other => CliError::Estimation(other.to_string()),
        })?;

    if let Some(path) = &dumps.spectrum {
        let file = File::create(path).map_err(io_err(path))?;
        write_pseudospectrum_csv(&refinement.music, BufWriter::new(file)).map_err(io_err(path))?;
    }
    if let Some(path) = &dumps.objective {
        let y_prime = crate::estimator::beamspace_combine(&grid, &red, refinement.state.angle)
            .map_err(|e| CliError::Estimation(e.to_string()))?;
        let sizes = FftSizes::oversampled(&ofdm, cfg.estimator.fft_oversampling);
        let surface = delay_doppler_objective(&y_prime, &x, sizes)
            .map_err(|e| CliError::Estimation(e.to_string()))?;
        let file = File::create(path).map_err(io_err(path))?;
        write_objective_csv(&surface, &ofdm, BufWriter::new(file)).map_err(io_err(path))?;
    }

    let n_a = cfg.array.n_antennas;
    let se = |angle: f64| -> Result<f64, CliError> {
        let g = array_gain(aod, angle, n_a).map_err(|e| CliError::Estimation(e.to_string()))?;
        Ok(spectral_efficiency(snr_bbf * g.norm_sqr() * cfg.rx_gain_sq))
    };
    Ok(RefineReport {
        true_angle_deg: cfg.user.aod_deg,
        coarse_angle_deg: coarse.to_degrees(),
        refined_angle_deg: refinement.state.angle.to_degrees(),
        range_m: cfg.user.range_m,
        range_est_m: refinement.state.range,
        speed_mps: cfg.user.speed_mps,
        velocity_est_mps: refinement.state.velocity,
        snr_bbf_db: cfg.refine.snr_bbf_db,
        noiseless: cfg.refine.noiseless,
        se_unrefined: se(coarse)?,
        se_refined: se(refinement.state.angle)?,
        peak_on_boundary: refinement.music.peak_on_boundary,
        timing: timing.violations,
    })
}

/// CSV of `|ψ_iᴴ a(θ)|²` in dB for θ = -90°..=90° in 1° steps.
pub fn write_slepian_dump<W: Write + ?Sized>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let bank = slepian_bank(&cfg.array).map_err(|e| CliError::Config(e.to_string()))?;
    let n_rf = cfg.array.n_rf;
    let mut header = String::from("angle_deg");
    for i in 1..=n_rf {
        header.push_str(&format!(",psi{i}_db"));
    }
    let write = |out: &mut W| -> io::Result<()> {
        writeln!(out, "{header}")?;
        for deg in -90..=90 {
            write!(out, "{deg}")?;
            for col in 0..n_rf {
                let p = bank
                    .beam_pattern(col, (deg as f64).to_radians())
                    .map_err(|e| io::Error::other(e.to_string()))?;
                write!(out, ",{}", 10.0 * p.log10())?;
            }
            writeln!(out)?;
        }
        Ok(())
    };
    write(out).map_err(|e| CliError::Io(e.to_string()))
}

/// Execute a parsed command, writing reports and stdout CSV to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Refine {
            noiseless,
            dump_spectrum,
            dump_objective,
            dump_snapshots,
        } => {
            cfg.refine.noiseless |= *noiseless;
            let dumps = RefineDumps {
                spectrum: dump_spectrum.clone(),
                objective: dump_objective.clone(),
                snapshots: dump_snapshots.clone(),
            };
            let report = run_refine(&cfg, &dumps)?;
            write!(stdout, "{report}").map_err(|e| CliError::Io(e.to_string()))
        }
        Command::Sweep { kind, out } => {
            let result =
                run_sweep(&cfg.sweep_spec()).map_err(|e| CliError::Config(e.to_string()))?;
            with_output(out.as_deref(), stdout, |w| match kind {
                SweepKind::Se => result.write_se_csv(w),
                SweepKind::Rmse => result.write_rmse_csv(w),
            })
        }
        Command::SlepianDump { out } => {
            let mut buf = Vec::new();
            write_slepian_dump(&cfg, &mut buf)?;
            with_output(out.as_deref(), stdout, |w| w.write_all(&buf))
        }
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
