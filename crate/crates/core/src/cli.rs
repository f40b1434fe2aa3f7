//! The `rydberg` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad configuration or arguments,
//! 3 simulation failure, 4 fit failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calculators::{
    effective_two_photon, heterodyne_linewidth, ionization_cross_section, ionization_rate, ponderomotive_shift,
    rydberg_polarizability, BeamGeometry, PhysicalConstants,
};
use crate::config::{DeltaSetting, RunConfig};
use crate::experiments::{at_resonance, find_resonance, rabi_scan, spectrum_scan, ExperimentError, ScanResult, ScanVariable};
use crate::fitting::{fit_beam_waist, fit_damped_cosine, fit_exp_decay, fit_gaussian_dips, FitError, FitResult};

#[derive(Debug, Parser)]
#[command(name = "rydberg", version, about = "Two-photon Rydberg excitation of a single trapped atom")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recapture probability versus red pulse duration.
    Rabi(RunArgs),
    /// Recapture probability versus two-photon detuning.
    Spectrum(RunArgs),
    /// Fit a model to the first two columns of a CSV file.
    Fit(FitArgs),
    /// Atomic-physics calculators.
    #[command(subcommand)]
    Calc(CalcCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    pub config: PathBuf,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `[fluctuations] seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FitModel {
    DampedCosine,
    GaussianDips,
    ExpDecay,
    BeamWaist,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(value_enum)]
    pub model: FitModel,
    pub csv: PathBuf,
    /// Number of dips for `gaussian_dips`.
    #[arg(long, default_value_t = 1)]
    pub dips: usize,
}

#[derive(Debug, Subcommand)]
pub enum CalcCommand {
    /// Photo-ionization cross section from a measured lifetime, or the
    /// lifetime implied by a cross section.
    Photoion {
        #[arg(long, required_unless_present = "sigma_cm2", conflicts_with = "sigma_cm2")]
        tau_ms: Option<f64>,
        #[arg(long)]
        sigma_cm2: Option<f64>,
        #[arg(long)]
        power_mw: f64,
        #[arg(long)]
        wx_um: f64,
        #[arg(long)]
        wy_um: f64,
        /// Fraction of time spent in the intermediate state.
        #[arg(long)]
        f: f64,
        #[arg(long, default_value_t = 475.0)]
        wavelength_nm: f64,
    },
    /// Ponderomotive light shift of a Rydberg level at beam center.
    Lightshift {
        #[arg(long)]
        power_mw: f64,
        #[arg(long)]
        wx_um: f64,
        #[arg(long)]
        wy_um: f64,
        #[arg(long, default_value_t = 810.0)]
        wavelength_nm: f64,
    },
    /// Effective two-photon Rabi frequency and light shifts.
    Efftwophoton {
        #[arg(long = "or")]
        omega_r: f64,
        #[arg(long = "ob")]
        omega_b: f64,
        #[arg(long = "d")]
        delta_big: f64,
        /// Two-photon detuning for the generalized Rabi frequency.
        #[arg(long, allow_hyphen_values = true)]
        delta: Option<f64>,
    },
    /// Laser linewidth from a self-heterodyne beat FWHM.
    Heterodyne {
        #[arg(long)]
        beat_khz: f64,
    },
}

/// Failure with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Io(String),
    Config(String),
    Simulation(String),
    Fit(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Simulation(_) => 3,
            Failure::Fit(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Config(m) | Failure::Simulation(m) | Failure::Fit(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidScan(_) | ExperimentError::Calc(_) => Failure::Config(e.to_string()),
            _ => Failure::Simulation(e.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message());
            failure.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Rabi(args) => cmd_scan(ScanVariable::Duration, &args, stdout),
        Command::Spectrum(args) => cmd_scan(ScanVariable::Detuning, &args, stdout),
        Command::Fit(args) => cmd_fit(&args, stdout),
        Command::Calc(calc) => {
            let text = cmd_calc(&calc).map_err(Failure::Config)?;
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::Io(e.to_string()))
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Failure::Io(e.to_string())),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = one per core).
fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// First line of every CSV written by [`scan_csv`].
const CSV_MARKER: &str = "# # rydberg ";

/// Loads and resolves a run configuration, then produces the scan CSV.
///
/// `config_text` may also be a CSV previously written by this function, in
/// which case its `#` header is used as the configuration.
pub fn scan_csv(variable: ScanVariable, config_text: &str, seed: Option<u64>, threads: usize) -> Result<String, Failure> {
    let parsed = if config_text.starts_with(CSV_MARKER) {
        RunConfig::from_csv_header(config_text)
    } else {
        RunConfig::parse(config_text)
    };
    let mut cfg = parsed.map_err(|e| Failure::Config(e.0))?;
    if let Some(seed) = seed {
        cfg.fluctuations.seed = seed;
    }
    let system = cfg.system.params();
    system.validate().map_err(|e| Failure::Config(e.to_string()))?;

    let (result, delta) = with_threads(threads, || -> Result<(ScanResult, f64), Failure> {
        let delta = match cfg.system.delta_small {
            DeltaSetting::Value(v) => v,
            DeltaSetting::Resonance => match variable {
                ScanVariable::Duration => at_resonance(&system)?.delta_small,
                ScanVariable::Detuning => find_resonance(&system, &cfg.pulse.shape())?,
            },
        };
        let spec = cfg.scan_spec(variable, delta).map_err(|e| Failure::Config(e.0))?;
        let result = match variable {
            ScanVariable::Duration => rabi_scan(&spec)?,
            ScanVariable::Detuning => spectrum_scan(&spec)?,
        };
        Ok((result, delta))
    })??;

    let (command, column, scale) = match variable {
        ScanVariable::Duration => ("rabi", "T_ns", 1e3),
        ScanVariable::Detuning => ("spectrum", "delta_mhz", 1.0),
    };
    let mut csv = cfg.header(command, delta);
    let _ = writeln!(csv, "{column},recapture_mean,recapture_stderr");
    for p in &result.points {
        let _ = writeln!(csv, "{:.4},{:.10},{:.10}", p.x * scale, p.mean, p.std_error);
    }
    Ok(csv)
}

fn cmd_scan(variable: ScanVariable, args: &RunArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = read_to_string(&args.config)?;
    let csv = scan_csv(variable, &text, args.seed, args.threads)
        .map_err(|f| match f {
            Failure::Config(m) => Failure::Config(format!("{}: {m}", args.config.display())),
            other => other,
        })?;
    emit(&csv, args.out.as_deref(), stdout)
}

/// Column header names (if any) and numeric rows of a CSV, `#` lines skipped.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match cells.iter().map(|c| c.parse::<f64>()).collect::<Result<Vec<_>, _>>() {
            Ok(values) => rows.push(values),
            Err(_) if header.is_empty() && rows.is_empty() => header = cells.iter().map(|c| c.to_string()).collect(),
            Err(e) => return Err(format!("line {}: {e}", lineno + 1)),
        }
    }
    Ok((header, rows))
}

fn units(model: FitModel) -> &'static [(&'static str, &'static str)] {
    match model {
        FitModel::DampedCosine => &[("tau", "us"), ("freq", "MHz")],
        FitModel::GaussianDips => &[("nu", "MHz"), ("s", "MHz"), ("fwhm", "MHz"), ("separation", "MHz")],
        FitModel::ExpDecay => &[("tau", "ms")],
        FitModel::BeamWaist => &[("x0", "um"), ("w", "um")],
    }
}

/// Human-readable report followed by a `key=value` block.
pub fn fit_report(model: FitModel, fit: &FitResult) -> String {
    let unit = |name: &str| {
        units(model)
            .iter()
            .find(|(prefix, _)| name.strip_prefix(prefix).is_some_and(|rest| rest.chars().all(|c| c.is_ascii_digit())))
            .map(|(_, u)| format!(" {u}"))
            .unwrap_or_default()
    };
    let model_name = model.to_possible_value().expect("named").get_name().to_string();
    let mut out = String::new();
    let _ = writeln!(out, "model: {model_name}");
    let _ = writeln!(out, "converged: {}", fit.converged);
    let _ = writeln!(out, "iterations: {}", fit.iterations);
    let _ = writeln!(out, "rss: {:.6e}", fit.rss);
    let _ = writeln!(out, "parameters:");
    for ((name, value), se) in fit.names.iter().zip(&fit.params).zip(&fit.std_errors) {
        let _ = writeln!(out, "  {name:<12} {value:>14.6} +/- {se:<12.6}{}", unit(name));
    }
    if !fit.derived.is_empty() {
        let _ = writeln!(out, "derived:");
        for d in &fit.derived {
            let _ = writeln!(out, "  {:<12} {:>14.6} +/- {:<12.6}{}", d.name, d.value, d.std_error, unit(&d.name));
        }
    }
    let _ = writeln!(out, "[values]");
    let _ = writeln!(out, "model={model_name}");
    let _ = writeln!(out, "converged={}", fit.converged);
    for ((name, value), se) in fit.names.iter().zip(&fit.params).zip(&fit.std_errors) {
        let _ = writeln!(out, "{name}={value:?}\n{name}_stderr={se:?}");
    }
    for d in &fit.derived {
        let _ = writeln!(out, "{}={:?}\n{}_stderr={:?}", d.name, d.value, d.name, d.std_error);
    }
    out
}

fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = read_to_string(&args.csv)?;
    let (header, rows) = parse_csv(&text).map_err(|e| Failure::Config(format!("{}: {e}", args.csv.display())))?;
    if let Some(row) = rows.iter().find(|r| r.len() < 2) {
        return Err(Failure::Config(format!("every row needs at least 2 columns, found {row:?}")));
    }
    let ns_to_us = header.first().is_some_and(|h| h == "T_ns");
    let x: Vec<f64> = rows.iter().map(|r| if ns_to_us { r[0] * 1e-3 } else { r[0] }).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[1]).collect();

    let fitted = match args.model {
        FitModel::DampedCosine => fit_damped_cosine(&x, &y),
        FitModel::GaussianDips => fit_gaussian_dips(&x, &y, args.dips),
        FitModel::ExpDecay => fit_exp_decay(&x, &y),
        FitModel::BeamWaist => fit_beam_waist(&x, &y),
    };
    let write = |s: &str, stdout: &mut dyn Write| stdout.write_all(s.as_bytes()).map_err(|e| Failure::Io(e.to_string()));
    match fitted {
        Ok(fit) => write(&fit_report(args.model, &fit), stdout),
        Err(FitError::MaxIterations(best)) => {
            write(&fit_report(args.model, &best), stdout)?;
            Err(Failure::Fit(format!("no convergence after {} iterations; best-so-far printed", best.iterations)))
        }
        Err(e @ FitError::InvalidInput(_)) => Err(Failure::Config(e.to_string())),
        Err(e) => Err(Failure::Fit(e.to_string())),
    }
}

fn beam(power_mw: f64, wx_um: f64, wy_um: f64) -> BeamGeometry {
    BeamGeometry { power: power_mw * 1e-3, waist_x: wx_um * 1e-6, waist_y: wy_um * 1e-6 }
}

/// Text report of one calculator.
pub fn cmd_calc(calc: &CalcCommand) -> Result<String, String> {
    let k = PhysicalConstants::CODATA_2018;
    let mut out = String::new();
    match *calc {
        CalcCommand::Photoion { tau_ms, sigma_cm2, power_mw, wx_um, wy_um, f, wavelength_nm } => {
            let b = beam(power_mw, wx_um, wy_um);
            b.validate().map_err(|e| e.to_string())?;
            let wavelength = wavelength_nm * 1e-9;
            let _ = writeln!(out, "power          {power_mw} mW");
            let _ = writeln!(out, "waists         {wx_um} x {wy_um} um");
            let _ = writeln!(out, "wavelength     {wavelength_nm} nm");
            let _ = writeln!(out, "f              {f}");
            let _ = writeln!(out, "peak intensity {:.6e} W/m^2", b.peak_intensity());
            let _ = writeln!(out, "photon freq    {:.6} THz", k.c / wavelength / 1e12);
            match (tau_ms, sigma_cm2) {
                (Some(tau), _) => {
                    let sigma = ionization_cross_section(tau, f, &b, wavelength, &k).map_err(|e| e.to_string())?;
                    let _ = writeln!(out, "tau            {tau} ms");
                    let _ = writeln!(out, "sigma          {sigma:.6e} cm^2");
                }
                (None, Some(sigma)) => {
                    let rate = ionization_rate(sigma, f, &b, wavelength, &k).map_err(|e| e.to_string())?;
                    let _ = writeln!(out, "sigma          {sigma:e} cm^2");
                    let _ = writeln!(out, "rate           {rate:.6e} 1/ms");
                    let _ = writeln!(out, "tau            {:.6} ms", 1.0 / rate);
                }
                (None, None) => return Err("photoion needs --tau-ms or --sigma-cm2".into()),
            }
        }
        CalcCommand::Lightshift { power_mw, wx_um, wy_um, wavelength_nm } => {
            let b = beam(power_mw, wx_um, wy_um);
            b.validate().map_err(|e| e.to_string())?;
            let wavelength = wavelength_nm * 1e-9;
            let intensity = b.peak_intensity();
            let _ = writeln!(out, "peak intensity {intensity:.6e} W/m^2");
            let _ = writeln!(out, "alpha/eps0     {:.6e} m^3", rydberg_polarizability(wavelength, &k));
            let _ = writeln!(out, "light shift    {:.6} MHz", ponderomotive_shift(intensity, wavelength, &k));
        }
        CalcCommand::Efftwophoton { omega_r, omega_b, delta_big, delta } => {
            let two = effective_two_photon(omega_r, omega_b, delta_big).map_err(|e| e.to_string())?;
            let _ = writeln!(out, "omega_eff      {:.6} MHz", two.omega_eff);
            let _ = writeln!(out, "shift_up       {:.6} MHz", two.shift_up);
            let _ = writeln!(out, "shift_r        {:.6} MHz", two.shift_r);
            let _ = writeln!(out, "delta_res      {:.6} MHz", two.resonant_detuning());
            if let Some(d) = delta {
                let _ = writeln!(out, "delta_eff      {:.6} MHz", two.effective_detuning(d));
                let _ = writeln!(out, "rabi           {:.6} MHz", two.generalized_rabi(d));
            }
        }
        CalcCommand::Heterodyne { beat_khz } => {
            if !(beat_khz >= 0.0 && beat_khz.is_finite()) {
                return Err(format!("beat FWHM must be >= 0, got {beat_khz}"));
            }
            let _ = writeln!(out, "beat fwhm      {beat_khz} kHz");
            let _ = writeln!(out, "linewidth      {} kHz", heterodyne_linewidth(beat_khz));
        }
    }
    Ok(out)
}
