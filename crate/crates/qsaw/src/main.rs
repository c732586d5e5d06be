//! `qsaw` — batch command-line front end for the confined-phonon toolkit.
//!
//! Every subcommand reads an experiment configuration (built-in reference
//! values unless `--config` is given), applies any per-field override flags,
//! writes its artifacts into `--out-dir`, and records a `manifest.json`
//! describing the run. Data outputs are deterministic: re-running the same
//! command on the same inputs reproduces them byte for byte.
//!
//! Exit codes: 0 success, 1 input/configuration/IO error, 2 fit did not
//! converge (the result file is still written), 3 singular or rank-deficient
//! numerical system.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qsaw::config::{
    self, config_to_json, ConfigError, ExperimentConfig, UnknownKeyPolicy,
};
use qsaw::manifest::{short_hash, RunManifest};
use qsaw::pipeline::{format_power_table, q_vs_power_pipeline, PipelineError};
use qsaw::results::{
    fit_report, to_json_text, DesignReport, COHERENT_PARAM_NAMES, CROSSING_PARAM_NAMES,
    FANO_PARAM_NAMES, LINE_PARAM_NAMES, LOSS_PARAM_NAMES,
};
use qsaw::spectrum_io::{
    atomic_write, format_branch_table_csv, format_shift_table_csv, format_spectrum_csv,
    load_spectrum, load_spectrum_any, load_two_tone_map, IoError,
};
use qsaw_core::com::{
    composite_conductance, confined_mode_summary, effective_cavity_length, free_spectral_range,
    idt_conductance, mirror_penetration_depth, mirror_stopband, ComError,
};
use qsaw_core::dressed::{
    avoided_crossing, coherent_mixture_components, coherent_state_spectrum, dispersive_shift,
    mixture_density, stark_shift_vs_n, DressedError,
};
use qsaw_core::fit::{
    extract_avoided_crossing, fano_initial_guess, fano_model, fit, make_loss_model, FitError,
    FitOptions, FitProblem, FitResult,
};
use qsaw_core::lineshape::{
    coupled_oscillator_pair, predict_fano_q, sinc2_main_lobe_fwhm, DriveTarget, LineshapeError,
    OscillatorPairParams,
};
use qsaw_core::spectrum::{linspace_around, AxisUnit, Spectrum, ValueUnit};

// ---------------------------------------------------------------------------
// Command-line grammar
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "qsaw",
    version,
    about = "Modeling and spectral analysis for a qubit coupled to a confined surface-acoustic-wave mode",
    propagate_version = true
)]
struct Cli {
    /// JSON experiment configuration; built-in reference device when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for all output artifacts (created if missing).
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
    /// Warn about unknown configuration keys instead of rejecting them.
    #[arg(long, global = true)]
    lenient_config: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Resonator design figures (penetration depth, cavity length, FSR, stop band).
    Design(DesignCmd),
    /// Acoustic conductance spectra: full mirrored device and/or bare transducer.
    ComSim(ComSimCmd),
    /// Qubit frequency shift versus phonon number (ac Stark ladder).
    Stark(StarkCmd),
    /// Hybridized branch frequencies across the qubit-mode crossing.
    CrossingSim(CrossingSimCmd),
    /// Qubit spectrum under a coherent phonon population.
    CoherentSim(CoherentSimCmd),
    /// Least-squares fit of a named model to a data file.
    Fit(FitCmd),
    /// Predicted interference asymmetry from the mode/transducer detuning.
    PredictQ(PredictQCmd),
    /// Driven steady state of two coupled oscillators (interference model).
    Oscillators(OscillatorsCmd),
    /// Batch interference fits across drive powers.
    PipelineQVsPower(PipelineCmd),
}

/// Per-field overrides for the `device` configuration group.
#[derive(Args, Clone, Copy, Default)]
struct DeviceOverrides {
    /// Transducer electrode period, m.
    #[arg(allow_negative_numbers = true, long)]
    lambda_idt: Option<f64>,
    /// Mirror grating period, m.
    #[arg(allow_negative_numbers = true, long)]
    lambda_mirror: Option<f64>,
    /// Transducer finger pairs.
    #[arg(long)]
    n_pairs: Option<u32>,
    /// Acoustic aperture, m.
    #[arg(allow_negative_numbers = true, long)]
    overlap_w: Option<f64>,
    /// Mirror grating length, m.
    #[arg(allow_negative_numbers = true, long)]
    l_mirror: Option<f64>,
    /// Transducer length, m.
    #[arg(allow_negative_numbers = true, long)]
    l_idt: Option<f64>,
    /// SAW phase velocity, m/s.
    #[arg(allow_negative_numbers = true, long)]
    v_sound: Option<f64>,
    /// Propagation amplitude loss, 1/m.
    #[arg(allow_negative_numbers = true, long)]
    prop_loss: Option<f64>,
    /// Transducer per-period reflectivity, real part.
    #[arg(allow_negative_numbers = true, long)]
    r_idt_re: Option<f64>,
    /// Transducer per-period reflectivity, imaginary part.
    #[arg(allow_negative_numbers = true, long)]
    r_idt_im: Option<f64>,
    /// Mirror per-period reflectivity, real part.
    #[arg(allow_negative_numbers = true, long)]
    r_mirror_re: Option<f64>,
    /// Mirror per-period reflectivity, imaginary part.
    #[arg(allow_negative_numbers = true, long)]
    r_mirror_im: Option<f64>,
}

impl DeviceOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let d = &mut cfg.device;
        set(&mut d.lambda_idt, self.lambda_idt);
        set(&mut d.lambda_mirror, self.lambda_mirror);
        set(&mut d.n_pairs, self.n_pairs);
        set(&mut d.overlap_w, self.overlap_w);
        set(&mut d.l_mirror, self.l_mirror);
        set(&mut d.l_idt, self.l_idt);
        set(&mut d.v_sound, self.v_sound);
        set(&mut d.prop_loss, self.prop_loss);
        set(&mut d.r_idt.re, self.r_idt_re);
        set(&mut d.r_idt.im, self.r_idt_im);
        set(&mut d.r_mirror.re, self.r_mirror_re);
        set(&mut d.r_mirror.im, self.r_mirror_im);
    }
}

/// Per-field overrides for the `transmon` configuration group.
#[derive(Args, Clone, Copy, Default)]
struct TransmonOverrides {
    /// Josephson energy, Hz.
    #[arg(allow_negative_numbers = true, long)]
    ej: Option<f64>,
    /// Charging energy, Hz.
    #[arg(allow_negative_numbers = true, long)]
    ec: Option<f64>,
    /// Anharmonicity, Hz.
    #[arg(allow_negative_numbers = true, long)]
    alpha: Option<f64>,
    /// Transmon levels kept in diagonalizations.
    #[arg(long)]
    n_levels: Option<usize>,
    /// Maximum Josephson energy, Hz.
    #[arg(allow_negative_numbers = true, long)]
    ej_max: Option<f64>,
}

impl TransmonOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let t = &mut cfg.transmon;
        set(&mut t.ej, self.ej);
        set(&mut t.ec, self.ec);
        set(&mut t.alpha, self.alpha);
        set(&mut t.n_levels, self.n_levels);
        set(&mut t.ej_max, self.ej_max);
    }
}

/// Per-field overrides for the `hybrid` configuration group.
#[derive(Args, Clone, Copy, Default)]
struct HybridOverrides {
    /// Qubit-phonon coupling, Hz.
    #[arg(allow_negative_numbers = true, long)]
    g_m: Option<f64>,
    /// Confined-mode frequency, Hz.
    #[arg(allow_negative_numbers = true, long)]
    omega_m: Option<f64>,
    /// Qubit-mode detuning, Hz.
    #[arg(allow_negative_numbers = true, long)]
    delta: Option<f64>,
    /// Readout-cavity frequency, Hz.
    #[arg(allow_negative_numbers = true, long)]
    omega_c: Option<f64>,
    /// Qubit-cavity coupling, Hz.
    #[arg(allow_negative_numbers = true, long)]
    g_cavity: Option<f64>,
}

impl HybridOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let h = &mut cfg.hybrid;
        set(&mut h.g_m, self.g_m);
        set(&mut h.omega_m, self.omega_m);
        set(&mut h.delta, self.delta);
        set(&mut h.omega_c, self.omega_c);
        set(&mut h.g_cavity, self.g_cavity);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct DesignCmd {
    #[command(flatten)]
    device: DeviceOverrides,
}

#[derive(Args)]
struct ComSimCmd {
    #[command(flatten)]
    device: DeviceOverrides,
    /// Simulate only the bare transducer (no mirrors).
    #[arg(long, conflicts_with = "with_idt")]
    idt_only: bool,
    /// Also write the bare-transducer curve next to the composite one.
    #[arg(long)]
    with_idt: bool,
    /// Grid center, Hz (default: mirror Bragg frequency, or transducer
    /// center with --idt-only).
    #[arg(allow_negative_numbers = true, long)]
    f_center: Option<f64>,
    /// Grid half span, Hz (default: 3 stop-band widths, or 2.5 transducer
    /// main-lobe widths with --idt-only).
    #[arg(allow_negative_numbers = true, long)]
    f_half_span: Option<f64>,
    /// Grid points.
    #[arg(long)]
    n_points: Option<usize>,
    /// Transfer-matrix subdivisions per section.
    #[arg(long, default_value_t = 1)]
    n_subsections: u32,
}

#[derive(Args)]
struct StarkCmd {
    #[command(flatten)]
    transmon: TransmonOverrides,
    #[command(flatten)]
    hybrid: HybridOverrides,
    /// Largest phonon number simulated.
    #[arg(long, default_value_t = 10)]
    n_max: u32,
    /// Bare qubit frequency, Hz (default: omega_m + delta).
    #[arg(allow_negative_numbers = true, long)]
    omega_q: Option<f64>,
}

#[derive(Args)]
struct CrossingSimCmd {
    #[command(flatten)]
    transmon: TransmonOverrides,
    #[command(flatten)]
    hybrid: HybridOverrides,
    /// Lowest swept qubit frequency, Hz (default: omega_m − 30 MHz).
    #[arg(allow_negative_numbers = true, long)]
    omega_q_min: Option<f64>,
    /// Highest swept qubit frequency, Hz (default: omega_m + 30 MHz).
    #[arg(allow_negative_numbers = true, long)]
    omega_q_max: Option<f64>,
    /// Sweep points.
    #[arg(long, default_value_t = 241)]
    n_points: usize,
}

#[derive(Args)]
struct CoherentSimCmd {
    #[command(flatten)]
    transmon: TransmonOverrides,
    #[command(flatten)]
    hybrid: HybridOverrides,
    /// Mean phonon number of the coherent drive.
    #[arg(allow_negative_numbers = true, long, default_value_t = 4.0)]
    n_bar: f64,
    /// Qubit linewidth (FWHM), Hz.
    #[arg(allow_negative_numbers = true, long, default_value_t = 1e6)]
    gamma_q: f64,
    /// Dressed zero-phonon qubit frequency, Hz (default: omega_m + delta).
    #[arg(allow_negative_numbers = true, long)]
    omega_d: Option<f64>,
    /// Shift per phonon, Hz (default: the dispersive formula on g_m, delta,
    /// alpha).
    #[arg(allow_negative_numbers = true, long)]
    two_chi: Option<f64>,
    /// Grid center, Hz (default: mixture mean omega_d + two_chi·n_bar).
    #[arg(allow_negative_numbers = true, long)]
    f_center: Option<f64>,
    /// Grid half span, Hz (default: covers the populated ladder plus tails).
    #[arg(allow_negative_numbers = true, long)]
    f_half_span: Option<f64>,
    /// Grid points.
    #[arg(long, default_value_t = 2001)]
    n_points: usize,
}

#[derive(Args)]
struct FitCmd {
    #[command(subcommand)]
    model: FitModel,
}

#[derive(Subcommand)]
enum FitModel {
    /// Interference lineshape; parameters n_max, q, gamma, omega_m, n_off.
    Fano(FitArgs),
    /// Qubit loss rate vs frequency; parameters q_i, gamma_0, omega_idt.
    Loss(LossFitArgs),
    /// Coherent-phonon qubit spectrum; parameters n_bar, amplitude, gamma_q,
    /// omega_d. The shift per phonon is held fixed (see --two-chi).
    Coherent(CoherentFitArgs),
    /// Avoided-crossing two-tone map; parameters g_m, omega_m.
    Crossing(FitArgs),
    /// Straight line; parameters slope, intercept.
    Line(FitArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Input data file (CSV).
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Override an initial parameter, e.g. --init q=-0.3 (repeatable).
    #[arg(long, value_name = "NAME=VALUE")]
    init: Vec<String>,
    /// Uniform per-point 1σ uncertainty used to weight the fit.
    #[arg(allow_negative_numbers = true, long)]
    sigma: Option<f64>,
    /// Iteration cap.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Relative chi² decrease declaring convergence.
    #[arg(allow_negative_numbers = true, long, default_value_t = 1e-10)]
    ftol: f64,
    /// Relative parameter step declaring convergence.
    #[arg(allow_negative_numbers = true, long, default_value_t = 1e-10)]
    xtol: f64,
    /// Initial damping of the step control.
    #[arg(allow_negative_numbers = true, long, default_value_t = 1e-3)]
    lambda_init: f64,
    /// Relative finite-difference step.
    #[arg(allow_negative_numbers = true, long, default_value_t = 1e-6)]
    rel_step: f64,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            ftol: self.ftol,
            xtol: self.xtol,
            lambda_init: self.lambda_init,
            rel_step: self.rel_step,
        }
    }
}

#[derive(Args)]
struct LossFitArgs {
    #[command(flatten)]
    common: FitArgs,
    /// Transducer finger pairs fixed in the loss model (default: the
    /// config's loss.n_pairs).
    #[arg(long)]
    n_pairs: Option<u32>,
}

#[derive(Args)]
struct CoherentFitArgs {
    #[command(flatten)]
    common: FitArgs,
    /// Shift per phonon, Hz, held fixed in the model (default: the dispersive
    /// formula on the config's g_m, delta, alpha). It is a device constant
    /// calibrated from the occupation ladder, not a property of one spectrum;
    /// a spectrum with only the n = 0 line populated cannot determine it.
    #[arg(allow_negative_numbers = true, long)]
    two_chi: Option<f64>,
}

#[derive(Args)]
struct PredictQCmd {
    /// Confined-mode frequency, Hz (default: hybrid.omega_m).
    #[arg(allow_negative_numbers = true, long)]
    omega_saw: Option<f64>,
    /// Transducer center frequency, Hz (default: loss.omega_idt).
    #[arg(allow_negative_numbers = true, long)]
    omega_idt: Option<f64>,
    /// Transducer response width (FWHM), Hz (default: the sinc² main-lobe
    /// width for loss.n_pairs at loss.omega_idt).
    #[arg(allow_negative_numbers = true, long)]
    gamma_idt: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DriveArg {
    /// Drive the narrow confined mode directly.
    Confined,
    /// Drive the broad transducer mode (the physical excitation path).
    Transducer,
}

#[derive(Args)]
struct OscillatorsCmd {
    /// Confined-mode frequency ω₁, Hz (default: hybrid.omega_m).
    #[arg(allow_negative_numbers = true, long)]
    omega_1: Option<f64>,
    /// Broad-mode frequency ω₂, Hz (default: loss.omega_idt).
    #[arg(allow_negative_numbers = true, long)]
    omega_2: Option<f64>,
    /// Confined-mode damping γ₁ (FWHM), Hz (default: γ₂/10⁴).
    #[arg(allow_negative_numbers = true, long)]
    gamma_1: Option<f64>,
    /// Broad-mode damping γ₂ (FWHM), Hz (default: transducer main-lobe width).
    #[arg(allow_negative_numbers = true, long)]
    gamma_2: Option<f64>,
    /// Bilinear coupling, Hz² (default: 2·g_m·ω₁).
    #[arg(allow_negative_numbers = true, long)]
    kappa: Option<f64>,
    /// Drive amplitude (arbitrary units).
    #[arg(allow_negative_numbers = true, long, default_value_t = 1.0)]
    drive_amp: f64,
    /// Which oscillator is driven.
    #[arg(long, value_enum, default_value_t = DriveArg::Transducer)]
    drive: DriveArg,
    /// Grid center, Hz (default: ω₁).
    #[arg(allow_negative_numbers = true, long)]
    f_center: Option<f64>,
    /// Grid half span, Hz.
    #[arg(allow_negative_numbers = true, long, default_value_t = 4e6)]
    f_half_span: f64,
    /// Grid points.
    #[arg(long, default_value_t = 4001)]
    n_points: usize,
    /// Skip the interference fit of the driven broad-mode response.
    #[arg(long)]
    no_fit: bool,
}

#[derive(Args)]
struct PipelineCmd {
    /// Dataset as POWER=PATH (repeatable; at least one required).
    #[arg(long = "entry", value_name = "POWER=PATH", required = true)]
    entries: Vec<String>,
}

// ---------------------------------------------------------------------------
// Error handling and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum AppError {
    /// Bad input, configuration, or file contents → exit 1.
    Input(String),
    /// Singular or rank-deficient numerical system → exit 3.
    Singular(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Input(_) => 1,
            AppError::Singular(_) => 3,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Input(msg) => write!(f, "{msg}"),
            AppError::Singular(msg) => write!(f, "singular system: {msg}"),
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<IoError> for AppError {
    fn from(e: IoError) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<ComError> for AppError {
    fn from(e: ComError) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<DressedError> for AppError {
    fn from(e: DressedError) -> Self {
        match e {
            DressedError::Singular(_) => AppError::Singular(e.to_string()),
            other => AppError::Input(other.to_string()),
        }
    }
}

impl From<LineshapeError> for AppError {
    fn from(e: LineshapeError) -> Self {
        match e {
            LineshapeError::Singular { .. } => AppError::Singular(e.to_string()),
            other => AppError::Input(other.to_string()),
        }
    }
}

impl From<FitError> for AppError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::RankDeficient { .. } => AppError::Singular(e.to_string()),
            other => AppError::Input(other.to_string()),
        }
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Fit(inner) => inner.into(),
            other => AppError::Input(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Run context: resolved config, output directory, artifact bookkeeping
// ---------------------------------------------------------------------------

struct Ctx {
    config: ExperimentConfig,
    out_dir: PathBuf,
    /// File names written so far, in creation order.
    outputs: Vec<String>,
}

impl Ctx {
    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, AppError> {
        let path = self.out_dir.join(name);
        atomic_write(&path, contents.as_bytes())?;
        self.outputs.push(name.to_string());
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn finish(self) -> Result<(), AppError> {
        let manifest = RunManifest::new(
            std::env::args().collect(),
            &config_to_json(&self.config),
            self.outputs,
        );
        manifest.write(&self.out_dir)?;
        Ok(())
    }
}

/// Re-validate after overrides so a flag can never smuggle in an
/// unphysical value.
fn resolved(mut cfg: ExperimentConfig, apply: impl FnOnce(&mut ExperimentConfig)) -> Result<ExperimentConfig, AppError> {
    apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<i32, AppError> {
    let policy = if cli.lenient_config {
        UnknownKeyPolicy::Lenient
    } else {
        UnknownKeyPolicy::Strict
    };
    let (config, warnings) = match &cli.config {
        Some(path) => config::load_config(path, policy)?,
        None => (ExperimentConfig::reference(), Vec::new()),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| {
        AppError::Input(format!("cannot create out dir {}: {e}", cli.out_dir.display()))
    })?;

    let mut ctx = Ctx { config, out_dir: cli.out_dir.clone(), outputs: Vec::new() };
    let code = match cli.cmd {
        Cmd::Design(args) => cmd_design(&mut ctx, &args)?,
        Cmd::ComSim(args) => cmd_com_sim(&mut ctx, &args)?,
        Cmd::Stark(args) => cmd_stark(&mut ctx, &args)?,
        Cmd::CrossingSim(args) => cmd_crossing_sim(&mut ctx, &args)?,
        Cmd::CoherentSim(args) => cmd_coherent_sim(&mut ctx, &args)?,
        Cmd::Fit(args) => cmd_fit(&mut ctx, &args)?,
        Cmd::PredictQ(args) => cmd_predict_q(&mut ctx, &args)?,
        Cmd::Oscillators(args) => cmd_oscillators(&mut ctx, &args)?,
        Cmd::PipelineQVsPower(args) => cmd_pipeline(&mut ctx, &args)?,
    };
    ctx.finish()?;
    Ok(code)
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

fn cmd_design(ctx: &mut Ctx, args: &DesignCmd) -> Result<i32, AppError> {
    ctx.config = resolved(ctx.config, |c| args.device.apply(c))?;
    let p = ctx.config.device_params();
    let l_p = mirror_penetration_depth(p.lambda_mirror, p.r_mirror.norm())?;
    let l_eff = effective_cavity_length(p.l_idt, l_p)?;
    let fsr = free_spectral_range(p.v_sound, l_eff)?;
    let stopband = mirror_stopband(p.r_mirror.norm(), p.f_mirror())?;
    let report = DesignReport {
        l_p_m: l_p,
        l_eff_m: l_eff,
        fsr_hz: fsr,
        stopband_hz: stopband,
        f_idt_hz: p.f_idt(),
        f_mirror_hz: p.f_mirror(),
    };
    ctx.write("design.json", &to_json_text(&report.to_value()))?;
    println!("mirror penetration depth  {:10.3} µm", l_p * 1e6);
    println!("effective cavity length   {:10.3} µm", l_eff * 1e6);
    println!("free spectral range       {:10.3} MHz", fsr / 1e6);
    println!("mirror stop-band width    {:10.3} MHz", stopband / 1e6);
    println!("transducer center         {:10.6} GHz", p.f_idt() / 1e9);
    println!("mirror Bragg frequency    {:10.6} GHz", p.f_mirror() / 1e9);
    Ok(0)
}

/// Tag generated spectra with the operation and a short parameter hash so
/// downstream files are traceable without re-running anything.
fn provenance(op: &str, params: &impl fmt::Debug) -> String {
    format!("{op} params#{}", short_hash(&format!("{params:?}")))
}

fn spectrum_from_parts(
    x: Vec<f64>,
    y: Vec<f64>,
    value_unit: ValueUnit,
    provenance: String,
) -> Result<Spectrum, AppError> {
    Spectrum::new(x, y, AxisUnit::Hertz, value_unit, provenance)
        .map_err(|e| AppError::Input(format!("generated spectrum invalid: {e}")))
}

fn cmd_com_sim(ctx: &mut Ctx, args: &ComSimCmd) -> Result<i32, AppError> {
    ctx.config = resolved(ctx.config, |c| args.device.apply(c))?;
    let p = ctx.config.device_params();
    let stopband = mirror_stopband(p.r_mirror.norm(), p.f_mirror()).unwrap_or(p.f_mirror() * 0.01);

    let write_idt = |ctx: &mut Ctx, grid: &[f64]| -> Result<(), AppError> {
        let g = idt_conductance(grid, &p)?;
        let s = spectrum_from_parts(
            g.freq,
            g.g_norm,
            ValueUnit::Dimensionless,
            provenance("idt_conductance", &p),
        )?;
        ctx.write("com_idt.csv", &format_spectrum_csv(&s))?;
        Ok(())
    };

    if args.idt_only {
        let center = args.f_center.unwrap_or_else(|| p.f_idt());
        let half = args
            .f_half_span
            .unwrap_or(2.5 * p.f_idt() / p.n_pairs.max(1) as f64);
        let grid = linspace_around(center, half, args.n_points.unwrap_or(2001));
        write_idt(ctx, &grid)?;
        return Ok(0);
    }

    let center = args.f_center.unwrap_or_else(|| p.f_mirror());
    let half = args.f_half_span.unwrap_or(3.0 * stopband);
    let grid = linspace_around(center, half, args.n_points.unwrap_or(4001));
    let g = composite_conductance(&grid, &p, args.n_subsections)?;
    let summary = confined_mode_summary(&g)?;
    let s = spectrum_from_parts(
        g.freq,
        g.g_norm,
        ValueUnit::Dimensionless,
        provenance("composite_conductance", &p),
    )?;
    ctx.write("com_composite.csv", &format_spectrum_csv(&s))?;
    let mode = json!({
        "f_peak_hz": summary.f_peak,
        "fwhm_hz": summary.fwhm,
        "q": summary.q,
    });
    ctx.write("com_mode.json", &to_json_text(&mode))?;
    println!(
        "confined mode: {:.6} GHz, FWHM {:.1} kHz, Q {:.0}",
        summary.f_peak / 1e9,
        summary.fwhm / 1e3,
        summary.q
    );
    if args.with_idt {
        write_idt(ctx, &grid)?;
    }
    Ok(0)
}

fn cmd_stark(ctx: &mut Ctx, args: &StarkCmd) -> Result<i32, AppError> {
    ctx.config = resolved(ctx.config, |c| {
        args.transmon.apply(c);
        args.hybrid.apply(c);
    })?;
    let tp = ctx.config.transmon_params();
    let hp = ctx.config.hybrid_params();
    let omega_q = args.omega_q.unwrap_or(hp.omega_m + hp.delta);

    let ladder = stark_shift_vs_n(&tp, &hp, omega_q, args.n_max)?;
    ctx.write(
        "stark.csv",
        &format_shift_table_csv(&ladder.phonon_number, &ladder.qubit_shift),
    )?;

    // Slope of the low-occupation ladder (n ≤ 2), where the shift is still
    // linear, against the second-order dispersive formula.
    let n_lin = (args.n_max.min(2)) as usize;
    if n_lin == 0 {
        return Err(AppError::Input(String::from("--n-max must be at least 1")));
    }
    let ed_slope = (ladder.qubit_shift[n_lin] - ladder.qubit_shift[0]) / n_lin as f64;
    let two_chi = dispersive_shift(hp.g_m, hp.delta, tp.alpha)?;
    let deviation = (ed_slope - two_chi).abs() / two_chi.abs();
    let summary = json!({
        "ed_slope_hz": ed_slope,
        "dispersive_shift_hz": two_chi,
        "relative_deviation": deviation,
        "omega_q_hz": omega_q,
        "n_max": args.n_max,
    });
    ctx.write("stark_summary.json", &to_json_text(&summary))?;
    println!(
        "diagonalized slope {:.4} MHz/phonon, dispersive formula {:.4} MHz, deviation {:.2}%",
        ed_slope / 1e6,
        two_chi / 1e6,
        deviation * 100.0
    );
    Ok(0)
}

fn cmd_crossing_sim(ctx: &mut Ctx, args: &CrossingSimCmd) -> Result<i32, AppError> {
    ctx.config = resolved(ctx.config, |c| {
        args.transmon.apply(c);
        args.hybrid.apply(c);
    })?;
    let tp = ctx.config.transmon_params();
    let hp = ctx.config.hybrid_params();
    let lo = args.omega_q_min.unwrap_or(hp.omega_m - 30e6);
    let hi = args.omega_q_max.unwrap_or(hp.omega_m + 30e6);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(AppError::Input(String::from(
            "--omega-q-min must lie below --omega-q-max",
        )));
    }
    let center = 0.5 * (lo + hi);
    let grid = linspace_around(center, hi - center, args.n_points.max(2));
    let (lower, upper) = avoided_crossing(&tp, &hp, &grid)?;
    ctx.write("crossing.csv", &format_branch_table_csv(&grid, &lower, &upper))?;

    let min_gap = lower
        .iter()
        .zip(&upper)
        .map(|(&l, &u)| u - l)
        .fold(f64::INFINITY, f64::min);
    let summary = json!({
        "min_gap_hz": min_gap,
        "expected_gap_hz": 2.0 * hp.g_m,
    });
    ctx.write("crossing_summary.json", &to_json_text(&summary))?;
    println!(
        "minimum branch gap {:.4} MHz (2·g_m = {:.4} MHz)",
        min_gap / 1e6,
        2.0 * hp.g_m / 1e6
    );
    Ok(0)
}

fn cmd_coherent_sim(ctx: &mut Ctx, args: &CoherentSimCmd) -> Result<i32, AppError> {
    ctx.config = resolved(ctx.config, |c| {
        args.transmon.apply(c);
        args.hybrid.apply(c);
    })?;
    let tp = ctx.config.transmon_params();
    let hp = ctx.config.hybrid_params();
    let omega_d = args.omega_d.unwrap_or(hp.omega_m + hp.delta);
    let two_chi = match args.two_chi {
        Some(v) => v,
        None => dispersive_shift(hp.g_m, hp.delta, tp.alpha)?,
    };
    let center = args.f_center.unwrap_or(omega_d + two_chi * args.n_bar);
    let half = args.f_half_span.unwrap_or_else(|| {
        two_chi.abs() * (args.n_bar + 8.0 * args.n_bar.sqrt() + 10.0) + 10.0 * args.gamma_q
    });
    let grid = linspace_around(center, half, args.n_points.max(2));
    let spectrum = coherent_state_spectrum(args.n_bar, two_chi, args.gamma_q, omega_d, &grid)?;
    ctx.write("coherent.csv", &format_spectrum_csv(&spectrum))?;
    println!(
        "coherent ladder: n̄ = {}, shift per phonon {:.4} MHz, qubit linewidth {:.3} MHz",
        args.n_bar,
        two_chi / 1e6,
        args.gamma_q / 1e6
    );
    Ok(0)
}

/// Parse repeated `--init name=value` flags against a model's parameter
/// names, overriding entries of `init` in place.
fn apply_init_overrides(
    init: &mut [f64],
    names: &[&str],
    flags: &[String],
) -> Result<(), AppError> {
    for flag in flags {
        let (name, value) = flag.split_once('=').ok_or_else(|| {
            AppError::Input(format!("--init `{flag}` is not NAME=VALUE"))
        })?;
        let idx = names.iter().position(|n| *n == name).ok_or_else(|| {
            AppError::Input(format!(
                "unknown parameter `{name}`; this model has: {}",
                names.join(", ")
            ))
        })?;
        init[idx] = value.parse::<f64>().map_err(|e| {
            AppError::Input(format!("--init {name}: bad number `{value}`: {e}"))
        })?;
    }
    Ok(())
}

/// Shared tail of every `fit` subcommand: run, write the JSON report, return
/// the convergence-aware exit code.
fn finish_fit<F: Fn(&[f64], f64) -> f64>(
    ctx: &mut Ctx,
    file_name: &str,
    names: &[&str],
    problem: &FitProblem<'_, F>,
    options: &FitOptions,
) -> Result<i32, AppError> {
    let result = fit(problem, options)?;
    report_fit(ctx, file_name, names, &result)
}

fn report_fit(
    ctx: &mut Ctx,
    file_name: &str,
    names: &[&str],
    result: &FitResult,
) -> Result<i32, AppError> {
    let report = fit_report(names, result);
    ctx.write(file_name, &to_json_text(&report))?;
    for (name, (&v, &s)) in names.iter().zip(result.params.iter().zip(&result.sigma)) {
        println!("  {name:>10} = {v:.6e} ± {s:.3e}");
    }
    if result.converged {
        println!("converged in {} iterations, chi² = {:.6e}", result.n_iter, result.chi2);
        Ok(0)
    } else {
        eprintln!(
            "fit did not converge within {} iterations (result written anyway)",
            result.n_iter
        );
        Ok(2)
    }
}

fn cmd_fit(ctx: &mut Ctx, args: &FitCmd) -> Result<i32, AppError> {
    ctx.config.validate()?;
    match &args.model {
        FitModel::Fano(common) => {
            let data = load_spectrum(&common.data, AxisUnit::Hertz, ValueUnit::Dimensionless)?;
            let mut init = fano_initial_guess(data.x(), data.y()).to_vec();
            apply_init_overrides(&mut init, &FANO_PARAM_NAMES, &common.init)?;
            let sigma_vec = common.sigma.map(|s| vec![s; data.len()]);
            let mut problem = FitProblem::new(fano_model, data.x(), data.y(), &init);
            if let Some(s) = &sigma_vec {
                problem = problem.with_sigma(s);
            }
            finish_fit(ctx, "fit_fano.json", &FANO_PARAM_NAMES, &problem, &common.options())
        }
        FitModel::Loss(loss_args) => {
            let common = &loss_args.common;
            let data = load_spectrum(&common.data, AxisUnit::Hertz, ValueUnit::PerSecond)?;
            let n_pairs = loss_args.n_pairs.unwrap_or(ctx.config.loss.n_pairs);
            let model = make_loss_model(n_pairs);

            // Data-driven start: the sinc² peak dominates at the transducer
            // center, the background floor fixes Q_i.
            let (x, y) = (data.x(), data.y());
            let (i_max, y_max) =
                y.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
                    if v > acc.1 {
                        (i, v)
                    } else {
                        acc
                    }
                });
            let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let q_i_init = if y_min > 0.0 {
                std::f64::consts::TAU * x[i_max] / y_min
            } else {
                1e4
            };
            let mut init = vec![q_i_init, (y_max - y_min).max(f64::MIN_POSITIVE), x[i_max]];
            apply_init_overrides(&mut init, &LOSS_PARAM_NAMES, &common.init)?;
            let sigma_vec = common.sigma.map(|s| vec![s; data.len()]);
            let mut problem = FitProblem::new(model, x, y, &init);
            if let Some(s) = &sigma_vec {
                problem = problem.with_sigma(s);
            }
            finish_fit(ctx, "fit_loss.json", &LOSS_PARAM_NAMES, &problem, &common.options())
        }
        FitModel::Coherent(coh_args) => {
            let common = &coh_args.common;
            let data = load_spectrum(&common.data, AxisUnit::Hertz, ValueUnit::Dimensionless)?;
            let two_chi = match coh_args.two_chi {
                Some(v) => v,
                None => {
                    let tp = ctx.config.transmon_params();
                    let hp = ctx.config.hybrid_params();
                    dispersive_shift(hp.g_m, hp.delta, tp.alpha)?
                }
            };

            let model = move |p: &[f64], w: f64| {
                // Central differences probe half a step below an active
                // lower bound, where a negative occupation is undefined;
                // extend the model as constant there instead.
                let n_bar = p[0].max(0.0);
                match coherent_mixture_components(n_bar, two_chi, p[3]) {
                    Ok((weights, centers)) => p[1] * mixture_density(w, &weights, &centers, p[2]),
                    Err(_) => f64::NAN,
                }
            };

            // Landmark initialization. The line spacing is known, so the peak
            // envelope fixes the rest: the strongest line sits at the peak,
            // and the half-maximum edge on the low-occupation side of the
            // ladder lies about 1.18·|two_chi|·√n̄ away from it.
            let (x, y) = (data.x(), data.y());
            let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let (i_pk, dev_pk) = y.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| {
                if v - y_min > acc.1 {
                    (i, v - y_min)
                } else {
                    acc
                }
            });
            let x_pk = x[i_pk];
            let half = 0.5 * dev_pk;
            let edge = if two_chi <= 0.0 {
                x.iter().zip(y).rfind(|&(_, &v)| v - y_min >= half)
            } else {
                x.iter().zip(y).find(|&(_, &v)| v - y_min >= half)
            }
            .map_or(x_pk, |(&e, _)| e);
            let n_bar_est = if two_chi == 0.0 {
                0.0
            } else {
                ((edge - x_pk) / (1.177 * two_chi)).powi(2).min(1e5)
            };
            let guess = fano_initial_guess(x, y);
            let area = qsaw_core::math::trapezoid(x, y);

            // The peak is normally the line nearest the mean occupation, but
            // a near-tie between neighbouring Poisson weights can hand it to
            // the next line over; starting the comb one register out locks
            // into a false alignment, so try the neighbouring assignments
            // (and the bare n = 0 one) and keep the best fit.
            let k_center = n_bar_est.round();
            let mut registers = vec![k_center, k_center - 1.0, k_center + 1.0, 0.0];
            registers.retain(|&k| k >= 0.0);
            let mut inits: Vec<Vec<f64>> = Vec::new();
            for k in registers {
                let mut init =
                    vec![n_bar_est, area.max(f64::MIN_POSITIVE), guess[2], x_pk - two_chi * k];
                apply_init_overrides(&mut init, &COHERENT_PARAM_NAMES, &common.init)?;
                if !inits.contains(&init) {
                    inits.push(init);
                }
            }

            // The occupation cap bounds the Poisson-cutoff allocation; the
            // width floor keeps the lines finite on any real grid.
            let lower = [0.0, f64::NEG_INFINITY, 1.0, f64::NEG_INFINITY];
            let upper = [1e6, f64::INFINITY, f64::INFINITY, f64::INFINITY];
            let sigma_vec = common.sigma.map(|s| vec![s; data.len()]);
            let mut best: Option<FitResult> = None;
            let mut first_err: Option<FitError> = None;
            for init in &inits {
                let mut problem = FitProblem::new(model, x, y, init).with_bounds(&lower, &upper);
                if let Some(s) = &sigma_vec {
                    problem = problem.with_sigma(s);
                }
                match fit(&problem, &common.options()) {
                    Ok(r) => {
                        if best.as_ref().map_or(true, |b| r.chi2 < b.chi2) {
                            best = Some(r);
                        }
                    }
                    Err(e) => first_err = first_err.or(Some(e)),
                }
            }
            let result = match (best, first_err) {
                (Some(r), _) => r,
                (None, Some(e)) => return Err(e.into()),
                (None, None) => unreachable!("the register list is never empty"),
            };
            report_fit(ctx, "fit_coherent.json", &COHERENT_PARAM_NAMES, &result)
        }
        FitModel::Crossing(common) => {
            let map = load_two_tone_map(&common.data)?;
            let hp = ctx.config.hybrid_params();
            let mut init = vec![hp.g_m, hp.omega_m];
            apply_init_overrides(&mut init, &CROSSING_PARAM_NAMES, &common.init)?;
            let result = extract_avoided_crossing(&map, (init[0], init[1]))?;
            report_fit(ctx, "fit_crossing.json", &CROSSING_PARAM_NAMES, &result)
        }
        FitModel::Line(common) => {
            let data = load_spectrum_any(&common.data)?;
            let line = |p: &[f64], x: f64| p[0] * x + p[1];
            let mut init = vec![0.0, 0.0];
            apply_init_overrides(&mut init, &LINE_PARAM_NAMES, &common.init)?;
            let sigma_vec = common.sigma.map(|s| vec![s; data.len()]);
            let mut problem = FitProblem::new(line, data.x(), data.y(), &init);
            if let Some(s) = &sigma_vec {
                problem = problem.with_sigma(s);
            }
            finish_fit(ctx, "fit_line.json", &LINE_PARAM_NAMES, &problem, &common.options())
        }
    }
}

fn cmd_predict_q(ctx: &mut Ctx, args: &PredictQCmd) -> Result<i32, AppError> {
    ctx.config.validate()?;
    let loss = ctx.config.loss_params();
    let omega_saw = args.omega_saw.unwrap_or(ctx.config.hybrid.omega_m);
    let omega_idt = args.omega_idt.unwrap_or(loss.omega_idt);
    let gamma_idt = match args.gamma_idt {
        Some(v) => v,
        // the default width tracks the resolved center, not the config's
        None => sinc2_main_lobe_fwhm(loss.n_pairs, omega_idt)?,
    };
    let q = predict_fano_q(omega_saw, omega_idt, gamma_idt)?;
    ctx.write("predict_q.json", &to_json_text(&json!({ "q_predicted": q })))?;
    println!("predicted asymmetry q = {q:.6}");
    Ok(0)
}

fn cmd_oscillators(ctx: &mut Ctx, args: &OscillatorsCmd) -> Result<i32, AppError> {
    ctx.config.validate()?;
    let hp = ctx.config.hybrid_params();
    let loss = ctx.config.loss_params();
    let omega_1 = args.omega_1.unwrap_or(hp.omega_m);
    let omega_2 = args.omega_2.unwrap_or(loss.omega_idt);
    let gamma_2 = match args.gamma_2 {
        Some(v) => v,
        None => sinc2_main_lobe_fwhm(loss.n_pairs, loss.omega_idt)?,
    };
    let gamma_1 = args.gamma_1.unwrap_or(gamma_2 / 1e4);
    let kappa = args.kappa.unwrap_or(2.0 * hp.g_m * omega_1);
    let params = OscillatorPairParams {
        omega_1,
        omega_2,
        gamma_1,
        gamma_2,
        kappa,
        drive_amp: args.drive_amp,
        drive: match args.drive {
            DriveArg::Confined => DriveTarget::Confined,
            DriveArg::Transducer => DriveTarget::Transducer,
        },
    };
    let center = args.f_center.unwrap_or(omega_1);
    let grid = linspace_around(center, args.f_half_span, args.n_points.max(2));
    let response = coupled_oscillator_pair(&grid, &params)?;

    let tag = provenance("coupled_oscillator_pair", &params);
    let mut confined = response.confined.power();
    let mut transducer = response.transducer.power();
    confined.provenance = tag.clone();
    transducer.provenance = tag;
    ctx.write("oscillators_confined.csv", &format_spectrum_csv(&confined))?;
    ctx.write("oscillators_transducer.csv", &format_spectrum_csv(&transducer))?;

    if args.no_fit || args.drive == DriveArg::Confined {
        // The interference window needs the drive entering through the broad
        // mode; with a confined drive there is nothing meaningful to fit.
        return Ok(0);
    }

    // Normalize the driven response to its maximum and fit the interference
    // lineshape. The narrow window in the broad response sits at the
    // confined frequency dragged by Re[κ²/(2ω₁D₂(ω₁))] and broadened by
    // 2·Im[...]; seeding the fit there (with a negative amplitude, since the
    // window is a dip riding on the broad background) selects the physical
    // branch of this self-dual lineshape.
    let d2 = qsaw_core::Complex64::new(
        omega_2 * omega_2 - omega_1 * omega_1,
        -(gamma_2 * omega_1),
    );
    let drag = kappa * kappa / (2.0 * omega_1 * d2);
    let (a, b) = (drag.re, drag.im);

    let y_raw = transducer.y();
    let y_max = y_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(y_max.is_finite() && y_max > 0.0) {
        return Err(AppError::Input(String::from("driven response vanished")));
    }
    let y_norm: Vec<f64> = y_raw.iter().map(|&v| v / y_max).collect();
    let x = transducer.x();
    let y_min = y_norm.iter().cloned().fold(f64::INFINITY, f64::min);
    let i_min = y_norm
        .iter()
        .enumerate()
        .min_by(|p, q| p.1.partial_cmp(q.1).expect("finite"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let peak = y_norm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q_init = if b > 0.0 { -a / b } else { 0.0 };
    let init = [
        -(peak - y_min),
        q_init,
        (gamma_1 + 2.0 * b).max(f64::MIN_POSITIVE),
        x[i_min] + a,
        peak,
    ];
    let problem = FitProblem::new(fano_model, x, &y_norm, &init);
    let options = FitOptions::default();
    let result = fit(&problem, &options)?;
    println!(
        "fitted interference asymmetry q = {:.6} on the driven response",
        result.params[1]
    );
    report_fit(ctx, "oscillators_fit.json", &FANO_PARAM_NAMES, &result)
}

fn cmd_pipeline(ctx: &mut Ctx, args: &PipelineCmd) -> Result<i32, AppError> {
    ctx.config.validate()?;
    let mut datasets: Vec<(f64, Spectrum)> = Vec::with_capacity(args.entries.len());
    for entry in &args.entries {
        let (power_text, path_text) = entry.split_once('=').ok_or_else(|| {
            AppError::Input(format!("--entry `{entry}` is not POWER=PATH"))
        })?;
        let power: f64 = power_text.parse().map_err(|e| {
            AppError::Input(format!("--entry power `{power_text}`: {e}"))
        })?;
        let spectrum = load_spectrum(
            Path::new(path_text),
            AxisUnit::Hertz,
            ValueUnit::Dimensionless,
        )?;
        datasets.push((power, spectrum));
    }
    let borrowed: Vec<(f64, &Spectrum)> = datasets.iter().map(|(p, s)| (*p, s)).collect();
    let rows = q_vs_power_pipeline(&borrowed)?;
    ctx.write("q_vs_power.csv", &format_power_table(&rows))?;
    let flagged = rows.iter().filter(|r| !r.converged).count();
    println!("{} datasets fitted, {} flagged non-converged", rows.len(), flagged);
    Ok(0)
}
