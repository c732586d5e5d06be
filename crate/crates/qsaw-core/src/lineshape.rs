//! Closed-form spectral models: Fano absorption of the confined mode,
//! sinc²-enhanced qubit energy loss near the transducer band, the
//! asymmetry-parameter prediction from transducer detuning, and a
//! classical two-oscillator steady-state oracle for Fano interference.

use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;
// Needed for f64 math in std-free builds; redundant (but harmless) whenever
// std is in the crate graph and its inherent methods win resolution.
#[allow(unused_imports)]
use num_traits::Float;

use crate::math::{bisect, sinc2};
use crate::spectrum::ComplexSpectrum;

const PI: f64 = core::f64::consts::PI;

/// Fano lineshape parameters for the phonon occupation spectrum.
#[derive(Clone, Copy, Debug)]
pub struct FanoParams {
    /// Peak occupation scale n̄_max (≥ 0).
    pub n_max: f64,
    /// Asymmetry parameter q (signed; q → 0 recovers a Lorentzian).
    pub q: f64,
    /// Confined-mode linewidth Γ, FWHM, Hz.
    pub gamma: f64,
    /// Resonance center ω_m, Hz.
    pub omega_m: f64,
    /// Background occupation n̄_off (≥ 0).
    pub n_off: f64,
}

impl FanoParams {
    pub fn validate(&self) -> Result<(), LineshapeError> {
        let mut bad: Vec<String> = Vec::new();
        if !(self.n_max.is_finite() && self.n_max >= 0.0) {
            bad.push(String::from("n_max"));
        }
        if !self.q.is_finite() {
            bad.push(String::from("q"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            bad.push(String::from("gamma"));
        }
        if !self.omega_m.is_finite() {
            bad.push(String::from("omega_m"));
        }
        if !(self.n_off.is_finite() && self.n_off >= 0.0) {
            bad.push(String::from("n_off"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(LineshapeError::InvalidParams { fields: bad })
        }
    }
}

/// Qubit energy-loss model parameters.
#[derive(Clone, Copy, Debug)]
pub struct LossParams {
    /// Internal quality factor Q_i.
    pub q_i: f64,
    /// Peak phonon-conversion rate Γ₀, 1/s.
    pub gamma_0: f64,
    /// Transducer finger pairs N_p.
    pub n_pairs: u32,
    /// Transducer central frequency, Hz.
    pub omega_idt: f64,
}

impl LossParams {
    pub fn validate(&self) -> Result<(), LineshapeError> {
        let mut bad: Vec<String> = Vec::new();
        if !(self.q_i.is_finite() && self.q_i > 0.0) {
            bad.push(String::from("q_i"));
        }
        if !(self.gamma_0.is_finite() && self.gamma_0 >= 0.0) {
            bad.push(String::from("gamma_0"));
        }
        if self.n_pairs < 1 {
            bad.push(String::from("n_pairs"));
        }
        if !(self.omega_idt.is_finite() && self.omega_idt > 0.0) {
            bad.push(String::from("omega_idt"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(LineshapeError::InvalidParams { fields: bad })
        }
    }
}

/// Which oscillator receives the harmonic drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriveTarget {
    /// Oscillator 1, the long-lived confined mode.
    Confined,
    /// Oscillator 2, the broad transducer continuum proxy (the physical
    /// excitation path).
    Transducer,
}

/// Two coupled damped oscillators; the Fano regime of interest has
/// gamma_2 ≫ gamma_1.
#[derive(Clone, Copy, Debug)]
pub struct OscillatorPairParams {
    /// Natural frequencies, Hz (linear; the equations are scale-covariant).
    pub omega_1: f64,
    pub omega_2: f64,
    /// Damping rates, FWHM convention, Hz.
    pub gamma_1: f64,
    pub gamma_2: f64,
    /// Bilinear coupling, Hz².
    pub kappa: f64,
    /// Drive amplitude, arbitrary units.
    pub drive_amp: f64,
    pub drive: DriveTarget,
}

impl OscillatorPairParams {
    pub fn validate(&self) -> Result<(), LineshapeError> {
        let mut bad: Vec<String> = Vec::new();
        if !(self.omega_1.is_finite() && self.omega_1 > 0.0) {
            bad.push(String::from("omega_1"));
        }
        if !(self.omega_2.is_finite() && self.omega_2 > 0.0) {
            bad.push(String::from("omega_2"));
        }
        if !(self.gamma_1.is_finite() && self.gamma_1 > 0.0) {
            bad.push(String::from("gamma_1"));
        }
        if !(self.gamma_2.is_finite() && self.gamma_2 > 0.0) {
            bad.push(String::from("gamma_2"));
        }
        if !self.kappa.is_finite() {
            bad.push(String::from("kappa"));
        }
        if !self.drive_amp.is_finite() {
            bad.push(String::from("drive_amp"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(LineshapeError::InvalidParams { fields: bad })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LineshapeError {
    InvalidParams { fields: Vec<String> },
    Domain(&'static str),
    /// The steady-state 2×2 system is exactly singular (undamped resonance).
    Singular { freq_hz: f64 },
    InvalidGrid(&'static str),
}

impl core::fmt::Display for LineshapeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LineshapeError::InvalidParams { fields } => {
                write!(f, "invalid parameters: {}", fields.join(", "))
            }
            LineshapeError::Domain(what) => write!(f, "argument outside domain: {what}"),
            LineshapeError::Singular { freq_hz } => {
                write!(f, "steady-state system singular at {freq_hz:.6e} Hz")
            }
            LineshapeError::InvalidGrid(why) => write!(f, "invalid grid: {why}"),
        }
    }
}

impl core::error::Error for LineshapeError {}

/// Fano absorption profile of the confined mode:
/// n̄(ω) = n̄_max·(1 + q² − (qΓ/2 + ω − ω_m)²/((Γ/2)² + (ω − ω_m)²)) + n̄_off.
/// Algebraically equal to n̄_max·(1 − q·x)²/(1 + x²) + n̄_off with reduced
/// detuning x = (ω − ω_m)/(Γ/2); peak n̄_max(1+q²)+n̄_off at x = −q, resonant
/// term vanishing at x = 1/q.
pub fn fano_absorption(omega: f64, p: &FanoParams) -> f64 {
    let hw = p.gamma / 2.0;
    let d = omega - p.omega_m;
    let num = p.q * hw + d;
    p.n_max * (1.0 + p.q * p.q - (num * num) / (hw * hw + d * d)) + p.n_off
}

/// Fano profile sampled over a grid.
pub fn fano_spectrum(freqs: &[f64], p: &FanoParams) -> Result<Vec<f64>, LineshapeError> {
    p.validate()?;
    if freqs.is_empty() {
        return Err(LineshapeError::InvalidGrid("empty grid"));
    }
    Ok(freqs.iter().map(|&w| fano_absorption(w, p)).collect())
}

/// Qubit energy relaxation rate versus frequency:
/// Γ₁(ω_q) = 2π·f_q/Q_i + Γ₀·sinc²(π·N_p·(f_q − f_IDT)/f_IDT).
/// The internal-loss term uses the angular frequency; the sinc argument is
/// a frequency ratio and needs no conversion.
pub fn loss_rate(omega_q: f64, p: &LossParams) -> Result<f64, LineshapeError> {
    p.validate()?;
    if !(omega_q.is_finite() && omega_q > 0.0) {
        return Err(LineshapeError::Domain("omega_q must be positive"));
    }
    let internal = 2.0 * PI * omega_q / p.q_i;
    let x = PI * p.n_pairs as f64 * (omega_q - p.omega_idt) / p.omega_idt;
    Ok(internal + p.gamma_0 * sinc2(x))
}

/// FWHM of the sinc² main lobe: 2·x½·f_IDT/(π·N_p), with x½ the positive
/// root of sinc²(x) = 1/2 found by bisection to 1e-12 (x½ ≈ 1.39156).
pub fn sinc2_main_lobe_fwhm(n_pairs: u32, omega_idt: f64) -> Result<f64, LineshapeError> {
    if n_pairs < 1 {
        return Err(LineshapeError::Domain("n_pairs must be at least 1"));
    }
    if !(omega_idt.is_finite() && omega_idt > 0.0) {
        return Err(LineshapeError::Domain("omega_idt must be positive"));
    }
    // sinc² falls monotonically from 1 through 1/2 inside [1, 2]
    let x_half = bisect(|x| sinc2(x) - 0.5, 1.0, 2.0, 1e-12)
        .expect("sinc² - 1/2 changes sign on [1, 2]");
    Ok(2.0 * x_half * omega_idt / (PI * n_pairs as f64))
}

/// Predicted Fano asymmetry from the detuning between the confined mode and
/// the broad transducer response: q = (ω_SAW² − ω_IDT²)/(γ_IDT·ω_SAW).
/// Dimensionless and invariant under a common rescaling of all inputs.
pub fn predict_fano_q(
    omega_saw: f64,
    omega_idt: f64,
    gamma_idt: f64,
) -> Result<f64, LineshapeError> {
    if !(gamma_idt.is_finite() && gamma_idt > 0.0) {
        return Err(LineshapeError::Domain("gamma_idt must be positive"));
    }
    if !(omega_saw.is_finite() && omega_saw > 0.0 && omega_idt.is_finite() && omega_idt > 0.0) {
        return Err(LineshapeError::Domain("frequencies must be positive"));
    }
    Ok((omega_saw * omega_saw - omega_idt * omega_idt) / (gamma_idt * omega_saw))
}

/// Both steady-state amplitudes of the coupled pair.
///
/// The confined (low-loss) amplitude peaks near ω₁ with a coupling-induced
/// shift and extra damping but stays nearly symmetric; the interference
/// signature — a deep minimum beside a modest overshoot, the Fano window —
/// lives in the lossy-oscillator amplitude when that oscillator carries the
/// drive, because only there does the numerator sweep through the confined
/// resonance.
#[derive(Clone, Debug)]
pub struct OscillatorPairResponse {
    /// x₁(ω), the low-loss confined mode.
    pub confined: ComplexSpectrum,
    /// x₂(ω), the broad transducer-continuum proxy.
    pub transducer: ComplexSpectrum,
}

/// Solve the steady state of two coupled, damped, harmonically driven
/// oscillators on a frequency grid:
/// (ω_k² − ω² − iγ_k·ω)·x_k + κ·x_other = F_k at each grid point.
pub fn coupled_oscillator_pair(
    freq_grid: &[f64],
    p: &OscillatorPairParams,
) -> Result<OscillatorPairResponse, LineshapeError> {
    p.validate()?;
    if freq_grid.len() < 2 {
        return Err(LineshapeError::InvalidGrid("need at least two grid points"));
    }
    for w in freq_grid.windows(2) {
        if !(w[0].is_finite() && w[1] > w[0]) {
            return Err(LineshapeError::InvalidGrid("grid must be strictly increasing"));
        }
    }
    let (f1, f2) = match p.drive {
        DriveTarget::Confined => (Complex64::new(p.drive_amp, 0.0), Complex64::new(0.0, 0.0)),
        DriveTarget::Transducer => (Complex64::new(0.0, 0.0), Complex64::new(p.drive_amp, 0.0)),
    };
    let kappa = Complex64::new(p.kappa, 0.0);
    let mut x1 = Vec::with_capacity(freq_grid.len());
    let mut x2 = Vec::with_capacity(freq_grid.len());
    for &w in freq_grid {
        let d1 = Complex64::new(p.omega_1 * p.omega_1 - w * w, -p.gamma_1 * w);
        let d2 = Complex64::new(p.omega_2 * p.omega_2 - w * w, -p.gamma_2 * w);
        let det = d1 * d2 - kappa * kappa;
        if det.norm() == 0.0 {
            return Err(LineshapeError::Singular { freq_hz: w });
        }
        x1.push((d2 * f1 - kappa * f2) / det);
        x2.push((d1 * f2 - kappa * f1) / det);
    }
    Ok(OscillatorPairResponse {
        confined: ComplexSpectrum {
            x: freq_grid.to_vec(),
            values: x1,
            provenance: String::from("steady-state amplitude of the confined oscillator"),
        },
        transducer: ComplexSpectrum {
            x: freq_grid.to_vec(),
            values: x2,
            provenance: String::from("steady-state amplitude of the transducer oscillator"),
        },
    })
}

/// Steady-state amplitude of oscillator 1 (the confined mode) alone.
pub fn coupled_oscillator_response(
    freq_grid: &[f64],
    p: &OscillatorPairParams,
) -> Result<ComplexSpectrum, LineshapeError> {
    Ok(coupled_oscillator_pair(freq_grid, p)?.confined)
}
