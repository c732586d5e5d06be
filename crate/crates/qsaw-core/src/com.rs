//! Coupling-of-modes (COM) model of a SAW Fabry-Pérot resonator.
//!
//! The device is a one-dimensional cascade: Bragg mirror, interdigital
//! transducer (IDT), Bragg mirror. Counter-propagating amplitudes a± are
//! tracked through each uniform section with a closed-form 2×2 transfer
//! matrix; transducer sections carry a distributed source term driven at
//! unit voltage. The reported conductance is the net acoustic power the
//! sources deliver (radiated plus dissipated), max-normalized over the grid.
//!
//! Conventions:
//! - A section's periodicity is the acoustic wavelength at its Bragg center,
//!   f_c = v_s/λ. Each period holds two reflective strips, so a per-period
//!   reflectivity r enters the distributed coupling as κ = 2r/λ. This is the
//!   normalization under which the closed-form design quantities below
//!   (stop band 2|r|f/π, penetration λ/2|r|) agree with the cascade.
//! - Propagation loss η (amplitude Np/m) analytically continues k → k + iη.
//! - The geometry builder inserts a registration gap (< λ/2) between the
//!   IDT and each mirror so the fundamental mode sits at the stop-band
//!   center, the designed operating point of such resonators; published
//!   length tables pin every other dimension but not this one.

use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;


use crate::math::{rem_euclid, sinc2};
// Needed for f64 math in std-free builds; redundant (but harmless) whenever
// std is in the crate graph and its inherent methods win resolution.
#[allow(unused_imports)]
use num_traits::Float;

const PI: f64 = core::f64::consts::PI;

/// Geometry and material parameters of the SAW device. Lengths in meters,
/// velocity in m/s, loss in amplitude Np/m, reflectivities dimensionless
/// per period.
#[derive(Clone, Copy, Debug)]
pub struct DeviceParams {
    /// Transducer periodicity (acoustic wavelength at the IDT center).
    pub lambda_idt: f64,
    /// Mirror periodicity (acoustic wavelength at the mirror stop-band center).
    pub lambda_mirror: f64,
    /// Finger pairs driving the sinc² transducer response.
    pub n_pairs: u32,
    /// Acoustic beam overlap width; carried for completeness.
    pub overlap_w: f64,
    /// Length of one mirror grating region.
    pub l_mirror: f64,
    /// Length of the transducer region.
    pub l_idt: f64,
    /// SAW phase velocity.
    pub v_sound: f64,
    /// Propagation loss η, amplitude Np/m.
    pub prop_loss: f64,
    /// Transducer internal reflectivity per period.
    pub r_idt: Complex64,
    /// Mirror reflectivity per period.
    pub r_mirror: Complex64,
}

impl DeviceParams {
    /// Checks every field constraint; returns all offending field names.
    pub fn validate(&self) -> Result<(), ComError> {
        let mut bad: Vec<String> = Vec::new();
        let mut need = |ok: bool, name: &str| {
            if !ok {
                bad.push(String::from(name));
            }
        };
        need(self.lambda_idt.is_finite() && self.lambda_idt > 0.0, "lambda_idt");
        need(self.lambda_mirror.is_finite() && self.lambda_mirror > 0.0, "lambda_mirror");
        need(self.n_pairs >= 1, "n_pairs");
        need(self.overlap_w.is_finite() && self.overlap_w > 0.0, "overlap_w");
        need(
            self.l_mirror.is_finite() && self.l_mirror >= self.lambda_mirror,
            "l_mirror",
        );
        need(self.l_idt.is_finite() && self.l_idt >= self.lambda_idt, "l_idt");
        need(self.v_sound.is_finite() && self.v_sound > 0.0, "v_sound");
        need(self.prop_loss.is_finite() && self.prop_loss >= 0.0, "prop_loss");
        need(self.r_idt.norm() < 1.0 && self.r_idt.is_finite(), "r_idt");
        need(self.r_mirror.norm() < 1.0 && self.r_mirror.is_finite(), "r_mirror");
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ComError::InvalidParams { fields: bad })
        }
    }

    /// Transducer synchronism frequency v_s/λ_IDT.
    pub fn f_idt(&self) -> f64 {
        self.v_sound / self.lambda_idt
    }

    /// Mirror stop-band center v_s/λ_mirror.
    pub fn f_mirror(&self) -> f64 {
        self.v_sound / self.lambda_mirror
    }
}

/// One uniform region of the cascade.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SectionKind {
    Mirror,
    Transducer,
    Free,
}

/// Uniform section: a grating (mirror or transducer) or free propagation.
/// `periodicity` and `reflectivity_per_period` are ignored for `Free`.
#[derive(Clone, Copy, Debug)]
pub struct ComSection {
    pub kind: SectionKind,
    pub length: f64,
    pub periodicity: f64,
    pub reflectivity_per_period: Complex64,
}

impl ComSection {
    pub fn free(length: f64) -> Self {
        ComSection {
            kind: SectionKind::Free,
            length,
            periodicity: 0.0,
            reflectivity_per_period: Complex64::new(0.0, 0.0),
        }
    }
}

/// Frequency grid with max-normalized conductance samples.
#[derive(Clone, Debug)]
pub struct ConductanceSpectrum {
    pub freq: Vec<f64>,
    pub g_norm: Vec<f64>,
}

/// Peak frequency, full width at half maximum, and quality factor of the
/// dominant confined mode.
#[derive(Clone, Copy, Debug)]
pub struct ModeSummary {
    pub f_peak: f64,
    pub fwhm: f64,
    pub q: f64,
}

/// Errors from the COM operations.
#[derive(Clone, Debug, PartialEq)]
pub enum ComError {
    /// Parameter constraint violations, by field name.
    InvalidParams { fields: Vec<String> },
    /// A section list constraint violation.
    InvalidSection { index: usize, reason: &'static str },
    /// The cascade has no transducer section, so no power is injected.
    NoTransducer,
    /// The frequency grid is not strictly increasing, positive, and ≥ 2 long.
    InvalidGrid(&'static str),
    /// Grid spacing near the stop band undersamples the expected resonance.
    GridTooCoarse { required_hz: f64, spacing_hz: f64 },
    /// A scalar argument is outside its domain.
    Domain(&'static str),
    /// No sample rises above half of the spectrum maximum.
    NoPeak,
    /// More than one local maximum above half maximum: ambiguous mode.
    MultiplePeaks(usize),
    /// The dominant peak does not fall to half maximum inside the grid.
    TruncatedPeak,
}

impl core::fmt::Display for ComError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ComError::InvalidParams { fields } => {
                write!(f, "invalid device parameters: {}", fields.join(", "))
            }
            ComError::InvalidSection { index, reason } => {
                write!(f, "invalid section {index}: {reason}")
            }
            ComError::NoTransducer => write!(f, "section cascade contains no transducer"),
            ComError::InvalidGrid(why) => write!(f, "invalid frequency grid: {why}"),
            ComError::GridTooCoarse { required_hz, spacing_hz } => write!(
                f,
                "resonance undersampled: grid spacing {spacing_hz:.3e} Hz near the stop band \
                 exceeds the required {required_hz:.3e} Hz"
            ),
            ComError::Domain(what) => write!(f, "argument outside domain: {what}"),
            ComError::NoPeak => write!(f, "no peak above half maximum"),
            ComError::MultiplePeaks(n) => {
                write!(f, "{n} local maxima above half maximum; mode ambiguous")
            }
            ComError::TruncatedPeak => {
                write!(f, "dominant peak does not reach half maximum inside the grid")
            }
        }
    }
}

impl core::error::Error for ComError {}

// ---------------------------------------------------------------------------
// Closed-form design quantities
// ---------------------------------------------------------------------------

/// Mirror penetration depth λ/(2|r|): the 1/e amplitude decay length of the
/// evanescent field inside the stop band.
pub fn mirror_penetration_depth(lambda_mirror: f64, r_mag: f64) -> Result<f64, ComError> {
    if !(lambda_mirror.is_finite() && lambda_mirror > 0.0) {
        return Err(ComError::Domain("lambda_mirror must be positive"));
    }
    if !(r_mag > 0.0 && r_mag < 1.0) {
        return Err(ComError::Domain("r_mag must lie in (0, 1)"));
    }
    Ok(lambda_mirror / (2.0 * r_mag))
}

/// Effective cavity length: transducer region plus one penetration depth
/// into each mirror.
pub fn effective_cavity_length(l_idt: f64, l_p: f64) -> Result<f64, ComError> {
    if !(l_idt.is_finite() && l_idt > 0.0 && l_p.is_finite() && l_p > 0.0) {
        return Err(ComError::Domain("lengths must be positive"));
    }
    Ok(l_idt + 2.0 * l_p)
}

/// Longitudinal mode spacing v_s/(2·L_eff).
pub fn free_spectral_range(v_sound: f64, l_eff: f64) -> Result<f64, ComError> {
    if !(v_sound.is_finite() && v_sound > 0.0 && l_eff.is_finite() && l_eff > 0.0) {
        return Err(ComError::Domain("v_sound and l_eff must be positive"));
    }
    Ok(v_sound / (2.0 * l_eff))
}

/// Full mirror stop-band width 2|r|·f/π around the Bragg center.
pub fn mirror_stopband(r_mag: f64, f_center: f64) -> Result<f64, ComError> {
    if !(r_mag > 0.0 && r_mag < 1.0) {
        return Err(ComError::Domain("r_mag must lie in (0, 1)"));
    }
    if !(f_center.is_finite() && f_center > 0.0) {
        return Err(ComError::Domain("f_center must be positive"));
    }
    Ok(2.0 * r_mag * f_center / PI)
}

/// Synchronism frequency of a grating of periodicity λ: v_s/λ.
pub fn idt_center_frequency(v_sound: f64, lambda: f64) -> Result<f64, ComError> {
    if !(v_sound.is_finite() && v_sound > 0.0 && lambda.is_finite() && lambda > 0.0) {
        return Err(ComError::Domain("v_sound and lambda must be positive"));
    }
    Ok(v_sound / lambda)
}

// ---------------------------------------------------------------------------
// Bare transducer response
// ---------------------------------------------------------------------------

/// Ideal bare-transducer conductance: sinc²(π·N_p·(f − f_IDT)/f_IDT), unit
/// peak at synchronism. No internal reflection, no loss.
pub fn idt_conductance(freqs: &[f64], params: &DeviceParams) -> Result<ConductanceSpectrum, ComError> {
    params.validate()?;
    check_grid(freqs)?;
    let f_c = params.f_idt();
    let n_p = params.n_pairs as f64;
    let g_norm = freqs
        .iter()
        .map(|&f| sinc2(PI * n_p * (f - f_c) / f_c))
        .collect();
    Ok(ConductanceSpectrum { freq: freqs.to_vec(), g_norm })
}

// ---------------------------------------------------------------------------
// Section cascade construction
// ---------------------------------------------------------------------------

/// Builds the mirror / gap / transducer / gap / mirror cascade for a device.
///
/// Period counts come from rounding length/periodicity down; the remainder
/// propagates freely (outside the cavity for mirrors, after the grating for
/// the transducer). The registration gaps are sized so that the round-trip
/// phase at the mirror stop-band center is a multiple of 2π, centering the
/// fundamental mode in the stop band.
pub fn device_sections(params: &DeviceParams) -> Result<Vec<ComSection>, ComError> {
    params.validate()?;
    let (n_m, rem_m) = split_periods(params.l_mirror, params.lambda_mirror);
    let (n_i, rem_i) = split_periods(params.l_idt, params.lambda_idt);
    let mirror_grating = n_m as f64 * params.lambda_mirror;
    let idt_grating = n_i as f64 * params.lambda_idt;

    let gap = registration_gap(params.l_idt, params.lambda_mirror);

    let mirror = ComSection {
        kind: SectionKind::Mirror,
        length: mirror_grating,
        periodicity: params.lambda_mirror,
        reflectivity_per_period: params.r_mirror,
    };
    let idt = ComSection {
        kind: SectionKind::Transducer,
        length: idt_grating,
        periodicity: params.lambda_idt,
        reflectivity_per_period: params.r_idt,
    };

    let mut sections = Vec::new();
    if rem_m > 0.0 {
        sections.push(ComSection::free(rem_m));
    }
    sections.push(mirror);
    if gap > 0.0 {
        sections.push(ComSection::free(gap));
    }
    sections.push(idt);
    if rem_i > 0.0 {
        sections.push(ComSection::free(rem_i));
    }
    if gap > 0.0 {
        sections.push(ComSection::free(gap));
    }
    sections.push(mirror);
    if rem_m > 0.0 {
        sections.push(ComSection::free(rem_m));
    }
    Ok(sections)
}

/// Whole periods in a region plus the leftover length. The epsilon guards
/// exact multiples against rounding just below an integer.
fn split_periods(length: f64, periodicity: f64) -> (u64, f64) {
    let n = (length / periodicity + 1e-9).floor();
    let rem = (length - n * periodicity).max(0.0);
    (n as u64, rem)
}

/// Half-gap between transducer and each mirror such that a mode sits at
/// the mirror stop-band center. At band center the product of the two
/// inward-facing mirror reflections is −tanh²(κ·L_g) for any per-period
/// reflectivity phase, so resonance requires e^{2ik_c·L_int} = −1: the
/// interior (IDT region plus both gaps) must hold an odd number of quarter
/// wavelengths.
fn registration_gap(l_idt: f64, lambda_mirror: f64) -> f64 {
    let half = 0.5 * lambda_mirror;
    let frac = rem_euclid(l_idt / half, 1.0);
    let mut add = 0.5 - frac;
    if add < -1e-9 {
        add += 1.0;
    }
    (add.max(0.0) * half) / 2.0
}

// ---------------------------------------------------------------------------
// Transfer-matrix solver
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
struct Mat2 {
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
}

type Vec2 = [Complex64; 2];

impl Mat2 {
    const IDENTITY: Mat2 = Mat2 {
        a: Complex64::new(1.0, 0.0),
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
        d: Complex64::new(1.0, 0.0),
    };

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    fn mul_vec(self, v: Vec2) -> Vec2 {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }
}

/// Closed-form transfer data of one uniform section at one frequency.
/// `t`, `b`: affine map v(L) = t·v(0) + b in the unrotated field frame.
/// `phi`, `psi`, `u`: field integrals for source work, in the local frame:
/// ∫₀ᴸ A dx = phi·A(0) + psi·u.
struct SectionOp {
    t: Mat2,
    b: Vec2,
    phi: Mat2,
    psi: Mat2,
    u: Vec2,
}

/// Entire-function evaluations of cosh z, sinh(z)/z, (cosh z − 1)/z²,
/// (sinh z − z)/z³ with series fallbacks near z = 0 (cancellation sets in
/// below |z| ≈ 1e-2).
fn hyperbolic_kernels(z: Complex64) -> (Complex64, Complex64, Complex64, Complex64) {
    if z.norm() < 1e-2 {
        let z2 = z * z;
        let one = Complex64::new(1.0, 0.0);
        let cosh = one + z2 * (0.5 + z2 * (1.0 / 24.0 + z2 / 720.0));
        let sinhc = one + z2 * (1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 / 5040.0));
        let coshm1 = Complex64::new(0.5, 0.0) + z2 * (1.0 / 24.0 + z2 * (1.0 / 720.0));
        let sinhm = Complex64::new(1.0 / 6.0, 0.0) + z2 * (1.0 / 120.0 + z2 * (1.0 / 5040.0));
        (cosh, sinhc, coshm1, sinhm)
    } else {
        let cosh = z.cosh();
        let sinh = z.sinh();
        let z2 = z * z;
        (cosh, sinh / z, (cosh - 1.0) / z2, (sinh - z) / (z2 * z))
    }
}

/// Builds the section operator at frequency `f`. The COM generator in the
/// local rotated frame is G = [[iδ−η, iκ], [−iκ̄, −iδ+η]] with G² = γ²·I,
/// so exp(GL) and its integrals are elementary in γL.
///
/// `strip_phase` is the grating phase at the section's left edge (radians):
/// a grating entered mid-period couples through κ·e^{2iθ} and is driven by
/// (μ·e^{iθ}, −μ·e^{−iθ}). Whole sections start on a strip, θ = 0; only
/// subdivision produces nonzero offsets.
fn section_op(sec: &ComSection, strip_phase: f64, f: f64, v_sound: f64, eta: f64) -> SectionOp {
    let k = 2.0 * PI * f / v_sound;
    let (kb, kappa0, mu0) = match sec.kind {
        SectionKind::Free => (k, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        SectionKind::Mirror => (
            2.0 * PI / sec.periodicity,
            2.0 * sec.reflectivity_per_period / sec.periodicity,
            Complex64::new(0.0, 0.0),
        ),
        SectionKind::Transducer => (
            2.0 * PI / sec.periodicity,
            2.0 * sec.reflectivity_per_period / sec.periodicity,
            Complex64::new(1.0, 0.0),
        ),
    };
    let phase = Complex64::new(0.0, strip_phase).exp();
    let kappa = kappa0 * phase * phase;
    let mu = mu0 * phase;
    let delta = k - kb;
    let i = Complex64::new(0.0, 1.0);
    let g11 = i * delta - eta;
    let g12 = i * kappa;
    let g21 = -i * kappa.conj();
    let l = sec.length;

    let gamma = (g11 * g11 + g12 * g21).sqrt();
    let z = gamma * l;
    let (cosh, sinhc, coshm1, sinhm) = hyperbolic_kernels(z);

    // exp(GL) = cosh(γL)·I + L·sinhc(γL)·G
    let e_s = sinhc * l;
    let expm = Mat2 {
        a: cosh + e_s * g11,
        b: e_s * g12,
        c: e_s * g21,
        d: cosh - e_s * g11,
    };
    // Φ(L) = ∫ exp(Gx) dx = L·sinhc·I + L²·coshm1ₙ·G, coshm1ₙ = (cosh z −1)/z²
    let p_s = coshm1 * (l * l);
    let phi = Mat2 {
        a: sinhc * l + p_s * g11,
        b: p_s * g12,
        c: p_s * g21,
        d: sinhc * l - p_s * g11,
    };
    // Ψ(L) = ∫ Φ(x) dx = L²·coshm1ₙ·I + L³·sinhmₙ·G, sinhmₙ = (sinh z − z)/z³
    let q_s = sinhm * (l * l * l);
    let psi = Mat2 {
        a: coshm1 * (l * l) + q_s * g11,
        b: q_s * g12,
        c: q_s * g21,
        d: coshm1 * (l * l) - q_s * g11,
    };

    let u = [mu, -mu.conj()];
    let b_rot = phi.mul_vec(u);

    // wrap back to the unrotated frame: the local frame advances by kb·L
    let ph = Complex64::new(0.0, kb * l).exp();
    let r = Mat2 {
        a: ph,
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
        d: ph.conj(),
    };
    SectionOp { t: r.mul(expm), b: r.mul_vec(b_rot), phi, psi, u }
}

fn check_grid(freqs: &[f64]) -> Result<(), ComError> {
    if freqs.len() < 2 {
        return Err(ComError::InvalidGrid("need at least two frequencies"));
    }
    for (i, &f) in freqs.iter().enumerate() {
        if !f.is_finite() || f <= 0.0 {
            return Err(ComError::InvalidGrid("frequencies must be finite and positive"));
        }
        if i > 0 && f <= freqs[i - 1] {
            return Err(ComError::InvalidGrid("frequencies must be strictly increasing"));
        }
    }
    Ok(())
}

fn check_sections(sections: &[ComSection]) -> Result<(), ComError> {
    let mut has_source = false;
    for (index, s) in sections.iter().enumerate() {
        if !(s.length.is_finite() && s.length >= 0.0) {
            return Err(ComError::InvalidSection { index, reason: "length must be >= 0" });
        }
        if s.kind != SectionKind::Free {
            if !(s.periodicity.is_finite() && s.periodicity > 0.0) {
                return Err(ComError::InvalidSection { index, reason: "periodicity must be > 0" });
            }
            if !(s.reflectivity_per_period.is_finite()
                && s.reflectivity_per_period.norm() < 1.0)
            {
                return Err(ComError::InvalidSection {
                    index,
                    reason: "|reflectivity per period| must be < 1",
                });
            }
        }
        if s.kind == SectionKind::Transducer {
            has_source = true;
        }
    }
    if !has_source {
        return Err(ComError::NoTransducer);
    }
    Ok(())
}

/// Raw (unnormalized) injected acoustic power per unit drive for an explicit
/// section cascade, one value per grid frequency.
///
/// `n_subsections` splits each section into equal chunks before solving;
/// uniform sections are exact in closed form, so this must not change the
/// result (it exists to exercise that invariant and to sample interior
/// fields on finer steps).
pub fn cascade_injected_power(
    freqs: &[f64],
    sections: &[ComSection],
    v_sound: f64,
    prop_loss: f64,
    n_subsections: u32,
) -> Result<Vec<f64>, ComError> {
    check_grid(freqs)?;
    check_sections(sections)?;
    if !(v_sound.is_finite() && v_sound > 0.0) {
        return Err(ComError::Domain("v_sound must be positive"));
    }
    if !(prop_loss.is_finite() && prop_loss >= 0.0) {
        return Err(ComError::Domain("prop_loss must be >= 0"));
    }
    if n_subsections == 0 {
        return Err(ComError::Domain("n_subsections must be >= 1"));
    }

    // Subdivision must respect the grating registration: a chunk starting
    // mid-period carries the accumulated strip phase of its parent section.
    let mut chunks: Vec<(ComSection, f64)> = Vec::new();
    for s in sections {
        let dl = s.length / n_subsections as f64;
        let mut c = *s;
        c.length = dl;
        for j in 0..n_subsections {
            let theta = if s.kind == SectionKind::Free {
                0.0
            } else {
                2.0 * PI * rem_euclid(j as f64 * dl, s.periodicity) / s.periodicity
            };
            chunks.push((c, theta));
        }
    }

    let mut out = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let ops: Vec<SectionOp> = chunks
            .iter()
            .map(|(s, theta)| section_op(s, *theta, f, v_sound, prop_loss))
            .collect();

        // compose the affine cascade left to right
        let mut t_tot = Mat2::IDENTITY;
        let mut b_tot: Vec2 = [Complex64::new(0.0, 0.0); 2];
        for op in &ops {
            b_tot = op.t.mul_vec(b_tot);
            b_tot[0] += op.b[0];
            b_tot[1] += op.b[1];
            t_tot = op.t.mul(t_tot);
        }

        // boundary conditions: nothing incident from either side
        let a_left_out = -b_tot[1] / t_tot.d;

        // sweep fields and accumulate source work:
        // d(|A₊|²−|A₋|²)/dx gains 2Re[u₊A₊*] − 2Re[u₋A₋*] from the drive
        let mut v: Vec2 = [Complex64::new(0.0, 0.0), a_left_out];
        let mut p_in = 0.0;
        for op in &ops {
            if op.u[0].norm_sqr() > 0.0 {
                let fa = op.phi.mul_vec(v);
                let fu = op.psi.mul_vec(op.u);
                let int_plus = fa[0] + fu[0];
                let int_minus = fa[1] + fu[1];
                p_in += 2.0 * (op.u[0] * int_plus.conj()).re
                    - 2.0 * (op.u[1] * int_minus.conj()).re;
            }
            v = op.t.mul_vec(v);
            v[0] += op.b[0];
            v[1] += op.b[1];
        }
        out.push(p_in);
    }
    Ok(out)
}

/// Max-normalized conductance of an explicit section cascade.
pub fn composite_conductance_sections(
    freqs: &[f64],
    sections: &[ComSection],
    v_sound: f64,
    prop_loss: f64,
    n_subsections: u32,
) -> Result<ConductanceSpectrum, ComError> {
    let p = cascade_injected_power(freqs, sections, v_sound, prop_loss, n_subsections)?;
    let max = p.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if max.is_nan() || max <= 0.0 {
        return Err(ComError::Domain("cascade injects no positive power on this grid"));
    }
    let g_norm = p.iter().map(|&x| x / max).collect();
    Ok(ConductanceSpectrum { freq: freqs.to_vec(), g_norm })
}

/// Conductance of the full mirror/IDT/mirror device on `freqs`.
///
/// Grid points inside the mirror stop band must be spaced no wider than a
/// quarter of the expected confined-mode width, or the resonance would be
/// undersampled and the call fails with `GridTooCoarse`.
pub fn composite_conductance(
    freqs: &[f64],
    params: &DeviceParams,
    n_subsections: u32,
) -> Result<ConductanceSpectrum, ComError> {
    let sections = device_sections(params)?;
    check_grid(freqs)?;

    // sampling guard: only meaningful when the mirrors actually confine a mode
    if params.r_mirror.norm() > 0.0 {
        let gamma_est = estimated_mode_fwhm(params);
        let f_cm = params.f_mirror();
        let sb = mirror_stopband(params.r_mirror.norm(), f_cm)?;
        let (lo, hi) = (f_cm - 0.5 * sb, f_cm + 0.5 * sb);
        let required = gamma_est / 4.0;
        for w in freqs.windows(2) {
            let overlaps = w[1] >= lo && w[0] <= hi;
            if overlaps && (w[1] - w[0]) > required {
                return Err(ComError::GridTooCoarse {
                    required_hz: required,
                    spacing_hz: w[1] - w[0],
                });
            }
        }
    }

    composite_conductance_sections(freqs, &sections, params.v_sound, params.prop_loss, n_subsections)
}

/// A priori estimate of the confined-mode FWHM from round-trip loss:
/// mirror transmission tanh-leakage, in-mirror dissipation over the
/// penetration depth, and interior propagation loss.
pub fn estimated_mode_fwhm(params: &DeviceParams) -> f64 {
    let lam = params.lambda_mirror;
    let r = params.r_mirror.norm();
    if r == 0.0 {
        return f64::INFINITY; // no mirrors, no confined mode
    }
    let kappa = 2.0 * r / lam;
    let (n_m, _) = split_periods(params.l_mirror, lam);
    let lg = n_m as f64 * lam;
    let eta = params.prop_loss;

    let gap = registration_gap(params.l_idt, lam);
    let l_int = params.l_idt + 2.0 * gap;
    let d_pen = (kappa * lg).tanh() / (2.0 * kappa);

    let refl = (kappa * lg).tanh() * (-2.0 * eta * d_pen).exp();
    let rho = refl * refl * (-2.0 * eta * l_int).exp();
    let fsr_local = params.v_sound / (2.0 * (l_int + 2.0 * d_pen));
    fsr_local * (1.0 - rho) / (PI * rho.sqrt())
}

// ---------------------------------------------------------------------------
// Mode summary
// ---------------------------------------------------------------------------

/// Locates the dominant resonance and measures its width.
///
/// Requires exactly one local maximum above half of the global maximum;
/// the FWHM comes from linear interpolation at the half-maximum crossings
/// nearest the peak.
pub fn confined_mode_summary(spectrum: &ConductanceSpectrum) -> Result<ModeSummary, ComError> {
    let x = &spectrum.freq;
    let y = &spectrum.g_norm;
    if x.len() != y.len() || x.len() < 3 {
        return Err(ComError::InvalidGrid("need at least three samples"));
    }

    let (i_max, &y_max) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if y_max.is_nan() || y_max <= 0.0 {
        return Err(ComError::NoPeak);
    }
    let half = 0.5 * y_max;

    if i_max == 0 || i_max == y.len() - 1 {
        return Err(ComError::TruncatedPeak);
    }

    let mut peaks_above_half = 0usize;
    for i in 1..y.len() - 1 {
        if y[i] > half && y[i] > y[i - 1] && y[i] > y[i + 1] {
            peaks_above_half += 1;
        }
    }
    match peaks_above_half {
        0 => return Err(ComError::NoPeak),
        1 => {}
        n => return Err(ComError::MultiplePeaks(n)),
    }

    let mut left = None;
    for i in (1..=i_max).rev() {
        if y[i - 1] < half && y[i] >= half {
            let t = (half - y[i - 1]) / (y[i] - y[i - 1]);
            left = Some(x[i - 1] + t * (x[i] - x[i - 1]));
            break;
        }
    }
    let mut right = None;
    for i in i_max..y.len() - 1 {
        if y[i] >= half && y[i + 1] < half {
            let t = (y[i] - half) / (y[i] - y[i + 1]);
            right = Some(x[i] + t * (x[i + 1] - x[i]));
            break;
        }
    }
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(ComError::TruncatedPeak),
    };

    let f_peak = x[i_max];
    let fwhm = right - left;
    Ok(ModeSummary { f_peak, fwhm, q: f_peak / fwhm })
}

/// Scattering coefficients (r, t) of a cascade for a wave incident from the
/// left, from the composed transfer matrix. Used by the unitarity and
/// reciprocity checks; sources are ignored.
pub fn cascade_scattering(
    sections: &[ComSection],
    f: f64,
    v_sound: f64,
    prop_loss: f64,
) -> (Complex64, Complex64) {
    let mut t_tot = Mat2::IDENTITY;
    for s in sections {
        let op = section_op(s, 0.0, f, v_sound, prop_loss);
        t_tot = op.t.mul(t_tot);
    }
    let det = t_tot.a * t_tot.d - t_tot.b * t_tot.c;
    (-t_tot.c / t_tot.d, det / t_tot.d)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference device: the published geometry table of the modeled sample.
    pub(crate) fn table_device() -> DeviceParams {
        DeviceParams {
            lambda_idt: 800e-9,
            lambda_mirror: 816e-9,
            n_pairs: 16,
            overlap_w: 35e-6,
            l_mirror: 240.72e-6,
            l_idt: 12e-6,
            v_sound: 3638.0,
            prop_loss: 500.0,
            r_idt: Complex64::new(0.0, -0.005),
            r_mirror: Complex64::new(0.0, -0.005),
        }
    }

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let step = (hi - lo) / (n as f64 - 1.0);
        (0..n).map(|i| lo + step * i as f64).collect()
    }

    #[test]
    fn penetration_depth_closed_form() {
        // λ/(2|r|): 800 nm at |r| = 0.01 → 40 µm
        let d = mirror_penetration_depth(800e-9, 0.01).unwrap();
        assert!((d - 40e-6).abs() < 1e-18);
        // table values → 81.6 µm
        let d = mirror_penetration_depth(816e-9, 0.005).unwrap();
        assert!((d - 81.6e-6).abs() / 81.6e-6 < 1e-12);
        assert!(matches!(
            mirror_penetration_depth(800e-9, 0.0),
            Err(ComError::Domain(_))
        ));
        assert!(matches!(
            mirror_penetration_depth(800e-9, 1.0),
            Err(ComError::Domain(_))
        ));
    }

    #[test]
    fn effective_length_and_fsr() {
        let l_p = mirror_penetration_depth(816e-9, 0.005).unwrap();
        let l_eff = effective_cavity_length(12e-6, l_p).unwrap();
        assert!((l_eff - 175.2e-6).abs() / 175.2e-6 < 1e-12);
        let fsr = free_spectral_range(3638.0, l_eff).unwrap();
        assert!((fsr - 10.4e6).abs() / 10.4e6 < 0.01);
        // round numbers: v = 3638 m/s over 100 µm → 18.19 MHz
        let fsr = free_spectral_range(3638.0, 100e-6).unwrap();
        assert!((fsr - 18.19e6).abs() / 18.19e6 < 1e-12);
    }

    #[test]
    fn stopband_closed_form() {
        let f_cm = idt_center_frequency(3638.0, 816e-9).unwrap();
        let sb = mirror_stopband(0.005, f_cm).unwrap();
        assert!((sb - 14.2e6).abs() / 14.2e6 < 0.01);
        let sb = mirror_stopband(0.01, 4.5e9).unwrap();
        assert!((sb - 2.0 * 0.01 * 4.5e9 / PI).abs() < 1e-3);
    }

    #[test]
    fn center_frequencies() {
        let f = idt_center_frequency(3638.0, 800e-9).unwrap();
        assert!((f - 4.5475e9).abs() < 1.0);
        let f = idt_center_frequency(3638.0, 816e-9).unwrap();
        assert!((f - 4.458333333e9).abs() < 1e3);
    }

    #[test]
    fn idt_conductance_peaks_at_synchronism() {
        let p = table_device();
        let f_c = p.f_idt();
        let freqs = linspace(f_c - 0.5e9, f_c + 0.5e9, 2001);
        let g = idt_conductance(&freqs, &p).unwrap();
        let i_c = 1000; // center of symmetric grid
        assert_eq!(g.freq[i_c], f_c);
        assert!((g.g_norm[i_c] - 1.0).abs() < 1e-12);
        assert!(g.g_norm.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn device_sections_period_counts() {
        let p = table_device();
        let s = device_sections(&p).unwrap();
        // exact multiples: no remainder sections, so mirror/gap/idt/gap/mirror
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].kind, SectionKind::Mirror);
        assert_eq!(s[1].kind, SectionKind::Free);
        assert_eq!(s[2].kind, SectionKind::Transducer);
        assert_eq!(s[3].kind, SectionKind::Free);
        assert_eq!(s[4].kind, SectionKind::Mirror);
        // 295 mirror periods, 15 transducer periods
        assert!((s[0].length - 295.0 * 816e-9).abs() < 1e-15);
        assert!((s[2].length - 15.0 * 800e-9).abs() < 1e-15);
        // registration gap: interior = 59 quarter waves needs 36 nm in total
        assert!((s[1].length - 18e-9).abs() < 1e-12, "gap {}", s[1].length);
    }

    #[test]
    fn lossless_single_period_is_unitary() {
        // |r|² + |t|² = 1 within 1e-12 for every cell at η = 0
        let p = table_device();
        let period = ComSection {
            kind: SectionKind::Mirror,
            length: p.lambda_mirror,
            periodicity: p.lambda_mirror,
            reflectivity_per_period: p.r_mirror,
        };
        let f_cm = p.f_mirror();
        for &f in linspace(0.9 * f_cm, 1.1 * f_cm, 101).iter() {
            let (r, t) = cascade_scattering(&[period], f, p.v_sound, 0.0);
            let total = r.norm_sqr() + t.norm_sqr();
            assert!((total - 1.0).abs() < 1e-12, "f={f}: |r|²+|t|²={total}");
        }
        // the transducer cell matrix is likewise flux-conserving
        let cell = ComSection {
            kind: SectionKind::Transducer,
            length: p.lambda_idt,
            periodicity: p.lambda_idt,
            reflectivity_per_period: p.r_idt,
        };
        let (r, t) = cascade_scattering(&[cell], p.f_idt(), p.v_sound, 0.0);
        assert!((r.norm_sqr() + t.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossless_energy_balance() {
        // with η = 0, injected power equals the power leaving both ends
        let p = table_device();
        let sections = device_sections(&p).unwrap();
        let f_cm = p.f_mirror();
        let freqs = linspace(f_cm - 20e6, f_cm + 20e6, 41);
        let injected =
            cascade_injected_power(&freqs, &sections, p.v_sound, 0.0, 1).unwrap();

        for (idx, &f) in freqs.iter().enumerate() {
            // recompute outgoing amplitudes directly
            let ops: Vec<SectionOp> = sections
                .iter()
                .map(|s| section_op(s, 0.0, f, p.v_sound, 0.0))
                .collect();
            let mut t_tot = Mat2::IDENTITY;
            let mut b_tot: Vec2 = [Complex64::new(0.0, 0.0); 2];
            for op in &ops {
                b_tot = op.t.mul_vec(b_tot);
                b_tot[0] += op.b[0];
                b_tot[1] += op.b[1];
                t_tot = op.t.mul(t_tot);
            }
            let a_left = -b_tot[1] / t_tot.d;
            let mut v: Vec2 = [Complex64::new(0.0, 0.0), a_left];
            for op in &ops {
                v = op.t.mul_vec(v);
                v[0] += op.b[0];
                v[1] += op.b[1];
            }
            let p_out = v[0].norm_sqr() + a_left.norm_sqr();
            let p_in = injected[idx];
            assert!(
                (p_in - p_out).abs() <= 1e-10 * p_out.abs().max(1e-300),
                "f={f}: in={p_in} out={p_out}"
            );
        }
    }

    #[test]
    fn conductance_is_nonnegative() {
        let p = table_device();
        let f_cm = p.f_mirror();
        let sb = mirror_stopband(0.005, f_cm).unwrap();
        let freqs = linspace(f_cm - 3.0 * sb, f_cm + 3.0 * sb, 4001);
        let g = composite_conductance(&freqs, &p, 1).unwrap();
        assert!(g.g_norm.iter().all(|&v| v >= 0.0), "negative conductance sample");
        assert!(g.g_norm.contains(&1.0));
    }

    #[test]
    fn reciprocity_under_section_reversal() {
        let p = table_device();
        let mut sections = device_sections(&p).unwrap();
        // make the cascade visibly asymmetric before reversing
        sections.insert(0, ComSection::free(3.7e-6));
        let f_cm = p.f_mirror();
        let freqs = linspace(f_cm - 15e6, f_cm + 15e6, 301);
        let fwd =
            cascade_injected_power(&freqs, &sections, p.v_sound, p.prop_loss, 1).unwrap();
        let mut rev_sections = sections.clone();
        rev_sections.reverse();
        let rev =
            cascade_injected_power(&freqs, &rev_sections, p.v_sound, p.prop_loss, 1).unwrap();
        for (a, b) in fwd.iter().zip(&rev) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn subsection_count_does_not_change_result() {
        let p = table_device();
        let sections = device_sections(&p).unwrap();
        let f_cm = p.f_mirror();
        let freqs = linspace(f_cm - 10e6, f_cm + 10e6, 101);
        let one =
            cascade_injected_power(&freqs, &sections, p.v_sound, p.prop_loss, 1).unwrap();
        let seven =
            cascade_injected_power(&freqs, &sections, p.v_sound, p.prop_loss, 7).unwrap();
        for (a, b) in one.iter().zip(&seven) {
            assert!((a - b).abs() <= 1e-11 * a.abs().max(b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn bare_ideal_transducer_reduces_to_sinc2() {
        // no mirrors, no internal reflection, no loss, length = N_p·λ:
        // the distributed source integral collapses to the sinc² envelope
        let mut p = table_device();
        p.r_mirror = Complex64::new(0.0, 0.0);
        p.r_idt = Complex64::new(0.0, 0.0);
        p.prop_loss = 0.0;
        p.l_idt = p.n_pairs as f64 * p.lambda_idt; // 12.8 µm
        let f_c = p.f_idt();
        let freqs = linspace(f_c - 2.5 * f_c / 16.0, f_c + 2.5 * f_c / 16.0, 2001);
        let composite = composite_conductance(&freqs, &p, 1).unwrap();
        let bare = idt_conductance(&freqs, &p).unwrap();
        for ((&f, &a), &b) in freqs.iter().zip(&composite.g_norm).zip(&bare.g_norm) {
            assert!(
                (a - b).abs() <= 1e-9,
                "f={f}: composite={a} sinc2={b}"
            );
        }
    }

    #[test]
    fn confined_mode_near_observed_frequency() {
        // dominant resonance within half a free spectral range of 4.4588 GHz
        let p = table_device();
        let f_cm = p.f_mirror();
        let sb = mirror_stopband(0.005, f_cm).unwrap();
        let freqs = linspace(f_cm - 3.0 * sb, f_cm + 3.0 * sb, 4001);
        let g = composite_conductance(&freqs, &p, 1).unwrap();
        let m = confined_mode_summary(&g).unwrap();
        let l_p = mirror_penetration_depth(816e-9, 0.005).unwrap();
        let fsr = free_spectral_range(3638.0, effective_cavity_length(12e-6, l_p).unwrap()).unwrap();
        assert!(
            (m.f_peak - 4.4588e9).abs() < 0.5 * fsr,
            "peak at {} Hz, {} MHz from 4.4588 GHz",
            m.f_peak,
            (m.f_peak - 4.4588e9).abs() / 1e6
        );
        // linewidth two to three orders below the transducer bandwidth
        assert!(m.fwhm < 5e6, "fwhm {}", m.fwhm);
        assert!(m.q > 2000.0, "q {}", m.q);
    }

    #[test]
    fn confinement_strengthens_with_mirror_reflectivity() {
        // FWHM decreases monotonically as |r_mirror|: 0.002 → 0.01
        let mut widths = Vec::new();
        for &r in &[0.002, 0.004, 0.006, 0.008, 0.01] {
            let mut p = table_device();
            p.r_mirror = Complex64::new(0.0, -r);
            let f_cm = p.f_mirror();
            let sb = mirror_stopband(r, f_cm).unwrap();
            let freqs = linspace(f_cm - 1.2 * sb, f_cm + 1.2 * sb, 4001);
            let g = composite_conductance(&freqs, &p, 1).unwrap();
            let m = confined_mode_summary(&g).unwrap();
            widths.push(m.fwhm);
        }
        for w in widths.windows(2) {
            assert!(w[1] < w[0], "widths not decreasing: {widths:?}");
        }
    }

    #[test]
    fn weak_side_maxima_flank_the_confined_mode() {
        let p = table_device();
        let f_cm = p.f_mirror();
        let sb = mirror_stopband(0.005, f_cm).unwrap();
        let freqs = linspace(f_cm - 3.0 * sb, f_cm + 3.0 * sb, 4001);
        let g = composite_conductance(&freqs, &p, 1).unwrap();
        let m = confined_mode_summary(&g).unwrap();

        let mut side = Vec::new();
        for i in 1..g.g_norm.len() - 1 {
            let inside_window = (g.freq[i] - m.f_peak).abs() <= 1.5 * sb;
            let is_max = g.g_norm[i] > g.g_norm[i - 1] && g.g_norm[i] > g.g_norm[i + 1];
            if inside_window && is_max && (g.freq[i] - m.f_peak).abs() > 2.0 * m.fwhm {
                side.push((g.freq[i], g.g_norm[i]));
            }
        }
        assert!(side.len() >= 2, "found {} side maxima", side.len());
        for &(f, h) in &side {
            assert!(h < 0.30, "side maximum at {f} Hz has height {h}");
        }
    }

    #[test]
    fn coarse_grid_is_rejected_near_stopband() {
        let p = table_device();
        let f_cm = p.f_mirror();
        let freqs = linspace(f_cm - 40e6, f_cm + 40e6, 41); // 2 MHz spacing
        match composite_conductance(&freqs, &p, 1) {
            Err(ComError::GridTooCoarse { .. }) => {}
            other => panic!("expected GridTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn invalid_params_list_every_offending_field() {
        let mut p = table_device();
        p.v_sound = -1.0;
        p.n_pairs = 0;
        p.prop_loss = f64::NAN;
        let err = p.validate().unwrap_err();
        match err {
            ComError::InvalidParams { fields } => {
                assert!(fields.contains(&String::from("v_sound")));
                assert!(fields.contains(&String::from("n_pairs")));
                assert!(fields.contains(&String::from("prop_loss")));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mode_summary_rejects_flat_and_multi_peak_spectra() {
        let flat = ConductanceSpectrum {
            freq: linspace(1.0, 2.0, 64),
            g_norm: vec![0.0; 64],
        };
        assert!(matches!(confined_mode_summary(&flat), Err(ComError::NoPeak)));

        // two well-separated peaks of comparable height
        let freqs = linspace(0.0, 1.0, 401);
        let y: Vec<f64> = freqs
            .iter()
            .map(|&x| {
                let l1 = 1.0 / (1.0 + ((x - 0.3) / 0.01).powi(2));
                let l2 = 0.9 / (1.0 + ((x - 0.7) / 0.01).powi(2));
                l1 + l2
            })
            .collect();
        let two = ConductanceSpectrum { freq: freqs, g_norm: y };
        assert!(matches!(
            confined_mode_summary(&two),
            Err(ComError::MultiplePeaks(2))
        ));
    }

    #[test]
    fn mode_summary_recovers_synthetic_lorentzian_q() {
        // FWHM 630 kHz at 4.4588 GHz → Q = f/Δf ≈ 7077.5
        let f0 = 4.4588e9;
        let fwhm = 630e3;
        let freqs = linspace(f0 - 5.0 * fwhm, f0 + 5.0 * fwhm, 4001);
        let y: Vec<f64> = freqs
            .iter()
            .map(|&f| 1.0 / (1.0 + ((f - f0) / (fwhm / 2.0)).powi(2)))
            .collect();
        let m = confined_mode_summary(&ConductanceSpectrum { freq: freqs, g_norm: y }).unwrap();
        let q_expect = f0 / fwhm;
        assert!((m.q - q_expect).abs() <= 1.0, "q {} vs {}", m.q, q_expect);
    }
}
