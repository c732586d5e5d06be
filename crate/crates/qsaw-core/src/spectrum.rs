//! Shared 1D spectrum containers.
//!
//! Frequencies are linear Hz everywhere in the public API; angular factors
//! are internal to the operations that need them.

use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;

/// Unit of the x axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisUnit {
    Hertz,
    Watts,
}

impl AxisUnit {
    /// Stable token used in file headers.
    pub fn token(self) -> &'static str {
        match self {
            AxisUnit::Hertz => "hz",
            AxisUnit::Watts => "w",
        }
    }
}

/// Unit of the y values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueUnit {
    Dimensionless,
    Hertz,
    /// Rates such as qubit energy loss, in 1/s.
    PerSecond,
}

impl ValueUnit {
    /// Stable token used in file headers.
    pub fn token(self) -> &'static str {
        match self {
            ValueUnit::Dimensionless => "dimensionless",
            ValueUnit::Hertz => "hz",
            ValueUnit::PerSecond => "per_s",
        }
    }
}

/// Real-valued sampled spectrum with unit tags and a provenance note
/// (the generating operation or source file plus its parameters).
#[derive(Clone, Debug)]
pub struct Spectrum {
    x: Vec<f64>,
    y: Vec<f64>,
    pub axis_unit: AxisUnit,
    pub value_unit: ValueUnit,
    pub provenance: String,
}

/// Violations of the spectrum well-formedness contract.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpectrumError {
    /// x and y lengths differ, or fewer than two samples.
    Shape,
    /// x is not strictly increasing at this index.
    NotIncreasing(usize),
    /// A non-finite sample at this index.
    NonFinite(usize),
}

impl core::fmt::Display for SpectrumError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpectrumError::Shape => write!(f, "x and y must have equal length >= 2"),
            SpectrumError::NotIncreasing(i) => {
                write!(f, "x axis must be strictly increasing (violated at index {i})")
            }
            SpectrumError::NonFinite(i) => write!(f, "non-finite sample at index {i}"),
        }
    }
}

impl core::error::Error for SpectrumError {}

impl Spectrum {
    /// Validating constructor: equal lengths, strictly increasing finite x,
    /// finite y.
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        axis_unit: AxisUnit,
        value_unit: ValueUnit,
        provenance: String,
    ) -> Result<Self, SpectrumError> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(SpectrumError::Shape);
        }
        for (i, (&xi, &yi)) in x.iter().zip(&y).enumerate() {
            if !xi.is_finite() {
                return Err(SpectrumError::NonFinite(i));
            }
            if !yi.is_finite() {
                return Err(SpectrumError::NonFinite(i));
            }
            if i > 0 && xi <= x[i - 1] {
                return Err(SpectrumError::NotIncreasing(i));
            }
        }
        Ok(Spectrum { x, y, axis_unit, value_unit, provenance })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Complex-amplitude response sampled on a frequency grid.
#[derive(Clone, Debug)]
pub struct ComplexSpectrum {
    pub x: Vec<f64>,
    pub values: Vec<Complex64>,
    pub provenance: String,
}

impl ComplexSpectrum {
    /// |amplitude|² as a dimensionless power spectrum.
    pub fn power(&self) -> Spectrum {
        let y = self.values.iter().map(|v| v.norm_sqr()).collect();
        Spectrum::new(
            self.x.clone(),
            y,
            AxisUnit::Hertz,
            ValueUnit::Dimensionless,
            self.provenance.clone(),
        )
        .expect("power spectrum inherits a validated grid")
    }
}

/// Uniform grid of `n` points spanning `center ± half_span`.
pub fn linspace_around(center: f64, half_span: f64, n: usize) -> Vec<f64> {
    debug_assert!(n >= 2);
    let lo = center - half_span;
    let step = 2.0 * half_span / (n as f64 - 1.0);
    (0..n).map(|i| lo + step * i as f64).collect()
}
