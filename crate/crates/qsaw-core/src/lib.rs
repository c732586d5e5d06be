//! Core numerics for modeling a surface-acoustic-wave (SAW) resonator coupled
//! to a superconducting transmon qubit.
//!
//! The crate is `no_std` + `alloc`: every routine is a pure function over
//! caller-provided buffers, so it can be embedded in instrument firmware or a
//! std pipeline alike. File formats, configuration, and the command-line
//! front end live in the companion `qsaw` crate.
//!
//! Module map:
//! - [`com`] — coupling-of-modes transfer-matrix model of a mirror/IDT/mirror
//!   SAW cavity, plus the closed-form design quantities (penetration depth,
//!   free spectral range, stop-band width).
//! - [`dressed`] — multilevel transmon–phonon Jaynes-Cummings Hamiltonian,
//!   exact diagonalization, dispersive/Stark shifts, avoided crossings, and
//!   coherent-state spectra.
//! - [`lineshape`] — Fano absorption profile, transducer-filtered qubit loss
//!   rate, the interference-parameter prediction, and the classical
//!   two-coupled-oscillator reference model.
//! - [`fit`] — Levenberg-Marquardt least squares with covariance reporting,
//!   numerical Jacobians, and avoided-crossing ridge extraction.
//! - [`spectrum`] — shared 1D spectrum containers with unit tags.
//! - [`linalg`] — small dense symmetric eigensolver and linear solves.
//! - [`math`] — sinc, bisection, Poisson weights, trapezoid rule.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod com;
pub mod dressed;
pub mod fit;
pub mod linalg;
pub mod lineshape;
pub mod math;
pub mod spectrum;

pub use num_complex::Complex64;
