//! JSON experiment configuration: parsing, unknown-key policy, validation,
//! and conversion into the parameter structs used by `qsaw-core`.
//!
//! A configuration file is a single JSON object with four parameter groups
//! plus one scalar:
//!
//! ```json
//! {
//!   "device":      { "lambda_idt": 8.0e-7, ... },
//!   "transmon":    { "ej": 8.5e9, ... },
//!   "hybrid":      { "g_m": 9.76e6, ... },
//!   "loss":        { "q_i": 1.05e4, ... },
//!   "attenuation_db": 60.0
//! }
//! ```
//!
//! All frequencies and rates are in Hz (not angular), lengths in meters,
//! velocities in m/s. Unknown keys are an error in strict mode and a warning
//! in lenient mode; missing keys are always an error naming the field.

use std::fmt;
use std::path::Path;

use qsaw_core::com::DeviceParams;
use qsaw_core::dressed::{HybridParams, TransmonParams};
use qsaw_core::lineshape::LossParams;
use qsaw_core::Complex64;
use serde::{Deserialize, Serialize};

/// A complex number spelled out as `{ "re": ..., "im": ... }` in JSON.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexParam {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexParam> for Complex64 {
    fn from(c: ComplexParam) -> Self {
        Complex64::new(c.re, c.im)
    }
}

/// Acoustic-device geometry and material constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Transducer electrode period, m.
    pub lambda_idt: f64,
    /// Mirror grating period, m.
    pub lambda_mirror: f64,
    /// Number of transducer finger pairs.
    pub n_pairs: u32,
    /// Acoustic aperture (electrode overlap), m.
    pub overlap_w: f64,
    /// Length of each mirror grating, m.
    pub l_mirror: f64,
    /// Transducer length, m.
    pub l_idt: f64,
    /// SAW phase velocity, m/s.
    pub v_sound: f64,
    /// Propagation amplitude loss, 1/m.
    pub prop_loss: f64,
    /// Reflectivity per transducer period.
    pub r_idt: ComplexParam,
    /// Reflectivity per mirror period.
    pub r_mirror: ComplexParam,
}

/// Transmon energy-level parameters, all in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonConfig {
    /// Josephson energy E_J/h at the working point, Hz.
    pub ej: f64,
    /// Charging energy E_C/h, Hz.
    pub ec: f64,
    /// Anharmonicity (E_C to leading order), Hz.
    pub alpha: f64,
    /// Number of transmon levels kept in diagonalizations.
    pub n_levels: usize,
    /// Maximum Josephson energy E_J,max/h at zero flux, Hz.
    pub ej_max: f64,
}

/// Qubit-phonon and qubit-cavity coupling parameters, all in Hz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    /// Qubit-phonon coupling g_m, Hz.
    pub g_m: f64,
    /// Confined-mode frequency, Hz.
    pub omega_m: f64,
    /// Qubit-phonon detuning ω_q − ω_m, Hz.
    pub delta: f64,
    /// Readout-cavity frequency, Hz.
    pub omega_c: f64,
    /// Qubit-cavity coupling, Hz.
    pub g_cavity: f64,
}

/// Qubit energy-relaxation model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Intrinsic quality factor (background loss floor).
    pub q_i: f64,
    /// Peak acoustic emission rate, 1/s.
    pub gamma_0: f64,
    /// Transducer finger pairs setting the emission bandwidth.
    pub n_pairs: u32,
    /// Transducer center frequency, Hz.
    pub omega_idt: f64,
}

/// Complete experiment description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub device: DeviceConfig,
    pub transmon: TransmonConfig,
    pub hybrid: HybridConfig,
    pub loss: LossConfig,
    /// Total input-line attenuation, dB (≥ 0).
    pub attenuation_db: f64,
}

/// How to treat JSON keys that are not part of the schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnknownKeyPolicy {
    /// Unknown keys are an error.
    Strict,
    /// Unknown keys are dropped with a warning.
    Lenient,
}

/// Configuration errors.
#[derive(Debug)]
pub enum ConfigError {
    /// File could not be read.
    Io { path: String, source: std::io::Error },
    /// JSON was malformed or a required field was missing/mistyped.
    Parse(String),
    /// Keys not in the schema, under strict policy.
    UnknownKeys(Vec<String>),
    /// Physically invalid values, by dotted field path.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read config {path}: {source}")
            }
            ConfigError::Parse(msg) => write!(f, "config parse error: {msg}"),
            ConfigError::UnknownKeys(keys) => {
                write!(f, "unknown config keys: {}", keys.join(", "))
            }
            ConfigError::Invalid(fields) => {
                write!(f, "invalid config values: {}", fields.join(", "))
            }
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ConfigError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Known keys per group, used for unknown-key detection before strict
/// deserialization (so lenient mode can prune instead of failing).
const TOP_KEYS: &[&str] = &["device", "transmon", "hybrid", "loss", "attenuation_db"];
const DEVICE_KEYS: &[&str] = &[
    "lambda_idt",
    "lambda_mirror",
    "n_pairs",
    "overlap_w",
    "l_mirror",
    "l_idt",
    "v_sound",
    "prop_loss",
    "r_idt",
    "r_mirror",
];
const TRANSMON_KEYS: &[&str] = &["ej", "ec", "alpha", "n_levels", "ej_max"];
const HYBRID_KEYS: &[&str] = &["g_m", "omega_m", "delta", "omega_c", "g_cavity"];
const LOSS_KEYS: &[&str] = &["q_i", "gamma_0", "n_pairs", "omega_idt"];
const COMPLEX_KEYS: &[&str] = &["re", "im"];

impl ExperimentConfig {
    /// Built-in description of the published sample; used whenever no
    /// configuration file is given.
    pub fn reference() -> Self {
        ExperimentConfig {
            device: DeviceConfig {
                lambda_idt: 800e-9,
                lambda_mirror: 816e-9,
                n_pairs: 16,
                overlap_w: 35e-6,
                l_mirror: 240.72e-6,
                l_idt: 12e-6,
                v_sound: 3638.0,
                prop_loss: 500.0,
                r_idt: ComplexParam { re: 0.0, im: -0.005 },
                r_mirror: ComplexParam { re: 0.0, im: -0.005 },
            },
            transmon: TransmonConfig {
                ej: 8.5e9,
                ec: 328e6,
                alpha: 328e6,
                n_levels: 5,
                ej_max: 19.7e9,
            },
            hybrid: HybridConfig {
                g_m: 9.76e6,
                omega_m: 4.4588e9,
                delta: -138.6e6,
                omega_c: 4.788e9,
                g_cavity: 75e6,
            },
            loss: LossConfig {
                q_i: 1.05e4,
                gamma_0: 0.252e9,
                n_pairs: 16,
                omega_idt: 4.504e9,
            },
            attenuation_db: 60.0,
        }
    }

    /// Acoustic-device parameters for `qsaw_core::com`.
    pub fn device_params(&self) -> DeviceParams {
        let d = &self.device;
        DeviceParams {
            lambda_idt: d.lambda_idt,
            lambda_mirror: d.lambda_mirror,
            n_pairs: d.n_pairs,
            overlap_w: d.overlap_w,
            l_mirror: d.l_mirror,
            l_idt: d.l_idt,
            v_sound: d.v_sound,
            prop_loss: d.prop_loss,
            r_idt: d.r_idt.into(),
            r_mirror: d.r_mirror.into(),
        }
    }

    /// Transmon parameters for `qsaw_core::dressed`.
    pub fn transmon_params(&self) -> TransmonParams {
        let t = &self.transmon;
        TransmonParams {
            ej: t.ej,
            ec: t.ec,
            alpha: t.alpha,
            n_levels: t.n_levels,
            ej_max: t.ej_max,
        }
    }

    /// Coupling parameters for `qsaw_core::dressed`.
    pub fn hybrid_params(&self) -> HybridParams {
        let h = &self.hybrid;
        HybridParams {
            g_m: h.g_m,
            omega_m: h.omega_m,
            delta: h.delta,
            omega_c: h.omega_c,
            g_cavity: h.g_cavity,
        }
    }

    /// Loss-model parameters for `qsaw_core::lineshape`.
    pub fn loss_params(&self) -> LossParams {
        let l = &self.loss;
        LossParams {
            q_i: l.q_i,
            gamma_0: l.gamma_0,
            n_pairs: l.n_pairs,
            omega_idt: l.omega_idt,
        }
    }

    /// Physical validation of every group, with dotted field paths in the
    /// error (`device.lambda_idt`, `hybrid.omega_m`, ...).
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad: Vec<String> = Vec::new();
        let mut absorb = |prefix: &str, fields: &[String]| {
            for f in fields {
                bad.push(format!("{prefix}.{f}"));
            }
        };
        if let Err(qsaw_core::com::ComError::InvalidParams { fields }) =
            self.device_params().validate()
        {
            absorb("device", &fields);
        }
        if let Err(qsaw_core::dressed::DressedError::InvalidParams { fields }) =
            self.transmon_params().validate()
        {
            absorb("transmon", &fields);
        }
        if let Err(qsaw_core::dressed::DressedError::InvalidParams { fields }) =
            self.hybrid_params().validate()
        {
            absorb("hybrid", &fields);
        }
        if let Err(qsaw_core::lineshape::LineshapeError::InvalidParams { fields }) =
            self.loss_params().validate()
        {
            absorb("loss", &fields);
        }
        if !(self.attenuation_db.is_finite() && self.attenuation_db >= 0.0) {
            bad.push(String::from("attenuation_db"));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }
}

/// Walk one object level: record unknown keys (dotted paths) and optionally
/// prune them so strict deserialization can proceed afterwards.
fn sweep_object(
    value: &mut serde_json::Value,
    prefix: &str,
    known: &[&str],
    unknown: &mut Vec<String>,
    prune: bool,
) {
    if let serde_json::Value::Object(map) = value {
        let extra: Vec<String> = map
            .keys()
            .filter(|k| !known.contains(&k.as_str()))
            .cloned()
            .collect();
        for k in extra {
            unknown.push(if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            });
            if prune {
                map.remove(&k);
            }
        }
    }
}

/// Collect (and in lenient mode prune) every key outside the schema.
fn sweep_unknown_keys(root: &mut serde_json::Value, prune: bool) -> Vec<String> {
    let mut unknown = Vec::new();
    sweep_object(root, "", TOP_KEYS, &mut unknown, prune);
    let groups: [(&str, &[&str]); 4] = [
        ("device", DEVICE_KEYS),
        ("transmon", TRANSMON_KEYS),
        ("hybrid", HYBRID_KEYS),
        ("loss", LOSS_KEYS),
    ];
    for (name, keys) in groups {
        if let Some(group) = root.get_mut(name) {
            sweep_object(group, name, keys, &mut unknown, prune);
        }
    }
    for field in ["r_idt", "r_mirror"] {
        if let Some(c) = root.get_mut("device").and_then(|d| d.get_mut(field)) {
            sweep_object(c, &format!("device.{field}"), COMPLEX_KEYS, &mut unknown, prune);
        }
    }
    unknown
}

/// Parse a configuration from JSON text. Returns the validated config plus
/// any lenient-mode warnings (one human-readable line per dropped key).
pub fn parse_config(
    json: &str,
    policy: UnknownKeyPolicy,
) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let mut value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let prune = policy == UnknownKeyPolicy::Lenient;
    let unknown = sweep_unknown_keys(&mut value, prune);
    if !unknown.is_empty() && policy == UnknownKeyPolicy::Strict {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    let warnings = unknown
        .iter()
        .map(|k| format!("ignoring unknown config key `{k}`"))
        .collect();
    let config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok((config, warnings))
}

/// Read and parse a configuration file.
pub fn load_config(
    path: &Path,
    policy: UnknownKeyPolicy,
) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_config(&text, policy)
}

/// Canonical JSON rendering of a resolved configuration (pretty, key order
/// fixed by the struct definitions). Used for manifests and hashing.
pub fn config_to_json(config: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(config).expect("config serializes");
    s.push('\n');
    s
}
