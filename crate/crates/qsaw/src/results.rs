//! Stable JSON reports for fits and derived quantities.
//!
//! Fit reports always carry exactly five top-level keys, in this order:
//! `params`, `sigma`, `chi2`, `converged`, `n_iter`. The `params` and
//! `sigma` objects map parameter names to values in model order. Numbers
//! are rendered shortest-round-trip, so reloading reproduces every `f64`
//! bit-exactly and repeated runs produce byte-identical files.

use qsaw_core::fit::FitResult;
use serde_json::{json, Map, Value};

/// Parameter names per fit model, in the order the fit engine uses.
pub const FANO_PARAM_NAMES: [&str; 5] = ["n_max", "q", "gamma", "omega_m", "n_off"];
pub const LOSS_PARAM_NAMES: [&str; 3] = ["q_i", "gamma_0", "omega_idt"];
pub const COHERENT_PARAM_NAMES: [&str; 4] = ["n_bar", "amplitude", "gamma_q", "omega_d"];
pub const CROSSING_PARAM_NAMES: [&str; 2] = ["g_m", "omega_m"];
pub const LINE_PARAM_NAMES: [&str; 2] = ["slope", "intercept"];

fn named_object(names: &[&str], values: &[f64]) -> Value {
    let mut map = Map::new();
    for (name, &v) in names.iter().zip(values) {
        map.insert((*name).to_string(), json!(v));
    }
    Value::Object(map)
}

/// Build the five-key fit report as a JSON value.
pub fn fit_report(names: &[&str], result: &FitResult) -> Value {
    assert_eq!(
        names.len(),
        result.params.len(),
        "one name per fitted parameter"
    );
    let mut map = Map::new();
    map.insert(String::from("params"), named_object(names, &result.params));
    map.insert(String::from("sigma"), named_object(names, &result.sigma));
    map.insert(String::from("chi2"), json!(result.chi2));
    map.insert(String::from("converged"), json!(result.converged));
    map.insert(String::from("n_iter"), json!(result.n_iter));
    Value::Object(map)
}

/// Pretty-printed JSON text with a trailing newline.
pub fn to_json_text(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    s
}

/// Resonator design figures, all derived from the device geometry.
#[derive(Clone, Copy, Debug)]
pub struct DesignReport {
    /// Mirror penetration depth, m.
    pub l_p_m: f64,
    /// Effective cavity length, m.
    pub l_eff_m: f64,
    /// Free spectral range, Hz.
    pub fsr_hz: f64,
    /// Mirror stop-band width, Hz.
    pub stopband_hz: f64,
    /// Transducer center frequency, Hz.
    pub f_idt_hz: f64,
    /// Mirror Bragg frequency, Hz.
    pub f_mirror_hz: f64,
}

impl DesignReport {
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert(String::from("l_p_m"), json!(self.l_p_m));
        map.insert(String::from("l_eff_m"), json!(self.l_eff_m));
        map.insert(String::from("fsr_hz"), json!(self.fsr_hz));
        map.insert(String::from("stopband_hz"), json!(self.stopband_hz));
        map.insert(String::from("f_idt_hz"), json!(self.f_idt_hz));
        map.insert(String::from("f_mirror_hz"), json!(self.f_mirror_hz));
        Value::Object(map)
    }
}
