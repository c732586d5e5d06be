//! Damped nonlinear least squares (Levenberg-Marquardt) with numeric
//! differentiation, optional parameter bounds and per-point uncertainties,
//! covariance-based error bars, and a two-branch ridge extractor that pulls
//! a coupling strength out of an avoided-crossing spectroscopy map.

use alloc::vec;
use alloc::vec::Vec;
// Needed for f64 math in std-free builds; redundant (but harmless) whenever
// std is in the crate graph and its inherent methods win resolution.
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{invert_sym, solve, Singular};
use crate::lineshape::{fano_absorption, loss_rate, FanoParams, LossParams};

/// Jacobi-scales the normal equations to unit diagonal before solving
/// (A + λ·diag A)·δ = rhs. Parameter scales in a physical fit can differ by
/// many orders of magnitude, and the raw system would defeat any absolute
/// pivot threshold. A zero diagonal entry marks a parameter with no effect
/// on the residuals and is reported as singular along that axis.
fn solve_damped(a: &[f64], rhs: &[f64], k: usize, lambda: f64) -> Result<Vec<f64>, Singular> {
    let mut d = vec![0.0; k];
    for j in 0..k {
        let ajj = a[j * k + j];
        if ajj.is_nan() || ajj <= 0.0 {
            let mut nd = vec![0.0; k];
            nd[j] = 1.0;
            return Err(Singular { null_direction: nd });
        }
        d[j] = ajj.sqrt();
    }
    let mut scaled = vec![0.0; k * k];
    for j in 0..k {
        for l in 0..k {
            scaled[j * k + l] = a[j * k + l] / (d[j] * d[l]);
        }
        scaled[j * k + j] = 1.0 + lambda;
    }
    let rhs_scaled: Vec<f64> = (0..k).map(|j| rhs[j] / d[j]).collect();
    match solve(&scaled, &rhs_scaled, k) {
        Ok(x) => Ok((0..k).map(|j| x[j] / d[j]).collect()),
        Err(s) => {
            let mut nd: Vec<f64> = (0..k).map(|j| s.null_direction[j] / d[j]).collect();
            let norm = nd.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut nd {
                    *v /= norm;
                }
            }
            Err(Singular { null_direction: nd })
        }
    }
}

/// Inverts JᵀWJ through the same unit-diagonal scaling.
fn invert_normal(a: &[f64], k: usize) -> Result<Vec<f64>, Singular> {
    let mut d = vec![0.0; k];
    for j in 0..k {
        let ajj = a[j * k + j];
        if ajj.is_nan() || ajj <= 0.0 {
            let mut nd = vec![0.0; k];
            nd[j] = 1.0;
            return Err(Singular { null_direction: nd });
        }
        d[j] = ajj.sqrt();
    }
    let mut scaled = vec![0.0; k * k];
    for j in 0..k {
        for l in 0..k {
            scaled[j * k + l] = a[j * k + l] / (d[j] * d[l]);
        }
        scaled[j * k + j] = 1.0;
    }
    let inv = invert_sym(&scaled, k)?;
    let mut out = vec![0.0; k * k];
    for j in 0..k {
        for l in 0..k {
            out[j * k + l] = inv[j * k + l] / (d[j] * d[l]);
        }
    }
    Ok(out)
}

/// Convergence and damping controls for [`fit`].
#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Iteration budget (each damping trial counts). Exhausting it returns
    /// the best point with `converged = false`.
    pub max_iter: usize,
    /// Relative chi² decrease below which the fit is declared converged.
    pub ftol: f64,
    /// Step norm (relative to the parameter norm) declaring convergence.
    pub xtol: f64,
    /// Initial damping. Zero requests pure Gauss-Newton steps; damping is
    /// reintroduced automatically if a step is rejected.
    pub lambda_init: f64,
    /// Relative step for the finite-difference jacobian.
    pub rel_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            ftol: 1e-10,
            xtol: 1e-10,
            lambda_init: 1e-3,
            rel_step: 1e-6,
        }
    }
}

/// A weighted least-squares problem: minimize Σ w_i (model(p, x_i) − y_i)²
/// with w_i = 1/σ_i² (unit weights when no σ is given).
pub struct FitProblem<'a, F: Fn(&[f64], f64) -> f64> {
    pub model: F,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub init: &'a [f64],
    pub lower: Option<&'a [f64]>,
    pub upper: Option<&'a [f64]>,
    /// Per-point 1σ uncertainties.
    pub sigma: Option<&'a [f64]>,
}

impl<'a, F: Fn(&[f64], f64) -> f64> FitProblem<'a, F> {
    pub fn new(model: F, x: &'a [f64], y: &'a [f64], init: &'a [f64]) -> Self {
        FitProblem { model, x, y, init, lower: None, upper: None, sigma: None }
    }

    pub fn with_bounds(mut self, lower: &'a [f64], upper: &'a [f64]) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    pub fn with_sigma(mut self, sigma: &'a [f64]) -> Self {
        self.sigma = Some(sigma);
        self
    }

    fn validate(&self) -> Result<(), FitError> {
        let n = self.x.len();
        let k = self.init.len();
        if n != self.y.len() {
            return Err(FitError::InvalidProblem("x and y lengths differ"));
        }
        if k == 0 {
            return Err(FitError::InvalidProblem("no parameters to fit"));
        }
        if n < k {
            return Err(FitError::InvalidProblem("fewer data points than parameters"));
        }
        if !self.x.iter().chain(self.y).all(|v| v.is_finite()) {
            return Err(FitError::InvalidProblem("non-finite data"));
        }
        if !self.init.iter().all(|v| v.is_finite()) {
            return Err(FitError::InvalidProblem("non-finite initial parameters"));
        }
        match (self.lower, self.upper) {
            (None, None) => {}
            (Some(lo), Some(hi)) => {
                if lo.len() != k || hi.len() != k {
                    return Err(FitError::InvalidProblem("bound lengths differ from parameters"));
                }
                for j in 0..k {
                    if lo[j].is_nan() || hi[j].is_nan() || lo[j] > hi[j] {
                        return Err(FitError::InvalidProblem("lower bound exceeds upper bound"));
                    }
                    if self.init[j] < lo[j] || self.init[j] > hi[j] {
                        return Err(FitError::InvalidProblem("initial point outside bounds"));
                    }
                }
            }
            _ => return Err(FitError::InvalidProblem("bounds must be given as a pair")),
        }
        if let Some(s) = self.sigma {
            if s.len() != n {
                return Err(FitError::InvalidProblem("sigma length differs from data"));
            }
            if !s.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(FitError::InvalidProblem("sigma must be positive and finite"));
            }
        }
        Ok(())
    }

    fn clamp(&self, p: &mut [f64]) {
        if let (Some(lo), Some(hi)) = (self.lower, self.upper) {
            for j in 0..p.len() {
                p[j] = p[j].max(lo[j]).min(hi[j]);
            }
        }
    }
}

/// Outcome of a least-squares minimization.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// 1σ uncertainties (square roots of the covariance diagonal).
    pub sigma: Vec<f64>,
    /// Row-major k×k covariance = chi²/(N−k) · (JᵀWJ)⁻¹, symmetrized.
    pub covariance: Vec<f64>,
    pub chi2: f64,
    /// Chi² after each accepted step, starting from the initial point;
    /// non-increasing by construction.
    pub chi2_trace: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    /// Marks parameters pinned at a bound; their covariance entries are not
    /// trustworthy.
    pub bound_active: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitError {
    InvalidProblem(&'static str),
    /// The model produced a non-finite value. When differentiation triggered
    /// it, the varied parameter index is reported.
    NonFinite { param_index: Option<usize> },
    /// The normal equations are singular: some parameter combination does not
    /// affect the residuals. The unit null-space direction identifies it.
    RankDeficient { null_direction: Vec<f64> },
    /// Ridge extraction from a two-tone map failed.
    Extraction(&'static str),
}

impl core::fmt::Display for FitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FitError::InvalidProblem(why) => write!(f, "invalid fit problem: {why}"),
            FitError::NonFinite { param_index: Some(j) } => {
                write!(f, "model evaluated to a non-finite value while varying parameter {j}")
            }
            FitError::NonFinite { param_index: None } => {
                write!(f, "model evaluated to a non-finite value")
            }
            FitError::RankDeficient { null_direction } => {
                write!(f, "singular normal equations; null direction {null_direction:?}")
            }
            FitError::Extraction(why) => write!(f, "ridge extraction failed: {why}"),
        }
    }
}

impl core::error::Error for FitError {}

/// Central-difference jacobian of `model` on `omega_grid`: entry (i, j) is
/// ∂model(p, ω_i)/∂p_j with step `rel_step`·max(|p_j|, 1). Row-major n×k.
pub fn numerical_jacobian<F: Fn(&[f64], f64) -> f64>(
    model: &F,
    params: &[f64],
    omega_grid: &[f64],
    rel_step: f64,
) -> Result<Vec<f64>, FitError> {
    if !(rel_step.is_finite() && rel_step > 0.0) {
        return Err(FitError::InvalidProblem("rel_step must be positive"));
    }
    let n = omega_grid.len();
    let k = params.len();
    let mut jac = vec![0.0; n * k];
    let mut work = params.to_vec();
    for j in 0..k {
        let h = rel_step * params[j].abs().max(1.0);
        work[j] = params[j] + h;
        for (i, &w) in omega_grid.iter().enumerate() {
            let hi = model(&work, w);
            if !hi.is_finite() {
                return Err(FitError::NonFinite { param_index: Some(j) });
            }
            jac[i * k + j] = hi;
        }
        work[j] = params[j] - h;
        for (i, &w) in omega_grid.iter().enumerate() {
            let lo = model(&work, w);
            if !lo.is_finite() {
                return Err(FitError::NonFinite { param_index: Some(j) });
            }
            jac[i * k + j] = (jac[i * k + j] - lo) / (2.0 * h);
        }
        work[j] = params[j];
    }
    Ok(jac)
}

/// Levenberg-Marquardt minimization with additive damping λ·diag(JᵀWJ),
/// λ scaled ÷3 on accepted and ×3 on rejected steps. Bounds are enforced by
/// clamping every trial point. Converges when the relative chi² decrease of
/// an accepted step falls below `ftol` or its norm below `xtol`; exhausting
/// `max_iter` returns the best point found with `converged = false`.
pub fn fit<F: Fn(&[f64], f64) -> f64>(
    problem: &FitProblem<'_, F>,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    problem.validate()?;
    if options.max_iter == 0 {
        return Err(FitError::InvalidProblem("max_iter must be positive"));
    }
    if !(options.ftol > 0.0 && options.xtol > 0.0 && options.lambda_init >= 0.0) {
        return Err(FitError::InvalidProblem("tolerances must be positive"));
    }
    let n = problem.x.len();
    let k = problem.init.len();
    let weights: Vec<f64> = match problem.sigma {
        Some(s) => s.iter().map(|&si| 1.0 / (si * si)).collect(),
        None => vec![1.0; n],
    };

    let evaluate = |p: &[f64]| -> Option<(Vec<f64>, f64)> {
        let mut r = Vec::with_capacity(n);
        let mut chi2 = 0.0;
        for ((&xi, &yi), &wi) in problem.x.iter().zip(problem.y).zip(&weights) {
            let m = (problem.model)(p, xi);
            if !m.is_finite() {
                return None;
            }
            let ri = m - yi;
            chi2 += wi * ri * ri;
            r.push(ri);
        }
        Some((r, chi2))
    };

    let mut p = problem.init.to_vec();
    problem.clamp(&mut p);
    let (mut resid, mut chi2) =
        evaluate(&p).ok_or(FitError::NonFinite { param_index: None })?;
    let mut trace = vec![chi2];
    let mut lambda = options.lambda_init;
    let mut converged = chi2 == 0.0;
    let mut n_iter = 0;

    'outer: while !converged && n_iter < options.max_iter {
        let jac = numerical_jacobian(&problem.model, &p, problem.x, options.rel_step)?;
        // normal equations: A = JᵀWJ, rhs = −JᵀW r
        let mut a = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for i in 0..n {
            let w = weights[i];
            for j in 0..k {
                let jij = jac[i * k + j];
                rhs[j] -= w * jij * resid[i];
                for l in j..k {
                    a[j * k + l] += w * jij * jac[i * k + l];
                }
            }
        }
        for j in 0..k {
            for l in 0..j {
                a[j * k + l] = a[l * k + j];
            }
        }

        loop {
            n_iter += 1;
            let delta = match solve_damped(&a, &rhs, k, lambda) {
                Ok(d) => d,
                Err(singular) => {
                    if lambda == 0.0 {
                        // a Gauss-Newton request met a singular system; retry damped
                        lambda = 1e-4;
                        if n_iter < options.max_iter {
                            continue;
                        }
                        break 'outer;
                    }
                    return Err(FitError::RankDeficient {
                        null_direction: singular.null_direction,
                    });
                }
            };
            let mut trial: Vec<f64> = (0..k).map(|j| p[j] + delta[j]).collect();
            problem.clamp(&mut trial);
            let step_sq: f64 = (0..k).map(|j| (trial[j] - p[j]) * (trial[j] - p[j])).sum();
            let p_sq: f64 = p.iter().map(|v| v * v).sum();
            let small_step = step_sq.sqrt() <= options.xtol * (p_sq.sqrt() + options.xtol);

            match evaluate(&trial) {
                Some((rt, c2t)) if c2t <= chi2 => {
                    let drop = chi2 - c2t;
                    p = trial;
                    resid = rt;
                    let prev = chi2;
                    chi2 = c2t;
                    trace.push(chi2);
                    if lambda > 0.0 {
                        lambda /= 3.0;
                    }
                    if chi2 == 0.0
                        || drop <= options.ftol * prev.max(f64::MIN_POSITIVE)
                        || small_step
                    {
                        converged = true;
                    }
                    continue 'outer;
                }
                _ => {
                    // rejected (chi²増 or non-finite trial): damp harder
                    lambda = if lambda == 0.0 { 1e-4 } else { lambda * 3.0 };
                    if lambda > 1e14 || n_iter >= options.max_iter {
                        break 'outer;
                    }
                }
            }
        }
    }

    // covariance at the solution
    let jac = numerical_jacobian(&problem.model, &p, problem.x, options.rel_step)?;
    let mut a = vec![0.0; k * k];
    for i in 0..n {
        let w = weights[i];
        for j in 0..k {
            for l in j..k {
                a[j * k + l] += w * jac[i * k + j] * jac[i * k + l];
            }
        }
    }
    for j in 0..k {
        for l in 0..j {
            a[j * k + l] = a[l * k + j];
        }
    }
    let inv = invert_normal(&a, k)
        .map_err(|s| FitError::RankDeficient { null_direction: s.null_direction })?;
    let dof = if n > k { (n - k) as f64 } else { 1.0 };
    let scale = chi2 / dof;
    let covariance: Vec<f64> = inv.iter().map(|v| v * scale).collect();
    let sigma: Vec<f64> = (0..k).map(|j| covariance[j * k + j].max(0.0).sqrt()).collect();
    let bound_active: Vec<bool> = match (problem.lower, problem.upper) {
        (Some(lo), Some(hi)) => (0..k).map(|j| p[j] == lo[j] || p[j] == hi[j]).collect(),
        _ => vec![false; k],
    };

    Ok(FitResult {
        params: p,
        sigma,
        covariance,
        chi2,
        chi2_trace: trace,
        n_iter,
        converged,
        bound_active,
    })
}

/// Fano model adapter: p = [n_max, q, Γ, ω_m, n_off].
pub fn fano_model(p: &[f64], omega: f64) -> f64 {
    fano_absorption(
        omega,
        &FanoParams { n_max: p[0], q: p[1], gamma: p[2], omega_m: p[3], n_off: p[4] },
    )
}

/// Deterministic starting point for a Fano fit: center at the data maximum,
/// width from the data FWHM, floor from the minimum, amplitude from the
/// span, and no asymmetry.
pub fn fano_initial_guess(x: &[f64], y: &[f64]) -> [f64; 5] {
    let mut imax = 0;
    let mut ymax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    for (i, &v) in y.iter().enumerate() {
        if v > ymax {
            ymax = v;
            imax = i;
        }
        ymin = ymin.min(v);
    }
    let half = 0.5 * (ymax + ymin);
    let mut lo = x[0];
    let mut hi = x[x.len() - 1];
    for i in (0..imax).rev() {
        if y[i] < half {
            lo = x[i];
            break;
        }
    }
    for i in imax..y.len() {
        if y[i] < half {
            hi = x[i];
            break;
        }
    }
    let span = x[x.len() - 1] - x[0];
    let fwhm = (hi - lo).max(span / (y.len() as f64));
    [ymax - ymin, 0.0, fwhm, x[imax], ymin]
}

/// Qubit-loss model adapter with a fixed finger-pair count:
/// p = [Q_i, Γ₀, ω_IDT].
pub fn make_loss_model(n_pairs: u32) -> impl Fn(&[f64], f64) -> f64 {
    move |p: &[f64], omega: f64| {
        loss_rate(
            omega,
            &LossParams { q_i: p[0], gamma_0: p[1], n_pairs, omega_idt: p[2] },
        )
        .unwrap_or(f64::NAN)
    }
}

/// A two-tone spectroscopy map: response sampled on a grid of swept qubit
/// frequencies (columns) × probe frequencies (rows).
#[derive(Clone, Debug)]
pub struct TwoToneMap {
    pub qubit_freq: Vec<f64>,
    pub probe_freq: Vec<f64>,
    /// response[c][r] at (qubit_freq[c], probe_freq[r]).
    pub response: Vec<Vec<f64>>,
}

impl TwoToneMap {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.qubit_freq.len() < 2 || self.probe_freq.len() < 3 {
            return Err(FitError::InvalidProblem("map too small"));
        }
        if self.response.len() != self.qubit_freq.len()
            || self.response.iter().any(|c| c.len() != self.probe_freq.len())
        {
            return Err(FitError::InvalidProblem("response shape mismatch"));
        }
        for axis in [&self.qubit_freq, &self.probe_freq] {
            for w in axis.windows(2) {
                if !(w[0].is_finite() && w[1] > w[0]) {
                    return Err(FitError::InvalidProblem("axes must be strictly increasing"));
                }
            }
        }
        if self.response.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidProblem("non-finite response"));
        }
        Ok(())
    }
}

/// Hybridized branch frequencies of two coupled modes:
/// E∓(ω_q) = (ω_q + ω_m)/2 ∓ √((ω_q − ω_m)² + 4g²)/2. `sign` selects the
/// branch (−1 lower, +1 upper).
pub fn branch_freq(g: f64, omega_m: f64, omega_q: f64, sign: f64) -> f64 {
    let d = omega_q - omega_m;
    0.5 * ((omega_q + omega_m) + sign * (d * d + 4.0 * g * g).sqrt())
}

/// Strict local maxima of one column, parabolically refined, strongest first.
fn column_peaks(probe: &[f64], col: &[f64]) -> Vec<(f64, f64)> {
    let mut peaks = Vec::new();
    for j in 1..col.len() - 1 {
        if col[j] > col[j - 1] && col[j] > col[j + 1] {
            let denom = col[j - 1] - 2.0 * col[j] + col[j + 1];
            let mut offset = 0.0;
            if denom < 0.0 {
                offset = 0.5 * (col[j - 1] - col[j + 1]) / denom;
                offset = offset.clamp(-0.5, 0.5);
            }
            let h = 0.5 * (probe[j + 1] - probe[j - 1]);
            let freq = probe[j] + offset * h;
            let amp = col[j] - 0.25 * (col[j - 1] - col[j + 1]) * offset;
            peaks.push((freq, amp));
        }
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
}

/// Extracts the avoided crossing from a two-tone map: finds both spectral
/// ridges in every column that resolves them, then least-squares fits the
/// hybridized branch frequencies. The minimization runs over (g², ω_m) —
/// the branch model depends on the coupling only through its square, so this
/// keeps the problem regular at zero coupling — and the result is reported
/// as [g, ω_m] with the coupling uncertainty mapped through the square root
/// via the upper 1σ contour, σ_g = √(g² + σ_{g²}) − g, which stays finite
/// and meaningful at g = 0.
pub fn extract_avoided_crossing(
    map: &TwoToneMap,
    init: (f64, f64),
) -> Result<FitResult, FitError> {
    map.validate()?;
    let (g0, om0) = init;
    if !(g0.is_finite() && om0.is_finite()) {
        return Err(FitError::InvalidProblem("non-finite initial guess"));
    }

    let probe_spacing = min_spacing(&map.probe_freq);
    let col_spacing = min_spacing(&map.qubit_freq);

    // collect (qubit freq, branch sign) → measured ridge frequency
    let mut tags: Vec<(f64, f64)> = Vec::new();
    let mut measured: Vec<f64> = Vec::new();
    let mut resolved_near_crossing = false;
    for (c, col) in map.response.iter().enumerate() {
        let peaks = column_peaks(&map.probe_freq, col);
        if peaks.len() < 2 {
            continue;
        }
        let (fa, fb) = (peaks[0].0, peaks[1].0);
        let (lo, hi) = if fa <= fb { (fa, fb) } else { (fb, fa) };
        tags.push((map.qubit_freq[c], -1.0));
        measured.push(lo);
        tags.push((map.qubit_freq[c], 1.0));
        measured.push(hi);
        if (map.qubit_freq[c] - om0).abs() <= (2.0 * g0.abs()).max(col_spacing) {
            resolved_near_crossing = true;
        }
    }
    // when the predicted splitting is resolvable, the crossing region must
    // show both ridges
    if 2.0 * g0.abs() > 3.0 * probe_spacing && !resolved_near_crossing {
        return Err(FitError::Extraction(
            "no column near the crossing resolves two ridges",
        ));
    }
    if tags.len() < 4 {
        return Err(FitError::Extraction("fewer than two columns resolve two ridges"));
    }

    let index: Vec<f64> = (0..measured.len()).map(|i| i as f64).collect();
    // the dimensionless first parameter u = g²/s_scale keeps the
    // finite-difference step meaningful even when pinned at u = 0
    let span = map.probe_freq[map.probe_freq.len() - 1] - map.probe_freq[0];
    let s_scale = (0.25 * span) * (0.25 * span);
    let model = |p: &[f64], xi: f64| {
        let (wq, sign) = tags[xi as usize];
        let d = wq - p[1];
        0.5 * ((wq + p[1]) + sign * (d * d + 4.0 * p[0] * s_scale).sqrt())
    };
    let init_vec = [g0 * g0 / s_scale, om0.clamp(map.probe_freq[0], *map.probe_freq.last().unwrap())];
    let lower = [0.0, map.probe_freq[0]];
    let upper = [16.0, map.probe_freq[map.probe_freq.len() - 1]];
    let problem =
        FitProblem::new(&model, &index, &measured, &init_vec).with_bounds(&lower, &upper);
    let inner = fit(&problem, &FitOptions::default())?;

    let s = inner.params[0].max(0.0) * s_scale;
    let sigma_s = inner.sigma[0] * s_scale;
    let g = s.sqrt();
    let sigma_g = (s + sigma_s).sqrt() - g;
    // effective dg/ds consistent with the reported σ_g
    let t = if sigma_s > 0.0 { sigma_g / sigma_s } else { 0.0 };
    let covariance = vec![
        sigma_g * sigma_g,
        t * s_scale * inner.covariance[1],
        t * s_scale * inner.covariance[2],
        inner.covariance[3],
    ];
    Ok(FitResult {
        params: vec![g, inner.params[1]],
        sigma: vec![sigma_g, inner.sigma[1]],
        covariance,
        chi2: inner.chi2,
        chi2_trace: inner.chi2_trace,
        n_iter: inner.n_iter,
        converged: inner.converged,
        bound_active: inner.bound_active,
    })
}

fn min_spacing(axis: &[f64]) -> f64 {
    axis.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::{coupled_oscillator_pair, predict_fano_q, DriveTarget, OscillatorPairParams};
    use crate::spectrum::linspace_around;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const PAPER_FANO: [f64; 5] = [8.0, -0.25, 630e3, 4.4588e9, 0.1];

    fn linear(p: &[f64], x: f64) -> f64 {
        p[0] * x + p[1]
    }

    #[test]
    fn linear_fit_is_exact_and_fast() {
        let x: Vec<f64> = (0..40).map(|i| -3.0 + 0.2 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.5 * v - 0.7).collect();
        let init = [0.0, 0.0];
        let problem = FitProblem::new(linear, &x, &y, &init);
        let opts = FitOptions { lambda_init: 0.0, ..FitOptions::default() };
        let r = fit(&problem, &opts).unwrap();
        assert!(r.converged);
        assert!(r.n_iter <= 2, "{} iterations", r.n_iter);
        assert!((r.params[0] - 2.5).abs() < 1e-9);
        assert!((r.params[1] + 0.7).abs() < 1e-9);
        assert!(r.chi2 < 1e-18);
    }

    #[test]
    fn jacobian_exact_for_linear_and_constant_models() {
        let grid: Vec<f64> = (0..7).map(|i| 0.5 + i as f64).collect();
        let jac = numerical_jacobian(&|p: &[f64], w: f64| p[0] * w, &[3.0], &grid, 1e-6).unwrap();
        for (i, &w) in grid.iter().enumerate() {
            assert!((jac[i] - w).abs() < 1e-9 * w.abs().max(1.0));
        }
        let jac = numerical_jacobian(&|p: &[f64], _w: f64| p[0] * 0.0 + 42.0, &[3.0], &grid, 1e-6)
            .unwrap();
        assert!(jac.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn jacobian_matches_analytic_fano_derivative() {
        // ∂n̄/∂q = n_max·(2q − 2(qΓ/2 + δ)(Γ/2)/((Γ/2)² + δ²))
        let mut rng = ChaCha8Rng::seed_from_u64(0xfa_de);
        for _ in 0..200 {
            let p = [
                rand::Rng::gen_range(&mut rng, 0.5..10.0),
                rand::Rng::gen_range(&mut rng, -3.0..3.0),
                rand::Rng::gen_range(&mut rng, 1e5..1e7),
                4.4588e9,
                rand::Rng::gen_range(&mut rng, 0.0..1.0),
            ];
            let delta: f64 = rand::Rng::gen_range(&mut rng, -10.0..10.0) * p[2];
            let grid = [p[3] + delta];
            let jac = numerical_jacobian(&fano_model, &p, &grid, 1e-6).unwrap();
            let hw = p[2] / 2.0;
            let analytic =
                p[0] * (2.0 * p[1] - 2.0 * (p[1] * hw + delta) * hw / (hw * hw + delta * delta));
            let tol = 1e-6 * analytic.abs().max(p[0]);
            assert!(
                (jac[1] - analytic).abs() <= tol,
                "q-derivative {} vs analytic {analytic}",
                jac[1]
            );
        }
    }

    #[test]
    fn jacobian_reports_offending_parameter() {
        let model = |p: &[f64], _w: f64| p[1].sqrt();
        let err = numerical_jacobian(&model, &[1.0, 0.0], &[1.0, 2.0], 1e-6).unwrap_err();
        assert_eq!(err, FitError::NonFinite { param_index: Some(1) });
    }

    fn synth_fano(truth: &[f64; 5], half_span: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let x = linspace_around(truth[3], half_span, n);
        let y: Vec<f64> = x.iter().map(|&w| fano_model(truth, w)).collect();
        (x, y)
    }

    #[test]
    fn fano_roundtrip_with_noise_recovers_truth_within_3_sigma() {
        let truth = PAPER_FANO;
        let (x, clean) = synth_fano(&truth, 8.0 * truth[2], 401);
        let span = clean.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - clean.iter().cloned().fold(f64::INFINITY, f64::min);
        let noise_sigma = 0.01 * span;
        let noise = Normal::new(0.0, noise_sigma).unwrap();
        let mut ok = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let sigma = vec![noise_sigma; y.len()];
            let init = fano_initial_guess(&x, &y);
            let problem = FitProblem::new(fano_model, &x, &y, &init).with_sigma(&sigma);
            let r = fit(&problem, &FitOptions::default()).unwrap();
            if !r.converged {
                continue;
            }
            let within = (0..5).all(|j| (r.params[j] - truth[j]).abs() <= 3.0 * r.sigma[j]);
            if within {
                ok += 1;
            }
        }
        assert!(ok >= 8, "only {ok}/10 seeds recovered the truth within 3σ");
    }

    #[test]
    fn loss_roundtrip_on_clean_data() {
        let truth = [1.05e4, 0.252e9, 4.504e9];
        let model = make_loss_model(16);
        let x: Vec<f64> = (0..301).map(|i| 4.2e9 + i as f64 * 2e6).collect();
        let y: Vec<f64> = x.iter().map(|&w| model(&truth, w)).collect();
        let init = [2.0e4, 0.1e9, 4.52e9];
        let problem = FitProblem::new(&model, &x, &y, &init);
        let r = fit(&problem, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.params[0] - truth[0]).abs() < 0.02 * truth[0], "Q_i {}", r.params[0]);
        assert!((r.params[1] - truth[1]).abs() < 0.02 * truth[1], "Γ₀ {}", r.params[1]);
        assert!((r.params[2] - truth[2]).abs() < 0.02 * truth[2], "ω_IDT {}", r.params[2]);
    }

    #[test]
    fn chi2_trace_never_increases() {
        let truth = PAPER_FANO;
        let (x, clean) = synth_fano(&truth, 6.0 * truth[2], 201);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
        let init = fano_initial_guess(&x, &y);
        let problem = FitProblem::new(fano_model, &x, &y, &init);
        let r = fit(&problem, &FitOptions::default()).unwrap();
        for w in r.chi2_trace.windows(2) {
            assert!(w[1] <= w[0], "chi² rose from {} to {}", w[0], w[1]);
        }
        assert!(r.chi2_trace.len() >= 2);
    }

    #[test]
    fn bounds_are_enforced_and_flagged() {
        let truth = PAPER_FANO;
        let (x, y) = synth_fano(&truth, 6.0 * truth[2], 201);
        // floor is truthfully 0.1 but constrained to at least 0.3
        let lower = [0.0, -5.0, 1e3, truth[3] - 5e6, 0.3];
        let upper = [50.0, 5.0, 1e7, truth[3] + 5e6, 5.0];
        let init = [6.0, 0.0, 1e6, truth[3] + 1e6, 0.5];
        let problem = FitProblem::new(fano_model, &x, &y, &init).with_bounds(&lower, &upper);
        let r = fit(&problem, &FitOptions::default()).unwrap();
        for j in 0..5 {
            assert!(r.params[j] >= lower[j] && r.params[j] <= upper[j]);
        }
        assert!(r.bound_active[4], "floor should be pinned at its lower bound");
        assert_eq!(r.params[4], 0.3);
        assert!(!r.bound_active[0] && !r.bound_active[1]);
    }

    #[test]
    fn rejecting_bad_problems() {
        let x = [1.0, 2.0];
        let y = [1.0];
        assert!(matches!(
            fit(&FitProblem::new(linear, &x, &y, &[0.0, 0.0]), &FitOptions::default()),
            Err(FitError::InvalidProblem(_))
        ));
        let y2 = [1.0, 2.0];
        let init = [0.5, 0.0];
        let lower = [1.0, -1.0];
        let upper = [2.0, 1.0];
        let p = FitProblem::new(linear, &x, &y2, &init).with_bounds(&lower, &upper);
        assert!(matches!(fit(&p, &FitOptions::default()), Err(FitError::InvalidProblem(_))));
    }

    #[test]
    fn scale_invariance_of_the_minimizer() {
        let truth = PAPER_FANO;
        let (x, clean) = synth_fano(&truth, 6.0 * truth[2], 201);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.04).unwrap();
        let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
        let init = fano_initial_guess(&x, &y);
        let base = fit(&FitProblem::new(fano_model, &x, &y, &init), &FitOptions::default())
            .unwrap();

        // unit weights, y → c·y: amplitudes scale by c, shape parameters
        // (q, Γ, ω_m) unchanged, chi² scales by c²
        let c = 37.5;
        let yc: Vec<f64> = y.iter().map(|v| c * v).collect();
        let initc = fano_initial_guess(&x, &yc);
        let scaled = fit(&FitProblem::new(fano_model, &x, &yc, &initc), &FitOptions::default())
            .unwrap();
        for j in [1usize, 2, 3] {
            let tol = 1e-10 * base.params[j].abs().max(1.0) + 1e-7;
            assert!(
                (scaled.params[j] - base.params[j]).abs() <= tol,
                "shape parameter {j}: {} vs {}",
                scaled.params[j],
                base.params[j]
            );
        }
        for j in [0usize, 4] {
            assert!((scaled.params[j] - c * base.params[j]).abs() <= 1e-8 * c * base.params[j].abs().max(1.0));
        }
        assert!((scaled.chi2 - c * c * base.chi2).abs() <= 1e-6 * c * c * base.chi2);

        // (y, σ) → (c·y, c·σ): identical relative weighting, chi² unchanged
        let s = vec![0.04; y.len()];
        let sc: Vec<f64> = s.iter().map(|v| c * v).collect();
        let a = fit(
            &FitProblem::new(fano_model, &x, &y, &init).with_sigma(&s),
            &FitOptions::default(),
        )
        .unwrap();
        let b = fit(
            &FitProblem::new(fano_model, &x, &yc, &initc).with_sigma(&sc),
            &FitOptions::default(),
        )
        .unwrap();
        assert!((b.chi2 - a.chi2).abs() <= 1e-6 * a.chi2.max(1.0));
        for j in [1usize, 2, 3] {
            let tol = 1e-10 * a.params[j].abs().max(1.0) + 1e-7;
            assert!((b.params[j] - a.params[j]).abs() <= tol);
        }
    }

    #[test]
    fn covariance_is_symmetric_and_positive_on_diagonal() {
        let truth = PAPER_FANO;
        let (x, clean) = synth_fano(&truth, 6.0 * truth[2], 201);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
        let init = fano_initial_guess(&x, &y);
        let r = fit(&FitProblem::new(fano_model, &x, &y, &init), &FitOptions::default())
            .unwrap();
        let k = 5;
        let scale = r.covariance.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            for j in 0..k {
                let asym = (r.covariance[i * k + j] - r.covariance[j * k + i]).abs();
                assert!(asym <= 1e-12 * scale);
            }
            assert!(r.covariance[i * k + i] >= 0.0);
            assert!(r.sigma[i] >= 0.0);
        }
    }

    #[test]
    fn dead_parameter_reports_rank_deficiency() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + 1.0).collect();
        // p[2] never enters the model
        let model = |p: &[f64], w: f64| p[0] * w + p[1];
        let init = [0.0, 0.0, 5.0];
        let err = fit(&FitProblem::new(model, &x, &y, &init), &FitOptions::default())
            .unwrap_err();
        match err {
            FitError::RankDeficient { null_direction } => {
                assert!(null_direction[2].abs() > 0.99, "{null_direction:?}");
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn max_iter_exhaustion_returns_best_point_unconverged() {
        let truth = PAPER_FANO;
        let (x, y) = synth_fano(&truth, 6.0 * truth[2], 201);
        let init = fano_initial_guess(&x, &y);
        let opts = FitOptions { max_iter: 2, ..FitOptions::default() };
        let r = fit(&FitProblem::new(fano_model, &x, &y, &init), &opts).unwrap();
        assert!(!r.converged);
        assert!(r.n_iter <= 2);
        assert!(r.chi2 <= r.chi2_trace[0]);
    }

    // --- avoided-crossing extraction ------------------------------------

    fn lorentzian(f: f64, center: f64, fwhm: f64) -> f64 {
        let hw = fwhm / 2.0;
        hw * hw / (hw * hw + (f - center) * (f - center))
    }

    fn synth_map(g: f64, omega_m: f64, n_cols: usize, noise_amp: f64, seed: u64) -> TwoToneMap {
        let span = 30e6;
        let qubit_freq: Vec<f64> = (0..n_cols)
            .map(|i| omega_m - span + 2.0 * span * i as f64 / (n_cols - 1) as f64)
            .collect();
        // 100 kHz probe pitch, commensurate with the column pitch so that
        // uncoupled ridge centers land exactly on grid nodes
        let probe_freq = linspace_around(omega_m, 48e6, 961);
        let width = 1.2e6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_amp).unwrap();
        let response = qubit_freq
            .iter()
            .map(|&wq| {
                probe_freq
                    .iter()
                    .map(|&f| {
                        let lo = branch_freq(g, omega_m, wq, -1.0);
                        let hi = branch_freq(g, omega_m, wq, 1.0);
                        lorentzian(f, lo, width)
                            + lorentzian(f, hi, width)
                            + if noise_amp > 0.0 { noise.sample(&mut rng) } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        TwoToneMap { qubit_freq, probe_freq, response }
    }

    #[test]
    fn crossing_roundtrip_recovers_coupling() {
        let g = 9.76e6;
        let om = 4.4588e9;
        let map = synth_map(g, om, 41, 0.01, 42);
        let r = extract_avoided_crossing(&map, (8e6, om + 2e6)).unwrap();
        assert!(r.converged);
        assert!((r.params[0] - g).abs() < 0.05 * g, "g = {}", r.params[0]);
        assert!((r.params[1] - om).abs() < 1e6, "ω_m = {}", r.params[1]);
    }

    #[test]
    fn zero_coupling_map_fits_zero_within_uncertainty() {
        let om = 4.4588e9;
        let map = synth_map(0.0, om, 41, 0.0, 0);
        let r = extract_avoided_crossing(&map, (1e6, om)).unwrap();
        assert!(
            r.params[0] <= r.sigma[0].max(50e3),
            "g = {} ± {}",
            r.params[0],
            r.sigma[0]
        );
    }

    #[test]
    fn sparse_grid_still_recovers_coupling() {
        let g = 5e6;
        let om = 4.4588e9;
        let map = synth_map(g, om, 11, 0.005, 9);
        let r = extract_avoided_crossing(&map, (4e6, om - 1e6)).unwrap();
        assert!((r.params[0] - g).abs() < 0.10 * g, "g = {}", r.params[0]);
    }

    #[test]
    fn unresolved_crossing_is_an_extraction_error() {
        let om = 4.4588e9;
        // single ridge everywhere (g = 0 collapses branches onto max(ω_q, ω_m)
        // only near the crossing; force unresolvable by huge claimed g)
        let mut map = synth_map(0.0, om, 21, 0.0, 0);
        // merge the two Lorentzians into one ridge per column
        for (c, col) in map.response.iter_mut().enumerate() {
            let wq = map.qubit_freq[c];
            for (r, v) in col.iter_mut().enumerate() {
                *v = lorentzian(map.probe_freq[r], 0.5 * (wq + om), 40e6);
            }
        }
        let err = extract_avoided_crossing(&map, (9.76e6, om)).unwrap_err();
        assert!(matches!(err, FitError::Extraction(_)));
    }

    #[test]
    fn oscillator_oracle_fano_fit_matches_detuning_prediction() {
        // the driven lossy amplitude near the confined resonance carries the
        // interference window; an unconstrained Fano fit of it must agree
        // with the closed-form asymmetry prediction within 10%
        let omega_saw = 4.4588e9;
        let omega_idt = 4.504e9;
        let gamma_idt = 249.7e6;
        let pair = OscillatorPairParams {
            omega_1: omega_saw,
            omega_2: omega_idt,
            gamma_1: gamma_idt / 1e4,
            gamma_2: gamma_idt,
            kappa: 2.0 * 9.76e6 * omega_saw,
            drive_amp: 1.0,
            drive: DriveTarget::Transducer,
        };
        let grid = linspace_around(omega_saw, 4e6, 4001);
        let resp = coupled_oscillator_pair(&grid, &pair).unwrap();
        let power = resp.transducer.power();
        let raw = power.y();
        let peak = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let y: Vec<f64> = raw.iter().map(|v| v / peak).collect();
        let background = 0.5 * (y[0] + y[y.len() - 1]);
        let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let imin = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
        let init = [-(background - ymin), -0.3, 1.4e6, grid[imin] + 0.3e6, background];
        let problem = FitProblem::new(fano_model, &grid, &y, &init);
        let r = fit(&problem, &FitOptions::default()).unwrap();
        assert!(r.converged);
        let q_pred = predict_fano_q(omega_saw, omega_idt, gamma_idt).unwrap();
        let rel = (r.params[1] - q_pred).abs() / q_pred.abs();
        assert!(rel < 0.10, "fitted q = {} vs predicted {q_pred} ({rel:.3} rel)", r.params[1]);
    }
}
