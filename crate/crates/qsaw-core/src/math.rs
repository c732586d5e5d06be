//! Small numeric helpers shared across the physics modules.

use alloc::vec::Vec;
// Needed for f64 math in std-free builds; redundant (but harmless) whenever
// std is in the crate graph and its inherent methods win resolution.
#[allow(unused_imports)]
use num_traits::Float;

/// Unnormalized sinc: sin(x)/x, with the removable singularity filled in.
///
/// For |x| below ~1e-4 the two-term Taylor series is used; the truncation
/// error is O(x^4) ~ 1e-16, below double rounding.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// sinc²(x), the power pattern of a uniform line source.
pub fn sinc2(x: f64) -> f64 {
    let s = sinc(x);
    s * s
}

/// Non-negative remainder of `a` modulo `b`, in [0, b). `core` has no
/// `f64::rem_euclid`, so spell it out.
pub fn rem_euclid(a: f64, b: f64) -> f64 {
    let r = a % b;
    if r < 0.0 {
        r + b
    } else {
        r
    }
}

/// Root of `f` on `[lo, hi]` by bisection.
///
/// Requires a sign change across the bracket. Iterates until the bracket
/// width falls below `tol`; with tol = 1e-12 on O(1) brackets this is ~40
/// halvings.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return None;
    }
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Poisson weights P(n | mean) for n = 0..=n_max, by the stable upward
/// recurrence w[n+1] = w[n]·mean/(n+1).
pub fn poisson_weights(mean: f64, n_max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n_max + 1);
    let mut wn = (-mean).exp();
    for n in 0..=n_max {
        w.push(wn);
        wn *= mean / (n as f64 + 1.0);
    }
    w
}

/// Trapezoid-rule integral of samples `y` over (possibly nonuniform) grid `x`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_at_zero_and_pi() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(core::f64::consts::PI).abs() < 1e-15);
        // series/direct crossover is seamless
        let a = sinc(9.9e-5);
        let b = 9.9e-5_f64.sin() / 9.9e-5;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-13).unwrap();
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_unbracketed_root() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn poisson_weights_sum_to_one() {
        let w = poisson_weights(5.0, 60);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // Poisson ratio between consecutive weights
        assert!((w[1] / w[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_integrates_line_exactly() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&t| 3.0 * t + 1.0).collect();
        assert!((trapezoid(&x, &y) - 2.5).abs() < 1e-14);
    }
}
