//! Time sampling, the filter function `I_T` and the leakage weight `ε_H(T)`.
//!
//! With times drawn from `P(t)` on `[0, T]`, averaging `exp(iΔE (t - t'))`
//! over two independent draws gives `I_T(ΔE) = |∫ P(t) e^{iΔE t} dt|²`. For
//! the uniform distribution this is `sinc²(ΔE T / 2)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::spectral_width;

/// Below this `|ΔE T / 2|` the filter switches to its Taylor expansion.
const TAYLOR_CUTOFF: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeDistribution {
    #[default]
    Uniform,
}

/// Sampling window `[0, T]` and the distribution on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow<T: Real> {
    duration: T,
    distribution: TimeDistribution,
}

impl<T: Real> TimeWindow<T> {
    /// Uniform window of length `duration > 0`.
    pub fn uniform(duration: T) -> Result<Self> {
        if !(duration > T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time window must be positive and finite, got {}",
                duration.as_f64()
            )));
        }
        Ok(Self { duration, distribution: TimeDistribution::Uniform })
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn distribution(&self) -> TimeDistribution {
        self.distribution
    }

    /// One time drawn from the window.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self.distribution {
            TimeDistribution::Uniform => T::unit_uniform(rng) * self.duration,
        }
    }
}

/// `count` i.i.d. draws from the window.
pub fn sample_times<T: Real, R: Rng + ?Sized>(window: &TimeWindow<T>, count: usize, rng: &mut R) -> Vec<T> {
    (0..count).map(|_| window.sample(rng)).collect()
}

/// `sinc²(x)` with the removable singularity handled by a fourth-order
/// expansion near zero.
#[inline]
pub fn sinc_squared<T: Real>(x: T) -> T {
    if x.abs() < T::lit(TAYLOR_CUTOFF) {
        let x2 = x * x;
        T::one() - x2 / T::lit(3.0) + T::lit(2.0 / 45.0) * x2 * x2
    } else {
        let s = x.sin() / x;
        s * s
    }
}

/// Filter `I_T(ΔE)` of the window. Lies in `[0, 1]` and equals 1 at `ΔE = 0`.
#[inline]
pub fn filter_value<T: Real>(delta_e: T, window: &TimeWindow<T>) -> T {
    match window.distribution {
        TimeDistribution::Uniform => sinc_squared(delta_e * window.duration * T::lit(0.5)),
    }
}

/// Mean off-diagonal filter weight of a spectrum at one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    #[serde(rename = "T")]
    pub duration: f64,
    pub epsilon: f64,
    pub dim: usize,
}

/// `ε_H(T) = Σ_{m≠m'} I_T(E_m - E_m') / (D(D-1))`.
pub fn epsilon_h<T: Real>(spectrum: &[T], window: &TimeWindow<T>) -> Result<LeakageReport> {
    let d = spectrum.len();
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    // symmetric in (m, m'): sum the upper triangle twice, in f64
    let mut sum = 0.0f64;
    for (a, &ea) in spectrum.iter().enumerate() {
        for &eb in &spectrum[a + 1..] {
            sum += filter_value(ea - eb, window).as_f64();
        }
    }
    let epsilon = (2.0 * sum / (d as f64 * (d as f64 - 1.0))).clamp(0.0, 1.0);
    Ok(LeakageReport { duration: window.duration.as_f64(), epsilon, dim: d })
}

/// `K_H(T) = Σ_{a,b} I_T(E_a - E_b) = D + D(D-1) ε_H(T)`.
pub fn filter_mass<T: Real>(spectrum: &[T], window: &TimeWindow<T>) -> Result<f64> {
    let d = spectrum.len() as f64;
    let eps = epsilon_h(spectrum, window)?.epsilon;
    Ok(d + d * (d - 1.0) * eps)
}

/// `D / spectral width`, the scale beyond which the filter resolves
/// individual levels. A diagnostic, not a hard switch.
pub fn heisenberg_time<T: Real>(spectrum: &[T]) -> f64 {
    let width = spectral_width(spectrum).as_f64();
    if width > 0.0 {
        spectrum.len() as f64 / width
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn window(t: f64) -> TimeWindow<f64> {
        TimeWindow::uniform(t).unwrap()
    }

    #[test]
    fn window_rejects_non_positive() {
        assert!(TimeWindow::uniform(0.0).is_err());
        assert!(TimeWindow::uniform(-1.0).is_err());
        assert!(TimeWindow::uniform(f64::NAN).is_err());
        assert!(TimeWindow::uniform(f64::INFINITY).is_err());
    }

    #[test]
    fn filter_reference_values() {
        let w = window(1.0);
        assert_eq!(filter_value(0.0, &w), 1.0);
        assert!(filter_value(2.0 * std::f64::consts::PI, &w).abs() < 1e-30);
        // sinc²(π/2) = (2/π)²
        let expected = (2.0 / std::f64::consts::PI).powi(2);
        assert!((filter_value(std::f64::consts::PI, &w) - expected).abs() < 1e-15);
        assert!((expected - 0.4053).abs() < 1e-4);
    }

    #[test]
    fn filter_is_continuous_at_zero() {
        let w = window(3.0);
        assert!((filter_value(1e-12, &w) - 1.0).abs() < 1e-8);
        assert!((filter_value(-1e-12, &w) - 1.0).abs() < 1e-8);
        // Taylor branch joins the direct formula
        let x: f64 = 1.0001e-4;
        let direct = (x.sin() / x).powi(2);
        assert!((sinc_squared(x) - direct).abs() < 1e-15);
        assert!((sinc_squared(0.99999e-4f64) - direct).abs() < 1e-12);
    }

    #[test]
    fn uniform_sampling_mean_and_determinism() {
        let w = window(1.0);
        let xs = sample_times(&w, 100_000, &mut stream(3, Purpose::Verification, 0));
        assert!(xs.iter().all(|&t| (0.0..1.0).contains(&t)));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sigma = (1.0f64 / 12.0).sqrt() / (xs.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 5.0 * sigma);
        let ys = sample_times(&w, 100_000, &mut stream(3, Purpose::Verification, 0));
        assert_eq!(xs, ys);
    }

    #[test]
    fn epsilon_limits() {
        let spec = [0.0, 0.3, 1.1, 2.0];
        let tiny = epsilon_h(&spec, &window(1e-9)).unwrap();
        assert!((tiny.epsilon - 1.0).abs() < 1e-12);
        let degenerate = epsilon_h(&[0.7; 5], &window(1e6)).unwrap();
        assert_eq!(degenerate.epsilon, 1.0);
        assert!(epsilon_h(&[1.0], &window(1.0)).is_err());
    }

    #[test]
    fn epsilon_shift_invariance_and_mass() {
        let spec = [-1.3, -0.2, 0.05, 0.9, 1.7];
        let shifted: Vec<f64> = spec.iter().map(|e| e + 0.5).collect();
        let w = window(7.0);
        let a = epsilon_h(&spec, &w).unwrap().epsilon;
        let b = epsilon_h(&shifted, &w).unwrap().epsilon;
        assert!((a - b).abs() < 1e-14);
        // K_H is the full double sum
        let direct: f64 = spec.iter().flat_map(|x| spec.iter().map(move |y| filter_value(x - y, &w))).sum();
        assert!((filter_mass(&spec, &w).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_time_diagnostic() {
        assert_eq!(heisenberg_time(&[0.0, 1.0, 2.0, 4.0]), 1.0);
        assert!(heisenberg_time(&[1.0, 1.0]).is_infinite());
    }
}
