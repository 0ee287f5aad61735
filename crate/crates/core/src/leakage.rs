//! Finite-window error curves `|δF(T)| = |F(T)/F(∞) - 1|`, power-law fits,
//! threshold times and the 2SP/3SP error ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_potential::{fp_monte_carlo, FpEstimate, Protocol, ProtocolConfig};
use crate::rng::{derive_seed, Purpose};
use crate::scalar::Real;
use crate::temporal::TimeWindow;

/// Default grid density.
pub const POINTS_PER_DECADE: usize = 8;

/// Points with `delta` below this many standard errors count as saturated.
pub const SATURATION_SIGMAS: f64 = 5.0;

/// Lower window cut in units of the Heisenberg time.
pub const HEISENBERG_FACTOR: f64 = 3.0;

/// Minimum usable points for a fit.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "T")]
    pub duration: f64,
    pub fp_mean: f64,
    pub fp_stderr: f64,
    pub delta: f64,
    /// Standard error of `delta`, including the oracle's own error.
    pub delta_stderr: f64,
}

/// `|δF|` against `T` for one protocol, order and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub protocol: Protocol,
    pub k: u32,
    pub dim: usize,
    pub oracle: f64,
    pub oracle_stderr: f64,
    pub points: Vec<CurvePoint>,
}

impl ErrorCurve {
    /// Builds a curve from finite-window estimates and the `T → ∞` value.
    pub fn from_estimates(protocol: Protocol, dim: usize, oracle: f64, oracle_stderr: f64, estimates: &[FpEstimate]) -> Result<Self> {
        if !(oracle > 0.0) {
            return Err(Error::InvalidParameter(format!("oracle must be positive, got {oracle}")));
        }
        let k = estimates.first().map_or(1, |e| e.k);
        let points: Vec<CurvePoint> = estimates
            .iter()
            .map(|e| {
                let ratio = e.mean / oracle;
                let delta_stderr = (e.stderr.powi(2) + (ratio * oracle_stderr).powi(2)).sqrt() / oracle;
                CurvePoint { duration: e.duration, fp_mean: e.mean, fp_stderr: e.stderr, delta: (ratio - 1.0).abs(), delta_stderr }
            })
            .collect();
        if points.windows(2).any(|w| !(w[0].duration < w[1].duration)) {
            return Err(Error::InvalidParameter("curve T values must be strictly increasing".into()));
        }
        Ok(Self { protocol, k, dim, oracle, oracle_stderr, points })
    }
}

/// Logarithmic grid from `t_min` to `t_max` inclusive with `per_decade`
/// points per decade.
pub fn log_grid(t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max >= t_min && t_max.is_finite()) || per_decade == 0 {
        return Err(Error::InvalidParameter(format!("invalid grid [{t_min}, {t_max}] with {per_decade} per decade")));
    }
    let (lo, hi) = (t_min.log10(), t_max.log10());
    let steps = ((hi - lo) * per_decade as f64).round() as usize;
    if steps == 0 {
        return Ok(vec![t_min]);
    }
    Ok((0..=steps).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / steps as f64)).collect())
}

/// Runs the finite-window estimator at every grid `T`, each with the seed
/// `derive_seed(config.seed, GridPoint, index)`. `config.window` is ignored.
pub fn error_curve<T: Real>(config: &ProtocolConfig<T>, grid: &[f64], oracle: f64, oracle_stderr: f64) -> Result<ErrorCurve> {
    config.validate()?;
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("T grid must be strictly increasing".into()));
    }
    let estimates = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let point = ProtocolConfig {
                window: TimeWindow::uniform(T::lit(t))?,
                seed: derive_seed(config.seed, Purpose::GridPoint, i as u64),
                ..config.clone()
            };
            fp_monte_carlo(&point)
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorCurve::from_estimates(config.protocol(), config.sequence.dim(), oracle, oracle_stderr, &estimates)
}

/// Weighted least-squares line through `(log T, log delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub slope_err: f64,
    pub intercept: f64,
    pub points: usize,
    pub t_min: f64,
    pub t_max: f64,
}

/// Weighted fit of `log y = a + b log x`; `sigma` are the errors of `y`.
pub fn log_log_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<PowerLawFit> {
    let usable = x.len();
    if usable < 2 {
        return Err(Error::InsufficientSignal { usable, required: 2 });
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
        let lx = xi.ln();
        let ly = yi.ln();
        // error of log y
        let sl = if si > 0.0 { si / yi } else { 1.0 };
        let w = 1.0 / (sl * sl);
        s += w;
        sx += w * lx;
        sy += w * ly;
        sxx += w * lx * lx;
        sxy += w * lx * ly;
    }
    let det = s * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::InsufficientSignal { usable, required: 2 });
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let fold = |f: fn(f64, f64) -> f64, init| x.iter().copied().fold(init, f);
    Ok(PowerLawFit {
        slope,
        slope_err: (s / det).sqrt(),
        intercept,
        points: usable,
        t_min: fold(f64::min, f64::INFINITY),
        t_max: fold(f64::max, 0.0),
    })
}

/// Fits `delta ∝ T^slope` over grid points in `[t_min, t_max]` whose
/// `delta` exceeds three standard errors.
pub fn fit_power_law(curve: &ErrorCurve, t_min: f64, t_max: f64) -> Result<PowerLawFit> {
    fit_selected(curve, |p| p.duration >= t_min && p.duration <= t_max && p.delta > 3.0 * p.delta_stderr)
}

/// Fit window chosen automatically: `T ≥ 3 · heisenberg_time` and
/// `delta ≥ 5` standard errors.
pub fn fit_power_law_auto(curve: &ErrorCurve, heisenberg_time: f64) -> Result<PowerLawFit> {
    let t_min = HEISENBERG_FACTOR * heisenberg_time;
    fit_selected(curve, |p| p.duration >= t_min && p.delta >= SATURATION_SIGMAS * p.delta_stderr)
}

fn fit_selected(curve: &ErrorCurve, keep: impl Fn(&CurvePoint) -> bool) -> Result<PowerLawFit> {
    let chosen: Vec<&CurvePoint> = curve.points.iter().filter(|p| keep(p) && p.delta > 0.0).collect();
    if chosen.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientSignal { usable: chosen.len(), required: MIN_FIT_POINTS });
    }
    let x: Vec<f64> = chosen.iter().map(|p| p.duration).collect();
    let y: Vec<f64> = chosen.iter().map(|p| p.delta).collect();
    let s: Vec<f64> = chosen.iter().map(|p| p.delta_stderr).collect();
    log_log_fit(&x, &y, &s)
}

/// First grid `T` at which `delta < gamma`.
pub fn t_star(curve: &ErrorCurve, gamma: f64) -> Result<f64> {
    curve.points.iter().find(|p| p.delta < gamma).map(|p| p.duration).ok_or(Error::NoCrossing { gamma })
}

/// `delta_2sp / delta_3sp` at one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub dim: usize,
    pub delta_2sp: f64,
    pub delta_3sp: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Either delta is within three standard errors of zero.
    pub noise_dominated: bool,
}

/// Ratio of the 2SP and 3SP errors at the same `T`, one row per pair of
/// points.
pub fn separation_ratio(pairs: &[(usize, CurvePoint, CurvePoint)]) -> Vec<RatioRow> {
    pairs
        .iter()
        .map(|&(dim, two, three)| {
            let ratio = two.delta / three.delta;
            let rel = ((two.delta_stderr / two.delta).powi(2) + (three.delta_stderr / three.delta).powi(2)).sqrt();
            RatioRow {
                dim,
                delta_2sp: two.delta,
                delta_3sp: three.delta,
                ratio,
                ratio_stderr: ratio * rel,
                noise_dominated: two.delta <= 3.0 * two.delta_stderr || three.delta <= 3.0 * three.delta_stderr,
            }
        })
        .collect()
}

/// Log-log slope of the ratio against `D`; fails if any row is noise
/// dominated.
pub fn ratio_slope(rows: &[RatioRow]) -> Result<PowerLawFit> {
    let usable = rows.iter().filter(|r| !r.noise_dominated).count();
    if usable != rows.len() || usable < 2 {
        return Err(Error::InsufficientSignal { usable, required: rows.len().max(2) });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.dim as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.ratio_stderr).collect();
    log_log_fit(&x, &y, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(points: &[(f64, f64)]) -> ErrorCurve {
        ErrorCurve {
            protocol: Protocol::TwoStep,
            k: 2,
            dim: 8,
            oracle: 1.0,
            oracle_stderr: 0.0,
            points: points
                .iter()
                .map(|&(t, d)| CurvePoint { duration: t, fp_mean: 1.0 + d, fp_stderr: 1e-3 * d, delta: d, delta_stderr: 1e-3 * d })
                .collect(),
        }
    }

    #[test]
    fn grid_density() {
        let g = log_grid(1.0, 1e3, 8).unwrap();
        assert_eq!(g.len(), 25);
        assert!((g[8] - 10.0).abs() < 1e-9);
        assert!((g[24] - 1e3).abs() < 1e-9);
        assert!(log_grid(0.0, 1.0, 8).is_err());
        assert_eq!(log_grid(5.0, 5.0, 8).unwrap(), vec![5.0]);
    }

    #[test]
    fn exact_power_law_slope() {
        let pts: Vec<(f64, f64)> = log_grid(10.0, 1e4, 4).unwrap().into_iter().map(|t| (t, 3.0 / (t * t))).collect();
        let fit = fit_power_law(&synthetic(&pts), 0.0, f64::INFINITY).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-6);
        assert!(fit.slope_err >= 0.0);
    }

    #[test]
    fn auto_window_drops_early_and_saturated_points() {
        let mut pts: Vec<(f64, f64)> = log_grid(1.0, 1e4, 4).unwrap().into_iter().map(|t| (t, 1.0 / (t * t))).collect();
        pts[0].1 = 50.0;
        let mut curve = synthetic(&pts);
        let last = curve.points.len() - 1;
        curve.points[last].delta_stderr = curve.points[last].delta;
        let fit = fit_power_law_auto(&curve, 1.0).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-6);
        assert!(fit.t_min >= 3.0);
        assert!(fit.t_max < 1e4);
    }

    #[test]
    fn noisy_curve_is_rejected() {
        let mut curve = synthetic(&[(1.0, 0.1), (10.0, 0.01), (100.0, 0.001), (1000.0, 0.0001)]);
        for p in &mut curve.points {
            p.delta_stderr = p.delta;
        }
        assert!(matches!(fit_power_law(&curve, 0.0, 1e9), Err(Error::InsufficientSignal { .. })));
    }

    #[test]
    fn threshold_time() {
        let curve = synthetic(&[(100.0, 0.5), (300.0, 0.2), (500.0, 0.05), (1000.0, 0.01)]);
        assert_eq!(t_star(&curve, 0.1).unwrap(), 500.0);
        assert!(matches!(t_star(&curve, 0.001), Err(Error::NoCrossing { .. })));
    }

    #[test]
    fn self_ratio_is_one() {
        let p = CurvePoint { duration: 10.0, fp_mean: 1.2, fp_stderr: 0.01, delta: 0.2, delta_stderr: 0.01 };
        let rows = separation_ratio(&[(16, p, p)]);
        assert!((rows[0].ratio - 1.0).abs() < 1e-15);
        assert!(!rows[0].noise_dominated);
        let noisy = CurvePoint { delta: 0.01, ..p };
        assert!(separation_ratio(&[(16, p, noisy)])[0].noise_dominated);
    }

    #[test]
    fn ratio_slope_linear() {
        let rows: Vec<RatioRow> = [16usize, 32, 64]
            .iter()
            .map(|&d| RatioRow { dim: d, delta_2sp: d as f64, delta_3sp: 1.0, ratio: d as f64 * 0.5, ratio_stderr: 0.01, noise_dominated: false })
            .collect();
        assert!((ratio_slope(&rows).unwrap().slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn curve_validation() {
        let e = |t: f64| FpEstimate { k: 1, mean: 1.1, stderr: 0.01, samples: 10, seed: 0, duration: t };
        assert!(ErrorCurve::from_estimates(Protocol::TwoStep, 4, 1.0, 0.0, &[e(2.0), e(1.0)]).is_err());
        assert!(ErrorCurve::from_estimates(Protocol::TwoStep, 4, 0.0, 0.0, &[e(1.0)]).is_err());
        let c = ErrorCurve::from_estimates(Protocol::TwoStep, 4, 1.0, 0.0, &[e(1.0), e(2.0)]).unwrap();
        assert!((c.points[0].delta - 0.1).abs() < 1e-12);
    }
}
