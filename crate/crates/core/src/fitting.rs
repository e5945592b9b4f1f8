//! Damped-cosine least squares for oscillating count series.
//!
//! Model: `y(t) = B + A·exp(-t/τ)·cos(2πft + φ)`. The decay can be pinned
//! (`τ = ∞` gives a pure cosine). Minimisation is damped Gauss-Newton with a
//! multiplicative trust parameter. Internally time is measured in units of the
//! series span and `y` in units of its largest magnitude; reported values are
//! in the caller's units.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

const MIN_POINTS: usize = 8;
const PAD_FACTOR: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("series needs at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("series value at index {0} is not finite")]
    NonFinite(usize),
    #[error("series is constant; no dominant frequency")]
    Constant,
    #[error("fit is not converged")]
    NotConverged,
    #[error("offset must be positive, got {0}")]
    NonPositiveOffset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    /// Seconds.
    pub t: f64,
    pub y: f64,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    points: Vec<SeriesPoint>,
}

impl Series {
    pub fn new(points: Vec<SeriesPoint>) -> Result<Series, FitError> {
        if points.len() < MIN_POINTS {
            return Err(FitError::TooFewPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.t.is_finite() || !p.y.is_finite() || p.weight.is_some_and(|w| !w.is_finite()) {
                return Err(FitError::NonFinite(i));
            }
            if i > 0 && p.t <= points[i - 1].t {
                return Err(FitError::NotIncreasing(i));
            }
        }
        Ok(Series { points })
    }

    /// Unweighted series from parallel slices.
    pub fn from_xy(t: &[f64], y: &[f64]) -> Result<Series, FitError> {
        Series::new(
            t.iter()
                .zip(y)
                .map(|(&t, &y)| SeriesPoint { t, y, weight: None })
                .collect(),
        )
    }

    pub fn points(&self) -> &[SeriesPoint] {
        &self.points
    }

    pub fn span(&self) -> f64 {
        self.points[self.points.len() - 1].t - self.points[0].t
    }

    /// Nyquist frequency of the mean sample spacing.
    pub fn nyquist(&self) -> f64 {
        let dt = self.span() / (self.points.len() - 1) as f64;
        0.5 / dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `w = 1/max(y, 1)`, appropriate for raw counts.
    Poisson,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Fix τ (seconds); `Some(f64::INFINITY)` fits a pure cosine.
    pub pin_tau: Option<f64>,
    pub max_iter: usize,
    /// Relative cost decrease below which an accepted step ends the fit.
    pub tol: f64,
    /// Used for points without an explicit weight.
    pub weighting: Weighting,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            pin_tau: None,
            max_iter: 200,
            tol: 1e-10,
            weighting: Weighting::Poisson,
        }
    }
}

impl FitOptions {
    pub fn pure_cosine() -> Self {
        FitOptions {
            pin_tau: Some(f64::INFINITY),
            ..FitOptions::default()
        }
    }
}

/// Fitted parameters of `B + A·exp(-t/τ)·cos(2πft + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedCosineFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// Radians in (-π, π].
    pub phase: f64,
    /// Seconds; infinite for an undamped fit.
    pub tau: f64,
    /// sqrt of the weighted residual sum of squares.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Approximate variances of (B, A, f, φ, τ) from (JᵀWJ)⁻¹ scaled by the
    /// reduced chi-square. Zero for pinned parameters.
    pub covariance_diag: [f64; 5],
}

impl DampedCosineFit {
    pub fn value_at(&self, t: f64) -> f64 {
        let params = [self.offset, self.amplitude, self.frequency, self.phase, 1.0 / self.tau];
        model_value(&params, t)
    }
}

/// Model value at `t` for parameters `[B, A, f, φ, γ]` with `γ = 1/τ`.
pub fn model_value(p: &[f64; 5], t: f64) -> f64 {
    p[0] + p[1] * (-p[4] * t).exp() * (2.0 * PI * p[2] * t + p[3]).cos()
}

/// Analytic gradient of [`model_value`] with respect to `[B, A, f, φ, γ]`.
pub fn model_gradient(p: &[f64; 5], t: f64) -> [f64; 5] {
    let env = (-p[4] * t).exp();
    let arg = 2.0 * PI * p[2] * t + p[3];
    let (s, c) = arg.sin_cos();
    [
        1.0,
        env * c,
        -p[1] * env * s * 2.0 * PI * t,
        -p[1] * env * s,
        -t * p[1] * env * c,
    ]
}

/// Starting point `[B, A, f, φ, γ]` from moments and a zero-padded DFT peak.
pub fn initial_guess(series: &Series) -> Result<[f64; 5], FitError> {
    let pts = series.points();
    let n = pts.len() as f64;
    let mean = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    if hi - lo <= 0.0 {
        return Err(FitError::Constant);
    }
    let nyq = series.nyquist();
    let bins = PAD_FACTOR * pts.len();
    let mut best = (0.0, 0.0, Complex64::new(0.0, 0.0));
    for k in 1..=bins {
        let f = nyq * k as f64 / bins as f64;
        let z: Complex64 = pts
            .iter()
            .map(|p| (p.y - mean) * Complex64::from_polar(1.0, -2.0 * PI * f * p.t))
            .sum();
        let mag = z.norm();
        if mag > best.0 {
            best = (mag, f, z);
        }
    }
    if best.0 == 0.0 {
        return Err(FitError::Constant);
    }
    Ok([mean, (hi - lo) / 2.0, best.1, best.2.arg(), 1.0 / series.span()])
}

pub fn fit_damped_cosine(series: &Series, options: &FitOptions) -> Result<DampedCosineFit, FitError> {
    let start = initial_guess(series)?;
    Ok(run_fit(series, start, options))
}

/// Restarts the optimiser from a previous result.
pub fn refit_damped_cosine(
    series: &Series,
    start: &DampedCosineFit,
    options: &FitOptions,
) -> DampedCosineFit {
    let p = [start.offset, start.amplitude, start.frequency, start.phase, 1.0 / start.tau];
    run_fit(series, p, options)
}

/// `V(t) = A·exp(-t/τ)/B`.
pub fn visibility_from_fit(fit: &DampedCosineFit, at_t: f64) -> Result<f64, FitError> {
    if !fit.converged {
        return Err(FitError::NotConverged);
    }
    if !(fit.offset > 0.0) {
        return Err(FitError::NonPositiveOffset(fit.offset));
    }
    let env = if fit.tau.is_infinite() { 1.0 } else { (-at_t / fit.tau).exp() };
    Ok(fit.amplitude * env / fit.offset)
}

struct Problem {
    t: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    nyquist: f64,
    free_decay: bool,
}

impl Problem {
    fn nparams(&self) -> usize {
        if self.free_decay {
            5
        } else {
            4
        }
    }

    fn cost(&self, p: &[f64; 5]) -> f64 {
        self.t
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| {
                let r = y - model_value(p, t);
                w * r * r
            })
            .sum()
    }

    // Returns JᵀWJ and JᵀWr over the free parameters.
    fn normal_equations(&self, p: &[f64; 5]) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.nparams();
        let mut h = DMatrix::zeros(m, m);
        let mut g = DVector::zeros(m);
        for ((&t, &y), &w) in self.t.iter().zip(&self.y).zip(&self.w) {
            let grad = model_gradient(p, t);
            let r = y - model_value(p, t);
            for i in 0..m {
                g[i] += w * grad[i] * r;
                for j in 0..=i {
                    h[(i, j)] += w * grad[i] * grad[j];
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                h[(j, i)] = h[(i, j)];
            }
        }
        (h, g)
    }

    fn normalise(&self, p: &mut [f64; 5]) {
        if p[1] < 0.0 {
            p[1] = -p[1];
            p[3] += PI;
        }
        p[2] = p[2].clamp(1e-9 * self.nyquist, self.nyquist);
        p[3] = wrap_phase(p[3]);
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

fn run_fit(series: &Series, start: [f64; 5], options: &FitOptions) -> DampedCosineFit {
    let pts = series.points();
    let tscale = series.span();
    let yscale = pts.iter().map(|p| p.y.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let weights: Vec<f64> = pts
        .iter()
        .map(|p| {
            p.weight.unwrap_or(match options.weighting {
                Weighting::Poisson => 1.0 / p.y.max(1.0),
                Weighting::Uniform => 1.0,
            })
        })
        .collect();
    let wmean = weights.iter().sum::<f64>() / weights.len() as f64;
    let pinned_gamma = options.pin_tau.map(|tau| if tau.is_infinite() { 0.0 } else { 1.0 / tau });
    let problem = Problem {
        t: pts.iter().map(|p| p.t / tscale).collect(),
        y: pts.iter().map(|p| p.y / yscale).collect(),
        w: weights.iter().map(|w| w / wmean).collect(),
        nyquist: series.nyquist() * tscale,
        free_decay: pinned_gamma.is_none(),
    };

    let mut p = [
        start[0] / yscale,
        start[1] / yscale,
        start[2] * tscale,
        start[3],
        pinned_gamma.unwrap_or(start[4]) * tscale,
    ];
    problem.normalise(&mut p);
    let m = problem.nparams();
    let mut cost = problem.cost(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let (h, g) = problem.normal_equations(&p);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = h.clone();
            for i in 0..m {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..m {
                trial[i] += step[i];
            }
            problem.normalise(&mut trial);
            let trial_cost = problem.cost(&trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let decrease = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if decrease < options.tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // No downhill step at any damping: stationary up to round-off.
            let (h, g) = problem.normal_equations(&p);
            let scaled = (0..m)
                .map(|i| g[i].abs() / (h[(i, i)] * cost.max(f64::MIN_POSITIVE)).sqrt().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            converged = scaled < 1e-6 || cost < 1e-28;
            break;
        }
    }

    let (h, _) = problem.normal_equations(&p);
    let dof = (pts.len() as f64 - m as f64).max(1.0);
    let chi2_red = cost / dof;
    let mut var = [0.0; 5];
    if let Some(inv) = h.try_inverse() {
        for i in 0..m {
            var[i] = inv[(i, i)].max(0.0) * chi2_red;
        }
    }
    let gamma = p[4] / tscale;
    let tau = if gamma == 0.0 { f64::INFINITY } else { 1.0 / gamma };
    let var_gamma = var[4] / (tscale * tscale);
    DampedCosineFit {
        offset: p[0] * yscale,
        amplitude: p[1] * yscale,
        frequency: p[2] / tscale,
        phase: p[3],
        tau,
        residual_norm: (cost * wmean).sqrt() * yscale,
        converged,
        iterations,
        covariance_diag: [
            var[0] * yscale * yscale,
            var[1] * yscale * yscale,
            var[2] / (tscale * tscale),
            var[3],
            if problem.free_decay { var_gamma / gamma.powi(4) } else { 0.0 },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sampled(n: usize, dt: f64, mut f: impl FnMut(f64) -> f64) -> Series {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let y: Vec<f64> = t.iter().map(|&t| f(t)).collect();
        Series::from_xy(&t, &y).unwrap()
    }

    #[test]
    fn series_validation() {
        assert_eq!(Series::from_xy(&[0.0; 3], &[1.0; 3]), Err(FitError::TooFewPoints(3)));
        let t = [0.0, 1.0, 2.0, 2.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(Series::from_xy(&t, &[1.0; 8]), Err(FitError::NotIncreasing(3)));
    }

    #[test]
    fn guess_finds_dominant_frequency() {
        let s = sampled(81, 50e-9, |t| 3.0 + (2.0 * PI * 1e6 * t).cos());
        let g = initial_guess(&s).unwrap();
        assert!((g[2] - 1e6).abs() < 0.1e6, "f = {}", g[2]);

        let constant = sampled(20, 1e-7, |_| 4.0);
        assert_eq!(initial_guess(&constant), Err(FitError::Constant));

        let two = sampled(128, 40e-9, |t| {
            10.0 + 0.6 * (2.0 * PI * 0.7e6 * t).cos() + 2.0 * (2.0 * PI * 3.1e6 * t + 0.4).cos()
        });
        let g = initial_guess(&two).unwrap();
        assert!((g[2] - 3.1e6).abs() < 0.1e6, "f = {}", g[2]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let p = [
                rng.random_range(-5.0..5.0),
                rng.random_range(0.1..5.0),
                rng.random_range(0.1..3.0),
                rng.random_range(-PI..PI),
                rng.random_range(0.0..2.0),
            ];
            let t = rng.random_range(0.0..2.0);
            let an = model_gradient(&p, t);
            for k in 0..5 {
                let h = 1e-6 * p[k].abs().max(1.0);
                let (mut hi, mut lo) = (p, p);
                hi[k] += h;
                lo[k] -= h;
                let fd = (model_value(&hi, t) - model_value(&lo, t)) / (2.0 * h);
                let scale = an[k].abs().max(1e-3);
                assert!((fd - an[k]).abs() / scale < 1e-6, "param {k}: {fd} vs {}", an[k]);
            }
        }
    }

    fn rabi_truth(t: f64) -> f64 {
        100.0 + 80.0 * (-t / 5e-6).exp() * (2.0 * PI * 1.626e6 * t).cos()
    }

    #[test]
    fn noiseless_damped_cosine_is_recovered() {
        let s = sampled(64, 1.2e-6 / 63.0, rabi_truth);
        let fit = fit_damped_cosine(&s, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.offset, 100.0) < 1e-3);
        assert!(rel(fit.amplitude, 80.0) < 1e-3);
        assert!(rel(fit.frequency, 1.626e6) < 1e-3);
        assert!(rel(fit.tau, 5e-6) < 1e-3);
        assert!(fit.phase.abs() < 1e-3);
    }

    #[test]
    fn refit_from_optimum_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sampled(64, 20e-9, |t| rabi_truth(t) + rng.random_range(-3.0..3.0));
        let opts = FitOptions::default();
        let a = fit_damped_cosine(&s, &opts).unwrap();
        let b = refit_damped_cosine(&s, &a, &opts);
        assert!(a.converged && b.converged);
        assert!(((a.frequency - b.frequency) / a.frequency).abs() < 1e-8);
        assert!(((a.amplitude - b.amplitude) / a.amplitude).abs() < 1e-8);
        assert!((a.phase - b.phase).abs() < 1e-8);
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base: Vec<f64> = (0..48).map(|i| rabi_truth(i as f64 * 25e-9) + rng.random_range(-4.0..4.0)).collect();
        let t: Vec<f64> = (0..48).map(|i| i as f64 * 25e-9).collect();
        let opts = FitOptions {
            weighting: Weighting::Uniform,
            ..FitOptions::default()
        };
        let a = fit_damped_cosine(&Series::from_xy(&t, &base).unwrap(), &opts).unwrap();
        let scaled: Vec<f64> = base.iter().map(|y| y * 7.5).collect();
        let b = fit_damped_cosine(&Series::from_xy(&t, &scaled).unwrap(), &opts).unwrap();
        assert!((b.amplitude / a.amplitude - 7.5).abs() < 1e-9);
        assert!((b.offset / a.offset - 7.5).abs() < 1e-9);
        assert!(((b.frequency - a.frequency) / a.frequency).abs() < 1e-9);
        assert!((b.phase - a.phase).abs() < 1e-9);
        assert!(((b.tau - a.tau) / a.tau).abs() < 1e-9);
    }

    #[test]
    fn time_shift_moves_only_the_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f0 = 1.401e6;
        let n = 40;
        let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.02)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.8 * (2.0 * PI * f0 * i as f64 * 30e-9 + 0.3).cos() + noise[i])
            .collect();
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 30e-9).collect();
        let shift = 800e-9;
        let t2: Vec<f64> = t.iter().map(|t| t + shift).collect();
        let opts = FitOptions {
            weighting: Weighting::Uniform,
            ..FitOptions::pure_cosine()
        };
        let a = fit_damped_cosine(&Series::from_xy(&t, &y).unwrap(), &opts).unwrap();
        let b = fit_damped_cosine(&Series::from_xy(&t2, &y).unwrap(), &opts).unwrap();
        assert!(((a.frequency - b.frequency) / a.frequency).abs() < 1e-6);
        assert!(((a.amplitude - b.amplitude) / a.amplitude).abs() < 1e-6);
        assert!((a.offset - b.offset).abs() < 1e-6);
        let expected = wrap_phase(a.phase - 2.0 * PI * a.frequency * shift);
        assert!(wrap_phase(b.phase - expected).abs() < 1e-6);
    }

    #[test]
    fn visibility_from_fit_cases() {
        let mut fit = DampedCosineFit {
            offset: 2.0,
            amplitude: 2.0,
            frequency: 1e6,
            phase: 0.0,
            tau: f64::INFINITY,
            residual_norm: 0.0,
            converged: true,
            iterations: 3,
            covariance_diag: [0.0; 5],
        };
        assert_eq!(visibility_from_fit(&fit, 1e-6), Ok(1.0));
        fit.amplitude = 0.0;
        assert_eq!(visibility_from_fit(&fit, 0.0), Ok(0.0));
        fit.amplitude = 1.0;
        fit.tau = 1e-6;
        assert!((visibility_from_fit(&fit, 1e-6).unwrap() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        fit.offset = 0.0;
        assert_eq!(visibility_from_fit(&fit, 0.0), Err(FitError::NonPositiveOffset(0.0)));
        fit.offset = 1.0;
        fit.converged = false;
        assert_eq!(visibility_from_fit(&fit, 0.0), Err(FitError::NotConverged));
    }
}
