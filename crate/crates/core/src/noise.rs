//! Preparation noise, memory loss and the photon-detection cascade.
//!
//! Every stochastic step takes an explicit RNG; nothing here holds global
//! state. Estimators are pure functions of a [`CountsHistogram`].

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::fitting::DampedCosineFit;
use crate::fock::{ModeLabel, Spin};

/// Classical limit for the visibility of a two-quantum NOON fringe.
pub const CLASSICAL_NOON_BOUND: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("{name} = {value} is not a probability")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("{name} = {value} must be positive")]
    NotPositive { name: &'static str, value: f64 },
    #[error("storage time {0} s is negative")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("histogram holds no trials")]
    NoTrials,
    #[error("single-detector click product is zero; g2 is undefined")]
    UndefinedG2,
    #[error("reference coincidence rate must be positive, got {0}")]
    ZeroReference(f64),
    #[error("fit did not converge")]
    FitNotConverged,
    #[error("fit offset must be positive, got {0}")]
    NonPositiveOffset(f64),
}

/// Shape of the memory retrieval envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayEnvelope {
    /// `exp(-(t/τ)²)`, motional (Doppler) dephasing.
    Gaussian,
    /// `exp(-t/τ)`.
    Exponential,
}

impl fmt::Display for DecayEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecayEnvelope::Gaussian => f.write_str("gaussian"),
            DecayEnvelope::Exponential => f.write_str("exponential"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Ground-to-Rydberg transfer efficiency.
    pub eta_r: f64,
    /// Rydberg-to-ground transfer efficiency.
    pub eta_s: f64,
    /// Chance of a spurious second excitation in an S1 preparation.
    pub p2_s1: f64,
    /// Same for S2.
    pub p2_s2: f64,
    /// 1/e retrieval time of the memory, seconds.
    pub tau_memory: f64,
    /// 1/e damping time of Raman oscillation contrast, seconds.
    pub tau_raman: f64,
    pub envelope: DecayEnvelope,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            eta_r: 0.85,
            eta_s: 0.65,
            p2_s1: 0.023,
            p2_s2: 0.031,
            tau_memory: 29e-6,
            tau_raman: 5e-6,
            envelope: DecayEnvelope::Gaussian,
        }
    }
}

impl NoiseParams {
    /// Perfect preparation, no contamination, no decay.
    pub fn ideal() -> Self {
        NoiseParams {
            eta_r: 1.0,
            eta_s: 1.0,
            p2_s1: 0.0,
            p2_s2: 0.0,
            tau_memory: f64::INFINITY,
            tau_raman: f64::INFINITY,
            envelope: DecayEnvelope::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        probability("eta_r", self.eta_r)?;
        probability("eta_s", self.eta_s)?;
        probability("p2_s1", self.p2_s1)?;
        probability("p2_s2", self.p2_s2)?;
        positive("tau_memory", self.tau_memory)?;
        positive("tau_raman", self.tau_raman)?;
        Ok(())
    }

    pub fn p2(&self, spin: Spin) -> f64 {
        match spin {
            Spin::S1 => self.p2_s1,
            Spin::S2 => self.p2_s2,
        }
    }

    /// Overall single-excitation preparation efficiency η_r·η_s.
    pub fn preparation_efficiency(&self) -> f64 {
        self.eta_r * self.eta_s
    }

    /// Probability that a stored excitation is still retrievable after `t` seconds.
    pub fn survival(&self, t: f64) -> f64 {
        if self.tau_memory.is_infinite() {
            return 1.0;
        }
        let x = t / self.tau_memory;
        match self.envelope {
            DecayEnvelope::Gaussian => (-x * x).exp(),
            DecayEnvelope::Exponential => (-x).exp(),
        }
    }

    /// Probability a Raman pulse of length `t` seconds acts coherently.
    pub fn raman_coherence(&self, t: f64) -> f64 {
        if self.tau_raman.is_infinite() {
            1.0
        } else {
            (-t / self.tau_raman).exp()
        }
    }
}

fn probability(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NoiseError::NotAProbability { name, value })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(NoiseError::NotPositive { name, value })
    }
}

/// How read-out crosstalk between the two channels acts on a photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrosstalkModel {
    /// The photon is emitted into the other spin's read window instead of its own.
    Misroute,
    /// A detected photon also clicks a detector of the other window.
    Duplicate,
}

impl fmt::Display for CrosstalkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrosstalkModel::Misroute => f.write_str("misroute"),
            CrosstalkModel::Duplicate => f.write_str("duplicate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    /// Overall conversion-and-detection efficiency for an S1 excitation.
    pub eta_det_s1: f64,
    /// Same for S2.
    pub eta_det_s2: f64,
    /// Width of the Gaussian collection roll-off in wave-vector grid units.
    /// `f64::INFINITY` collects every mode equally.
    pub sigma_k: f64,
    /// Dark click probability per detector per read window.
    pub p_dark: f64,
    pub p_crosstalk: f64,
    pub crosstalk: CrosstalkModel,
    /// Route each read window 50:50 onto two detectors.
    pub split_same_mode: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            eta_det_s1: 0.003,
            eta_det_s2: 0.012,
            sigma_k: f64::INFINITY,
            p_dark: 1e-4,
            p_crosstalk: 0.01,
            crosstalk: CrosstalkModel::Misroute,
            split_same_mode: false,
        }
    }
}

impl DetectionParams {
    /// Unit efficiency, no dark counts or crosstalk. Geometry (`sigma_k`,
    /// detector split) is kept from `self`.
    pub fn idealized(&self) -> Self {
        DetectionParams {
            eta_det_s1: 1.0,
            eta_det_s2: 1.0,
            p_dark: 0.0,
            p_crosstalk: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        probability("eta_det_s1", self.eta_det_s1)?;
        probability("eta_det_s2", self.eta_det_s2)?;
        probability("p_dark", self.p_dark)?;
        probability("p_crosstalk", self.p_crosstalk)?;
        positive("sigma_k", self.sigma_k)?;
        Ok(())
    }

    pub fn eta_det(&self, spin: Spin) -> f64 {
        match spin {
            Spin::S1 => self.eta_det_s1,
            Spin::S2 => self.eta_det_s2,
        }
    }

    /// Collection efficiency of a photon from wave-vector index `kidx`.
    pub fn collection(&self, kidx: i32) -> f64 {
        if self.sigma_k.is_infinite() || kidx == 0 {
            return 1.0;
        }
        let k = kidx as f64;
        (-(k * k) / (2.0 * self.sigma_k * self.sigma_k)).exp()
    }

    /// Probability that one quantum in `mode` produces a detected photon.
    pub fn detection_probability(&self, mode: ModeLabel) -> f64 {
        self.eta_det(mode.spin) * self.collection(mode.kidx)
    }

    fn detectors_per_window(&self) -> usize {
        if self.split_same_mode {
            2
        } else {
            1
        }
    }
}

/// Number of excitations actually left in `target` after one preparation attempt.
///
/// The attempt succeeds with probability η_r·η_s. On success a spurious second
/// excitation is attempted with probability `p2`; it passes the same transfer
/// chain and so survives with η_r·η_s as well. Loss of either excitation acts
/// like linear loss, which leaves g² ≈ 2·p2.
pub fn prepare_excitation<R: Rng + ?Sized>(target: ModeLabel, params: &NoiseParams, rng: &mut R) -> u8 {
    let eta = params.preparation_efficiency();
    if rng.random::<f64>() >= eta {
        return 0;
    }
    let p2 = params.p2(target.spin);
    if p2 > 0.0 && rng.random::<f64>() < p2 && rng.random::<f64>() < eta {
        2
    } else {
        1
    }
}

/// Binomially thins `count` stored excitations by the survival envelope.
/// Lost excitations leave the system; they never appear in another mode.
pub fn apply_memory_decay<R: Rng + ?Sized>(
    count: u8,
    storage_time: f64,
    params: &NoiseParams,
    rng: &mut R,
) -> Result<u8, NoiseError> {
    if storage_time < 0.0 {
        return Err(NoiseError::NegativeTime(storage_time));
    }
    let p = params.survival(storage_time);
    if p >= 1.0 {
        return Ok(count);
    }
    Ok((0..count).filter(|_| rng.random::<f64>() < p).count() as u8)
}

/// Detector clicks from one trial, indexed `[window][detector]`; window 0 is
/// the S1 read window. Detectors are not number resolving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TrialOutcome {
    pub clicks: [[bool; 2]; 2],
}

impl TrialOutcome {
    pub fn counts(&self, spin: Spin) -> u8 {
        let w = self.clicks[spin.index()];
        w[0] as u8 + w[1] as u8
    }

    pub fn counts_s1(&self) -> u8 {
        self.counts(Spin::S1)
    }

    pub fn counts_s2(&self) -> u8 {
        self.counts(Spin::S2)
    }
}

/// Read windows opened in a trial, indexed by [`Spin::index`].
pub type ReadWindows = [bool; 2];

/// Detection cascade for one Born-sampled occupation.
///
/// Each quantum in a read spin is detected with
/// `η_det(spin)·exp(-k²/2σ_k²)`. Crosstalk follows `params.crosstalk`.
/// With `split_same_mode` each photon lands on one of two detectors with equal
/// probability. Every open detector then adds an independent dark click.
pub fn sample_detection<R: Rng + ?Sized>(
    occupation: &[u8],
    modes: &[ModeLabel],
    windows: ReadWindows,
    params: &DetectionParams,
    rng: &mut R,
) -> TrialOutcome {
    let mut out = TrialOutcome::default();
    let split = params.split_same_mode;
    let pick_detector = |rng: &mut R| -> usize {
        if split {
            (rng.random::<u32>() & 1) as usize
        } else {
            0
        }
    };
    for (&n, &mode) in occupation.iter().zip(modes) {
        let own = mode.spin.index();
        if n == 0 || !windows[own] {
            continue;
        }
        let p = params.detection_probability(mode);
        let other = mode.spin.other().index();
        for _ in 0..n {
            if rng.random::<f64>() >= p {
                continue;
            }
            match params.crosstalk {
                CrosstalkModel::Misroute => {
                    let w = if params.p_crosstalk > 0.0 && rng.random::<f64>() < params.p_crosstalk {
                        other
                    } else {
                        own
                    };
                    if windows[w] {
                        let d = pick_detector(rng);
                        out.clicks[w][d] = true;
                    }
                }
                CrosstalkModel::Duplicate => {
                    let d = pick_detector(rng);
                    out.clicks[own][d] = true;
                    if windows[other]
                        && params.p_crosstalk > 0.0
                        && rng.random::<f64>() < params.p_crosstalk
                    {
                        let d = pick_detector(rng);
                        out.clicks[other][d] = true;
                    }
                }
            }
        }
    }
    if params.p_dark > 0.0 {
        for (w, open) in windows.iter().enumerate() {
            if !open {
                continue;
            }
            for d in 0..params.detectors_per_window() {
                if rng.random::<f64>() < params.p_dark {
                    out.clicks[w][d] = true;
                }
            }
        }
    }
    out
}

/// Trial tally keyed by the click pattern `(n1, n2)`, plus per-detector click
/// totals needed by the g² estimator.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountsHistogram {
    table: [[u64; 3]; 3],
    detector_clicks: [[u64; 2]; 2],
    total_trials: u64,
}

impl CountsHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, outcome: &TrialOutcome) {
        self.table[outcome.counts_s1() as usize][outcome.counts_s2() as usize] += 1;
        for w in 0..2 {
            for d in 0..2 {
                self.detector_clicks[w][d] += outcome.clicks[w][d] as u64;
            }
        }
        self.total_trials += 1;
    }

    pub fn merge(&mut self, other: &CountsHistogram) {
        for i in 0..3 {
            for j in 0..3 {
                self.table[i][j] += other.table[i][j];
            }
        }
        for w in 0..2 {
            for d in 0..2 {
                self.detector_clicks[w][d] += other.detector_clicks[w][d];
            }
        }
        self.total_trials += other.total_trials;
    }

    pub fn total_trials(&self) -> u64 {
        self.total_trials
    }

    /// Trials with exactly `n1` S1-window clicks and `n2` S2-window clicks.
    pub fn count(&self, n1: u8, n2: u8) -> u64 {
        self.table
            .get(n1 as usize)
            .and_then(|r| r.get(n2 as usize))
            .copied()
            .unwrap_or(0)
    }

    /// Non-empty `((n1, n2), trials)` entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = ((u8, u8), u64)> + '_ {
        (0..3u8)
            .flat_map(|i| (0..3u8).map(move |j| (i, j)))
            .map(|(i, j)| ((i, j), self.table[i as usize][j as usize]))
            .filter(|(_, c)| *c > 0)
    }

    pub fn detector_clicks(&self, window: Spin, detector: usize) -> u64 {
        self.detector_clicks[window.index()][detector]
    }

    /// Trials with at least one click in `window`.
    pub fn singles(&self, window: Spin) -> u64 {
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|&(i, j)| match window {
                Spin::S1 => i > 0,
                Spin::S2 => j > 0,
            })
            .map(|(i, j)| self.table[i][j])
            .sum()
    }

    /// `{1,1}`: at least one click in each read window.
    pub fn coincidences_11(&self) -> u64 {
        (1..3)
            .flat_map(|i| (1..3).map(move |j| self.table[i][j]))
            .sum()
    }

    /// `{0,2}`: both S2 detectors, no S1 click.
    pub fn coincidences_02(&self) -> u64 {
        self.table[0][2]
    }

    /// `{2,0}`: both S1 detectors, no S2 click.
    pub fn coincidences_20(&self) -> u64 {
        self.table[2][0]
    }
}

/// Pulsed autocorrelation `p_c / (p_A·p_B)` of one read window split onto two
/// detectors.
pub fn estimate_g2(hist: &CountsHistogram, window: Spin) -> Result<f64, EstimatorError> {
    if hist.total_trials == 0 {
        return Err(EstimatorError::NoTrials);
    }
    let n = hist.total_trials as f64;
    let pa = hist.detector_clicks(window, 0) as f64 / n;
    let pb = hist.detector_clicks(window, 1) as f64 / n;
    if pa * pb == 0.0 {
        return Err(EstimatorError::UndefinedG2);
    }
    let both: u64 = match window {
        Spin::S1 => hist.table[2].iter().sum(),
        Spin::S2 => hist.table.iter().map(|r| r[2]).sum(),
    };
    Ok((both as f64 / n) / (pa * pb))
}

/// `V = 1 - 2·C_dip/C_ref`.
pub fn hom_visibility(c_dip: f64, c_ref: f64) -> Result<f64, EstimatorError> {
    if !(c_ref > 0.0) {
        return Err(EstimatorError::ZeroReference(c_ref));
    }
    Ok(1.0 - 2.0 * c_dip / c_ref)
}

/// Visibility of a HOM dip whose baseline was suppressed by a factor of two
/// (half the distinguishable pairs escape collection), corrected back to the
/// fully collected baseline: `V_cor = (1 + V_raw)/2`.
pub fn corrected_dip_visibility(raw: f64) -> f64 {
    (1.0 + raw) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyVisibility {
    pub value: f64,
    pub above_classical_bound: bool,
}

/// Fringe visibility `A/B` from a pinned-decay fit, flagged against the
/// classical NOON bound of 1/3.
pub fn ramsey_visibility(fit: &DampedCosineFit) -> Result<RamseyVisibility, EstimatorError> {
    if !fit.converged {
        return Err(EstimatorError::FitNotConverged);
    }
    if !(fit.offset > 0.0) {
        return Err(EstimatorError::NonPositiveOffset(fit.offset));
    }
    let value = fit.amplitude / fit.offset;
    Ok(RamseyVisibility {
        value,
        above_classical_bound: value > CLASSICAL_NOON_BOUND,
    })
}
