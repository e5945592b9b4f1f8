//! Few-excitation bosonic Fock states over wave-vector labelled collective modes.
//!
//! A collective excitation of the ensemble is treated as one quantum of an
//! ideal bosonic mode. Each mode is identified by its internal spin state and
//! an integer wave-vector index measured in units of one Raman momentum kick.
//! States are stored densely over every occupation vector whose total does not
//! exceed a cutoff; all evolutions here conserve the excitation number.
//!
//! Beam-splitter phase convention: the Raman coupling maps
//! `a† -> cos(θ/2) a† + i sin(θ/2) b†` and `b† -> i sin(θ/2) a† + cos(θ/2) b†`
//! with `θ = Ωt`. Other conventions differ only by mode-local phases, which
//! leave every detection probability unchanged.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

const POPULATED_EPS: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FockError {
    #[error("mode list is empty")]
    NoModes,
    #[error("duplicate mode label {0}")]
    DuplicateMode(ModeLabel),
    #[error("mode {0} is not part of the basis")]
    UnknownMode(ModeLabel),
    #[error("beam splitter needs two distinct modes, got {0} twice")]
    SameMode(ModeLabel),
    #[error("occupation {0:?} is not in the basis")]
    OccupationNotInBasis(Vec<u8>),
    #[error("mode {mode} is populated but its Raman partner {partner} is outside the grid")]
    PartnerOutsideGrid { mode: ModeLabel, partner: ModeLabel },
    #[error("state norm {0} deviates from 1")]
    NotNormalized(f64),
    #[error("expected {expected} amplitudes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid Raman pulse: {0}")]
    InvalidPulse(&'static str),
}

/// Internal ground state holding a collective excitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    S1,
    S2,
}

impl Spin {
    pub fn other(self) -> Spin {
        match self {
            Spin::S1 => Spin::S2,
            Spin::S2 => Spin::S1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Spin::S1 => 0,
            Spin::S2 => 1,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spin::S1 => f.write_str("s1"),
            Spin::S2 => f.write_str("s2"),
        }
    }
}

/// One collective mode: spin state plus wave-vector index in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel {
    pub spin: Spin,
    pub kidx: i32,
}

impl ModeLabel {
    pub const fn new(spin: Spin, kidx: i32) -> Self {
        ModeLabel { spin, kidx }
    }

    pub const fn s1(kidx: i32) -> Self {
        ModeLabel::new(Spin::S1, kidx)
    }

    pub const fn s2(kidx: i32) -> Self {
        ModeLabel::new(Spin::S2, kidx)
    }

    /// Mode this one is coupled to by a Raman pulse imparting `kshift`.
    pub fn raman_partner(self, kshift: i32) -> ModeLabel {
        match self.spin {
            Spin::S1 => ModeLabel::s2(self.kidx + kshift),
            Spin::S2 => ModeLabel::s1(self.kidx - kshift),
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},k={})", self.spin, self.kidx)
    }
}

/// Canonically ordered occupation-number basis.
///
/// States are grouped by total excitation number (ascending); inside a group
/// they are sorted in descending lexicographic order, so two modes with a
/// cutoff of two give `00, 10, 01, 20, 11, 02`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    modes: Vec<ModeLabel>,
    states: Vec<Vec<u8>>,
    nmax: u32,
    index: HashMap<Vec<u8>, usize>,
}

impl FockBasis {
    pub fn new(modes: &[ModeLabel], nmax: u32) -> Result<FockBasis, FockError> {
        if modes.is_empty() {
            return Err(FockError::NoModes);
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(FockError::DuplicateMode(*m));
            }
        }
        let mut states = Vec::new();
        let mut scratch = vec![0u8; modes.len()];
        for n in 0..=nmax {
            push_compositions(n, 0, &mut scratch, &mut states);
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(FockBasis {
            modes: modes.to_vec(),
            states,
            nmax,
            index,
        })
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn nmax(&self) -> u32 {
        self.nmax
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn mode_position(&self, mode: ModeLabel) -> Option<usize> {
        self.modes.iter().position(|m| *m == mode)
    }

    pub fn index_of(&self, occupation: &[u8]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    fn require_mode(&self, mode: ModeLabel) -> Result<usize, FockError> {
        self.mode_position(mode).ok_or(FockError::UnknownMode(mode))
    }
}

// Distributes `remaining` quanta over modes `pos..`, first mode taking the most.
fn push_compositions(remaining: u32, pos: usize, scratch: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining as u8;
        out.push(scratch.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        scratch[pos] = k as u8;
        push_compositions(remaining - k, pos + 1, scratch, out);
    }
    scratch[pos] = 0;
}

/// Raman pulse between the two spin manifolds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamanPulse {
    /// Angular Rabi frequency Ω in rad/s.
    pub rabi_frequency: f64,
    /// Pulse length in seconds.
    pub duration: f64,
    /// Wave-vector kick Δk in grid units.
    pub kshift: i32,
}

impl RamanPulse {
    pub fn new(rabi_frequency: f64, duration: f64, kshift: i32) -> Result<Self, FockError> {
        if !(rabi_frequency > 0.0) {
            return Err(FockError::InvalidPulse("rabi frequency must be positive"));
        }
        if !(duration >= 0.0) {
            return Err(FockError::InvalidPulse("duration must be non-negative"));
        }
        Ok(RamanPulse {
            rabi_frequency,
            duration,
            kshift,
        })
    }

    /// Rotation angle Ωt.
    pub fn angle(&self) -> f64 {
        self.rabi_frequency * self.duration
    }
}

/// Pure state over a [`FockBasis`]. Operations return new states.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    basis: Arc<FockBasis>,
    amplitudes: Vec<Complex64>,
}

impl FockState {
    pub fn vacuum(basis: Arc<FockBasis>) -> FockState {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        FockState { basis, amplitudes }
    }

    pub fn basis_state(basis: Arc<FockBasis>, occupation: &[u8]) -> Result<FockState, FockError> {
        let idx = basis
            .index_of(occupation)
            .ok_or_else(|| FockError::OccupationNotInBasis(occupation.to_vec()))?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.len()];
        amplitudes[idx] = Complex64::new(1.0, 0.0);
        Ok(FockState { basis, amplitudes })
    }

    /// Basis state given as `(mode, count)` pairs; unlisted modes are empty.
    pub fn with_excitations(
        basis: Arc<FockBasis>,
        excitations: &[(ModeLabel, u8)],
    ) -> Result<FockState, FockError> {
        let mut occ = vec![0u8; basis.modes().len()];
        for &(mode, n) in excitations {
            occ[basis.require_mode(mode)?] += n;
        }
        FockState::basis_state(basis, &occ)
    }

    pub fn from_amplitudes(
        basis: Arc<FockBasis>,
        amplitudes: Vec<Complex64>,
    ) -> Result<FockState, FockError> {
        if amplitudes.len() != basis.len() {
            return Err(FockError::DimensionMismatch {
                expected: basis.len(),
                got: amplitudes.len(),
            });
        }
        Ok(FockState { basis, amplitudes })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupation: &[u8]) -> Result<Complex64, FockError> {
        self.basis
            .index_of(occupation)
            .map(|i| self.amplitudes[i])
            .ok_or_else(|| FockError::OccupationNotInBasis(occupation.to_vec()))
    }

    pub fn probability(&self, occupation: &[u8]) -> Result<f64, FockError> {
        self.amplitude(occupation).map(|a| a.norm_sqr())
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Born-rule probabilities in basis order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability weight outside the total-excitation sector `n`.
    pub fn weight_outside_sector(&self, n: u32) -> f64 {
        self.basis
            .states()
            .iter()
            .zip(&self.amplitudes)
            .filter(|(s, _)| total(s) != n)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// True if some basis state with non-negligible weight occupies `mode`.
    pub fn is_populated(&self, pos: usize) -> bool {
        self.basis
            .states()
            .iter()
            .zip(&self.amplitudes)
            .any(|(s, a)| s[pos] > 0 && a.norm_sqr() > POPULATED_EPS)
    }

    /// Two-mode beam splitter of angle `angle` (= Ωt) between `a` and `b`.
    pub fn apply_beamsplitter(
        &self,
        a: ModeLabel,
        b: ModeLabel,
        angle: f64,
    ) -> Result<FockState, FockError> {
        if a == b {
            return Err(FockError::SameMode(a));
        }
        let pa = self.basis.require_mode(a)?;
        let pb = self.basis.require_mode(b)?;
        Ok(self.beamsplitter_at(pa, pb, angle))
    }

    fn beamsplitter_at(&self, pa: usize, pb: usize, angle: f64) -> FockState {
        let c = Complex64::new((angle / 2.0).cos(), 0.0);
        let is = Complex64::new(0.0, (angle / 2.0).sin());
        let nmax = self.basis.nmax() as usize;
        let binom = binomial_table(nmax);
        let sqrt_fact: Vec<f64> = (0..=nmax).map(|k| factorial(k).sqrt()).collect();

        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        let mut target = vec![0u8; self.basis.modes().len()];
        for (state, &amp) in self.basis.states().iter().zip(&self.amplitudes) {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let na = state[pa] as usize;
            let nb = state[pb] as usize;
            let n = na + nb;
            target.copy_from_slice(state);
            let norm_in = sqrt_fact[na] * sqrt_fact[nb];
            for ma in 0..=n {
                let mb = n - ma;
                // (c a† + is b†)^na (is a† + c b†)^nb: choose j a† from the first
                // factor and k = ma - j from the second.
                let mut coeff = Complex64::new(0.0, 0.0);
                let jlo = ma.saturating_sub(nb);
                let jhi = ma.min(na);
                for j in jlo..=jhi {
                    let k = ma - j;
                    let term = c.powu(j as u32)
                        * is.powu((na - j) as u32)
                        * is.powu(k as u32)
                        * c.powu((nb - k) as u32)
                        * (binom[na][j] * binom[nb][k]);
                    coeff += term;
                }
                if coeff.norm_sqr() == 0.0 {
                    continue;
                }
                target[pa] = ma as u8;
                target[pb] = mb as u8;
                let idx = self.basis.index_of(&target).expect("sector-preserving target");
                out[idx] += amp * coeff * (sqrt_fact[ma] * sqrt_fact[mb] / norm_in);
            }
        }
        FockState {
            basis: Arc::clone(&self.basis),
            amplitudes: out,
        }
    }

    /// Raman pulse with wave-vector kick: couples `(S1,k)` to `(S2,k+Δk)` for
    /// every `k` in the basis.
    ///
    /// Pairs whose partner is missing from the basis are skipped as long as
    /// neither side is populated.
    pub fn apply_raman_with_angle(&self, pulse: &RamanPulse) -> Result<FockState, FockError> {
        let modes = self.basis.modes();
        let mut pairs = Vec::new();
        for (pos, &mode) in modes.iter().enumerate() {
            let partner = mode.raman_partner(pulse.kshift);
            match self.basis.mode_position(partner) {
                Some(ppos) => {
                    if mode.spin == Spin::S1 {
                        pairs.push((pos, ppos));
                    }
                }
                None => {
                    if self.is_populated(pos) {
                        return Err(FockError::PartnerOutsideGrid { mode, partner });
                    }
                }
            }
        }
        let angle = pulse.angle();
        let mut state = self.clone();
        for (pa, pb) in pairs {
            state = state.beamsplitter_at(pa, pb, angle);
        }
        Ok(state)
    }

    /// Multiplies each basis amplitude by `exp(i n φ)` with `n` the occupation of `mode`.
    pub fn apply_phase(&self, mode: ModeLabel, phi: f64) -> Result<FockState, FockError> {
        let pos = self.basis.require_mode(mode)?;
        Ok(self.phase_at(&[pos], phi))
    }

    /// Same as [`apply_phase`](Self::apply_phase) on every mode of one spin.
    pub fn apply_spin_phase(&self, spin: Spin, phi: f64) -> FockState {
        let positions: Vec<usize> = self
            .basis
            .modes()
            .iter()
            .enumerate()
            .filter(|(_, m)| m.spin == spin)
            .map(|(i, _)| i)
            .collect();
        self.phase_at(&positions, phi)
    }

    fn phase_at(&self, positions: &[usize], phi: f64) -> FockState {
        let amplitudes = self
            .basis
            .states()
            .iter()
            .zip(&self.amplitudes)
            .map(|(s, &a)| {
                let n: u32 = positions.iter().map(|&p| s[p] as u32).sum();
                a * Complex64::from_polar(1.0, n as f64 * phi)
            })
            .collect();
        FockState {
            basis: Arc::clone(&self.basis),
            amplitudes,
        }
    }

    /// Evolves under an arbitrary passive linear-optics map on `modes`:
    /// `a_j† -> Σ_i u[(i, j)] a_i†`, with `modes[i]` labelling row/column `i`.
    ///
    /// Works by expanding the creation-operator polynomial of every basis
    /// state, so it is exponential in the excitation number and meant for
    /// small cases.
    pub fn apply_mode_unitary(
        &self,
        modes: &[ModeLabel],
        u: &DMatrix<Complex64>,
    ) -> Result<FockState, FockError> {
        if u.nrows() != modes.len() || u.ncols() != modes.len() {
            return Err(FockError::DimensionMismatch {
                expected: modes.len(),
                got: u.nrows().max(u.ncols()),
            });
        }
        let positions = modes
            .iter()
            .map(|&m| self.basis.require_mode(m))
            .collect::<Result<Vec<_>, _>>()?;

        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for (state, &amp) in self.basis.states().iter().zip(&self.amplitudes) {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut base = state.clone();
            let mut norm = 1.0;
            for &p in &positions {
                norm *= factorial(state[p] as usize);
                base[p] = 0;
            }
            let mut poly: HashMap<Vec<u8>, Complex64> = HashMap::new();
            poly.insert(base, Complex64::new(1.0 / norm.sqrt(), 0.0));
            for (j, &pj) in positions.iter().enumerate() {
                for _ in 0..state[pj] {
                    let mut next: HashMap<Vec<u8>, Complex64> = HashMap::new();
                    for (occ, coeff) in &poly {
                        for (i, &pi) in positions.iter().enumerate() {
                            let uij = u[(i, j)];
                            if uij.norm_sqr() == 0.0 {
                                continue;
                            }
                            let mut raised = occ.clone();
                            raised[pi] += 1;
                            let gain = (raised[pi] as f64).sqrt();
                            *next.entry(raised).or_default() += coeff * uij * gain;
                        }
                    }
                    poly = next;
                }
            }
            for (occ, coeff) in poly {
                let idx = self
                    .basis
                    .index_of(&occ)
                    .ok_or(FockError::OccupationNotInBasis(occ))?;
                out[idx] += amp * coeff;
            }
        }
        Ok(FockState {
            basis: Arc::clone(&self.basis),
            amplitudes: out,
        })
    }

    /// Draws one occupation vector with probability `|amplitude|²`.
    pub fn born_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<u8>, FockError> {
        let norm2: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm2.sqrt() - 1.0).abs() > 1e-6 {
            return Err(FockError::NotNormalized(norm2.sqrt()));
        }
        let u: f64 = rng.random::<f64>() * norm2;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return Ok(self.basis.states()[i].clone());
            }
        }
        Ok(self.basis.states()[last].clone())
    }
}

pub(crate) fn total(occupation: &[u8]) -> u32 {
    occupation.iter().map(|&n| n as u32).sum()
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        t[i][0] = 1.0;
        for j in 1..=i {
            t[i][j] = t[i - 1][j - 1] + if j < i { t[i - 1][j] } else { 0.0 };
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn two_mode(nmax: u32) -> Arc<FockBasis> {
        Arc::new(FockBasis::new(&[ModeLabel::s1(0), ModeLabel::s2(0)], nmax).unwrap())
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_mode_basis_order() {
        let b = two_mode(2);
        let expect: Vec<Vec<u8>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(b.states(), expect.as_slice());
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
    }

    #[test]
    fn vacuum_only_basis() {
        let b = FockBasis::new(&[ModeLabel::s1(0)], 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.states()[0], vec![0]);
    }

    #[test]
    fn four_modes_cutoff_two_matches_brute_force() {
        let modes = [
            ModeLabel::s1(0),
            ModeLabel::s2(0),
            ModeLabel::s1(1),
            ModeLabel::s2(1),
        ];
        let b = FockBasis::new(&modes, 2).unwrap();
        let mut brute = 0;
        for a in 0..=2u8 {
            for bb in 0..=2u8 {
                for cc in 0..=2u8 {
                    for d in 0..=2u8 {
                        if a + bb + cc + d <= 2 {
                            brute += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(brute, 15);
        assert_eq!(b.len(), brute);
    }

    #[test]
    fn basis_rejects_bad_modes() {
        assert_eq!(FockBasis::new(&[], 1), Err(FockError::NoModes));
        assert_eq!(
            FockBasis::new(&[ModeLabel::s1(0), ModeLabel::s1(0)], 1),
            Err(FockError::DuplicateMode(ModeLabel::s1(0)))
        );
    }

    #[test]
    fn single_excitation_half_pulse() {
        let psi = FockState::basis_state(two_mode(1), &[1, 0]).unwrap();
        let out = psi
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
            .unwrap();
        assert!(close(out.amplitude(&[1, 0]).unwrap(), c(FRAC_1_SQRT_2, 0.0), 1e-12));
        assert!(close(out.amplitude(&[0, 1]).unwrap(), c(0.0, FRAC_1_SQRT_2), 1e-12));
        // the S2 excitation picks up the same +i onto S1
        let psi = FockState::basis_state(two_mode(1), &[0, 1]).unwrap();
        let out = psi
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
            .unwrap();
        assert!(close(out.amplitude(&[0, 1]).unwrap(), c(FRAC_1_SQRT_2, 0.0), 1e-12));
        assert!(close(out.amplitude(&[1, 0]).unwrap(), c(0.0, FRAC_1_SQRT_2), 1e-12));
    }

    #[test]
    fn zero_angle_is_identity() {
        let b = two_mode(2);
        let amps: Vec<Complex64> = (0..b.len()).map(|i| c(i as f64, -0.5 * i as f64)).collect();
        let psi = FockState::from_amplitudes(b, amps).unwrap();
        let out = psi
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), 0.0)
            .unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn hom_pair_bunches() {
        let psi = FockState::basis_state(two_mode(2), &[1, 1]).unwrap();
        let out = psi
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
            .unwrap();
        assert!(out.amplitude(&[1, 1]).unwrap().norm() < 1e-12);
        assert!(close(out.amplitude(&[2, 0]).unwrap(), c(0.0, FRAC_1_SQRT_2), 1e-12));
        assert!(close(out.amplitude(&[0, 2]).unwrap(), c(0.0, FRAC_1_SQRT_2), 1e-12));
    }

    #[test]
    fn pair_survival_is_cos_squared() {
        let psi = FockState::basis_state(two_mode(2), &[1, 1]).unwrap();
        for k in 0..40 {
            let theta = 0.17 * k as f64;
            let p = psi
                .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), theta)
                .unwrap()
                .probability(&[1, 1])
                .unwrap();
            assert!((p - theta.cos().powi(2)).abs() < 1e-9, "theta={theta}");
        }
    }

    #[test]
    fn beamsplitter_errors() {
        let psi = FockState::vacuum(two_mode(1));
        assert_eq!(
            psi.apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s1(0), 1.0),
            Err(FockError::SameMode(ModeLabel::s1(0)))
        );
        assert_eq!(
            psi.apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(3), 1.0),
            Err(FockError::UnknownMode(ModeLabel::s2(3)))
        );
    }

    fn grid_basis(k: i32, nmax: u32) -> Arc<FockBasis> {
        let mut modes = Vec::new();
        for kidx in -k..=k {
            modes.push(ModeLabel::s1(kidx));
            modes.push(ModeLabel::s2(kidx));
        }
        Arc::new(FockBasis::new(&modes, nmax).unwrap())
    }

    #[test]
    fn raman_kick_moves_s1_up_and_s2_down() {
        let b = grid_basis(2, 1);
        let pulse = RamanPulse::new(1.0, FRAC_PI_2, 1).unwrap();

        let psi = FockState::with_excitations(Arc::clone(&b), &[(ModeLabel::s1(0), 1)]).unwrap();
        let out = psi.apply_raman_with_angle(&pulse).unwrap();
        let s1 = FockState::with_excitations(Arc::clone(&b), &[(ModeLabel::s1(0), 1)]).unwrap();
        let s2 = FockState::with_excitations(Arc::clone(&b), &[(ModeLabel::s2(1), 1)]).unwrap();
        let i1 = s1.amplitudes().iter().position(|a| a.re == 1.0).unwrap();
        let i2 = s2.amplitudes().iter().position(|a| a.re == 1.0).unwrap();
        assert!(close(out.amplitudes()[i1], c(FRAC_1_SQRT_2, 0.0), 1e-12));
        assert!(close(out.amplitudes()[i2], c(0.0, FRAC_1_SQRT_2), 1e-12));

        let psi = FockState::with_excitations(Arc::clone(&b), &[(ModeLabel::s2(0), 1)]).unwrap();
        let out = psi.apply_raman_with_angle(&pulse).unwrap();
        let t = FockState::with_excitations(Arc::clone(&b), &[(ModeLabel::s1(-1), 1)]).unwrap();
        let it = t.amplitudes().iter().position(|a| a.re == 1.0).unwrap();
        assert!(close(out.amplitudes()[it], c(0.0, FRAC_1_SQRT_2), 1e-12));
    }

    #[test]
    fn raman_without_kick_equals_beamsplitter() {
        let b = two_mode(2);
        let psi = FockState::basis_state(b, &[1, 1]).unwrap();
        let pulse = RamanPulse::new(2.0 * PI * 1.626e6, 155e-9, 0).unwrap();
        let a = psi.apply_raman_with_angle(&pulse).unwrap();
        let bs = psi
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), pulse.angle())
            .unwrap();
        assert_eq!(a, bs);
    }

    #[test]
    fn raman_partner_outside_grid() {
        let b = grid_basis(1, 1);
        let psi = FockState::with_excitations(b, &[(ModeLabel::s1(1), 1)]).unwrap();
        let pulse = RamanPulse::new(1.0, 1.0, 1).unwrap();
        assert_eq!(
            psi.apply_raman_with_angle(&pulse),
            Err(FockError::PartnerOutsideGrid {
                mode: ModeLabel::s1(1),
                partner: ModeLabel::s2(2)
            })
        );
    }

    #[test]
    fn phase_scales_with_occupation() {
        let b = two_mode(2);
        let psi = FockState::basis_state(Arc::clone(&b), &[0, 1]).unwrap();
        let out = psi.apply_phase(ModeLabel::s2(0), PI).unwrap();
        assert!(close(out.amplitude(&[0, 1]).unwrap(), c(-1.0, 0.0), 1e-15));
        let psi = FockState::basis_state(b, &[0, 2]).unwrap();
        let out = psi.apply_phase(ModeLabel::s2(0), 0.3).unwrap();
        assert!(close(out.amplitude(&[0, 2]).unwrap(), Complex64::from_polar(1.0, 0.6), 1e-15));
        assert_eq!(
            psi.apply_phase(ModeLabel::s1(5), 0.3),
            Err(FockError::UnknownMode(ModeLabel::s1(5)))
        );
    }

    #[test]
    fn ramsey_sandwich_oscillates_at_larmor_frequency() {
        // Composing the three unitaries by hand on the amplitude pair gives
        // P(S2) = cos²(φ/2) for φ = 2π f δt.
        let f = 1.401e6;
        let psi = FockState::basis_state(two_mode(1), &[1, 0]).unwrap();
        for k in 0..25 {
            let dt = k as f64 * 37e-9;
            let phi = 2.0 * PI * f * dt;
            let out = psi
                .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
                .unwrap()
                .apply_phase(ModeLabel::s2(0), phi)
                .unwrap()
                .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
                .unwrap();
            let p = out.probability(&[0, 1]).unwrap();
            let a = c(0.0, 0.5) * (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, phi));
            assert!((p - a.norm_sqr()).abs() < 1e-12);
            assert!((p - (phi / 2.0).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_lookup() {
        let psi = FockState::vacuum(two_mode(2));
        assert_eq!(psi.amplitude(&[0, 0]).unwrap(), c(1.0, 0.0));
        assert_eq!(
            psi.amplitude(&[3, 0]),
            Err(FockError::OccupationNotInBasis(vec![3, 0]))
        );
    }

    #[test]
    fn born_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = FockState::basis_state(two_mode(2), &[1, 1]).unwrap();
        for _ in 0..100 {
            assert_eq!(psi.born_sample(&mut rng).unwrap(), vec![1, 1]);
        }

        let half = FockState::basis_state(two_mode(1), &[1, 0])
            .unwrap()
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
            .unwrap();
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| half.born_sample(&mut rng).unwrap() == vec![1, 0])
            .count();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);

        let noon = psi
            .apply_beamsplitter(ModeLabel::s1(0), ModeLabel::s2(0), FRAC_PI_2)
            .unwrap();
        for _ in 0..10_000 {
            assert_ne!(noon.born_sample(&mut rng).unwrap(), vec![1, 1]);
        }

        let bad = FockState::from_amplitudes(two_mode(1), vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        assert!(matches!(bad.born_sample(&mut rng), Err(FockError::NotNormalized(_))));
    }

    #[test]
    fn mode_unitary_matches_beamsplitter() {
        let theta: f64 = 1.1;
        let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let u = DMatrix::from_row_slice(2, 2, &[c(cs, 0.0), c(0.0, sn), c(0.0, sn), c(cs, 0.0)]);
        let modes = [ModeLabel::s1(0), ModeLabel::s2(0)];
        let b = two_mode(3);
        for occ in b.states().to_vec() {
            let psi = FockState::basis_state(Arc::clone(&b), &occ).unwrap();
            let x = psi.apply_mode_unitary(&modes, &u).unwrap();
            let y = psi.apply_beamsplitter(modes[0], modes[1], theta).unwrap();
            for (p, q) in x.amplitudes().iter().zip(y.amplitudes()) {
                assert!(close(*p, *q, 1e-12), "{occ:?}");
            }
        }
    }
}
