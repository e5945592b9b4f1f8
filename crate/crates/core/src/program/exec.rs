use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use super::{ProgramError, PulseProgram, Statement};
use crate::fock::{FockBasis, FockError, FockState, ModeLabel, RamanPulse, Spin};
use crate::noise::{
    apply_memory_decay, prepare_excitation, sample_detection, DetectionParams, NoiseError,
    NoiseParams, ReadWindows, TrialOutcome,
};

/// Physical constants not fixed by the program text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physics {
    /// Raman Rabi frequency Ω/2π in MHz, unless a pulse overrides it.
    pub rabi_mhz: f64,
    /// Larmor precession frequency between the spins, MHz.
    pub larmor_mhz: f64,
    /// Largest |kidx| kept in the wave-vector grid.
    pub grid_half_width: i32,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            rabi_mhz: 1.626,
            larmor_mhz: 1.401,
            grid_half_width: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("mode {mode} leaves the wave-vector grid |k| <= {half_width}")]
    OutsideGrid { mode: ModeLabel, half_width: i32 },
    #[error("invalid physics: {0}")]
    Physics(&'static str),
}

#[derive(Debug, Clone)]
enum Op {
    Raman { pulse: RamanPulse },
    Phase(f64),
}

#[derive(Debug, Clone)]
struct Preparation {
    mode: ModeLabel,
    storage_time: f64,
}

#[derive(Debug, Clone)]
struct Cached {
    state: FockState,
    /// Cumulative Born probabilities over `support`.
    cdf: Vec<f64>,
    support: Vec<usize>,
}

/// A validated program lowered to Fock-space operations, with the noiseless
/// final state precomputed for every preparation outcome.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    basis: Arc<FockBasis>,
    preparations: Vec<Preparation>,
    ops: Vec<Op>,
    windows: ReadWindows,
    /// Indexed by the base-3 encoding of the prepared counts.
    cache: Vec<Cached>,
}

fn prepared_mode(spin: Spin) -> ModeLabel {
    ModeLabel::new(spin, 0)
}

impl CompiledProgram {
    pub fn compile(program: &PulseProgram, physics: &Physics) -> Result<CompiledProgram, ExecError> {
        if !(physics.rabi_mhz > 0.0 && physics.rabi_mhz.is_finite()) {
            return Err(ExecError::Physics("rabi frequency must be positive"));
        }
        if !physics.larmor_mhz.is_finite() {
            return Err(ExecError::Physics("larmor frequency must be finite"));
        }
        if physics.grid_half_width < 0 {
            return Err(ExecError::Physics("grid half width must be non-negative"));
        }
        program.validate(u64::MAX)?;

        let total_ns = program.duration_ns();
        let mut elapsed = 0u64;
        let mut preparations = Vec::new();
        let mut ops = Vec::new();
        let mut windows = [false; 2];
        let mut modes: BTreeSet<ModeLabel> = BTreeSet::new();
        for st in &program.statements {
            elapsed += st.duration_ns();
            match *st {
                Statement::Prepare(spin) => {
                    let mode = prepared_mode(spin);
                    modes.insert(mode);
                    preparations.push(Preparation {
                        mode,
                        storage_time: (total_ns - elapsed) as f64 * 1e-9,
                    });
                }
                Statement::Raman {
                    duration_ns,
                    kshift,
                    rabi_mhz,
                } => {
                    let rabi = 2.0 * PI * rabi_mhz.unwrap_or(physics.rabi_mhz) * 1e6;
                    let pulse = RamanPulse::new(rabi, duration_ns as f64 * 1e-9, kshift)?;
                    let reached: Vec<ModeLabel> =
                        modes.iter().map(|m| m.raman_partner(kshift)).collect();
                    for m in reached {
                        if m.kidx.abs() > physics.grid_half_width {
                            return Err(ExecError::OutsideGrid {
                                mode: m,
                                half_width: physics.grid_half_width,
                            });
                        }
                        modes.insert(m);
                    }
                    ops.push(Op::Raman { pulse });
                }
                Statement::Wait(ns) => {
                    ops.push(Op::Phase(2.0 * PI * physics.larmor_mhz * 1e6 * ns as f64 * 1e-9));
                }
                Statement::Read(spin) => windows[spin.index()] = true,
            }
        }
        if modes.is_empty() {
            modes.insert(prepared_mode(Spin::S1));
        }
        let modes: Vec<ModeLabel> = modes.into_iter().collect();
        let basis = Arc::new(FockBasis::new(&modes, 2 * preparations.len() as u32)?);

        let mut compiled = CompiledProgram {
            basis,
            preparations,
            ops,
            windows,
            cache: Vec::new(),
        };
        let patterns = 3usize.pow(compiled.preparations.len() as u32);
        for code in 0..patterns {
            let counts = decode(code, compiled.preparations.len());
            let state = compiled.evolve(&counts, |p| p)?;
            let mut cdf = Vec::new();
            let mut support = Vec::new();
            let mut acc = 0.0;
            for (i, a) in state.amplitudes().iter().enumerate() {
                let p = a.norm_sqr();
                if p > 0.0 {
                    acc += p;
                    cdf.push(acc);
                    support.push(i);
                }
            }
            compiled.cache.push(Cached { state, cdf, support });
        }
        Ok(compiled)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn windows(&self) -> ReadWindows {
        self.windows
    }

    /// Noiseless final state when preparation `i` left `counts[i]` excitations.
    pub fn coherent_state(&self, counts: &[u8]) -> Option<&FockState> {
        if counts.len() != self.preparations.len() || counts.iter().any(|&c| c > 2) {
            return None;
        }
        Some(&self.cache[encode(counts)].state)
    }

    fn initial_state(&self, counts: &[u8]) -> Result<FockState, FockError> {
        let excitations: Vec<(ModeLabel, u8)> = self
            .preparations
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(p, &c)| (p.mode, c))
            .collect();
        FockState::with_excitations(Arc::clone(&self.basis), &excitations)
    }

    fn evolve(
        &self,
        counts: &[u8],
        mut perturb: impl FnMut(RamanPulse) -> RamanPulse,
    ) -> Result<FockState, FockError> {
        let mut state = self.initial_state(counts)?;
        for op in &self.ops {
            state = match op {
                Op::Raman { pulse } => state.apply_raman_with_angle(&perturb(*pulse))?,
                Op::Phase(phi) => state.apply_spin_phase(Spin::S2, *phi),
            };
        }
        Ok(state)
    }

    /// One Monte Carlo trial: noisy preparation, memory loss, possibly
    /// dephased Raman pulses, Born sampling and the detection cascade.
    pub fn run_trial<R: Rng + ?Sized>(
        &self,
        noise: &NoiseParams,
        det: &DetectionParams,
        rng: &mut R,
    ) -> Result<TrialOutcome, ExecError> {
        // At most one preparation per spin.
        let mut counts = [0u8; 2];
        let counts = &mut counts[..self.preparations.len()];
        for (c, p) in counts.iter_mut().zip(&self.preparations) {
            let n = prepare_excitation(p.mode, noise, rng);
            *c = apply_memory_decay(n, p.storage_time, noise, rng)?;
        }
        // A dephased pulse, with probability 1 - exp(-t/τ_raman), rotates by a
        // uniformly random angle. The empty Vec does not allocate.
        let mut dephased: Vec<(usize, f64)> = Vec::new();
        if noise.tau_raman.is_finite() {
            let pulses = self.ops.iter().filter_map(|o| match o {
                Op::Raman { pulse } => Some(pulse),
                Op::Phase(_) => None,
            });
            for (i, pulse) in pulses.enumerate() {
                if rng.random::<f64>() >= noise.raman_coherence(pulse.duration) {
                    dephased.push((i, rng.random::<f64>() * 2.0 * PI));
                }
            }
        }
        let index = if dephased.is_empty() {
            let cached = &self.cache[encode(counts)];
            let total = *cached.cdf.last().expect("normalized state has support");
            let u = rng.random::<f64>() * total;
            let j = cached.cdf.partition_point(|&c| c <= u).min(cached.cdf.len() - 1);
            cached.support[j]
        } else {
            let mut next = 0;
            let state = self.evolve(counts, |mut pulse| {
                if let Some(&(_, angle)) = dephased.iter().find(|(i, _)| *i == next) {
                    pulse.duration = angle / pulse.rabi_frequency;
                }
                next += 1;
                pulse
            })?;
            let occupation = state.born_sample(rng)?;
            self.basis.index_of(&occupation).expect("sampled state is in the basis")
        };
        let occupation = &self.basis.states()[index];
        Ok(sample_detection(occupation, self.basis.modes(), self.windows, det, rng))
    }
}

fn encode(counts: &[u8]) -> usize {
    counts.iter().rev().fold(0, |acc, &c| acc * 3 + c as usize)
}

fn decode(mut code: usize, len: usize) -> Vec<u8> {
    (0..len)
        .map(|_| {
            let c = (code % 3) as u8;
            code /= 3;
            c
        })
        .collect()
}

/// Compiles and runs a single trial. Loops should compile once and call
/// [`CompiledProgram::run_trial`].
pub fn execute<R: Rng + ?Sized>(
    program: &PulseProgram,
    noise: &NoiseParams,
    det: &DetectionParams,
    physics: &Physics,
    rng: &mut R,
) -> Result<TrialOutcome, ExecError> {
    noise.validate()?;
    det.validate()?;
    CompiledProgram::compile(program, physics)?.run_trial(noise, det, rng)
}
