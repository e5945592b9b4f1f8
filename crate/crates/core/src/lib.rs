//! Simulation of Hong-Ou-Mandel interference between two collective
//! excitations stored in one atomic ensemble.
//!
//! * [`fock`]: exact Fock-space evolution under Raman beam splitters and Larmor phases.
//! * [`noise`]: preparation noise, memory loss, detection cascade and estimators.
//! * [`program`]: the plain-text pulse-sequence language and its executor.
//! * [`fitting`]: damped-cosine least squares.
//! * [`permanent`]: permanent-based Boson sampling.
//! * [`experiments`]: figure presets, configuration and CSV/SVG output.

pub mod experiments;
pub mod fitting;
pub mod fock;
pub mod noise;
pub mod permanent;
pub mod program;
pub mod rng;

pub use fock::{FockBasis, FockError, FockState, ModeLabel, RamanPulse, Spin};
