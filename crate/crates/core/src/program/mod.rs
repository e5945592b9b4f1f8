//! Plain-text pulse programs describing one experimental trial.
//!
//! ```text
//! # HOM dip at the 50:50 point
//! prepare s1
//! prepare s2
//! raman duration=155ns
//! read s1
//! read s2
//! ```
//!
//! One statement per line, `#` starts a comment, keywords are case
//! insensitive. Statements:
//!
//! * `prepare s1|s2`: create one collective excitation (900 ns).
//! * `raman duration=<int>ns [angle=<int>] [rabi=<float>mhz]`: Raman
//!   beam splitter; `angle` is the wave-vector kick in grid units.
//! * `wait <int>ns`: free Larmor precession.
//! * `read s1|s2`: open the read window of a spin.

mod exec;
mod parse;

use std::fmt;

use crate::fock::Spin;

pub use exec::{execute, CompiledProgram, ExecError, Physics};
pub use parse::{parse, parse_with, ParseError, ParseOptions};

/// Implicit length of `prepare`: 200 ns Rydberg excitation, 500 ns transfer,
/// and a 100 ns guard interval after each pulse.
pub const PREPARE_DURATION_NS: u64 = 900;
/// Length of one trial.
pub const DEFAULT_TRIAL_BUDGET_NS: u64 = 10_700;

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Prepare(Spin),
    Raman {
        duration_ns: u64,
        kshift: i32,
        rabi_mhz: Option<f64>,
    },
    Wait(u64),
    Read(Spin),
}

impl Statement {
    pub fn duration_ns(&self) -> u64 {
        match self {
            Statement::Prepare(_) => PREPARE_DURATION_NS,
            Statement::Raman { duration_ns, .. } => *duration_ns,
            Statement::Wait(ns) => *ns,
            Statement::Read(_) => 0,
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Prepare(s) => write!(f, "prepare {s}"),
            Statement::Raman {
                duration_ns,
                kshift,
                rabi_mhz,
            } => {
                write!(f, "raman duration={duration_ns}ns")?;
                if *kshift != 0 {
                    write!(f, " angle={kshift}")?;
                }
                if let Some(r) = rabi_mhz {
                    write!(f, " rabi={r}mhz")?;
                }
                Ok(())
            }
            Statement::Wait(ns) => write!(f, "wait {ns}ns"),
            Statement::Read(s) => write!(f, "read {s}"),
        }
    }
}

/// Violation of the program-level rules, by statement index.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("statement {index}: read {spin} before any prepare")]
    ReadBeforePrepare { index: usize, spin: Spin },
    #[error("statement {index}: {spin} prepared twice")]
    PreparedTwice { index: usize, spin: Spin },
    #[error("statement {index}: {spin} read twice")]
    ReadTwice { index: usize, spin: Spin },
    #[error("statement {index}: program lasts {total_ns} ns, over the {budget_ns} ns trial budget")]
    OverBudget {
        index: usize,
        total_ns: u64,
        budget_ns: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseProgram {
    pub statements: Vec<Statement>,
}

impl PulseProgram {
    pub fn new(statements: Vec<Statement>) -> Self {
        PulseProgram { statements }
    }

    pub fn duration_ns(&self) -> u64 {
        self.statements.iter().map(Statement::duration_ns).sum()
    }

    /// Checks prepare/read ordering and the trial budget.
    pub fn validate(&self, budget_ns: u64) -> Result<(), ProgramError> {
        let mut checker = Checker::new(budget_ns);
        for (index, st) in self.statements.iter().enumerate() {
            checker.push(index, st)?;
        }
        Ok(())
    }

    /// Canonical text; parsing it gives back an equal program.
    pub fn print(&self) -> String {
        let mut out = String::new();
        for st in &self.statements {
            out.push_str(&st.to_string());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for PulseProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.print())
    }
}

pub(crate) struct Checker {
    budget_ns: u64,
    elapsed_ns: u64,
    prepared: [bool; 2],
    read: [bool; 2],
}

impl Checker {
    pub(crate) fn new(budget_ns: u64) -> Self {
        Checker {
            budget_ns,
            elapsed_ns: 0,
            prepared: [false; 2],
            read: [false; 2],
        }
    }

    pub(crate) fn push(&mut self, index: usize, st: &Statement) -> Result<(), ProgramError> {
        match *st {
            Statement::Prepare(spin) => {
                if self.prepared[spin.index()] {
                    return Err(ProgramError::PreparedTwice { index, spin });
                }
                self.prepared[spin.index()] = true;
            }
            Statement::Read(spin) => {
                if !self.prepared.iter().any(|&p| p) {
                    return Err(ProgramError::ReadBeforePrepare { index, spin });
                }
                if self.read[spin.index()] {
                    return Err(ProgramError::ReadTwice { index, spin });
                }
                self.read[spin.index()] = true;
            }
            _ => {}
        }
        self.elapsed_ns = self.elapsed_ns.saturating_add(st.duration_ns());
        if self.elapsed_ns > self.budget_ns {
            return Err(ProgramError::OverBudget {
                index,
                total_ns: self.elapsed_ns,
                budget_ns: self.budget_ns,
            });
        }
        Ok(())
    }
}
