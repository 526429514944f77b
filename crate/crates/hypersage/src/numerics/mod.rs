//! Dense reverse-mode gradient engine: a tape of primitive matrix operations,
//! the Adam optimizer, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, FdReport, ProbedLoss};
pub use tape::{NumericsError, Tape, TensorId};
