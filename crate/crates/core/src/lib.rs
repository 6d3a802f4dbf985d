//! Verification of closed-loop systems whose perception is abstracted from
//! (state, estimate) count data.
//!
//! Each environment condition yields a Markov chain with an absorbing error
//! state. Bounded-horizon scenarios compress into linear summaries `(A, b)`
//! that compose sequentially; error-probability questions about them reduce
//! to linear programs over the probability simplex.

pub mod analysis;
pub mod cases;
pub mod error;
pub mod io;
pub mod linprog;
pub mod model;
pub mod runner;
pub mod simulate;
pub mod sparse;
pub mod summary;

pub use error::{Error, Result};
