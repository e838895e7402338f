//! Security analysis and simulation for coherent-state quantum key
//! distribution with a strong phase-reference pulse.
//!
//! The crate is organised bottom-up:
//!
//! * [`coherent`] holds the scalar building blocks (overlap constants,
//!   POVM outcome probabilities for coherent inputs, binary entropy).
//! * [`fock`] checks the filter/POVM operator identities numerically in a
//!   truncated Fock space.
//! * [`bound`] is the phase-error estimation engine: it minimises the check
//!   error count over every attack consistent with the observed tallies and
//!   inverts the result into an upper bound on phase errors.
//! * [`keyrate`] turns tallies into key gain, traces the positive-gain
//!   region and optimises the signal intensity.
//! * [`sim`] is a Monte Carlo simulator of the prepare-and-measure protocol.

pub mod bound;
pub mod coherent;
pub mod error;
pub mod fock;
pub mod keyrate;
pub mod rng;
pub mod search;
pub mod sim;

pub use error::{Error, Result};
