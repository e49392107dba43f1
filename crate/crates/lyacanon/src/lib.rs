//! Symbolic-numeric toolkit for parametric ODE systems with a known
//! complete set of first integrals.
//!
//! Given a system definition (right-hand sides, first integrals, parameter
//! and level-constant boxes), the crate:
//!
//! 1. validates the integrals ([`sysdef`]),
//! 2. runs the stage-by-stage flattening cascade and assembles the
//!    canonical system plus the canonizing map ([`cascade`]),
//! 3. applies derivative-rank and sign criteria and verifies a canonical
//!    Lyapunov function ([`stability`]),
//! 4. integrates both coordinate systems and emits plot data ([`sim`]).
//!
//! The `lyacanon` binary wires these into `validate`, `canonize`,
//! `stability`, `simulate` and `reproduce-example` subcommands; the
//! crate-level `examples/` directory shows each capability in isolation.

pub mod cascade;
pub mod cli;
pub mod expr;
pub mod sim;
pub mod stability;
pub mod sysdef;

/// The bundled two-state example system definition.
pub const EXAMPLE_SYSTEM: &str = include_str!("../assets/example_two_state.lyc");
