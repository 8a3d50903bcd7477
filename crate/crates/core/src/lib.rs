//! Finite-scale engine for the combinatorics of tree forests, stage-machine
//! diagonalization, and reducibility checking between combinatorial problems.
//!
//! Everything here runs over small explicit universes (numbers below 64) so
//! that searches which are classically infinite become exhaustively checkable:
//! witness-tree sequences and forests, truth-table functionals, stable pair
//! colorings, two forcing posets, cohesiveness-style stage machines, and four
//! finite reducibility notions.

pub mod set;

pub mod fincomb;
pub mod forest;
pub mod functional;

pub mod coloring;
pub mod enumerations;
pub mod forcing_p;

pub mod coh;
pub mod forcing_c;
pub mod reduct;

/// Stage clock value. All approximation machinery is monotone in the stage.
pub type Stage = u32;
