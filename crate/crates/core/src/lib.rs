//! Structures, tree decompositions, Separation Logic of Relations and
//! monadic second-order logic, with the translations between them.

pub mod cli;
pub mod decomposition;
pub mod generators;
pub mod random;
pub mod slr;
pub mod slr2so;
pub mod suite;
pub mod so;
pub mod structures;
pub mod term;
pub mod unfolding;
