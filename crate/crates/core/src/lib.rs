//! Verifier and derivation-guided interpreters for a small object language
//! with dynamic frames, well-founded functions and total correctness.
pub mod callfree;
pub mod discharge;
pub mod domain;
pub mod effects;
pub mod entry;
pub mod interp;
pub mod logic;
pub mod mutate;
pub mod simple;
pub mod name;
pub mod obligation;
pub mod state;
pub mod syntax;
pub mod verify;
pub mod wd;
pub use name::Name;
