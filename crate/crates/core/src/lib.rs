//! Exogenous coordination with connectors: a small connector language,
//! constraint-automata semantics, and a multithreaded coordinator that
//! executes derived automata between user threads.

pub mod automata;
pub mod connector;
pub mod demo;
pub mod derivation;
pub mod dsl;
pub mod export;
pub mod fixtures;
pub mod runtime;
