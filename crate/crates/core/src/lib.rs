//! Continuous data assimilation (Azouani–Olson–Titi feedback control) on a
//! layered primitive-equation ocean analogue.
//!
//! The crate covers the full identical-twin pipeline: a C-grid multilayer
//! model with switchable physics, flood-fill observation interpolation,
//! explicit and semi-implicit nudged time stepping, and the experiment
//! campaigns (validation, term ablation, parameter sweeps) with their file
//! formats and command-line front end.

pub mod assimilation;
pub mod cli;
pub mod experiment;
pub mod grid;
pub mod interpolant;
pub mod io;
pub mod observations;
pub mod physics;
pub mod validation;
