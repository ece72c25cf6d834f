//! Lie group variational integrators for rigid-body systems, with indirect
//! (shooting) and direct (spline-parameterized NLP) optimal control.

pub mod config;
pub mod direct;
pub mod engine;
pub mod error;
pub mod harness;
pub mod indirect;
pub mod liegroup;
pub mod models;
pub mod scalar;
pub mod spline;

pub use error::{Error, Result};
