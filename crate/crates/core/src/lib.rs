//! Agent-based simulation of an artificial society whose members choose labor
//! and fertility under Cobb-Douglas preferences, evolved over generations
//! under four allocation strategies that differ in who chooses labor and
//! whether average or minimum utility is maximised.

pub mod config;
pub mod economy;
pub mod error;
pub mod evolution;
pub mod histogram;
pub mod metrics;
pub mod optimizer;
pub mod runner;
pub mod stochastics;
pub mod strategies;

pub use error::{Error, Result};
