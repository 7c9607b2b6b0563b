//! Sequential scene generation with a learned category policy.
//!
//! An agent chooses only *which* object category to add next. The
//! environment resolves *where* with a greedy search over group
//! arrangements and rejects anything that breaks the hard constraints of
//! the domain (indoor rooms or side-view block stacking).

pub mod agents;
pub mod boundary;
pub mod catalog;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod constraints;
pub mod env;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod nn;
pub mod ppo;
pub mod render;
pub mod scene;
pub mod scene_io;

pub use error::{Error, Result};
