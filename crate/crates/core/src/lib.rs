//! Transport chain computation for single-wagon rail freight.
//!
//! The crate is organized around the in-memory [`model::NetworkState`]:
//! [`search`] finds and enumerates valid transport chains, [`opt`] builds
//! and solves the path-based throughput model, [`assign`] implements the
//! staged online assignment, [`engine`] is the message-driven state
//! service core, and [`sim`] provides scenario generation and replay for
//! throughput experiments.

pub mod assign;
pub mod engine;
pub mod fixtures;
pub mod model;
pub mod opt;
pub mod search;
pub mod sim;
