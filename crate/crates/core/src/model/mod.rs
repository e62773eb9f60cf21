//! Domain model: types, the in-memory network state, and validity
//! predicates.

mod state;
mod types;
mod validate;

pub use state::{GroupKey, LookupError, NetworkState};
pub use types::*;
pub use validate::{
    adjusted_segment_capacity, adjusted_segment_capacity_excluding, block_admits,
    block_has_capacity, chainable, is_loop_free, validate_chain, CapacityMode, ValidationResult,
    Violation, ViolationKind,
};
