//! The path-based throughput model: routing variables over candidate
//! chains, block capacity variables coupling reservations and utilization
//! to the adjusted segment capacities, and an exact branch-and-bound
//! solver over the linear relaxation.

mod build;
mod solve;

pub use build::{build_model, build_model_priced, BuildError, CandidateInput, ModelBlock, ModelChain, ModelRequest, ModelSegment, OptModel};
pub use solve::{brute_force_solve, solve, Assignment, BruteForceError, SolveStats};

/// Objective coefficient of a chain: the request's priority weight minus a
/// rank penalty small enough that the total penalty over any solution stays
/// below one. The solver therefore maximizes the weighted routed count
/// first and prefers lower-ranked (tie-break better) chains second.
///
/// Returned as a numerator over the model-wide denominator
/// `|R| * max|C_r| + 1`.
pub fn price_coefficient(weight: u64, rank: usize, n_requests: usize, max_candidates: usize) -> (i64, i64) {
    let denominator = price_denominator(n_requests, max_candidates);
    (weight as i64 * denominator - rank as i64, denominator)
}

pub(crate) fn price_denominator(n_requests: usize, max_candidates: usize) -> i64 {
    (n_requests as i64) * (max_candidates as i64) + 1
}
