//! Validity predicates: chainability, loop-freedom, restriction checks,
//! full chain validation, and the adjusted segment capacity used everywhere
//! capacity is compared.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::state::{GroupKey, LookupError, NetworkState};
use super::types::*;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMode {
    /// Isolation: ignore other requests' usage. Planned physics still
    /// apply where a structural fit is checked (search), while chain
    /// validation skips capacity reasons entirely (dry-run semantics).
    Ignore,
    /// Respect current usage and reservations via the adjusted capacity.
    Respect,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    TimeWindow,
    Restriction,
    Capacity,
    NotChainable,
    GeographicLoop,
    OriginMismatch,
    DestinationMismatch,
    Degenerate,
}

impl ViolationKind {
    pub fn code(&self) -> &'static str {
        match self {
            ViolationKind::TimeWindow => "time-window",
            ViolationKind::Restriction => "restriction",
            ViolationKind::Capacity => "capacity",
            ViolationKind::NotChainable => "not-chainable",
            ViolationKind::GeographicLoop => "geographic-loop",
            ViolationKind::OriginMismatch => "origin-mismatch",
            ViolationKind::DestinationMismatch => "destination-mismatch",
            ViolationKind::Degenerate => "degenerate",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Chain position the violation is attached to; `None` for
    /// request-level reasons.
    pub position: Option<usize>,
    pub detail: String,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn ok() -> Self {
        ValidationResult { violations: Vec::new() }
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

/// True iff `b2` may follow `b1` in a chain: matching station groups, a
/// feasible transfer in time (or an extra connection bypassing it), no
/// forbidden connection, and no exclusive connection of `b1` pointing
/// elsewhere.
pub fn chainable(b1: &BlockId, b2: &BlockId, state: &NetworkState) -> Result<bool, LookupError> {
    let first = state.block(b1)?;
    let second = state.block(b2)?;
    if state.block_destination_group(first)? != state.block_origin_group(second)? {
        return Ok(false);
    }
    match state.connection(b1, b2) {
        Some(ConnectionKind::Forbidden) => return Ok(false),
        Some(ConnectionKind::Extra) => {}
        _ => {
            if first.deboarding_ready > second.boarding_cutoff {
                return Ok(false);
            }
        }
    }
    if let Some(successor) = state.exclusive_successor(b1) {
        if successor != b2 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff the sequence of visited station groups (origin of the first
/// block, then each block's destination) has no repeats.
pub fn is_loop_free(blocks: &[&Block], state: &NetworkState) -> Result<bool, LookupError> {
    let mut visited: HashSet<GroupKey> = HashSet::new();
    let Some(first) = blocks.first() else {
        return Ok(true);
    };
    visited.insert(state.block_origin_group(first)?);
    for block in blocks {
        let origin = state.block_origin_group(block)?;
        let dest = state.block_destination_group(block)?;
        if origin == dest {
            // Same-yard block (phase connector): the yard counts exactly
            // once, on entry. A second pass through the yard would have to
            // re-enter it and is caught by the normal rule.
            continue;
        }
        if !visited.insert(dest) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff the request passes every restriction on the block.
pub fn block_admits(block: &Block, request: &Request) -> bool {
    block.restrictions.iter().all(|r| r.passes(request))
}

/// Adjusted capacity of a segment: the maximum of its planned capacity and
/// the current usage plus all block reservations on it. This is the bound
/// that keeps the optimization feasible under over-booking without ever
/// introducing or removing over-booking.
pub fn adjusted_segment_capacity(segment: &Segment, state: &NetworkState) -> CapacityVector {
    let committed = state
        .usage(&segment.id)
        .saturating_add(&state.reserved_on_segment(&segment.id));
    segment.capacity.component_max(&committed)
}

/// Adjusted capacity with one request's own usage excluded from both the
/// usage term and the comparison baseline.
pub fn adjusted_segment_capacity_excluding(
    segment: &Segment,
    state: &NetworkState,
    request: &Request,
) -> CapacityVector {
    let committed = state
        .usage_excluding(&segment.id, request)
        .saturating_add(&state.reserved_on_segment(&segment.id));
    segment.capacity.component_max(&committed)
}

/// Whether the request's demand fits on every segment of the block.
///
/// `Ignore` checks only the planned segment capacity (structural fit, as if
/// no other request existed). `Respect` checks current usage (excluding the
/// request's own) plus demand against the adjusted capacity.
pub fn block_has_capacity(
    block: &Block,
    request: &Request,
    state: &NetworkState,
    mode: CapacityMode,
) -> Result<bool, LookupError> {
    for sid in &block.segments {
        let segment = state.segment(sid)?;
        match mode {
            CapacityMode::Ignore => {
                if !request.demand.fits_within(&segment.capacity) {
                    return Ok(false);
                }
            }
            CapacityMode::Respect => {
                // The structural fit must hold too, so that every chain
                // passing under Respect also passes under Ignore.
                if !request.demand.fits_within(&segment.capacity) {
                    return Ok(false);
                }
                let base = state.usage_excluding(sid, request);
                let adjusted = adjusted_segment_capacity_excluding(segment, state, request);
                if !base.saturating_add(&request.demand).fits_within(&adjusted) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Validates a chain for a request, returning the complete list of
/// violation reasons. Positions inside the required prefix only report
/// restriction and capacity violations; geographic gaps, loops, and
/// infeasible transitions there are tolerated.
pub fn validate_chain(
    request: &Request,
    chain: &TransportChain,
    state: &NetworkState,
    mode: CapacityMode,
) -> Result<ValidationResult, LookupError> {
    let mut violations = Vec::new();

    let origin_group = state.request_origin_group(request)?;
    let destination_group = state.request_destination_group(request)?;
    if origin_group == destination_group {
        violations.push(Violation {
            kind: ViolationKind::Degenerate,
            position: None,
            detail: format!("origin and destination resolve to the same group {origin_group}"),
        });
        return Ok(ValidationResult { violations });
    }

    if chain.is_empty() {
        violations.push(Violation {
            kind: ViolationKind::DestinationMismatch,
            position: None,
            detail: "empty chain".to_owned(),
        });
        return Ok(ValidationResult { violations });
    }

    let blocks: Vec<&Block> = chain
        .blocks
        .iter()
        .map(|id| state.block(id))
        .collect::<Result<_, _>>()?;
    let split = chain.split.min(blocks.len());

    // Origin, pickup time: only when the chain starts flexible.
    if split == 0 {
        let first = blocks[0];
        if state.block_origin_group(first)? != origin_group {
            violations.push(Violation {
                kind: ViolationKind::OriginMismatch,
                position: Some(0),
                detail: format!("chain boards at {}, request originates at {}", first.origin, request.origin),
            });
        }
        if request.pickup_earliest > first.boarding_cutoff {
            violations.push(Violation {
                kind: ViolationKind::TimeWindow,
                position: Some(0),
                detail: format!(
                    "pickup earliest {} after boarding cutoff {}",
                    request.pickup_earliest, first.boarding_cutoff
                ),
            });
        }
    }

    // Destination: request-level, checked against the last block.
    let last_index = blocks.len() - 1;
    let last = blocks[last_index];
    if state.block_destination_group(last)? != destination_group {
        violations.push(Violation {
            kind: ViolationKind::DestinationMismatch,
            position: Some(last_index),
            detail: format!("chain ends at {}, request targets {}", last.destination, request.destination),
        });
    }
    if !chain.is_required_at(last_index) && last.deboarding_ready > request.delivery_latest {
        violations.push(Violation {
            kind: ViolationKind::TimeWindow,
            position: Some(last_index),
            detail: format!(
                "deboarding ready {} after delivery latest {}",
                last.deboarding_ready, request.delivery_latest
            ),
        });
    }

    // Per-block restriction and capacity checks apply everywhere,
    // including the required prefix.
    for (position, block) in blocks.iter().enumerate() {
        if !block_admits(block, request) {
            violations.push(Violation {
                kind: ViolationKind::Restriction,
                position: Some(position),
                detail: format!("request fails a restriction on block {}", block.id),
            });
        }
        if mode == CapacityMode::Respect && !block_has_capacity(block, request, state, mode)? {
            violations.push(Violation {
                kind: ViolationKind::Capacity,
                position: Some(position),
                detail: format!("demand exceeds adjusted capacity on a segment of block {}", block.id),
            });
        }
    }

    // Chainability: checked for every pair whose second member is flexible.
    for position in 1..blocks.len() {
        if chain.is_required_at(position) {
            continue;
        }
        if !chainable(&blocks[position - 1].id, &blocks[position].id, state)? {
            violations.push(Violation {
                kind: ViolationKind::NotChainable,
                position: Some(position),
                detail: format!(
                    "block {} cannot follow block {}",
                    blocks[position].id,
                    blocks[position - 1].id
                ),
            });
        }
    }

    // Loop check over the flexible suffix only.
    let flexible = &blocks[split..];
    if !flexible.is_empty() && !is_loop_free(flexible, state)? {
        violations.push(Violation {
            kind: ViolationKind::GeographicLoop,
            position: Some(split),
            detail: "flexible part revisits a station group".to_owned(),
        });
    }

    Ok(ValidationResult { violations })
}
