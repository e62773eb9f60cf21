//! Chain search: the single-best-chain label search on blocks and the
//! all-chains enumeration on partial chains, both bounded by configurable
//! limits and ordered by the lexicographic tie-breaker.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant as WallInstant};

use serde::{Deserialize, Serialize};

use crate::model::*;

/// How often the wall clock is consulted, in expansions.
const CLOCK_CHECK_INTERVAL: u64 = 1024;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SearchLimits {
    /// Wall-clock budget.
    pub time_budget: Duration,
    /// Maximum blocks per chain, required prefix included.
    pub max_blocks: usize,
    /// Maximum stored partial chains / labels.
    pub max_frontier: usize,
    /// Stop enumeration once this many chains are found.
    pub max_chains: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            time_budget: Duration::from_secs(5),
            max_blocks: 7,
            max_frontier: 10_000_000,
            max_chains: 100,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyComponent {
    Arrival,
    Departure,
    BlockCount,
    IntermediateDepartures,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBreakConfig {
    pub order: Vec<KeyComponent>,
}

impl TieBreakConfig {
    /// Current production order: earliest arrival first.
    pub fn arrival_first() -> Self {
        TieBreakConfig {
            order: vec![
                KeyComponent::Arrival,
                KeyComponent::Departure,
                KeyComponent::BlockCount,
                KeyComponent::IntermediateDepartures,
            ],
        }
    }

    /// Legacy order: earliest departure first.
    pub fn departure_first() -> Self {
        TieBreakConfig {
            order: vec![
                KeyComponent::Departure,
                KeyComponent::Arrival,
                KeyComponent::BlockCount,
                KeyComponent::IntermediateDepartures,
            ],
        }
    }
}

impl Default for TieBreakConfig {
    fn default() -> Self {
        Self::arrival_first()
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum KeyPart {
    Scalar(i64),
    Sequence(Vec<i64>),
}

/// Lexicographic tie-break key of a chain. Ties on all configured
/// components are broken by the block-id sequence for total
/// reproducibility.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct TieBreakKey {
    pub parts: Vec<KeyPart>,
    pub ids: Vec<BlockId>,
}

/// Computes the tie-break key of a nonempty block sequence.
pub fn tiebreak_key(
    blocks: &[BlockId],
    config: &TieBreakConfig,
    state: &NetworkState,
) -> Result<TieBreakKey, LookupError> {
    assert!(!blocks.is_empty(), "tiebreak_key requires a nonempty chain");
    let first = state.block(&blocks[0])?;
    let last = state.block(blocks.last().unwrap())?;
    let mut parts = Vec::with_capacity(config.order.len());
    for component in &config.order {
        parts.push(match component {
            KeyComponent::Arrival => KeyPart::Scalar(last.deboarding_ready),
            KeyComponent::Departure => KeyPart::Scalar(state.block_departure(first)),
            KeyComponent::BlockCount => KeyPart::Scalar(blocks.len() as i64),
            KeyComponent::IntermediateDepartures => KeyPart::Sequence(
                blocks[1..]
                    .iter()
                    .map(|b| state.block(b).map(|b| state.block_departure(b)))
                    .collect::<Result<_, _>>()?,
            ),
        });
    }
    Ok(TieBreakKey { parts, ids: blocks.to_vec() })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct TruncationFlags {
    pub time_limit: bool,
    pub depth_limit: bool,
    pub frontier_limit: bool,
    pub count_limit: bool,
}

impl TruncationFlags {
    pub fn any(&self) -> bool {
        self.time_limit || self.depth_limit || self.frontier_limit || self.count_limit
    }
}

/// Counts of the reasons candidate blocks were rejected; used to explain
/// empty results on the dry-run endpoints.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub restriction: u64,
    pub time: u64,
    pub capacity: u64,
    pub transfer: u64,
    pub degenerate: bool,
    pub manual_request: bool,
}

impl SearchDiagnostics {
    pub fn dominant(&self) -> Option<&'static str> {
        if self.degenerate {
            return Some("degenerate");
        }
        if self.manual_request {
            return Some("manual-request");
        }
        let entries = [
            (self.restriction, "restriction"),
            (self.time, "time-window"),
            (self.capacity, "capacity"),
            (self.transfer, "transfer"),
        ];
        entries
            .iter()
            .filter(|(count, _)| *count > 0)
            .max_by_key(|(count, _)| *count)
            .map(|(_, name)| *name)
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    /// Valid chains, sorted by tie-break key.
    pub chains: Vec<TransportChain>,
    pub truncation: TruncationFlags,
    pub capacity_mode: CapacityMode,
    pub diagnostics: SearchDiagnostics,
    pub expansions: u64,
    pub elapsed: Duration,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&TransportChain> {
        self.chains.first()
    }

    fn empty(mode: CapacityMode, diagnostics: SearchDiagnostics) -> Self {
        SearchOutcome {
            chains: Vec::new(),
            truncation: TruncationFlags::default(),
            capacity_mode: mode,
            diagnostics,
            expansions: 0,
            elapsed: Duration::ZERO,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("request {0} is manual and excluded from search")]
    ManualRequest(RequestId),
}

struct SearchContext<'a> {
    request: &'a Request,
    state: &'a NetworkState,
    mode: CapacityMode,
    limits: SearchLimits,
    config: &'a TieBreakConfig,
    prefix: Vec<BlockId>,
    origin_group: GroupKey,
    destination_group: GroupKey,
    start: WallInstant,
    diagnostics: SearchDiagnostics,
}

impl<'a> SearchContext<'a> {
    fn new(
        request: &'a Request,
        state: &'a NetworkState,
        mode: CapacityMode,
        limits: SearchLimits,
        config: &'a TieBreakConfig,
    ) -> Result<Self, SearchError> {
        if request.is_manual() {
            return Err(SearchError::ManualRequest(request.id.clone()));
        }
        let origin_group = state.request_origin_group(request)?;
        let destination_group = state.request_destination_group(request)?;
        Ok(SearchContext {
            request,
            state,
            mode,
            limits,
            config,
            prefix: request.required_prefix.clone(),
            origin_group,
            destination_group,
            start: WallInstant::now(),
            diagnostics: SearchDiagnostics::default(),
        })
    }

    fn degenerate(&mut self) -> bool {
        if self.origin_group == self.destination_group {
            self.diagnostics.degenerate = true;
            return true;
        }
        false
    }

    fn out_of_time(&self) -> bool {
        self.start.elapsed() >= self.limits.time_budget
    }

    /// Whether a block is usable in the flexible part of a chain for this
    /// request, ignoring position-specific checks.
    fn block_usable(&mut self, block: &Block) -> Result<bool, LookupError> {
        if !block.flags.bookable || block.flags.manual {
            return Ok(false);
        }
        if !block_admits(block, self.request) {
            self.diagnostics.restriction += 1;
            return Ok(false);
        }
        if !block_has_capacity(block, self.request, self.state, self.mode)? {
            self.diagnostics.capacity += 1;
            return Ok(false);
        }
        Ok(true)
    }

    /// First flexible candidates: successors of the required prefix, or the
    /// blocks boarding at the request origin within the pickup window.
    fn start_blocks(&mut self) -> Result<Vec<BlockId>, LookupError> {
        let mut starts = Vec::new();
        if let Some(anchor) = self.prefix.last().cloned() {
            let anchor_block = self.state.block(&anchor)?;
            let group = self.state.block_destination_group(anchor_block)?;
            for bid in self.state.blocks_boarding_at(&group).to_vec() {
                if !chainable(&anchor, &bid, self.state)? {
                    self.diagnostics.transfer += 1;
                    continue;
                }
                let block = self.state.block(&bid)?;
                if self.block_usable(block)? {
                    starts.push(bid);
                }
            }
        } else {
            for bid in self.state.blocks_boarding_at(&self.origin_group).to_vec() {
                let block = self.state.block(&bid)?;
                if self.request.pickup_earliest > block.boarding_cutoff {
                    self.diagnostics.time += 1;
                    continue;
                }
                if self.block_usable(block)? {
                    starts.push(bid);
                }
            }
        }
        Ok(starts)
    }

    /// Flexible successors of a block: chainable, admitting, with capacity.
    fn successors(&mut self, from: &BlockId) -> Result<Vec<BlockId>, LookupError> {
        let from_block = self.state.block(from)?;
        let group = self.state.block_destination_group(from_block)?;
        let mut result = Vec::new();
        for bid in self.state.blocks_boarding_at(&group).to_vec() {
            if bid == *from {
                continue;
            }
            if !chainable(from, &bid, self.state)? {
                self.diagnostics.transfer += 1;
                continue;
            }
            let block = self.state.block(&bid)?;
            if self.block_usable(block)? {
                result.push(bid);
            }
        }
        Ok(result)
    }

    fn is_goal(&mut self, block: &Block) -> Result<bool, LookupError> {
        if self.state.block_destination_group(block)? != self.destination_group {
            return Ok(false);
        }
        if block.deboarding_ready > self.request.delivery_latest {
            self.diagnostics.time += 1;
            return Ok(false);
        }
        Ok(true)
    }

    fn full_chain(&self, path: &[BlockId]) -> TransportChain {
        let mut blocks = self.prefix.clone();
        blocks.extend_from_slice(path);
        TransportChain::with_split(blocks, self.prefix.len())
    }

    fn full_key(&self, path: &[BlockId]) -> Result<TieBreakKey, LookupError> {
        let mut blocks = self.prefix.clone();
        blocks.extend_from_slice(path);
        tiebreak_key(&blocks, self.config, self.state)
    }
}

/// Finds the tie-break-minimal valid chain via label-setting search on
/// blocks. If the block-level optimum contains a geographic loop it is
/// discarded and the result recomputed by enumeration, stopped at the
/// first chain.
pub fn find_best_chain(
    request: &Request,
    state: &NetworkState,
    mode: CapacityMode,
    limits: SearchLimits,
    config: &TieBreakConfig,
) -> Result<SearchOutcome, SearchError> {
    let mut ctx = SearchContext::new(request, state, mode, limits, config)?;
    if ctx.degenerate() {
        return Ok(SearchOutcome::empty(mode, ctx.diagnostics));
    }

    let mut labels: HashMap<BlockId, (TieBreakKey, Option<BlockId>, usize)> = HashMap::new();
    let mut settled: HashSet<BlockId> = HashSet::new();
    let mut heap: BinaryHeap<std::cmp::Reverse<(TieBreakKey, BlockId)>> = BinaryHeap::new();
    let mut truncation = TruncationFlags::default();
    let mut expansions: u64 = 0;
    let mut stored: usize = 0;

    let prefix_len = ctx.prefix.len();
    for bid in ctx.start_blocks()? {
        let key = ctx.full_key(std::slice::from_ref(&bid))?;
        let better = labels.get(&bid).map(|(k, _, _)| key < *k).unwrap_or(true);
        if better && prefix_len + 1 <= ctx.limits.max_blocks {
            labels.insert(bid.clone(), (key.clone(), None, 1));
            heap.push(std::cmp::Reverse((key, bid)));
            stored += 1;
        } else if prefix_len + 1 > ctx.limits.max_blocks {
            truncation.depth_limit = true;
        }
    }

    while let Some(std::cmp::Reverse((key, bid))) = heap.pop() {
        if settled.contains(&bid) {
            continue;
        }
        match labels.get(&bid) {
            Some((best, _, _)) if *best < key => continue,
            _ => {}
        }
        settled.insert(bid.clone());
        expansions += 1;
        if expansions % CLOCK_CHECK_INTERVAL == 0 && ctx.out_of_time() {
            truncation.time_limit = true;
            break;
        }

        let block = state.block(&bid)?;
        if ctx.is_goal(block)? {
            // Reconstruct the flexible path via parent pointers.
            let mut path = vec![bid.clone()];
            let mut cursor = bid.clone();
            while let Some((_, Some(parent), _)) = labels.get(&cursor) {
                path.push(parent.clone());
                cursor = parent.clone();
            }
            path.reverse();
            let chain = ctx.full_chain(&path);
            let flexible: Vec<&Block> = chain
                .flexible_part()
                .iter()
                .map(|b| state.block(b))
                .collect::<Result<_, _>>()?;
            if is_loop_free(&flexible, state)? {
                return Ok(SearchOutcome {
                    chains: vec![chain],
                    truncation,
                    capacity_mode: mode,
                    diagnostics: ctx.diagnostics,
                    expansions,
                    elapsed: ctx.start.elapsed(),
                });
            }
            // Loopy block-level optimum: fall back to enumeration, stopped
            // at the first chain candidate.
            let mut fallback_limits = limits;
            fallback_limits.max_chains = 1;
            fallback_limits.time_budget = limits.time_budget.saturating_sub(ctx.start.elapsed());
            let mut outcome = enumerate_chains(request, state, mode, fallback_limits, config)?;
            outcome.truncation.time_limit |= truncation.time_limit;
            outcome.truncation.frontier_limit |= truncation.frontier_limit;
            outcome.truncation.count_limit = false;
            outcome.chains.truncate(1);
            return Ok(outcome);
        }

        let depth = labels.get(&bid).map(|(_, _, d)| *d).unwrap_or(1);
        if prefix_len + depth >= ctx.limits.max_blocks {
            truncation.depth_limit = true;
            continue;
        }
        // Path to this block, for key computation of extensions.
        let mut path = vec![bid.clone()];
        let mut cursor = bid.clone();
        while let Some((_, Some(parent), _)) = labels.get(&cursor) {
            path.push(parent.clone());
            cursor = parent.clone();
        }
        path.reverse();
        for succ in ctx.successors(&bid)? {
            if settled.contains(&succ) {
                continue;
            }
            let mut extended = path.clone();
            extended.push(succ.clone());
            let succ_key = ctx.full_key(&extended)?;
            let better = labels.get(&succ).map(|(k, _, _)| succ_key < *k).unwrap_or(true);
            if better {
                if stored >= ctx.limits.max_frontier {
                    truncation.frontier_limit = true;
                    break;
                }
                labels.insert(succ.clone(), (succ_key.clone(), Some(bid.clone()), depth + 1));
                heap.push(std::cmp::Reverse((succ_key, succ)));
                stored += 1;
            }
        }
        if truncation.frontier_limit {
            break;
        }
    }

    Ok(SearchOutcome {
        chains: Vec::new(),
        truncation,
        capacity_mode: mode,
        diagnostics: ctx.diagnostics,
        expansions,
        elapsed: ctx.start.elapsed(),
    })
}

#[derive(Clone, PartialEq, Eq)]
struct Partial {
    key: TieBreakKey,
    path: Vec<BlockId>,
    visited: Vec<GroupKey>,
}

impl Ord for Partial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Enumerates all valid chains for the request in tie-break order, up to
/// the configured limits. Partial chains are kept loop-free by
/// construction, so the result set is exhaustive whenever no truncation
/// flag is set.
pub fn enumerate_chains(
    request: &Request,
    state: &NetworkState,
    mode: CapacityMode,
    limits: SearchLimits,
    config: &TieBreakConfig,
) -> Result<SearchOutcome, SearchError> {
    let mut ctx = SearchContext::new(request, state, mode, limits, config)?;
    if ctx.degenerate() {
        return Ok(SearchOutcome::empty(mode, ctx.diagnostics));
    }

    let mut heap: BinaryHeap<std::cmp::Reverse<Partial>> = BinaryHeap::new();
    let mut truncation = TruncationFlags::default();
    let mut completed: Vec<(TieBreakKey, TransportChain)> = Vec::new();
    let mut expansions: u64 = 0;

    let visited_root: Vec<GroupKey> = if let Some(anchor) = ctx.prefix.last() {
        let anchor_block = state.block(anchor)?;
        vec![state.block_destination_group(anchor_block)?]
    } else {
        vec![ctx.origin_group.clone()]
    };

    let prefix_len = ctx.prefix.len();
    if prefix_len < ctx.limits.max_blocks {
        for bid in ctx.start_blocks()? {
            let block = state.block(&bid)?;
            let origin = state.block_origin_group(block)?;
            let dest = state.block_destination_group(block)?;
            let mut visited = visited_root.clone();
            if dest != origin {
                if visited.contains(&dest) {
                    continue;
                }
                visited.push(dest);
            }
            let key = ctx.full_key(std::slice::from_ref(&bid))?;
            heap.push(std::cmp::Reverse(Partial { key, path: vec![bid], visited }));
        }
    } else {
        truncation.depth_limit = true;
    }

    'outer: while let Some(std::cmp::Reverse(partial)) = heap.pop() {
        expansions += 1;
        if expansions % CLOCK_CHECK_INTERVAL == 0 && ctx.out_of_time() {
            truncation.time_limit = true;
            break;
        }
        let last = partial.path.last().unwrap().clone();
        let block = state.block(&last)?;
        if state.block_destination_group(block)? == ctx.destination_group {
            if block.deboarding_ready <= ctx.request.delivery_latest {
                completed.push((partial.key.clone(), ctx.full_chain(&partial.path)));
                if completed.len() >= ctx.limits.max_chains {
                    truncation.count_limit = true;
                    break;
                }
            } else {
                ctx.diagnostics.time += 1;
            }
            // The destination group is visited; any extension would have
            // to revisit it to come back, so complete chains are maximal.
            continue;
        }
        if prefix_len + partial.path.len() >= ctx.limits.max_blocks {
            truncation.depth_limit = true;
            continue;
        }
        for succ in ctx.successors(&last)? {
            if partial.path.contains(&succ) {
                continue;
            }
            let succ_block = state.block(&succ)?;
            let origin = state.block_origin_group(succ_block)?;
            let dest = state.block_destination_group(succ_block)?;
            let mut visited = partial.visited.clone();
            if dest != origin {
                if visited.contains(&dest) {
                    continue;
                }
                visited.push(dest);
            }
            let mut path = partial.path.clone();
            path.push(succ);
            let key = ctx.full_key(&path)?;
            if heap.len() >= ctx.limits.max_frontier {
                truncation.frontier_limit = true;
                break 'outer;
            }
            heap.push(std::cmp::Reverse(Partial { key, path, visited }));
        }
    }

    completed.sort();
    completed.dedup();
    let chains = completed.into_iter().map(|(_, c)| c).collect();
    Ok(SearchOutcome {
        chains,
        truncation,
        capacity_mode: mode,
        diagnostics: ctx.diagnostics,
        expansions,
        elapsed: ctx.start.elapsed(),
    })
}
