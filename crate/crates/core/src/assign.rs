//! Staged online assignment: best chain in isolation, best chain under
//! capacities, full enumeration, then re-optimization over the first
//! neighborhood, each stage followed by a try-optimization shortcut.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant as WallInstant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::*;
use crate::opt::{build_model, solve, Assignment, CandidateInput};
use crate::search::{enumerate_chains, find_best_chain, SearchLimits, TieBreakConfig};

pub const PICKUP_BUCKET_MINUTES: i64 = 15;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    IsolatedBfs,
    CapacityBfs,
    AllChains,
    Neighborhood,
}

impl Stage {
    pub fn uses_enumeration(&self) -> bool {
        matches!(self, Stage::AllChains | Stage::Neighborhood)
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "result")]
pub enum RequestResult {
    Routed { chain: TransportChain, stage: Stage },
    NotRoutable,
    NoCapacity,
    TimeoutPartial,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub isolated_bfs: Duration,
    pub capacity_bfs: Duration,
    pub all_chains: Duration,
    pub neighborhood: Duration,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StageCounters {
    pub best_chain_searches: u64,
    pub enumerations: u64,
    pub optimizations: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

/// Result of one `assign` call: every input request appears exactly once.
#[derive(Clone, Debug)]
pub struct AssignmentOutcome {
    pub results: BTreeMap<RequestId, RequestResult>,
    pub timings: StageTimings,
    pub counters: StageCounters,
    /// Neighborhood members moved to a different chain.
    pub rerouted: BTreeMap<RequestId, TransportChain>,
}

impl AssignmentOutcome {
    pub fn routed_count(&self) -> usize {
        self.results.values().filter(|r| matches!(r, RequestResult::Routed { .. })).count()
    }
}

#[derive(Clone, Debug)]
pub struct AssignConfig {
    pub search_limits: SearchLimits,
    pub tiebreak: TieBreakConfig,
    /// Global wall-clock budget, checked between stages and passed down
    /// into searches.
    pub time_budget: Duration,
    /// Budget per optimization run.
    pub solve_budget: Duration,
    /// How many neighborhood rings to pull into the final model.
    pub neighborhood_depth: usize,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            search_limits: SearchLimits::default(),
            tiebreak: TieBreakConfig::default(),
            time_budget: Duration::from_secs(30),
            solve_budget: Duration::from_secs(10),
            neighborhood_depth: 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum AssignError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("request {0} is manual and cannot be assigned automatically")]
    ManualRequest(RequestId),
}

/// Cache key for enumerated chains: requests agreeing on every component
/// see the same chain set.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CacheKey {
    pub origin_group: GroupKey,
    pub destination_group: GroupKey,
    pub pickup_bucket: i64,
    pub delivery_latest: Instant,
    /// Digest over the request attributes referenced by any restriction in
    /// the network.
    pub attribute_digest: u64,
    pub prefix_digest: u64,
}

impl CacheKey {
    pub fn for_request(request: &Request, state: &NetworkState) -> Result<CacheKey, LookupError> {
        let mut relevant: BTreeSet<RestrictionAttribute> = BTreeSet::new();
        for block in state.blocks.values() {
            for restriction in &block.restrictions {
                relevant.insert(restriction.attribute);
            }
        }
        let mut hasher = DefaultHasher::new();
        for attribute in relevant {
            attribute.hash(&mut hasher);
            request.attribute_value(attribute).hash(&mut hasher);
        }
        let attribute_digest = hasher.finish();
        let mut hasher = DefaultHasher::new();
        request.required_prefix.hash(&mut hasher);
        let prefix_digest = hasher.finish();
        Ok(CacheKey {
            origin_group: state.request_origin_group(request)?,
            destination_group: state.request_destination_group(request)?,
            pickup_bucket: request.pickup_earliest.div_euclid(PICKUP_BUCKET_MINUTES),
            delivery_latest: request.delivery_latest,
            attribute_digest,
            prefix_digest,
        })
    }
}

/// Version-tagged store of isolation-mode enumerations. Entries from any
/// other state version are never served; capacity is re-checked at use.
#[derive(Clone, Debug, Default)]
pub struct ChainCache {
    entries: HashMap<CacheKey, (u64, Vec<TransportChain>)>,
    pub hits: u64,
    pub misses: u64,
}

impl ChainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&mut self, key: &CacheKey, version: u64) -> Option<Vec<TransportChain>> {
        match self.entries.get(key) {
            Some((tag, chains)) if *tag == version => {
                self.hits += 1;
                Some(chains.clone())
            }
            _ => {
                self.misses += 1;
                None
            }
        }
    }

    pub fn store(&mut self, key: CacheKey, version: u64, chains: Vec<TransportChain>) {
        self.entries.insert(key, (version, chains));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The first neighborhood of a chain set: all requests (manual and
/// `exclude` members aside) whose current chain shares a segment with any
/// chain in `chains`.
pub fn neighborhood(
    chains: &[TransportChain],
    state: &NetworkState,
    exclude: &BTreeSet<RequestId>,
) -> Result<BTreeSet<RequestId>, LookupError> {
    let mut touched: BTreeSet<SegmentId> = BTreeSet::new();
    for chain in chains {
        for bid in &chain.blocks {
            touched.extend(state.block(bid)?.segments.iter().cloned());
        }
    }
    let mut members = BTreeSet::new();
    for request in state.requests.values() {
        if request.is_manual() || exclude.contains(&request.id) {
            continue;
        }
        let Some(chain) = request.current_chain() else { continue };
        'chain: for bid in &chain.blocks {
            for sid in &state.block(bid)?.segments {
                if touched.contains(sid) {
                    members.insert(request.id.clone());
                    break 'chain;
                }
            }
        }
    }
    Ok(members)
}

#[derive(Clone, Debug)]
pub struct TryOptOutcome {
    pub routed: BTreeMap<RequestId, TransportChain>,
    pub unrouted: BTreeSet<RequestId>,
    /// Every model member obtained a chain.
    pub success: bool,
    pub assignment: Option<Assignment>,
}

/// Runs the throughput model over the inputs. The fixed set is implied by
/// the inputs' `fixed` flags; every other request currently holding a
/// chain is untouchable. Build errors degrade to "nothing routed".
pub fn try_optimization(
    inputs: &[CandidateInput],
    state: &NetworkState,
    budget: Duration,
) -> TryOptOutcome {
    let input_ids: BTreeSet<&RequestId> = inputs.iter().map(|i| &i.request).collect();
    let untouchable: Vec<RequestId> = state
        .requests
        .values()
        .filter(|r| r.current_chain().is_some() && !input_ids.contains(&r.id))
        .map(|r| r.id.clone())
        .collect();
    let model = match build_model(inputs, state, &untouchable) {
        Ok(model) => model,
        Err(_) => {
            return TryOptOutcome {
                routed: BTreeMap::new(),
                unrouted: inputs.iter().map(|i| i.request.clone()).collect(),
                success: inputs.is_empty(),
                assignment: None,
            };
        }
    };
    let assignment = solve(&model, budget);
    let routed = assignment.routed.clone();
    let unrouted = assignment.unrouted.clone();
    TryOptOutcome { success: unrouted.is_empty(), routed, unrouted, assignment: Some(assignment) }
}

struct AssignRun<'a> {
    state: &'a mut NetworkState,
    config: &'a AssignConfig,
    cache: &'a mut ChainCache,
    deadline: WallInstant,
    counters: StageCounters,
    timings: StageTimings,
    /// Chains held by neighborhood members before the call, to report
    /// reroutes.
    previous: BTreeMap<RequestId, TransportChain>,
}

impl<'a> AssignRun<'a> {
    fn remaining(&self) -> Duration {
        self.deadline.saturating_duration_since(WallInstant::now())
    }

    fn expired(&self) -> bool {
        self.remaining().is_zero()
    }

    fn limits(&self) -> SearchLimits {
        SearchLimits { time_budget: self.remaining().min(self.config.search_limits.time_budget), ..self.config.search_limits }
    }

    /// Isolation-mode enumeration through the cache.
    fn enumerate_cached(&mut self, id: &RequestId) -> Result<Vec<TransportChain>, AssignError> {
        let request = self.state.request(id)?.clone();
        let key = CacheKey::for_request(&request, self.state)?;
        let version = self.state.version();
        if let Some(chains) = self.cache.lookup(&key, version) {
            self.counters.cache_hits += 1;
            // Served chains must still validate in isolation mode.
            let chains: Vec<TransportChain> = chains
                .into_iter()
                .filter(|c| {
                    validate_chain(&request, c, self.state, CapacityMode::Ignore)
                        .map(|v| v.is_ok())
                        .unwrap_or(false)
                })
                .collect();
            return Ok(chains);
        }
        self.counters.cache_misses += 1;
        self.counters.enumerations += 1;
        let outcome = enumerate_chains(
            &request,
            self.state,
            CapacityMode::Ignore,
            self.limits(),
            &self.config.tiebreak,
        )
        .map_err(|e| match e {
            crate::search::SearchError::Lookup(e) => AssignError::Lookup(e),
            crate::search::SearchError::ManualRequest(id) => AssignError::ManualRequest(id),
        })?;
        self.cache.store(key, version, outcome.chains.clone());
        Ok(outcome.chains)
    }

    fn best_chain(&mut self, id: &RequestId, mode: CapacityMode) -> Result<Option<TransportChain>, AssignError> {
        self.counters.best_chain_searches += 1;
        let request = self.state.request(id)?.clone();
        let outcome = find_best_chain(&request, self.state, mode, self.limits(), &self.config.tiebreak)
            .map_err(|e| match e {
                crate::search::SearchError::Lookup(e) => AssignError::Lookup(e),
                crate::search::SearchError::ManualRequest(id) => AssignError::ManualRequest(id),
            })?;
        Ok(outcome.best().cloned())
    }

    fn try_optimization(&mut self, inputs: &[CandidateInput]) -> TryOptOutcome {
        self.counters.optimizations += 1;
        let budget = self.config.solve_budget.min(self.remaining().max(Duration::from_millis(1)));
        try_optimization(inputs, self.state, budget)
    }

    /// Applies a model result to the state and labels the target requests.
    fn apply(
        &mut self,
        outcome: &TryOptOutcome,
        targets: &BTreeSet<RequestId>,
        stage: Stage,
        results: &mut BTreeMap<RequestId, RequestResult>,
        rerouted: &mut BTreeMap<RequestId, TransportChain>,
    ) -> Result<(), AssignError> {
        for (id, chain) in &outcome.routed {
            let unchanged = self.state.request(id)?.current_chain() == Some(chain);
            if !unchanged {
                self.state
                    .set_request_status(id, RequestStatus::Assigned { chain: chain.clone() })?;
            }
            if targets.contains(id) {
                results.insert(id.clone(), RequestResult::Routed { chain: chain.clone(), stage });
            } else if self.previous.get(id) != Some(chain) {
                rerouted.insert(id.clone(), chain.clone());
            }
        }
        Ok(())
    }
}

/// Algorithm "Assignment": routes `new_requests` through the staged
/// pipeline, mutating the state with the final result. Previously assigned
/// requests never lose their chains; neighborhood members may be rerouted
/// onto different chains that still meet their time windows.
pub fn assign(
    new_requests: &[RequestId],
    state: &mut NetworkState,
    config: &AssignConfig,
    cache: &mut ChainCache,
) -> Result<AssignmentOutcome, AssignError> {
    let start = WallInstant::now();
    for id in new_requests {
        let request = state.request(id)?;
        if request.is_manual() {
            return Err(AssignError::ManualRequest(id.clone()));
        }
    }

    let mut run = AssignRun {
        state,
        config,
        cache,
        deadline: start + config.time_budget,
        counters: StageCounters::default(),
        timings: StageTimings::default(),
        previous: BTreeMap::new(),
    };

    let mut results: BTreeMap<RequestId, RequestResult> = BTreeMap::new();
    let mut rerouted: BTreeMap<RequestId, TransportChain> = BTreeMap::new();
    let mut candidates: BTreeMap<RequestId, Vec<TransportChain>> = BTreeMap::new();

    // Step 1: best chains in isolation. Requests without one are not
    // routable and leave the call.
    let stage_start = WallInstant::now();
    let mut live: Vec<RequestId> = Vec::new();
    for id in new_requests {
        match run.best_chain(id, CapacityMode::Ignore)? {
            Some(chain) => {
                candidates.insert(id.clone(), vec![chain]);
                live.push(id.clone());
            }
            None => {
                results.insert(id.clone(), RequestResult::NotRoutable);
            }
        }
    }
    let live_set: BTreeSet<RequestId> = live.iter().cloned().collect();
    let finish = |run: AssignRun, results: BTreeMap<RequestId, RequestResult>, rerouted| AssignmentOutcome {
        results,
        timings: run.timings,
        counters: run.counters,
        rerouted,
    };
    if live.is_empty() {
        run.timings.isolated_bfs = stage_start.elapsed();
        return Ok(finish(run, results, rerouted));
    }

    let inputs_for = |run: &AssignRun,
                      ids: &[RequestId],
                      candidates: &BTreeMap<RequestId, Vec<TransportChain>>|
     -> Result<Vec<CandidateInput>, AssignError> {
        ids.iter()
            .map(|id| {
                let request = run.state.request(id)?;
                let mut chains = candidates.get(id).cloned().unwrap_or_default();
                // A request already holding a chain is fixed (Eq. (2));
                // its current chain stays available as a candidate.
                let fixed = request.current_chain().is_some();
                if let Some(current) = request.current_chain() {
                    if !chains.iter().any(|c| c.blocks == current.blocks) {
                        chains.push(current.clone());
                    }
                }
                Ok(CandidateInput { request: id.clone(), chains, fixed })
            })
            .collect()
    };

    let mut last_opt = run.try_optimization(&inputs_for(&run, &live, &candidates)?);
    run.timings.isolated_bfs = stage_start.elapsed();
    if last_opt.success || run.expired() {
        run.apply(&last_opt, &live_set, Stage::IsolatedBfs, &mut results, &mut rerouted)?;
        for id in &live {
            results.entry(id.clone()).or_insert(RequestResult::TimeoutPartial);
        }
        return Ok(finish(run, results, rerouted));
    }

    // Step 2: best chains respecting capacities for the still-unrouted. A
    // request without one sends the call straight to the neighborhood.
    let stage_start = WallInstant::now();
    let mut neighborhood_search = true;
    for id in &live {
        if !last_opt.unrouted.contains(id) {
            continue;
        }
        match run.best_chain(id, CapacityMode::Respect)? {
            Some(chain) => {
                let list = candidates.get_mut(id).unwrap();
                if !list.contains(&chain) {
                    list.push(chain);
                }
            }
            None => {
                neighborhood_search = false;
                break;
            }
        }
    }
    if neighborhood_search {
        last_opt = run.try_optimization(&inputs_for(&run, &live, &candidates)?);
        run.timings.capacity_bfs = stage_start.elapsed();
        if last_opt.success || run.expired() {
            run.apply(&last_opt, &live_set, Stage::CapacityBfs, &mut results, &mut rerouted)?;
            for id in &live {
                results.entry(id.clone()).or_insert(RequestResult::TimeoutPartial);
            }
            return Ok(finish(run, results, rerouted));
        }

        // Step 3: all chains for every live request, capacity-screened.
        let stage_start = WallInstant::now();
        for id in &live {
            let request = run.state.request(id)?.clone();
            let all = run.enumerate_cached(id)?;
            let list = candidates.get_mut(id).unwrap();
            for chain in all {
                let feasible = validate_chain(&request, &chain, run.state, CapacityMode::Respect)
                    .map(|v| v.is_ok())
                    .unwrap_or(false);
                if feasible && !list.contains(&chain) {
                    list.push(chain);
                }
            }
        }
        last_opt = run.try_optimization(&inputs_for(&run, &live, &candidates)?);
        run.timings.all_chains = stage_start.elapsed();
        if last_opt.success || run.expired() {
            run.apply(&last_opt, &live_set, Stage::AllChains, &mut results, &mut rerouted)?;
            for id in &live {
                results.entry(id.clone()).or_insert(RequestResult::TimeoutPartial);
            }
            return Ok(finish(run, results, rerouted));
        }
    } else {
        run.timings.capacity_bfs = stage_start.elapsed();
    }

    // Step 4: pull in the neighborhood of every candidate chain and
    // re-optimize; members may be rerouted but never unrouted.
    let stage_start = WallInstant::now();
    let mut chain_pool: Vec<TransportChain> = candidates.values().flatten().cloned().collect();
    let mut members: BTreeSet<RequestId> = BTreeSet::new();
    let mut member_chains: BTreeMap<RequestId, Vec<TransportChain>> = BTreeMap::new();
    for _ in 0..run.config.neighborhood_depth.max(1) {
        let ring = neighborhood(&chain_pool, run.state, &live_set)?;
        let new_members: Vec<RequestId> = ring.difference(&members).cloned().collect();
        if new_members.is_empty() {
            break;
        }
        for id in &new_members {
            // The next ring grows through everywhere this member could
            // move, not just where it sits.
            let mut chains = run.enumerate_cached(id)?;
            if let Some(current) = run.state.request(id)?.current_chain() {
                run.previous.insert(id.clone(), current.clone());
                if !chains.iter().any(|c| c.blocks == current.blocks) {
                    chains.push(current.clone());
                }
            }
            chain_pool.extend(chains.iter().cloned());
            member_chains.insert(id.clone(), chains);
        }
        members.extend(new_members);
    }
    let mut inputs = inputs_for(&run, &live, &candidates)?;
    for (id, chains) in member_chains {
        inputs.push(CandidateInput { request: id, chains, fixed: true });
    }
    last_opt = run.try_optimization(&inputs);
    run.timings.neighborhood = stage_start.elapsed();
    run.apply(&last_opt, &live_set, Stage::Neighborhood, &mut results, &mut rerouted)?;
    for id in &live {
        // Anything still unrouted had an isolation chain, so capacity is
        // what blocks it.
        results.entry(id.clone()).or_insert(RequestResult::NoCapacity);
    }
    Ok(finish(run, results, rerouted))
}

/// Sequential greedy baseline: each request takes its best
/// capacity-respecting chain or is rejected, in input order.
pub fn greedy_assign(
    new_requests: &[RequestId],
    state: &mut NetworkState,
    limits: SearchLimits,
    tiebreak: &TieBreakConfig,
) -> Result<BTreeMap<RequestId, Option<TransportChain>>, AssignError> {
    let mut results = BTreeMap::new();
    for id in new_requests {
        let request = state.request(id)?.clone();
        let outcome = find_best_chain(&request, state, CapacityMode::Respect, limits, tiebreak)
            .map_err(|e| match e {
                crate::search::SearchError::Lookup(e) => AssignError::Lookup(e),
                crate::search::SearchError::ManualRequest(id) => AssignError::ManualRequest(id),
            })?;
        match outcome.best() {
            Some(chain) => {
                state.set_request_status(id, RequestStatus::Assigned { chain: chain.clone() })?;
                results.insert(id.clone(), Some(chain.clone()));
            }
            None => {
                results.insert(id.clone(), None);
            }
        }
    }
    Ok(results)
}
