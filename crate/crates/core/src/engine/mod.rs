//! The in-process engine behind the state service and the simulator:
//! message ingestion with deferred computation, chain revalidation on
//! network change, bookings, dry-runs, and the two-class task queue.

mod message;

pub use message::{
    epoch, from_instant, to_instant, Envelope, Message, WireBlock, WireRequest, WireSegment,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{
    assign, AssignConfig, AssignError, ChainCache, RequestResult, Stage, StageCounters,
    StageTimings,
};
use crate::model::*;
use crate::search::{enumerate_chains, find_best_chain, SearchDiagnostics, TruncationFlags};

/// Delivery window per product type, in minutes from pickup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductTable {
    pub windows: BTreeMap<String, i64>,
    pub default_window: i64,
}

impl Default for ProductTable {
    fn default() -> Self {
        ProductTable {
            windows: BTreeMap::from([("express".to_string(), 29 * 60)]),
            default_window: 72 * 60,
        }
    }
}

impl ProductTable {
    pub fn window_for(&self, request: &WireRequest) -> i64 {
        request
            .attributes
            .get(&RestrictionAttribute::ProductType)
            .and_then(|p| self.windows.get(p))
            .copied()
            .unwrap_or(self.default_window)
    }
}

#[derive(Clone, Debug, Default)]
pub struct EngineConfig {
    pub assign: AssignConfig,
    pub products: ProductTable,
}

/// Machine-readable rejection, mirrored by the HTTP error body.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Rejection {
    pub code: String,
    pub reason: String,
    #[serde(default)]
    pub details: Vec<String>,
}

impl Rejection {
    pub fn new(code: &str, reason: impl Into<String>) -> Self {
        Rejection { code: code.to_string(), reason: reason.into(), details: Vec::new() }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("{}: {}", .0.code, .0.reason)]
    Rejected(Rejection),
}

impl From<AssignError> for EngineError {
    fn from(e: AssignError) -> Self {
        match e {
            AssignError::Lookup(e) => EngineError::Lookup(e),
            AssignError::ManualRequest(id) => EngineError::Rejected(Rejection::new(
                "manual-request",
                format!("request {id} is manual"),
            )),
        }
    }
}

fn reject(code: &str, reason: impl Into<String>) -> EngineError {
    EngineError::Rejected(Rejection::new(code, reason))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EngineTask {
    /// Interactive: route one request.
    Assign(RequestId),
    /// Background: revalidate affected requests.
    Revalidate(Vec<RequestId>),
}

#[derive(Clone, Debug, Serialize)]
pub struct ApplyReport {
    pub kind: &'static str,
    /// Requests whose chains touch the changed objects.
    pub affected: Vec<RequestId>,
    pub enqueued: usize,
    pub parked: usize,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "outcome")]
pub enum BookingOutcome {
    Routed { chain: TransportChain, promised_arrival: Instant, stage: Stage },
    NotRoutable,
    NoCapacity,
    Timeout,
}

#[derive(Clone, Debug, Serialize)]
pub struct BookingResponse {
    pub request: RequestId,
    #[serde(flatten)]
    pub outcome: BookingOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum RevalidationAction {
    /// Chain still fully valid; no search executed.
    Unchanged,
    /// Truncated and re-completed to the destination.
    Recompleted { chain: TransportChain },
    /// Truncated; no completion found, partial chain kept.
    Truncated { chain: TransportChain },
    /// Nothing feasible remains; back to unassigned and re-enqueued.
    Unassigned,
}

#[derive(Clone, Debug, Serialize)]
pub struct RevalidationReport {
    pub request: RequestId,
    pub action: RevalidationAction,
}

#[derive(Clone, Debug)]
pub enum TaskReport {
    Assigned {
        request: RequestId,
        result: RequestResult,
        rerouted: BTreeMap<RequestId, TransportChain>,
    },
    Revalidated(Vec<RevalidationReport>),
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct EngineStats {
    pub messages: BTreeMap<String, u64>,
    pub rejected_messages: u64,
    pub assignments: u64,
    /// Final per-request results, by tag.
    pub outcomes: BTreeMap<String, u64>,
    /// Routed results by resolving stage.
    pub stage_routed: BTreeMap<String, u64>,
    pub best_chain_searches: u64,
    pub enumerations: u64,
    pub optimizations: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub revalidations: u64,
    pub truncations: u64,
    pub time_isolated_bfs: Duration,
    pub time_capacity_bfs: Duration,
    pub time_all_chains: Duration,
    pub time_neighborhood: Duration,
}

impl EngineStats {
    fn absorb_counters(&mut self, counters: &StageCounters, timings: &StageTimings) {
        self.best_chain_searches += counters.best_chain_searches;
        self.enumerations += counters.enumerations;
        self.optimizations += counters.optimizations;
        self.cache_hits += counters.cache_hits;
        self.cache_misses += counters.cache_misses;
        self.time_isolated_bfs += timings.isolated_bfs;
        self.time_capacity_bfs += timings.capacity_bfs;
        self.time_all_chains += timings.all_chains;
        self.time_neighborhood += timings.neighborhood;
    }

    fn absorb_result(&mut self, result: &RequestResult) {
        let tag = match result {
            RequestResult::Routed { stage, .. } => {
                let stage_tag = match stage {
                    Stage::IsolatedBfs => "isolated-bfs",
                    Stage::CapacityBfs => "capacity-bfs",
                    Stage::AllChains => "all-chains",
                    Stage::Neighborhood => "neighborhood",
                };
                *self.stage_routed.entry(stage_tag.to_string()).or_insert(0) += 1;
                "routed"
            }
            RequestResult::NotRoutable => "not-routable",
            RequestResult::NoCapacity => "no-capacity",
            RequestResult::TimeoutPartial => "timeout-partial",
        };
        *self.outcomes.entry(tag.to_string()).or_insert(0) += 1;
    }
}

/// Fig. 5-style snapshot: state sizes plus the counters.
#[derive(Clone, Debug, Serialize)]
pub struct StatsSnapshot {
    pub stations: usize,
    pub trains: usize,
    pub segments: usize,
    pub blocks: usize,
    pub connections: usize,
    pub requests: usize,
    pub version: u64,
    pub pending_tasks: usize,
    pub parked_tasks: usize,
    pub counters: EngineStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct DryRunReport {
    pub chains: Vec<TransportChain>,
    pub truncation: TruncationFlags,
    pub diagnostics: SearchDiagnostics,
    /// Dominant infeasibility reason when no chain exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<&'static str>,
}

pub struct Engine {
    pub config: EngineConfig,
    state: NetworkState,
    cache: ChainCache,
    stats: EngineStats,
    interactive: VecDeque<EngineTask>,
    background: VecDeque<EngineTask>,
    parked: VecDeque<EngineTask>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Engine {
        Engine {
            config,
            state: NetworkState::new(),
            cache: ChainCache::new(),
            stats: EngineStats::default(),
            interactive: VecDeque::new(),
            background: VecDeque::new(),
            parked: VecDeque::new(),
        }
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn pending_tasks(&self) -> usize {
        self.interactive.len() + self.background.len()
    }

    pub fn parked_tasks(&self) -> usize {
        self.parked.len()
    }

    pub fn snapshot_stats(&self) -> StatsSnapshot {
        StatsSnapshot {
            stations: self.state.stations.len(),
            trains: self.state.trains.len(),
            segments: self.state.segments.len(),
            blocks: self.state.blocks.len(),
            connections: self.state.connections.len(),
            requests: self.state.requests.len(),
            version: self.state.version(),
            pending_tasks: self.pending_tasks(),
            parked_tasks: self.parked.len(),
            counters: self.stats.clone(),
        }
    }

    fn enqueue(&mut self, task: EngineTask, defer: bool) -> (usize, usize) {
        if defer {
            self.parked.push_back(task);
            (0, 1)
        } else {
            match &task {
                EngineTask::Assign(_) => self.interactive.push_back(task),
                EngineTask::Revalidate(_) => self.background.push_back(task),
            }
            (1, 0)
        }
    }

    /// Requests (non-manual, holding a chain) whose chain contains any of
    /// the given blocks, plus every partial request — partial chains are
    /// re-completed whenever the network changes around them.
    fn affected_by_blocks(&self, blocks: &BTreeSet<BlockId>) -> Vec<RequestId> {
        let mut affected: Vec<RequestId> = Vec::new();
        for request in self.state.requests.values() {
            if request.is_manual() {
                continue;
            }
            let hit = match request.current_chain() {
                Some(chain) => {
                    matches!(request.status, RequestStatus::Partial { .. })
                        || chain.blocks.iter().any(|b| blocks.contains(b))
                }
                None => false,
            };
            if hit {
                affected.push(request.id.clone());
            }
        }
        self.order_by_promise(&mut affected);
        affected
    }

    fn affected_by_segment(&self, segment: &SegmentId) -> Vec<RequestId> {
        let blocks: BTreeSet<BlockId> = self
            .state
            .blocks
            .values()
            .filter(|b| b.segments.contains(segment))
            .map(|b| b.id.clone())
            .collect();
        self.affected_by_blocks(&blocks)
    }

    /// Earliest promised arrivals are revalidated first.
    fn order_by_promise(&self, requests: &mut [RequestId]) {
        let promise = |id: &RequestId| -> Instant {
            self.state
                .request(id)
                .ok()
                .and_then(|r| r.current_chain())
                .and_then(|c| c.blocks.last().cloned())
                .and_then(|b| self.state.block(&b).ok().map(|b| b.deboarding_ready))
                .unwrap_or(Instant::MAX)
        };
        requests.sort_by_key(|id| (promise(id), id.clone()));
    }

    /// Applies one synchronization message atomically: references are
    /// checked before any mutation, the version is bumped, and affected
    /// requests are enqueued for revalidation (parked when deferred).
    pub fn apply(&mut self, message: Message, defer: bool) -> Result<ApplyReport, EngineError> {
        let kind = message.kind();
        let result = self.apply_inner(message, defer);
        match &result {
            Ok(_) => {
                *self.stats.messages.entry(kind.to_string()).or_insert(0) += 1;
            }
            Err(_) => {
                self.stats.rejected_messages += 1;
            }
        }
        result
    }

    fn apply_inner(&mut self, message: Message, defer: bool) -> Result<ApplyReport, EngineError> {
        let kind = message.kind();
        let mut affected: Vec<RequestId> = Vec::new();
        let mut enqueued = 0;
        let mut parked = 0;
        let mut queue = |engine: &mut Engine, task: EngineTask| {
            let (e, p) = engine.enqueue(task, defer);
            enqueued += e;
            parked += p;
        };

        match message {
            Message::InitState { stations, trains, segments, blocks, connections, requests } => {
                let mut state = NetworkState::new();
                for station in stations {
                    state.upsert_station(station);
                }
                for train in trains {
                    state.upsert_train(train);
                }
                for segment in segments {
                    state.upsert_segment(segment.into());
                }
                for block in blocks {
                    state.upsert_block(block.into());
                }
                for connection in connections {
                    state.upsert_connection(connection);
                }
                let window = &self.config.products;
                let mut ids = Vec::new();
                for request in requests {
                    let minutes = window.window_for(&request);
                    let request = request.into_request(minutes);
                    ids.push(request.id.clone());
                    state.upsert_request(request);
                }
                state.bump_version();
                self.state = state;
                self.cache = ChainCache::new();
                self.interactive.clear();
                self.background.clear();
                self.parked.clear();
                for id in ids {
                    queue(self, EngineTask::Assign(id));
                }
            }
            Message::UpsertTrain { train } => {
                self.state.upsert_train(train);
                self.state.bump_version();
            }
            Message::DeleteTrain { id } => {
                let removed = self
                    .state
                    .delete_train(&id)
                    .map_err(|e| reject("unknown-reference", e.to_string()))?;
                self.state.bump_version();
                affected = self.affected_by_blocks(&removed.into_iter().collect());
                if !affected.is_empty() {
                    queue(self, EngineTask::Revalidate(affected.clone()));
                }
            }
            Message::UpsertSegment { segment } => {
                let segment: Segment = segment.into();
                for station in [&segment.from, &segment.to] {
                    self.state
                        .station(station)
                        .map_err(|e| reject("unknown-reference", e.to_string()))?;
                }
                self.state.upsert_segment(segment.clone());
                self.state.bump_version();
                affected = self.affected_by_segment(&segment.id);
                if !affected.is_empty() {
                    queue(self, EngineTask::Revalidate(affected.clone()));
                }
            }
            Message::UpsertBlock { block } => {
                let block: Block = block.into();
                for segment in &block.segments {
                    self.state
                        .segment(segment)
                        .map_err(|e| reject("unknown-reference", e.to_string()))?;
                }
                for station in [&block.origin, &block.destination] {
                    self.state
                        .station(station)
                        .map_err(|e| reject("unknown-reference", e.to_string()))?;
                }
                let id = block.id.clone();
                self.state.upsert_block(block);
                self.state.bump_version();
                affected = self.affected_by_blocks(&BTreeSet::from([id]));
                if !affected.is_empty() {
                    queue(self, EngineTask::Revalidate(affected.clone()));
                }
            }
            Message::UpsertConnection { connection } => {
                for block in [&connection.from, &connection.to] {
                    self.state
                        .block(block)
                        .map_err(|e| reject("unknown-reference", e.to_string()))?;
                }
                let pair = BTreeSet::from([connection.from.clone(), connection.to.clone()]);
                self.state.upsert_connection(connection);
                self.state.bump_version();
                affected = self.affected_by_blocks(&pair);
                if !affected.is_empty() {
                    queue(self, EngineTask::Revalidate(affected.clone()));
                }
            }
            Message::UpsertRestriction { block, restrictions } => {
                let mut target = self
                    .state
                    .block(&block)
                    .map_err(|e| reject("unknown-reference", e.to_string()))?
                    .clone();
                target.restrictions = restrictions;
                self.state.upsert_block(target);
                self.state.bump_version();
                affected = self.affected_by_blocks(&BTreeSet::from([block]));
                if !affected.is_empty() {
                    queue(self, EngineTask::Revalidate(affected.clone()));
                }
            }
            Message::UpsertReservation { block, reservation } => {
                let mut target = self
                    .state
                    .block(&block)
                    .map_err(|e| reject("unknown-reference", e.to_string()))?
                    .clone();
                target.reservations = reservation;
                self.state.upsert_block(target);
                self.state.bump_version();
                affected = self.affected_by_blocks(&BTreeSet::from([block]));
                if !affected.is_empty() {
                    queue(self, EngineTask::Revalidate(affected.clone()));
                }
            }
            Message::BookRequest { request } => {
                if self.state.request(&request.id).is_ok() {
                    return Err(reject(
                        "duplicate-request",
                        format!("request {} already exists", request.id),
                    ));
                }
                for station in [&request.origin, &request.destination] {
                    self.state
                        .station(station)
                        .map_err(|e| reject("unknown-reference", e.to_string()))?;
                }
                let minutes = self.config.products.window_for(&request);
                let request = request.into_request(minutes);
                let id = request.id.clone();
                self.state.upsert_request(request);
                self.state.bump_version();
                queue(self, EngineTask::Assign(id));
            }
            Message::UpdateRequest { request } => {
                let existing = self
                    .state
                    .request(&request.id)
                    .map_err(|e| reject("unknown-reference", e.to_string()))?
                    .clone();
                let minutes = self.config.products.window_for(&request);
                let mut updated = request.into_request(minutes);
                updated.status = existing.status;
                let id = updated.id.clone();
                self.state.upsert_request(updated);
                self.state.bump_version();
                affected = vec![id.clone()];
                let task = if self.state.request(&id)?.current_chain().is_some() {
                    EngineTask::Revalidate(vec![id])
                } else {
                    EngineTask::Assign(id)
                };
                queue(self, task);
            }
            Message::CancelRequest { id } => {
                self.state
                    .remove_request(&id)
                    .map_err(|e| reject("unknown-reference", e.to_string()))?;
                self.state.bump_version();
            }
            Message::ManualChain { id, chain } => {
                self.state
                    .request(&id)
                    .map_err(|e| reject("unknown-reference", e.to_string()))?;
                if let Some(chain) = &chain {
                    for block in &chain.blocks {
                        self.state
                            .block(block)
                            .map_err(|e| reject("unknown-reference", e.to_string()))?;
                    }
                }
                // Over-booking through manual chains is accepted as-is.
                self.state.set_request_status(&id, RequestStatus::Manual { chain })?;
                self.state.bump_version();
            }
            Message::TriggerCompute => {
                // Consolidate parked revalidations into one wave; parked
                // assignments keep their order.
                let mut wave: Vec<RequestId> = Vec::new();
                let mut seen: BTreeSet<RequestId> = BTreeSet::new();
                for task in std::mem::take(&mut self.parked) {
                    match task {
                        EngineTask::Assign(id) => {
                            self.interactive.push_back(EngineTask::Assign(id));
                            enqueued += 1;
                        }
                        EngineTask::Revalidate(ids) => {
                            for id in ids {
                                if seen.insert(id.clone()) {
                                    wave.push(id);
                                }
                            }
                        }
                    }
                }
                if !wave.is_empty() {
                    self.order_by_promise(&mut wave);
                    self.background.push_back(EngineTask::Revalidate(wave));
                    enqueued += 1;
                }
            }
        }

        Ok(ApplyReport { kind, affected, enqueued, parked })
    }

    /// Drains the task queues, interactive class strictly first.
    pub fn run_pending(&mut self) -> Result<Vec<TaskReport>, EngineError> {
        let mut reports = Vec::new();
        loop {
            let task = match self.interactive.pop_front() {
                Some(task) => task,
                None => match self.background.pop_front() {
                    Some(task) => task,
                    None => break,
                },
            };
            match task {
                EngineTask::Assign(id) => {
                    let skip = match self.state.request(&id) {
                        Ok(r) => r.is_manual() || r.current_chain().is_some(),
                        Err(_) => true,
                    };
                    if skip {
                        continue;
                    }
                    let outcome = assign(&[id.clone()], &mut self.state, &self.config.assign, &mut self.cache)?;
                    self.stats.assignments += 1;
                    self.stats.absorb_counters(&outcome.counters, &outcome.timings);
                    let result = outcome.results[&id].clone();
                    self.stats.absorb_result(&result);
                    reports.push(TaskReport::Assigned {
                        request: id,
                        result,
                        rerouted: outcome.rerouted,
                    });
                }
                EngineTask::Revalidate(ids) => {
                    let mut wave = Vec::new();
                    for id in ids {
                        if self.state.request(&id).is_err() {
                            continue;
                        }
                        wave.push(self.revalidate_request(&id)?);
                    }
                    reports.push(TaskReport::Revalidated(wave));
                }
            }
        }
        Ok(reports)
    }

    /// Longest feasible prefix of the chain: blocks are checked front to
    /// back and the chain is cut at the first failure. Required positions
    /// tolerate everything except a vanished block.
    fn feasible_prefix(&self, request: &Request, chain: &TransportChain) -> Result<usize, EngineError> {
        let split = chain.split.min(chain.blocks.len());
        let mut prev: Option<&BlockId> = None;
        for (position, bid) in chain.blocks.iter().enumerate() {
            let Ok(block) = self.state.block(bid) else {
                return Ok(position);
            };
            if position >= split {
                let connected = match prev {
                    Some(prev) => chainable(prev, bid, &self.state)?,
                    None => {
                        self.state.block_origin_group(block)?
                            == self.state.request_origin_group(request)?
                            && request.pickup_earliest <= block.boarding_cutoff
                    }
                };
                let feasible = connected
                    && block_admits(block, request)
                    && block_has_capacity(block, request, &self.state, CapacityMode::Respect)?
                    && block.deboarding_ready <= request.delivery_latest;
                if !feasible {
                    return Ok(position);
                }
            }
            prev = Some(bid);
        }
        Ok(chain.blocks.len())
    }

    /// Revalidates one request's chain: still-valid chains are left alone;
    /// otherwise the chain is truncated after the last consecutive feasible
    /// block and re-completed from there when possible. Partial chains are
    /// kept to keep the request moving in the right direction.
    pub fn revalidate_request(&mut self, id: &RequestId) -> Result<RevalidationReport, EngineError> {
        self.stats.revalidations += 1;
        let request = self.state.request(id)?.clone();
        let unchanged = RevalidationReport { request: id.clone(), action: RevalidationAction::Unchanged };
        if request.is_manual() {
            return Ok(unchanged);
        }
        let Some(chain) = request.current_chain().cloned() else {
            return Ok(unchanged);
        };
        let was_partial = matches!(request.status, RequestStatus::Partial { .. });
        if !was_partial {
            let validation = validate_chain(&request, &chain, &self.state, CapacityMode::Respect)?;
            if validation.is_ok() {
                return Ok(unchanged);
            }
        }

        let prefix_len = self.feasible_prefix(&request, &chain)?;
        let truncated: Vec<BlockId> = chain.blocks[..prefix_len].to_vec();

        // Re-complete the flexible part from the truncation point.
        let mut probe = request.clone();
        probe.required_prefix = truncated.clone();
        self.stats.best_chain_searches += 1;
        let outcome = find_best_chain(
            &probe,
            &self.state,
            CapacityMode::Respect,
            self.config.assign.search_limits,
            &self.config.assign.tiebreak,
        )
        .map_err(|e| match e {
            crate::search::SearchError::Lookup(e) => EngineError::Lookup(e),
            crate::search::SearchError::ManualRequest(id) => {
                EngineError::Rejected(Rejection::new("manual-request", id.to_string()))
            }
        })?;
        if let Some(found) = outcome.best() {
            let new_chain = TransportChain::with_split(found.blocks.clone(), chain.split.min(prefix_len));
            let action = if new_chain.blocks == chain.blocks && !was_partial {
                RevalidationAction::Unchanged
            } else {
                RevalidationAction::Recompleted { chain: new_chain.clone() }
            };
            self.state.set_request_status(id, RequestStatus::Assigned { chain: new_chain })?;
            if !matches!(action, RevalidationAction::Unchanged) {
                self.stats.truncations += 1;
            }
            return Ok(RevalidationReport { request: id.clone(), action });
        }

        self.stats.truncations += 1;
        if truncated.is_empty() {
            self.state.set_request_status(id, RequestStatus::Unassigned)?;
            self.background.push_back(EngineTask::Assign(id.clone()));
            return Ok(RevalidationReport { request: id.clone(), action: RevalidationAction::Unassigned });
        }
        let partial = TransportChain::with_split(truncated, chain.split.min(prefix_len));
        self.state.set_request_status(id, RequestStatus::Partial { chain: partial.clone() })?;
        Ok(RevalidationReport { request: id.clone(), action: RevalidationAction::Truncated { chain: partial } })
    }

    /// Books one request interactively: the assignment runs immediately
    /// and the response carries the chain and the promised arrival.
    pub fn handle_booking(&mut self, request: WireRequest) -> Result<BookingResponse, EngineError> {
        let report = self.apply(Message::BookRequest { request: request.clone() }, false)?;
        debug_assert_eq!(report.kind, "book-request");
        let id = request.id.clone();
        // The booking is interactive: its task is at the queue front.
        let reports = self.run_pending()?;
        let mut result = None;
        for report in reports {
            if let TaskReport::Assigned { request, result: r, .. } = report {
                if request == id {
                    result = Some(r);
                }
            }
        }
        let outcome = match result {
            Some(RequestResult::Routed { chain, stage }) => {
                let last = self.state.block(chain.blocks.last().unwrap())?;
                BookingOutcome::Routed { promised_arrival: last.deboarding_ready, chain, stage }
            }
            Some(RequestResult::NotRoutable) => {
                self.state.set_request_status(
                    &id,
                    RequestStatus::Rejected { reason: "not-routable".to_string() },
                )?;
                BookingOutcome::NotRoutable
            }
            Some(RequestResult::NoCapacity) => {
                self.state.set_request_status(
                    &id,
                    RequestStatus::Rejected { reason: "no-capacity".to_string() },
                )?;
                BookingOutcome::NoCapacity
            }
            Some(RequestResult::TimeoutPartial) | None => BookingOutcome::Timeout,
        };
        Ok(BookingResponse { request: id, outcome })
    }

    /// Pure chain enumeration: no capacity is reserved, neither version
    /// nor ledger change.
    pub fn dryrun_search(&self, request: &Request) -> Result<DryRunReport, EngineError> {
        let outcome = enumerate_chains(
            request,
            &self.state,
            CapacityMode::Respect,
            self.config.assign.search_limits,
            &self.config.assign.tiebreak,
        )
        .map_err(|e| match e {
            crate::search::SearchError::Lookup(e) => EngineError::Lookup(e),
            crate::search::SearchError::ManualRequest(id) => {
                EngineError::Rejected(Rejection::new("manual-request", id.to_string()))
            }
        })?;
        let reason = if outcome.chains.is_empty() { outcome.diagnostics.dominant() } else { None };
        Ok(DryRunReport {
            chains: outcome.chains,
            truncation: outcome.truncation,
            diagnostics: outcome.diagnostics,
            reason,
        })
    }

    /// Validates a hypothetical (manual) chain without mutating anything.
    pub fn validate_manual_chain(
        &self,
        request: &Request,
        chain: &TransportChain,
    ) -> Result<ValidationResult, EngineError> {
        Ok(validate_chain(request, chain, &self.state, CapacityMode::Respect)?)
    }

    /// Resolves a wire request against the product table without storing it.
    pub fn resolve_request(&self, request: WireRequest) -> Request {
        let minutes = self.config.products.window_for(&request);
        request.into_request(minutes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    fn init_message(state: &NetworkState) -> Message {
        Message::InitState {
            stations: state.stations.values().cloned().collect(),
            trains: state.trains.values().cloned().collect(),
            segments: state.segments.values().cloned().map(WireSegment::from).collect(),
            blocks: state.blocks.values().cloned().map(WireBlock::from).collect(),
            connections: state
                .connections
                .iter()
                .map(|((from, to), kind)| Connection { from: from.clone(), to: to.clone(), kind: *kind })
                .collect(),
            requests: Vec::new(),
        }
    }

    fn fig2_engine() -> Engine {
        let mut engine = Engine::new(EngineConfig::default());
        engine.apply(init_message(&fig2()), false).unwrap();
        engine
    }

    fn booked_fig2_engine() -> Engine {
        let mut engine = fig2_engine();
        let response = engine.handle_booking(WireRequest::from(r1())).unwrap();
        assert!(matches!(response.outcome, BookingOutcome::Routed { .. }));
        engine
    }

    #[test]
    fn booking_returns_chain_and_promise() {
        let mut engine = fig2_engine();
        let response = engine.handle_booking(WireRequest::from(r1())).unwrap();
        match response.outcome {
            BookingOutcome::Routed { chain, promised_arrival, stage } => {
                assert_eq!(chain.blocks, vec![bid("b1"), bid("b3")]);
                assert_eq!(promised_arrival, hm(12, 30));
                assert_eq!(stage, crate::assign::Stage::IsolatedBfs);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
        // Follow-up shortening the window to the promise keeps the chain.
        let mut shortened = WireRequest::from(r1());
        shortened.delivery_latest = Some(from_instant(hm(12, 30)));
        engine.apply(Message::UpdateRequest { request: shortened }, false).unwrap();
        let reports = engine.run_pending().unwrap();
        assert!(matches!(
            &reports[..],
            [TaskReport::Revalidated(wave)] if wave[0].action == RevalidationAction::Unchanged
        ));
        assert!(engine.state().ledger_consistent());
    }

    #[test]
    fn structurally_oversized_demand_is_not_routable() {
        let mut engine = fig2_engine();
        let mut request = r1();
        request.demand = CapacityVector::new(4500, 600);
        let response = engine.handle_booking(WireRequest::from(request)).unwrap();
        assert!(matches!(response.outcome, BookingOutcome::NotRoutable));
    }

    #[test]
    fn capacity_reduction_truncates_to_partial() {
        let mut engine = booked_fig2_engine();
        // Shrink s3 below r1's 800 dt usage; no alternative exists.
        let mut s3 = engine.state().segment(&sid("s3")).unwrap().clone();
        s3.capacity = CapacityVector::new(700, 600);
        let report = engine.apply(Message::UpsertSegment { segment: s3.into() }, false).unwrap();
        assert_eq!(report.affected, vec![rid("r1")]);
        let reports = engine.run_pending().unwrap();
        match &reports[..] {
            [TaskReport::Revalidated(wave)] => match &wave[0].action {
                RevalidationAction::Truncated { chain } => {
                    assert_eq!(chain.blocks, vec![bid("b1")]);
                }
                other => panic!("unexpected action {other:?}"),
            },
            other => panic!("unexpected reports {other:?}"),
        }
        let request = engine.state().request(&rid("r1")).unwrap();
        assert!(matches!(request.status, RequestStatus::Partial { .. }));
        // The partial chain no longer occupies s3.
        assert!(engine.state().usage(&sid("s3")).is_zero());
        assert!(engine.state().ledger_consistent());
    }

    #[test]
    fn blocked_chain_recompletes_over_an_alternative() {
        let mut engine = booked_fig2_engine();
        // An alternative block over s3 appears...
        let alt = WireBlock::from(block("b3p", "50208", &["s3"], "RBL", "COS", hm(9, 0), hm(12, 30)));
        engine.apply(Message::UpsertBlock { block: alt }, false).unwrap();
        engine.run_pending().unwrap();
        // ...then b3 closes for r1 via a restriction.
        let restriction = Restriction {
            attribute: RestrictionAttribute::Customer,
            mode: RestrictionMode::Allow,
            values: ["someone-else".to_string()].into(),
        };
        engine
            .apply(Message::UpsertRestriction { block: bid("b3"), restrictions: vec![restriction] }, false)
            .unwrap();
        let reports = engine.run_pending().unwrap();
        match &reports[..] {
            [TaskReport::Revalidated(wave)] => match &wave[0].action {
                RevalidationAction::Recompleted { chain } => {
                    assert_eq!(chain.blocks, vec![bid("b1"), bid("b3p")]);
                }
                other => panic!("unexpected action {other:?}"),
            },
            other => panic!("unexpected reports {other:?}"),
        }
        assert!(engine.state().ledger_consistent());
    }

    #[test]
    fn deferred_messages_park_until_trigger() {
        let mut engine = booked_fig2_engine();
        let before = engine.stats().revalidations;
        for block in ["b1", "b3", "b2"] {
            engine
                .apply(
                    Message::UpsertReservation {
                        block: bid(block),
                        reservation: CapacityVector::new(100, 100),
                    },
                    true,
                )
                .unwrap();
        }
        assert_eq!(engine.pending_tasks(), 0, "no computation before the trigger");
        assert!(engine.parked_tasks() > 0);
        assert_eq!(engine.stats().revalidations, before);

        let report = engine.apply(Message::TriggerCompute, false).unwrap();
        assert_eq!(report.enqueued, 1, "one consolidated revalidation wave");
        assert_eq!(engine.parked_tasks(), 0);
        engine.run_pending().unwrap();
        assert_eq!(engine.stats().revalidations, before + 1, "r1 revalidated once");
    }

    #[test]
    fn dry_runs_mutate_nothing() {
        let engine = booked_fig2_engine();
        let version = engine.state().version();
        let usage_before = engine.state().usage(&sid("s2"));

        let mut probe = r1();
        probe.id = rid("probe");
        let report = engine.dryrun_search(&probe).unwrap();
        assert_eq!(report.chains.len(), 1);
        assert_eq!(report.chains[0].blocks, vec![bid("b1"), bid("b3")]);
        assert_eq!(engine.state().version(), version);
        assert_eq!(engine.state().usage(&sid("s2")), usage_before);

        // Manual chain ending short of the destination.
        let validation = engine
            .validate_manual_chain(&probe, &TransportChain::flexible(vec![bid("b1"), bid("b4")]))
            .unwrap();
        assert!(validation.has(ViolationKind::DestinationMismatch));
        assert_eq!(engine.state().version(), version);
    }

    #[test]
    fn unknown_references_reject_without_mutation() {
        let mut engine = fig2_engine();
        let version = engine.state().version();
        let ghost = WireBlock::from(block("ghost", "t", &["missing"], "FBG", "LQ", 0, 10));
        let error = engine.apply(Message::UpsertBlock { block: ghost }, false).unwrap_err();
        assert!(matches!(error, EngineError::Rejected(_)));
        assert_eq!(engine.state().version(), version);
        assert!(engine.state().block(&bid("ghost")).is_err());
        assert_eq!(engine.stats().rejected_messages, 1);
    }

    #[test]
    fn duplicate_booking_is_rejected() {
        let mut engine = booked_fig2_engine();
        let error = engine.handle_booking(WireRequest::from(r1())).unwrap_err();
        assert!(matches!(error, EngineError::Rejected(r) if r.code == "duplicate-request"));
    }

    #[test]
    fn interactive_tasks_run_before_background() {
        let mut engine = booked_fig2_engine();
        // Background wave first...
        engine
            .apply(
                Message::UpsertReservation { block: bid("b1"), reservation: CapacityVector::new(1, 1) },
                false,
            )
            .unwrap();
        // ...then an interactive booking.
        let mut second = r1();
        second.id = rid("r2");
        engine.apply(Message::BookRequest { request: WireRequest::from(second) }, false).unwrap();
        let reports = engine.run_pending().unwrap();
        assert!(matches!(reports[0], TaskReport::Assigned { .. }), "interactive first");
        assert!(matches!(reports[1], TaskReport::Revalidated(_)));
    }

    #[test]
    fn product_table_fills_missing_delivery_windows() {
        let mut engine = fig2_engine();
        let mut wire = WireRequest::from(r1());
        wire.delivery_latest = None;
        wire.attributes.insert(RestrictionAttribute::ProductType, "express".into());
        engine.apply(Message::BookRequest { request: wire }, false).unwrap();
        let request = engine.state().request(&rid("r1")).unwrap();
        assert_eq!(request.delivery_latest, request.pickup_earliest + 29 * 60);
    }

    #[test]
    fn messages_roundtrip_as_kebab_case_json_with_iso_timestamps() {
        let message = Message::BookRequest { request: WireRequest::from(r1()) };
        let json = serde_json::to_string(&message).unwrap();
        assert!(json.contains("\"kind\":\"book-request\""));
        assert!(json.contains("2000-01-01T03:00:00Z"));
        let back: Message = serde_json::from_str(&json).unwrap();
        assert_eq!(back.kind(), "book-request");

        let envelope: Envelope =
            serde_json::from_str("{\"kind\":\"trigger-compute\",\"defer\":true}").unwrap();
        assert!(envelope.defer);
        assert_eq!(envelope.message.kind(), "trigger-compute");
    }

    #[test]
    fn fresh_engine_reports_zero_stats() {
        let engine = Engine::new(EngineConfig::default());
        let snapshot = engine.snapshot_stats();
        assert_eq!(snapshot.requests, 0);
        assert_eq!(snapshot.counters.assignments, 0);
        assert!(snapshot.counters.outcomes.is_empty());
    }

    #[test]
    fn booking_trace_shows_up_in_stats() {
        let engine = booked_fig2_engine();
        let snapshot = engine.snapshot_stats();
        assert_eq!(snapshot.counters.assignments, 1);
        assert_eq!(snapshot.counters.outcomes["routed"], 1);
        assert!(snapshot.counters.best_chain_searches > 0);
    }
}
