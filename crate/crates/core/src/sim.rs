//! Scenario generation and deterministic replay: hub-and-spoke networks,
//! booking streams with the two-peak lead-time mixture, and the three
//! routing strategies (greedy, online, offline optimum).

use std::collections::BTreeMap;
use std::time::Duration;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    from_instant, Engine, EngineConfig, Envelope, Message, WireBlock, WireRequest, WireSegment,
};
use crate::model::*;
use crate::opt::{build_model_priced, solve, CandidateInput};
use crate::search::{enumerate_chains, find_best_chain, SearchLimits};

const DAY: i64 = 24 * 60;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Spoke stations, excluding the yards.
    pub stations: usize,
    pub yards: usize,
    /// Train departures per corridor per day.
    pub trains_per_corridor: usize,
    /// Horizon in days over which pickups spread.
    pub days: usize,
    /// Demand over capacity on the loaded corridors, in (0, 2]. Values
    /// above 1 oversubscribe the corridors: capacity falls short of demand
    /// and some requests cannot be routed even by a perfect packing.
    pub tightness: f64,
    pub requests: usize,
    /// Mass of the 0-12 h lead-time component; the rest clusters around
    /// two weeks (contingents).
    pub short_lead_share: f64,
    /// Width of each request's delivery window after pickup, in hours.
    /// Short windows keep demand on same-day trains; long ones let it
    /// spill onto later departures.
    #[serde(default = "default_delivery_window_hours")]
    pub delivery_window_hours: u64,
    pub seed: u64,
}

fn default_delivery_window_hours() -> u64 {
    40
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            stations: 12,
            yards: 2,
            trains_per_corridor: 3,
            days: 3,
            tightness: 0.5,
            requests: 200,
            short_lead_share: 0.55,
            delivery_window_hours: default_delivery_window_hours(),
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems = Vec::new();
        if self.yards == 0 {
            problems.push("yards must be positive".to_string());
        }
        if self.stations < self.yards.max(2) {
            problems.push("need at least two spoke stations and one per yard".to_string());
        }
        if self.trains_per_corridor == 0 {
            problems.push("trains_per_corridor must be positive".to_string());
        }
        if self.days == 0 {
            problems.push("days must be positive".to_string());
        }
        if !(self.tightness > 0.0 && self.tightness <= 2.0) {
            problems.push("tightness must lie in (0, 2]".to_string());
        }
        if self.requests == 0 {
            problems.push("requests must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.short_lead_share) {
            problems.push("short_lead_share must lie in [0, 1]".to_string());
        }
        if self.delivery_window_hours < 6 {
            problems.push("delivery_window_hours must be at least 6".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidSpec(problems.join("; ")))
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error("stream does not start with init-state")]
    MissingInit,
}

/// A generated scenario: the bootstrap message plus the booking stream in
/// booking-time order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub init: Message,
    pub bookings: Vec<Envelope>,
}

impl Scenario {
    pub fn stream(&self) -> Vec<Envelope> {
        let mut all = vec![Envelope::from(self.init.clone())];
        all.extend(self.bookings.iter().cloned());
        all
    }
}

fn yard_of(spec: &ScenarioSpec, spoke: usize) -> usize {
    spoke % spec.yards
}

fn spoke_name(i: usize) -> String {
    format!("S{i:03}")
}

fn yard_name(i: usize) -> String {
    format!("Y{i}")
}

struct Leg {
    /// Corridor name, e.g. `in-S003` or `link-Y0-Y1`.
    corridor: String,
    day: usize,
}

/// One train run over a corridor: segment + block, filled with capacity
/// later.
struct Run {
    corridor: String,
    day: usize,
    index: usize,
    train: String,
    from: String,
    to: String,
    departure: Instant,
    arrival: Instant,
}

impl Run {
    fn segment_id(&self) -> String {
        format!("seg-{}-d{}-t{}", self.corridor, self.day, self.index)
    }

    fn block_id(&self) -> String {
        format!("blk-{}-d{}-t{}", self.corridor, self.day, self.index)
    }
}

struct RequestDraft {
    request: WireRequest,
    booking_time: Instant,
    legs: Vec<Leg>,
}

/// Generates a deterministic hub-and-spoke scenario. Spokes feed their
/// yard through morning collection trains, yards are linked by midday
/// linehauls, and evening distribution trains fan back out. Capacities are
/// sized against the natural route loads so that `tightness` is the
/// demand share on the loaded corridors.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Train runs per corridor and day.
    let mut runs: Vec<Run> = Vec::new();
    let per = spec.trains_per_corridor;
    for day in 0..spec.days {
        for spoke in 0..spec.stations {
            let yard = yard_name(yard_of(spec, spoke));
            let name = spoke_name(spoke);
            for index in 0..per {
                // Collections spread over the morning.
                let departure = day as i64 * DAY + 5 * 60 + (index as i64) * 150;
                runs.push(Run {
                    corridor: format!("in-{name}"),
                    day,
                    index,
                    train: format!("t-in-{name}-d{day}-{index}"),
                    from: name.clone(),
                    to: yard.clone(),
                    departure,
                    arrival: departure + 90,
                });
                // Distributions spread over the evening.
                let departure = day as i64 * DAY + 15 * 60 + (index as i64) * 150;
                runs.push(Run {
                    corridor: format!("out-{name}"),
                    day,
                    index,
                    train: format!("t-out-{name}-d{day}-{index}"),
                    from: yard.clone(),
                    to: name.clone(),
                    departure,
                    arrival: departure + 90,
                });
            }
        }
        for a in 0..spec.yards {
            for b in 0..spec.yards {
                if a == b {
                    continue;
                }
                for index in 0..per {
                    let departure = day as i64 * DAY + 9 * 60 + (index as i64) * 150;
                    runs.push(Run {
                        corridor: format!("link-{}-{}", yard_name(a), yard_name(b)),
                        day,
                        index,
                        train: format!("t-link-{}-{}-d{day}-{index}", yard_name(a), yard_name(b)),
                        from: yard_name(a),
                        to: yard_name(b),
                        departure,
                        arrival: departure + 150,
                    });
                }
            }
        }
    }

    // Requests with canonical routes for the capacity bookkeeping.
    let exp = Exp::new(1.0 / (6.0 * 60.0)).unwrap();
    let cluster = Normal::new(14.0 * DAY as f64, DAY as f64).unwrap();
    let mut drafts: Vec<RequestDraft> = Vec::new();
    for i in 0..spec.requests {
        let origin = rng.gen_range(0..spec.stations);
        let mut destination = rng.gen_range(0..spec.stations);
        while destination == origin {
            destination = rng.gen_range(0..spec.stations);
        }
        let day = rng.gen_range(0..spec.days);
        let pickup = day as i64 * DAY + rng.gen_range(0..6 * 60);
        // Two wagon-group classes: single groups (spot-market sized) and
        // double groups (contract sized). The exact 2:1 ratio in both
        // dimensions mirrors standardized wagon groups and keeps packing
        // arithmetic clean.
        let weight = if rng.gen_bool(0.55) { 1000 } else { 2000_u64 };
        let length = weight * 4 / 5;
        let lead: i64 = if rng.gen_bool(spec.short_lead_share) {
            (exp.sample(&mut rng) as i64).clamp(10, 12 * 60)
        } else {
            (cluster.sample(&mut rng) as i64).max(12 * 60)
        };
        let mut legs = vec![Leg { corridor: format!("in-{}", spoke_name(origin)), day }];
        let (ya, yb) = (yard_of(spec, origin), yard_of(spec, destination));
        if ya != yb {
            legs.push(Leg { corridor: format!("link-{}-{}", yard_name(ya), yard_name(yb)), day });
        }
        legs.push(Leg { corridor: format!("out-{}", spoke_name(destination)), day });
        drafts.push(RequestDraft {
            request: WireRequest {
                id: RequestId::new(format!("req-{i:05}")),
                origin: StationId::new(spoke_name(origin)),
                destination: StationId::new(spoke_name(destination)),
                pickup_earliest: from_instant(pickup),
                delivery_latest: Some(from_instant(pickup + spec.delivery_window_hours as i64 * 60)),
                demand: CapacityVector::new(weight, length),
                attributes: Default::default(),
                priority_weight: 1,
                required_prefix: Vec::new(),
            },
            booking_time: pickup - lead,
            legs,
        });
    }

    // Natural load per corridor-day, then capacity = load / tightness,
    // split across the day's trains. The floor keeps every single demand
    // structurally routable.
    let mut load: BTreeMap<(String, usize), CapacityVector> = BTreeMap::new();
    let mut peak: BTreeMap<(String, usize), CapacityVector> = BTreeMap::new();
    for draft in &drafts {
        for leg in &draft.legs {
            let key = (leg.corridor.clone(), leg.day);
            let entry = load.entry(key.clone()).or_insert(CapacityVector::ZERO);
            *entry = entry.saturating_add(&draft.request.demand);
            let p = peak.entry(key).or_insert(CapacityVector::ZERO);
            *p = p.component_max(&draft.request.demand);
        }
    }
    let default_capacity = CapacityVector::new(2500, 2200);
    let capacity_of = |corridor: &str, day: usize| -> CapacityVector {
        let key = (corridor.to_string(), day);
        match load.get(&key) {
            Some(total) => {
                let scale = |v: u64| ((v as f64 / spec.tightness) / per as f64).ceil() as u64;
                let scaled = CapacityVector::new(scale(total.weight), scale(total.length));
                scaled.component_max(&peak[&key]).component_max(&default_capacity)
            }
            None => default_capacity,
        }
    };

    let mut stations: Vec<Station> = Vec::new();
    for yard in 0..spec.yards {
        stations.push(Station {
            id: StationId::new(yard_name(yard)),
            kind: StationKind::Operational,
            group: Some(GroupId::new(format!("grp-{}", yard_name(yard)))),
            operational: None,
        });
    }
    for spoke in 0..spec.stations {
        stations.push(Station {
            id: StationId::new(spoke_name(spoke)),
            kind: StationKind::Operational,
            group: None,
            operational: None,
        });
    }

    let mut trains = Vec::new();
    let mut segments = Vec::new();
    let mut blocks = Vec::new();
    for run in &runs {
        trains.push(Train { id: TrainId::new(run.train.clone()) });
        segments.push(WireSegment {
            id: SegmentId::new(run.segment_id()),
            train: TrainId::new(run.train.clone()),
            from: StationId::new(run.from.clone()),
            to: StationId::new(run.to.clone()),
            departure: from_instant(run.departure),
            arrival: from_instant(run.arrival),
            capacity: capacity_of(&run.corridor, run.day),
        });
        blocks.push(WireBlock {
            id: BlockId::new(run.block_id()),
            train: Some(TrainId::new(run.train.clone())),
            segments: vec![SegmentId::new(run.segment_id())],
            origin: StationId::new(run.from.clone()),
            destination: StationId::new(run.to.clone()),
            boarding_cutoff: from_instant(run.departure - 30),
            deboarding_ready: from_instant(run.arrival + 30),
            restrictions: Vec::new(),
            reservations: CapacityVector::ZERO,
            manual_utilization: CapacityVector::ZERO,
            flags: BlockFlags::bookable(),
        });
    }

    drafts.sort_by(|a, b| a.booking_time.cmp(&b.booking_time).then(a.request.id.cmp(&b.request.id)));
    let bookings = drafts
        .into_iter()
        .map(|d| Envelope {
            message: Message::BookRequest { request: d.request },
            defer: false,
            at: Some(from_instant(d.booking_time)),
        })
        .collect();

    Ok(Scenario {
        init: Message::InitState {
            stations,
            trains,
            segments,
            blocks,
            connections: Vec::new(),
            requests: Vec::new(),
        },
        bookings,
    })
}

/// The deterministic adversarial instance: a big request books first and
/// greedily takes the early train, squeezing the two small ones; the
/// optimum moves it to the late train and routes all three.
pub fn adv1() -> Scenario {
    let stations = vec![
        Station {
            id: StationId::new("A"),
            kind: StationKind::Operational,
            group: None,
            operational: None,
        },
        Station {
            id: StationId::new("B"),
            kind: StationKind::Operational,
            group: None,
            operational: None,
        },
    ];
    let mut segments = Vec::new();
    let mut blocks = Vec::new();
    let mut trains = Vec::new();
    for (name, departure, weight, length) in
        [("early", 6 * 60, 4000, 3200), ("late", 10 * 60, 3000, 2400)]
    {
        trains.push(Train { id: TrainId::new(format!("t-{name}")) });
        segments.push(WireSegment {
            id: SegmentId::new(format!("s-{name}")),
            train: TrainId::new(format!("t-{name}")),
            from: StationId::new("A"),
            to: StationId::new("B"),
            departure: from_instant(departure),
            arrival: from_instant(departure + 120),
            capacity: CapacityVector::new(weight, length),
        });
        blocks.push(WireBlock {
            id: BlockId::new(format!("b-{name}")),
            train: Some(TrainId::new(format!("t-{name}"))),
            segments: vec![SegmentId::new(format!("s-{name}"))],
            origin: StationId::new("A"),
            destination: StationId::new("B"),
            boarding_cutoff: from_instant(departure - 30),
            deboarding_ready: from_instant(departure + 150),
            restrictions: Vec::new(),
            reservations: CapacityVector::ZERO,
            manual_utilization: CapacityVector::ZERO,
            flags: BlockFlags::bookable(),
        });
    }
    let booking = |id: &str, weight: u64, length: u64| {
        Envelope::from(Message::BookRequest {
            request: WireRequest {
                id: RequestId::new(id),
                origin: StationId::new("A"),
                destination: StationId::new("B"),
                pickup_earliest: from_instant(0),
                delivery_latest: Some(from_instant(DAY)),
                demand: CapacityVector::new(weight, length),
                attributes: Default::default(),
                priority_weight: 1,
                required_prefix: Vec::new(),
            },
        })
    };
    Scenario {
        init: Message::InitState {
            stations,
            trains,
            segments,
            blocks,
            connections: Vec::new(),
            requests: Vec::new(),
        },
        bookings: vec![
            booking("big", 3000, 2400),
            booking("small-1", 2000, 1600),
            booking("small-2", 2000, 1600),
        ],
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    Online,
    Offline,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "online" => Ok(Strategy::Online),
            "offline" => Ok(Strategy::Offline),
            other => Err(format!("unknown strategy {other}")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub requests: usize,
    pub routed: usize,
    pub outcomes: BTreeMap<String, u64>,
    pub stage_routed: BTreeMap<String, u64>,
    /// Share of assignment calls settled by the breadth-first stages (or
    /// rejected before any enumeration).
    pub bfs_share: f64,
    /// Offline enumeration hit a limit or optimality was not proven.
    pub truncated: bool,
    pub wall: Duration,
}

impl RunReport {
    pub fn routed_fraction(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.routed as f64 / self.requests as f64
        }
    }

    pub fn csv_header() -> &'static str {
        "strategy,requests,routed,routed_fraction,bfs_share,truncated,wall_ms"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{},{}",
            match self.strategy {
                Strategy::Greedy => "greedy",
                Strategy::Online => "online",
                Strategy::Offline => "offline",
            },
            self.requests,
            self.routed,
            self.routed_fraction(),
            self.bfs_share,
            self.truncated,
            self.wall.as_millis()
        )
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "strategy: {:?}\nrequests: {}\nrouted:   {} ({:.1}%)\n",
            self.strategy,
            self.requests,
            self.routed,
            100.0 * self.routed_fraction()
        ));
        if !self.outcomes.is_empty() {
            out.push_str("outcomes:\n");
            for (tag, count) in &self.outcomes {
                out.push_str(&format!("  {tag:<16} {count}\n"));
            }
        }
        if !self.stage_routed.is_empty() {
            out.push_str("routed by stage:\n");
            for (tag, count) in &self.stage_routed {
                out.push_str(&format!("  {tag:<16} {count}\n"));
            }
        }
        out.push_str(&format!("bfs share: {:.1}%\n", 100.0 * self.bfs_share));
        if self.truncated {
            out.push_str("truncated: optimality not claimed\n");
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ReplayConfig {
    pub engine: EngineConfig,
    /// Enumeration limits of the offline optimum.
    pub offline_limits: SearchLimits,
    pub offline_budget: Duration,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            engine: EngineConfig::default(),
            offline_limits: SearchLimits { max_chains: 64, ..SearchLimits::default() },
            offline_budget: Duration::from_secs(60),
        }
    }
}

fn booked_requests(stream: &[Envelope]) -> Vec<WireRequest> {
    stream
        .iter()
        .filter_map(|e| match &e.message {
            Message::BookRequest { request } => Some(request.clone()),
            _ => None,
        })
        .collect()
}

/// Replays a message stream under one strategy. The stream must start
/// with init-state; greedy and offline only interpret bookings, online
/// runs the full engine.
pub fn replay(stream: &[Envelope], strategy: Strategy, config: &ReplayConfig) -> Result<RunReport, SimError> {
    let start = std::time::Instant::now();
    if !matches!(stream.first().map(|e| &e.message), Some(Message::InitState { .. })) {
        return Err(SimError::MissingInit);
    }
    match strategy {
        Strategy::Online => replay_online(stream, config, start),
        Strategy::Greedy => replay_greedy(stream, config, start),
        Strategy::Offline => replay_offline(stream, config, start),
    }
}

fn replay_online(
    stream: &[Envelope],
    config: &ReplayConfig,
    start: std::time::Instant,
) -> Result<RunReport, SimError> {
    let mut engine = Engine::new(config.engine.clone());
    for envelope in stream {
        // Rejected incremental messages (stale references) are skipped,
        // as the production feed does.
        let _ = engine.apply(envelope.message.clone(), envelope.defer);
        if !envelope.defer {
            engine.run_pending()?;
        }
    }
    engine.apply(Message::TriggerCompute, false)?;
    engine.run_pending()?;

    let stats = engine.stats();
    let requests = booked_requests(stream).len();
    let routed = engine
        .state()
        .requests
        .values()
        .filter(|r| matches!(r.status, RequestStatus::Assigned { .. }))
        .count();
    let bfs_only: u64 = stats.stage_routed.get("isolated-bfs").copied().unwrap_or(0)
        + stats.stage_routed.get("capacity-bfs").copied().unwrap_or(0)
        + stats.outcomes.get("not-routable").copied().unwrap_or(0);
    let bfs_share = if stats.assignments == 0 {
        1.0
    } else {
        bfs_only as f64 / stats.assignments as f64
    };
    Ok(RunReport {
        strategy: Strategy::Online,
        requests,
        routed,
        outcomes: stats.outcomes.clone(),
        stage_routed: stats.stage_routed.clone(),
        bfs_share,
        truncated: false,
        wall: start.elapsed(),
    })
}

fn init_state(stream: &[Envelope], config: &ReplayConfig) -> Result<NetworkState, SimError> {
    let mut engine = Engine::new(config.engine.clone());
    engine.apply(stream[0].message.clone(), true)?;
    Ok(engine.state().clone())
}

fn replay_greedy(
    stream: &[Envelope],
    config: &ReplayConfig,
    start: std::time::Instant,
) -> Result<RunReport, SimError> {
    let mut state = init_state(stream, config)?;
    let window = &config.engine.products;
    let mut outcomes: BTreeMap<String, u64> = BTreeMap::new();
    let mut routed = 0;
    let bookings = booked_requests(stream);
    let requests = bookings.len();
    for wire in bookings {
        let minutes = window.window_for(&wire);
        let request = wire.into_request(minutes);
        let id = request.id.clone();
        state.upsert_request(request.clone());
        let outcome = find_best_chain(
            &request,
            &state,
            CapacityMode::Respect,
            config.engine.assign.search_limits,
            &config.engine.assign.tiebreak,
        )
        .map_err(|e| match e {
            crate::search::SearchError::Lookup(e) => SimError::Lookup(e),
            crate::search::SearchError::ManualRequest(_) => unreachable!("bookings are not manual"),
        })?;
        match outcome.best() {
            Some(chain) => {
                state.set_request_status(&id, RequestStatus::Assigned { chain: chain.clone() })?;
                routed += 1;
                *outcomes.entry("routed".to_string()).or_insert(0) += 1;
            }
            None => {
                *outcomes.entry("rejected".to_string()).or_insert(0) += 1;
            }
        }
    }
    Ok(RunReport {
        strategy: Strategy::Greedy,
        requests,
        routed,
        outcomes,
        stage_routed: BTreeMap::new(),
        bfs_share: 1.0,
        truncated: false,
        wall: start.elapsed(),
    })
}

fn replay_offline(
    stream: &[Envelope],
    config: &ReplayConfig,
    start: std::time::Instant,
) -> Result<RunReport, SimError> {
    let mut state = init_state(stream, config)?;
    let window = &config.engine.products;
    let bookings = booked_requests(stream);
    let requests = bookings.len();
    let mut truncated = false;
    let mut inputs = Vec::new();
    for wire in bookings {
        let minutes = window.window_for(&wire);
        let request = wire.into_request(minutes);
        state.upsert_request(request);
    }
    let ids: Vec<RequestId> = state.requests.keys().cloned().collect();
    for id in &ids {
        let request = state.request(id)?.clone();
        let outcome = enumerate_chains(
            &request,
            &state,
            CapacityMode::Ignore,
            config.offline_limits,
            &config.engine.assign.tiebreak,
        )
        .map_err(|e| match e {
            crate::search::SearchError::Lookup(e) => SimError::Lookup(e),
            crate::search::SearchError::ManualRequest(_) => unreachable!("bookings are not manual"),
        })?;
        truncated |= outcome.truncation.any();
        inputs.push(CandidateInput { request: id.clone(), chains: outcome.chains, fixed: false });
    }
    // The offline bound only cares about routed throughput, not which of a
    // request's candidates carries it; rank-free prices keep the objective
    // on a coarse grid the solver can certify quickly at scale.
    let model = build_model_priced(&inputs, &state, &[], false)
        .map_err(|e| SimError::InvalidSpec(format!("offline model: {e}")))?;
    let assignment = solve(&model, config.offline_budget);
    truncated |= !assignment.proven_optimal;
    let mut outcomes = BTreeMap::new();
    *outcomes.entry("routed".to_string()).or_insert(0) += assignment.routed.len() as u64;
    *outcomes.entry("rejected".to_string()).or_insert(0) += assignment.unrouted.len() as u64;
    Ok(RunReport {
        strategy: Strategy::Offline,
        requests,
        routed: assignment.routed.len(),
        outcomes,
        stage_routed: BTreeMap::new(),
        bfs_share: 0.0,
        truncated,
        wall: start.elapsed(),
    })
}

/// Side-by-side table over several strategy runs.
pub fn compare_table(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>8} {:>9} {:>10} {:>9}\n",
        "strategy", "requests", "routed", "fraction", "bfs-share", "wall-ms"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8.1}% {:>9.1}% {:>9}\n",
            format!("{:?}", report.strategy).to_lowercase(),
            report.requests,
            report.routed,
            100.0 * report.routed_fraction(),
            100.0 * report.bfs_share,
            report.wall.as_millis()
        ));
    }
    out
}

/// Synthesizes a service message log of the requested length: the booking
/// stream interleaved with updates, cancellations, reservation batches
/// (deferred, then triggered), and capacity tweaks.
pub fn generate_service_log(spec: &ScenarioSpec, messages: usize) -> Result<Vec<Envelope>, SimError> {
    let scenario = generate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c0de);
    let Message::InitState { blocks, segments, .. } = &scenario.init else {
        return Err(SimError::MissingInit);
    };
    let block_ids: Vec<BlockId> = blocks.iter().map(|b| b.id.clone()).collect();
    let mut capacities: BTreeMap<SegmentId, (WireSegment, CapacityVector)> =
        segments.iter().map(|s| (s.id.clone(), (s.clone(), s.capacity))).collect();
    let segment_ids: Vec<SegmentId> = capacities.keys().cloned().collect();

    let mut log = vec![Envelope::from(scenario.init.clone())];
    let mut bookings = scenario.bookings.into_iter();
    let mut active: Vec<WireRequest> = Vec::new();
    while log.len() < messages {
        let roll: f64 = rng.gen();
        if roll < 0.60 {
            match bookings.next() {
                Some(envelope) => {
                    if let Message::BookRequest { request } = &envelope.message {
                        active.push(request.clone());
                    }
                    log.push(envelope);
                    continue;
                }
                None => {}
            }
        }
        if roll < 0.72 && !active.is_empty() {
            // Shorten a window, as the booking follow-up does.
            let index = rng.gen_range(0..active.len());
            let mut request = active[index].clone();
            if let Some(latest) = request.delivery_latest {
                request.delivery_latest =
                    Some(latest - chrono::Duration::minutes(rng.gen_range(0..240)));
            }
            active[index] = request.clone();
            log.push(Envelope::from(Message::UpdateRequest { request }));
        } else if roll < 0.80 && active.len() > 1 {
            let index = rng.gen_range(0..active.len());
            let request = active.swap_remove(index);
            log.push(Envelope::from(Message::CancelRequest { id: request.id }));
        } else if roll < 0.90 && !block_ids.is_empty() {
            // A deferred reservation batch closed by a trigger.
            let batch = rng.gen_range(1..=3usize).min(messages - log.len());
            for _ in 0..batch {
                let block = block_ids[rng.gen_range(0..block_ids.len())].clone();
                let reservation =
                    CapacityVector::new(rng.gen_range(0..400), rng.gen_range(0..300));
                log.push(Envelope {
                    message: Message::UpsertReservation { block, reservation },
                    defer: true,
                    at: None,
                });
            }
            log.push(Envelope::from(Message::TriggerCompute));
        } else if !segment_ids.is_empty() {
            let id = segment_ids[rng.gen_range(0..segment_ids.len())].clone();
            let (wire, capacity) = capacities.get_mut(&id).unwrap();
            let factor = if rng.gen_bool(0.5) { 9 } else { 11 };
            *capacity = CapacityVector::new(capacity.weight * factor / 10, capacity.length * factor / 10);
            wire.capacity = *capacity;
            log.push(Envelope::from(Message::UpsertSegment { segment: wire.clone() }));
        }
    }
    log.truncate(messages);
    Ok(log)
}
