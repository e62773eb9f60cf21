//! Small hand-checkable networks used across tests and benches.
//!
//! `fig2` is the canonical two-train example: train 50476 from FBG via LQ
//! to the Zurich yard RBL, train 50208 from RBL via COS to LT, four blocks,
//! and a request from FBG to COS whose only valid chain is `[b1, b3]`.

use crate::model::*;

/// Minutes from midnight.
pub fn hm(hours: i64, minutes: i64) -> Instant {
    hours * 60 + minutes
}

pub fn operational_station(id: &str) -> Station {
    Station {
        id: StationId::new(id),
        kind: StationKind::Operational,
        group: None,
        operational: None,
    }
}

pub fn segment(
    id: &str,
    train: &str,
    from: &str,
    to: &str,
    departure: Instant,
    arrival: Instant,
    weight: u64,
    length: u64,
) -> Segment {
    Segment {
        id: SegmentId::new(id),
        train: TrainId::new(train),
        from: StationId::new(from),
        to: StationId::new(to),
        departure,
        arrival,
        capacity: CapacityVector::new(weight, length),
    }
}

pub fn block(
    id: &str,
    train: &str,
    segments: &[&str],
    origin: &str,
    destination: &str,
    boarding_cutoff: Instant,
    deboarding_ready: Instant,
) -> Block {
    Block {
        id: BlockId::new(id),
        train: Some(TrainId::new(train)),
        segments: segments.iter().map(|s| SegmentId::new(*s)).collect(),
        origin: StationId::new(origin),
        destination: StationId::new(destination),
        boarding_cutoff,
        deboarding_ready,
        restrictions: Vec::new(),
        reservations: CapacityVector::ZERO,
        manual_utilization: CapacityVector::ZERO,
        flags: BlockFlags::bookable(),
    }
}

pub fn fig2() -> NetworkState {
    let mut state = NetworkState::new();
    for id in ["FBG", "LQ", "RBL", "COS", "LT"] {
        state.upsert_station(operational_station(id));
    }
    // Train 50476: FBG -> LQ -> RBL, 400 t / 300 m.
    state.upsert_segment(segment("s1", "50476", "FBG", "LQ", hm(4, 0), hm(5, 0), 4000, 3000));
    state.upsert_segment(segment("s2", "50476", "LQ", "RBL", hm(5, 30), hm(7, 30), 4000, 3000));
    // Train 50208: RBL -> COS -> LT, 500 t / 400 m.
    state.upsert_segment(segment("s3", "50208", "RBL", "COS", hm(10, 0), hm(12, 0), 5000, 4000));
    state.upsert_segment(segment("s4", "50208", "COS", "LT", hm(12, 30), hm(13, 0), 5000, 4000));

    state.upsert_block(block("b1", "50476", &["s1", "s2"], "FBG", "RBL", hm(3, 30), hm(8, 0)));
    state.upsert_block(block("b2", "50476", &["s2"], "LQ", "RBL", hm(4, 15), hm(8, 0)));
    state.upsert_block(block("b3", "50208", &["s3"], "RBL", "COS", hm(9, 0), hm(12, 30)));
    state.upsert_block(block("b4", "50208", &["s3", "s4"], "RBL", "LT", hm(9, 0), hm(13, 30)));
    state
}

/// The FIG2 request: FBG -> COS, 80 t / 60 m, pickup from 03:00, delivery
/// by 14:00.
pub fn r1() -> Request {
    Request {
        id: RequestId::new("r1"),
        origin: StationId::new("FBG"),
        destination: StationId::new("COS"),
        pickup_earliest: hm(3, 0),
        delivery_latest: hm(14, 0),
        demand: CapacityVector::new(800, 600),
        attributes: Default::default(),
        priority_weight: 1,
        required_prefix: Vec::new(),
        status: RequestStatus::Unassigned,
    }
}

pub fn bid(id: &str) -> BlockId {
    BlockId::new(id)
}

pub fn sid(id: &str) -> SegmentId {
    SegmentId::new(id)
}

pub fn rid(id: &str) -> RequestId {
    RequestId::new(id)
}
