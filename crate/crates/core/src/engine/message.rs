//! Wire schema of the synchronization messages: JSON with kebab-case
//! kinds and ISO-8601 UTC timestamps, converted to the model's internal
//! minute instants on ingestion.

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::model::*;

/// Internal instants count minutes from this epoch.
pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()
}

pub fn to_instant(t: DateTime<Utc>) -> Instant {
    (t - epoch()).num_minutes()
}

pub fn from_instant(t: Instant) -> DateTime<Utc> {
    epoch() + chrono::Duration::minutes(t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WireSegment {
    pub id: SegmentId,
    pub train: TrainId,
    pub from: StationId,
    pub to: StationId,
    pub departure: DateTime<Utc>,
    pub arrival: DateTime<Utc>,
    pub capacity: CapacityVector,
}

impl From<WireSegment> for Segment {
    fn from(w: WireSegment) -> Segment {
        Segment {
            id: w.id,
            train: w.train,
            from: w.from,
            to: w.to,
            departure: to_instant(w.departure),
            arrival: to_instant(w.arrival),
            capacity: w.capacity,
        }
    }
}

impl From<Segment> for WireSegment {
    fn from(s: Segment) -> WireSegment {
        WireSegment {
            id: s.id,
            train: s.train,
            from: s.from,
            to: s.to,
            departure: from_instant(s.departure),
            arrival: from_instant(s.arrival),
            capacity: s.capacity,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WireBlock {
    pub id: BlockId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainId>,
    pub segments: Vec<SegmentId>,
    pub origin: StationId,
    pub destination: StationId,
    pub boarding_cutoff: DateTime<Utc>,
    pub deboarding_ready: DateTime<Utc>,
    #[serde(default)]
    pub restrictions: Vec<Restriction>,
    #[serde(default)]
    pub reservations: CapacityVector,
    #[serde(default)]
    pub manual_utilization: CapacityVector,
    #[serde(default = "BlockFlags::bookable")]
    pub flags: BlockFlags,
}

impl From<WireBlock> for Block {
    fn from(w: WireBlock) -> Block {
        Block {
            id: w.id,
            train: w.train,
            segments: w.segments,
            origin: w.origin,
            destination: w.destination,
            boarding_cutoff: to_instant(w.boarding_cutoff),
            deboarding_ready: to_instant(w.deboarding_ready),
            restrictions: w.restrictions,
            reservations: w.reservations,
            manual_utilization: w.manual_utilization,
            flags: w.flags,
        }
    }
}

impl From<Block> for WireBlock {
    fn from(b: Block) -> WireBlock {
        WireBlock {
            id: b.id,
            train: b.train,
            segments: b.segments,
            origin: b.origin,
            destination: b.destination,
            boarding_cutoff: from_instant(b.boarding_cutoff),
            deboarding_ready: from_instant(b.deboarding_ready),
            restrictions: b.restrictions,
            reservations: b.reservations,
            manual_utilization: b.manual_utilization,
            flags: b.flags,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: RequestId,
    pub origin: StationId,
    pub destination: StationId,
    pub pickup_earliest: DateTime<Utc>,
    /// Absent on bookings priced by product: the window comes from the
    /// product table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivery_latest: Option<DateTime<Utc>>,
    pub demand: CapacityVector,
    #[serde(default)]
    pub attributes: std::collections::BTreeMap<RestrictionAttribute, String>,
    #[serde(default = "default_weight")]
    pub priority_weight: u64,
    #[serde(default)]
    pub required_prefix: Vec<BlockId>,
}

fn default_weight() -> u64 {
    1
}

impl WireRequest {
    /// Resolves the delivery bound: explicit, or pickup plus the product
    /// window.
    pub fn into_request(self, window_minutes: i64) -> Request {
        let pickup = to_instant(self.pickup_earliest);
        let delivery = self.delivery_latest.map(to_instant).unwrap_or(pickup + window_minutes);
        Request {
            id: self.id,
            origin: self.origin,
            destination: self.destination,
            pickup_earliest: pickup,
            delivery_latest: delivery,
            demand: self.demand,
            attributes: self.attributes,
            priority_weight: self.priority_weight,
            required_prefix: self.required_prefix,
            status: RequestStatus::Unassigned,
        }
    }
}

impl From<Request> for WireRequest {
    fn from(r: Request) -> WireRequest {
        WireRequest {
            id: r.id,
            origin: r.origin,
            destination: r.destination,
            pickup_earliest: from_instant(r.pickup_earliest),
            delivery_latest: Some(from_instant(r.delivery_latest)),
            demand: r.demand,
            attributes: r.attributes,
            priority_weight: r.priority_weight,
            required_prefix: r.required_prefix,
        }
    }
}

/// One synchronization message. `init-state` resets the world; everything
/// else is incremental.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Message {
    InitState {
        #[serde(default)]
        stations: Vec<Station>,
        #[serde(default)]
        trains: Vec<Train>,
        #[serde(default)]
        segments: Vec<WireSegment>,
        #[serde(default)]
        blocks: Vec<WireBlock>,
        #[serde(default)]
        connections: Vec<Connection>,
        #[serde(default)]
        requests: Vec<WireRequest>,
    },
    UpsertTrain { train: Train },
    DeleteTrain { id: TrainId },
    UpsertSegment { segment: WireSegment },
    UpsertBlock { block: WireBlock },
    UpsertConnection { connection: Connection },
    UpsertRestriction { block: BlockId, restrictions: Vec<Restriction> },
    UpsertReservation { block: BlockId, reservation: CapacityVector },
    BookRequest { request: WireRequest },
    UpdateRequest { request: WireRequest },
    CancelRequest { id: RequestId },
    ManualChain {
        id: RequestId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chain: Option<TransportChain>,
    },
    TriggerCompute,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::InitState { .. } => "init-state",
            Message::UpsertTrain { .. } => "upsert-train",
            Message::DeleteTrain { .. } => "delete-train",
            Message::UpsertSegment { .. } => "upsert-segment",
            Message::UpsertBlock { .. } => "upsert-block",
            Message::UpsertConnection { .. } => "upsert-connection",
            Message::UpsertRestriction { .. } => "upsert-restriction",
            Message::UpsertReservation { .. } => "upsert-reservation",
            Message::BookRequest { .. } => "book-request",
            Message::UpdateRequest { .. } => "update-request",
            Message::CancelRequest { .. } => "cancel-request",
            Message::ManualChain { .. } => "manual-chain",
            Message::TriggerCompute => "trigger-compute",
        }
    }
}

/// A message plus its defer flag, the unit of the NDJSON streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(flatten)]
    pub message: Message,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub defer: bool,
    /// Simulated emission time, carried by generated streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<DateTime<Utc>>,
}

impl From<Message> for Envelope {
    fn from(message: Message) -> Envelope {
        Envelope { message, defer: false, at: None }
    }
}
