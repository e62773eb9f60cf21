//! Domain types for the wagon-load network: stations, segments, blocks,
//! restrictions, connections, requests, and transport chains.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Minutes since the configured epoch. Train timings are minute-granular.
pub type Instant = i64;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_type!(StationId);
id_type!(GroupId);
id_type!(TrainId);
id_type!(SegmentId);
id_type!(BlockId);
id_type!(RequestId);

/// Weight in decitons and length in decimeters. Comparison is component-wise.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct CapacityVector {
    pub weight: u64,
    pub length: u64,
}

impl CapacityVector {
    pub const ZERO: CapacityVector = CapacityVector { weight: 0, length: 0 };

    pub fn new(weight: u64, length: u64) -> Self {
        Self { weight, length }
    }

    /// Component-wise `<=`.
    pub fn fits_within(&self, other: &CapacityVector) -> bool {
        self.weight <= other.weight && self.length <= other.length
    }

    pub fn saturating_add(&self, other: &CapacityVector) -> CapacityVector {
        CapacityVector {
            weight: self.weight.saturating_add(other.weight),
            length: self.length.saturating_add(other.length),
        }
    }

    pub fn saturating_sub(&self, other: &CapacityVector) -> CapacityVector {
        CapacityVector {
            weight: self.weight.saturating_sub(other.weight),
            length: self.length.saturating_sub(other.length),
        }
    }

    pub fn component_max(&self, other: &CapacityVector) -> CapacityVector {
        CapacityVector {
            weight: self.weight.max(other.weight),
            length: self.length.max(other.length),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weight == 0 && self.length == 0
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationKind {
    Commercial,
    Operational,
}

/// A station on either the commercial or operational layer. Commercial
/// stations carry the mapping to their operational counterpart; operational
/// stations may belong to an operation-point group within which transfers
/// are free.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub kind: StationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupId>,
    /// For commercial stations: the operational station they map to.
    /// Defaults to the station itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operational: Option<StationId>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Train {
    pub id: TrainId,
}

/// Portion of a train route between two stops; the capacity-bearing unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub train: TrainId,
    pub from: StationId,
    pub to: StationId,
    pub departure: Instant,
    pub arrival: Instant,
    pub capacity: CapacityVector,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct BlockFlags {
    #[serde(default = "default_true")]
    pub bookable: bool,
    #[serde(default)]
    pub manual: bool,
    #[serde(default)]
    pub phase_connector: bool,
}

fn default_true() -> bool {
    true
}

impl BlockFlags {
    pub fn bookable() -> Self {
        BlockFlags { bookable: true, manual: false, phase_connector: false }
    }
}

/// Bookable boarding/deboarding unit spanning one or more segments of a
/// train. Boarding/deboarding instants include classification buffers, so
/// they bracket the underlying segment times. Phase connectors are
/// zero-segment blocks within one yard.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainId>,
    pub segments: Vec<SegmentId>,
    pub origin: StationId,
    pub destination: StationId,
    pub boarding_cutoff: Instant,
    pub deboarding_ready: Instant,
    #[serde(default)]
    pub restrictions: Vec<Restriction>,
    #[serde(default)]
    pub reservations: CapacityVector,
    #[serde(default)]
    pub manual_utilization: CapacityVector,
    #[serde(default)]
    pub flags: BlockFlags,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestrictionAttribute {
    Origin,
    Destination,
    Customer,
    NhmCode,
    ProductType,
    MaxSpeed,
    Coupling,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestrictionMode {
    Allow,
    Forbid,
}

/// Allow/forbid filter on a request attribute, attached to a block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restriction {
    pub attribute: RestrictionAttribute,
    pub mode: RestrictionMode,
    pub values: BTreeSet<String>,
}

impl Restriction {
    /// A request passes an allow-restriction iff its attribute value is in
    /// `values`, a forbid-restriction iff it is not. A missing attribute is
    /// treated as non-matching.
    pub fn passes(&self, request: &Request) -> bool {
        let value = request.attribute_value(self.attribute);
        match (self.mode, value) {
            (RestrictionMode::Allow, Some(v)) => self.values.contains(v),
            (RestrictionMode::Allow, None) => false,
            (RestrictionMode::Forbid, Some(v)) => !self.values.contains(v),
            (RestrictionMode::Forbid, None) => true,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    /// Transfer never allowed, even if times align.
    Forbidden,
    /// Transfer allowed even if times do not align (e.g. hump bypass).
    Extra,
    /// Every request deboarding the from-block must, if it continues,
    /// board the to-block.
    Exclusive,
}

/// Transfer-matrix entry for an ordered block pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Connection {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: ConnectionKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum RequestStatus {
    Unassigned,
    Assigned { chain: TransportChain },
    Partial { chain: TransportChain },
    Rejected { reason: String },
    Manual {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chain: Option<TransportChain>,
    },
}

impl RequestStatus {
    pub fn chain(&self) -> Option<&TransportChain> {
        match self {
            RequestStatus::Assigned { chain } | RequestStatus::Partial { chain } => Some(chain),
            RequestStatus::Manual { chain } => chain.as_ref(),
            _ => None,
        }
    }
}

/// A transportation demand: wagons with weight/length to move between two
/// commercial stations within a time window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub origin: StationId,
    pub destination: StationId,
    pub pickup_earliest: Instant,
    pub delivery_latest: Instant,
    pub demand: CapacityVector,
    #[serde(default)]
    pub attributes: BTreeMap<RestrictionAttribute, String>,
    #[serde(default = "default_weight")]
    pub priority_weight: u64,
    /// Immutable chain prefix (already departed or planner-fixed).
    #[serde(default)]
    pub required_prefix: Vec<BlockId>,
    #[serde(default = "default_status")]
    pub status: RequestStatus,
}

fn default_weight() -> u64 {
    1
}

fn default_status() -> RequestStatus {
    RequestStatus::Unassigned
}

impl Request {
    pub fn is_manual(&self) -> bool {
        matches!(self.status, RequestStatus::Manual { .. })
    }

    pub fn current_chain(&self) -> Option<&TransportChain> {
        self.status.chain()
    }

    pub fn attribute_value(&self, attribute: RestrictionAttribute) -> Option<&str> {
        match attribute {
            RestrictionAttribute::Origin => Some(self.origin.as_str()),
            RestrictionAttribute::Destination => Some(self.destination.as_str()),
            _ => self.attributes.get(&attribute).map(|s| s.as_str()),
        }
    }
}

/// Ordered blocks carrying a request, split into a required prefix
/// (positions `< split`) and a flexible suffix open to re-optimization.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransportChain {
    pub blocks: Vec<BlockId>,
    /// First flexible position. `0` means fully flexible, `blocks.len()`
    /// fully required.
    pub split: usize,
}

impl TransportChain {
    pub fn flexible(blocks: Vec<BlockId>) -> Self {
        TransportChain { blocks, split: 0 }
    }

    pub fn with_split(blocks: Vec<BlockId>, split: usize) -> Self {
        debug_assert!(split <= blocks.len());
        TransportChain { blocks, split }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn required(&self) -> &[BlockId] {
        &self.blocks[..self.split.min(self.blocks.len())]
    }

    pub fn flexible_part(&self) -> &[BlockId] {
        &self.blocks[self.split.min(self.blocks.len())..]
    }

    pub fn is_required_at(&self, position: usize) -> bool {
        position < self.split
    }
}
