//! The in-memory network state: all business objects plus the per-segment
//! usage ledger and a monotone version counter.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::*;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LookupError {
    #[error("unknown station {0}")]
    UnknownStation(StationId),
    #[error("unknown train {0}")]
    UnknownTrain(TrainId),
    #[error("unknown segment {0}")]
    UnknownSegment(SegmentId),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
}

/// Key under which transfers are free: the operation-point group of an
/// operational station, or the station itself when ungrouped.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum GroupKey {
    Group(GroupId),
    Station(StationId),
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupKey::Group(g) => write!(f, "group:{g}"),
            GroupKey::Station(s) => write!(f, "station:{s}"),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NetworkState {
    pub stations: BTreeMap<StationId, Station>,
    pub trains: BTreeMap<TrainId, Train>,
    pub segments: BTreeMap<SegmentId, Segment>,
    pub blocks: BTreeMap<BlockId, Block>,
    pub connections: BTreeMap<(BlockId, BlockId), ConnectionKind>,
    pub requests: BTreeMap<RequestId, Request>,
    /// Incremental per-segment usage by all requests holding a chain.
    usage: HashMap<SegmentId, CapacityVector>,
    /// Sum of block reservations and manual utilizations per segment,
    /// maintained on block upserts. Both are space committed outside the
    /// request ledger.
    reserved: HashMap<SegmentId, CapacityVector>,
    /// Blocks indexed by the group key of their origin station.
    boarding_index: HashMap<GroupKey, Vec<BlockId>>,
    exclusive_from: HashMap<BlockId, BlockId>,
    extra_from: HashMap<BlockId, Vec<BlockId>>,
    version: u64,
}

impl NetworkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    pub fn station(&self, id: &StationId) -> Result<&Station, LookupError> {
        self.stations.get(id).ok_or_else(|| LookupError::UnknownStation(id.clone()))
    }

    pub fn segment(&self, id: &SegmentId) -> Result<&Segment, LookupError> {
        self.segments.get(id).ok_or_else(|| LookupError::UnknownSegment(id.clone()))
    }

    pub fn block(&self, id: &BlockId) -> Result<&Block, LookupError> {
        self.blocks.get(id).ok_or_else(|| LookupError::UnknownBlock(id.clone()))
    }

    pub fn request(&self, id: &RequestId) -> Result<&Request, LookupError> {
        self.requests.get(id).ok_or_else(|| LookupError::UnknownRequest(id.clone()))
    }

    /// Operational station a commercial station maps to. Operational
    /// stations map to themselves; a commercial station without an explicit
    /// mapping also maps to itself.
    pub fn operational_of(&self, id: &StationId) -> Result<StationId, LookupError> {
        let station = self.station(id)?;
        match (&station.kind, &station.operational) {
            (StationKind::Commercial, Some(op)) => Ok(op.clone()),
            _ => Ok(station.id.clone()),
        }
    }

    /// Group key of an operational station.
    pub fn group_of(&self, id: &StationId) -> Result<GroupKey, LookupError> {
        let station = self.station(id)?;
        Ok(match &station.group {
            Some(g) => GroupKey::Group(g.clone()),
            None => GroupKey::Station(station.id.clone()),
        })
    }

    /// Group key the request's commercial origin resolves to.
    pub fn request_origin_group(&self, request: &Request) -> Result<GroupKey, LookupError> {
        let op = self.operational_of(&request.origin)?;
        self.group_of(&op)
    }

    pub fn request_destination_group(&self, request: &Request) -> Result<GroupKey, LookupError> {
        let op = self.operational_of(&request.destination)?;
        self.group_of(&op)
    }

    pub fn block_origin_group(&self, block: &Block) -> Result<GroupKey, LookupError> {
        self.group_of(&block.origin)
    }

    pub fn block_destination_group(&self, block: &Block) -> Result<GroupKey, LookupError> {
        self.group_of(&block.destination)
    }

    /// Departure instant of a block: first segment departure, or the
    /// boarding cutoff for zero-segment phase connectors.
    pub fn block_departure(&self, block: &Block) -> Instant {
        block
            .segments
            .first()
            .and_then(|s| self.segments.get(s))
            .map(|s| s.departure)
            .unwrap_or(block.boarding_cutoff)
    }

    pub fn connection(&self, from: &BlockId, to: &BlockId) -> Option<ConnectionKind> {
        self.connections.get(&(from.clone(), to.clone())).copied()
    }

    pub fn exclusive_successor(&self, from: &BlockId) -> Option<&BlockId> {
        self.exclusive_from.get(from)
    }

    /// Blocks boarding at the given group, plus any extra-connection
    /// successors of `from` (which may board elsewhere in time but must
    /// still board at the group geographically).
    pub fn blocks_boarding_at(&self, group: &GroupKey) -> &[BlockId] {
        self.boarding_index.get(group).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn extra_successors(&self, from: &BlockId) -> &[BlockId] {
        self.extra_from.get(from).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn usage(&self, segment: &SegmentId) -> CapacityVector {
        self.usage.get(segment).copied().unwrap_or(CapacityVector::ZERO)
    }

    pub fn reserved_on_segment(&self, segment: &SegmentId) -> CapacityVector {
        self.reserved.get(segment).copied().unwrap_or(CapacityVector::ZERO)
    }

    // ----- mutation ---------------------------------------------------

    pub fn upsert_station(&mut self, station: Station) {
        self.stations.insert(station.id.clone(), station);
        self.rebuild_boarding_index();
    }

    pub fn upsert_train(&mut self, train: Train) {
        self.trains.insert(train.id.clone(), train);
    }

    /// Removes a train together with its segments and the blocks that span
    /// them. Returns the ids of the removed blocks.
    pub fn delete_train(&mut self, id: &TrainId) -> Result<Vec<BlockId>, LookupError> {
        if self.trains.remove(id).is_none() {
            return Err(LookupError::UnknownTrain(id.clone()));
        }
        let gone_segments: HashSet<SegmentId> = self
            .segments
            .values()
            .filter(|s| &s.train == id)
            .map(|s| s.id.clone())
            .collect();
        self.segments.retain(|sid, _| !gone_segments.contains(sid));
        let gone_blocks: Vec<BlockId> = self
            .blocks
            .values()
            .filter(|b| {
                b.train.as_ref() == Some(id) || b.segments.iter().any(|s| gone_segments.contains(s))
            })
            .map(|b| b.id.clone())
            .collect();
        for bid in &gone_blocks {
            self.blocks.remove(bid);
        }
        self.rebuild_indexes();
        Ok(gone_blocks)
    }

    pub fn upsert_segment(&mut self, segment: Segment) {
        self.trains.entry(segment.train.clone()).or_insert_with(|| Train { id: segment.train.clone() });
        self.segments.insert(segment.id.clone(), segment);
    }

    pub fn delete_block(&mut self, id: &BlockId) -> Result<(), LookupError> {
        if self.blocks.remove(id).is_none() {
            return Err(LookupError::UnknownBlock(id.clone()));
        }
        self.connections.retain(|(a, b), _| a != id && b != id);
        self.rebuild_indexes();
        Ok(())
    }

    pub fn upsert_block(&mut self, block: Block) {
        self.blocks.insert(block.id.clone(), block);
        self.rebuild_indexes();
    }

    pub fn upsert_connection(&mut self, connection: Connection) {
        self.connections
            .insert((connection.from.clone(), connection.to.clone()), connection.kind);
        self.rebuild_connection_index();
    }

    pub fn delete_connection(&mut self, from: &BlockId, to: &BlockId) {
        self.connections.remove(&(from.clone(), to.clone()));
        self.rebuild_connection_index();
    }

    pub fn upsert_request(&mut self, request: Request) {
        self.requests.insert(request.id.clone(), request);
    }

    pub fn remove_request(&mut self, id: &RequestId) -> Result<Request, LookupError> {
        let request = self
            .requests
            .remove(id)
            .ok_or_else(|| LookupError::UnknownRequest(id.clone()))?;
        if let Some(chain) = request.current_chain() {
            let demand = request.demand;
            let chain = chain.clone();
            self.remove_chain_usage(&chain, &demand);
        }
        Ok(request)
    }

    /// Sets a request's status, keeping the usage ledger in sync with the
    /// chains entering and leaving it.
    pub fn set_request_status(&mut self, id: &RequestId, status: RequestStatus) -> Result<(), LookupError> {
        let request = self
            .requests
            .get(id)
            .ok_or_else(|| LookupError::UnknownRequest(id.clone()))?;
        let demand = request.demand;
        let old = request.status.chain().cloned();
        let new = status.chain().cloned();
        if let Some(chain) = old {
            self.remove_chain_usage(&chain, &demand);
        }
        if let Some(chain) = new {
            self.add_chain_usage(&chain, &demand);
        }
        self.requests.get_mut(id).unwrap().status = status;
        Ok(())
    }

    fn add_chain_usage(&mut self, chain: &TransportChain, demand: &CapacityVector) {
        for bid in &chain.blocks {
            if let Some(block) = self.blocks.get(bid) {
                for sid in block.segments.clone() {
                    let entry = self.usage.entry(sid).or_insert(CapacityVector::ZERO);
                    *entry = entry.saturating_add(demand);
                }
            }
        }
    }

    fn remove_chain_usage(&mut self, chain: &TransportChain, demand: &CapacityVector) {
        for bid in &chain.blocks {
            if let Some(block) = self.blocks.get(bid) {
                for sid in block.segments.clone() {
                    let entry = self.usage.entry(sid).or_insert(CapacityVector::ZERO);
                    *entry = entry.saturating_sub(demand);
                }
            }
        }
    }

    /// From-scratch recomputation of the usage ledger. The incremental
    /// ledger must always match this.
    pub fn recompute_usage(&self) -> HashMap<SegmentId, CapacityVector> {
        let mut usage: HashMap<SegmentId, CapacityVector> = HashMap::new();
        for request in self.requests.values() {
            if let Some(chain) = request.current_chain() {
                for bid in &chain.blocks {
                    if let Some(block) = self.blocks.get(bid) {
                        for sid in &block.segments {
                            let entry = usage.entry(sid.clone()).or_insert(CapacityVector::ZERO);
                            *entry = entry.saturating_add(&request.demand);
                        }
                    }
                }
            }
        }
        usage
    }

    /// True iff the incremental ledger equals a from-scratch recomputation.
    pub fn ledger_consistent(&self) -> bool {
        let fresh = self.recompute_usage();
        for (sid, cap) in &fresh {
            if self.usage(sid) != *cap {
                return false;
            }
        }
        for (sid, cap) in &self.usage {
            if !cap.is_zero() && fresh.get(sid).copied().unwrap_or(CapacityVector::ZERO) != *cap {
                return false;
            }
        }
        true
    }

    /// Usage on a segment excluding one request's own contribution. Needed
    /// when validating or re-searching a chain for a request that already
    /// holds one.
    pub fn usage_excluding(&self, segment: &SegmentId, request: &Request) -> CapacityVector {
        let mut usage = self.usage(segment);
        if let Some(chain) = request.current_chain() {
            // The stored request may differ from the probe; trust the state copy.
            if let Some(stored) = self.requests.get(&request.id) {
                if let Some(chain) = stored.current_chain() {
                    for bid in &chain.blocks {
                        if let Some(block) = self.blocks.get(bid) {
                            for sid in &block.segments {
                                if sid == segment {
                                    usage = usage.saturating_sub(&stored.demand);
                                }
                            }
                        }
                    }
                }
                return usage;
            }
            for bid in &chain.blocks {
                if let Some(block) = self.blocks.get(bid) {
                    for sid in &block.segments {
                        if sid == segment {
                            usage = usage.saturating_sub(&request.demand);
                        }
                    }
                }
            }
        }
        usage
    }

    fn rebuild_indexes(&mut self) {
        self.rebuild_boarding_index();
        self.rebuild_connection_index();
        self.rebuild_reserved_index();
    }

    fn rebuild_boarding_index(&mut self) {
        self.boarding_index.clear();
        let mut entries: Vec<(GroupKey, BlockId)> = Vec::new();
        for block in self.blocks.values() {
            if let Ok(group) = self.group_of(&block.origin) {
                entries.push((group, block.id.clone()));
            }
        }
        for (group, bid) in entries {
            self.boarding_index.entry(group).or_default().push(bid);
        }
        for list in self.boarding_index.values_mut() {
            list.sort();
        }
    }

    fn rebuild_connection_index(&mut self) {
        self.exclusive_from.clear();
        self.extra_from.clear();
        for ((from, to), kind) in &self.connections {
            match kind {
                ConnectionKind::Exclusive => {
                    self.exclusive_from.insert(from.clone(), to.clone());
                }
                ConnectionKind::Extra => {
                    self.extra_from.entry(from.clone()).or_default().push(to.clone());
                }
                ConnectionKind::Forbidden => {}
            }
        }
        for list in self.extra_from.values_mut() {
            list.sort();
        }
    }

    fn rebuild_reserved_index(&mut self) {
        self.reserved.clear();
        for block in self.blocks.values() {
            let committed = block.reservations.saturating_add(&block.manual_utilization);
            if committed.is_zero() {
                continue;
            }
            for sid in &block.segments {
                let entry = self.reserved.entry(sid.clone()).or_insert(CapacityVector::ZERO);
                *entry = entry.saturating_add(&committed);
            }
        }
    }

    /// Rebuilds derived indexes and the ledger after a bulk load.
    pub fn rebuild_after_load(&mut self) {
        self.rebuild_indexes();
        self.usage = self.recompute_usage();
    }
}
