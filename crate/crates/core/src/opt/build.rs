//! Construction of the throughput model from candidate chains and the
//! network state.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use thiserror::Error;

use crate::model::*;
use crate::opt::price_denominator;

pub const WEIGHT: usize = 0;
pub const LENGTH: usize = 1;
pub const DIMS: [usize; 2] = [WEIGHT, LENGTH];

pub(crate) fn component(v: &CapacityVector, dim: usize) -> u64 {
    match dim {
        WEIGHT => v.weight,
        _ => v.length,
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("fixed request {0} has no candidate chains")]
    FixedWithoutCandidates(RequestId),
}

/// One request entering the model, with its candidate chains in tie-break
/// order.
#[derive(Clone, Debug)]
pub struct CandidateInput {
    pub request: RequestId,
    pub chains: Vec<TransportChain>,
    /// Member of the fixed set: must obtain exactly one chain.
    pub fixed: bool,
}

#[derive(Clone, Debug)]
pub struct ModelChain {
    pub chain: TransportChain,
    /// Indexes into `OptModel::blocks`.
    pub blocks: Vec<usize>,
    /// Price numerator over the model denominator.
    pub price_numerator: i64,
}

#[derive(Clone, Debug)]
pub struct ModelRequest {
    pub id: RequestId,
    pub demand: CapacityVector,
    pub weight: u64,
    pub fixed: bool,
    pub chains: Vec<ModelChain>,
    /// Candidate index of the request's currently assigned chain, if any.
    pub current: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ModelBlock {
    pub id: BlockId,
    pub reservations: CapacityVector,
    /// Utilization by requests outside the model (untouchable and manual),
    /// plus the block's declared manual utilization.
    pub untouched: CapacityVector,
    /// Indexes into `OptModel::segments`, restricted to modeled segments.
    pub segments: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ModelSegment {
    pub id: SegmentId,
    pub adjusted: CapacityVector,
}

#[derive(Clone, Debug)]
pub struct OptModel {
    pub requests: Vec<ModelRequest>,
    pub blocks: Vec<ModelBlock>,
    pub segments: Vec<ModelSegment>,
    /// Common price denominator `|R| * max|C_r| + 1`.
    pub denominator: i64,
}

impl OptModel {
    /// Routing variables plus one capacity variable per block and
    /// dimension.
    pub fn num_variables(&self) -> usize {
        self.requests.iter().map(|r| r.chains.len()).sum::<usize>() + DIMS.len() * self.blocks.len()
    }

    /// One routing constraint per request, block-capacity and reservation
    /// constraints per block and dimension, and a segment constraint per
    /// segment and dimension.
    pub fn num_constraints(&self) -> usize {
        self.requests.len() + 2 * DIMS.len() * self.blocks.len() + DIMS.len() * self.segments.len()
    }

    /// Exact integer feasibility check of a selection (one optional chain
    /// index per request). Capacity variables are implied: the utilization
    /// of each block maxed with its reservation.
    pub fn selection_feasible(&self, selection: &[Option<usize>]) -> bool {
        for (request, choice) in self.requests.iter().zip(selection) {
            if request.fixed && choice.is_none() {
                return false;
            }
        }
        for &dim in &DIMS {
            let mut load: Vec<u64> = self
                .blocks
                .iter()
                .map(|b| component(&b.untouched, dim))
                .collect();
            for (request, choice) in self.requests.iter().zip(selection) {
                if let Some(chain_index) = choice {
                    for &block in &request.chains[*chain_index].blocks {
                        load[block] += component(&request.demand, dim);
                    }
                }
            }
            let mut per_segment: Vec<u64> = vec![0; self.segments.len()];
            for (block, load) in self.blocks.iter().zip(&load) {
                let cap = (*load).max(component(&block.reservations, dim));
                for &segment in &block.segments {
                    per_segment[segment] += cap;
                }
            }
            for (segment, used) in self.segments.iter().zip(&per_segment) {
                if *used > component(&segment.adjusted, dim) {
                    return false;
                }
            }
        }
        true
    }

    /// Scaled objective (numerator over `denominator`) of a selection.
    pub fn selection_objective(&self, selection: &[Option<usize>]) -> i64 {
        self.requests
            .iter()
            .zip(selection)
            .filter_map(|(request, choice)| choice.map(|c| request.chains[c].price_numerator))
            .sum()
    }

    /// The guaranteed-feasible trivial selection: fixed requests on their
    /// current chains, everything else unrouted.
    pub fn trivial_selection(&self) -> Vec<Option<usize>> {
        self.requests
            .iter()
            .map(|r| if r.fixed { r.current.or(Some(0)) } else { None })
            .collect()
    }

    /// Plain-text dump of the model in an LP-style format, for debugging.
    pub fn write_lp(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "\\ path-based throughput model")?;
        writeln!(out, "Maximize")?;
        let mut terms = Vec::new();
        for (ri, request) in self.requests.iter().enumerate() {
            for (ci, chain) in request.chains.iter().enumerate() {
                terms.push(format!(
                    "{} x_{}_{}",
                    chain.price_numerator as f64 / self.denominator as f64,
                    ri,
                    ci
                ));
            }
        }
        writeln!(out, " obj: {}", terms.join(" + "))?;
        writeln!(out, "Subject To")?;
        for (ri, request) in self.requests.iter().enumerate() {
            let sum: Vec<String> =
                (0..request.chains.len()).map(|ci| format!("x_{ri}_{ci}")).collect();
            if sum.is_empty() {
                continue;
            }
            let op = if request.fixed { "=" } else { "<=" };
            writeln!(out, " routing_{} ({}): {} {} 1", ri, request.id, sum.join(" + "), op)?;
        }
        for &dim in &DIMS {
            let dim_name = if dim == WEIGHT { "w" } else { "l" };
            for (bi, block) in self.blocks.iter().enumerate() {
                let mut terms = vec![format!("{}", component(&block.untouched, dim))];
                for (ri, request) in self.requests.iter().enumerate() {
                    for (ci, chain) in request.chains.iter().enumerate() {
                        if chain.blocks.contains(&bi) {
                            terms.push(format!("{} x_{}_{}", component(&request.demand, dim), ri, ci));
                        }
                    }
                }
                writeln!(
                    out,
                    " blockcap_{}_{} ({}): {} - cap_{}_{} <= 0",
                    dim_name, bi, block.id, terms.join(" + "), dim_name, bi
                )?;
                writeln!(
                    out,
                    " reserve_{}_{} ({}): cap_{}_{} >= {}",
                    dim_name, bi, block.id, dim_name, bi,
                    component(&block.reservations, dim)
                )?;
            }
            for (si, segment) in self.segments.iter().enumerate() {
                let terms: Vec<String> = self
                    .blocks
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| b.segments.contains(&si))
                    .map(|(bi, _)| format!("cap_{dim_name}_{bi}"))
                    .collect();
                writeln!(
                    out,
                    " segment_{}_{} ({}): {} <= {}",
                    dim_name, si, segment.id, terms.join(" + "),
                    component(&segment.adjusted, dim)
                )?;
            }
        }
        writeln!(out, "Binaries")?;
        for (ri, request) in self.requests.iter().enumerate() {
            for ci in 0..request.chains.len() {
                writeln!(out, " x_{ri}_{ci}")?;
            }
        }
        writeln!(out, "End")
    }
}

/// Builds the throughput model.
///
/// `inputs` carries the request set with candidate chains in tie-break
/// order; `untouchable` names the requests whose current chains must not
/// be touched — their usage is folded into the block utilization
/// constants. Segment capacities are the adjusted capacities, so the model
/// is always feasible: fixed requests can keep their current chains and
/// every other routing variable can be zero.
pub fn build_model(
    inputs: &[CandidateInput],
    state: &NetworkState,
    untouchable: &[RequestId],
) -> Result<OptModel, BuildError> {
    build_model_priced(inputs, state, untouchable, true)
}

/// As [`build_model`], but with a switch for the candidate-rank tiebreak in
/// the prices. Without it every candidate of a request prices the same
/// (pure weighted throughput), which keeps the objective on a coarse grid
/// and lets the solver prove optimality on much larger instances.
pub fn build_model_priced(
    inputs: &[CandidateInput],
    state: &NetworkState,
    untouchable: &[RequestId],
    rank_tiebreak: bool,
) -> Result<OptModel, BuildError> {
    let n_requests = inputs.len();
    let max_candidates = inputs.iter().map(|i| i.chains.len()).max().unwrap_or(0);
    let denominator = price_denominator(n_requests, max_candidates);

    // Collect the modeled block set: blocks of candidate chains first.
    let mut block_index: HashMap<BlockId, usize> = HashMap::new();
    let mut block_ids: Vec<BlockId> = Vec::new();
    for input in inputs {
        for chain in &input.chains {
            for bid in &chain.blocks {
                state.block(bid)?;
                block_index.entry(bid.clone()).or_insert_with(|| {
                    block_ids.push(bid.clone());
                    block_ids.len() - 1
                });
            }
        }
    }

    // Modeled segments: all segments of candidate blocks.
    let mut segment_index: HashMap<SegmentId, usize> = HashMap::new();
    let mut segment_ids: Vec<SegmentId> = Vec::new();
    for bid in &block_ids {
        for sid in &state.block(bid)?.segments {
            state.segment(sid)?;
            segment_index.entry(sid.clone()).or_insert_with(|| {
                segment_ids.push(sid.clone());
                segment_ids.len() - 1
            });
        }
    }

    // Blocks outside candidate chains that commit space (reservations,
    // manual utilization, or untouchable requests) on a modeled segment
    // still consume segment capacity and enter the block set.
    let mut untouched_by_block: BTreeMap<BlockId, CapacityVector> = BTreeMap::new();
    for rid in untouchable {
        let request = state.request(rid)?;
        if let Some(chain) = request.current_chain() {
            for bid in &chain.blocks {
                let entry = untouched_by_block.entry(bid.clone()).or_insert(CapacityVector::ZERO);
                *entry = entry.saturating_add(&request.demand);
            }
        }
    }
    let touches_modeled_segment = |block: &Block| {
        block.segments.iter().any(|s| segment_index.contains_key(s))
    };
    let mut extra: Vec<BlockId> = Vec::new();
    for block in state.blocks.values() {
        if block_index.contains_key(&block.id) {
            continue;
        }
        let committed = block
            .reservations
            .saturating_add(&block.manual_utilization)
            .saturating_add(
                &untouched_by_block.get(&block.id).copied().unwrap_or(CapacityVector::ZERO),
            );
        if !committed.is_zero() && touches_modeled_segment(block) {
            extra.push(block.id.clone());
        }
    }
    for bid in extra {
        block_index.insert(bid.clone(), block_ids.len());
        block_ids.push(bid);
    }

    let blocks: Vec<ModelBlock> = block_ids
        .iter()
        .map(|bid| {
            let block = state.block(bid)?;
            let untouched = block
                .manual_utilization
                .saturating_add(
                    &untouched_by_block.get(bid).copied().unwrap_or(CapacityVector::ZERO),
                );
            Ok(ModelBlock {
                id: bid.clone(),
                reservations: block.reservations,
                untouched,
                segments: block
                    .segments
                    .iter()
                    .filter_map(|s| segment_index.get(s).copied())
                    .collect(),
            })
        })
        .collect::<Result<_, BuildError>>()?;

    let segments: Vec<ModelSegment> = segment_ids
        .iter()
        .map(|sid| {
            let segment = state.segment(sid)?;
            Ok(ModelSegment {
                id: sid.clone(),
                adjusted: adjusted_segment_capacity(segment, state),
            })
        })
        .collect::<Result<_, BuildError>>()?;

    let mut requests = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.fixed && input.chains.is_empty() {
            return Err(BuildError::FixedWithoutCandidates(input.request.clone()));
        }
        let request = state.request(&input.request)?;
        let current = request.current_chain().and_then(|current| {
            input.chains.iter().position(|c| c.blocks == current.blocks)
        });
        let chains = input
            .chains
            .iter()
            .enumerate()
            .map(|(rank, chain)| ModelChain {
                chain: chain.clone(),
                blocks: chain.blocks.iter().map(|b| block_index[b]).collect(),
                price_numerator: request.priority_weight as i64 * denominator
                    - if rank_tiebreak { rank as i64 } else { 0 },
            })
            .collect();
        requests.push(ModelRequest {
            id: input.request.clone(),
            demand: request.demand,
            weight: request.priority_weight,
            fixed: input.fixed,
            chains,
            current,
        });
    }

    Ok(OptModel { requests, blocks, segments, denominator })
}
