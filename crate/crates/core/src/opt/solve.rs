//! Exact solving of the throughput model: branch-and-bound on the routing
//! variables over the linear relaxation, certified against integer
//! arithmetic, plus the exhaustive enumeration oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};
use thiserror::Error;

use super::build::{component, OptModel, DIMS};
use crate::model::{RequestId, TransportChain};

const INTEGRALITY_TOL: f64 = 1e-6;
/// Safety margin against float drift when comparing LP bounds to the
/// integer objective grid.
const PRUNE_MARGIN: f64 = 0.5;

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Every achievable objective is a sum of chain prices, hence a multiple of
/// their gcd. A bound below `incumbent + gcd` therefore proves that the
/// incumbent cannot be improved in the subtree.
fn objective_grid(model: &OptModel) -> i64 {
    model
        .requests
        .iter()
        .flat_map(|r| r.chains.iter())
        .fold(0, |g, chain| gcd(g, chain.price_numerator))
        .max(1)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub nodes: u64,
    pub lp_solves: u64,
    pub wall: Duration,
}

/// Result of an optimization run over a model.
#[derive(Clone, Debug)]
pub struct Assignment {
    pub routed: BTreeMap<RequestId, TransportChain>,
    pub unrouted: BTreeSet<RequestId>,
    /// Scaled objective: numerator over `denominator`.
    pub objective_numerator: i64,
    pub denominator: i64,
    pub proven_optimal: bool,
    pub stats: SolveStats,
}

impl Assignment {
    pub fn objective(&self) -> f64 {
        self.objective_numerator as f64 / self.denominator as f64
    }

    pub fn routed_count(&self) -> usize {
        self.routed.len()
    }

    fn from_selection(model: &OptModel, selection: &[Option<usize>], proven: bool, stats: SolveStats) -> Self {
        let mut routed = BTreeMap::new();
        let mut unrouted = BTreeSet::new();
        for (request, choice) in model.requests.iter().zip(selection) {
            match choice {
                Some(chain_index) => {
                    routed.insert(request.id.clone(), request.chains[*chain_index].chain.clone());
                }
                None => {
                    unrouted.insert(request.id.clone());
                }
            }
        }
        Assignment {
            routed,
            unrouted,
            objective_numerator: model.selection_objective(selection),
            denominator: model.denominator,
            proven_optimal: proven,
            stats,
        }
    }
}

struct LpModel {
    problem: Problem,
    /// One variable per (request, chain), in model order.
    routing: Vec<Vec<Variable>>,
}

fn build_lp(model: &OptModel) -> LpModel {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let routing: Vec<Vec<Variable>> = model
        .requests
        .iter()
        .map(|request| {
            request
                .chains
                .iter()
                .map(|chain| {
                    problem.add_var(chain.price_numerator as f64 / model.denominator as f64, (0.0, 1.0))
                })
                .collect()
        })
        .collect();
    // cap_{b,i} variables, lower-bounded by the reservations (family (5)).
    let caps: Vec<Vec<Variable>> = model
        .blocks
        .iter()
        .map(|block| {
            DIMS.iter()
                .map(|&dim| {
                    problem.add_var(0.0, (component(&block.reservations, dim) as f64, f64::INFINITY))
                })
                .collect()
        })
        .collect();

    // (1)/(2): at most one chain per request, exactly one for fixed ones.
    for (request, vars) in model.requests.iter().zip(&routing) {
        if vars.is_empty() {
            continue;
        }
        let mut expr = microlp::LinearExpr::empty();
        for var in vars {
            expr.add(*var, 1.0);
        }
        let op = if request.fixed { ComparisonOp::Eq } else { ComparisonOp::Le };
        problem.add_constraint(expr, op, 1.0);
    }

    // (3): block utilization below the capacity variable.
    for (block_index, block) in model.blocks.iter().enumerate() {
        for (d, &dim) in DIMS.iter().enumerate() {
            let mut expr = microlp::LinearExpr::empty();
            for (request, vars) in model.requests.iter().zip(&routing) {
                let demand = component(&request.demand, dim) as f64;
                for (chain, var) in request.chains.iter().zip(vars) {
                    if chain.blocks.contains(&block_index) {
                        expr.add(*var, demand);
                    }
                }
            }
            expr.add(caps[block_index][d], -1.0);
            problem.add_constraint(expr, ComparisonOp::Le, -(component(&block.untouched, dim) as f64));
        }
    }

    // (4): block capacities within the adjusted segment capacity.
    for (segment_index, segment) in model.segments.iter().enumerate() {
        for (d, &dim) in DIMS.iter().enumerate() {
            let mut expr = microlp::LinearExpr::empty();
            for (block_index, block) in model.blocks.iter().enumerate() {
                if block.segments.contains(&segment_index) {
                    expr.add(caps[block_index][d], 1.0);
                }
            }
            problem.add_constraint(expr, ComparisonOp::Le, component(&segment.adjusted, dim) as f64);
        }
    }

    LpModel { problem, routing }
}

fn extract_selection(model: &OptModel, lp: &LpModel, solution: &Solution) -> Option<Vec<Option<usize>>> {
    let mut selection = Vec::with_capacity(model.requests.len());
    for vars in &lp.routing {
        let mut chosen = None;
        for (chain_index, var) in vars.iter().enumerate() {
            let value = *solution.var_value(*var);
            if value > 1.0 - INTEGRALITY_TOL {
                chosen = Some(chain_index);
            } else if value > INTEGRALITY_TOL {
                return None; // fractional
            }
        }
        selection.push(chosen);
    }
    Some(selection)
}

/// First-fit selection: requests in model order, chains in rank order,
/// keeping every partial selection exactly feasible. Mirrors what a
/// sequential booking process achieves and seeds the branch-and-bound with
/// a non-trivial incumbent.
fn first_fit_selection(model: &OptModel) -> Vec<Option<usize>> {
    let mut selection = model.trivial_selection();
    for (request_index, request) in model.requests.iter().enumerate() {
        if selection[request_index].is_some() {
            continue;
        }
        for chain_index in 0..request.chains.len() {
            selection[request_index] = Some(chain_index);
            if model.selection_feasible(&selection) {
                break;
            }
            selection[request_index] = None;
        }
    }
    selection
}

/// One-swap repair: tries to route each unrouted request directly, and
/// failing that by moving a single conflicting routed request to one of
/// its alternative chains. Repeats until a pass yields no improvement.
fn repair_selection(model: &OptModel, selection: &mut Vec<Option<usize>>, deadline: Instant) {
    let request_segments = |request_index: usize, chain_index: usize| -> BTreeSet<usize> {
        model.requests[request_index].chains[chain_index]
            .blocks
            .iter()
            .flat_map(|&b| model.blocks[b].segments.iter().copied())
            .collect()
    };
    loop {
        let mut improved = false;
        for u in 0..model.requests.len() {
            if selection[u].is_some() || model.requests[u].chains.is_empty() {
                continue;
            }
            if Instant::now() > deadline {
                return;
            }
            'chains: for cu in 0..model.requests[u].chains.len() {
                selection[u] = Some(cu);
                if model.selection_feasible(selection) {
                    improved = true;
                    break;
                }
                // Move one conflicting routed request out of the way.
                let touched = request_segments(u, cu);
                for v in 0..model.requests.len() {
                    let Some(cv) = selection[v] else { continue };
                    if v == u || model.requests[v].fixed {
                        continue;
                    }
                    if request_segments(v, cv).is_disjoint(&touched) {
                        continue;
                    }
                    for cv2 in 0..model.requests[v].chains.len() {
                        if cv2 == cv {
                            continue;
                        }
                        selection[v] = Some(cv2);
                        if model.selection_feasible(selection) {
                            improved = true;
                            break 'chains;
                        }
                    }
                    selection[v] = Some(cv);
                }
                selection[u] = None;
            }
        }
        if !improved {
            return;
        }
    }
}

/// Greedy exact-feasible selection guided by the LP values: requests in
/// descending LP mass, chains in descending LP value then rank.
fn lp_guided_selection(model: &OptModel, lp: &LpModel, solution: &Solution) -> Vec<Option<usize>> {
    let mut selection = model.trivial_selection();
    let mut order: Vec<usize> = (0..model.requests.len()).collect();
    let mass = |request_index: usize| -> f64 {
        lp.routing[request_index].iter().map(|v| *solution.var_value(*v)).sum()
    };
    order.sort_by(|a, b| mass(*b).partial_cmp(&mass(*a)).unwrap().then(a.cmp(b)));
    for request_index in order {
        let vars = &lp.routing[request_index];
        let mut chain_order: Vec<usize> = (0..vars.len()).collect();
        chain_order.sort_by(|a, b| {
            let va = *solution.var_value(vars[*a]);
            let vb = *solution.var_value(vars[*b]);
            vb.partial_cmp(&va).unwrap().then(a.cmp(b))
        });
        let previous = selection[request_index];
        for chain_index in chain_order {
            selection[request_index] = Some(chain_index);
            if model.selection_feasible(&selection) {
                break;
            }
            selection[request_index] = previous;
        }
    }
    selection
}

/// Solves the model exactly by branch-and-bound over the linear
/// relaxation. Returns the best incumbent with `proven_optimal = false`
/// when the budget runs out; with an exhausted budget and no incumbent the
/// trivial feasible solution is returned.
pub fn solve(model: &OptModel, budget: Duration) -> Assignment {
    let start = Instant::now();
    let mut stats = SolveStats::default();

    if model.requests.iter().all(|r| r.chains.is_empty()) {
        let selection = model.trivial_selection();
        stats.wall = start.elapsed();
        return Assignment::from_selection(model, &selection, true, stats);
    }

    let lp = build_lp(model);
    stats.lp_solves += 1;
    let root = match lp.problem.solve() {
        Ok(solution) => solution,
        Err(_) => {
            // The model is feasible by construction; a solver failure still
            // leaves the trivial solution.
            let selection = model.trivial_selection();
            stats.wall = start.elapsed();
            return Assignment::from_selection(model, &selection, false, stats);
        }
    };

    let mut incumbent = model.trivial_selection();
    if !model.selection_feasible(&incumbent) {
        incumbent = vec![None; model.requests.len()];
    }
    // A quarter of the budget may go into heuristic incumbents; the
    // branch-and-bound proper keeps the rest.
    let heuristic_deadline = start + budget / 4;
    for candidate in [first_fit_selection(model), lp_guided_selection(model, &lp, &root)] {
        let mut candidate = candidate;
        if model.selection_feasible(&candidate) {
            repair_selection(model, &mut candidate, heuristic_deadline);
            if model.selection_objective(&candidate) > model.selection_objective(&incumbent) {
                incumbent = candidate;
            }
        }
    }
    let mut incumbent_value = model.selection_objective(&incumbent);
    let grid = objective_grid(model);

    // DFS over (solution, depth); each node carries a warm-started LP.
    let mut nodes: Vec<Solution> = vec![root];
    let mut proven = true;
    while let Some(solution) = nodes.pop() {
        stats.nodes += 1;
        if start.elapsed() > budget {
            proven = false;
            break;
        }
        let bound_scaled = solution.objective() * model.denominator as f64;
        if bound_scaled <= (incumbent_value + grid) as f64 - PRUNE_MARGIN {
            continue;
        }
        if let Some(selection) = extract_selection(model, &lp, &solution) {
            if model.selection_feasible(&selection) {
                let value = model.selection_objective(&selection);
                if value > incumbent_value {
                    incumbent_value = value;
                    incumbent = selection;
                }
                continue;
            }
            // Numerically integral but not exactly feasible: fall through
            // and branch on the largest fractional-ish variable below.
        }
        // Branch on the routing variable closest to one half.
        let mut branch_var: Option<Variable> = None;
        let mut branch_score = f64::INFINITY;
        for vars in &lp.routing {
            for var in vars {
                let value = *solution.var_value(*var);
                if value > INTEGRALITY_TOL && value < 1.0 - INTEGRALITY_TOL {
                    let score = (value - 0.5).abs();
                    if score < branch_score {
                        branch_score = score;
                        branch_var = Some(*var);
                    }
                }
            }
        }
        let Some(var) = branch_var else {
            // Integral LP but infeasible in exact arithmetic can only stem
            // from float drift; give up on this node.
            proven = false;
            continue;
        };
        // Explore the x = 1 child first (pushed last).
        if let Ok(child) = solution.clone().fix_var(var, 0.0) {
            stats.lp_solves += 1;
            nodes.push(child);
        }
        if let Ok(child) = solution.fix_var(var, 1.0) {
            stats.lp_solves += 1;
            nodes.push(child);
        }
    }

    stats.wall = start.elapsed();
    Assignment::from_selection(model, &incumbent, proven, stats)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BruteForceError {
    #[error("total candidate count {0} exceeds the enumeration bound of {1}")]
    TooLarge(usize, usize),
}

const BRUTE_FORCE_BOUND: usize = 20;

/// Exhaustive enumeration over all chain selections; the independent
/// oracle used to certify `solve`. Refuses instances with more than 20
/// total candidates.
pub fn brute_force_solve(model: &OptModel) -> Result<Assignment, BruteForceError> {
    let start = Instant::now();
    let total: usize = model.requests.iter().map(|r| r.chains.len()).sum();
    if total > BRUTE_FORCE_BOUND {
        return Err(BruteForceError::TooLarge(total, BRUTE_FORCE_BOUND));
    }

    let mut best: Option<(i64, Vec<Option<usize>>)> = None;
    let mut selection: Vec<Option<usize>> = vec![None; model.requests.len()];
    let mut nodes: u64 = 0;

    fn recurse(
        model: &OptModel,
        position: usize,
        selection: &mut Vec<Option<usize>>,
        best: &mut Option<(i64, Vec<Option<usize>>)>,
        nodes: &mut u64,
    ) {
        if position == model.requests.len() {
            *nodes += 1;
            if !model.selection_feasible(selection) {
                return;
            }
            let value = model.selection_objective(selection);
            if best.as_ref().map(|(b, _)| value > *b).unwrap_or(true) {
                *best = Some((value, selection.clone()));
            }
            return;
        }
        let request = &model.requests[position];
        if !request.fixed {
            selection[position] = None;
            recurse(model, position + 1, selection, best, nodes);
        }
        for chain_index in 0..request.chains.len() {
            selection[position] = Some(chain_index);
            recurse(model, position + 1, selection, best, nodes);
        }
        selection[position] = None;
    }

    recurse(model, 0, &mut selection, &mut best, &mut nodes);

    let stats = SolveStats { nodes, lp_solves: 0, wall: start.elapsed() };
    match best {
        Some((_, selection)) => Ok(Assignment::from_selection(model, &selection, true, stats)),
        None => {
            // Feasible by construction; an empty result means every fixed
            // combination clashed, which build_model rules out. Fall back
            // to the all-unrouted selection for robustness.
            let selection = vec![None; model.requests.len()];
            Ok(Assignment::from_selection(model, &selection, true, stats))
        }
    }
}
