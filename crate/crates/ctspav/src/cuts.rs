//! Valid inequalities and their separation heuristics: rounded vehicle-count
//! cuts fed by the tree bound and the covering-relaxation bound, two-path
//! cuts over strongly connected components of the support graph guarded by a
//! single-vehicle serviceability oracle, predecessor/successor cuts, and the
//! statically installed lifted big-M and lifted time-bound coefficients.

use crate::feasibility::FeasLabel;
use crate::filter::ArcSet;
use crate::instance::{Instance, Seconds};
use crate::lp::{Cut, Sense, SeparationContext, Separator, CUT_VIOLATION_TOL};
use crate::model::{big_m, big_m_bar, ceil_with_slack, CtspavModel, FIXED_COST_MULTIPLIER};
use std::collections::HashMap;

// ---------------------------------------------------------------------------
// Lifted big-M coefficients
// ---------------------------------------------------------------------------

/// Lifting coefficient of the reverse-arc flow in the forward big-M row.
pub fn lift_mtz_alpha(instance: &Instance, i: usize, j: usize) -> Seconds {
    let m = big_m(instance, i, j);
    if instance.is_dropoff(i) {
        m - instance.service(i) - instance.tau(i, j) - instance.service(j) - instance.tau(j, i)
    } else {
        let (_, b_i) = instance.window(i).unwrap();
        let (a_j, _) = instance.window(j).unwrap();
        m - instance.service(i) - instance.tau(i, j) - b_i + a_j
    }
}

/// Lifting coefficient of the reverse-arc flow in the backward big-M row.
pub fn lift_mtz_beta(instance: &Instance, i: usize, j: usize) -> Seconds {
    -big_m_bar(instance, i, j)
        - instance.service(i)
        - instance.tau(i, j)
        - instance.service(j)
        - instance.tau(j, i)
}

/// Coefficient of `Y(j,i)` in the lifted lower time bound of node `i`.
pub fn lifted_lb_coef(instance: &Instance, j: usize, i: usize) -> Seconds {
    let (a_j, _) = instance.window(j).unwrap();
    let (a_i, _) = instance.window(i).unwrap();
    (a_j - a_i + instance.service(j) + instance.tau(j, i)).max(0)
}

/// Coefficient of `Y(i,j)` in the lifted upper time bound of node `i`.
pub fn lifted_ub_coef(instance: &Instance, i: usize, j: usize) -> Seconds {
    let (_, b_i) = instance.window(i).unwrap();
    let (_, b_j) = instance.window(j).unwrap();
    (b_i - b_j + instance.service(i) + instance.tau(i, j)).max(0)
}

// ---------------------------------------------------------------------------
// Support graph and strongly connected components
// ---------------------------------------------------------------------------

/// Subgraph of trip-node arcs carrying positive flow in an LP point.
#[derive(Debug, Clone)]
pub struct SupportGraph {
    pub num_nodes: usize,
    pub adj: Vec<Vec<usize>>,
}

pub fn build_support_graph(x: &[f64], model: &CtspavModel, instance: &Instance) -> SupportGraph {
    let m = instance.num_nodes();
    let mut adj = vec![Vec::new(); m];
    for (k, &(i, j)) in model.vars.y_arcs.iter().enumerate() {
        if instance.is_trip_node(i) && instance.is_trip_node(j) && x[model.vars.num_x + k] > 1e-7 {
            adj[i].push(j);
        }
    }
    SupportGraph { num_nodes: m, adj }
}

/// Strongly connected components with at least two nodes, by Tarjan's
/// algorithm (iterative). Components and their node lists are sorted.
pub fn find_sccs(graph: &SupportGraph) -> Vec<Vec<usize>> {
    let n = graph.num_nodes;
    const UNSET: usize = usize::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut out: Vec<Vec<usize>> = Vec::new();

    // Explicit DFS frames: (node, child cursor).
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for start in 0..n {
        if index[start] != UNSET {
            continue;
        }
        frames.push((start, 0));
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;
        while let Some(&mut (v, ref mut cursor)) = frames.last_mut() {
            if *cursor < graph.adj[v].len() {
                let w = graph.adj[v][*cursor];
                *cursor += 1;
                if index[w] == UNSET {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&mut (parent, _)) = frames.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    if comp.len() >= 2 {
                        comp.sort_unstable();
                        out.push(comp);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// Predecessors of `S` under pickup/drop-off pairing: pickups whose drop-off
/// lies in `S`.
pub fn predecessor_set(s: &[usize], instance: &Instance) -> Vec<usize> {
    let mut out: Vec<usize> = s
        .iter()
        .filter(|&&v| instance.is_dropoff(v))
        .map(|&v| instance.pickup_of(v))
        .collect();
    out.sort_unstable();
    out
}

/// Successors of `S`: drop-offs of the pickups in `S`.
pub fn successor_set(s: &[usize], instance: &Instance) -> Vec<usize> {
    let mut out: Vec<usize> = s
        .iter()
        .filter(|&&v| instance.is_pickup(v))
        .map(|&v| instance.dropoff_of(v))
        .collect();
    out.sort_unstable();
    out
}

// ---------------------------------------------------------------------------
// Single-vehicle serviceability oracle
// ---------------------------------------------------------------------------

/// Sets larger than this are not tested; the oracle abstains.
pub const KAPPA_SIZE_CAP: usize = 14;
const KAPPA_INTERNAL_CAP: usize = 30;

#[derive(Debug, Default)]
pub struct KappaMemo {
    verdicts: HashMap<Vec<usize>, bool>,
    pub dssr_iterations_max: usize,
}

#[derive(Clone)]
struct KappaLabel {
    feas: FeasLabel,
    /// Visit bitmask over the restricted node list.
    restricted_mask: u32,
    /// Walk arena index for reconstruction.
    arena: usize,
}

/// Decide whether one vehicle can feasibly serve all of `s` by visiting its
/// pairing predecessors, then `s`, then its pairing successors, each layer in
/// some order, over the filtered arc set. `true` means no such elementary
/// path exists, so at least two vehicles are needed. `None` when `s` exceeds
/// the size cap.
pub fn kappa_gt_one(
    s: &[usize],
    instance: &Instance,
    arcs: &ArcSet,
    memo: &mut KappaMemo,
) -> Option<bool> {
    if s.len() > KAPPA_SIZE_CAP {
        return None;
    }
    let mut key: Vec<usize> = s.to_vec();
    key.sort_unstable();
    if let Some(&v) = memo.verdicts.get(&key) {
        return Some(v);
    }

    let in_s = |v: usize| key.binary_search(&v).is_ok();
    let layer1: Vec<usize> = predecessor_set(&key, instance)
        .into_iter()
        .filter(|&p| !in_s(p))
        .collect();
    let layer3: Vec<usize> = successor_set(&key, instance)
        .into_iter()
        .filter(|&d| !in_s(d))
        .collect();
    let mut internal: Vec<usize> = Vec::new();
    internal.extend(&layer1);
    internal.extend(&key);
    internal.extend(&layer3);
    if internal.len() > KAPPA_INTERNAL_CAP {
        return None;
    }
    let layer_of = |v: usize| -> u8 {
        if layer1.contains(&v) {
            1
        } else if in_s(v) {
            2
        } else {
            3
        }
    };
    // Layer-monotone arcs restricted to the filtered set; transitions only to
    // the same or the next layer, with the empty-layer shortcuts.
    let allowed = |u: usize, v: usize| -> bool {
        if u == v || !arcs.contains(u, v) {
            return false;
        }
        let (lu, lv) = (layer_of(u), layer_of(v));
        lv == lu || lv == lu + 1
    };
    let starts: Vec<usize> = if layer1.is_empty() {
        key.iter()
            .copied()
            .filter(|&v| arcs.contains(instance.source(), v))
            .collect()
    } else {
        layer1
            .iter()
            .copied()
            .filter(|&v| arcs.contains(instance.source(), v))
            .collect()
    };
    let can_finish = |v: usize, onboard_empty: bool| -> bool {
        onboard_empty
            && arcs.contains(v, instance.sink())
            && (if layer3.is_empty() {
                layer_of(v) >= 2
            } else {
                layer_of(v) == 3
            })
    };

    let target = internal.len();
    let mut restricted: Vec<usize> = Vec::new();
    let verdict = loop {
        match best_relaxed_walk(
            instance,
            &internal,
            &restricted,
            &starts,
            &allowed,
            &can_finish,
            target,
        ) {
            None => break true,
            Some(walk) => {
                debug_assert_eq!(walk.len(), target);
                match first_repeated(&walk) {
                    None => break false,
                    Some(rep) => {
                        // The visit mask forbids repeating a restricted node.
                        if restricted.contains(&rep) {
                            debug_assert!(false, "restricted node {rep} repeated");
                            return None;
                        }
                        restricted.push(rep);
                        restricted.sort_unstable();
                        memo.dssr_iterations_max = memo.dssr_iterations_max.max(restricted.len());
                    }
                }
            }
        }
    };
    memo.verdicts.insert(key, verdict);
    Some(verdict)
}

fn first_repeated(walk: &[usize]) -> Option<usize> {
    let mut seen = std::collections::HashSet::new();
    walk.iter().find(|&&v| !seen.insert(v)).copied()
}

/// Max-visits resource-feasible walk over the layered graph with the
/// restricted nodes limited to a single visit. Returns a walk reaching
/// `target` visits that can close at the sink, or `None`.
#[allow(clippy::too_many_arguments)]
fn best_relaxed_walk(
    instance: &Instance,
    internal: &[usize],
    restricted: &[usize],
    starts: &[usize],
    allowed: &dyn Fn(usize, usize) -> bool,
    can_finish: &dyn Fn(usize, bool) -> bool,
    target: usize,
) -> Option<Vec<usize>> {
    let mut arena: Vec<(usize, usize)> = Vec::new(); // (parent, node)
    let mut frontier: Vec<KappaLabel> = Vec::new();
    for &v in starts {
        if let Ok(feas) = FeasLabel::start(v, instance) {
            let mask = restricted.binary_search(&v).map(|i| 1u32 << i).unwrap_or(0);
            arena.push((usize::MAX, v));
            frontier.push(KappaLabel {
                feas,
                restricted_mask: mask,
                arena: arena.len() - 1,
            });
        }
    }
    for level in 1..=target {
        // Complete walks close only at the full target level.
        if level == target {
            for lab in &frontier {
                if can_finish(lab.feas.node, lab.feas.onboard.is_empty()) {
                    let mut walk = Vec::with_capacity(target);
                    let mut cur = lab.arena;
                    while cur != usize::MAX {
                        walk.push(arena[cur].1);
                        cur = arena[cur].0;
                    }
                    walk.reverse();
                    return Some(walk);
                }
            }
            return None;
        }
        let mut next: Vec<KappaLabel> = Vec::new();
        for lab in &frontier {
            for &v in internal {
                if !allowed(lab.feas.node, v) {
                    continue;
                }
                let mut mask = lab.restricted_mask;
                if let Ok(bit) = restricted.binary_search(&v) {
                    if mask & (1 << bit) != 0 {
                        continue;
                    }
                    mask |= 1 << bit;
                }
                if let Ok(feas) = lab.feas.extend(v, instance) {
                    let cand = KappaLabel {
                        feas,
                        restricted_mask: mask,
                        arena: usize::MAX,
                    };
                    if next.iter().any(|other| dominates_kappa(other, &cand)) {
                        continue;
                    }
                    next.retain(|other| !dominates_kappa(&cand, other));
                    arena.push((lab.arena, v));
                    let mut cand = cand;
                    cand.arena = arena.len() - 1;
                    next.push(cand);
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            return None;
        }
    }
    // target == 0 cannot happen: callers pass |S| >= 2.
    None
}

fn dominates_kappa(a: &KappaLabel, b: &KappaLabel) -> bool {
    a.feas.node == b.feas.node
        && a.restricted_mask & !b.restricted_mask == 0
        && a.feas.dominates_timing(&b.feas)
}

// ---------------------------------------------------------------------------
// Separators
// ---------------------------------------------------------------------------

/// Rounded vehicle-count cut: depot outflow at least the rounded best known
/// vehicle-count lower bound. The tree-bound part carries a `1/multiplier`
/// safety margin because the fixed cost separates vehicle counts only up to
/// the distance share of the objective.
pub struct RoundedVcSeparator<'a> {
    pub model: &'a CtspavModel,
    pub instance: &'a Instance,
    pub use_external_bound: bool,
    /// Running maximum of the safety-adjusted tree-bound estimate, shared
    /// with the caller for reporting.
    chi_bb_safe: std::rc::Rc<std::cell::RefCell<f64>>,
}

impl<'a> RoundedVcSeparator<'a> {
    pub fn new(
        model: &'a CtspavModel,
        instance: &'a Instance,
        use_external_bound: bool,
        chi_bb_safe: std::rc::Rc<std::cell::RefCell<f64>>,
    ) -> Self {
        RoundedVcSeparator {
            model,
            instance,
            use_external_bound,
            chi_bb_safe,
        }
    }

    fn depot_outflow(&self, x: &[f64]) -> f64 {
        let vs = self.instance.source();
        self.model
            .vars
            .y_arcs
            .iter()
            .enumerate()
            .filter(|(_, &(i, _))| i == vs)
            .map(|(k, _)| x[self.model.vars.num_x + k])
            .sum()
    }

    fn source_arc_vars(&self) -> Vec<usize> {
        let vs = self.instance.source();
        self.model
            .vars
            .y_arcs
            .iter()
            .enumerate()
            .filter(|(_, &(i, _))| i == vs)
            .map(|(k, _)| self.model.vars.num_x + k)
            .collect()
    }
}

impl Separator for RoundedVcSeparator<'_> {
    fn name(&self) -> &'static str {
        "rounded-vc"
    }
    fn separate(&mut self, ctx: &SeparationContext<'_>) -> Vec<Cut> {
        let outflow = self.depot_outflow(ctx.x);
        if ctx.is_best_bound_node {
            let safe = outflow - 1.0 / FIXED_COST_MULTIPLIER as f64;
            let mut cell = self.chi_bb_safe.borrow_mut();
            if safe > *cell {
                *cell = safe;
            }
        }
        let mut rhs = ceil_with_slack(*self.chi_bb_safe.borrow());
        if self.use_external_bound {
            if let Some(farley) = ctx.external_bound {
                rhs = rhs.max(ceil_with_slack(farley));
            }
        }
        let violation = rhs as f64 - outflow;
        if rhs >= 1 && violation > CUT_VIOLATION_TOL {
            vec![Cut {
                coeffs: self
                    .source_arc_vars()
                    .into_iter()
                    .map(|v| (v, 1.0))
                    .collect(),
                sense: Sense::Ge,
                rhs: rhs as f64,
                family: "rounded-vc",
                node_set: None,
                violation,
            }]
        } else {
            Vec::new()
        }
    }
}

/// Two-path cuts over SCC node sets whose outflow is below two and which one
/// vehicle provably cannot serve.
pub struct TwoPathSeparator<'a> {
    pub model: &'a CtspavModel,
    pub instance: &'a Instance,
    pub arcs: &'a ArcSet,
    pub memo: KappaMemo,
}

impl<'a> TwoPathSeparator<'a> {
    pub fn new(model: &'a CtspavModel, instance: &'a Instance, arcs: &'a ArcSet) -> Self {
        TwoPathSeparator {
            model,
            instance,
            arcs,
            memo: KappaMemo::default(),
        }
    }
}

/// Sum of `Y` over arcs from `from` into `to` (as predicates).
fn flow_between(
    x: &[f64],
    model: &CtspavModel,
    from: &dyn Fn(usize) -> bool,
    to: &dyn Fn(usize) -> bool,
) -> (f64, Vec<usize>) {
    let mut total = 0.0;
    let mut vars = Vec::new();
    for (k, &(i, j)) in model.vars.y_arcs.iter().enumerate() {
        if from(i) && to(j) {
            total += x[model.vars.num_x + k];
            vars.push(model.vars.num_x + k);
        }
    }
    (total, vars)
}

impl Separator for TwoPathSeparator<'_> {
    fn name(&self) -> &'static str {
        "two-path"
    }
    fn separate(&mut self, ctx: &SeparationContext<'_>) -> Vec<Cut> {
        let support = build_support_graph(ctx.x, self.model, self.instance);
        let mut cuts = Vec::new();
        for comp in find_sccs(&support) {
            let in_comp = |v: usize| comp.binary_search(&v).is_ok();
            let (outflow, vars) = flow_between(ctx.x, self.model, &in_comp, &|v| !in_comp(v));
            if outflow >= 2.0 - CUT_VIOLATION_TOL {
                continue;
            }
            if kappa_gt_one(&comp, self.instance, self.arcs, &mut self.memo) == Some(true) {
                cuts.push(Cut {
                    coeffs: vars.into_iter().map(|v| (v, 1.0)).collect(),
                    sense: Sense::Ge,
                    rhs: 2.0,
                    family: "two-path",
                    node_set: Some(comp),
                    violation: 2.0 - outflow,
                });
            }
        }
        cuts
    }
}

/// Predecessor and successor cuts over SCC node sets.
pub struct PredSuccSeparator<'a> {
    pub model: &'a CtspavModel,
    pub instance: &'a Instance,
}

impl Separator for PredSuccSeparator<'_> {
    fn name(&self) -> &'static str {
        "pred-succ"
    }
    fn separate(&mut self, ctx: &SeparationContext<'_>) -> Vec<Cut> {
        let support = build_support_graph(ctx.x, self.model, self.instance);
        let mut cuts = Vec::new();
        for comp in find_sccs(&support) {
            let in_comp = |v: usize| comp.binary_search(&v).is_ok();
            let pi = predecessor_set(&comp, self.instance);
            let sigma = successor_set(&comp, self.instance);
            let in_pi = |v: usize| pi.binary_search(&v).is_ok();
            let in_sigma = |v: usize| sigma.binary_search(&v).is_ok();

            let (pred_flow, pred_vars) =
                flow_between(ctx.x, self.model, &|v| in_comp(v) && !in_pi(v), &|v| {
                    !in_comp(v) && !in_pi(v)
                });
            if pred_flow < 1.0 - CUT_VIOLATION_TOL {
                cuts.push(Cut {
                    coeffs: pred_vars.into_iter().map(|v| (v, 1.0)).collect(),
                    sense: Sense::Ge,
                    rhs: 1.0,
                    family: "predecessor",
                    node_set: Some(comp.clone()),
                    violation: 1.0 - pred_flow,
                });
            }
            let (succ_flow, succ_vars) =
                flow_between(ctx.x, self.model, &|v| !in_comp(v) && !in_sigma(v), &|v| {
                    in_comp(v) && !in_sigma(v)
                });
            if succ_flow < 1.0 - CUT_VIOLATION_TOL {
                cuts.push(Cut {
                    coeffs: succ_vars.into_iter().map(|v| (v, 1.0)).collect(),
                    sense: Sense::Ge,
                    rhs: 1.0,
                    family: "successor",
                    node_set: Some(comp),
                    violation: 1.0 - succ_flow,
                });
            }
        }
        cuts
    }
}
