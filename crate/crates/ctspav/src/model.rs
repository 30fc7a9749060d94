//! The chaining MIP: selects mini routes (X), arcs (Y) and service times (T)
//! so that selected arcs decompose into depot-to-depot chains of the selected
//! mini routes, under big-M travel-time rows (optionally lifted with the
//! reverse-arc flow), ride-duration rows and time windows. Edge costs carry a
//! large uniform fixed cost on depot-leaving arcs so the objective first
//! minimizes the vehicle count and then the total distance.

use crate::cuts::{lift_mtz_alpha, lift_mtz_beta, lifted_lb_coef, lifted_ub_coef};
use crate::feasibility::{check_av_route, Schedule};
use crate::filter::ArcSet;
use crate::instance::{Instance, Meters, Seconds};
use crate::lp::{LinearModel, RowDef, Sense, VariableDef};
use crate::mrea::{MiniRoute, Omega};
use std::collections::HashMap;

/// Multiplier applied to the distance upper bound to form the per-vehicle
/// fixed cost.
pub const FIXED_COST_MULTIPLIER: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Base,
    Sec,
    Hybrid,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "sec" => Ok(Variant::Sec),
            "hybrid" => Ok(Variant::Hybrid),
            other => Err(format!(
                "unknown variant '{other}' (expected base|sec|hybrid)"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Sec => "sec",
            Variant::Hybrid => "hybrid",
        })
    }
}

/// Which machinery a solver variant enables. Lifted rows are always built
/// into the model; the base configuration already includes them together
/// with the rounded vehicle-count cut driven by the tree bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantConfig {
    pub lifted_time_bounds: bool,
    pub lifted_mtz: bool,
    pub rounded_vehicle_count: bool,
    pub sec_separators: bool,
    pub darp_bound_feed: bool,
}

pub fn configure_variant(variant: Variant) -> VariantConfig {
    match variant {
        Variant::Base => VariantConfig {
            lifted_time_bounds: true,
            lifted_mtz: true,
            rounded_vehicle_count: true,
            sec_separators: false,
            darp_bound_feed: false,
        },
        Variant::Sec => VariantConfig {
            lifted_time_bounds: true,
            lifted_mtz: true,
            rounded_vehicle_count: true,
            sec_separators: true,
            darp_bound_feed: false,
        },
        Variant::Hybrid => VariantConfig {
            lifted_time_bounds: true,
            lifted_mtz: true,
            rounded_vehicle_count: true,
            sec_separators: false,
            darp_bound_feed: true,
        },
    }
}

/// Distance upper bound dominating the total distance of any plan: each trip
/// node contributes its longest outgoing arc once, and the source can launch
/// up to one vehicle per selected mini route (at most 2n of them).
pub fn sigma_ub(instance: &Instance) -> Meters {
    let m = instance.num_nodes();
    let row_max = |i: usize| {
        (0..m)
            .filter(|&j| j != i)
            .map(|j| instance.dist(i, j))
            .max()
            .unwrap_or(0)
    };
    let trips: Meters = instance.trip_nodes().map(row_max).sum();
    trips + 2 * instance.n as i64 * row_max(instance.source())
}

/// Arc cost table aligned with `arcs.arcs`: distance everywhere, plus
/// `multiplier * sigma_ub` on arcs leaving the source.
pub fn edge_costs(
    instance: &Instance,
    arcs: &ArcSet,
    multiplier: i64,
    sigma_ub: Meters,
) -> Vec<i64> {
    arcs.arcs
        .iter()
        .map(|&(i, j)| {
            let base = instance.dist(i, j);
            if i == instance.source() {
                base + multiplier * sigma_ub
            } else {
                base
            }
        })
        .collect()
}

/// Variable layout of a built model.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub num_x: usize,
    pub num_y: usize,
    /// Arc per Y variable, aligned with `ArcSet::arcs`.
    pub y_arcs: Vec<(usize, usize)>,
    pub y_index: HashMap<(usize, usize), usize>,
    pub t_base: usize,
}

impl VarMap {
    pub fn x(&self, r: usize) -> usize {
        r
    }
    pub fn y(&self, arc: (usize, usize)) -> Option<usize> {
        self.y_index.get(&arc).copied()
    }
    pub fn t(&self, node: usize) -> usize {
        self.t_base + node
    }
    pub fn is_y(&self, var: usize) -> bool {
        var >= self.num_x && var < self.num_x + self.num_y
    }
    pub fn arc_of_y(&self, var: usize) -> (usize, usize) {
        self.y_arcs[var - self.num_x]
    }
}

#[derive(Debug, Clone)]
pub struct CtspavModel {
    pub lp: LinearModel,
    pub vars: VarMap,
    pub sigma_ub: Meters,
    pub fixed_cost: i64,
    /// Branching preference classes: edge variables over route variables.
    pub branch_priority: Vec<i32>,
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("no mini route covers pickup {pickup} (commuter {commuter})")]
    UncoverablePickup { pickup: usize, commuter: usize },
    #[error("mini-route set is empty")]
    EmptyOmega,
}

/// `M(i,j) = max(0, b_i + s_i + tau_ij - a_j)`
pub fn big_m(instance: &Instance, i: usize, j: usize) -> Seconds {
    let (_, b_i) = instance.window(i).unwrap();
    let (a_j, _) = instance.window(j).unwrap();
    (b_i + instance.service(i) + instance.tau(i, j) - a_j).max(0)
}

/// `Mbar(i,j) = max(0, b_j - a_i - s_i - tau_ij)`
pub fn big_m_bar(instance: &Instance, i: usize, j: usize) -> Seconds {
    let (a_i, _) = instance.window(i).unwrap();
    let (_, b_j) = instance.window(j).unwrap();
    (b_j - a_i - instance.service(i) - instance.tau(i, j)).max(0)
}

#[derive(Debug, Clone, Copy)]
pub struct ModelOptions {
    pub lifted_mtz: bool,
    pub lifted_time_bounds: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            lifted_mtz: true,
            lifted_time_bounds: true,
        }
    }
}

pub fn build_model(
    instance: &Instance,
    omega: &Omega,
    arcs: &ArcSet,
    options: ModelOptions,
) -> Result<CtspavModel, BuildError> {
    if omega.is_empty() {
        return Err(BuildError::EmptyOmega);
    }
    // Route cover precondition: every pickup reachable by some mini route.
    let mut covered = vec![false; 4 * instance.n];
    for r in omega.iter() {
        for &p in &r.riders {
            covered[p] = true;
        }
    }
    for p in instance.pickups() {
        if !covered[p] {
            return Err(BuildError::UncoverablePickup {
                pickup: p,
                commuter: p % instance.n,
            });
        }
    }

    let su = sigma_ub(instance);
    let costs = edge_costs(instance, arcs, FIXED_COST_MULTIPLIER, su);

    let mut lp = LinearModel::new();
    let num_x = omega.len();
    for _ in 0..num_x {
        lp.add_var(VariableDef::binary(0.0));
    }
    let num_y = arcs.len();
    for (k, _) in arcs.arcs.iter().enumerate() {
        lp.add_var(VariableDef::binary(costs[k] as f64));
    }
    let t_base = num_x + num_y;
    for i in instance.trip_nodes() {
        let (a, b) = instance.window(i).unwrap();
        lp.add_var(VariableDef::continuous(a as f64, b as f64, 0.0));
    }

    let y_arcs = arcs.arcs.clone();
    let y_index: HashMap<(usize, usize), usize> = y_arcs
        .iter()
        .enumerate()
        .map(|(k, &a)| (a, num_x + k))
        .collect();
    let vars = VarMap {
        num_x,
        num_y,
        y_arcs,
        y_index,
        t_base,
    };

    // Route cover: each pickup in exactly one selected mini route.
    for p in instance.pickups() {
        let coeffs: Vec<(usize, f64)> = omega
            .iter()
            .enumerate()
            .filter(|(_, r)| r.riders.binary_search(&p).is_ok())
            .map(|(idx, _)| (idx, 1.0))
            .collect();
        lp.add_row(RowDef::new(coeffs, Sense::Eq, 1.0));
    }

    // Edge selection: arcs of selected mini routes must be used. Only arcs
    // interior to some mini route get a row.
    let mut arc_to_minis: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (idx, r) in omega.iter().enumerate() {
        for arc in r.arcs() {
            debug_assert!(
                arcs.contains(arc.0, arc.1),
                "mini-route arc survived filtering"
            );
            arc_to_minis.entry(arc).or_default().push(idx);
        }
    }
    let mut linked: Vec<(&(usize, usize), &Vec<usize>)> = arc_to_minis.iter().collect();
    linked.sort_by_key(|(arc, _)| **arc);
    for (arc, minis) in linked {
        let yv = vars.y(*arc).expect("interior arc present");
        let mut coeffs: Vec<(usize, f64)> = minis.iter().map(|&r| (r, 1.0)).collect();
        coeffs.push((yv, -1.0));
        lp.add_row(RowDef::new(coeffs, Sense::Le, 0.0));
    }

    // Unit in/out flow through every trip node.
    for i in instance.trip_nodes() {
        let coeffs: Vec<(usize, f64)> =
            arcs.out_arcs[i].iter().map(|&k| (num_x + k, 1.0)).collect();
        lp.add_row(RowDef::new(coeffs, Sense::Eq, 1.0));
        let coeffs: Vec<(usize, f64)> = arcs.in_arcs[i].iter().map(|&k| (num_x + k, 1.0)).collect();
        lp.add_row(RowDef::new(coeffs, Sense::Eq, 1.0));
    }

    // Travel-time compatibility with big-M deactivation, optionally lifted by
    // the reverse arc. Forward rows for every interior arc; backward rows for
    // arcs into drop-offs.
    for &(i, j) in &arcs.arcs {
        if !instance.is_trip_node(i) || !instance.is_trip_node(j) {
            continue;
        }
        let m_ij = big_m(instance, i, j) as f64;
        let s_tau = (instance.service(i) + instance.tau(i, j)) as f64;
        let y_ij = vars.y((i, j)).unwrap();
        let reverse = vars.y((j, i));
        // T_i - T_j + M*Y_ij + alpha*Y_ji <= M - s_i - tau_ij
        let mut coeffs = vec![(vars.t(i), 1.0), (vars.t(j), -1.0), (y_ij, m_ij)];
        if options.lifted_mtz {
            if let Some(y_ji) = reverse {
                let alpha = lift_mtz_alpha(instance, i, j) as f64;
                if alpha != 0.0 {
                    coeffs.push((y_ji, alpha));
                }
            }
        }
        lp.add_row(RowDef::new(coeffs, Sense::Le, m_ij - s_tau));

        if instance.is_dropoff(j) {
            let mbar = big_m_bar(instance, i, j) as f64;
            // T_i - T_j - Mbar*Y_ij + beta*Y_ji >= -Mbar - s_i - tau_ij
            let mut coeffs = vec![(vars.t(i), 1.0), (vars.t(j), -1.0), (y_ij, -mbar)];
            if options.lifted_mtz {
                if let Some(y_ji) = reverse {
                    let beta = lift_mtz_beta(instance, i, j) as f64;
                    if beta != 0.0 {
                        coeffs.push((y_ji, beta));
                    }
                }
            }
            lp.add_row(RowDef::new(coeffs, Sense::Ge, -mbar - s_tau));
        }
    }

    // Ride-duration limits.
    for p in instance.pickups() {
        let d = instance.dropoff_of(p);
        lp.add_row(RowDef::new(
            vec![(vars.t(d), 1.0), (vars.t(p), -1.0)],
            Sense::Le,
            (instance.ride_limit(p) + instance.service(p)) as f64,
        ));
    }

    // Lifted time bounds, installed statically.
    if options.lifted_time_bounds {
        for i in instance.trip_nodes() {
            let (a_i, b_i) = instance.window(i).unwrap();
            let mut lo = vec![(vars.t(i), 1.0)];
            for &k in &arcs.in_arcs[i] {
                let (j, _) = arcs.arcs[k];
                if !instance.is_trip_node(j) {
                    continue;
                }
                let c = lifted_lb_coef(instance, j, i) as f64;
                if c > 0.0 {
                    lo.push((num_x + k, -c));
                }
            }
            if lo.len() > 1 {
                lp.add_row(RowDef::new(lo, Sense::Ge, a_i as f64));
            }
            let mut hi = vec![(vars.t(i), 1.0)];
            for &k in &arcs.out_arcs[i] {
                let (_, j) = arcs.arcs[k];
                if !instance.is_trip_node(j) {
                    continue;
                }
                let c = lifted_ub_coef(instance, i, j) as f64;
                if c > 0.0 {
                    hi.push((num_x + k, c));
                }
            }
            if hi.len() > 1 {
                lp.add_row(RowDef::new(hi, Sense::Le, b_i as f64));
            }
        }
    }

    let mut branch_priority = vec![0i32; lp.num_vars()];
    for v in branch_priority.iter_mut().take(num_x) {
        *v = 1;
    }
    for v in branch_priority.iter_mut().skip(num_x).take(num_y) {
        *v = 2;
    }

    Ok(CtspavModel {
        lp,
        vars,
        sigma_ub: su,
        fixed_cost: FIXED_COST_MULTIPLIER * su,
        branch_priority,
    })
}

/// One vehicle's chain: mini routes in service order plus the witness
/// schedule including depot times.
#[derive(Debug, Clone)]
pub struct AvRoute {
    pub mini_routes: Vec<MiniRoute>,
    pub schedule: Schedule,
}

#[derive(Debug, Clone)]
pub struct AvRoutePlan {
    pub routes: Vec<AvRoute>,
    pub vehicle_count: usize,
    pub total_distance: Meters,
    pub empty_distance: Meters,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("selected arcs do not decompose into depot-to-depot paths: {0}")]
    Inconsistent(String),
}

/// Decode an integral solution into chains, re-deriving canonical schedules.
pub fn extract_routes(
    x: &[f64],
    model: &CtspavModel,
    instance: &Instance,
) -> Result<AvRoutePlan, ExtractError> {
    let vars = &model.vars;
    let selected: Vec<(usize, usize)> = vars
        .y_arcs
        .iter()
        .enumerate()
        .filter(|(k, _)| x[vars.num_x + k] > 0.5)
        .map(|(_, &a)| a)
        .collect();
    let mut succ: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(i, j) in &selected {
        succ.entry(i).or_default().push(j);
    }
    for v in succ.values_mut() {
        v.sort_unstable();
    }
    let (vs, vt) = (instance.source(), instance.sink());
    let starts = succ.get(&vs).cloned().unwrap_or_default();
    let total_distance: Meters = selected.iter().map(|&(i, j)| instance.dist(i, j)).sum();

    let mut visited = vec![false; instance.num_nodes()];
    let mut routes = Vec::new();
    for start in &starts {
        let mut path = vec![*start];
        let mut cur = *start;
        loop {
            if instance.is_trip_node(cur) && visited[cur] {
                return Err(ExtractError::Inconsistent(format!(
                    "node {cur} visited twice"
                )));
            }
            if instance.is_trip_node(cur) {
                visited[cur] = true;
            }
            let nexts = succ.get(&cur).ok_or_else(|| {
                ExtractError::Inconsistent(format!("node {cur} has no successor"))
            })?;
            if nexts.len() != 1 {
                return Err(ExtractError::Inconsistent(format!(
                    "node {cur} has {} successors",
                    nexts.len()
                )));
            }
            cur = nexts[0];
            if cur == vt {
                break;
            }
            path.push(cur);
            if path.len() > instance.num_nodes() {
                return Err(ExtractError::Inconsistent(
                    "walk does not reach the sink".into(),
                ));
            }
        }
        // Split into mini routes at drop-off -> pickup boundaries.
        let mut segments: Vec<Vec<usize>> = Vec::new();
        for &node in &path {
            let start_new = match segments.last() {
                None => true,
                Some(seg) => instance.is_pickup(node) && instance.is_dropoff(*seg.last().unwrap()),
            };
            if start_new {
                segments.push(vec![node]);
            } else {
                segments.last_mut().unwrap().push(node);
            }
        }
        let minis: Vec<MiniRoute> = segments
            .into_iter()
            .map(|seg| {
                MiniRoute::from_visit_order(seg, instance).ok_or_else(|| {
                    ExtractError::Inconsistent("path segment is not a feasible mini route".into())
                })
            })
            .collect::<Result<_, _>>()?;
        let borrowed: Vec<&[usize]> = minis.iter().map(|m| m.visit_order.as_slice()).collect();
        let schedule = check_av_route(&borrowed, instance)
            .map_err(|e| ExtractError::Inconsistent(format!("chain fails revalidation: {e}")))?;
        routes.push(AvRoute {
            mini_routes: minis,
            schedule,
        });
    }
    for i in instance.trip_nodes() {
        if !visited[i] {
            return Err(ExtractError::Inconsistent(format!(
                "trip node {i} not on any route"
            )));
        }
    }
    let covered_distance: Meters = routes
        .iter()
        .flat_map(|r| r.mini_routes.iter())
        .map(|m| m.length)
        .sum();
    Ok(AvRoutePlan {
        vehicle_count: starts.len(),
        empty_distance: total_distance - covered_distance,
        total_distance,
        routes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaps {
    pub vehicle_count_gap: i64,
    /// `(z_MIP - z_BB) / z_MIP`
    pub optimality_gap: f64,
}

/// Reporting gaps of a finished run; `None` without an incumbent.
pub fn gaps(chi_mip: Option<usize>, chi_lb: f64, z_mip: Option<f64>, z_bb: f64) -> Option<Gaps> {
    let chi_mip = chi_mip?;
    let z_mip = z_mip?;
    Some(Gaps {
        vehicle_count_gap: chi_mip as i64 - ceil_with_slack(chi_lb),
        optimality_gap: (z_mip - z_bb) / z_mip,
    })
}

/// Ceiling with protection against float fuzz just above an integer.
pub fn ceil_with_slack(x: f64) -> i64 {
    (x - 1e-9).ceil() as i64
}

/// Greedy LP-rounding heuristic: pick mini routes by descending fractional
/// value into an exact cover, then chain them first-fit in time order.
/// Returns a full variable vector for the model on success.
pub fn rounding_heuristic(
    x: &[f64],
    model: &CtspavModel,
    omega: &Omega,
    instance: &Instance,
) -> Option<Vec<f64>> {
    let vars = &model.vars;
    let mut order: Vec<usize> = (0..omega.len()).collect();
    order.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    let mut covered = vec![false; 4 * instance.n];
    let mut chosen: Vec<usize> = Vec::new();
    for idx in order {
        let r = &omega.routes[idx];
        if r.riders.iter().any(|&p| covered[p]) {
            continue;
        }
        for &p in &r.riders {
            covered[p] = true;
        }
        chosen.push(idx);
        if instance.pickups().all(|p| covered[p]) {
            break;
        }
    }
    if !instance.pickups().all(|p| covered[p]) {
        return None;
    }

    // Chain first-fit over earliest feasible start times.
    chosen.sort_by_key(|&idx| {
        (
            omega.routes[idx].schedule.start_times[0].1,
            omega.routes[idx].visit_order.clone(),
        )
    });
    let mut chains: Vec<Vec<usize>> = Vec::new();
    for &idx in &chosen {
        let mut placed = false;
        for chain in chains.iter_mut() {
            chain.push(idx);
            let seqs: Vec<&[usize]> = chain
                .iter()
                .map(|&r| omega.routes[r].visit_order.as_slice())
                .collect();
            if check_av_route(&seqs, instance).is_ok() {
                placed = true;
                break;
            }
            chain.pop();
        }
        if !placed {
            chains.push(vec![idx]);
        }
    }

    // Assemble the full variable vector.
    let mut out = vec![0.0; model.lp.num_vars()];
    for &idx in &chosen {
        out[vars.x(idx)] = 1.0;
    }
    let (vs, vt) = (instance.source(), instance.sink());
    for chain in &chains {
        let seqs: Vec<&[usize]> = chain
            .iter()
            .map(|&r| omega.routes[r].visit_order.as_slice())
            .collect();
        let schedule = check_av_route(&seqs, instance).ok()?;
        let full: Vec<usize> = seqs.iter().flat_map(|s| s.iter().copied()).collect();
        out[vars.y((vs, full[0]))?] = 1.0;
        for w in full.windows(2) {
            out[vars.y((w[0], w[1]))?] = 1.0;
        }
        out[vars.y((*full.last().unwrap(), vt))?] = 1.0;
        for &(node, t) in &schedule.start_times {
            if instance.is_trip_node(node) {
                out[vars.t(node)] = t as f64;
            }
        }
    }
    Some(out)
}
