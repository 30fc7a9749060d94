//! Shared test oracles, all independent of the library's solver paths:
//! a difference-constraint feasibility oracle over the schedule systems,
//! brute-force route/walk/plan enumerations built on it, and a rational
//! tableau simplex for LP cross-checks.

#![allow(dead_code)]

use ctspav::filter::ArcSet;
use ctspav::instance::Instance;
use itertools::Itertools;

const INF: i64 = i64::MAX / 4;

/// Feasibility of a visit sequence (positions may repeat nodes) under the
/// route constraint system, decided exactly as the LP over the service-time
/// variables: all rows are difference constraints, so Bellman-Ford negative
/// cycle detection solves it in integers.
///
/// Per position p with node v: windows `a_v <= T_p <= b_v` (pickups) or
/// `T_p <= b_v` (drop-offs); links `T_{p+1} >= T_p + s + tau` with equality
/// into drop-offs; ride limits `T_drop - T_pick <= L + s` between a drop-off
/// position and its matching open pickup position. Capacity and pairing are
/// checked combinatorially first.
pub fn walk_feasible(seq: &[usize], instance: &Instance) -> bool {
    if seq.is_empty() {
        return false;
    }
    // pairing + capacity over positions
    let mut onboard: Vec<(usize, usize)> = Vec::new(); // (pickup node, position)
    let mut pick_pos: Vec<(usize, usize)> = Vec::new(); // (drop position, pick position)
    for (p, &v) in seq.iter().enumerate() {
        if instance.is_pickup(v) {
            if onboard.iter().any(|&(r, _)| r == v) {
                return false;
            }
            onboard.push((v, p));
            if onboard.len() > instance.capacity {
                return false;
            }
        } else {
            let rider = instance.pickup_of(v);
            match onboard.iter().position(|&(r, _)| r == rider) {
                None => return false,
                Some(at) => {
                    let (_, pp) = onboard.remove(at);
                    pick_pos.push((p, pp));
                }
            }
        }
    }

    // difference constraints: edge (u -> v, w) encodes T_v - T_u <= w,
    // variable 0 is the constant reference, positions are 1-based.
    let k = seq.len();
    let mut edges: Vec<(usize, usize, i64)> = Vec::new();
    for (p, &v) in seq.iter().enumerate() {
        let (a, b) = instance.window(v).expect("trip node window");
        edges.push((0, p + 1, b));
        if instance.is_pickup(v) {
            edges.push((p + 1, 0, -a));
        }
    }
    for p in 1..k {
        let (u, v) = (seq[p - 1], seq[p]);
        let w = instance.service(u) + instance.tau(u, v);
        edges.push((p + 1, p, -w));
        if instance.is_dropoff(v) {
            edges.push((p, p + 1, w));
        }
    }
    for &(dp, pp) in &pick_pos {
        let rider = seq[pp];
        edges.push((
            pp + 1,
            dp + 1,
            instance.ride_limit(rider) + instance.service(rider),
        ));
    }
    no_negative_cycle(k + 1, &edges)
}

fn no_negative_cycle(nvars: usize, edges: &[(usize, usize, i64)]) -> bool {
    let mut dist = vec![0i64; nvars];
    for round in 0..=nvars {
        let mut changed = false;
        for &(u, v, w) in edges {
            if dist[u] < INF && dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
        if round == nvars {
            return false;
        }
    }
    true
}

/// Mini-route feasibility per the oracle: valid shape plus the schedule
/// system.
pub fn mini_route_feasible_oracle(visit_order: &[usize], instance: &Instance) -> bool {
    let k = visit_order.len() / 2;
    if visit_order.len() % 2 != 0 || k == 0 || k > instance.capacity {
        return false;
    }
    let (picks, drops) = visit_order.split_at(k);
    if !picks.iter().all(|&p| instance.is_pickup(p)) {
        return false;
    }
    if !drops.iter().all(|&d| instance.is_dropoff(d)) {
        return false;
    }
    let dir = instance.direction_of(visit_order[0]);
    if visit_order.iter().any(|&v| instance.direction_of(v) != dir) {
        return false;
    }
    let mut owners: Vec<usize> = drops.iter().map(|&d| instance.pickup_of(d)).collect();
    owners.sort_unstable();
    let mut ps = picks.to_vec();
    ps.sort_unstable();
    ps.dedup();
    if ps.len() != k || owners != ps {
        return false;
    }
    walk_feasible(visit_order, instance)
}

/// AV-route feasibility per the oracle: distinct feasible mini routes chained
/// with waiting allowed in between (the concatenated sequence runs through
/// the same difference system; depot ends are unconstrained).
pub fn av_route_feasible_oracle(minis: &[&[usize]], instance: &Instance) -> bool {
    if minis.is_empty() {
        return false;
    }
    for (i, r) in minis.iter().enumerate() {
        if !mini_route_feasible_oracle(r, instance) {
            return false;
        }
        if minis[i + 1..].contains(r) {
            return false;
        }
    }
    let seq: Vec<usize> = minis.iter().flat_map(|r| r.iter().copied()).collect();
    walk_feasible(&seq, instance)
}

/// All feasible mini routes over subsets of at most `cap` same-direction
/// trips by explicit (k!)^2 permutation enumeration filtered by the oracle.
pub fn brute_force_mini_routes(
    trips: &[usize],
    cap: usize,
    instance: &Instance,
) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for k in 1..=cap.min(trips.len()) {
        for combo in trips.iter().copied().combinations(k) {
            for picks in combo.iter().copied().permutations(k) {
                for drops in combo
                    .iter()
                    .map(|&p| instance.dropoff_of(p))
                    .permutations(k)
                {
                    let seq: Vec<usize> =
                        picks.iter().copied().chain(drops.iter().copied()).collect();
                    if mini_route_feasible_oracle(&seq, instance) {
                        out.push(seq);
                    }
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

pub fn brute_force_omega(instance: &Instance) -> Vec<Vec<usize>> {
    let inbound: Vec<usize> = (0..instance.n).collect();
    let outbound: Vec<usize> = (2 * instance.n..3 * instance.n).collect();
    let mut out = brute_force_mini_routes(&inbound, instance.capacity, instance);
    out.extend(brute_force_mini_routes(
        &outbound,
        instance.capacity,
        instance,
    ));
    out.sort();
    out
}

/// A full plan: chains of mini routes, one chain per vehicle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrutePlan {
    pub chains: Vec<Vec<Vec<usize>>>,
}

impl BrutePlan {
    pub fn vehicle_count(&self) -> usize {
        self.chains.len()
    }
    pub fn total_distance(&self, instance: &Instance) -> i64 {
        self.chains
            .iter()
            .map(|chain| chain_distance(chain, instance))
            .sum()
    }
    /// Every directed arc the plan traverses, including depot legs.
    pub fn arcs(&self, instance: &Instance) -> Vec<(usize, usize)> {
        let mut arcs = Vec::new();
        for chain in &self.chains {
            let seq: Vec<usize> = chain.iter().flat_map(|r| r.iter().copied()).collect();
            arcs.push((instance.source(), seq[0]));
            for w in seq.windows(2) {
                arcs.push((w[0], w[1]));
            }
            arcs.push((*seq.last().unwrap(), instance.sink()));
        }
        arcs.sort_unstable();
        arcs
    }
}

pub fn chain_distance(chain: &[Vec<usize>], instance: &Instance) -> i64 {
    let seq: Vec<usize> = chain.iter().flat_map(|r| r.iter().copied()).collect();
    let mut d = instance.dist(instance.source(), seq[0]);
    for w in seq.windows(2) {
        d += instance.dist(w[0], w[1]);
    }
    d + instance.dist(*seq.last().unwrap(), instance.sink())
}

/// Enumerate every feasible plan: exact covers of the trips by feasible mini
/// routes, then every ordered partition of the chosen mini routes into
/// feasible chains. Chain identity ignores vehicle order.
pub fn brute_force_plans(instance: &Instance) -> Vec<BrutePlan> {
    let omega = brute_force_omega(instance);
    let pickups: Vec<usize> = instance.pickups().collect();
    let mut covers: Vec<Vec<usize>> = Vec::new(); // sets of omega indices
    exact_covers(&omega, &pickups, instance, &mut vec![], &mut covers);

    let mut plans = Vec::new();
    for cover in &covers {
        let minis: Vec<&Vec<usize>> = cover.iter().map(|&i| &omega[i]).collect();
        for partition in ordered_set_partitions(minis.len()) {
            let chains: Vec<Vec<Vec<usize>>> = partition
                .iter()
                .map(|chain| chain.iter().map(|&i| minis[i].clone()).collect())
                .collect();
            let ok = chains.iter().all(|chain| {
                let refs: Vec<&[usize]> = chain.iter().map(|m| m.as_slice()).collect();
                av_route_feasible_oracle(&refs, instance)
            });
            if ok {
                plans.push(BrutePlan { chains });
            }
        }
    }
    plans
}

fn exact_covers(
    omega: &[Vec<usize>],
    pickups: &[usize],
    instance: &Instance,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let covered: std::collections::HashSet<usize> = chosen
        .iter()
        .flat_map(|&i| omega[i].iter().copied().filter(|&v| instance.is_pickup(v)))
        .collect();
    let Some(&target) = pickups.iter().find(|p| !covered.contains(p)) else {
        out.push(chosen.clone());
        return;
    };
    // Branch on the lowest uncovered pickup; every exact cover is generated
    // exactly once.
    for (i, mini) in omega.iter().enumerate() {
        let riders: Vec<usize> = mini
            .iter()
            .copied()
            .filter(|&v| instance.is_pickup(v))
            .collect();
        if !riders.contains(&target) {
            continue;
        }
        if riders.iter().any(|r| covered.contains(r)) {
            continue;
        }
        chosen.push(i);
        exact_covers(omega, pickups, instance, chosen, out);
        chosen.pop();
    }
}

/// All ways to split `{0..n-1}` into nonempty ordered sequences, where the
/// set of sequences is unordered: classic set partitions crossed with every
/// permutation of each block.
pub fn ordered_set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut partitions: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for item in 0..n {
        let mut next = Vec::new();
        for p in &partitions {
            for b in 0..p.len() {
                let mut q = p.clone();
                q[b].push(item);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![item]);
            next.push(q);
        }
        partitions = next;
    }
    let mut out = Vec::new();
    for p in partitions {
        let mut variants: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
        for block in &p {
            let mut next = Vec::new();
            for perm in block.iter().copied().permutations(block.len()) {
                for v in &variants {
                    let mut w = v.clone();
                    w.push(perm.clone());
                    next.push(w);
                }
            }
            variants = next;
        }
        out.extend(variants);
    }
    out
}

/// Lexicographic optimum over all feasible plans: fewest vehicles first,
/// then least total distance.
pub fn brute_force_optimum(instance: &Instance) -> Option<(usize, i64)> {
    brute_force_plans(instance)
        .iter()
        .map(|p| (p.vehicle_count(), p.total_distance(instance)))
        .min()
}

/// All feasible AV routes (chains of distinct feasible mini routes), for
/// filtering-safety checks: prefix-prunes on the oracle.
pub fn brute_force_av_routes(instance: &Instance) -> Vec<Vec<Vec<usize>>> {
    let omega = brute_force_omega(instance);
    let mut out: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = Vec::new();
    fn extend(
        omega: &[Vec<usize>],
        instance: &Instance,
        stack: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        for mini in omega {
            if stack.contains(mini) {
                continue;
            }
            // Chains may not reuse a trip.
            let used: std::collections::HashSet<usize> =
                stack.iter().flat_map(|m| m.iter().copied()).collect();
            if mini.iter().any(|v| used.contains(v)) {
                continue;
            }
            stack.push(mini.clone());
            let refs: Vec<&[usize]> = stack.iter().map(|m| m.as_slice()).collect();
            if av_route_feasible_oracle(&refs, instance) {
                out.push(stack.clone());
                extend(omega, instance, stack, out);
            }
            stack.pop();
        }
    }
    extend(&omega, instance, &mut stack, &mut out);
    out
}

/// Arcs used by any feasible AV route, including depot legs.
pub fn arcs_of_feasible_routes(instance: &Instance) -> std::collections::HashSet<(usize, usize)> {
    let mut set = std::collections::HashSet::new();
    for route in brute_force_av_routes(instance) {
        let seq: Vec<usize> = route.iter().flat_map(|m| m.iter().copied()).collect();
        set.insert((instance.source(), seq[0]));
        for w in seq.windows(2) {
            set.insert((w[0], w[1]));
        }
        set.insert((*seq.last().unwrap(), instance.sink()));
    }
    set
}

/// Brute-force minimum reduced cost over resource-feasible walks on the
/// filtered arcs, with at most `cap` trip-node visits; DFS with oracle-based
/// prefix pruning. Returns the minimum total cost over complete walks.
pub fn brute_force_min_reduced_cost(
    duals: &[f64],
    arcs: &ArcSet,
    instance: &Instance,
    cap: usize,
) -> f64 {
    let pickups: Vec<usize> = instance.pickups().collect();
    let mu = |v: usize| -> f64 {
        pickups
            .iter()
            .position(|&p| p == v)
            .map(|i| duals[i])
            .unwrap_or(0.0)
    };
    let (vs, vt) = (instance.source(), instance.sink());
    let mut best = f64::INFINITY;
    let mut seq: Vec<usize> = Vec::new();

    fn dfs(
        seq: &mut Vec<usize>,
        cost: f64,
        best: &mut f64,
        arcs: &ArcSet,
        instance: &Instance,
        cap: usize,
        mu: &dyn Fn(usize) -> f64,
        vt: usize,
    ) {
        let last = *seq.last().unwrap();
        // complete if the walk can close now
        let onboard_empty = {
            let mut onboard = std::collections::HashSet::new();
            for &v in seq.iter() {
                if instance.is_pickup(v) {
                    onboard.insert(v);
                } else {
                    onboard.remove(&instance.pickup_of(v));
                }
            }
            onboard.is_empty()
        };
        if onboard_empty && arcs.contains(last, vt) && cost < *best {
            *best = cost;
        }
        if seq.len() >= cap {
            return;
        }
        for &k in &arcs.out_arcs[last] {
            let (_, v) = arcs.arcs[k];
            if !instance.is_trip_node(v) {
                continue;
            }
            seq.push(v);
            if walk_feasible(seq, instance) {
                let leave = if instance.is_pickup(last) {
                    -mu(last)
                } else {
                    0.0
                };
                dfs(seq, cost + leave, best, arcs, instance, cap, mu, vt);
            }
            seq.pop();
        }
    }

    for &k in &arcs.out_arcs[vs] {
        let (_, j) = arcs.arcs[k];
        if !instance.is_trip_node(j) {
            continue;
        }
        seq.push(j);
        if walk_feasible(&seq, instance) {
            dfs(&mut seq, 1.0, &mut best, arcs, instance, cap, &mu, vt);
        }
        seq.pop();
    }
    best
}

// ---------------------------------------------------------------------------
// Rational reference simplex
// ---------------------------------------------------------------------------

pub mod rational {
    use ctspav::lp::{LinearModel, Sense};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn rat(x: f64) -> BigRational {
        BigRational::from_float(x).expect("finite coefficient")
    }

    /// Exact optimum of a bounded-feasible LP by the two-phase dense tableau
    /// method over rationals. Returns `None` when infeasible or unbounded.
    /// Variables may carry finite or infinite bounds; finite bounds become
    /// explicit rows, so this stays a straightforward standard-form tableau.
    pub fn optimum(model: &LinearModel) -> Option<BigRational> {
        // x = x+ - x- with x+, x- >= 0; bounds as rows.
        let n = model.num_vars();
        let mut rows: Vec<(Vec<BigRational>, Sense, BigRational)> = Vec::new();
        for r in &model.rows {
            let mut coeffs = vec![BigRational::from(BigInt::from(0)); 2 * n];
            for &(v, c) in &r.coeffs {
                coeffs[v] = rat(c);
                coeffs[n + v] = -rat(c);
            }
            rows.push((coeffs, r.sense, rat(r.rhs)));
        }
        for (v, def) in model.vars.iter().enumerate() {
            if def.lower.is_finite() {
                let mut coeffs = vec![BigRational::from(BigInt::from(0)); 2 * n];
                coeffs[v] = BigRational::from(BigInt::from(1));
                coeffs[n + v] = BigRational::from(BigInt::from(-1));
                rows.push((coeffs, Sense::Ge, rat(def.lower)));
            }
            if def.upper.is_finite() {
                let mut coeffs = vec![BigRational::from(BigInt::from(0)); 2 * n];
                coeffs[v] = BigRational::from(BigInt::from(1));
                coeffs[n + v] = BigRational::from(BigInt::from(-1));
                rows.push((coeffs, Sense::Le, rat(def.upper)));
            }
        }
        let mut objective = vec![BigRational::from(BigInt::from(0)); 2 * n];
        for (v, def) in model.vars.iter().enumerate() {
            objective[v] = rat(def.objective);
            objective[n + v] = -rat(def.objective);
        }
        simplex_min(&rows, &objective)
    }

    /// Standard-form conversion with slacks and artificials, then Bland-rule
    /// tableau pivoting: phase 1 drives artificials to zero, phase 2
    /// minimizes the true objective.
    fn simplex_min(
        rows: &[(Vec<BigRational>, Sense, BigRational)],
        objective: &[BigRational],
    ) -> Option<BigRational> {
        let zero = BigRational::from(BigInt::from(0));
        let one = BigRational::from(BigInt::from(1));
        let m = rows.len();
        let n = objective.len();
        // columns: n structural + slacks + artificials
        let mut nslack = 0;
        for (_, sense, _) in rows {
            if *sense != Sense::Eq {
                nslack += 1;
            }
        }
        let total = n + nslack + m;
        let mut a = vec![vec![zero.clone(); total]; m];
        let mut b = vec![zero.clone(); m];
        let mut basis = vec![0usize; m];
        let mut slack_at = 0usize;
        for (r, (coeffs, sense, rhs)) in rows.iter().enumerate() {
            let mut row: Vec<BigRational> = coeffs.clone();
            row.resize(total, zero.clone());
            let mut rhs = rhs.clone();
            let mut sense = *sense;
            if rhs < zero {
                for c in row.iter_mut() {
                    *c = -c.clone();
                }
                rhs = -rhs;
                sense = match sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
            match sense {
                Sense::Le => {
                    row[n + slack_at] = one.clone();
                    slack_at += 1;
                }
                Sense::Ge => {
                    row[n + slack_at] = -one.clone();
                    slack_at += 1;
                }
                Sense::Eq => {}
            }
            row[n + nslack + r] = one.clone();
            basis[r] = n + nslack + r;
            a[r] = row;
            b[r] = rhs;
        }

        // phase 1
        let mut phase1 = vec![zero.clone(); total];
        for k in 0..m {
            phase1[n + nslack + k] = one.clone();
        }
        pivot_to_optimum(&mut a, &mut b, &mut basis, &phase1)?;
        let p1: BigRational = basis
            .iter()
            .enumerate()
            .filter(|(_, &j)| j >= n + nslack)
            .map(|(r, _)| b[r].clone())
            .sum();
        if p1 != zero {
            return None; // infeasible
        }
        // Drive leftover artificials out of the basis with degenerate pivots;
        // rows with no eligible column are linearly dependent and inert.
        for r in 0..m {
            if basis[r] < n + nslack {
                continue;
            }
            let j = (0..n + nslack).find(|&j| a[r][j] != zero && !basis.contains(&j));
            if let Some(j) = j {
                do_pivot(&mut a, &mut b, &mut basis, r, j);
            }
        }
        let mut cost = objective.to_vec();
        cost.resize(total, zero.clone());
        // Freeze every nonbasic artificial column so none can re-enter.
        for row in a.iter_mut() {
            for j in n + nslack..total {
                if basis.contains(&j) {
                    continue;
                }
                row[j] = zero.clone();
            }
        }
        pivot_to_optimum(&mut a, &mut b, &mut basis, &cost)?;
        let mut val = zero;
        for (r, &j) in basis.iter().enumerate() {
            if j < total {
                val += cost[j].clone() * b[r].clone();
            }
        }
        Some(val)
    }

    fn do_pivot(
        a: &mut [Vec<BigRational>],
        b: &mut [BigRational],
        basis: &mut [usize],
        lr: usize,
        j: usize,
    ) {
        let zero = BigRational::from(BigInt::from(0));
        let m = a.len();
        let total = a[0].len();
        let pivot = a[lr][j].clone();
        for c in 0..total {
            a[lr][c] = a[lr][c].clone() / pivot.clone();
        }
        b[lr] = b[lr].clone() / pivot;
        for r in 0..m {
            if r != lr && a[r][j] != zero {
                let f = a[r][j].clone();
                for c in 0..total {
                    let delta = f.clone() * a[lr][c].clone();
                    a[r][c] = a[r][c].clone() - delta;
                }
                let delta = f * b[lr].clone();
                b[r] = b[r].clone() - delta;
            }
        }
        basis[lr] = j;
    }

    /// Bland-rule primal tableau pivots; `None` on unboundedness.
    fn pivot_to_optimum(
        a: &mut [Vec<BigRational>],
        b: &mut [BigRational],
        basis: &mut [usize],
        cost: &[BigRational],
    ) -> Option<()> {
        let zero = BigRational::from(BigInt::from(0));
        let m = a.len();
        let total = a[0].len();
        loop {
            // reduced costs via the basis rows
            let mut entering = None;
            for j in 0..total {
                if basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j].clone();
                for r in 0..m {
                    d -= cost[basis[r]].clone() * a[r][j].clone();
                }
                if d < zero {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Some(()) };
            let mut leave: Option<(usize, BigRational)> = None;
            for r in 0..m {
                if a[r][j] > zero {
                    let ratio = b[r].clone() / a[r][j].clone();
                    let better = match &leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < *lratio || (ratio == *lratio && basis[r] < basis[*lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((lr, _)) = leave else { return None };
            do_pivot(a, b, basis, lr, j);
        }
    }
}
