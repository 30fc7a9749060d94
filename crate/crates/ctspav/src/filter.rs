//! Pre-processing of the complete pickup/delivery graph: removes arcs that
//! cannot belong to any feasible AV route, using depot-incidence, pairing,
//! precedence, window, ride-limit and trip-pair feasibility rules. Every
//! removed arc logs the rule that removed it; the rules are independent
//! predicates, so the surviving set does not depend on application order.

use crate::feasibility::check_visit_sequence;
use crate::instance::{Direction, Instance, PdGraph};
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterRule {
    /// Depot shortcuts and wrong-way depot arcs.
    DepotIncidence,
    /// Pairing/precedence among one commuter's four nodes.
    CommuterPrecedence,
    /// Phase structure between inbound and outbound node classes.
    DirectionPrecedence,
    /// Earliest departure already misses the head's window.
    WindowArithmetic,
    /// A detour through the arc must exceed the tail rider's duration limit.
    RideLimitArithmetic,
    /// No feasible two-trip pattern supports the arc.
    TripPairPatterns,
}

impl FilterRule {
    pub fn letter(self) -> char {
        match self {
            FilterRule::DepotIncidence => 'a',
            FilterRule::CommuterPrecedence => 'b',
            FilterRule::DirectionPrecedence => 'c',
            FilterRule::WindowArithmetic => 'd',
            FilterRule::RideLimitArithmetic => 'e',
            FilterRule::TripPairPatterns => 'f',
        }
    }
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// The filtered arc set with adjacency indexes and the removal log.
#[derive(Debug, Clone)]
pub struct ArcSet {
    num_nodes: usize,
    present: Vec<bool>,
    pub arcs: Vec<(usize, usize)>,
    pub out_arcs: Vec<Vec<usize>>,
    pub in_arcs: Vec<Vec<usize>>,
    pub removal_log: Vec<((usize, usize), FilterRule)>,
}

impl ArcSet {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.present[i * self.num_nodes + j]
    }
    pub fn len(&self) -> usize {
        self.arcs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
    /// CSV dump of the removal log: `from,to,rule`.
    pub fn removal_log_csv(&self) -> String {
        let mut s = String::from("from,to,rule\n");
        for ((i, j), rule) in &self.removal_log {
            s.push_str(&format!("{i},{j},{rule}\n"));
        }
        s
    }
}

/// Feasibility verdicts for the three two-trip patterns of an ordered pickup
/// pair `(i, j)`; all sequences run through the route feasibility system.
struct PairPatterns {
    /// i -> j -> n+i -> n+j
    inter: bool,
    /// i -> j -> n+j -> n+i
    nest: bool,
    /// i -> n+i -> j -> n+j
    chain: bool,
}

fn pair_patterns(i: usize, j: usize, instance: &Instance) -> PairPatterns {
    let (di, dj) = (instance.dropoff_of(i), instance.dropoff_of(j));
    let feas = |seq: &[usize]| check_visit_sequence(seq, instance).is_ok();
    PairPatterns {
        inter: feas(&[i, j, di, dj]),
        nest: feas(&[i, j, dj, di]),
        chain: feas(&[i, di, j, dj]),
    }
}

pub fn filter_arcs(graph: &PdGraph, instance: &Instance) -> ArcSet {
    let n = instance.n;
    let m = instance.num_nodes();
    let (vs, vt) = (instance.source(), instance.sink());

    // Rule (f) pattern table, computed in parallel over ordered pickup pairs.
    let pickups: Vec<usize> = instance.pickups().collect();
    let pairs: Vec<(usize, usize)> = pickups
        .iter()
        .flat_map(|&i| {
            pickups
                .iter()
                .filter(move |&&j| j != i)
                .map(move |&j| (i, j))
        })
        .collect();
    let patterns: HashMap<(usize, usize), PairPatterns> = pairs
        .par_iter()
        .map(|&(i, j)| ((i, j), pair_patterns(i, j, instance)))
        .collect();

    let classify = |i: usize, j: usize| -> Option<FilterRule> {
        use FilterRule::*;
        // (a) depot incidence
        if (i == vs && j == vt)
            || (i == vt && j == vs)
            || (instance.is_pickup(i) && (j == vs || j == vt))
            || (i == vt && instance.is_trip_node(j))
            || (i == vs && instance.is_dropoff(j))
            || (instance.is_dropoff(i) && j == vs)
        {
            return Some(DepotIncidence);
        }
        if !instance.is_trip_node(i) || !instance.is_trip_node(j) {
            return None;
        }
        // (b) precedence within one commuter's node chain
        let c_i = i % n;
        if c_i == j % n {
            let (ip, id, op, od) = (c_i, n + c_i, 2 * n + c_i, 3 * n + c_i);
            let banned = [
                (ip, op),
                (ip, od),
                (id, ip),
                (id, od),
                (op, ip),
                (op, id),
                (od, ip),
                (od, id),
                (od, op),
            ];
            if banned.contains(&(i, j)) {
                return Some(CommuterPrecedence);
            }
        }
        // (c) phase structure across directions
        let (di, dj) = (
            instance.direction_of(i).unwrap(),
            instance.direction_of(j).unwrap(),
        );
        let cross_banned = match (di, dj) {
            (Direction::Inbound, Direction::Outbound) => {
                instance.is_pickup(i) || instance.is_dropoff(j)
            }
            (Direction::Outbound, Direction::Inbound) => {
                instance.is_pickup(i) || instance.is_dropoff(j)
            }
            _ => false,
        };
        if cross_banned {
            return Some(DirectionPrecedence);
        }
        // (d) window arithmetic
        let (a_i, _) = instance.window(i).unwrap();
        let (_, b_j) = instance.window(j).unwrap();
        if a_i + instance.service(i) + instance.tau(i, j) > b_j {
            return Some(WindowArithmetic);
        }
        // (e) ride-duration arithmetic: pairs (p, x) and (x, n+p)
        if instance.is_pickup(i) && j != instance.dropoff_of(i) {
            let detour =
                instance.tau(i, j) + instance.service(j) + instance.tau(j, instance.dropoff_of(i));
            if detour > instance.ride_limit(i) {
                return Some(RideLimitArithmetic);
            }
        }
        if instance.is_dropoff(j) {
            let p = instance.pickup_of(j);
            if i != p {
                let detour = instance.tau(p, i) + instance.service(i) + instance.tau(i, j);
                if detour > instance.ride_limit(p) {
                    return Some(RideLimitArithmetic);
                }
            }
        }
        // (f) two-trip patterns
        if instance.is_pickup(i) && instance.is_dropoff(j) && instance.pickup_of(j) != i {
            // (i, n+j) needs j -> i -> n+j -> n+i
            let pj = instance.pickup_of(j);
            if !patterns[&(pj, i)].inter {
                return Some(TripPairPatterns);
            }
        }
        if instance.is_dropoff(i) && instance.is_pickup(j) && instance.pickup_of(i) != j {
            // (n+i, j) needs i -> n+i -> j -> n+j
            let pi = instance.pickup_of(i);
            if !patterns[&(pi, j)].chain {
                return Some(TripPairPatterns);
            }
        }
        if instance.is_pickup(i) && instance.is_pickup(j) {
            let pat = &patterns[&(i, j)];
            if !pat.inter && !pat.nest {
                return Some(TripPairPatterns);
            }
        }
        if instance.is_dropoff(i) && instance.is_dropoff(j) {
            let (pi, pj) = (instance.pickup_of(i), instance.pickup_of(j));
            if !patterns[&(pi, pj)].inter && !patterns[&(pj, pi)].nest {
                return Some(TripPairPatterns);
            }
        }
        None
    };

    let mut present = vec![false; m * m];
    let mut arcs = Vec::new();
    let mut removal_log = Vec::new();
    for &(i, j) in &graph.arcs {
        match classify(i, j) {
            Some(rule) => removal_log.push(((i, j), rule)),
            None => {
                present[i * m + j] = true;
                arcs.push((i, j));
            }
        }
    }
    let mut out_arcs = vec![Vec::new(); m];
    let mut in_arcs = vec![Vec::new(); m];
    for (idx, &(i, j)) in arcs.iter().enumerate() {
        out_arcs[i].push(idx);
        in_arcs[j].push(idx);
    }
    ArcSet {
        num_nodes: m,
        present,
        arcs,
        out_arcs,
        in_arcs,
        removal_log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_pdgraph, derive_time_windows, RawCommuters};

    fn line_instance(n: usize, spread: i64) -> Instance {
        // Homes spaced along a line, workplace nodes clustered; metric by
        // construction.
        let m = 4 * n + 2;
        let mut xs = vec![0i64; m];
        for i in 0..n {
            xs[i] = spread * i as i64; // inbound pickups at homes
            xs[n + i] = 10_000 + 100 * i as i64; // inbound drop-offs at work
            xs[2 * n + i] = 10_000 + 100 * i as i64; // outbound pickups at work
            xs[3 * n + i] = spread * i as i64; // outbound drop-offs at home
        }
        xs[4 * n] = 10_000;
        xs[4 * n + 1] = 10_000;
        let tau: Vec<Vec<i64>> = xs
            .iter()
            .map(|&a| xs.iter().map(|&b| (a - b).abs() / 10).collect())
            .collect();
        let dist: Vec<Vec<i64>> = xs
            .iter()
            .map(|&a| xs.iter().map(|&b| (a - b).abs()).collect())
            .collect();
        let raw = RawCommuters {
            desired_arrival: (0..n).map(|i| 28800 + 300 * i as i64).collect(),
            desired_departure: (0..n).map(|i| 61200 + 300 * i as i64).collect(),
        };
        derive_time_windows(&raw, 600, 0.5, tau, dist, 4, 30).unwrap()
    }

    #[test]
    fn depot_shortcut_removed_by_rule_a() {
        let inst = line_instance(2, 500);
        let arcs = filter_arcs(&build_pdgraph(&inst), &inst);
        let (vs, vt) = (inst.source(), inst.sink());
        assert!(!arcs.contains(vs, vt));
        let logged = arcs
            .removal_log
            .iter()
            .find(|((i, j), _)| (*i, *j) == (vs, vt))
            .map(|(_, r)| *r);
        assert_eq!(logged, Some(FilterRule::DepotIncidence));
        // depot arcs that must survive
        assert!(arcs.contains(vs, 0));
        assert!(arcs.contains(inst.n, vt) || arcs.contains(3 * inst.n, vt));
    }

    #[test]
    fn window_arithmetic_removes_late_arcs() {
        let inst = line_instance(2, 500);
        let arcs = filter_arcs(&build_pdgraph(&inst), &inst);
        // Outbound pickup to inbound drop-off: the inbound window is hours
        // earlier, so a_i + s + tau > b_j.
        for ((i, j), rule) in &arcs.removal_log {
            if inst.is_trip_node(*i) && inst.is_trip_node(*j) {
                let (a_i, _) = inst.window(*i).unwrap();
                let (_, b_j) = inst.window(*j).unwrap();
                if *rule == FilterRule::WindowArithmetic {
                    assert!(a_i + inst.service(*i) + inst.tau(*i, *j) > b_j);
                }
            }
        }
        let from_evening_to_morning = arcs.removal_log.iter().any(|((i, j), r)| {
            inst.is_trip_node(*i)
                && *r == FilterRule::WindowArithmetic
                && inst.window(*i).unwrap().0 > inst.window(*j).unwrap().1
        });
        assert!(from_evening_to_morning);
    }

    #[test]
    fn survivors_respect_direction_precedence() {
        let inst = line_instance(3, 700);
        let arcs = filter_arcs(&build_pdgraph(&inst), &inst);
        for &(i, j) in &arcs.arcs {
            if !inst.is_trip_node(i) || !inst.is_trip_node(j) {
                continue;
            }
            // No inbound drop-off ever follows an outbound pickup.
            assert!(
                !(inst.direction_of(i) == Some(Direction::Outbound)
                    && inst.is_pickup(i)
                    && inst.direction_of(j) == Some(Direction::Inbound)
                    && inst.is_dropoff(j)),
                "survivor arc ({i},{j}) breaks direction precedence"
            );
        }
    }

    #[test]
    fn removal_reasons_are_deterministic_and_unique() {
        let inst = line_instance(2, 500);
        let a = filter_arcs(&build_pdgraph(&inst), &inst);
        let b = filter_arcs(&build_pdgraph(&inst), &inst);
        assert_eq!(a.removal_log, b.removal_log);
        let mut seen = std::collections::HashSet::new();
        for ((i, j), _) in &a.removal_log {
            assert!(seen.insert((i, j)), "arc ({i},{j}) removed twice");
            assert!(!a.contains(*i, *j));
        }
        assert_eq!(
            a.arcs.len() + a.removal_log.len(),
            build_pdgraph(&inst).arcs.len()
        );
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let inst = line_instance(1, 500);
        let arcs = filter_arcs(&build_pdgraph(&inst), &inst);
        let csv = arcs.removal_log_csv();
        assert!(csv.starts_with("from,to,rule\n"));
        assert_eq!(csv.lines().count(), arcs.removal_log.len() + 1);
    }
}
