//! Schedule feasibility for mini routes and depot-to-depot AV routes.
//!
//! Every timing constraint in play is a difference constraint over service
//! start times: travel links into pickups are one-sided (waiting allowed),
//! links into drop-offs are equalities (no waiting at drop-offs), windows
//! bound single variables and ride limits couple a pickup with its drop-off.
//! A partial route is summarized by a small difference-bound matrix over the
//! reference origin, the current node and the onboard pickups; those are the
//! only past variables future constraints can mention, so the summary is an
//! exact projection of the prefix polyhedron and extension is sound and
//! complete.

use crate::instance::{Instance, Seconds};
use std::collections::BTreeMap;

const INF: i64 = i64::MAX / 4;

/// Why a route or extension is infeasible; carries the violated family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    Window { node: usize },
    Capacity { node: usize },
    RideLimit { rider: usize },
    Pairing { node: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum FeasError {
    #[error("invalid route shape: {0}")]
    Shape(String),
    #[error("infeasible: {0:?}")]
    Infeasible(Infeasibility),
}

/// A witness schedule: service start times in visit order plus depot times
/// when the route is a full AV route.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// `(node, service start)` in visit order.
    pub start_times: Vec<(usize, Seconds)>,
    /// Total slack spent waiting ahead of pickups.
    pub total_wait: Seconds,
}

impl Schedule {
    pub fn time_of(&self, node: usize) -> Option<Seconds> {
        self.start_times
            .iter()
            .find(|(v, _)| *v == node)
            .map(|(_, t)| *t)
    }
    pub fn as_map(&self) -> BTreeMap<usize, Seconds> {
        self.start_times.iter().copied().collect()
    }
}

/// Difference-bound matrix over a handful of time variables. Entry `(i, j)`
/// is an upper bound on `x_i - x_j`; variable 0 is the constant-zero
/// reference.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Dbm {
    dim: usize,
    m: Vec<i64>,
}

impl Dbm {
    fn new(dim: usize) -> Self {
        let mut m = vec![INF; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 0;
        }
        Dbm { dim, m }
    }
    #[inline]
    fn at(&self, i: usize, j: usize) -> i64 {
        self.m[i * self.dim + j]
    }
    #[inline]
    fn constrain(&mut self, i: usize, j: usize, c: i64) {
        let e = &mut self.m[i * self.dim + j];
        if c < *e {
            *e = c;
        }
    }
    /// Floyd-Warshall closure; false iff the system became infeasible.
    fn close(&mut self) -> bool {
        let d = self.dim;
        for k in 0..d {
            for i in 0..d {
                let mik = self.m[i * d + k];
                if mik >= INF {
                    continue;
                }
                for j in 0..d {
                    let v = mik.saturating_add(self.m[k * d + j]);
                    if v < self.m[i * d + j] {
                        self.m[i * d + j] = v;
                    }
                }
            }
        }
        (0..d).all(|i| self.m[i * d + i] >= 0)
    }
    /// Keep only the listed positions (closure must have run already).
    fn project(&self, keep: &[usize]) -> Dbm {
        let d = keep.len();
        let mut out = Dbm::new(d);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                out.m[a * d + b] = self.at(i, j);
            }
        }
        out
    }
    fn lower_of(&self, pos: usize) -> i64 {
        -self.at(0, pos)
    }
    fn upper_of(&self, pos: usize) -> i64 {
        self.at(pos, 0)
    }
    /// Componentwise containment: every bound of `self` is at least as loose.
    fn contains(&self, other: &Dbm) -> bool {
        debug_assert_eq!(self.dim, other.dim);
        self.m.iter().zip(other.m.iter()).all(|(a, b)| a >= b)
    }
}

/// Partial-route state: current node, onboard riders and the exact timing
/// summary. Variable layout: `[reference, onboard pickups ascending, current
/// node last when it is not itself an onboard pickup]`.
#[derive(Debug, Clone)]
pub struct FeasLabel {
    pub node: usize,
    /// Trip-node visits so far, including the current node.
    pub visits: usize,
    /// Open pickups, ascending.
    pub onboard: Vec<usize>,
    dbm: Dbm,
}

impl FeasLabel {
    /// Start a route at `first` (must be a pickup; drop-offs cannot open a
    /// route and the depot imposes no timing of its own).
    pub fn start(first: usize, instance: &Instance) -> Result<FeasLabel, Infeasibility> {
        if !instance.is_pickup(first) {
            return Err(Infeasibility::Pairing { node: first });
        }
        let (a, b) = instance.window(first).expect("pickup has window");
        let mut dbm = Dbm::new(2);
        dbm.constrain(1, 0, b);
        dbm.constrain(0, 1, -a);
        if !dbm.close() {
            return Err(Infeasibility::Window { node: first });
        }
        Ok(FeasLabel {
            node: first,
            visits: 1,
            onboard: vec![first],
            dbm,
        })
    }

    /// Extend by one node. Reported feasible iff some completion of the
    /// schedule prefix satisfies the window, travel, capacity, pairing and
    /// ride-duration constraints restricted to the visited nodes.
    pub fn extend(&self, next: usize, instance: &Instance) -> Result<FeasLabel, Infeasibility> {
        let u = self.node;
        debug_assert!(instance.is_trip_node(next));
        if instance.is_pickup(next) {
            if self.onboard.binary_search(&next).is_ok() {
                return Err(Infeasibility::Pairing { node: next });
            }
            if self.onboard.len() + 1 > instance.capacity {
                return Err(Infeasibility::Capacity { node: next });
            }
        } else if self
            .onboard
            .binary_search(&instance.pickup_of(next))
            .is_err()
        {
            return Err(Infeasibility::Pairing { node: next });
        }

        let cur_pos = self.pos_of(u) + 1;
        let mut dbm = grow(&self.dbm);
        let v = dbm.dim - 1;
        let link = instance.service(u) + instance.tau(u, next);
        // x_next - x_u >= link, with equality into drop-offs.
        dbm.constrain(cur_pos, v, -link);
        if instance.is_dropoff(next) {
            dbm.constrain(v, cur_pos, link);
            let (_, b) = instance.window(next).expect("drop-off has window");
            dbm.constrain(v, 0, b);
        } else {
            let (a, b) = instance.window(next).expect("pickup has window");
            dbm.constrain(v, 0, b);
            dbm.constrain(0, v, -a);
        }
        if !dbm.close() {
            return Err(Infeasibility::Window { node: next });
        }
        if instance.is_dropoff(next) {
            let rider = instance.pickup_of(next);
            let rp = self.pos_of(rider) + 1;
            dbm.constrain(v, rp, instance.ride_limit(rider) + instance.service(rider));
            if !dbm.close() {
                return Err(Infeasibility::RideLimit { rider });
            }
        }

        let mut onboard = self.onboard.clone();
        if instance.is_pickup(next) {
            let ins = onboard.binary_search(&next).unwrap_err();
            onboard.insert(ins, next);
        } else {
            let rider = instance.pickup_of(next);
            let at = onboard.binary_search(&rider).unwrap();
            onboard.remove(at);
        }
        // Canonical layout for the projected matrix.
        let mut keep = vec![0usize];
        for &p in &onboard {
            keep.push(if p == next { v } else { self.pos_of(p) + 1 });
        }
        if !onboard.contains(&next) {
            keep.push(v);
        }
        let dbm = dbm.project(&keep);
        Ok(FeasLabel {
            node: next,
            visits: self.visits + 1,
            onboard,
            dbm,
        })
    }

    /// Earliest feasible service start at the current node.
    pub fn earliest_time(&self) -> Seconds {
        self.dbm.lower_of(self.pos_of(self.node) + 1)
    }

    pub fn load(&self) -> usize {
        self.onboard.len()
    }

    /// Latest completion deadline per onboard rider, implied by the drop-off
    /// window and the ride-duration limit over the achievable pickup times.
    pub fn deadlines(&self, instance: &Instance) -> Vec<(usize, Seconds)> {
        self.onboard
            .iter()
            .map(|&p| {
                let d = instance.dropoff_of(p);
                let (_, bd) = instance.window(d).expect("drop-off has window");
                let by_ride = self
                    .dbm
                    .upper_of(self.pos_of(p) + 1)
                    .saturating_add(instance.service(p) + instance.ride_limit(p));
                (p, bd.min(by_ride))
            })
            .collect()
    }

    /// True when `self` admits every completion `other` admits at no greater
    /// resource use: same node, same onboard set, fewer visits and a looser
    /// timing summary.
    pub fn dominates_timing(&self, other: &FeasLabel) -> bool {
        self.node == other.node
            && self.onboard == other.onboard
            && self.visits <= other.visits
            && self.dbm.contains(&other.dbm)
    }

    /// Matrix position of onboard pickup `p` or the current node.
    fn pos_of(&self, p: usize) -> usize {
        // positions are offset by one for the reference variable; the caller
        // adds it back where needed.
        if let Ok(i) = self.onboard.binary_search(&p) {
            return i;
        }
        debug_assert_eq!(p, self.node);
        self.onboard.len()
    }
}

fn grow(dbm: &Dbm) -> Dbm {
    let d = dbm.dim + 1;
    let mut out = Dbm::new(d);
    for i in 0..dbm.dim {
        for j in 0..dbm.dim {
            out.m[i * d + j] = dbm.at(i, j);
        }
    }
    out
}

/// Feasibility of an arbitrary visit sequence of trip nodes under the full
/// route constraint system, with a witness schedule on success. The sequence
/// may interleave completed trips (drop-off followed by later pickups); every
/// drop-off must be preceded by its unfinished pickup.
pub fn check_visit_sequence(seq: &[usize], instance: &Instance) -> Result<Schedule, FeasError> {
    if seq.is_empty() {
        return Err(FeasError::Shape("empty sequence".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for &v in seq {
        if !instance.is_trip_node(v) {
            return Err(FeasError::Shape(format!("node {v} is not a trip node")));
        }
        if !seen.insert(v) {
            return Err(FeasError::Shape(format!("node {v} repeats")));
        }
    }
    let mut label = FeasLabel::start(seq[0], instance).map_err(FeasError::Infeasible)?;
    for &v in &seq[1..] {
        label = label.extend(v, instance).map_err(FeasError::Infeasible)?;
    }
    Ok(witness_schedule(seq, instance))
}

/// Earliest schedule of a feasible elementary sequence, from shortest paths
/// over the difference-constraint graph.
fn witness_schedule(seq: &[usize], instance: &Instance) -> Schedule {
    let k = seq.len();
    // var 0 = reference, vars 1..=k = sequence positions.
    let mut edges: Vec<(usize, usize, i64)> = Vec::new(); // x_v - x_u <= w
    for (idx, &node) in seq.iter().enumerate() {
        let v = idx + 1;
        if instance.is_pickup(node) {
            let (a, b) = instance.window(node).unwrap();
            edges.push((0, v, b));
            edges.push((v, 0, -a));
        } else {
            let (_, b) = instance.window(node).unwrap();
            edges.push((0, v, b));
        }
    }
    for idx in 1..k {
        let (pu, pv) = (idx, idx + 1);
        let (u, v) = (seq[idx - 1], seq[idx]);
        let w = instance.service(u) + instance.tau(u, v);
        // x_v >= x_u + w  <=>  x_u - x_v <= -w
        edges.push((pv, pu, -w));
        if instance.is_dropoff(v) {
            edges.push((pu, pv, w));
        }
    }
    for (idx, &node) in seq.iter().enumerate() {
        if instance.is_pickup(node) {
            if let Some(dpos) = seq.iter().position(|&x| x == instance.dropoff_of(node)) {
                edges.push((
                    idx + 1,
                    dpos + 1,
                    instance.ride_limit(node) + instance.service(node),
                ));
            }
        }
    }
    // Earliest solution: x_v = -(shortest path v -> reference), computed as
    // shortest paths from the reference over reversed edges.
    let mut dist = vec![INF; k + 1];
    dist[0] = 0;
    for _ in 0..=k + 1 {
        let mut changed = false;
        for &(u, v, w) in &edges {
            // reversed edge v -> u with weight w
            if dist[v] < INF && dist[v] + w < dist[u] {
                dist[u] = dist[v] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let start_times: Vec<(usize, Seconds)> = seq
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, -dist[i + 1]))
        .collect();
    let mut total_wait = 0;
    for idx in 1..k {
        let (u, v) = (seq[idx - 1], seq[idx]);
        total_wait += start_times[idx].1
            - (start_times[idx - 1].1 + instance.service(u) + instance.tau(u, v));
    }
    Schedule {
        start_times,
        total_wait,
    }
}

/// Mini-route feasibility: the visit order must be a pickup phase followed by
/// a drop-off phase over one direction's trips, within capacity.
pub fn check_mini_route(visit_order: &[usize], instance: &Instance) -> Result<Schedule, FeasError> {
    validate_mini_route_shape(visit_order, instance)?;
    check_visit_sequence(visit_order, instance)
}

pub fn validate_mini_route_shape(
    visit_order: &[usize],
    instance: &Instance,
) -> Result<(), FeasError> {
    if visit_order.is_empty() || visit_order.len() % 2 != 0 {
        return Err(FeasError::Shape(
            "mini route must hold k pickups then k drop-offs".into(),
        ));
    }
    let k = visit_order.len() / 2;
    if k > instance.capacity {
        return Err(FeasError::Shape(format!(
            "{k} riders exceed capacity {}",
            instance.capacity
        )));
    }
    let (pickups, dropoffs) = visit_order.split_at(k);
    if !pickups.iter().all(|&p| instance.is_pickup(p)) {
        return Err(FeasError::Shape("pickup phase contains a drop-off".into()));
    }
    if !dropoffs.iter().all(|&d| instance.is_dropoff(d)) {
        return Err(FeasError::Shape("drop-off phase contains a pickup".into()));
    }
    let dir = instance.direction_of(visit_order[0]);
    if visit_order.iter().any(|&v| instance.direction_of(v) != dir) {
        return Err(FeasError::Shape("mini route mixes directions".into()));
    }
    let mut riders: Vec<usize> = pickups.to_vec();
    riders.sort_unstable();
    riders.dedup();
    if riders.len() != k {
        return Err(FeasError::Shape("repeated pickup".into()));
    }
    let mut served: Vec<usize> = dropoffs.iter().map(|&d| instance.pickup_of(d)).collect();
    served.sort_unstable();
    served.dedup();
    if served != riders {
        return Err(FeasError::Shape("drop-offs do not match pickups".into()));
    }
    Ok(())
}

/// AV-route feasibility: a chain of distinct feasible mini routes, with
/// waiting allowed between consecutive mini routes. Returns the witness
/// schedule including the depot departure and arrival times.
pub fn check_av_route(
    mini_routes: &[&[usize]],
    instance: &Instance,
) -> Result<Schedule, FeasError> {
    if mini_routes.is_empty() {
        return Err(FeasError::Shape(
            "AV route needs at least one mini route".into(),
        ));
    }
    for (i, r) in mini_routes.iter().enumerate() {
        validate_mini_route_shape(r, instance)?;
        for other in &mini_routes[i + 1..] {
            if r == other {
                return Err(FeasError::Shape("duplicate mini route in chain".into()));
            }
        }
    }
    let seq: Vec<usize> = mini_routes.iter().flat_map(|r| r.iter().copied()).collect();
    let inner = check_visit_sequence(&seq, instance)?;
    let first = seq[0];
    let last = *seq.last().unwrap();
    let depart = inner.start_times[0].1 - instance.tau(instance.source(), first);
    let arrive = inner.start_times.last().unwrap().1
        + instance.service(last)
        + instance.tau(last, instance.sink());
    let mut start_times = Vec::with_capacity(seq.len() + 2);
    start_times.push((instance.source(), depart));
    start_times.extend(inner.start_times.iter().copied());
    start_times.push((instance.sink(), arrive));
    Ok(Schedule {
        start_times,
        total_wait: inner.total_wait,
    })
}
