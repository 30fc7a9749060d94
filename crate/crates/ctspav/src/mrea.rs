//! Exhaustive enumeration of feasible mini routes: for every combination of
//! up to `K` same-direction trips, a depth-first search over pickup-phase and
//! drop-off-phase orders that backtracks as soon as a partial route becomes
//! infeasible. Combinations are processed in parallel and the merged result
//! is canonically sorted, so output is independent of worker count.

use crate::feasibility::{check_mini_route, FeasLabel, Schedule};
use crate::instance::{Direction, Instance, Meters, MAX_CAPACITY};
use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniRoute {
    pub direction: Direction,
    /// Pickups in visit order followed by drop-offs in visit order.
    pub visit_order: Vec<usize>,
    /// Pickup nodes served, ascending.
    pub riders: Vec<usize>,
    /// Sum of distances over the internal arcs; depot legs belong to the
    /// AV-route level.
    pub length: Meters,
    pub schedule: Schedule,
}

impl MiniRoute {
    pub fn from_visit_order(visit_order: Vec<usize>, instance: &Instance) -> Option<MiniRoute> {
        let schedule = check_mini_route(&visit_order, instance).ok()?;
        let mut riders: Vec<usize> = visit_order[..visit_order.len() / 2].to_vec();
        riders.sort_unstable();
        let length = visit_order
            .windows(2)
            .map(|w| instance.dist(w[0], w[1]))
            .sum();
        Some(MiniRoute {
            direction: instance.direction_of(visit_order[0]).expect("trip node"),
            visit_order,
            riders,
            length,
            schedule,
        })
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.visit_order.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn first(&self) -> usize {
        self.visit_order[0]
    }
    pub fn last(&self) -> usize {
        *self.visit_order.last().unwrap()
    }
    pub fn num_riders(&self) -> usize {
        self.riders.len()
    }
}

/// The enumerated route set.
#[derive(Debug, Clone, Default)]
pub struct Omega {
    pub routes: Vec<MiniRoute>,
}

impl Omega {
    pub fn len(&self) -> usize {
        self.routes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
    pub fn iter(&self) -> std::slice::Iter<'_, MiniRoute> {
        self.routes.iter()
    }
}

/// All feasible mini routes over subsets of at most `capacity` trips of one
/// direction. `trips` are pickup node ids and must share that direction.
pub fn enumerate_mini_routes(
    trips: &[usize],
    capacity: usize,
    instance: &Instance,
) -> Vec<MiniRoute> {
    assert!(
        capacity >= 1 && capacity <= MAX_CAPACITY,
        "capacity must be in 1..={MAX_CAPACITY}"
    );
    let dir = trips.first().and_then(|&t| instance.direction_of(t));
    assert!(
        trips
            .iter()
            .all(|&t| instance.is_pickup(t) && instance.direction_of(t) == dir),
        "trips must be same-direction pickups"
    );

    let mut routes: Vec<MiniRoute> = Vec::new();
    // k = 1: one direct route per trip.
    for &t in trips {
        if let Some(r) = MiniRoute::from_visit_order(vec![t, instance.dropoff_of(t)], instance) {
            routes.push(r);
        }
    }
    for k in 2..=capacity.min(trips.len()) {
        let combos: Vec<Vec<usize>> = trips.iter().copied().combinations(k).collect();
        let found: Vec<Vec<MiniRoute>> = combos
            .par_iter()
            .map(|combo| enumerate_combination(combo, instance))
            .collect();
        routes.extend(found.into_iter().flatten());
    }
    routes.sort_by(|a, b| {
        (a.riders.as_slice(), a.visit_order.as_slice())
            .cmp(&(b.riders.as_slice(), b.visit_order.as_slice()))
    });
    routes
}

/// DFS over pickup orders then drop-off orders for one trip combination,
/// pruning on prefix infeasibility.
fn enumerate_combination(combo: &[usize], instance: &Instance) -> Vec<MiniRoute> {
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(2 * combo.len());
    for (idx, &t) in combo.iter().enumerate() {
        if let Ok(label) = FeasLabel::start(t, instance) {
            prefix.push(t);
            let mut remaining = combo.to_vec();
            remaining.swap_remove(idx);
            dfs_pickups(&remaining, &label, &mut prefix, instance, &mut out);
            prefix.pop();
        }
    }
    out
}

fn dfs_pickups(
    remaining: &[usize],
    label: &FeasLabel,
    prefix: &mut Vec<usize>,
    instance: &Instance,
    out: &mut Vec<MiniRoute>,
) {
    if remaining.is_empty() {
        let onboard = label.onboard.clone();
        dfs_dropoffs(&onboard, label, prefix, instance, out);
        return;
    }
    for (idx, &t) in remaining.iter().enumerate() {
        if let Ok(next) = label.extend(t, instance) {
            prefix.push(t);
            let mut rest = remaining.to_vec();
            rest.swap_remove(idx);
            dfs_pickups(&rest, &next, prefix, instance, out);
            prefix.pop();
        }
    }
}

fn dfs_dropoffs(
    open: &[usize],
    label: &FeasLabel,
    prefix: &mut Vec<usize>,
    instance: &Instance,
    out: &mut Vec<MiniRoute>,
) {
    if open.is_empty() {
        let route = MiniRoute::from_visit_order(prefix.clone(), instance)
            .expect("DFS-accepted route re-validates");
        out.push(route);
        return;
    }
    for (idx, &p) in open.iter().enumerate() {
        let d = instance.dropoff_of(p);
        if let Ok(next) = label.extend(d, instance) {
            prefix.push(d);
            let mut rest = open.to_vec();
            rest.swap_remove(idx);
            dfs_dropoffs(&rest, &next, prefix, instance, out);
            prefix.pop();
        }
    }
}

/// Enumerate both directions of an instance.
pub fn enumerate_all(instance: &Instance) -> Omega {
    let inbound: Vec<usize> = instance.pickups_of(Direction::Inbound).collect();
    let outbound: Vec<usize> = instance.pickups_of(Direction::Outbound).collect();
    let mut routes = enumerate_mini_routes(&inbound, instance.capacity, instance);
    routes.extend(enumerate_mini_routes(
        &outbound,
        instance.capacity,
        instance,
    ));
    Omega { routes }
}

/// Direction-pure partition of an enumerated set.
pub fn partition_omega(omega: &Omega) -> (Vec<&MiniRoute>, Vec<&MiniRoute>) {
    omega
        .iter()
        .partition(|r| r.direction == Direction::Inbound)
}

#[derive(Serialize, Deserialize)]
struct OmegaCacheFile {
    instance_hash: String,
    visit_orders: Vec<Vec<usize>>,
}

/// Cache the enumerated set keyed by the instance content hash; schedules and
/// lengths are rebuilt on load.
pub fn save_omega_cache(path: &Path, instance: &Instance, omega: &Omega) -> std::io::Result<()> {
    let file = OmegaCacheFile {
        instance_hash: instance.content_hash(),
        visit_orders: omega.iter().map(|r| r.visit_order.clone()).collect(),
    };
    std::fs::write(
        path,
        serde_json::to_string(&file).expect("cache serializes"),
    )
}

/// Load a cached set; `None` when the file is missing or keyed to another
/// instance.
pub fn load_omega_cache(path: &Path, instance: &Instance) -> Option<Omega> {
    let text = std::fs::read_to_string(path).ok()?;
    let file: OmegaCacheFile = serde_json::from_str(&text).ok()?;
    if file.instance_hash != instance.content_hash() {
        return None;
    }
    let routes: Option<Vec<MiniRoute>> = file
        .visit_orders
        .into_iter()
        .map(|vo| MiniRoute::from_visit_order(vo, instance))
        .collect();
    Some(Omega { routes: routes? })
}
