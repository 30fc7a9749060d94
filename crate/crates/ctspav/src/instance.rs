//! Domain types for commuters, trips and the pickup/delivery graph, plus
//! time-window construction from desired arrival/departure times.
//!
//! Node indexing convention for an instance with `n` commuters (0-based):
//! commuter `i` owns four trip nodes
//!
//! * `i`        inbound pickup (home, morning)
//! * `n + i`    inbound drop-off (workplace, morning)
//! * `2n + i`   outbound pickup (workplace, evening)
//! * `3n + i`   outbound drop-off (home, evening)
//!
//! followed by the depot source `4n` and sink `4n + 1`. For any pickup node
//! `p` the matching drop-off is `p + n`.
//!
//! All times are integer seconds, all distances integer meters.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::hash::content_hash_hex;

/// Seconds-of-day (and beyond midnight for late schedules).
pub type Seconds = i64;
/// Meters.
pub type Meters = i64;

pub const MAX_CAPACITY: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    InboundPickup,
    InboundDropoff,
    OutboundPickup,
    OutboundDropoff,
    Source,
    Sink,
}

impl NodeKind {
    pub fn is_pickup(self) -> bool {
        matches!(self, NodeKind::InboundPickup | NodeKind::OutboundPickup)
    }
    pub fn is_dropoff(self) -> bool {
        matches!(self, NodeKind::InboundDropoff | NodeKind::OutboundDropoff)
    }
    pub fn is_depot(self) -> bool {
        matches!(self, NodeKind::Source | NodeKind::Sink)
    }
    pub fn direction(self) -> Option<Direction> {
        match self {
            NodeKind::InboundPickup | NodeKind::InboundDropoff => Some(Direction::Inbound),
            NodeKind::OutboundPickup | NodeKind::OutboundDropoff => Some(Direction::Outbound),
            _ => None,
        }
    }
}

/// One commute trip request: a desired arrival at the workplace (inbound) or
/// a desired departure from it (outbound).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub origin: usize,
    pub destination: usize,
    pub desired_time: Seconds,
    pub direction: Direction,
}

impl Trip {
    pub fn validate(&self) -> Result<(), String> {
        if self.origin == self.destination {
            return Err("trip origin equals destination".into());
        }
        if !(0..86400).contains(&self.desired_time) {
            return Err(format!(
                "desired_time {} outside [0, 86400)",
                self.desired_time
            ));
        }
        Ok(())
    }
}

/// Static attributes of one graph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAttrs {
    pub kind: NodeKind,
    /// Earliest service start. Absent on depot nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Seconds>,
    /// Latest service start. Absent on depot nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Seconds>,
    /// Service duration.
    pub s: Seconds,
    /// Ride-duration limit; pickup nodes only.
    #[serde(skip_serializing_if = "Option::is_none", rename = "L")]
    pub ride_limit: Option<Seconds>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub capacity: usize,
    pub service_default: Seconds,
    pub nodes: Vec<NodeAttrs>,
    /// Dense (4n+2)^2 travel-time matrix, row-major, integer seconds.
    pub tau: Vec<Vec<Seconds>>,
    /// Dense (4n+2)^2 distance matrix, row-major, integer meters.
    pub dist: Vec<Vec<Meters>>,
    /// Warnings raised during construction (e.g. clamped windows).
    pub warnings: Vec<String>,
}

/// On-disk schema: nodes carry their index explicitly.
#[derive(Serialize, Deserialize)]
struct NodeJson {
    idx: usize,
    kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Seconds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Seconds>,
    s: Seconds,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "L")]
    ride_limit: Option<Seconds>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n: usize,
    capacity: usize,
    service_default: Seconds,
    nodes: Vec<NodeJson>,
    tau: Vec<Vec<Seconds>>,
    dist: Vec<Vec<Meters>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

impl Instance {
    pub fn num_nodes(&self) -> usize {
        4 * self.n + 2
    }
    pub fn source(&self) -> usize {
        4 * self.n
    }
    pub fn sink(&self) -> usize {
        4 * self.n + 1
    }
    pub fn is_trip_node(&self, i: usize) -> bool {
        i < 4 * self.n
    }
    pub fn is_pickup(&self, i: usize) -> bool {
        i < self.n || (2 * self.n <= i && i < 3 * self.n)
    }
    pub fn is_dropoff(&self, i: usize) -> bool {
        (self.n <= i && i < 2 * self.n) || (3 * self.n <= i && i < 4 * self.n)
    }
    /// Drop-off node paired with pickup `p`.
    pub fn dropoff_of(&self, p: usize) -> usize {
        debug_assert!(self.is_pickup(p));
        p + self.n
    }
    /// Pickup node paired with drop-off `d`.
    pub fn pickup_of(&self, d: usize) -> usize {
        debug_assert!(self.is_dropoff(d));
        d - self.n
    }
    pub fn kind(&self, i: usize) -> NodeKind {
        self.nodes[i].kind
    }
    pub fn direction_of(&self, i: usize) -> Option<Direction> {
        self.nodes[i].kind.direction()
    }
    pub fn tau(&self, i: usize, j: usize) -> Seconds {
        self.tau[i][j]
    }
    pub fn dist(&self, i: usize, j: usize) -> Meters {
        self.dist[i][j]
    }
    pub fn service(&self, i: usize) -> Seconds {
        self.nodes[i].s
    }
    pub fn window(&self, i: usize) -> Option<(Seconds, Seconds)> {
        match (self.nodes[i].a, self.nodes[i].b) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }
    pub fn ride_limit(&self, p: usize) -> Seconds {
        self.nodes[p].ride_limit.expect("ride limit on pickup node")
    }
    pub fn pickups(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).chain(2 * self.n..3 * self.n)
    }
    pub fn dropoffs(&self) -> impl Iterator<Item = usize> + '_ {
        (self.n..2 * self.n).chain(3 * self.n..4 * self.n)
    }
    pub fn trip_nodes(&self) -> impl Iterator<Item = usize> {
        0..4 * self.n
    }
    /// Pickup nodes of one direction, i.e. the trips of that direction.
    pub fn pickups_of(&self, dir: Direction) -> std::ops::Range<usize> {
        match dir {
            Direction::Inbound => 0..self.n,
            Direction::Outbound => 2 * self.n..3 * self.n,
        }
    }

    pub fn to_json(&self) -> String {
        let file = InstanceJson {
            n: self.n,
            capacity: self.capacity,
            service_default: self.service_default,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(idx, a)| NodeJson {
                    idx,
                    kind: a.kind,
                    a: a.a,
                    b: a.b,
                    s: a.s,
                    ride_limit: a.ride_limit,
                })
                .collect(),
            tau: self.tau.clone(),
            dist: self.dist.clone(),
            warnings: self.warnings.clone(),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }
    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        let file: InstanceJson =
            serde_json::from_str(s).map_err(|e| InstanceError::Parse(e.to_string()))?;
        let mut nodes = vec![
            NodeAttrs {
                kind: NodeKind::Source,
                a: None,
                b: None,
                s: 0,
                ride_limit: None
            };
            file.nodes.len()
        ];
        for nj in &file.nodes {
            if nj.idx >= nodes.len() {
                return Err(InstanceError::Parse(format!(
                    "node idx {} out of range",
                    nj.idx
                )));
            }
            nodes[nj.idx] = NodeAttrs {
                kind: nj.kind,
                a: nj.a,
                b: nj.b,
                s: nj.s,
                ride_limit: nj.ride_limit,
            };
        }
        let inst = Instance {
            n: file.n,
            capacity: file.capacity,
            service_default: file.service_default,
            nodes,
            tau: file.tau,
            dist: file.dist,
            warnings: file.warnings,
        };
        let violations = validate_instance(&inst);
        if !violations.is_empty() {
            return Err(InstanceError::Invalid(violations));
        }
        Ok(inst)
    }
    pub fn write_file(&self, path: &Path) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json()).map_err(|e| InstanceError::Io(e.to_string()))
    }
    pub fn read_file(path: &Path) -> Result<Self, InstanceError> {
        let s = std::fs::read_to_string(path).map_err(|e| InstanceError::Io(e.to_string()))?;
        Self::from_json(&s)
    }
    /// Content hash used to key caches and stamp outputs.
    pub fn content_hash(&self) -> String {
        content_hash_hex(self.to_json().as_bytes())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("instance violates invariants: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A single invariant violation, naming the offending node(s) and rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: String,
    pub nodes: Vec<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:?}", self.rule, self.nodes)
    }
}

/// Desired times of every commuter, before windows are derived.
#[derive(Debug, Clone)]
pub struct RawCommuters {
    /// Desired arrival time at the workplace for the inbound trip of each commuter.
    pub desired_arrival: Vec<Seconds>,
    /// Desired departure time from the workplace for the outbound trip.
    pub desired_departure: Vec<Seconds>,
}

/// Window construction: the inbound drop-off gets the upper bound
/// `desired_arrival + delta`; the inbound pickup window is
/// `[b_drop - s - L - 2*delta, b_drop - s - L]`; the outbound pickup window is
/// `[desired_departure - delta, desired_departure + delta]`; the outbound
/// drop-off upper bound is `b_pick + s_pick + L_pick`. Ride limits are
/// `floor((1 + ride_factor) * tau_direct)`. Drop-off lower bounds are the
/// implied `a_pickup + s_pickup + tau_direct`.
#[allow(clippy::too_many_arguments)]
pub fn derive_time_windows(
    raw: &RawCommuters,
    delta: Seconds,
    ride_factor: f64,
    tau: Vec<Vec<Seconds>>,
    dist: Vec<Vec<Meters>>,
    capacity: usize,
    service: Seconds,
) -> Result<Instance, InstanceError> {
    let n = raw.desired_arrival.len();
    if n == 0 {
        return Err(InstanceError::Params("need at least one commuter".into()));
    }
    if raw.desired_departure.len() != n {
        return Err(InstanceError::Params(
            "desired time vectors differ in length".into(),
        ));
    }
    if delta < 0 {
        return Err(InstanceError::Params("delta must be nonnegative".into()));
    }
    if !(ride_factor >= 0.0) {
        return Err(InstanceError::Params(
            "ride factor must be nonnegative".into(),
        ));
    }
    if capacity == 0 || capacity > MAX_CAPACITY {
        return Err(InstanceError::Params(format!(
            "capacity must be in 1..={MAX_CAPACITY}"
        )));
    }
    let m = 4 * n + 2;
    if tau.len() != m || dist.len() != m || tau.iter().any(|r| r.len() != m) {
        return Err(InstanceError::Params(
            "matrix dimensions must be (4n+2)^2".into(),
        ));
    }
    for t in raw
        .desired_arrival
        .iter()
        .chain(raw.desired_departure.iter())
    {
        if !(0..86400).contains(t) {
            return Err(InstanceError::Params(format!(
                "desired time {t} outside [0, 86400)"
            )));
        }
    }

    let mut nodes = vec![
        NodeAttrs {
            kind: NodeKind::Source,
            a: None,
            b: None,
            s: 0,
            ride_limit: None
        };
        m
    ];
    let mut warnings = Vec::new();
    let ride_limit = |direct: Seconds| ((1.0 + ride_factor) * direct as f64).floor() as Seconds;

    for i in 0..n {
        let (ip, id, op, od) = (i, n + i, 2 * n + i, 3 * n + i);
        let l_in = ride_limit(tau[ip][id]);
        let l_out = ride_limit(tau[op][od]);

        let b_id = raw.desired_arrival[i] + delta;
        let b_ip = b_id - service - l_in;
        let mut a_ip = b_ip - 2 * delta;
        if a_ip < 0 {
            warnings.push(format!("pickup {ip}: window start {a_ip} clamped to 0"));
            a_ip = 0;
        }
        let a_op = (raw.desired_departure[i] - delta).max(0);
        if raw.desired_departure[i] - delta < 0 {
            warnings.push(format!("pickup {op}: window start clamped to 0"));
        }
        let b_op = raw.desired_departure[i] + delta;
        let b_od = b_op + service + l_out;

        nodes[ip] = NodeAttrs {
            kind: NodeKind::InboundPickup,
            a: Some(a_ip),
            b: Some(b_ip),
            s: service,
            ride_limit: Some(l_in),
        };
        nodes[id] = NodeAttrs {
            kind: NodeKind::InboundDropoff,
            a: Some(a_ip + service + tau[ip][id]),
            b: Some(b_id),
            s: service,
            ride_limit: None,
        };
        nodes[op] = NodeAttrs {
            kind: NodeKind::OutboundPickup,
            a: Some(a_op),
            b: Some(b_op),
            s: service,
            ride_limit: Some(l_out),
        };
        nodes[od] = NodeAttrs {
            kind: NodeKind::OutboundDropoff,
            a: Some(a_op + service + tau[op][od]),
            b: Some(b_od),
            s: service,
            ride_limit: None,
        };
    }
    nodes[4 * n] = NodeAttrs {
        kind: NodeKind::Source,
        a: None,
        b: None,
        s: 0,
        ride_limit: None,
    };
    nodes[4 * n + 1] = NodeAttrs {
        kind: NodeKind::Sink,
        a: None,
        b: None,
        s: 0,
        ride_limit: None,
    };

    let inst = Instance {
        n,
        capacity,
        service_default: service,
        nodes,
        tau,
        dist,
        warnings,
    };
    let violations = validate_instance(&inst);
    if !violations.is_empty() {
        return Err(InstanceError::Invalid(violations));
    }
    Ok(inst)
}

/// Complete directed pickup/delivery graph: every ordered pair of distinct
/// nodes is an arc as a first approximation; travel times, distances and
/// costs are read off the instance matrices.
#[derive(Debug, Clone)]
pub struct PdGraph {
    pub num_nodes: usize,
    pub arcs: Vec<(usize, usize)>,
}

pub fn build_pdgraph(instance: &Instance) -> PdGraph {
    let m = instance.num_nodes();
    let mut arcs = Vec::with_capacity(m * (m - 1));
    for i in 0..m {
        for j in 0..m {
            if i != j {
                arcs.push((i, j));
            }
        }
    }
    PdGraph { num_nodes: m, arcs }
}

/// Checks every `Instance` invariant and returns the violations found.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = 4 * instance.n + 2;
    if instance.n == 0 {
        out.push(Violation {
            rule: "n >= 1".into(),
            nodes: vec![],
        });
        return out;
    }
    if instance.capacity == 0 || instance.capacity > MAX_CAPACITY {
        out.push(Violation {
            rule: format!("capacity in 1..={MAX_CAPACITY}"),
            nodes: vec![],
        });
    }
    if instance.nodes.len() != m {
        out.push(Violation {
            rule: "node count = 4n+2".into(),
            nodes: vec![],
        });
        return out;
    }
    if instance.tau.len() != m
        || instance.dist.len() != m
        || instance.tau.iter().any(|r| r.len() != m)
        || instance.dist.iter().any(|r| r.len() != m)
    {
        out.push(Violation {
            rule: "matrix dims = (4n+2)^2".into(),
            nodes: vec![],
        });
        return out;
    }
    for i in 0..m {
        let attrs = &instance.nodes[i];
        let expected = expected_kind(instance.n, i);
        if attrs.kind != expected {
            out.push(Violation {
                rule: format!("kind must be {expected:?}"),
                nodes: vec![i],
            });
        }
        if attrs.s < 0 {
            out.push(Violation {
                rule: "service >= 0".into(),
                nodes: vec![i],
            });
        }
        if attrs.kind.is_depot() {
            if attrs.a.is_some() || attrs.b.is_some() {
                out.push(Violation {
                    rule: "depot carries no window".into(),
                    nodes: vec![i],
                });
            }
        } else {
            match (attrs.a, attrs.b) {
                (Some(a), Some(b)) if a > b => out.push(Violation {
                    rule: "a <= b".into(),
                    nodes: vec![i],
                }),
                (Some(_), Some(_)) => {}
                _ => out.push(Violation {
                    rule: "trip node needs window".into(),
                    nodes: vec![i],
                }),
            }
            if instance.is_pickup(i) && attrs.ride_limit.is_none() {
                out.push(Violation {
                    rule: "pickup needs ride limit".into(),
                    nodes: vec![i],
                });
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if instance.tau[i][j] < 0 {
                out.push(Violation {
                    rule: "tau >= 0".into(),
                    nodes: vec![i, j],
                });
            }
            if instance.dist[i][j] < 0 {
                out.push(Violation {
                    rule: "dist >= 0".into(),
                    nodes: vec![i, j],
                });
            }
        }
    }
    // Triangle inequality on travel times; report the first witness only to
    // keep the output readable.
    'tri: for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                if instance.tau[i][k] > instance.tau[i][j] + instance.tau[j][k] {
                    out.push(Violation {
                        rule: "tau triangle inequality".into(),
                        nodes: vec![i, j, k],
                    });
                    break 'tri;
                }
            }
        }
    }
    out
}

fn expected_kind(n: usize, i: usize) -> NodeKind {
    if i < n {
        NodeKind::InboundPickup
    } else if i < 2 * n {
        NodeKind::InboundDropoff
    } else if i < 3 * n {
        NodeKind::OutboundPickup
    } else if i < 4 * n {
        NodeKind::OutboundDropoff
    } else if i == 4 * n {
        NodeKind::Source
    } else {
        NodeKind::Sink
    }
}
