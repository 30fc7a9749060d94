//! Case-study analytics over solved plans: vehicle counts, total and empty
//! distance, route efficiency, 15-minute congestion and riders-per-vehicle
//! curves, and average commute times, all against a no-sharing baseline of
//! one private vehicle per commuter driving direct trips at the desired
//! times.

use crate::instance::{Instance, Meters, Seconds};
use crate::model::AvRoutePlan;
use serde::{Deserialize, Serialize};

/// Congestion and sharing curves are binned at 15 minutes.
pub const BIN_SECONDS: Seconds = 900;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    /// Bin start in seconds-of-day.
    pub bin_start: Seconds,
    /// Vehicles whose on-road span overlaps the bin.
    pub on_road: usize,
    /// Vehicle-seconds of on-road time inside the bin.
    pub vehicle_seconds: i64,
    /// Rider-seconds onboard inside the bin.
    pub rider_seconds: i64,
}

impl BinRow {
    /// Average riders per on-road vehicle over the bin.
    pub fn avg_riders(&self) -> f64 {
        if self.vehicle_seconds == 0 {
            0.0
        } else {
            self.rider_seconds as f64 / self.vehicle_seconds as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub label: String,
    pub vehicle_count: usize,
    pub total_distance_m: Meters,
    pub empty_distance_m: Meters,
    /// Trips covered per meter traveled.
    pub route_efficiency: f64,
    pub avg_commute_time_s: f64,
    pub trips_served: usize,
    pub bins: Vec<BinRow>,
}

impl PlanMetrics {
    pub fn total_vehicle_seconds(&self) -> i64 {
        self.bins.iter().map(|b| b.vehicle_seconds).sum()
    }
}

/// On-road spans and onboard intervals of one vehicle.
struct VehicleTrace {
    span: (Seconds, Seconds),
    onboard: Vec<(Seconds, Seconds)>,
    rides: Vec<Seconds>,
}

fn overlap(a: (Seconds, Seconds), b: (Seconds, Seconds)) -> Seconds {
    (a.1.min(b.1) - a.0.max(b.0)).max(0)
}

fn bin_traces(
    label: &str,
    traces: &[VehicleTrace],
    trips_served: usize,
    total: Meters,
    empty: Meters,
) -> PlanMetrics {
    let lo = traces.iter().map(|t| t.span.0).min().unwrap_or(0);
    let hi = traces.iter().map(|t| t.span.1).max().unwrap_or(0);
    let first_bin = lo.div_euclid(BIN_SECONDS);
    let last_bin = (hi - 1).div_euclid(BIN_SECONDS).max(first_bin);
    let mut bins = Vec::new();
    for b in first_bin..=last_bin {
        let window = (b * BIN_SECONDS, (b + 1) * BIN_SECONDS);
        let mut on_road = 0usize;
        let mut vehicle_seconds = 0i64;
        let mut rider_seconds = 0i64;
        for t in traces {
            let v = overlap(t.span, window);
            if v > 0 {
                on_road += 1;
                vehicle_seconds += v;
            }
            for &ob in &t.onboard {
                rider_seconds += overlap(ob, window);
            }
        }
        bins.push(BinRow {
            bin_start: window.0,
            on_road,
            vehicle_seconds,
            rider_seconds,
        });
    }
    let rides: Vec<Seconds> = traces
        .iter()
        .flat_map(|t| t.rides.iter().copied())
        .collect();
    let avg_commute = if rides.is_empty() {
        0.0
    } else {
        rides.iter().sum::<i64>() as f64 / rides.len() as f64
    };
    PlanMetrics {
        label: label.to_string(),
        vehicle_count: traces.len(),
        total_distance_m: total,
        empty_distance_m: empty,
        route_efficiency: if total > 0 {
            trips_served as f64 / total as f64
        } else {
            0.0
        },
        avg_commute_time_s: avg_commute,
        trips_served,
        bins,
    }
}

/// Metrics of the no-sharing baseline: every commuter drives both trips
/// directly, arriving at the desired arrival time and leaving at the desired
/// departure time; the car is parked in between.
pub fn baseline_metrics(instance: &Instance) -> PlanMetrics {
    let mut traces = Vec::with_capacity(instance.n);
    let mut total: Meters = 0;
    for c in 0..instance.n {
        let (ip, id, op, od) = (c, instance.n + c, 2 * instance.n + c, 3 * instance.n + c);
        // Windows were derived from the desired times: the inbound drop-off
        // upper bound is desired arrival + delta and the outbound pickup
        // window is centered on the desired departure.
        let (a_op, b_op) = instance.window(op).unwrap();
        let desired_departure = (a_op + b_op) / 2;
        let (_, b_id) = instance.window(id).unwrap();
        let delta = (b_op - a_op) / 2;
        let desired_arrival = b_id - delta;
        let t_in = (desired_arrival - instance.tau(ip, id), desired_arrival);
        let t_out = (desired_departure, desired_departure + instance.tau(op, od));
        total += instance.dist(ip, id) + instance.dist(op, od);
        // one car, two disjoint on-road spans: model as two single-span
        // traces of the same physical vehicle, merged below.
        traces.push(VehicleTrace {
            span: t_in,
            onboard: vec![t_in],
            rides: vec![instance.tau(ip, id)],
        });
        traces.push(VehicleTrace {
            span: t_out,
            onboard: vec![t_out],
            rides: vec![instance.tau(op, od)],
        });
    }
    let mut m = bin_traces("no-sharing", &traces, 2 * instance.n, total, 0);
    // The same private car serves both trips of a commuter.
    m.vehicle_count = instance.n;
    m
}

/// Metrics of a solved plan.
pub fn plan_metrics(label: &str, plan: &AvRoutePlan, instance: &Instance) -> PlanMetrics {
    let mut traces = Vec::new();
    let mut trips = 0usize;
    for route in &plan.routes {
        let span = (
            route.schedule.start_times.first().unwrap().1,
            route.schedule.start_times.last().unwrap().1,
        );
        let mut onboard = Vec::new();
        let mut rides = Vec::new();
        for mini in &route.mini_routes {
            trips += mini.num_riders();
            for &p in &mini.riders {
                let d = instance.dropoff_of(p);
                let t_p = route.schedule.time_of(p).unwrap();
                let t_d = route.schedule.time_of(d).unwrap();
                onboard.push((t_p, t_d));
                rides.push(t_d - (t_p + instance.service(p)));
            }
        }
        traces.push(VehicleTrace {
            span,
            onboard,
            rides,
        });
    }
    bin_traces(
        label,
        &traces,
        trips,
        plan.total_distance,
        plan.empty_distance,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub metrics: PlanMetrics,
    /// Fractions of the no-sharing baseline values.
    pub vehicle_count_vs_baseline: f64,
    pub distance_vs_baseline: f64,
    pub efficiency_vs_baseline: f64,
    pub commute_time_vs_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub instance_hash: String,
    pub baseline: PlanMetrics,
    pub configs: Vec<ConfigReport>,
}

/// Compare solved plans against the no-sharing baseline of the same
/// instance.
pub fn analyze(instance: &Instance, plans: &[(String, AvRoutePlan)]) -> Report {
    let instance_hash = instance.content_hash();
    let baseline = baseline_metrics(instance);
    let configs = plans
        .iter()
        .map(|(label, plan)| {
            let metrics = plan_metrics(label, plan, instance);
            ConfigReport {
                vehicle_count_vs_baseline: metrics.vehicle_count as f64
                    / baseline.vehicle_count as f64,
                distance_vs_baseline: metrics.total_distance_m as f64
                    / baseline.total_distance_m as f64,
                efficiency_vs_baseline: metrics.route_efficiency / baseline.route_efficiency,
                commute_time_vs_baseline: metrics.avg_commute_time_s / baseline.avg_commute_time_s,
                metrics,
            }
        })
        .collect();
    Report {
        instance_hash,
        baseline,
        configs,
    }
}

/// Summary CSV: one row per configuration including the baseline.
pub fn metrics_csv(report: &Report) -> String {
    let mut s = String::from(
        "label,vehicle_count,total_distance_m,empty_distance_m,trips_served,route_efficiency,avg_commute_time_s,vehicle_count_vs_baseline,distance_vs_baseline\n",
    );
    let fmt = |m: &PlanMetrics, vc: f64, dd: f64| {
        format!(
            "{},{},{},{},{},{:.9},{:.3},{:.6},{:.6}\n",
            m.label,
            m.vehicle_count,
            m.total_distance_m,
            m.empty_distance_m,
            m.trips_served,
            m.route_efficiency,
            m.avg_commute_time_s,
            vc,
            dd
        )
    };
    s.push_str(&fmt(&report.baseline, 1.0, 1.0));
    for c in &report.configs {
        s.push_str(&fmt(
            &c.metrics,
            c.vehicle_count_vs_baseline,
            c.distance_vs_baseline,
        ));
    }
    s
}

/// Long-format congestion/sharing CSV: one row per configuration and bin.
pub fn congestion_csv(report: &Report) -> String {
    let mut s = String::from("label,bin_start,on_road,vehicle_seconds,rider_seconds\n");
    let mut dump = |m: &PlanMetrics| {
        for b in &m.bins {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                m.label, b.bin_start, b.on_road, b.vehicle_seconds, b.rider_seconds
            ));
        }
    };
    dump(&report.baseline);
    for c in &report.configs {
        dump(&c.metrics);
    }
    s
}

/// Parse a metrics CSV back into its field tuples.
#[allow(clippy::type_complexity)]
pub fn parse_metrics_csv(
    text: &str,
) -> Result<Vec<(String, usize, i64, i64, usize, f64, f64, f64, f64)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(format!("line {}: expected 9 fields", i + 1));
        }
        let parse_err = |field: &str| format!("line {}: bad {field}", i + 1);
        out.push((
            parts[0].to_string(),
            parts[1].parse().map_err(|_| parse_err("vehicle_count"))?,
            parts[2]
                .parse()
                .map_err(|_| parse_err("total_distance_m"))?,
            parts[3]
                .parse()
                .map_err(|_| parse_err("empty_distance_m"))?,
            parts[4].parse().map_err(|_| parse_err("trips_served"))?,
            parts[5]
                .parse()
                .map_err(|_| parse_err("route_efficiency"))?,
            parts[6]
                .parse()
                .map_err(|_| parse_err("avg_commute_time_s"))?,
            parts[7]
                .parse()
                .map_err(|_| parse_err("vehicle_count_vs_baseline"))?,
            parts[8]
                .parse()
                .map_err(|_| parse_err("distance_vs_baseline"))?,
        ));
    }
    Ok(out)
}

/// Parse a congestion CSV back into `(label, BinRow)` rows.
pub fn parse_congestion_csv(text: &str) -> Result<Vec<(String, BinRow)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(format!("line {}: expected 5 fields", i + 1));
        }
        let row = BinRow {
            bin_start: parts[1]
                .parse()
                .map_err(|_| format!("line {}: bin_start", i + 1))?,
            on_road: parts[2]
                .parse()
                .map_err(|_| format!("line {}: on_road", i + 1))?,
            vehicle_seconds: parts[3]
                .parse()
                .map_err(|_| format!("line {}: vehicle_seconds", i + 1))?,
            rider_seconds: parts[4]
                .parse()
                .map_err(|_| format!("line {}: rider_seconds", i + 1))?,
        };
        out.push((parts[0].to_string(), row));
    }
    Ok(out)
}
