//! Synthetic instance construction: homes sampled in an annulus around a
//! central workplace cluster, Euclidean travel times at constant speed,
//! desired arrivals from a morning peak and desired departures from an
//! evening peak, then time windows derived from the desired times.

use crate::instance::{derive_time_windows, Instance, InstanceError, RawCommuters, Seconds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Meters per second of straight-line vehicle speed.
pub const SPEED_M_PER_S: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    /// Window half-width in seconds.
    pub delta: Seconds,
    /// Ride-duration extension fraction.
    pub ride_factor: f64,
    pub capacity: usize,
    pub seed: u64,
    pub service: Seconds,
    pub geometry: Geometry,
    /// Standard deviation of desired arrival times, seconds.
    pub arrival_spread: f64,
    /// Standard deviation of desired departure times, seconds.
    pub departure_spread: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Geometry {
    /// Homes are drawn uniformly in this annulus around the workplace
    /// cluster, meters.
    pub home_radius_min: f64,
    pub home_radius_max: f64,
    /// Angular extent of the home neighborhood, radians; a full circle
    /// scatters homes around the workplace, a small arc packs them into one
    /// neighborhood the way a clustered case study does.
    pub home_arc_radians: f64,
    /// Workplaces scatter within this radius of the center, meters.
    pub work_radius: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            home_radius_min: 2_000.0,
            home_radius_max: 8_000.0,
            home_arc_radians: std::f64::consts::TAU,
            work_radius: 500.0,
        }
    }
}

impl GeneratorParams {
    /// The large-profile defaults: ten-minute shifts, half-again ride
    /// extensions, four-seat vehicles.
    pub fn default_profile(n: usize, seed: u64) -> Self {
        GeneratorParams {
            n,
            delta: 600,
            ride_factor: 0.5,
            capacity: 4,
            seed,
            service: 30,
            geometry: Geometry::default(),
            arrival_spread: 2_400.0,
            departure_spread: 3_600.0,
        }
    }

    /// The tight profile: five-minute shifts and quarter ride extensions.
    pub fn tight_profile(n: usize, seed: u64) -> Self {
        GeneratorParams {
            delta: 300,
            ride_factor: 0.25,
            ..Self::default_profile(n, seed)
        }
    }

    /// A clustered-neighborhood profile with concentrated desired times;
    /// trips share readily, which makes the relaxation gap bite.
    pub fn neighborhood_profile(n: usize, seed: u64) -> Self {
        GeneratorParams {
            geometry: Geometry {
                home_radius_min: 3_000.0,
                home_radius_max: 5_000.0,
                home_arc_radians: 0.6,
                work_radius: 300.0,
            },
            arrival_spread: 900.0,
            departure_spread: 900.0,
            ..Self::default_profile(n, seed)
        }
    }

    /// Medium-difficulty benchmark profile: a clustered neighborhood with a
    /// sharp commute peak and three-seat vehicles, sized so the big-M
    /// relaxation is weak while simultaneity still forces several vehicles.
    pub fn medium_profile(n: usize, seed: u64) -> Self {
        GeneratorParams {
            delta: 300,
            capacity: 3,
            geometry: Geometry {
                home_radius_min: 3_500.0,
                home_radius_max: 4_500.0,
                home_arc_radians: 0.5,
                work_radius: 200.0,
            },
            arrival_spread: 240.0,
            departure_spread: 240.0,
            ..Self::default_profile(n, seed)
        }
    }
}

/// Morning arrivals peak between 7 and 8 am, evening departures around 5 pm.
fn sample_desired_times(rng: &mut ChaCha8Rng, n: usize, at_sd: f64, dt_sd: f64) -> RawCommuters {
    let mut desired_arrival = Vec::with_capacity(n);
    let mut desired_departure = Vec::with_capacity(n);
    for _ in 0..n {
        let at = normal(rng, 27_000.0, at_sd).clamp(18_000.0, 39_600.0);
        let dt = normal(rng, 61_200.0, dt_sd).clamp(46_800.0, 79_200.0);
        desired_arrival.push(at as Seconds);
        desired_departure.push(dt as Seconds);
    }
    RawCommuters {
        desired_arrival,
        desired_departure,
    }
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    // Box-Muller with a fixed consumption pattern for determinism.
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    mean + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 2D coordinates of every node: home and workplace points per commuter,
/// depot at the center of the workplace cluster.
pub fn sample_coordinates(params: &GeneratorParams) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n;
    let g = &params.geometry;
    let mut homes = Vec::with_capacity(n);
    let mut works = Vec::with_capacity(n);
    for _ in 0..n {
        let r = (g.home_radius_min.powi(2)
            + rng.random_range(0.0..1.0) * (g.home_radius_max.powi(2) - g.home_radius_min.powi(2)))
        .sqrt();
        let th = rng.random_range(0.0..g.home_arc_radians);
        homes.push((r * th.cos(), r * th.sin()));
        let wr = g.work_radius * rng.random_range(0.0..1.0f64).sqrt();
        let wth = rng.random_range(0.0..std::f64::consts::TAU);
        works.push((wr * wth.cos(), wr * wth.sin()));
    }
    let mut coords = Vec::with_capacity(4 * n + 2);
    coords.extend(homes.iter().copied()); // inbound pickups
    coords.extend(works.iter().copied()); // inbound drop-offs
    coords.extend(works.iter().copied()); // outbound pickups
    coords.extend(homes.iter().copied()); // outbound drop-offs
    coords.push((0.0, 0.0)); // source depot
    coords.push((0.0, 0.0)); // sink depot
    coords
}

/// Build a full instance from the parameters. Deterministic per seed.
pub fn generate_instance(params: &GeneratorParams) -> Result<Instance, InstanceError> {
    let coords = sample_coordinates(params);
    let m = coords.len();
    // Ceiling keeps both matrices metric.
    let mut tau = vec![vec![0i64; m]; m];
    let mut dist = vec![vec![0i64; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let d =
                ((coords[i].0 - coords[j].0).powi(2) + (coords[i].1 - coords[j].1).powi(2)).sqrt();
            dist[i][j] = d.ceil() as i64;
            tau[i][j] = (d / SPEED_M_PER_S).ceil() as i64;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e3779b97f4a7c15);
    let raw = sample_desired_times(
        &mut rng,
        params.n,
        params.arrival_spread,
        params.departure_spread,
    );
    derive_time_windows(
        &raw,
        params.delta,
        params.ride_factor,
        tau,
        dist,
        params.capacity,
        params.service,
    )
}
