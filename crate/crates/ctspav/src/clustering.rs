//! Size-capped k-means over commuter home coordinates: k-means++ seeding, an
//! exact assignment step solved as the LP relaxation of the capacitated
//! generalized-assignment formulation (transportation structure, so a basic
//! optimum is integral), and mean-update of the centers, iterated until the
//! assignments stabilize.

use crate::lp::{solve_lp, LinearModel, LpStatus, RowDef, Sense, VariableDef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub type Point = (f64, f64);

const MAX_ITERS: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ClusterError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("assignment LP failed: {0}")]
    Assignment(String),
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    pub points: Vec<Point>,
    pub centers: Vec<Point>,
    /// Center index per point.
    pub assignment: Vec<usize>,
    pub cap: usize,
    /// Centers that lost all points and kept their previous coordinates.
    pub frozen_centers: Vec<usize>,
}

pub fn euclid(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Squared-distance seeding weights given the chosen centers; exposed so the
/// selection distribution is directly checkable.
pub fn kmeanspp_weights(points: &[Point], centers: &[Point]) -> Vec<f64> {
    points
        .iter()
        .map(|&p| {
            centers
                .iter()
                .map(|&c| euclid(p, c))
                .fold(f64::INFINITY, f64::min)
                .powi(2)
        })
        .collect()
}

/// k-means++ seeding: first center uniform, every further center drawn with
/// probability proportional to its squared distance to the nearest chosen
/// center; zero-weight ties fall back to a uniform draw.
pub fn kmeanspp_init(points: &[Point], k: usize, seed: u64) -> Result<Vec<Point>, ClusterError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kmeanspp_init_rng(points, k, &mut rng)
}

fn kmeanspp_init_rng(
    points: &[Point],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point>, ClusterError> {
    if k == 0 || k > points.len() {
        return Err(ClusterError::Params(format!(
            "k = {k} must be within 1..={}",
            points.len()
        )));
    }
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    while centers.len() < k {
        let chosen = kmeanspp_next(points, &centers, rng);
        centers.push(points[chosen]);
    }
    Ok(centers)
}

/// Draw the next center index with probability proportional to the squared
/// distance to the nearest chosen center; uniform when all weights vanish.
pub fn kmeanspp_next(points: &[Point], centers: &[Point], rng: &mut ChaCha8Rng) -> usize {
    let weights = kmeanspp_weights(points, centers);
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..points.len());
    }
    let mut target = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    points.len() - 1
}

/// Optimal size-capped assignment of points to centers, minimizing total
/// Euclidean distance. Solved as an LP; the transportation structure makes a
/// basic optimum integral, with a cycle-cancelling repair for degenerate
/// fractional ties.
pub fn assign_points(
    points: &[Point],
    centers: &[Point],
    cap: usize,
) -> Result<Vec<usize>, ClusterError> {
    let (np, nc) = (points.len(), centers.len());
    if nc == 0 || cap == 0 || nc * cap < np {
        return Err(ClusterError::Params(format!(
            "capacity infeasible: {nc} centers x {cap} < {np} points"
        )));
    }
    let mut lp = LinearModel::new();
    for p in 0..np {
        for c in 0..nc {
            lp.add_var(VariableDef::continuous(
                0.0,
                1.0,
                euclid(points[p], centers[c]),
            ));
        }
    }
    let var = |p: usize, c: usize| p * nc + c;
    for p in 0..np {
        lp.add_row(RowDef::new(
            (0..nc).map(|c| (var(p, c), 1.0)).collect(),
            Sense::Eq,
            1.0,
        ));
    }
    for c in 0..nc {
        lp.add_row(RowDef::new(
            (0..np).map(|p| (var(p, c), 1.0)).collect(),
            Sense::Le,
            cap as f64,
        ));
    }
    let sol = solve_lp(&lp).map_err(|e| ClusterError::Assignment(e.to_string()))?;
    if sol.status != LpStatus::Optimal {
        return Err(ClusterError::Assignment(format!("status {:?}", sol.status)));
    }
    let mut x = sol.x;
    repair_fractional(&mut x, np, nc, &lp);
    let mut assignment = vec![usize::MAX; np];
    for p in 0..np {
        for c in 0..nc {
            if x[var(p, c)] > 0.5 {
                assignment[p] = c;
            }
        }
        if assignment[p] == usize::MAX {
            return Err(ClusterError::Assignment(format!(
                "point {p} left unassigned"
            )));
        }
    }
    Ok(assignment)
}

/// Cancel fractional mass around cycles of the fractional support; the
/// alternating shift is cost-neutral or improving in the chosen direction and
/// each pass rounds at least one entry.
fn repair_fractional(x: &mut [f64], np: usize, nc: usize, lp: &LinearModel) {
    let var = |p: usize, c: usize| p * nc + c;
    let frac = |v: f64| v > 1e-6 && v < 1.0 - 1e-6;
    for _ in 0..x.len() {
        let Some(start) = (0..np)
            .flat_map(|p| (0..nc).map(move |c| (p, c)))
            .find(|&(p, c)| frac(x[var(p, c)]))
        else {
            break;
        };
        // Walk the bipartite fractional support until a node repeats; every
        // fractional row/column has at least two fractional entries.
        let mut cycle: Vec<(usize, usize)> = vec![start];
        let mut seen_points = BTreeMap::new();
        seen_points.insert(start.0, 0usize);
        loop {
            let &(p, c) = cycle.last().unwrap();
            // move along the column to another fractional point
            let Some(p2) = (0..np).find(|&q| q != p && frac(x[var(q, c)])) else {
                break;
            };
            let Some(c2) = (0..nc).find(|&d| d != c && frac(x[var(p2, d)])) else {
                break;
            };
            if let Some(&at) = seen_points.get(&p2) {
                cycle.push((p2, c));
                cycle.drain(..at);
                break;
            }
            seen_points.insert(p2, cycle.len());
            cycle.push((p2, c));
            cycle.push((p2, c2));
        }
        if cycle.len() < 4 || cycle.len() % 2 != 0 {
            // No proper alternating cycle found; snap and bail out.
            for v in x.iter_mut() {
                if *v > 0.5 {
                    *v = 1.0;
                } else {
                    *v = 0.0;
                }
            }
            return;
        }
        // Alternating +delta/-delta around the cycle.
        let signed: Vec<((usize, usize), f64)> = cycle
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let cost_dir: f64 = signed
            .iter()
            .map(|&((p, c), s)| s * lp.vars[var(p, c)].objective)
            .sum();
        let dir = if cost_dir <= 0.0 { 1.0 } else { -1.0 };
        let mut delta = f64::INFINITY;
        for &((p, c), s) in &signed {
            let v = x[var(p, c)];
            let room = if s * dir > 0.0 { 1.0 - v } else { v };
            delta = delta.min(room);
        }
        if !delta.is_finite() || delta <= 1e-9 {
            break;
        }
        for &((p, c), s) in &signed {
            x[var(p, c)] += s * dir * delta;
        }
    }
    for v in x.iter_mut() {
        if *v > 0.5 {
            *v = 1.0;
        } else {
            *v = 0.0;
        }
    }
}

/// Mean of the assigned points per center; empty centers keep their previous
/// coordinates and are reported back.
pub fn update_centers(state: &ClusterState) -> (Vec<Point>, Vec<usize>) {
    let mut sums = vec![(0.0, 0.0, 0usize); state.centers.len()];
    for (p, &c) in state.assignment.iter().enumerate() {
        sums[c].0 += state.points[p].0;
        sums[c].1 += state.points[p].1;
        sums[c].2 += 1;
    }
    let mut frozen = Vec::new();
    let centers = sums
        .iter()
        .enumerate()
        .map(|(c, &(sx, sy, cnt))| {
            if cnt == 0 {
                frozen.push(c);
                state.centers[c]
            } else {
                (sx / cnt as f64, sy / cnt as f64)
            }
        })
        .collect();
    (centers, frozen)
}

pub fn assignment_cost(points: &[Point], centers: &[Point], assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(p, &c)| euclid(points[p], centers[c]))
        .sum()
}

/// Full clustering loop: `k = ceil(|points| / cap)` centers, alternate exact
/// assignment and mean update until assignments stabilize. Returns clusters
/// of point indices, each at most `cap` large, sorted canonically.
pub fn cluster(points: &[Point], cap: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClusterError> {
    if cap == 0 {
        return Err(ClusterError::Params("cap must be positive".into()));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let k = points.len().div_ceil(cap);
    let mut centers = kmeanspp_init(points, k, seed)?;
    let mut assignment = assign_points(points, &centers, cap)?;
    let mut frozen = Vec::new();
    for _ in 0..MAX_ITERS {
        let state = ClusterState {
            points: points.to_vec(),
            centers: centers.clone(),
            assignment: assignment.clone(),
            cap,
            frozen_centers: frozen.clone(),
        };
        let (new_centers, new_frozen) = update_centers(&state);
        let new_assignment = assign_points(points, &new_centers, cap)?;
        let stable = new_assignment == assignment;
        centers = new_centers;
        assignment = new_assignment;
        frozen = new_frozen;
        if stable {
            break;
        }
    }
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (p, &c) in assignment.iter().enumerate() {
        clusters[c].push(p);
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort();
    Ok(clusters)
}

/// Parse a `commuter_id,x,y` CSV (header optional).
pub fn parse_points_csv(text: &str) -> Result<(Vec<String>, Vec<Point>), ClusterError> {
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.to_ascii_lowercase().starts_with("commuter_id"))
        {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(ClusterError::Params(format!(
                "line {}: expected id,x,y",
                lineno + 1
            )));
        }
        let x: f64 = parts[1]
            .parse()
            .map_err(|_| ClusterError::Params(format!("line {}: bad x", lineno + 1)))?;
        let y: f64 = parts[2]
            .parse()
            .map_err(|_| ClusterError::Params(format!("line {}: bad y", lineno + 1)))?;
        ids.push(parts[0].to_string());
        points.push((x, y));
    }
    Ok((ids, points))
}

/// Render clusters as a `cluster_id -> commuter_ids` JSON object.
pub fn clusters_to_json(ids: &[String], clusters: &[Vec<usize>]) -> String {
    let map: BTreeMap<String, Vec<String>> = clusters
        .iter()
        .enumerate()
        .map(|(c, members)| {
            (
                c.to_string(),
                members.iter().map(|&p| ids[p].clone()).collect(),
            )
        })
        .collect();
    serde_json::to_string_pretty(&map).expect("clusters serialize")
}
