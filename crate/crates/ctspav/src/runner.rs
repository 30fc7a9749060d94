//! End-to-end solve orchestration: enumeration, filtering, model build,
//! variant configuration, the tree search with its separators and bound
//! feed, and the solution file emitted for downstream analytics.

use crate::cuts::{PredSuccSeparator, RoundedVcSeparator, TwoPathSeparator};
use crate::darp::{BoundStream, CgEngine};
use crate::filter::{filter_arcs, ArcSet};
use crate::instance::{build_pdgraph, Instance};
use crate::lp::{
    branch_and_cut, BnbCallbacks, BnbOptions, Budget, LpError, SearchStatus, Separator,
};
use crate::model::{
    build_model, ceil_with_slack, configure_variant, extract_routes, gaps, rounding_heuristic,
    AvRoutePlan, BuildError, CtspavModel, Gaps, ModelOptions, Variant,
};
use crate::mrea::{enumerate_all, load_omega_cache, save_omega_cache, Omega};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub variant: Variant,
    /// Wall-clock budget for the tree search (and the bound worker).
    pub budget: Option<Duration>,
    /// Deterministic node budget, mostly for tests.
    pub node_budget: Option<usize>,
    /// 1 = fully deterministic single-threaded solve; more threads dedicate
    /// one worker to the bound stream.
    pub threads: usize,
    pub seed: u64,
}

impl Default for SolveRequest {
    fn default() -> Self {
        SolveRequest {
            variant: Variant::Hybrid,
            budget: None,
            node_budget: None,
            threads: 1,
            seed: 0,
        }
    }
}

/// Enumeration and filtering results, reusable across variants.
pub struct Prepared {
    pub omega: Omega,
    pub arcs: ArcSet,
}

pub fn prepare(instance: &Instance, omega_cache: Option<&Path>) -> Prepared {
    let omega = omega_cache
        .and_then(|p| load_omega_cache(p, instance))
        .unwrap_or_else(|| {
            let omega = enumerate_all(instance);
            if let Some(p) = omega_cache {
                let _ = save_omega_cache(p, instance, &omega);
            }
            omega
        });
    let arcs = filter_arcs(&build_pdgraph(instance), instance);
    Prepared { omega, arcs }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("lp kernel: {0}")]
    Lp(#[from] LpError),
    #[error("column generation: {0}")]
    Cg(#[from] crate::darp::CgError),
    #[error("extraction: {0}")]
    Extract(#[from] crate::model::ExtractError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteJson {
    pub mini_routes: Vec<Vec<usize>>,
    pub schedule: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapsJson {
    pub vehicle_count_gap: i64,
    pub optimality_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub variant: String,
    pub status: String,
    pub chi: Option<usize>,
    pub total_distance_m: Option<i64>,
    pub empty_distance_m: Option<i64>,
    pub routes: Vec<RouteJson>,
    pub z_mip: Option<f64>,
    pub z_bb: f64,
    /// Best known fractional lower bound on the vehicle count.
    pub chi_lb: f64,
    pub gaps: Option<GapsJson>,
    pub nodes: usize,
    /// Zero in single-threaded runs so identical runs produce identical
    /// files; real timings live in the logs.
    pub wall_time_s: f64,
    pub instance_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub sigma_ub: i64,
    pub omega_count: usize,
    pub arc_count: usize,
    pub cg_iterations: usize,
}

pub struct SolveRun {
    pub file: SolutionFile,
    pub plan: Option<AvRoutePlan>,
    pub gaps: Option<Gaps>,
    pub cut_pool: Vec<crate::lp::Cut>,
    pub cut_log_csv: String,
    pub cg_log_csv: Option<String>,
    pub solver_log: String,
}

pub fn solve(
    instance: &Instance,
    prepared: &Prepared,
    request: &SolveRequest,
) -> Result<SolveRun, SolveError> {
    let started = Instant::now();
    let config = configure_variant(request.variant);
    let model = build_model(
        instance,
        &prepared.omega,
        &prepared.arcs,
        ModelOptions {
            lifted_mtz: config.lifted_mtz,
            lifted_time_bounds: config.lifted_time_bounds,
        },
    )?;

    let options = BnbOptions {
        budget: Budget {
            wall: request.budget,
            nodes: request.node_budget,
        },
        branch_priority: model.branch_priority.clone(),
        log_nodes: true,
    };

    let chi_bb_cell: Rc<RefCell<f64>> = Rc::new(RefCell::new(0.0));
    let deadline = request.budget.map(|b| started + b);

    let run = if config.darp_bound_feed && request.threads > 1 {
        solve_with_async_bounds(
            instance,
            prepared,
            &model,
            &options,
            request,
            &chi_bb_cell,
            deadline,
        )?
    } else {
        solve_single_thread(
            instance,
            prepared,
            &model,
            &options,
            request,
            &chi_bb_cell,
            config.darp_bound_feed,
        )?
    };
    let (result, cg_info) = run;

    let status = match result.status {
        SearchStatus::Optimal => "optimal",
        SearchStatus::TimeLimit => "time-limit",
        SearchStatus::Infeasible => "infeasible",
    };
    let plan = match &result.incumbent {
        Some(x) => Some(extract_routes(x, &model, instance)?),
        None => None,
    };
    let farley = result.external_bound.unwrap_or(0.0);
    let (chi_lb, z_bb) = if result.status == SearchStatus::Optimal {
        match &plan {
            Some(p) => (p.vehicle_count as f64, result.objective.unwrap()),
            None => (0.0, result.best_bound),
        }
    } else {
        let chi_lb = chi_bb_cell.borrow().max(farley).max(0.0);
        let z_bb = result.best_bound.max(model.fixed_cost as f64 * farley);
        (chi_lb, z_bb)
    };
    let g = gaps(
        plan.as_ref().map(|p| p.vehicle_count),
        chi_lb,
        result.objective,
        z_bb,
    );

    let mut solver_log = String::from("node,depth,objective,best_bound,cuts_added\n");
    for l in &result.node_log {
        solver_log.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            l.node, l.depth, l.objective, l.best_bound, l.cuts_added
        ));
    }
    let mut cut_log_csv = String::from("node,family,set_size,violation,accepted\n");
    for c in &result.cut_log {
        cut_log_csv.push_str(&format!(
            "{},{},{},{:.6},{}\n",
            c.node, c.family, c.set_size, c.violation, c.accepted
        ));
    }

    let routes = plan
        .as_ref()
        .map(|p| {
            p.routes
                .iter()
                .map(|r| RouteJson {
                    mini_routes: r
                        .mini_routes
                        .iter()
                        .map(|m| m.visit_order.clone())
                        .collect(),
                    schedule: r
                        .schedule
                        .start_times
                        .iter()
                        .map(|&(node, t)| (node.to_string(), t))
                        .collect(),
                })
                .collect()
        })
        .unwrap_or_default();

    let wall_time_s = if request.threads <= 1 {
        0.0
    } else {
        started.elapsed().as_secs_f64()
    };
    let file = SolutionFile {
        variant: request.variant.to_string(),
        status: status.to_string(),
        chi: plan.as_ref().map(|p| p.vehicle_count),
        total_distance_m: plan.as_ref().map(|p| p.total_distance),
        empty_distance_m: plan.as_ref().map(|p| p.empty_distance),
        routes,
        z_mip: result.objective,
        z_bb,
        chi_lb,
        gaps: g.map(|g| GapsJson {
            vehicle_count_gap: g.vehicle_count_gap,
            optimality_gap: g.optimality_gap,
        }),
        nodes: result.nodes_explored,
        wall_time_s,
        instance_hash: instance.content_hash(),
        seed: request.seed,
        threads: request.threads,
        sigma_ub: model.sigma_ub,
        omega_count: prepared.omega.len(),
        arc_count: prepared.arcs.len(),
        cg_iterations: cg_info.as_ref().map(|c| c.iterations).unwrap_or(0),
    };
    Ok(SolveRun {
        file,
        plan,
        gaps: g,
        cut_pool: result.cut_pool,
        cut_log_csv,
        cg_log_csv: cg_info.map(|c| c.log_csv),
        solver_log,
    })
}

struct CgInfo {
    iterations: usize,
    log_csv: String,
}

type RunOutput = (crate::lp::SearchResult, Option<CgInfo>);

fn make_separators<'a>(
    model: &'a CtspavModel,
    instance: &'a Instance,
    arcs: &'a ArcSet,
    chi_bb_cell: &Rc<RefCell<f64>>,
    use_external: bool,
    sec: bool,
) -> Vec<Box<dyn Separator + 'a>> {
    let mut seps: Vec<Box<dyn Separator + 'a>> = Vec::new();
    seps.push(Box::new(RoundedVcSeparator::new(
        model,
        instance,
        use_external,
        Rc::clone(chi_bb_cell),
    )));
    if sec {
        seps.push(Box::new(TwoPathSeparator::new(model, instance, arcs)));
        seps.push(Box::new(PredSuccSeparator { model, instance }));
    }
    seps
}

#[allow(clippy::too_many_arguments)]
fn solve_single_thread(
    instance: &Instance,
    prepared: &Prepared,
    model: &CtspavModel,
    options: &BnbOptions,
    request: &SolveRequest,
    chi_bb_cell: &Rc<RefCell<f64>>,
    inline_cg: bool,
) -> Result<RunOutput, SolveError> {
    let config = configure_variant(request.variant);
    // Deterministic single-threaded form of the bound worker: converge the
    // column generation up front (its round count is data-dependent but
    // fixed), then let every poll read the final bound.
    let engine: Option<Rc<RefCell<CgEngine>>> = if inline_cg {
        let mut eng = CgEngine::new(instance, &prepared.arcs)?;
        while !eng.converged && eng.iterations < 500 {
            eng.step()?;
        }
        Some(Rc::new(RefCell::new(eng)))
    } else {
        None
    };
    let feed_engine = engine.clone();
    let bound_feed: Option<Box<dyn FnMut() -> Option<f64>>> = feed_engine.map(|eng| {
        Box::new(move || Some(eng.borrow().z_farley)) as Box<dyn FnMut() -> Option<f64>>
    });
    let omega = &prepared.omega;
    let heuristic = Box::new(move |_: &crate::lp::LinearModel, x: &[f64]| {
        rounding_heuristic(x, model, omega, instance)
    });
    let callbacks = BnbCallbacks {
        separators: make_separators(
            model,
            instance,
            &prepared.arcs,
            chi_bb_cell,
            config.darp_bound_feed,
            config.sec_separators,
        ),
        bound_feed,
        heuristic: Some(heuristic),
    };
    let result = branch_and_cut(&model.lp, callbacks, options)?;
    let cg_info = engine.map(|e| {
        let e = e.borrow();
        CgInfo {
            iterations: e.iterations,
            log_csv: e.log_csv(),
        }
    });
    Ok((result, cg_info))
}

#[allow(clippy::too_many_arguments)]
fn solve_with_async_bounds(
    instance: &Instance,
    prepared: &Prepared,
    model: &CtspavModel,
    options: &BnbOptions,
    request: &SolveRequest,
    chi_bb_cell: &Rc<RefCell<f64>>,
    deadline: Option<Instant>,
) -> Result<RunOutput, SolveError> {
    let config = configure_variant(request.variant);
    let stream = BoundStream::new();
    let stop = AtomicBool::new(false);
    let out: Result<RunOutput, SolveError> = std::thread::scope(|scope| {
        let worker = scope.spawn(|| {
            let mut engine = match CgEngine::new(instance, &prepared.arcs) {
                Ok(e) => e,
                Err(_) => return None,
            };
            let mut last = f64::NEG_INFINITY;
            while !stop.load(Ordering::Acquire) && !engine.converged {
                if deadline.map_or(false, |d| Instant::now() >= d) {
                    break;
                }
                if engine.step().is_err() {
                    break;
                }
                if engine.z_farley > last {
                    stream.publish(engine.z_farley);
                    last = engine.z_farley;
                }
            }
            Some(CgInfo {
                iterations: engine.iterations,
                log_csv: engine.log_csv(),
            })
        });
        let bound_feed: Option<Box<dyn FnMut() -> Option<f64>>> =
            Some(Box::new(|| stream.latest()));
        let omega = &prepared.omega;
        let heuristic = Box::new(move |_: &crate::lp::LinearModel, x: &[f64]| {
            rounding_heuristic(x, model, omega, instance)
        });
        let callbacks = BnbCallbacks {
            separators: make_separators(
                model,
                instance,
                &prepared.arcs,
                chi_bb_cell,
                config.darp_bound_feed,
                config.sec_separators,
            ),
            bound_feed,
            heuristic: Some(heuristic),
        };
        let result = branch_and_cut(&model.lp, callbacks, options);
        stop.store(true, Ordering::Release);
        let cg_info = worker.join().ok().flatten();
        Ok((result?, cg_info))
    });
    out
}

/// Final reported vehicle-count lower bound, rounded.
pub fn rounded_chi_lb(chi_lb: f64) -> i64 {
    ceil_with_slack(chi_lb)
}
