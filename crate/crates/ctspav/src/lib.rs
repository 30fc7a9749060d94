//! Exact optimization of shared commuting with autonomous vehicles.
//!
//! The library covers the full pipeline: clustering commuters into
//! neighborhoods, enumerating feasible mini routes, filtering the
//! pickup/delivery graph, building and solving the chaining MIP by branch
//! and cut with several families of valid inequalities, streaming
//! vehicle-count lower bounds from a set-covering relaxation solved by
//! column generation, and case-study analytics over the solved plans.

pub mod analytics;
pub mod clustering;
pub mod cuts;
pub mod darp;
pub mod feasibility;
pub mod filter;
pub mod generator;
pub mod hash;
pub mod instance;
pub mod lp;
pub mod model;
pub mod mrea;
pub mod runner;
