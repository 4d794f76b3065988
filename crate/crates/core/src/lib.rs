//! Worst-case frequency-performance metrics for low-inertia grids and a
//! truthful auction for procuring virtual inertia.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod grid;
pub mod h2;
pub mod market;
pub mod planner;
pub mod report;
pub mod robust;
pub mod sampling;
pub mod scenario;

pub use cost::{CostCurve, Segment};
pub use error::{Error, Result};
pub use grid::{build_grid, Grid, GridSpec, Line};
pub use h2::{BlockWeight, Kappa};
pub use market::{run_auction, run_auction_hard, AuctionForm, AuctionOutcome};
pub use planner::{Agent, Allocation};
pub use report::Report;
pub use robust::{DisturbanceBudget, WorstCase};
pub use scenario::{case_study, parse_scenario, Mode, Scenario};
