//! Adaptive token allocation for per-target I/O bandwidth control.
//!
//! The crate is organised bottom-up:
//!
//! - [`allocation`]: the pure three-phase allocator (priority allocation,
//!   surplus redistribution, re-compensation of lent tokens) with
//!   remainder-carrying integer apportionment.
//! - [`ledger`]: per-job records and the per-interval demand tracker.
//! - [`tbf`]: a simulated token-bucket-filter RPC scheduler for one storage
//!   target.
//! - [`workload`]: seedable synthetic job generators and builtin scenarios.
//! - [`sim`]: the virtual-time engine that wires everything together, plus
//!   run comparison and allocator benchmarking.

pub mod allocation;
pub mod error;
pub mod ledger;
pub mod scenario;
pub mod sim;
pub mod tbf;
pub mod workload;

mod job;
mod time;

pub use error::{AllocationError, LedgerError, ScenarioError, SimError};
pub use job::JobId;
pub use time::SimTime;

/// Exact rational used for every intra-step quantity of the allocator.
pub type Rational = num_rational::BigRational;
