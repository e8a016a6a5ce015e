//! Decentralized empirical-likelihood inference.
//!
//! Each node of a connected communication graph holds a private block of
//! observations. The pooled EL Lagrange multiplier is recovered by two
//! ADMM schemes that only exchange messages between neighbors:
//!
//! - [`pcm`]: pairwise copies per edge, closed-form edge step, Newton node step;
//! - [`maom`]: one difference variable per edge and a linearized node step
//!   that is a single r×r solve.
//!
//! [`netsim`] runs either scheme as message-passing node actors and
//! certifies that every exchange crossed a graph edge.

pub mod admm;
pub mod chisq;
pub mod config;
pub mod data;
pub mod el;
pub mod error;
pub mod estfun;
pub mod experiments;
pub mod graph;
pub mod ingest;
pub mod interval;
pub mod maom;
pub mod netsim;
pub mod pcm;

pub use admm::{Algorithm, EtaRule, Problem, RunReport, SolverConfig};
pub use el::{el_statistic, log_star, solve_reference, NodeDataset, Scores};
pub use error::{Error, Result};
pub use estfun::EstimatingFunction;
pub use graph::{gen_erdos_renyi, Graph, IncidenceView};
