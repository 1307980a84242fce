//! Recursive hard-instance distributions for maximum-matching size
//! estimation, exposed through a budgeted adjacency-list query oracle.
//!
//! The library builds pairs of bipartite graph distributions — a YES side
//! with a perfect matching and a NO side whose maximum matching falls short
//! by a guaranteed additive gap — such that the two are hard to tell apart
//! through adjacency-list queries alone. It verifies the gap exactly via
//! maximum-matching certificates, simulates the query game with budgets and
//! transcripts, and measures the structural statistics (discovered core
//! edges, in-degrees, spoiled vertices, black-edge components) that govern
//! how much an algorithm can learn from a bounded number of queries.

#![forbid(unsafe_code)]

pub mod distinguishers;
pub mod exact;
pub mod gadgets;
pub mod instance;
pub mod oracle;
pub mod params;
pub mod seed;
pub mod stats;
pub mod table;

pub use exact::{max_matching, verify_certificate, verify_gap, GapReport, MatchingCertificate};
pub use instance::{assemble, Instance, LevelGraph};
pub use oracle::{open_session, QuerySession, Transcript};
pub use params::{
    derive_paper_params, g, toy_params, validate, Mode, ParamError, ParamSet, Side, ToySpec,
    ValidationReport,
};
pub use table::{DegreeTable, SubsetKind};
