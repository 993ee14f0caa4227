//! Static analysis of role-based access control in screen-flow applications.
//!
//! A *factory* is a set of applications described by modules, screens
//! (entrypoints guarded by role lists), actions (callable subroutines), and
//! entities (data tables). Screens and actions carry small control-flow
//! graphs whose nodes may call actions, read or write entities, grant or
//! revoke roles, or branch on conditions that can test role membership.
//!
//! Given a factory and an access policy (per-entity read/write role lists),
//! the analysis answers: *can a user admitted under a role outside the
//! policy reach a data access on that entity?* It proceeds in two stages:
//!
//! 1. [`candidates`] walks the call graph ([`callgraph`]) and collects
//!    every entrypoint/entity/mode triple where an under-restricted screen
//!    can syntactically reach an access, together with the call paths.
//! 2. [`roleflow`] runs a summary-based interprocedural traversal over the
//!    control-flow graphs, tracking which roles a user *has* certainly and
//!    *may* possibly hold, pruning branches whose role checks contradict
//!    the state. Candidates whose every path is refuted disappear; the
//!    rest become findings with witness traces.
//!
//! [`report`] renders findings as deterministic JSON or a self-contained
//! HTML page, [`generator`] produces synthetic factories (including the
//! bundled law-firm example and a large benchmark preset), and the
//! `rolescan` binary wires everything behind `validate`, `analyze`, and
//! `gen` subcommands.
//!
//! Outputs are byte-deterministic: the same factory, policy, and options
//! produce identical bytes regardless of thread count.

pub mod callgraph;
pub mod candidates;
pub mod generator;
pub mod index;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod roleflow;
pub mod roles;

pub use index::{index_factory, FactoryIndex};
pub use ingest::{parse_factory, parse_policy, serialize_factory, ParseError, Policy, PolicyRule};
pub use model::{validate_factory, Factory, Severity, Violation};
