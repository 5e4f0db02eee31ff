//! Design-time configuration for TSN-based fog platforms.
//!
//! The crate turns a declarative [`scenario`] into verified artifacts:
//! gate-control-list network schedules ([`gclsched`]), per-node partition
//! and task schedules ([`nodesched`]), extensibility-optimized schedules with
//! runtime admission of dynamic tasks ([`extensibility`]) and a TESLA
//! authentication overlay ([`teslasec`]). [`pipeline`] chains the stages and
//! [`gantt`] renders the results.

pub mod extensibility;
pub mod gantt;
pub mod gclsched;
pub mod netmodel;
pub mod nodesched;
pub mod pipeline;
pub mod scenario;
pub mod teslasec;
pub mod time;

pub use time::Time;
