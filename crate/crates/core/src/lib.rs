//! Conversational-data labeling core.
//!
//! * [`config`]: project and code-set documents, parsing and validation
//! * [`rules`]: dependency-rule evaluation over an example's selections
//! * [`wizard`]: yes/no question flows that pick a label
//! * [`store`]: journal-backed projects, progress, View Previous, export
//! * [`metrics`]: Jaccard index and Cohen's kappa between annotators

pub mod clock;
pub mod config;
pub mod fixtures;
pub mod metrics;
pub mod rules;
pub mod store;
pub mod wizard;
