//! Shipped example configurations.
//!
//! `grice` labels utterances of a human/chatbot transcript with Relevance,
//! Quantity and Manner (yes/no), plus Topic Change for human turns.
//! `skip-cascade` adds a "Not Applicable" relevance option that fills the
//! other categories with "Skip".

use crate::config::{parse_code_set, parse_project, CodeSetConfig, ProjectConfig};

pub const GRICE_JSON: &str = include_str!("../fixtures/grice.json");
pub const SKIP_CASCADE_JSON: &str = include_str!("../fixtures/skip-cascade.json");
pub const GRICE_PROJECT_JSON: &str = include_str!("../fixtures/grice-project.json");
pub const SAMPLE_TRANSCRIPTS_JSON: &str = include_str!("../fixtures/sample-transcripts.json");

pub fn grice_code_set() -> CodeSetConfig {
    parse_code_set(GRICE_JSON).expect("grice fixture parses")
}

pub fn skip_cascade_code_set() -> CodeSetConfig {
    parse_code_set(SKIP_CASCADE_JSON).expect("skip-cascade fixture parses")
}

/// Two annotators, the grice code set on utterances and a small
/// conversation-level code set.
pub fn grice_project() -> ProjectConfig {
    parse_project(GRICE_PROJECT_JSON).expect("project fixture parses")
}
