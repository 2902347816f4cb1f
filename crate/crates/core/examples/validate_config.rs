//! Validates a code set or project file and prints one line per finding.
//!
//! ```text
//! cargo run -p cal-core --example validate_config -- path/to/code-set.json
//! ```
//! Without an argument, a deliberately broken copy of the skip-cascade
//! fixture is checked.

use cal_core::config::{self, check_code_set, parse_code_set};
use cal_core::fixtures;

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).expect("readable file"),
        None => fixtures::SKIP_CASCADE_JSON.replace("\"category_id\": \"manner\"", "\"category_id\": \"mannr\""),
    };
    let report = if text.contains("\"code_sets\"") {
        config::parse_project(&text).map(|p| config::validate_project(&p))
    } else {
        parse_code_set(&text).map(|cs| check_code_set(&cs))
    };
    match report {
        Err(e) => {
            println!("ERROR {}: {e}", e.path());
            std::process::exit(1);
        }
        Ok(report) if report.is_empty() => println!("ok"),
        Ok(report) => {
            for line in report.lines() {
                println!("{line}");
            }
            if !report.is_ok() {
                std::process::exit(1);
            }
        }
    }
}
