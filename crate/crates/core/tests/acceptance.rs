//! One PASS/FAIL line per acceptance criterion. Time limits and case
//! counts are pinned in `slrkit::suite`.

use slrkit::suite::{run_criterion, CRITERIA};

fn main() {
    let mut failed = Vec::new();
    for id in CRITERIA {
        let report = run_criterion(id).expect("known criterion");
        println!("{report}");
        if !report.passed {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
