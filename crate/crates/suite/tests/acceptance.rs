//! Runs every acceptance criterion at full scale and prints one PASS/FAIL
//! line per criterion. Set `RSL_ACCEPTANCE_FAST=1` for the reduced suite.

use rslab::verify::{run_one, CRITERIA};

#[test]
fn acceptance() {
    let fast = std::env::var("RSL_ACCEPTANCE_FAST").is_ok_and(|v| v == "1");
    let work = tempfile::tempdir().unwrap();
    let mut failed = Vec::new();
    for &(id, name, _) in CRITERIA {
        let o = run_one(id, fast, work.path());
        println!("{}", o.line());
        if !o.pass {
            failed.push(format!("{id} ({name})"));
        }
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
