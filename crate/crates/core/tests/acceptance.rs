//! Acceptance gate: every criterion of the suite must pass. One verdict
//! line is printed per criterion (visible with `--nocapture` or on
//! failure).

use heatlab::acceptance;

#[test]
fn acceptance_suite_passes() {
    let results = acceptance::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.line())
        .collect();
    assert!(
        failed.is_empty(),
        "failed criteria:\n{}",
        failed.join("\n")
    );
}
