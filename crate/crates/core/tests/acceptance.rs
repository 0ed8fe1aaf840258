//! Runs every acceptance criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion.

use crep::verify::{run_suite, Suite, VerifyOptions};

#[test]
fn acceptance_suite() {
    let opts = VerifyOptions {
        suite: Suite::Full,
        ..VerifyOptions::default()
    };
    let results = run_suite(&opts);
    assert_eq!(results.len(), 10);
    for r in &results {
        println!("{}", r.summary_line());
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");

    let closed_form = &results[0];
    assert!(
        closed_form.seconds <= 60.0,
        "closed-form check took {:.1}s",
        closed_form.seconds
    );
}

#[test]
fn injected_fault_fails_the_suite() {
    let opts = VerifyOptions {
        suite: Suite::Quick,
        inject_fault: true,
        ..VerifyOptions::default()
    };
    let results = run_suite(&opts);
    for r in &results {
        println!("{}", r.summary_line());
    }
    assert!(results.iter().any(|r| !r.passed));
}
