//! The full property-suite battery must pass on a fresh checkout, with the
//! noisy monotonicity check reported as diagnostic-only rather than
//! enforced.

use fpi_bench::verify::run_suites;

#[test]
fn all_suites_pass_on_builtin_instances() {
    let results = run_suites("all").expect("suites run");
    let mut enforced = 0;
    for check in &results {
        println!("{}", check.render());
        if !check.diagnostic_only {
            enforced += 1;
            assert!(check.passed, "enforced check failed: {}", check.render());
        }
    }
    assert!(enforced >= 8, "expected a full battery of enforced checks");
    // The injected-noise monotonicity check exists and never fails the
    // suite.
    assert!(results
        .iter()
        .any(|c| c.name == "monotonicity/sensor-noise-10pct" && c.diagnostic_only));
}
