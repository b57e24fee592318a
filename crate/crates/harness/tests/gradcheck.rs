use tse_harness::gradcheck::run_gradcheck_suite;

#[test]
fn suite_passes_quickly_and_catches_the_fixture() {
    let summary = run_gradcheck_suite().unwrap();
    print!("{}", summary.render());
    assert!(summary.passed());
    assert!(summary.fixture_detected);
    assert!(summary.seconds < 60.0, "{} s", summary.seconds);
    assert_eq!(summary.models.len(), 15);
    assert!(summary.primitives.iter().chain(&summary.models).all(|l| l.worst < 1e-4));
}
