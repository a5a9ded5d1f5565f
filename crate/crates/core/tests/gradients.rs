use gap_core::gradsuite::{check_component, COMPONENTS};

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

#[test]
fn every_component_matches_central_differences() {
    for name in COMPONENTS {
        let e = check_component(name, 20, 11, H).unwrap();
        assert_eq!(e.draws, 20);
        assert!(e.report.checked > 0, "{name} checked nothing");
        assert!(e.passes(TOL), "{name}: {:?}", e.report);
    }
}

#[test]
fn suite_is_reproducible() {
    let a = check_component("lstm", 3, 5, H).unwrap();
    let b = check_component("lstm", 3, 5, H).unwrap();
    assert_eq!(a, b);
}
