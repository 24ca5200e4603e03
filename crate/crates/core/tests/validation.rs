use spinphase::neutral_rotating::solid_angle_closed_form;
use spinphase::validation::{check_extra_term, check_extra_term_with, check_solid_angle, run_all};

#[test]
fn flipped_solid_angle_sign_is_caught() {
    let clean = check_extra_term(0);
    assert!(clean.passed(), "{}", clean.summary());
    let mutated = check_extra_term_with(0, |f, v, i, m| solid_angle_closed_form(f, v, i, m).map(|x| -x));
    assert!(!mutated.passed(), "{}", mutated.summary());
}

#[test]
fn validation_is_deterministic_and_passes() {
    let first: Vec<String> = run_all(0).iter().map(|r| r.summary()).collect();
    let second: Vec<String> = run_all(0).iter().map(|r| r.summary()).collect();
    assert_eq!(first, second);
    assert_eq!(first.len(), 10);
    for line in &first {
        assert!(line.starts_with("[PASS]"), "{line}");
    }
}

#[test]
fn other_seeds_pass() {
    for seed in [1, 7] {
        let r = check_solid_angle(seed);
        assert!(r.passed(), "{}", r.summary());
    }
}
