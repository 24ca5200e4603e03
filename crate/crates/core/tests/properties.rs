use std::f64::consts::PI;

use proptest::prelude::*;
use spinphase::runner::fmt_num;
use spinphase::scenario::Scenario;
use spinphase::sweep::{charged_ratios, neutral_ratio, sweep, Ratio, SweepConfig, SweepKind};

fn neutral(theta: &str) -> String {
    format!("kind = \"neutral_rotating\"\n[params]\nomega_B = 3.0\nomega = 4.0\n{theta}\nspin = 1\n")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numbers_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let text = fmt_num(x);
        prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn degree_keys_match_radians(deg in 0.0f64..180.0) {
        let a = Scenario::from_toml_str(&neutral(&format!("theta_B_deg = {deg:?}"))).unwrap();
        let b = Scenario::from_toml_str(&neutral(&format!("theta_B = {:?}", deg.to_radians()))).unwrap();
        prop_assert_eq!(a.params.theta_b, b.params.theta_b);
    }

    #[test]
    fn charged_sweep_points_hit_targets(kl in 1u32..6, ks in 1u32..9, k in 1u32..5) {
        let cfg = SweepConfig {
            kind: SweepKind::Charged,
            kl_over_k: Some(Ratio::Text(format!("{kl}/{k}"))),
            ks_over_k: Ratio::Text(format!("{ks}/{k}")),
            x_range: [0.05, 3.0],
            theta_range: [0.0, PI],
            cells: [40, 40],
            mu_sign: 1.0,
            tolerance: 1e-9,
        };
        for p in sweep(&cfg).unwrap() {
            let (a, b) = charged_ratios(p.omega_b_over_omega, p.theta_b);
            prop_assert!((a - kl as f64 / k as f64).abs() < 1e-9);
            prop_assert!((b - ks as f64 / k as f64).abs() < 1e-9);
            prop_assert!(p.theta_b >= 0.0 && p.theta_b <= PI);
        }
    }

    #[test]
    fn neutral_sweep_points_hit_targets(ks in 1u32..9, k in 1u32..5, negative in any::<bool>()) {
        let mu = if negative { -1.0 } else { 1.0 };
        let cfg = SweepConfig {
            kind: SweepKind::Neutral,
            kl_over_k: None,
            ks_over_k: Ratio::Text(format!("{ks}/{k}")),
            x_range: [0.05, 3.0],
            theta_range: [0.0, PI],
            cells: [60, 12],
            mu_sign: mu,
            tolerance: 1e-9,
        };
        for p in sweep(&cfg).unwrap() {
            prop_assert!((neutral_ratio(p.omega_b_over_omega, p.theta_b, mu) - ks as f64 / k as f64).abs() < 1e-9);
        }
    }
}
