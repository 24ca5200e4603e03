//! Shared fixtures for the benchmarks in `benches/`.

use std::f64::consts::{FRAC_PI_2, PI};

use spinphase::neutral_rotating::{MuSign, RotatingFieldParams};
use spinphase::sweep::{Ratio, SweepConfig, SweepKind};
use spinphase::SpinQuantum;

/// Field with `omega_B = 3`, `omega = 4`, `theta_B = pi/2`.
pub fn pythagorean(spin: SpinQuantum) -> RotatingFieldParams {
    RotatingFieldParams::new(3.0, 4.0, FRAC_PI_2, MuSign::Positive, spin).expect("valid parameters")
}

/// Charged sweep for `KL/K = 1`, `KS/K = 2` on a `cells x cells` grid.
pub fn double_ratio_sweep(cells: usize) -> SweepConfig {
    SweepConfig {
        kind: SweepKind::Charged,
        kl_over_k: Some(Ratio::Number(1.0)),
        ks_over_k: Ratio::Number(2.0),
        x_range: [0.05, 3.0],
        theta_range: [0.0, PI],
        cells: [cells, cells],
        mu_sign: 1.0,
        tolerance: 1e-9,
    }
}
