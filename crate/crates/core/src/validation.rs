//! Self-validation: closed forms against independent references.
//!
//! Every check is seeded and iterates in a fixed order, so the printed
//! metrics are identical from run to run. Wall time is kept on the result
//! but left out of [`CheckResult::summary`].

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::charged_atom::{
    axis_eigenstate, charged_solid_angles, detect_dual_cyclicity, dual_alignment_errors, dual_axis_transport,
    dual_closure_at, dual_eigen_residuals, dual_geometric_phase, dual_total_phase_check, extra_terms_prediction,
    general_hamiltonian, spin_half_prediction, ChargedParams, ChargedSystem,
};
use crate::error::Result;
use crate::general_field::{
    alignment_error, closing_axis, closure_at_end, cyclic_geometric_phase, eigen_residual, neutral_hamiltonian,
    total_phase_check, transport_axis, FieldWaveform, HarmonicWaveform, RotatingWaveform, TimeGrid, CLOSURE_TOL,
};
use crate::linalg::{phase_distance, CMatrix, CVector, Vec3};
use crate::neutral_rotating::{
    detect_cyclicity, extra_term_prediction, solid_angle_closed_form, uniform_grid, CyclicInfo, EffectiveFrame,
    MuSign, RotatingFieldParams, RotatingSystem,
};
use crate::oracle::{
    phase_decompose, propagate_operator, solid_angle_quadrature, split_solid_angle_quadrature, timestep_propagate,
};
use crate::spin_algebra::{
    conjugate_direct, conjugate_spin_vector, eigenbasis_along, spin_operators, SpinQuantum, UnitVector3,
};
use crate::sweep::{sweep, Ratio, SweepConfig, SweepKind};

/// Closed-form solid angle under test; replaced by a faulty version in the mutation canary.
pub type SolidAngleFn = fn(&EffectiveFrame, &Vec3, &CyclicInfo, MuSign) -> Result<f64>;

/// One measured quantity and its accepted interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Metric {
    pub fn at_most(name: &'static str, value: f64, hi: f64) -> Self {
        Self { name, value, lo: f64::NEG_INFINITY, hi }
    }

    pub fn within(name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name, value, lo, hi }
    }

    pub fn flag(name: &'static str, ok: bool) -> Self {
        Self { name, value: if ok { 1.0 } else { 0.0 }, lo: 1.0, hi: 1.0 }
    }

    pub fn passed(&self) -> bool {
        self.value >= self.lo && self.value <= self.hi
    }

    fn describe(&self) -> String {
        let bound = match (self.lo.is_finite(), self.hi.is_finite()) {
            _ if self.lo == 1.0 && self.hi == 1.0 => return format!("{}={}", self.name, self.value == 1.0),
            (false, _) => format!("<= {:.1e}", self.hi),
            (true, _) => format!("in [{}, {}]", self.lo, self.hi),
        };
        format!("{}={:.3e} ({bound})", self.name, self.value)
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub metrics: Vec<Metric>,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        !self.metrics.is_empty() && self.metrics.iter().all(Metric::passed)
    }

    pub fn within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.elapsed <= b)
    }

    /// One deterministic line: id, verdict, name and the metrics.
    pub fn summary(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let metrics: Vec<String> = self.metrics.iter().map(Metric::describe).collect();
        format!("[{verdict}] {:>2} {}: {}", self.id, self.name, metrics.join(", "))
    }
}

fn timed(id: u32, name: &'static str, budget: Option<u64>, body: impl FnOnce() -> Vec<Metric>) -> CheckResult {
    let start = Instant::now();
    let metrics = body();
    CheckResult { id, name, metrics, elapsed: start.elapsed(), budget: budget.map(Duration::from_secs) }
}

fn rng_for(seed: u64, check: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(check * 1_000_003 + draw);
    rng
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    let v = CVector::from_iterator(
        dim,
        (0..dim).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))),
    );
    let n = v.norm();
    v.unscale(n)
}

fn random_coefficients(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    random_state(rng, n).iter().copied().collect()
}

fn random_direction(rng: &mut ChaCha8Rng) -> UnitVector3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if let Ok(u) = UnitVector3::normalize(v) {
            return u;
        }
    }
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn failed() -> f64 {
    f64::INFINITY
}

const SPINS: [u32; 5] = [1, 2, 3, 4, 6];

/// Rotated spin vector in closed form against conjugation by the exponential
/// computed from its power series.
pub fn check_conjugation(seed: u64) -> CheckResult {
    timed(1, "rotated spin vector", Some(5), || {
        let errors: Vec<f64> = SPINS
            .par_iter()
            .map(|&two_s| {
                let ops = spin_operators(SpinQuantum::from_two_s(two_s));
                let mut rng = rng_for(seed, 1, two_s as u64);
                let mut err = 0.0f64;
                for _ in 0..100 {
                    let n = random_direction(&mut rng);
                    let phi = rng.random_range(-PI..PI);
                    let u: CMatrix = (ops.dot(&n) * Complex64::new(0.0, phi)).exp();
                    let direct = conjugate_direct(&u, &ops);
                    let closed = conjugate_spin_vector(&ops, &n, phi);
                    for (a, b) in closed.iter().zip(&direct) {
                        err = err.max((a - b).norm());
                    }
                }
                err
            })
            .collect();
        vec![Metric::at_most("max_frobenius_error", worst(errors), 1e-10)]
    })
}

/// Closed-form propagator against time stepping over one field period.
pub fn check_propagator(seed: u64) -> CheckResult {
    timed(2, "propagator vs stepping", Some(30), || {
        let draws: Vec<(f64, f64)> = (0..20u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(seed, 2, k);
                let spin = SpinQuantum::from_two_s(rng.random_range(1..=4));
                let omega = rng.random_range(0.5..2.0);
                let omega_b = omega * rng.random_range(0.1..2.0);
                let theta_b = rng.random_range(0.0..PI);
                let mu = if rng.random_bool(0.5) { MuSign::Positive } else { MuSign::Negative };
                let p = RotatingFieldParams::new(omega_b, omega, theta_b, mu, spin).unwrap();
                let sys = RotatingSystem::new(p);
                let tau = p.tau();
                let closed = sys.evolution_operator(tau, 0.0);
                let h = p.hamiltonian(&sys.ops);
                let fine = propagate_operator(&h, spin.dim(), 1e-4 * tau, tau).map(|u| (u - &closed).norm());
                let coarse = propagate_operator(&h, spin.dim(), 2e-4 * tau, tau).map(|u| (u - &closed).norm());
                match (fine, coarse) {
                    (Ok(f), Ok(c)) => (f, c / f),
                    _ => (failed(), f64::NAN),
                }
            })
            .collect();
        let ratios: Vec<f64> = draws.iter().map(|d| d.1).collect();
        vec![
            Metric::at_most("max_error", worst(draws.iter().map(|d| d.0)), 1e-6),
            Metric::within("min_halving_ratio", ratios.iter().copied().fold(f64::INFINITY, f64::min), 3.5, 4.5),
            Metric::within("max_halving_ratio", worst(ratios.iter().copied()), 3.5, 4.5),
        ]
    })
}

fn pythagorean(spin: SpinQuantum) -> RotatingFieldParams {
    RotatingFieldParams::new(3.0, 4.0, FRAC_PI_2, MuSign::Positive, spin).unwrap()
}

/// Geometric phase of the effective-frame eigenstates at `omega_B = 3`, `omega = 4`, `theta_B = pi/2`.
pub fn check_pythagorean_point(_seed: u64) -> CheckResult {
    timed(3, "frame point (3, 4, pi/2)", None, || {
        let p = pythagorean(SpinQuantum::half());
        let frame_ok = match detect_cyclicity(&p, 1e-9, 64) {
            Ok(info) => {
                info.k == 4 && info.k_s == 5 && (crate::neutral_rotating::effective_frame(&p).omega_s - 5.0).abs() < 1e-12
            }
            Err(_) => false,
        };
        let cases: Vec<(u32, f64)> = [1u32, 2, 3]
            .iter()
            .flat_map(|&two_s| SpinQuantum::from_two_s(two_s).m_values().map(move |m| (two_s, m)))
            .collect();
        let res: Vec<(f64, f64)> = cases
            .par_iter()
            .map(|&(two_s, m_s)| {
                let p = pythagorean(SpinQuantum::from_two_s(two_s));
                let sys = RotatingSystem::new(p);
                let Ok(info) = detect_cyclicity(&p, 1e-9, 64) else { return (failed(), failed()) };
                let psi0 = eigenbasis_along(&sys.ops, &sys.frame.n_s).state(m_s).unwrap();
                let Ok(report) = sys.phase_report(&psi0, &info) else { return (failed(), failed()) };
                let expected = -m_s * 4.0 * TAU * (1.0 - 4.0 / 5.0);
                let h = p.hamiltonian(&sys.ops);
                let prop = timestep_propagate(&h, &psi0, 1e-4 * p.tau(), info.period).unwrap();
                let oracle = phase_decompose(&prop, &h).gamma.map_or(failed(), |g| phase_distance(report.gamma, g));
                (phase_distance(report.gamma, expected), oracle)
            })
            .collect();
        vec![
            Metric::flag("omega_S=5,K=4,K_S=5", frame_ok),
            Metric::at_most("closed_form_error", worst(res.iter().map(|r| r.0)), 1e-9),
            Metric::at_most("oracle_error", worst(res.iter().map(|r| r.1)), 1e-6),
        ]
    })
}

/// Extra-term relation for random superpositions, with the solid angle
/// supplied by `solid_angle`.
pub fn check_extra_term_with(seed: u64, solid_angle: SolidAngleFn) -> CheckResult {
    timed(4, "neutral extra-term relation", None, || {
        let cases: Vec<(u32, u64)> = [2u32, 3].iter().flat_map(|&s| (0..25u64).map(move |k| (s, k))).collect();
        let res: Vec<(f64, f64)> = cases
            .par_iter()
            .map(|&(two_s, k)| {
                let p = pythagorean(SpinQuantum::from_two_s(two_s));
                let sys = RotatingSystem::new(p);
                let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
                let mut rng = rng_for(seed, 4, two_s as u64 * 100 + k);
                let psi0 = random_state(&mut rng, p.spin.dim());
                let Ok(report) = sys.phase_report(&psi0, &info) else { return (failed(), failed()) };
                let omega_v = solid_angle(&sys.frame, &report.v0, &info, p.mu_sign).ok();
                let predicted = extra_term_prediction(omega_v, report.v0.norm(), &p, &info);
                let h = p.hamiltonian(&sys.ops);
                let prop = timestep_propagate(&h, &psi0, 1e-4 * p.tau(), info.period).unwrap();
                let oracle = phase_decompose(&prop, &h).gamma.map_or(failed(), |g| phase_distance(report.gamma, g));
                (phase_distance(report.gamma, predicted), oracle)
            })
            .collect();
        let half: Vec<(f64, f64)> = (0..25u64)
            .into_par_iter()
            .map(|k| {
                let p = pythagorean(SpinQuantum::half());
                let sys = RotatingSystem::new(p);
                let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
                let mut rng = rng_for(seed, 4, 1000 + k);
                let psi0 = random_state(&mut rng, 2);
                let Ok(report) = sys.phase_report(&psi0, &info) else { return (failed(), failed()) };
                let norm_error = (report.v0.norm() - 0.5).abs();
                let omega_v = solid_angle(&sys.frame, &report.v0, &info, p.mu_sign).unwrap_or(f64::NAN);
                (norm_error, phase_distance(report.gamma, -0.5 * omega_v))
            })
            .collect();
        vec![
            Metric::at_most("relation_residual", worst(res.iter().map(|r| r.0)), 1e-6),
            Metric::at_most("oracle_gamma_error", worst(res.iter().map(|r| r.1)), 1e-5),
            Metric::at_most("spin_half_norm_error", worst(half.iter().map(|r| r.0)), 1e-12),
            Metric::at_most("spin_half_gamma_error", worst(half.iter().map(|r| r.1)), 1e-6),
        ]
    })
}

pub fn check_extra_term(seed: u64) -> CheckResult {
    check_extra_term_with(seed, solid_angle_closed_form)
}

/// Cyclic point with `omega_S / omega = k_s / k` at `omega = 1`.
fn cyclic_point(k: u64, k_s: u64, theta_b: f64, mu: MuSign) -> RotatingFieldParams {
    let q = k_s as f64 / k as f64;
    let cb = theta_b.cos();
    let eps = mu.value();
    let omega_b = -eps * cb + (cb * cb - 1.0 + q * q).sqrt();
    RotatingFieldParams::new(omega_b, 1.0, theta_b, mu, SpinQuantum::integer(1)).unwrap()
}

/// Closed-form solid angle against quadrature of sampled traces.
pub fn check_solid_angle(seed: u64) -> CheckResult {
    timed(5, "solid angle vs quadrature", None, || {
        let res: Vec<(f64, f64, bool, bool)> = (0..20u64)
            .into_par_iter()
            .map(|draw| {
                let mut rng = rng_for(seed, 5, draw);
                let k = rng.random_range(1..=3u64);
                let k_s = rng.random_range(k + 1..=3 * k);
                let theta_b = rng.random_range(0.2..PI - 0.2);
                let mu = if rng.random_bool(0.5) { MuSign::Positive } else { MuSign::Negative };
                let p = cyclic_point(k, k_s, theta_b, mu);
                let sys = RotatingSystem::new(p);
                let Ok(info) = detect_cyclicity(&p, 1e-9, 64) else { return (failed(), failed(), false, false) };
                let n = sys.frame.n_s.into_inner();
                let v0 = if draw == 0 {
                    // trace passes 0.02 from the region where the lab pole needs rotating
                    let cos_g = -sys.frame.cos_theta_s + 0.02;
                    let b = sys.frame.basis_for(&Vec3::y());
                    (n * cos_g + b.ex * (1.0 - cos_g * cos_g).sqrt()) * 0.8
                } else {
                    sys.ops.expectation(&random_state(&mut rng, 3))
                };
                let Ok(closed) = solid_angle_closed_form(&sys.frame, &v0, &info, mu) else {
                    return (failed(), failed(), false, false);
                };
                let traj = sys.trajectory(&v0, &uniform_grid(info.period, 20_000 * info.k as usize));
                let split = split_solid_angle_quadrature(&traj, &sys.frame.n_s, p.omega)
                    .map_or(failed(), |q| (q.value - closed).abs());
                let c = v0.dot(&n) / v0.norm();
                let (lab, rotated) = match solid_angle_quadrature(&traj) {
                    Ok(q) => {
                        let diff = q.value - closed;
                        let err = if c + sys.frame.cos_theta_s > 0.0 {
                            diff.abs()
                        } else {
                            let lobes = diff / (2.0 * TAU);
                            (lobes - lobes.round()).abs() * 2.0 * TAU
                        };
                        (err, q.rotated)
                    }
                    Err(_) => (failed(), false),
                };
                (split, lab, rotated, draw == 0)
            })
            .collect();
        let forced_rotated = res.iter().any(|r| r.3 && r.2);
        vec![
            Metric::at_most("split_quadrature_error", worst(res.iter().map(|r| r.0)), 1e-6),
            Metric::at_most("lab_quadrature_error", worst(res.iter().map(|r| r.1)), 1e-6),
            Metric::flag("pole_rotation_exercised", forced_rotated),
        ]
    })
}

struct TransportOutcome {
    eigen: f64,
    alignment: f64,
    gamma_error: f64,
    zero_ok: bool,
}

fn transport_case(field: &dyn FieldWaveform, spin: SpinQuantum, e0: Option<UnitVector3>, horizon: f64, dt: f64) -> TransportOutcome {
    let ops = spin_operators(spin);
    let grid = TimeGrid::from_step(horizon, dt).unwrap();
    let e0 = e0.unwrap_or_else(|| closing_axis(field, &grid, -1.0));
    let axis = transport_axis(field, &e0, &grid);
    let Ok(closure) = closure_at_end(&axis, CLOSURE_TOL) else {
        return TransportOutcome { eigen: failed(), alignment: failed(), gamma_error: failed(), zero_ok: false };
    };
    let h = neutral_hamiltonian(field, &ops);
    let mut out = TransportOutcome { eigen: 0.0, alignment: 0.0, gamma_error: 0.0, zero_ok: spin.is_half_integer() };
    for m_s in spin.m_values() {
        let psi0 = eigenbasis_along(&ops, &e0).state(m_s).unwrap();
        let prop = timestep_propagate(&h, &psi0, grid.dt(), grid.horizon).unwrap();
        out.eigen = out.eigen.max(eigen_residual(&ops, &prop, &axis, m_s).unwrap_or(failed()));
        out.alignment = out.alignment.max(alignment_error(&ops, &prop, &axis, m_s));
        let geo = cyclic_geometric_phase(&axis, &closure, m_s);
        let dec = phase_decompose(&prop, &h);
        let total = total_phase_check(field, &ops, &prop, &axis, &closure, m_s);
        let err = match (dec.gamma, total) {
            (Some(g), Ok(t)) => phase_distance(geo.gamma, g).max(phase_distance(t.gamma, geo.gamma)),
            _ => failed(),
        };
        out.gamma_error = out.gamma_error.max(err);
        if m_s == 0.0 {
            out.zero_ok = geo.gamma == 0.0 && geo.omega_v.is_none();
        }
    }
    out
}

/// Eigen-axis transport for a rotating field and a sign-flipping field.
pub fn check_transport(_seed: u64) -> CheckResult {
    timed(6, "axis transport", None, || {
        let rotating = RotatingWaveform { rate: 3.0, omega: 4.0, theta_b: FRAC_PI_2 };
        let flipping = HarmonicWaveform {
            rate_amplitude: 2.0,
            rate_frequency: 1.0,
            polar_mean: 1.0,
            polar_amplitude: 0.4,
            polar_frequency: 1.0,
            azimuth_rate: 1.0,
            ..Default::default()
        };
        let period = detect_cyclicity(&pythagorean(SpinQuantum::half()), 1e-9, 64).map_or(TAU, |i| i.period);
        let outcomes = [
            transport_case(&rotating, SpinQuantum::from_two_s(3), UnitVector3::new(0.2, -0.5, 0.7).ok(), period, 1e-4 * FRAC_PI_2),
            transport_case(&rotating, SpinQuantum::integer(1), UnitVector3::new(-0.3, 0.1, 0.4).ok(), period, 1e-4 * FRAC_PI_2),
            transport_case(&flipping, SpinQuantum::integer(1), None, TAU, 1e-4 * TAU),
        ];
        let sign_flips = (0..1000).any(|k| flipping.rate(k as f64 * TAU / 1000.0) < 0.0);
        vec![
            Metric::at_most("eigen_residual", worst(outcomes.iter().map(|o| o.eigen)), 1e-5),
            Metric::at_most("alignment_error", worst(outcomes.iter().map(|o| o.alignment)), 1e-6),
            Metric::at_most("gamma_vs_decomposition", worst(outcomes.iter().map(|o| o.gamma_error)), 1e-5),
            Metric::flag("m_s=0_gives_zero_and_undefined", outcomes[1].zero_ok && outcomes[2].zero_ok),
            Metric::flag("field_changes_sign", sign_flips),
        ]
    })
}

/// Frames and eigenstate phase at `omega_B / omega = sqrt(3/2)`, `cos theta_B = sqrt(3) / (2 sqrt(2))`.
pub fn check_double_ratio_point(_seed: u64) -> CheckResult {
    timed(7, "charged frame point", None, || {
        let p = ChargedParams::double_ratio_point(1, SpinQuantum::half());
        let sys = ChargedSystem::new(p);
        let f = sys.frames;
        let rate_error = (f.orbital.omega_s - 1.0).abs().max((f.spin.omega_s - 2.0).abs());
        let tilt_error = (f.orbital.cos_theta_s + 0.25).abs().max((f.spin.cos_theta_s - 0.25).abs());
        let (closed, oracle) = match detect_dual_cyclicity(&p, 1e-9, 64) {
            Ok(info) => {
                let st = sys.effective_eigenstates().into_iter().find(|s| s.m == 1.0 && s.m_s == 0.5).unwrap().state;
                match sys.phase_report(&st, &info) {
                    Ok(r) => {
                        let h = sys.hamiltonian();
                        let prop = timestep_propagate(&h, &st.amplitudes, 1e-4 * p.tau(), info.period).unwrap();
                        let dec = phase_decompose(&prop, &h);
                        (
                            phase_distance(r.gamma, 0.75 * PI),
                            dec.gamma.map_or(failed(), |g| phase_distance(g, r.gamma)),
                        )
                    }
                    Err(_) => (failed(), failed()),
                }
            }
            Err(_) => (failed(), failed()),
        };
        vec![
            Metric::at_most("rate_ratio_error", rate_error, 1e-12),
            Metric::at_most("tilt_cosine_error", tilt_error, 1e-12),
            Metric::at_most("gamma_error", closed, 1e-9),
            Metric::at_most("oracle_error", oracle, 1e-6),
        ]
    })
}

/// Charged extra-term relations for random shell superpositions and the
/// eigenstate reduction.
pub fn check_charged_extra_terms(seed: u64) -> CheckResult {
    timed(8, "charged extra-term relations", None, || {
        let cases: Vec<(u32, u64)> = [1u32, 2].iter().flat_map(|&s| (0..25u64).map(move |k| (s, k))).collect();
        let res: Vec<(f64, f64)> = cases
            .par_iter()
            .map(|&(two_s, k)| {
                let spin = SpinQuantum::from_two_s(two_s);
                let p = ChargedParams::double_ratio_point(1, spin);
                let sys = ChargedSystem::new(p);
                let Ok(info) = detect_dual_cyclicity(&p, 1e-9, 64) else { return (failed(), failed()) };
                let mut rng = rng_for(seed, 8, two_s as u64 * 100 + k);
                let psi = if two_s == 1 {
                    let a = random_coefficients(&mut rng, 3);
                    let b = random_coefficients(&mut rng, 2);
                    sys.superpose_product(&a, &b)
                } else {
                    sys.superpose(&random_coefficients(&mut rng, 9))
                };
                let Ok(psi) = psi else { return (failed(), failed()) };
                let Ok(r) = sys.phase_report(&psi, &info) else { return (failed(), failed()) };
                let relation = if two_s == 1 {
                    let u0 = r.u0.norm();
                    phase_distance(r.gamma, spin_half_prediction(r.omega_u, r.omega_v, u0, &info))
                } else {
                    phase_distance(r.gamma, extra_terms_prediction(r.omega_u, r.omega_v, r.u0.norm(), r.v0.norm(), &p, &info))
                };
                let h = sys.hamiltonian();
                let prop = timestep_propagate(&h, &psi.amplitudes, 1e-4 * p.tau(), info.period).unwrap();
                let oracle = phase_decompose(&prop, &h).gamma.map_or(failed(), |g| phase_distance(g, r.gamma));
                (relation, oracle)
            })
            .collect();
        let eigen: Vec<f64> = [1u32, 2]
            .iter()
            .flat_map(|&two_s| {
                let p = ChargedParams::double_ratio_point(1, SpinQuantum::from_two_s(two_s));
                let sys = ChargedSystem::new(p);
                let info = detect_dual_cyclicity(&p, 1e-9, 64).unwrap();
                sys.effective_eigenstates()
                    .into_iter()
                    .map(|st| {
                        let Ok(r) = sys.phase_report(&st.state, &info) else { return failed() };
                        let (ou, ov) = charged_solid_angles(&sys.frames, &r.u0, &r.v0, &info);
                        let predicted = -st.m.abs() * ou.unwrap_or(0.0) - st.m_s.abs() * ov.unwrap_or(0.0);
                        phase_distance(r.gamma, predicted)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let half = &res[..25];
        let one = &res[25..];
        vec![
            Metric::at_most("spin_half_relation_residual", worst(half.iter().map(|r| r.0)), 1e-6),
            Metric::at_most("spin_one_relation_residual", worst(one.iter().map(|r| r.0)), 1e-6),
            Metric::at_most("oracle_gamma_error", worst(res.iter().map(|r| r.1)), 1e-5),
            Metric::at_most("eigenstate_reduction_error", worst(eigen), 1e-9),
        ]
    })
}

/// Dual-axis transport with the rotating field given as a waveform.
pub fn check_dual_transport(_seed: u64) -> CheckResult {
    timed(9, "dual axis transport", None, || {
        let sys = ChargedSystem::new(ChargedParams::double_ratio_point(1, SpinQuantum::half()));
        let p = sys.params;
        let field = RotatingWaveform { rate: p.omega_b, omega: p.omega, theta_b: p.theta_b };
        let info = detect_dual_cyclicity(&p, 1e-9, 64).unwrap();
        let grid = TimeGrid::from_step(info.period, 1e-4 * p.tau()).unwrap();
        let (d0, e0) = (sys.frames.orbital.n_s, sys.frames.spin.n_s);
        let dual = dual_axis_transport(&field, &d0, &e0, &grid);
        let Ok(closure) = dual_closure_at(&dual, grid.steps, CLOSURE_TOL) else {
            return vec![Metric::flag("axes_close", false)];
        };
        let h = general_hamiltonian(&field, &sys.ops, p.epsilon_nl);
        let states: Vec<_> = sys.effective_eigenstates();
        let res: Vec<(f64, f64, f64, f64)> = states
            .par_iter()
            .map(|st| {
                let (m, m_s) = (st.m, st.m_s);
                let closed = sys.phase_report(&st.state, &info).map(|r| r.gamma).unwrap_or(f64::NAN);
                let geo = dual_geometric_phase(&dual, &closure, m, m_s);
                let psi0 = axis_eigenstate(&sys.ops, &d0, &e0, m, m_s).unwrap();
                let prop = timestep_propagate(&h, &psi0, grid.dt(), grid.horizon).unwrap();
                let (rd, re) = dual_eigen_residuals(&sys.ops, &prop, &dual, m, m_s);
                let (ad, ae) = dual_alignment_errors(&sys.ops, &prop, &dual, m, m_s);
                let total = dual_total_phase_check(&field, &sys.ops, p.epsilon_nl, &prop, &dual, &closure, m, m_s)
                    .map_or(failed(), |t| phase_distance(t.gamma, geo.gamma));
                (phase_distance(geo.gamma, closed), rd.max(re), ad.max(ae), total)
            })
            .collect();
        let at_point = dual_geometric_phase(&dual, &closure, 1.0, 0.5).gamma;
        vec![
            Metric::at_most("gamma_vs_closed_form", worst(res.iter().map(|r| r.0)), 1e-6),
            Metric::at_most("double_ratio_point_gamma_error", phase_distance(at_point, 0.75 * PI), 1e-6),
            Metric::at_most("eigen_residual", worst(res.iter().map(|r| r.1)), 1e-5),
            Metric::at_most("alignment_error", worst(res.iter().map(|r| r.2)), 1e-6),
            Metric::at_most("decomposition_error", worst(res.iter().map(|r| r.3)), 1e-5),
        ]
    })
}

/// The sweep recovers the double-ratio point.
pub fn check_sweep(_seed: u64) -> CheckResult {
    timed(10, "sweep recovery", Some(60), || {
        let cfg = SweepConfig {
            kind: SweepKind::Charged,
            kl_over_k: Some(Ratio::Number(1.0)),
            ks_over_k: Ratio::Number(2.0),
            x_range: [0.05, 3.0],
            theta_range: [0.0, PI],
            cells: [200, 200],
            mu_sign: 1.0,
            tolerance: crate::sweep::DEFAULT_SWEEP_TOL,
        };
        let target = (1.5f64.sqrt(), (3f64.sqrt() / (2.0 * 2f64.sqrt())).acos());
        let distance = match sweep(&cfg) {
            Ok(points) => points
                .iter()
                .map(|p| (p.omega_b_over_omega - target.0).abs().max((p.theta_b - target.1).abs()))
                .fold(f64::INFINITY, f64::min),
            Err(_) => failed(),
        };
        vec![Metric::at_most("distance_to_expected_point", distance, 1e-6)]
    })
}

/// All checks in order.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let checks: [fn(u64) -> CheckResult; 10] = [
        check_conjugation,
        check_propagator,
        check_pythagorean_point,
        check_extra_term,
        check_solid_angle,
        check_transport,
        check_double_ratio_point,
        check_charged_extra_terms,
        check_dual_transport,
        check_sweep,
    ];
    checks.iter().map(|f| f(seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_bounds() {
        assert!(Metric::at_most("a", 1.0, 2.0).passed());
        assert!(!Metric::at_most("a", f64::NAN, 2.0).passed());
        assert!(!Metric::within("a", 5.0, 3.5, 4.5).passed());
        assert!(Metric::flag("a", true).passed());
        assert!(!Metric::flag("a", false).passed());
    }

    #[test]
    fn empty_check_fails() {
        let r = CheckResult { id: 0, name: "x", metrics: vec![], elapsed: Duration::ZERO, budget: None };
        assert!(!r.passed());
    }

    #[test]
    fn cyclic_point_construction() {
        let p = cyclic_point(3, 7, 1.1, MuSign::Negative);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        assert_eq!((info.k, info.k_s), (3, 7));
    }

    #[test]
    fn worst_propagates_nan() {
        assert!(worst([1.0, f64::NAN, 0.5]).is_nan());
        assert_eq!(worst([1.0, 3.0]), 3.0);
    }

    #[test]
    fn conjugation_check_passes() {
        assert!(check_conjugation(0).passed());
    }
}
