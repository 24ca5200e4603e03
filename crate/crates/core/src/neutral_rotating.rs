//! Spin-s neutral particle in a magnetic field rotating about `z`.
//!
//! The Hamiltonian is `H(t) = -eps * omega_B * s.n(t)` with
//! `n(t) = (sin th_B cos wt, sin th_B sin wt, cos th_B)`. A unitary change of
//! frame removes the time dependence, so the propagator, mean-spin trajectory
//! and all cyclic phases have closed forms.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::linalg::{wrap_phase, CMatrix, CVector, Vec3};
use crate::rational::rational_approximation;
use crate::spin_algebra::{exp_spin, exp_sz, spin_operators, SpinOps, SpinQuantum, UnitVector3};

/// Default tolerance on `|omega_S/omega - K_S/K|`.
pub const DEFAULT_CYCLIC_TOL: f64 = 1e-9;
/// Default bound on the denominator `K`.
pub const DEFAULT_K_MAX: u64 = 64;
/// Closed-form runs must return to the initial ray at least this well.
pub const CLOSED_FORM_FIDELITY: f64 = 1.0 - 1e-9;

/// Sign of the magnetic moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuSign {
    Positive,
    Negative,
}

impl MuSign {
    pub fn value(self) -> f64 {
        match self {
            MuSign::Positive => 1.0,
            MuSign::Negative => -1.0,
        }
    }

    pub fn from_sign(x: f64) -> Result<Self> {
        if x == 1.0 {
            Ok(MuSign::Positive)
        } else if x == -1.0 {
            Ok(MuSign::Negative)
        } else {
            Err(PhaseError::InvalidParameter(format!("mu_sign must be +1 or -1, got {x}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingFieldParams {
    /// Precession rate `|mu| B / s`, positive.
    pub omega_b: f64,
    /// Rotation rate of the field about `z`, positive.
    pub omega: f64,
    /// Cone angle of the field.
    pub theta_b: f64,
    pub mu_sign: MuSign,
    pub spin: SpinQuantum,
}

impl RotatingFieldParams {
    pub fn new(omega_b: f64, omega: f64, theta_b: f64, mu_sign: MuSign, spin: SpinQuantum) -> Result<Self> {
        if !(omega_b > 0.0 && omega_b.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("omega_B must be positive, got {omega_b}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if !(0.0..=PI).contains(&theta_b) {
            return Err(PhaseError::InvalidParameter(format!("theta_B must lie in [0, pi], got {theta_b}")));
        }
        Ok(Self { omega_b, omega, theta_b, mu_sign, spin })
    }

    /// Field rotation period `2 pi / omega`.
    pub fn tau(&self) -> f64 {
        TAU / self.omega
    }

    pub fn field_direction(&self, t: f64) -> Vec3 {
        let (sb, cb) = self.theta_b.sin_cos();
        let (sw, cw) = (self.omega * t).sin_cos();
        Vec3::new(sb * cw, sb * sw, cb)
    }

    /// `H(t) = -eps omega_B s.n(t)` as a sampler for the oracle.
    pub fn hamiltonian<'a>(&'a self, ops: &'a SpinOps) -> impl Fn(f64) -> CMatrix + Sync + 'a {
        let k = -self.mu_sign.value() * self.omega_b;
        move |t| ops.dot(&self.field_direction(t)) * crate::linalg::c(k)
    }
}

/// Precession axis and rate in the co-rotating frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveFrame {
    pub omega_s: f64,
    pub theta_s: f64,
    pub sin_theta_s: f64,
    pub cos_theta_s: f64,
    pub n_s: UnitVector3,
    /// The precession rate vanished and `n_s` was set to `z`.
    pub degenerate: bool,
}

/// Right-handed triple adapted to `v0` and the precession axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecessionBasis {
    pub ex: Vec3,
    pub ey: Vec3,
    pub ez: Vec3,
    pub v0_perp: f64,
    pub v0_parallel: f64,
}

impl EffectiveFrame {
    /// Frame of the vector `a * omega_B * n(0) + b * omega * z`.
    pub(crate) fn from_components(omega_b: f64, omega: f64, theta_b: f64, a: f64, b: f64) -> Self {
        let (sb, cb) = theta_b.sin_cos();
        let x = a * omega_b * sb;
        let z = a * omega_b * cb + b * omega;
        let omega_s = x.hypot(z);
        let scale = (a.abs() * omega_b).max(b.abs() * omega);
        if omega_s < 1e-12 * scale {
            return Self {
                omega_s,
                theta_s: 0.0,
                sin_theta_s: 0.0,
                cos_theta_s: 1.0,
                n_s: UnitVector3::z_axis(),
                degenerate: true,
            };
        }
        let (sin_theta_s, cos_theta_s) = (x / omega_s, z / omega_s);
        Self {
            omega_s,
            theta_s: sin_theta_s.atan2(cos_theta_s),
            sin_theta_s,
            cos_theta_s,
            n_s: UnitVector3::new_unchecked(Vec3::new(sin_theta_s, 0.0, cos_theta_s)),
            degenerate: false,
        }
    }

    /// Basis `(e_x, e_y, e_z)` with `e_z = n_S` and `v0` in the `x-z` half plane.
    pub fn basis_for(&self, v0: &Vec3) -> PrecessionBasis {
        let n = self.n_s.into_inner();
        let v0_parallel = v0.dot(&n);
        let perp = v0 - n * v0_parallel;
        let v0_perp = perp.norm();
        let (ex, ey) = if v0_perp > 1e-14 * v0.norm().max(1.0) {
            (perp / v0_perp, n.cross(v0) / v0_perp)
        } else {
            let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let ex = (seed - n * seed.dot(&n)).normalize();
            (ex, n.cross(&ex))
        };
        PrecessionBasis { ex, ey, ez: n, v0_perp, v0_parallel }
    }
}

pub fn effective_frame(p: &RotatingFieldParams) -> EffectiveFrame {
    EffectiveFrame::from_components(p.omega_b, p.omega, p.theta_b, 1.0, p.mu_sign.value())
}

/// `[v0 - (v0.n)n] cos a + (n x v0) sin a + (v0.n)n`, a right-handed rotation of `v0` by `a`.
pub(crate) fn precess(v0: &Vec3, n: &Vec3, angle: f64) -> Vec3 {
    let par = v0.dot(n);
    let (s, co) = angle.sin_cos();
    (v0 - n * par) * co + n.cross(v0) * s + n * par
}

/// Rotation of `g` about `z` by `angle`.
pub(crate) fn corotate(g: &Vec3, angle: f64) -> Vec3 {
    let (s, co) = angle.sin_cos();
    Vec3::new(g.x * co - g.y * s, g.x * s + g.y * co, g.z)
}

/// Closed-form system: operators and frame built once.
#[derive(Debug, Clone)]
pub struct RotatingSystem {
    pub params: RotatingFieldParams,
    pub ops: SpinOps,
    pub frame: EffectiveFrame,
}

impl RotatingSystem {
    pub fn new(params: RotatingFieldParams) -> Self {
        Self { ops: spin_operators(params.spin), frame: effective_frame(&params), params }
    }

    /// `U(t, t0) = exp(-i w t s_z) exp(i eps omega_S (t - t0) s.n_S) exp(i w t0 s_z)`.
    pub fn evolution_operator(&self, t: f64, t0: f64) -> CMatrix {
        let p = &self.params;
        let eff = exp_spin(&self.ops, &self.frame.n_s, p.mu_sign.value() * self.frame.omega_s * (t - t0)).entries;
        exp_sz(p.spin, p.omega * t) * eff * exp_sz(p.spin, -p.omega * t0)
    }

    pub fn evolve(&self, psi0: &CVector, t: f64) -> CVector {
        self.evolution_operator(t, 0.0) * psi0
    }

    /// Co-rotating vector `g(t)` for a given `v0`.
    pub fn g_vector(&self, v0: &Vec3, t: f64) -> Vec3 {
        let angle = -self.params.mu_sign.value() * self.frame.omega_s * t;
        precess(v0, &self.frame.n_s, angle)
    }

    pub fn mean_spin(&self, v0: &Vec3, t: f64) -> Vec3 {
        corotate(&self.g_vector(v0, t), self.params.omega * t)
    }
}

pub fn evolution_operator(p: &RotatingFieldParams, t: f64, t0: f64) -> CMatrix {
    RotatingSystem::new(*p).evolution_operator(t, t0)
}

/// Sampled mean-vector trace and its co-rotating counterpart.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub vectors: Vec<Vec3>,
    pub g_vectors: Vec<Vec3>,
}

impl Trajectory {
    /// Builds `g(t) = R_z(-omega t) v(t)` from lab-frame samples.
    pub fn from_lab_samples(times: Vec<f64>, vectors: Vec<Vec3>, omega: f64) -> Self {
        let g_vectors = times.iter().zip(&vectors).map(|(&t, v)| corotate(v, -omega * t)).collect();
        Self { times, vectors, g_vectors }
    }

    /// Largest deviation of `|v(t_k)|` from `|v(0)|`.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.vectors.first().map_or(0.0, |v| v.norm());
        self.vectors.iter().map(|v| (v.norm() - n0).abs()).fold(0.0, f64::max)
    }

    /// Uniform sample spacing.
    pub fn dt(&self) -> f64 {
        match self.times.len() {
            0 | 1 => 0.0,
            n => (self.times[n - 1] - self.times[0]) / (n - 1) as f64,
        }
    }
}

pub fn mean_spin_trajectory(p: &RotatingFieldParams, psi0: &CVector, times: &[f64]) -> Result<Trajectory> {
    let sys = RotatingSystem::new(*p);
    check_state(psi0, sys.ops.dim())?;
    let v0 = sys.ops.expectation(psi0);
    Ok(sys.trajectory(&v0, times))
}

impl RotatingSystem {
    pub fn trajectory(&self, v0: &Vec3, times: &[f64]) -> Trajectory {
        let g_vectors: Vec<Vec3> = times.iter().map(|&t| self.g_vector(v0, t)).collect();
        let vectors = times.iter().zip(&g_vectors).map(|(&t, g)| corotate(g, self.params.omega * t)).collect();
        Trajectory { times: times.to_vec(), vectors, g_vectors }
    }
}

pub(crate) fn check_state(psi: &CVector, dim: usize) -> Result<()> {
    if psi.len() != dim {
        return Err(PhaseError::DimensionMismatch { expected: dim, got: psi.len() });
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(PhaseError::NotNormalized(norm));
    }
    Ok(())
}

/// `K` rotations of the field and `K_S` precessions per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CyclicInfo {
    pub k: u64,
    pub k_s: u64,
    pub period: f64,
    pub ratio_residual: f64,
}

pub fn detect_cyclicity(p: &RotatingFieldParams, tol: f64, k_max: u64) -> Result<CyclicInfo> {
    cyclicity_of(&effective_frame(p), p.omega, tol, k_max)
}

pub(crate) fn cyclicity_of(frame: &EffectiveFrame, omega: f64, tol: f64, k_max: u64) -> Result<CyclicInfo> {
    if !(tol > 0.0) || k_max == 0 {
        return Err(PhaseError::InvalidParameter("cyclicity search needs tol > 0 and k_max >= 1".into()));
    }
    let ratio = frame.omega_s / omega;
    let f = rational_approximation(ratio, tol, k_max).ok_or(PhaseError::NotCyclic { ratio, tol, k_max })?;
    Ok(CyclicInfo {
        k: f.denom,
        k_s: f.numer,
        period: f.denom as f64 * TAU / omega,
        ratio_residual: (ratio - f.value()).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseReport {
    /// Total phase in `(-pi, pi]`.
    pub delta: f64,
    /// Dynamic phase, unreduced.
    pub beta: f64,
    /// Geometric phase in `(-pi, pi]`.
    pub gamma: f64,
    /// Unreduced solid angle of the mean-spin trace; `None` when `v0 = 0`.
    pub omega_v: Option<f64>,
    pub cyclic_fidelity: f64,
    /// `arg <psi(0)|psi(T)>` from the propagator.
    pub overlap_phase: f64,
    pub relation_residual: f64,
    #[serde(skip)]
    pub v0: Vec3,
    pub info: CyclicInfo,
}

/// Phase report with default cyclicity detection.
pub fn phase_report(p: &RotatingFieldParams, psi0: &CVector) -> Result<PhaseReport> {
    let info = detect_cyclicity(p, DEFAULT_CYCLIC_TOL, DEFAULT_K_MAX)?;
    RotatingSystem::new(*p).phase_report(psi0, &info)
}

impl RotatingSystem {
    pub fn total_phase(&self, info: &CyclicInfo) -> f64 {
        let eps = self.params.mu_sign.value();
        wrap_phase(self.params.spin.value() * (eps * TAU * info.k_s as f64 - TAU * info.k as f64))
    }

    pub fn dynamic_phase(&self, v0: &Vec3, info: &CyclicInfo) -> f64 {
        let eps = self.params.mu_sign.value();
        let par = v0.dot(&self.frame.n_s);
        eps * TAU * info.k_s as f64 * par - TAU * info.k as f64 * self.frame.cos_theta_s * par
    }

    pub fn phase_report(&self, psi0: &CVector, info: &CyclicInfo) -> Result<PhaseReport> {
        check_state(psi0, self.ops.dim())?;
        let overlap = psi0.dotc(&self.evolve(psi0, info.period));
        let cyclic_fidelity = overlap.norm();
        if cyclic_fidelity < CLOSED_FORM_FIDELITY {
            return Err(PhaseError::FidelityFailure(cyclic_fidelity));
        }
        let delta = self.total_phase(info);
        let overlap_phase = overlap.arg();
        let v0 = self.ops.expectation(psi0);
        let beta = self.dynamic_phase(&v0, info);
        let gamma = wrap_phase(delta - beta);
        let omega_v = solid_angle_closed_form(&self.frame, &v0, info, self.params.mu_sign).ok();
        let mut report = PhaseReport {
            delta,
            beta,
            gamma,
            omega_v,
            cyclic_fidelity,
            overlap_phase,
            relation_residual: 0.0,
            v0,
            info: *info,
        };
        report.relation_residual = extra_term_residual(&report, &self.params, info);
        Ok(report)
    }
}

/// Unreduced solid angle of the mean-spin trace over one cycle.
pub fn solid_angle_closed_form(frame: &EffectiveFrame, v0: &Vec3, info: &CyclicInfo, mu_sign: MuSign) -> Result<f64> {
    let norm = v0.norm();
    if norm < 1e-12 {
        return Err(PhaseError::UndefinedSolidAngle);
    }
    let c = v0.dot(&frame.n_s) / norm;
    let eps = mu_sign.value();
    Ok(-eps * TAU * info.k_s as f64 * (1.0 - c) + TAU * info.k as f64 * (1.0 - frame.cos_theta_s * c))
}

/// Right-hand side of the extra-term relation for the neutral particle.
pub fn extra_term_prediction(omega_v: Option<f64>, v0_norm: f64, p: &RotatingFieldParams, info: &CyclicInfo) -> f64 {
    let eps = p.mu_sign.value();
    let winding = eps * TAU * info.k_s as f64 - TAU * info.k as f64;
    -v0_norm * omega_v.unwrap_or(0.0) + (p.spin.value() - v0_norm) * winding
}

/// Distance mod `2 pi` between `gamma` and `-|v0| Omega_v + (s - |v0|) (eps 2pi K_S - 2pi K)`.
pub fn extra_term_residual(report: &PhaseReport, p: &RotatingFieldParams, info: &CyclicInfo) -> f64 {
    let predicted = extra_term_prediction(report.omega_v, report.v0.norm(), p, info);
    crate::linalg::phase_distance(report.gamma, predicted)
}

/// Reduces an unreduced solid angle to `(-2 pi, 2 pi]`.
pub fn reduce_solid_angle(omega: f64) -> f64 {
    let mut r = omega.rem_euclid(2.0 * TAU);
    if r > TAU {
        r -= 2.0 * TAU;
    }
    r
}

/// Uniform grid of `n + 1` samples on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, unitarity_defect};
    use crate::oracle::{phase_decompose, propagate_operator, timestep_propagate};
    use crate::spin_algebra::eigenbasis_along;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pythagorean(spin: SpinQuantum) -> RotatingFieldParams {
        RotatingFieldParams::new(3.0, 4.0, PI / 2.0, MuSign::Positive, spin).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
        let v = CVector::from_iterator(dim, (0..dim).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
        let n = v.norm();
        v / Complex64::new(n, 0.0)
    }

    #[test]
    fn pythagorean_frame() {
        let f = effective_frame(&pythagorean(SpinQuantum::half()));
        assert!((f.omega_s - 5.0).abs() < 1e-12);
        assert!((f.sin_theta_s - 0.6).abs() < 1e-12);
        assert!((f.cos_theta_s - 0.8).abs() < 1e-12);
        assert!(!f.degenerate);
    }

    #[test]
    fn collinear_and_degenerate_frames() {
        let p = RotatingFieldParams::new(2.0, 3.0, 0.0, MuSign::Positive, SpinQuantum::half()).unwrap();
        let f = effective_frame(&p);
        assert!((f.omega_s - 5.0).abs() < 1e-12 && f.theta_s.abs() < 1e-12);
        let p = RotatingFieldParams::new(2.0, 2.0, PI, MuSign::Positive, SpinQuantum::half()).unwrap();
        let f = effective_frame(&p);
        assert!(f.degenerate);
        assert_eq!(f.n_s.into_inner(), Vec3::z());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(RotatingFieldParams::new(0.0, 1.0, 0.3, MuSign::Positive, SpinQuantum::half()).is_err());
        assert!(RotatingFieldParams::new(1.0, -1.0, 0.3, MuSign::Positive, SpinQuantum::half()).is_err());
        assert!(RotatingFieldParams::new(1.0, 1.0, 4.0, MuSign::Positive, SpinQuantum::half()).is_err());
    }

    #[test]
    fn basis_is_right_handed() {
        let f = effective_frame(&pythagorean(SpinQuantum::integer(1)));
        let v0 = Vec3::new(0.2, -0.4, 0.3);
        let b = f.basis_for(&v0);
        assert!((b.ex.cross(&b.ey) - b.ez).norm() < 1e-12);
        assert!((b.v0_perp.powi(2) + b.v0_parallel.powi(2) - v0.norm_squared()).abs() < 1e-12);
        let b = f.basis_for(&(f.n_s.into_inner() * 0.5));
        assert!((b.ex.cross(&b.ey) - b.ez).norm() < 1e-12);
        assert_eq!(b.v0_perp, 0.0);
    }

    #[test]
    fn g_vector_matches_basis_form() {
        let sys = RotatingSystem::new(pythagorean(SpinQuantum::integer(1)));
        let v0 = Vec3::new(0.2, -0.4, 0.3);
        let b = sys.frame.basis_for(&v0);
        for &t in &[0.0, 0.3, 1.7] {
            let a = sys.frame.omega_s * t;
            let expect = b.ex * (b.v0_perp * a.cos()) - b.ey * (b.v0_perp * a.sin()) + b.ez * b.v0_parallel;
            assert!((sys.g_vector(&v0, t) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn propagator_identity_and_unitarity() {
        let sys = RotatingSystem::new(RotatingFieldParams::new(1.3, 0.7, 1.1, MuSign::Negative, SpinQuantum::from_two_s(3)).unwrap());
        assert!((sys.evolution_operator(0.4, 0.4) - identity(4)).norm() < 1e-12);
        assert!(unitarity_defect(&sys.evolution_operator(2.9, 0.4)) < 1e-12);
    }

    #[test]
    fn propagator_composes() {
        let sys = RotatingSystem::new(RotatingFieldParams::new(1.3, 0.7, 1.1, MuSign::Positive, SpinQuantum::integer(1)).unwrap());
        let lhs = sys.evolution_operator(2.0, 0.5);
        let rhs = sys.evolution_operator(2.0, 1.2) * sys.evolution_operator(1.2, 0.5);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn propagator_matches_stepping() {
        let p = RotatingFieldParams::new(1.3, 0.9, 0.8, MuSign::Negative, SpinQuantum::integer(1)).unwrap();
        let sys = RotatingSystem::new(p);
        let h = p.hamiltonian(&sys.ops);
        let t = p.tau();
        let stepped = propagate_operator(&h, 3, 1e-4 * t, t).unwrap();
        assert!((stepped - sys.evolution_operator(t, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn trajectory_matches_expectation_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = RotatingFieldParams::new(1.1, 0.8, 0.6, MuSign::Positive, SpinQuantum::integer(1)).unwrap();
        let sys = RotatingSystem::new(p);
        let psi0 = random_state(&mut rng, 3);
        let times = uniform_grid(7.0, 50);
        let traj = mean_spin_trajectory(&p, &psi0, &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let direct = sys.ops.expectation(&sys.evolve(&psi0, t));
            assert!((direct - traj.vectors[k]).norm() < 1e-9);
            assert_eq!(traj.g_vectors[k].z, traj.vectors[k].z);
        }
        assert!(traj.norm_drift() < 1e-9);
    }

    #[test]
    fn special_solution_is_pure_rotation() {
        let p = pythagorean(SpinQuantum::from_two_s(3));
        let sys = RotatingSystem::new(p);
        let m_s = -0.5;
        let v0 = sys.frame.n_s.into_inner() * m_s;
        for &t in &[0.0, 0.2, 1.3] {
            let wt = p.omega * t;
            let expect = Vec3::new(0.6 * wt.cos(), 0.6 * wt.sin(), 0.8) * m_s;
            assert!((sys.mean_spin(&v0, t) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn cyclicity_detection() {
        let info = detect_cyclicity(&pythagorean(SpinQuantum::half()), 1e-9, 64).unwrap();
        assert_eq!((info.k, info.k_s), (4, 5));
        assert!((info.period - 4.0 * TAU / 4.0).abs() < 1e-12);
        // omega_S / omega = 5/2 at theta_B = 0
        let p = RotatingFieldParams::new(1.5, 1.0, 0.0, MuSign::Positive, SpinQuantum::half()).unwrap();
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        assert_eq!((info.k, info.k_s), (2, 5));
        assert!((info.period - 2.0 * p.tau()).abs() < 1e-12);
        let p = RotatingFieldParams::new(2f64.sqrt() - 1.0, 1.0, 0.0, MuSign::Positive, SpinQuantum::half()).unwrap();
        assert!(matches!(detect_cyclicity(&p, 1e-9, 64), Err(PhaseError::NotCyclic { .. })));
    }

    #[test]
    fn eigenstate_geometric_phase() {
        for two_s in [1u32, 2, 3] {
            let p = pythagorean(SpinQuantum::from_two_s(two_s));
            let sys = RotatingSystem::new(p);
            let basis = eigenbasis_along(&sys.ops, &sys.frame.n_s);
            for m_s in p.spin.m_values() {
                let report = phase_report(&p, &basis.state(m_s).unwrap()).unwrap();
                let expect = -m_s * 4.0 * TAU * (1.0 - 0.8);
                assert!(crate::linalg::phase_distance(report.gamma, expect) < 1e-9, "s={two_s}/2 m={m_s}");
                assert!(report.relation_residual < 1e-9);
                if m_s > 0.0 {
                    let omega_v = report.omega_v.unwrap();
                    assert!((omega_v - 4.0 * TAU * 0.2).abs() < 1e-9);
                    assert!(crate::linalg::phase_distance(report.gamma, -m_s.abs() * omega_v) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn spin_half_phase_against_oracle() {
        let p = pythagorean(SpinQuantum::half());
        let sys = RotatingSystem::new(p);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi0 = random_state(&mut rng, 2);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        let report = sys.phase_report(&psi0, &info).unwrap();
        let h = p.hamiltonian(&sys.ops);
        let prop = timestep_propagate(&h, &psi0, 1e-4 * p.tau(), info.period).unwrap();
        let dec = phase_decompose(&prop, &h);
        assert!(crate::linalg::phase_distance(dec.gamma.unwrap(), report.gamma) < 1e-6);
        assert!((report.v0.norm() - 0.5).abs() < 1e-12);
        assert!(crate::linalg::phase_distance(report.gamma, -0.5 * report.omega_v.unwrap()) < 1e-9);
    }

    #[test]
    fn zero_mean_spin_is_pure_geometric() {
        // n_S = z when theta_B = 0
        let p = RotatingFieldParams::new(1.0, 1.0, 0.0, MuSign::Positive, SpinQuantum::integer(1)).unwrap();
        let sys = RotatingSystem::new(p);
        let mut psi0 = CVector::zeros(3);
        psi0[0] = Complex64::new(0.5f64.sqrt(), 0.0);
        psi0[2] = Complex64::new(0.5f64.sqrt(), 0.0);
        let report = phase_report(&p, &psi0).unwrap();
        assert!(report.v0.norm() < 1e-12);
        assert_eq!(report.beta, 0.0);
        assert!((report.gamma - report.delta).abs() < 1e-15);
        assert!(report.omega_v.is_none());
        assert!(solid_angle_closed_form(&sys.frame, &report.v0, &report.info, p.mu_sign).is_err());
    }

    #[test]
    fn total_phase_matches_overlap() {
        let p = pythagorean(SpinQuantum::from_two_s(3));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let report = phase_report(&p, &random_state(&mut rng, 4)).unwrap();
            assert!(crate::linalg::phase_distance(report.delta, report.overlap_phase) < 1e-9);
        }
    }

    #[test]
    fn polar_trace_has_zero_reduced_area() {
        let p = RotatingFieldParams::new(1.5, 1.0, 0.0, MuSign::Positive, SpinQuantum::integer(1)).unwrap();
        let sys = RotatingSystem::new(p);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        let omega = solid_angle_closed_form(&sys.frame, &Vec3::new(0.0, 0.0, -0.7), &info, p.mu_sign).unwrap();
        assert!(reduce_solid_angle(omega).abs() < 1e-12);
    }

    #[test]
    fn reduce_branch() {
        assert!((reduce_solid_angle(5.0 * TAU) - TAU).abs() < 1e-12);
        assert!((reduce_solid_angle(-TAU) - TAU).abs() < 1e-12);
        assert!((reduce_solid_angle(0.5)).eq(&0.5));
    }

    fn trace_for(sys: &RotatingSystem, v0: &Vec3, info: &CyclicInfo, samples: usize) -> Trajectory {
        sys.trajectory(v0, &uniform_grid(info.period, samples))
    }

    #[test]
    fn closed_form_solid_angle_matches_split_quadrature() {
        use crate::oracle::split_solid_angle_quadrature;
        let p = pythagorean(SpinQuantum::integer(1));
        let sys = RotatingSystem::new(p);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let v0 = sys.ops.expectation(&random_state(&mut rng, 3));
            let closed = solid_angle_closed_form(&sys.frame, &v0, &info, p.mu_sign).unwrap();
            let q = split_solid_angle_quadrature(&trace_for(&sys, &v0, &info, 40_000), &sys.frame.n_s, p.omega).unwrap();
            assert!((q.value - closed).abs() < 1e-6, "{} vs {}", q.value, closed);
        }
    }

    #[test]
    fn lab_quadrature_agrees_up_to_lobe_windings() {
        use crate::oracle::solid_angle_quadrature;
        let p = pythagorean(SpinQuantum::integer(1));
        let sys = RotatingSystem::new(p);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        let n = sys.frame.n_s.into_inner();
        let b = sys.frame.basis_for(&Vec3::y());
        for cos_g in [0.9, 0.3, -0.5, -0.78, -0.9] {
            let v0 = (n * cos_g + b.ex * (1.0 - cos_g * cos_g).sqrt()) * 0.8;
            let closed = solid_angle_closed_form(&sys.frame, &v0, &info, p.mu_sign).unwrap();
            let q = solid_angle_quadrature(&trace_for(&sys, &v0, &info, 40_000)).unwrap();
            let diff = q.value - closed;
            if cos_g + sys.frame.cos_theta_s > 0.0 {
                assert!(diff.abs() < 1e-6, "cos_g={cos_g}: {diff}");
            } else {
                let lobes = diff / (2.0 * TAU);
                assert!((lobes - lobes.round()).abs() < 1e-6, "cos_g={cos_g}: {diff}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn norm_is_conserved(wb in 0.1f64..3.0, w in 0.1f64..3.0, th in 0.0f64..PI, seed in 0u64..1000) {
            let p = RotatingFieldParams::new(wb, w, th, MuSign::Negative, SpinQuantum::integer(2)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi0 = random_state(&mut rng, 5);
            let traj = mean_spin_trajectory(&p, &psi0, &uniform_grid(20.0, 200)).unwrap();
            prop_assert!(traj.norm_drift() < 1e-9);
        }

        #[test]
        fn total_phase_is_state_independent(seed in 0u64..1000) {
            let p = pythagorean(SpinQuantum::integer(1));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = phase_report(&p, &random_state(&mut rng, 3)).unwrap();
            let b = phase_report(&p, &random_state(&mut rng, 3)).unwrap();
            prop_assert!(crate::linalg::phase_distance(a.overlap_phase, b.overlap_phase) < 1e-9);
        }

        #[test]
        fn global_phase_is_invisible(seed in 0u64..1000, chi in -PI..PI) {
            let p = pythagorean(SpinQuantum::from_two_s(3));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi0 = random_state(&mut rng, 4);
            let a = phase_report(&p, &psi0).unwrap();
            let b = phase_report(&p, &(psi0 * Complex64::from_polar(1.0, chi))).unwrap();
            prop_assert!((a.gamma - b.gamma).abs() < 1e-12);
            prop_assert!((a.omega_v.unwrap() - b.omega_v.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn spin_half_law(seed in 0u64..1000) {
            let p = pythagorean(SpinQuantum::half());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = phase_report(&p, &random_state(&mut rng, 2)).unwrap();
            prop_assert!(crate::linalg::phase_distance(r.gamma, -0.5 * r.omega_v.unwrap()) < 1e-9);
        }
    }
}
