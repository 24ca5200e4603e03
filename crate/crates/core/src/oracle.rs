//! Brute-force reference engines: a time-ordered stepping propagator,
//! solid angles by quadrature over sampled traces, and the numerical
//! total/dynamic/geometric phase split.
//!
//! Nothing here uses the closed-form solutions; these routines exist to check them.

use std::f64::consts::PI;

use crate::error::{PhaseError, Result};
use crate::linalg::{expectation, expm_hermitian, hermiticity_defect, wrap_phase, CMatrix, CVector, Vec3};
use crate::neutral_rotating::Trajectory;
use crate::spin_algebra::UnitVector3;

/// A Hamiltonian as a function of time (hbar = 1).
pub type HamiltonianFn<'a> = dyn Fn(f64) -> CMatrix + Sync + 'a;

/// Default step as a fraction of the field rotation period.
pub const DEFAULT_DT_FRACTION: f64 = 1e-4;

/// Fidelity below which a stepped run is treated as non-cyclic.
pub const CYCLIC_FIDELITY_FLOOR: f64 = 1.0 - 1e-6;

/// Per-step unitaries of the exponential midpoint rule,
/// `U_k = exp(-i H(t_k + dt/2) dt)`, reusable across initial states.
#[derive(Debug, Clone)]
pub struct SteppedEvolution {
    pub dt: f64,
    pub times: Vec<f64>,
    steps: Vec<CMatrix>,
}

impl SteppedEvolution {
    /// Splits `[0, horizon]` into the smallest number of equal steps not
    /// longer than `dt`.
    pub fn new(h: &HamiltonianFn<'_>, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("horizon must be non-negative, got {horizon}")));
        }
        let n = ((horizon / dt) - 1e-9).ceil().max(0.0) as usize;
        let n = if horizon > 0.0 { n.max(1) } else { 0 };
        let step = if n > 0 { horizon / n as f64 } else { dt };
        let mut steps = Vec::with_capacity(n);
        for k in 0..n {
            let t_mid = (k as f64 + 0.5) * step;
            let hk = h(t_mid);
            let defect = hermiticity_defect(&hk);
            if defect > 1e-10 {
                return Err(PhaseError::NonHermitian { t: t_mid, defect });
            }
            steps.push(expm_hermitian(&hk, step));
        }
        let times = (0..=n).map(|k| k as f64 * step).collect();
        Ok(Self { dt: step, times, steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn propagate(&self, psi0: &CVector) -> SteppedPropagation {
        let mut states = Vec::with_capacity(self.steps.len() + 1);
        states.push(psi0.clone());
        let norm0 = psi0.norm();
        let mut drift = 0.0f64;
        let mut psi = psi0.clone();
        for u in &self.steps {
            psi = u * psi;
            drift = drift.max((psi.norm() - norm0).abs());
            states.push(psi.clone());
        }
        SteppedPropagation { dt: self.dt, times: self.times.clone(), states, norm_drift: drift }
    }

    /// Time-ordered product of all steps.
    pub fn total(&self) -> CMatrix {
        let n = self.steps.first().map_or(0, |u| u.nrows());
        self.steps.iter().fold(CMatrix::identity(n, n), |acc, u| u * acc)
    }
}

/// States sampled along a stepped propagation.
#[derive(Debug, Clone)]
pub struct SteppedPropagation {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
    pub norm_drift: f64,
}

impl SteppedPropagation {
    pub fn initial(&self) -> &CVector {
        &self.states[0]
    }

    pub fn last(&self) -> &CVector {
        self.states.last().expect("propagation holds at least the initial state")
    }

    /// Expectation values of a vector operator at every sample.
    pub fn vector_expectation(&self, ops: [&CMatrix; 3]) -> Vec<Vec3> {
        self.states
            .iter()
            .map(|psi| Vec3::new(expectation(ops[0], psi), expectation(ops[1], psi), expectation(ops[2], psi)))
            .collect()
    }
}

/// Exponential-midpoint propagation of `psi0` over `[0, horizon]`.
pub fn timestep_propagate(
    h: &HamiltonianFn<'_>,
    psi0: &CVector,
    dt: f64,
    horizon: f64,
) -> Result<SteppedPropagation> {
    Ok(SteppedEvolution::new(h, dt, horizon)?.propagate(psi0))
}

/// Time-ordered propagator over `[0, horizon]` without storing the steps.
pub fn propagate_operator(h: &HamiltonianFn<'_>, dim: usize, dt: f64, horizon: f64) -> Result<CMatrix> {
    let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let step = horizon / n as f64;
    let mut u = CMatrix::identity(dim, dim);
    for k in 0..n {
        let t_mid = (k as f64 + 0.5) * step;
        let hk = h(t_mid);
        let defect = hermiticity_defect(&hk);
        if defect > 1e-10 {
            return Err(PhaseError::NonHermitian { t: t_mid, defect });
        }
        u = expm_hermitian(&hk, step) * u;
    }
    Ok(u)
}

/// Numerical phase split of a stepped run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDecomposition {
    /// `arg <psi(0)|psi(T)>` in `(-pi, pi]`.
    pub delta: f64,
    /// `-int <H> dt`, unreduced.
    pub beta: f64,
    /// `delta - beta` in `(-pi, pi]`; `None` when the run is not cyclic.
    pub gamma: Option<f64>,
    pub fidelity: f64,
}

pub fn phase_decompose(prop: &SteppedPropagation, h: &HamiltonianFn<'_>) -> PhaseDecomposition {
    let psi0 = prop.initial();
    let overlap = psi0.dotc(prop.last()) / psi0.norm_squared();
    let fidelity = overlap.norm();
    let delta = overlap.arg();
    let energies: Vec<f64> = prop
        .times
        .iter()
        .zip(&prop.states)
        .map(|(&t, psi)| expectation(&h(t), psi) / psi.norm_squared())
        .collect();
    let beta = -trapezoid(&energies, prop.dt);
    let gamma = (fidelity >= CYCLIC_FIDELITY_FLOOR).then(|| wrap_phase(delta - beta));
    PhaseDecomposition { delta: wrap_phase(delta), beta, gamma, fidelity }
}

pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Solid angle estimate and its sensitivity to halving the sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    /// Unreduced (winding-inclusive) solid angle about `pole`.
    pub value: f64,
    /// `|value(dt) - value(2 dt)|`; NaN when the sample count does not allow it.
    pub refinement_delta: f64,
    pub pole: UnitVector3,
    /// Whether the integration was carried out about a rotated pole.
    pub rotated: bool,
}

/// Below this value of `1 + pole.u` the trace is considered too close to the
/// antipode of the pole for accurate quadrature.
pub const POLE_TOLERANCE: f64 = 2e-2;

/// Closure tolerance (relative) under which a sampled trace is treated as a loop.
const LOOP_CLOSURE: f64 = 1e-6;

/// Solid angle `(1/|v|) int (v_x dv_y - v_y dv_x) / (|v| + v_z)` of a
/// sampled trace about the lab `z` pole.
pub fn solid_angle_quadrature_samples(points: &[Vec3], dt: f64) -> Result<QuadratureResult> {
    solid_angle_about(points, dt, &UnitVector3::z_axis())
}

/// Solid angle of a sampled trace about an arbitrary pole.
///
/// When the trace passes within [`POLE_TOLERANCE`] of the antipode of `pole`
/// the integral is evaluated about a better-conditioned pole and shifted by
/// `4 pi` times the winding difference between the two antipodes, so the
/// returned value is still the one referred to `pole`.
pub fn solid_angle_about(points: &[Vec3], dt: f64, pole: &UnitVector3) -> Result<QuadratureResult> {
    if points.len() < 6 {
        return Err(PhaseError::InvalidParameter("solid angle needs at least six samples".into()));
    }
    let units = normalize_trace(points)?;
    let closeness = min_antipode_gap(&units, pole);
    if closeness < 1e-12 {
        return Err(PhaseError::AntipodePassage);
    }
    if closeness >= POLE_TOLERANCE {
        let value = pole_integral(&units, dt, pole);
        let refinement_delta = coarse_integral(&units, dt, pole).map_or(f64::NAN, |c| (value - c).abs());
        return Ok(QuadratureResult { value, refinement_delta, pole: *pole, rotated: false });
    }
    let alt = best_pole(&units);
    let closed = is_closed(&units);
    let shift = if closed {
        let crossings = winding_difference(&units, &(-alt.into_inner()), &(-pole.into_inner()));
        -4.0 * PI * crossings as f64
    } else {
        0.0
    };
    let value = pole_integral(&units, dt, &alt) + shift;
    let refinement_delta = coarse_integral(&units, dt, &alt).map_or(f64::NAN, |c| (value - shift - c).abs());
    Ok(QuadratureResult { value, refinement_delta, pole: if closed { *pole } else { alt }, rotated: true })
}

/// Lab-pole solid angle of a sampled mean-vector trajectory.
pub fn solid_angle_quadrature(traj: &Trajectory) -> Result<QuadratureResult> {
    solid_angle_quadrature_samples(&traj.vectors, traj.dt())
}

/// Solid angle evaluated through the co-rotating decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitQuadrature {
    /// Solid angle of `g(t)` about the precession axis.
    pub precession: QuadratureResult,
    /// `omega int (|v| - v_z) / |v| dt`.
    pub rotation: f64,
    pub value: f64,
}

/// Solid angle of `v(t)` as the area of `g(t)` about `axis` plus the
/// contribution of the rigid rotation about `z` at rate `omega`.
pub fn split_solid_angle_quadrature(traj: &Trajectory, axis: &UnitVector3, omega: f64) -> Result<SplitQuadrature> {
    let dt = traj.dt();
    let precession = solid_angle_about(&traj.g_vectors, dt, axis)?;
    let lifted: Vec<f64> = traj.vectors.iter().map(|v| 1.0 - v.z / v.norm()).collect();
    let rotation = omega * trapezoid(&lifted, dt);
    Ok(SplitQuadrature { precession, rotation, value: precession.value + rotation })
}

fn normalize_trace(points: &[Vec3]) -> Result<Vec<Vec3>> {
    points
        .iter()
        .map(|p| {
            let n = p.norm();
            if n < 1e-10 {
                Err(PhaseError::UndefinedSolidAngle)
            } else {
                Ok(p / n)
            }
        })
        .collect()
}

fn min_antipode_gap(units: &[Vec3], pole: &Vec3) -> f64 {
    units.iter().map(|u| 1.0 + pole.dot(u)).fold(f64::INFINITY, f64::min)
}

fn is_closed(units: &[Vec3]) -> bool {
    (units[units.len() - 1] - units[0]).norm() < LOOP_CLOSURE
}

/// `int p.(u x du) / (1 + p.u)` by the trapezoidal rule with central differences.
fn pole_integral(units: &[Vec3], dt: f64, pole: &Vec3) -> f64 {
    let n = units.len();
    let closed = is_closed(units);
    let integrand = |k: usize, du: Vec3| pole.dot(&units[k].cross(&du)) / (1.0 + pole.dot(&units[k]));
    // five-point central differences
    let central = |m2: Vec3, m1: Vec3, p1: Vec3, p2: Vec3| (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * dt);
    if closed {
        // periodic: samples 0..n-1 with the last one identified with the first
        let m = n - 1;
        let at = |k: isize| units[k.rem_euclid(m as isize) as usize];
        let mut sum = 0.0;
        for k in 0..m as isize {
            sum += integrand(k as usize, central(at(k - 2), at(k - 1), at(k + 1), at(k + 2)));
        }
        sum * dt
    } else {
        let mut vals = Vec::with_capacity(n);
        for k in 0..n {
            let du = if k == 0 {
                (-3.0 * units[0] + 4.0 * units[1] - units[2]) / (2.0 * dt)
            } else if k == n - 1 {
                (3.0 * units[n - 1] - 4.0 * units[n - 2] + units[n - 3]) / (2.0 * dt)
            } else if k == 1 || k == n - 2 {
                (units[k + 1] - units[k - 1]) / (2.0 * dt)
            } else {
                central(units[k - 2], units[k - 1], units[k + 1], units[k + 2])
            };
            vals.push(integrand(k, du));
        }
        trapezoid(&vals, dt)
    }
}

fn coarse_integral(units: &[Vec3], dt: f64, pole: &Vec3) -> Option<f64> {
    let n = units.len() - 1;
    if !n.is_multiple_of(2) || n < 6 {
        return None;
    }
    let coarse: Vec<Vec3> = units.iter().step_by(2).copied().collect();
    Some(pole_integral(&coarse, 2.0 * dt, pole))
}

/// Pole whose antipode keeps the largest distance from the trace.
fn best_pole(units: &[Vec3]) -> UnitVector3 {
    let count = 600;
    let golden = PI * (3.0 - 5f64.sqrt());
    let stride = (units.len() / 4000).max(1);
    let mut best = (f64::NEG_INFINITY, Vec3::z());
    for i in 0..count {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let p = Vec3::new(r * phi.cos(), r * phi.sin(), z);
        let gap = units.iter().step_by(stride).map(|u| 1.0 + p.dot(u)).fold(f64::INFINITY, f64::min);
        if gap > best.0 {
            best = (gap, p);
        }
    }
    UnitVector3::new_unchecked(best.1)
}

/// `w(to) - w(from)` where `w` is the winding number of the closed trace
/// about a point, counted by signed crossings of a geodesic path.
fn winding_difference(units: &[Vec3], from: &Vec3, to: &Vec3) -> i64 {
    let mid = from + to;
    let mid = if mid.norm() < 1e-6 {
        let trial = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        (trial - from * from.dot(&trial)).normalize()
    } else {
        mid.normalize()
    };
    // keep the path off any symmetry plane of the sampled trace
    let mid = (mid + Vec3::new(0.0123, 0.0311, -0.0071)).normalize();
    crossings(units, from, &mid) + crossings(units, &mid, to)
}

fn crossings(units: &[Vec3], c0: &Vec3, d0: &Vec3) -> i64 {
    let n2 = c0.cross(d0);
    if n2.norm() < 1e-14 {
        return 0;
    }
    let m = units.len() - 1;
    let mut total = 0i64;
    for k in 0..m {
        let a = units[k];
        let b = units[(k + 1) % m];
        let n1 = a.cross(&b);
        if n1.norm() < 1e-300 {
            continue;
        }
        let line = n1.cross(&n2);
        if line.norm() < 1e-300 {
            continue;
        }
        let line = line.normalize();
        for x in [line, -line] {
            let on_seg = n1.dot(&a.cross(&x)) > 0.0 && n1.dot(&x.cross(&b)) >= 0.0;
            let on_path = n2.dot(&c0.cross(&x)) >= 0.0 && n2.dot(&x.cross(d0)) >= 0.0;
            if on_seg && on_path {
                let t_loop = n1.cross(&x);
                let t_path = n2.cross(&x);
                total += if x.dot(&t_loop.cross(&t_path)) > 0.0 { 1 } else { -1 };
            }
        }
    }
    total
}
