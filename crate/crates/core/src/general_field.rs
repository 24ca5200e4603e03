//! Eigen-axis transport for spins in an arbitrarily varying field
//! `B(t) = B(t) n(t)`.
//!
//! An initial eigenstate of `s.e0` stays an eigenstate of `s.e(t)` when `e`
//! obeys `de/dt = k omega_B(t) n(t) x e`, so the cyclic geometric phase is
//! `-m_s` times the solid angle swept by `e`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::linalg::{wrap_phase, CMatrix, C64, Vec3};
use crate::oracle::{trapezoid, SteppedPropagation};
use crate::spin_algebra::{SpinOps, UnitVector3};

/// Sin of the polar angle below which the working frame is rotated.
pub const POLE_GUARD: f64 = 0.05;
/// Default bound on `|e(T) - e(0)|`.
pub const CLOSURE_TOL: f64 = 1e-6;
/// Largest rotation per step before the integration is flagged as coarse.
pub const MAX_STEP_ROTATION: f64 = 0.1;

/// Signed precession rate and unit direction of a field, both functions of time.
pub trait FieldWaveform: Send + Sync {
    fn rate(&self, t: f64) -> f64;
    fn direction(&self, t: f64) -> Vec3;
}

/// The uniformly rotating field written as a general waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatingWaveform {
    pub rate: f64,
    pub omega: f64,
    pub theta_b: f64,
}

impl FieldWaveform for RotatingWaveform {
    fn rate(&self, _t: f64) -> f64 {
        self.rate
    }

    fn direction(&self, t: f64) -> Vec3 {
        let (sb, cb) = self.theta_b.sin_cos();
        let (sw, cw) = (self.omega * t).sin_cos();
        Vec3::new(sb * cw, sb * sw, cb)
    }
}

/// `rate(t) = rate_mean + rate_amplitude cos(rate_frequency t + rate_phase)`,
/// direction at polar angle `polar_mean + polar_amplitude sin(polar_frequency t)`
/// and azimuth `azimuth_start + azimuth_rate t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonicWaveform {
    pub rate_mean: f64,
    pub rate_amplitude: f64,
    pub rate_frequency: f64,
    pub rate_phase: f64,
    pub polar_mean: f64,
    pub polar_amplitude: f64,
    pub polar_frequency: f64,
    pub azimuth_start: f64,
    pub azimuth_rate: f64,
}

impl FieldWaveform for HarmonicWaveform {
    fn rate(&self, t: f64) -> f64 {
        self.rate_mean + self.rate_amplitude * (self.rate_frequency * t + self.rate_phase).cos()
    }

    fn direction(&self, t: f64) -> Vec3 {
        let th = self.polar_mean + self.polar_amplitude * (self.polar_frequency * t).sin();
        let ph = self.azimuth_start + self.azimuth_rate * t;
        UnitVector3::from_spherical(th, ph).into_inner()
    }
}

/// Waveform given by two closures.
pub struct FnWaveform<R, D> {
    pub rate: R,
    pub direction: D,
}

impl<R, D> FieldWaveform for FnWaveform<R, D>
where
    R: Fn(f64) -> f64 + Send + Sync,
    D: Fn(f64) -> Vec3 + Send + Sync,
{
    fn rate(&self, t: f64) -> f64 {
        (self.rate)(t)
    }

    fn direction(&self, t: f64) -> Vec3 {
        (self.direction)(t).normalize()
    }
}

/// Dense samples with linear interpolation of the rate and spherical-linear
/// interpolation of the direction. Held constant outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    times: Vec<f64>,
    rates: Vec<f64>,
    directions: Vec<Vec3>,
}

impl SampledWaveform {
    pub fn new(times: Vec<f64>, rates: Vec<f64>, directions: Vec<Vec3>) -> Result<Self> {
        if times.len() < 2 || rates.len() != times.len() || directions.len() != times.len() {
            return Err(PhaseError::InvalidParameter(
                "sampled field needs at least two samples with matching columns".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PhaseError::InvalidParameter("sample times must be strictly increasing".into()));
        }
        if rates.iter().chain(&times).any(|x| !x.is_finite()) {
            return Err(PhaseError::InvalidParameter("sampled field contains non-finite values".into()));
        }
        let mut units = Vec::with_capacity(directions.len());
        for (t, d) in times.iter().zip(&directions) {
            let n = d.norm();
            if !((n - 1.0).abs() <= 1e-6) {
                return Err(PhaseError::InvalidParameter(format!("field direction at t = {t} has norm {n}")));
            }
            units.push(d / n);
        }
        for (w, t) in units.windows(2).zip(&times) {
            if w[0].dot(&w[1]).clamp(-1.0, 1.0).acos() > MAX_STEP_ROTATION {
                return Err(PhaseError::InvalidParameter(format!(
                    "field direction jumps by more than {MAX_STEP_ROTATION} rad after t = {t}"
                )));
            }
        }
        Ok(Self { times, rates, directions: units })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let j = self.times.partition_point(|&x| x <= t) - 1;
        let s = (t - self.times[j]) / (self.times[j + 1] - self.times[j]);
        (j, s)
    }
}

fn slerp(a: &Vec3, b: &Vec3, s: f64) -> Vec3 {
    let cos = a.dot(b).clamp(-1.0, 1.0);
    let angle = cos.acos();
    if angle < 1e-9 {
        return (a * (1.0 - s) + b * s).normalize();
    }
    let sin = angle.sin();
    (a * ((1.0 - s) * angle).sin() + b * (s * angle).sin()) / sin
}

impl FieldWaveform for SampledWaveform {
    fn rate(&self, t: f64) -> f64 {
        let (j, s) = self.locate(t);
        self.rates[j] * (1.0 - s) + self.rates[j + 1] * s
    }

    fn direction(&self, t: f64) -> Vec3 {
        let (j, s) = self.locate(t);
        slerp(&self.directions[j], &self.directions[j + 1], s)
    }
}

/// `H(t) = -omega_B(t) s.n(t)` for the neutral particle.
pub fn neutral_hamiltonian<'a>(field: &'a dyn FieldWaveform, ops: &'a SpinOps) -> impl Fn(f64) -> CMatrix + Sync + 'a {
    move |t| ops.dot(&field.direction(t)) * C64::new(-field.rate(t), 0.0)
}

/// `n + 1` equally spaced samples on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Fewest equal steps not longer than `dt`; matches the oracle's grid.
    pub fn from_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("bad grid: horizon {horizon}, dt {dt}")));
        }
        let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.steps).map(|k| k as f64 * dt).collect()
    }
}

/// Transported axis with its spherical angles in a pole-avoiding working frame.
#[derive(Debug, Clone)]
pub struct AxisTrajectory {
    pub times: Vec<f64>,
    /// Lab-frame unit vectors.
    pub e: Vec<Vec3>,
    /// Polar angle in the working frame.
    pub theta: Vec<f64>,
    /// Unwrapped azimuth in the working frame.
    pub phi: Vec<f64>,
    pub phi_rate: Vec<f64>,
    /// Phase accumulated per unit eigenvalue, `int (cos th dphi/dt - k omega_B e.n) dt`.
    pub alpha_per_m: Vec<f64>,
    /// Maps lab vectors into the working frame.
    pub frame: Rotation3<f64>,
    /// `k` in `de/dt = k omega_B n x e`.
    pub rate_factor: f64,
    pub max_step_rotation: f64,
    pub max_norm_drift: f64,
}

impl AxisTrajectory {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Set when some step rotated the axis by more than [`MAX_STEP_ROTATION`].
    pub fn is_coarse(&self) -> bool {
        self.max_step_rotation > MAX_STEP_ROTATION
    }

    /// Smallest `sin theta` along the trace in the working frame.
    pub fn pole_margin(&self) -> f64 {
        self.theta.iter().map(|t| t.sin()).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `de/dt = -omega_B(t) n(t) x e` for the neutral spin.
pub fn transport_axis(field: &dyn FieldWaveform, e0: &UnitVector3, grid: &TimeGrid) -> AxisTrajectory {
    transport_with_rate(field, e0, grid, -1.0)
}

fn axis_rate(field: &dyn FieldWaveform, k: f64, t: f64, e: &Vec3) -> Vec3 {
    field.direction(t).cross(e) * (k * field.rate(t))
}

fn rk4_path(field: &dyn FieldWaveform, e0: &Vec3, grid: &TimeGrid, k: f64) -> (Vec<Vec3>, f64, f64) {
    let dt = grid.dt();
    let mut e = *e0;
    let mut path = Vec::with_capacity(grid.steps + 1);
    path.push(e);
    let (mut max_rot, mut max_drift) = (0.0f64, 0.0f64);
    for j in 0..grid.steps {
        let t = j as f64 * dt;
        let k1 = axis_rate(field, k, t, &e);
        let k2 = axis_rate(field, k, t + dt / 2.0, &(e + k1 * (dt / 2.0)));
        let k3 = axis_rate(field, k, t + dt / 2.0, &(e + k2 * (dt / 2.0)));
        let k4 = axis_rate(field, k, t + dt, &(e + k3 * dt));
        let next = e + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        max_drift = max_drift.max((next.norm() - 1.0).abs());
        let next = next.normalize();
        max_rot = max_rot.max((k * field.rate(t + dt / 2.0)).abs() * dt);
        e = next;
        path.push(e);
    }
    (path, max_rot, max_drift)
}

/// Transport with an arbitrary rate factor `k`.
pub fn transport_with_rate(field: &dyn FieldWaveform, e0: &UnitVector3, grid: &TimeGrid, k: f64) -> AxisTrajectory {
    let (e, max_step_rotation, max_norm_drift) = rk4_path(field, e0, grid, k);
    let times = grid.times();
    let frame = working_frame(&e);
    let mut theta = Vec::with_capacity(e.len());
    let mut phi: Vec<f64> = Vec::with_capacity(e.len());
    let mut phi_rate = Vec::with_capacity(e.len());
    let mut integrand = Vec::with_capacity(e.len());
    for (j, (ej, &t)) in e.iter().zip(&times).enumerate() {
        let w = frame * ej;
        let wdot = frame * axis_rate(field, k, t, ej);
        let rho2 = w.x * w.x + w.y * w.y;
        let th = rho2.sqrt().atan2(w.z);
        let raw = w.y.atan2(w.x);
        let ph = match j {
            0 => raw,
            _ => {
                let prev = phi[j - 1];
                prev + wrap_phase(raw - prev)
            }
        };
        let rate = if rho2 > 0.0 { (w.x * wdot.y - w.y * wdot.x) / rho2 } else { 0.0 };
        theta.push(th);
        phi.push(ph);
        phi_rate.push(rate);
        integrand.push(th.cos() * rate - k * field.rate(t) * ej.dot(&field.direction(t)));
    }
    let alpha_per_m = cumulative_trapezoid(&integrand, grid.dt());
    AxisTrajectory {
        times,
        e,
        theta,
        phi,
        phi_rate,
        alpha_per_m,
        frame,
        rate_factor: k,
        max_step_rotation,
        max_norm_drift,
    }
}

fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Identity unless the trace comes within [`POLE_GUARD`] of `+-z`; otherwise a
/// rotation taking the best-separated direction to `z`.
fn working_frame(e: &[Vec3]) -> Rotation3<f64> {
    let margin = |p: &Vec3, stride: usize| {
        e.iter().step_by(stride).map(|x| p.cross(x).norm()).fold(f64::INFINITY, f64::min)
    };
    if margin(&Vec3::z(), 1) >= POLE_GUARD {
        return Rotation3::identity();
    }
    let stride = (e.len() / 2000).max(1);
    let count = 600;
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut best = (Vec3::z(), margin(&Vec3::z(), stride));
    for i in 0..count {
        let z = 1.0 - (i as f64 + 0.5) * 2.0 / count as f64;
        let r = (1.0 - z * z).sqrt();
        let (s, c) = (golden * i as f64).sin_cos();
        let p = Vec3::new(r * c, r * s, z);
        let m = margin(&p, stride);
        if m > best.1 {
            best = (p, m);
        }
    }
    Rotation3::rotation_between(&best.0, &Vec3::z()).unwrap_or_else(|| Rotation3::from_axis_angle(&Vec3::x_axis(), PI))
}

/// `max_k ||(s.e_k) psi_k - m_s psi_k||` along a propagated state.
pub fn eigen_residual(ops: &SpinOps, states: &SteppedPropagation, axis: &AxisTrajectory, m_s: f64) -> Result<f64> {
    if states.states.len() > axis.e.len() {
        return Err(PhaseError::DimensionMismatch { expected: axis.e.len(), got: states.states.len() });
    }
    Ok(states
        .states
        .iter()
        .zip(&axis.e)
        .map(|(psi, e)| (ops.dot(e) * psi - psi * C64::new(m_s, 0.0)).norm())
        .fold(0.0, f64::max))
}

/// Largest `|<s>(t_k) - m_s e_k|` along a propagated state.
pub fn alignment_error(ops: &SpinOps, states: &SteppedPropagation, axis: &AxisTrajectory, m_s: f64) -> f64 {
    states.states.iter().zip(&axis.e).map(|(psi, e)| (ops.expectation(psi) - e * m_s).norm()).fold(0.0, f64::max)
}

/// Return of the axis to its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CyclicClosure {
    pub period: f64,
    /// Sample index of `T`.
    pub index: usize,
    /// Winding of the working-frame azimuth.
    pub k: i64,
    pub closure_error: f64,
}

/// Closure of the trace at sample `index`.
pub fn closure_at(axis: &AxisTrajectory, index: usize, tol: f64) -> Result<CyclicClosure> {
    if index == 0 || index >= axis.len() {
        return Err(PhaseError::InvalidParameter(format!("closure index {index} outside the trajectory")));
    }
    let closure_error = (axis.e[index] - axis.e[0]).norm();
    if !(closure_error < tol) {
        return Err(PhaseError::NotClosed(closure_error));
    }
    let k = ((axis.phi[index] - axis.phi[0]) / TAU).round() as i64;
    Ok(CyclicClosure { period: axis.times[index], index, k, closure_error })
}

/// Closure at the end of the grid.
pub fn closure_at_end(axis: &AxisTrajectory, tol: f64) -> Result<CyclicClosure> {
    closure_at(axis, axis.len() - 1, tol)
}

/// First return of the trace to within `tol` of its start after leaving it.
pub fn scan_closure(axis: &AxisTrajectory, tol: f64) -> Option<CyclicClosure> {
    let dist: Vec<f64> = axis.e.iter().map(|e| (e - axis.e[0]).norm()).collect();
    let first_out = dist.iter().position(|&d| d > 100.0 * tol)?;
    (first_out..dist.len())
        .find(|&j| {
            dist[j] < tol && dist[j] <= dist[j - 1] && dist.get(j + 1).is_none_or(|&next| dist[j] <= next)
        })
        .and_then(|j| closure_at(axis, j, tol).ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricPhase {
    /// `-m_s Omega_e` in `(-pi, pi]`.
    pub gamma: f64,
    pub omega_e: f64,
    /// Solid angle of `v = m_s e`; `None` for `m_s = 0`.
    pub omega_v: Option<f64>,
    /// `-|m_s| Omega_v` in `(-pi, pi]`.
    pub gamma_from_v: Option<f64>,
}

pub fn swept_solid_angle(axis: &AxisTrajectory, closure: &CyclicClosure) -> f64 {
    let n = closure.index + 1;
    let values: Vec<f64> = axis.theta[..n].iter().zip(&axis.phi_rate[..n]).map(|(th, r)| (1.0 - th.cos()) * r).collect();
    trapezoid(&values, axis.dt())
}

pub fn cyclic_geometric_phase(axis: &AxisTrajectory, closure: &CyclicClosure, m_s: f64) -> GeometricPhase {
    let omega_e = swept_solid_angle(axis, closure);
    let gamma = wrap_phase(-m_s * omega_e);
    if m_s == 0.0 {
        return GeometricPhase { gamma, omega_e, omega_v: None, gamma_from_v: None };
    }
    // -e has polar angle pi - theta and the same azimuth rate
    let omega_v = if m_s > 0.0 { omega_e } else { 2.0 * TAU * closure.k as f64 - omega_e };
    GeometricPhase { gamma, omega_e, omega_v: Some(omega_v), gamma_from_v: Some(wrap_phase(-m_s.abs() * omega_v)) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalPhaseCheck {
    /// `alpha(T) - alpha(0) - 2 pi m_s K` in `(-pi, pi]`.
    pub delta: f64,
    /// `int omega_B v.n dt` from the propagated state, unreduced.
    pub beta: f64,
    pub gamma: f64,
    /// `arg <psi(0)|psi(T)>` from the propagated state.
    pub overlap_phase: f64,
}

pub fn total_phase_check(
    field: &dyn FieldWaveform,
    ops: &SpinOps,
    states: &SteppedPropagation,
    axis: &AxisTrajectory,
    closure: &CyclicClosure,
    m_s: f64,
) -> Result<TotalPhaseCheck> {
    let n = closure.index + 1;
    if states.states.len() < n {
        return Err(PhaseError::DimensionMismatch { expected: n, got: states.states.len() });
    }
    let delta = wrap_phase(m_s * (axis.alpha_per_m[closure.index] - axis.alpha_per_m[0]) - TAU * m_s * closure.k as f64);
    let work: Vec<f64> = states.states[..n]
        .iter()
        .zip(&axis.times[..n])
        .map(|(psi, &t)| -axis.rate_factor * field.rate(t) * ops.expectation(psi).dot(&field.direction(t)))
        .collect();
    let beta = trapezoid(&work, axis.dt());
    let overlap_phase = states.states[0].dotc(&states.states[closure.index]).arg();
    Ok(TotalPhaseCheck { delta, beta, gamma: wrap_phase(delta - beta), overlap_phase })
}

/// Axis and angle of the net rotation that transport applies over `grid`.
pub fn net_rotation(field: &dyn FieldWaveform, grid: &TimeGrid, k: f64) -> (Vec3, f64) {
    let cols: Vec<Vec3> = [Vec3::x(), Vec3::y(), Vec3::z()]
        .iter()
        .map(|b| *rk4_path(field, b, grid, k).0.last().unwrap())
        .collect();
    let r = Matrix3::from_columns(&cols);
    let rot = Rotation3::from_matrix(&r);
    match rot.axis_angle() {
        Some((axis, angle)) => (axis.into_inner(), angle),
        None => (Vec3::z(), 0.0),
    }
}

/// Start axis that returns to itself after `grid.horizon`, oriented along
/// the initial field direction (or `+z` when perpendicular to it).
pub fn closing_axis(field: &dyn FieldWaveform, grid: &TimeGrid, k: f64) -> UnitVector3 {
    find_closing_axis(field, grid, k).0
}

/// Like [`closing_axis`], also reporting whether the net rotation is the
/// identity. Every axis closes then and the initial field direction is used.
pub fn find_closing_axis(field: &dyn FieldWaveform, grid: &TimeGrid, k: f64) -> (UnitVector3, bool) {
    let (axis, angle) = net_rotation(field, grid, k);
    let n0 = field.direction(0.0);
    if angle.abs() < IDENTITY_ANGLE {
        return (UnitVector3::normalize(n0).unwrap_or_else(|_| UnitVector3::z_axis()), true);
    }
    let along = axis.dot(&n0);
    let flip = if along.abs() > 1e-12 { along < 0.0 } else { axis.z < 0.0 };
    (UnitVector3::normalize(if flip { -axis } else { axis }).unwrap_or_else(|_| UnitVector3::z_axis()), false)
}

const IDENTITY_ANGLE: f64 = 1e-6;

/// `e0 = 2 <psi|s|psi>` for spin 1/2.
pub fn spin_half_axis(ops: &SpinOps, psi: &crate::linalg::CVector) -> Result<UnitVector3> {
    UnitVector3::normalize(ops.expectation(psi) * 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neutral_rotating::{detect_cyclicity, MuSign, RotatingFieldParams, RotatingSystem};
    use crate::oracle::{phase_decompose, timestep_propagate};
    use crate::spin_algebra::{eigenbasis_along, spin_operators, SpinQuantum};
    use crate::linalg::phase_distance;

    fn grid(horizon: f64, steps: usize) -> TimeGrid {
        TimeGrid { horizon, steps }
    }

    #[test]
    fn fixed_axis_precession() {
        let field = RotatingWaveform { rate: 1.7, omega: 0.0, theta_b: 0.0 };
        let axis = transport_axis(&field, &UnitVector3::x_axis(), &grid(3.0, 3000));
        for (t, e) in axis.times.iter().zip(&axis.e) {
            let expect = Vec3::new((1.7 * t).cos(), -(1.7 * t).sin(), 0.0);
            assert!((e - expect).norm() < 1e-10);
        }
        assert!(!axis.is_coarse());
    }

    #[test]
    fn norm_is_kept_over_many_steps() {
        let field = HarmonicWaveform {
            rate_mean: 0.3,
            rate_amplitude: 1.5,
            rate_frequency: 1.1,
            polar_mean: 1.0,
            polar_amplitude: 0.5,
            polar_frequency: 0.7,
            azimuth_rate: 0.9,
            ..Default::default()
        };
        let axis = transport_axis(&field, &UnitVector3::new(0.3, 0.4, 0.5).unwrap(), &grid(50.0, 100_000));
        assert!(axis.e.iter().all(|e| (e.norm() - 1.0).abs() < 1e-12));
        assert!(axis.max_norm_drift < 1e-9);
    }

    #[test]
    fn coarse_steps_are_flagged() {
        let field = RotatingWaveform { rate: 50.0, omega: 1.0, theta_b: 0.5 };
        assert!(transport_axis(&field, &UnitVector3::x_axis(), &grid(1.0, 100)).is_coarse());
    }

    fn rotating_case(spin: SpinQuantum) -> (RotatingFieldParams, RotatingWaveform) {
        let p = RotatingFieldParams::new(3.0, 4.0, PI / 2.0, MuSign::Positive, spin).unwrap();
        (p, RotatingWaveform { rate: 3.0, omega: 4.0, theta_b: PI / 2.0 })
    }

    #[test]
    fn rotating_field_axis_matches_closed_form() {
        let (p, field) = rotating_case(SpinQuantum::half());
        let sys = RotatingSystem::new(p);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        let g = TimeGrid::from_step(info.period, 1e-4 * p.tau()).unwrap();
        let axis = transport_axis(&field, &sys.frame.n_s, &g);
        for (t, e) in axis.times.iter().zip(&axis.e) {
            assert!((e - sys.mean_spin(&sys.frame.n_s, *t)).norm() < 1e-8);
        }
    }

    #[test]
    fn rotating_field_geometric_phase() {
        let (p, field) = rotating_case(SpinQuantum::from_two_s(3));
        let sys = RotatingSystem::new(p);
        let info = detect_cyclicity(&p, 1e-9, 64).unwrap();
        let g = TimeGrid::from_step(info.period, 1e-4 * p.tau()).unwrap();
        let axis = transport_axis(&field, &sys.frame.n_s, &g);
        let closure = closure_at_end(&axis, CLOSURE_TOL).unwrap();
        let basis = eigenbasis_along(&sys.ops, &sys.frame.n_s);
        for m_s in p.spin.m_values() {
            let report = sys.phase_report(&basis.state(m_s).unwrap(), &info).unwrap();
            let geo = cyclic_geometric_phase(&axis, &closure, m_s);
            assert!(phase_distance(geo.gamma, report.gamma) < 1e-6, "m={m_s}");
            assert!(phase_distance(geo.gamma_from_v.unwrap(), report.gamma) < 1e-6);
        }
    }

    #[test]
    fn eigen_residual_and_total_phase_rotating() {
        let spin = SpinQuantum::from_two_s(3);
        let (p, field) = rotating_case(spin);
        let sys = RotatingSystem::new(p);
        let ops = spin_operators(spin);
        let g = TimeGrid::from_step(p.tau(), 1e-4 * p.tau()).unwrap();
        let e0 = UnitVector3::new(0.2, -0.5, 0.7).unwrap();
        let psi0 = eigenbasis_along(&ops, &e0).state(0.5).unwrap();
        let h = neutral_hamiltonian(&field, &ops);
        let prop = timestep_propagate(&h, &psi0, g.dt(), g.horizon).unwrap();
        let axis = transport_axis(&field, &e0, &g);
        assert!(eigen_residual(&ops, &prop, &axis, 0.5).unwrap() < 1e-6);
        assert!(alignment_error(&ops, &prop, &axis, 0.5) < 1e-6);
        let _ = sys;
    }

    fn sign_flipping_field() -> HarmonicWaveform {
        HarmonicWaveform {
            rate_amplitude: 2.0,
            rate_frequency: 1.0,
            polar_mean: 1.0,
            polar_amplitude: 0.4,
            polar_frequency: 1.0,
            azimuth_rate: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn sign_flipping_field_loop() {
        let field = sign_flipping_field();
        let spin = SpinQuantum::integer(1);
        let ops = spin_operators(spin);
        let g = TimeGrid::from_step(TAU, 1e-4 * TAU).unwrap();
        let e0 = closing_axis(&field, &g, -1.0);
        let axis = transport_axis(&field, &e0, &g);
        let closure = closure_at_end(&axis, CLOSURE_TOL).unwrap();
        let h = neutral_hamiltonian(&field, &ops);
        for m_s in [1.0, 0.0, -1.0] {
            let psi0 = eigenbasis_along(&ops, &e0).state(m_s).unwrap();
            let prop = timestep_propagate(&h, &psi0, g.dt(), g.horizon).unwrap();
            assert!(eigen_residual(&ops, &prop, &axis, m_s).unwrap() < 1e-5);
            let geo = cyclic_geometric_phase(&axis, &closure, m_s);
            let total = total_phase_check(&field, &ops, &prop, &axis, &closure, m_s).unwrap();
            let dec = phase_decompose(&prop, &h);
            assert!(phase_distance(total.gamma, geo.gamma) < 1e-5);
            assert!(phase_distance(dec.gamma.unwrap(), geo.gamma) < 1e-5, "{:?} {:?}", dec, geo);
            assert!(phase_distance(total.delta, dec.delta) < 1e-5);
            if m_s == 0.0 {
                assert_eq!(geo.gamma, 0.0);
                assert!(geo.omega_v.is_none());
            }
        }
    }

    #[test]
    fn stationary_axis_has_no_phase() {
        let field = RotatingWaveform { rate: 1.0, omega: 0.0, theta_b: 0.0 };
        let axis = transport_axis(&field, &UnitVector3::z_axis(), &grid(TAU, 1000));
        let closure = closure_at_end(&axis, CLOSURE_TOL).unwrap();
        let geo = cyclic_geometric_phase(&axis, &closure, 1.0);
        assert!(geo.gamma.abs() < 1e-12);
        assert!(axis.pole_margin() > POLE_GUARD);
    }

    #[test]
    fn cap_area_of_circle() {
        let theta = 0.7;
        let field = RotatingWaveform { rate: -1.0, omega: 0.0, theta_b: 0.0 };
        let axis = transport_axis(&field, &UnitVector3::from_spherical(theta, 0.0), &grid(TAU, 2000));
        let closure = closure_at_end(&axis, CLOSURE_TOL).unwrap();
        assert_eq!(closure.k, 1);
        let geo = cyclic_geometric_phase(&axis, &closure, 1.0);
        assert!((geo.omega_e - TAU * (1.0 - theta.cos())).abs() < 1e-9);
    }

    #[test]
    fn closure_scan_finds_first_return() {
        let field = RotatingWaveform { rate: -1.0, omega: 0.0, theta_b: 0.0 };
        let axis = transport_axis(&field, &UnitVector3::from_spherical(0.7, 0.0), &grid(3.0 * TAU, 6000));
        let c = scan_closure(&axis, 1e-6).unwrap();
        assert_eq!(c.index, 2000);
        assert!(matches!(closure_at(&axis, 1000, 1e-6), Err(PhaseError::NotClosed(_))));
    }

    #[test]
    fn lab_rotation_invariance() {
        let field = sign_flipping_field();
        let g = TimeGrid::from_step(TAU, 2e-4 * TAU).unwrap();
        let e0 = closing_axis(&field, &g, -1.0);
        let axis = transport_axis(&field, &e0, &g);
        let base = cyclic_geometric_phase(&axis, &closure_at_end(&axis, CLOSURE_TOL).unwrap(), 1.0).gamma;
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rotated = FnWaveform { rate: |t| field.rate(t), direction: move |t| r * field.direction(t) };
        let e0r = UnitVector3::normalize(r * e0.into_inner()).unwrap();
        let axis_r = transport_axis(&rotated, &e0r, &g);
        let gamma_r = cyclic_geometric_phase(&axis_r, &closure_at_end(&axis_r, CLOSURE_TOL).unwrap(), 1.0).gamma;
        assert!(phase_distance(base, gamma_r) < 1e-6);
    }

    #[test]
    fn refinement_invariance() {
        let field = sign_flipping_field();
        let coarse = TimeGrid::from_step(TAU, 2e-4 * TAU).unwrap();
        let fine = TimeGrid::from_step(TAU, 1e-4 * TAU).unwrap();
        let e0 = closing_axis(&field, &fine, -1.0);
        let gam = |g: &TimeGrid| {
            let axis = transport_axis(&field, &e0, g);
            cyclic_geometric_phase(&axis, &closure_at_end(&axis, CLOSURE_TOL).unwrap(), 0.5).gamma
        };
        assert!(phase_distance(gam(&coarse), gam(&fine)) < 1e-6);
    }

    #[test]
    fn spin_half_axis_makes_eigenstate() {
        let ops = spin_operators(SpinQuantum::half());
        let psi = crate::linalg::CVector::from_vec(vec![C64::new(0.6, 0.1), C64::new(-0.3, 0.7)]);
        let psi = psi.normalize();
        let e0 = spin_half_axis(&ops, &psi).unwrap();
        let r = (ops.dot(&e0) * &psi - &psi * C64::new(0.5, 0.0)).norm();
        assert!(r < 1e-10);
    }

    #[test]
    fn sampled_waveform_interpolates() {
        let field = RotatingWaveform { rate: 1.2, omega: 0.8, theta_b: 0.9 };
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
        let s = SampledWaveform::new(
            times.clone(),
            times.iter().map(|&t| field.rate(t)).collect(),
            times.iter().map(|&t| field.direction(t)).collect(),
        )
        .unwrap();
        for &t in &[0.0, 0.0031, 4.567, 9.999, 10.0] {
            assert!((s.direction(t) - field.direction(t)).norm() < 1e-5);
            assert!((s.rate(t) - 1.2).abs() < 1e-12);
            assert!((s.direction(t).norm() - 1.0).abs() < 1e-12);
        }
        assert!(SampledWaveform::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![Vec3::z(), Vec3::z()]).is_err());
        assert!(SampledWaveform::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![Vec3::z(), Vec3::z() * 2.0]).is_err());
    }
}
