//! Charged particle with orbital angular momentum `l` and spin `s` on a fixed
//! `(n, l)` shell in a strong magnetic field.
//!
//! `H(t) = eps_nl + omega_B(t) (l + 2s).n(t)`. For the uniformly rotating field
//! the orbital and spin parts precess about separate effective axes `n_L` and
//! `n_S`; for an arbitrary field two eigen-axes `d(t)` and `e(t)` are transported.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::error::{PhaseError, Result};
use crate::general_field::{
    closure_at, transport_with_rate, AxisTrajectory, CyclicClosure, FieldWaveform, TimeGrid, TotalPhaseCheck,
};
use crate::linalg::{c, expectation, identity, kron, kron_vec, phase_distance, wrap_phase, CMatrix, CVector, Vec3, C64};
use crate::neutral_rotating::{corotate, cyclicity_of, precess, EffectiveFrame, Trajectory};
use crate::oracle::{trapezoid, SteppedPropagation};
use crate::rational::lcm;
use crate::spin_algebra::{
    eigenbasis_along, exp_spin, exp_sz, spin_operators, wigner_small_d, SpinOps, SpinQuantum, UnitVector3,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargedParams {
    /// `mu_B B`, positive.
    pub omega_b: f64,
    pub omega: f64,
    pub theta_b: f64,
    pub l: u32,
    pub spin: SpinQuantum,
    /// Shell energy.
    pub epsilon_nl: f64,
}

impl ChargedParams {
    pub fn new(omega_b: f64, omega: f64, theta_b: f64, l: u32, spin: SpinQuantum, epsilon_nl: f64) -> Result<Self> {
        if !(omega_b > 0.0 && omega_b.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("omega_B must be positive, got {omega_b}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(PhaseError::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if !(0.0..=PI).contains(&theta_b) {
            return Err(PhaseError::InvalidParameter(format!("theta_B must lie in [0, pi], got {theta_b}")));
        }
        if !epsilon_nl.is_finite() {
            return Err(PhaseError::InvalidParameter("epsilon_nl must be finite".into()));
        }
        Ok(Self { omega_b, omega, theta_b, l, spin, epsilon_nl })
    }

    /// The point with `omega_L = omega` and `omega_S = 2 omega`, in units of `omega`.
    pub fn double_ratio_point(l: u32, spin: SpinQuantum) -> Self {
        let theta_b = (3f64.sqrt() / (2.0 * 2f64.sqrt())).acos();
        Self { omega_b: 1.5f64.sqrt(), omega: 1.0, theta_b, l, spin, epsilon_nl: 0.0 }
    }

    pub fn dim(&self) -> usize {
        (2 * self.l as usize + 1) * self.spin.dim()
    }

    pub fn tau(&self) -> f64 {
        TAU / self.omega
    }

    pub fn field_direction(&self, t: f64) -> Vec3 {
        let (sb, cb) = self.theta_b.sin_cos();
        let (sw, cw) = (self.omega * t).sin_cos();
        Vec3::new(sb * cw, sb * sw, cb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualFrame {
    pub orbital: EffectiveFrame,
    pub spin: EffectiveFrame,
}

pub fn dual_frames(p: &ChargedParams) -> DualFrame {
    DualFrame {
        orbital: EffectiveFrame::from_components(p.omega_b, p.omega, p.theta_b, 1.0, -1.0),
        spin: EffectiveFrame::from_components(p.omega_b, p.omega, p.theta_b, 2.0, -1.0),
    }
}

/// Orbital and spin operators embedded in the product space, orbital index outer.
#[derive(Debug, Clone)]
pub struct ShellOperators {
    pub orbital: SpinOps,
    pub spin: SpinOps,
    pub l: [CMatrix; 3],
    pub s: [CMatrix; 3],
}

impl ShellOperators {
    pub fn new(l: u32, spin: SpinQuantum) -> Self {
        let orbital = spin_operators(SpinQuantum::integer(l));
        let spin_ops = spin_operators(spin);
        let (il, is) = (identity(orbital.dim()), identity(spin_ops.dim()));
        let lc = orbital.components().map(|m| kron(m, &is));
        let sc = spin_ops.components().map(|m| kron(&il, m));
        Self { orbital, spin: spin_ops, l: lc, s: sc }
    }

    pub fn dim(&self) -> usize {
        self.orbital.dim() * self.spin.dim()
    }

    pub fn orbital_mean(&self, psi: &CVector) -> Vec3 {
        Vec3::new(expectation(&self.l[0], psi), expectation(&self.l[1], psi), expectation(&self.l[2], psi))
    }

    pub fn spin_mean(&self, psi: &CVector) -> Vec3 {
        Vec3::new(expectation(&self.s[0], psi), expectation(&self.s[1], psi), expectation(&self.s[2], psi))
    }

    /// `(l + 2s).n`.
    pub fn coupling(&self, n: &Vec3) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for i in 0..3 {
            out += &self.l[i] * c(n[i]) + &self.s[i] * c(2.0 * n[i]);
        }
        out
    }

    pub fn l_dot(&self, n: &Vec3) -> CMatrix {
        &self.l[0] * c(n.x) + &self.l[1] * c(n.y) + &self.l[2] * c(n.z)
    }

    pub fn s_dot(&self, n: &Vec3) -> CMatrix {
        &self.s[0] * c(n.x) + &self.s[1] * c(n.y) + &self.s[2] * c(n.z)
    }
}

/// Amplitudes on the product basis `|m> (x) |m_s>`, `m = l..-l` outer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    pub amplitudes: CVector,
    pub l: u32,
    pub spin: SpinQuantum,
}

impl ProductState {
    pub fn new(amplitudes: CVector, l: u32, spin: SpinQuantum) -> Result<Self> {
        let dim = (2 * l as usize + 1) * spin.dim();
        if amplitudes.len() != dim {
            return Err(PhaseError::DimensionMismatch { expected: dim, got: amplitudes.len() });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(PhaseError::NotNormalized(norm));
        }
        Ok(Self { amplitudes, l, spin })
    }

    /// Product of an orbital and a spin state.
    pub fn product(orbital: &CVector, spin_state: &CVector, l: u32, spin: SpinQuantum) -> Result<Self> {
        Self::new(kron_vec(orbital, spin_state), l, spin)
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveEigenstate {
    pub state: ProductState,
    pub energy: f64,
    pub m: f64,
    pub m_s: f64,
}

/// Closed-form rotating-field system.
#[derive(Debug, Clone)]
pub struct ChargedSystem {
    pub params: ChargedParams,
    pub frames: DualFrame,
    pub ops: ShellOperators,
}

impl ChargedSystem {
    pub fn new(params: ChargedParams) -> Self {
        Self { frames: dual_frames(&params), ops: ShellOperators::new(params.l, params.spin), params }
    }

    pub fn effective_hamiltonian(&self) -> CMatrix {
        let f = &self.frames;
        identity(self.ops.dim()) * c(self.params.epsilon_nl)
            + self.ops.l_dot(&f.orbital.n_s) * c(f.orbital.omega_s)
            + self.ops.s_dot(&f.spin.n_s) * c(f.spin.omega_s)
    }

    /// `H(t) = eps_nl + omega_B (l + 2s).n(t)` as a sampler for the oracle.
    pub fn hamiltonian(&self) -> impl Fn(f64) -> CMatrix + Sync + '_ {
        let p = &self.params;
        let base = identity(self.ops.dim()) * c(p.epsilon_nl);
        move |t| &base + self.ops.coupling(&p.field_direction(t)) * c(p.omega_b)
    }

    /// `U(t) = exp(-i w t j_z) exp(-i H_eff t)`, both factors as Kronecker products.
    pub fn evolution_operator(&self, t: f64) -> CMatrix {
        let p = &self.params;
        let f = &self.frames;
        let lspin = SpinQuantum::integer(p.l);
        let w = kron(&exp_sz(lspin, p.omega * t), &exp_sz(p.spin, p.omega * t));
        let orb = exp_spin(&self.ops.orbital, &f.orbital.n_s, -f.orbital.omega_s * t).entries;
        let spn = exp_spin(&self.ops.spin, &f.spin.n_s, -f.spin.omega_s * t).entries;
        w * kron(&orb, &spn) * C64::from_polar(1.0, -p.epsilon_nl * t)
    }

    pub fn evolve(&self, psi0: &CVector, t: f64) -> CVector {
        self.evolution_operator(t) * psi0
    }

    pub fn effective_eigenstates(&self) -> Vec<EffectiveEigenstate> {
        let p = &self.params;
        let f = &self.frames;
        let dl = wigner_small_d(&self.ops.orbital, f.orbital.theta_s);
        let ds = wigner_small_d(&self.ops.spin, f.spin.theta_s);
        let mut out = Vec::with_capacity(p.dim());
        let lspin = SpinQuantum::integer(p.l);
        for (i, m) in lspin.m_values().enumerate() {
            for (j, m_s) in p.spin.m_values().enumerate() {
                let amplitudes = kron_vec(&dl.column(i).into_owned(), &ds.column(j).into_owned());
                out.push(EffectiveEigenstate {
                    state: ProductState { amplitudes, l: p.l, spin: p.spin },
                    energy: p.epsilon_nl + m * f.orbital.omega_s + m_s * f.spin.omega_s,
                    m,
                    m_s,
                });
            }
        }
        out
    }

    /// Superposition of effective eigenstates, coefficients in basis order.
    pub fn superpose(&self, coefficients: &[C64]) -> Result<ProductState> {
        let states = self.effective_eigenstates();
        if coefficients.len() != states.len() {
            return Err(PhaseError::DimensionMismatch { expected: states.len(), got: coefficients.len() });
        }
        let mut psi = CVector::zeros(self.ops.dim());
        for (cm, st) in coefficients.iter().zip(&states) {
            psi += &st.state.amplitudes * *cm;
        }
        ProductState::new(psi, self.params.l, self.params.spin)
    }

    /// Unentangled superposition `(sum_m a_m zeta_m) (x) (sum_ms b_ms chi_ms)`.
    pub fn superpose_product(&self, orbital: &[C64], spin: &[C64]) -> Result<ProductState> {
        let coefficients: Vec<C64> = orbital.iter().flat_map(|a| spin.iter().map(move |b| a * b)).collect();
        self.superpose(&coefficients)
    }

    /// `f(t)` and `u(t)` from `u0`; `g(t)` and `v(t)` from `v0`.
    pub fn mean_trajectories(&self, u0: &Vec3, v0: &Vec3, times: &[f64]) -> (Trajectory, Trajectory) {
        let w = self.params.omega;
        let build = |x0: &Vec3, frame: &EffectiveFrame| {
            let g: Vec<Vec3> = times.iter().map(|&t| precess(x0, &frame.n_s, frame.omega_s * t)).collect();
            let v = times.iter().zip(&g).map(|(&t, gi)| corotate(gi, w * t)).collect();
            Trajectory { times: times.to_vec(), vectors: v, g_vectors: g }
        };
        (build(u0, &self.frames.orbital), build(v0, &self.frames.spin))
    }
}

pub fn charged_evolution(p: &ChargedParams, t: f64) -> CMatrix {
    ChargedSystem::new(*p).evolution_operator(t)
}

pub fn effective_eigenstates(p: &ChargedParams) -> Vec<EffectiveEigenstate> {
    ChargedSystem::new(*p).effective_eigenstates()
}

/// Windings per cycle: `K` field rotations, `K_L` orbital and `K_S` spin precessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualCyclicInfo {
    pub k: u64,
    pub k_l: u64,
    pub k_s: u64,
    pub period: f64,
}

pub fn detect_dual_cyclicity(p: &ChargedParams, tol: f64, k_max: u64) -> Result<DualCyclicInfo> {
    let frames = dual_frames(p);
    let a = cyclicity_of(&frames.orbital, p.omega, tol, k_max)?;
    let b = cyclicity_of(&frames.spin, p.omega, tol, k_max)?;
    let k = lcm(a.k, b.k);
    Ok(DualCyclicInfo { k, k_l: k / a.k * a.k_s, k_s: k / b.k * b.k_s, period: k as f64 * TAU / p.omega })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualPhaseReport {
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega_u: Option<f64>,
    pub omega_v: Option<f64>,
    pub info: DualCyclicInfo,
    pub general_relation_residual: f64,
    /// Only defined for spin 1/2.
    pub spin_half_relation_residual: Option<f64>,
    pub cyclic_fidelity: f64,
    pub overlap_phase: f64,
    #[serde(skip)]
    pub u0: Vec3,
    #[serde(skip)]
    pub v0: Vec3,
}

pub fn charged_phase_report(p: &ChargedParams, psi0: &ProductState) -> Result<DualPhaseReport> {
    let info = detect_dual_cyclicity(p, crate::neutral_rotating::DEFAULT_CYCLIC_TOL, crate::neutral_rotating::DEFAULT_K_MAX)?;
    ChargedSystem::new(*p).phase_report(psi0, &info)
}

impl ChargedSystem {
    pub fn total_phase(&self, info: &DualCyclicInfo) -> f64 {
        let p = &self.params;
        let (k, kl, ks) = (info.k as f64, info.k_l as f64, info.k_s as f64);
        wrap_phase(-p.epsilon_nl * info.period - p.l as f64 * (TAU * k + TAU * kl) - p.spin.value() * (TAU * k + TAU * ks))
    }

    pub fn dynamic_phase(&self, u0: &Vec3, v0: &Vec3, info: &DualCyclicInfo) -> f64 {
        let f = &self.frames;
        let (k, kl, ks) = (info.k as f64, info.k_l as f64, info.k_s as f64);
        let (ul, vs) = (u0.dot(&f.orbital.n_s), v0.dot(&f.spin.n_s));
        -self.params.epsilon_nl * info.period - TAU * kl * ul - TAU * ks * vs
            - TAU * k * (f.orbital.cos_theta_s * ul + f.spin.cos_theta_s * vs)
    }

    /// Geometric phase written directly in terms of `u0` and `v0`, in `(-pi, pi]`.
    pub fn geometric_phase(&self, u0: &Vec3, v0: &Vec3, info: &DualCyclicInfo) -> f64 {
        let f = &self.frames;
        let (k, kl, ks) = (info.k as f64, info.k_l as f64, info.k_s as f64);
        let (l, s) = (self.params.l as f64, self.params.spin.value());
        let (ul, vs) = (u0.dot(&f.orbital.n_s), v0.dot(&f.spin.n_s));
        wrap_phase(
            -TAU * k * (l - f.orbital.cos_theta_s * ul) - TAU * k * (s - f.spin.cos_theta_s * vs)
                - (l - ul) * TAU * kl
                - (s - vs) * TAU * ks,
        )
    }

    pub fn phase_report(&self, psi0: &ProductState, info: &DualCyclicInfo) -> Result<DualPhaseReport> {
        let psi = &psi0.amplitudes;
        if psi.len() != self.ops.dim() {
            return Err(PhaseError::DimensionMismatch { expected: self.ops.dim(), got: psi.len() });
        }
        let overlap = psi.dotc(&self.evolve(psi, info.period));
        let cyclic_fidelity = overlap.norm();
        if cyclic_fidelity < crate::neutral_rotating::CLOSED_FORM_FIDELITY {
            return Err(PhaseError::FidelityFailure(cyclic_fidelity));
        }
        let u0 = self.ops.orbital_mean(psi);
        let v0 = self.ops.spin_mean(psi);
        let delta = self.total_phase(info);
        let beta = self.dynamic_phase(&u0, &v0, info);
        let (omega_u, omega_v) = charged_solid_angles(&self.frames, &u0, &v0, info);
        let mut report = DualPhaseReport {
            delta,
            beta,
            gamma: wrap_phase(delta - beta),
            omega_u: omega_u.ok(),
            omega_v: omega_v.ok(),
            info: *info,
            general_relation_residual: 0.0,
            spin_half_relation_residual: None,
            cyclic_fidelity,
            overlap_phase: overlap.arg(),
            u0,
            v0,
        };
        let (r_general, r_half) = charged_relation_residuals(&report, &self.params);
        report.general_relation_residual = r_general;
        report.spin_half_relation_residual = r_half;
        Ok(report)
    }
}

fn cycle_solid_angle(frame: &EffectiveFrame, x0: &Vec3, precessions: u64, k: u64) -> Result<f64> {
    let norm = x0.norm();
    if norm < 1e-12 {
        return Err(PhaseError::UndefinedSolidAngle);
    }
    let c = x0.dot(&frame.n_s) / norm;
    Ok(TAU * precessions as f64 * (1.0 - c) + TAU * k as f64 * (1.0 - frame.cos_theta_s * c))
}

/// Unreduced solid angles of the orbital and spin mean-vector traces.
pub fn charged_solid_angles(frames: &DualFrame, u0: &Vec3, v0: &Vec3, info: &DualCyclicInfo) -> (Result<f64>, Result<f64>) {
    (
        cycle_solid_angle(&frames.orbital, u0, info.k_l, info.k),
        cycle_solid_angle(&frames.spin, v0, info.k_s, info.k),
    )
}

/// Geometric phase predicted by the solid angles plus both extra terms.
pub fn extra_terms_prediction(omega_u: Option<f64>, omega_v: Option<f64>, u0: f64, v0: f64, p: &ChargedParams, info: &DualCyclicInfo) -> f64 {
    let (k, kl, ks) = (info.k as f64, info.k_l as f64, info.k_s as f64);
    -u0 * omega_u.unwrap_or(0.0) - v0 * omega_v.unwrap_or(0.0)
        + (u0 - p.l as f64) * (TAU * k + TAU * kl)
        + (v0 - p.spin.value()) * (TAU * k + TAU * ks)
}

/// Spin-1/2 form: the spin extra term is absent and `|v0| = 1/2`.
pub fn spin_half_prediction(omega_u: Option<f64>, omega_v: Option<f64>, u0: f64, info: &DualCyclicInfo) -> f64 {
    let (k, kl) = (info.k as f64, info.k_l as f64);
    -u0 * omega_u.unwrap_or(0.0) - 0.5 * omega_v.unwrap_or(0.0) + u0 * (TAU * k + TAU * kl)
}

/// Distances mod `2 pi` of `gamma` from the two extra-term relations.
pub fn charged_relation_residuals(report: &DualPhaseReport, p: &ChargedParams) -> (f64, Option<f64>) {
    let (u0, v0) = (report.u0.norm(), report.v0.norm());
    let r_general = phase_distance(report.gamma, extra_terms_prediction(report.omega_u, report.omega_v, u0, v0, p, &report.info));
    let r_half = (p.spin == SpinQuantum::half())
        .then(|| phase_distance(report.gamma, spin_half_prediction(report.omega_u, report.omega_v, u0, &report.info)));
    (r_general, r_half)
}

/// `H(t) = eps_nl + omega_B(t) (l + 2s).n(t)` for an arbitrary field.
pub fn general_hamiltonian<'a>(field: &'a dyn FieldWaveform, ops: &'a ShellOperators, epsilon_nl: f64) -> impl Fn(f64) -> CMatrix + Sync + 'a {
    let base = identity(ops.dim()) * c(epsilon_nl);
    move |t| &base + ops.coupling(&field.direction(t)) * c(field.rate(t))
}

/// Orbital axis `d` (rate `+omega_B`) and spin axis `e` (rate `+2 omega_B`).
#[derive(Debug, Clone)]
pub struct DualAxisTrajectory {
    pub d: AxisTrajectory,
    pub e: AxisTrajectory,
}

pub fn dual_axis_transport(field: &dyn FieldWaveform, d0: &UnitVector3, e0: &UnitVector3, grid: &TimeGrid) -> DualAxisTrajectory {
    DualAxisTrajectory { d: transport_with_rate(field, d0, grid, 1.0), e: transport_with_rate(field, e0, grid, 2.0) }
}

/// Common eigenstate of `l.d0` and `s.e0`.
pub fn axis_eigenstate(ops: &ShellOperators, d0: &UnitVector3, e0: &UnitVector3, m: f64, m_s: f64) -> Result<CVector> {
    let a = eigenbasis_along(&ops.orbital, d0).state(m)?;
    let b = eigenbasis_along(&ops.spin, e0).state(m_s)?;
    Ok(kron_vec(&a, &b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualClosure {
    pub d: CyclicClosure,
    pub e: CyclicClosure,
}

pub fn dual_closure_at(dual: &DualAxisTrajectory, index: usize, tol: f64) -> Result<DualClosure> {
    Ok(DualClosure { d: closure_at(&dual.d, index, tol)?, e: closure_at(&dual.e, index, tol)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualGeometricPhase {
    /// `-m Omega_d - m_s Omega_e` in `(-pi, pi]`.
    pub gamma: f64,
    pub omega_d: f64,
    pub omega_e: f64,
    pub omega_u: Option<f64>,
    pub omega_v: Option<f64>,
    /// `-|m| Omega_u - |m_s| Omega_v` in `(-pi, pi]`.
    pub gamma_from_uv: f64,
}

pub fn dual_geometric_phase(dual: &DualAxisTrajectory, closure: &DualClosure, m: f64, m_s: f64) -> DualGeometricPhase {
    let gd = crate::general_field::cyclic_geometric_phase(&dual.d, &closure.d, m);
    let ge = crate::general_field::cyclic_geometric_phase(&dual.e, &closure.e, m_s);
    let gamma_from_uv = wrap_phase(-m.abs() * gd.omega_v.unwrap_or(0.0) - m_s.abs() * ge.omega_v.unwrap_or(0.0));
    DualGeometricPhase {
        gamma: wrap_phase(-m * gd.omega_e - m_s * ge.omega_e),
        omega_d: gd.omega_e,
        omega_e: ge.omega_e,
        omega_u: gd.omega_v,
        omega_v: ge.omega_v,
        gamma_from_uv,
    }
}

/// Largest `||(l.d) psi - m psi||` and `||(s.e) psi - m_s psi||` along the run.
pub fn dual_eigen_residuals(ops: &ShellOperators, states: &SteppedPropagation, dual: &DualAxisTrajectory, m: f64, m_s: f64) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for ((psi, d), e) in states.states.iter().zip(&dual.d.e).zip(&dual.e.e) {
        worst.0 = worst.0.max((ops.l_dot(d) * psi - psi * c(m)).norm());
        worst.1 = worst.1.max((ops.s_dot(e) * psi - psi * c(m_s)).norm());
    }
    worst
}

/// Largest `|u - m d|` and `|v - m_s e|` along the run.
pub fn dual_alignment_errors(ops: &ShellOperators, states: &SteppedPropagation, dual: &DualAxisTrajectory, m: f64, m_s: f64) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for ((psi, d), e) in states.states.iter().zip(&dual.d.e).zip(&dual.e.e) {
        worst.0 = worst.0.max((ops.orbital_mean(psi) - d * m).norm());
        worst.1 = worst.1.max((ops.spin_mean(psi) - e * m_s).norm());
    }
    worst
}

/// Total phase from the accumulated `alpha`, dynamic phase from the propagated state.
#[allow(clippy::too_many_arguments)]
pub fn dual_total_phase_check(
    field: &dyn FieldWaveform,
    ops: &ShellOperators,
    epsilon_nl: f64,
    states: &SteppedPropagation,
    dual: &DualAxisTrajectory,
    closure: &DualClosure,
    m: f64,
    m_s: f64,
) -> Result<TotalPhaseCheck> {
    let idx = closure.d.index;
    if closure.e.index != idx || states.states.len() <= idx {
        return Err(PhaseError::InvalidParameter("closures and state samples do not line up".into()));
    }
    let t = dual.d.times[idx];
    let alpha = m * (dual.d.alpha_per_m[idx] - dual.d.alpha_per_m[0]) + m_s * (dual.e.alpha_per_m[idx] - dual.e.alpha_per_m[0])
        - epsilon_nl * t;
    let delta = wrap_phase(alpha - TAU * (m * closure.d.k as f64 + m_s * closure.e.k as f64));
    let h = general_hamiltonian(field, ops, epsilon_nl);
    let energies: Vec<f64> = states.states[..=idx].iter().zip(&dual.d.times).map(|(psi, &t)| expectation(&h(t), psi)).collect();
    let beta = -trapezoid(&energies, dual.d.dt());
    let overlap_phase = states.states[0].dotc(&states.states[idx]).arg();
    Ok(TotalPhaseCheck { delta, beta, gamma: wrap_phase(delta - beta), overlap_phase })
}
