//! Scenario execution: closed-form phases, oracle cross-checks and the
//! report, trajectory and phase-summary files.
//!
//! Everything is computed in memory first; files are only written once the
//! whole run has succeeded.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::charged_atom::{
    axis_eigenstate, dual_alignment_errors, dual_axis_transport, dual_closure_at, dual_eigen_residuals,
    dual_geometric_phase, dual_total_phase_check, general_hamiltonian, detect_dual_cyclicity, ChargedParams,
    ChargedSystem, ProductState, ShellOperators,
};
use crate::error::PhaseError;
use crate::general_field::{
    alignment_error, find_closing_axis, closure_at_end, cyclic_geometric_phase, eigen_residual, neutral_hamiltonian,
    total_phase_check, transport_axis, FieldWaveform, TimeGrid,
};
use crate::linalg::{phase_distance, CVector, Vec3};
use crate::neutral_rotating::{cyclicity_of, uniform_grid, MuSign, RotatingFieldParams, RotatingSystem};
use crate::oracle::{phase_decompose, split_solid_angle_quadrature, timestep_propagate, DEFAULT_DT_FRACTION};
use crate::scenario::{fixed_axis, AxisSpec, Scenario, ScenarioKind, SchemaError, Tolerances};
use crate::spin_algebra::{eigenbasis_along, spin_operators, SpinQuantum, UnitVector3};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error("scenario is not cyclic: {0}")]
    NonCyclic(String),
    #[error("numerical trust failure: {0}")]
    Trust(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::NonCyclic(_) => 3,
            RunError::Trust(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

impl From<SchemaError> for RunError {
    fn from(e: SchemaError) -> Self {
        RunError::Schema(e.0)
    }
}

impl From<PhaseError> for RunError {
    fn from(e: PhaseError) -> Self {
        match e {
            PhaseError::NotCyclic { .. } | PhaseError::NotClosed(_) => RunError::NonCyclic(e.to_string()),
            PhaseError::InvalidParameter(_) | PhaseError::DimensionMismatch { .. } | PhaseError::NotNormalized(_) => {
                RunError::Schema(e.to_string())
            }
            _ => RunError::Trust(e.to_string()),
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dt: Option<f64>,
    pub periods: Option<f64>,
    /// Cyclicity tolerance: the rational-ratio tolerance for rotating
    /// fields, the closure tolerance for general fields.
    pub tolerance: Option<f64>,
    /// Skip the phase computation and emit only the trajectory.
    pub trajectory_only: bool,
}

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const PHASES_FILE: &str = "phases.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega_u: Option<f64>,
    pub omega_v: Option<f64>,
    /// Cyclic fidelity of the oracle run.
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRefs {
    pub trajectory: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub tolerances: Tolerances,
    pub dt: f64,
    pub horizon: f64,
    /// Winding numbers and period, or the closure of the transported axes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phases: Option<PhaseSummary>,
    /// Module-specific phase record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
    /// Oracle residuals keyed by name.
    pub oracle: BTreeMap<String, f64>,
    pub files: FileRefs,
    pub warnings: Vec<String>,
}

/// A finished run, not yet written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub report_json: String,
    pub trajectory_csv: String,
    pub phases_csv: Option<String>,
}

impl RunOutput {
    /// Writes all files into `dir` by rename from temporaries, so a failure
    /// leaves no partial outputs behind.
    pub fn write_to(&self, dir: &Path) -> RunResult<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files: Vec<(&str, &str)> = vec![(TRAJECTORY_FILE, &self.trajectory_csv)];
        if let Some(p) = &self.phases_csv {
            files.push((PHASES_FILE, p));
        }
        files.push((REPORT_FILE, &self.report_json));
        let mut staged = Vec::with_capacity(files.len());
        for (name, body) in &files {
            let mut f = tempfile::NamedTempFile::new_in(dir)?;
            f.write_all(body.as_bytes())?;
            staged.push((f, dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, target) in staged {
            tmp.persist(&target).map_err(|e| RunError::Io(e.error))?;
            written.push(target);
        }
        Ok(written)
    }

    /// Writes only the trajectory file.
    pub fn write_trajectory_to(&self, dir: &Path) -> RunResult<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut f = tempfile::NamedTempFile::new_in(dir)?;
        f.write_all(self.trajectory_csv.as_bytes())?;
        let target = dir.join(TRAJECTORY_FILE);
        f.persist(&target).map_err(|e| RunError::Io(e.error))?;
        Ok(target)
    }
}

/// 17 significant digits, `nan` for missing values.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    fmt_num(x.unwrap_or(f64::NAN))
}

pub fn trajectory_csv(times: &[f64], v: &[Vec3], u: Option<&[Vec3]>) -> String {
    let mut out = String::with_capacity(times.len() * 80);
    out.push_str(if u.is_some() { "t,vx,vy,vz,ux,uy,uz\n" } else { "t,vx,vy,vz\n" });
    for (k, t) in times.iter().enumerate() {
        let mut fields = vec![fmt_num(*t), fmt_num(v[k].x), fmt_num(v[k].y), fmt_num(v[k].z)];
        if let Some(u) = u {
            fields.extend([fmt_num(u[k].x), fmt_num(u[k].y), fmt_num(u[k].z)]);
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn phases_csv(p: &PhaseSummary) -> String {
    format!(
        "delta,beta,gamma,omega_u,omega_v,fidelity\n{},{},{},{},{},{}\n",
        fmt_num(p.delta),
        fmt_num(p.beta),
        fmt_num(p.gamma),
        opt_num(p.omega_u),
        opt_num(p.omega_v),
        fmt_num(p.fidelity)
    )
}

/// Loads and runs a scenario file.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> RunResult<RunOutput> {
    let scenario = Scenario::from_path(path)?;
    run(&scenario, opts)
}

/// Runs a parsed scenario.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> RunResult<RunOutput> {
    let mut tol = scenario.tolerances();
    let general = matches!(scenario.kind, ScenarioKind::NeutralGeneral | ScenarioKind::ChargedGeneral);
    if let Some(t) = opts.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            return Err(RunError::Schema(format!("tolerance must be positive, got {t}")));
        }
        if general {
            tol.closure = t;
        } else {
            tol.cyclic = t;
        }
    }
    for (name, v) in [("dt", opts.dt), ("periods", opts.periods)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RunError::Schema(format!("{name} must be positive, got {v}")));
            }
        }
    }
    if general && opts.periods.is_some() {
        return Err(RunError::Schema("periods does not apply to general fields; set grid.horizon".into()));
    }
    let mut ctx = Context { scenario, opts, tol, warnings: Vec::new(), oracle: BTreeMap::new() };
    let body = match scenario.kind {
        ScenarioKind::NeutralRotating => ctx.neutral_rotating()?,
        ScenarioKind::ChargedRotating => ctx.charged_rotating()?,
        ScenarioKind::NeutralGeneral => ctx.neutral_general()?,
        ScenarioKind::ChargedGeneral => ctx.charged_general()?,
    };
    ctx.finish(body)
}

struct Body {
    dt: f64,
    horizon: f64,
    cycle: Option<serde_json::Value>,
    phases: Option<PhaseSummary>,
    details: Option<serde_json::Value>,
    times: Vec<f64>,
    v: Vec<Vec3>,
    u: Option<Vec<Vec3>>,
}

struct Context<'a> {
    scenario: &'a Scenario,
    opts: &'a RunOptions,
    tol: Tolerances,
    warnings: Vec<String>,
    oracle: BTreeMap<String, f64>,
}

fn to_json<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("report records serialize")
}

impl Context<'_> {
    fn finish(self, body: Body) -> RunResult<RunOutput> {
        let trajectory = trajectory_csv(&body.times, &body.v, body.u.as_deref());
        let phases_csv = body.phases.as_ref().map(phases_csv);
        let report = RunReport {
            scenario: self.scenario.clone(),
            tolerances: self.tol,
            dt: body.dt,
            horizon: body.horizon,
            cycle: body.cycle,
            phases: body.phases,
            details: body.details,
            oracle: self.oracle,
            files: FileRefs {
                trajectory: TRAJECTORY_FILE.into(),
                phases: phases_csv.as_ref().map(|_| PHASES_FILE.into()),
            },
            warnings: self.warnings,
        };
        let mut report_json = serde_json::to_string_pretty(&report).expect("report serializes");
        report_json.push('\n');
        Ok(RunOutput { report, report_json, trajectory_csv: trajectory, phases_csv })
    }

    fn amplitudes(&mut self, dim: usize) -> RunResult<Option<CVector>> {
        Ok(self.scenario.amplitudes(dim)?.map(|(v, warned)| {
            if warned {
                self.warnings.push("initial_state.amplitudes were not normalized; renormalized".into());
            }
            v
        }))
    }

    fn dt(&self, unit: f64) -> f64 {
        self.opts.dt.or(self.scenario.grid.dt).unwrap_or(DEFAULT_DT_FRACTION * unit)
    }

    /// Horizon for rotating fields: `periods` cycles, or field periods when there is no cycle.
    fn rotating_horizon(&self, cycle: Option<f64>, tau: f64) -> f64 {
        if let Some(periods) = self.opts.periods {
            return periods * cycle.unwrap_or(tau);
        }
        match (self.scenario.grid.periods, self.scenario.grid.horizon) {
            (Some(p), _) => p * cycle.unwrap_or(tau),
            (None, Some(h)) => h,
            (None, None) => cycle.unwrap_or(tau),
        }
    }

    fn named(&self, value: Option<f64>, default: f64, name: &str, spin: SpinQuantum) -> RunResult<f64> {
        let m = value.unwrap_or(default);
        spin.index_of(m)
            .map(|_| m)
            .ok_or_else(|| RunError::Schema(format!("initial_state.{name} = {m} is not a projection of spin {spin}")))
    }

    fn trust(&mut self, name: &str, value: f64, limit: f64) -> RunResult<()> {
        self.oracle.insert(name.into(), value);
        if value.is_nan() || value > limit {
            return Err(RunError::Trust(format!("{name} = {value:e} exceeds {limit:e}")));
        }
        Ok(())
    }

    fn trust_fidelity(&mut self, fidelity: f64) -> RunResult<()> {
        self.oracle.insert("oracle_fidelity".into(), fidelity);
        let floor = 1.0 - self.tol.fidelity;
        if !(fidelity >= floor) {
            return Err(RunError::Trust(format!("oracle cyclic fidelity {fidelity} below {floor}")));
        }
        Ok(())
    }

    fn neutral_rotating(&mut self) -> RunResult<Body> {
        let s = self.scenario;
        let pr = &s.params;
        let spin = s.spin();
        let mu = MuSign::from_sign(s.mu_sign())?;
        let p = RotatingFieldParams::new(pr.omega_b.unwrap(), pr.omega.unwrap(), pr.theta_b.unwrap(), mu, spin)?;
        let sys = RotatingSystem::new(p);
        let psi0 = match self.amplitudes(spin.dim())? {
            Some(v) => v,
            None => {
                let m_s = self.named(s.initial_state.m_s, spin.value(), "m_s", spin)?;
                let axis = match &s.initial_state.e0 {
                    Some(spec) => fixed_axis(spec)?.ok_or_else(|| {
                        RunError::Schema("\"closing\" axes apply to general fields only".into())
                    })?,
                    None => sys.frame.n_s,
                };
                eigenbasis_along(&sys.ops, &axis).state(m_s)?
            }
        };
        let v0 = sys.ops.expectation(&psi0);
        let dt = self.dt(p.tau());
        let info = cyclicity_of(&sys.frame, p.omega, self.tol.cyclic, self.tol.k_max);
        if self.opts.trajectory_only {
            let horizon = self.rotating_horizon(info.as_ref().ok().map(|i| i.period), p.tau());
            let times = grid_times(horizon, dt);
            let traj = sys.trajectory(&v0, &times);
            return Ok(Body {
                dt: times[1] - times[0],
                horizon,
                cycle: info.ok().map(|i| to_json(&i)),
                phases: None,
                details: None,
                times,
                v: traj.vectors,
                u: None,
            });
        }
        let info = info?;
        let report = sys.phase_report(&psi0, &info)?;

        let h = p.hamiltonian(&sys.ops);
        let prop = timestep_propagate(&h, &psi0, dt, info.period)?;
        let dec = phase_decompose(&prop, &h);
        self.trust_fidelity(dec.fidelity)?;
        let gamma_oracle = dec.gamma.ok_or_else(|| RunError::Trust("oracle run is not cyclic".into()))?;
        self.trust("gamma_residual", phase_distance(report.gamma, gamma_oracle), self.tol.oracle)?;
        self.trust("delta_residual", phase_distance(report.delta, dec.delta), self.tol.oracle)?;
        self.trust("relation_residual", report.relation_residual, self.tol.oracle)?;
        if let Some(omega_v) = report.omega_v {
            let one = grid_times(info.period, dt);
            let q = split_solid_angle_quadrature(&sys.trajectory(&v0, &one), &sys.frame.n_s, p.omega)?;
            self.trust("omega_v_residual", (q.value - omega_v).abs(), self.tol.oracle)?;
        }

        let horizon = self.rotating_horizon(Some(info.period), p.tau());
        let times = grid_times(horizon, dt);
        let traj = sys.trajectory(&v0, &times);
        Ok(Body {
            dt: prop.dt,
            horizon,
            cycle: Some(to_json(&info)),
            phases: Some(PhaseSummary {
                delta: report.delta,
                beta: report.beta,
                gamma: report.gamma,
                omega_u: None,
                omega_v: report.omega_v,
                fidelity: dec.fidelity,
            }),
            details: Some(to_json(&report)),
            times,
            v: traj.vectors,
            u: None,
        })
    }

    fn charged_rotating(&mut self) -> RunResult<Body> {
        let s = self.scenario;
        let pr = &s.params;
        let spin = s.spin();
        let l = pr.l.unwrap();
        let p = ChargedParams::new(
            pr.omega_b.unwrap(),
            pr.omega.unwrap(),
            pr.theta_b.unwrap(),
            l,
            spin,
            pr.epsilon_nl.unwrap_or(0.0),
        )?;
        let sys = ChargedSystem::new(p);
        let psi0 = match self.amplitudes(p.dim())? {
            Some(v) => ProductState::new(v, l, spin)?,
            None => {
                let lq = SpinQuantum::integer(l);
                let m = self.named(s.initial_state.m, lq.value(), "m", lq)?;
                let m_s = self.named(s.initial_state.m_s, spin.value(), "m_s", spin)?;
                if s.initial_state.e0.is_some() || s.initial_state.d0.is_some() {
                    return Err(RunError::Schema("rotating charged scenarios start from effective eigenstates; e0/d0 apply to general fields".into()));
                }
                sys.effective_eigenstates()
                    .into_iter()
                    .find(|st| st.m == m && st.m_s == m_s)
                    .map(|st| st.state)
                    .expect("every (m, m_s) pair has an eigenstate")
            }
        };
        let u0 = sys.ops.orbital_mean(&psi0.amplitudes);
        let v0 = sys.ops.spin_mean(&psi0.amplitudes);
        let dt = self.dt(p.tau());
        let info = detect_dual_cyclicity(&p, self.tol.cyclic, self.tol.k_max);
        if self.opts.trajectory_only {
            let horizon = self.rotating_horizon(info.as_ref().ok().map(|i| i.period), p.tau());
            let times = grid_times(horizon, dt);
            let (u, v) = sys.mean_trajectories(&u0, &v0, &times);
            return Ok(Body {
                dt: times[1] - times[0],
                horizon,
                cycle: info.ok().map(|i| to_json(&i)),
                phases: None,
                details: None,
                times,
                v: v.vectors,
                u: Some(u.vectors),
            });
        }
        let info = info?;
        let report = sys.phase_report(&psi0, &info)?;

        let h = sys.hamiltonian();
        let prop = timestep_propagate(&h, &psi0.amplitudes, dt, info.period)?;
        let dec = phase_decompose(&prop, &h);
        self.trust_fidelity(dec.fidelity)?;
        let gamma_oracle = dec.gamma.ok_or_else(|| RunError::Trust("oracle run is not cyclic".into()))?;
        self.trust("gamma_residual", phase_distance(report.gamma, gamma_oracle), self.tol.oracle)?;
        self.trust("delta_residual", phase_distance(report.delta, dec.delta), self.tol.oracle)?;
        self.trust("relation_residual_general", report.general_relation_residual, self.tol.oracle)?;
        if let Some(r) = report.spin_half_relation_residual {
            // informational: the spin-1/2 form needs an unentangled state
            self.oracle.insert("relation_residual_spin_half".into(), r);
        }
        let one = grid_times(info.period, dt);
        let (ut, vt) = sys.mean_trajectories(&u0, &v0, &one);
        if let Some(omega_u) = report.omega_u {
            let q = split_solid_angle_quadrature(&ut, &sys.frames.orbital.n_s, p.omega)?;
            self.trust("omega_u_residual", (q.value - omega_u).abs(), self.tol.oracle)?;
        }
        if let Some(omega_v) = report.omega_v {
            let q = split_solid_angle_quadrature(&vt, &sys.frames.spin.n_s, p.omega)?;
            self.trust("omega_v_residual", (q.value - omega_v).abs(), self.tol.oracle)?;
        }

        let horizon = self.rotating_horizon(Some(info.period), p.tau());
        let times = grid_times(horizon, dt);
        let (u, v) = sys.mean_trajectories(&u0, &v0, &times);
        Ok(Body {
            dt: prop.dt,
            horizon,
            cycle: Some(to_json(&info)),
            phases: Some(PhaseSummary {
                delta: report.delta,
                beta: report.beta,
                gamma: report.gamma,
                omega_u: report.omega_u,
                omega_v: report.omega_v,
                fidelity: dec.fidelity,
            }),
            details: Some(to_json(&report)),
            times,
            v: v.vectors,
            u: Some(u.vectors),
        })
    }

    fn general_grid(&self) -> RunResult<TimeGrid> {
        let horizon = self.scenario.grid.horizon.expect("checked on load");
        Ok(TimeGrid::from_step(horizon, self.dt(horizon))?)
    }

    fn axis(&mut self, spec: Option<&AxisSpec>, field: &dyn FieldWaveform, grid: &TimeGrid, k: f64) -> RunResult<UnitVector3> {
        if let Some(a) = spec.map(fixed_axis).transpose()?.flatten() {
            return Ok(a);
        }
        let (axis, degenerate) = find_closing_axis(field, grid, k);
        if degenerate {
            self.warnings.push("every start axis closes over the horizon; using the initial field direction".into());
        }
        Ok(axis)
    }

    fn reject_amplitudes(&self) -> RunResult<()> {
        if self.scenario.initial_state.amplitudes.is_some() {
            return Err(RunError::Schema("general fields start from axis eigenstates; use m/m_s with e0/d0".into()));
        }
        Ok(())
    }

    fn neutral_general(&mut self) -> RunResult<Body> {
        let s = self.scenario;
        self.reject_amplitudes()?;
        let spin = s.spin();
        let ops = spin_operators(spin);
        let field = s.field()?;
        let field = field.as_ref();
        let grid = self.general_grid()?;
        let m_s = self.named(s.initial_state.m_s, spin.value(), "m_s", spin)?;
        let e0 = self.axis(s.initial_state.e0.as_ref(), field, &grid, -1.0)?;
        let axis = transport_axis(field, &e0, &grid);
        if axis.is_coarse() {
            self.warnings.push(format!("axis rotates {:.3} rad in one step; reduce dt", axis.max_step_rotation));
        }
        let times = axis.times.clone();
        let v: Vec<Vec3> = axis.e.iter().map(|e| e * m_s).collect();
        if self.opts.trajectory_only {
            return Ok(Body { dt: grid.dt(), horizon: grid.horizon, cycle: None, phases: None, details: None, times, v, u: None });
        }
        let closure = closure_at_end(&axis, self.tol.closure)?;
        let psi0 = eigenbasis_along(&ops, &e0).state(m_s)?;
        let h = neutral_hamiltonian(field, &ops);
        let prop = timestep_propagate(&h, &psi0, grid.dt(), grid.horizon)?;
        let dec = phase_decompose(&prop, &h);
        let geo = cyclic_geometric_phase(&axis, &closure, m_s);
        let total = total_phase_check(field, &ops, &prop, &axis, &closure, m_s)?;
        self.trust_fidelity(dec.fidelity)?;
        self.trust("eigen_residual", eigen_residual(&ops, &prop, &axis, m_s)?, self.tol.oracle)?;
        self.trust("alignment_error", alignment_error(&ops, &prop, &axis, m_s), self.tol.oracle)?;
        let gamma_oracle = dec.gamma.ok_or_else(|| RunError::Trust("oracle run is not cyclic".into()))?;
        self.trust("gamma_residual", phase_distance(geo.gamma, gamma_oracle), self.tol.oracle)?;
        self.trust("delta_residual", phase_distance(total.delta, dec.delta), self.tol.oracle)?;
        Ok(Body {
            dt: grid.dt(),
            horizon: grid.horizon,
            cycle: Some(to_json(&closure)),
            phases: Some(PhaseSummary {
                delta: total.delta,
                beta: total.beta,
                gamma: geo.gamma,
                omega_u: None,
                omega_v: geo.omega_v,
                fidelity: dec.fidelity,
            }),
            details: Some(serde_json::json!({ "geometric": geo, "total": total, "e0": [e0.x, e0.y, e0.z] })),
            times,
            v,
            u: None,
        })
    }

    fn charged_general(&mut self) -> RunResult<Body> {
        let s = self.scenario;
        self.reject_amplitudes()?;
        let spin = s.spin();
        let l = s.params.l.unwrap();
        let lq = SpinQuantum::integer(l);
        let eps = s.params.epsilon_nl.unwrap_or(0.0);
        if !eps.is_finite() {
            return Err(RunError::Schema("epsilon_nl must be finite".into()));
        }
        let ops = ShellOperators::new(l, spin);
        let field = s.field()?;
        let field = field.as_ref();
        let grid = self.general_grid()?;
        let m = self.named(s.initial_state.m, lq.value(), "m", lq)?;
        let m_s = self.named(s.initial_state.m_s, spin.value(), "m_s", spin)?;
        let d0 = self.axis(s.initial_state.d0.as_ref(), field, &grid, 1.0)?;
        let e0 = self.axis(s.initial_state.e0.as_ref(), field, &grid, 2.0)?;
        let dual = dual_axis_transport(field, &d0, &e0, &grid);
        if dual.d.is_coarse() || dual.e.is_coarse() {
            self.warnings.push("axes rotate more than 0.1 rad in one step; reduce dt".into());
        }
        let times = dual.d.times.clone();
        let v: Vec<Vec3> = dual.e.e.iter().map(|e| e * m_s).collect();
        let u: Vec<Vec3> = dual.d.e.iter().map(|d| d * m).collect();
        if self.opts.trajectory_only {
            return Ok(Body { dt: grid.dt(), horizon: grid.horizon, cycle: None, phases: None, details: None, times, v, u: Some(u) });
        }
        let closure = dual_closure_at(&dual, dual.d.len() - 1, self.tol.closure)?;
        let psi0 = axis_eigenstate(&ops, &d0, &e0, m, m_s)?;
        let h = general_hamiltonian(field, &ops, eps);
        let prop = timestep_propagate(&h, &psi0, grid.dt(), grid.horizon)?;
        let dec = phase_decompose(&prop, &h);
        let geo = dual_geometric_phase(&dual, &closure, m, m_s);
        let total = dual_total_phase_check(field, &ops, eps, &prop, &dual, &closure, m, m_s)?;
        self.trust_fidelity(dec.fidelity)?;
        let (rd, re) = dual_eigen_residuals(&ops, &prop, &dual, m, m_s);
        self.trust("eigen_residual_orbital", rd, self.tol.oracle)?;
        self.trust("eigen_residual_spin", re, self.tol.oracle)?;
        let (ad, ae) = dual_alignment_errors(&ops, &prop, &dual, m, m_s);
        self.trust("alignment_error_orbital", ad, self.tol.oracle)?;
        self.trust("alignment_error_spin", ae, self.tol.oracle)?;
        let gamma_oracle = dec.gamma.ok_or_else(|| RunError::Trust("oracle run is not cyclic".into()))?;
        self.trust("gamma_residual", phase_distance(geo.gamma, gamma_oracle), self.tol.oracle)?;
        self.trust("delta_residual", phase_distance(total.delta, dec.delta), self.tol.oracle)?;
        Ok(Body {
            dt: grid.dt(),
            horizon: grid.horizon,
            cycle: Some(to_json(&closure)),
            phases: Some(PhaseSummary {
                delta: total.delta,
                beta: total.beta,
                gamma: geo.gamma,
                omega_u: geo.omega_u,
                omega_v: geo.omega_v,
                fidelity: dec.fidelity,
            }),
            details: Some(serde_json::json!({
                "geometric": geo,
                "total": total,
                "d0": [d0.x, d0.y, d0.z],
                "e0": [e0.x, e0.y, e0.z],
            })),
            times,
            v,
            u: Some(u),
        })
    }
}

/// Equal steps not longer than `dt` covering `[0, horizon]`.
fn grid_times(horizon: f64, dt: f64) -> Vec<f64> {
    let n = ((horizon / dt) - 1e-9).ceil().max(6.0) as usize;
    uniform_grid(horizon, n)
}
