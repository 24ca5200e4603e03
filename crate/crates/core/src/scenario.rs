//! Scenario files: a TOML document with `kind`, `params`, `initial_state`,
//! `grid` and `tolerances` tables.
//!
//! Any numeric key ending in `_deg` is read in degrees and stored in radians
//! under the key without the suffix.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::general_field::{FieldWaveform, HarmonicWaveform, RotatingWaveform, SampledWaveform};
use crate::linalg::{CVector, Vec3, C64};
use crate::spin_algebra::SpinQuantum;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("{0}")]
pub struct SchemaError(pub String);

fn schema(msg: impl Into<String>) -> SchemaError {
    SchemaError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    NeutralRotating,
    NeutralGeneral,
    ChargedRotating,
    ChargedGeneral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub params: ParamsSpec,
    #[serde(default)]
    pub initial_state: StateSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
}

/// Spin given as `"3/2"`, `"1"` or a number such as `1.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpinValue {
    Text(String),
    Number(f64),
}

impl SpinValue {
    pub fn quantum(&self) -> Result<SpinQuantum, SchemaError> {
        let text = match self {
            SpinValue::Text(s) => s.clone(),
            SpinValue::Number(x) => x.to_string(),
        };
        text.parse().map_err(|_| schema(format!("invalid spin {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(rename = "omega_B", skip_serializing_if = "Option::is_none")]
    pub omega_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(rename = "theta_B", skip_serializing_if = "Option::is_none")]
    pub theta_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_sign: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spin: Option<SpinValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_nl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldSpec {
    Rotating {
        #[serde(rename = "omega_B")]
        omega_b: f64,
        omega: f64,
        #[serde(rename = "theta_B")]
        theta_b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_sign: Option<f64>,
    },
    Harmonic(HarmonicWaveform),
    /// CSV with header `t,omega_B,nx,ny,nz`; relative paths resolve against the scenario file.
    Samples { path: PathBuf },
}

/// A unit vector or `"closing"` for the axis that returns to itself after the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Vector([f64; 3]),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_s: Option<f64>,
    /// `[[re, im], ...]` on the standard basis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e0: Option<AxisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d0: Option<AxisSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cyclic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
}

/// Tolerances with defaults filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub cyclic: f64,
    pub k_max: u64,
    pub closure: f64,
    pub fidelity: f64,
    pub oracle: f64,
}

impl ToleranceSpec {
    pub fn resolve(&self) -> Result<Tolerances, SchemaError> {
        let t = Tolerances {
            cyclic: self.cyclic.unwrap_or(crate::neutral_rotating::DEFAULT_CYCLIC_TOL),
            k_max: self.k_max.unwrap_or(crate::neutral_rotating::DEFAULT_K_MAX),
            closure: self.closure.unwrap_or(crate::general_field::CLOSURE_TOL),
            fidelity: self.fidelity.unwrap_or(1e-6),
            oracle: self.oracle.unwrap_or(1e-5),
        };
        for (name, v) in [("cyclic", t.cyclic), ("closure", t.closure), ("fidelity", t.fidelity), ("oracle", t.oracle)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(format!("tolerances.{name} must be positive")));
            }
        }
        if t.k_max == 0 {
            return Err(schema("tolerances.k_max must be at least 1"));
        }
        Ok(t)
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| schema(e.message().to_string()))?;
        convert_degrees(&mut table)?;
        let scenario: Scenario = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| schema(e.message().to_string()))?;
        scenario.check()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::from_toml_str(&text)?;
        if let Some(FieldSpec::Samples { path: p }) = &mut s.params.field {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(s)
    }

    fn check(&self) -> Result<(), SchemaError> {
        let p = &self.params;
        let need = |v: Option<f64>, name: &str| v.map(|_| ()).ok_or_else(|| schema(format!("params.{name} is required")));
        match self.kind {
            ScenarioKind::NeutralRotating | ScenarioKind::ChargedRotating => {
                need(p.omega_b, "omega_B")?;
                need(p.omega, "omega")?;
                need(p.theta_b, "theta_B")?;
                if p.field.is_some() {
                    return Err(schema("params.field is only used by the general kinds"));
                }
            }
            ScenarioKind::NeutralGeneral | ScenarioKind::ChargedGeneral => {
                if p.field.is_none() {
                    return Err(schema("params.field is required"));
                }
                if p.omega_b.is_some() || p.omega.is_some() || p.theta_b.is_some() {
                    return Err(schema("general kinds take the field from params.field"));
                }
                if self.grid.horizon.is_none() {
                    return Err(schema("grid.horizon (the cycle time) is required for general fields"));
                }
                if self.grid.periods.is_some() {
                    return Err(schema("grid.periods is not used by general fields"));
                }
            }
        }
        if p.spin.is_none() {
            return Err(schema("params.spin is required"));
        }
        p.spin.as_ref().unwrap().quantum()?;
        let charged = matches!(self.kind, ScenarioKind::ChargedRotating | ScenarioKind::ChargedGeneral);
        if charged && p.l.is_none() {
            return Err(schema("params.l is required"));
        }
        if !charged && (p.l.is_some() || p.epsilon_nl.is_some()) {
            return Err(schema("params.l and params.epsilon_nl only apply to charged kinds"));
        }
        if let Some(s) = p.mu_sign {
            if s != 1.0 && s != -1.0 {
                return Err(schema("params.mu_sign must be 1 or -1"));
            }
        }
        if self.grid.periods.is_some() && self.grid.horizon.is_some() {
            return Err(schema("give grid.periods or grid.horizon, not both"));
        }
        for (name, v) in [("dt", self.grid.dt), ("periods", self.grid.periods), ("horizon", self.grid.horizon)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(schema(format!("grid.{name} must be positive")));
                }
            }
        }
        let st = &self.initial_state;
        if st.amplitudes.is_some() && (st.m.is_some() || st.m_s.is_some()) {
            return Err(schema("initial_state takes either amplitudes or named quantum numbers"));
        }
        if !charged && st.m.is_some() {
            return Err(schema("initial_state.m only applies to charged kinds"));
        }
        if !charged && st.d0.is_some() {
            return Err(schema("initial_state.d0 only applies to charged kinds"));
        }
        self.tolerances.resolve()?;
        Ok(())
    }

    pub fn spin(&self) -> SpinQuantum {
        self.params.spin.as_ref().and_then(|s| s.quantum().ok()).unwrap_or(SpinQuantum::half())
    }

    pub fn mu_sign(&self) -> f64 {
        self.params.mu_sign.unwrap_or(1.0)
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.resolve().expect("checked on load")
    }

    /// Amplitudes as a state vector, renormalized; the flag is set when the
    /// input norm was off by more than `1e-6`.
    pub fn amplitudes(&self, dim: usize) -> Result<Option<(CVector, bool)>, SchemaError> {
        let Some(a) = &self.initial_state.amplitudes else {
            return Ok(None);
        };
        if a.len() != dim {
            return Err(schema(format!("initial_state.amplitudes has {} entries, expected {dim}", a.len())));
        }
        let v = CVector::from_iterator(dim, a.iter().map(|[re, im]| C64::new(*re, *im)));
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(schema("initial_state.amplitudes must have a finite non-zero norm"));
        }
        Ok(Some((v.unscale(norm), (norm - 1.0).abs() > 1e-6)))
    }

    /// The field of a general scenario, with the signed rate.
    pub fn field(&self) -> Result<Box<dyn FieldWaveform>, SchemaError> {
        match self.params.field.as_ref().ok_or_else(|| schema("params.field is required"))? {
            FieldSpec::Rotating { omega_b, omega, theta_b, mu_sign } => Ok(Box::new(RotatingWaveform {
                rate: mu_sign.unwrap_or(1.0) * omega_b,
                omega: *omega,
                theta_b: *theta_b,
            })),
            FieldSpec::Harmonic(h) => Ok(Box::new(*h)),
            FieldSpec::Samples { path } => Ok(Box::new(read_field_samples(path)?)),
        }
    }
}

#[derive(Debug, Deserialize)]
struct FieldRow {
    t: f64,
    #[serde(rename = "omega_B")]
    omega_b: f64,
    nx: f64,
    ny: f64,
    nz: f64,
}

pub fn read_field_samples(path: &Path) -> Result<SampledWaveform, SchemaError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
    let (mut t, mut r, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for row in reader.deserialize() {
        let row: FieldRow = row.map_err(|e| schema(format!("{}: {e}", path.display())))?;
        t.push(row.t);
        r.push(row.omega_b);
        d.push(Vec3::new(row.nx, row.ny, row.nz));
    }
    SampledWaveform::new(t, r, d).map_err(|e| schema(format!("{}: {e}", path.display())))
}

pub(crate) fn convert_degrees(table: &mut toml::Table) -> Result<(), SchemaError> {
    let keys: Vec<String> = table.keys().cloned().collect();
    for key in keys {
        if let Some(base) = key.strip_suffix("_deg") {
            if table.contains_key(base) {
                return Err(schema(format!("both {base} and {key} given")));
            }
            let value = table.remove(&key).unwrap();
            let radians = match value {
                toml::Value::Array(items) => toml::Value::Array(
                    items.iter().map(|v| degrees(v, &key)).collect::<Result<Vec<_>, _>>()?,
                ),
                other => degrees(&other, &key)?,
            };
            table.insert(base.to_string(), radians);
        } else if let Some(toml::Value::Table(inner)) = table.get_mut(&key) {
            convert_degrees(inner)?;
        }
    }
    Ok(())
}

fn degrees(value: &toml::Value, key: &str) -> Result<toml::Value, SchemaError> {
    match value {
        toml::Value::Float(x) => Ok(toml::Value::Float(x.to_radians())),
        toml::Value::Integer(i) => Ok(toml::Value::Float((*i as f64).to_radians())),
        _ => Err(schema(format!("{key} must be numeric"))),
    }
}

/// Resolves an axis entry; `closing` is computed by the caller.
pub fn fixed_axis(spec: &AxisSpec) -> Result<Option<crate::spin_algebra::UnitVector3>, SchemaError> {
    match spec {
        AxisSpec::Vector([x, y, z]) => crate::spin_algebra::UnitVector3::new(*x, *y, *z)
            .map(Some)
            .map_err(|e| schema(format!("axis: {e}"))),
        AxisSpec::Named(name) if name == "closing" => Ok(None),
        AxisSpec::Named(name) => Err(schema(format!("unknown axis {name:?}; use a vector or \"closing\""))),
    }
}
