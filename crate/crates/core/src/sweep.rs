//! Search for field parameters whose effective precession rates hit
//! prescribed rational multiples of the field rotation rate.
//!
//! Rates are in units of `omega`, so a point is `(x, theta_B)` with
//! `x = omega_B / omega`. The charged search scans a grid of cells, keeps
//! those where both residual components change sign, and quadrisects them;
//! the neutral search bisects along `x` for every `theta_B` on a grid.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::neutral_rotating::EffectiveFrame;
use crate::runner::fmt_num;
use crate::scenario::{convert_degrees, SchemaError};

/// Largest residual `|omega_X / omega - target|` accepted for a point.
pub const DEFAULT_SWEEP_TOL: f64 = 1e-9;
const MAX_DEPTH: usize = 48;
const DEDUP_DISTANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Neutral,
    Charged,
}

/// A ratio written as a number or as `"p/q"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Number(f64),
    Text(String),
}

impl Ratio {
    pub fn value(&self) -> Result<f64, SchemaError> {
        let v = match self {
            Ratio::Number(x) => *x,
            Ratio::Text(s) => match s.split_once('/') {
                Some((p, q)) => {
                    let p: f64 = p.trim().parse().map_err(|_| SchemaError(format!("bad ratio {s:?}")))?;
                    let q: f64 = q.trim().parse().map_err(|_| SchemaError(format!("bad ratio {s:?}")))?;
                    p / q
                }
                None => s.trim().parse().map_err(|_| SchemaError(format!("bad ratio {s:?}")))?,
            },
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(SchemaError(format!("ratio must be finite and non-negative, got {v}")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: SweepKind,
    /// Target `omega_L / omega`; charged sweeps only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_over_k: Option<Ratio>,
    /// Target `omega_S / omega`.
    pub ks_over_k: Ratio,
    #[serde(rename = "omega_B_over_omega")]
    pub x_range: [f64; 2],
    #[serde(rename = "theta_B", default = "full_polar_range")]
    pub theta_range: [f64; 2],
    /// Grid cells along `x` and `theta_B`.
    #[serde(default = "default_cells")]
    pub cells: [usize; 2],
    /// Sign of the magnetic moment; neutral sweeps only.
    #[serde(default = "positive")]
    pub mu_sign: f64,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
}

fn full_polar_range() -> [f64; 2] {
    [0.0, PI]
}

fn default_cells() -> [usize; 2] {
    [200, 200]
}

fn positive() -> f64 {
    1.0
}

fn default_tol() -> f64 {
    DEFAULT_SWEEP_TOL
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| SchemaError(e.message().to_string()))?;
        convert_degrees(&mut table)?;
        let cfg: SweepConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| SchemaError(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn check(&self) -> Result<(), SchemaError> {
        let [x0, x1] = self.x_range;
        let [t0, t1] = self.theta_range;
        if !(x0 > 0.0 && x1 > x0 && x1.is_finite()) {
            return Err(SchemaError("omega_B_over_omega must be an increasing positive range".into()));
        }
        if !(0.0 <= t0 && t0 < t1 && t1 <= PI) {
            return Err(SchemaError("theta_B must be an increasing range inside [0, pi]".into()));
        }
        if self.cells[0] < 1 || self.cells[1] < 1 {
            return Err(SchemaError("cells must be positive".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SchemaError("tolerance must be positive".into()));
        }
        self.ks_over_k.value()?;
        match (self.kind, &self.kl_over_k) {
            (SweepKind::Charged, None) => return Err(SchemaError("kl_over_k is required for charged sweeps".into())),
            (SweepKind::Charged, Some(r)) => {
                r.value()?;
            }
            (SweepKind::Neutral, Some(_)) => return Err(SchemaError("kl_over_k only applies to charged sweeps".into())),
            (SweepKind::Neutral, None) => {}
        }
        if self.mu_sign != 1.0 && self.mu_sign != -1.0 {
            return Err(SchemaError("mu_sign must be 1 or -1".into()));
        }
        if self.kind == SweepKind::Charged && self.mu_sign != 1.0 {
            return Err(SchemaError("mu_sign only applies to neutral sweeps".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub omega_b_over_omega: f64,
    pub theta_b: f64,
    /// Target orbital ratio; NaN for neutral sweeps.
    pub kl_over_k: f64,
    pub ks_over_k: f64,
    /// Largest `|omega_X / omega - target|` at the point.
    pub residual: f64,
}

/// `omega_L / omega` and `omega_S / omega` for the charged particle.
pub fn charged_ratios(x: f64, theta: f64) -> (f64, f64) {
    let orbital = EffectiveFrame::from_components(x, 1.0, theta, 1.0, -1.0).omega_s;
    let spin = EffectiveFrame::from_components(x, 1.0, theta, 2.0, -1.0).omega_s;
    (orbital, spin)
}

/// `omega_S / omega` for the neutral particle.
pub fn neutral_ratio(x: f64, theta: f64, mu_sign: f64) -> f64 {
    EffectiveFrame::from_components(x, 1.0, theta, 1.0, mu_sign).omega_s
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>, SchemaError> {
    cfg.check()?;
    Ok(match cfg.kind {
        SweepKind::Charged => charged_sweep(cfg),
        SweepKind::Neutral => neutral_sweep(cfg),
    })
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    x: [f64; 2],
    t: [f64; 2],
}

impl Cell {
    fn corners(&self) -> [(f64, f64); 4] {
        [(self.x[0], self.t[0]), (self.x[1], self.t[0]), (self.x[0], self.t[1]), (self.x[1], self.t[1])]
    }

    fn split(&self) -> [Cell; 4] {
        let xm = 0.5 * (self.x[0] + self.x[1]);
        let tm = 0.5 * (self.t[0] + self.t[1]);
        [
            Cell { x: [self.x[0], xm], t: [self.t[0], tm] },
            Cell { x: [xm, self.x[1]], t: [self.t[0], tm] },
            Cell { x: [self.x[0], xm], t: [tm, self.t[1]] },
            Cell { x: [xm, self.x[1]], t: [tm, self.t[1]] },
        ]
    }

    fn center(&self) -> (f64, f64) {
        (0.5 * (self.x[0] + self.x[1]), 0.5 * (self.t[0] + self.t[1]))
    }
}

fn straddles(values: impl Iterator<Item = f64>) -> bool {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    lo <= 0.0 && hi >= 0.0
}

fn charged_residual(x: f64, t: f64, rl: f64, rs: f64) -> (f64, f64) {
    let (a, b) = charged_ratios(x, t);
    (a - rl, b - rs)
}

fn both_change_sign(cell: &Cell, rl: f64, rs: f64) -> bool {
    let r: Vec<(f64, f64)> = cell.corners().iter().map(|&(x, t)| charged_residual(x, t, rl, rs)).collect();
    straddles(r.iter().map(|p| p.0)) && straddles(r.iter().map(|p| p.1))
}

/// Newton polish of the quadrisection result with the analytic Jacobian.
fn polish(mut x: f64, mut t: f64, rl: f64, rs: f64) -> (f64, f64) {
    for _ in 0..8 {
        let (f1, f2) = charged_ratios(x, t);
        if f1 < 1e-12 || f2 < 1e-12 {
            break;
        }
        let (r1, r2) = (f1 - rl, f2 - rs);
        let (c, s) = (t.cos(), t.sin());
        let (a, b) = ((x - c) / f1, x * s / f1);
        let (d, e) = ((4.0 * x - 2.0 * c) / f2, 2.0 * x * s / f2);
        let det = a * e - b * d;
        if det.abs() < 1e-14 {
            break;
        }
        x -= (e * r1 - b * r2) / det;
        t -= (a * r2 - d * r1) / det;
    }
    (x, t)
}

fn charged_sweep(cfg: &SweepConfig) -> Vec<SweepPoint> {
    let rl = cfg.kl_over_k.as_ref().unwrap().value().unwrap();
    let rs = cfg.ks_over_k.value().unwrap();
    let [nx, nt] = cfg.cells;
    let (hx, ht) = ((cfg.x_range[1] - cfg.x_range[0]) / nx as f64, (cfg.theta_range[1] - cfg.theta_range[0]) / nt as f64);
    let cells: Vec<Cell> = (0..nx)
        .flat_map(|i| (0..nt).map(move |j| (i, j)))
        .map(|(i, j)| {
            let x0 = cfg.x_range[0] + i as f64 * hx;
            let t0 = cfg.theta_range[0] + j as f64 * ht;
            Cell { x: [x0, if i + 1 == nx { cfg.x_range[1] } else { x0 + hx }], t: [t0, if j + 1 == nt { cfg.theta_range[1] } else { t0 + ht }] }
        })
        .collect();
    let candidates: Vec<(f64, f64)> = cells
        .par_iter()
        .filter(|c| both_change_sign(c, rl, rs))
        .flat_map_iter(|c| refine(*c, rl, rs))
        .collect();
    let mut points: Vec<SweepPoint> = candidates
        .into_iter()
        .map(|(x, t)| polish(x, t, rl, rs))
        .filter(|&(x, t)| in_range(cfg, x, t))
        .filter_map(|(x, t)| {
            let (a, b) = charged_residual(x, t, rl, rs);
            let residual = a.abs().max(b.abs());
            (residual < cfg.tolerance).then_some(SweepPoint {
                omega_b_over_omega: x,
                theta_b: t,
                kl_over_k: rl,
                ks_over_k: rs,
                residual,
            })
        })
        .collect();
    dedup(&mut points);
    points
}

fn refine(cell: Cell, rl: f64, rs: f64) -> Vec<(f64, f64)> {
    let mut live = vec![cell];
    for _ in 0..MAX_DEPTH {
        let next: Vec<Cell> = live.iter().flat_map(|c| c.split()).filter(|c| both_change_sign(c, rl, rs)).collect();
        if next.is_empty() {
            break;
        }
        // neighbouring sub-cells can share a root on their common edge
        live = next.into_iter().take(16).collect();
    }
    live.iter().map(Cell::center).collect()
}

fn in_range(cfg: &SweepConfig, x: f64, t: f64) -> bool {
    let slack = 1e-12;
    x >= cfg.x_range[0] - slack && x <= cfg.x_range[1] + slack && t >= cfg.theta_range[0] - slack && t <= cfg.theta_range[1] + slack
}

fn dedup(points: &mut Vec<SweepPoint>) {
    points.sort_by(|a, b| a.omega_b_over_omega.total_cmp(&b.omega_b_over_omega).then(a.theta_b.total_cmp(&b.theta_b)));
    let mut kept: Vec<SweepPoint> = Vec::with_capacity(points.len());
    for p in points.drain(..) {
        let dup = kept.iter().any(|q| {
            (q.omega_b_over_omega - p.omega_b_over_omega).abs() < DEDUP_DISTANCE && (q.theta_b - p.theta_b).abs() < DEDUP_DISTANCE
        });
        if !dup {
            kept.push(p);
        }
    }
    *points = kept;
}

fn neutral_sweep(cfg: &SweepConfig) -> Vec<SweepPoint> {
    let rs = cfg.ks_over_k.value().unwrap();
    let [nx, nt] = cfg.cells;
    let mut thetas: Vec<f64> = (0..=nt)
        .map(|j| cfg.theta_range[0] + (cfg.theta_range[1] - cfg.theta_range[0]) * j as f64 / nt as f64)
        .collect();
    if (cfg.theta_range[0]..=cfg.theta_range[1]).contains(&FRAC_PI_2) && !thetas.iter().any(|&t| (t - FRAC_PI_2).abs() < 1e-15) {
        thetas.push(FRAC_PI_2);
        thetas.sort_by(f64::total_cmp);
    }
    let f = |x: f64, t: f64| neutral_ratio(x, t, cfg.mu_sign) - rs;
    let mut points: Vec<SweepPoint> = thetas
        .par_iter()
        .flat_map_iter(|&t| {
            let xs: Vec<f64> = (0..=nx).map(|i| cfg.x_range[0] + (cfg.x_range[1] - cfg.x_range[0]) * i as f64 / nx as f64).collect();
            let mut roots = Vec::new();
            for w in xs.windows(2) {
                let (fa, fb) = (f(w[0], t), f(w[1], t));
                if fa == 0.0 {
                    roots.push(w[0]);
                } else if fa * fb < 0.0 {
                    roots.push(bisect(|x| f(x, t), w[0], w[1], fa));
                }
            }
            if f(xs[nx], t) == 0.0 {
                roots.push(xs[nx]);
            }
            roots.into_iter().map(move |x| (x, t)).collect::<Vec<_>>()
        })
        .filter_map(|(x, t)| {
            let residual = f(x, t).abs();
            (residual < cfg.tolerance).then_some(SweepPoint {
                omega_b_over_omega: x,
                theta_b: t,
                kl_over_k: f64::NAN,
                ks_over_k: rs,
                residual,
            })
        })
        .collect();
    dedup(&mut points);
    points
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("omega_B_over_omega,theta_B,KL_over_K,KS_over_K\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_num(p.omega_b_over_omega),
            fmt_num(p.theta_b),
            fmt_num(p.kl_over_k),
            fmt_num(p.ks_over_k)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn charged(kl: &str, ks: &str) -> SweepConfig {
        SweepConfig::from_toml_str(&format!(
            "kind = \"charged\"\nkl_over_k = \"{kl}\"\nks_over_k = \"{ks}\"\nomega_B_over_omega = [0.05, 3.0]\ncells = [60, 60]\n"
        ))
        .unwrap()
    }

    /// Eliminating `cos theta_B` from the two rate equations gives
    /// `2 x^2 - 1 = r_S^2 - 2 r_L^2`.
    fn elimination_oracle(rl: f64, rs: f64) -> Option<(f64, f64)> {
        let x2 = (rs * rs - 2.0 * rl * rl + 1.0) / 2.0;
        if x2 <= 0.0 {
            return None;
        }
        let x = x2.sqrt();
        let c = (x2 + 1.0 - rl * rl) / (2.0 * x);
        (c.abs() <= 1.0).then(|| (x, c.acos()))
    }

    #[test]
    fn recovers_double_ratio_point() {
        let pts = sweep(&charged("1", "2")).unwrap();
        let (x, t) = (1.5f64.sqrt(), (3f64.sqrt() / (2.0 * 2f64.sqrt())).acos());
        assert!(pts.iter().any(|p| (p.omega_b_over_omega - x).abs() < 1e-9 && (p.theta_b - t).abs() < 1e-9), "{pts:?}");
        assert_eq!(pts.len(), 1);
    }

    #[test]
    fn charged_points_match_elimination() {
        for (kl, ks) in [("3/4", "5/4"), ("1/2", "3/2"), ("7/5", "11/5"), ("5/3", "3")] {
            let cfg = charged(kl, ks);
            let (rl, rs) = (cfg.kl_over_k.as_ref().unwrap().value().unwrap(), cfg.ks_over_k.value().unwrap());
            let pts = sweep(&cfg).unwrap();
            match elimination_oracle(rl, rs) {
                Some((x, t)) if (0.05..=3.0).contains(&x) => {
                    assert_eq!(pts.len(), 1, "{kl} {ks}: {pts:?}");
                    assert!((pts[0].omega_b_over_omega - x).abs() < 1e-8 && (pts[0].theta_b - t).abs() < 1e-8);
                }
                _ => assert!(pts.is_empty()),
            }
        }
    }

    #[test]
    fn neutral_pythagorean_family() {
        let cfg = SweepConfig::from_toml_str(
            "kind = \"neutral\"\nks_over_k = \"5/4\"\nomega_B_over_omega = [0.1, 3.0]\ncells = [100, 10]\n",
        )
        .unwrap();
        let pts = sweep(&cfg).unwrap();
        assert!(pts.iter().any(|p| (p.theta_b - FRAC_PI_2).abs() < 1e-15 && (p.omega_b_over_omega - 0.75).abs() < 1e-12));
        for p in &pts {
            assert!(p.kl_over_k.is_nan());
            assert!((neutral_ratio(p.omega_b_over_omega, p.theta_b, 1.0) - 1.25).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_target_is_empty() {
        let cfg = SweepConfig::from_toml_str(
            "kind = \"neutral\"\nks_over_k = 100\nomega_B_over_omega = [0.1, 3.0]\n",
        )
        .unwrap();
        assert!(sweep(&cfg).unwrap().is_empty());
        assert_eq!(sweep_csv(&[]), "omega_B_over_omega,theta_B,KL_over_K,KS_over_K\n");
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::from_toml_str("kind = \"charged\"\nks_over_k = 2\nomega_B_over_omega = [0.1, 3.0]\n").is_err());
        assert!(SweepConfig::from_toml_str("kind = \"neutral\"\nks_over_k = 2\nomega_B_over_omega = [3.0, 0.1]\n").is_err());
        let deg = SweepConfig::from_toml_str(
            "kind = \"neutral\"\nks_over_k = \"x\"\nomega_B_over_omega = [0.1, 3.0]\n",
        );
        assert!(deg.is_err());
        let ok = SweepConfig::from_toml_str(
            "kind = \"neutral\"\nks_over_k = 2\nomega_B_over_omega = [0.1, 3.0]\ntheta_B_deg = [0, 90]\n",
        )
        .unwrap();
        assert!((ok.theta_range[1] - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn deterministic_output() {
        let a = sweep_csv(&sweep(&charged("1", "2")).unwrap());
        let b = sweep_csv(&sweep(&charged("1", "2")).unwrap());
        assert_eq!(a, b);
    }
}
