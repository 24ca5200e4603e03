//! Spin-s angular momentum matrices, axis-angle exponentials and rotated
//! eigenbases.
//!
//! All matrices are written in the `s_z` eigenbasis ordered by descending
//! magnetic quantum number, `m = s, s-1, ..., -s`, with Condon-Shortley
//! phases (ladder matrix elements real and non-negative).

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use nalgebra::SymmetricEigen;

use crate::error::{PhaseError, Result};
use crate::linalg::{c, spectral_apply, CMatrix, CVector, Vec3, C64, I};

/// Spin (or orbital) quantum number stored as `2s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinQuantum {
    two_s: u32,
}

impl SpinQuantum {
    pub const fn from_two_s(two_s: u32) -> Self {
        Self { two_s }
    }

    /// Integer quantum number, e.g. an orbital `l`.
    pub const fn integer(l: u32) -> Self {
        Self { two_s: 2 * l }
    }

    pub const fn half() -> Self {
        Self { two_s: 1 }
    }

    pub const fn two_s(self) -> u32 {
        self.two_s
    }

    pub fn value(self) -> f64 {
        f64::from(self.two_s) / 2.0
    }

    pub const fn dim(self) -> usize {
        self.two_s as usize + 1
    }

    pub const fn is_half_integer(self) -> bool {
        self.two_s % 2 == 1
    }

    /// `m = s, s-1, ..., -s`.
    pub fn m_values(self) -> impl Iterator<Item = f64> + Clone {
        let s = self.value();
        (0..self.dim()).map(move |i| s - i as f64)
    }

    /// Basis index of magnetic quantum number `m`, if it belongs to the multiplet.
    pub fn index_of(self, m: f64) -> Option<usize> {
        let twice = 2.0 * (self.value() - m);
        let k = twice.round();
        if (twice - k).abs() > 1e-9 || k < 0.0 || k % 2.0 != 0.0 {
            return None;
        }
        let idx = (k / 2.0) as usize;
        (idx < self.dim()).then_some(idx)
    }
}

impl fmt::Display for SpinQuantum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_half_integer() {
            write!(f, "{}/2", self.two_s)
        } else {
            write!(f, "{}", self.two_s / 2)
        }
    }
}

impl FromStr for SpinQuantum {
    type Err = PhaseError;

    /// Accepts `"3/2"`, `"1"`, `"1.5"`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || PhaseError::InvalidParameter(format!("not a spin quantum number: {text:?}"));
        if let Some((num, den)) = text.split_once('/') {
            let num: u32 = num.trim().parse().map_err(|_| bad())?;
            let den: u32 = den.trim().parse().map_err(|_| bad())?;
            return match den {
                1 => Ok(Self::from_two_s(2 * num)),
                2 => Ok(Self::from_two_s(num)),
                _ => Err(bad()),
            };
        }
        let x: f64 = text.parse().map_err(|_| bad())?;
        let twice = 2.0 * x;
        if x < 0.0 || (twice - twice.round()).abs() > 1e-12 {
            return Err(bad());
        }
        Ok(Self::from_two_s(twice.round() as u32))
    }
}

/// A 3-vector of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::normalize(Vec3::new(x, y, z))
    }

    pub fn normalize(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 1e-300) {
            return Err(PhaseError::InvalidParameter(format!(
                "cannot normalize vector {v:?}"
            )));
        }
        Ok(Self(v / n))
    }

    /// Trusted constructor for vectors known to be unit length.
    pub(crate) fn new_unchecked(v: Vec3) -> Self {
        Self(v)
    }

    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self(Vec3::new(st * cp, st * sp, ct))
    }

    pub fn x_axis() -> Self {
        Self(Vec3::x())
    }

    pub fn y_axis() -> Self {
        Self(Vec3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vec3::z())
    }

    pub fn into_inner(self) -> Vec3 {
        self.0
    }

    /// Polar angle in `[0, pi]` and azimuth in `(-pi, pi]`.
    pub fn spherical(&self) -> (f64, f64) {
        (self.0.z.clamp(-1.0, 1.0).acos(), self.0.y.atan2(self.0.x))
    }
}

impl Deref for UnitVector3 {
    type Target = Vec3;
    fn deref(&self) -> &Vec3 {
        &self.0
    }
}

/// Cartesian angular momentum matrices for one multiplet.
#[derive(Debug, Clone)]
pub struct SpinOps {
    pub spin: SpinQuantum,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
}

impl SpinOps {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    pub fn components(&self) -> [&CMatrix; 3] {
        [&self.sx, &self.sy, &self.sz]
    }

    /// `s . v` for an arbitrary real vector.
    pub fn dot(&self, v: &Vec3) -> CMatrix {
        &self.sx * c(v.x) + &self.sy * c(v.y) + &self.sz * c(v.z)
    }

    /// `(<psi|s_x|psi>, <psi|s_y|psi>, <psi|s_z|psi>)`.
    pub fn expectation(&self, psi: &CVector) -> Vec3 {
        let e = |m: &CMatrix| psi.dotc(&(m * psi)).re;
        Vec3::new(e(&self.sx), e(&self.sy), e(&self.sz))
    }

    /// Standard basis state `chi^0_m`.
    pub fn basis_state(&self, m: f64) -> Result<CVector> {
        let idx = self.spin.index_of(m).ok_or_else(|| {
            PhaseError::InvalidParameter(format!("m = {m} is not in the spin-{} multiplet", self.spin))
        })?;
        let mut v = CVector::zeros(self.dim());
        v[idx] = c(1.0);
        Ok(v)
    }
}

/// Builds `s_x, s_y, s_z` from the ladder operators.
pub fn spin_operators(spin: SpinQuantum) -> SpinOps {
    let dim = spin.dim();
    let s = spin.value();
    let mut raise = CMatrix::zeros(dim, dim);
    // s_+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>; index i carries m = s - i.
    for i in 1..dim {
        let m = s - i as f64;
        raise[(i - 1, i)] = c((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    let lower = raise.adjoint();
    let sx = (&raise + &lower) * c(0.5);
    let sy = (&raise - &lower) * (-I * 0.5);
    let sz = CMatrix::from_diagonal(&CVector::from_iterator(dim, spin.m_values().map(c)));
    SpinOps { spin, sx, sy, sz }
}

/// Unitary `exp(i angle s.n)` together with the axis and angle it came from.
#[derive(Debug, Clone)]
pub struct RotationMatrix {
    pub entries: CMatrix,
    pub axis: UnitVector3,
    pub angle: f64,
}

/// `exp(i phi s.n)` by spectral decomposition of `s.n`.
///
/// The eigenvalues of `s.n` are exactly `m = s..-s`, so the numerical
/// eigenvalues are snapped to the nearest half-integer before exponentiating.
pub fn exp_spin(ops: &SpinOps, n: &UnitVector3, phi: f64) -> RotationMatrix {
    let entries = if phi == 0.0 {
        CMatrix::identity(ops.dim(), ops.dim())
    } else {
        let eig = SymmetricEigen::new(ops.dot(n));
        let exact: Vec<f64> = eig.eigenvalues.iter().map(|l| (2.0 * l).round() / 2.0).collect();
        spectral_apply(&eig.eigenvectors, &exact, |m| (I * phi * m).exp())
    };
    RotationMatrix { entries, axis: *n, angle: phi }
}

/// `exp(-i phi s_z)` is diagonal in the standard basis.
pub fn exp_sz(spin: SpinQuantum, phi: f64) -> CMatrix {
    let d = CVector::from_iterator(spin.dim(), spin.m_values().map(|m| (-I * phi * m).exp()));
    CMatrix::from_diagonal(&d)
}

/// Wigner small-d matrix `d^s_{m'm}(theta) = <m'| exp(-i theta s_y) |m>`.
pub fn wigner_small_d(ops: &SpinOps, theta: f64) -> CMatrix {
    exp_spin(ops, &UnitVector3::y_axis(), -theta).entries
}

/// Eigenbasis of `s.n` for `n = (sin th cos ph, sin th sin ph, cos th)`.
#[derive(Debug, Clone)]
pub struct SpinEigenbasis {
    pub direction: UnitVector3,
    /// Column `k` is the eigenvector with eigenvalue `s - k`.
    pub columns: CMatrix,
    pub spin: SpinQuantum,
}

impl SpinEigenbasis {
    pub fn state(&self, m: f64) -> Result<CVector> {
        let idx = self.spin.index_of(m).ok_or_else(|| {
            PhaseError::InvalidParameter(format!("m = {m} is not in the spin-{} multiplet", self.spin))
        })?;
        Ok(self.columns.column(idx).into_owned())
    }

    /// `max_m || (s.n) chi_m - m chi_m ||`.
    pub fn eigen_residual(&self, ops: &SpinOps) -> f64 {
        let sn = ops.dot(&self.direction);
        self.spin
            .m_values()
            .enumerate()
            .map(|(k, m)| {
                let col = self.columns.column(k);
                (&sn * col - col * c(m)).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Columns `exp(-i phi s_z) exp(-i theta s_y) chi^0_m`.
pub fn spin_direction_eigenbasis(ops: &SpinOps, theta: f64, phi: f64) -> SpinEigenbasis {
    let columns = exp_sz(ops.spin, phi) * wigner_small_d(ops, theta);
    SpinEigenbasis {
        direction: UnitVector3::from_spherical(theta, phi),
        columns,
        spin: ops.spin,
    }
}

/// Eigenbasis of `s.n` for an arbitrary unit vector.
pub fn eigenbasis_along(ops: &SpinOps, n: &UnitVector3) -> SpinEigenbasis {
    let (theta, phi) = n.spherical();
    let mut basis = spin_direction_eigenbasis(ops, theta, phi);
    basis.direction = *n;
    basis
}

/// Closed form of `exp(i phi s.n) s exp(-i phi s.n)`:
/// `[s - (s.n)n] cos(phi) + (n x s) sin(phi) + (s.n) n`.
pub fn conjugate_spin_vector(ops: &SpinOps, n: &UnitVector3, phi: f64) -> [CMatrix; 3] {
    let s = ops.components();
    let sn = ops.dot(n);
    let (sin, cos) = phi.sin_cos();
    let nv = [n.x, n.y, n.z];
    // (n x s)_i = eps_ijk n_j s_k
    let cross = [
        s[2] * c(nv[1]) - s[1] * c(nv[2]),
        s[0] * c(nv[2]) - s[2] * c(nv[0]),
        s[1] * c(nv[0]) - s[0] * c(nv[1]),
    ];
    let mut out: [CMatrix; 3] = Default::default();
    for i in 0..3 {
        let parallel = &sn * c(nv[i]);
        out[i] = (s[i] - &parallel) * c(cos) + &cross[i] * c(sin) + parallel;
    }
    out
}

/// Conjugation `U A U^†` of each component.
pub fn conjugate_direct(u: &CMatrix, ops: &SpinOps) -> [CMatrix; 3] {
    let ud = u.adjoint();
    [u * &ops.sx * &ud, u * &ops.sy * &ud, u * &ops.sz * &ud]
}

/// Norm of `[s_x, s_y] - i s_z` and its cyclic partners, maximised.
pub fn commutator_residual(ops: &SpinOps) -> f64 {
    let comm = |a: &CMatrix, b: &CMatrix| a * b - b * a;
    let r1 = (comm(&ops.sx, &ops.sy) - &ops.sz * I).norm();
    let r2 = (comm(&ops.sy, &ops.sz) - &ops.sx * I).norm();
    let r3 = (comm(&ops.sz, &ops.sx) - &ops.sy * I).norm();
    r1.max(r2).max(r3)
}

/// `|| s.s - s(s+1) I ||_F`.
pub fn casimir_residual(ops: &SpinOps) -> f64 {
    let s = ops.spin.value();
    let n = ops.dim();
    let cas = &ops.sx * &ops.sx + &ops.sy * &ops.sy + &ops.sz * &ops.sz;
    (cas - CMatrix::identity(n, n) * C64::new(s * (s + 1.0), 0.0)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitarity_defect;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn series_exp(a: &CMatrix) -> CMatrix {
        // Taylor series with scaling and squaring; independent of the spectral route.
        let n = a.nrows();
        let mut squarings = 0;
        let mut scaled = a.clone();
        while scaled.norm() > 0.5 {
            scaled /= c(2.0);
            squarings += 1;
        }
        let mut term = CMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &scaled / c(k as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let ops = spin_operators(SpinQuantum::half());
        assert_eq!(ops.sz[(0, 0)], c(0.5));
        assert_eq!(ops.sz[(1, 1)], c(-0.5));
        assert_eq!(ops.sx[(0, 1)], c(0.5));
        assert_eq!(ops.sx[(1, 0)], c(0.5));
        assert!((ops.sy[(0, 1)] - C64::new(0.0, -0.5)).norm() < 1e-16);
    }

    #[test]
    fn spin_one_ladder_entries() {
        let ops = spin_operators(SpinQuantum::from_two_s(2));
        let diag: Vec<f64> = (0..3).map(|i| ops.sz[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 0.0, -1.0]);
        assert!((ops.sx[(0, 1)].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(commutator_residual(&ops) < 1e-12);
    }

    #[test]
    fn algebra_closure_and_casimir_up_to_dim_16() {
        for two_s in 0..16 {
            let ops = spin_operators(SpinQuantum::from_two_s(two_s));
            assert!(commutator_residual(&ops) < 1e-12, "2s = {two_s}");
            assert!(casimir_residual(&ops) < 1e-12, "2s = {two_s}");
            for m in ops.components() {
                assert!(crate::linalg::hermiticity_defect(m) < 1e-15);
            }
        }
    }

    #[test]
    fn spin_parse_and_display() {
        assert_eq!("3/2".parse::<SpinQuantum>().unwrap().two_s(), 3);
        assert_eq!("1".parse::<SpinQuantum>().unwrap().two_s(), 2);
        assert_eq!("2.5".parse::<SpinQuantum>().unwrap().two_s(), 5);
        assert!("1/3".parse::<SpinQuantum>().is_err());
        assert!("0.3".parse::<SpinQuantum>().is_err());
        assert_eq!(SpinQuantum::from_two_s(3).to_string(), "3/2");
        assert_eq!(SpinQuantum::from_two_s(4).to_string(), "2");
    }

    #[test]
    fn index_of_rejects_foreign_m() {
        let s = SpinQuantum::from_two_s(3);
        assert_eq!(s.index_of(1.5), Some(0));
        assert_eq!(s.index_of(-1.5), Some(3));
        assert_eq!(s.index_of(1.0), None);
        assert_eq!(s.index_of(2.5), None);
    }

    #[test]
    fn exp_spin_zero_angle_is_identity() {
        let ops = spin_operators(SpinQuantum::from_two_s(3));
        let r = exp_spin(&ops, &UnitVector3::new(1.0, 2.0, 3.0).unwrap(), 0.0);
        assert!((r.entries - CMatrix::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn full_turn_sign_for_half_and_integer_spin() {
        for (two_s, sign) in [(1u32, -1.0), (2, 1.0), (3, -1.0), (4, 1.0)] {
            let ops = spin_operators(SpinQuantum::from_two_s(two_s));
            let r = exp_spin(&ops, &UnitVector3::z_axis(), 2.0 * PI).entries;
            let series = series_exp(&(ops.dot(&Vec3::z()) * (I * 2.0 * PI)));
            let n = ops.dim();
            assert!((&r - CMatrix::identity(n, n) * c(sign)).norm() < 1e-12);
            assert!((&r - series).norm() < 1e-12);
        }
    }

    #[test]
    fn exp_spin_matches_series_off_axis() {
        let n = UnitVector3::new(0.3, -0.5, 0.8).unwrap();
        for two_s in 1..6 {
            let ops = spin_operators(SpinQuantum::from_two_s(two_s));
            let r = exp_spin(&ops, &n, 1.234).entries;
            let series = series_exp(&(ops.dot(&n) * (I * 1.234)));
            assert!((&r - series).norm() < 1e-12);
            assert!(unitarity_defect(&r) < 1e-12);
        }
    }

    #[test]
    fn eigenbasis_at_origin_is_standard_basis() {
        let ops = spin_operators(SpinQuantum::from_two_s(3));
        let b = spin_direction_eigenbasis(&ops, 0.0, 0.0);
        assert!((b.columns - CMatrix::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn adjoint_rotation_about_z_is_planar() {
        let ops = spin_operators(SpinQuantum::from_two_s(3));
        let wt = 0.77;
        let u = exp_spin(&ops, &UnitVector3::z_axis(), wt).entries;
        let direct = conjugate_direct(&u, &ops);
        let (s, co) = wt.sin_cos();
        let expect_x = &ops.sx * c(co) - &ops.sy * c(s);
        let expect_y = &ops.sx * c(s) + &ops.sy * c(co);
        assert!((&direct[0] - expect_x).norm() < 1e-10);
        assert!((&direct[1] - expect_y).norm() < 1e-10);
        assert!((&direct[2] - &ops.sz).norm() < 1e-10);
    }

    #[test]
    fn conjugate_identity_at_zero_and_full_turn() {
        let ops = spin_operators(SpinQuantum::from_two_s(2));
        let n = UnitVector3::new(1.0, 1.0, 0.2).unwrap();
        for phi in [0.0, 2.0 * PI] {
            let f = conjugate_spin_vector(&ops, &n, phi);
            for (fi, si) in f.iter().zip(ops.components()) {
                assert!((fi - si).norm() < 1e-12);
            }
        }
    }
}
