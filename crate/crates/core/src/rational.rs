//! Rational detection of frequency ratios by continued-fraction convergents.

/// `p/q` with `gcd(p, q) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub numer: u64,
    pub denom: u64,
}

impl Fraction {
    pub fn value(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }
}

/// Convergents of the continued fraction of a non-negative `x`, up to
/// denominator `k_max`.
pub fn convergents(x: f64, k_max: u64) -> Vec<Fraction> {
    let mut out = Vec::new();
    if !(x.is_finite() && x >= 0.0) || k_max == 0 {
        return out;
    }
    // h_{-1}=1, h_{-2}=0; k_{-1}=0, k_{-2}=1
    let (mut h1, mut h2) = (1u64, 0u64);
    let (mut k1, mut k2) = (0u64, 1u64);
    let mut rem = x;
    for _ in 0..64 {
        let a = rem.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let h = a.saturating_mul(h1).saturating_add(h2);
        let k = a.saturating_mul(k1).saturating_add(k2);
        if k > k_max {
            break;
        }
        out.push(Fraction { numer: h, denom: k });
        let frac = rem - rem.floor();
        if frac < 1e-15 {
            break;
        }
        rem = 1.0 / frac;
        h2 = h1;
        h1 = h;
        k2 = k1;
        k1 = k;
    }
    out
}

/// Smallest-denominator convergent `p/q` such that `|x - p/q| < tol` and
/// `q <= k_max`.
pub fn rational_approximation(x: f64, tol: f64, k_max: u64) -> Option<Fraction> {
    convergents(x, k_max)
        .into_iter()
        .find(|f| (x - f.value()).abs() < tol)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

#[cfg(test)]
mod tests {
    use super::*;

    // brute-force scan over every denominator
    fn scan(x: f64, tol: f64, k_max: u64) -> Option<Fraction> {
        (1..=k_max).find_map(|q| {
            let p = (x * q as f64).round();
            ((x - p / q as f64).abs() < tol).then_some(Fraction { numer: p as u64, denom: q })
        })
    }

    #[test]
    fn exact_rationals() {
        assert_eq!(rational_approximation(2.5, 1e-9, 64), Some(Fraction { numer: 5, denom: 2 }));
        assert_eq!(rational_approximation(1.25, 1e-9, 64), Some(Fraction { numer: 5, denom: 4 }));
        assert_eq!(rational_approximation(2.0, 1e-9, 64), Some(Fraction { numer: 2, denom: 1 }));
    }

    #[test]
    fn irrational_is_rejected() {
        assert_eq!(rational_approximation(2f64.sqrt(), 1e-9, 64), None);
    }

    #[test]
    fn convergents_of_sqrt2() {
        let c = convergents(2f64.sqrt(), 100);
        let pairs: Vec<_> = c.iter().map(|f| (f.numer, f.denom)).collect();
        assert_eq!(pairs, vec![(1, 1), (3, 2), (7, 5), (17, 12), (41, 29), (99, 70)]);
    }

    #[test]
    fn agrees_with_denominator_scan() {
        for q in 1..40u64 {
            for p in 1..90u64 {
                let x = p as f64 / q as f64;
                let expect = scan(x, 1e-9, 64);
                assert_eq!(rational_approximation(x, 1e-9, 64), expect, "{p}/{q}");
            }
        }
    }

    #[test]
    fn zero_ratio() {
        assert_eq!(rational_approximation(0.0, 1e-9, 64), Some(Fraction { numer: 0, denom: 1 }));
    }

    #[test]
    fn lcm_gcd() {
        assert_eq!(gcd(12, 18), 6);
        assert_eq!(lcm(4, 6), 12);
        assert_eq!(lcm(1, 1), 1);
    }
}
