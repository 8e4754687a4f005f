//! Certified summation of positive series.
//!
//! Tails of convex, decreasing summands are bracketed by
//! `∫_N^∞ f + f(N)/2 ≤ Σ_{n≥N} f(n) ≤ ∫_{N-1/2}^∞ f`
//! (trapezoid over-estimates and midpoint under-estimates the integral of a
//! convex function). The bracket width is `O(|f'(N)|)`, so a modest explicit
//! prefix certifies even slowly decaying power laws.

use crate::error::{Error, Result};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator.
pub fn ksum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// A closed interval certified to contain a quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn exact(v: f64) -> Self {
        Bracket { lo: v, hi: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn shift(self, v: f64) -> Self {
        Bracket { lo: self.lo + v, hi: self.hi + v }
    }

    pub fn plus(self, other: Bracket) -> Self {
        Bracket { lo: self.lo + other.lo, hi: self.hi + other.hi }
    }

    pub fn scale(self, c: f64) -> Self {
        debug_assert!(c >= 0.0);
        Bracket { lo: self.lo * c, hi: self.hi * c }
    }

    /// Image under a non-decreasing map.
    pub fn map_monotone(self, f: impl Fn(f64) -> f64) -> Self {
        Bracket { lo: f(self.lo), hi: f(self.hi) }
    }
}

/// Decay law of a positive summand beyond some cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `scale · exp(-rate · t)`
    Exponential { scale: f64, rate: f64 },
    /// `scale · (t + shift)^(-exponent)`
    Power { scale: f64, shift: f64, exponent: f64 },
}

impl Decay {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Decay::Exponential { scale, rate } => scale * (-rate * t).exp(),
            Decay::Power { scale, shift, exponent } => scale * (t + shift).powf(-exponent),
        }
    }

    /// Whether `Σ f(n)` converges.
    pub fn is_summable(&self) -> bool {
        match *self {
            Decay::Exponential { rate, .. } => rate > 0.0,
            Decay::Power { exponent, .. } => exponent > 1.0,
        }
    }

    /// `∫_t^∞ f`, infinite when the series diverges.
    pub fn integral_from(&self, t: f64) -> f64 {
        match *self {
            Decay::Exponential { scale, rate } => {
                if rate <= 0.0 {
                    f64::INFINITY
                } else {
                    scale * (-rate * t).exp() / rate
                }
            }
            Decay::Power { scale, shift, exponent } => {
                if exponent <= 1.0 {
                    f64::INFINITY
                } else {
                    scale * (t + shift).powf(1.0 - exponent) / (exponent - 1.0)
                }
            }
        }
    }

    /// The decay law of `f^p`.
    pub fn pow(&self, p: f64) -> Decay {
        match *self {
            Decay::Exponential { scale, rate } => Decay::Exponential { scale: scale.powf(p), rate: rate * p },
            Decay::Power { scale, shift, exponent } => {
                Decay::Power { scale: scale.powf(p), shift, exponent: exponent * p }
            }
        }
    }

    /// Bracket for `Σ_{n≥start} (f(n)/c)^p`, evaluated in log space so that
    /// neither `c^{-p}` nor `f^p` under- or overflows on its own.
    pub fn powered_tail_bracket(&self, p: f64, c: f64, start: u64) -> Bracket {
        let lc = c.ln();
        // (ln f(t)^p/c^p, ln ∫_t^∞ f^p/c^p)
        let logs = |t: f64| -> (f64, f64) {
            match *self {
                Decay::Exponential { scale, rate } => {
                    let k = p * (scale.ln() - lc) - p * rate * t;
                    (k, k - (p * rate).ln())
                }
                Decay::Power { scale, shift, exponent } => {
                    let k = p * (scale.ln() - lc);
                    let e = p * exponent;
                    let l = (t + shift).ln();
                    (k - e * l, k - (e - 1.0) * l - (e - 1.0).ln())
                }
            }
        };
        if !self.pow(p).is_summable() {
            return Bracket { lo: f64::INFINITY, hi: f64::INFINITY };
        }
        let n = start as f64;
        let (f_n, int_n) = logs(n);
        let lo = int_n.exp() + 0.5 * f_n.exp();
        let hi = logs(n - 0.5).1.exp();
        Bracket { lo: lo.min(hi), hi: hi.max(lo) }
    }

    /// The decay law of `t ↦ f(offset + step·t)`.
    pub fn affine(&self, offset: f64, step: f64) -> Decay {
        match *self {
            Decay::Exponential { scale, rate } => {
                Decay::Exponential { scale: scale * (-rate * offset).exp(), rate: rate * step }
            }
            Decay::Power { scale, shift, exponent } => Decay::Power {
                scale: scale * step.powf(-exponent),
                shift: (offset + shift) / step,
                exponent,
            },
        }
    }

    /// Bracket for `Σ_{n≥start} f(n)`; requires `start ≥ 1` and `start - 1/2 + shift > 0`.
    pub fn tail_bracket(&self, start: u64) -> Bracket {
        let n = start as f64;
        let lo = self.integral_from(n) + 0.5 * self.eval(n);
        let hi = self.integral_from(n - 0.5);
        Bracket { lo: lo.min(hi), hi: hi.max(lo) }
    }
}

const BERNOULLI_2K: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// `Σ_{n≥from} n^{-s}` by Euler–Maclaurin, `s > 1`, `from ≥ 1`.
pub fn zeta_from(s: f64, from: u64) -> f64 {
    assert!(s > 1.0 && from >= 1);
    const CUT: u64 = 24;
    let n0 = from.max(CUT);
    let head: f64 = ksum((from..n0).map(|n| (n as f64).powf(-s)));
    let big_n = n0 as f64;
    let mut tail = big_n.powf(1.0 - s) / (s - 1.0) + 0.5 * big_n.powf(-s);
    // Rising factorial s(s+1)…(s+2k-2) / (2k)! times N^{-s-2k+1}.
    let mut coef = s / 2.0;
    let mut npow = big_n.powf(-s - 1.0);
    for (k, b) in BERNOULLI_2K.iter().enumerate() {
        tail += b * coef * npow;
        let k2 = 2.0 * (k as f64 + 1.0);
        coef *= (s + k2 - 1.0) * (s + k2) / ((k2 + 1.0) * (k2 + 2.0));
        npow /= big_n * big_n;
    }
    head + tail
}

/// Riemann zeta `ζ(s)` for real `s > 1`.
pub fn zeta(s: f64) -> f64 {
    zeta_from(s, 1)
}

/// `ζ(s) − 1` without cancellation for large `s`.
pub fn zeta_minus_one(s: f64) -> f64 {
    zeta_from(s, 2)
}

/// Certified Hurwitz zeta `ζ(s, a) = Σ_{n≥0} (n + a)^{-s}` by direct summation
/// of a prefix plus the integral bracket on the remainder.
pub fn hurwitz_zeta(s: f64, a: f64, rel_tol: f64) -> Result<Bracket> {
    if !(s > 1.0) || !(a > 0.0) {
        return Err(Error::Config(format!("hurwitz zeta needs s > 1 and a > 0 (s={s}, a={a})")));
    }
    let decay = Decay::Power { scale: 1.0, shift: a, exponent: s };
    let mut head = CompensatedSum::new();
    let mut n: u64 = 0;
    let mut target: u64 = 64;
    loop {
        while n < target {
            head.add((n as f64 + a).powf(-s));
            n += 1;
        }
        let b = decay.tail_bracket(n).shift(head.value());
        if b.half_width() <= rel_tol * b.lo {
            return Ok(b);
        }
        if target >= MAX_TERMS {
            return Err(Error::Uncertified(format!("hurwitz zeta s={s} a={a} after {n} terms")));
        }
        target *= 2;
    }
}

/// Upper limit on explicit terms for any single series.
pub const MAX_TERMS: u64 = 1 << 26;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0) - pi * pi / 6.0).abs() < 1e-15);
        assert!((zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-15);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-13);
        let head = 2f64.powi(-60) + 3f64.powi(-60) + 4f64.powi(-60);
        assert!((zeta_minus_one(60.0) - head).abs() < 1e-15 * head);
    }

    #[test]
    fn hurwitz_matches_riemann_at_one() {
        for &s in &[1.3, 2.0, 4.5, 9.0] {
            let h = hurwitz_zeta(s, 1.0, 1e-13).unwrap();
            assert!((h.mid() - zeta(s)).abs() <= h.half_width() + 1e-14 * zeta(s), "s={s}");
        }
    }

    #[test]
    fn hurwitz_rejects_bad_domain() {
        assert!(hurwitz_zeta(1.0, 0.5, 1e-9).is_err());
        assert!(hurwitz_zeta(2.0, 0.0, 1e-9).is_err());
    }

    #[test]
    fn bracket_contains_geometric_tail() {
        let d = Decay::Exponential { scale: 1.0, rate: 0.7 };
        let exact = (-0.7f64 * 5.0).exp() / (1.0 - (-0.7f64).exp());
        let b = d.tail_bracket(5);
        assert!(b.lo <= exact && exact <= b.hi);
    }

    #[test]
    fn powered_bracket_matches_plain_one() {
        let d = Decay::Power { scale: 2.0, shift: 1.0, exponent: 1.5 };
        let a = d.pow(2.0).tail_bracket(10).scale(1.0 / 9.0);
        let b = d.powered_tail_bracket(2.0, 3.0, 10);
        assert!((a.lo - b.lo).abs() < 1e-12 * a.lo && (a.hi - b.hi).abs() < 1e-12 * a.hi);
        let big = Decay::Exponential { scale: 1.0, rate: 1.0 }.powered_tail_bracket(1001.0, (-1f64).exp(), 1);
        assert!(big.hi.is_finite() && big.lo <= 1.0 && 1.0 <= big.hi);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-16);
        }
        assert!((acc.value() - (1.0 + 1e-13)).abs() < 1e-17);
    }
}
