//! Membership in the good set `G_d`, the binary-tree boundary curve,
//! inverse-temperature thresholds and large-degree scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{norm_pair, one_norm_pair, NormOutcome, Potential};

/// A point `(γ, δ)` at degree `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodSetQuery {
    pub d: u32,
    pub gamma: f64,
    pub delta: f64,
}

impl GoodSetQuery {
    pub fn new(d: u32, gamma: f64, delta: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(format!("degree d must be ≥ 2 (got {d})")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) || !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("gamma and delta must be positive and finite (got {gamma}, {delta})")));
        }
        Ok(GoodSetQuery { d, gamma, delta })
    }

    /// `f(ε) = γ ε^d + δ − ε`.
    pub fn excess(&self, eps: f64) -> f64 {
        self.gamma * eps.powi(self.d as i32) + self.delta - eps
    }

    /// `L(ε) = 2d(γ ε^{d−1} + δ ε^d)`.
    pub fn lipschitz(&self, eps: f64) -> f64 {
        let d = self.d as i32;
        2.0 * self.d as f64 * (self.gamma * eps.powi(d - 1) + self.delta * eps.powi(d))
    }

    /// Minimiser `ε* = (dγ)^{−1/(d−1)}` of the excess.
    pub fn excess_minimiser(&self) -> f64 {
        (self.d as f64 * self.gamma).powf(-1.0 / (self.d as f64 - 1.0))
    }
}

/// Smallest positive root of `ε = γ ε^d + δ`.
///
/// The returned value is the upper end of the final bisection bracket, so
/// `γ ε^d + δ ≤ ε` holds exactly in floating point. Bisection continues to
/// machine resolution, so the bracket is never wider than `abs_tol`.
pub fn smallest_epsilon(query: &GoodSetQuery, abs_tol: f64) -> Option<f64> {
    debug_assert!(abs_tol > 0.0);
    let star = query.excess_minimiser();
    if query.excess(star) > 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0_f64, star);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if query.excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipReason {
    NoEpsilonExists,
    LipschitzGeOne,
    Ok,
    /// The inequalities hold but `γ ≤ 1`, outside the nominal domain.
    GammaOutOfDomainFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub in_good_set: bool,
    pub epsilon: Option<f64>,
    pub lipschitz: Option<f64>,
    pub reason: MembershipReason,
    /// Set whenever `γ ≤ 1`.
    pub gamma_flag: bool,
}

pub fn membership(query: &GoodSetQuery, abs_tol: f64) -> MembershipVerdict {
    let gamma_flag = query.gamma <= 1.0;
    let Some(eps) = smallest_epsilon(query, abs_tol) else {
        return MembershipVerdict {
            in_good_set: false,
            epsilon: None,
            lipschitz: None,
            reason: MembershipReason::NoEpsilonExists,
            gamma_flag,
        };
    };
    let l = query.lipschitz(eps);
    let in_good_set = l < 1.0;
    let reason = match (in_good_set, gamma_flag) {
        (false, _) => MembershipReason::LipschitzGeOne,
        (true, true) => MembershipReason::GammaOutOfDomainFlag,
        (true, false) => MembershipReason::Ok,
    };
    MembershipVerdict { in_good_set, epsilon: Some(eps), lipschitz: Some(l), reason, gamma_flag }
}

/// Boundary `δ(γ)` of `G_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryBoundary {
    pub gamma: f64,
    pub delta: f64,
    /// The same root from the explicit radical formula.
    pub radical: f64,
    /// `|quartic(δ)|`.
    pub residual: f64,
    /// `3/(16γ)`.
    pub leading_order: f64,
}

fn binary_quartic(g: f64, x: f64) -> f64 {
    let g2 = g * g;
    16.0 * g2 * x.powi(4) + 24.0 * g2 * g * x * x + (16.0 * g2 * g2 * g - 4.0 * g2) * x - 3.0 * g2 * g2
}

fn binary_radical(g: f64) -> f64 {
    let g3 = g * g * g;
    let c = (g3 + 0.25).powf(2.0 / 3.0);
    let r = (c - g).sqrt();
    0.5 * (2.0 * (g3 - 0.25) / r - c - 2.0 * g).sqrt() - 0.5 * r
}

/// Unique positive root of `16γ²δ⁴ + 24γ³δ² + (16γ⁵ − 4γ²)δ − 3γ⁴` on `(0, 1/(4γ)]`.
pub fn binary_delta_boundary(gamma: f64, abs_tol: f64) -> Result<BinaryBoundary> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("binary boundary needs gamma > 1 (got {gamma})")));
    }
    if !(abs_tol > 0.0) {
        return Err(Error::Config("abs_tol must be positive".into()));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.25 / gamma);
    while hi - lo > abs_tol.min(1e-300_f64.max(f64::EPSILON * hi)) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binary_quartic(gamma, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    Ok(BinaryBoundary {
        gamma,
        delta,
        radical: binary_radical(gamma),
        residual: binary_quartic(gamma, delta).abs(),
        leading_order: 3.0 / (16.0 * gamma),
    })
}

/// Which norm pair to feed into `G_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `(‖Q‖_{(d+1)/2,ℤ}, ‖Q‖_{d+1,ℤ∖{0}})`
    HalfNorm,
    /// `(‖Q‖_{1,ℤ}, ‖Q‖_{1,ℤ∖{0}})`
    OneNorm,
}

/// Norm pair of `pot` under `pairing`; `None` when either norm diverges.
pub fn pair_for(pot: &Potential, d: u32, pairing: Pairing, rel_tol: f64) -> Result<Option<(f64, f64)>> {
    let (g, dl) = match pairing {
        Pairing::HalfNorm => norm_pair(pot, d, rel_tol)?,
        Pairing::OneNorm => one_norm_pair(pot, rel_tol)?,
    };
    Ok(match (&g, &dl) {
        (NormOutcome::Finite(a), NormOutcome::Finite(b)) => Some((a.value, b.value)),
        _ => None,
    })
}

fn member_at(base: &Potential, beta: f64, d: u32, pairing: Pairing) -> Result<(bool, Option<(f64, f64)>)> {
    let pot = base.with_beta(beta)?;
    let Some((g, dl)) = pair_for(&pot, d, pairing, NORM_TOL)? else {
        return Ok((false, None));
    };
    let v = membership(&GoodSetQuery::new(d, g, dl)?, 1e-15);
    Ok((v.in_good_set, Some((g, dl))))
}

const NORM_TOL: f64 = 1e-13;
const BETA_MAX: f64 = 1e3;

/// Result of a threshold search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub d: u32,
    pub pairing: Pairing,
    /// Upper end of the final bracket: the smallest β known to be a member.
    pub beta: f64,
    pub bracket: (f64, f64),
    pub gamma: f64,
    pub delta: f64,
    /// Whether the monotonicity pre-check passed (otherwise a grid scan ran first).
    pub monotone: bool,
}

/// Infimum of the inverse temperatures at which the norm pair lies in `G_d`,
/// to relative tolerance `tol`.
pub fn beta_threshold(base: &Potential, d: u32, pairing: Pairing, tol: f64) -> Result<ThresholdReport> {
    if d < 2 {
        return Err(Error::Config(format!("degree d must be ≥ 2 (got {d})")));
    }
    if !(tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    // Norms blow up at (or before) this β, so it is never a member.
    let floor = match (&base.kind, pairing) {
        (crate::potentials::PotentialKind::Log, Pairing::HalfNorm) => 2.0 / (d as f64 + 1.0),
        (crate::potentials::PotentialKind::Log, Pairing::OneNorm) => 1.0,
        _ => 0.0,
    };
    // Find a member by geometric ascent.
    let mut hi = if floor > 0.0 { 2.0 * floor } else { 1.0 };
    let mut lo = floor;
    loop {
        if member_at(base, hi, d, pairing)?.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > BETA_MAX {
            return Err(Error::NoThresholdInRange { lo: floor, hi: BETA_MAX });
        }
    }
    // Monotonicity pre-check on a grid: γ and δ must both decrease in β.
    let grid: Vec<f64> = (1..=8).map(|k| lo + (hi - lo) * k as f64 / 8.0).collect();
    let pairs: Vec<Option<(f64, f64)>> =
        grid.iter().map(|&b| member_at(base, b, d, pairing).map(|r| r.1)).collect::<Result<_>>()?;
    let finite: Vec<(f64, f64)> = pairs.iter().flatten().copied().collect();
    let monotone = finite.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1);
    if !monotone {
        // Grid scan: shrink to the first grid cell where membership switches on.
        let mut prev = lo;
        for &b in &grid {
            if member_at(base, b, d, pairing)?.0 {
                hi = b;
                lo = prev;
                break;
            }
            prev = b;
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if member_at(base, mid, d, pairing)?.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (_, pair) = member_at(base, hi, d, pairing)?;
    let (gamma, delta) = pair.expect("member has finite norms");
    Ok(ThresholdReport { d, pairing, beta: hi, bracket: (lo, hi), gamma, delta, monotone })
}

/// One degree of a large-degree scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub d: u32,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub in_good_set: bool,
    pub epsilon: Option<f64>,
    /// Upper localization bound `(δ(1+δε^d)/(1−γε^{d−1}))^{d+1}` when a member.
    pub ratio_upper_bound: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeDegreeScan {
    pub a: f64,
    pub v: f64,
    pub rows: Vec<ScanRow>,
    /// Smallest tested `d` from which every tested degree is a member.
    pub d0: Option<u32>,
}

/// Evaluates `β_{A,d} = A ln d/(d+1)` and the good-set verdict per degree.
pub fn large_degree_scan(base: &Potential, a: f64, degrees: &[u32]) -> Result<LargeDegreeScan> {
    let v = base.min_nonzero_u()?;
    if !(v > 0.0) {
        return Err(Error::Config(format!("inf of U off zero must be positive (got {v})")));
    }
    if !(a * v > 1.0) {
        return Err(Error::Config(format!("need A > 1/v = {} (got A = {a})", 1.0 / v)));
    }
    let mut degrees = degrees.to_vec();
    degrees.sort_unstable();
    degrees.dedup();
    if let Some(&d) = degrees.first() {
        if d < 2 {
            return Err(Error::Config(format!("degree d must be ≥ 2 (got {d})")));
        }
    }
    let rows: Vec<ScanRow> = degrees
        .par_iter()
        .map(|&d| -> Result<ScanRow> {
            let beta = a * (d as f64).ln() / (d as f64 + 1.0);
            let pot = base.with_beta(beta)?;
            let (g, dl) = norm_pair(&pot, d, NORM_TOL)?;
            let (gamma, delta) = (g.report().map(|r| r.value), dl.report().map(|r| r.value));
            let (Some(gv), Some(dv)) = (gamma, delta) else {
                return Ok(ScanRow {
                    d,
                    beta,
                    gamma,
                    delta,
                    in_good_set: false,
                    epsilon: None,
                    ratio_upper_bound: None,
                    flag: Some("norm infinite".into()),
                });
            };
            let query = GoodSetQuery::new(d, gv, dv)?;
            let verdict = membership(&query, 1e-15);
            let ratio_upper_bound = match (verdict.in_good_set, verdict.epsilon) {
                (true, Some(e)) => Some(
                    (dv * (1.0 + dv * e.powi(d as i32)) / (1.0 - gv * e.powi(d as i32 - 1))).powi(d as i32 + 1),
                ),
                _ => None,
            };
            Ok(ScanRow {
                d,
                beta,
                gamma,
                delta,
                in_good_set: verdict.in_good_set,
                epsilon: verdict.epsilon,
                ratio_upper_bound,
                flag: None,
            })
        })
        .collect::<Result<_>>()?;
    let mut d0 = None;
    for row in rows.iter().rev() {
        if !row.in_good_set {
            break;
        }
        d0 = Some(row.d);
    }
    Ok(LargeDegreeScan { a, v, rows, d0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(d: u32, g: f64, dl: f64) -> GoodSetQuery {
        GoodSetQuery::new(d, g, dl).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        let e = smallest_epsilon(&q(2, 2.0, 0.1), 1e-12).unwrap();
        assert!((e - (1.0 - (1.0f64 - 0.8).sqrt()) / 4.0).abs() < 1e-12);
        assert!((e - 0.138_197).abs() < 1e-6);
        assert!(smallest_epsilon(&q(2, 2.0, 0.2), 1e-12).is_none());
        let e3 = smallest_epsilon(&q(3, 1.2, 0.1), 1e-12).unwrap();
        // Root of 1.2ε³ + 0.1 − ε from an independent high-precision solve.
        assert!((e3 - 0.101_245_394_897_286).abs() < 1e-12);
    }

    #[test]
    fn membership_examples() {
        let v = membership(&q(2, 1.5, 0.05), 1e-12);
        assert!(v.in_good_set);
        assert_eq!(v.reason, MembershipReason::Ok);
        assert!((v.epsilon.unwrap() - 0.054_447).abs() < 1e-6);
        assert!((v.lipschitz.unwrap() - 0.327).abs() < 1e-3);
        let v = membership(&q(2, 2.0, 0.1), 1e-12);
        assert!(!v.in_good_set);
        assert_eq!(v.reason, MembershipReason::LipschitzGeOne);
        assert!((v.lipschitz.unwrap() - 1.113).abs() < 1e-3);
        assert_eq!(membership(&q(2, 2.0, 0.2), 1e-12).reason, MembershipReason::NoEpsilonExists);
        let v = membership(&q(3, 0.9, 0.01), 1e-12);
        assert!(v.gamma_flag && v.in_good_set);
        assert_eq!(v.reason, MembershipReason::GammaOutOfDomainFlag);
    }

    #[test]
    fn query_validation() {
        assert!(GoodSetQuery::new(1, 1.5, 0.1).is_err());
        assert!(GoodSetQuery::new(2, -1.0, 0.1).is_err());
        assert!(GoodSetQuery::new(2, 1.5, 0.0).is_err());
    }

    #[test]
    fn binary_boundary_examples() {
        let b = binary_delta_boundary(10.0, 1e-15).unwrap();
        assert!(b.residual < 1e-10 * 1e4);
        assert!((b.delta - 0.01875).abs() < 1e-4);
        assert!((b.delta - b.radical).abs() < 1e-10);
        assert!(binary_delta_boundary(1.0, 1e-12).is_err());
    }

    #[test]
    fn binary_boundary_consistent_with_membership_at_sos_threshold() {
        let g = 1.0689;
        let b = binary_delta_boundary(g, 1e-15).unwrap();
        assert!(membership(&q(2, g, b.delta * (1.0 - 1e-6)), 1e-15).in_good_set);
        assert!(!membership(&q(2, g, b.delta * (1.0 + 1e-6)), 1e-15).in_good_set);
    }

    #[test]
    fn threshold_sos_d2() {
        let r = beta_threshold(&Potential::sos(1.0).unwrap(), 2, Pairing::HalfNorm, 1e-9).unwrap();
        assert!((r.beta - 1.997).abs() < 5e-4, "{r:?}");
        assert!(r.monotone);
    }

    #[test]
    fn large_degree_precondition() {
        let sos = Potential::sos(1.0).unwrap();
        assert!(large_degree_scan(&sos, 1.0, &[10]).is_err());
        let scan = large_degree_scan(&sos, 2.0, &[10, 20, 50, 100]).unwrap();
        assert_eq!(scan.rows.len(), 4);
        assert!(scan.d0.is_some());
    }

    proptest! {
        #[test]
        fn member_satisfies_inequalities(d in 2u32..12, g in 1.0f64..5.0, dl in 1e-4f64..0.5) {
            let query = q(d, g, dl);
            let v = membership(&query, 1e-12);
            if v.in_good_set {
                let e = v.epsilon.unwrap();
                prop_assert!(query.delta + query.gamma * e.powi(d as i32) <= e);
                prop_assert!(query.lipschitz(e) < 1.0);
            }
            if let Some(e) = v.epsilon {
                prop_assert!(query.excess(e).abs() < 1e-12);
            }
        }

        #[test]
        fn binary_equivalence(g in 1.0001f64..10.0, frac in 0.001f64..1.0) {
            let dl = frac / (4.0 * g);
            let b = binary_delta_boundary(g, 1e-15).unwrap();
            // Points within rounding of the curve are not decidable in floating point.
            prop_assume!((dl - b.delta).abs() > 1e-12 * b.delta);
            prop_assert_eq!(membership(&q(2, g, dl), 1e-15).in_good_set, dl < b.delta);
        }

        #[test]
        fn membership_monotone_in_delta(d in 2u32..10, g in 1.0f64..4.0, dl in 1e-4f64..0.3, shrink in 0.0f64..1.0) {
            if membership(&q(d, g, dl), 1e-12).in_good_set {
                let smaller = dl * shrink.max(1e-6);
                prop_assert!(membership(&q(d, g, smaller), 1e-12).in_good_set);
            }
        }
    }
}
