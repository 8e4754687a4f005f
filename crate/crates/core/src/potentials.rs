//! Gradient potentials `U`, transfer operators `Q = exp(-βU)` and the series
//! quantities built from them: `p`-norms, fuzzy (mod-`q`) operators and the
//! double-sum summability condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{hurwitz_zeta, ksum, zeta_minus_one, Bracket, CompensatedSum, Decay, MAX_TERMS};

/// Tail of a custom potential beyond its last table entry `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TailModel {
    /// `U(j) = U(J) + rate·(j − J)`.
    Exp { rate: f64 },
    /// `U(j) = U(J) + exponent·ln((1 + j)/(1 + J))`.
    Power { exponent: f64 },
}

/// Tabulated potential `U(1), …, U(J)` plus an optional tail model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomTable {
    values: Vec<f64>,
    tail: Option<TailModel>,
}

impl CustomTable {
    /// Builds a table from `(j, U(j))` pairs. An entry at `j = 0` is subtracted
    /// from every value so that `U(0) = 0`; the remaining indices must be
    /// exactly `1..=J`.
    pub fn new(entries: &[(i64, f64)], tail: Option<TailModel>) -> Result<Self> {
        let mut entries = entries.to_vec();
        entries.sort_by_key(|e| e.0);
        let mut u0 = 0.0;
        if let Some(&(0, v)) = entries.first() {
            u0 = v;
            entries.remove(0);
        }
        let mut values = Vec::with_capacity(entries.len());
        for (k, &(j, u)) in entries.iter().enumerate() {
            if j != k as i64 + 1 {
                return Err(Error::Config(format!("custom table must list j = 1..J contiguously (found j={j})")));
            }
            if !u.is_finite() {
                return Err(Error::Config(format!("U({j}) is not finite")));
            }
            let shifted = u - u0;
            if shifted < 0.0 {
                return Err(Error::Config(format!("U({j}) < U(0) after normalization")));
            }
            values.push(shifted);
        }
        match tail {
            Some(TailModel::Exp { rate }) if !(rate > 0.0) => {
                return Err(Error::Config(format!("exp tail rate must be positive (got {rate})")))
            }
            Some(TailModel::Power { exponent }) if !(exponent > 0.0) => {
                return Err(Error::Config(format!("power tail exponent must be positive (got {exponent})")))
            }
            _ => {}
        }
        Ok(CustomTable { values, tail })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tail(&self) -> Option<TailModel> {
        self.tail
    }

    fn last_u(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    fn u(&self, j: u64) -> Result<f64> {
        if j == 0 {
            return Ok(0.0);
        }
        let big_j = self.values.len() as u64;
        if j <= big_j {
            return Ok(self.values[j as usize - 1]);
        }
        let uj = self.last_u();
        let (jf, bj) = (j as f64, big_j as f64);
        match self.tail {
            None => Err(Error::TailUndeclared { index: j }),
            Some(TailModel::Exp { rate }) => Ok(uj + rate * (jf - bj)),
            Some(TailModel::Power { exponent }) => Ok(uj + exponent * ((1.0 + jf) / (1.0 + bj)).ln()),
        }
    }
}

/// Which potential family.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    /// `U(j) = |j|`
    Sos,
    /// `U(j) = ln(1 + |j|)`
    Log,
    Custom(CustomTable),
}

/// A symmetric potential with inverse temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub beta: f64,
}

#[derive(Deserialize)]
struct CustomFile {
    kind: String,
    beta: f64,
    #[serde(default)]
    table: Vec<(i64, f64)>,
    tail: Option<TailModel>,
}

impl Potential {
    fn checked(kind: PotentialKind, beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive and finite (got {beta})")));
        }
        Ok(Potential { kind, beta })
    }

    pub fn sos(beta: f64) -> Result<Self> {
        Self::checked(PotentialKind::Sos, beta)
    }

    pub fn log(beta: f64) -> Result<Self> {
        Self::checked(PotentialKind::Log, beta)
    }

    pub fn custom(beta: f64, table: CustomTable) -> Result<Self> {
        Self::checked(PotentialKind::Custom(table), beta)
    }

    /// Same potential at another inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::checked(self.kind.clone(), beta)
    }

    /// Parses the custom potential JSON file format.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: CustomFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("custom potential JSON: {e}")))?;
        if raw.kind != "custom" {
            return Err(Error::Config(format!("expected kind \"custom\", found {:?}", raw.kind)));
        }
        Self::custom(raw.beta, CustomTable::new(&raw.table, raw.tail)?)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PotentialKind::Sos => "sos",
            PotentialKind::Log => "log",
            PotentialKind::Custom(_) => "custom",
        }
    }

    /// `U(j)`.
    pub fn u(&self, j: i64) -> Result<f64> {
        let a = j.unsigned_abs();
        match &self.kind {
            PotentialKind::Sos => Ok(a as f64),
            PotentialKind::Log => Ok((a as f64).ln_1p()),
            PotentialKind::Custom(t) => t.u(a),
        }
    }

    /// `Q(j) = exp(−β U(j))`; exactly 1 at `j = 0`.
    pub fn q(&self, j: i64) -> Result<f64> {
        if j == 0 {
            return Ok(1.0);
        }
        let a = j.unsigned_abs();
        Ok(match &self.kind {
            PotentialKind::Sos => (-self.beta * a as f64).exp(),
            PotentialKind::Log => (1.0 + a as f64).powf(-self.beta),
            PotentialKind::Custom(t) => (-self.beta * t.u(a)?).exp(),
        })
    }

    /// `inf_{j≠0} U(j)`, when computable.
    pub fn min_nonzero_u(&self) -> Result<f64> {
        match &self.kind {
            PotentialKind::Sos => Ok(1.0),
            PotentialKind::Log => Ok(std::f64::consts::LN_2),
            PotentialKind::Custom(t) => {
                let table_min = t.values.iter().copied().fold(f64::INFINITY, f64::min);
                match t.tail {
                    // The tail only grows, so its infimum is U(J+1) > U(J).
                    Some(_) => Ok(table_min.min(t.u(t.values.len() as u64 + 1)?)),
                    None => Err(Error::TailUndeclared { index: t.values.len() as u64 + 1 }),
                }
            }
        }
    }

    /// `(J, law)` such that `Q(j) = law(j)` for every `j > J`.
    pub fn decay(&self) -> Option<(u64, Decay)> {
        let b = self.beta;
        match &self.kind {
            PotentialKind::Sos => Some((0, Decay::Exponential { scale: 1.0, rate: b })),
            PotentialKind::Log => Some((0, Decay::Power { scale: 1.0, shift: 1.0, exponent: b })),
            PotentialKind::Custom(t) => {
                let big_j = t.values.len() as f64;
                let uj = t.last_u();
                t.tail.map(|tail| {
                    let law = match tail {
                        TailModel::Exp { rate } => Decay::Exponential {
                            scale: (-b * uj + b * rate * big_j).exp(),
                            rate: b * rate,
                        },
                        TailModel::Power { exponent } => Decay::Power {
                            scale: (-b * uj).exp() * (1.0 + big_j).powf(b * exponent),
                            shift: 1.0,
                            exponent: b * exponent,
                        },
                    };
                    (t.values.len() as u64, law)
                })
            }
        }
    }

    fn decay_or_refuse(&self) -> Result<(u64, Decay)> {
        self.decay().ok_or_else(|| match &self.kind {
            PotentialKind::Custom(t) => Error::TailUndeclared { index: t.values.len() as u64 + 1 },
            _ => unreachable!("built-in potentials always carry a decay law"),
        })
    }

    /// Monotone envelope `Q̃(i) = sup_{|j| ≥ |i|} Q(j)`.
    pub fn envelope(&self, i: i64) -> Result<f64> {
        match &self.kind {
            PotentialKind::Custom(t) => {
                let a = i.unsigned_abs();
                let big_j = t.values.len() as u64;
                if a > big_j {
                    return self.q(i);
                }
                let mut best = self.q(big_j as i64 + 1)?;
                for j in a.max(1)..=big_j {
                    best = best.max(self.q(j as i64)?);
                }
                if a == 0 {
                    best = best.max(1.0);
                }
                Ok(best)
            }
            _ => self.q(i),
        }
    }

    /// Whether `‖Q‖₁ < ∞`.
    pub fn is_summable(&self) -> Result<bool> {
        Ok(self.decay_or_refuse()?.1.is_summable())
    }
}

/// Domain of a sequence norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormDomain {
    AllOfZ,
    ZWithoutZero,
    Zq,
    ZqWithoutZero,
}

impl NormDomain {
    fn excludes_zero(self) -> bool {
        matches!(self, NormDomain::ZWithoutZero | NormDomain::ZqWithoutZero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Series,
    ClosedForm,
}

/// A certified `‖Q‖_{p,S}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub p: f64,
    pub domain: NormDomain,
    pub value: f64,
    /// Largest index summed explicitly.
    pub truncation_radius: u64,
    /// Certified half-width of the bracket on `Σ Q^p`.
    pub tail_bound: f64,
    pub method: NormMethod,
    /// Independent closed-form evaluation, when the model has one.
    pub closed_form: Option<f64>,
}

/// Either a finite certified norm or a divergence witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NormOutcome {
    Finite(NormReport),
    Infinite { p: f64, domain: NormDomain, witness: String },
}

impl NormOutcome {
    pub fn value(&self) -> f64 {
        match self {
            NormOutcome::Finite(r) => r.value,
            NormOutcome::Infinite { .. } => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, NormOutcome::Finite(_))
    }

    pub fn report(&self) -> Option<&NormReport> {
        match self {
            NormOutcome::Finite(r) => Some(r),
            NormOutcome::Infinite { .. } => None,
        }
    }
}

/// `Σ_{j≠0} (Q(j)/Q(1))^p` in closed form for the built-in models. The
/// rescaling keeps large `p` away from underflow.
fn closed_form_scaled(pot: &Potential, p: f64) -> Option<f64> {
    let s = pot.beta * p;
    match pot.kind {
        // 2 Σ_{j≥1} e^{-s(j-1)} = 2 / (1 − e^{-s})
        PotentialKind::Sos => Some(-2.0 / (-s).exp_m1()),
        // 2 Σ_{j≥1} ((1+j)/2)^{-s} = 2·2^s (ζ(s) − 1)
        PotentialKind::Log if s > 1.0 => {
            if s < 512.0 {
                Some(2.0 * 2f64.powf(s) * zeta_minus_one(s))
            } else {
                // Terms beyond n = 3 are below 2^-53 relative.
                Some(2.0 * (1.0 + 1.5f64.powf(-s) + 2f64.powf(-s)))
            }
        }
        _ => None,
    }
}

/// Closed form of `Σ_{j∈S} Q(j)^p` for the built-in models.
pub fn closed_form_power_sum(pot: &Potential, p: f64, domain: NormDomain) -> Option<f64> {
    let c = pot.q(1).ok()?.powf(p);
    let off_zero = c * closed_form_scaled(pot, p)?;
    match domain {
        NormDomain::AllOfZ => Some(1.0 + off_zero),
        NormDomain::ZWithoutZero => Some(off_zero),
        _ => None,
    }
}

/// Closed-form norm `(Σ_{j∈S} Q(j)^p)^{1/p}` for the built-in models.
pub fn closed_form_norm(pot: &Potential, p: f64, domain: NormDomain) -> Option<f64> {
    let q1 = pot.q(1).ok()?;
    let scaled = closed_form_scaled(pot, p)?;
    match domain {
        NormDomain::AllOfZ => Some((1.0 + q1.powf(p) * scaled).powf(1.0 / p)),
        NormDomain::ZWithoutZero => Some(q1 * scaled.powf(1.0 / p)),
        _ => None,
    }
}

/// `Σ_{j≥1} (Q(j)/Q(1))^p` with certified bracket; returns the bracket and
/// the explicit radius, or `None` if the series diverges.
fn half_line_power_sum(pot: &Potential, p: f64, rel_tol: f64) -> Result<Option<(Bracket, u64)>> {
    let (cut, law) = pot.decay_or_refuse()?;
    let q1 = pot.q(1)?;
    if !law.pow(p).is_summable() {
        return Ok(None);
    }
    let mut acc = CompensatedSum::new();
    let mut n: u64 = 0;
    let mut radius: u64 = 64.max(cut);
    loop {
        while n < radius {
            n += 1;
            acc.add((pot.q(n as i64)? / q1).powf(p));
        }
        let b = law.powered_tail_bracket(p, q1, n + 1).shift(acc.value());
        if b.half_width() <= rel_tol * b.lo || b.half_width() == 0.0 {
            return Ok(Some((b, n)));
        }
        if radius >= MAX_TERMS {
            return Err(Error::Uncertified(format!(
                "Σ Q^p for p={p}, {} beta={} at radius {radius}",
                pot.name(),
                pot.beta
            )));
        }
        radius *= 2;
    }
}

/// `‖Q‖_{p,S}` over `S ∈ {ℤ, ℤ∖{0}}` by certified series, cross-checked
/// against the closed forms of the built-in models.
pub fn p_norm(pot: &Potential, p: f64, domain: NormDomain, rel_tol: f64) -> Result<NormOutcome> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Config(format!("norm exponent must be ≥ 1 (got {p})")));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::Config("rel_tol must be positive".into()));
    }
    if matches!(domain, NormDomain::Zq | NormDomain::ZqWithoutZero) {
        return Err(Error::Config("use FuzzyOperator::norm for ℤ_q domains".into()));
    }
    let Some((half, radius)) = half_line_power_sum(pot, p, rel_tol)? else {
        let (_, law) = pot.decay_or_refuse()?;
        let exponent = match law {
            Decay::Power { exponent, .. } => exponent,
            Decay::Exponential { .. } => unreachable!("exponential tails are always summable"),
        };
        return Ok(NormOutcome::Infinite {
            p,
            domain,
            witness: format!("p·(tail exponent) = {p}·{} = {} ≤ 1", exponent, p * exponent),
        });
    };
    // Scaled sums: Σ_{j≠0} Q^p = c·off, c = Q(1)^p.
    let c = pot.q(1)?.powf(p);
    let off = half.scale(2.0);
    if let Some(closed) = closed_form_scaled(pot, p) {
        let slack = off.half_width() + 1e-12 * closed;
        if (off.mid() - closed).abs() > slack {
            return Err(Error::Consistency(format!(
                "series Σ (Q/Q(1))^p = {} disagrees with closed form {closed} beyond {slack:e}",
                off.mid()
            )));
        }
    }
    let (value, tail_bound) = if domain.excludes_zero() {
        (pot.q(1)? * off.mid().powf(1.0 / p), c * off.half_width())
    } else {
        ((1.0 + c * off.mid()).powf(1.0 / p), c * off.half_width())
    };
    Ok(NormOutcome::Finite(NormReport {
        p,
        domain,
        value,
        truncation_radius: radius,
        tail_bound,
        method: NormMethod::Series,
        closed_form: closed_form_norm(pot, p, domain),
    }))
}

/// The pair `(γ, δ) = (‖Q‖_{(d+1)/2,ℤ}, ‖Q‖_{d+1,ℤ∖{0}})`; `γ` may be infinite.
pub fn norm_pair(pot: &Potential, d: u32, rel_tol: f64) -> Result<(NormOutcome, NormOutcome)> {
    let df = d as f64;
    Ok((
        p_norm(pot, (df + 1.0) / 2.0, NormDomain::AllOfZ, rel_tol)?,
        p_norm(pot, df + 1.0, NormDomain::ZWithoutZero, rel_tol)?,
    ))
}

/// The pair `(‖Q‖_{1,ℤ}, ‖Q‖_{1,ℤ∖{0}})`.
pub fn one_norm_pair(pot: &Potential, rel_tol: f64) -> Result<(NormOutcome, NormOutcome)> {
    Ok((
        p_norm(pot, 1.0, NormDomain::AllOfZ, rel_tol)?,
        p_norm(pot, 1.0, NormDomain::ZWithoutZero, rel_tol)?,
    ))
}

/// The fuzzy transfer operator `Q_q(j̄) = Σ_{l ≡ j mod q} Q(l)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyOperator {
    pub q: usize,
    pub values: Vec<f64>,
    /// `true` after dividing by `Q_q(0̄)`.
    pub normalized: bool,
    /// Certified bound on the truncation error of each class sum (summed).
    pub residual_tail: f64,
}

impl FuzzyOperator {
    /// `Q̄_q = Q_q / Q_q(0̄)`.
    pub fn normalized(&self) -> FuzzyOperator {
        let z = self.values[0];
        FuzzyOperator {
            q: self.q,
            values: self.values.iter().map(|v| v / z).collect(),
            normalized: true,
            residual_tail: self.residual_tail / z,
        }
    }

    /// Value at an arbitrary integer, reduced mod `q`.
    pub fn at(&self, j: i64) -> f64 {
        self.values[j.rem_euclid(self.q as i64) as usize]
    }

    /// `‖Q_q‖_{p,ℤ_q}` or `‖Q_q‖_{p,ℤ_q∖{0̄}}`.
    pub fn norm(&self, p: f64, exclude_zero: bool) -> NormReport {
        let start = usize::from(exclude_zero);
        let top = self.values[start..].iter().copied().fold(0.0, f64::max);
        let value = if top > 0.0 {
            top * ksum(self.values[start..].iter().map(|v| (v / top).powf(p))).powf(1.0 / p)
        } else {
            0.0
        };
        NormReport {
            p,
            domain: if exclude_zero { NormDomain::ZqWithoutZero } else { NormDomain::Zq },
            value,
            truncation_radius: self.q as u64,
            tail_bound: self.residual_tail,
            method: NormMethod::Series,
            closed_form: None,
        }
    }

    /// `(‖·‖_{(d+1)/2,ℤ_q}, ‖·‖_{d+1,ℤ_q∖{0̄}})`.
    pub fn norm_pair(&self, d: u32) -> (f64, f64) {
        let df = d as f64;
        (self.norm((df + 1.0) / 2.0, false).value, self.norm(df + 1.0, true).value)
    }
}

/// `Σ_{m≥0} Q(a + q m)` for `a ≥ 1`.
fn residue_arm(pot: &Potential, a: u64, q: u64, rel_tol: f64) -> Result<Bracket> {
    let b = pot.beta;
    match pot.kind {
        PotentialKind::Sos => {
            // e^{-βa} / (1 − e^{-βq})
            Ok(Bracket::exact((-b * a as f64).exp() / -(-b * q as f64).exp_m1()))
        }
        PotentialKind::Log => {
            // Σ_m (1 + a + q m)^{-β} = q^{-β} ζ(β, (1 + a)/q)
            let h = hurwitz_zeta(b, (1.0 + a as f64) / q as f64, rel_tol)?;
            Ok(h.scale((q as f64).powf(-b)))
        }
        PotentialKind::Custom(_) => {
            let (cut, law) = pot.decay_or_refuse()?;
            let law = law.affine(a as f64, q as f64);
            let mut acc = CompensatedSum::new();
            let mut m: u64 = 0;
            let mut target: u64 = 64.max(cut / q + 2);
            loop {
                while m < target {
                    acc.add(pot.q((a + q * m) as i64)?);
                    m += 1;
                }
                let br = law.tail_bracket(m).shift(acc.value());
                if br.half_width() <= rel_tol * br.lo {
                    return Ok(br);
                }
                if target >= MAX_TERMS {
                    return Err(Error::Uncertified(format!("residue class sum a={a} q={q}")));
                }
                target *= 2;
            }
        }
    }
}

/// Builds `Q_q`. Fails if `‖Q‖₁ = ∞`.
pub fn fuzzy_q(pot: &Potential, q: usize, rel_tol: f64) -> Result<FuzzyOperator> {
    if q == 0 {
        return Err(Error::Config("period q must be ≥ 1".into()));
    }
    if !pot.is_summable()? {
        return Err(Error::NotSummable {
            witness: format!("{} potential at beta={} has ‖Q‖₁ = ∞", pot.name(), pot.beta),
        });
    }
    let qq = q as u64;
    let mut values = Vec::with_capacity(q);
    let mut residual = 0.0;
    for r in 0..qq {
        let b = if r == 0 {
            residue_arm(pot, qq, qq, rel_tol)?.scale(2.0).shift(1.0)
        } else {
            residue_arm(pot, r, qq, rel_tol)?.plus(residue_arm(pot, qq - r, qq, rel_tol)?)
        };
        residual += b.half_width();
        values.push(b.mid());
    }
    Ok(FuzzyOperator { q, values, normalized: false, residual_tail: residual })
}

/// Verdict of the double-sum summability check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DoubleSum {
    Finite { value: f64, tail_bound: f64, outer_terms: u64 },
    Infinite { witness: String },
    Unknown { reason: String },
}

impl DoubleSum {
    pub fn is_finite(&self) -> bool {
        matches!(self, DoubleSum::Finite { .. })
    }
}

/// `Σ_{j≥1} Q̃(i j)` as a certified bracket.
fn inner_sum(pot: &Potential, i: u64, cut: u64, law: &Decay, rel_tol: f64) -> Result<Bracket> {
    let law = law.affine(0.0, i as f64);
    let mut acc = CompensatedSum::new();
    let mut j: u64 = 0;
    let mut target: u64 = 64.max(cut / i + 1);
    loop {
        while j < target {
            j += 1;
            acc.add(pot.envelope((i * j) as i64)?);
        }
        let br = law.tail_bracket(j + 1).shift(acc.value());
        if br.half_width() <= rel_tol * br.lo {
            return Ok(br);
        }
        if target >= MAX_TERMS {
            return Err(Error::Uncertified(format!("inner double-sum term i={i}")));
        }
        target *= 2;
    }
}

/// Evaluates `Σ_{i≥1} (Σ_{j≥1} Q̃(i j))^{(d+1)/2}`.
pub fn check_double_sum(pot: &Potential, d: u32, rel_tol: f64) -> Result<DoubleSum> {
    if d < 2 {
        return Err(Error::Config("degree d must be ≥ 2".into()));
    }
    let Some((cut, law)) = pot.decay() else {
        return Ok(DoubleSum::Unknown { reason: "no tail model declared".into() });
    };
    let p = (d as f64 + 1.0) / 2.0;
    if !law.is_summable() {
        return Ok(DoubleSum::Infinite {
            witness: "inner sum at i=1 equals Σ_j Q̃(j) and Q ∉ l₁(ℤ)".into(),
        });
    }
    // Outer tail bound for i > I ≥ J: inner(i) ≤ C_i · g(i) with a summable g^p.
    let outer_tail = |big_i: u64| -> f64 {
        let bi = big_i as f64;
        match law {
            Decay::Exponential { scale, rate } => {
                let c = scale / -(-rate * (bi + 1.0)).exp_m1();
                c.powf(p) * (-rate * p * (bi + 1.0)).exp() / -(-rate * p).exp_m1()
            }
            Decay::Power { scale, exponent: s, .. } => {
                let c = scale * s / (s - 1.0);
                c.powf(p) * bi.powf(1.0 - s * p) / (s * p - 1.0)
            }
        }
    };
    if let Decay::Power { exponent: s, .. } = law {
        if s * p <= 1.0 {
            return Ok(DoubleSum::Infinite { witness: format!("outer terms ~ i^(-{})", s * p) });
        }
    }
    const MAX_OUTER: u64 = 1 << 14;
    let mut lo = CompensatedSum::new();
    let mut hi = CompensatedSum::new();
    let mut i: u64 = 0;
    let mut big_i: u64 = 64.max(cut);
    loop {
        while i < big_i {
            i += 1;
            let b = inner_sum(pot, i, cut, &law, rel_tol)?.map_monotone(|v| v.powf(p));
            lo.add(b.lo);
            hi.add(b.hi);
        }
        let t = outer_tail(big_i);
        let total = Bracket { lo: lo.value(), hi: hi.value() + t };
        if total.half_width() <= rel_tol * total.lo || big_i >= MAX_OUTER {
            // Convergence is certified by the comparison series regardless of
            // how tight the value is.
            return Ok(DoubleSum::Finite { value: total.mid(), tail_bound: total.half_width(), outer_terms: big_i });
        }
        big_i *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_q_examples() {
        let sos = Potential::sos(1.0).unwrap();
        assert_eq!(sos.q(0).unwrap(), 1.0);
        assert!((sos.q(1).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(sos.q(-4).unwrap(), sos.q(4).unwrap());
        let log = Potential::log(2.0).unwrap();
        assert!((log.q(3).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn custom_without_tail_refuses_beyond_table() {
        let t = CustomTable::new(&[(1, 1.0), (2, 2.5)], None).unwrap();
        let pot = Potential::custom(1.0, t).unwrap();
        assert!((pot.q(2).unwrap() - (-2.5f64).exp()).abs() < 1e-15);
        assert_eq!(pot.q(3), Err(Error::TailUndeclared { index: 3 }));
        assert!(matches!(p_norm(&pot, 2.0, NormDomain::AllOfZ, 1e-9), Err(Error::TailUndeclared { .. })));
    }

    #[test]
    fn custom_rescales_u0_and_validates() {
        let t = CustomTable::new(&[(0, 0.5), (1, 1.5), (2, 2.5)], Some(TailModel::Exp { rate: 1.0 })).unwrap();
        let pot = Potential::custom(1.0, t).unwrap();
        assert!((pot.u(1).unwrap() - 1.0).abs() < 1e-15);
        assert!((pot.u(5).unwrap() - 5.0).abs() < 1e-12);
        assert!(CustomTable::new(&[(1, 1.0), (3, 2.0)], None).is_err());
        assert!(CustomTable::new(&[(0, 2.0), (1, 1.0)], None).is_err());
        assert!(CustomTable::new(&[(1, 1.0)], Some(TailModel::Exp { rate: -1.0 })).is_err());
    }

    #[test]
    fn custom_json_round_trip_matches_sos() {
        let json = r#"{"kind":"custom","beta":2.0,"table":[[1,1],[2,2],[3,3]],"tail":{"type":"exp","rate":1}}"#;
        let custom = Potential::from_json(json).unwrap();
        let sos = Potential::sos(2.0).unwrap();
        for j in -10..=10 {
            assert!((custom.q(j).unwrap() - sos.q(j).unwrap()).abs() < 1e-15);
        }
        let a = p_norm(&custom, 1.5, NormDomain::AllOfZ, 1e-12).unwrap().value();
        let b = p_norm(&sos, 1.5, NormDomain::AllOfZ, 1e-12).unwrap().value();
        assert!((a - b).abs() < 1e-11);
        assert!(Potential::from_json(r#"{"kind":"sos","beta":1}"#).is_err());
    }

    #[test]
    fn sos_norm_examples() {
        let pot = Potential::sos(2.0).unwrap();
        let g = p_norm(&pot, 1.5, NormDomain::AllOfZ, 1e-12).unwrap();
        assert!((g.value() - 1.068_694_369_884_768_6).abs() < 1e-13, "{g:?}");
        let d = p_norm(&pot, 3.0, NormDomain::ZWithoutZero, 1e-12).unwrap();
        assert!((d.value() - 0.170_652_890_881_969_3).abs() < 1e-13, "{d:?}");
    }

    #[test]
    fn log_norm_diverges_with_witness() {
        let pot = Potential::log(0.4).unwrap();
        match p_norm(&pot, 2.0, NormDomain::AllOfZ, 1e-9).unwrap() {
            NormOutcome::Infinite { witness, .. } => assert!(witness.contains("0.8")),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn p_norm_rejects_bad_exponent() {
        let pot = Potential::sos(1.0).unwrap();
        assert!(p_norm(&pot, 0.5, NormDomain::AllOfZ, 1e-9).is_err());
        assert!(p_norm(&pot, 2.0, NormDomain::Zq, 1e-9).is_err());
    }

    #[test]
    fn fuzzy_q_sos_closed_form() {
        let pot = Potential::sos(2.0).unwrap();
        let f = fuzzy_q(&pot, 2, 1e-12).unwrap();
        let e = (-4.0f64).exp();
        assert!((f.values[0] - (1.0 + e) / (1.0 - e)).abs() < 1e-14);
        assert!((f.values[1] - 2.0 * (-2.0f64).exp() / (1.0 - e)).abs() < 1e-14);
        assert!((f.values[0] - 1.037_314).abs() < 1e-6);
        assert!((f.values[1] - 0.275_720).abs() < 1e-6);
    }

    #[test]
    fn fuzzy_q_single_class_is_one_norm() {
        for pot in [Potential::sos(1.3).unwrap(), Potential::log(2.2).unwrap()] {
            let f = fuzzy_q(&pot, 1, 1e-12).unwrap();
            let one = p_norm(&pot, 1.0, NormDomain::AllOfZ, 1e-12).unwrap().value();
            assert!((f.values[0] - one).abs() < 1e-10 * one);
        }
    }

    #[test]
    fn fuzzy_q_refuses_non_summable() {
        let pot = Potential::log(0.9).unwrap();
        assert!(matches!(fuzzy_q(&pot, 3, 1e-9), Err(Error::NotSummable { .. })));
    }

    #[test]
    fn double_sum_examples() {
        assert!(check_double_sum(&Potential::sos(1.0).unwrap(), 2, 1e-9).unwrap().is_finite());
        assert!(matches!(
            check_double_sum(&Potential::log(0.9).unwrap(), 2, 1e-9).unwrap(),
            DoubleSum::Infinite { .. }
        ));
        assert!(check_double_sum(&Potential::log(1.5).unwrap(), 3, 1e-6).unwrap().is_finite());
        let t = CustomTable::new(&[(1, 1.0)], None).unwrap();
        assert!(matches!(
            check_double_sum(&Potential::custom(1.0, t).unwrap(), 2, 1e-9).unwrap(),
            DoubleSum::Unknown { .. }
        ));
    }

    #[test]
    fn envelope_of_non_monotone_table() {
        let t = CustomTable::new(&[(1, 2.0), (2, 1.0), (3, 3.0)], Some(TailModel::Exp { rate: 1.0 })).unwrap();
        let pot = Potential::custom(1.0, t).unwrap();
        assert!((pot.envelope(1).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((pot.envelope(3).unwrap() - (-3.0f64).exp()).abs() < 1e-15);
        assert!((pot.envelope(5).unwrap() - pot.q(5).unwrap()).abs() < 1e-15);
        assert!((pot.min_nonzero_u().unwrap() - 1.0).abs() < 1e-15);
    }
}
