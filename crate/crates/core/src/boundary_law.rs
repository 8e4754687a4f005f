//! The boundary-law operator `T`, its contraction solver on a truncated copy
//! of ℤ and on ℤ_q, localization bounds and single-site marginals.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goodset::{membership, GoodSetQuery};
use crate::potentials::{fuzzy_q, norm_pair, FuzzyOperator, NormOutcome, Potential};
use crate::series::{ksum, CompensatedSum};

/// Where a boundary law lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    /// Indices `−R..=R`, stored at offset `R`.
    ZTruncated { radius: usize },
    /// Residues `0..q`.
    Zq { q: usize },
}

impl Support {
    pub fn len(&self) -> usize {
        match *self {
            Support::ZTruncated { radius } => 2 * radius + 1,
            Support::Zq { q } => q,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Storage slot of the origin.
    pub fn origin(&self) -> usize {
        match *self {
            Support::ZTruncated { radius } => radius,
            Support::Zq { .. } => 0,
        }
    }

    /// Label of storage slot `k`.
    pub fn label(&self, k: usize) -> i64 {
        k as i64 - self.origin() as i64
    }
}

/// How the fixed point was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// Global contraction on the good-set ball.
    GoodSet,
    /// Operator-norm bound of the Jacobian at the limit is below one.
    LocalJacobian,
    /// `λ ≡ 1` on ℤ_1.
    FreeState,
    /// Plain iteration without contraction certificate.
    None,
}

/// A normalized boundary law with its `d`-th-root representation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryLaw {
    pub support: Support,
    pub d: u32,
    /// `x(0) = 1`.
    pub x: Vec<f64>,
    /// `λ = x^d`.
    pub lambda: Vec<f64>,
    /// `‖x − T(x)‖_{d+1}`.
    pub residual: f64,
    pub ball_radius: Option<f64>,
    pub certificate: Certificate,
}

impl BoundaryLaw {
    fn from_x(support: Support, d: u32, x: Vec<f64>, residual: f64, ball_radius: Option<f64>, certificate: Certificate) -> Self {
        let lambda = x.iter().map(|v| v.powi(d as i32)).collect();
        BoundaryLaw { support, d, x, lambda, residual, ball_radius, certificate }
    }

    pub fn is_free_state(&self) -> bool {
        self.certificate == Certificate::FreeState
    }

    /// `x` at label `i`; zero outside a truncated window.
    pub fn x_at(&self, i: i64) -> f64 {
        match self.support {
            Support::ZTruncated { radius } => {
                if i.unsigned_abs() as usize > radius {
                    0.0
                } else {
                    self.x[(i + radius as i64) as usize]
                }
            }
            Support::Zq { q } => self.x[i.rem_euclid(q as i64) as usize],
        }
    }

    /// `‖x‖_{p}` over the support without the origin.
    pub fn off_origin_norm(&self, p: f64) -> f64 {
        off_origin_norm(&self.x, self.support.origin(), p)
    }

    /// Writes `index,x,lambda,marginal` rows after `#`-prefixed metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "index,x,lambda,marginal")?;
        let marginal = single_site_marginal(self);
        for k in 0..self.x.len() {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                self.support.label(k),
                self.x[k],
                self.lambda[k],
                marginal[k]
            )?;
        }
        Ok(())
    }
}

fn off_origin_norm(x: &[f64], origin: usize, p: f64) -> f64 {
    let s = ksum(x.iter().enumerate().filter(|(k, _)| *k != origin).map(|(_, v)| v.abs().powf(p)));
    s.powf(1.0 / p)
}

fn diff_norm(a: &[f64], b: &[f64], origin: usize, p: f64) -> f64 {
    let s = ksum(a.iter().zip(b).enumerate().filter(|(k, _)| *k != origin).map(|(_, (u, v))| (u - v).abs().powf(p)));
    s.powf(1.0 / p)
}

const FFT_THRESHOLD: usize = 512;

struct FftConv {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

/// The operator `T` for a fixed kernel, support and degree.
pub struct Operator {
    support: Support,
    d: u32,
    /// Truncated: `Q(k)` for `k ∈ −2R..=2R` at offset `2R`. Periodic: `Q̄_q(r)`.
    kernel: Vec<f64>,
    fft: Option<FftConv>,
}

impl Operator {
    /// `T` on `−R..=R` with kernel `Q`.
    pub fn truncated(pot: &Potential, d: u32, radius: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(format!("degree d must be ≥ 2 (got {d})")));
        }
        let r = radius as i64;
        let kernel: Vec<f64> = (-2 * r..=2 * r).map(|k| pot.q(k)).collect::<Result<_>>()?;
        let fft = (radius > FFT_THRESHOLD).then(|| {
            let n = (6 * radius + 2).next_power_of_two();
            let mut planner = FftPlanner::new();
            let fft = planner.plan_fft_forward(n);
            let ifft = planner.plan_fft_inverse(n);
            let mut kernel_hat = vec![Complex::new(0.0, 0.0); n];
            for (k, v) in kernel.iter().enumerate() {
                kernel_hat[k].re = *v;
            }
            fft.process(&mut kernel_hat);
            FftConv { fft, ifft, kernel_hat }
        });
        Ok(Operator { support: Support::ZTruncated { radius }, d, kernel, fft })
    }

    /// `T` on ℤ_q with kernel `Q̄_q`.
    pub fn periodic(qbar: &FuzzyOperator, d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::Config(format!("degree d must be ≥ 2 (got {d})")));
        }
        let z = qbar.values[0];
        let kernel = qbar.values.iter().map(|v| v / z).collect();
        Ok(Operator { support: Support::Zq { q: qbar.q }, d, kernel, fft: None })
    }

    pub fn support(&self) -> Support {
        self.support
    }

    /// Kernel value at lag `k`.
    pub fn kernel_at(&self, k: i64) -> f64 {
        match self.support {
            Support::ZTruncated { radius } => {
                let off = k + 2 * radius as i64;
                if off < 0 || off as usize >= self.kernel.len() {
                    0.0
                } else {
                    self.kernel[off as usize]
                }
            }
            Support::Zq { q } => self.kernel[k.rem_euclid(q as i64) as usize],
        }
    }

    /// Unnormalized `N(i) = Σ_j Q(i − j) ȳ(j)` with `ȳ = |x|^d` and `ȳ(0) = 1`.
    pub fn numerators(&self, x: &[f64]) -> Vec<f64> {
        let origin = self.support.origin();
        let mut y: Vec<f64> = x.iter().map(|v| v.abs().powi(self.d as i32)).collect();
        y[origin] = 1.0;
        match self.support {
            Support::Zq { q } => (0..q)
                .map(|i| ksum((0..q).map(|j| self.kernel[(i + q - j) % q] * y[j])))
                .collect(),
            Support::ZTruncated { radius } => match &self.fft {
                None => {
                    let n = 2 * radius + 1;
                    // Q(i − j) sits at offset (i − j) + 2R = i + (2R − j) in storage.
                    (0..n).map(|i| ksum((0..n).map(|j| self.kernel[i + 2 * radius - j] * y[j]))).collect()
                }
                Some(conv) => {
                    let len = conv.kernel_hat.len();
                    let mut buf = vec![Complex::new(0.0, 0.0); len];
                    for (k, v) in y.iter().enumerate() {
                        buf[k].re = *v;
                    }
                    conv.fft.process(&mut buf);
                    for (b, k) in buf.iter_mut().zip(&conv.kernel_hat) {
                        *b *= *k;
                    }
                    conv.ifft.process(&mut buf);
                    let scale = 1.0 / len as f64;
                    // Full convolution index m = (i + 2R) pairs kernel offset and y offset.
                    (0..2 * radius + 1).map(|i| (buf[i + 2 * radius].re * scale).max(0.0)).collect()
                }
            },
        }
    }

    /// `T(x)`; the origin entry of the result is exactly 1.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut n = self.numerators(x);
        let origin = self.support.origin();
        let z = n[origin];
        for v in n.iter_mut() {
            *v /= z;
        }
        n[origin] = 1.0;
        n
    }

    /// `x₀ = Q` restricted to the support.
    pub fn kernel_start(&self) -> Vec<f64> {
        (0..self.support.len()).map(|k| self.kernel_at(self.support.label(k))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Refuse without a contraction certificate.
    Certified,
    /// Iterate anyway and label the result uncertified.
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    Kernel,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Truncation radius; chosen from the tail of `Q` when absent.
    pub radius: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: SolveMode,
    pub start: StartPoint,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { radius: None, tol: 1e-12, max_iter: 10_000, mode: SolveMode::Certified, start: StartPoint::Kernel }
    }
}

/// Diagnostics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Largest ratio of successive step norms while steps exceed roundoff.
    pub contraction_estimate: Option<f64>,
    /// `L^n/(1 − L)·‖x₁ − x₀‖`.
    pub a_priori_bound: Option<f64>,
    pub lipschitz: Option<f64>,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub certificate: Certificate,
    /// `‖Q χ_{|j|>R}‖_{d+1}` for truncated solves.
    pub truncation_tail: Option<f64>,
    pub radius: Option<usize>,
}

/// `‖Q χ_{|j|>R}‖_{d+1}` as a certified upper bound.
pub fn truncation_tail(pot: &Potential, d: u32, radius: usize) -> Result<f64> {
    let (cut, law) = pot
        .decay()
        .ok_or(Error::TailUndeclared { index: pot_table_end(pot) })?;
    let p = d as f64 + 1.0;
    let law_p = law.pow(p);
    let mut acc = CompensatedSum::new();
    let start = radius as u64 + 1;
    // Explicit terms up to the table end, then the certified tail.
    let mut j = start;
    while j <= cut {
        acc.add(pot.q(j as i64)?.powf(p));
        j += 1;
    }
    Ok((2.0 * (acc.value() + law_p.tail_bracket(j).hi)).powf(1.0 / p))
}

fn pot_table_end(pot: &Potential) -> u64 {
    match &pot.kind {
        crate::potentials::PotentialKind::Custom(t) => t.len() as u64 + 1,
        _ => 0,
    }
}

const MAX_RADIUS: usize = 1 << 22;

/// Smallest radius with `‖Q χ_{|j|>R}‖_{d+1} < target`.
pub fn auto_radius(pot: &Potential, d: u32, target: f64) -> Result<usize> {
    let mut hi = 16usize;
    while truncation_tail(pot, d, hi)? >= target {
        hi *= 2;
        if hi > MAX_RADIUS {
            return Err(Error::Uncertified(format!("truncation radius above {MAX_RADIUS} needed for tail {target:e}")));
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if truncation_tail(pot, d, mid)? < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

struct IterationOutcome {
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
    contraction: Option<f64>,
    first_step: f64,
}

/// Iterates `T` until the a-posteriori bound `step·L/(1−L)` (or `step` when
/// `L` is unknown) drops below `tol`.
fn iterate(op: &Operator, x0: Vec<f64>, lipschitz: Option<f64>, tol: f64, max_iter: usize) -> Result<IterationOutcome> {
    let origin = op.support().origin();
    let p = op.d as f64 + 1.0;
    let mut x = x0;
    let mut prev_step: Option<f64> = None;
    let mut contraction: Option<f64> = None;
    let mut first_step = f64::NAN;
    let mut growth = 0usize;
    for it in 1..=max_iter {
        let next = op.apply(&x);
        let step = diff_norm(&next, &x, origin, p);
        if !step.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::MaxIterations { iterations: it, last_step: step });
        }
        if it == 1 {
            first_step = step;
        }
        if let Some(ps) = prev_step {
            if ps > 1e-13 && step > 1e-13 {
                let ratio = step / ps;
                contraction = Some(contraction.map_or(ratio, |c: f64| c.max(ratio)));
                growth = if ratio > 1.0 { growth + 1 } else { 0 };
                if lipschitz.is_none() && growth > 50 {
                    return Err(Error::MaxIterations { iterations: it, last_step: step });
                }
            }
        }
        x = next;
        let bound = match lipschitz {
            Some(l) => step * l / (1.0 - l),
            None => step,
        };
        if bound < tol {
            let residual = diff_norm(&op.apply(&x), &x, origin, p);
            return Ok(IterationOutcome { x, iterations: it, residual, contraction, first_step });
        }
        prev_step = Some(step);
    }
    let last = prev_step.unwrap_or(f64::NAN);
    Err(Error::MaxIterations { iterations: max_iter, last_step: last })
}

fn finite_pair(g: &NormOutcome, dl: &NormOutcome) -> (Option<f64>, Option<f64>) {
    (g.report().map(|r| r.value), dl.report().map(|r| r.value))
}

/// Localized boundary law on a truncated copy of ℤ.
pub fn solve_fixed_point(pot: &Potential, d: u32, config: &SolveConfig) -> Result<(BoundaryLaw, SolveReport)> {
    if !(config.tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    let (g, dl) = norm_pair(pot, d, 1e-13)?;
    let (gamma, delta) = finite_pair(&g, &dl);
    let verdict = match (gamma, delta) {
        (Some(gv), Some(dv)) => Some(membership(&GoodSetQuery::new(d, gv, dv)?, 1e-15)),
        _ => None,
    };
    let certified = verdict.is_some_and(|v| v.in_good_set);
    if !certified && config.mode == SolveMode::Certified {
        return Err(Error::OutsideGoodSet { gamma: gamma.unwrap_or(f64::INFINITY), delta: delta.unwrap_or(f64::INFINITY), d });
    }
    let radius = match config.radius {
        Some(r) => r,
        None => auto_radius(pot, d, 0.01 * config.tol)?,
    };
    let tail = truncation_tail(pot, d, radius)?;
    if certified && tail >= config.tol {
        return Err(Error::Config(format!("radius {radius} leaves tail {tail:e} ≥ tol {:e}", config.tol)));
    }
    let op = Operator::truncated(pot, d, radius)?;
    let x0 = match config.start {
        StartPoint::Kernel => op.kernel_start(),
        StartPoint::Zero => {
            let mut z = vec![0.0; op.support().len()];
            z[op.support().origin()] = 1.0;
            z
        }
    };
    let lipschitz = if certified { verdict.and_then(|v| v.lipschitz) } else { None };
    let epsilon = verdict.and_then(|v| v.epsilon);
    let out = iterate(&op, x0, lipschitz, config.tol, config.max_iter)?;
    let a_priori_bound = lipschitz.map(|l| l.powi(out.iterations as i32) / (1.0 - l) * out.first_step);
    let certificate = if certified { Certificate::GoodSet } else { Certificate::None };
    let bl = BoundaryLaw::from_x(op.support(), d, out.x, out.residual, if certified { epsilon } else { None }, certificate);
    let report = SolveReport {
        iterations: out.iterations,
        final_residual: out.residual,
        contraction_estimate: out.contraction,
        a_priori_bound,
        lipschitz: verdict.and_then(|v| v.lipschitz),
        epsilon,
        gamma,
        delta,
        certificate,
        truncation_tail: Some(tail),
        radius: Some(radius),
    };
    Ok((bl, report))
}

/// Riesz–Thorin bound on `‖DT(x)‖_{d+1 → d+1}` on ℤ_q without the origin.
pub fn jacobian_norm_bound(op: &Operator, x: &[f64]) -> f64 {
    let Support::Zq { q } = op.support() else {
        panic!("jacobian bound is only implemented on ℤ_q");
    };
    let d = op.d as f64;
    let n = op.numerators(x);
    let n0 = n[0];
    let mut jac = vec![vec![0.0; q]; q];
    for (i, row) in jac.iter_mut().enumerate().skip(1) {
        for (k, cell) in row.iter_mut().enumerate().skip(1) {
            let qik = op.kernel_at(i as i64 - k as i64);
            let qk = op.kernel_at(k as i64);
            *cell = d * x[k].abs().powf(d - 1.0) * (qik * n0 - n[i] * qk) / (n0 * n0);
        }
    }
    let row_max = (1..q).map(|i| (1..q).map(|k| jac[i][k].abs()).sum::<f64>()).fold(0.0, f64::max);
    let col_max = (1..q).map(|k| (1..q).map(|i| jac[i][k].abs()).sum::<f64>()).fold(0.0, f64::max);
    let p = d + 1.0;
    col_max.powf(1.0 / p) * row_max.powf(1.0 - 1.0 / p)
}

/// Height-periodic boundary law on ℤ_q.
pub fn periodic_solve(pot: &Potential, d: u32, q: usize, config: &SolveConfig) -> Result<(BoundaryLaw, SolveReport)> {
    if d < 2 {
        return Err(Error::Config(format!("degree d must be ≥ 2 (got {d})")));
    }
    let qq = fuzzy_q(pot, q, 1e-14)?;
    let support = Support::Zq { q };
    if q == 1 {
        let bl = BoundaryLaw::from_x(support, d, vec![1.0], 0.0, None, Certificate::FreeState);
        let report = SolveReport {
            iterations: 0,
            final_residual: 0.0,
            contraction_estimate: None,
            a_priori_bound: None,
            lipschitz: None,
            epsilon: None,
            gamma: None,
            delta: None,
            certificate: Certificate::FreeState,
            truncation_tail: None,
            radius: None,
        };
        return Ok((bl, report));
    }
    let qbar = qq.normalized();
    let (gamma, delta) = qbar.norm_pair(d);
    let verdict = membership(&GoodSetQuery::new(d, gamma, delta)?, 1e-15);
    let op = Operator::periodic(&qbar, d)?;
    let x0 = match config.start {
        StartPoint::Kernel => op.kernel_start(),
        StartPoint::Zero => {
            let mut z = vec![0.0; q];
            z[0] = 1.0;
            z
        }
    };
    let (out, certificate, lipschitz) = if verdict.in_good_set {
        let l = verdict.lipschitz;
        (iterate(&op, x0, l, config.tol, config.max_iter)?, Certificate::GoodSet, l)
    } else {
        // Plain iteration, then certify the limit through its Jacobian.
        let out = iterate(&op, x0, None, 0.01 * config.tol, config.max_iter)?;
        let local = jacobian_norm_bound(&op, &out.x);
        let trivial = out.x.iter().all(|v| (v - 1.0).abs() < 1e-6);
        if trivial {
            return Err(Error::NoNontrivialSolution(format!("iteration converged to the free state λ ≡ 1 (q={q})")));
        }
        if local < 1.0 {
            (out, Certificate::LocalJacobian, Some(local))
        } else if config.mode == SolveMode::BestEffort {
            (out, Certificate::None, None)
        } else {
            return Err(Error::OutsideGoodSet { gamma, delta, d });
        }
    };
    if out.x.iter().all(|v| (v - 1.0).abs() < 1e-6) {
        return Err(Error::NoNontrivialSolution(format!("solution is constant (q={q})")));
    }
    let a_priori_bound = match certificate {
        Certificate::GoodSet => lipschitz.map(|l| l.powi(out.iterations as i32) / (1.0 - l) * out.first_step),
        _ => None,
    };
    let ball = if certificate == Certificate::GoodSet { verdict.epsilon } else { None };
    let bl = BoundaryLaw::from_x(support, d, out.x, out.residual, ball, certificate);
    let report = SolveReport {
        iterations: out.iterations,
        final_residual: out.residual,
        contraction_estimate: out.contraction,
        a_priori_bound,
        lipschitz,
        epsilon: verdict.epsilon,
        gamma: Some(gamma),
        delta: Some(delta),
        certificate,
        truncation_tail: None,
        radius: None,
    };
    Ok((bl, report))
}

/// `((δ(1−δε^d)/(1+γε^{d−1}))^{d+1}, (δ(1+δε^d)/(1−γε^{d−1}))^{d+1})`.
pub fn localization_bounds(gamma: f64, delta: f64, d: u32) -> Result<(f64, f64)> {
    let query = GoodSetQuery::new(d, gamma, delta)?;
    let v = membership(&query, 1e-15);
    let (true, Some(e)) = (v.in_good_set, v.epsilon) else {
        return Err(Error::OutsideGoodSet { gamma, delta, d });
    };
    let di = d as i32;
    let lower = (delta * (1.0 - delta * e.powi(di)) / (1.0 + gamma * e.powi(di - 1))).powi(di + 1);
    let upper = (delta * (1.0 + delta * e.powi(di)) / (1.0 - gamma * e.powi(di - 1))).powi(di + 1);
    Ok((lower, upper))
}

/// `μ(σ₀ = i) ∝ x(i)^{d+1}` (equivalently `λ(i)^{(d+1)/d}`).
pub fn single_site_marginal(bl: &BoundaryLaw) -> Vec<f64> {
    let w: Vec<f64> = bl.x.iter().map(|v| v.abs().powi(bl.d as i32 + 1)).collect();
    let z = ksum(w.iter().copied());
    w.into_iter().map(|v| v / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sos(beta: f64) -> Potential {
        Potential::sos(beta).unwrap()
    }

    #[test]
    fn t_of_zero_is_kernel() {
        let pot = sos(1.3);
        let op = Operator::truncated(&pot, 3, 20).unwrap();
        let mut z = vec![0.0; 41];
        z[20] = 1.0;
        let t = op.apply(&z);
        for k in 0..41 {
            assert!((t[k] - pot.q(k as i64 - 20).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn fft_matches_direct_convolution() {
        let pot = Potential::log(2.0).unwrap();
        let small = Operator::truncated(&pot, 2, 400).unwrap();
        let mut big = Operator::truncated(&pot, 2, 400).unwrap();
        let n = (6 * 400 + 2usize).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut kh = vec![Complex::new(0.0, 0.0); n];
        for (k, v) in big.kernel.iter().enumerate() {
            kh[k].re = *v;
        }
        fft.process(&mut kh);
        big.fft = Some(FftConv { fft, ifft: planner.plan_fft_inverse(n), kernel_hat: kh });
        let x = small.kernel_start();
        let a = small.apply(&x);
        let b = big.apply(&x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn sos_solve_inside_localization_bounds() {
        let pot = sos(2.5);
        let cfg = SolveConfig { radius: Some(200), ..SolveConfig::default() };
        let (bl, rep) = solve_fixed_point(&pot, 2, &cfg).unwrap();
        let ratio = bl.off_origin_norm(3.0).powi(3);
        let (lo, hi) = localization_bounds(rep.gamma.unwrap(), rep.delta.unwrap(), 2).unwrap();
        assert!(lo <= ratio && ratio <= hi, "{lo} {ratio} {hi}");
        assert!((lo - 7.81e-4).abs() < 1e-6 && (hi - 1.64e-3).abs() < 1e-5, "{lo} {hi}");
        assert!(rep.contraction_estimate.unwrap() <= rep.lipschitz.unwrap() + 1e-9);
        assert!(bl.off_origin_norm(3.0) <= rep.epsilon.unwrap());
        assert_eq!(bl.x[200], 1.0);
    }

    #[test]
    fn refuses_outside_good_set() {
        let cfg = SolveConfig { radius: Some(50), ..SolveConfig::default() };
        assert!(matches!(solve_fixed_point(&sos(0.5), 2, &cfg), Err(Error::OutsideGoodSet { .. })));
    }

    #[test]
    fn periodic_sos_q2_matches_quadratic_root() {
        let beta: f64 = 2.0;
        let s = 1.0 / beta.cosh();
        let x = ((1.0 - s) - ((1.0 - s).powi(2) - 4.0 * s * s).sqrt()) / (2.0 * s);
        let (bl, rep) = periodic_solve(&sos(beta), 2, 2, &SolveConfig::default()).unwrap();
        assert!((bl.x[1] - x).abs() < 1e-10, "{} vs {x}", bl.x[1]);
        assert!((bl.lambda[1] - 0.183_618).abs() < 1e-6);
        assert_ne!(rep.certificate, Certificate::None);
    }

    #[test]
    fn periodic_below_discriminant_has_no_solution() {
        assert!(matches!(
            periodic_solve(&sos(1.7), 2, 2, &SolveConfig::default()),
            Err(Error::NoNontrivialSolution(_))
        ));
    }

    #[test]
    fn periodic_q1_is_free_state() {
        let (bl, _) = periodic_solve(&sos(1.0), 3, 1, &SolveConfig::default()).unwrap();
        assert!(bl.is_free_state());
        assert_eq!(bl.lambda, vec![1.0]);
    }

    #[test]
    fn marginal_of_point_mass() {
        let bl = BoundaryLaw::from_x(Support::ZTruncated { radius: 2 }, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0], 0.0, None, Certificate::None);
        assert_eq!(single_site_marginal(&bl), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_header_and_rows() {
        let (bl, _) = periodic_solve(&sos(2.0), 2, 2, &SolveConfig::default()).unwrap();
        let mut buf = Vec::new();
        bl.write_csv(&mut buf, &[("model", "sos".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# model: sos");
        assert_eq!(lines[1], "index,x,lambda,marginal");
        assert_eq!(lines.len(), 4);
    }

    proptest! {
        #[test]
        fn t_preserves_symmetry(beta in 0.5f64..4.0, seed in proptest::collection::vec(0.0f64..1.0, 10)) {
            let pot = sos(beta);
            let op = Operator::truncated(&pot, 2, 10).unwrap();
            let mut x = vec![0.0; 21];
            x[10] = 1.0;
            for (k, v) in seed.iter().enumerate() {
                x[10 + k + 1] = *v;
                x[10 - k - 1] = *v;
            }
            let t = op.apply(&x);
            for k in 0..21 {
                prop_assert!((t[k] - t[20 - k]).abs() < 1e-14);
            }
            prop_assert!(op.numerators(&x)[10] >= 1.0);
        }

        #[test]
        fn ball_inequality(beta in 1.5f64..4.0, scale in 0.0f64..1.0, seed in proptest::collection::vec(0.0f64..1.0, 30)) {
            let pot = sos(beta);
            let d = 2;
            let (g, dl) = norm_pair(&pot, d, 1e-13).unwrap();
            let (gamma, delta) = (g.value(), dl.value());
            let op = Operator::truncated(&pot, d, 30).unwrap();
            let mut x = vec![0.0; 61];
            for (k, v) in seed.iter().enumerate() {
                x[k] = *v * scale;
                x[60 - k] = seed[(k * 7) % 30] * scale;
            }
            x[30] = 1.0;
            let nx = off_origin_norm(&x, 30, 3.0);
            let nt = off_origin_norm(&op.apply(&x), 30, 3.0);
            prop_assert!(nt <= delta + gamma * nx.powi(2) + 1e-12);
        }
    }
}
