//! Laws of the total increment `W_n` along a path: exact dynamic programs,
//! seeded samplers and recovery of the height period from a sampled path.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_law::{single_site_marginal, BoundaryLaw, Operator, Support};
use crate::error::{Error, Result};
use crate::ggm::{edge_marginal, increment_laws, FuzzyChain, IncrementLaw};
use crate::potentials::{fuzzy_q, Potential};
use crate::series::ksum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PathMode {
    Gibbs,
    Ggm { q: usize },
}

/// Law of `W_n` on `−K..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDistribution {
    pub n: usize,
    pub window: i64,
    pub law: Vec<f64>,
    /// `1 − Σ law`.
    pub leaked_mass: f64,
    pub mode: PathMode,
    /// `Σ_i α(i)α(i+k)` for localized chains.
    pub limit: Option<Vec<f64>>,
}

impl PathDistribution {
    pub fn at(&self, k: i64) -> f64 {
        if k.abs() > self.window {
            0.0
        } else {
            self.law[(k + self.window) as usize]
        }
    }

    pub fn sup(&self) -> f64 {
        self.law.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        ksum(self.law.iter().enumerate().map(|(k, p)| (k as i64 - self.window) as f64 * p))
    }

    /// `max_k |law(k) − limit(k)|`.
    pub fn distance_to_limit(&self) -> Option<f64> {
        self.limit
            .as_ref()
            .map(|lim| self.law.iter().zip(lim).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// Writes `n,k,prob,leaked_mass` rows.
pub fn write_distributions_csv<W: Write>(mut w: W, dists: &[PathDistribution], metadata: &[(&str, String)]) -> std::io::Result<()> {
    for (k, v) in metadata {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "n,k,prob,leaked_mass")?;
    for d in dists {
        for (i, p) in d.law.iter().enumerate() {
            writeln!(w, "{},{},{:.16e},{:.16e}", d.n, i as i64 - d.window, p, d.leaked_mass)?;
        }
    }
    Ok(())
}

/// The `ℤ`-valued chain `P(i,j) = Q(i−j)λ(j)/Σ_l Q(i−l)λ(l)` restricted to the
/// window `−M..=M` that carries all but `alpha_tol` of the stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedChain {
    pub m: i64,
    /// Stationary law on the window (not renormalized).
    pub alpha: Vec<f64>,
    /// Row-stochastic on the full truncation; rows here are restricted.
    pub p: Vec<Vec<f64>>,
    /// `α(|i| > M)`.
    pub alpha_outside: f64,
}

impl LocalizedChain {
    pub fn new(bl: &BoundaryLaw, pot: &Potential, alpha_tol: f64) -> Result<Self> {
        let Support::ZTruncated { radius } = bl.support else {
            return Err(Error::Config("localized chain needs a boundary law on truncated ℤ".into()));
        };
        let r = radius as i64;
        let alpha_full = single_site_marginal(bl);
        // Shrink M while the discarded stationary mass stays within tolerance.
        let mut m = 0i64;
        let outside = |m: i64| -> f64 {
            ksum(alpha_full.iter().enumerate().filter(|(k, _)| (*k as i64 - r).abs() > m).map(|(_, a)| *a))
        };
        while m < r && outside(m) > alpha_tol {
            m += 1;
        }
        let op = Operator::truncated(pot, bl.d, radius)?;
        let lam = |l: i64| bl.lambda[(l + r) as usize];
        let p = (-m..=m)
            .map(|i| {
                let norm = ksum((-r..=r).map(|l| op.kernel_at(i - l) * lam(l)));
                (-m..=m).map(|j| op.kernel_at(i - j) * lam(j) / norm).collect()
            })
            .collect();
        let alpha = (-m..=m).map(|i| alpha_full[(i + r) as usize]).collect();
        Ok(LocalizedChain { m, alpha, p, alpha_outside: outside(m) })
    }

    fn width(&self) -> usize {
        2 * self.m as usize + 1
    }
}

/// `ν(W_n = k) = Σ_i α(i)P^n(i, i+k)` for every `n` in `ns`.
pub fn wn_localized_series(chain: &LocalizedChain, ns: &[usize], leak_tol: f64) -> Result<Vec<PathDistribution>> {
    let w = chain.width();
    let m = chain.m;
    let k_win = 2 * m;
    let mut limit = vec![0.0; 2 * k_win as usize + 1];
    for i in 0..w {
        for j in 0..w {
            limit[j + 2 * m as usize - i] += chain.alpha[i] * chain.alpha[j];
        }
    }
    let n_max = ns.iter().copied().max().unwrap_or(0);
    // Row i holds α(i)·P^t(i, ·).
    let mut state: Vec<Vec<f64>> = (0..w).map(|i| {
        let mut row = vec![0.0; w];
        row[i] = chain.alpha[i];
        row
    }).collect();
    let mut out = Vec::new();
    for t in 0..=n_max {
        if ns.contains(&t) {
            let mut law = vec![0.0; 2 * k_win as usize + 1];
            for (i, row) in state.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    law[j + 2 * m as usize - i] += v;
                }
            }
            let leaked = (1.0 - ksum(law.iter().copied())).max(0.0);
            if leaked > leak_tol {
                return Err(Error::WindowTooSmall { leaked, tolerance: leak_tol, required: 2 * w });
            }
            out.push(PathDistribution {
                n: t,
                window: k_win,
                law,
                leaked_mass: leaked,
                mode: PathMode::Gibbs,
                limit: Some(limit.clone()),
            });
        }
        if t == n_max {
            break;
        }
        state = state
            .par_iter()
            .map(|row| {
                let mut next = vec![0.0; w];
                for (i, &v) in row.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    for (j, p) in chain.p[i].iter().enumerate() {
                        next[j] += v * p;
                    }
                }
                next
            })
            .collect();
    }
    out.sort_by_key(|d| ns.iter().position(|&n| n == d.n));
    Ok(out)
}

/// Single-`n` form of [`wn_localized_series`] with the window sized for `n`.
pub fn wn_localized_exact(bl: &BoundaryLaw, pot: &Potential, n: usize, leak_tol: f64) -> Result<PathDistribution> {
    let chain = LocalizedChain::new(bl, pot, leak_tol / (10.0 * (n as f64 + 1.0)))?;
    Ok(wn_localized_series(&chain, &[n], leak_tol)?.remove(0))
}

/// Free-state increment standard deviation `(Σ j² Q(j)/‖Q‖₁)^{1/2}`.
pub fn free_state_std(pot: &Potential) -> Result<f64> {
    let one = fuzzy_q(pot, 1, 1e-14)?.values[0];
    if let Some((_, crate::series::Decay::Power { exponent, .. })) = pot.decay() {
        if exponent <= 3.0 {
            return Err(Error::Config(format!(
                "increments have infinite variance (tail exponent {exponent} ≤ 3); pass an explicit window"
            )));
        }
    }
    let mut s = 0.0;
    for j in 1..=1_000_000i64 {
        let term = (j * j) as f64 * pot.q(j)?;
        s += term;
        if term < 1e-18 * s && j > 64 {
            break;
        }
    }
    Ok((2.0 * s / one).sqrt())
}

/// `K = ⌈8 σ̂ √n⌉ + q`.
pub fn default_window(pot: &Potential, q: usize, n: usize) -> Result<i64> {
    Ok((8.0 * free_state_std(pot)? * (n as f64).sqrt()).ceil() as i64 + q as i64)
}

/// Exact law of `W_n` under the gradient measure for every `n` in `ns`, by a
/// dynamic program over (fuzzy class, partial sum in `−K..=K`).
pub fn wn_ggm_series(fc: &FuzzyChain, laws: &[IncrementLaw], ns: &[usize], window: i64, leak_tol: f64) -> Result<Vec<PathDistribution>> {
    let q = fc.q;
    if laws.len() != q {
        return Err(Error::Config(format!("{} increment laws for period {q}", laws.len())));
    }
    let width = 2 * window as usize + 1;
    let mut dist: Vec<Vec<f64>> = (0..q).map(|c| {
        let mut v = vec![0.0; width];
        v[window as usize] = fc.alpha[c];
        v
    }).collect();
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let clipped: Vec<Vec<(i64, f64)>> =
        laws.iter().map(|l| l.weights.iter().copied().filter(|w| w.0.abs() <= 2 * window).collect()).collect();
    let mut out = Vec::new();
    for t in 0..=n_max {
        if ns.contains(&t) {
            let law: Vec<f64> = (0..width).map(|k| ksum((0..q).map(|c| dist[c][k]))).collect();
            let leaked = (1.0 - ksum(law.iter().copied())).max(0.0);
            if leaked > leak_tol {
                let sigma_hint = (window as f64 / (t.max(1) as f64).sqrt()).max(1.0);
                let required = (2.0 * sigma_hint * (t.max(1) as f64).sqrt()).ceil() as usize + q;
                return Err(Error::WindowTooSmall { leaked, tolerance: leak_tol, required: required.max(2 * window as usize) });
            }
            out.push(PathDistribution { n: t, window, law, leaked_mass: leaked, mode: PathMode::Ggm { q }, limit: None });
        }
        if t == n_max {
            break;
        }
        dist = (0..q)
            .into_par_iter()
            .map(|c2| {
                let mut next = vec![0.0; width];
                for (c, src) in dist.iter().enumerate() {
                    let pc = fc.p[c][c2];
                    if pc == 0.0 {
                        continue;
                    }
                    let law = &clipped[(c2 + q - c) % q];
                    for (w, &mass) in src.iter().enumerate() {
                        if mass == 0.0 {
                            continue;
                        }
                        let base = w as i64 - window;
                        for &(j, rho) in law {
                            let target = base + j;
                            if target.abs() <= window {
                                next[(target + window) as usize] += pc * mass * rho;
                            }
                        }
                    }
                }
                next
            })
            .collect();
    }
    out.sort_by_key(|d| ns.iter().position(|&n| n == d.n));
    Ok(out)
}

pub fn wn_ggm_exact(fc: &FuzzyChain, laws: &[IncrementLaw], n: usize, window: i64, leak_tol: f64) -> Result<PathDistribution> {
    Ok(wn_ggm_series(fc, laws, &[n], window, leak_tol)?.remove(0))
}

/// A sampled path: `n` increments and, for gradient sources, `n + 1` fuzzy classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub increments: Vec<i64>,
    pub classes: Option<Vec<usize>>,
}

impl PathSample {
    pub fn total(&self) -> i64 {
        self.increments.iter().sum()
    }

    /// Writes `step,increment,fuzzy_class` rows; the class column is empty for Gibbs paths.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "step,increment,fuzzy_class")?;
        for (t, inc) in self.increments.iter().enumerate() {
            match &self.classes {
                Some(c) => writeln!(w, "{},{},{}", t + 1, inc, c[t + 1])?,
                None => writeln!(w, "{},{},", t + 1, inc)?,
            }
        }
        Ok(())
    }
}

enum SamplerKind {
    Gibbs { start: WeightedIndex<f64>, rows: Vec<WeightedIndex<f64>> },
    Ggm { start: WeightedIndex<f64>, rows: Vec<WeightedIndex<f64>>, increments: Vec<(Vec<i64>, WeightedIndex<f64>)>, q: usize },
}

/// Draws paths from a localized chain or a gradient measure.
pub struct Sampler {
    kind: SamplerKind,
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w).map_err(|e| Error::Config(format!("invalid sampling weights: {e}")))
}

impl Sampler {
    /// Samples the localized chain on its effective window (rows renormalized there).
    pub fn gibbs(chain: &LocalizedChain) -> Result<Self> {
        let rows = chain.p.iter().map(|r| weighted(r)).collect::<Result<_>>()?;
        Ok(Sampler { kind: SamplerKind::Gibbs { start: weighted(&chain.alpha)?, rows } })
    }

    pub fn ggm(fc: &FuzzyChain, laws: &[IncrementLaw]) -> Result<Self> {
        let rows = fc.p.iter().map(|r| weighted(r)).collect::<Result<_>>()?;
        let increments = laws
            .iter()
            .map(|l| {
                let js = l.weights.iter().map(|w| w.0).collect();
                let ws: Vec<f64> = l.weights.iter().map(|w| w.1).collect();
                Ok((js, weighted(&ws)?))
            })
            .collect::<Result<_>>()?;
        Ok(Sampler { kind: SamplerKind::Ggm { start: weighted(&fc.alpha)?, rows, increments, q: fc.q } })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PathSample {
        match &self.kind {
            SamplerKind::Gibbs { start, rows } => {
                let mut s = start.sample(rng);
                let mut increments = Vec::with_capacity(n);
                for _ in 0..n {
                    let t = rows[s].sample(rng);
                    increments.push(t as i64 - s as i64);
                    s = t;
                }
                PathSample { increments, classes: None }
            }
            SamplerKind::Ggm { start, rows, increments: incs, q } => {
                let mut c = start.sample(rng);
                let mut classes = Vec::with_capacity(n + 1);
                classes.push(c);
                let mut increments = Vec::with_capacity(n);
                for _ in 0..n {
                    let c2 = rows[c].sample(rng);
                    let (js, dist) = &incs[(c2 + q - c) % q];
                    increments.push(js[dist.sample(rng)]);
                    classes.push(c2);
                    c = c2;
                }
                PathSample { increments, classes: Some(classes) }
            }
        }
    }

    /// Deterministic stream `replicate` of `seed`.
    pub fn rng(seed: u64, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        rng
    }

    pub fn sample_path(&self, n: usize, seed: u64) -> PathSample {
        self.sample(n, &mut Self::rng(seed, 0))
    }

    /// Histogram of `W_n` over `replicates` independent paths, replicate `r`
    /// drawing from stream `r + 1` of `seed`.
    pub fn wn_histogram(&self, n: usize, replicates: u64, seed: u64) -> BTreeMap<i64, u64> {
        (0..replicates)
            .into_par_iter()
            .fold(BTreeMap::new, |mut h: BTreeMap<i64, u64>, r| {
                let w = self.sample(n, &mut Self::rng(seed, r + 1)).total();
                *h.entry(w).or_default() += 1;
                h
            })
            .reduce(BTreeMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodVerdict {
    Accept,
    Reject,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub batches: usize,
    pub accept_z: f64,
    pub reject_z: f64,
    /// Increments `|j| ≤ edge_window` enter the edge-law comparison.
    pub edge_window: i64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig { batches: 20, accept_z: 5.0, reject_z: 20.0, edge_window: 6 }
    }
}

/// Outcome for one tentative period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodTest {
    pub q_tested: usize,
    /// Empirical mod-`q̃` law, rotated so that its largest entry sits at 0.
    pub empirical: Vec<f64>,
    /// Batch-means standard errors of `empirical`.
    pub empirical_se: Vec<f64>,
    pub rotation: usize,
    /// Largest z-score of the boundary-law residual.
    pub residual_z: f64,
    /// Largest z-score of the single-edge law mismatch.
    pub edge_z: f64,
    pub verdict: PeriodVerdict,
    /// Cyclic shift aligning `empirical` with the reference law, if any.
    pub matched_alpha: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub tests: Vec<PeriodTest>,
    /// gcd of the accepted periods.
    pub minimal_period: Option<usize>,
    /// Height range below `n^{1/4}`: the path looks localized.
    pub gibbs_like: bool,
    pub height_range: i64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest cyclic shift `c` with `max_k |u(k) − v(k + c)| ≤ tol`.
pub fn match_alpha(u: &[f64], v: &[f64], tol: f64) -> Option<usize> {
    if u.len() != v.len() {
        return None;
    }
    let q = u.len();
    (0..q).find(|&c| (0..q).all(|k| (u[k] - v[(k + c) % q]).abs() <= tol))
}

struct Tentative {
    residual: Vec<f64>,
    edge_diff: Vec<f64>,
    edge_model: Vec<f64>,
    empirical: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn tentative_stats(
    heights: &[i64],
    increments: &[i64],
    qt: usize,
    rotation: usize,
    d: u32,
    op: &Operator,
    qq: &[f64],
    laws: &[IncrementLaw],
    edge_window: i64,
) -> Result<Tentative> {
    let mut counts = vec![0.0; qt];
    for h in heights {
        counts[(h - rotation as i64).rem_euclid(qt as i64) as usize] += 1.0;
    }
    let total = heights.len() as f64;
    let empirical: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let x0 = empirical[0].powf(1.0 / (d as f64 + 1.0));
    let x: Vec<f64> = empirical.iter().map(|e| e.powf(1.0 / (d as f64 + 1.0)) / x0).collect();
    let tx = op.apply(&x);
    let residual: Vec<f64> = tx.iter().zip(&x).skip(1).map(|(a, b)| a - b).collect();
    let lambda: Vec<f64> = x.iter().map(|v| v.powi(d as i32)).collect();
    let fc = FuzzyChain::from_weights(qq, &lambda, d)?;
    let nu = edge_marginal(&fc, laws, edge_window, 1.0)?;
    let mut freq = vec![0.0; 2 * edge_window as usize + 1];
    for j in increments {
        if j.abs() <= edge_window {
            freq[(j + edge_window) as usize] += 1.0;
        }
    }
    let m = increments.len().max(1) as f64;
    let edge_diff = freq.iter().zip(&nu.probs).map(|(f, p)| f / m - p).collect();
    Ok(Tentative { residual, edge_diff, edge_model: nu.probs, empirical })
}

/// Batch-means standard error of coordinate `k`.
fn batch_se(batches: &[Vec<f64>], k: usize) -> f64 {
    let b = batches.len() as f64;
    let mean = batches.iter().map(|s| s[k]).sum::<f64>() / b;
    let var = batches.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

/// Largest `|v|/se` over coordinates; `floor` bounds each standard error
/// from below (rare cells have almost no batch-to-batch spread).
fn max_z(full: &[f64], batches: &[Vec<f64>], floor: Option<&[f64]>) -> f64 {
    let mut worst = 0.0_f64;
    for (k, &v) in full.iter().enumerate() {
        let se = batch_se(batches, k).max(floor.map_or(0.0, |f| f[k]));
        let z = if se > 0.0 { v.abs() / se } else if v.abs() < 1e-15 { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    worst
}

/// Tests every `q̃` in `q_list` as a period of the gradient measure that
/// produced `increments`, and reports the gcd of the accepted ones.
pub fn recover_period(
    increments: &[i64],
    q_list: &[usize],
    d: u32,
    pot: &Potential,
    reference_alpha: Option<&[f64]>,
    config: &RecoveryConfig,
) -> Result<RecoveryReport> {
    if config.batches < 2 || increments.len() < 2 * config.batches {
        return Err(Error::Config("path too short for batch statistics".into()));
    }
    let mut heights = Vec::with_capacity(increments.len() + 1);
    heights.push(0i64);
    for j in increments {
        heights.push(heights.last().unwrap() + j);
    }
    let height_range = heights.iter().max().unwrap() - heights.iter().min().unwrap();
    let gibbs_like = (height_range as f64) < (increments.len() as f64).powf(0.25);
    let b = config.batches;
    let chunk = increments.len() / b;
    let mut tests = Vec::new();
    for &qt in q_list {
        if qt < 2 {
            return Err(Error::Config(format!("tentative periods must be ≥ 2 (got {qt})")));
        }
        let qq = fuzzy_q(pot, qt, 1e-14)?;
        let op = Operator::periodic(&qq.normalized(), d)?;
        let laws = increment_laws(pot, qt, 1e-12)?;
        let mut counts = vec![0usize; qt];
        for h in &heights {
            counts[h.rem_euclid(qt as i64) as usize] += 1;
        }
        let rotation = (0..qt).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap();
        let full = tentative_stats(&heights, increments, qt, rotation, d, &op, &qq.values, &laws, config.edge_window)?;
        let per_batch: Vec<Tentative> = (0..b)
            .map(|k| {
                let lo = k * chunk;
                tentative_stats(&heights[lo..=lo + chunk], &increments[lo..lo + chunk], qt, rotation, d, &op, &qq.values, &laws, config.edge_window)
            })
            .collect::<Result<_>>()?;
        let residual_z = max_z(&full.residual, &per_batch.iter().map(|t| t.residual.clone()).collect::<Vec<_>>(), None);
        let m = increments.len() as f64;
        let binomial: Vec<f64> = full.edge_model.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
        let edge_z = max_z(
            &full.edge_diff,
            &per_batch.iter().map(|t| t.edge_diff.clone()).collect::<Vec<_>>(),
            Some(&binomial),
        );
        let z = residual_z.max(edge_z);
        let verdict = if z < config.accept_z {
            PeriodVerdict::Accept
        } else if z > config.reject_z {
            PeriodVerdict::Reject
        } else {
            PeriodVerdict::Unknown
        };
        let emp_batches: Vec<Vec<f64>> = per_batch.iter().map(|t| t.empirical.clone()).collect();
        let empirical_se: Vec<f64> = (0..qt).map(|k| batch_se(&emp_batches, k)).collect();
        let emp_se = empirical_se.iter().copied().fold(0.0, f64::max);
        let matched_alpha = reference_alpha.and_then(|a| match_alpha(&full.empirical, a, (5.0 * emp_se).max(1e-3)));
        tests.push(PeriodTest { q_tested: qt, empirical: full.empirical, empirical_se, rotation, residual_z, edge_z, verdict, matched_alpha });
    }
    let minimal_period = tests.iter().filter(|t| t.verdict == PeriodVerdict::Accept).map(|t| t.q_tested).reduce(gcd);
    Ok(RecoveryReport { tests, minimal_period, gibbs_like, height_range })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_law::{periodic_solve, solve_fixed_point, SolveConfig};
    use crate::ggm::fuzzy_chain;

    fn sos_q2() -> (Potential, FuzzyChain, Vec<IncrementLaw>) {
        let pot = Potential::sos(2.0).unwrap();
        let (bl, _) = periodic_solve(&pot, 2, 2, &SolveConfig::default()).unwrap();
        let fc = fuzzy_chain(&bl, &fuzzy_q(&pot, 2, 1e-14).unwrap()).unwrap();
        let laws = increment_laws(&pot, 2, 1e-13).unwrap();
        (pot, fc, laws)
    }

    #[test]
    fn localized_n1_is_single_step_law() {
        let pot = Potential::sos(2.5).unwrap();
        let (bl, _) = solve_fixed_point(&pot, 2, &SolveConfig { radius: Some(60), ..SolveConfig::default() }).unwrap();
        let chain = LocalizedChain::new(&bl, &pot, 1e-13).unwrap();
        let dist = wn_localized_series(&chain, &[1], 1e-9).unwrap().remove(0);
        let m = chain.m as usize;
        let direct: f64 = (0..chain.width() - 1).map(|i| chain.alpha[i] * chain.p[i][i + 1]).sum();
        assert!((dist.at(1) - direct).abs() < 1e-15);
        assert!((dist.at(1) - dist.at(-1)).abs() < 1e-12);
        assert!(dist.leaked_mass < 1e-9);
        assert!(m >= 1);
    }

    #[test]
    fn free_state_local_clt_ratio() {
        let pot = Potential::sos(1.0).unwrap();
        let fc = FuzzyChain::from_weights(&fuzzy_q(&pot, 1, 1e-14).unwrap().values, &[1.0], 2).unwrap();
        let laws = increment_laws(&pot, 1, 1e-13).unwrap();
        let window = default_window(&pot, 1, 256).unwrap();
        let d = wn_ggm_series(&fc, &laws, &[64, 256], window, 1e-9).unwrap();
        let ratio = d[1].at(0) / d[0].at(0);
        assert!((ratio - 0.5).abs() < 0.01, "{ratio}");
        assert!(d[1].sup() < 0.5 * d[0].sup() + 1e-3);
        assert!(d[1].mean().abs() < 1e-12);
    }

    #[test]
    fn ggm_window_overflow_reports_required() {
        let (_, fc, laws) = sos_q2();
        assert!(matches!(wn_ggm_exact(&fc, &laws, 400, 3, 1e-9), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn sampler_is_deterministic() {
        let (_, fc, laws) = sos_q2();
        let s = Sampler::ggm(&fc, &laws).unwrap();
        let a = s.sample_path(500, 7);
        let b = s.sample_path(500, 7);
        assert_eq!(a, b);
        assert_ne!(a, s.sample_path(500, 8));
        assert_eq!(s.wn_histogram(8, 2000, 3), s.wn_histogram(8, 2000, 3));
        let classes = a.classes.unwrap();
        for (t, inc) in a.increments.iter().enumerate() {
            assert_eq!((classes[t] as i64 + inc).rem_euclid(2), classes[t + 1] as i64);
        }
    }

    #[test]
    fn recovers_period_two() {
        let (pot, fc, laws) = sos_q2();
        let path = Sampler::ggm(&fc, &laws).unwrap().sample_path(40_000, 5);
        let rep = recover_period(&path.increments, &[2, 3], 2, &pot, Some(&fc.alpha), &RecoveryConfig::default()).unwrap();
        assert_eq!(rep.minimal_period, Some(2));
        assert_eq!(rep.tests[0].verdict, PeriodVerdict::Accept);
        assert_eq!(rep.tests[1].verdict, PeriodVerdict::Reject);
        assert!(rep.tests[0].matched_alpha.is_some());
        assert!(!rep.gibbs_like);
    }

    #[test]
    fn match_alpha_finds_cyclic_shift() {
        assert_eq!(match_alpha(&[0.1, 0.7, 0.2], &[0.7, 0.2, 0.1], 1e-12), Some(2));
        assert_eq!(match_alpha(&[0.1, 0.7, 0.2], &[0.7, 0.1, 0.2], 1e-12), None);
    }

    #[test]
    fn csv_dumps() {
        let (_, fc, laws) = sos_q2();
        let s = Sampler::ggm(&fc, &laws).unwrap().sample_path(3, 1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,increment,fuzzy_class\n"));
        assert_eq!(text.lines().count(), 4);
        let d = wn_ggm_exact(&fc, &laws, 2, 20, 1e-9).unwrap();
        let mut buf = Vec::new();
        write_distributions_csv(&mut buf, &[d], &[("mode", "ggm".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap() == "n,k,prob,leaked_mass");
    }
}
