//! Two-layer gradient Gibbs measures built from a height-periodic boundary
//! law: the fuzzy chain on ℤ_q, conditional increment laws and exact
//! finite-volume gradient marginals.

use serde::Serialize;

use crate::boundary_law::{BoundaryLaw, Support};
use crate::error::{Error, Result};
use crate::potentials::{fuzzy_q, FuzzyOperator, Potential};
use crate::series::ksum;

/// Stochastic matrix `P′_q` on ℤ_q with its stationary law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyChain {
    pub q: usize,
    /// Row-major `q × q`.
    pub p: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub d: u32,
}

impl FuzzyChain {
    /// `P′(i, j) = Q_q(j − i) λ(j) / Σ_s Q_q(s − i) λ(s)` and `α ∝ λ^{(d+1)/d}`.
    pub fn from_weights(qq: &[f64], lambda: &[f64], d: u32) -> Result<Self> {
        let q = qq.len();
        if q == 0 || lambda.len() != q {
            return Err(Error::Config(format!("fuzzy operator has {q} classes, boundary law {}", lambda.len())));
        }
        let p: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                let row: Vec<f64> = (0..q).map(|j| qq[(j + q - i) % q] * lambda[j]).collect();
                let z = ksum(row.iter().copied());
                row.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let expo = (d as f64 + 1.0) / d as f64;
        let w: Vec<f64> = lambda.iter().map(|l| l.powf(expo)).collect();
        let z = ksum(w.iter().copied());
        let alpha = w.into_iter().map(|v| v / z).collect();
        Ok(FuzzyChain { q, p, alpha, d })
    }

    /// `max_j |(αP)(j) − α(j)|`.
    pub fn stationarity_residual(&self) -> f64 {
        (0..self.q)
            .map(|j| (ksum((0..self.q).map(|i| self.alpha[i] * self.p[i][j])) - self.alpha[j]).abs())
            .fold(0.0, f64::max)
    }

    /// `max_{i,j} |α(i)P(i,j) − α(j)P(j,i)|`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.q {
            for j in 0..self.q {
                worst = worst.max((self.alpha[i] * self.p[i][j] - self.alpha[j] * self.p[j][i]).abs());
            }
        }
        worst
    }

    /// Law of the class increment `s̄` on one edge: `Σ_i α(i) P′(i, i + s̄)`.
    pub fn class_increment_law(&self) -> Vec<f64> {
        let q = self.q;
        (0..q).map(|s| ksum((0..q).map(|i| self.alpha[i] * self.p[i][(i + s) % q]))).collect()
    }
}

/// Builds the fuzzy chain of a solved ℤ_q boundary law.
pub fn fuzzy_chain(bl: &BoundaryLaw, qq: &FuzzyOperator) -> Result<FuzzyChain> {
    let Support::Zq { q } = bl.support else {
        return Err(Error::Config("fuzzy chain needs a boundary law on ℤ_q".into()));
    };
    if q != qq.q {
        return Err(Error::Config(format!("boundary law period {q} differs from fuzzy operator period {}", qq.q)));
    }
    let fc = FuzzyChain::from_weights(&qq.values, &bl.lambda, bl.d)?;
    let res = fc.stationarity_residual();
    if res > 1e-10 {
        return Err(Error::Consistency(format!("stationarity residual {res:e} of the fuzzy chain exceeds 1e-10")));
    }
    Ok(fc)
}

/// `ρ(j | s̄) = Q(j)/Q_q(s̄)` on `{j ≡ s̄, |j| ≤ R}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementLaw {
    pub q: usize,
    pub class: usize,
    pub radius: i64,
    /// `(j, ρ(j | s̄))` in increasing `j`.
    pub weights: Vec<(i64, f64)>,
    pub tail_mass_bound: f64,
}

impl IncrementLaw {
    pub fn mass(&self) -> f64 {
        ksum(self.weights.iter().map(|w| w.1))
    }
}

const MAX_INCREMENT_RADIUS: u64 = 1 << 20;

/// Smallest `R` with `Σ_{|j|>R} Q(j) ≤ budget`, capped.
fn increment_radius(pot: &Potential, budget: f64) -> Result<u64> {
    let (cut, law) = pot.decay().ok_or(Error::TailUndeclared { index: 0 })?;
    let tail = |r: u64| -> Result<f64> {
        let mut s = 0.0;
        let mut j = r + 1;
        while j <= cut {
            s += pot.q(j as i64)?;
            j += 1;
        }
        Ok(2.0 * (s + law.tail_bracket(j).hi))
    };
    let mut hi = 8u64;
    while tail(hi)? > budget {
        if hi >= MAX_INCREMENT_RADIUS {
            return Ok(MAX_INCREMENT_RADIUS);
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if tail(mid)? <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Conditional increment law of one residue class, certified to mass `1 − tail_tol`
/// when the tail of `Q` permits it within the radius cap.
pub fn increment_law(pot: &Potential, q: usize, class: usize, tail_tol: f64) -> Result<IncrementLaw> {
    Ok(increment_laws(pot, q, tail_tol)?.swap_remove(class % q.max(1)))
}

/// Increment laws of all `q` classes.
pub fn increment_laws(pot: &Potential, q: usize, tail_tol: f64) -> Result<Vec<IncrementLaw>> {
    let qq = fuzzy_q(pot, q, 1e-14)?;
    let min_class = qq.values.iter().copied().fold(f64::INFINITY, f64::min);
    let radius = increment_radius(pot, tail_tol * min_class)? as i64;
    (0..q)
        .map(|s| {
            let z = qq.values[s];
            let start = -radius + (s as i64 + radius).rem_euclid(q as i64);
            let weights: Vec<(i64, f64)> = (start..=radius)
                .step_by(q)
                .map(|j| Ok((j, pot.q(j)? / z)))
                .collect::<Result<_>>()?;
            let mass = ksum(weights.iter().map(|w| w.1));
            // Defect from one plus the certified error in the class normalizer.
            let tail_mass_bound = (1.0 - mass).max(0.0) + qq.residual_tail / z;
            Ok(IncrementLaw { q, class: s, radius, weights, tail_mass_bound })
        })
        .collect()
}

/// Single-edge gradient marginal on `−K..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeMarginal {
    pub window: i64,
    pub probs: Vec<f64>,
    pub leaked: f64,
}

impl EdgeMarginal {
    pub fn at(&self, j: i64) -> f64 {
        if j.abs() > self.window {
            0.0
        } else {
            self.probs[(j + self.window) as usize]
        }
    }
}

/// `ν(η = j) = Σ_i α(i) P′(i, i + j̄) ρ(j | j̄)` for `|j| ≤ K`.
pub fn edge_marginal(fc: &FuzzyChain, laws: &[IncrementLaw], window: i64, tail_tol: f64) -> Result<EdgeMarginal> {
    if laws.len() != fc.q {
        return Err(Error::Config(format!("{} increment laws for period {}", laws.len(), fc.q)));
    }
    let classes = fc.class_increment_law();
    let mut probs = vec![0.0; 2 * window as usize + 1];
    for law in laws {
        for &(j, w) in &law.weights {
            if j.abs() <= window {
                probs[(j + window) as usize] = classes[law.class] * w;
            }
        }
    }
    let leaked = (1.0 - ksum(probs.iter().copied())).max(0.0);
    if leaked > tail_tol {
        let required = laws.iter().map(|l| l.radius).max().unwrap_or(0) as usize;
        return Err(Error::WindowTooSmall { leaked, tolerance: tail_tol, required });
    }
    Ok(EdgeMarginal { window, probs, leaked })
}

/// A tree on at most twelve vertices; edge `(a, b)` carries `η = σ_b − σ_a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallTree {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SmallTree {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if vertices == 0 || vertices > 12 {
            return Err(Error::Config(format!("small volumes have 1..=12 vertices (got {vertices})")));
        }
        if edges.len() + 1 != vertices || edges.iter().any(|&(a, b)| a >= vertices || b >= vertices || a == b) {
            return Err(Error::Config("edge list does not describe a tree".into()));
        }
        let tree = SmallTree { vertices, edges };
        let mut seen = vec![false; vertices];
        tree.visit(0, &mut seen, &mut Vec::new());
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("edge list is not connected".into()));
        }
        Ok(tree)
    }

    /// Star with centre 0 and `k` leaves.
    pub fn star(k: usize) -> Result<Self> {
        Self::new(k + 1, (1..=k).map(|v| (0, v)).collect())
    }

    /// Depth-first order of `(edge index, parent, child)` from `root`.
    fn visit(&self, root: usize, seen: &mut [bool], order: &mut Vec<(usize, usize, usize)>) {
        seen[root] = true;
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let next = if a == root { b } else if b == root { a } else { continue };
            if !seen[next] {
                order.push((e, root, next));
                self.visit(next, seen, order);
            }
        }
    }
}

/// Exact joint law of the edge class increments on a small tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeMarginal {
    pub tree: SmallTree,
    pub q: usize,
    pub root: usize,
    /// Indexed by the mixed-radix code `Σ_e s̄_e q^e`.
    pub class_law: Vec<f64>,
}

const MAX_ENUMERATION: usize = 1 << 24;

/// Enumerates all class-increment configurations, rooting the fuzzy chain at `root`.
pub fn volume_marginal(fc: &FuzzyChain, tree: &SmallTree, root: usize) -> Result<VolumeMarginal> {
    if root >= tree.vertices {
        return Err(Error::Config(format!("root {root} outside the tree")));
    }
    let q = fc.q;
    let e = tree.edges.len();
    let configs = q.checked_pow(e as u32).filter(|&n| n * q <= MAX_ENUMERATION).ok_or_else(|| {
        Error::Config(format!("enumeration of {q}^{e} configurations exceeds the exact-volume budget"))
    })?;
    let mut order = Vec::new();
    tree.visit(root, &mut vec![false; tree.vertices], &mut order);
    let mut class_law = vec![0.0; configs];
    let mut sigma = vec![0usize; tree.vertices];
    for (code, slot) in class_law.iter_mut().enumerate() {
        let s: Vec<usize> = (0..e).map(|k| (code / q.pow(k as u32)) % q).collect();
        let mut total = 0.0;
        for r in 0..q {
            sigma[root] = r;
            let mut w = fc.alpha[r];
            for &(edge, parent, child) in &order {
                let (a, _) = tree.edges[edge];
                // η runs from a to b; walking against it subtracts.
                sigma[child] = if a == parent { (sigma[parent] + s[edge]) % q } else { (sigma[parent] + q - s[edge]) % q };
                w *= fc.p[sigma[parent]][sigma[child]];
            }
            total += w;
        }
        *slot = total;
    }
    Ok(VolumeMarginal { tree: tree.clone(), q, root, class_law })
}

impl VolumeMarginal {
    /// `ν(η_e = j_e for all e)` given per-class increment laws.
    pub fn prob(&self, increments: &[i64], laws: &[IncrementLaw]) -> f64 {
        let q = self.q as i64;
        let mut code = 0usize;
        let mut factor = 1.0;
        for (k, &j) in increments.iter().enumerate() {
            let s = j.rem_euclid(q) as usize;
            code += s * self.q.pow(k as u32);
            factor *= laws[s].weights.iter().find(|w| w.0 == j).map_or(0.0, |w| w.1);
        }
        self.class_law[code] * factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_law::{periodic_solve, SolveConfig};

    fn sos_q2() -> (Potential, FuzzyChain, Vec<IncrementLaw>) {
        let pot = Potential::sos(2.0).unwrap();
        let (bl, _) = periodic_solve(&pot, 2, 2, &SolveConfig::default()).unwrap();
        let qq = fuzzy_q(&pot, 2, 1e-14).unwrap();
        let fc = fuzzy_chain(&bl, &qq).unwrap();
        let laws = increment_laws(&pot, 2, 1e-12).unwrap();
        (pot, fc, laws)
    }

    #[test]
    fn q1_chain_is_trivial() {
        let fc = FuzzyChain::from_weights(&[1.3], &[1.0], 2).unwrap();
        assert_eq!(fc.p, vec![vec![1.0]]);
        assert_eq!(fc.alpha, vec![1.0]);
    }

    #[test]
    fn sos_q2_alpha_and_balance() {
        let (_, fc, _) = sos_q2();
        assert!((fc.alpha[0] - 0.927_06).abs() < 1e-5, "{:?}", fc.alpha);
        assert!((fc.alpha[1] - 0.072_94).abs() < 1e-5);
        assert!(fc.detailed_balance_residual() < 1e-10);
        for row in &fc.p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_law_gives_uniform_alpha() {
        let pot = Potential::sos(1.0).unwrap();
        let qq = fuzzy_q(&pot, 3, 1e-14).unwrap();
        let fc = FuzzyChain::from_weights(&qq.values, &[1.0; 3], 3).unwrap();
        let one: f64 = qq.values.iter().sum();
        for i in 0..3 {
            assert!((fc.alpha[i] - 1.0 / 3.0).abs() < 1e-15);
            for j in 0..3 {
                assert!((fc.p[i][j] - qq.values[(j + 3 - i) % 3] / one).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn increment_law_sos_odd_class() {
        let laws = increment_laws(&Potential::sos(2.0).unwrap(), 2, 1e-10).unwrap();
        let odd = &laws[1];
        let z = 0.275_720;
        let w1 = odd.weights.iter().find(|w| w.0 == 1).unwrap().1;
        let w3 = odd.weights.iter().find(|w| w.0 == -3).unwrap().1;
        assert!((w1 - (-2.0f64).exp() / z).abs() < 1e-5);
        assert!((w3 - (-6.0f64).exp() / z).abs() < 1e-5);
        assert!(odd.weights.iter().all(|w| w.0.rem_euclid(2) == 1));
        let m = odd.mass();
        assert!(m <= 1.0 + 1e-15 && m + odd.tail_mass_bound >= 1.0 - 1e-15);
        assert!(odd.tail_mass_bound < 1e-10);
    }

    #[test]
    fn edge_marginal_symmetry_and_two_layer_consistency() {
        let (_, fc, laws) = sos_q2();
        let nu = edge_marginal(&fc, &laws, 40, 1e-10).unwrap();
        for j in 0..=40 {
            assert!((nu.at(j) - nu.at(-j)).abs() < 1e-16);
        }
        let mean: f64 = (-40..=40).map(|j| j as f64 * nu.at(j)).sum();
        assert!(mean.abs() < 1e-15);
        let classes = fc.class_increment_law();
        for s in 0..2 {
            let agg: f64 = (-40..=40i64).filter(|j| j.rem_euclid(2) == s).map(|j| nu.at(j)).sum();
            assert!((agg - classes[s as usize]).abs() < 1e-10);
        }
        let expected = fc.alpha[0] * fc.p[0][1] * laws[1].weights.iter().find(|w| w.0 == 1).unwrap().1
            + fc.alpha[1] * fc.p[1][0] * laws[1].weights.iter().find(|w| w.0 == 1).unwrap().1;
        assert!((nu.at(1) - expected).abs() < 1e-15);
        assert!(matches!(edge_marginal(&fc, &laws, 2, 1e-10), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn free_state_edge_marginal_is_normalized_kernel() {
        let pot = Potential::sos(1.2).unwrap();
        let fc = FuzzyChain::from_weights(&fuzzy_q(&pot, 1, 1e-14).unwrap().values, &[1.0], 2).unwrap();
        let laws = increment_laws(&pot, 1, 1e-12).unwrap();
        let nu = edge_marginal(&fc, &laws, 60, 1e-10).unwrap();
        let one = fuzzy_q(&pot, 1, 1e-14).unwrap().values[0];
        for j in -5..=5 {
            assert!((nu.at(j) - pot.q(j).unwrap() / one).abs() < 1e-14);
        }
    }

    #[test]
    fn volume_marginal_independent_of_root() {
        let (_, fc, laws) = sos_q2();
        let tree = SmallTree::new(6, vec![(0, 1), (2, 1), (1, 3), (3, 4), (5, 3)]).unwrap();
        let a = volume_marginal(&fc, &tree, 0).unwrap();
        let b = volume_marginal(&fc, &tree, 4).unwrap();
        for (u, v) in a.class_law.iter().zip(&b.class_law) {
            assert!((u - v).abs() < 1e-14);
        }
        assert!((a.class_law.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        // One-edge volume reproduces the edge marginal.
        let edge = volume_marginal(&fc, &SmallTree::star(1).unwrap(), 0).unwrap();
        let nu = edge_marginal(&fc, &laws, 40, 1e-10).unwrap();
        for j in -4..=4 {
            assert!((edge.prob(&[j], &laws) - nu.at(j)).abs() < 1e-15);
        }
    }

    #[test]
    fn small_tree_validation() {
        assert!(SmallTree::new(3, vec![(0, 1)]).is_err());
        assert!(SmallTree::new(4, vec![(0, 1), (1, 0), (2, 3)]).is_err());
        assert!(SmallTree::new(13, (1..13).map(|v| (0, v)).collect()).is_err());
    }
}
