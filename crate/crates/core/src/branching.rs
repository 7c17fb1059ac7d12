//! Discrete-generation Bienaymé–Galton–Watson processes: generation counts,
//! plane trees, the size-biased spine tree, immigration, multitype means and
//! the critical-regime limit estimators.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::offspring::OffspringLaw;
use crate::stats::{ks_one_sample, Estimate};

pub const POPULATION_CAP: u64 = 1_000_000_000;
const PF_MAX_ITER: usize = 100_000;

/// Generation counts `Z_0..Z_n` of one replicate.
///
/// When a generation exceeds the population cap the run stops there and
/// `capped` is set; `counts` then ends at the offending generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgwTrajectory {
    pub counts: Vec<u64>,
    pub capped: bool,
    /// `Z_k / m^k` when requested.
    pub normalized: Option<Vec<f64>>,
}

impl BgwTrajectory {
    pub fn last(&self) -> u64 {
        *self.counts.last().unwrap_or(&0)
    }

    pub fn extinct(&self) -> bool {
        !self.capped && self.last() == 0
    }

    pub fn generations(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    pub fn with_normalized(mut self, m: f64) -> Self {
        self.normalized = Some(
            self.counts
                .iter()
                .enumerate()
                .map(|(k, &z)| z as f64 / m.powi(k as i32))
                .collect(),
        );
        self
    }
}

pub fn simulate_bgw<R: Rng + ?Sized>(
    law: &OffspringLaw,
    z0: u64,
    ngen: usize,
    rng: &mut R,
) -> BgwTrajectory {
    simulate_bgw_capped(law, z0, ngen, POPULATION_CAP, rng)
}

pub fn simulate_bgw_capped<R: Rng + ?Sized>(
    law: &OffspringLaw,
    z0: u64,
    ngen: usize,
    cap: u64,
    rng: &mut R,
) -> BgwTrajectory {
    grow(law, None, z0, ngen, cap, rng)
}

/// BGW with i.i.d. immigration: `X_{n+1} = sum_{i <= X_n} xi_i + Y_{n+1}`.
/// The normalized series `X_n / m^n` is attached.
pub fn simulate_bgwi<R: Rng + ?Sized>(
    law: &OffspringLaw,
    immigration: &OffspringLaw,
    z0: u64,
    ngen: usize,
    rng: &mut R,
) -> BgwTrajectory {
    grow(law, Some(immigration), z0, ngen, POPULATION_CAP, rng).with_normalized(law.mean())
}

fn grow<R: Rng + ?Sized>(
    law: &OffspringLaw,
    immigration: Option<&OffspringLaw>,
    z0: u64,
    ngen: usize,
    cap: u64,
    rng: &mut R,
) -> BgwTrajectory {
    let mut counts = Vec::with_capacity(ngen + 1);
    counts.push(z0);
    let mut z = z0;
    let mut capped = z0 > cap;
    for _ in 0..ngen {
        if capped {
            break;
        }
        let mut next = if z == 0 { 0 } else { law.sample_total(z, rng) };
        if let Some(imm) = immigration {
            next = next.saturating_add(imm.sample(rng) as u64);
        }
        z = next;
        counts.push(z);
        capped = z > cap;
        if z == 0 && immigration.is_none() {
            counts.resize(ngen + 1, 0);
            break;
        }
    }
    BgwTrajectory {
        counts,
        capped,
        normalized: None,
    }
}

/// `max_{j > n} |s_j - s_n|` over the rest of a series.
pub fn later_gap(series: &[f64], n: usize) -> f64 {
    series
        .get(n)
        .map(|&s| series[n + 1..].iter().map(|x| (x - s).abs()).fold(0.0, f64::max))
        .unwrap_or(f64::NAN)
}

/// Rooted ordered tree; vertex 0 is the root and children are kept in
/// birth order, so the Ulam–Harris label of a child is its parent's label
/// extended by its 1-based rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneTree {
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    spine: Option<Vec<bool>>,
    pub truncated: bool,
}

impl PlaneTree {
    pub fn single() -> Self {
        Self {
            children: vec![Vec::new()],
            parent: vec![None],
            depth: vec![0],
            spine: None,
            truncated: false,
        }
    }

    fn add_child(&mut self, p: usize) -> usize {
        let id = self.children.len();
        self.children.push(Vec::new());
        self.parent.push(Some(p));
        self.depth.push(self.depth[p] + 1);
        self.children[p].push(id);
        id
    }

    /// Tree from child counts listed in depth-first (preorder) order.
    pub fn from_preorder_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Invalid("empty child-count sequence".into()));
        }
        let mut tree = Self::single();
        let mut pending = vec![(0usize, counts[0])];
        for &c in &counts[1..] {
            while matches!(pending.last(), Some((_, 0))) {
                pending.pop();
            }
            let Some(top) = pending.last_mut() else {
                return Err(Error::Invalid("child counts close the tree early".into()));
            };
            top.1 -= 1;
            let p = top.0;
            let id = tree.add_child(p);
            pending.push((id, c));
        }
        if pending.iter().any(|&(_, left)| left > 0) {
            return Err(Error::Invalid("child counts leave open slots".into()));
        }
        Ok(tree)
    }

    /// Tree whose depth-first contour is the given non-negative ±1 walk
    /// starting and ending at 0.
    pub fn from_contour(contour: &[i64]) -> Result<Self> {
        if contour.first() != Some(&0) || contour.last() != Some(&0) {
            return Err(Error::Invalid("contour must start and end at 0".into()));
        }
        let mut tree = Self::single();
        let mut cur = 0usize;
        for w in contour.windows(2) {
            match w[1] - w[0] {
                1 => cur = tree.add_child(cur),
                -1 => {
                    cur = tree.parent[cur]
                        .ok_or_else(|| Error::Invalid("contour goes below 0".into()))?
                }
                _ => return Err(Error::Invalid("contour steps must be ±1".into())),
            }
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn child_count(&self, v: usize) -> usize {
        self.children[v].len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn on_spine(&self, v: usize) -> bool {
        self.spine.as_ref().is_some_and(|s| s[v])
    }

    pub fn spine(&self) -> Option<Vec<usize>> {
        let s = self.spine.as_ref()?;
        let mut path: Vec<usize> = (0..self.len()).filter(|&v| s[v]).collect();
        path.sort_by_key(|&v| self.depth[v]);
        Some(path)
    }

    /// Number of vertices at each depth.
    pub fn level_counts(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.height() + 1];
        for &d in &self.depth {
            out[d] += 1;
        }
        out
    }

    /// Ulam–Harris label; the root is the empty sequence.
    pub fn label(&self, v: usize) -> Vec<usize> {
        let mut label = Vec::with_capacity(self.depth[v]);
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            let rank = self.children[p].iter().position(|&c| c == cur).expect("child of parent");
            label.push(rank + 1);
            cur = p;
        }
        label.reverse();
        label
    }

    /// Vertices in lexicographic (depth-first) order.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    pub fn preorder_counts(&self) -> Vec<usize> {
        self.preorder().into_iter().map(|v| self.children[v].len()).collect()
    }

    /// Preorder child counts, e.g. `[2,0,0]`.
    pub fn to_bracket(&self) -> String {
        let body: Vec<String> = self.preorder_counts().iter().map(|c| c.to_string()).collect();
        format!("[{}]", body.join(","))
    }

    /// Unlabelled Newick text, e.g. `(,);` for a root with two leaves.
    pub fn to_newick(&self) -> String {
        fn rec(t: &PlaneTree, v: usize, out: &mut String) {
            if t.children[v].is_empty() {
                return;
            }
            out.push('(');
            for (i, &c) in t.children[v].iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                rec(t, c, out);
            }
            out.push(')');
        }
        let mut s = String::new();
        rec(self, 0, &mut s);
        s.push(';');
        s
    }
}

/// Breadth-first BGW tree with at most `max_size` vertices.
pub fn sample_bgw_tree<R: Rng + ?Sized>(law: &OffspringLaw, max_size: usize, rng: &mut R) -> PlaneTree {
    let mut tree = PlaneTree::single();
    let mut next = 0usize;
    while next < tree.len() {
        let k = law.sample(rng);
        for _ in 0..k {
            if tree.len() >= max_size {
                tree.truncated = true;
                return tree;
            }
            tree.add_child(next);
        }
        next += 1;
    }
    tree
}

/// Size-biased tree to depth `ngen`: spine vertices reproduce by
/// `k p_k / m` and pass the spine to a uniform child, everyone else is an
/// ordinary BGW individual. Vertices at depth `ngen` are not expanded.
pub fn sample_size_biased_tree<R: Rng + ?Sized>(
    law: &OffspringLaw,
    ngen: usize,
    max_size: usize,
    rng: &mut R,
) -> Result<PlaneTree> {
    let hat = law.size_biased()?;
    let mut tree = PlaneTree::single();
    let mut spine = vec![true];
    let mut next = 0usize;
    'grow: while next < tree.len() {
        if tree.depth[next] < ngen {
            let on_spine = spine[next];
            let k = if on_spine { hat.sample(rng) } else { law.sample(rng) };
            let heir = if on_spine { rng.random_range(0..k) } else { usize::MAX };
            for i in 0..k {
                if tree.len() >= max_size {
                    tree.truncated = true;
                    break 'grow;
                }
                tree.add_child(next);
                spine.push(i == heir);
            }
        }
        next += 1;
    }
    tree.spine = Some(spine);
    Ok(tree)
}

/// Depth-first contour `C(0..2(#T-1))` and lexicographic height process
/// `H(0..#T-1)`.
pub fn contour_and_height(tree: &PlaneTree) -> (Vec<usize>, Vec<usize>) {
    let mut contour = Vec::with_capacity(2 * tree.len() - 1);
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    contour.push(0);
    while let Some(top) = stack.last_mut() {
        let (v, i) = *top;
        if i < tree.children[v].len() {
            top.1 += 1;
            let c = tree.children[v][i];
            contour.push(tree.depth[c]);
            stack.push((c, 0));
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                contour.push(tree.depth[p]);
            }
        }
    }
    let height = tree.preorder().into_iter().map(|v| tree.depth[v]).collect();
    (contour, height)
}

/// Simple random walk excursion of length `2n` (first return to 0 at
/// `2n`), uniform over such excursions.
pub fn conditioned_excursion<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    assert!(n >= 1, "excursion length must be positive");
    if n <= 50 {
        'retry: loop {
            let mut path = Vec::with_capacity(2 * n + 1);
            path.push(0i64);
            let mut s = 0i64;
            for k in 1..=2 * n {
                s += if rng.random::<bool>() { 1 } else { -1 };
                path.push(s);
                // the walk must stay strictly positive until the end and
                // cannot climb higher than it can still come down from
                if (s <= 0 && k < 2 * n) || s as usize > 2 * n - k {
                    continue 'retry;
                }
            }
            return path;
        }
    }
    // Cycle lemma: a uniform arrangement of n-1 ups and n downs has exactly
    // one rotation that stays above its final level until the last step.
    let mut steps: Vec<i64> = (0..2 * n - 1).map(|i| if i < n - 1 { 1 } else { -1 }).collect();
    for i in (1..steps.len()).rev() {
        let j = rng.random_range(0..=i);
        steps.swap(i, j);
    }
    let (mut s, mut min, mut argmin) = (0i64, 0i64, 0usize);
    for (i, &x) in steps.iter().enumerate() {
        s += x;
        if s < min {
            min = s;
            argmin = i + 1;
        }
    }
    let len = steps.len();
    steps.rotate_left(argmin % len);
    let mut path = Vec::with_capacity(2 * n + 1);
    path.push(0i64);
    path.push(1);
    let mut s = 1i64;
    for &x in &steps {
        s += x;
        path.push(s);
    }
    path
}

/// Geometric(½) BGW tree conditioned to have exactly `n` vertices, decoded
/// from a conditioned excursion: dropping its first and last step leaves
/// the tree's contour.
pub fn sample_conditioned_geometric_tree<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PlaneTree {
    let exc = conditioned_excursion(n, rng);
    let contour: Vec<i64> = exc[1..exc.len() - 1].iter().map(|h| h - 1).collect();
    PlaneTree::from_contour(&contour).expect("excursion decodes to a tree")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronFrobenius {
    pub rho: f64,
    /// Right eigenvector, `M u = rho u`, summing to 1.
    pub u: Vec<f64>,
    /// Left eigenvector, `v M = rho v`, with `sum u_i v_i = 1`.
    pub v: Vec<f64>,
}

/// Whether some power of `m` is strictly positive. By Wielandt's bound it
/// suffices to look at the power `(K-1)^2 + 1`, and any power beyond it.
pub fn is_primitive(m: &Matrix) -> bool {
    let k = m.rows();
    if k == 0 || !m.is_square() {
        return false;
    }
    let mut pattern: Vec<bool> = m.as_slice().iter().map(|&x| x > 0.0).collect();
    let mut power = 1usize;
    let target = (k - 1) * (k - 1) + 1;
    while power < target {
        let mut sq = vec![false; k * k];
        for i in 0..k {
            for j in 0..k {
                sq[i * k + j] = (0..k).any(|l| pattern[i * k + l] && pattern[l * k + j]);
            }
        }
        pattern = sq;
        power *= 2;
    }
    pattern.into_iter().all(|b| b)
}

/// Perron root and eigenvectors of a primitive non-negative matrix by power
/// iteration, stopping when `|M u - rho u|_inf < tol`.
pub fn perron_frobenius(m: &Matrix, tol: f64) -> Result<PerronFrobenius> {
    if !m.is_square() || m.as_slice().iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Invalid("mean matrix must be square and non-negative".into()));
    }
    if !is_primitive(m) {
        return Err(Error::NotPrimitive("no power of the mean matrix is strictly positive".into()));
    }
    let (rho, u) = power_iterate(|x| m.mul_vec(x), m.rows(), tol)?;
    let (_, mut v) = power_iterate(|x| m.vec_mul(x), m.rows(), tol)?;
    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    v.iter_mut().for_each(|x| *x /= dot);
    Ok(PerronFrobenius { rho, u, v })
}

fn power_iterate<F: Fn(&[f64]) -> Vec<f64>>(apply: F, k: usize, tol: f64) -> Result<(f64, Vec<f64>)> {
    let mut x = vec![1.0 / k as f64; k];
    for _ in 0..PF_MAX_ITER {
        let y = apply(&x);
        let rho: f64 = y.iter().sum();
        if !(rho > 0.0) {
            return Err(Error::NotPrimitive("iteration collapsed to zero".into()));
        }
        let resid = y.iter().zip(&x).map(|(a, b)| (a - rho * b).abs()).fold(0.0, f64::max);
        x = y.into_iter().map(|a| a / rho).collect();
        if resid < tol {
            let y = apply(&x);
            let rho = y.iter().sum::<f64>();
            return Ok((rho, x));
        }
    }
    Err(Error::NoConvergence {
        what: "Perron-Frobenius power iteration",
        iterations: PF_MAX_ITER,
    })
}

/// Multitype BGW in which a type-`i` parent has Poisson(`m_ij`) children of
/// type `j`, independently across `j`. Row `n` of the result is `Z_n`.
pub fn simulate_multitype_poisson<R: Rng + ?Sized>(
    mean: &Matrix,
    z0: &[u64],
    ngen: usize,
    cap: u64,
    rng: &mut R,
) -> Result<(Vec<Vec<u64>>, bool)> {
    let k = mean.rows();
    if !mean.is_square() || z0.len() != k || mean.as_slice().iter().any(|&x| x < 0.0) {
        return Err(Error::Invalid("mean matrix and initial vector disagree".into()));
    }
    let mut out = vec![z0.to_vec()];
    for _ in 0..ngen {
        let z = out.last().expect("non-empty");
        let mut next = vec![0u64; k];
        for j in 0..k {
            let lambda: f64 = (0..k).map(|i| z[i] as f64 * mean[(i, j)]).sum();
            if lambda > 0.0 {
                next[j] = Poisson::new(lambda).expect("positive rate").sample(rng) as u64;
            }
        }
        let total: u64 = next.iter().sum();
        out.push(next);
        if total > cap {
            return Ok((out, true));
        }
        if total == 0 {
            break;
        }
    }
    Ok((out, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLimit {
    pub generation: usize,
    pub survival: Estimate,
    /// `n * P[Z_n > 0]`, to be compared with `2 / sigma^2`.
    pub scaled_survival: f64,
    pub scaled_survival_se: f64,
    /// `Z_n / n` on surviving replicates, in replicate order.
    pub conditional: Vec<f64>,
    /// KS distance of `conditional` to the exponential law with mean
    /// `sigma^2 / 2`; `None` when no replicate survived.
    pub ks_exponential: Option<f64>,
    pub inconclusive: bool,
}

/// Kolmogorov and Yaglom estimates for a critical law from `ens.reps`
/// independent single-ancestor runs of `n` generations.
pub fn critical_limit_estimates(law: &OffspringLaw, n: usize, ens: &EnsembleSpec) -> Result<CriticalLimit> {
    let (m, var) = law.moments();
    if (m - 1.0).abs() > 1e-9 {
        return Err(Error::Domain {
            name: "offspring mean",
            value: m,
            expected: "exactly 1",
        });
    }
    let finals = ens.run(|_, rng| simulate_bgw(law, 1, n, rng).last());
    let conditional: Vec<f64> = finals.iter().filter(|&&z| z > 0).map(|&z| z as f64 / n as f64).collect();
    let survival = Estimate::proportion(conditional.len(), finals.len());
    let mean = var / 2.0;
    let ks_exponential = (!conditional.is_empty())
        .then(|| ks_one_sample(&conditional, |x| 1.0 - (-x / mean).exp()));
    Ok(CriticalLimit {
        generation: n,
        survival,
        scaled_survival: n as f64 * survival.mean,
        scaled_survival_se: n as f64 * survival.se,
        inconclusive: conditional.is_empty(),
        conditional,
        ks_exponential,
    })
}
