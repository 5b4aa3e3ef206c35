//! Particle-number space: the disintegration of a micro-canonical surface by
//! the vector `k` of per-species particle counts.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use super::MicroError;
use crate::exact::{rational_from_int, ExactVector};
use crate::lattice::exact_mass_momentum;
use crate::linalg::generalized_sup_dense;
use crate::velocity::{Quadruple, VelocitySet};
use crate::Rational;

/// Most particle-number vectors a k-space enumeration will visit.
pub const KSPACE_MAX_VECTORS: usize = 5_000_000;

pub(crate) fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

fn big_binom(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Colexicographic rank of a bit mask among masks of equal popcount.
pub(crate) fn colex_rank(mask: u64) -> u64 {
    let mut r = 0;
    let mut t = 1;
    let mut m = mask;
    while m != 0 {
        let j = m.trailing_zeros() as usize;
        r += binom(j, t);
        t += 1;
        m &= m - 1;
    }
    r
}

/// Inverse of [`colex_rank`] for masks with `k` bits set.
pub(crate) fn colex_unrank(mut rank: u64, k: usize) -> u64 {
    let mut mask = 0u64;
    for t in (1..=k).rev() {
        let mut j = t - 1;
        while binom(j + 1, t) <= rank {
            j += 1;
        }
        mask |= 1 << j;
        rank -= binom(j, t);
    }
    mask
}

/// `h_α(k) = (k+1)(k−α+1) / ((L−k)(L−k+α))` with `L = |Λ_M|`.
pub fn h_alpha(sites: usize, alpha: i64, k: i64) -> Result<Rational, MicroError> {
    let l = sites as i64;
    let ok = (0..=l).contains(&(k + 1)) && (0..=l).contains(&(k - alpha + 1)) && l - k > 0 && l - k + alpha > 0;
    if !ok {
        return Err(MicroError::OutOfDomain { sites, alpha, k });
    }
    Ok(Rational::new(BigInt::from((k + 1) * (k - alpha + 1)), BigInt::from((l - k) * (l - k + alpha))))
}

/// `h_α` extended to the edges of the domain: `0` when a numerator factor
/// vanishes, `None` (= +∞) when a denominator does.
fn h_ext(sites: usize, alpha: i64, k: i64) -> Option<Rational> {
    let l = sites as i64;
    let num = (k + 1) * (k - alpha + 1);
    if k < 0 || k - alpha < 0 {
        return Some(Rational::zero());
    }
    let den = (l - k) * (l - k + alpha);
    if l - k <= 0 || l - k + alpha <= 0 {
        return None;
    }
    Some(Rational::new(BigInt::from(num), BigInt::from(den)))
}

/// `a < b` on `[0, +∞]` with `None` as `+∞`.
fn ext_less(a: &Option<Rational>, b: &Option<Rational>) -> bool {
    match (a, b) {
        (_, None) => a.is_some(),
        (None, Some(_)) => false,
        (Some(x), Some(y)) => x < y,
    }
}

/// `(k^q, p(q, k))`; `k^q = k` when the channel is blocked.
pub fn k_move(k: &[u32], q: Quadruple, sites: usize) -> (Vec<u32>, u64) {
    let l = sites as u64;
    let p = k[q.v] as u64 * k[q.w] as u64 * (l - k[q.v_out] as u64) * (l - k[q.w_out] as u64);
    if p == 0 {
        return (k.to_vec(), 0);
    }
    let mut out = k.to_vec();
    out[q.v] -= 1;
    out[q.w] -= 1;
    out[q.v_out] += 1;
    out[q.w_out] += 1;
    (out, p)
}

/// Conserved pair statistics for pair-form sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairInvariants {
    /// `α_ℓ = k_{2ℓ} − k_{2ℓ+1}`.
    pub alpha: Vec<i64>,
    /// Total particle number.
    pub i0: i64,
}

/// The set `D_{M,i}` with its weights `ν̄`.
#[derive(Debug, Clone)]
pub struct KSpace {
    sites: usize,
    label: ExactVector,
    ks: Vec<Vec<u32>>,
    counts: Vec<BigInt>,
    weights: Vec<Rational>,
    collisions: Vec<Quadruple>,
    pair: Option<PairInvariants>,
}

impl KSpace {
    fn new(sites: usize, label: ExactVector, ks: Vec<Vec<u32>>, vs: &VelocitySet) -> Self {
        let counts: Vec<BigInt> =
            ks.iter().map(|k| k.iter().map(|&kv| big_binom(sites, kv as usize)).product()).collect();
        let z: BigInt = counts.iter().sum();
        let weights = counts.iter().map(|c| Rational::new(c.clone(), z.clone())).collect();
        let pair = vs.pair_form().and_then(|pf| {
            let alpha_of = |k: &[u32]| (0..pf.n()).map(|l| k[2 * l] as i64 - k[2 * l + 1] as i64).collect::<Vec<_>>();
            let alpha = alpha_of(&ks[0]);
            ks.iter().all(|k| alpha_of(k) == alpha).then(|| PairInvariants {
                alpha,
                i0: ks[0].iter().map(|&x| x as i64).sum(),
            })
        });
        Self { sites, label, ks, counts, weights, collisions: vs.collision_set().to_vec(), pair }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    /// Averaged mass-momentum `i`.
    pub fn label(&self) -> &ExactVector {
        &self.label
    }

    /// Members of `D_{M,i}` in lexicographic order.
    pub fn vectors(&self) -> &[Vec<u32>] {
        &self.ks
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    /// `|Y_{M,k}| = Π_v C(L, k_v)`.
    pub fn counts(&self) -> &[BigInt] {
        &self.counts
    }

    /// `|Y_M(i)|`.
    pub fn surface_size(&self) -> BigInt {
        self.counts.iter().sum()
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn collisions(&self) -> &[Quadruple] {
        &self.collisions
    }

    pub fn pair_invariants(&self) -> Option<&PairInvariants> {
        self.pair.as_ref()
    }

    pub fn position(&self, k: &[u32]) -> Option<usize> {
        self.ks.binary_search_by(|x| x.as_slice().cmp(k)).ok()
    }

    pub fn weight_of(&self, k: &[u32]) -> Option<&Rational> {
        self.position(k).map(|i| &self.weights[i])
    }

    /// Unnormalized weight through the pair parameters only:
    /// `Π_ℓ C(L, k_ℓ) C(L, k_ℓ − α_ℓ)`.
    pub fn reduced_weight(&self, k: &[u32]) -> Option<BigInt> {
        let pi = self.pair.as_ref()?;
        Some(
            pi.alpha
                .iter()
                .enumerate()
                .map(|(l, &a)| {
                    let kl = k[2 * l] as i64;
                    let lower = kl - a;
                    if lower < 0 {
                        BigInt::zero()
                    } else {
                        big_binom(self.sites, kl as usize) * big_binom(self.sites, lower as usize)
                    }
                })
                .product(),
        )
    }

    /// The largest weight, by exhaustive search.
    pub fn max_weight(&self) -> &Rational {
        self.weights.iter().max().expect("non-empty")
    }
}

/// Partition of `{0,1}^{Λ_M × 𝒱}` by particle numbers, grouped by `i`.
pub fn enumerate_kspaces(m: usize, vs: &VelocitySet) -> Result<BTreeMap<ExactVector, KSpace>, MicroError> {
    let sites = (2 * m + 1).pow(vs.dim() as u32);
    let s = vs.len();
    let total = (sites + 1).checked_pow(s as u32).filter(|&t| t <= KSPACE_MAX_VECTORS);
    if total.is_none() {
        return Err(MicroError::KSpaceTooLarge { sites, species: s });
    }
    let inv_l = Rational::new(BigInt::one(), BigInt::from(sites));
    let mut groups: BTreeMap<ExactVector, Vec<Vec<u32>>> = BTreeMap::new();
    let mut k = vec![0u32; s];
    loop {
        let counts: Vec<u64> = k.iter().map(|&x| x as u64).collect();
        let label = exact_mass_momentum(vs, &counts).scale(&inv_l);
        groups.entry(label).or_default().push(k.clone());
        // Odometer over [0, L]^S.
        let mut j = 0;
        while j < s && k[j] as usize == sites {
            k[j] = 0;
            j += 1;
        }
        if j == s {
            break;
        }
        k[j] += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(label, mut ks)| {
            ks.sort();
            let space = KSpace::new(sites, label.clone(), ks, vs);
            (label, space)
        })
        .collect())
}

fn require_pair(ks: &KSpace) -> Result<&PairInvariants, MicroError> {
    ks.pair.as_ref().ok_or(MicroError::MissingPairForm)
}

fn pair_move(k: &[u32], from: usize, to: usize) -> Vec<u32> {
    let mut out = k.to_vec();
    out[2 * from] -= 1;
    out[2 * from + 1] -= 1;
    out[2 * to] += 1;
    out[2 * to + 1] += 1;
    out
}

/// Whether `k` satisfies `max_ℓ h_{α_ℓ}(k_ℓ − 1) ≤ min_ℓ h_{α_ℓ}(k_ℓ)`.
pub fn is_maximizer(ks: &KSpace, k: &[u32]) -> Result<bool, MicroError> {
    Ok(improving_pair_move(ks, require_pair(ks)?, k).is_none())
}

/// First `(ℓ, ℓ')` with `h(k_ℓ − 1) > h(k_ℓ')`.
fn improving_pair_move(ks: &KSpace, pi: &PairInvariants, k: &[u32]) -> Option<(usize, usize)> {
    let n = pi.alpha.len();
    let lower: Vec<_> = (0..n).map(|l| h_ext(ks.sites, pi.alpha[l], k[2 * l] as i64 - 1)).collect();
    let upper: Vec<_> = (0..n).map(|l| h_ext(ks.sites, pi.alpha[l], k[2 * l] as i64)).collect();
    for from in 0..n {
        for to in 0..n {
            if from != to && ext_less(&upper[to], &lower[from]) {
                return Some((from, to));
            }
        }
    }
    None
}

/// A maximizer of `ν̄` over `D_{M,i}`, by ascending pair moves.
pub fn find_maximizer(ks: &KSpace) -> Result<Vec<u32>, MicroError> {
    let pi = require_pair(ks)?;
    let mut k = ks.ks[0].clone();
    for _ in 0..=ks.len() {
        match improving_pair_move(ks, pi, &k) {
            None => return Ok(k),
            Some((from, to)) => k = pair_move(&k, from, to),
        }
    }
    Err(MicroError::NoSolution)
}

/// One step of a k-chain: the state before the move and the channel applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStep {
    pub k: Vec<u32>,
    pub q: Quadruple,
}

/// Chain from `start` to `star` with nondecreasing `ν̄`.
pub fn build_k_chain(ks: &KSpace, start: &[u32], star: &[u32]) -> Result<Vec<ChainStep>, MicroError> {
    require_pair(ks)?;
    let weight = |k: &[u32]| -> Result<&Rational, MicroError> {
        ks.weight_of(k).ok_or_else(|| MicroError::ChainInvariantViolated(format!("{k:?} left D_M,i")))
    };
    let mut collisions = ks.collisions.clone();
    collisions.sort();
    let mut steps = Vec::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut k = start.to_vec();
    seen.insert(k.clone());
    // Greedy ascent.
    loop {
        let here = weight(&k)?.clone();
        let mut best: Option<(Rational, Quadruple, Vec<u32>)> = None;
        for &q in &collisions {
            let (next, p) = k_move(&k, q, ks.sites);
            if p == 0 {
                continue;
            }
            let w = weight(&next)?.clone();
            if best.as_ref().is_none_or(|b| w > b.0) {
                best = Some((w, q, next));
            }
        }
        match best {
            Some((w, q, next)) if w > here => {
                steps.push(ChainStep { k: k.clone(), q });
                k = next;
                if !seen.insert(k.clone()) {
                    return Err(MicroError::ChainInvariantViolated(format!("{k:?} revisited")));
                }
            }
            _ => break,
        }
    }
    // Lateral moves between pairs.
    let n = ks.pair.as_ref().map_or(0, |p| p.alpha.len());
    while k != star {
        let from = (0..n).find(|&l| k[2 * l] == star[2 * l] + 1);
        let to = (0..n).find(|&l| k[2 * l] + 1 == star[2 * l]);
        let (Some(from), Some(to)) = (from, to) else {
            return Err(MicroError::ChainInvariantViolated(format!("no lateral move from {k:?} toward {star:?}")));
        };
        let q = collisions
            .iter()
            .copied()
            .find(|q| q.v == 2 * from && q.w == 2 * from + 1 && q.v_out == 2 * to && q.w_out == 2 * to + 1)
            .ok_or_else(|| MicroError::ChainInvariantViolated(format!("pair channel {from} -> {to} missing")))?;
        let (next, p) = k_move(&k, q, ks.sites);
        if p == 0 {
            return Err(MicroError::ChainInvariantViolated(format!("pair channel blocked at {k:?}")));
        }
        if weight(&next)? < weight(&k)? {
            return Err(MicroError::ChainInvariantViolated(format!("weight decreased at {k:?}")));
        }
        steps.push(ChainStep { k: k.clone(), q });
        k = next;
        if !seen.insert(k.clone()) {
            return Err(MicroError::ChainInvariantViolated(format!("{k:?} revisited")));
        }
        if steps.len() > ks.len() {
            return Err(MicroError::ChainInvariantViolated("chain longer than D_M,i".into()));
        }
    }
    Ok(steps)
}

/// Extremal constant of the variance inequality on the k-graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorReport {
    /// `sup Var(g) / Σ_k ν̄(k) Σ_q p(q,k) (g(k^q) − g(k))²`, `+∞` if the
    /// k-graph is disconnected.
    pub ratio: f64,
    /// `|D_{M,i}|²`.
    pub bound: f64,
    pub pass: bool,
}

/// Variance matrix and Dirichlet matrix of the k-graph, in that order.
pub fn k_graph_forms(ks: &KSpace) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ks.len();
    let nu: Vec<f64> = ks.weights.iter().map(|w| w.to_f64().unwrap_or(f64::NAN)).collect();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for (a, k) in ks.ks.iter().enumerate() {
        for &q in &ks.collisions {
            let (next, p) = k_move(k, q, ks.sites);
            if p == 0 {
                continue;
            }
            let b = ks.position(&next).expect("collisions preserve i");
            w[(a, b)] += nu[a] * p as f64;
        }
    }
    let mut dir = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        let row: f64 = w.row(a).sum();
        dir[(a, a)] += 2.0 * row;
        for b in 0..n {
            // W is symmetric by detailed balance; average to remove rounding.
            dir[(a, b)] -= w[(a, b)] + w[(b, a)];
        }
    }
    let mut var = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        var[(a, a)] += nu[a];
        for b in 0..n {
            var[(a, b)] -= nu[a] * nu[b];
        }
    }
    (var, dir)
}

pub fn verify_cor_sg_k(ks: &KSpace) -> Result<CorReport, MicroError> {
    require_pair(ks)?;
    let bound = (ks.len() * ks.len()) as f64;
    if ks.len() == 1 {
        return Ok(CorReport { ratio: 0.0, bound, pass: true });
    }
    let (var, dir) = k_graph_forms(ks);
    let ratio = generalized_sup_dense(&var, &dir).unwrap_or(f64::INFINITY);
    Ok(CorReport { ratio, bound, pass: ratio <= bound })
}

/// Members of `Y_{M,k}` at evenly spread colex ranks (at most `count`).
pub fn representatives(sites: usize, k: &[u32], count: usize) -> Vec<u64> {
    let sizes: Vec<u64> = k.iter().map(|&kv| binom(sites, kv as usize)).collect();
    let total: u128 = sizes.iter().map(|&s| s as u128).product();
    let count = (count.max(1) as u128).min(total);
    (0..count)
        .map(|j| {
            let mut rank = if count == 1 { 0 } else { j * (total - 1) / (count - 1) };
            let mut state = 0u64;
            for (v, &kv) in k.iter().enumerate() {
                let r = (rank % sizes[v] as u128) as u64;
                rank /= sizes[v] as u128;
                state |= colex_unrank(r, kv as usize) << (v * sites);
            }
            state
        })
        .collect()
}

/// `max |Σ_{r ∈ Λ⁴} p(r, q, η) − p(q, k)|` over every `k`, every channel and
/// `samples` members `η` of each `Y_{M,k}`, the left side summed site by site.
pub fn kernel_consistency(ks: &KSpace, samples: usize) -> u64 {
    let l = ks.sites;
    let bit = |eta: u64, v: usize, x: usize| (eta >> (v * l + x)) & 1;
    let mut worst = 0u64;
    for k in &ks.ks {
        for eta in representatives(l, k, samples) {
            for &q in &ks.collisions {
                let (_, p) = k_move(k, q, l);
                let mut sum = 0u64;
                for x in 0..l {
                    for y in 0..l {
                        for xp in 0..l {
                            for yp in 0..l {
                                sum += bit(eta, q.v, x)
                                    * bit(eta, q.w, y)
                                    * (1 - bit(eta, q.v_out, xp))
                                    * (1 - bit(eta, q.w_out, yp));
                            }
                        }
                    }
                }
                worst = worst.max(sum.abs_diff(p));
            }
        }
    }
    worst
}

/// `Σ_k ν̄(k)`, exactly.
pub fn total_weight(ks: &KSpace) -> Rational {
    ks.weights.iter().fold(rational_from_int(0), |acc, w| acc + w)
}
