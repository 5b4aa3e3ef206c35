//! Micro-canonical surfaces on the box `Λ_M`.
//!
//! A surface `Y_M(i)` collects the configurations on `Λ_M` whose averaged
//! mass-momentum equals `i`. The restricted dynamics (nearest-neighbour
//! exclusion without wrap plus on-site collisions) and its mean-field
//! counterparts are reversible for the uniform measure on each surface, so they
//! are stored as form matrices `H = D − W` in the counting inner product.

mod geometry;
mod kspace;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use geometry::{nn_route, route_census, BoxGeometry, RouteCensus};
pub use kspace::{
    build_k_chain, enumerate_kspaces, find_maximizer, h_alpha, is_maximizer, k_graph_forms, k_move,
    kernel_consistency, representatives, total_weight, verify_cor_sg_k, ChainStep, CorReport, KSpace,
    PairInvariants, KSPACE_MAX_VECTORS,
};

use crate::exact::ExactVector;
use crate::linalg::{
    dense_eigenvalues, generalized_sup_dense, generalized_sup_iterative, indicator_basis, smallest_eig_deflated,
    CsrMatrix, EigError, DENSE_LIMIT,
};
use crate::velocity::{Quadruple, VelocitySet};
use kspace::{binom, colex_rank, colex_unrank};

/// Largest `|Λ_M| · |𝒱|` for which surfaces are enumerated.
pub const SURFACE_MAX_BITS: usize = 24;

/// Eigenvalues below this count towards the kernel.
pub const ZERO_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MicroError {
    #[error("box with {bits} occupation bits exceeds the limit of {limit}")]
    BoxTooLarge { bits: usize, limit: usize },
    #[error("particle-number space over {sites} sites and {species} species is too large")]
    KSpaceTooLarge { sites: usize, species: usize },
    #[error(transparent)]
    Eigensolve(#[from] EigError),
    #[error("h_alpha undefined for |box| = {sites}, alpha = {alpha}, k = {k}")]
    OutOfDomain { sites: usize, alpha: i64, k: i64 },
    #[error("no maximizer reached (inconsistent k-space)")]
    NoSolution,
    #[error("k-chain invariant violated: {0}")]
    ChainInvariantViolated(String),
    #[error("operation requires a pair-form velocity set")]
    MissingPairForm,
}

/// The quadratic forms that can be assembled on a surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormKind {
    /// Rate 1 per bond and species.
    NearestNeighborExclusion,
    /// Rate 1 per site and channel.
    LocalCollision,
    /// Rate `1/|Λ_M|` per ordered pair of sites and species.
    MeanFieldExclusion,
    /// Rate `1/|Λ_M|³` per site quadruple and channel.
    MeanFieldCollision,
}

#[derive(Debug)]
struct Shared {
    geometry: BoxGeometry,
    species: usize,
    collisions: Vec<Quadruple>,
}

/// One surface `Y_M(i)`. Members are bit masks, bit `v·|Λ_M| + x` for species
/// `v` at site `x`, grouped by particle-number vector.
#[derive(Debug, Clone)]
pub struct MicroSurface {
    shared: Arc<Shared>,
    label: ExactVector,
    ks: Vec<Vec<u32>>,
    offsets: Vec<usize>,
    members: Vec<u64>,
}

impl MicroSurface {
    fn new(shared: Arc<Shared>, label: ExactVector, ks: Vec<Vec<u32>>) -> Self {
        let l = shared.geometry.sites();
        let mut offsets = vec![0];
        let mut members = Vec::new();
        for k in &ks {
            let sizes: Vec<u64> = k.iter().map(|&kv| binom(l, kv as usize)).collect();
            let total: u64 = sizes.iter().product();
            for idx in 0..total {
                let mut rest = idx;
                let mut state = 0u64;
                for (v, &kv) in k.iter().enumerate() {
                    state |= colex_unrank(rest % sizes[v], kv as usize) << (v * l);
                    rest /= sizes[v];
                }
                members.push(state);
            }
            offsets.push(members.len());
        }
        Self { shared, label, ks, offsets, members }
    }

    pub fn label(&self) -> &ExactVector {
        &self.label
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.shared.geometry
    }

    pub fn species(&self) -> usize {
        self.shared.species
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    /// Particle-number vectors present on the surface, sorted.
    pub fn particle_numbers(&self) -> &[Vec<u32>] {
        &self.ks
    }

    /// Members with particle numbers `ks[j]`.
    pub fn block(&self, j: usize) -> &[u64] {
        &self.members[self.offsets[j]..self.offsets[j + 1]]
    }

    /// `ν_{M,i}(η) = 1/|Y_M(i)|`.
    pub fn uniform_weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    fn species_mask(&self, state: u64, v: usize) -> u64 {
        let l = self.shared.geometry.sites();
        (state >> (v * l)) & ((1u64 << l) - 1)
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        let s = self.shared.species;
        let l = self.shared.geometry.sites();
        if state >> (s * l) != 0 {
            return None;
        }
        let k: Vec<u32> = (0..s).map(|v| self.species_mask(state, v).count_ones()).collect();
        let j = self.ks.binary_search(&k).ok()?;
        let mut idx = 0u64;
        let mut stride = 1u64;
        for v in 0..s {
            idx += colex_rank(self.species_mask(state, v)) * stride;
            stride *= binom(l, k[v] as usize);
        }
        Some(self.offsets[j] + idx as usize)
    }

    fn push_transitions(&self, kind: FormKind, state: u64, out: &mut Vec<(u64, f64)>) {
        let g = &self.shared.geometry;
        let l = g.sites();
        let s = self.shared.species;
        let has = |b: usize| (state >> b) & 1 == 1;
        match kind {
            FormKind::NearestNeighborExclusion => {
                for &(x, y) in g.bonds() {
                    for v in 0..s {
                        let (bx, by) = (v * l + x, v * l + y);
                        if has(bx) != has(by) {
                            out.push((state ^ (1 << bx) ^ (1 << by), 1.0));
                        }
                    }
                }
            }
            FormKind::LocalCollision => {
                for x in 0..l {
                    for q in &self.shared.collisions {
                        if has(q.v * l + x) && has(q.w * l + x) && !has(q.v_out * l + x) && !has(q.w_out * l + x) {
                            let flip = [q.v, q.w, q.v_out, q.w_out].iter().fold(0u64, |m, &u| m | 1 << (u * l + x));
                            out.push((state ^ flip, 1.0));
                        }
                    }
                }
            }
            FormKind::MeanFieldExclusion => {
                let rate = 1.0 / l as f64;
                for v in 0..s {
                    let occ = self.species_mask(state, v);
                    let emp = !occ & ((1u64 << l) - 1);
                    for x in bits(occ) {
                        for y in bits(emp) {
                            out.push((state ^ (1 << (v * l + x)) ^ (1 << (v * l + y)), rate));
                        }
                    }
                }
            }
            FormKind::MeanFieldCollision => {
                let rate = 1.0 / (l * l * l) as f64;
                let full = (1u64 << l) - 1;
                for q in &self.shared.collisions {
                    let ov = self.species_mask(state, q.v);
                    let ow = self.species_mask(state, q.w);
                    let ev = !self.species_mask(state, q.v_out) & full;
                    let ew = !self.species_mask(state, q.w_out) & full;
                    for x in bits(ov) {
                        for y in bits(ow) {
                            for xp in bits(ev) {
                                for yp in bits(ew) {
                                    let flip = (1 << (q.v * l + x))
                                        | (1 << (q.w * l + y))
                                        | (1 << (q.v_out * l + xp))
                                        | (1 << (q.w_out * l + yp));
                                    out.push((state ^ flip, rate));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Sum of the requested forms as `H = D − W` over the members.
    pub fn form(&self, kinds: &[FormKind]) -> CsrMatrix {
        let mut raw = Vec::new();
        CsrMatrix::form_from_rows(self.len(), |i, row| {
            raw.clear();
            for &kind in kinds {
                self.push_transitions(kind, self.members[i], &mut raw);
            }
            row.extend(raw.iter().map(|&(t, w)| {
                let j = self.index_of(t).expect("transitions stay on the surface");
                (j as u32, w)
            }));
        })
    }

    /// `−(L^{ex,s}_M + L^c_M)`.
    pub fn generator_form(&self) -> CsrMatrix {
        self.form(&[FormKind::NearestNeighborExclusion, FormKind::LocalCollision])
    }
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (m != 0).then(|| {
            let j = m.trailing_zeros() as usize;
            m &= m - 1;
            j
        })
    })
}

/// All surfaces of `{0,1}^{Λ_M × 𝒱}`, keyed by `i`.
pub fn enumerate_surfaces(m: usize, vs: &VelocitySet) -> Result<BTreeMap<ExactVector, MicroSurface>, MicroError> {
    let geometry = BoxGeometry::new(vs.dim(), m);
    let bits = geometry.sites() * vs.len();
    if bits > SURFACE_MAX_BITS {
        return Err(MicroError::BoxTooLarge { bits, limit: SURFACE_MAX_BITS });
    }
    let shared = Arc::new(Shared { geometry, species: vs.len(), collisions: vs.collision_set().to_vec() });
    Ok(enumerate_kspaces(m, vs)?
        .into_iter()
        .map(|(label, ks)| {
            let surface = MicroSurface::new(shared.clone(), label.clone(), ks.vectors().to_vec());
            (label, surface)
        })
        .collect())
}

/// Smallest nonzero eigenvalue of the surface generator and the number of zero
/// eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// `+∞` when there is no nonzero eigenvalue.
    pub gap: f64,
    pub zero_multiplicity: usize,
    pub states: usize,
}

pub fn spectral_gap(surface: &MicroSurface) -> Result<GapReport, MicroError> {
    form_gap(&surface.generator_form())
}

/// Gap and kernel dimension of a form matrix.
pub fn form_gap(h: &CsrMatrix) -> Result<GapReport, MicroError> {
    let n = h.dim();
    if n <= DENSE_LIMIT {
        let ev = dense_eigenvalues(&h.to_dense());
        let zero_multiplicity = ev.iter().filter(|&&e| e < ZERO_EIGENVALUE).count();
        let gap = ev.iter().copied().find(|&e| e >= ZERO_EIGENVALUE).unwrap_or(f64::INFINITY);
        return Ok(GapReport { gap, zero_multiplicity, states: n });
    }
    // For a graph Laplacian the kernel is spanned by component indicators.
    let (count, labels) = h.components();
    if count == n {
        return Ok(GapReport { gap: f64::INFINITY, zero_multiplicity: n, states: n });
    }
    let kernel = indicator_basis(count, &labels);
    let eig = smallest_eig_deflated(h, &kernel, 1e-9, 20 * n.max(500), n as u64)?;
    Ok(GapReport { gap: eig.value, zero_multiplicity: count, states: n })
}

/// `sup_f A(f)/B(f)` over `f ⊥ ker B`; `+∞` when `ker B ⊄ ker A`.
pub fn rayleigh_ratio(a: &CsrMatrix, b: &CsrMatrix) -> Result<f64, MicroError> {
    let n = a.dim();
    if n <= DENSE_LIMIT {
        return Ok(generalized_sup_dense(&a.to_dense(), &b.to_dense()).unwrap_or(f64::INFINITY));
    }
    let (count, labels) = b.components();
    // ker B is spanned by B's component indicators; it lies in ker A exactly
    // when no A-jump crosses between B-components.
    let crosses = (0..n).any(|i| a.row(i).any(|(j, w)| w != 0.0 && labels[i] != labels[j]));
    if crosses {
        return Ok(f64::INFINITY);
    }
    if count == n {
        return Ok(0.0);
    }
    let kernel = indicator_basis(count, &labels);
    Ok(generalized_sup_iterative(a, b, &kernel, 1e-8, 2000, n as u64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational_from_int;
    use crate::linalg::dot;
    use crate::velocity::presets::{model_one, root_two, single_plus};
    use num_rational::BigRational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL: [FormKind; 4] = [
        FormKind::NearestNeighborExclusion,
        FormKind::LocalCollision,
        FormKind::MeanFieldExclusion,
        FormKind::MeanFieldCollision,
    ];

    #[test]
    fn partition_of_two_species_box() {
        let vs = model_one(1);
        let surfaces = enumerate_surfaces(1, &vs).unwrap();
        let total: usize = surfaces.values().map(|s| s.len()).sum();
        assert_eq!(total, 64);
        let third = BigRational::new(2.into(), 3.into());
        let key = ExactVector::from_coeffs(vec![vec![third], vec![rational_from_int(0)]]);
        let s = &surfaces[&key];
        assert_eq!(s.len(), 9);
        // Empty and full boxes are singletons.
        for k in [vec![0, 0], vec![3, 3]] {
            let s = surfaces.values().find(|s| s.particle_numbers()[0] == k).unwrap();
            assert_eq!(s.len(), 1);
        }
        let mut seen = std::collections::HashSet::new();
        for s in surfaces.values() {
            for (i, &m) in s.members().iter().enumerate() {
                assert!(seen.insert(m));
                assert_eq!(s.index_of(m), Some(i));
            }
        }
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn too_large_box() {
        assert!(matches!(enumerate_surfaces(3, &root_two()), Err(MicroError::BoxTooLarge { bits: 28, .. })));
    }

    #[test]
    fn path_gap() {
        let vs = single_plus();
        let surfaces = enumerate_surfaces(1, &vs).unwrap();
        let one = surfaces.values().find(|s| s.particle_numbers()[0] == vec![1]).unwrap();
        let r = spectral_gap(one).unwrap();
        assert!((r.gap - 1.0).abs() < 1e-12);
        assert_eq!(r.zero_multiplicity, 1);
        let empty = surfaces.values().find(|s| s.len() == 1).unwrap();
        let r = spectral_gap(empty).unwrap();
        assert!(r.gap.is_infinite() && r.zero_multiplicity == 1);
    }

    #[test]
    fn forms_are_psd_with_uniform_kernel() {
        let vs = root_two();
        for s in enumerate_surfaces(1, &vs).unwrap().values() {
            for kind in ALL {
                let h = s.form(&[kind]);
                assert!(h.symmetry_defect() < 1e-12);
                assert!(h.row_sums().iter().all(|r| r.abs() < 1e-12));
                assert!(h.left_apply(&vec![s.uniform_weight(); s.len()]).iter().all(|r| r.abs() < 1e-12));
                if s.len() <= 200 {
                    assert!(dense_eigenvalues(&h.to_dense())[0] > -1e-10);
                }
            }
        }
    }

    #[test]
    fn root_two_is_ergodic_at_m1() {
        let vs = root_two();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in enumerate_surfaces(1, &vs).unwrap().values() {
            let r = spectral_gap(s).unwrap();
            assert_eq!(r.zero_multiplicity, 1);
            assert!(r.gap > 0.0);
            if s.len() < 2 {
                continue;
            }
            // Poincaré inequality with the computed gap.
            let h = s.generator_form();
            for _ in 0..20 {
                let mut f: Vec<f64> = (0..s.len()).map(|_| rng.random::<f64>() - 0.5).collect();
                let mean = f.iter().sum::<f64>() / f.len() as f64;
                f.iter_mut().for_each(|x| *x -= mean);
                let var = dot(&f, &f);
                assert!(var <= h.quadratic(&f) / r.gap * (1.0 + 1e-8));
            }
        }
    }

    #[test]
    fn mean_field_collision_rates_match_kernel() {
        let vs = root_two();
        let spaces = enumerate_kspaces(1, &vs).unwrap();
        for (label, s) in enumerate_surfaces(1, &vs).unwrap() {
            let ks = &spaces[&label];
            let h = s.form(&[FormKind::MeanFieldCollision]);
            let diag = h.diagonal();
            let l3 = (s.geometry().sites() as f64).powi(3);
            for (j, k) in s.particle_numbers().iter().enumerate() {
                let expect: u64 = ks.collisions().iter().map(|&q| k_move(k, q, s.geometry().sites()).1).sum();
                for i in s.offsets[j]..s.offsets[j + 1] {
                    assert!((diag[i] * l3 - expect as f64).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ratio_basics_and_mean_field_scaling() {
        let vs = single_plus();
        let mut prev = None;
        for m in 1..=3 {
            let mut worst: f64 = 0.0;
            for s in enumerate_surfaces(m, &vs).unwrap().values() {
                if s.len() < 2 {
                    continue;
                }
                let b = s.form(&[FormKind::NearestNeighborExclusion]);
                assert!((rayleigh_ratio(&b, &b).unwrap() - 1.0).abs() < 1e-9);
                assert!((rayleigh_ratio(&b.scaled(2.0), &b).unwrap() - 2.0).abs() < 1e-9);
                let a = s.form(&[FormKind::MeanFieldExclusion]);
                worst = worst.max(rayleigh_ratio(&a, &b).unwrap());
            }
            let scaled = worst / (m * m) as f64;
            assert!(scaled.is_finite() && scaled <= 24.0, "M={m}: {scaled}");
            prev = Some(scaled);
        }
        assert!(prev.is_some());
    }

    #[test]
    fn iterative_gap_matches_dense_above_threshold() {
        let vs = root_two();
        let surfaces = enumerate_surfaces(2, &vs).unwrap();
        let s = surfaces.values().filter(|s| s.len() > DENSE_LIMIT).min_by_key(|s| s.len()).unwrap();
        let h = s.generator_form();
        let r = form_gap(&h).unwrap();
        let ev = dense_eigenvalues(&h.to_dense());
        assert_eq!(r.zero_multiplicity, ev.iter().filter(|&&e| e < ZERO_EIGENVALUE).count());
        let dense_gap = ev.iter().copied().find(|&e| e >= ZERO_EIGENVALUE).unwrap();
        assert!((r.gap - dense_gap).abs() < 1e-7 * dense_gap.max(1.0), "{} vs {dense_gap}", r.gap);
    }

    #[test]
    fn infinite_ratio_when_kernels_disagree() {
        // Without collisions the pair species cannot trade particles.
        let vs = root_two();
        let surfaces = enumerate_surfaces(1, &vs).unwrap();
        let s = surfaces.values().find(|s| s.particle_numbers().len() > 1).unwrap();
        let a = s.form(&[FormKind::MeanFieldCollision]);
        let b = s.form(&[FormKind::MeanFieldExclusion]);
        assert!(rayleigh_ratio(&a, &b).unwrap().is_infinite());
        let b = s.form(&[FormKind::MeanFieldExclusion, FormKind::LocalCollision]);
        assert!(rayleigh_ratio(&a, &b).unwrap().is_finite());
    }
}
