//! Full generator matrices on small tori and the algebraic identities they obey.
//!
//! States are indexed by the occupancy bits read as an integer (bit `v·N^d + x`).
//! Rate convention: off-diagonal entries are jump rates, rows sum to zero.

use thiserror::Error;

use crate::dynamics::{DynamicsError, SimParams};
use crate::lattice::{direction_step, Configuration, Torus};
use crate::linalg::CsrMatrix;
use crate::measure::{log_weight, PotentialField};
use crate::velocity::VelocitySet;

/// Largest state space (in bits) for sparse generators.
pub const SPARSE_MAX_BITS: usize = 20;
/// Largest state space (in bits) for the residual checks, which use dense algebra.
pub const DENSE_MAX_BITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactGenError {
    #[error("state space has {bits} bits (limit {limit})")]
    StateSpaceTooLarge { bits: usize, limit: usize },
    #[error(transparent)]
    Params(#[from] DynamicsError),
}

#[derive(Debug, Clone)]
pub struct GeneratorMatrices {
    pub params: SimParams,
    pub species: usize,
    pub bits: usize,
    pub l_ex: CsrMatrix,
    pub l_ex_sym: CsrMatrix,
    pub l_ex_anti: CsrMatrix,
    pub l_c: CsrMatrix,
}

impl GeneratorMatrices {
    pub fn states(&self) -> usize {
        1 << self.bits
    }

    pub fn torus(&self) -> &Torus {
        self.params.torus()
    }

    pub fn configuration(&self, state: usize) -> Configuration {
        Configuration::from_index(self.torus().clone(), self.species, state as u64)
    }

    /// `L_ex + L_c`.
    pub fn total(&self) -> CsrMatrix {
        self.l_ex.add_scaled(&self.l_c, 1.0)
    }

    fn require_dense(&self) -> Result<(), ExactGenError> {
        if self.bits > DENSE_MAX_BITS {
            return Err(ExactGenError::StateSpaceTooLarge { bits: self.bits, limit: DENSE_MAX_BITS });
        }
        Ok(())
    }
}

/// Assemble `L_ex`, its symmetric and antisymmetric parts, and `L_c` with the `N²` factor.
pub fn build_generators(n: usize, a: f64, vs: &VelocitySet) -> Result<GeneratorMatrices, ExactGenError> {
    let params = SimParams::new(vs, n, a, 0.0, vec![])?;
    let torus = params.torus().clone();
    let species = vs.len();
    let sites = torus.sites();
    let bits = sites * species;
    if bits > SPARSE_MAX_BITS {
        return Err(ExactGenError::StateSpaceTooLarge { bits, limit: SPARSE_MAX_BITS });
    }
    let n2 = (n * n) as f64;
    let drift = params.drift();
    let d = torus.dim();
    let states = 1usize << bits;
    let mut ex = Vec::new();
    let mut sym = Vec::new();
    let mut anti = Vec::new();
    let mut col = Vec::new();
    for s in 0..states {
        let cfg = Configuration::from_index(torus.clone(), species, s as u64);
        let si = s as u32;
        for x in 0..sites {
            for dir in 0..2 * d {
                let y = torus.neighbor(x, dir);
                for v in 0..species {
                    let rate = params.exchange_rate_dir(&cfg, x, dir, v);
                    if !cfg.get(x, v) || cfg.get(y, v) {
                        continue;
                    }
                    let target = (s ^ (1 << (v * sites + x)) ^ (1 << (v * sites + y))) as u32;
                    let (axis, z) = direction_step(dir);
                    ex.push((si, target, rate));
                    sym.push((si, target, n2));
                    anti.push((si, target, n2 * z * vs.velocity(v)[axis] * drift));
                }
            }
            for &q in vs.collision_set() {
                if cfg.collision_indicator(x, q) {
                    let mut t = s;
                    for u in [q.v, q.w, q.v_out, q.w_out] {
                        t ^= 1 << (u * sites + x);
                    }
                    col.push((si, t as u32, n2));
                }
            }
        }
    }
    Ok(GeneratorMatrices {
        species,
        bits,
        l_ex: with_zero_row_sums(states, ex),
        l_ex_sym: with_zero_row_sums(states, sym),
        l_ex_anti: with_zero_row_sums(states, anti),
        l_c: with_zero_row_sums(states, col),
        params,
    })
}

fn with_zero_row_sums(n: usize, mut rates: Vec<(u32, u32, f64)>) -> CsrMatrix {
    let mut diag = vec![0.0; n];
    for &(i, _, r) in &rates {
        diag[i as usize] -= r;
    }
    rates.extend(diag.into_iter().enumerate().map(|(i, r)| (i as u32, i as u32, r)));
    CsrMatrix::from_triplets(n, rates)
}

/// `μ_λ` over all states for a constant chemical potential.
pub fn measure_vector(gen: &GeneratorMatrices, vs: &VelocitySet, lambda: &[f64]) -> Vec<f64> {
    let field = PotentialField::constant(gen.torus().clone(), lambda);
    (0..gen.states()).map(|s| log_weight(&gen.configuration(s), &field, vs).exp()).collect()
}

/// `‖μ_λᵀ (L_ex + L_c)‖_∞`.
pub fn stationarity_residual(gen: &GeneratorMatrices, vs: &VelocitySet, lambda: &[f64]) -> Result<f64, ExactGenError> {
    gen.require_dense()?;
    let mu = measure_vector(gen, vs, lambda);
    Ok(stationarity_residual_for(&gen.total(), &mu))
}

/// `‖μᵀ L‖_∞` for an arbitrary measure vector.
pub fn stationarity_residual_for(l: &CsrMatrix, mu: &[f64]) -> f64 {
    l.left_apply(mu).iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointResiduals {
    pub sym_ex: f64,
    pub anti_ex: f64,
    pub sym_c: f64,
}

impl AdjointResiduals {
    pub fn max(&self) -> f64 {
        self.sym_ex.max(self.anti_ex).max(self.sym_c)
    }
}

/// `‖D L − s Lᵀ D‖_∞` with `D = diag(μ)`; `s = 1` tests self-adjointness, `s = −1` skew-adjointness.
pub fn adjoint_defect(l: &CsrMatrix, mu: &[f64], s: f64) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..l.dim() {
        for (j, v) in l.row(i) {
            worst = worst.max((mu[i] * v - s * l.get(j, i) * mu[j]).abs());
        }
    }
    worst
}

pub fn adjoint_residuals(gen: &GeneratorMatrices, vs: &VelocitySet, lambda: &[f64]) -> Result<AdjointResiduals, ExactGenError> {
    gen.require_dense()?;
    let mu = measure_vector(gen, vs, lambda);
    Ok(adjoint_residuals_for(gen, &mu))
}

pub fn adjoint_residuals_for(gen: &GeneratorMatrices, mu: &[f64]) -> AdjointResiduals {
    AdjointResiduals {
        sym_ex: adjoint_defect(&gen.l_ex_sym, mu, 1.0),
        anti_ex: adjoint_defect(&gen.l_ex_anti, mu, -1.0),
        sym_c: adjoint_defect(&gen.l_c, mu, 1.0),
    }
}

/// `‖L_c f‖_∞` for `f(η) = f̃(η)`.
pub fn lc_residual(gen: &GeneratorMatrices, f: impl Fn(&Configuration) -> f64) -> Result<f64, ExactGenError> {
    gen.require_dense()?;
    let values: Vec<f64> = (0..gen.states()).map(|s| f(&gen.configuration(s))).collect();
    Ok(gen.l_c.apply(&values).iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// `‖L_c f‖_∞` for `f(η) = f̃((𝐈(η_x))_x)`.
pub fn lnc_annihilation(gen: &GeneratorMatrices, vs: &VelocitySet, f: impl Fn(&[Vec<f64>]) -> f64) -> Result<f64, ExactGenError> {
    lc_residual(gen, |cfg| {
        let field: Vec<Vec<f64>> = (0..cfg.torus().sites()).map(|x| cfg.local_mass_momentum(vs, x)).collect();
        f(&field)
    })
}
