//! Velocity sets, their admissibility checks, and the constants of the limit equation.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_rational::BigRational;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::exact::{exact_rank, parse_rational, rational_from_int, ExactError, ExactVector, SymbolBasis};
use crate::scalar::{theta, theta_prime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VelocityError {
    #[error("velocity set is empty")]
    EmptySet,
    #[error("velocity {index} duplicates an earlier velocity")]
    DuplicateVelocity { index: usize },
    #[error("pair form is degenerate: generators {first} and {second} produce coinciding velocities")]
    DegeneratePairForm { first: usize, second: usize },
    #[error("operation needs a pair-form velocity set")]
    MissingPairForm,
    #[error("Gram matrix is not invertible (smallest eigenvalue {min_eigenvalue:e})")]
    GramNotInvertible { min_eigenvalue: f64 },
    #[error("Newton iteration for the inverse of P did not converge (residual {residual:e})")]
    NewtonDiverged { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("velocity file: {0}")]
    Format(String),
}

/// How the velocities are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySpec {
    Explicit(Vec<ExactVector>),
    /// `{v_* ± v_ℓ}`; expanded as `v_*+v_1, v_*−v_1, v_*+v_2, …`.
    PairForm { v_star: ExactVector, generators: Vec<ExactVector> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairForm {
    pub v_star: ExactVector,
    pub generators: Vec<ExactVector>,
}

impl PairForm {
    pub fn n(&self) -> usize {
        self.generators.len()
    }

    /// Species indices `(v_*+v_ℓ, v_*−v_ℓ)` of pair `ℓ`.
    pub fn pair(&self, l: usize) -> (usize, usize) {
        (2 * l, 2 * l + 1)
    }
}

/// Collision channel `(v, w) → (v', w')`, stored as species indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub v: usize,
    pub w: usize,
    pub v_out: usize,
    pub w_out: usize,
}

impl Quadruple {
    pub fn reverse(self) -> Self {
        Self { v: self.v_out, w: self.w_out, v_out: self.v, w_out: self.w }
    }

    pub fn incoming(self) -> [usize; 2] {
        [self.v, self.w]
    }

    pub fn outgoing(self) -> [usize; 2] {
        [self.v_out, self.w_out]
    }
}

/// `C_kijl`, shape `(d+1) × (d+1) × (d+1) × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor {
    d: usize,
    data: Vec<f64>,
}

impl CouplingTensor {
    pub fn zeros(d: usize) -> Self {
        Self { d, data: vec![0.0; (d + 1).pow(3) * d] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn index(&self, k: usize, i: usize, j: usize, l: usize) -> usize {
        let e = self.d + 1;
        ((k * e + i) * e + j) * self.d + l
    }

    pub fn get(&self, k: usize, i: usize, j: usize, l: usize) -> f64 {
        self.data[self.index(k, i, j, l)]
    }

    /// Nonzero entries as `(k, i, j, l, value)`.
    pub fn nonzeros(&self) -> Vec<(usize, usize, usize, usize, f64)> {
        let e = self.d + 1;
        let mut out = Vec::new();
        for k in 0..e {
            for i in 0..e {
                for j in 0..e {
                    for l in 0..self.d {
                        let c = self.get(k, i, j, l);
                        if c != 0.0 {
                            out.push((k, i, j, l, c));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanReport {
    pub spans: bool,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvReport {
    pub invertible: bool,
    pub min_eigenvalue: f64,
    pub gram_eigenvalues: Vec<f64>,
}

/// Velocity set with its derived algebra. Immutable after construction.
#[derive(Debug, Clone)]
pub struct VelocitySet {
    basis: SymbolBasis,
    dim: usize,
    velocities: Vec<ExactVector>,
    numeric: Vec<Vec<f64>>,
    lifted: Vec<Vec<f64>>,
    pair_form: Option<PairForm>,
    collision_set: Vec<Quadruple>,
    gram: DMatrix<f64>,
    a_matrix: Option<DMatrix<f64>>,
    p_star: Vec<f64>,
    p_star_exact: ExactVector,
    coupling: Option<CouplingTensor>,
}

const GRAM_TOL: f64 = 1e-10;

pub fn build_velocity_set(basis: SymbolBasis, spec: VelocitySpec) -> Result<VelocitySet, VelocityError> {
    let (velocities, pair_form) = match spec {
        VelocitySpec::Explicit(vs) => (vs, None),
        VelocitySpec::PairForm { v_star, generators } => {
            let mut vs = Vec::with_capacity(2 * generators.len());
            for g in &generators {
                vs.push(&v_star + g);
                vs.push(&v_star - g);
            }
            for (a, va) in vs.iter().enumerate() {
                if let Some(b) = vs[..a].iter().position(|vb| vb == va) {
                    return Err(VelocityError::DegeneratePairForm { first: b / 2, second: a / 2 });
                }
            }
            (vs, Some(PairForm { v_star, generators }))
        }
    };
    if velocities.is_empty() {
        return Err(VelocityError::EmptySet);
    }
    let dim = velocities[0].dim();
    if dim == 0 {
        return Err(VelocityError::ZeroDimension);
    }
    for v in &velocities {
        if v.dim() != dim {
            return Err(VelocityError::DimensionMismatch { expected: dim, got: v.dim() });
        }
        if v.basis_len() != basis.len() {
            return Err(ExactError::CoefficientCount { expected: basis.len(), got: v.basis_len() }.into());
        }
    }
    for (a, va) in velocities.iter().enumerate() {
        if velocities[..a].contains(va) {
            return Err(VelocityError::DuplicateVelocity { index: a });
        }
    }

    let numeric: Vec<Vec<f64>> = velocities.iter().map(|v| v.eval(&basis)).collect();
    let lifted: Vec<Vec<f64>> = numeric.iter().map(|v| std::iter::once(1.0).chain(v.iter().copied()).collect()).collect();
    let collision_set = effective_collisions(&velocities);

    let e = dim + 1;
    let mut gram = DMatrix::zeros(e, e);
    for l in &lifted {
        for i in 0..e {
            for j in 0..e {
                gram[(i, j)] += l[i] * l[j];
            }
        }
    }
    let p_star: Vec<f64> = (0..e).map(|i| 0.5 * lifted.iter().map(|l| l[i]).sum::<f64>()).collect();
    let half = BigRational::new(1.into(), 2.into());
    let mut mass = vec![rational_from_int(0); basis.len()];
    mass[0] = rational_from_int(velocities.len() as i64);
    let momentum = velocities.iter().fold(ExactVector::zero(dim, basis.len()), |acc, v| &acc + v);
    let mut lifted_sum = vec![mass];
    lifted_sum.extend(momentum.coeffs().iter().cloned());
    let p_star_exact = ExactVector::from_coeffs(lifted_sum).scale(&half);

    let mut vs = VelocitySet {
        basis,
        dim,
        velocities,
        numeric,
        lifted,
        pair_form,
        collision_set,
        gram,
        a_matrix: None,
        p_star,
        p_star_exact,
        coupling: None,
    };
    if vs.assumption_av_report().invertible {
        let inv = vs.gram.clone().try_inverse().expect("invertible Gram matrix");
        // 2·G⁻¹, symmetrized against rounding.
        vs.a_matrix = Some(&inv + inv.transpose());
        vs.coupling = Some(compute_coupling(&vs));
    }
    Ok(vs)
}

/// All ordered `(v, w, v', w')` with `v+w = v'+w'`, `v≠w`, `v'≠w'`, `{v,w}∩{v',w'}=∅`.
fn effective_collisions(vel: &[ExactVector]) -> Vec<Quadruple> {
    let s = vel.len();
    let mut out = Vec::new();
    for v in 0..s {
        for w in 0..s {
            if v == w {
                continue;
            }
            let sum = &vel[v] + &vel[w];
            for v_out in 0..s {
                for w_out in 0..s {
                    if v_out == w_out || [v, w].contains(&v_out) || [v, w].contains(&w_out) {
                        continue;
                    }
                    if (&vel[v_out] + &vel[w_out]) == sum {
                        out.push(Quadruple { v, w, v_out, w_out });
                    }
                }
            }
        }
    }
    out
}

fn compute_coupling(vs: &VelocitySet) -> CouplingTensor {
    let a = vs.a_matrix.as_ref().expect("A_V present");
    let d = vs.dim;
    let mut c = CouplingTensor::zeros(d);
    for (v, lift) in vs.numeric.iter().zip(&vs.lifted) {
        let av = a * DVector::from_column_slice(lift);
        for k in 0..=d {
            let vk = lift[k];
            if vk == 0.0 {
                continue;
            }
            for i in 0..=d {
                for j in 0..=d {
                    for l in 0..d {
                        let idx = c.index(k, i, j, l);
                        c.data[idx] += vk * av[i] * av[j] * v[l];
                    }
                }
            }
        }
    }
    c
}

impl VelocitySet {
    pub fn basis(&self) -> &SymbolBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of species `|𝒱|`.
    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[ExactVector] {
        &self.velocities
    }

    pub fn velocity(&self, s: usize) -> &[f64] {
        &self.numeric[s]
    }

    /// Lifted vector `𝐯 = (1, v)` of species `s`.
    pub fn lifted(&self, s: usize) -> &[f64] {
        &self.lifted[s]
    }

    pub fn pair_form(&self) -> Option<&PairForm> {
        self.pair_form.as_ref()
    }

    pub fn collision_set(&self) -> &[Quadruple] {
        &self.collision_set
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn a_matrix(&self) -> Option<&DMatrix<f64>> {
        self.a_matrix.as_ref()
    }

    pub fn p_star(&self) -> &[f64] {
        &self.p_star
    }

    /// `p_*` in exact symbol arithmetic, as a `(d+1)`-component vector.
    pub fn p_star_exact(&self) -> &ExactVector {
        &self.p_star_exact
    }

    pub fn coupling(&self) -> Result<&CouplingTensor, VelocityError> {
        self.coupling.as_ref().ok_or_else(|| VelocityError::GramNotInvertible {
            min_eigenvalue: self.assumption_av_report().min_eigenvalue,
        })
    }

    /// Largest `|v_j|` over species and coordinates.
    pub fn v_max(&self) -> f64 {
        self.numeric.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Exponent `κ = (2n+1)d + 2` of the polynomial gap bound; pair-form sets only.
    pub fn kappa(&self) -> Option<usize> {
        self.pair_form.as_ref().map(|p| (2 * p.n() + 1) * self.dim + 2)
    }

    /// Upper bound `d/(κ+2d)` on the scaling exponent `a`.
    pub fn a_bound(&self) -> Option<f64> {
        self.kappa().map(|k| self.dim as f64 / (k as f64 + 2.0 * self.dim as f64))
    }

    pub fn check_span(&self) -> Result<SpanReport, VelocityError> {
        let pf = self.pair_form.as_ref().ok_or(VelocityError::MissingPairForm)?;
        let gens: Vec<Vec<f64>> = pf.generators.iter().map(|g| g.eval(&self.basis)).collect();
        let mut m = DMatrix::from_fn(self.dim, gens.len(), |r, c| gens[c][r]);
        let rank = numeric_rank(&mut m, 1e-10);
        Ok(SpanReport { spans: rank == self.dim, rank })
    }

    pub fn check_integer_independence(&self) -> Result<bool, VelocityError> {
        let pf = self.pair_form.as_ref().ok_or(VelocityError::MissingPairForm)?;
        let n = pf.n();
        let mut rows = Vec::with_capacity(self.dim * self.basis.len());
        for j in 0..self.dim {
            for s in 0..self.basis.len() {
                rows.push(pf.generators.iter().map(|g| g.component(j)[s].clone()).collect::<Vec<_>>());
            }
        }
        Ok(exact_rank(&rows) == n)
    }

    pub fn assumption_av_report(&self) -> AvReport {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.gram.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let max = ev.last().copied().unwrap_or(0.0).abs().max(1.0);
        let min = ev[0];
        AvReport { invertible: min > GRAM_TOL * max, min_eigenvalue: min, gram_eigenvalues: ev }
    }

    /// `P(λ) = Σ_v 𝐯 θ(λ·𝐯)`.
    pub fn big_p(&self, lambda: &[f64]) -> Vec<f64> {
        let e = self.dim + 1;
        let mut p = vec![0.0; e];
        for l in &self.lifted {
            let t = theta(dot(lambda, l));
            p.iter_mut().zip(l).for_each(|(pi, li)| *pi += li * t);
        }
        p
    }

    /// `∇P(λ) = Σ_v 𝐯⊗𝐯 θ'(λ·𝐯)`.
    pub fn big_p_jacobian(&self, lambda: &[f64]) -> DMatrix<f64> {
        let e = self.dim + 1;
        let mut j = DMatrix::zeros(e, e);
        for l in &self.lifted {
            let t = theta_prime(dot(lambda, l));
            for r in 0..e {
                for c in 0..e {
                    j[(r, c)] += t * l[r] * l[c];
                }
            }
        }
        j
    }

    /// `Λ = P⁻¹` by Newton's method started at `λ = 0`.
    pub fn lambda_of_p(&self, p: &[f64]) -> Result<Vec<f64>, VelocityError> {
        let e = self.dim + 1;
        if p.len() != e {
            return Err(VelocityError::DimensionMismatch { expected: e, got: p.len() });
        }
        let mut lambda = vec![0.0; e];
        let mut residual = f64::INFINITY;
        for _ in 0..50 {
            let r: Vec<f64> = self.big_p(&lambda).iter().zip(p).map(|(a, b)| a - b).collect();
            residual = r.iter().fold(0.0, |m, x| m.max(x.abs()));
            if residual < 1e-12 {
                return Ok(lambda);
            }
            let step = self
                .big_p_jacobian(&lambda)
                .lu()
                .solve(&DVector::from_vec(r))
                .ok_or(VelocityError::NewtonDiverged { residual })?;
            lambda.iter_mut().zip(step.iter()).for_each(|(l, s)| *l -= s);
            if lambda.iter().any(|x| !x.is_finite()) {
                return Err(VelocityError::NewtonDiverged { residual });
            }
        }
        Err(VelocityError::NewtonDiverged { residual })
    }

    /// Canonical string of an exact `(d+1)`-vector such as a surface label.
    pub fn render(&self, v: &ExactVector) -> String {
        v.render(&self.basis)
    }

    pub fn from_json_str(text: &str) -> Result<Self, VelocityError> {
        let file: VelocityFile = serde_json::from_str(text).map_err(|e| VelocityError::Format(e.to_string()))?;
        file.build()
    }

    pub fn from_path(path: &Path) -> Result<Self, VelocityError> {
        let text = std::fs::read_to_string(path).map_err(|e| VelocityError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rank by Gaussian elimination with partial pivoting; pivots below `tol` count as zero.
fn numeric_rank(m: &mut DMatrix<f64>, tol: f64) -> usize {
    let (rows, cols) = m.shape();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (p, val) = (rank..rows).map(|r| (r, m[(r, c)].abs())).fold((rank, -1.0), |b, x| if x.1 > b.1 { x } else { b });
        if val <= tol {
            continue;
        }
        m.swap_rows(rank, p);
        for r in rank + 1..rows {
            let f = m[(r, c)] / m[(rank, c)];
            for cc in c..cols {
                m[(r, cc)] -= f * m[(rank, cc)];
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VelocityFile {
    dimension: usize,
    #[serde(default)]
    symbols: serde_json::Map<String, Value>,
    pair_form: Option<PairFormFile>,
    velocities: Option<Vec<Vec<Value>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairFormFile {
    v_star: Vec<Value>,
    generators: Vec<Vec<Value>>,
}

impl VelocityFile {
    fn build(self) -> Result<VelocitySet, VelocityError> {
        let mut symbols = Vec::new();
        for (name, v) in &self.symbols {
            let x = v.as_f64().ok_or_else(|| VelocityError::Format(format!("symbol {name:?} must be a number")))?;
            symbols.push((name.clone(), x));
        }
        if symbols.first().map(|s| s.0.as_str()) != Some("1") {
            symbols.insert(0, ("1".into(), 1.0));
        }
        let basis = SymbolBasis::new(symbols)?;
        let vector = |comps: &[Value]| -> Result<ExactVector, VelocityError> {
            if comps.len() != self.dimension {
                return Err(VelocityError::DimensionMismatch { expected: self.dimension, got: comps.len() });
            }
            comps.iter().map(|c| component(c, basis.len())).collect::<Result<Vec<_>, _>>().map(ExactVector::from_coeffs)
        };
        let spec = match (self.pair_form, self.velocities) {
            (Some(pf), None) => VelocitySpec::PairForm {
                v_star: vector(&pf.v_star)?,
                generators: pf.generators.iter().map(|g| vector(g)).collect::<Result<_, _>>()?,
            },
            (None, Some(vs)) => VelocitySpec::Explicit(vs.iter().map(|v| vector(v)).collect::<Result<_, _>>()?),
            _ => return Err(VelocityError::Format("exactly one of `pair_form` and `velocities` is required".into())),
        };
        build_velocity_set(basis, spec)
    }
}

/// One component: a list of rationals (one per symbol), or a single rational for the unit.
fn component(v: &Value, basis_len: usize) -> Result<Vec<BigRational>, VelocityError> {
    let scalar = |v: &Value| -> Result<BigRational, VelocityError> {
        match v {
            Value::String(s) => Ok(parse_rational(s)?),
            Value::Number(n) if n.is_i64() => Ok(rational_from_int(n.as_i64().unwrap())),
            other => Err(VelocityError::Format(format!("expected a rational string, found {other}"))),
        }
    };
    match v {
        Value::Array(items) => {
            if items.len() != basis_len {
                return Err(ExactError::CoefficientCount { expected: basis_len, got: items.len() }.into());
            }
            items.iter().map(scalar).collect()
        }
        other => {
            let mut out = vec![rational_from_int(0); basis_len];
            out[0] = scalar(other)?;
            Ok(out)
        }
    }
}

/// Reference velocity sets.
pub mod presets {
    use super::*;

    /// Unit coordinate velocities `{±e_1, …, ±e_d}` in pair form with `v_* = 0`.
    pub fn model_one(d: usize) -> VelocitySet {
        let basis = SymbolBasis::rational();
        let generators = (0..d)
            .map(|j| {
                let mut e = vec![0i64; d];
                e[j] = 1;
                ExactVector::from_integers(&e, 1)
            })
            .collect();
        build_velocity_set(basis, VelocitySpec::PairForm { v_star: ExactVector::zero(d, 1), generators })
            .expect("unit velocity set is valid")
    }

    /// `{±1, ±√2}` in `d = 1`, pair form over the basis `{1, √2}`.
    pub fn root_two() -> VelocitySet {
        let basis = SymbolBasis::with_unit([("s2", std::f64::consts::SQRT_2)]).expect("valid basis");
        let one = rational_from_int(1);
        let zero = rational_from_int(0);
        let g1 = ExactVector::from_coeffs(vec![vec![one.clone(), zero.clone()]]);
        let g2 = ExactVector::from_coeffs(vec![vec![zero, one]]);
        build_velocity_set(basis, VelocitySpec::PairForm { v_star: ExactVector::zero(1, 2), generators: vec![g1, g2] })
            .expect("{±1, ±√2} is valid")
    }

    /// Single species with velocity `+1` in `d = 1`.
    pub fn single_plus() -> VelocitySet {
        build_velocity_set(SymbolBasis::rational(), VelocitySpec::Explicit(vec![ExactVector::from_integers(&[1], 1)]))
            .expect("valid")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn explicit(vs: &[&[i64]]) -> Result<VelocitySet, VelocityError> {
        build_velocity_set(
            SymbolBasis::rational(),
            VelocitySpec::Explicit(vs.iter().map(|v| ExactVector::from_integers(v, 1)).collect()),
        )
    }

    /// Independent count: brute force over 𝒱⁴ using numeric velocities.
    fn brute_force_quadruples(vel: &[Vec<f64>]) -> Vec<(usize, usize, usize, usize)> {
        let s = vel.len();
        let mut out = Vec::new();
        for a in 0..s {
            for b in 0..s {
                for c in 0..s {
                    for e in 0..s {
                        let distinct = a != b && c != e && a != c && a != e && b != c && b != e;
                        let closes = (0..vel[0].len()).all(|j| (vel[a][j] + vel[b][j] - vel[c][j] - vel[e][j]).abs() < 1e-9);
                        if distinct && closes {
                            out.push((a, b, c, e));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn model_one_d1_has_no_collisions() {
        let vs = model_one(1);
        assert_eq!(vs.len(), 2);
        assert_eq!(vs.velocity(0), &[1.0]);
        assert_eq!(vs.velocity(1), &[-1.0]);
        assert!(vs.collision_set().is_empty());
    }

    #[test]
    fn model_one_d2_has_eight_collisions() {
        let vs = explicit(&[&[1, 0], &[-1, 0], &[0, 1], &[0, -1]]).unwrap();
        let q = vs.collision_set();
        assert_eq!(q.len(), 8);
        for c in q {
            let (v, w) = (vs.velocity(c.v), vs.velocity(c.w));
            assert_eq!([v[0] + w[0], v[1] + w[1]], [0.0, 0.0]);
        }
        let numeric: Vec<Vec<f64>> = (0..4).map(|s| vs.velocity(s).to_vec()).collect();
        assert_eq!(brute_force_quadruples(&numeric).len(), 8);
    }

    #[test]
    fn root_two_collisions() {
        let vs = root_two();
        assert_eq!(vs.len(), 4);
        let q = Quadruple { v: 0, w: 1, v_out: 2, w_out: 3 };
        assert!(vs.collision_set().contains(&q));
        let numeric: Vec<Vec<f64>> = (0..4).map(|s| vs.velocity(s).to_vec()).collect();
        assert_eq!(brute_force_quadruples(&numeric).len(), vs.collision_set().len());
        // Collisions only between the members of a pair.
        let pf = vs.pair_form().unwrap();
        let pairs: Vec<[usize; 2]> = (0..pf.n()).map(|l| [pf.pair(l).0, pf.pair(l).1]).collect();
        for c in vs.collision_set() {
            let mut inc = c.incoming();
            inc.sort();
            let mut out = c.outgoing();
            out.sort();
            assert!(pairs.contains(&inc) && pairs.contains(&out));
            assert!((&(&vs.velocities()[c.v] + &vs.velocities()[c.w]) - &(&vs.velocities()[c.v_out] + &vs.velocities()[c.w_out])).is_zero());
        }
    }

    #[test]
    fn duplicate_and_empty_are_rejected() {
        assert_eq!(explicit(&[&[1], &[1]]).unwrap_err(), VelocityError::DuplicateVelocity { index: 1 });
        assert_eq!(explicit(&[]).unwrap_err(), VelocityError::EmptySet);
        let degenerate = build_velocity_set(
            SymbolBasis::rational(),
            VelocitySpec::PairForm {
                v_star: ExactVector::zero(1, 1),
                generators: vec![ExactVector::from_integers(&[1], 1), ExactVector::from_integers(&[-1], 1)],
            },
        );
        assert!(matches!(degenerate, Err(VelocityError::DegeneratePairForm { first: 0, second: 1 })));
    }

    fn pair(d: usize, gens: &[&[i64]]) -> VelocitySet {
        build_velocity_set(
            SymbolBasis::rational(),
            VelocitySpec::PairForm {
                v_star: ExactVector::zero(d, 1),
                generators: gens.iter().map(|g| ExactVector::from_integers(g, 1)).collect(),
            },
        )
        .unwrap()
    }

    #[test]
    fn span_checks() {
        assert_eq!(pair(2, &[&[1, 0], &[0, 1]]).check_span().unwrap(), SpanReport { spans: true, rank: 2 });
        assert_eq!(pair(2, &[&[1, 0], &[2, 0]]).check_span().unwrap(), SpanReport { spans: false, rank: 1 });
        assert_eq!(root_two().check_span().unwrap(), SpanReport { spans: true, rank: 1 });
        assert_eq!(single_plus().check_span().unwrap_err(), VelocityError::MissingPairForm);
    }

    #[test]
    fn integer_independence() {
        assert!(root_two().check_integer_independence().unwrap());
        assert!(!pair(1, &[&[1], &[2]]).check_integer_independence().unwrap());
        assert!(model_one(2).check_integer_independence().unwrap());
    }

    #[test]
    fn gram_reports() {
        let vs = model_one(1);
        assert_eq!(vs.gram(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]));
        assert!((vs.a_matrix().unwrap() - DMatrix::identity(2, 2)).amax() < 1e-14);
        let single = single_plus();
        assert!(!single.assumption_av_report().invertible);
        assert!(single.coupling().is_err());
        let m2 = model_one(2);
        assert_eq!(m2.gram(), &DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 2.0])));
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 1.0]));
        assert!((m2.a_matrix().unwrap() - want).amax() < 1e-14);
        for vs in [model_one(1), model_one(2), root_two()] {
            let prod = vs.a_matrix().unwrap() * vs.gram();
            let e = vs.dim() + 1;
            assert!((prod - DMatrix::identity(e, e) * 2.0).amax() < 1e-12);
        }
    }

    #[test]
    fn coupling_model_one() {
        let c = model_one(1).coupling().unwrap().clone();
        assert_eq!(c.get(0, 0, 1, 0), 2.0);
        assert_eq!(c.get(0, 1, 0, 0), 2.0);
        assert_eq!(c.get(0, 0, 0, 0), 0.0);
        assert_eq!(c.get(0, 1, 1, 0), 0.0);
        assert_eq!(c.get(1, 0, 0, 0), 2.0);
        assert_eq!(c.get(1, 1, 1, 0), 2.0);
        assert_eq!(c.get(1, 0, 1, 0), 0.0);
    }

    #[test]
    fn coupling_symmetric_in_ij() {
        for vs in [model_one(2), root_two()] {
            let c = vs.coupling().unwrap();
            let e = vs.dim() + 1;
            for k in 0..e {
                for i in 0..e {
                    for j in 0..e {
                        for l in 0..vs.dim() {
                            assert_eq!(c.get(k, i, j, l), c.get(k, j, i, l));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn p_star_and_big_p() {
        let vs = model_one(1);
        assert_eq!(vs.big_p(&[0.0, 0.0]), vs.p_star());
        assert_eq!(vs.p_star(), &[1.0, 0.0]);
        let p = vs.big_p(&[3f64.ln(), 0.0]);
        assert!((p[0] - 1.5).abs() < 1e-15 && p[1].abs() < 1e-15);
        let rt = root_two();
        assert_eq!(rt.render(rt.p_star_exact()), "(2, 0)");
    }

    #[test]
    fn jacobian_at_zero_is_quarter_gram() {
        for vs in [model_one(1), model_one(2), root_two()] {
            let e = vs.dim() + 1;
            let h = 1e-6;
            for c in 0..e {
                let mut lp = vec![0.0; e];
                let mut lm = vec![0.0; e];
                lp[c] = h;
                lm[c] = -h;
                let (pp, pm) = (vs.big_p(&lp), vs.big_p(&lm));
                for r in 0..e {
                    let fd = (pp[r] - pm[r]) / (2.0 * h);
                    assert!((fd - 0.25 * vs.gram()[(r, c)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn lambda_of_p_inverts() {
        let vs = model_one(1);
        let l = vs.lambda_of_p(vs.p_star()).unwrap();
        assert!(l.iter().all(|x| x.abs() < 1e-12));
        let l = vs.lambda_of_p(&[1.5, 0.0]).unwrap();
        assert!((l[0] - 3f64.ln()).abs() < 1e-10 && l[1].abs() < 1e-10);
        assert!(matches!(vs.lambda_of_p(&[2.5, 0.0]), Err(VelocityError::NewtonDiverged { .. })));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "dimension": 1,
            "symbols": {"s2": 1.4142135623730951},
            "pair_form": {"v_star": [["0", "0"]], "generators": [[["1", "0"]], [["0", "1"]]]}
        }"#;
        let vs = VelocitySet::from_json_str(text).unwrap();
        let reference = root_two();
        assert_eq!(vs.velocities(), reference.velocities());
        assert_eq!(vs.collision_set(), reference.collision_set());
        let explicit = r#"{"dimension": 2, "velocities": [["1","0"],["-1","0"],["0","1"],["0","-1"]]}"#;
        let vs = VelocitySet::from_json_str(explicit).unwrap();
        assert_eq!(vs.collision_set().len(), 8);
        assert!(vs.pair_form().is_none());
        assert!(VelocitySet::from_json_str(r#"{"dimension": 1}"#).is_err());
    }

    #[test]
    fn kappa_values() {
        assert_eq!(model_one(1).kappa(), Some(5));
        assert_eq!(root_two().kappa(), Some(7));
        assert!((model_one(1).a_bound().unwrap() - 1.0 / 7.0).abs() < 1e-15);
    }
}
