//! Product Bernoulli measures with slowly varying chemical potentials.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Configuration, Torus};
use crate::scalar::{log1p_exp, theta, Real};
use crate::velocity::{VelocityError, VelocitySet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("scaling exponent a = {0} is outside (0, 1)")]
    InvalidExponent(f64),
    #[error("inverse of P failed at site {site} for p = {p:?}: {source}")]
    NewtonDiverged {
        site: usize,
        p: Vec<f64>,
        #[source]
        source: VelocityError,
    },
    #[error("field has {got} components per point, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One term `re·cos(2πk·u) + im·sin(2πk·u)` of a vector-valued Fourier series.
/// An empty coefficient list means zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: Vec<i64>,
    #[serde(default)]
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

/// Finite Fourier series `𝕋^d → ℝ^m`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FourierField {
    pub modes: Vec<FourierMode>,
}

impl FourierField {
    pub fn new(modes: Vec<FourierMode>) -> Self {
        Self { modes }
    }

    /// Single mode with cosine coefficients only.
    pub fn cosine(k: Vec<i64>, re: Vec<f64>) -> Self {
        let im = vec![0.0; re.len()];
        Self { modes: vec![FourierMode { k, re, im }] }
    }

    pub fn sine(k: Vec<i64>, im: Vec<f64>) -> Self {
        let re = vec![0.0; im.len()];
        Self { modes: vec![FourierMode { k, re, im }] }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Check that every mode has wave-vector length `d` and `m` coefficients.
    pub fn validate(&self, d: usize, m: usize) -> Result<(), MeasureError> {
        for mode in &self.modes {
            if mode.k.len() != d {
                return Err(MeasureError::DimensionMismatch { expected: d, got: mode.k.len() });
            }
            for c in [&mode.re, &mode.im] {
                if !c.is_empty() && c.len() != m {
                    return Err(MeasureError::DimensionMismatch { expected: m, got: c.len() });
                }
            }
        }
        Ok(())
    }

    /// Value at `u ∈ 𝕋^d`, with `m` output components.
    pub fn eval<T: Real>(&self, u: &[T], m: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m];
        for mode in &self.modes {
            let phase = T::of(2.0) * T::PI() * mode.k.iter().zip(u).fold(T::zero(), |s, (k, x)| s + T::of(*k as f64) * *x);
            let (s, c) = phase.sin_cos();
            for (i, o) in out.iter_mut().enumerate() {
                let re = mode.re.get(i).copied().unwrap_or(0.0);
                let im = mode.im.get(i).copied().unwrap_or(0.0);
                *o = *o + T::of(re) * c + T::of(im) * s;
            }
        }
        out
    }

    /// `∫_{𝕋^d} self·other du`, exact by orthogonality of the modes.
    pub fn inner(&self, other: &FourierField, m: usize) -> f64 {
        let mut total = 0.0;
        for a in &self.modes {
            for b in &other.modes {
                let coef = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
                let same = a.k == b.k;
                let opposite = a.k.iter().zip(&b.k).all(|(x, y)| *x == -*y);
                let zero = a.k.iter().all(|x| *x == 0);
                for i in 0..m {
                    let (ar, ai, br, bi) = (coef(&a.re, i), coef(&a.im, i), coef(&b.re, i), coef(&b.im, i));
                    if zero {
                        if b.k.iter().all(|x| *x == 0) {
                            total += ar * br;
                        }
                    } else if same {
                        total += 0.5 * (ar * br + ai * bi);
                    } else if opposite {
                        total += 0.5 * (ar * br - ai * bi);
                    }
                }
            }
        }
        total
    }
}

/// `φ` together with its scaling exponent `a ∈ (0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationField {
    phi: FourierField,
    a: f64,
}

impl PerturbationField {
    pub fn new(phi: FourierField, a: f64) -> Result<Self, MeasureError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(MeasureError::InvalidExponent(a));
        }
        Ok(Self { phi, a })
    }

    pub fn phi(&self) -> &FourierField {
        &self.phi
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Whether `a < d/(κ+2d)` for the velocity set; `None` without a pair form.
    pub fn in_theorem_regime(&self, vs: &VelocitySet) -> Option<bool> {
        vs.a_bound().map(|b| self.a < b)
    }
}

/// Per-site chemical potential `λ(x) ∈ ℝ^{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    torus: Torus,
    width: usize,
    values: Vec<f64>,
}

impl PotentialField {
    pub fn constant(torus: Torus, lambda: &[f64]) -> Self {
        let values = lambda.iter().copied().cycle().take(lambda.len() * torus.sites()).collect();
        Self { width: lambda.len(), torus, values }
    }

    pub fn from_sites(torus: Torus, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * torus.sites());
        Self { torus, width, values }
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn at(&self, x: usize) -> &[f64] {
        &self.values[x * self.width..(x + 1) * self.width]
    }

    /// `θ(λ(x)·𝐯)` for every species.
    pub fn densities(&self, vs: &VelocitySet, x: usize) -> Vec<f64> {
        (0..vs.len()).map(|v| theta(dot(self.at(x), vs.lifted(v)))).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `λ(x) = Λ(p_* + N^{−a} φ(x/N))` on the torus of side `n`.
pub fn lambda_field_from_phi(vs: &VelocitySet, phi: &PerturbationField, n: usize) -> Result<PotentialField, MeasureError> {
    let e = vs.dim() + 1;
    phi.phi.validate(vs.dim(), e)?;
    let torus = Torus::new(vs.dim(), n).expect("valid torus");
    let scale = (n as f64).powf(-phi.a);
    let mut values = Vec::with_capacity(e * torus.sites());
    for x in 0..torus.sites() {
        let u: Vec<f64> = torus.coord(x).iter().map(|&c| c as f64 / n as f64).collect();
        let p: Vec<f64> = vs.p_star().iter().zip(phi.phi.eval(&u, e)).map(|(ps, f)| ps + scale * f).collect();
        let lambda = vs.lambda_of_p(&p).map_err(|source| MeasureError::NewtonDiverged { site: x, p: p.clone(), source })?;
        values.extend(lambda);
    }
    Ok(PotentialField { torus, width: e, values })
}

/// Independent Bernoulli(`θ(λ(x)·𝐯)`) occupancy for every `(x, v)`.
pub fn sample<R: Rng + ?Sized>(field: &PotentialField, vs: &VelocitySet, rng: &mut R) -> Configuration {
    let mut cfg = Configuration::empty(field.torus.clone(), vs.len());
    for v in 0..vs.len() {
        for x in 0..field.torus.sites() {
            let p = theta(dot(field.at(x), vs.lifted(v)));
            if rng.random::<f64>() < p {
                cfg.set(x, v, true);
            }
        }
    }
    cfg
}

/// `ln μ_λ(η) = Σ_{x,v} [η ln θ + (1 − η) ln(1 − θ)]`.
pub fn log_weight(cfg: &Configuration, field: &PotentialField, vs: &VelocitySet) -> f64 {
    let mut total = 0.0;
    for x in 0..field.torus.sites() {
        for v in 0..vs.len() {
            let alpha = dot(field.at(x), vs.lifted(v));
            // ln θ(α) = −ln(1 + e^{−α}), ln(1 − θ(α)) = −ln(1 + e^{α})
            total -= if cfg.get(x, v) { log1p_exp(-alpha) } else { log1p_exp(alpha) };
        }
    }
    total
}

/// Relative entropy `H(μ_{λ₁} | μ_{λ₂})` of two product measures.
pub fn product_relative_entropy(f1: &PotentialField, f2: &PotentialField, vs: &VelocitySet) -> f64 {
    let mut h = 0.0;
    for x in 0..f1.torus.sites() {
        for v in 0..vs.len() {
            let a1 = dot(f1.at(x), vs.lifted(v));
            let a2 = dot(f2.at(x), vs.lifted(v));
            let t1 = theta(a1);
            // Bernoulli KL in natural parameters: θ₁(α₁ − α₂) − ln(1+e^{α₁}) + ln(1+e^{α₂})
            h += t1 * (a1 - a2) - log1p_exp(a1) + log1p_exp(a2);
        }
    }
    h.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::velocity::presets::{model_one, root_two};

    #[test]
    fn zero_phi_gives_zero_lambda() {
        let vs = root_two();
        let phi = PerturbationField::new(FourierField::zero(), 0.3).unwrap();
        let f = lambda_field_from_phi(&vs, &phi, 16).unwrap();
        assert!(f.values.iter().all(|x| x.abs() < 1e-12));
        assert!(PerturbationField::new(FourierField::zero(), 1.0).is_err());
    }

    #[test]
    fn lambda_field_inverts_p() {
        let vs = model_one(1);
        let phi = FourierField::new(vec![
            FourierMode { k: vec![1], re: vec![0.8, 0.0], im: vec![0.0, 0.5] },
            FourierMode { k: vec![2], re: vec![0.0, -0.3], im: vec![0.2, 0.0] },
        ]);
        let pf = PerturbationField::new(phi.clone(), 0.25).unwrap();
        let n = 32;
        let f = lambda_field_from_phi(&vs, &pf, n).unwrap();
        for x in 0..n {
            let p = vs.big_p(f.at(x));
            let want = phi.eval(&[x as f64 / n as f64], 2);
            for i in 0..2 {
                let target = vs.p_star()[i] + (n as f64).powf(-0.25) * want[i];
                assert!((p[i] - target).abs() < 1e-10);
            }
        }
        let constant = lambda_field_from_phi(&vs, &PerturbationField::new(FourierField::cosine(vec![0], vec![0.4, 0.1]), 0.5).unwrap(), 8).unwrap();
        assert!((0..8).all(|x| constant.at(x) == constant.at(0)));
    }

    #[test]
    fn log_weight_of_uniform_measure() {
        let vs = root_two();
        let t = Torus::new(1, 3).unwrap();
        let f = PotentialField::constant(t.clone(), &[0.0, 0.0]);
        let mut cfg = Configuration::empty(t, 4);
        cfg.set(1, 2, true);
        assert!((log_weight(&cfg, &f, &vs) + 12.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_weight_normalizes_and_depends_on_i_field() {
        let vs = root_two();
        let t = Torus::new(1, 3).unwrap();
        let f = PotentialField::from_sites(t.clone(), 2, vec![0.3, -0.2, -0.4, 0.1, 0.05, 0.6]);
        let total: f64 = (0..1u64 << 12)
            .map(|i| log_weight(&Configuration::from_index(t.clone(), 4, i), &f, &vs).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        // {+1,−1} and {+√2,−√2} at a site have the same 𝐈 = (2, 0).
        let mut a = Configuration::empty(t.clone(), 4);
        a.set(0, 0, true);
        a.set(0, 1, true);
        let mut b = Configuration::empty(t, 4);
        b.set(0, 2, true);
        b.set(0, 3, true);
        assert!((log_weight(&a, &f, &vs) - log_weight(&b, &f, &vs)).abs() < 1e-12);
    }

    #[test]
    fn sampling_saturates() {
        let vs = model_one(1);
        let t = Torus::new(1, 50).unwrap();
        let f = PotentialField::constant(t, &[50.0, 0.0]);
        let cfg = sample(&f, &vs, &mut stream(1, "t", 0, 0));
        assert_eq!(cfg.counts(), &[50, 50]);
    }

    #[test]
    fn relative_entropy_basics() {
        let vs = root_two();
        let t = Torus::new(1, 8).unwrap();
        let mut rng = stream(3, "t", 0, 0);
        for _ in 0..20 {
            let v1: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v2: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f1 = PotentialField::from_sites(t.clone(), 2, v1);
            let f2 = PotentialField::from_sites(t.clone(), 2, v2);
            assert!(product_relative_entropy(&f1, &f2, &vs) >= 0.0);
            assert_eq!(product_relative_entropy(&f1, &f1, &vs), 0.0);
        }
    }

    #[test]
    fn fourier_inner_products() {
        let c1 = FourierField::cosine(vec![1], vec![1.0, 0.0]);
        let s1 = FourierField::sine(vec![1], vec![1.0, 0.0]);
        let c2 = FourierField::cosine(vec![2], vec![1.0, 0.0]);
        assert!((c1.inner(&c1, 2) - 0.5).abs() < 1e-15);
        assert_eq!(c1.inner(&s1, 2), 0.0);
        assert_eq!(c1.inner(&c2, 2), 0.0);
        let cm1 = FourierField::cosine(vec![-1], vec![2.0, 0.0]);
        assert!((c1.inner(&cm1, 2) - 1.0).abs() < 1e-15);
        // Midpoint quadrature agrees.
        let m = 64;
        let q: f64 = (0..m)
            .map(|i| {
                let u = [i as f64 / m as f64];
                let a = c1.eval(&u, 2);
                let b = cm1.eval(&u, 2);
                a[0] * b[0]
            })
            .sum::<f64>()
            / m as f64;
        assert!((q - 1.0).abs() < 1e-12);
    }
}
