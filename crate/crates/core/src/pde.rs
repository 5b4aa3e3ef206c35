//! Method-of-lines solver for the incompressible-limit system
//!
//! ```text
//! ∂_t φ_k = Σ_{i,j,l} C_kijl φ_i ∂_l φ_j + Δφ_k,    k = 0, …, d,
//! ```
//!
//! on the periodic unit torus, with central differences in space and classic
//! RK4 in time.

use rayon::prelude::*;
use thiserror::Error;

use crate::measure::FourierField;
use crate::scalar::Real;
use crate::velocity::{VelocityError, VelocitySet};

/// Default `dt / h²`.
pub const DEFAULT_CFL: f64 = 0.2;

/// Grids with at least this many points evaluate the right-hand side in parallel.
const PARALLEL_SITES: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("non-finite value at t = {t} (step {step})")]
    BlowUpDetected { t: f64, step: usize },
    #[error("grid side must be at least 3, got {0}")]
    InvalidGrid(usize),
    #[error("end time {0} is before the current time")]
    BadEndTime(f64),
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Velocity(#[from] VelocityError),
}

/// Field `φ: 𝕋^d → ℝ^{d+1}` sampled at `u_x = x / G`.
///
/// Values are component-major: `values[k · G^d + x]`, with grid points
/// row-major and coordinate 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeState<T: Real> {
    d: usize,
    g: usize,
    t: f64,
    values: Vec<T>,
    coupling: Vec<(usize, usize, usize, usize, T)>,
}

pub type PdeState64 = PdeState<f64>;
pub type PdeState32 = PdeState<f32>;

impl<T: Real> PdeState<T> {
    /// State sampled from `phi0`, coupled through the `C` tensor of `vs`.
    pub fn new(vs: &VelocitySet, g: usize, phi0: &FourierField) -> Result<Self, PdeError> {
        let coupling = vs.coupling()?.nonzeros().into_iter().map(|(k, i, j, l, c)| (k, i, j, l, T::of(c))).collect();
        let mut s = Self::pure_diffusion(vs.dim(), g)?;
        s.coupling = coupling;
        s.values = s.sample(phi0);
        Ok(s)
    }

    /// Zero field with the nonlinear coupling switched off.
    pub fn pure_diffusion(d: usize, g: usize) -> Result<Self, PdeError> {
        if g < 3 {
            return Err(PdeError::InvalidGrid(g));
        }
        Ok(Self { d, g, t: 0.0, values: vec![T::zero(); (d + 1) * g.pow(d as u32)], coupling: Vec::new() })
    }

    /// Drop the nonlinear term.
    pub fn without_coupling(mut self) -> Self {
        self.coupling.clear();
        self
    }

    pub fn with_values(mut self, values: Vec<T>) -> Result<Self, PdeError> {
        if values.len() != self.values.len() {
            return Err(PdeError::ShapeMismatch { expected: self.values.len(), got: values.len() });
        }
        self.values = values;
        Ok(self)
    }

    pub fn with_field(mut self, phi: &FourierField) -> Self {
        self.values = self.sample(phi);
        self
    }

    fn sample(&self, phi: &FourierField) -> Vec<T> {
        let n = self.sites();
        let mut out = vec![T::zero(); self.values.len()];
        for x in 0..n {
            let v = phi.eval(&self.point(x), self.d + 1);
            for (k, vk) in v.into_iter().enumerate() {
                out[k * n + x] = vk;
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> usize {
        self.g
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.g as f64
    }

    pub fn sites(&self) -> usize {
        self.g.pow(self.d as u32)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn component(&self, k: usize) -> &[T] {
        let n = self.sites();
        &self.values[k * n..(k + 1) * n]
    }

    /// Coordinates of grid point `x`.
    pub fn point(&self, x: usize) -> Vec<T> {
        let mut rest = x;
        (0..self.d)
            .map(|_| {
                let c = rest % self.g;
                rest /= self.g;
                T::of(c as f64 / self.g as f64)
            })
            .collect()
    }

    fn neighbor(&self, x: usize, axis: usize, up: bool) -> usize {
        let stride = self.g.pow(axis as u32);
        let c = (x / stride) % self.g;
        let c2 = if up { (c + 1) % self.g } else { (c + self.g - 1) % self.g };
        x - c * stride + c2 * stride
    }

    /// `Σ C_kijl φ_i D_l φ_j + Δ_h φ_k` at every grid point.
    pub fn rhs(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.values.len()];
        self.rhs_into(&self.values, &mut out);
        out
    }

    fn rhs_into(&self, phi: &[T], out: &mut [T]) {
        let n = self.sites();
        let e = self.d + 1;
        let inv_h = T::of(self.g as f64);
        let inv_h2 = inv_h * inv_h;
        let half_inv_h = T::of(0.5) * inv_h;
        let two_d = T::of(2.0 * self.d as f64);
        let parallel = n >= PARALLEL_SITES;
        let fill = |dst: &mut [T], f: &(dyn Fn(usize) -> T + Sync)| {
            if parallel {
                dst.par_iter_mut().enumerate().for_each(|(x, o)| *o = f(x));
            } else {
                dst.iter_mut().enumerate().for_each(|(x, o)| *o = f(x));
            }
        };
        // Laplacian, component by component.
        for k in 0..e {
            let c = &phi[k * n..(k + 1) * n];
            fill(&mut out[k * n..(k + 1) * n], &|x| {
                let mut acc = -two_d * c[x];
                for l in 0..self.d {
                    acc = acc + c[self.neighbor(x, l, true)] + c[self.neighbor(x, l, false)];
                }
                acc * inv_h2
            });
        }
        if self.coupling.is_empty() {
            return;
        }
        // Central differences D_l φ_j, stored at grad[(j·d + l)·n + x].
        let mut grad = vec![T::zero(); e * self.d * n];
        for j in 0..e {
            let c = &phi[j * n..(j + 1) * n];
            for l in 0..self.d {
                let at = (j * self.d + l) * n;
                fill(&mut grad[at..at + n], &|x| {
                    (c[self.neighbor(x, l, true)] - c[self.neighbor(x, l, false)]) * half_inv_h
                });
            }
        }
        for &(k, i, j, l, coef) in &self.coupling {
            let a = &phi[i * n..(i + 1) * n];
            let b = &grad[(j * self.d + l) * n..(j * self.d + l + 1) * n];
            for (x, o) in out[k * n..(k + 1) * n].iter_mut().enumerate() {
                *o = *o + coef * a[x] * b[x];
            }
        }
    }

    /// One classic RK4 step of size `dt`.
    pub fn rk4_step(&mut self, dt: f64) {
        let h = T::of(dt);
        let half = T::of(0.5) * h;
        let len = self.values.len();
        let mut k1 = vec![T::zero(); len];
        let mut k2 = vec![T::zero(); len];
        let mut k3 = vec![T::zero(); len];
        let mut k4 = vec![T::zero(); len];
        self.rhs_into(&self.values, &mut k1);
        let stage: Vec<T> = self.values.iter().zip(&k1).map(|(&y, &k)| y + half * k).collect();
        self.rhs_into(&stage, &mut k2);
        let stage: Vec<T> = self.values.iter().zip(&k2).map(|(&y, &k)| y + half * k).collect();
        self.rhs_into(&stage, &mut k3);
        let stage: Vec<T> = self.values.iter().zip(&k3).map(|(&y, &k)| y + h * k).collect();
        self.rhs_into(&stage, &mut k4);
        let sixth = h / T::of(6.0);
        for i in 0..len {
            self.values[i] = self.values[i] + sixth * (k1[i] + T::of(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        self.t += dt;
    }

    /// Advance to `t_end` with steps of at most `cfl · h²`.
    pub fn advance(&mut self, t_end: f64, cfl: f64) -> Result<usize, PdeError> {
        let span = t_end - self.t;
        if span < -1e-15 {
            return Err(PdeError::BadEndTime(t_end));
        }
        if span <= 0.0 {
            return Ok(0);
        }
        let h = self.spacing();
        let steps = (span / (cfl * h * h)).ceil() as usize;
        let dt = span / steps as f64;
        let start = self.t;
        for s in 0..steps {
            self.rk4_step(dt);
            if self.values.iter().any(|v| !v.is_finite()) {
                return Err(PdeError::BlowUpDetected { t: self.t, step: s + 1 });
            }
        }
        // Land exactly on t_end.
        self.t = start + span;
        Ok(steps)
    }

    /// `∫ F·φ du` by the periodic midpoint rule.
    pub fn functional(&self, f: &FourierField) -> f64 {
        let n = self.sites();
        let e = self.d + 1;
        let mut total = 0.0;
        for x in 0..n {
            let fx = f.eval(&self.point(x), e);
            for k in 0..e {
                total += fx[k].to_f64_lossy() * self.values[k * n + x].to_f64_lossy();
            }
        }
        total / n as f64
    }

    /// Discrete spatial mean of component `k`.
    pub fn mean(&self, k: usize) -> f64 {
        self.component(k).iter().map(|v| v.to_f64_lossy()).sum::<f64>() / self.sites() as f64
    }
}

/// Functional values along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSeries {
    pub times: Vec<f64>,
    /// `values[t][f]`.
    pub values: Vec<Vec<f64>>,
}

/// Integrate through the given output times (sorted, `≥` the current time) and
/// record `∫ F·φ` for every functional at each of them.
pub fn integrate<T: Real>(
    state: &mut PdeState<T>,
    times: &[f64],
    functionals: &[FourierField],
    cfl: f64,
) -> Result<FunctionalSeries, PdeError> {
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        state.advance(t, cfl)?;
        values.push(functionals.iter().map(|f| state.functional(f)).collect());
    }
    Ok(FunctionalSeries { times: times.to_vec(), values })
}

/// Max-norm distance between a coarse solution and a finer one sampled at the
/// coarse grid points.
pub fn restricted_distance<T: Real>(coarse: &PdeState<T>, fine: &PdeState<T>) -> Option<f64> {
    if coarse.d != fine.d || !fine.g.is_multiple_of(coarse.g) {
        return None;
    }
    let r = fine.g / coarse.g;
    let (nc, nf) = (coarse.sites(), fine.sites());
    let mut worst: f64 = 0.0;
    for x in 0..nc {
        let mut rest = x;
        let mut y = 0;
        let mut stride = 1;
        for _ in 0..coarse.d {
            y += (rest % coarse.g) * r * stride;
            rest /= coarse.g;
            stride *= fine.g;
        }
        for k in 0..=coarse.d {
            let diff = (coarse.values[k * nc + x] - fine.values[k * nf + y]).to_f64_lossy().abs();
            worst = worst.max(diff);
        }
    }
    Some(worst)
}
