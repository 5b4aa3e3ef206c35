//! Ensemble-versus-PDE comparison runs.
//!
//! For every lattice size `N` the harness samples `R` replicas from the
//! slowly varying product measure built from `φ(0)`, runs the exact dynamics
//! to each report time and averages the empirical fields
//! `N^{a−d} Σ_x F(x/N)·[𝐈(η_x) − p_*]`. The PDE is solved once on its own grid.
//! Replicas are independent RNG streams, so results do not depend on the
//! number of worker threads.

mod config;
mod report;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{preset, ExperimentConfig, Functional, Regime, VelocitySource};
pub use report::{convergence_audit, emit_reports, parse_csv, render_svg, write_csv, Manifest, CSV_HEADER};

use crate::dynamics::{run, DynamicsError, FieldProbe, SimParams};
use crate::lattice::Torus;
use crate::measure::{lambda_field_from_phi, sample, MeasureError, PerturbationField};
use crate::pde::{integrate, PdeError, PdeState64};
use crate::rng::stream;
use crate::velocity::{VelocityError, VelocitySet};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Parse(String),
    #[error(transparent)]
    Velocity(#[from] VelocityError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("N = {n}: {source}")]
    Dynamics {
        n: usize,
        #[source]
        source: DynamicsError,
    },
    #[error(transparent)]
    Pde(#[from] PdeError),
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub n: usize,
    pub t: f64,
    pub functional_id: String,
    pub mean: f64,
    pub stderr: f64,
    pub pde_value: f64,
    /// `|mean − pde_value|`.
    pub gap: f64,
    /// `gap / stderr`.
    pub gap_in_se: f64,
}

impl ComparisonRow {
    pub fn new(n: usize, t: f64, functional_id: String, mean: f64, stderr: f64, pde_value: f64) -> Self {
        let gap = (mean - pde_value).abs();
        let gap_in_se = if gap == 0.0 { 0.0 } else { gap / stderr };
        Self { n, t, functional_id, mean, stderr, pde_value, gap, gap_in_se }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub tag: Regime,
    /// Wall time per lattice size, seconds.
    pub wall_seconds: Vec<(usize, f64)>,
    /// Accepted events summed over replicas, per lattice size.
    pub events: Vec<(usize, u64)>,
}

impl ComparisonReport {
    pub fn row(&self, n: usize, t: f64, functional_id: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.n == n && r.t == t && r.functional_id == functional_id)
    }
}

/// `values[replica][time][functional]`.
pub type Samples = Vec<Vec<Vec<f64>>>;

/// Empirical-field samples for one `N`, with the accepted-event count.
pub fn ensemble(cfg: &ExperimentConfig, vs: &VelocitySet, n: usize) -> Result<(Samples, u64), HarnessError> {
    let times = cfg.report_times();
    let params = SimParams::new(vs, n, cfg.a, cfg.t_end, times.clone()).map_err(|source| HarnessError::Dynamics { n, source })?;
    let field = lambda_field_from_phi(vs, &PerturbationField::new(cfg.phi.clone(), cfg.a)?, n)?;
    let torus = Torus::new(vs.dim(), n).map_err(|_| HarnessError::Config(format!("invalid torus side {n}")))?;
    let probes: Vec<FieldProbe> = cfg.functionals.iter().map(|f| FieldProbe::new(vs, &torus, cfg.a, &f.field)).collect();
    let results: Vec<Result<_, DynamicsError>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, "replica", n as u64, r);
            let initial = sample(&field, vs, &mut rng);
            let mut rows = Vec::with_capacity(times.len());
            let counters = run(&params, &initial, &mut rng, |_, c| rows.push(probes.iter().map(|p| p.eval(c)).collect()))?;
            Ok((rows, counters.exchange_accepts + counters.collision_accepts))
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut events = 0;
    for res in results {
        let (rows, ev) = res.map_err(|source| HarnessError::Dynamics { n, source })?;
        samples.push(rows);
        events += ev;
    }
    Ok((samples, events))
}

/// `∫ F·φ(t)` for each report time and functional.
pub fn pde_values(cfg: &ExperimentConfig, vs: &VelocitySet) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut state = PdeState64::new(vs, cfg.grid, &cfg.phi)?;
    let fields: Vec<_> = cfg.functionals.iter().map(|f| f.field.clone()).collect();
    Ok(integrate(&mut state, &cfg.report_times(), &fields, cfg.cfl)?.values)
}

/// Mean and standard error of the mean, summed in index order.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

pub fn run_comparison(cfg: &ExperimentConfig, vs: &VelocitySet) -> Result<ComparisonReport, HarnessError> {
    let tag = cfg.validate(vs)?;
    let times = cfg.report_times();
    let pde = pde_values(cfg, vs)?;
    let mut rows = Vec::new();
    let mut wall_seconds = Vec::new();
    let mut events = Vec::new();
    for &n in &cfg.n_list {
        let start = Instant::now();
        let (samples, ev) = ensemble(cfg, vs, n)?;
        for (ti, &t) in times.iter().enumerate() {
            for (fi, f) in cfg.functionals.iter().enumerate() {
                let xs: Vec<f64> = samples.iter().map(|s| s[ti][fi]).collect();
                let (mean, se) = mean_and_stderr(&xs);
                rows.push(ComparisonRow::new(n, t, f.id.clone(), mean, se, pde[ti][fi]));
            }
        }
        wall_seconds.push((n, start.elapsed().as_secs_f64()));
        events.push((n, ev));
    }
    Ok(ComparisonReport { rows, tag, wall_seconds, events })
}
