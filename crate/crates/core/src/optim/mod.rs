//! Minimizers over a value-and-gradient oracle.

mod adam;
mod ncg;

use std::io::Write;
use std::path::Path;

pub use adam::{minimize_adam, AdamConfig};
pub use ncg::{minimize_ncg, NcgConfig};

use crate::error::{Error, Result};
use crate::objective::Objective;

/// Something that can be minimized by [`minimize_ncg`].
pub trait Oracle {
    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Oracle for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(params)
    }
}

impl Oracle for Objective {
    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        Objective::value_and_grad(self, params).map(|r| (r.total, r.gradient))
    }
}

/// An oracle that can also be evaluated on a subset of its samples.
pub trait MinibatchOracle: Oracle {
    fn num_samples(&self) -> usize;
    fn batch_value_and_grad(&self, params: &[f64], indices: &[usize]) -> Result<(f64, Vec<f64>)>;
}

impl MinibatchOracle for Objective {
    fn num_samples(&self) -> usize {
        self.len()
    }

    fn batch_value_and_grad(&self, params: &[f64], indices: &[usize]) -> Result<(f64, Vec<f64>)> {
        let view = self.minibatch_view(indices)?;
        Objective::value_and_grad(&view, params).map(|r| (r.total, r.gradient))
    }
}

/// Central differences `(J(x + h e_k) - J(x - h e_k)) / 2h` for each coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, params: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step {h} must be > 0")));
    }
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|k| {
            probe[k] = params[k] + h;
            let plus = f(&probe)?;
            probe[k] = params[k] - h;
            let minus = f(&probe)?;
            probe[k] = params[k];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Elementwise `|a - b| / max(|a|, |b|, floor)`, maximized over coordinates.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
    TooManyFailures,
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    /// Step multiplier along the search direction (NCG) or step size (ADAM).
    pub step: f64,
    /// Cumulative oracle evaluations.
    pub evaluations: usize,
    pub line_search: Option<LineSearchRecord>,
}

/// State of a successful NCG line search, enough to re-check the Wolfe conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchRecord {
    pub start_value: f64,
    /// Directional derivative at the start of the search.
    pub start_slope: f64,
    pub end_value: f64,
    pub end_slope: f64,
    pub step: f64,
}

impl LineSearchRecord {
    pub fn satisfies_wolfe(&self, sufficient_decrease: f64, curvature: f64) -> bool {
        self.end_value <= self.start_value + sufficient_decrease * self.step * self.start_slope
            && self.end_slope.abs() <= -curvature * self.start_slope
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptTrace {
    pub records: Vec<TraceRecord>,
    pub evaluations: usize,
    pub termination: Termination,
}

impl OptTrace {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            evaluations: 0,
            termination: Termination::MaxIterations,
        }
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.value)
    }

    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].value <= w[0].value)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,value,grad_norm,step,evaluations")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{}",
                r.iteration, r.value, r.grad_norm, r.step, r.evaluations
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub params: Vec<f64>,
    pub value: f64,
    pub trace: OptTrace,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn all_finite(v: f64, g: &[f64]) -> bool {
    v.is_finite() && g.iter().all(|x| x.is_finite())
}
