//! Polak-Ribiere nonlinear conjugate gradient.
//!
//! The line search brackets a step with cubic extrapolation, then refines it
//! with quadratic/cubic interpolation until the strong Wolfe conditions hold.
//! When a search fails the best point seen so far is kept and the direction
//! is reset to steepest descent; two consecutive failures end the run.

use super::{all_finite, dot, norm, LineSearchRecord, OptResult, OptTrace, Oracle, Termination, TraceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcgConfig {
    /// Budget in line searches.
    pub max_iterations: usize,
    /// Wolfe sufficient-decrease constant `c1`.
    pub sufficient_decrease: f64,
    /// Strong Wolfe curvature constant `c2`.
    pub curvature: f64,
    /// Maximum growth of the step during extrapolation.
    pub extrapolation: f64,
    /// Minimal relative distance of a new trial from the bracket ends.
    pub interpolation_guard: f64,
    pub max_evaluations_per_search: usize,
    /// Cap on the growth of the initial step between searches.
    pub max_slope_ratio: f64,
    /// Stop when the gradient norm drops to this value.
    pub gradient_tolerance: f64,
    /// Reset to steepest descent when the PR coefficient is negative.
    pub restart_on_negative_beta: bool,
}

impl Default for NcgConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1500,
            sufficient_decrease: 0.01,
            curvature: 0.5,
            extrapolation: 3.0,
            interpolation_guard: 0.1,
            max_evaluations_per_search: 20,
            max_slope_ratio: 100.0,
            gradient_tolerance: 1e-12,
            restart_on_negative_beta: true,
        }
    }
}

impl NcgConfig {
    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    fn validate(&self) -> Result<()> {
        let (c1, c2) = (self.sufficient_decrease, self.curvature);
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "line search constants must satisfy 0 < c1 < c2 < 1, got {c1}, {c2}"
            )));
        }
        if self.extrapolation <= 1.0 || self.max_evaluations_per_search == 0 {
            return Err(Error::InvalidArgument("invalid line search budget".into()));
        }
        if !(0.0 < self.interpolation_guard && self.interpolation_guard < 0.5) {
            return Err(Error::InvalidArgument("interpolation guard must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

pub fn minimize_ncg<O: Oracle + ?Sized>(oracle: &O, start: &[f64], cfg: &NcgConfig) -> Result<OptResult> {
    cfg.validate()?;
    let rho = cfg.sufficient_decrease;
    let sig = cfg.curvature;
    let int = cfg.interpolation_guard;
    let ext = cfg.extrapolation;

    let mut trace = OptTrace::new();
    let (mut f0, mut df0) = oracle.value_and_grad(start)?;
    trace.evaluations += 1;
    if !all_finite(f0, &df0) {
        return Err(Error::Domain("objective is not finite at the starting point".into()));
    }
    if df0.len() != start.len() {
        return Err(Error::DimensionMismatch("gradient length differs from parameters".into()));
    }
    trace.records.push(TraceRecord {
        iteration: 0,
        value: f0,
        grad_norm: norm(&df0),
        step: 0.0,
        evaluations: 1,
        line_search: None,
    });

    // Failed evaluations count against the search budget and read as +inf.
    let eval = |x: &[f64], trace: &mut OptTrace| -> Option<(f64, Vec<f64>)> {
        trace.evaluations += 1;
        match oracle.value_and_grad(x) {
            Ok((f, g)) if all_finite(f, &g) => Some((f, g)),
            _ => None,
        }
    };

    let mut x = start.to_vec();
    let mut s: Vec<f64> = df0.iter().map(|g| -g).collect();
    let mut d0 = -dot(&s, &s);
    let mut x3 = 1.0 / (1.0 - d0);
    let mut ls_failed = false;
    let mut iteration = 0;
    trace.termination = Termination::MaxIterations;

    while iteration < cfg.max_iterations {
        if norm(&df0) <= cfg.gradient_tolerance {
            trace.termination = Termination::Converged;
            break;
        }
        iteration += 1;

        let (mut best_x, mut best_f, mut best_g) = (x.clone(), f0, df0.clone());
        let mut budget = cfg.max_evaluations_per_search;

        let (mut x2, mut f2, mut d2);
        let mut f3;
        let mut df3;
        let mut d3;
        // Extrapolation: grow the step until the slope turns or the decrease stalls.
        loop {
            x2 = 0.0;
            f2 = f0;
            d2 = d0;
            f3 = f0;
            df3 = df0.clone();
            let mut success = false;
            while !success && budget > 0 {
                budget -= 1;
                match eval(&axpy(&x, x3, &s), &mut trace) {
                    Some((f, g)) => {
                        f3 = f;
                        df3 = g;
                        success = true;
                    }
                    None => x3 = 0.5 * (x2 + x3),
                }
            }
            if f3 < best_f {
                best_x = axpy(&x, x3, &s);
                best_f = f3;
                best_g = df3.clone();
            }
            d3 = dot(&df3, &s);
            if d3 > sig * d0 || f3 > f0 + x3 * rho * d0 || budget == 0 {
                break;
            }
            let (x1, f1, d1) = (x2, f2, d2);
            x2 = x3;
            f2 = f3;
            d2 = d3;
            let a = 6.0 * (f1 - f2) + 3.0 * (d2 + d1) * (x2 - x1);
            let b = 3.0 * (f2 - f1) - (2.0 * d1 + d2) * (x2 - x1);
            let disc = b * b - a * d1 * (x2 - x1);
            let candidate = x1 - d1 * (x2 - x1).powi(2) / (b + disc.sqrt());
            x3 = if !(disc >= 0.0) || !candidate.is_finite() || candidate < 0.0 || candidate > x2 * ext {
                x2 * ext
            } else if candidate < x2 + int * (x2 - x1) {
                x2 + int * (x2 - x1)
            } else {
                candidate
            };
        }

        // Interpolation inside the bracket [x2, x4].
        let (mut x4, mut f4, mut d4) = (x3, f3, d3);
        while (d3.abs() > -sig * d0 || f3 > f0 + x3 * rho * d0) && budget > 0 {
            if d3 > 0.0 || f3 > f0 + x3 * rho * d0 {
                x4 = x3;
                f4 = f3;
                d4 = d3;
            } else {
                x2 = x3;
                f2 = f3;
                d2 = d3;
            }
            let width = x4 - x2;
            x3 = if f4 > f0 {
                x2 - (0.5 * d2 * width * width) / (f4 - f2 - d2 * width)
            } else {
                let a = 6.0 * (f2 - f4) / width + 3.0 * (d4 + d2);
                let b = 3.0 * (f4 - f2) - (2.0 * d2 + d4) * width;
                x2 + ((b * b - a * d2 * width * width).sqrt() - b) / a
            };
            if !x3.is_finite() {
                x3 = 0.5 * (x2 + x4);
            }
            x3 = x3.min(x4 - int * width).max(x2 + int * width);
            budget -= 1;
            match eval(&axpy(&x, x3, &s), &mut trace) {
                Some((f, g)) => {
                    f3 = f;
                    df3 = g;
                    d3 = dot(&df3, &s);
                    if f3 < best_f {
                        best_x = axpy(&x, x3, &s);
                        best_f = f3;
                        best_g = df3.clone();
                    }
                }
                None => {
                    f3 = f64::INFINITY;
                    d3 = f64::INFINITY;
                }
            }
        }

        if d3.abs() < -sig * d0 && f3 < f0 + x3 * rho * d0 {
            let record = LineSearchRecord {
                start_value: f0,
                start_slope: d0,
                end_value: f3,
                end_slope: d3,
                step: x3,
            };
            x = axpy(&x, x3, &s);
            f0 = f3;
            let mut beta = (dot(&df3, &df3) - dot(&df0, &df3)) / dot(&df0, &df0);
            if cfg.restart_on_negative_beta && beta < 0.0 {
                beta = 0.0;
            }
            if !beta.is_finite() {
                beta = 0.0;
            }
            for (si, gi) in s.iter_mut().zip(&df3) {
                *si = beta * *si - gi;
            }
            df0 = df3;
            let previous_slope = d0;
            d0 = dot(&df0, &s);
            if d0 >= 0.0 {
                for (si, gi) in s.iter_mut().zip(&df0) {
                    *si = -gi;
                }
                d0 = -dot(&s, &s);
            }
            x3 *= cfg.max_slope_ratio.min(previous_slope / (d0 - f64::MIN_POSITIVE));
            ls_failed = false;
            trace.records.push(TraceRecord {
                iteration,
                value: f0,
                grad_norm: norm(&df0),
                step: record.step,
                evaluations: trace.evaluations,
                line_search: Some(record),
            });
        } else {
            let moved = best_f < f0;
            x = best_x;
            f0 = best_f;
            df0 = best_g;
            if moved {
                trace.records.push(TraceRecord {
                    iteration,
                    value: f0,
                    grad_norm: norm(&df0),
                    step: 0.0,
                    evaluations: trace.evaluations,
                    line_search: None,
                });
            }
            if ls_failed || iteration >= cfg.max_iterations {
                trace.termination = if iteration >= cfg.max_iterations {
                    Termination::MaxIterations
                } else {
                    Termination::LineSearchFailed
                };
                break;
            }
            for (si, gi) in s.iter_mut().zip(&df0) {
                *si = -gi;
            }
            d0 = -dot(&s, &s);
            x3 = 1.0 / (1.0 - d0);
            ls_failed = true;
        }
    }
    if iteration >= cfg.max_iterations && trace.termination != Termination::Converged {
        trace.termination = Termination::MaxIterations;
    }
    if norm(&df0) <= cfg.gradient_tolerance {
        trace.termination = Termination::Converged;
    }

    Ok(OptResult {
        params: x,
        value: f0,
        trace,
    })
}
