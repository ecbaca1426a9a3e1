use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{all_finite, norm, MinibatchOracle, OptResult, OptTrace, Termination, TraceRecord};
use crate::error::{Error, Result};

/// ADAM with bias-corrected moment estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Abort after this many consecutive non-finite mini-batch gradients.
    pub max_consecutive_failures: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            max_consecutive_failures: 10,
        }
    }
}

impl AdamConfig {
    fn validate(&self, samples: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("ADAM betas must lie in [0, 1)".into()));
        }
        if !(self.step_size > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("ADAM step size and epsilon must be > 0".into()));
        }
        if self.batch_size == 0 || self.batch_size > samples {
            return Err(Error::InvalidArgument(format!(
                "batch size {} must be in 1..={samples}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Runs `epochs` passes over shuffled mini-batches. The full objective is
/// evaluated after each epoch and the best point seen (including the start)
/// is returned.
pub fn minimize_adam<O: MinibatchOracle + ?Sized>(oracle: &O, start: &[f64], cfg: &AdamConfig) -> Result<OptResult> {
    cfg.validate(oracle.num_samples())?;
    let mut trace = OptTrace::new();
    let (f_start, g_start) = oracle.value_and_grad(start)?;
    trace.evaluations += 1;
    if !all_finite(f_start, &g_start) {
        return Err(Error::Domain("objective is not finite at the starting point".into()));
    }
    trace.records.push(TraceRecord {
        iteration: 0,
        value: f_start,
        grad_norm: norm(&g_start),
        step: 0.0,
        evaluations: 1,
        line_search: None,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..oracle.num_samples()).collect();
    let mut theta = start.to_vec();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut t: i32 = 0;
    let mut failures = 0;
    let (mut best, mut best_value) = (theta.clone(), f_start);
    trace.termination = Termination::MaxIterations;

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            trace.evaluations += 1;
            let grad = match oracle.batch_value_and_grad(&theta, batch) {
                Ok((f, g)) if all_finite(f, &g) => g,
                _ => {
                    failures += 1;
                    log::warn!("skipping non-finite mini-batch gradient (epoch {epoch})");
                    if failures >= cfg.max_consecutive_failures {
                        trace.termination = Termination::TooManyFailures;
                        break 'epochs;
                    }
                    continue;
                }
            };
            failures = 0;
            t += 1;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            for (((p, mi), vi), g) in theta.iter_mut().zip(&mut m).zip(&mut v).zip(&grad) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.step_size * (*mi / c1) / ((*vi / c2).sqrt() + cfg.epsilon);
            }
        }
        trace.evaluations += 1;
        match oracle.value_and_grad(&theta) {
            Ok((f, g)) if all_finite(f, &g) => {
                if f < best_value {
                    best_value = f;
                    best.clone_from(&theta);
                }
                trace.records.push(TraceRecord {
                    iteration: epoch,
                    value: f,
                    grad_norm: norm(&g),
                    step: cfg.step_size,
                    evaluations: trace.evaluations,
                    line_search: None,
                });
            }
            _ => log::warn!("full objective not finite after epoch {epoch}"),
        }
    }

    Ok(OptResult {
        params: best,
        value: best_value,
        trace,
    })
}
