//! Training criterion
//!
//! `J(w, q) = (1/N) sum_n ||d_n - f(x_n)||^2 + lambda_w ||w||^2 + lambda_q ||q - q_o||^2`
//!
//! The regularizers are not averaged over `N`. `q_o` is the anchor the
//! damping term pulls the ordinates towards, normally the clean tanh samples.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::network::{ParamLayout, ParamVector, SafNetwork};

/// Value and gradient of [`Objective`] at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub total: f64,
    /// Mean squared error over the batch.
    pub data: f64,
    /// `||w||^2`, before scaling by `lambda_w`.
    pub weight_penalty: f64,
    /// `||q - q_o||^2`, before scaling by `lambda_q`.
    pub damping: f64,
    pub gradient: ParamVector,
}

#[derive(Debug, Clone)]
pub struct Objective {
    template: SafNetwork,
    layout: ParamLayout,
    inputs: Array2<f64>,
    targets: Array2<f64>,
    lambda_w: f64,
    lambda_q: f64,
    anchor: Vec<f64>,
}

impl Objective {
    /// `template` supplies the frozen grids when `layout` is weights-only;
    /// `anchor` is `q_o` for the full ordinate block.
    pub fn new(
        template: SafNetwork,
        layout: ParamLayout,
        inputs: Array2<f64>,
        targets: Array2<f64>,
        lambda_w: f64,
        lambda_q: f64,
        anchor: Vec<f64>,
    ) -> Result<Self> {
        let shape = template.shape();
        if layout.shape != shape {
            return Err(Error::DimensionMismatch("layout does not match network shape".into()));
        }
        if inputs.nrows() == 0 || inputs.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        if inputs.ncols() != shape.inputs || targets.ncols() != shape.outputs {
            return Err(Error::DimensionMismatch(format!(
                "data is {}->{} but network is {}->{}",
                inputs.ncols(),
                targets.ncols(),
                shape.inputs,
                shape.outputs
            )));
        }
        if anchor.len() != shape.grid_len() {
            return Err(Error::DimensionMismatch(format!(
                "anchor has {} ordinates, network has {}",
                anchor.len(),
                shape.grid_len()
            )));
        }
        for (name, l) in [("lambda_w", lambda_w), ("lambda_q", lambda_q)] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} = {l} must be finite and >= 0")));
            }
        }
        Ok(Self {
            template,
            layout,
            inputs,
            targets,
            lambda_w,
            lambda_q,
            anchor,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn template(&self) -> &SafNetwork {
        &self.template
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    pub fn lambda_q(&self) -> f64 {
        self.lambda_q
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.targets.view()
    }

    /// Starting point: the template's own parameters.
    pub fn initial_params(&self) -> ParamVector {
        self.template.flatten_with(&self.layout)
    }

    pub fn network_at(&self, params: &[f64]) -> Result<SafNetwork> {
        self.template.unflatten(&self.layout, params)
    }

    pub fn value_and_grad(&self, params: &[f64]) -> Result<EvalReport> {
        if params.len() != self.layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, objective expects {}",
                params.len(),
                self.layout.len()
            )));
        }
        if let Some(k) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("parameter {k} is not finite")));
        }
        let net = self.network_at(params)?;
        let (pred, cache) = net.forward(self.inputs.view())?;
        let n = self.len() as f64;
        let residual = &self.targets - &pred;
        let data = residual.iter().map(|r| r * r).sum::<f64>() / n;
        let upstream = residual.mapv(|r| -2.0 * r / n);
        let full = net.backward(&cache, upstream.view())?;

        let mut gradient = full;
        gradient.truncate(self.layout.len());

        let weights = &params[self.layout.weight_range()];
        let weight_penalty = weights.iter().map(|w| w * w).sum::<f64>();
        for (g, w) in gradient[self.layout.weight_range()].iter_mut().zip(weights) {
            *g += 2.0 * self.lambda_w * w;
        }

        let grid_params = net.flatten();
        let q = &grid_params[self.layout.shape.weight_len()..];
        let damping = q.iter().zip(&self.anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if self.layout.trainable_grids {
            let range = self.layout.grid_range();
            for ((g, a), b) in gradient[range].iter_mut().zip(q).zip(&self.anchor) {
                *g += 2.0 * self.lambda_q * (a - b);
            }
        }

        Ok(EvalReport {
            total: data + self.lambda_w * weight_penalty + self.lambda_q * damping,
            data,
            weight_penalty,
            damping,
            gradient,
        })
    }

    pub fn value(&self, params: &[f64]) -> Result<f64> {
        self.value_and_grad(params).map(|r| r.total)
    }

    /// The same criterion restricted to a subset of the samples.
    pub fn minibatch_view(&self, indices: &[usize]) -> Result<Objective> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("mini-batch is empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "sample index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Ok(Objective {
            template: self.template.clone(),
            layout: self.layout,
            inputs: self.inputs.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            lambda_w: self.lambda_w,
            lambda_q: self.lambda_q,
            anchor: self.anchor.clone(),
        })
    }
}
