//! Single-hidden-layer network whose neurons all carry a trainable spline
//! activation.
//!
//! Every neuron sees its inputs with a trailing constant `1` (bias), so a
//! hidden neuron has `D + 1` weights and an output neuron `H + 1`. All grids
//! share the knot spacing, the knot count and the basis matrix.
//!
//! # Parameter layout
//!
//! The flat parameter vector is the weight block followed by the ordinate
//! block:
//!
//! ```text
//! [ w_h0 (D+1) | ... | w_h(H-1) | w_y0 (H+1) | ... | w_y(O-1) | q_h0 (Q) | ... | q_h(H-1) | q_y0 | ... ]
//! ```
//!
//! A layout with frozen grids ([`ParamLayout::weights_only`]) stops after the
//! weight block.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{reference_vector, Evaluation, KnotGrid, SplineBasis, SPAN_LEN};

/// Flat parameter vector in [`ParamLayout`] order.
pub type ParamVector = Vec<f64>;

/// Dimensions shared by every network of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub delta_x: f64,
    pub num_knots: usize,
}

impl NetworkShape {
    pub fn hidden_weights(&self) -> usize {
        self.hidden * (self.inputs + 1)
    }

    pub fn output_weights(&self) -> usize {
        self.outputs * (self.hidden + 1)
    }

    pub fn weight_len(&self) -> usize {
        self.hidden_weights() + self.output_weights()
    }

    pub fn grid_len(&self) -> usize {
        (self.hidden + self.outputs) * self.num_knots
    }

    fn validate(&self) -> Result<()> {
        if self.inputs == 0 || self.hidden == 0 || self.outputs == 0 {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive, got {}x{}x{}",
                self.inputs, self.hidden, self.outputs
            )));
        }
        // Reuses the grid validation rules.
        KnotGrid::from_function(|_| 0.0, self.delta_x, self.num_knots).map(|_| ())
    }
}

/// Which parameters are exposed to an optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamLayout {
    pub shape: NetworkShape,
    pub trainable_grids: bool,
}

impl ParamLayout {
    pub fn full(shape: NetworkShape) -> Self {
        Self {
            shape,
            trainable_grids: true,
        }
    }

    pub fn weights_only(shape: NetworkShape) -> Self {
        Self {
            shape,
            trainable_grids: false,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.weight_len() + if self.trainable_grids { self.shape.grid_len() } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight_range(&self) -> std::ops::Range<usize> {
        0..self.shape.weight_len()
    }

    /// Empty when the grids are frozen.
    pub fn grid_range(&self) -> std::ops::Range<usize> {
        let start = self.shape.weight_len();
        start..self.len()
    }

    pub fn hidden_weight_offset(&self, neuron: usize) -> usize {
        neuron * (self.shape.inputs + 1)
    }

    pub fn output_weight_offset(&self, neuron: usize) -> usize {
        self.shape.hidden_weights() + neuron * (self.shape.hidden + 1)
    }

    /// Offset of a grid within the full layout; hidden grids come first.
    pub fn grid_offset(&self, layer: Layer, neuron: usize) -> usize {
        let index = match layer {
            Layer::Hidden => neuron,
            Layer::Output => self.shape.hidden + neuron,
        };
        self.shape.weight_len() + index * self.shape.num_knots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    Hidden,
    Output,
}

/// One neuron: weights over its inputs plus bias, and its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct SafNeuron {
    pub weights: Vec<f64>,
    pub grid: KnotGrid,
}

impl SafNeuron {
    #[inline]
    fn activation(&self, inputs: &[f64]) -> f64 {
        let (bias, w) = self.weights.split_last().expect("neuron has a bias weight");
        w.iter().zip(inputs).map(|(a, b)| a * b).sum::<f64>() + bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafNetwork {
    shape: NetworkShape,
    hidden: Vec<SafNeuron>,
    output: Vec<SafNeuron>,
    basis: SplineBasis,
}

/// Knobs of [`SafNetwork::init_glorot`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Fraction of ordinates per grid that receive Gaussian noise.
    pub noise_fraction: f64,
    pub noise_sigma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            noise_fraction: 0.05,
            noise_sigma: 0.05,
        }
    }
}

/// Per-layer data kept by [`SafNetwork::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    width: usize,
    /// Row-major `(sample, neuron)`.
    evals: Vec<Evaluation>,
}

impl LayerCache {
    pub fn get(&self, sample: usize, neuron: usize) -> &Evaluation {
        &self.evals[sample * self.width + neuron]
    }

    pub fn activation_count(&self) -> usize {
        self.evals.len()
    }

    pub fn clamped_count(&self) -> usize {
        self.evals.iter().filter(|e| e.address.clamped).count()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    inputs: Array2<f64>,
    hidden_out: Array2<f64>,
    pub hidden: LayerCache,
    pub output: LayerCache,
}

impl ForwardCache {
    pub fn batch_len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn hidden_outputs(&self) -> ArrayView2<'_, f64> {
        self.hidden_out.view()
    }

    /// Fraction of spline evaluations that fell outside the knot range.
    pub fn clamped_fraction(&self) -> f64 {
        let total = self.hidden.activation_count() + self.output.activation_count();
        if total == 0 {
            return 0.0;
        }
        (self.hidden.clamped_count() + self.output.clamped_count()) as f64 / total as f64
    }
}

impl SafNetwork {
    pub fn from_parts(
        inputs: usize,
        hidden: Vec<SafNeuron>,
        output: Vec<SafNeuron>,
        basis: SplineBasis,
    ) -> Result<Self> {
        let first = hidden
            .first()
            .ok_or_else(|| Error::InvalidArgument("network needs at least one hidden neuron".into()))?;
        let shape = NetworkShape {
            inputs,
            hidden: hidden.len(),
            outputs: output.len(),
            delta_x: first.grid.delta_x(),
            num_knots: first.grid.len(),
        };
        shape.validate()?;
        for (layer, neurons, fan_in) in [
            ("hidden", &hidden, inputs + 1),
            ("output", &output, shape.hidden + 1),
        ] {
            for (i, n) in neurons.iter().enumerate() {
                if n.weights.len() != fan_in {
                    return Err(Error::DimensionMismatch(format!(
                        "{layer} neuron {i} has {} weights, expected {fan_in}",
                        n.weights.len()
                    )));
                }
                if n.grid.len() != shape.num_knots || n.grid.delta_x() != shape.delta_x {
                    return Err(Error::InvalidArgument(format!(
                        "{layer} neuron {i} does not share the network's knot grid"
                    )));
                }
                if n.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Domain(format!("{layer} neuron {i} has non-finite weights")));
                }
            }
        }
        Ok(Self {
            shape,
            hidden,
            output,
            basis,
        })
    }

    /// Glorot-uniform weights, zero biases, and tanh-sampled grids with a
    /// small random subset of ordinates perturbed.
    pub fn init_glorot(shape: NetworkShape, seed: u64) -> Result<Self> {
        Self::init_glorot_with(shape, seed, InitConfig::default())
    }

    pub fn init_glorot_with(shape: NetworkShape, seed: u64, init: InitConfig) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tanh = KnotGrid::from_function(f64::tanh, shape.delta_x, shape.num_knots)?;
        let mut layer = |count: usize, fan_in: usize, fan_out: usize| -> Result<Vec<SafNeuron>> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..count)
                .map(|_| {
                    let mut weights: Vec<f64> =
                        (0..fan_in).map(|_| rng.random_range(-bound..=bound)).collect();
                    weights.push(0.0);
                    let grid = tanh.perturb(init.noise_fraction, init.noise_sigma, &mut rng)?;
                    Ok(SafNeuron { weights, grid })
                })
                .collect()
        };
        let hidden = layer(shape.hidden, shape.inputs, shape.hidden)?;
        let output = layer(shape.outputs, shape.hidden, shape.outputs)?;
        Ok(Self {
            shape,
            hidden,
            output,
            basis: SplineBasis::catmull_rom(),
        })
    }

    /// Clean tanh samples for every grid, in ordinate-block order.
    pub fn tanh_anchor(shape: NetworkShape) -> Result<Vec<f64>> {
        let tanh = KnotGrid::from_function(f64::tanh, shape.delta_x, shape.num_knots)?;
        Ok(tanh.ordinates().repeat(shape.hidden + shape.outputs))
    }

    /// Replaces every grid with clean tanh samples.
    pub fn with_tanh_grids(mut self) -> Result<Self> {
        let tanh = KnotGrid::from_function(f64::tanh, self.shape.delta_x, self.shape.num_knots)?;
        for n in self.hidden.iter_mut().chain(self.output.iter_mut()) {
            n.grid = tanh.clone();
        }
        Ok(self)
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn hidden(&self) -> &[SafNeuron] {
        &self.hidden
    }

    pub fn output(&self) -> &[SafNeuron] {
        &self.output
    }

    pub fn neurons(&self, layer: Layer) -> &[SafNeuron] {
        match layer {
            Layer::Hidden => &self.hidden,
            Layer::Output => &self.output,
        }
    }

    fn neurons_mut(&mut self) -> impl Iterator<Item = &mut SafNeuron> {
        self.hidden.iter_mut().chain(self.output.iter_mut())
    }

    pub fn flatten(&self) -> ParamVector {
        self.flatten_with(&ParamLayout::full(self.shape))
    }

    pub fn flatten_with(&self, layout: &ParamLayout) -> ParamVector {
        let mut v = Vec::with_capacity(layout.len());
        for n in self.hidden.iter().chain(&self.output) {
            v.extend_from_slice(&n.weights);
        }
        if layout.trainable_grids {
            for n in self.hidden.iter().chain(&self.output) {
                v.extend_from_slice(n.grid.ordinates());
            }
        }
        v
    }

    /// A copy of `self` with parameters taken from `params`. Under a
    /// weights-only layout the grids are kept.
    pub fn unflatten(&self, layout: &ParamLayout, params: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.assign(layout, params)?;
        Ok(out)
    }

    pub fn assign(&mut self, layout: &ParamLayout, params: &[f64]) -> Result<()> {
        if layout.shape != self.shape {
            return Err(Error::DimensionMismatch("layout does not match network shape".into()));
        }
        if params.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, layout expects {}",
                params.len(),
                layout.len()
            )));
        }
        let (weights, grids) = params.split_at(self.shape.weight_len());
        let mut rest = weights;
        for n in self.neurons_mut() {
            let (head, tail) = rest.split_at(n.weights.len());
            n.weights.copy_from_slice(head);
            rest = tail;
        }
        if layout.trainable_grids {
            let q = self.shape.num_knots;
            for (n, chunk) in self.neurons_mut().zip(grids.chunks_exact(q)) {
                n.grid.ordinates_mut().copy_from_slice(chunk);
            }
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for n in self.hidden.iter().chain(&self.output) {
            for w in n.weights.iter().chain(n.grid.ordinates()) {
                w.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let (n, d) = x.dim();
        if d != self.shape.inputs {
            return Err(Error::DimensionMismatch(format!(
                "batch has {d} columns, network expects {}",
                self.shape.inputs
            )));
        }
        let (h, o) = (self.shape.hidden, self.shape.outputs);
        let inputs = x.as_standard_layout().into_owned();
        let mut hidden_out = Array2::zeros((n, h));
        let mut outputs = Array2::zeros((n, o));
        let mut hidden_evals = Vec::with_capacity(n * h);
        let mut output_evals = Vec::with_capacity(n * o);

        let xs = inputs.as_slice().expect("standard layout");
        let hs = hidden_out.as_slice_mut().expect("standard layout");
        let ys = outputs.as_slice_mut().expect("standard layout");
        for row in 0..n {
            let x_row = &xs[row * d..(row + 1) * d];
            let h_row = &mut hs[row * h..(row + 1) * h];
            for (neuron, out) in self.hidden.iter().zip(h_row.iter_mut()) {
                let e = neuron.grid.evaluate(neuron.activation(x_row), &self.basis)?;
                *out = e.value;
                hidden_evals.push(e);
            }
            let h_row = &hs[row * h..(row + 1) * h];
            for (neuron, out) in self.output.iter().zip(ys[row * o..(row + 1) * o].iter_mut()) {
                let e = neuron.grid.evaluate(neuron.activation(h_row), &self.basis)?;
                *out = e.value;
                output_evals.push(e);
            }
        }
        let cache = ForwardCache {
            fingerprint: self.fingerprint(),
            inputs,
            hidden_out,
            hidden: LayerCache {
                width: h,
                evals: hidden_evals,
            },
            output: LayerCache {
                width: o,
                evals: output_evals,
            },
        };
        Ok((outputs, cache))
    }

    /// Gradient of `sum_{n,j} out_grad[n,j] * y[n,j]` with respect to every
    /// parameter, in the full layout. Samples are accumulated in order.
    pub fn backward(&self, cache: &ForwardCache, out_grad: ArrayView2<'_, f64>) -> Result<ParamVector> {
        if cache.fingerprint != self.fingerprint() {
            return Err(Error::InvalidArgument(
                "forward cache was computed with different parameters".into(),
            ));
        }
        let n = cache.batch_len();
        let NetworkShape {
            inputs: d,
            hidden: h,
            outputs: o,
            ..
        } = self.shape;
        if out_grad.dim() != (n, o) {
            return Err(Error::DimensionMismatch(format!(
                "upstream gradient is {:?}, expected ({n}, {o})",
                out_grad.dim()
            )));
        }
        let layout = ParamLayout::full(self.shape);
        let mut grad = vec![0.0; layout.len()];
        let mut hidden_grad = vec![0.0; h];
        let xs = cache.inputs.as_slice().expect("standard layout");
        let hs = cache.hidden_out.as_slice().expect("standard layout");

        for row in 0..n {
            let x_row = &xs[row * d..(row + 1) * d];
            let h_row = &hs[row * h..(row + 1) * h];
            hidden_grad.iter_mut().for_each(|g| *g = 0.0);

            for (j, neuron) in self.output.iter().enumerate() {
                let g = out_grad[[row, j]];
                if g == 0.0 {
                    continue;
                }
                let e = cache.output.get(row, j);
                let delta = g * e.derivative;
                let off = layout.output_weight_offset(j);
                for (dst, hv) in grad[off..off + h].iter_mut().zip(h_row) {
                    *dst += delta * hv;
                }
                grad[off + h] += delta;
                for (acc, w) in hidden_grad.iter_mut().zip(&neuron.weights[..h]) {
                    *acc += delta * w;
                }
                scatter(&mut grad, layout.grid_offset(Layer::Output, j), &neuron.grid, e, &self.basis, g);
            }

            for (i, neuron) in self.hidden.iter().enumerate() {
                let g = hidden_grad[i];
                if g == 0.0 {
                    continue;
                }
                let e = cache.hidden.get(row, i);
                let delta = g * e.derivative;
                let off = layout.hidden_weight_offset(i);
                for (dst, xv) in grad[off..off + d].iter_mut().zip(x_row) {
                    *dst += delta * xv;
                }
                grad[off + d] += delta;
                scatter(&mut grad, layout.grid_offset(Layer::Hidden, i), &neuron.grid, e, &self.basis, g);
            }
        }
        Ok(grad)
    }
}

#[inline]
fn scatter(grad: &mut [f64], offset: usize, grid: &KnotGrid, e: &Evaluation, basis: &SplineBasis, scale: f64) {
    let sg = grid.fold(&e.address, basis.blend(&reference_vector(e.address.u)));
    let dst = &mut grad[offset + sg.start..offset + sg.start + SPAN_LEN];
    for (d, w) in dst.iter_mut().zip(sg.weights) {
        *d += scale * w;
    }
}

/// Draws a uniformly random network of the given shape with ordinates around
/// tanh. Used by tests and gradient checks.
pub fn random_network(shape: NetworkShape, seed: u64) -> Result<SafNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SafNetwork::init_glorot(shape, seed)?;
    for n in net.hidden.iter_mut().chain(net.output.iter_mut()) {
        let bound = 2.0 / (n.weights.len() as f64).sqrt();
        for w in n.weights.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        for q in n.grid.ordinates_mut() {
            *q += rng.random_range(-0.2..0.2);
        }
    }
    Ok(net)
}
