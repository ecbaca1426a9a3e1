//! Uniform-knot cubic spline activations.
//!
//! A [`KnotGrid`] holds `Q` ordinates sampled on the abscissae
//! `x_k = (k - (Q-1)/2) * dx`, so the grid is symmetric around the origin
//! and `x_{(Q-1)/2} = 0`. An input `s` is mapped to a span of four
//! consecutive control points and a local coordinate `u`, and the output is
//! `u^T B q_span` with `u = [u^3, u^2, u, 1]`.
//!
//! The grid is padded with one ghost knot on each side, obtained by linear
//! extension of the two outermost ordinates (`q_{-1} = 2 q_0 - q_1` and
//! `q_Q = 2 q_{Q-1} - q_{Q-2}`). With the ghosts in place every segment
//! between two real knots is a regular Catmull-Rom segment, so the spline
//! interpolates all `Q` ordinates. Inputs beyond the outermost knots reuse the
//! boundary span with `u` outside `[0, 1)` (cubic extrapolation). Gradients
//! with respect to the ghosts are folded back onto the real ordinates, so a
//! span always touches four consecutive real ordinates.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Spline degree. Only cubic splines are supported.
pub const ORDER: usize = 3;
/// Number of control points in one span.
pub const SPAN_LEN: usize = ORDER + 1;

/// The basis matrix mapping the power basis of `u` onto blending weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineBasis {
    matrix: [[f64; SPAN_LEN]; SPAN_LEN],
}

impl SplineBasis {
    /// The Catmull-Rom basis.
    pub fn catmull_rom() -> Self {
        let m = [
            [-1.0, 3.0, -3.0, 1.0],
            [2.0, -5.0, 4.0, -1.0],
            [-1.0, 0.0, 1.0, 0.0],
            [0.0, 2.0, 0.0, 0.0],
        ];
        let mut matrix = [[0.0; SPAN_LEN]; SPAN_LEN];
        for (row, src) in matrix.iter_mut().zip(m.iter()) {
            for (dst, v) in row.iter_mut().zip(src.iter()) {
                *dst = 0.5 * v;
            }
        }
        Self { matrix }
    }

    /// A custom cubic basis. Rows are indexed by the power of `u`
    /// (`u^3` first), columns by the control point in the span.
    pub fn from_matrix(matrix: [[f64; SPAN_LEN]; SPAN_LEN]) -> Result<Self> {
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("basis matrix has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn order(&self) -> usize {
        ORDER
    }

    pub fn matrix(&self) -> &[[f64; SPAN_LEN]; SPAN_LEN] {
        &self.matrix
    }

    /// `B q`: the coefficients of the span's cubic in the power basis.
    pub fn coefficients(&self, span: &[f64; SPAN_LEN]) -> [f64; SPAN_LEN] {
        let mut out = [0.0; SPAN_LEN];
        for (o, row) in out.iter_mut().zip(self.matrix.iter()) {
            *o = dot(row, span);
        }
        out
    }

    /// `B^T u`: blending weights of the span's control points.
    pub fn blend(&self, reference: &[f64; SPAN_LEN]) -> [f64; SPAN_LEN] {
        let mut out = [0.0; SPAN_LEN];
        for (r, row) in reference.iter().zip(self.matrix.iter()) {
            for (o, b) in out.iter_mut().zip(row.iter()) {
                *o += r * b;
            }
        }
        out
    }
}

impl Default for SplineBasis {
    fn default() -> Self {
        Self::catmull_rom()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64; SPAN_LEN], b: &[f64; SPAN_LEN]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// `[u^3, u^2, u, 1]`.
#[inline]
pub fn reference_vector(u: f64) -> [f64; SPAN_LEN] {
    [u * u * u, u * u, u, 1.0]
}

/// Elementwise derivative of [`reference_vector`] in `u`: `[3u^2, 2u, 1, 0]`.
#[inline]
pub fn reference_derivative(u: f64) -> [f64; SPAN_LEN] {
    [3.0 * u * u, 2.0 * u, 1.0, 0.0]
}

/// Where an input falls on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanAddress {
    /// Index of the first knot of the span, in ghost-padded numbering:
    /// `-1` and `Q` are the ghost knots, so the range is `[-1, Q-3]`.
    pub span_index: isize,
    /// Local abscissa; `u = 0` sits on knot `span_index + 1`.
    pub u: f64,
    /// The raw span index fell outside the grid and was clamped; `u` is then
    /// outside `[0, 1)`.
    pub clamped: bool,
}

/// Blending weights of one span, expressed on four consecutive real ordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanGradient {
    pub start: usize,
    pub weights: [f64; SPAN_LEN],
}

/// Value, input derivative and span data of a single evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub address: SpanAddress,
    /// `B q_span` for the active (ghost-padded) span.
    pub coefficients: [f64; SPAN_LEN],
    pub value: f64,
    pub derivative: f64,
}

/// Sampling abscissae and trainable ordinates of one activation.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    delta_x: f64,
    ordinates: Vec<f64>,
}

impl KnotGrid {
    pub fn new(delta_x: f64, ordinates: Vec<f64>) -> Result<Self> {
        validate_shape(delta_x, ordinates.len())?;
        if let Some(k) = ordinates.iter().position(|q| !q.is_finite()) {
            return Err(Error::Domain(format!("ordinate {k} is not finite")));
        }
        Ok(Self { delta_x, ordinates })
    }

    /// Samples `f` on the symmetric abscissa grid of `num_knots` knots.
    pub fn from_function(f: impl Fn(f64) -> f64, delta_x: f64, num_knots: usize) -> Result<Self> {
        validate_shape(delta_x, num_knots)?;
        let half = (num_knots - 1) / 2;
        let ordinates = (0..num_knots)
            .map(|k| {
                let x = (k as f64 - half as f64) * delta_x;
                let y = f(x);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Domain(format!("initializer is not finite at x = {x}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { delta_x, ordinates })
    }

    pub fn delta_x(&self) -> f64 {
        self.delta_x
    }

    pub fn len(&self) -> usize {
        self.ordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinates.is_empty()
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ordinates
    }

    pub fn ordinates_mut(&mut self) -> &mut [f64] {
        &mut self.ordinates
    }

    fn half(&self) -> isize {
        ((self.len() - 1) / 2) as isize
    }

    pub fn abscissa(&self, k: usize) -> f64 {
        (k as isize - self.half()) as f64 * self.delta_x
    }

    pub fn abscissae(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.abscissa(k)).collect()
    }

    /// Largest abscissa; the grid covers `[-range, range]`.
    pub fn range(&self) -> f64 {
        self.half() as f64 * self.delta_x
    }

    pub fn locate(&self, s: f64) -> Result<SpanAddress> {
        if !s.is_finite() {
            return Err(Error::Domain(format!("activation {s} is not finite")));
        }
        let t = s / self.delta_x;
        let mut floor = t.floor();
        let mut frac = t - floor;
        // An input equal to a knot's abscissa `r * dx` may divide back to
        // just below `r`; it still addresses that knot with u = 0.
        let nearest = t.round();
        if nearest * self.delta_x == s {
            floor = nearest;
            frac = 0.0;
        }
        let half = self.half();
        let max_index = self.len() as isize - 3;
        // Saturating float-to-int cast keeps huge |s| well defined.
        let raw = (floor as isize).saturating_add(half - 1);
        if (-1..=max_index).contains(&raw) {
            Ok(SpanAddress {
                span_index: raw,
                u: frac,
                clamped: false,
            })
        } else {
            let span_index = raw.clamp(-1, max_index);
            Ok(SpanAddress {
                span_index,
                u: t - (span_index + 1 - half) as f64,
                clamped: true,
            })
        }
    }

    fn extended(&self, index: isize) -> f64 {
        let q = &self.ordinates;
        let n = q.len() as isize;
        if index < 0 {
            2.0 * q[0] - q[1]
        } else if index >= n {
            2.0 * q[q.len() - 1] - q[q.len() - 2]
        } else {
            q[index as usize]
        }
    }

    /// The four (ghost-padded) control points of a span.
    pub fn span_points(&self, address: &SpanAddress) -> [f64; SPAN_LEN] {
        let i = address.span_index;
        [
            self.extended(i),
            self.extended(i + 1),
            self.extended(i + 2),
            self.extended(i + 3),
        ]
    }

    /// Maps weights on the ghost-padded span onto four real ordinates.
    pub fn fold(&self, address: &SpanAddress, w: [f64; SPAN_LEN]) -> SpanGradient {
        let last = self.len() as isize - 3;
        if address.span_index < 0 {
            SpanGradient {
                start: 0,
                weights: [w[1] + 2.0 * w[0], w[2] - w[0], w[3], 0.0],
            }
        } else if address.span_index == last {
            SpanGradient {
                start: self.len() - SPAN_LEN,
                weights: [0.0, w[0], w[1] - w[3], w[2] + 2.0 * w[3]],
            }
        } else {
            SpanGradient {
                start: address.span_index as usize,
                weights: w,
            }
        }
    }

    pub fn evaluate(&self, s: f64, basis: &SplineBasis) -> Result<Evaluation> {
        let address = self.locate(s)?;
        let coefficients = basis.coefficients(&self.span_points(&address));
        Ok(Evaluation {
            address,
            coefficients,
            value: dot(&reference_vector(address.u), &coefficients),
            derivative: dot(&reference_derivative(address.u), &coefficients) / self.delta_x,
        })
    }

    pub fn eval(&self, s: f64, basis: &SplineBasis) -> Result<f64> {
        self.evaluate(s, basis).map(|e| e.value)
    }

    /// `d phi / d s = (1/dx) u_dot^T B q_span`.
    pub fn eval_input_derivative(&self, s: f64, basis: &SplineBasis) -> Result<f64> {
        self.evaluate(s, basis).map(|e| e.derivative)
    }

    /// `d phi / d q` restricted to the active span; zero everywhere else.
    pub fn span_gradient(&self, s: f64, basis: &SplineBasis) -> Result<SpanGradient> {
        let address = self.locate(s)?;
        Ok(self.span_gradient_at(&address, basis))
    }

    pub fn span_gradient_at(&self, address: &SpanAddress, basis: &SplineBasis) -> SpanGradient {
        self.fold(address, basis.blend(&reference_vector(address.u)))
    }

    /// Adds `N(0, sigma^2)` noise to a random subset of the ordinates. The
    /// subset size is `fraction * Q` rounded half up, and at least one when
    /// `fraction > 0`.
    pub fn perturb<R: Rng + ?Sized>(&self, fraction: f64, sigma: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "perturbation fraction {fraction} outside [0, 1]"
            )));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
        }
        let mut out = self.clone();
        let count = perturb_count(fraction, self.len());
        if count == 0 || sigma == 0.0 {
            return Ok(out);
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for k in sample(rng, self.len(), count) {
            out.ordinates[k] += normal.sample(rng);
        }
        Ok(out)
    }
}

/// Number of ordinates touched by [`KnotGrid::perturb`].
pub fn perturb_count(fraction: f64, num_knots: usize) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    ((fraction * num_knots as f64 + 0.5).floor() as usize).clamp(1, num_knots)
}

/// Number of knots of a symmetric grid covering `[-range, range]` at spacing `delta_x`.
pub fn knots_for_range(range: f64, delta_x: f64) -> Result<usize> {
    if !(range > 0.0 && delta_x > 0.0 && range.is_finite() && delta_x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "knot range {range} and spacing {delta_x} must be positive"
        )));
    }
    let ratio = range / delta_x;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "knot range {range} is not a multiple of the spacing {delta_x}"
        )));
    }
    let half = ratio.round() as usize;
    let q = 2 * half + 1;
    validate_shape(delta_x, q)?;
    Ok(q)
}

fn validate_shape(delta_x: f64, num_knots: usize) -> Result<()> {
    if !(delta_x > 0.0 && delta_x.is_finite()) {
        return Err(Error::InvalidArgument(format!("knot spacing {delta_x} must be positive")));
    }
    if num_knots < SPAN_LEN + 1 || num_knots.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "knot count {num_knots} must be odd and at least {}",
            SPAN_LEN + 1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DX: f64 = 0.2;
    const Q: usize = 21;

    fn tanh_grid() -> KnotGrid {
        KnotGrid::from_function(f64::tanh, DX, Q).unwrap()
    }

    fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn catmull_rom_matrix_entries() {
        let b = SplineBasis::catmull_rom();
        assert_eq!(b.matrix()[0], [-0.5, 1.5, -1.5, 0.5]);
        assert_eq!(b.matrix()[1], [1.0, -2.5, 2.0, -0.5]);
        assert_eq!(b.matrix()[2], [-0.5, 0.0, 0.5, 0.0]);
        assert_eq!(b.matrix()[3], [0.0, 1.0, 0.0, 0.0]);
        let sums: Vec<f64> = b.matrix().iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn locate_examples() {
        let g = tanh_grid();
        let a = g.locate(0.0).unwrap();
        assert_eq!((a.span_index, a.u, a.clamped), (9, 0.0, false));

        let a = g.locate(0.35).unwrap();
        assert_eq!(a.span_index, 10);
        assert_abs_diff_eq!(a.u, 0.75, epsilon = 1e-12);
        assert!(!a.clamped);

        // Abscissae run -2..2 plus a ghost at 2.2; the last span starts at
        // knot 18 and s = 5 sits 16 spacings past its second knot.
        let a = g.locate(5.0).unwrap();
        assert_eq!(a.span_index, 18);
        assert!(a.clamped);
        assert_abs_diff_eq!(a.u, 16.0, epsilon = 1e-9);

        let a = g.locate(-5.0).unwrap();
        assert_eq!(a.span_index, -1);
        assert!(a.clamped && a.u < 0.0);

        assert!(g.locate(f64::NAN).is_err());
        assert!(g.locate(f64::INFINITY).is_err());
        assert!(g.locate(1e300).unwrap().clamped);
    }

    #[test]
    fn reference_vectors() {
        assert_eq!(reference_vector(0.0), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(reference_vector(1.0), [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(reference_vector(0.5), [0.125, 0.25, 0.5, 1.0]);
        assert_eq!(reference_derivative(0.5), [0.75, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn eval_interpolates_every_knot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = tanh_grid().perturb(1.0, 0.3, &mut rng).unwrap();
        let b = SplineBasis::catmull_rom();
        for k in 0..Q - 1 {
            assert_eq!(g.eval(g.abscissa(k), &b).unwrap(), g.ordinates()[k], "knot {k}");
        }
        // The last knot is reached at u = 1 of the boundary span.
        assert_abs_diff_eq!(g.eval(2.0, &b).unwrap(), g.ordinates()[Q - 1], epsilon = 1e-12);
        assert_eq!(tanh_grid().eval(0.0, &b).unwrap(), 0.0);
    }

    #[test]
    fn identity_grid_reproduces_line() {
        let g = KnotGrid::from_function(|x| x, DX, Q).unwrap();
        let b = SplineBasis::catmull_rom();
        for i in 0..=4000 {
            let s = -2.0 + 4.0 * i as f64 / 4000.0;
            assert_abs_diff_eq!(g.eval(s, &b).unwrap(), s, epsilon = 1e-12);
            assert_abs_diff_eq!(g.eval_input_derivative(s, &b).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_grid_has_zero_slope() {
        let g = KnotGrid::from_function(|_| 0.7, DX, Q).unwrap();
        let b = SplineBasis::catmull_rom();
        for s in [-3.0, -1.1, 0.0, 0.33, 1.95, 4.0] {
            assert_abs_diff_eq!(g.eval(s, &b).unwrap(), 0.7, epsilon = 1e-12);
            assert_abs_diff_eq!(g.eval_input_derivative(s, &b).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tanh_slope_at_origin() {
        let g = tanh_grid();
        let b = SplineBasis::catmull_rom();
        let d = g.eval_input_derivative(0.0, &b).unwrap();
        let fd = central(|s| g.eval(s, &b).unwrap(), 0.0, 1e-6);
        // At a knot the CR slope is the central difference of its neighbours.
        assert!((d - 0.2f64.tanh() / 0.2).abs() < 1e-12, "{d}");
        assert!((d - fd).abs() < 1e-6);
    }

    #[test]
    fn span_gradient_at_knot() {
        let g = tanh_grid();
        let b = SplineBasis::catmull_rom();
        let sg = g.span_gradient(0.0, &b).unwrap();
        assert_eq!(sg.start, 9);
        assert_eq!(sg.weights, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn partition_of_unity() {
        let b = SplineBasis::catmull_rom();
        for i in 0..1000 {
            let u = i as f64 / 1000.0;
            let w = b.blend(&reference_vector(u));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn span_gradient_matches_ordinate_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = tanh_grid().perturb(1.0, 0.2, &mut rng).unwrap();
        let b = SplineBasis::catmull_rom();
        let h = 1e-6;
        for s in [-2.7, -1.93, -1.5, -0.01, 0.37, 1.21, 1.87, 2.5] {
            let sg = g.span_gradient(s, &b).unwrap();
            for m in 0..Q {
                let shifted = |delta: f64| {
                    let mut p = g.clone();
                    p.ordinates_mut()[m] += delta;
                    p.eval(s, &b).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let analytic = if (sg.start..sg.start + SPAN_LEN).contains(&m) {
                    sg.weights[m - sg.start]
                } else {
                    0.0
                };
                assert!(
                    (fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()),
                    "s={s} m={m} fd={fd} analytic={analytic}"
                );
            }
        }
    }

    #[test]
    fn grid_construction() {
        let g = tanh_grid();
        assert_abs_diff_eq!(g.ordinates()[0], -0.9640, epsilon = 1e-4);
        assert_eq!(g.ordinates()[10], 0.0);
        assert_abs_diff_eq!(g.ordinates()[20], 0.9640, epsilon = 1e-4);
        assert_abs_diff_eq!(g.abscissa(0), -2.0, epsilon = 1e-15);
        assert_eq!(g.abscissa(10), 0.0);
        assert_eq!(knots_for_range(2.0, 0.2).unwrap(), 21);

        let id = KnotGrid::from_function(|x| x, DX, Q).unwrap();
        assert_eq!(id.ordinates(), id.abscissae().as_slice());
        let zero = KnotGrid::from_function(|_| 0.0, DX, Q).unwrap();
        assert!(zero.ordinates().iter().all(|&q| q == 0.0));

        assert!(KnotGrid::from_function(|x| 1.0 / x, DX, Q).is_err());
        assert!(KnotGrid::from_function(f64::tanh, DX, 20).is_err());
        assert!(KnotGrid::from_function(f64::tanh, 0.0, 21).is_err());
        assert!(KnotGrid::new(DX, vec![0.0, 1.0, f64::NAN, 0.0, 1.0]).is_err());
    }

    #[test]
    fn perturb_subset_sizes() {
        let g = tanh_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(g.perturb(0.05, 0.0, &mut rng).unwrap(), g);
        assert_eq!(g.perturb(0.0, 1.0, &mut rng).unwrap(), g);
        assert_eq!(perturb_count(0.05, 21), 1);
        assert_eq!(perturb_count(0.5, 21), 11);
        assert_eq!(perturb_count(1e-6, 21), 1);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = g.perturb(0.05, 0.05, &mut rng).unwrap();
            let diff = p.ordinates().iter().zip(g.ordinates()).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 1);
        }
        let a = g.perturb(0.3, 0.1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = g.perturb(0.3, 0.1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(g.perturb(1.5, 0.1, &mut rng).is_err());
        assert!(g.perturb(0.5, -0.1, &mut rng).is_err());
    }

    #[test]
    fn c1_at_interior_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = tanh_grid().perturb(1.0, 0.3, &mut rng).unwrap();
        let b = SplineBasis::catmull_rom();
        for k in 1..Q - 1 {
            let x = g.abscissa(k);
            let right = g.locate(x).unwrap();
            // Left limit: the previous span evaluated at u = 1.
            let left = SpanAddress {
                span_index: right.span_index - 1,
                u: 1.0,
                clamped: false,
            };
            let left = if right.clamped { right } else { left };
            let c_left = b.coefficients(&g.span_points(&left));
            let c_right = b.coefficients(&g.span_points(&right));
            let v = |a: &SpanAddress, c: &[f64; 4]| dot(&reference_vector(a.u), c);
            let d = |a: &SpanAddress, c: &[f64; 4]| dot(&reference_derivative(a.u), c);
            assert!((v(&left, &c_left) - v(&right, &c_right)).abs() < 1e-10);
            assert!((d(&left, &c_left) - d(&right, &c_right)).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn linear_precision(a in -3.0f64..3.0, c in -1.0f64..1.0, s in -2.0f64..2.0) {
            let g = KnotGrid::from_function(|x| a * x + c, DX, Q).unwrap();
            let b = SplineBasis::catmull_rom();
            prop_assert!((g.eval(s, &b).unwrap() - (a * s + c)).abs() < 1e-12);
        }

        #[test]
        fn input_derivative_matches_fd(seed in 0u64..1000, s in -2.5f64..2.5) {
            let g = tanh_grid().perturb(1.0, 0.2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = SplineBasis::catmull_rom();
            let t = s / DX;
            prop_assume!((t - t.round()).abs() > 1e-3);
            let d = g.eval_input_derivative(s, &b).unwrap();
            let fd = central(|x| g.eval(x, &b).unwrap(), s, 1e-6);
            prop_assert!((d - fd).abs() < 1e-6 * (1.0 + d.abs()), "d={} fd={}", d, fd);
        }

        #[test]
        fn locality(seed in 0u64..1000, s in -3.0f64..3.0, m in 0usize..Q) {
            let g = tanh_grid().perturb(1.0, 0.2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = SplineBasis::catmull_rom();
            let sg = g.span_gradient(s, &b).unwrap();
            let mut p = g.clone();
            p.ordinates_mut()[m] += 0.5;
            let changed = p.eval(s, &b).unwrap() != g.eval(s, &b).unwrap();
            if changed {
                prop_assert!((sg.start..sg.start + SPAN_LEN).contains(&m));
            }
        }

        #[test]
        fn span_address_invariants(s in -10.0f64..10.0) {
            let g = tanh_grid();
            let a = g.locate(s).unwrap();
            prop_assert!(a.span_index >= -1 && a.span_index <= Q as isize - 3);
            if !a.clamped {
                prop_assert!((0.0..1.0).contains(&a.u));
            }
            let sg = g.span_gradient_at(&a, &SplineBasis::catmull_rom());
            prop_assert!(sg.start + SPAN_LEN <= Q);
        }
    }
}
