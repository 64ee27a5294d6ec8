//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Weights of layer `k` are stored as an `in_dim x out_dim` matrix so a batch
//! `X` (one sample per row) maps to `act(X W + b)`. Every Q network, critic and
//! actor in the crate is a [`NetworkParams`]; targets are plain copies that are
//! either replaced ([`NetworkParams::hard_copy`]) or blended
//! ([`NetworkParams::soft_update`]).
//!
//! # Snapshot format
//!
//! [`NetworkParams::to_snapshot`] writes UTF-8 text, one record per line:
//!
//! ```text
//! ndnet-snapshot 1
//! layers <L>
//! layer <in_dim> <out_dim> <relu|tanh|identity>     (L lines)
//! w <in_dim*out_dim values, row-major>              (then, per layer)
//! b <out_dim values>
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so loading a
//! snapshot reproduces the parameters bitwise.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Error, Result};

/// Per-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` in place by the derivative, expressed through the
    /// activation's output.
    fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Relu => grad.zip_mut_with(output, |g, &o| {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => grad.zip_mut_with(output, |g, &o| *g *= 1.0 - o * o),
            Activation::Identity => {}
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => config_err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Weights, biases and activations of a dense network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
}

/// Derivatives of a scalar objective with respect to every parameter of a
/// [`NetworkParams`], laid out identically.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations retained by [`NetworkParams::forward_cached`] for a later
/// backward pass. `values[0]` is the input, `values[k + 1]` the output of
/// layer `k`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    values: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.values[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

fn check_chain(shapes: &[(usize, usize)]) -> Result<()> {
    if shapes.is_empty() {
        return shape_err("a network needs at least one layer");
    }
    if let Some(&(i, o)) = shapes.iter().find(|&&(i, o)| i == 0 || o == 0) {
        return shape_err(format!("layer shape ({i}, {o}) has a zero dimension"));
    }
    for (k, pair) in shapes.windows(2).enumerate() {
        if pair[0].1 != pair[1].0 {
            return shape_err(format!(
                "layer {k} outputs {} but layer {} expects {}",
                pair[0].1,
                k + 1,
                pair[1].0
            ));
        }
    }
    Ok(())
}

impl NetworkParams {
    /// Weights uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim))`, zero biases.
    pub fn init(shapes: &[(usize, usize)], activations: &[Activation], seed: u64) -> Result<Self> {
        check_chain(shapes)?;
        if activations.len() != shapes.len() {
            return shape_err(format!(
                "{} layer shapes but {} activations",
                shapes.len(),
                activations.len()
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = shapes
            .iter()
            .zip(activations)
            .map(|(&(i, o), &activation)| {
                let scale = 1.0 / (i as f64).sqrt();
                let weights = Array2::from_shape_fn((i, o), |_| rng.random_range(-scale..scale));
                Layer {
                    weights,
                    biases: Array1::zeros(o),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Multilayer perceptron `input -> hidden... -> output` with rectifier
    /// hidden layers.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, output_act: Activation, seed: u64) -> Result<Self> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        let shapes: Vec<_> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        let mut acts = vec![Activation::Relu; shapes.len()];
        *acts.last_mut().unwrap() = output_act;
        Self::init(&shapes, &acts, seed)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let shapes: Vec<_> = layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect();
        check_chain(&shapes)?;
        for (k, l) in layers.iter().enumerate() {
            if l.biases.len() != l.out_dim() {
                return shape_err(format!("layer {k}: bias length {} != {}", l.biases.len(), l.out_dim()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs)?;
        let mut x = self.affine(0, inputs);
        for k in 1..self.layers.len() {
            x = self.affine(k, &x);
        }
        Ok(x)
    }

    pub fn forward_cached(&self, inputs: &Array2<f64>) -> Result<ForwardCache> {
        self.check_input(inputs)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(inputs.clone());
        for k in 0..self.layers.len() {
            let next = self.affine(k, &values[k]);
            values.push(next);
        }
        Ok(ForwardCache { values })
    }

    fn affine(&self, k: usize, x: &Array2<f64>) -> Array2<f64> {
        let layer = &self.layers[k];
        let mut z = x.dot(&layer.weights);
        z += &layer.biases;
        layer.activation.apply(&mut z);
        z
    }

    fn check_input(&self, inputs: &Array2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return shape_err(format!(
                "input width {} but network expects {}",
                inputs.ncols(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    /// Reverse-mode derivatives of `sum(upstream * forward(inputs))` with
    /// respect to the parameters and the inputs.
    pub fn backward(&self, inputs: &Array2<f64>, upstream: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let cache = self.forward_cached(inputs)?;
        self.backward_cached(&cache, upstream)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<(Gradients, Array2<f64>)> {
        if cache.values.len() != self.layers.len() + 1 || cache.input().ncols() != self.input_dim() {
            return shape_err("forward cache does not belong to this network");
        }
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return shape_err(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                out.dim()
            ));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = upstream.clone();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            layer.activation.backprop(&cache.values[k + 1], &mut delta);
            weights.push(cache.values[k].t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&layer.weights.t());
        }
        weights.reverse();
        biases.reverse();
        Ok((Gradients { weights, biases }, delta))
    }

    /// `p <- p - lr*g` (descend) or `p <- p + lr*g` (ascend). Nothing is
    /// modified when the gradients contain a non-finite value.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64, direction: Direction) -> Result<()> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return config_err(format!("learning rate {learning_rate} must be finite and non-negative"));
        }
        self.check_congruent(grads)?;
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient, update aborted".into()));
        }
        let step = match direction {
            Direction::Descend => -learning_rate,
            Direction::Ascend => learning_rate,
        };
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            layer.weights.scaled_add(step, gw);
            layer.biases.scaled_add(step, gb);
        }
        Ok(())
    }

    /// Polyak blend in place: `self <- tau*source + (1-tau)*self`.
    pub fn soft_update(&mut self, source: &NetworkParams, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return config_err(format!("tau {tau} outside [0, 1]"));
        }
        self.check_same_shape(source)?;
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            t.weights.zip_mut_with(&s.weights, |t, &s| *t = tau * s + (1.0 - tau) * *t);
            t.biases.zip_mut_with(&s.biases, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        Ok(())
    }

    pub fn hard_copy(&self) -> NetworkParams {
        self.clone()
    }

    /// Overwrites `self` with `source` without reallocating.
    pub fn copy_from(&mut self, source: &NetworkParams) -> Result<()> {
        self.check_same_shape(source)?;
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            t.weights.assign(&s.weights);
            t.biases.assign(&s.biases);
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &NetworkParams) -> Result<()> {
        if self.layer_shapes() != other.layer_shapes() {
            return shape_err(format!(
                "networks differ in shape: {:?} vs {:?}",
                self.layer_shapes(),
                other.layer_shapes()
            ));
        }
        Ok(())
    }

    fn check_congruent(&self, grads: &Gradients) -> Result<()> {
        let ok = grads.weights.len() == self.layers.len()
            && grads.biases.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(grads.weights.iter().zip(&grads.biases))
                .all(|(l, (w, b))| w.dim() == l.weights.dim() && b.len() == l.biases.len());
        if ok {
            Ok(())
        } else {
            shape_err("gradients are not congruent with the network")
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    /// All parameters, layer by layer: weights row-major then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return shape_err(format!("{} values for {} parameters", values.len(), self.num_params()));
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        writeln!(s, "ndnet-snapshot 1").unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        for l in &self.layers {
            writeln!(s, "layer {} {} {}", l.in_dim(), l.out_dim(), l.activation.name()).unwrap();
        }
        for l in &self.layers {
            s.push('w');
            for v in l.weights.iter() {
                write!(s, " {v}").unwrap();
            }
            s.push_str("\nb");
            for v in l.biases.iter() {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        Self::read_snapshot(&mut lines)
    }

    /// Parses one snapshot from a stream of `(line_number, line)` pairs,
    /// consuming exactly the snapshot's lines.
    pub fn read_snapshot<'a, I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let mut next = |what: &str| -> Result<(usize, &'a str)> {
            lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("snapshot truncated, expected {what}"),
            })
        };
        let (ln, header) = next("header")?;
        if header.trim() != "ndnet-snapshot 1" {
            return Err(Error::Parse { line: ln, msg: format!("bad snapshot header `{header}`") });
        }
        let (ln, count) = next("layer count")?;
        let count: usize = count
            .strip_prefix("layers ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| Error::Parse { line: ln, msg: "expected `layers <count>`".into() })?;
        let mut specs = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, line) = next("layer spec")?;
            let parts: Vec<_> = line.split_whitespace().collect();
            let bad = || Error::Parse { line: ln, msg: format!("bad layer spec `{line}`") };
            if parts.len() != 4 || parts[0] != "layer" {
                return Err(bad());
            }
            let i: usize = parts[1].parse().map_err(|_| bad())?;
            let o: usize = parts[2].parse().map_err(|_| bad())?;
            let act: Activation = parts[3].parse().map_err(|_| bad())?;
            specs.push((i, o, act));
        }
        let mut parse_values = |tag: &str, expected: usize| -> Result<Vec<f64>> {
            let (ln, line) = next(tag)?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(Error::Parse { line: ln, msg: format!("expected `{tag}` record") });
            }
            let values = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
            if values.len() != expected {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {expected} values, found {}", values.len()),
                });
            }
            Ok(values)
        };
        let mut layers = Vec::with_capacity(count);
        for (i, o, activation) in specs {
            let w = parse_values("w", i * o)?;
            let b = parse_values("b", o)?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((i, o), w).expect("length checked"),
                biases: Array1::from_vec(b),
                activation,
            });
        }
        Self::from_layers(layers)
    }
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            weights: params.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            biases: params.layers.iter().map(|l| Array1::zeros(l.biases.len())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Same ordering as [`NetworkParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }
}
