//! Dense layers and Legendre/Chebyshev blocks, evaluated in [`Jet3`]
//! arithmetic, plus the exact gradient of the Falkner-Skan loss with respect
//! to the flat parameter vector.
//!
//! # Parameter layout
//!
//! Parameters are one flat `f64` vector, concatenated in layer order:
//!
//! * `Dense { in_dim, out_dim, .. }`: `out_dim * in_dim` weights, row-major
//!   (row = output unit), then `out_dim` biases.
//! * `LegendreBlock` / `ChebyshevBlock { in_dim, .. }`: the `in_dim` encoder
//!   weights, then the single encoder bias.
//!
//! # Blocks
//!
//! A block encodes its input vector into a scalar `t = tanh(w . input + b)`
//! and emits `[P_0(t), ..., P_N(t)]`. Derivatives of `P_k(t(x))` with respect
//! to `x` come from the operational matrices: `P^(j)(t) = M^(j) P(t)`, chained
//! through Faà di Bruno.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{compose_adjoint, tanh_derivatives, Jet3, JetVector};
use crate::orthopoly::{basis_derivatives, fill_basis, BasisKind, DerivativeTable};
use crate::problem::{residual, residual_adjoint, FlowConfig, JetModel};

/// Points per reduction chunk. Partial sums are formed sequentially inside a
/// chunk and then combined in chunk order, so results do not depend on the
/// number of worker threads.
pub const REDUCTION_CHUNK: usize = 128;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("model must have at least one layer")]
    Empty,
    #[error("first layer must accept width 1, found {0}")]
    InputWidth(usize),
    #[error("last layer must emit width 1, found {0}")]
    OutputWidth(usize),
    #[error("layer {index} expects width {expected} but previous layer emits {found}")]
    WidthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {0} has zero width")]
    ZeroWidth(usize),
    #[error("parameter vector has length {found}, model needs {expected}")]
    ParameterCount { expected: usize, found: usize },
    #[error("collocation set is empty")]
    NoPoints,
    #[error("loss is not finite ({0}); training diverged")]
    Diverged(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
    LegendreBlock {
        in_dim: usize,
        order: usize,
    },
    ChebyshevBlock {
        in_dim: usize,
        order: usize,
    },
}

impl LayerSpec {
    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, .. }
            | LayerSpec::LegendreBlock { in_dim, .. }
            | LayerSpec::ChebyshevBlock { in_dim, .. } => in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { out_dim, .. } => out_dim,
            LayerSpec::LegendreBlock { order, .. } | LayerSpec::ChebyshevBlock { order, .. } => {
                order + 1
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => in_dim * out_dim + out_dim,
            LayerSpec::LegendreBlock { in_dim, .. } | LayerSpec::ChebyshevBlock { in_dim, .. } => {
                in_dim + 1
            }
        }
    }

    /// `(fan_in, fan_out)` used by Glorot initialization. A block's encoder is
    /// a single neuron.
    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => (in_dim, out_dim),
            LayerSpec::LegendreBlock { in_dim, .. } | LayerSpec::ChebyshevBlock { in_dim, .. } => {
                (in_dim, 1)
            }
        }
    }

    fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => in_dim * out_dim,
            LayerSpec::LegendreBlock { in_dim, .. } | LayerSpec::ChebyshevBlock { in_dim, .. } => {
                in_dim
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Dense(1→10, tanh) → LegendreBlock(10, 8) → Dense(9→1, linear).
    pub fn ldnn() -> Self {
        ModelSpec {
            name: "LDNN".into(),
            layers: vec![
                LayerSpec::Dense {
                    in_dim: 1,
                    out_dim: 10,
                    activation: Activation::Tanh,
                },
                LayerSpec::LegendreBlock {
                    in_dim: 10,
                    order: 8,
                },
                LayerSpec::Dense {
                    in_dim: 9,
                    out_dim: 1,
                    activation: Activation::Linear,
                },
            ],
        }
    }

    /// Dense(1→10, tanh) → LegendreBlock(10, 8) → ChebyshevBlock(9, 8) →
    /// Dense(9→1, linear).
    pub fn lcdnn() -> Self {
        ModelSpec {
            name: "LCDNN".into(),
            layers: vec![
                LayerSpec::Dense {
                    in_dim: 1,
                    out_dim: 10,
                    activation: Activation::Tanh,
                },
                LayerSpec::LegendreBlock {
                    in_dim: 10,
                    order: 8,
                },
                LayerSpec::ChebyshevBlock {
                    in_dim: 9,
                    order: 8,
                },
                LayerSpec::Dense {
                    in_dim: 9,
                    out_dim: 1,
                    activation: Activation::Linear,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let first = self.layers.first().ok_or(NetworkError::Empty)?;
        if first.in_dim() != 1 {
            return Err(NetworkError::InputWidth(first.in_dim()));
        }
        for (index, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(NetworkError::ZeroWidth(index));
            }
            if index > 0 {
                let found = self.layers[index - 1].out_dim();
                if found != layer.in_dim() {
                    return Err(NetworkError::WidthMismatch {
                        index,
                        expected: layer.in_dim(),
                        found,
                    });
                }
            }
        }
        let last = self.layers.last().expect("non-empty").out_dim();
        if last != 1 {
            return Err(NetworkError::OutputWidth(last));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

/// Glorot-uniform weights, zero biases, drawn from a ChaCha8 stream seeded
/// with `seed`. Same `(spec, seed)` gives the same bits.
pub fn init_parameters(spec: &ModelSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(spec.param_count());
    for layer in &spec.layers {
        let (fan_in, fan_out) = layer.fans();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..layer.weight_count() {
            params.push(rng.random_range(-limit..limit));
        }
        params.resize(
            params.len() + layer.param_count() - layer.weight_count(),
            0.0,
        );
    }
    params
}

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        offset: usize,
    },
    Block {
        in_dim: usize,
        table: DerivativeTable,
        offset: usize,
    },
}

/// Per-layer intermediates kept for the reverse pass.
#[derive(Debug, Clone)]
enum LayerTape {
    Dense {
        pre: Vec<Jet3>,
    },
    Block {
        s: Jet3,
        t: Jet3,
        rows: Vec<Vec<f64>>,
    },
}

/// Scratch space for one forward/reverse sweep. Reused across points.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<JetVector>,
    layers: Vec<LayerTape>,
    adj_in: Vec<Jet3>,
    adj_out: Vec<Jet3>,
}

/// A validated [`ModelSpec`] with precomputed operational matrices.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
    n_params: usize,
}

impl Network {
    pub fn new(spec: ModelSpec) -> Result<Self, NetworkError> {
        spec.validate()?;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            layers.push(match *layer {
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    activation,
                } => Layer::Dense {
                    in_dim,
                    out_dim,
                    activation,
                    offset,
                },
                LayerSpec::LegendreBlock { in_dim, order } => Layer::Block {
                    in_dim,
                    table: DerivativeTable::new(BasisKind::Legendre, order),
                    offset,
                },
                LayerSpec::ChebyshevBlock { in_dim, order } => Layer::Block {
                    in_dim,
                    table: DerivativeTable::new(BasisKind::Chebyshev, order),
                    offset,
                },
            });
            offset += layer.param_count();
        }
        Ok(Network {
            spec,
            layers,
            n_params: offset,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn check_params(&self, params: &[f64]) -> Result<(), NetworkError> {
        if params.len() != self.n_params {
            return Err(NetworkError::ParameterCount {
                expected: self.n_params,
                found: params.len(),
            });
        }
        Ok(())
    }

    pub fn tape(&self) -> Tape {
        let mut acts = vec![vec![Jet3::ZERO; 1]];
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut widest = 1;
        for (layer, spec) in self.layers.iter().zip(&self.spec.layers) {
            acts.push(vec![Jet3::ZERO; spec.out_dim()]);
            widest = widest.max(spec.out_dim()).max(spec.in_dim());
            layers.push(match layer {
                Layer::Dense { out_dim, .. } => LayerTape::Dense {
                    pre: vec![Jet3::ZERO; *out_dim],
                },
                Layer::Block { table, .. } => LayerTape::Block {
                    s: Jet3::ZERO,
                    t: Jet3::ZERO,
                    rows: vec![vec![0.0; table.order() + 1]; 5],
                },
            });
        }
        Tape {
            acts,
            layers,
            adj_in: vec![Jet3::ZERO; widest],
            adj_out: vec![Jet3::ZERO; widest],
        }
    }

    /// `(g, g', g'', g''')` at `x`.
    pub fn forward_jet(&self, params: &[f64], x: f64) -> Jet3 {
        let mut tape = self.tape();
        self.forward_tape(params, x, &mut tape)
    }

    fn forward_tape(&self, params: &[f64], x: f64, tape: &mut Tape) -> Jet3 {
        debug_assert_eq!(params.len(), self.n_params);
        tape.acts[0][0] = Jet3::seed(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = tape.acts.split_at_mut(i + 1);
            let input = &done[i];
            let output = &mut rest[0];
            match (layer, &mut tape.layers[i]) {
                (
                    Layer::Dense {
                        in_dim,
                        out_dim,
                        activation,
                        offset,
                    },
                    LayerTape::Dense { pre },
                ) => {
                    let w = &params[*offset..offset + in_dim * out_dim];
                    let b = &params[offset + in_dim * out_dim..offset + in_dim * out_dim + out_dim];
                    for o in 0..*out_dim {
                        let mut z = Jet3::constant(b[o]);
                        for (wi, xi) in w[o * in_dim..(o + 1) * in_dim].iter().zip(input) {
                            z.add_scaled(*wi, *xi);
                        }
                        pre[o] = z;
                        output[o] = match activation {
                            Activation::Tanh => z.tanh(),
                            Activation::Linear => z,
                        };
                    }
                }
                (
                    Layer::Block {
                        in_dim,
                        table,
                        offset,
                    },
                    LayerTape::Block { s, t, rows },
                ) => {
                    let w = &params[*offset..offset + in_dim];
                    let mut enc = Jet3::constant(params[offset + in_dim]);
                    for (wi, xi) in w.iter().zip(input) {
                        enc.add_scaled(*wi, *xi);
                    }
                    *s = enc;
                    *t = enc.tanh();
                    debug_assert!(t.d0.abs() <= 1.0, "encoder left [-1, 1]: {}", t.d0);
                    table.eval_into(t.d0, rows);
                    for (k, out) in output.iter_mut().enumerate() {
                        *out = t.compose([rows[0][k], rows[1][k], rows[2][k], rows[3][k]]);
                    }
                }
                _ => unreachable!("tape built for this network"),
            }
        }
        tape.acts[self.layers.len()][0]
    }

    /// Accumulates `d/dθ (out_bar . g_jet(x))` into `grad`, reusing the
    /// intermediates left in `tape` by the preceding forward sweep.
    fn reverse_tape(&self, params: &[f64], out_bar: Jet3, tape: &mut Tape, grad: &mut [f64]) {
        let Tape {
            acts,
            layers,
            adj_in,
            adj_out,
        } = tape;
        adj_out[0] = out_bar;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[i];
            match (layer, &layers[i]) {
                (
                    Layer::Dense {
                        in_dim,
                        out_dim,
                        activation,
                        offset,
                    },
                    LayerTape::Dense { pre },
                ) => {
                    let w_off = *offset;
                    let b_off = offset + in_dim * out_dim;
                    adj_in[..*in_dim].fill(Jet3::ZERO);
                    for o in 0..*out_dim {
                        let z_bar = match activation {
                            Activation::Tanh => {
                                compose_adjoint(tanh_derivatives(pre[o].d0), pre[o], adj_out[o])
                            }
                            Activation::Linear => adj_out[o],
                        };
                        grad[b_off + o] += z_bar.d0;
                        let row = w_off + o * in_dim;
                        for j in 0..*in_dim {
                            grad[row + j] += z_bar.dot(input[j]);
                            adj_in[j].add_scaled(params[row + j], z_bar);
                        }
                    }
                }
                (
                    Layer::Block {
                        in_dim,
                        table,
                        offset,
                    },
                    LayerTape::Block { s, t, rows },
                ) => {
                    let mut t_bar = Jet3::ZERO;
                    for k in 0..=table.order() {
                        let f = [rows[0][k], rows[1][k], rows[2][k], rows[3][k], rows[4][k]];
                        t_bar += compose_adjoint(f, *t, adj_out[k]);
                    }
                    let s_bar = compose_adjoint(tanh_derivatives(s.d0), *s, t_bar);
                    grad[offset + in_dim] += s_bar.d0;
                    for j in 0..*in_dim {
                        grad[offset + j] += s_bar.dot(input[j]);
                        adj_in[j] = s_bar.scale(params[offset + j]);
                    }
                }
                _ => unreachable!("tape built for this network"),
            }
            std::mem::swap(adj_in, adj_out);
        }
    }

    /// Plain `f64` forward pass, independent of the jet machinery.
    pub fn forward_value(&self, params: &[f64], x: f64) -> f64 {
        let mut cur = vec![x];
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense {
                    in_dim,
                    out_dim,
                    activation,
                    offset,
                } => {
                    let w = &params[*offset..offset + in_dim * out_dim];
                    let b = &params[offset + in_dim * out_dim..];
                    (0..*out_dim)
                        .map(|o| {
                            let row = &w[o * in_dim..(o + 1) * in_dim];
                            let z = row.iter().zip(&cur).fold(b[o], |acc, (a, c)| acc + a * c);
                            match activation {
                                Activation::Tanh => z.tanh(),
                                Activation::Linear => z,
                            }
                        })
                        .collect()
                }
                Layer::Block {
                    in_dim,
                    table,
                    offset,
                } => {
                    let w = &params[*offset..offset + in_dim];
                    let s = w
                        .iter()
                        .zip(&cur)
                        .fold(params[offset + in_dim], |acc, (a, c)| acc + a * c);
                    let mut out = vec![0.0; table.order() + 1];
                    fill_basis(table.basis(), s.tanh(), &mut out);
                    out
                }
            };
        }
        cur[0]
    }

    pub fn bind<'a>(&'a self, params: &'a [f64]) -> BoundNetwork<'a> {
        BoundNetwork { net: self, params }
    }
}

/// A network with fixed parameters, usable wherever a [`JetModel`] is.
#[derive(Debug, Clone, Copy)]
pub struct BoundNetwork<'a> {
    pub net: &'a Network,
    pub params: &'a [f64],
}

impl JetModel for BoundNetwork<'_> {
    fn jet(&self, x: f64) -> Jet3 {
        self.net.forward_jet(self.params, x)
    }
}

/// Standalone block evaluation: tanh-encode `input` with `(w, b)` and expand
/// in the requested basis up to `order`.
pub fn block_forward(
    kind: BasisKind,
    order: usize,
    w: &[f64],
    b: f64,
    input: &[Jet3],
) -> JetVector {
    assert_eq!(
        w.len(),
        input.len(),
        "encoder weight row must match input width"
    );
    let mut enc = Jet3::constant(b);
    for (wi, xi) in w.iter().zip(input) {
        enc.add_scaled(*wi, *xi);
    }
    let t = enc.tanh();
    debug_assert!(t.d0.abs() <= 1.0);
    let d = basis_derivatives(kind, order, t.d0, 3).expect("tanh output is finite");
    (0..=order)
        .map(|k| t.compose([d[0][k], d[1][k], d[2][k], d[3][k]]))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Loss and its exact gradient with respect to every parameter.
///
/// Residual terms are accumulated in fixed chunks of [`REDUCTION_CHUNK`]
/// points and combined in chunk order, so the result is bit-identical for any
/// rayon pool size.
pub fn loss_gradient(
    net: &Network,
    params: &[f64],
    flow: &FlowConfig,
    points: &[f64],
) -> Result<LossGradient, NetworkError> {
    net.check_params(params)?;
    if points.is_empty() {
        return Err(NetworkError::NoPoints);
    }
    let n = points.len() as f64;
    let (alpha, beta) = (flow.alpha, flow.beta);

    let partials: Vec<(f64, Vec<f64>)> = points
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut tape = net.tape();
            let mut grad = vec![0.0; net.param_count()];
            let mut sum = 0.0;
            for &x in chunk {
                let g = net.forward_tape(params, x, &mut tape);
                let r = residual(g, alpha, beta);
                sum += r * r;
                let out_bar = residual_adjoint(g, alpha, beta).scale(2.0 * r / n);
                net.reverse_tape(params, out_bar, &mut tape, &mut grad);
            }
            (sum, grad)
        })
        .collect();

    let mut sum = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for (s, g) in &partials {
        sum += s;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let mut loss = sum / n;

    let mut tape = net.tape();
    let g0 = net.forward_tape(params, 0.0, &mut tape);
    loss += g0.d0 * g0.d0 + g0.d1 * g0.d1;
    net.reverse_tape(
        params,
        Jet3::new(2.0 * g0.d0, 2.0 * g0.d1, 0.0, 0.0),
        &mut tape,
        &mut grad,
    );

    let g_far = net.forward_tape(params, flow.x_max, &mut tape);
    let far = g_far.d1 - 1.0;
    loss += far * far;
    net.reverse_tape(
        params,
        Jet3::new(0.0, 2.0 * far, 0.0, 0.0),
        &mut tape,
        &mut grad,
    );

    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(NetworkError::Diverged(loss));
    }
    Ok(LossGradient { loss, grad })
}
