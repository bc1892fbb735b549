//! Fully-connected networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio::{put_f64, put_u32, Reader};
use crate::graph::{Graph, NodeId};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default hidden-layer leak.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu(LEAKY_SLOPE)
    }

    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu(s) => {
                if x > T::zero() {
                    x
                } else {
                    x * T::lit(s)
                }
            }
        }
    }

    pub(crate) fn code(self) -> (u8, f64) {
        match self {
            Activation::Identity => (0, 0.0),
            Activation::LeakyRelu(s) => (1, s),
        }
    }

    pub(crate) fn from_code(code: u8, slope: f64) -> Result<Self> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::LeakyRelu(slope)),
            other => Err(Error::Data(format!("unknown activation code {other}"))),
        }
    }
}

/// One affine layer followed by an activation. `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.out_dim() {
                return Err(Error::Shape(format!("layer {i}: bias does not match weight")));
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} takes {}",
                    i,
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Uniform Glorot initialization, zero biases. Hidden layers use
    /// `hidden_act`, the last layer is linear.
    pub fn init(in_dim: usize, hidden: &[usize], out_dim: usize, hidden_act: Activation, rng: &mut SeededRng) -> Self {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = T::lit((6.0 / (fan_in + fan_out) as f64).sqrt());
                let weight = Tensor::from_fn(fan_out, fan_in, |_, _| rng.uniform_range(-bound, bound));
                Layer {
                    weight,
                    bias: Tensor::zeros(1, fan_out),
                    activation: if i + 1 == n { Activation::Identity } else { hidden_act },
                }
            })
            .collect();
        MlpParams { layers }
    }

    /// Network with every weight and bias set to zero.
    pub fn zeros(in_dim: usize, hidden: &[usize], out_dim: usize) -> Self {
        let mut p = Self::init(in_dim, hidden, out_dim, Activation::leaky(), &mut SeededRng::new(0));
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        p
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::out_dim)
            .collect()
    }

    /// Parameters in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Registers the parameters as graph variables.
    pub fn bind(&self, graph: &mut Graph<T>) -> BoundMlp {
        let nodes = self
            .layers
            .iter()
            .map(|l| {
                (
                    graph.variable(l.weight.clone()),
                    graph.variable(l.bias.clone()),
                    l.activation,
                )
            })
            .collect();
        BoundMlp { nodes }
    }

    /// Like [`bind`](Self::bind) but as constants, for networks held fixed.
    pub fn bind_frozen(&self, graph: &mut Graph<T>) -> BoundMlp {
        let nodes = self
            .layers
            .iter()
            .map(|l| {
                (
                    graph.constant(l.weight.clone()),
                    graph.constant(l.bias.clone()),
                    l.activation,
                )
            })
            .collect();
        BoundMlp { nodes }
    }

    /// Forward pass without a graph. Rows of `input` are samples.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        if input.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "network takes {} inputs, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut h = input.clone();
        for l in &self.layers {
            let mut z = h.matmul(&l.weight.transpose())?;
            let n = z.cols();
            let bias = l.bias.data();
            for (i, v) in z.data_mut().iter_mut().enumerate() {
                *v = l.activation.apply(*v + bias[i % n]);
            }
            h = z;
        }
        h.ensure_finite("network forward")
    }
}

/// Graph handles for a network's parameters.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    nodes: Vec<(NodeId, NodeId, Activation)>,
}

impl BoundMlp {
    /// Parameter nodes in the same order as [`MlpParams::tensors`].
    pub fn params(&self) -> Vec<NodeId> {
        self.nodes.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }

    pub fn forward<T: Scalar>(&self, graph: &mut Graph<T>, input: NodeId) -> Result<NodeId> {
        let in_dim = graph.value(self.nodes[0].0).cols();
        if graph.value(input).cols() != in_dim {
            return Err(Error::Shape(format!(
                "network takes {in_dim} inputs, got {}",
                graph.value(input).cols()
            )));
        }
        let mut h = input;
        for &(w, b, act) in &self.nodes {
            let wt = graph.transpose(w)?;
            let z = graph.matmul(h, wt)?;
            let z = graph.add_row(z, b)?;
            h = match act {
                Activation::Identity => z,
                Activation::LeakyRelu(s) => graph.leaky_relu(z, T::lit(s))?,
            };
        }
        Ok(h)
    }
}

/// Records a forward pass of `params` on `input` into `graph`, returning the
/// output node and the parameter nodes.
pub fn mlp_forward<T: Scalar>(
    params: &MlpParams<T>,
    input: NodeId,
    graph: &mut Graph<T>,
) -> Result<(NodeId, BoundMlp)> {
    let bound = params.bind(graph);
    let out = bound.forward(graph, input)?;
    Ok((out, bound))
}

/// Differentiable gradient of a scalar-headed network with respect to its
/// input rows. Each row of the result is the gradient of that row's output,
/// since rows do not interact.
pub fn input_gradient<T: Scalar>(bound: &BoundMlp, input: NodeId, graph: &mut Graph<T>) -> Result<NodeId> {
    let out = bound.forward(graph, input)?;
    if graph.value(out).cols() != 1 {
        return Err(Error::Shape(format!(
            "input gradient needs a scalar head, got {} outputs",
            graph.value(out).cols()
        )));
    }
    let total = graph.sum(out)?;
    Ok(graph.grad(total, &[input], true)?[0])
}

pub(crate) fn encode_layout<T: Scalar>(params: &MlpParams<T>, out: &mut Vec<u8>) {
    put_u32(out, params.layers.len() as u32);
    for l in &params.layers {
        put_u32(out, l.out_dim() as u32);
        put_u32(out, l.in_dim() as u32);
        let (code, slope) = l.activation.code();
        out.push(code);
        put_f64(out, slope);
    }
}

pub(crate) fn encode_payload<T: Scalar>(params: &MlpParams<T>, out: &mut Vec<u8>) {
    for t in params.tensors() {
        for &v in t.data() {
            put_f64(out, v.as_f64());
        }
    }
}

/// Reads a layout written by `encode_layout` as a zero network.
pub(crate) fn decode_layout<T: Scalar>(r: &mut Reader<'_>) -> Result<MlpParams<T>> {
    let n = r.u32()? as usize;
    if n == 0 || n > 1024 {
        return Err(Error::Data(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let out = r.u32()? as usize;
        let inp = r.u32()? as usize;
        if out == 0 || inp == 0 || out.saturating_mul(inp) > (1 << 28) {
            return Err(Error::Data(format!("implausible layer shape {out}x{inp}")));
        }
        let code = r.u8()?;
        let slope = r.f64()?;
        layers.push(Layer {
            weight: Tensor::zeros(out, inp),
            bias: Tensor::zeros(1, out),
            activation: Activation::from_code(code, slope)?,
        });
    }
    MlpParams::from_layers(layers)
}

pub(crate) fn decode_payload<T: Scalar>(params: &mut MlpParams<T>, r: &mut Reader<'_>) -> Result<()> {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            let x = r.f64()?;
            if !x.is_finite() {
                return Err(Error::NonFinite("stored parameter".into()));
            }
            *v = T::lit(x);
        }
    }
    Ok(())
}

/// Tensor-valued gradients in [`MlpParams::tensors`] order.
pub type MlpGrads<T> = Vec<Tensor<T>>;
