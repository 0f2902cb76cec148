use crate::error::Result;
use crate::graph::Graph;
use crate::ops::ConvSpec;
use crate::rng::UniformStream;
use crate::tensor::{Element, Tensor};

/// A named convolution with its weights.
#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Element> ConvLayer<T> {
    /// Weights and bias drawn from `uniform(-s, s)`, `s = 1 / sqrt(fan_in)`,
    /// weight elements first.
    pub fn init(name: impl Into<String>, spec: ConvSpec, stream: &mut UniformStream) -> Result<Self> {
        spec.validate()?;
        let fan_in = (spec.in_per_group() * spec.kernel_h * spec.kernel_w) as f64;
        let s = 1.0 / fan_in.sqrt();
        let mut draw = |shape: crate::tensor::Shape| {
            let data = (0..shape.numel()).map(|_| T::from_f64(stream.next_in(-s, s))).collect();
            Tensor::from_vec(shape, data)
        };
        let weight = draw(spec.weight_shape())?;
        let bias = spec.bias_shape().map(&mut draw).transpose()?;
        Ok(Self {
            name: name.into(),
            spec,
            weight,
            bias,
        })
    }

    pub fn zeros(name: impl Into<String>, spec: ConvSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            name: name.into(),
            spec,
            weight: Tensor::zeros(spec.weight_shape()),
            bias: spec.bias_shape().map(Tensor::zeros),
        })
    }

    pub fn map_weights(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Self {
        Self {
            name: self.name.clone(),
            spec: self.spec,
            weight: f(&self.weight),
            bias: self.bias.as_ref().map(&f),
        }
    }

    /// Registers the weights on `g` and returns their handles.
    pub fn register<G: Graph<T>>(&self, g: &mut G) -> (G::Value, Option<G::Value>) {
        let w = g.param(&format!("{}.weight", self.name), &self.weight);
        let b = self.bias.as_ref().map(|b| g.param(&format!("{}.bias", self.name), b));
        (w, b)
    }

    pub fn apply<G: Graph<T>>(&self, g: &mut G, x: &G::Value) -> Result<G::Value> {
        let (w, b) = self.register(g);
        g.conv2d(x, &self.spec, &w, b.as_ref())
    }

    /// Number of stored weight and bias elements.
    pub fn numel(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, |b| b.numel())
    }
}
