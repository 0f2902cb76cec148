//! Dataflow builder shared by eager evaluation and tape recording.
//!
//! Blocks are written once against [`Graph`]; [`Eager`] evaluates them
//! immediately and [`crate::tape::Tape`] records them for reverse-mode
//! differentiation and replay.

use crate::error::Result;
use crate::ops::{self, ConvSpec, UpsampleSpec};
use crate::tensor::{concat_channels, Element, Tensor};

pub trait Graph<T: Element> {
    type Value: Clone;

    /// Registers a data input.
    fn input(&mut self, name: &str, t: Tensor<T>) -> Self::Value;
    /// Registers a learned parameter.
    fn param(&mut self, name: &str, t: &Tensor<T>) -> Self::Value;
    fn tensor<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<T>;

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn relu(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn transpose_hw(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn conv2d(
        &mut self,
        x: &Self::Value,
        spec: &ConvSpec,
        weight: &Self::Value,
        bias: Option<&Self::Value>,
    ) -> Result<Self::Value>;
    fn concat(&mut self, parts: &[Self::Value]) -> Result<Self::Value>;
    fn upsample(&mut self, x: &Self::Value, spec: &UpsampleSpec) -> Result<Self::Value>;
}

/// Immediate evaluation; values are the tensors themselves.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl<T: Element> Graph<T> for Eager {
    type Value = Tensor<T>;

    fn input(&mut self, _name: &str, t: Tensor<T>) -> Tensor<T> {
        t
    }

    fn param(&mut self, _name: &str, t: &Tensor<T>) -> Tensor<T> {
        t.clone()
    }

    fn tensor<'a>(&'a self, v: &'a Tensor<T>) -> &'a Tensor<T> {
        v
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        a.add(b)
    }

    fn relu(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(ops::relu(a))
    }

    fn transpose_hw(&mut self, a: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(a.transpose_hw())
    }

    fn conv2d(
        &mut self,
        x: &Tensor<T>,
        spec: &ConvSpec,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        ops::conv2d(x, spec, weight, bias)
    }

    fn concat(&mut self, parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        concat_channels(parts)
    }

    fn upsample(&mut self, x: &Tensor<T>, spec: &UpsampleSpec) -> Result<Tensor<T>> {
        ops::upsample(x, spec)
    }
}
