//! Reverse-mode differentiation tape.
//!
//! Every recorded value is produced by exactly one node and value ids are
//! handed out in recording order, so the node list is topologically sorted by
//! construction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::ops::{self, ConvSpec, UpsampleSpec};
use crate::tensor::{concat_channels, Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Input,
    Param,
}

#[derive(Debug, Clone)]
pub enum Op {
    Leaf {
        name: String,
        kind: LeafKind,
    },
    Add(ValueId, ValueId),
    Relu(ValueId),
    Transpose(ValueId),
    Conv {
        x: ValueId,
        weight: ValueId,
        bias: Option<ValueId>,
        spec: ConvSpec,
    },
    Concat(Vec<ValueId>),
    Upsample {
        x: ValueId,
        spec: UpsampleSpec,
    },
}

impl Op {
    fn inputs(&self) -> Vec<ValueId> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b) => vec![*a, *b],
            Op::Relu(a) | Op::Transpose(a) => vec![*a],
            Op::Conv { x, weight, bias, .. } => {
                let mut v = vec![*x, *weight];
                v.extend(bias);
                v
            }
            Op::Concat(parts) => parts.clone(),
            Op::Upsample { x, .. } => vec![*x],
        }
    }
}

/// A recorded convolution, as seen by cost instrumentation.
pub struct ConvRecord<'a, T> {
    /// Weight leaf name with its trailing `.weight` removed.
    pub layer: &'a str,
    pub spec: ConvSpec,
    pub x: &'a Tensor<T>,
    pub weight: &'a Tensor<T>,
    pub bias: Option<&'a Tensor<T>>,
}

/// Gradients of a scalar projection with respect to every leaf.
#[derive(Debug, Clone)]
pub struct GradientSet<T> {
    grads: BTreeMap<ValueId, Tensor<T>>,
}

impl<T: Element> GradientSet<T> {
    pub fn get(&self, id: ValueId) -> Option<&Tensor<T>> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ValueId, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Replaces one gradient. Test fixtures use this to corrupt a result.
    pub fn insert(&mut self, id: ValueId, grad: Tensor<T>) {
        self.grads.insert(id, grad);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    ops: Vec<Op>,
    values: Vec<Tensor<T>>,
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> ValueId {
        self.ops.push(op);
        self.values.push(value);
        ValueId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ValueId) -> Result<&Tensor<T>> {
        self.values
            .get(id.0)
            .ok_or_else(|| Error::Lookup(format!("value id {} not on tape of {} values", id.0, self.values.len())))
    }

    pub fn op(&self, id: ValueId) -> Result<&Op> {
        self.ops
            .get(id.0)
            .ok_or_else(|| Error::Lookup(format!("value id {} not on tape", id.0)))
    }

    /// All leaves in recording order.
    pub fn leaves(&self) -> impl Iterator<Item = (ValueId, &str, LeafKind)> {
        self.ops.iter().enumerate().filter_map(|(i, op)| match op {
            Op::Leaf { name, kind } => Some((ValueId(i), name.as_str(), *kind)),
            _ => None,
        })
    }

    pub fn find_leaf(&self, name: &str) -> Option<ValueId> {
        self.leaves().find(|(_, n, _)| *n == name).map(|(id, _, _)| id)
    }

    /// Ids of every tensor fed into a ReLU.
    pub fn relu_inputs(&self) -> Vec<ValueId> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Relu(a) => Some(*a),
                _ => None,
            })
            .collect()
    }

    pub fn conv_records(&self) -> Vec<ConvRecord<'_, T>> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Conv { x, weight, bias, spec } => {
                    let layer = match &self.ops[weight.0] {
                        Op::Leaf { name, .. } => name.strip_suffix(".weight").unwrap_or(name),
                        _ => "",
                    };
                    Some(ConvRecord {
                        layer,
                        spec: *spec,
                        x: &self.values[x.0],
                        weight: &self.values[weight.0],
                        bias: bias.map(|b| &self.values[b.0]),
                    })
                }
                _ => None,
            })
            .collect()
    }

    fn eval(op: &Op, values: &[Tensor<T>]) -> Result<Tensor<T>> {
        let v = |id: &ValueId| &values[id.0];
        match op {
            Op::Leaf { .. } => unreachable!("leaves are not evaluated"),
            Op::Add(a, b) => v(a).add(v(b)),
            Op::Relu(a) => Ok(ops::relu(v(a))),
            Op::Transpose(a) => Ok(v(a).transpose_hw()),
            Op::Conv { x, weight, bias, spec } => ops::conv2d(v(x), spec, v(weight), bias.as_ref().map(v)),
            Op::Concat(parts) => concat_channels(&parts.iter().map(|p| v(p).clone()).collect::<Vec<_>>()),
            Op::Upsample { x, spec } => ops::upsample(v(x), spec),
        }
    }

    /// Re-runs the recorded computation with some leaves replaced.
    ///
    /// Returns every value in id order. With no overrides the result is
    /// bit-identical to the recorded values.
    pub fn replay(&self, overrides: &[(ValueId, Tensor<T>)]) -> Result<Vec<Tensor<T>>> {
        for (id, t) in overrides {
            match self.op(*id)? {
                Op::Leaf { .. } if t.shape() == self.values[id.0].shape() => {}
                Op::Leaf { .. } => {
                    return Err(Error::shape(
                        "replay",
                        format!(
                            "override {} does not match leaf {}",
                            t.shape(),
                            self.values[id.0].shape()
                        ),
                    ))
                }
                _ => return Err(Error::Lookup(format!("value id {} is not a leaf", id.0))),
            }
        }
        let mut out: Vec<Tensor<T>> = Vec::with_capacity(self.values.len());
        for (i, op) in self.ops.iter().enumerate() {
            let t = match op {
                Op::Leaf { .. } => overrides
                    .iter()
                    .rev()
                    .find(|(id, _)| id.0 == i)
                    .map_or_else(|| self.values[i].clone(), |(_, t)| t.clone()),
                _ => Self::eval(op, &out)?,
            };
            out.push(t);
        }
        Ok(out)
    }

    /// Like [`Tape::replay`], but only recomputes values downstream of an
    /// override and shares the recorded tensors for everything else.
    pub fn replay_incremental(&self, overrides: &[(ValueId, Tensor<T>)]) -> Result<Vec<Tensor<T>>> {
        let mut dirty = vec![false; self.values.len()];
        for (id, t) in overrides {
            if !matches!(self.op(*id)?, Op::Leaf { .. }) || t.shape() != self.values[id.0].shape() {
                return Err(Error::shape(
                    "replay",
                    format!("override for value {} is not a matching leaf", id.0),
                ));
            }
            dirty[id.0] = true;
        }
        let mut out: Vec<Tensor<T>> = Vec::with_capacity(self.values.len());
        for (i, op) in self.ops.iter().enumerate() {
            let t = match op {
                Op::Leaf { .. } if dirty[i] => overrides
                    .iter()
                    .rev()
                    .find(|(id, _)| id.0 == i)
                    .map(|(_, t)| t.clone())
                    .expect("dirty leaf has an override"),
                Op::Leaf { .. } => self.values[i].clone(),
                _ if op.inputs().iter().any(|v| dirty[v.0]) => {
                    dirty[i] = true;
                    Self::eval(op, &out)?
                }
                _ => self.values[i].clone(),
            };
            out.push(t);
        }
        Ok(out)
    }

    /// Gradient of `sum(seed * value(target))` with respect to every leaf.
    ///
    /// Leaves the target does not depend on receive zero gradients.
    pub fn backward(&self, target: ValueId, seed: &Tensor<T>) -> Result<GradientSet<T>> {
        let target_value = self.value(target)?;
        if seed.shape() != target_value.shape() {
            return Err(Error::shape(
                "tape_backward",
                format!("seed {} does not match target {}", seed.shape(), target_value.shape()),
            ));
        }
        let mut needed = vec![false; target.0 + 1];
        needed[target.0] = true;
        for i in (0..=target.0).rev() {
            if needed[i] {
                for input in self.ops[i].inputs() {
                    needed[input.0] = true;
                }
            }
        }

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; target.0 + 1];
        grads[target.0] = Some(seed.clone());
        for i in (0..=target.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf { .. } = self.ops[i] {
                grads[i] = Some(g);
                continue;
            }
            for (input, contribution) in self.local_backward(&self.ops[i], &g)? {
                if !needed[input.0] {
                    continue;
                }
                grads[input.0] = Some(match grads[input.0].take() {
                    Some(acc) => acc.add(&contribution)?,
                    None => contribution,
                });
            }
        }

        let mut out = BTreeMap::new();
        for (id, _, _) in self.leaves() {
            let g = match grads.get(id.0).and_then(|g| g.clone()) {
                Some(g) => g,
                None => Tensor::zeros(self.values[id.0].shape()),
            };
            out.insert(id, g);
        }
        Ok(GradientSet { grads: out })
    }

    fn local_backward(&self, op: &Op, g: &Tensor<T>) -> Result<Vec<(ValueId, Tensor<T>)>> {
        let v = |id: &ValueId| &self.values[id.0];
        Ok(match op {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Relu(a) => vec![(*a, ops::relu_backward(v(a), g)?)],
            Op::Transpose(a) => vec![(*a, g.transpose_hw())],
            Op::Conv { x, weight, bias, spec } => {
                let grads = ops::conv2d_backward(v(x), spec, v(weight), g)?;
                let mut out = vec![(*x, grads.dx), (*weight, grads.dw)];
                if let (Some(b), Some(db)) = (bias, grads.db) {
                    out.push((*b, db));
                }
                out
            }
            Op::Concat(parts) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let c = v(p).shape().c();
                    out.push((*p, g.slice_channels(start, c)?));
                    start += c;
                }
                out
            }
            Op::Upsample { x, spec } => vec![(*x, ops::upsample_backward(v(x).shape(), spec, g)?)],
        })
    }
}

impl<T: Element> Graph<T> for Tape<T> {
    type Value = ValueId;

    fn input(&mut self, name: &str, t: Tensor<T>) -> ValueId {
        self.push(
            Op::Leaf {
                name: name.to_string(),
                kind: LeafKind::Input,
            },
            t,
        )
    }

    fn param(&mut self, name: &str, t: &Tensor<T>) -> ValueId {
        self.push(
            Op::Leaf {
                name: name.to_string(),
                kind: LeafKind::Param,
            },
            t.clone(),
        )
    }

    fn tensor<'a>(&'a self, v: &'a ValueId) -> &'a Tensor<T> {
        &self.values[v.0]
    }

    fn add(&mut self, a: &ValueId, b: &ValueId) -> Result<ValueId> {
        let op = Op::Add(*a, *b);
        let t = Self::eval(&op, &self.values)?;
        Ok(self.push(op, t))
    }

    fn relu(&mut self, a: &ValueId) -> Result<ValueId> {
        let op = Op::Relu(*a);
        let t = Self::eval(&op, &self.values)?;
        Ok(self.push(op, t))
    }

    fn transpose_hw(&mut self, a: &ValueId) -> Result<ValueId> {
        let op = Op::Transpose(*a);
        let t = Self::eval(&op, &self.values)?;
        Ok(self.push(op, t))
    }

    fn conv2d(&mut self, x: &ValueId, spec: &ConvSpec, weight: &ValueId, bias: Option<&ValueId>) -> Result<ValueId> {
        let op = Op::Conv {
            x: *x,
            weight: *weight,
            bias: bias.copied(),
            spec: *spec,
        };
        let t = Self::eval(&op, &self.values)?;
        Ok(self.push(op, t))
    }

    fn concat(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        let op = Op::Concat(parts.to_vec());
        let t = Self::eval(&op, &self.values)?;
        Ok(self.push(op, t))
    }

    fn upsample(&mut self, x: &ValueId, spec: &UpsampleSpec) -> Result<ValueId> {
        let op = Op::Upsample { x: *x, spec: *spec };
        let t = Self::eval(&op, &self.values)?;
        Ok(self.push(op, t))
    }
}
