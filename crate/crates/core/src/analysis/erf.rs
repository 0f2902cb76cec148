//! Effective receptive field of a single output unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neck::{register_inputs, PyramidFeatures};
use crate::tape::{Tape, ValueId};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErfThreshold {
    /// Any nonzero gradient counts. Suited to positive-weight configurations.
    ExactZero,
    /// Gradients above `factor · max` count.
    Relative(f64),
}

impl Default for ErfThreshold {
    fn default() -> Self {
        ErfThreshold::Relative(1e-12)
    }
}

/// Inclusive bounding box `(y0, x0, y1, x1)`.
pub type SupportBox = (usize, usize, usize, usize);

#[derive(Debug, Clone, Serialize)]
pub struct ErfReport {
    /// 0-based pyramid level.
    pub level: usize,
    pub coord: (usize, usize),
    pub channel: usize,
    pub threshold: ErfThreshold,
    pub support_box: Option<SupportBox>,
    pub support_cardinality: usize,
    pub max_magnitude: f64,
    /// `Σ_c |∂out/∂x|` over the level's input, shape `(1, 1, H, W)`.
    #[serde(skip)]
    pub map: Tensor<f64>,
}

impl ErfReport {
    pub fn support_size(&self) -> Option<(usize, usize)> {
        self.support_box.map(|(y0, x0, y1, x1)| (y1 - y0 + 1, x1 - x0 + 1))
    }
}

/// Support mask of a gradient-magnitude map.
pub fn support_mask(map: &Tensor<f64>, threshold: ErfThreshold) -> Vec<bool> {
    let cut = match threshold {
        ErfThreshold::ExactZero => 0.0,
        ErfThreshold::Relative(f) => f * map.max_abs(),
    };
    map.data().iter().map(|&v| v > cut).collect()
}

/// Gradient of output unit `(0, channel, y, x)` at `level` with respect to
/// the same level's input.
///
/// `build` receives the registered level inputs and returns one output per
/// level.
pub fn erf_map<F>(
    build: F,
    feats: &PyramidFeatures<f64>,
    level: usize,
    coord: (usize, usize),
    channel: usize,
    threshold: ErfThreshold,
) -> Result<ErfReport>
where
    F: FnOnce(&mut Tape<f64>, &[ValueId]) -> Result<Vec<ValueId>>,
{
    let in_shape = feats
        .levels
        .get(level)
        .ok_or_else(|| {
            Error::Lookup(format!(
                "level {} not in a {}-level pyramid",
                level + 1,
                feats.levels.len()
            ))
        })?
        .shape();
    let mut tape = Tape::new();
    let inputs = register_inputs(&mut tape, feats);
    let outputs = build(&mut tape, &inputs)?;
    let out_id = *outputs
        .get(level)
        .ok_or_else(|| Error::Lookup(format!("graph produced no output for level {}", level + 1)))?;
    let out_shape = tape.value(out_id)?.shape();
    let (y, x) = coord;
    if y >= out_shape.h() || x >= out_shape.w() || channel >= out_shape.c() {
        return Err(Error::Lookup(format!(
            "unit (c={channel}, y={y}, x={x}) outside output {out_shape}"
        )));
    }
    let seed = Tensor::zeros(out_shape).with_value(out_shape.index(0, channel, y, x), 1.0);
    let grads = tape.backward(out_id, &seed)?;
    let g = grads.get(inputs[level]).expect("inputs are leaves");

    let (h, w) = (in_shape.h(), in_shape.w());
    let mut map = vec![0.0; h * w];
    for c in 0..in_shape.c() {
        for (i, m) in map.iter_mut().enumerate() {
            *m += g.at(0, c, i / w, i % w).abs();
        }
    }
    let map = Tensor::from_vec(Shape::new(1, 1, h, w), map)?;
    let mask = support_mask(&map, threshold);
    let mut bbox: Option<SupportBox> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (yy, xx) = (i / w, i % w);
        bbox = Some(match bbox {
            None => (yy, xx, yy, xx),
            Some((y0, x0, y1, x1)) => (y0.min(yy), x0.min(xx), y1.max(yy), x1.max(xx)),
        });
    }
    Ok(ErfReport {
        level,
        coord,
        channel,
        threshold,
        support_box: bbox,
        support_cardinality: mask.iter().filter(|&&m| m).count(),
        max_magnitude: map.max_abs(),
        map,
    })
}
