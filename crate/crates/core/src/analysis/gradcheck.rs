//! Central-difference verification of tape gradients.
//!
//! Each sampled coordinate `x` is checked through a scalar projection
//! `Σ_j Σ_i s_j[i] · out_j[i]`. The base weights are drawn uniformly from
//! `[-1, 1)`; per coordinate their signs are aligned with the observed output
//! change `out(x + ε) - out(x - ε)`, so the projected derivative cannot
//! cancel down to the roundoff floor. Outputs the perturbation leaves
//! unchanged keep the base weights, which still exposes spurious analytic
//! gradient there. The analytic side is one backward pass per output with the
//! same weights.
//!
//! A coordinate is excluded when its perturbation pushes a ReLU input that
//! lies within `relu_margin` of zero onto or across zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, UniformStream};
use crate::tape::{GradientSet, LeafKind, Tape, ValueId};
use crate::tensor::{Init, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Coordinates sampled per leaf when the leaf is larger than this.
    pub max_coords: usize,
    pub seed: u64,
    pub relu_margin: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-6,
            max_coords: 64,
            seed: 0,
            relu_margin: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub kind: String,
    pub numel: usize,
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub dtype: String,
    pub eps: f64,
    pub tol: f64,
    pub groups: Vec<GroupReport>,
    pub max_rel_error: f64,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1e-8f64.max(analytic.abs()).max(numeric.abs())
}

/// Records a graph with `build`, differentiates it, and checks every leaf.
pub fn gradcheck<F>(build: F, opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    F: FnOnce(&mut Tape<f64>) -> Result<Vec<ValueId>>,
{
    let mut tape = Tape::new();
    let outputs = build(&mut tape)?;
    let seeds = projection_seeds(&tape, &outputs, opts.seed)?;
    check_gradients(&tape, &outputs, &seeds, opts, |s| {
        analytic_gradients(&tape, &outputs, s)
    })
}

pub fn projection_seeds(tape: &Tape<f64>, outputs: &[ValueId], seed: u64) -> Result<Vec<Tensor<f64>>> {
    outputs
        .iter()
        .enumerate()
        .map(|(j, id)| {
            Tensor::create(
                tape.value(*id)?.shape(),
                Init::Uniform {
                    seed: derive_seed(seed, 1000 + j as u64),
                    lo: -1.0,
                    hi: 1.0,
                },
            )
        })
        .collect()
}

/// Sum of per-output backward passes.
pub fn analytic_gradients(tape: &Tape<f64>, outputs: &[ValueId], seeds: &[Tensor<f64>]) -> Result<GradientSet<f64>> {
    let mut total: Option<GradientSet<f64>> = None;
    for (id, seed) in outputs.iter().zip(seeds) {
        let g = tape.backward(*id, seed)?;
        total = Some(match total {
            None => g,
            Some(mut acc) => {
                for (leaf, grad) in g.iter() {
                    let sum = acc.get(leaf).expect("same leaves").add(grad)?;
                    acc.insert(leaf, sum);
                }
                acc
            }
        });
    }
    total.ok_or_else(|| Error::Lookup("gradcheck needs at least one output".into()))
}

fn sample_coords(numel: usize, max: usize, seed: u64) -> Vec<usize> {
    if numel <= max {
        return (0..numel).collect();
    }
    // Partial Fisher-Yates over the index range.
    let mut idx: Vec<usize> = (0..numel).collect();
    let mut s = UniformStream::new(seed);
    for i in 0..max {
        let j = i + s.next_index(numel - i);
        idx.swap(i, j);
    }
    let mut v = idx[..max].to_vec();
    v.sort_unstable();
    v
}

/// `Σ_j s_j · (plus_j - minus_j)` and the sign-aligned weights behind it.
fn aligned_difference(
    seeds: &[Tensor<f64>],
    plus: &[&Tensor<f64>],
    minus: &[&Tensor<f64>],
) -> Result<(f64, Vec<Tensor<f64>>)> {
    let mut total = 0.0;
    let mut aligned = Vec::with_capacity(seeds.len());
    for ((seed, p), m) in seeds.iter().zip(plus).zip(minus) {
        let mut w = Vec::with_capacity(seed.numel());
        for ((&s, &p), &m) in seed.data().iter().zip(p.data()).zip(m.data()) {
            let d = p - m;
            let s = if d == 0.0 { s } else { s.abs().copysign(d) };
            total += s * d;
            w.push(s);
        }
        aligned.push(Tensor::from_vec(seed.shape(), w)?);
    }
    Ok((total, aligned))
}

/// Compares gradients from `backward` against central differences of the
/// recorded graph.
///
/// `backward` maps one projection weight tensor per output to the summed
/// leaf gradients.
pub fn check_gradients<B>(
    tape: &Tape<f64>,
    outputs: &[ValueId],
    seeds: &[Tensor<f64>],
    opts: &GradcheckOptions,
    backward: B,
) -> Result<GradcheckReport>
where
    B: Fn(&[Tensor<f64>]) -> Result<GradientSet<f64>>,
{
    let relu_inputs = tape.relu_inputs();
    let leaves: Vec<(ValueId, String, LeafKind)> = tape.leaves().map(|(id, n, k)| (id, n.to_string(), k)).collect();
    let mut groups = Vec::with_capacity(leaves.len());

    for (id, name, kind) in leaves {
        let base = tape.value(id)?;
        let coords = sample_coords(base.numel(), opts.max_coords, derive_seed(opts.seed, id.0 as u64));
        let mut max_err = 0.0f64;
        let mut excluded = 0;
        for &flat in &coords {
            let x0 = base.data()[flat];
            let (xp, xm) = (x0 + opts.eps, x0 - opts.eps);
            let plus = tape.replay_incremental(&[(id, base.with_value(flat, xp))])?;
            let minus = tape.replay_incremental(&[(id, base.with_value(flat, xm))])?;

            let near_kink = relu_inputs.iter().any(|r| {
                let (b, p, m) = (tape.value(*r).expect("recorded"), &plus[r.0], &minus[r.0]);
                b.data().iter().zip(p.data()).zip(m.data()).any(|((&b, &p), &m)| {
                    b.abs() < opts.relu_margin && (b * p <= 0.0 || b * m <= 0.0) && (p != b || m != b)
                })
            });
            if near_kink {
                excluded += 1;
                continue;
            }

            let p: Vec<_> = outputs.iter().map(|o| &plus[o.0]).collect();
            let m: Vec<_> = outputs.iter().map(|o| &minus[o.0]).collect();
            let (diff, weights) = aligned_difference(seeds, &p, &m)?;
            // The rounded step, exact by Sterbenz.
            let numeric = diff / (xp - xm);
            if !numeric.is_finite() {
                return Err(Error::Numeric {
                    op: "gradcheck",
                    detail: format!("non-finite numerical derivative for `{name}`[{flat}]"),
                });
            }
            let grads = backward(&weights)?;
            let analytic = grads
                .get(id)
                .ok_or_else(|| Error::Lookup(format!("no analytic gradient for leaf `{name}`")))?
                .data()[flat];
            max_err = max_err.max(relative_error(analytic, numeric));
        }
        groups.push(GroupReport {
            name,
            kind: match kind {
                LeafKind::Input => "input".into(),
                LeafKind::Param => "param".into(),
            },
            numel: base.numel(),
            checked: coords.len() - excluded,
            excluded,
            max_rel_error: max_err,
            pass: max_err < opts.tol,
        });
    }

    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        dtype: "f64".into(),
        eps: opts.eps,
        tol: opts.tol,
        pass: groups.iter().all(|g| g.pass),
        max_rel_error,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::ops::ConvSpec;
    use crate::tensor::Shape;

    fn rand(shape: Shape, seed: u64) -> Tensor<f64> {
        Tensor::create(
            shape,
            Init::Uniform {
                seed,
                lo: -1.0,
                hi: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn bias_add_is_exact() {
        let r = gradcheck(
            |t| {
                let x = t.input("x", rand(Shape::new(1, 2, 3, 3), 1));
                let b = t.param("b", &rand(Shape::new(1, 2, 3, 3), 2));
                Ok(vec![t.add(&x, &b)?])
            },
            &GradcheckOptions::default(),
        )
        .unwrap();
        assert!(r.pass);
        assert!(r.max_rel_error < 1e-10, "{}", r.max_rel_error);
    }

    #[test]
    fn single_conv_passes() {
        let spec = ConvSpec::same(3, 2, 3, 3, 1, true);
        let r = gradcheck(
            |t| {
                let x = t.input("x", rand(Shape::new(2, 3, 5, 4), 1));
                let w = t.param("c.weight", &rand(spec.weight_shape(), 2));
                let b = t.param("c.bias", &rand(spec.bias_shape().unwrap(), 3));
                Ok(vec![t.conv2d(&x, &spec, &w, Some(&b))?])
            },
            &GradcheckOptions::default(),
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.groups.len(), 3);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let spec = ConvSpec::same(2, 2, 3, 3, 1, false);
        let mut tape = Tape::new();
        let x = tape.input("x", rand(Shape::new(1, 2, 4, 4), 1));
        let w = tape.param("c.weight", &rand(spec.weight_shape(), 2));
        let y = tape.conv2d(&x, &spec, &w, None).unwrap();
        let outputs = vec![y];
        let seeds = projection_seeds(&tape, &outputs, 0).unwrap();
        let corrupted = |s: &[Tensor<f64>]| {
            let mut g = analytic_gradients(&tape, &outputs, s)?;
            let bad = g.get(w).unwrap().scale(1.01);
            g.insert(w, bad);
            Ok(g)
        };
        let r = check_gradients(&tape, &outputs, &seeds, &GradcheckOptions::default(), corrupted).unwrap();
        assert!(!r.pass);
        assert!(r.groups.iter().find(|g| g.name == "c.weight").is_some_and(|g| !g.pass));
        assert!(r.groups.iter().find(|g| g.name == "x").is_some_and(|g| g.pass));
    }

    #[test]
    fn sampling_is_bounded_and_deterministic() {
        let a = sample_coords(1000, 64, 3);
        assert_eq!(a.len(), 64);
        assert_eq!(a, sample_coords(1000, 64, 3));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_coords(5, 64, 0), vec![0, 1, 2, 3, 4]);
    }
}
