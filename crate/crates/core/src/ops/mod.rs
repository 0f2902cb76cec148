//! The neural operation set: convolution, ReLU, channel concatenation and
//! upsampling, each with a forward and a reverse rule.

mod conv;
mod upsample;

pub use conv::{conv2d, conv2d_backward, direct_conv_oracle, direct_conv_oracle_counted, ConvGrads, ConvSpec};
pub use upsample::{upsample, upsample_backward, UpsampleMode, UpsampleSpec};

pub use crate::tensor::concat_channels;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Passes gradient where the forward input was strictly positive; zero at 0.
pub fn relu_backward<T: Element>(x: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != d_out.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{} vs {}", x.shape(), d_out.shape()),
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_vec(x.shape(), data)
}
