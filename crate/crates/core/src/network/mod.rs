//! Compact convolutional home-vector regressor.
//!
//! Two 5x5 stride-4 valid convolutions (1 -> 2 -> 4 channels) followed by a
//! fully connected layer with two outputs; every layer ends in `tanh`. At the
//! 201x1800 input resolution the feature maps are 2x50x449 and 4x12x112 and
//! the network holds 11,010 parameters.

mod io;
mod layers;
mod model;
mod train;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, NumCast};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omni::PanoramaLayout;

pub use io::{decode_params, encode_params, load_params, save_params, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    backward, forward, forward_input, mse_loss, output_gradients_wrt_conv2, ActivationCache,
    FeatureMap, OutputComponent,
};
pub use train::{
    train, train_epoch, LossTrace, OptimizerKind, Precision, TrainConfig, TrainingSamples,
};

/// Floating-point type the network can run in.
pub trait Scalar: Float + Sum + Send + Sync + Debug + Default + 'static {
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("representable")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Layer geometry, parametric in the input resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_height: usize,
    pub input_width: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Output channels of each convolution; the input has one channel.
    pub conv_channels: Vec<usize>,
    pub outputs: usize,
}

/// Shape of one convolution stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvShape {
    pub fn weight_len(&self, kernel: usize) -> usize {
        self.out_channels * self.in_channels * kernel * kernel
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_height * self.out_width
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }
}

impl Architecture {
    /// The two-convolution network for a `height` x `width` grayscale input.
    pub fn compact(height: usize, width: usize) -> Self {
        Architecture {
            input_height: height,
            input_width: width,
            kernel: 5,
            stride: 4,
            conv_channels: vec![2, 4],
            outputs: 2,
        }
    }

    pub fn for_layout(layout: &PanoramaLayout) -> Self {
        Self::compact(layout.height, layout.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() {
            return Err(Error::InvalidArgument(
                "architecture needs at least one convolution layer".into(),
            ));
        }
        if self.kernel == 0 || self.stride == 0 || self.outputs == 0 {
            return Err(Error::InvalidArgument(
                "kernel, stride and output count must be positive".into(),
            ));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        let (mut h, mut w) = (self.input_height, self.input_width);
        for (i, _) in self.conv_channels.iter().enumerate() {
            if h < self.kernel || w < self.kernel {
                return Err(Error::Shape(format!(
                    "convolution {} receives {h}x{w}, smaller than the {k}x{k} kernel",
                    i + 1,
                    k = self.kernel
                )));
            }
            h = (h - self.kernel) / self.stride + 1;
            w = (w - self.kernel) / self.stride + 1;
        }
        Ok(())
    }

    /// Per-layer shapes; assumes a validated architecture.
    pub fn conv_shapes(&self) -> Vec<ConvShape> {
        let mut shapes = Vec::with_capacity(self.conv_channels.len());
        let (mut c, mut h, mut w) = (1, self.input_height, self.input_width);
        for &oc in &self.conv_channels {
            let oh = (h - self.kernel) / self.stride + 1;
            let ow = (w - self.kernel) / self.stride + 1;
            shapes.push(ConvShape {
                in_channels: c,
                in_height: h,
                in_width: w,
                out_channels: oc,
                out_height: oh,
                out_width: ow,
            });
            (c, h, w) = (oc, oh, ow);
        }
        shapes
    }

    /// Length of the flattened final feature map.
    pub fn feature_len(&self) -> usize {
        self.conv_shapes().last().map_or(0, |s| s.out_len())
    }

    pub fn param_count(&self) -> usize {
        let conv: usize = self
            .conv_shapes()
            .iter()
            .map(|s| s.weight_len(self.kernel) + s.out_channels)
            .sum();
        conv + self.outputs * self.feature_len() + self.outputs
    }

    /// Offsets of each parameter tensor in the flat parameter vector.
    fn tensor_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize| {
            out.push((name, at..at + len));
            at += len;
        };
        for (i, s) in self.conv_shapes().iter().enumerate() {
            push(format!("conv{}.weight", i + 1), s.weight_len(self.kernel));
            push(format!("conv{}.bias", i + 1), s.out_channels);
        }
        push("fc.weight".into(), self.outputs * self.feature_len());
        push("fc.bias".into(), self.outputs);
        out
    }
}

/// Weights and biases stored in one flat vector.
///
/// Layout: for each convolution its weights `[out][in][ky][kx]` then biases,
/// followed by the fully connected weights `[output][feature]` and biases.
/// Gradients use the same type and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    arch: Architecture,
    ranges: Vec<(String, std::ops::Range<usize>)>,
    data: Vec<T>,
}

/// Double-precision parameters, the storage and training default.
pub type NetworkParams = Params<f64>;

impl<T: Scalar> Params<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let ranges = arch.tensor_ranges();
        let data = vec![T::zero(); arch.param_count()];
        Ok(Params { arch, ranges, data })
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k2 = p.arch.kernel * p.arch.kernel;
        let fan_ins: Vec<usize> = p
            .arch
            .conv_shapes()
            .iter()
            .map(|s| s.in_channels * k2)
            .chain(std::iter::once(p.arch.feature_len()))
            .collect();
        for (layer, fan_in) in fan_ins.into_iter().enumerate() {
            let bound = (1.0 / fan_in as f64).sqrt();
            for t in [2 * layer, 2 * layer + 1] {
                let range = p.ranges[t].1.clone();
                for v in &mut p.data[range] {
                    *v = T::of(rng.random_range(-bound..bound));
                }
            }
        }
        Ok(p)
    }

    pub fn from_vec(arch: Architecture, data: Vec<T>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if data.len() != p.data.len() {
            return Err(Error::Shape(format!(
                "{} values supplied for {} parameters",
                data.len(),
                p.data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Named tensors in storage order.
    pub fn groups(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.ranges
            .iter()
            .map(|(n, r)| (n.as_str(), &self.data[r.clone()]))
    }

    pub fn group_names(&self) -> Vec<String> {
        self.ranges.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn group_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.ranges
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub(crate) fn conv_weight(&self, layer: usize) -> &[T] {
        &self.data[self.ranges[2 * layer].1.clone()]
    }

    pub(crate) fn conv_bias(&self, layer: usize) -> &[T] {
        &self.data[self.ranges[2 * layer + 1].1.clone()]
    }

    pub(crate) fn conv_weight_mut(&mut self, layer: usize) -> &mut [T] {
        let r = self.ranges[2 * layer].1.clone();
        &mut self.data[r]
    }

    pub(crate) fn conv_bias_mut(&mut self, layer: usize) -> &mut [T] {
        let r = self.ranges[2 * layer + 1].1.clone();
        &mut self.data[r]
    }

    pub fn fc_weight(&self) -> &[T] {
        let n = self.ranges.len();
        &self.data[self.ranges[n - 2].1.clone()]
    }

    pub fn fc_bias(&self) -> &[T] {
        let n = self.ranges.len();
        &self.data[self.ranges[n - 1].1.clone()]
    }

    pub(crate) fn fc_weight_mut(&mut self) -> &mut [T] {
        let r = self.ranges[self.ranges.len() - 2].1.clone();
        &mut self.data[r]
    }

    pub(crate) fn fc_bias_mut(&mut self) -> &mut [T] {
        let r = self.ranges[self.ranges.len() - 1].1.clone();
        &mut self.data[r]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            arch: self.arch.clone(),
            ranges: self.ranges.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }
}
