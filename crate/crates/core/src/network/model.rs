use super::layers::{conv_backward, conv_forward};
use super::{Params, Scalar};
use crate::error::{Error, Result};
use crate::geometry::HomeVector;
use crate::omni::PanoramaImage;

/// Intermediate values of one forward pass, needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ActivationCache<T> {
    pub input: Vec<T>,
    /// Pre-activation maps per convolution, `[channel][row][col]`.
    pub conv_pre: Vec<Vec<T>>,
    /// Post-`tanh` maps per convolution.
    pub conv_post: Vec<Vec<T>>,
    pub fc_pre: Vec<T>,
    pub output: Vec<T>,
}

/// Forward pass on a flattened single-channel input.
pub fn forward_input<T: Scalar>(
    params: &Params<T>,
    input: &[T],
) -> Result<(HomeVector, ActivationCache<T>)> {
    let arch = params.architecture();
    let expected = arch.input_height * arch.input_width;
    if input.len() != expected {
        return Err(Error::Shape(format!(
            "network expects {}x{} inputs ({expected} values), got {}",
            arch.input_height,
            arch.input_width,
            input.len()
        )));
    }
    let shapes = arch.conv_shapes();
    let mut conv_pre = Vec::with_capacity(shapes.len());
    let mut conv_post: Vec<Vec<T>> = Vec::with_capacity(shapes.len());
    for (l, s) in shapes.iter().enumerate() {
        let src: &[T] = if l == 0 { input } else { &conv_post[l - 1] };
        let mut pre = vec![T::zero(); s.out_len()];
        let mut post = vec![T::zero(); s.out_len()];
        conv_forward(
            s,
            arch.kernel,
            arch.stride,
            src,
            params.conv_weight(l),
            params.conv_bias(l),
            &mut pre,
            &mut post,
        );
        conv_pre.push(pre);
        conv_post.push(post);
    }
    let features = conv_post.last().expect("at least one convolution");
    let n = features.len();
    let w = params.fc_weight();
    let fc_pre: Vec<T> = params
        .fc_bias()
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            w[k * n..(k + 1) * n]
                .iter()
                .zip(features)
                .fold(b, |acc, (&wi, &x)| acc + wi * x)
        })
        .collect();
    let output: Vec<T> = fc_pre.iter().map(|v| v.tanh()).collect();
    let pred = HomeVector::new(output[0].as_f64(), output.get(1).map_or(0.0, |v| v.as_f64()));
    Ok((
        pred,
        ActivationCache {
            input: input.to_vec(),
            conv_pre,
            conv_post,
            fc_pre,
            output,
        },
    ))
}

/// Forward pass on a panorama; its resolution must match the architecture.
pub fn forward<T: Scalar>(
    params: &Params<T>,
    view: &PanoramaImage,
) -> Result<(HomeVector, ActivationCache<T>)> {
    let arch = params.architecture();
    if view.layout.height != arch.input_height || view.layout.width != arch.input_width {
        return Err(Error::Shape(format!(
            "view is {}x{} but the network expects {}x{}",
            view.layout.height, view.layout.width, arch.input_height, arch.input_width
        )));
    }
    let input: Vec<T> = view.image.data().iter().map(|&v| T::of(v as f64)).collect();
    forward_input(params, &input)
}

/// Mean of the squared component differences.
pub fn mse_loss(pred: HomeVector, label: HomeVector) -> f64 {
    ((pred.x - label.x).powi(2) + (pred.y - label.y).powi(2)) / 2.0
}

/// Exact gradient of [`mse_loss`] with respect to every parameter.
pub fn backward<T: Scalar>(
    params: &Params<T>,
    cache: &ActivationCache<T>,
    label: HomeVector,
) -> Params<T> {
    let arch = params.architecture();
    let mut grad = Params::zeros(arch.clone()).expect("architecture already validated");
    let target = [T::of(label.x), T::of(label.y)];
    let scale = T::of(2.0 / cache.output.len() as f64);
    // gradient w.r.t. the fully connected pre-activations
    let d_fc: Vec<T> = cache
        .output
        .iter()
        .zip(target)
        .map(|(&y, t)| scale * (y - t) * (T::one() - y * y))
        .collect();

    let features = cache.conv_post.last().expect("at least one convolution");
    let n = features.len();
    let mut d_features = vec![T::zero(); n];
    {
        let w = params.fc_weight();
        let gw = grad.fc_weight_mut();
        for (k, &d) in d_fc.iter().enumerate() {
            for f in 0..n {
                gw[k * n + f] = d * features[f];
                d_features[f] = d_features[f] + d * w[k * n + f];
            }
        }
    }
    grad.fc_bias_mut().copy_from_slice(&d_fc);

    let shapes = arch.conv_shapes();
    let mut d_post = d_features;
    for l in (0..shapes.len()).rev() {
        let s = &shapes[l];
        let input: &[T] = if l == 0 {
            &cache.input
        } else {
            &cache.conv_post[l - 1]
        };
        let mut d_input = (l > 0).then(|| vec![T::zero(); s.in_len()]);
        let mut d_weight = vec![T::zero(); s.weight_len(arch.kernel)];
        let mut d_bias = vec![T::zero(); s.out_channels];
        conv_backward(
            s,
            arch.kernel,
            arch.stride,
            input,
            params.conv_weight(l),
            &cache.conv_post[l],
            &d_post,
            &mut d_weight,
            &mut d_bias,
            d_input.as_deref_mut(),
        );
        grad.conv_weight_mut(l).copy_from_slice(&d_weight);
        grad.conv_bias_mut(l).copy_from_slice(&d_bias);
        if let Some(d) = d_input {
            d_post = d;
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputComponent {
    /// Lateral coordinate.
    X,
    /// Forward coordinate.
    Y,
}

/// Gradient map over the last convolution's activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// Sum of absolute values over channels, `[row][col]`.
    pub fn magnitude(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        (0..plane)
            .map(|i| (0..self.channels).map(|c| self.data[c * plane + i].abs()).sum())
            .collect()
    }
}

/// Partial derivatives of one network output with respect to the post-`tanh`
/// activations of the last convolution.
pub fn output_gradients_wrt_conv2<T: Scalar>(
    params: &Params<T>,
    view: &PanoramaImage,
    output: OutputComponent,
) -> Result<FeatureMap> {
    let (_, cache) = forward(params, view)?;
    let k = match output {
        OutputComponent::X => 0,
        OutputComponent::Y => 1,
    };
    let y = cache.output[k];
    let dtanh = T::one() - y * y;
    let shape = *params
        .architecture()
        .conv_shapes()
        .last()
        .expect("at least one convolution");
    let n = shape.out_len();
    let data = params.fc_weight()[k * n..(k + 1) * n]
        .iter()
        .map(|&w| (dtanh * w).as_f64())
        .collect();
    Ok(FeatureMap {
        channels: shape.out_channels,
        height: shape.out_height,
        width: shape.out_width,
        data,
    })
}
