use super::{ConvShape, Scalar};

/// Valid strided convolution followed by `tanh`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward<T: Scalar>(
    shape: &ConvShape,
    kernel: usize,
    stride: usize,
    input: &[T],
    weight: &[T],
    bias: &[T],
    pre: &mut [T],
    post: &mut [T],
) {
    let (ih, iw) = (shape.in_height, shape.in_width);
    let (oh, ow) = (shape.out_height, shape.out_width);
    let plane = ih * iw;
    for o in 0..shape.out_channels {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[o];
                for c in 0..shape.in_channels {
                    let wbase = (o * shape.in_channels + c) * kernel * kernel;
                    let ibase = c * plane + i * stride * iw + j * stride;
                    for ky in 0..kernel {
                        let row = &input[ibase + ky * iw..ibase + ky * iw + kernel];
                        let wrow = &weight[wbase + ky * kernel..wbase + (ky + 1) * kernel];
                        for (&x, &w) in row.iter().zip(wrow) {
                            acc = acc + x * w;
                        }
                    }
                }
                let idx = (o * oh + i) * ow + j;
                pre[idx] = acc;
                post[idx] = acc.tanh();
            }
        }
    }
}

/// Back-propagates `d_post` (gradient w.r.t. the layer's `tanh` outputs).
///
/// Accumulates into `d_weight` and `d_bias`; writes the input gradient into
/// `d_input` when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    shape: &ConvShape,
    kernel: usize,
    stride: usize,
    input: &[T],
    weight: &[T],
    post: &[T],
    d_post: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) {
    let (ih, iw) = (shape.in_height, shape.in_width);
    let (oh, ow) = (shape.out_height, shape.out_width);
    let plane = ih * iw;
    if let Some(d) = d_input.as_deref_mut() {
        d.fill(T::zero());
    }
    for o in 0..shape.out_channels {
        for i in 0..oh {
            for j in 0..ow {
                let idx = (o * oh + i) * ow + j;
                let a = post[idx];
                let dz = d_post[idx] * (T::one() - a * a);
                if dz == T::zero() {
                    continue;
                }
                d_bias[o] = d_bias[o] + dz;
                for c in 0..shape.in_channels {
                    let wbase = (o * shape.in_channels + c) * kernel * kernel;
                    let ibase = c * plane + i * stride * iw + j * stride;
                    for ky in 0..kernel {
                        let off = ibase + ky * iw;
                        let wo = wbase + ky * kernel;
                        let row = &input[off..off + kernel];
                        for (dw, &x) in d_weight[wo..wo + kernel].iter_mut().zip(row) {
                            *dw = *dw + dz * x;
                        }
                        if let Some(d) = d_input.as_deref_mut() {
                            let wrow = &weight[wo..wo + kernel];
                            for (di, &w) in d[off..off + kernel].iter_mut().zip(wrow) {
                                *di = *di + dz * w;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(h: usize, w: usize) -> ConvShape {
        ConvShape {
            in_channels: 1,
            in_height: h,
            in_width: w,
            out_channels: 1,
            out_height: (h - 5) / 4 + 1,
            out_width: (w - 5) / 4 + 1,
        }
    }

    #[test]
    fn zero_kernels_give_zero_output() {
        let s = shape(13, 17);
        let input: Vec<f64> = (0..13 * 17).map(|i| i as f64 * 0.01).collect();
        let (mut pre, mut post) = (vec![1.0; s.out_len()], vec![1.0; s.out_len()]);
        conv_forward(&s, 5, 4, &input, &[0.0; 25], &[0.0], &mut pre, &mut post);
        assert!(post.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tap_kernel_samples_strided_pixels() {
        let s = shape(9, 13);
        let input: Vec<f64> = (0..9 * 13).map(|i| i as f64 * 0.001).collect();
        let mut w = [0.0; 25];
        w[0] = 1.0;
        let (mut pre, mut post) = (vec![0.0; s.out_len()], vec![0.0; s.out_len()]);
        conv_forward(&s, 5, 4, &input, &w, &[0.0], &mut pre, &mut post);
        assert_eq!((s.out_height, s.out_width), (2, 3));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(pre[i * 3 + j], input[(4 * i) * 13 + 4 * j]);
            }
        }
    }
}
