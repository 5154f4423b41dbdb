//! Pure array kernels behind the tape ops: im2col convolution, pooling,
//! upsampling, and instance normalization, each with its adjoint.
//!
//! All kernels are sequential and evaluation order is fixed, so outputs are
//! bit-reproducible for identical inputs.

use ndarray::{Array1, Array2, ArrayD, IxDyn};

pub fn dims4(x: &ArrayD<f32>) -> (usize, usize, usize, usize) {
    assert_eq!(x.ndim(), 4, "expected NCHW tensor, got shape {:?}", x.shape());
    let s = x.shape();
    (s[0], s[1], s[2], s[3])
}

pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Unfolds `x` (N,C,H,W) into a (C*kh*kw, N*oh*ow) matrix.
fn im2col(
    x: &ArrayD<f32>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Array2<f32> {
    let (n, c, h, w) = dims4(x);
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut cols = Array2::<f32>::zeros((c * kh * kw, n * oh * ow));
    let x_slice = x.as_slice().expect("contiguous input");
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row_idx = (ci * kh + ky) * kw + kx;
                let mut row = cols.row_mut(row_idx);
                let row_slice = row.as_slice_mut().expect("contiguous row");
                for ni in 0..n {
                    let base_in = (ni * c + ci) * h * w;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let base_out = (ni * oh + oy) * ow;
                        if iy < 0 || iy >= h as isize {
                            continue; // zero padding already in place
                        }
                        let iy = iy as usize;
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            row_slice[base_out + ox] = x_slice[base_in + iy * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds the column matrix back into an input
/// gradient of shape (N,C,H,W).
fn col2im(
    cols: &Array2<f32>,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> ArrayD<f32> {
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(w, kw, stride, pad);
    let mut dx = ArrayD::<f32>::zeros(IxDyn(&[n, c, h, w]));
    let dx_slice = dx.as_slice_mut().expect("contiguous output");
    for ci in 0..c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row_idx = (ci * kh + ky) * kw + kx;
                let row = cols.row(row_idx);
                let row_slice = row.as_slice().expect("contiguous row");
                for ni in 0..n {
                    let base_in = (ni * c + ci) * h * w;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let base_out = (ni * oh + oy) * ow;
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            dx_slice[base_in + iy * w + ix as usize] +=
                                row_slice[base_out + ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// 2-D convolution, NCHW input, (O,C,kh,kw) weights, optional per-output
/// bias.
pub fn conv2d_forward(
    x: &ArrayD<f32>,
    w: &ArrayD<f32>,
    b: Option<&ArrayD<f32>>,
    stride: usize,
    pad: usize,
) -> ArrayD<f32> {
    let (n, c, h, width) = dims4(x);
    let ws = w.shape();
    assert_eq!(ws[1], c, "channel mismatch: input {c}, weight {}", ws[1]);
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(width, kw, stride, pad);

    let cols = im2col(x, kh, kw, stride, pad);
    let wmat = w
        .view()
        .into_shape_with_order((o, c * kh * kw))
        .expect("weight reshape");
    let prod = wmat.dot(&cols); // (O, N*oh*ow)

    let mut out = ArrayD::<f32>::zeros(IxDyn(&[n, o, oh, ow]));
    let out_slice = out.as_slice_mut().expect("contiguous output");
    let prod_slice = prod.as_slice().expect("contiguous product");
    for ni in 0..n {
        for oi in 0..o {
            let bias = b.map_or(0.0, |b| b[[oi]]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let src = oi * (n * oh * ow) + (ni * oh + oy) * ow + ox;
                    let dst = ((ni * o + oi) * oh + oy) * ow + ox;
                    out_slice[dst] = prod_slice[src] + bias;
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weight, and bias.
pub fn conv2d_backward(
    x: &ArrayD<f32>,
    w: &ArrayD<f32>,
    dout: &ArrayD<f32>,
    stride: usize,
    pad: usize,
    with_bias: bool,
) -> (ArrayD<f32>, ArrayD<f32>, Option<ArrayD<f32>>) {
    let (n, c, h, width) = dims4(x);
    let ws = w.shape();
    let (o, kh, kw) = (ws[0], ws[2], ws[3]);
    let (dn, dо, oh, ow) = dims4(dout);
    assert_eq!((dn, dо), (n, o), "dout batch/channel mismatch");

    // dout as (O, N*oh*ow)
    let mut dprod = Array2::<f32>::zeros((o, n * oh * ow));
    {
        let dout_slice = dout.as_slice().expect("contiguous dout");
        for ni in 0..n {
            for oi in 0..o {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let src = ((ni * o + oi) * oh + oy) * ow + ox;
                        dprod[[oi, (ni * oh + oy) * ow + ox]] = dout_slice[src];
                    }
                }
            }
        }
    }

    let cols = im2col(x, kh, kw, stride, pad);
    let dwmat = dprod.dot(&cols.t()); // (O, C*kh*kw)
    let dw = dwmat
        .into_shape_with_order(IxDyn(&[o, c, kh, kw]))
        .expect("dw reshape");

    let wmat = w
        .view()
        .into_shape_with_order((o, c * kh * kw))
        .expect("weight reshape");
    let dcols = wmat.t().dot(&dprod); // (C*kh*kw, N*oh*ow)
    let dx = col2im(&dcols, n, c, h, width, kh, kw, stride, pad);

    let db = with_bias.then(|| {
        let mut db = Array1::<f32>::zeros(o);
        for ni in 0..n {
            for oi in 0..o {
                let mut acc = 0f64;
                for oy in 0..oh {
                    for ox in 0..ow {
                        acc += dout[[ni, oi, oy, ox]] as f64;
                    }
                }
                db[oi] += acc as f32;
            }
        }
        db.into_dyn()
    });

    (dx, dw, db)
}

/// 2x2 max pooling with stride 2. Returns the pooled map and the flat input
/// index of each maximum for the adjoint.
pub fn maxpool2_forward(x: &ArrayD<f32>) -> (ArrayD<f32>, Vec<u32>) {
    let (n, c, h, w) = dims4(x);
    assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[n, c, oh, ow]));
    let mut argmax = vec![0u32; n * c * oh * ow];
    let x_slice = x.as_slice().expect("contiguous input");
    let out_slice = out.as_slice_mut().expect("contiguous output");
    for ni in 0..n {
        for ci in 0..c {
            let base = (ni * c + ci) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = base + (2 * oy) * w + 2 * ox;
                    let mut best = x_slice[best_idx];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x_slice[idx] > best {
                            best = x_slice[idx];
                            best_idx = idx;
                        }
                    }
                    let o_idx = ((ni * c + ci) * oh + oy) * ow + ox;
                    out_slice[o_idx] = best;
                    argmax[o_idx] = best_idx as u32;
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2_backward(
    dout: &ArrayD<f32>,
    argmax: &[u32],
    input_shape: &[usize],
) -> ArrayD<f32> {
    let mut dx = ArrayD::<f32>::zeros(IxDyn(input_shape));
    let dx_slice = dx.as_slice_mut().expect("contiguous grad");
    for (g, &idx) in dout.iter().zip(argmax.iter()) {
        dx_slice[idx as usize] += g;
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_nearest2_forward(x: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, h, w) = dims4(x);
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[n, c, 2 * h, 2 * w]));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..2 * h {
                for x_ in 0..2 * w {
                    out[[ni, ci, y, x_]] = x[[ni, ci, y / 2, x_ / 2]];
                }
            }
        }
    }
    out
}

pub fn upsample_nearest2_backward(dout: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, h2, w2) = dims4(dout);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = ArrayD::<f32>::zeros(IxDyn(&[n, c, h, w]));
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h2 {
                for x_ in 0..w2 {
                    dx[[ni, ci, y / 2, x_ / 2]] += dout[[ni, ci, y, x_]];
                }
            }
        }
    }
    dx
}

// Source taps and weights for one bilinear output coordinate under the
// half-pixel convention: src = (dst + 0.5) / 2 - 0.5, edges clamped.
fn bilinear_taps(dst: usize, src_len: usize) -> (usize, usize, f32) {
    let src = (dst as f32 + 0.5) / 2.0 - 0.5;
    let s0 = src.floor();
    let t = src - s0;
    let i0 = (s0.max(0.0) as usize).min(src_len - 1);
    let i1 = ((s0 + 1.0).max(0.0) as usize).min(src_len - 1);
    (i0, i1, t)
}

/// Bilinear 2x upsampling with half-pixel alignment.
pub fn upsample_bilinear2_forward(x: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, h, w) = dims4(x);
    let mut out = ArrayD::<f32>::zeros(IxDyn(&[n, c, 2 * h, 2 * w]));
    for y in 0..2 * h {
        let (y0, y1, ty) = bilinear_taps(y, h);
        for x_ in 0..2 * w {
            let (x0, x1, tx) = bilinear_taps(x_, w);
            for ni in 0..n {
                for ci in 0..c {
                    let v00 = x[[ni, ci, y0, x0]];
                    let v01 = x[[ni, ci, y0, x1]];
                    let v10 = x[[ni, ci, y1, x0]];
                    let v11 = x[[ni, ci, y1, x1]];
                    let top = v00 * (1.0 - tx) + v01 * tx;
                    let bot = v10 * (1.0 - tx) + v11 * tx;
                    out[[ni, ci, y, x_]] = top * (1.0 - ty) + bot * ty;
                }
            }
        }
    }
    out
}

pub fn upsample_bilinear2_backward(dout: &ArrayD<f32>) -> ArrayD<f32> {
    let (n, c, h2, w2) = dims4(dout);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = ArrayD::<f32>::zeros(IxDyn(&[n, c, h, w]));
    for y in 0..h2 {
        let (y0, y1, ty) = bilinear_taps(y, h);
        for x_ in 0..w2 {
            let (x0, x1, tx) = bilinear_taps(x_, w);
            for ni in 0..n {
                for ci in 0..c {
                    let g = dout[[ni, ci, y, x_]];
                    dx[[ni, ci, y0, x0]] += g * (1.0 - tx) * (1.0 - ty);
                    dx[[ni, ci, y0, x1]] += g * tx * (1.0 - ty);
                    dx[[ni, ci, y1, x0]] += g * (1.0 - tx) * ty;
                    dx[[ni, ci, y1, x1]] += g * tx * ty;
                }
            }
        }
    }
    dx
}

/// Per-sample, per-channel normalization with learned scale and shift.
/// Returns (output, mean, inv_std) with the statistics kept for the adjoint.
pub fn instance_norm_forward(
    x: &ArrayD<f32>,
    gamma: &ArrayD<f32>,
    beta: &ArrayD<f32>,
    eps: f32,
) -> (ArrayD<f32>, Vec<f32>, Vec<f32>) {
    let (n, c, h, w) = dims4(x);
    let m = (h * w) as f64;
    let mut out = x.clone();
    let mut means = vec![0f32; n * c];
    let mut inv_stds = vec![0f32; n * c];
    for ni in 0..n {
        for ci in 0..c {
            let mut sum = 0f64;
            let mut sum_sq = 0f64;
            for y in 0..h {
                for x_ in 0..w {
                    let v = x[[ni, ci, y, x_]] as f64;
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / m;
            let var = (sum_sq / m - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + eps as f64).sqrt();
            means[ni * c + ci] = mean as f32;
            inv_stds[ni * c + ci] = inv_std as f32;
            let (g, b) = (gamma[[ci]], beta[[ci]]);
            for y in 0..h {
                for x_ in 0..w {
                    let v = out[[ni, ci, y, x_]];
                    out[[ni, ci, y, x_]] =
                        (v - mean as f32) * inv_std as f32 * g + b;
                }
            }
        }
    }
    (out, means, inv_stds)
}

/// Gradients of instance norm w.r.t. input, gamma, beta.
pub fn instance_norm_backward(
    x: &ArrayD<f32>,
    gamma: &ArrayD<f32>,
    dout: &ArrayD<f32>,
    means: &[f32],
    inv_stds: &[f32],
) -> (ArrayD<f32>, ArrayD<f32>, ArrayD<f32>) {
    let (n, c, h, w) = dims4(x);
    let m = (h * w) as f64;
    let mut dx = ArrayD::<f32>::zeros(IxDyn(&[n, c, h, w]));
    let mut dgamma = ArrayD::<f32>::zeros(IxDyn(&[c]));
    let mut dbeta = ArrayD::<f32>::zeros(IxDyn(&[c]));
    for ni in 0..n {
        for ci in 0..c {
            let mean = means[ni * c + ci] as f64;
            let inv_std = inv_stds[ni * c + ci] as f64;
            let g = gamma[[ci]] as f64;
            let mut sum_dy = 0f64;
            let mut sum_dy_xhat = 0f64;
            for y in 0..h {
                for x_ in 0..w {
                    let xhat = (x[[ni, ci, y, x_]] as f64 - mean) * inv_std;
                    let dy = dout[[ni, ci, y, x_]] as f64;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
            }
            dgamma[[ci]] += sum_dy_xhat as f32;
            dbeta[[ci]] += sum_dy as f32;
            for y in 0..h {
                for x_ in 0..w {
                    let xhat = (x[[ni, ci, y, x_]] as f64 - mean) * inv_std;
                    let dy = dout[[ni, ci, y, x_]] as f64;
                    let v = g * inv_std * (dy - sum_dy / m - xhat * sum_dy_xhat / m);
                    dx[[ni, ci, y, x_]] = v as f32;
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::IxDyn;
    use rand::{Rng, SeedableRng};

    fn rand_arr(shape: &[usize], seed: u64) -> ArrayD<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen::<f32>() * 2.0 - 1.0)
    }

    #[test]
    fn conv_matches_direct_loop() {
        let x = rand_arr(&[2, 3, 6, 6], 1);
        let w = rand_arr(&[4, 3, 3, 3], 2);
        let b = rand_arr(&[4], 3);
        let out = conv2d_forward(&x, &w, Some(&b), 1, 1);
        assert_eq!(out.shape(), &[2, 4, 6, 6]);
        // direct quadruple loop oracle
        for n in 0..2 {
            for o in 0..4 {
                for oy in 0..6usize {
                    for ox in 0..6usize {
                        let mut acc = b[[o]] as f64;
                        for c in 0..3 {
                            for ky in 0..3usize {
                                for kx in 0..3usize {
                                    let iy = oy as isize + ky as isize - 1;
                                    let ix = ox as isize + kx as isize - 1;
                                    if iy < 0 || iy >= 6 || ix < 0 || ix >= 6 {
                                        continue;
                                    }
                                    acc += (x[[n, c, iy as usize, ix as usize]]
                                        * w[[o, c, ky, kx]])
                                        as f64;
                                }
                            }
                        }
                        assert_abs_diff_eq!(
                            out[[n, o, oy, ox]],
                            acc as f32,
                            epsilon = 1e-4
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn strided_conv_shape() {
        let x = rand_arr(&[1, 3, 192, 192], 4);
        let w = rand_arr(&[8, 3, 4, 4], 5);
        let out = conv2d_forward(&x, &w, None, 2, 1);
        assert_eq!(out.shape(), &[1, 8, 96, 96]);
    }

    #[test]
    fn maxpool_and_backward() {
        let x = ArrayD::from_shape_vec(
            IxDyn(&[1, 1, 2, 2]),
            vec![1.0f32, 5.0, 3.0, 2.0],
        )
        .unwrap();
        let (out, argmax) = maxpool2_forward(&x);
        assert_eq!(out[[0, 0, 0, 0]], 5.0);
        let dout = ArrayD::from_elem(IxDyn(&[1, 1, 1, 1]), 2.0f32);
        let dx = maxpool2_backward(&dout, &argmax, &[1, 1, 2, 2]);
        assert_eq!(dx[[0, 0, 0, 1]], 2.0);
        assert_eq!(dx[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn nearest_upsample_roundtrip_adjoint() {
        let x = rand_arr(&[1, 2, 3, 3], 7);
        let up = upsample_nearest2_forward(&x);
        assert_eq!(up.shape(), &[1, 2, 6, 6]);
        assert_eq!(up[[0, 0, 0, 0]], x[[0, 0, 0, 0]]);
        assert_eq!(up[[0, 0, 1, 1]], x[[0, 0, 0, 0]]);
        let ones = ArrayD::from_elem(IxDyn(&[1, 2, 6, 6]), 1.0f32);
        let dx = upsample_nearest2_backward(&ones);
        assert!(dx.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn bilinear_preserves_constants() {
        let x = ArrayD::from_elem(IxDyn(&[1, 1, 4, 4]), 0.7f32);
        let up = upsample_bilinear2_forward(&x);
        assert!(up.iter().all(|&v| (v - 0.7).abs() < 1e-6));
        // adjoint conserves total mass
        let dout = rand_arr(&[1, 1, 8, 8], 9);
        let dx = upsample_bilinear2_backward(&dout);
        let s1: f64 = dout.iter().map(|&v| v as f64).sum();
        let s2: f64 = dx.iter().map(|&v| v as f64).sum();
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-3);
    }

    #[test]
    fn instance_norm_zero_mean_unit_var() {
        let x = rand_arr(&[2, 3, 8, 8], 11);
        let gamma = ArrayD::from_elem(IxDyn(&[3]), 1.0f32);
        let beta = ArrayD::from_elem(IxDyn(&[3]), 0.0f32);
        let (out, _, _) = instance_norm_forward(&x, &gamma, &beta, 1e-5);
        for n in 0..2 {
            for c in 0..3 {
                let vals: Vec<f64> = (0..8)
                    .flat_map(|y| (0..8).map(move |x_| (y, x_)))
                    .map(|(y, x_)| out[[n, c, y, x_]] as f64)
                    .collect();
                let mean: f64 = vals.iter().sum::<f64>() / 64.0;
                let var: f64 =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
                assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-5);
                assert_abs_diff_eq!(var, 1.0, epsilon = 1e-3);
            }
        }
    }
}
