//! Forward/backward kernels for the fixed layer set. Activations are flat
//! batch-major buffers: `[batch, ...sample_shape]`.

use crate::linalg::{gemm, Mat};

pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }
    pub fn out_len(&self) -> usize {
        self.filters * self.out_h * self.out_w
    }
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let plane = g.col_cols();
    for c in 0..g.channels {
        let xc = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oh in 0..g.out_h {
                    let ih = (oh * s + ki) as isize - p;
                    let seg = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih >= g.height as isize {
                        seg.fill(0.0);
                        continue;
                    }
                    let src = &xc[ih as usize * g.width..(ih as usize + 1) * g.width];
                    for (ow, v) in seg.iter_mut().enumerate() {
                        let iw = (ow * s + kj) as isize - p;
                        *v = if iw < 0 || iw >= g.width as isize {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let (k, s, p) = (g.kernel, g.stride, g.pad as isize);
    let plane = g.col_cols();
    for c in 0..g.channels {
        let dxc = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * plane..(row + 1) * plane];
                for oh in 0..g.out_h {
                    let ih = (oh * s + ki) as isize - p;
                    if ih < 0 || ih >= g.height as isize {
                        continue;
                    }
                    let dst = &mut dxc[ih as usize * g.width..(ih as usize + 1) * g.width];
                    for ow in 0..g.out_w {
                        let iw = (ow * s + kj) as isize - p;
                        if iw >= 0 && iw < g.width as isize {
                            dst[iw as usize] += src[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
}

/// Returns the output and, if requested, the per-sample column buffers.
pub(crate) fn conv_forward(
    g: &ConvGeom,
    weight: &[f64],
    bias: &[f64],
    x: &[f64],
    batch: usize,
    keep_cols: bool,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let col_len = g.col_rows() * g.col_cols();
    let mut out = vec![0.0; batch * g.out_len()];
    let mut kept = if keep_cols {
        Some(vec![0.0; batch * col_len])
    } else {
        None
    };
    let mut scratch = if keep_cols { Vec::new() } else { vec![0.0; col_len] };
    let w = Mat::new(weight, g.filters, g.col_rows());
    for n in 0..batch {
        let cols: &mut [f64] = match kept.as_mut() {
            Some(all) => &mut all[n * col_len..(n + 1) * col_len],
            None => &mut scratch,
        };
        im2col(g, &x[n * g.in_len()..(n + 1) * g.in_len()], cols);
        let y = &mut out[n * g.out_len()..(n + 1) * g.out_len()];
        let plane = g.col_cols();
        for (f, b) in bias.iter().enumerate() {
            y[f * plane..(f + 1) * plane].fill(*b);
        }
        gemm(w, Mat::new(cols, g.col_rows(), plane), y, 1.0);
    }
    (out, kept)
}

/// Accumulates weight/bias gradients; returns the input gradient when `need_dx`.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    weight: &[f64],
    cols: &[f64],
    dy: &[f64],
    batch: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let col_len = g.col_rows() * g.col_cols();
    let plane = g.col_cols();
    let mut dx = need_dx.then(|| vec![0.0; batch * g.in_len()]);
    let mut dcols = vec![0.0; if need_dx { col_len } else { 0 }];
    for n in 0..batch {
        let dyn_ = &dy[n * g.out_len()..(n + 1) * g.out_len()];
        let cn = &cols[n * col_len..(n + 1) * col_len];
        gemm(
            Mat::new(dyn_, g.filters, plane),
            Mat::new(cn, g.col_rows(), plane).t(),
            dweight,
            1.0,
        );
        for (f, db) in dbias.iter_mut().enumerate() {
            *db += dyn_[f * plane..(f + 1) * plane].iter().sum::<f64>();
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                Mat::new(weight, g.filters, g.col_rows()).t(),
                Mat::new(dyn_, g.filters, plane),
                &mut dcols,
                0.0,
            );
            col2im_add(g, &dcols, &mut dx[n * g.in_len()..(n + 1) * g.in_len()]);
        }
    }
    dx
}

/// Max pooling over `[C, H, W]` samples. Returns output and argmax offsets (within a sample).
pub(crate) fn maxpool_forward(
    x: &[f64],
    batch: usize,
    (c, h, w): (usize, usize, usize),
    window: usize,
) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / window, w / window);
    let in_len = c * h * w;
    let out_len = c * oh * ow;
    let mut out = vec![0.0; batch * out_len];
    let mut arg = vec![0u32; batch * out_len];
    for n in 0..batch {
        let xs = &x[n * in_len..(n + 1) * in_len];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    for di in 0..window {
                        let row = ch * h * w + (i * window + di) * w + j * window;
                        for dj in 0..window {
                            let v = xs[row + dj];
                            if v > best {
                                best = v;
                                best_at = row + dj;
                            }
                        }
                    }
                    let o = n * out_len + (ch * oh + i) * ow + j;
                    out[o] = best;
                    arg[o] = best_at as u32;
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(dy: &[f64], arg: &[u32], batch: usize, in_len: usize) -> Vec<f64> {
    let out_len = dy.len() / batch;
    let mut dx = vec![0.0; batch * in_len];
    for n in 0..batch {
        for o in 0..out_len {
            dx[n * in_len + arg[n * out_len + o] as usize] += dy[n * out_len + o];
        }
    }
    dx
}

pub(crate) struct BnForward {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Batch mean and biased variance, present when batch statistics were used.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

/// Batch norm over `[batch, channels, spatial]`.
pub(crate) fn bn_forward(
    x: &[f64],
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
    running: Option<(&[f64], &[f64])>,
) -> BnForward {
    let m = (batch * spatial) as f64;
    let (mean, var, use_batch) = match running {
        Some((rm, rv)) => (rm.to_vec(), rv.to_vec(), false),
        None => {
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for n in 0..batch {
                for c in 0..channels {
                    let base = (n * channels + c) * spatial;
                    mean[c] += x[base..base + spatial].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for n in 0..batch {
                for c in 0..channels {
                    let base = (n * channels + c) * spatial;
                    var[c] += x[base..base + spatial]
                        .iter()
                        .map(|v| (v - mean[c]) * (v - mean[c]))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            (mean, var, true)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for n in 0..batch {
        for c in 0..channels {
            let base = (n * channels + c) * spatial;
            for i in base..base + spatial {
                xhat[i] = (x[i] - mean[c]) * inv_std[c];
                y[i] = gamma[c] * xhat[i] + beta[c];
            }
        }
    }
    BnForward {
        y,
        xhat,
        inv_std,
        batch_stats: use_batch.then_some((mean, var)),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_backward(
    dy: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    batch: usize,
    channels: usize,
    spatial: usize,
    batch_stats: bool,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let m = (batch * spatial) as f64;
    let mut sum_dy = vec![0.0; channels];
    let mut sum_dy_xhat = vec![0.0; channels];
    for n in 0..batch {
        for c in 0..channels {
            let base = (n * channels + c) * spatial;
            for i in base..base + spatial {
                sum_dy[c] += dy[i];
                sum_dy_xhat[c] += dy[i] * xhat[i];
            }
        }
    }
    for c in 0..channels {
        dgamma[c] += sum_dy_xhat[c];
        dbeta[c] += sum_dy[c];
    }
    let mut dx = vec![0.0; dy.len()];
    for n in 0..batch {
        for c in 0..channels {
            let base = (n * channels + c) * spatial;
            let scale = gamma[c] * inv_std[c];
            for i in base..base + spatial {
                dx[i] = if batch_stats {
                    scale * (dy[i] - sum_dy[c] / m - xhat[i] * sum_dy_xhat[c] / m)
                } else {
                    scale * dy[i]
                };
            }
        }
    }
    dx
}

/// `y = x W^T + b` for `x: [batch, inputs]`, `W: [outputs, inputs]`.
pub(crate) fn dense_forward(
    weight: &[f64],
    bias: &[f64],
    x: &[f64],
    batch: usize,
    inputs: usize,
    outputs: usize,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(
        Mat::new(x, batch, inputs),
        Mat::new(weight, outputs, inputs).t(),
        &mut y,
        1.0,
    );
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    weight: &[f64],
    x: &[f64],
    dy: &[f64],
    batch: usize,
    inputs: usize,
    outputs: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    gemm(
        Mat::new(dy, batch, outputs).t(),
        Mat::new(x, batch, inputs),
        dweight,
        1.0,
    );
    for n in 0..batch {
        for (o, db) in dbias.iter_mut().enumerate() {
            *db += dy[n * outputs + o];
        }
    }
    need_dx.then(|| {
        let mut dx = vec![0.0; batch * inputs];
        gemm(
            Mat::new(dy, batch, outputs),
            Mat::new(weight, outputs, inputs),
            &mut dx,
            0.0,
        );
        dx
    })
}
