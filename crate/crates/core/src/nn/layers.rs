//! Forward and backward passes for the layers the detector uses.
//!
//! Every backward takes the upstream gradient and returns gradients for the
//! layer inputs; nothing is stored on the tensors themselves.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

fn check_chw(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(format!("{what} expects [C,H,W], got {:?}", x.shape()))),
    }
}

/// Unfold 3x3 zero-padded neighbourhoods: rows `(ci, ky, kx)`, columns `(y, x)`.
/// Every element is written exactly once.
fn im2col(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cols = Vec::with_capacity(c * 9 * hw);
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize || w == 0 {
                        cols.resize(cols.len() + w, 0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    match kx {
                        0 => {
                            cols.push(0.0);
                            cols.extend_from_slice(&src[..w - 1]);
                        }
                        1 => cols.extend_from_slice(src),
                        _ => {
                            cols.extend_from_slice(&src[1..]);
                            cols.push(0.0);
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ci in 0..c {
        let plane = &mut x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let x_lo = if kx == 0 { 1 } else { 0 };
                let x_hi = if kx == 2 { w.saturating_sub(1) } else { w };
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..][..w];
                    let src = &row[y * w..][..w];
                    for xx in x_lo..x_hi {
                        dst[xx + kx - 1] += src[xx];
                    }
                }
            }
        }
    }
    x
}

fn check_conv(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (c_in, h, w) = check_chw(input, "conv2d")?;
    match *kernel.shape() {
        [c_out, k_in, 3, 3] if k_in == c_in => {
            if bias.shape() != [c_out] {
                return Err(Error::shape(format!("conv2d bias {:?} for {c_out} channels", bias.shape())));
            }
            Ok((c_in, c_out, h, w))
        }
        _ => Err(Error::shape(format!(
            "conv2d kernel {:?} incompatible with input {:?}",
            kernel.shape(),
            input.shape()
        ))),
    }
}

/// 3x3 cross-correlation, stride 1, zero padding 1.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv2d_with_cols(input, kernel, bias).map(|(y, _)| y)
}

/// Forward pass that also hands back the unfolded input for reuse in
/// [`conv2d_backward_with_cols`].
pub(crate) fn conv2d_with_cols(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    let (c_in, c_out, h, w) = check_conv(input, kernel, bias)?;
    let hw = h * w;
    let cols = im2col(input.data(), c_in, h, w);
    let mut out = Vec::with_capacity(c_out * hw);
    for &b in bias.data() {
        out.resize(out.len() + hw, b);
    }
    gemm(c_out, c_in * 9, hw, kernel.data(), false, &cols, false, 1.0, &mut out);
    Ok((Tensor::from_vec(vec![c_out, h, w], out)?, cols))
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor>,
    pub kernel: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<Conv2dGrads> {
    let (c_in, h, w) = check_chw(input, "conv2d")?;
    conv2d_backward_with_cols(&im2col(input.data(), c_in, h, w), input.shape(), kernel, grad_out, need_input_grad)
}

pub(crate) fn conv2d_backward_with_cols(
    cols: &[f64],
    input_shape: &[usize],
    kernel: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<Conv2dGrads> {
    let (c_in, h, w) = match *input_shape {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape(format!("conv2d expects [C,H,W], got {input_shape:?}"))),
    };
    let c_out = match *kernel.shape() {
        [c_out, k_in, 3, 3] if k_in == c_in => c_out,
        _ => return Err(Error::shape(format!("conv2d kernel {:?} for input {input_shape:?}", kernel.shape()))),
    };
    if cols.len() != c_in * 9 * h * w || grad_out.shape() != [c_out, h, w] {
        return Err(Error::shape(format!("conv2d grad {:?}", grad_out.shape())));
    }
    let hw = h * w;
    let mut gk = Tensor::zeros(kernel.shape());
    gemm(c_out, hw, c_in * 9, grad_out.data(), false, cols, true, 0.0, gk.data_mut());
    let gb = Tensor::vector((0..c_out).map(|co| grad_out.data()[co * hw..(co + 1) * hw].iter().sum()).collect());
    let input_grad = if need_input_grad {
        let mut gcols = vec![0.0; c_in * 9 * hw];
        gemm(c_in * 9, c_out, hw, kernel.data(), true, grad_out.data(), false, 0.0, &mut gcols);
        Some(Tensor::from_vec(vec![c_in, h, w], col2im(&gcols, c_in, h, w))?)
    } else {
        None
    };
    Ok(Conv2dGrads { input: input_grad, kernel: gk, bias: gb })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given its output.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(output.shape().to_vec(), data).expect("same shape")
}

/// 2x2 max pool, stride 2; an odd trailing row or column is dropped.
#[derive(Debug, Clone)]
pub struct MaxPool {
    pub output: Tensor,
    /// Flat input index of each output's maximum.
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

pub fn max_pool_2x2(x: &Tensor) -> Result<MaxPool> {
    let (c, h, w) = check_chw(x, "max_pool_2x2")?;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    let data = x.data();
    for ci in 0..c {
        let base = ci * h * w;
        for oy in 0..oh {
            let r0 = base + 2 * oy * w;
            let r1 = r0 + w;
            for ox in 0..ow {
                let cands = [r0 + 2 * ox, r0 + 2 * ox + 1, r1 + 2 * ox, r1 + 2 * ox + 1];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok(MaxPool {
        output: Tensor::from_vec(vec![c, oh, ow], out)?,
        argmax,
        input_shape: x.shape().to_vec(),
    })
}

impl MaxPool {
    /// Flat input index picked for each output.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        let mut g = Tensor::zeros(&self.input_shape);
        let gd = g.data_mut();
        for (&i, &v) in self.argmax.iter().zip(grad_out.data()) {
            gd[i] += v;
        }
        g
    }
}

/// Per-channel spatial mean, `[C,H,W] -> [C]`.
pub fn adaptive_avg_pool_1x1(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = check_chw(x, "adaptive_avg_pool_1x1")?;
    let hw = h * w;
    if hw == 0 {
        return Ok(Tensor::zeros(&[c]));
    }
    Ok(Tensor::vector(
        x.data().chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect(),
    ))
}

pub fn adaptive_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let hw: usize = input_shape[1..].iter().product();
    let mut g = Tensor::zeros(input_shape);
    if hw == 0 {
        return g;
    }
    for (plane, &go) in g.data_mut().chunks_mut(hw).zip(grad_out.data()) {
        plane.fill(go / hw as f64);
    }
    g
}

/// `W x + b` for `W: [d_out, d_in]`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (d_out, d_in) = match *weight.shape() {
        [o, i] => (o, i),
        _ => return Err(Error::shape(format!("linear weight {:?}", weight.shape()))),
    };
    if x.len() != d_in || bias.len() != d_out {
        return Err(Error::shape(format!(
            "linear {:?} with input {:?} and bias {:?}",
            weight.shape(),
            x.shape(),
            bias.shape()
        )));
    }
    let y = (0..d_out)
        .map(|o| bias.data()[o] + weight.row(o).iter().zip(x.data()).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::vector(y))
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn linear_backward(x: &Tensor, weight: &Tensor, grad_out: &Tensor) -> LinearGrads {
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    let mut gw = Tensor::zeros(weight.shape());
    let mut gx = vec![0.0; d_in];
    for o in 0..d_out {
        let g = grad_out.data()[o];
        let row = weight.row(o);
        for i in 0..d_in {
            gw.data_mut()[o * d_in + i] = g * x.data()[i];
            gx[i] += g * row[i];
        }
    }
    LinearGrads { input: Tensor::vector(gx), weight: gw, bias: grad_out.clone() }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`, evaluated in
/// logit space.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    label * softplus(-logit) + (1.0 - label) * softplus(logit)
}

/// `d bce / d logit`.
pub fn bce_with_logit_grad(logit: f64, label: f64) -> f64 {
    sigmoid(logit) - label
}

/// Binary cross-entropy of a probability; for reporting only.
pub fn bce_loss(p: f64, label: f64) -> f64 {
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

pub const NORMALIZE_EPS: f64 = 1e-12;

pub fn l2_normalize(z: &Tensor) -> Tensor {
    let n = z.dot(z).sqrt();
    z.scale(1.0 / (n + NORMALIZE_EPS))
}

/// Gradient through `z / (|z| + eps)`.
pub fn l2_normalize_backward(z: &Tensor, grad_out: &Tensor) -> Tensor {
    let n = z.dot(z).sqrt();
    let denom = n + NORMALIZE_EPS;
    if n == 0.0 {
        return grad_out.scale(1.0 / denom);
    }
    let proj = z.dot(grad_out) / (denom * denom * n);
    let data = z
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&zi, &gi)| gi / denom - zi * proj)
        .collect();
    Tensor::from_vec(z.shape().to_vec(), data).expect("same shape")
}
