//! Multi-head scaled dot-product self-attention over a short token sequence.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Packed projections: `w_qkv` rows are `[W_q; W_k; W_v]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub w_qkv: &'a Tensor,
    pub b_qkv: &'a Tensor,
    pub w_o: &'a Tensor,
    pub b_o: &'a Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub input: Tensor,
    pub w_qkv: Tensor,
    pub b_qkv: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `[K, d]`
    pub output: Tensor,
    /// `[heads, K, K]`, rows sum to one.
    pub weights: Tensor,
    input: Tensor,
    qkv: Vec<f64>,
    concat: Vec<f64>,
    heads: usize,
}

fn dims(z: &Tensor, p: &AttentionWeights<'_>, heads: usize) -> Result<(usize, usize)> {
    let (k, d) = match *z.shape() {
        [k, d] if k >= 1 => (k, d),
        _ => return Err(Error::shape(format!("attention input {:?}", z.shape()))),
    };
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!("embedding dim {d} not divisible by {heads} heads")));
    }
    if p.w_qkv.shape() != [3 * d, d]
        || p.b_qkv.shape() != [3 * d]
        || p.w_o.shape() != [d, d]
        || p.b_o.shape() != [d]
    {
        return Err(Error::shape(format!("attention parameters do not match dim {d}")));
    }
    Ok((k, d))
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

pub fn multi_head_self_attention(
    z: &Tensor,
    params: &AttentionWeights<'_>,
    heads: usize,
) -> Result<AttentionOutput> {
    let (k, d) = dims(z, params, heads)?;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut qkv = vec![0.0; k * 3 * d];
    for row in qkv.chunks_mut(3 * d) {
        row.copy_from_slice(params.b_qkv.data());
    }
    gemm(k, d, 3 * d, z.data(), false, params.w_qkv.data(), true, 1.0, &mut qkv);

    let mut weights = Tensor::zeros(&[heads, k, k]);
    let mut concat = vec![0.0; k * d];
    for h in 0..heads {
        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
        for i in 0..k {
            let row = &mut weights.data_mut()[(h * k + i) * k..][..k];
            for (j, s) in row.iter_mut().enumerate() {
                let q = &qkv[i * 3 * d + qo..][..dh];
                let kk = &qkv[j * 3 * d + ko..][..dh];
                *s = q.iter().zip(kk).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
            let out = &mut concat[i * d + h * dh..][..dh];
            for (j, &a) in row.iter().enumerate() {
                let v = &qkv[j * 3 * d + vo..][..dh];
                out.iter_mut().zip(v).for_each(|(o, vv)| *o += a * vv);
            }
        }
    }

    let mut output = vec![0.0; k * d];
    for row in output.chunks_mut(d) {
        row.copy_from_slice(params.b_o.data());
    }
    gemm(k, d, d, &concat, false, params.w_o.data(), true, 1.0, &mut output);

    Ok(AttentionOutput {
        output: Tensor::from_vec(vec![k, d], output)?,
        weights,
        input: z.clone(),
        qkv,
        concat,
        heads,
    })
}

impl AttentionOutput {
    pub fn backward(&self, params: &AttentionWeights<'_>, grad_out: &Tensor) -> AttentionGrads {
        let (k, d) = (self.input.shape()[0], self.input.shape()[1]);
        let heads = self.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let g = grad_out.data();

        let mut gw_o = Tensor::zeros(&[d, d]);
        gemm(d, k, d, g, true, &self.concat, false, 0.0, gw_o.data_mut());
        let mut gb_o = vec![0.0; d];
        for row in g.chunks(d) {
            gb_o.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let mut gconcat = vec![0.0; k * d];
        gemm(k, d, d, g, false, params.w_o.data(), false, 0.0, &mut gconcat);

        let mut gqkv = vec![0.0; k * 3 * d];
        let mut ga = vec![0.0; k];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            for i in 0..k {
                let a = &self.weights.data()[(h * k + i) * k..][..k];
                let go = &gconcat[i * d + h * dh..][..dh];
                for j in 0..k {
                    let v = &self.qkv[j * 3 * d + vo..][..dh];
                    ga[j] = go.iter().zip(v).map(|(x, y)| x * y).sum();
                    let gv = &mut gqkv[j * 3 * d + vo..][..dh];
                    gv.iter_mut().zip(go).for_each(|(x, y)| *x += a[j] * y);
                }
                let inner: f64 = ga.iter().zip(a).map(|(x, y)| x * y).sum();
                for j in 0..k {
                    let gs = a[j] * (ga[j] - inner) * scale;
                    if gs == 0.0 {
                        continue;
                    }
                    for t in 0..dh {
                        let qv = self.qkv[i * 3 * d + qo + t];
                        let kv = self.qkv[j * 3 * d + ko + t];
                        gqkv[i * 3 * d + qo + t] += gs * kv;
                        gqkv[j * 3 * d + ko + t] += gs * qv;
                    }
                }
            }
        }

        let mut gw_qkv = Tensor::zeros(&[3 * d, d]);
        gemm(3 * d, k, d, &gqkv, true, self.input.data(), false, 0.0, gw_qkv.data_mut());
        let mut gb_qkv = vec![0.0; 3 * d];
        for row in gqkv.chunks(3 * d) {
            gb_qkv.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let mut ginput = Tensor::zeros(&[k, d]);
        gemm(k, 3 * d, d, &gqkv, false, params.w_qkv.data(), false, 0.0, ginput.data_mut());

        AttentionGrads {
            input: ginput,
            w_qkv: gw_qkv,
            b_qkv: Tensor::vector(gb_qkv),
            w_o: gw_o,
            b_o: Tensor::vector(gb_o),
        }
    }
}
