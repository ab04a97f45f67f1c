//! Seeded finite-difference sweep over every backward pass: each layer in
//! isolation, then the end-to-end training loss of the whole detector.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::config::{ModelConfig, Variant};
use super::loss::{batch_loss_region, loss_and_gradients, sample_consistency, sample_consistency_grad, Example};
use super::params::{ModelParams, PARAM_NAMES};
use crate::dsp::{MelSpectrogram, Resolution, SpectrogramConfig};
use crate::error::Result;
use crate::nn::{
    adaptive_avg_pool_1x1, adaptive_avg_pool_backward, bce_with_logit, bce_with_logit_grad, conv2d, conv2d_backward,
    finite_difference_check, finite_difference_check_piecewise, l2_normalize, l2_normalize_backward, linear, linear_backward, max_pool_2x2,
    multi_head_self_attention, relu, relu_backward, AttentionWeights, GradCheckOptions, GradCheckReport, Tensor,
};
use crate::rng::{self, SplitMix64};
use crate::Label;

#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub case: usize,
    pub check: &'static str,
    pub shape: String,
    pub report: GradCheckReport,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub cases: usize,
    pub seed: u64,
    /// Flip the sign of one analytic gradient so the checker must fail.
    pub corrupt_backward: bool,
    pub fd: GradCheckOptions,
    /// Coordinates sampled per tensor in the end-to-end check.
    pub end_to_end_coords: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            cases: 20,
            seed: 0,
            corrupt_backward: false,
            fd: GradCheckOptions::default(),
            end_to_end_coords: 12,
        }
    }
}

fn random(shape: &[usize], r: &mut SplitMix64) -> Tensor {
    let n = shape.iter().product();
    let u = Uniform::new(-1.0, 1.0);
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| u.sample(r)).collect()).expect("sized")
}

/// Scalar probe `sum(R * y)` so every output coordinate carries weight.
fn probe(y: &Tensor, r: &Tensor) -> f64 {
    y.dot(r)
}

pub fn gradient_check_suite(opts: &SuiteOptions) -> Result<Vec<GradCheckCase>> {
    let mut out = Vec::new();
    for case in 0..opts.cases {
        let mut r = rng::stream(opts.seed, case as u64);
        let fd = GradCheckOptions { seed: opts.seed ^ case as u64, ..opts.fd };
        let mut push = |check, shape: String, report| out.push(GradCheckCase { case, check, shape, report });

        // conv2d
        let (ci, co, h, w) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(3..8), r.gen_range(3..8));
        let (x, k, b) = (random(&[ci, h, w], &mut r), random(&[co, ci, 3, 3], &mut r), random(&[co], &mut r));
        let rp = random(&[co, h, w], &mut r);
        let g = conv2d_backward(&x, &k, &rp, true)?;
        let rep = finite_difference_check(
            |p| probe(&conv2d(&p[0], &p[1], &p[2]).expect("shapes"), &rp),
            &["input", "kernel", "bias"],
            &[x, k, b],
            &[g.input.expect("requested"), g.kernel, g.bias],
            fd,
        );
        push("conv2d", format!("[{ci},{h},{w}]->[{co},{h},{w}]"), rep);

        // relu
        let x = random(&[r.gen_range(1..4), r.gen_range(2..6), r.gen_range(2..6)], &mut r);
        let rp = random(x.shape(), &mut r);
        let g = relu_backward(&relu(&x), &rp);
        let shape = format!("{:?}", x.shape());
        let rep = finite_difference_check(|p| probe(&relu(&p[0]), &rp), &["input"], &[x], &[g], fd);
        push("relu", shape, rep);

        // max pool
        let x = random(&[r.gen_range(1..4), r.gen_range(2..7), r.gen_range(2..7)], &mut r);
        let pool = max_pool_2x2(&x)?;
        let rp = random(pool.output.shape(), &mut r);
        let g = pool.backward(&rp);
        let shape = format!("{:?}", x.shape());
        let rep = finite_difference_check(
            |p| probe(&max_pool_2x2(&p[0]).expect("shapes").output, &rp),
            &["input"],
            &[x],
            &[g],
            fd,
        );
        push("max_pool_2x2", shape, rep);

        // global average pool
        let x = random(&[r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..6)], &mut r);
        let rp = random(&[x.shape()[0]], &mut r);
        let g = adaptive_avg_pool_backward(x.shape(), &rp);
        let shape = format!("{:?}", x.shape());
        let rep = finite_difference_check(
            |p| probe(&adaptive_avg_pool_1x1(&p[0]).expect("shapes"), &rp),
            &["input"],
            &[x],
            &[g],
            fd,
        );
        push("adaptive_avg_pool", shape, rep);

        // linear
        let (di, dout) = (r.gen_range(1..9), r.gen_range(1..9));
        let (x, wt, b) = (random(&[di], &mut r), random(&[dout, di], &mut r), random(&[dout], &mut r));
        let rp = random(&[dout], &mut r);
        let g = linear_backward(&x, &wt, &rp);
        let rep = finite_difference_check(
            |p| probe(&linear(&p[0], &p[1], &p[2]).expect("shapes"), &rp),
            &["input", "weight", "bias"],
            &[x, wt, b],
            &[g.input, g.weight, g.bias],
            fd,
        );
        push("linear", format!("{di}->{dout}"), rep);

        // multi-head attention
        let heads = [1, 2, 4][r.gen_range(0..3)];
        let d = heads * r.gen_range(1..4);
        let kk = r.gen_range(1..4);
        let z = random(&[kk, d], &mut r);
        let wq = random(&[3 * d, d], &mut r);
        let bq = random(&[3 * d], &mut r);
        let wo = random(&[d, d], &mut r);
        let bo = random(&[d], &mut r);
        let rp = random(&[kk, d], &mut r);
        let att = |p: &[Tensor]| {
            let weights = AttentionWeights { w_qkv: &p[1], b_qkv: &p[2], w_o: &p[3], b_o: &p[4] };
            multi_head_self_attention(&p[0], &weights, heads).expect("shapes")
        };
        let params = [z, wq, bq, wo, bo];
        let here = att(&params);
        let weights = AttentionWeights { w_qkv: &params[1], b_qkv: &params[2], w_o: &params[3], b_o: &params[4] };
        let g = here.backward(&weights, &rp);
        let rep = finite_difference_check(
            |p| probe(&att(p).output, &rp),
            &["input", "w_qkv", "b_qkv", "w_o", "b_o"],
            &params,
            &[g.input, g.w_qkv, g.b_qkv, g.w_o, g.b_o],
            fd,
        );
        push("attention", format!("K={kk} d={d} heads={heads}"), rep);

        // l2 normalization
        let z = random(&[r.gen_range(1..10)], &mut r);
        let rp = random(z.shape(), &mut r);
        let g = l2_normalize_backward(&z, &rp);
        let shape = format!("{:?}", z.shape());
        let rep = finite_difference_check(|p| probe(&l2_normalize(&p[0]), &rp), &["input"], &[z], &[g], fd);
        push("l2_normalize", shape, rep);

        // sigmoid + BCE in logit space
        let logit = Tensor::vector(vec![r.gen_range(-8.0..8.0)]);
        let y = if r.gen_bool(0.5) { 1.0 } else { 0.0 };
        let g = Tensor::vector(vec![bce_with_logit_grad(logit.data()[0], y)]);
        let rep = finite_difference_check(|p| bce_with_logit(p[0].data()[0], y), &["logit"], &[logit], &[g], fd);
        push("bce_with_logit", format!("y={y}"), rep);

        // consistency penalty
        let e = random(&[r.gen_range(2..4), r.gen_range(2..8)], &mut r);
        let g = sample_consistency_grad(&e);
        let shape = format!("{:?}", e.shape());
        let rep = finite_difference_check(|p| sample_consistency(&p[0]), &["embeddings"], &[e], &[g], fd);
        push("consistency", shape, rep);

        // end to end
        let variant = match case % 4 {
            0 | 3 => Variant::Full,
            1 => Variant::NoAttention,
            _ => Variant::SingleResolution(Resolution::ALL[case % 3]),
        };
        let num_datasets = 1 + case % 2;
        let cfg = ModelConfig {
            channels: [2, 3, 4],
            embed_dim: 4,
            heads: 2,
            num_datasets,
            lambda_cons: r.gen_range(0.2..2.0),
            variant,
        };
        let mut params = ModelParams::init(&cfg, opts.seed.wrapping_add(case as u64))?;
        // move modulation off identity so its gradients matter
        params.gamma = random(params.gamma.shape(), &mut r).map(|v| 1.0 + 0.3 * v);
        params.beta = random(params.beta.shape(), &mut r).scale(0.1);
        let samples: Vec<(Vec<MelSpectrogram>, Label, usize)> = (0..2)
            .map(|i| {
                let specs = Resolution::ALL
                    .iter()
                    .map(|&res| {
                        let (hh, ww) = (r.gen_range(8..13), r.gen_range(8..14));
                        let c = res.config();
                        MelSpectrogram {
                            values: random(&[hh, ww], &mut r),
                            config: SpectrogramConfig { n_mels: hh, ..c },
                            resolution: Some(res),
                        }
                    })
                    .collect();
                let label = if i == 0 { Label::BonaFide } else if r.gen_bool(0.5) { Label::Spoof } else { Label::BonaFide };
                (specs, label, r.gen_range(0..num_datasets))
            })
            .collect();
        let batch: Vec<Example<'_>> =
            samples.iter().map(|(s, l, d)| Example { specs: s, label: *l, dataset_id: *d }).collect();
        let (_, grads) = loss_and_gradients(&batch, &params, &cfg)?;
        let mut analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
        if opts.corrupt_backward {
            analytic[2] = analytic[2].scale(-1.0);
        }
        let values: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
        let shape = format!(
            "{variant} datasets={num_datasets} specs={:?}",
            samples[0].0.iter().map(|s| s.values.shape().to_vec()).collect::<Vec<_>>()
        );
        let rep = finite_difference_check_piecewise(
            |p| {
                let m = ModelParams::from_tensors(p.to_vec()).expect("same layout");
                let (loss, region) = batch_loss_region(&batch, &m, &cfg).expect("valid batch");
                (loss.total, region)
            },
            &PARAM_NAMES,
            &values,
            &analytic,
            GradCheckOptions { max_coords: Some(opts.end_to_end_coords), ..fd },
        );
        push("end_to_end", shape, rep);
    }
    Ok(out)
}
