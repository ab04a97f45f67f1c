use rand::distributions::{Distribution, Uniform};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Archive;
use crate::nn::Tensor;
use crate::rng::{self, SplitMix64};

/// Every trainable tensor of the detector. The same struct doubles as the
/// gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub conv3_w: Tensor,
    pub conv3_b: Tensor,
    /// `[num_datasets, d]`
    pub gamma: Tensor,
    /// `[num_datasets, d]`
    pub beta: Tensor,
    /// `[3d, d]`, query/key/value rows stacked.
    pub attn_in_w: Tensor,
    pub attn_in_b: Tensor,
    pub attn_out_w: Tensor,
    pub attn_out_b: Tensor,
    /// `[num_datasets, d]`, one logistic head per dataset.
    pub head_w: Tensor,
    /// `[num_datasets]`
    pub head_b: Tensor,
}

pub const PARAM_NAMES: [&str; 14] = [
    "encoder.conv1.weight",
    "encoder.conv1.bias",
    "encoder.conv2.weight",
    "encoder.conv2.bias",
    "encoder.conv3.weight",
    "encoder.conv3.bias",
    "modulation.gamma",
    "modulation.beta",
    "attention.in_proj.weight",
    "attention.in_proj.bias",
    "attention.out_proj.weight",
    "attention.out_proj.bias",
    "heads.weight",
    "heads.bias",
];

fn uniform(shape: &[usize], bound: f64, rng: &mut SplitMix64) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_vec(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("sized")
}

impl ModelParams {
    /// Seeded initialization: conv and head weights and biases
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` (Kaiming-uniform with a = sqrt 5),
    /// attention projections `U(-1/sqrt(d), 1/sqrt(d))` with zero biases,
    /// identity modulation.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, rng::purpose::INIT);
        let [c1, c2, c3] = cfg.channels;
        let d = cfg.embed_dim;
        let nd = cfg.num_datasets;
        let conv = |c_out: usize, c_in: usize, r: &mut SplitMix64| {
            let bound = 1.0 / ((c_in * 9) as f64).sqrt();
            (uniform(&[c_out, c_in, 3, 3], bound, r), uniform(&[c_out], bound, r))
        };
        let (conv1_w, conv1_b) = conv(c1, 1, &mut r);
        let (conv2_w, conv2_b) = conv(c2, c1, &mut r);
        let (conv3_w, conv3_b) = conv(c3, c2, &mut r);
        let attn_bound = 1.0 / (d as f64).sqrt();
        let attn_in_w = uniform(&[3 * d, d], attn_bound, &mut r);
        let attn_out_w = uniform(&[d, d], attn_bound, &mut r);
        let head_w = uniform(&[nd, d], attn_bound, &mut r);
        let head_b = uniform(&[nd], attn_bound, &mut r);
        Ok(Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            conv3_w,
            conv3_b,
            gamma: Tensor::full(&[nd, d], 1.0),
            beta: Tensor::zeros(&[nd, d]),
            attn_in_w,
            attn_in_b: Tensor::zeros(&[3 * d]),
            attn_out_w,
            attn_out_b: Tensor::zeros(&[d]),
            head_w,
            head_b,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn tensors(&self) -> [&Tensor; 14] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.conv3_w,
            &self.conv3_b,
            &self.gamma,
            &self.beta,
            &self.attn_in_w,
            &self.attn_in_b,
            &self.attn_out_w,
            &self.attn_out_b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 14] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.conv3_w,
            &mut self.conv3_b,
            &mut self.gamma,
            &mut self.beta,
            &mut self.attn_in_w,
            &mut self.attn_in_b,
            &mut self.attn_out_w,
            &mut self.attn_out_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        PARAM_NAMES.into_iter().zip(self.tensors())
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let arr: [Tensor; 14] =
            tensors.try_into().map_err(|_| Error::shape("expected 14 parameter tensors"))?;
        let [conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, gamma, beta, attn_in_w, attn_in_b, attn_out_w, attn_out_b, head_w, head_b] =
            arr;
        Ok(Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            conv3_w,
            conv3_b,
            gamma,
            beta,
            attn_in_w,
            attn_in_b,
            attn_out_w,
            attn_out_b,
            head_w,
            head_b,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    /// Checkpoint archive with the config snapshot and its hash in the manifest.
    pub fn to_archive(&self, cfg: &ModelConfig, extra: &[(String, String)]) -> Archive {
        let mut manifest = vec![
            ("format".to_string(), "resaware-checkpoint".to_string()),
            ("architecture".to_string(), super::config::ARCHITECTURE_VERSION.to_string()),
            ("config_hash".to_string(), cfg.hash()),
        ];
        manifest.extend(cfg.to_entries().into_iter().map(|(k, v)| (format!("config.{k}"), v)));
        manifest.extend(extra.iter().cloned());
        Archive {
            manifest,
            tensors: self.named().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    /// Restore parameters, refusing archives whose config hash does not
    /// match the current architecture.
    pub fn from_archive(archive: &Archive) -> Result<(Self, ModelConfig)> {
        let entries = archive
            .manifest
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k, v.as_str())));
        let cfg = ModelConfig::from_entries(entries)
            .map_err(|e| Error::IncompatibleCheckpoint(format!("bad config snapshot: {e}")))?;
        let stored = archive
            .manifest_value("config_hash")
            .ok_or_else(|| Error::IncompatibleCheckpoint("missing config hash".into()))?;
        if stored != cfg.hash() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "config hash {stored} does not match {} for this build",
                cfg.hash()
            )));
        }
        let reference = ModelParams::init(&cfg, 0)?;
        let mut tensors = Vec::with_capacity(14);
        for (name, expected) in reference.named() {
            let t = archive
                .tensor(name)
                .ok_or_else(|| Error::IncompatibleCheckpoint(format!("missing tensor {name}")))?;
            if t.shape() != expected.shape() {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    expected.shape()
                )));
            }
            tensors.push(t.clone());
        }
        Ok((Self::from_tensors(tensors)?, cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 1).unwrap();
        assert_eq!(a, ModelParams::init(&cfg, 1).unwrap());
        assert_ne!(a, ModelParams::init(&cfg, 2).unwrap());
        assert!(a.gamma.data().iter().all(|&g| g == 1.0));
        assert!(a.beta.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn archive_round_trip_and_hash_guard() {
        let cfg = ModelConfig { num_datasets: 2, ..Default::default() };
        let p = ModelParams::init(&cfg, 4).unwrap();
        let archive = p.to_archive(&cfg, &[("epoch".into(), "3".into())]);
        let bytes = archive.to_bytes();
        let (back, back_cfg) = ModelParams::from_archive(&Archive::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back_cfg, cfg);

        let mut tampered = archive.clone();
        for (k, v) in tampered.manifest.iter_mut() {
            if k == "config_hash" {
                *v = "0".repeat(64);
            }
        }
        assert!(matches!(ModelParams::from_archive(&tampered), Err(Error::IncompatibleCheckpoint(_))));
    }
}
