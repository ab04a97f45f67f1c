use std::fmt;

use super::config::ModelConfig;
use crate::dsp::Resolution;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBreakdown {
    pub conv1: usize,
    pub conv2: usize,
    pub conv3: usize,
    pub gamma: usize,
    pub beta: usize,
    pub attention_in: usize,
    pub attention_out: usize,
    /// One dataset's head.
    pub head: usize,
    pub num_heads: usize,
    pub total: usize,
}

impl ParameterBreakdown {
    pub fn rows(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("Encoder Conv Layer 1", self.conv1),
            ("Encoder Conv Layer 2", self.conv2),
            ("Encoder Conv Layer 3", self.conv3),
            ("Dataset Modulation (gamma)", self.gamma),
            ("Dataset Modulation (beta)", self.beta),
            ("Multi-head Attention", self.attention_in),
            ("Attention Output Projection", self.attention_out),
            ("Classifier Head (per dataset)", self.head),
        ]
    }
}

impl fmt::Display for ParameterBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, n) in self.rows() {
            writeln!(f, "{name:<32}{:>10}", grouped(n))?;
        }
        let heads = format!("Classifier Heads (x{})", self.num_heads);
        writeln!(f, "{heads:<32}{:>10}", grouped(self.head * self.num_heads))?;
        write!(f, "{:<32}{:>10}", "Total Trainable Parameters", grouped(self.total))
    }
}

/// `159875` -> `159,875`.
fn grouped(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Trainable parameters by module. Every head, the modulation tables and the
/// attention block are counted whether or not the variant uses them.
pub fn count_parameters(cfg: &ModelConfig) -> ParameterBreakdown {
    let [c1, c2, c3] = cfg.channels;
    let d = cfg.embed_dim;
    let nd = cfg.num_datasets;
    let conv = |c_in: usize, c_out: usize| c_out * c_in * 9 + c_out;
    let b = ParameterBreakdown {
        conv1: conv(1, c1),
        conv2: conv(c1, c2),
        conv3: conv(c2, c3),
        gamma: nd * d,
        beta: nd * d,
        attention_in: 3 * d * d + 3 * d,
        attention_out: d * d + d,
        head: d + 1,
        num_heads: nd,
        total: 0,
    };
    let total = b.conv1 + b.conv2 + b.conv3 + b.gamma + b.beta + b.attention_in + b.attention_out + b.head * nd;
    ParameterBreakdown { total, ..b }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopBreakdown {
    /// Convolution FLOPs per encoded input, in input order.
    pub conv: Vec<f64>,
    pub attention: f64,
    pub head: f64,
    pub total: f64,
}

impl FlopBreakdown {
    pub fn total_mflops(&self) -> f64 {
        self.total / 1e6
    }
}

impl fmt::Display for FlopBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conv.iter().enumerate() {
            writeln!(f, "{:<32}{:>12.2} MFLOPs", format!("Encoder (input {})", i + 1), c / 1e6)?;
        }
        writeln!(f, "{:<32}{:>12.2} MFLOPs", "Cross-scale attention", self.attention / 1e6)?;
        writeln!(f, "{:<32}{:>12.4} MFLOPs", "Classifier head", self.head / 1e6)?;
        write!(f, "{:<32}{:>12.2} MFLOPs", "Total forward", self.total / 1e6)
    }
}

/// Convolution FLOPs (2 per multiply-accumulate) of the encoder on one
/// `n_mels x n_frames` input.
pub fn encoder_flops(cfg: &ModelConfig, n_mels: usize, n_frames: usize) -> f64 {
    let [c1, c2, c3] = cfg.channels;
    let mut h = n_mels;
    let mut w = n_frames;
    let mut total = 0.0;
    for (c_in, c_out) in [(1, c1), (c1, c2), (c2, c3)] {
        total += 2.0 * (c_in * 9 * c_out * h * w) as f64;
        h /= 2;
        w /= 2;
    }
    total
}

/// Analytic forward cost for inputs of the given `(n_mels, n_frames)` shapes.
pub fn estimate_flops(cfg: &ModelConfig, input_shapes: &[(usize, usize)]) -> FlopBreakdown {
    let conv: Vec<f64> = input_shapes.iter().map(|&(h, w)| encoder_flops(cfg, h, w)).collect();
    if input_shapes.iter().all(|&(h, w)| h * w == 0) {
        return FlopBreakdown { conv, attention: 0.0, head: 0.0, total: 0.0 };
    }
    let d = cfg.embed_dim as f64;
    let k = input_shapes.len() as f64;
    let attention = if cfg.variant.uses_attention() {
        // QKV and output projections plus scores and weighted values.
        2.0 * k * d * 3.0 * d + 2.0 * k * d * d + 2.0 * 2.0 * k * k * d
    } else {
        0.0
    };
    let head = 2.0 * d;
    let total = conv.iter().sum::<f64>() + attention + head;
    FlopBreakdown { conv, attention, head, total }
}

/// Input shapes of a segment of `n_samples` at 16 kHz for the variant's
/// resolutions.
pub fn canonical_input_shapes(cfg: &ModelConfig, n_samples: usize) -> Vec<(usize, usize)> {
    cfg.variant
        .resolutions()
        .into_iter()
        .map(|r: Resolution| {
            let c = r.config();
            (c.n_mels, c.n_frames(n_samples))
        })
        .collect()
}
