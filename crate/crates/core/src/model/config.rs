use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dsp::Resolution;
use crate::error::{Error, Result};

/// Bumped whenever the forward computation or parameter layout changes, so
/// checkpoints from older code are refused.
pub const ARCHITECTURE_VERSION: &str = "resaware-detector-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoConsistency,
    SingleResolution(Resolution),
    NoAttention,
}

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [
        Variant::Full,
        Variant::NoConsistency,
        Variant::SingleResolution(Resolution::Medium),
        Variant::NoAttention,
    ];

    /// Resolutions the variant encodes, in fine-to-coarse order.
    pub fn resolutions(self) -> Vec<Resolution> {
        match self {
            Variant::SingleResolution(r) => vec![r],
            _ => Resolution::ALL.to_vec(),
        }
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoConsistency)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => write!(f, "full"),
            Variant::NoConsistency => write!(f, "no-consistency"),
            Variant::SingleResolution(Resolution::Medium) => write!(f, "single-res"),
            Variant::SingleResolution(r) => write!(f, "single-res:{}", r.name()),
            Variant::NoAttention => write!(f, "no-attention"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, res) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let variant = match head {
            "full" => Variant::Full,
            "no-consistency" => Variant::NoConsistency,
            "no-attention" => Variant::NoAttention,
            "single-res" | "single-resolution" => {
                let r = match res {
                    None | Some("medium") | Some("2") => Resolution::Medium,
                    Some("fine") | Some("1") => Resolution::Fine,
                    Some("coarse") | Some("3") => Resolution::Coarse,
                    Some(other) => return Err(Error::config(format!("unknown resolution {other:?}"))),
                };
                return Ok(Variant::SingleResolution(r));
            }
            _ => return Err(Error::config(format!("unknown variant {s:?}"))),
        };
        if res.is_some() {
            return Err(Error::config(format!("variant {head} takes no resolution")));
        }
        Ok(variant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: [usize; 3],
    pub embed_dim: usize,
    pub heads: usize,
    pub num_datasets: usize,
    pub lambda_cons: f64,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: [32, 64, 128],
            embed_dim: 128,
            heads: 4,
            num_datasets: 1,
            lambda_cons: 1.0,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::config("channel counts must be positive"));
        }
        if self.embed_dim != self.channels[2] {
            return Err(Error::config(format!(
                "embedding dim {} must equal the last conv width {}",
                self.embed_dim, self.channels[2]
            )));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "embedding dim {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.num_datasets == 0 {
            return Err(Error::config("need at least one dataset head"));
        }
        if !(self.lambda_cons >= 0.0 && self.lambda_cons.is_finite()) {
            return Err(Error::config("consistency weight must be finite and non-negative"));
        }
        Ok(())
    }

    /// Consistency weight actually applied; the no-consistency ablation and
    /// single-resolution model have none.
    pub fn effective_lambda(&self) -> f64 {
        match self.variant {
            Variant::NoConsistency | Variant::SingleResolution(_) => 0.0,
            _ => self.lambda_cons,
        }
    }

    pub fn modulated(&self) -> bool {
        self.num_datasets > 1
    }

    /// Canonical `key=value` form, one entry per line.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        vec![
            ("channels".into(), format!("{},{},{}", self.channels[0], self.channels[1], self.channels[2])),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("heads".into(), self.heads.to_string()),
            ("num_datasets".into(), self.num_datasets.to_string()),
            ("lambda_cons".into(), format!("{:?}", self.lambda_cons)),
            ("variant".into(), self.variant.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let bad = |k: &str, v: &str| Error::config(format!("bad value {v:?} for {k}"));
        for (k, v) in entries {
            match k {
                "channels" => {
                    let parts: Vec<usize> =
                        v.split(',').map(|p| p.trim().parse().map_err(|_| bad(k, v))).collect::<Result<_>>()?;
                    cfg.channels = parts.try_into().map_err(|_| bad(k, v))?;
                }
                "embed_dim" => cfg.embed_dim = v.parse().map_err(|_| bad(k, v))?,
                "heads" => cfg.heads = v.parse().map_err(|_| bad(k, v))?,
                "num_datasets" => cfg.num_datasets = v.parse().map_err(|_| bad(k, v))?,
                "lambda_cons" => cfg.lambda_cons = v.parse().map_err(|_| bad(k, v))?,
                "variant" => cfg.variant = v.parse()?,
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical config text and the architecture version.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(ARCHITECTURE_VERSION.as_bytes());
        h.update(b"\n");
        h.update(self.to_text().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ABLATIONS
            .into_iter()
            .chain([Variant::SingleResolution(Resolution::Fine), Variant::SingleResolution(Resolution::Coarse)])
        {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("attention".parse::<Variant>().is_err());
    }

    #[test]
    fn config_text_round_trips_and_hash_is_stable() {
        let cfg = ModelConfig { num_datasets: 3, lambda_cons: 0.25, variant: Variant::NoAttention, ..Default::default() };
        let text = cfg.to_text();
        let back = ModelConfig::from_entries(text.lines().filter_map(|l| l.split_once('='))).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(ModelConfig::default().hash(), cfg.hash());
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig { heads: 3, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { num_datasets: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn lambda_is_forced_off_for_no_consistency() {
        let cfg = ModelConfig { lambda_cons: 5.0, variant: Variant::NoConsistency, ..Default::default() };
        assert_eq!(cfg.effective_lambda(), 0.0);
        assert_eq!(ModelConfig { lambda_cons: 5.0, ..Default::default() }.effective_lambda(), 5.0);
    }
}
