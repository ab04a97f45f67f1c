use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use super::{ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

/// Speaker counts per split for `n` speakers: cumulative boundaries
/// `round(r1*n)` and `round((r1+r2)*n)`, nudged so no split is empty.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if n < 3 {
        return Err(Error::data(format!("need at least 3 speakers for a disjoint split, got {n}")));
    }
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let b1 = ((ratios[0] * n as f64).round() as usize).clamp(1, n - 2);
    let b2 = (((ratios[0] + ratios[1]) * n as f64).round() as usize).clamp(b1 + 1, n - 1);
    Ok([b1, b2 - b1, n - b2])
}

/// Assign every entry a split by its speaker. Distinct speakers are sorted,
/// shuffled with the seed, then cut by [`split_sizes`].
pub fn speaker_disjoint_split(entries: &[ManifestEntry], ratios: [f64; 3], seed: u64) -> Result<Vec<ManifestEntry>> {
    let mut speakers: Vec<&str> =
        entries.iter().map(|e| e.speaker_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let sizes = split_sizes(speakers.len(), ratios)?;
    speakers.shuffle(&mut rng::stream(seed, rng::purpose::SPLIT));
    let mut assignment = BTreeMap::new();
    for (i, s) in speakers.iter().enumerate() {
        let split = if i < sizes[0] {
            Split::Train
        } else if i < sizes[0] + sizes[1] {
            Split::Dev
        } else {
            Split::Test
        };
        assignment.insert(*s, split);
    }
    Ok(entries.iter().map(|e| ManifestEntry { split: assignment[e.speaker_id.as_str()], ..e.clone() }).collect())
}
