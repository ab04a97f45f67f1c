use rand::RngCore;

use super::Waveform;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMode {
    /// Uniform start drawn from the `(global_seed, file_index)` crop stream.
    Random { global_seed: u64, file_index: u64 },
    Center,
}

impl CropMode {
    fn start(&self, len: usize, target: usize) -> usize {
        let range = (len - target + 1) as u64;
        match *self {
            CropMode::Random { global_seed, file_index } => {
                let mut stream = rng::stream(global_seed, rng::purpose::CROP | file_index);
                (stream.next_u64() % range) as usize
            }
            CropMode::Center => (len - target) / 2,
        }
    }
}

/// Fixed-length segment of `duration_s` seconds; short input is zero-padded
/// at the tail.
pub fn crop_or_pad(w: &Waveform, duration_s: f64, mode: CropMode) -> Waveform {
    assert!(duration_s > 0.0, "duration must be positive");
    let target = (duration_s * w.sample_rate as f64).round() as usize;
    let samples = if w.len() <= target {
        let mut s = w.samples.clone();
        s.resize(target, 0.0);
        s
    } else {
        let start = mode.start(w.len(), target);
        w.samples[start..start + target].to_vec()
    };
    Waveform { samples, sample_rate: w.sample_rate }
}
