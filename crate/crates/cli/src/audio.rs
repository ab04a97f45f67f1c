//! Manifest splits loaded into memory as model-ready examples.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use resaware_core::data::{load_wav, par_map, resolve, ManifestEntry, Split};
use resaware_core::dsp::{
    crop_or_pad, multi_resolution_features, resample, CropMode, MelSpectrogram, Waveform, CANONICAL_SAMPLE_RATE,
};
use resaware_core::model::ExampleSource;
use resaware_core::{Label, Result};

/// Analysis segment length in seconds.
pub const SEGMENT_S: f64 = 2.0;

pub struct Utterance {
    /// As written in the manifest.
    pub path: PathBuf,
    pub label: Label,
    pub speaker: String,
    pub dataset_id: usize,
    /// Kept only when random cropping can move the segment.
    wave: Option<Waveform>,
    specs: Option<Vec<MelSpectrogram>>,
}

/// One split of a manifest. Training sets draw a fresh random crop per
/// epoch; everything else is center-cropped once.
pub struct AudioSet {
    pub items: Vec<Utterance>,
    random_crop: bool,
    crop_seed: u64,
}

pub fn read_waveform(path: &Path) -> Result<Waveform> {
    let w = load_wav(path)?;
    if w.sample_rate == CANONICAL_SAMPLE_RATE {
        Ok(w)
    } else {
        resample(&w, CANONICAL_SAMPLE_RATE)
    }
}

/// Center-cropped features of a single file.
pub fn file_features(path: &Path) -> Result<Vec<MelSpectrogram>> {
    let w = crop_or_pad(&read_waveform(path)?, SEGMENT_S, CropMode::Center);
    Ok(multi_resolution_features(&w)?.to_vec())
}

impl AudioSet {
    pub fn load(
        manifest: &Path,
        entries: &[ManifestEntry],
        split: Split,
        random_crop: bool,
        dataset_override: Option<usize>,
    ) -> Result<Self> {
        let chosen: Vec<&ManifestEntry> = entries.iter().filter(|e| e.split == split).collect();
        let target = (SEGMENT_S * CANONICAL_SAMPLE_RATE as f64).round() as usize;
        let loaded = par_map(&chosen, |_, e| -> Result<Utterance> {
            let w = read_waveform(&resolve(manifest, e))?;
            let (wave, specs) = if random_crop && w.len() > target {
                (Some(w), None)
            } else {
                let seg = crop_or_pad(&w, SEGMENT_S, CropMode::Center);
                (None, Some(multi_resolution_features(&seg)?.to_vec()))
            };
            Ok(Utterance {
                path: e.path.clone(),
                label: e.label,
                speaker: e.speaker_id.clone(),
                dataset_id: dataset_override.unwrap_or(e.dataset_id),
                wave,
                specs,
            })
        });
        let items = loaded.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { items, random_crop, crop_seed: 0 })
    }

    pub fn set_crop_seed(&mut self, seed: u64) {
        self.crop_seed = seed;
    }
}

impl ExampleSource for AudioSet {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn label(&self, index: usize) -> Label {
        self.items[index].label
    }

    fn dataset_id(&self, index: usize) -> usize {
        self.items[index].dataset_id
    }

    fn speaker(&self, index: usize) -> &str {
        &self.items[index].speaker
    }

    fn features(&self, index: usize, epoch: usize) -> Result<Cow<'_, [MelSpectrogram]>> {
        let u = &self.items[index];
        if let Some(specs) = &u.specs {
            return Ok(Cow::Borrowed(specs));
        }
        let wave = u.wave.as_ref().expect("either features or waveform are kept");
        let mode = if self.random_crop {
            CropMode::Random { global_seed: self.crop_seed, file_index: (epoch as u64) << 32 | index as u64 }
        } else {
            CropMode::Center
        };
        Ok(Cow::Owned(multi_resolution_features(&crop_or_pad(wave, SEGMENT_S, mode))?.to_vec()))
    }
}
