//! Corpus ingestion: WAV reading, the CSV manifest, speaker-disjoint splits
//! and the synthetic bona fide / spoof generator.

mod split;
mod synth;
mod wav;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Label;

pub use split::{speaker_disjoint_split, split_sizes, DEFAULT_RATIOS};
pub use synth::{
    band_energy, channel_only, generate_synthetic_corpus, inter_harmonic_ratio, simulate_rerecord, write_corpus,
    SynthSpec, SyntheticCorpus, RERECORD_PEAK,
};
pub use wav::{load_wav, write_wav};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "valid" | "validation" => Ok(Split::Dev),
            "test" | "eval" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub speaker_id: String,
    pub dataset_id: usize,
    pub split: Split,
}

const HEADER: [&str; 5] = ["path", "label", "speaker_id", "dataset_id", "split"];

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    for e in entries {
        w.write_record([
            e.path.to_string_lossy().as_ref(),
            &e.label.to_string(),
            &e.speaker_id,
            &e.dataset_id.to_string(),
            &e.split.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a manifest; entry paths are returned as written.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(Error::data(format!("manifest header must be {}", HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::data(format!("manifest row {}: bad {what}", line + 2));
        out.push(ManifestEntry {
            path: PathBuf::from(rec[0].trim()),
            label: rec[1].parse().map_err(|_| bad("label"))?,
            speaker_id: rec[2].trim().to_string(),
            dataset_id: rec[3].trim().parse().map_err(|_| bad("dataset_id"))?,
            split: rec[4].parse().map_err(|_| bad("split"))?,
        });
    }
    Ok(out)
}

/// Path of `entry` relative to the manifest location.
pub fn resolve(manifest: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(&entry.path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::data(e.to_string())
    }
}

/// Worker threads for per-file work: `RESAWARE_THREADS`, else all cores.
pub fn worker_threads() -> usize {
    std::env::var("RESAWARE_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Order-preserving parallel map; results do not depend on the thread count.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let n = worker_threads();
    if n <= 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool");
    pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect())
}
