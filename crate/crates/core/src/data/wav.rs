use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Read a PCM16 WAV as mono in `[-1, 1)`. Multi-channel files are averaged.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let unsupported = |reason: String| Error::UnsupportedFormat { path: path.to_path_buf(), reason };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::Io(io),
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::CorruptFile { path: path.to_path_buf(), reason: io.to_string() }
        }
        other => unsupported(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(format!("{:?} {}-bit; only PCM 16-bit is read", spec.sample_format, spec.bits_per_sample)));
    }
    let channels = spec.channels.max(1) as usize;
    let raw: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::CorruptFile { path: path.to_path_buf(), reason: e.to_string() })?;
    if raw.len() % channels != 0 {
        return Err(Error::CorruptFile { path: path.to_path_buf(), reason: "partial sample frame".into() });
    }
    let scale = 1.0 / (32768.0 * channels as f64);
    let samples = raw.chunks(channels).map(|f| f.iter().map(|&s| s as f64).sum::<f64>() * scale).collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Write mono PCM16, rounding to the nearest step and clipping to range.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::data(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io)?;
    for &x in &w.samples {
        writer.write_sample((x * 32768.0).round().clamp(-32768.0, 32767.0) as i16).map_err(io)?;
    }
    writer.finalize().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: hound::WavSpec, frames: &[Vec<i32>]) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for f in frames {
            for &s in f {
                if spec.sample_format == hound::SampleFormat::Float {
                    w.write_sample(s as f32).unwrap();
                } else {
                    w.write_sample(s).unwrap();
                }
            }
        }
        w.finalize().unwrap();
    }

    fn spec(channels: u16, bits: u16, format: hound::SampleFormat) -> hound::WavSpec {
        hound::WavSpec { channels, sample_rate: 16_000, bits_per_sample: bits, sample_format: format }
    }

    #[test]
    fn constant_half_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, spec(1, 16, hound::SampleFormat::Int), &vec![vec![16384]; 100]);
        let w = load_wav(&p).unwrap();
        assert_eq!(w.len(), 100);
        assert!(w.samples.iter().all(|&s| s == 0.5));
        assert_eq!(w.sample_rate, 16_000);
    }

    #[test]
    fn opposite_stereo_channels_cancel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, spec(2, 16, hound::SampleFormat::Int), &vec![vec![16384, -16384]; 50]);
        let w = load_wav(&p).unwrap();
        assert_eq!(w.len(), 50);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn other_encodings_are_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p24 = dir.path().join("24.wav");
        write_raw(&p24, spec(1, 24, hound::SampleFormat::Int), &vec![vec![1000]; 10]);
        assert!(matches!(load_wav(&p24), Err(Error::UnsupportedFormat { .. })));
        let pf = dir.path().join("f.wav");
        write_raw(&pf, spec(1, 32, hound::SampleFormat::Float), &vec![vec![0]; 10]);
        assert!(matches!(load_wav(&pf), Err(Error::UnsupportedFormat { .. })));
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not a riff file").unwrap();
        assert!(matches!(load_wav(&junk), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn truncated_data_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw(&p, spec(1, 16, hound::SampleFormat::Int), &vec![vec![7]; 1000]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 501]).unwrap();
        assert!(matches!(load_wav(&p), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(load_wav(Path::new("/nonexistent/x.wav")), Err(Error::Io(_))));
    }

    #[test]
    fn round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        let samples: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.01).sin() * 0.99).collect();
        write_wav(&p, &Waveform::new(samples.clone(), 8000).unwrap()).unwrap();
        let back = load_wav(&p).unwrap();
        assert_eq!(back.sample_rate, 8000);
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
