//! 16-bit PCM WAV in and out.

use std::path::Path;

use vadkit_core::audio::{AudioBuffer, SAMPLE_RATE};

use crate::error::{Error, Result};

/// Reads 16-bit PCM mono or stereo at 16 kHz. Stereo is averaged per
/// sample; values are scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::WavUnsupported {
            path: path.into(),
            msg: format!("{:?} with {} bits per sample", spec.sample_format, spec.bits_per_sample),
        });
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(Error::WavUnsupported {
            path: path.into(),
            msg: format!("{} channels", spec.channels),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            path: path.into(),
            rate: spec.sample_rate,
            expected: SAMPLE_RATE,
        });
    }
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| classify(path, e))?;
    let samples = match spec.channels {
        1 => raw.iter().map(|&s| s as f32 / 32768.0).collect(),
        _ => raw
            .chunks_exact(2)
            .map(|p| ((p[0] as f32 / 32768.0) + (p[1] as f32 / 32768.0)) / 2.0)
            .collect(),
    };
    Ok(AudioBuffer::new(samples, spec.sample_rate)?)
}

fn classify(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::io(path, io),
        hound::Error::Unsupported => Error::WavUnsupported {
            path: path.into(),
            msg: "codec not handled".into(),
        },
        other => Error::WavFormat {
            path: path.into(),
            msg: other.to_string(),
        },
    }
}

/// Writes mono 16-bit PCM, rounding and saturating each sample.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut bytes = std::io::Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut bytes, spec).map_err(|e| classify(path, e))?;
        for &s in audio.samples() {
            let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v).map_err(|e| classify(path, e))?;
        }
        w.finalize().map_err(|e| classify(path, e))?;
    }
    crate::fsutil::write_atomic(path, &bytes.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let audio = AudioBuffer::new(vec![0.0, 32767.0 / 32768.0, -1.0, 0.5], SAMPLE_RATE).unwrap();
        write_wav(&p, &audio).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back, audio);
        assert_eq!(back.samples()[1], 32767.0 / 32768.0);
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for s in [1000i16, 3000, -200, 200] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let a = read_wav(&p).unwrap();
        assert_eq!(a.samples(), &[2000.0 / 32768.0, 0.0]);
    }

    #[test]
    fn rejects_rate_depth_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        let mut spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        hound::WavWriter::create(&p, spec).unwrap().finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::SampleRate { rate: 8000, .. })));
        spec.sample_rate = SAMPLE_RATE;
        spec.bits_per_sample = 24;
        hound::WavWriter::create(&p, spec).unwrap().finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::WavUnsupported { .. })));
        std::fs::write(&p, b"RIFF\x04\x00\x00\x00junk").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::WavFormat { .. })));
    }
}
