//! File helpers: atomic writes, JSON Lines, WAV.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{OvrError, Result};
use crate::stft::Waveform;

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<()>,
{
    let tmp = temp_path(path);
    let result = (|| {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        write(&mut out)?;
        out.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| {
            OvrError::Format(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |out| {
        for row in rows {
            serde_json::to_writer(&mut *out, row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Reads every channel of a WAV file. The file's rate must equal
/// `expected_rate`; no resampling is done.
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<Vec<Waveform>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(OvrError::SampleRate {
            expected: expected_rate,
            found: spec.sample_rate,
        });
    }
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(OvrError::Format(format!(
                "unsupported WAV encoding {fmt:?} {bits}-bit in {}",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / channels;
    Ok((0..channels)
        .map(|ch| {
            Waveform::new(
                (0..frames).map(|t| interleaved[t * channels + ch]).collect(),
                expected_rate,
            )
        })
        .collect())
}

pub fn read_mono(path: &Path, expected_rate: u32) -> Result<Waveform> {
    let mut channels = read_wav(path, expected_rate)?;
    if channels.len() != 1 {
        return Err(OvrError::Format(format!(
            "{} has {} channels, expected mono",
            path.display(),
            channels.len()
        )));
    }
    Ok(channels.remove(0))
}

pub fn write_wav(path: &Path, channels: &[&Waveform], format: WavFormat) -> Result<()> {
    let first = channels
        .first()
        .ok_or_else(|| OvrError::Empty("no channels to write".into()))?;
    if channels
        .iter()
        .any(|c| c.len() != first.len() || c.sample_rate_hz != first.sample_rate_hz)
    {
        return Err(OvrError::Shape("channels differ in length or rate".into()));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: first.sample_rate_hz,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    write_atomic(path, |out| {
        let mut writer = hound::WavWriter::new(out, spec)?;
        for t in 0..first.len() {
            for ch in channels {
                let v = ch.samples[t];
                match format {
                    WavFormat::Pcm16 => {
                        writer.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?
                    }
                    WavFormat::Float32 => writer.write_sample(v as f32)?,
                }
            }
        }
        writer.finalize()?;
        Ok(())
    })
}
