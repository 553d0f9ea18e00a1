use crate::types::AudioSignal;
use crate::{FeatureError, Result};
use std::io::{Read, Write};
use std::path::Path;

/// Reads a mono 16-bit PCM RIFF/WAVE file; samples scaled to [-1, 1].
pub fn load_wav(path: &Path) -> Result<AudioSignal> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let name = path.display().to_string();
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(FeatureError::NotWave(name));
    }
    let mut pos = 12;
    let mut sample_rate = 0u32;
    let mut channels = 0u16;
    let mut have_fmt = false;
    let mut data: Option<(usize, usize)> = None; // (offset, declared len)
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if body + 16 > bytes.len() {
                    return Err(FeatureError::Truncated(name));
                }
                let format = u16::from_le_bytes(bytes[body..body + 2].try_into().unwrap());
                channels = u16::from_le_bytes(bytes[body + 2..body + 4].try_into().unwrap());
                sample_rate =
                    u32::from_le_bytes(bytes[body + 4..body + 8].try_into().unwrap());
                let bits = u16::from_le_bytes(bytes[body + 14..body + 16].try_into().unwrap());
                if format != 1 || bits != 16 {
                    return Err(FeatureError::UnsupportedCodec(format!(
                        "{name}: format {format}, {bits}-bit"
                    )));
                }
                have_fmt = true;
            }
            b"data" => {
                data = Some((body, size));
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    if !have_fmt {
        return Err(FeatureError::Truncated(format!("{name}: no fmt chunk")));
    }
    if channels != 1 {
        return Err(FeatureError::NonMono(channels));
    }
    let (off, declared) = data.ok_or_else(|| FeatureError::Truncated(format!("{name}: no data chunk")))?;
    if off + declared > bytes.len() {
        return Err(FeatureError::Truncated(format!(
            "{name}: data chunk declares {declared} bytes, {} present",
            bytes.len() - off
        )));
    }
    let samples: Vec<f32> = bytes[off..off + declared]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
        .collect();
    Ok(AudioSignal {
        samples,
        sample_rate,
        speaker_id: String::new(),
        utterance_id: String::new(),
    })
}

/// Writes a mono 16-bit PCM WAV; input clipped to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("wav.tmp");
    std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&out))
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })
}
