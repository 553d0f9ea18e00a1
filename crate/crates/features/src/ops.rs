use crate::types::{AudioSignal, FeatureKind, FeatureMatrix, SpeakerStats};
use crate::{FeatureError, Result};

/// Per-singer mean normalization (variance optional).
pub fn apply_cmvn(
    features: &FeatureMatrix,
    stats: &SpeakerStats,
    normalize_variance: bool,
) -> Result<FeatureMatrix> {
    if stats.speaker_id != features.speaker_id {
        return Err(FeatureError::SpeakerMismatch {
            stats: stats.speaker_id.clone(),
            features: features.speaker_id.clone(),
        });
    }
    if stats.frames == 0 {
        return Err(FeatureError::EmptyStats(stats.speaker_id.clone()));
    }
    if stats.dims != features.dims {
        return Err(FeatureError::InvalidArg(format!(
            "stats dims {} vs features dims {}",
            stats.dims, features.dims
        )));
    }
    let mean = stats.mean();
    let scale: Vec<f64> = if normalize_variance {
        stats
            .variance()
            .iter()
            .map(|v| 1.0 / v.max(1e-10).sqrt())
            .collect()
    } else {
        vec![1.0; stats.dims]
    };
    let mut out = features.clone();
    for t in 0..out.frames {
        let row = out.row_mut(t);
        for d in 0..row.len() {
            row[d] = ((row[d] as f64 - mean[d]) * scale[d]) as f32;
        }
    }
    Ok(out)
}

/// Concatenates +-context frames around each frame with edge replication.
pub fn splice(features: &FeatureMatrix, left_ctx: usize, right_ctx: usize) -> Result<FeatureMatrix> {
    if features.frames == 0 {
        return Err(FeatureError::InvalidArg("splice on empty features".into()));
    }
    let width = left_ctx + right_ctx + 1;
    let in_dims = features.dims;
    let dims = in_dims * width;
    let mut data = vec![0.0f32; features.frames * dims];
    for t in 0..features.frames {
        for (slot, off) in (-(left_ctx as i64)..=right_ctx as i64).enumerate() {
            let src = (t as i64 + off).clamp(0, features.frames as i64 - 1) as usize;
            data[t * dims + slot * in_dims..t * dims + (slot + 1) * in_dims]
                .copy_from_slice(features.row(src));
        }
    }
    Ok(FeatureMatrix {
        data,
        frames: features.frames,
        dims,
        kind: if width == 1 {
            features.kind
        } else {
            FeatureKind::Spliced
        },
        speaker_id: features.speaker_id.clone(),
        utterance_id: features.utterance_id.clone(),
    })
}

/// Resamples the waveform by linear interpolation, changing duration by
/// 1/factor (pitch and tempo move together).
pub fn speed_perturb(signal: &AudioSignal, factor: f64) -> Result<AudioSignal> {
    if factor <= 0.0 {
        return Err(FeatureError::InvalidArg(format!(
            "speed factor must be positive, got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(signal.clone());
    }
    let len = signal.samples.len();
    if len == 0 {
        return Ok(signal.clone());
    }
    let out_len = ((len - 1) as f64 / factor).floor() as usize + 1;
    let mut samples = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let pos = j as f64 * factor;
        let i = pos.floor() as usize;
        let frac = (pos - i as f64) as f32;
        let a = signal.samples[i.min(len - 1)];
        let b = signal.samples[(i + 1).min(len - 1)];
        samples.push(a + (b - a) * frac);
    }
    Ok(AudioSignal {
        samples,
        sample_rate: signal.sample_rate,
        speaker_id: signal.speaker_id.clone(),
        utterance_id: signal.utterance_id.clone(),
    })
}
