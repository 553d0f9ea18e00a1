use crate::{FeatureError, Result};

/// Mono waveform with provenance.
#[derive(Clone, Debug)]
pub struct AudioSignal {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl AudioSignal {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Debug)]
pub struct FeatureConfig {
    pub frame_length_ms: f64,
    pub hop_ms: f64,
    pub num_mel_banks: usize,
    pub num_cepstra: usize,
    pub low_freq: f64,
    /// 0.0 means Nyquist.
    pub high_freq: f64,
    pub dither: f64,
    /// Variance normalization in CMVN (mean-only by default).
    pub normalize_variance: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_length_ms: 25.0,
            hop_ms: 15.0,
            num_mel_banks: 40,
            num_cepstra: 13,
            low_freq: 20.0,
            high_freq: 0.0,
            dither: 1e-5,
            normalize_variance: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_length_ms > self.hop_ms && self.hop_ms > 0.0) {
            return Err(FeatureError::InvalidArg(
                "need frame_length_ms > hop_ms > 0".into(),
            ));
        }
        if self.num_mel_banks < self.num_cepstra {
            return Err(FeatureError::InvalidArg(
                "need num_mel_banks >= num_cepstra".into(),
            ));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    MelSpec,
    Mfcc,
    MfccDeltas,
    Spliced,
}

/// frames x dims feature matrix with framing metadata.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub data: Vec<f32>,
    pub frames: usize,
    pub dims: usize,
    pub kind: FeatureKind,
    pub speaker_id: String,
    pub utterance_id: String,
}

impl FeatureMatrix {
    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-speaker accumulated feature statistics for normalization.
#[derive(Clone, Debug)]
pub struct SpeakerStats {
    pub speaker_id: String,
    pub dims: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub frames: u64,
}

impl SpeakerStats {
    pub fn new(speaker_id: &str, dims: usize) -> Self {
        SpeakerStats {
            speaker_id: speaker_id.to_string(),
            dims,
            sum: vec![0.0; dims],
            sum_sq: vec![0.0; dims],
            frames: 0,
        }
    }

    pub fn accumulate(&mut self, features: &FeatureMatrix) -> Result<()> {
        if features.speaker_id != self.speaker_id {
            return Err(FeatureError::SpeakerMismatch {
                stats: self.speaker_id.clone(),
                features: features.speaker_id.clone(),
            });
        }
        if features.dims != self.dims {
            return Err(FeatureError::InvalidArg(format!(
                "stats dims {} vs features dims {}",
                self.dims, features.dims
            )));
        }
        for t in 0..features.frames {
            for (d, &v) in features.row(t).iter().enumerate() {
                self.sum[d] += v as f64;
                self.sum_sq[d] += (v as f64) * (v as f64);
            }
        }
        self.frames += features.frames as u64;
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.frames as f64).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        let n = self.frames as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, sq)| (sq / n - (s / n) * (s / n)).max(0.0))
            .collect()
    }
}
