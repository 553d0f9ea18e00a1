use crate::types::{AudioSignal, FeatureConfig, FeatureKind, FeatureMatrix};
use crate::{FeatureError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// 1 + floor((len - frame) / hop), or an error when no full frame fits.
pub fn num_frames(len: usize, frame: usize, hop: usize) -> Option<usize> {
    if len < frame {
        None
    } else {
        Some(1 + (len - frame) / hop)
    }
}

/// Triangular mel filterbank: `banks` rows over `bins` spectrum bins.
pub fn mel_filterbank(
    banks: usize,
    fft_size: usize,
    sample_rate: u32,
    low_freq: f64,
    high_freq: f64,
) -> Vec<Vec<f32>> {
    let nyquist = sample_rate as f64 / 2.0;
    let high = if high_freq <= 0.0 { nyquist } else { high_freq.min(nyquist) };
    let bins = fft_size / 2 + 1;
    let mel_lo = hz_to_mel(low_freq);
    let mel_hi = hz_to_mel(high);
    let centers: Vec<f64> = (0..banks + 2)
        .map(|i| mel_lo + (mel_hi - mel_lo) * i as f64 / (banks + 1) as f64)
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut filters = vec![vec![0.0f32; bins]; banks];
    for b in 0..banks {
        let (left, center, right) = (centers[b], centers[b + 1], centers[b + 2]);
        for k in 0..bins {
            let mel = hz_to_mel(k as f64 * bin_hz);
            let w = if mel <= left || mel >= right {
                0.0
            } else if mel <= center {
                (mel - left) / (center - left)
            } else {
                (right - mel) / (right - center)
            };
            filters[b][k] = w as f32;
        }
    }
    filters
}

/// Center frequencies (Hz) of the mel banks, for tests and reports.
pub fn mel_bank_centers_hz(
    banks: usize,
    sample_rate: u32,
    low_freq: f64,
    high_freq: f64,
) -> Vec<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let high = if high_freq <= 0.0 { nyquist } else { high_freq.min(nyquist) };
    let mel_lo = hz_to_mel(low_freq);
    let mel_hi = hz_to_mel(high);
    (1..=banks)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (banks + 1) as f64))
        .collect()
}

fn power_frames(signal: &AudioSignal, config: &FeatureConfig) -> Result<(Vec<Vec<f32>>, usize)> {
    config.validate()?;
    let frame = config.frame_samples(signal.sample_rate);
    let hop = config.hop_samples(signal.sample_rate);
    let n = num_frames(signal.samples.len(), frame, hop).ok_or(FeatureError::TooShort {
        got: signal.samples.len(),
        need: frame,
    })?;
    let fft_size = frame.next_power_of_two();
    let mut planner = FftPlanner::<f32>::new();
    let fft = planner.plan_fft_forward(fft_size);
    // Hamming window
    let window: Vec<f32> = (0..frame)
        .map(|i| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (frame - 1) as f64).cos()
        })
        .map(|v| v as f32)
        .collect();
    let mut frames = Vec::with_capacity(n);
    let mut buf = vec![Complex::new(0.0f32, 0.0f32); fft_size];
    for t in 0..n {
        let start = t * hop;
        for i in 0..fft_size {
            let v = if i < frame {
                signal.samples[start + i] * window[i]
            } else {
                0.0
            };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f32> = buf[..fft_size / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        frames.push(power);
    }
    Ok((frames, fft_size))
}

fn dither_rng(utterance_id: &str) -> ChaCha8Rng {
    // FNV-1a over the utterance id keeps dither deterministic per utterance
    let mut h: u64 = 0xcbf29ce484222325;
    for b in utterance_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Log mel-filterbank energies: frames x num_mel_banks.
pub fn mel_spectrogram(signal: &AudioSignal, config: &FeatureConfig) -> Result<FeatureMatrix> {
    let (frames, fft_size) = power_frames(signal, config)?;
    let filters = mel_filterbank(
        config.num_mel_banks,
        fft_size,
        signal.sample_rate,
        config.low_freq,
        config.high_freq,
    );
    let mut rng = dither_rng(&signal.utterance_id);
    let banks = config.num_mel_banks;
    let mut data = Vec::with_capacity(frames.len() * banks);
    for power in &frames {
        for filt in &filters {
            let mut e: f64 = power
                .iter()
                .zip(filt)
                .map(|(&p, &w)| p as f64 * w as f64)
                .sum();
            if config.dither > 0.0 {
                e += rng.gen::<f64>() * config.dither;
            }
            data.push(e.max(1e-30).ln() as f32);
        }
    }
    Ok(FeatureMatrix {
        data,
        frames: frames.len(),
        dims: banks,
        kind: FeatureKind::MelSpec,
        speaker_id: signal.speaker_id.clone(),
        utterance_id: signal.utterance_id.clone(),
    })
}

/// 13 static MFCCs plus delta and delta-delta: frames x 39.
pub fn mfcc_with_deltas(signal: &AudioSignal, config: &FeatureConfig) -> Result<FeatureMatrix> {
    let mel = mel_spectrogram(signal, config)?;
    let (banks, ceps) = (config.num_mel_banks, config.num_cepstra);
    // orthonormal DCT-II of the log mel energies
    let mut statics = vec![0.0f32; mel.frames * ceps];
    let norm0 = (1.0 / banks as f64).sqrt();
    let norm = (2.0 / banks as f64).sqrt();
    for t in 0..mel.frames {
        let row = mel.row(t);
        for c in 0..ceps {
            let mut acc = 0.0f64;
            for (b, &v) in row.iter().enumerate() {
                acc += v as f64
                    * (std::f64::consts::PI * c as f64 * (b as f64 + 0.5) / banks as f64).cos();
            }
            statics[t * ceps + c] = (acc * if c == 0 { norm0 } else { norm }) as f32;
        }
    }
    let deltas = regression_deltas(&statics, mel.frames, ceps, 2);
    let ddeltas = regression_deltas(&deltas, mel.frames, ceps, 2);
    let dims = 3 * ceps;
    let mut data = vec![0.0f32; mel.frames * dims];
    for t in 0..mel.frames {
        data[t * dims..t * dims + ceps].copy_from_slice(&statics[t * ceps..(t + 1) * ceps]);
        data[t * dims + ceps..t * dims + 2 * ceps]
            .copy_from_slice(&deltas[t * ceps..(t + 1) * ceps]);
        data[t * dims + 2 * ceps..t * dims + 3 * ceps]
            .copy_from_slice(&ddeltas[t * ceps..(t + 1) * ceps]);
    }
    Ok(FeatureMatrix {
        data,
        frames: mel.frames,
        dims,
        kind: FeatureKind::MfccDeltas,
        speaker_id: signal.speaker_id.clone(),
        utterance_id: signal.utterance_id.clone(),
    })
}

/// Standard regression deltas with window +-w and edge replication:
/// d_t = sum_n n*(c_{t+n} - c_{t-n}) / (2 * sum_n n^2).
pub fn regression_deltas(x: &[f32], frames: usize, dims: usize, w: usize) -> Vec<f32> {
    let denom: f64 = 2.0 * (1..=w).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = vec![0.0f32; frames * dims];
    for t in 0..frames {
        for d in 0..dims {
            let mut acc = 0.0f64;
            for n in 1..=w {
                let fwd = (t + n).min(frames - 1);
                let bwd = t.saturating_sub(n);
                acc += n as f64 * (x[fwd * dims + d] as f64 - x[bwd * dims + d] as f64);
            }
            out[t * dims + d] = (acc / denom) as f32;
        }
    }
    out
}
