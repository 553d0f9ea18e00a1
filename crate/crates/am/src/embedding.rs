use crate::{AmError, Result};
use descant_features::SpeakerStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dimensions of the speaker embedding appended to every input frame.
pub const EMBEDDING_DIM: usize = 40;

/// Seed of the fixed random projection; a constant so that embeddings are
/// comparable across training runs and tools.
const PROJECTION_SEED: u64 = 0x5045_414b_4552_u64;

/// Summarizes a speaker as the per-dimension mean and variance of their
/// filter-bank frames (2 * dims values), projected to `EMBEDDING_DIM` by a
/// fixed seeded matrix with orthonormal rows.
pub fn speaker_embedding(stats: &SpeakerStats) -> Result<Vec<f32>> {
    if stats.frames == 0 {
        return Err(AmError::EmptyInput(format!(
            "no frames accumulated for speaker {}",
            stats.speaker_id
        )));
    }
    let raw: Vec<f64> = stats
        .mean()
        .into_iter()
        .chain(stats.variance())
        .collect();
    if raw.len() < EMBEDDING_DIM {
        return Err(AmError::InvalidArg(format!(
            "speaker stats give {} summary values, need >= {EMBEDDING_DIM}",
            raw.len()
        )));
    }
    let proj = projection(raw.len());
    Ok(proj
        .iter()
        .map(|row| row.iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>() as f32)
        .collect())
}

/// `EMBEDDING_DIM` orthonormal rows of length `din`, deterministic.
pub fn projection(din: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(EMBEDDING_DIM);
    while rows.len() < EMBEDDING_DIM {
        let mut v: Vec<f64> = (0..din).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Gram-Schmidt against the accepted rows
        for row in &rows {
            let d: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (x, r) in v.iter_mut().zip(row) {
                *x -= d * r;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // numerically degenerate draw; resample
        }
        for x in &mut v {
            *x /= norm;
        }
        rows.push(v);
    }
    rows
}
