use crate::config::{ModelConfig, TrainConfig};
use crate::model::AcousticModel;
use crate::{AmError, Result};
use descant_nn::{log_softmax_xent, Mode, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

/// One training utterance: frames already carry the speaker embedding.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub utt_id: String,
    /// [T, feat_dim + embed_dim]
    pub frames: Tensor<f32>,
    /// One state label per frame.
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub train: Vec<Utterance>,
    pub valid: Vec<Utterance>,
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

struct Chunk {
    /// [width * dims], edge-replicated past the utterance end.
    data: Vec<f32>,
    labels: Vec<usize>,
    /// False on replicated padding frames; those contribute no loss.
    mask: Vec<bool>,
    width: usize,
}

fn cut_chunks(data: &[Utterance], dims: usize, widths: &[usize]) -> Result<Vec<Chunk>> {
    let mut chunks = Vec::new();
    let mut w_idx = 0usize;
    for utt in data {
        let t = utt.frames.shape()[0];
        if utt.frames.shape()[1] != dims {
            return Err(AmError::InvalidArg(format!(
                "utterance {} has {} dims, model wants {dims}",
                utt.utt_id,
                utt.frames.shape()[1]
            )));
        }
        if utt.labels.len() != t {
            return Err(AmError::InvalidArg(format!(
                "utterance {} has {t} frames but {} labels",
                utt.utt_id,
                utt.labels.len()
            )));
        }
        if t == 0 {
            return Err(AmError::EmptyInput(format!("utterance {} is empty", utt.utt_id)));
        }
        let mut pos = 0usize;
        while pos < t {
            let width = widths[w_idx % widths.len()];
            w_idx += 1;
            let mut data_out = Vec::with_capacity(width * dims);
            let mut labels = Vec::with_capacity(width);
            let mut mask = Vec::with_capacity(width);
            for i in 0..width {
                let src = (pos + i).min(t - 1);
                data_out.extend_from_slice(utt.frames.row(src));
                labels.push(utt.labels[src]);
                mask.push(pos + i < t);
            }
            chunks.push(Chunk {
                data: data_out,
                labels,
                mask,
                width,
            });
            pos += width;
        }
    }
    Ok(chunks)
}

trait TensorRow {
    fn row(&self, r: usize) -> &[f32];
}

impl TensorRow for Tensor<f32> {
    fn row(&self, r: usize) -> &[f32] {
        let d = *self.shape().last().unwrap();
        &self.data()[r * d..(r + 1) * d]
    }
}

/// Deterministic minibatch plan for one epoch: shuffle chunk indices, then
/// group same-width chunks so every minibatch shares a time axis.
fn plan_epoch(
    chunks: &[Chunk],
    minibatch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.shuffle(rng);
    let mut widths: Vec<usize> = chunks.iter().map(|c| c.width).collect();
    widths.sort_unstable();
    widths.dedup();
    let mut batches = Vec::new();
    for w in widths {
        let mut current = Vec::new();
        for &i in &order {
            if chunks[i].width != w {
                continue;
            }
            current.push(i);
            if current.len() == minibatch {
                batches.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            batches.push(current);
        }
    }
    batches
}

fn assemble(chunks: &[Chunk], batch: &[usize], dims: usize) -> (Tensor<f32>, Vec<usize>, Vec<bool>) {
    let width = chunks[batch[0]].width;
    let mut data = Vec::with_capacity(batch.len() * width * dims);
    let mut labels = Vec::with_capacity(batch.len() * width);
    let mut mask = Vec::with_capacity(batch.len() * width);
    for &i in batch {
        data.extend_from_slice(&chunks[i].data);
        labels.extend_from_slice(&chunks[i].labels);
        mask.extend_from_slice(&chunks[i].mask);
    }
    let x = Tensor::from_vec(&[batch.len(), width, dims], data).unwrap();
    (x, labels, mask)
}

/// Mean per-frame cross-entropy of a model on whole utterances (eval mode).
pub fn evaluate(model: &mut AcousticModel<f32>, data: &[Utterance]) -> Result<f64> {
    let mut total = 0.0;
    let mut frames = 0usize;
    for utt in data {
        let t = utt.frames.shape()[0];
        let x = utt
            .frames
            .clone()
            .reshaped(&[1, t, utt.frames.shape()[1]])
            .map_err(AmError::Nn)?;
        let logits = model.forward(&x, Mode::Eval)?;
        let (loss, _) = log_softmax_xent(&logits, &utt.labels, None)?;
        total += loss * t as f64;
        frames += t;
    }
    if frames == 0 {
        return Err(AmError::EmptyInput("no evaluation frames".into()));
    }
    Ok(total / frames as f64)
}

/// Trains a fresh model: SGD with momentum, exponential learning-rate decay,
/// the dropout schedule, periodic semi-orthogonal constraints, one checkpoint
/// per epoch under `out_dir`, a `loss.csv` log, and a final model that
/// uniformly averages the trailing checkpoints (written to `final.bin`).
pub fn train(
    config: &ModelConfig,
    tc: &TrainConfig,
    data: &TrainData,
    out_dir: &Path,
) -> Result<(AcousticModel<f32>, Vec<EpochStats>)> {
    config.validate()?;
    tc.validate()?;
    if data.train.is_empty() {
        return Err(AmError::EmptyInput("no training utterances".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let dims = config.feat_dim + config.embed_dim;
    for utt in data.train.iter().chain(&data.valid) {
        for &l in &utt.labels {
            if l >= config.num_states {
                return Err(AmError::InvalidArg(format!(
                    "utterance {} label {l} out of range for {} states",
                    utt.utt_id, config.num_states
                )));
            }
        }
    }
    let chunks = cut_chunks(&data.train, dims, &tc.chunk_widths)?;
    let mut model = AcousticModel::<f32>::new(config, tc.seed)?;
    // velocity buffers aligned with params_mut() order
    let mut velocity: Vec<Vec<f32>> = model
        .params_mut()
        .iter()
        .map(|p| vec![0.0; p.value.numel()])
        .collect();
    let mut plan_rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x706c616e));
    let batches_per_epoch = plan_epoch(&chunks, tc.minibatch, &mut plan_rng.clone()).len();
    let total_minibatches = batches_per_epoch * tc.epochs;
    let mut stats = Vec::new();
    let mut checkpoints: Vec<PathBuf> = Vec::new();
    let mut csv = String::from("iteration,train_loss,valid_loss\n");
    let mut global_mb = 0usize;
    for epoch in 1..=tc.epochs {
        let batches = plan_epoch(&chunks, tc.minibatch, &mut plan_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_frames = 0usize;
        for batch in &batches {
            let lr = tc.learning_rate(global_mb, total_minibatches);
            model.set_dropout_rate(tc.dropout_rate(global_mb, total_minibatches))?;
            let (x, labels, mask) = assemble(&chunks, batch, dims);
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train)?;
            let (loss, dlogits) = log_softmax_xent(&logits, &labels, Some(&mask))?;
            model.backward(&dlogits)?;
            let active = mask.iter().filter(|&&b| b).count();
            epoch_loss += loss * active as f64;
            epoch_frames += active;
            for (p, v) in model.params_mut().into_iter().zip(&mut velocity) {
                let step = (lr * p.lr_mult) as f32;
                let mu = tc.momentum as f32;
                let pd = p.value.data_mut();
                for ((w, vel), g) in pd.iter_mut().zip(v.iter_mut()).zip(p.grad.data()) {
                    *vel = mu * *vel - step * *g;
                    *w += *vel;
                }
            }
            global_mb += 1;
            if global_mb % tc.constrain_interval == 0 {
                model.constrain()?;
            }
        }
        let train_loss = epoch_loss / epoch_frames.max(1) as f64;
        let valid_loss = if data.valid.is_empty() {
            f64::NAN
        } else {
            model.set_dropout_rate(0.0)?;
            evaluate(&mut model, &data.valid)?
        };
        stats.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
        });
        if valid_loss.is_nan() {
            csv.push_str(&format!("{epoch},{train_loss},\n"));
        } else {
            csv.push_str(&format!("{epoch},{train_loss},{valid_loss}\n"));
        }
        let ckpt = out_dir.join(format!("epoch_{epoch:03}.bin"));
        model.save(&ckpt)?;
        checkpoints.push(ckpt);
    }
    write_atomic(&out_dir.join("loss.csv"), csv.as_bytes())?;
    let tail = checkpoints.len().saturating_sub(tc.average_last);
    let mut averaged = average_checkpoints(&checkpoints[tail..])?;
    averaged.save(&out_dir.join("final.bin"))?;
    Ok((averaged, stats))
}

/// Uniform average of checkpoints with identical architecture: parameters
/// and batch-normalization statistics are averaged elementwise.
pub fn average_checkpoints(paths: &[impl AsRef<Path>]) -> Result<AcousticModel<f32>> {
    if paths.is_empty() {
        return Err(AmError::InvalidArg("no checkpoints to average".into()));
    }
    let mut base = AcousticModel::<f32>::load(paths[0].as_ref())?;
    let mut sums: Vec<Vec<f64>> = base
        .params_mut()
        .iter()
        .map(|p| p.value.data().iter().map(|&v| v as f64).collect())
        .collect();
    let mut bn_sums: Vec<(Vec<f64>, Vec<f64>)> = base
        .batchnorms_mut()
        .iter()
        .map(|bn| (bn.running_mean.clone(), bn.running_var.clone()))
        .collect();
    for path in &paths[1..] {
        let mut other = AcousticModel::<f32>::load(path.as_ref())?;
        if other.config != base.config {
            return Err(AmError::InvalidArg(
                "checkpoints disagree on architecture".into(),
            ));
        }
        for (sum, p) in sums.iter_mut().zip(other.params_mut()) {
            for (s, &v) in sum.iter_mut().zip(p.value.data()) {
                *s += v as f64;
            }
        }
        for ((ms, vs), bn) in bn_sums.iter_mut().zip(other.batchnorms_mut()) {
            for (s, &v) in ms.iter_mut().zip(&bn.running_mean) {
                *s += v;
            }
            for (s, &v) in vs.iter_mut().zip(&bn.running_var) {
                *s += v;
            }
        }
    }
    let n = paths.len() as f64;
    for (p, sum) in base.params_mut().into_iter().zip(&sums) {
        for (w, &s) in p.value.data_mut().iter_mut().zip(sum) {
            *w = (s / n) as f32;
        }
    }
    for (bn, (ms, vs)) in base.batchnorms_mut().into_iter().zip(&bn_sums) {
        for (w, &s) in bn.running_mean.iter_mut().zip(ms) {
            *w = s / n;
        }
        for (w, &s) in bn.running_var.iter_mut().zip(vs) {
            *w = s / n;
        }
    }
    Ok(base)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
