use crate::{CliError, Result};
use descant_am::TrainConfig;
use descant_decoder::DecodeParams;
use descant_synth::SynthSpec;
use std::path::{Path, PathBuf};

/// Language-model settings for the decode/rescore ladder.
#[derive(Clone, Debug)]
pub struct LmSettings {
    /// Also build `<unk>`-augmented variants of each n-gram model.
    pub unk: bool,
    /// Train a recurrent LM and add interpolated-rescore rows.
    pub rnnlm: bool,
    /// Interpolation weight of the recurrent LM against the n-gram scores.
    pub rnnlm_weight: f64,
    pub rnnlm_hidden: usize,
    pub rnnlm_epochs: usize,
    /// Recurrent rescoring merges lattice states agreeing on this many
    /// trailing words.
    pub merge_words: usize,
    pub pruning_beam: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings {
            unk: true,
            rnnlm: true,
            rnnlm_weight: 0.5,
            rnnlm_hidden: 32,
            rnnlm_epochs: 5,
            merge_words: 3,
            pruning_beam: 50.0,
        }
    }
}

/// Everything a run needs; parsed from a sectioned key=value file, with
/// command-line overrides for output dir and seed.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker cap for per-utterance work inside stages (stages themselves
    /// are sequential); 1 processes utterances serially.
    pub jobs: usize,
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    pub synth: SynthSpec,
    pub normalize_variance: bool,
    /// 0 disables the attention layer.
    pub attention_heads: usize,
    /// "desk" (reduced) or "full" layer dimensions.
    pub dims: String,
    pub train: TrainConfig,
    pub lm: LmSettings,
    pub decode: DecodeParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            jobs: 1,
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            synth: SynthSpec::default(),
            normalize_variance: false,
            attention_heads: 1,
            dims: "desk".into(),
            // the reduced architecture wants a much larger step size than
            // the full-size recipe's 5e-4, and the small corpus favors more
            // frequent updates with a lower dropout ceiling
            train: TrainConfig {
                minibatch: 8,
                lr_start: 0.15,
                lr_end: 0.01,
                dropout_peak: 0.1,
                ..Default::default()
            },
            lm: LmSettings::default(),
            // a mild insertion penalty counters the short-word insertions
            // the frame-level models favor on the synthetic corpus
            decode: DecodeParams {
                word_insertion_penalty: -1.0,
                ..Default::default()
            },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(CliError::BadConfig("jobs must be >= 1".into()));
        }
        if self.dims != "desk" && self.dims != "full" {
            return Err(CliError::BadConfig(format!(
                "dims must be desk or full, got {}",
                self.dims
            )));
        }
        if !(0.0..=1.0).contains(&self.lm.rnnlm_weight) {
            return Err(CliError::BadConfig("rnnlm_weight outside [0,1]".into()));
        }
        self.synth
            .validate()
            .map_err(|e| CliError::BadConfig(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::BadConfig(e.to_string()))?;
        self.decode
            .validate()
            .map_err(|e| CliError::BadConfig(e.to_string()))?;
        Ok(())
    }

    /// Parses the sectioned key=value format. Unknown sections or keys are
    /// errors naming the offender and its line. Relative paths resolve
    /// against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| CliError::BadConfigLine {
                    line: line_no,
                    msg: format!("unterminated section header {line}"),
                })?;
                section = name.trim().to_string();
                if !matches!(
                    section.as_str(),
                    "synth" | "features" | "model" | "train" | "lm" | "decode"
                ) {
                    return Err(CliError::BadConfigLine {
                        line: line_no,
                        msg: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::BadConfigLine {
                line: line_no,
                msg: format!("expected key=value, got {line}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            set_key(&mut cfg, &section, key, value, line_no, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
            what: format!("config file {}", path.display()),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, &base)
    }
}

fn set_key(
    cfg: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
    line: usize,
    base: &Path,
) -> Result<()> {
    macro_rules! val {
        () => {
            value.parse().map_err(|e| CliError::BadConfigLine {
                line,
                msg: format!("bad value for {key}: {e}"),
            })?
        };
    }
    let unknown = || CliError::BadConfigLine {
        line,
        msg: if section.is_empty() {
            format!("unknown key {key}")
        } else {
            format!("unknown key {key} in [{section}]")
        },
    };
    let resolve = |v: &str| -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    match section {
        "" => match key {
            "seed" => cfg.seed = val!(),
            "jobs" => cfg.jobs = val!(),
            "data_dir" => cfg.data_dir = resolve(value),
            "output_dir" => cfg.output_dir = resolve(value),
            _ => return Err(unknown()),
        },
        "synth" => match key {
            "num_phones" => cfg.synth.num_phones = val!(),
            "num_words" => cfg.synth.num_words = val!(),
            "min_phones_per_word" => cfg.synth.min_phones_per_word = val!(),
            "max_phones_per_word" => cfg.synth.max_phones_per_word = val!(),
            "min_frames_per_phone" => cfg.synth.min_frames_per_phone = val!(),
            "max_frames_per_phone" => cfg.synth.max_frames_per_phone = val!(),
            "min_words_per_utt" => cfg.synth.min_words_per_utt = val!(),
            "max_words_per_utt" => cfg.synth.max_words_per_utt = val!(),
            "train_utterances" => cfg.synth.train_utterances = val!(),
            "dev_utterances" => cfg.synth.dev_utterances = val!(),
            "test_utterances" => cfg.synth.test_utterances = val!(),
            "speakers" => cfg.synth.speakers = val!(),
            "lm_sentences" => cfg.synth.lm_sentences = val!(),
            _ => return Err(unknown()),
        },
        "features" => match key {
            "normalize_variance" => cfg.normalize_variance = val!(),
            _ => return Err(unknown()),
        },
        "model" => match key {
            "attention_heads" => cfg.attention_heads = val!(),
            "dims" => cfg.dims = value.to_string(),
            _ => return Err(unknown()),
        },
        "train" => match key {
            "epochs" => cfg.train.epochs = val!(),
            "minibatch" => cfg.train.minibatch = val!(),
            "lr_start" => cfg.train.lr_start = val!(),
            "lr_end" => cfg.train.lr_end = val!(),
            "momentum" => cfg.train.momentum = val!(),
            "dropout_peak" => cfg.train.dropout_peak = val!(),
            "constrain_interval" => cfg.train.constrain_interval = val!(),
            "average_last" => cfg.train.average_last = val!(),
            "speed_perturb" => cfg.train.speed_perturb = val!(),
            _ => return Err(unknown()),
        },
        "lm" => match key {
            "unk" => cfg.lm.unk = val!(),
            "rnnlm" => cfg.lm.rnnlm = val!(),
            "rnnlm_weight" => cfg.lm.rnnlm_weight = val!(),
            "rnnlm_hidden" => cfg.lm.rnnlm_hidden = val!(),
            "rnnlm_epochs" => cfg.lm.rnnlm_epochs = val!(),
            "merge_words" => cfg.lm.merge_words = val!(),
            "pruning_beam" => cfg.lm.pruning_beam = val!(),
            _ => return Err(unknown()),
        },
        "decode" => match key {
            "beam" => cfg.decode.beam = val!(),
            "lattice_beam" => cfg.decode.lattice_beam = val!(),
            "acoustic_scale" => cfg.decode.acoustic_scale = val!(),
            "word_insertion_penalty" => cfg.decode.word_insertion_penalty = val!(),
            "max_active_tokens" => cfg.decode.max_active_tokens = val!(),
            _ => return Err(unknown()),
        },
        _ => return Err(unknown()),
    }
    Ok(())
}

/// Stage-named sub-seed derived from the run seed (FNV-1a of the name).
pub fn sub_seed(seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}
