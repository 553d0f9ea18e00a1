use crate::config::{sub_seed, RunConfig};
use crate::{CliError, Result};
use descant_am::{
    extract_profile, load_labels, param_report, profile_to_csv, profile_to_svg, sort_heads,
    speaker_embedding, summarize, train, AcousticModel, ModelConfig, TrainData, Utterance,
    EMBEDDING_DIM,
};
use descant_decoder::{
    build_graph, decode, rescore_ngram, rescore_rnnlm, Lattice, LogPosteriors,
};
use descant_features::{
    apply_cmvn, load_wav, mel_spectrogram, speed_perturb, ArchiveWriter, FeatureConfig,
    FeatureMatrix, Manifest, SpeakerStats,
};
use descant_lm::arpa::{load_arpa, save_arpa};
use descant_lm::{
    load_lexicon, train_rnnlm, Lexicon, NGramModel, RecurrentLM, RnnlmConfig, Smoothing,
    TextCorpus,
};
use descant_nn::Tensor;
use descant_scoring::{normalize_text, score_dataset};
use descant_synth::{generate, SynthSpec, SPLITS};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

const KN_DISCOUNT: f64 = 0.75;

/// The four first-pass / n-gram-rescore rows of the results table.
const LM_ROWS: &[&str] = &["3G", "3G_unk", "4G", "4G_unk"];

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Every command records what it produced (paths relative to the output
/// dir) under `manifests/<command>.files`.
fn write_file_manifest(cfg: &RunConfig, command: &str, files: &[PathBuf]) -> Result<()> {
    let mut text = String::new();
    for f in files {
        text.push_str(&format!("{}\n", f.display()));
    }
    write_atomic(
        &cfg.output_dir.join("manifests").join(format!("{command}.files")),
        text.as_bytes(),
    )
}

fn rel(cfg: &RunConfig, path: &Path) -> PathBuf {
    path.strip_prefix(&cfg.output_dir)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf())
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = SynthSpec {
        seed: sub_seed(cfg.seed, "synth"),
        ..cfg.synth.clone()
    };
    let out = generate(&spec, &cfg.data_dir).map_err(|e| CliError::Stage {
        stage: "synth",
        msg: e.to_string(),
    })?;
    write_file_manifest(cfg, "synth", &out.files)?;
    Ok(out.files)
}

// ------------------------------------------------------------- features

/// One split's prepared inputs: per-utterance feature+embedding tensors with
/// frame labels, plus reference transcripts.
pub struct PreparedSplit {
    pub utts: Vec<Utterance>,
    pub refs: Vec<(String, Vec<String>)>,
    /// CMVN'd mel features without the embedding, for archive export.
    pub feats: Vec<FeatureMatrix>,
}

fn missing(what: String) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::MissingInput { what, source: e }
}

/// Loads a split's manifest, extracts per-singer-normalized mel features,
/// appends the speaker embedding to every frame and attaches frame labels.
/// With `perturb`, adds 0.9x/1.1x speed copies (training only).
pub fn prepare_split(cfg: &RunConfig, split: &str, perturb: bool) -> Result<PreparedSplit> {
    let stage = "features";
    let manifest_path = cfg.data_dir.join(format!("{split}.manifest"));
    if !manifest_path.exists() {
        return Err(CliError::MissingInput {
            what: format!("manifest {}", manifest_path.display()),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
    }
    let manifest = Manifest::load(&manifest_path).map_err(|e| CliError::Stage {
        stage,
        msg: e.to_string(),
    })?;
    let labels = load_labels(&cfg.data_dir.join(format!("{split}.labels")))
        .map_err(|e| CliError::Stage { stage, msg: e.to_string() })?;
    let fc = FeatureConfig {
        normalize_variance: cfg.normalize_variance,
        ..Default::default()
    };
    let factors: &[f64] = if perturb { &[1.0, 0.9, 1.1] } else { &[1.0] };
    // first pass: features for every (utterance, factor) + speaker stats
    let mut raw: Vec<(String, FeatureMatrix, Vec<usize>, String)> = Vec::new();
    let mut stats: BTreeMap<String, SpeakerStats> = BTreeMap::new();
    for e in &manifest.entries {
        let wav_path = cfg.data_dir.join(&e.wav_path);
        let mut signal = load_wav(&wav_path).map_err(|err| CliError::Stage {
            stage,
            msg: format!("{}: {err}", wav_path.display()),
        })?;
        signal.speaker_id = e.speaker_id.clone();
        signal.utterance_id = e.utterance_id.clone();
        let base_labels = labels.get(&e.utterance_id).ok_or_else(|| CliError::Stage {
            stage,
            msg: format!("no frame labels for {}", e.utterance_id),
        })?;
        for &factor in factors {
            let (sig, utt_id) = if factor == 1.0 {
                (signal.clone(), e.utterance_id.clone())
            } else {
                let mut s = speed_perturb(&signal, factor).map_err(|err| CliError::Stage {
                    stage,
                    msg: err.to_string(),
                })?;
                let id = format!("{}#sp{factor}", e.utterance_id);
                s.utterance_id = id.clone();
                (s, id)
            };
            let mut feats = mel_spectrogram(&sig, &fc).map_err(|err| CliError::Stage {
                stage,
                msg: err.to_string(),
            })?;
            feats.utterance_id = utt_id.clone();
            // resample the frame labels onto the perturbed time axis
            let t_new = feats.frames;
            let t_old = base_labels.len();
            let lab: Vec<usize> = (0..t_new)
                .map(|t| base_labels[(t * t_old / t_new.max(1)).min(t_old - 1)])
                .collect();
            stats
                .entry(e.speaker_id.clone())
                .or_insert_with(|| SpeakerStats::new(&e.speaker_id, feats.dims))
                .accumulate(&feats)
                .map_err(|err| CliError::Stage { stage, msg: err.to_string() })?;
            raw.push((utt_id, feats, lab, e.speaker_id.clone()));
        }
    }
    let embeddings: BTreeMap<String, Vec<f32>> = stats
        .iter()
        .map(|(spk, st)| {
            speaker_embedding(st)
                .map(|e| (spk.clone(), e))
                .map_err(|err| CliError::Stage { stage, msg: err.to_string() })
        })
        .collect::<Result<_>>()?;
    let mut utts = Vec::new();
    let mut feats_out = Vec::new();
    for (utt_id, feats, lab, speaker) in raw {
        let st = &stats[&speaker];
        let normed = apply_cmvn(&feats, st, cfg.normalize_variance).map_err(|err| {
            CliError::Stage { stage, msg: err.to_string() }
        })?;
        let emb = &embeddings[&speaker];
        let dims = normed.dims + EMBEDDING_DIM;
        let mut data = Vec::with_capacity(normed.frames * dims);
        for t in 0..normed.frames {
            data.extend_from_slice(normed.row(t));
            data.extend_from_slice(emb);
        }
        utts.push(Utterance {
            utt_id,
            frames: Tensor::from_vec(&[normed.frames, dims], data).map_err(|err| {
                CliError::Stage { stage, msg: err.to_string() }
            })?,
            labels: lab,
        });
        feats_out.push(normed);
    }
    let refs = manifest
        .entries
        .iter()
        .map(|e| (e.utterance_id.clone(), normalize_text(&e.transcript)))
        .collect();
    Ok(PreparedSplit {
        utts,
        refs,
        feats: feats_out,
    })
}

/// Exports per-split feature archives plus the speaker-embedding table.
pub fn cmd_features(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let dir = cfg.output_dir.join("features");
    std::fs::create_dir_all(&dir)?;
    for split in SPLITS {
        let prepared = prepare_split(cfg, split, *split == "train" && cfg.train.speed_perturb)?;
        let ark = dir.join(format!("{split}.ark"));
        let mut writer = ArchiveWriter::create(&ark).map_err(|e| CliError::Stage {
            stage: "features",
            msg: e.to_string(),
        })?;
        for f in &prepared.feats {
            writer.append(f).map_err(|e| CliError::Stage {
                stage: "features",
                msg: e.to_string(),
            })?;
        }
        writer.finish().map_err(|e| CliError::Stage {
            stage: "features",
            msg: e.to_string(),
        })?;
        files.push(rel(cfg, &ark));
        files.push(rel(cfg, &descant_features::archive::index_path(&ark)));
    }
    write_file_manifest(cfg, "features", &files)?;
    Ok(files)
}

// -------------------------------------------------------------- train-am

pub fn model_config(cfg: &RunConfig, num_states: usize, heads: usize) -> ModelConfig {
    let h = (heads > 0).then_some(heads);
    if cfg.dims == "full" {
        ModelConfig::full(num_states, h)
    } else {
        ModelConfig::desk(num_states, h)
    }
}

fn lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    load_lexicon(&cfg.data_dir.join("lexicon.txt")).map_err(|e| CliError::Stage {
        stage: "lexicon",
        msg: e.to_string(),
    })
}

pub fn cmd_train_am(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let lex = lexicon(cfg)?;
    let num_states = lex.inventory.len();
    let mc = model_config(cfg, num_states, cfg.attention_heads);
    let data = TrainData {
        train: prepare_split(cfg, "train", cfg.train.speed_perturb)?.utts,
        valid: prepare_split(cfg, "dev", false)?.utts,
    };
    let tc = descant_am::TrainConfig {
        seed: sub_seed(cfg.seed, "train-am"),
        ..cfg.train.clone()
    };
    let out_dir = cfg.output_dir.join("am");
    train(&mc, &tc, &data, &out_dir).map_err(|e| CliError::Stage {
        stage: "train-am",
        msg: e.to_string(),
    })?;
    let mut files: Vec<PathBuf> = vec![
        rel(cfg, &out_dir.join("final.bin")),
        rel(cfg, &out_dir.join("loss.csv")),
    ];
    for e in 1..=tc.epochs {
        files.push(rel(cfg, &out_dir.join(format!("epoch_{e:03}.bin"))));
    }
    write_file_manifest(cfg, "train-am", &files)?;
    Ok(files)
}

// -------------------------------------------------------------- train-lm

fn lm_corpus(cfg: &RunConfig) -> Result<TextCorpus> {
    let path = cfg.data_dir.join("lm_corpus.txt");
    let text = std::fs::read_to_string(&path)
        .map_err(missing(format!("LM corpus {}", path.display())))?;
    TextCorpus::from_sentences(
        text.lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect(),
    )
    .map_err(|e| CliError::Stage {
        stage: "train-lm",
        msg: e.to_string(),
    })
}

pub fn cmd_train_lm(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let corpus = lm_corpus(cfg)?;
    let dir = cfg.output_dir.join("lm");
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for (name, order) in [("3g", 3usize), ("4g", 4usize)] {
        let model = NGramModel::train(&corpus, order, Smoothing::KneserNey { discount: KN_DISCOUNT })
            .map_err(|e| CliError::Stage { stage: "train-lm", msg: e.to_string() })?;
        let path = dir.join(format!("{name}.arpa"));
        save_arpa(&model, &path)
            .map_err(|e| CliError::Stage { stage: "train-lm", msg: e.to_string() })?;
        files.push(rel(cfg, &path));
        if cfg.lm.unk {
            let unk = model
                .attach_unk()
                .map_err(|e| CliError::Stage { stage: "train-lm", msg: e.to_string() })?;
            let path = dir.join(format!("{name}_unk.arpa"));
            save_arpa(&unk, &path)
                .map_err(|e| CliError::Stage { stage: "train-lm", msg: e.to_string() })?;
            files.push(rel(cfg, &path));
        }
    }
    write_file_manifest(cfg, "train-lm", &files)?;
    Ok(files)
}

fn load_lm(cfg: &RunConfig, row: &str) -> Result<NGramModel> {
    let name = match row {
        "3G" => "3g",
        "3G_unk" => "3g_unk",
        "4G" => "4g",
        "4G_unk" => "4g_unk",
        other => {
            return Err(CliError::BadConfig(format!("unknown LM row {other}")));
        }
    };
    let path = cfg.output_dir.join("lm").join(format!("{name}.arpa"));
    if !path.exists() {
        return Err(CliError::MissingInput {
            what: format!("language model {} (run train-lm first)", path.display()),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
    }
    load_arpa(&path).map_err(|e| CliError::Stage {
        stage: "decode",
        msg: e.to_string(),
    })
}

fn rnn_lm(cfg: &RunConfig) -> Result<RecurrentLM> {
    let corpus = lm_corpus(cfg)?;
    train_rnnlm(
        &corpus,
        None,
        &RnnlmConfig {
            hidden_dim: cfg.lm.rnnlm_hidden,
            epochs: cfg.lm.rnnlm_epochs,
            seed: sub_seed(cfg.seed, "rnnlm"),
            ..Default::default()
        },
    )
    .map_err(|e| CliError::Stage {
        stage: "rescore",
        msg: e.to_string(),
    })
}

// ---------------------------------------------------------------- decode

fn am_model(cfg: &RunConfig) -> Result<AcousticModel<f32>> {
    let path = cfg.output_dir.join("am").join("final.bin");
    if !path.exists() {
        return Err(CliError::MissingInput {
            what: format!("acoustic model {} (run train-am first)", path.display()),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
    }
    AcousticModel::load(&path).map_err(|e| CliError::Stage {
        stage: "decode",
        msg: e.to_string(),
    })
}

fn lattice_dir(cfg: &RunConfig, row: &str, split: &str) -> PathBuf {
    cfg.output_dir.join("lattices").join(row).join(split)
}

fn hyp_path(cfg: &RunConfig, split: &str, row: &str, rnn: bool) -> PathBuf {
    let suffix = if rnn { ".rnnlm" } else { "" };
    cfg.output_dir
        .join("hyp")
        .join(format!("{split}.{row}{suffix}.hyp"))
}

fn write_hyps(path: &Path, hyps: &BTreeMap<String, Vec<String>>) -> Result<()> {
    let mut text = String::new();
    for (utt, words) in hyps {
        text.push_str(&format!("{utt}\t{}\n", words.join(" ")));
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_hyps(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(missing(format!("hypothesis file {}", path.display())))?;
    let mut out = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (utt, words) = line.split_once('\t').unwrap_or((line, ""));
        out.insert(
            utt.to_string(),
            words.split_whitespace().map(str::to_string).collect(),
        );
    }
    Ok(out)
}

/// First pass: decode `split` with the 3-gram (and, when enabled, the
/// `<unk>`-augmented 3-gram), writing lattices and hypothesis files.
pub fn cmd_decode(cfg: &RunConfig, split: &str) -> Result<Vec<PathBuf>> {
    let lex = lexicon(cfg)?;
    let mut model = am_model(cfg)?;
    let prepared = prepare_split(cfg, split, false)?;
    let mut files = Vec::new();
    let rows: &[&str] = if cfg.lm.unk { &["3G", "3G_unk"] } else { &["3G"] };
    for row in rows {
        let lm = load_lm(cfg, row)?;
        let unk = if row.ends_with("_unk") {
            Some(lex.make_unk_model().map_err(|e| CliError::Stage {
                stage: "decode",
                msg: e.to_string(),
            })?)
        } else {
            None
        };
        let graph = build_graph(&lex, &lm, unk).map_err(|e| CliError::Stage {
            stage: "decode",
            msg: e.to_string(),
        })?;
        let lat_dir = lattice_dir(cfg, row, split);
        std::fs::create_dir_all(&lat_dir)?;
        let mut hyps = BTreeMap::new();
        for utt in &prepared.utts {
            let post = model.forward_posteriors(&utt.frames).map_err(|e| {
                CliError::Stage { stage: "decode", msg: e.to_string() }
            })?;
            let post = LogPosteriors {
                frames: post.frames,
                num_states: post.num_states,
                data: post.log_probs,
            };
            let (hyp, lattice) =
                decode(&post, &graph, &lm, &cfg.decode).map_err(|e| CliError::Stage {
                    stage: "decode",
                    msg: format!("{}: {e}", utt.utt_id),
                })?;
            let lat_path = lat_dir.join(format!("{}.lat", utt.utt_id));
            write_atomic(&lat_path, lattice.serialize().as_bytes())?;
            files.push(rel(cfg, &lat_path));
            hyps.insert(utt.utt_id.clone(), hyp.words);
        }
        let hp = hyp_path(cfg, split, row, false);
        write_hyps(&hp, &hyps)?;
        files.push(rel(cfg, &hp));
    }
    write_file_manifest(cfg, "decode", &files)?;
    Ok(files)
}

fn read_lattices(cfg: &RunConfig, row: &str, split: &str) -> Result<Vec<(String, Lattice)>> {
    let dir = lattice_dir(cfg, row, split);
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(missing(format!(
            "lattice directory {} (run decode first)",
            dir.display()
        )))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "lat"))
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let lat = Lattice::parse(&text).map_err(|e| CliError::Stage {
            stage: "rescore",
            msg: format!("{}: {e}", path.display()),
        })?;
        let utt = path.file_stem().unwrap().to_string_lossy().to_string();
        out.push((utt, lat));
    }
    Ok(out)
}

/// Second pass: replace 3-gram lattice scores with the 4-gram models and,
/// when enabled, rescore every row's lattices with the recurrent LM.
pub fn cmd_rescore(cfg: &RunConfig, split: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let first: &[(&str, &str)] = if cfg.lm.unk {
        &[("3G", "4G"), ("3G_unk", "4G_unk")]
    } else {
        &[("3G", "4G")]
    };
    // n-gram rescoring: 3G lattices -> 4G lattices + hypotheses
    for (src, dst) in first {
        let lm = load_lm(cfg, dst)?;
        let lat_dir = lattice_dir(cfg, dst, split);
        std::fs::create_dir_all(&lat_dir)?;
        let mut hyps = BTreeMap::new();
        for (utt, lat) in read_lattices(cfg, src, split)? {
            let out = rescore_ngram(&lat, &lm, cfg.decode.word_insertion_penalty).map_err(
                |e| CliError::Stage {
                    stage: "rescore",
                    msg: format!("{utt}: {e}"),
                },
            )?;
            let best = out.best_path().map_err(|e| CliError::Stage {
                stage: "rescore",
                msg: format!("{utt}: {e}"),
            })?;
            let lat_path = lat_dir.join(format!("{utt}.lat"));
            write_atomic(&lat_path, out.serialize().as_bytes())?;
            files.push(rel(cfg, &lat_path));
            hyps.insert(utt, best.words);
        }
        let hp = hyp_path(cfg, split, dst, false);
        write_hyps(&hp, &hyps)?;
        files.push(rel(cfg, &hp));
    }
    // recurrent rescoring on every row's lattices
    if cfg.lm.rnnlm {
        let rnn = rnn_lm(cfg)?;
        let rows: Vec<&str> = LM_ROWS
            .iter()
            .copied()
            .filter(|r| cfg.lm.unk || !r.ends_with("_unk"))
            .collect();
        for row in rows {
            let mut hyps = BTreeMap::new();
            for (utt, lat) in read_lattices(cfg, row, split)? {
                let out = rescore_rnnlm(
                    &lat,
                    &rnn,
                    cfg.lm.rnnlm_weight,
                    cfg.lm.merge_words,
                    cfg.lm.pruning_beam,
                )
                .map_err(|e| CliError::Stage {
                    stage: "rescore",
                    msg: format!("{utt}: {e}"),
                })?;
                let best = out.best_path().map_err(|e| CliError::Stage {
                    stage: "rescore",
                    msg: format!("{utt}: {e}"),
                })?;
                hyps.insert(utt, best.words);
            }
            let hp = hyp_path(cfg, split, row, true);
            write_hyps(&hp, &hyps)?;
            files.push(rel(cfg, &hp));
        }
    }
    write_file_manifest(cfg, "rescore", &files)?;
    Ok(files)
}

// ----------------------------------------------------------------- score

/// Scores one hypothesis file against a split's reference transcripts;
/// returns the corpus WER percentage and writes a per-utterance CSV.
pub fn score_hyp_file(cfg: &RunConfig, split: &str, hyp: &Path, tag: &str) -> Result<f64> {
    let manifest = Manifest::load(&cfg.data_dir.join(format!("{split}.manifest"))).map_err(
        |e| CliError::Stage {
            stage: "score",
            msg: e.to_string(),
        },
    )?;
    let refs: Vec<(String, Vec<String>)> = manifest
        .entries
        .iter()
        .map(|e| (e.utterance_id.clone(), normalize_text(&e.transcript)))
        .collect();
    let hyps = read_hyps(hyp)?;
    let report = score_dataset(&refs, &hyps).map_err(|e| CliError::Stage {
        stage: "score",
        msg: e.to_string(),
    })?;
    let mut csv = String::from("utt_id,substitutions,deletions,insertions,reference_words,wer\n");
    for (utt, counts) in &report.per_utterance {
        csv.push_str(&format!(
            "{utt},{},{},{},{},{:.3}\n",
            counts.substitutions,
            counts.deletions,
            counts.insertions,
            counts.reference_words,
            counts.wer_percent()
        ));
    }
    csv.push_str(&format!(
        "TOTAL,{},{},{},{},{:.3}\n",
        report.aggregate.substitutions,
        report.aggregate.deletions,
        report.aggregate.insertions,
        report.aggregate.reference_words,
        report.aggregate.wer_percent()
    ));
    write_atomic(
        &cfg.output_dir.join("score").join(format!("{tag}.csv")),
        csv.as_bytes(),
    )?;
    Ok(report.aggregate.wer_percent())
}

/// Scores all hypothesis files present for a split.
pub fn cmd_score(cfg: &RunConfig, split: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut any = false;
    for row in LM_ROWS {
        for rnn in [false, true] {
            let hp = hyp_path(cfg, split, row, rnn);
            if !hp.exists() {
                continue;
            }
            any = true;
            let tag = format!("{split}.{row}{}", if rnn { ".rnnlm" } else { "" });
            score_hyp_file(cfg, split, &hp, &tag)?;
            files.push(rel(cfg, &cfg.output_dir.join("score").join(format!("{tag}.csv"))));
        }
    }
    if !any {
        return Err(CliError::MissingInput {
            what: format!("no hypothesis files for split {split} (run decode/rescore first)"),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        });
    }
    write_file_manifest(cfg, "score", &files)?;
    Ok(files)
}

// ------------------------------------------------------------- analysis

pub fn cmd_analyze_attention(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut model = am_model(cfg)?;
    let ctx = model
        .config
        .attention
        .clone()
        .ok_or(CliError::Stage {
            stage: "analyze-attention",
            msg: "the trained model has no attention layer".into(),
        })?;
    let prepared = prepare_split(cfg, "dev", false)?;
    let mut weights = Vec::new();
    for utt in &prepared.utts {
        let t = utt.frames.shape()[0];
        let x = utt
            .frames
            .clone()
            .reshaped(&[1, t, utt.frames.shape()[1]])
            .map_err(|e| CliError::Stage { stage: "analyze-attention", msg: e.to_string() })?;
        model
            .forward(&x, descant_nn::Mode::Eval)
            .map_err(|e| CliError::Stage { stage: "analyze-attention", msg: e.to_string() })?;
        weights.push(
            model
                .last_attention_weights()
                .map_err(|e| CliError::Stage { stage: "analyze-attention", msg: e.to_string() })?
                .clone(),
        );
    }
    let refs: Vec<&Tensor<f32>> = weights.iter().collect();
    let mut profile = extract_profile(&refs, &ctx).map_err(|e| CliError::Stage {
        stage: "analyze-attention",
        msg: e.to_string(),
    })?;
    sort_heads(&mut profile);
    let summary = summarize(&profile).map_err(|e| CliError::Stage {
        stage: "analyze-attention",
        msg: e.to_string(),
    })?;
    let dir = cfg.output_dir.join("attention");
    let csv_path = dir.join("profile.csv");
    write_atomic(&csv_path, profile_to_csv(&profile).as_bytes())?;
    let svg_path = dir.join("profile.svg");
    let svg = profile_to_svg(&profile).map_err(|e| CliError::Stage {
        stage: "analyze-attention",
        msg: e.to_string(),
    })?;
    write_atomic(&svg_path, svg.as_bytes())?;
    // plain-text summary: per-bin means, their median, and the peak offset
    let argmax = summary
        .mean_per_bin
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i as i64 - ctx.left as i64)
        .unwrap();
    let mut text = String::new();
    text.push_str(&format!("heads: {}\n", profile.heads.len()));
    text.push_str(&format!("window: -{}..{}\n", ctx.left, ctx.right));
    text.push_str(&format!("median_mean_weight: {}\n", summary.median));
    text.push_str(&format!("argmax_offset: {argmax}\n"));
    let sum_path = dir.join("summary.txt");
    write_atomic(&sum_path, text.as_bytes())?;
    let files = vec![rel(cfg, &csv_path), rel(cfg, &svg_path), rel(cfg, &sum_path)];
    write_file_manifest(cfg, "analyze-attention", &files)?;
    Ok(files)
}

pub fn cmd_params_report(cfg: &RunConfig) -> Result<(String, Vec<PathBuf>)> {
    let num_states = if cfg.data_dir.join("lexicon.txt").exists() {
        lexicon(cfg)?.inventory.len()
    } else {
        cfg.synth.num_phones
    };
    let mc = model_config(cfg, num_states, cfg.attention_heads);
    let report = param_report(&mc).map_err(|e| CliError::Stage {
        stage: "params-report",
        msg: e.to_string(),
    })?;
    let path = cfg.output_dir.join("params.csv");
    write_atomic(&path, report.as_bytes())?;
    let files = vec![rel(cfg, &path)];
    write_file_manifest(cfg, "params-report", &files)?;
    Ok((report, files))
}

// ---------------------------------------------------------------- run-all

/// The full ladder: synthesize data (if missing), train the acoustic and
/// language models, first-pass decode with 3G/3G_unk, rescore with
/// 4G/4G_unk and the recurrent LM, score dev and test, and emit the results
/// table `lm,rescore,dev_wer,test_wer`.
pub fn cmd_run_all(cfg: &RunConfig) -> Result<PathBuf> {
    if !cfg.data_dir.join("train.manifest").exists() {
        cmd_synth(cfg)?;
    }
    cmd_train_lm(cfg)?;
    cmd_train_am(cfg)?;
    for split in ["dev", "test"] {
        cmd_decode(cfg, split)?;
        cmd_rescore(cfg, split)?;
        cmd_score(cfg, split)?;
    }
    // assemble the results table
    let mut csv = String::from("lm,rescore,dev_wer,test_wer\n");
    for row in LM_ROWS {
        if row.ends_with("_unk") && !cfg.lm.unk {
            continue;
        }
        for rnn in [false, true] {
            if rnn && !cfg.lm.rnnlm {
                continue;
            }
            let mut wers = Vec::new();
            for split in ["dev", "test"] {
                let hp = hyp_path(cfg, split, row, rnn);
                let tag = format!("results.{split}.{row}{}", if rnn { ".rnnlm" } else { "" });
                wers.push(score_hyp_file(cfg, split, &hp, &tag)?);
            }
            csv.push_str(&format!(
                "{row},{},{:.3},{:.3}\n",
                if rnn { "rnnlm" } else { "none" },
                wers[0],
                wers[1]
            ));
        }
    }
    let path = cfg.output_dir.join("results.csv");
    write_atomic(&path, csv.as_bytes())?;
    let files = vec![rel(cfg, &path)];
    write_file_manifest(cfg, "run-all", &files)?;
    Ok(path)
}
