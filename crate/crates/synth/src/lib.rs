//! Synthetic sung-speech corpus generator. Each phone is a fixed pair of
//! sinusoids, words are short phone strings, and sentences come from a seeded
//! Markov chain, so an acoustic model plus language model can be trained and
//! scored end to end in minutes with known ground truth. All output is a pure
//! function of the spec (byte-identical across reruns).

use descant_features::{num_frames, write_wav, Manifest, ManifestEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Feature(#[from] descant_features::FeatureError),
    #[error("invalid spec: {0}")]
    BadSpec(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Syllable names for the phone inventory; alphabetical, so the decoder's
/// sorted inventory preserves this order.
const SYLLABLES: &[&str] = &[
    "BA", "DE", "GI", "KO", "LU", "MA", "NE", "PI", "RO", "SU", "TA", "VO",
];

/// Hop and window of the downstream mel front end (16 kHz, 25 ms / 15 ms).
pub const SAMPLE_RATE: u32 = 16_000;
const HOP: usize = 240;
const WIN: usize = 400;

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub num_phones: usize,
    pub num_words: usize,
    pub min_phones_per_word: usize,
    pub max_phones_per_word: usize,
    pub min_frames_per_phone: usize,
    pub max_frames_per_phone: usize,
    pub min_words_per_utt: usize,
    pub max_words_per_utt: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    pub speakers: usize,
    /// Text-only sentences for language-model training.
    pub lm_sentences: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_phones: 12,
            num_words: 10,
            min_phones_per_word: 2,
            max_phones_per_word: 4,
            min_frames_per_phone: 8,
            max_frames_per_phone: 20,
            min_words_per_utt: 3,
            max_words_per_utt: 6,
            train_utterances: 200,
            dev_utterances: 30,
            test_utterances: 50,
            speakers: 4,
            lm_sentences: 600,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_phones == 0 || self.num_phones > SYLLABLES.len() {
            return Err(SynthError::BadSpec(format!(
                "num_phones must be 1..={}",
                SYLLABLES.len()
            )));
        }
        if self.num_words == 0 {
            return Err(SynthError::BadSpec("need at least one word".into()));
        }
        if self.min_phones_per_word == 0 || self.min_phones_per_word > self.max_phones_per_word {
            return Err(SynthError::BadSpec("bad phones-per-word range".into()));
        }
        if self.min_frames_per_phone == 0 || self.min_frames_per_phone > self.max_frames_per_phone
        {
            return Err(SynthError::BadSpec("bad frames-per-phone range".into()));
        }
        if self.min_words_per_utt == 0 || self.min_words_per_utt > self.max_words_per_utt {
            return Err(SynthError::BadSpec("bad words-per-utterance range".into()));
        }
        if self.speakers == 0 {
            return Err(SynthError::BadSpec("need at least one speaker".into()));
        }
        // enough distinct phone sequences must exist
        let mut capacity = 0usize;
        for len in self.min_phones_per_word..=self.max_phones_per_word {
            capacity = capacity.saturating_add(self.num_phones.pow(len as u32));
            if capacity >= self.num_words {
                break;
            }
        }
        if capacity < self.num_words {
            return Err(SynthError::BadSpec(
                "not enough distinct pronunciations for the requested words".into(),
            ));
        }
        Ok(())
    }

    pub fn phones(&self) -> Vec<String> {
        SYLLABLES[..self.num_phones]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
}

/// Word list with pronunciations; names are the concatenated syllables, so
/// they are unique exactly when the pronunciations are.
pub fn make_lexicon(spec: &SynthSpec) -> Result<Vec<(String, Vec<String>)>> {
    spec.validate()?;
    let phones = spec.phones();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x6c6578));
    // retry whole word sets until every phone appears in some pronunciation,
    // so frame labels and the lexicon inventory always agree
    for _ in 0..100 {
        let mut seen = BTreeSet::new();
        let mut words = Vec::new();
        while words.len() < spec.num_words {
            let len = rng.gen_range(spec.min_phones_per_word..=spec.max_phones_per_word);
            let pron: Vec<String> = (0..len)
                .map(|_| phones[rng.gen_range(0..phones.len())].clone())
                .collect();
            if !seen.insert(pron.clone()) {
                continue;
            }
            words.push((pron.concat(), pron));
        }
        let used: BTreeSet<&String> = words.iter().flat_map(|(_, p)| p.iter()).collect();
        if used.len() == phones.len() {
            words.sort();
            return Ok(words);
        }
    }
    Err(SynthError::BadSpec(format!(
        "could not cover {} phones with {} words",
        spec.num_phones, spec.num_words
    )))
}

/// Sentence sampler: a seeded first-order Markov chain over the word list.
/// Every word strongly prefers one successor, which gives n-gram language
/// models something to learn.
struct Chain {
    preferred: Vec<usize>,
    num_words: usize,
}

impl Chain {
    fn new(num_words: usize, rng: &mut ChaCha8Rng) -> Self {
        let preferred = (0..num_words)
            .map(|i| {
                let mut nxt = rng.gen_range(0..num_words);
                if nxt == i {
                    nxt = (nxt + 1) % num_words;
                }
                nxt
            })
            .collect();
        Chain {
            preferred,
            num_words,
        }
    }

    fn sentence(&self, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let len = rng.gen_range(spec.min_words_per_utt..=spec.max_words_per_utt);
        let mut out = Vec::with_capacity(len);
        let mut cur = rng.gen_range(0..self.num_words);
        out.push(cur);
        for _ in 1..len {
            cur = if rng.gen_bool(0.7) {
                self.preferred[cur]
            } else {
                rng.gen_range(0..self.num_words)
            };
            out.push(cur);
        }
        out
    }
}

/// Per-speaker voice: overall gain and a spectral tilt that attenuates or
/// boosts high frequencies.
#[derive(Clone, Copy, Debug)]
struct Voice {
    gain: f32,
    tilt: f32,
}

fn voices(spec: &SynthSpec) -> Vec<Voice> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x766f78));
    (0..spec.speakers)
        .map(|_| Voice {
            gain: rng.gen_range(0.45..0.8),
            tilt: rng.gen_range(-0.4..0.4),
        })
        .collect()
}

/// Frequency signature of phone `i`: a low and a high sinusoid, distinct for
/// every phone in the inventory.
fn signature(i: usize) -> (f32, f32) {
    (250.0 + 140.0 * i as f32, 3_000.0 + 190.0 * i as f32)
}

/// Renders one utterance. Returns the waveform and one phone label per mel
/// frame; the sample count is exactly `HOP * frames + (WIN - HOP)` so the
/// mel front end produces the same number of frames as there are labels.
fn render(
    phone_seq: &[usize],
    voice: Voice,
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<f32>, Vec<usize>) {
    let mut labels = Vec::new();
    let mut segs: Vec<(usize, usize)> = Vec::new(); // (phone, frames)
    for &p in phone_seq {
        let f = rng.gen_range(spec.min_frames_per_phone..=spec.max_frames_per_phone);
        segs.push((p, f));
        labels.extend(std::iter::repeat(p).take(f));
    }
    let total_frames = labels.len();
    let total_samples = HOP * total_frames + (WIN - HOP);
    let mut samples = vec![0.0f32; total_samples];
    // per-frame amplitude jitter, constant within each hop block
    let jitter: Vec<f32> = (0..total_frames + 1)
        .map(|_| 1.0 + rng.gen_range(-0.15..0.15))
        .collect();
    let tilt_amp = |freq: f32| (freq / 1000.0).powf(voice.tilt);
    let mut pos = 0usize; // sample position
    for &(p, f) in &segs {
        let (f1, f2) = signature(p);
        let phase1: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
        let phase2: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
        let a1 = 0.6 * tilt_amp(f1);
        let a2 = 0.25 * tilt_amp(f2);
        let norm = 0.85 / (a1 + a2).max(1.0); // keep peaks within range
        let mut n = f * HOP;
        if pos + n + (WIN - HOP) == total_samples {
            n += WIN - HOP; // last phone also fills the analysis tail
        }
        for i in 0..n {
            let t = (pos + i) as f32 / SAMPLE_RATE as f32;
            let amp = voice.gain * jitter[((pos + i) / HOP).min(total_frames)] * norm;
            samples[pos + i] = amp
                * (a1 * (std::f32::consts::TAU * f1 * t + phase1).sin()
                    + a2 * (std::f32::consts::TAU * f2 * t + phase2).sin());
        }
        pos += n;
    }
    (samples, labels)
}

/// Everything `generate` wrote, keyed by split name.
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub manifests: BTreeMap<String, PathBuf>,
    pub label_files: BTreeMap<String, PathBuf>,
    pub lexicon_path: PathBuf,
    pub corpus_path: PathBuf,
    /// All files written, relative to the output directory.
    pub files: Vec<PathBuf>,
}

pub const SPLITS: &[&str] = &["train", "dev", "test"];

/// Generates the corpus under `out_dir`: WAVs, one manifest and one frame
/// label file per split, the lexicon, and a text corpus for language models.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    let lexicon = make_lexicon(spec)?;
    let phones = spec.phones();
    let voices = voices(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chain = Chain::new(lexicon.len(), &mut rng);
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    // lexicon
    let lexicon_path = out_dir.join("lexicon.txt");
    {
        let mut text = String::new();
        for (word, pron) in &lexicon {
            text.push_str(&format!("{word} {}\n", pron.join(" ")));
        }
        write_atomic(&lexicon_path, text.as_bytes())?;
        files.push(PathBuf::from("lexicon.txt"));
    }

    // text-only corpus for language-model training
    let corpus_path = out_dir.join("lm_corpus.txt");
    {
        let mut text = String::new();
        for _ in 0..spec.lm_sentences {
            let s = chain.sentence(spec, &mut rng);
            let words: Vec<&str> = s.iter().map(|&i| lexicon[i].0.as_str()).collect();
            text.push_str(&words.join(" "));
            text.push('\n');
        }
        write_atomic(&corpus_path, text.as_bytes())?;
        files.push(PathBuf::from("lm_corpus.txt"));
    }

    // audio splits; transcripts already used by an earlier split are
    // resampled so the splits stay disjoint
    let mut seen_transcripts: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut manifests = BTreeMap::new();
    let mut label_files = BTreeMap::new();
    let counts = [
        ("train", spec.train_utterances),
        ("dev", spec.dev_utterances),
        ("test", spec.test_utterances),
    ];
    std::fs::create_dir_all(out_dir.join("wav"))?;
    for (split, count) in counts {
        let wav_dir = out_dir.join("wav").join(split);
        std::fs::create_dir_all(&wav_dir)?;
        let mut manifest = Manifest::default();
        let mut labels_text = String::new();
        for u in 0..count {
            let mut sentence = chain.sentence(spec, &mut rng);
            for _ in 0..50 {
                if seen_transcripts.insert(sentence.clone()) {
                    break;
                }
                sentence = chain.sentence(spec, &mut rng);
            }
            let speaker = u % spec.speakers;
            let utt_id = format!("{split}_{u:04}");
            let phone_seq: Vec<usize> = sentence
                .iter()
                .flat_map(|&w| {
                    lexicon[w].1.iter().map(|p| {
                        phones.iter().position(|q| q == p).unwrap()
                    })
                })
                .collect();
            let (samples, labels) = render(&phone_seq, voices[speaker], spec, &mut rng);
            debug_assert_eq!(
                num_frames(samples.len(), WIN, HOP),
                Some(labels.len())
            );
            let rel_wav = PathBuf::from("wav").join(split).join(format!("{utt_id}.wav"));
            write_wav(&out_dir.join(&rel_wav), &samples, SAMPLE_RATE)?;
            files.push(rel_wav.clone());
            manifest.entries.push(ManifestEntry {
                utterance_id: utt_id.clone(),
                wav_path: rel_wav,
                speaker_id: format!("spk{speaker:02}"),
                transcript: sentence
                    .iter()
                    .map(|&i| lexicon[i].0.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            });
            labels_text.push_str(&format!(
                "{utt_id} {}\n",
                labels
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
        }
        let mpath = out_dir.join(format!("{split}.manifest"));
        manifest.save(&mpath)?;
        files.push(PathBuf::from(format!("{split}.manifest")));
        let lpath = out_dir.join(format!("{split}.labels"));
        write_atomic(&lpath, labels_text.as_bytes())?;
        files.push(PathBuf::from(format!("{split}.labels")));
        manifests.insert(split.to_string(), mpath);
        label_files.insert(split.to_string(), lpath);
    }
    Ok(SynthOutput {
        manifests,
        label_files,
        lexicon_path,
        corpus_path,
        files,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
