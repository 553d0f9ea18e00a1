use descant_features::{load_wav, mel_spectrogram, FeatureConfig, Manifest};
use descant_lm::lexicon::parse_lexicon;
use descant_synth::{generate, make_lexicon, SynthSpec, SPLITS};
use std::collections::BTreeSet;
use std::path::Path;

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        train_utterances: 6,
        dev_utterances: 3,
        test_utterances: 3,
        lm_sentences: 20,
        seed,
        ..Default::default()
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn generation_is_byte_identical_across_reruns() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    generate(&small_spec(7), d1.path()).unwrap();
    generate(&small_spec(7), d2.path()).unwrap();
    let t1 = tree_bytes(d1.path());
    let t2 = tree_bytes(d2.path());
    assert!(!t1.is_empty());
    assert_eq!(t1, t2);
    // a different seed must change the audio
    let d3 = tempfile::tempdir().unwrap();
    generate(&small_spec(8), d3.path()).unwrap();
    assert_ne!(t1, tree_bytes(d3.path()));
}

#[test]
fn label_count_equals_mel_frame_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(&small_spec(3), dir.path()).unwrap();
    let cfg = FeatureConfig::default();
    for split in SPLITS {
        let manifest = Manifest::load(&out.manifests[*split]).unwrap();
        let labels = std::fs::read_to_string(&out.label_files[*split]).unwrap();
        let labels: std::collections::BTreeMap<&str, usize> = labels
            .lines()
            .map(|l| {
                let mut it = l.split_whitespace();
                (it.next().unwrap(), it.count())
            })
            .collect();
        assert_eq!(labels.len(), manifest.entries.len());
        for e in &manifest.entries {
            let wav = load_wav(&dir.path().join(&e.wav_path)).unwrap();
            let feats = mel_spectrogram(&wav, &cfg).unwrap();
            assert_eq!(
                feats.frames,
                labels[e.utterance_id.as_str()],
                "utterance {}",
                e.utterance_id
            );
            assert_eq!(feats.dims, 40);
        }
    }
}

/// The emitted lexicon parses, and collapsing consecutive frame labels
/// reproduces exactly the phone string of the transcript.
#[test]
fn labels_round_trip_through_the_lexicon() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(11);
    let out = generate(&spec, dir.path()).unwrap();
    let lex = parse_lexicon(&std::fs::read_to_string(&out.lexicon_path).unwrap(), true).unwrap();
    let phones = spec.phones();
    // lexicon inventory is exactly the spec's phone set
    let inv: Vec<&String> = lex.inventory.iter().collect();
    let mut used: BTreeSet<&String> = BTreeSet::new();
    for prons in lex.entries.values() {
        for pron in prons {
            used.extend(pron.iter());
        }
    }
    assert_eq!(inv.len(), used.len());
    for split in SPLITS {
        let manifest = Manifest::load(&out.manifests[*split]).unwrap();
        let labels_text = std::fs::read_to_string(&out.label_files[*split]).unwrap();
        let labels: std::collections::BTreeMap<&str, Vec<usize>> = labels_text
            .lines()
            .map(|l| {
                let mut it = l.split_whitespace();
                let id = it.next().unwrap();
                (id, it.map(|x| x.parse().unwrap()).collect())
            })
            .collect();
        for e in &manifest.entries {
            let words: Vec<String> = e
                .transcript
                .split_whitespace()
                .map(str::to_string)
                .collect();
            let trans = lex.transcript_to_phones(&words);
            assert!(trans.oov_words.is_empty());
            let expect: Vec<&str> = trans
                .pronunciations
                .iter()
                .flat_map(|p| p.iter().map(|s| s.as_str()))
                .collect();
            // collapse runs of identical frame labels into a phone string
            let seq = &labels[e.utterance_id.as_str()];
            let mut got = Vec::new();
            for (i, &l) in seq.iter().enumerate() {
                if i == 0 || seq[i - 1] != l {
                    got.push(phones[l].as_str());
                }
            }
            // identical neighbouring phones merge when collapsing, so verify
            // by re-expanding instead: every expected phone appears in order
            let mut gi = 0;
            for &p in &expect {
                if gi < got.len() && got[gi] == p {
                    gi += 1;
                } else if gi > 0 && got[gi - 1] == p {
                    // merged with the previous identical phone
                } else {
                    panic!(
                        "utterance {}: phones {:?} do not match labels {:?}",
                        e.utterance_id, expect, got
                    );
                }
            }
            assert_eq!(gi, got.len(), "trailing unmatched labels");
        }
    }
}

#[test]
fn splits_are_disjoint_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(5);
    let out = generate(&spec, dir.path()).unwrap();
    let mut ids = BTreeSet::new();
    let mut transcripts = BTreeSet::new();
    let sizes = [
        spec.train_utterances,
        spec.dev_utterances,
        spec.test_utterances,
    ];
    for (split, want) in SPLITS.iter().zip(sizes) {
        let manifest = Manifest::load(&out.manifests[*split]).unwrap();
        assert_eq!(manifest.entries.len(), want);
        for e in &manifest.entries {
            assert!(ids.insert(e.utterance_id.clone()), "duplicate id");
            assert!(
                transcripts.insert(e.transcript.clone()),
                "transcript shared across splits: {}",
                e.transcript
            );
        }
    }
}

#[test]
fn lexicon_has_requested_shape() {
    let spec = SynthSpec::default();
    let lex = make_lexicon(&spec).unwrap();
    assert_eq!(lex.len(), spec.num_words);
    let names: BTreeSet<&String> = lex.iter().map(|(w, _)| w).collect();
    assert_eq!(names.len(), spec.num_words);
    for (word, pron) in &lex {
        assert!(pron.len() >= spec.min_phones_per_word);
        assert!(pron.len() <= spec.max_phones_per_word);
        assert_eq!(word, &pron.concat());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = SynthSpec::default();
    spec.num_phones = 99;
    assert!(spec.validate().is_err());
    let mut spec = SynthSpec::default();
    spec.num_words = 300;
    spec.num_phones = 2;
    spec.max_phones_per_word = 3;
    assert!(spec.validate().is_err());
    let mut spec = SynthSpec::default();
    spec.min_frames_per_phone = 0;
    assert!(spec.validate().is_err());
}

#[test]
fn audio_stays_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(&small_spec(13), dir.path()).unwrap();
    let manifest = Manifest::load(&out.manifests["train"]).unwrap();
    for e in &manifest.entries {
        let wav = load_wav(&dir.path().join(&e.wav_path)).unwrap();
        assert_eq!(wav.sample_rate, descant_synth::SAMPLE_RATE);
        for &s in &wav.samples {
            assert!(s.abs() <= 1.0, "sample {s} out of range");
        }
    }
}
