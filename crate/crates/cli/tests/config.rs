use descant_cli::{sub_seed, CliError, RunConfig};
use std::path::Path;

#[test]
fn defaults_validate() {
    RunConfig::default().validate().unwrap();
}

#[test]
fn full_config_parses() {
    let text = "\
# top level
seed = 9
jobs = 2
data_dir = corpus
output_dir = /abs/out

[synth]
num_phones = 10
train_utterances = 50

[features]
normalize_variance = true

[model]
attention_heads = 4
dims = desk

[train]
epochs = 3
minibatch = 8
lr_start = 0.01
lr_end = 0.001
speed_perturb = true

[lm]
unk = false
rnnlm_weight = 0.25

[decode]
beam = 12.5
max_active_tokens = 500
";
    let cfg = RunConfig::parse(text, Path::new("/base")).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.jobs, 2);
    assert_eq!(cfg.data_dir, Path::new("/base/corpus"));
    assert_eq!(cfg.output_dir, Path::new("/abs/out"));
    assert_eq!(cfg.synth.num_phones, 10);
    assert_eq!(cfg.synth.train_utterances, 50);
    assert!(cfg.normalize_variance);
    assert_eq!(cfg.attention_heads, 4);
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(cfg.train.minibatch, 8);
    assert!(cfg.train.speed_perturb);
    assert!(!cfg.lm.unk);
    assert_eq!(cfg.lm.rnnlm_weight, 0.25);
    assert_eq!(cfg.decode.beam, 12.5);
    assert_eq!(cfg.decode.max_active_tokens, 500);
}

#[test]
fn unknown_key_names_the_line() {
    let text = "seed = 1\n\n[train]\nepoochs = 3\n";
    match RunConfig::parse(text, Path::new(".")) {
        Err(CliError::BadConfigLine { line, msg }) => {
            assert_eq!(line, 4);
            assert!(msg.contains("epoochs"), "{msg}");
            assert!(msg.contains("[train]"), "{msg}");
        }
        other => panic!("expected BadConfigLine, got {other:?}"),
    }
}

#[test]
fn unknown_section_is_rejected() {
    let text = "[trian]\nepochs = 3\n";
    match RunConfig::parse(text, Path::new(".")) {
        Err(CliError::BadConfigLine { line, msg }) => {
            assert_eq!(line, 1);
            assert!(msg.contains("trian"), "{msg}");
        }
        other => panic!("expected BadConfigLine, got {other:?}"),
    }
}

#[test]
fn bad_values_are_rejected_with_line_numbers() {
    let text = "seed = banana\n";
    match RunConfig::parse(text, Path::new(".")) {
        Err(CliError::BadConfigLine { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected BadConfigLine, got {other:?}"),
    }
    // key=value required
    assert!(matches!(
        RunConfig::parse("[train]\nepochs\n", Path::new(".")),
        Err(CliError::BadConfigLine { line: 2, .. })
    ));
    // semantic validation still applies
    assert!(matches!(
        RunConfig::parse("[model]\ndims = tiny\n", Path::new(".")),
        Err(CliError::BadConfig(_))
    ));
    assert!(matches!(
        RunConfig::parse("[lm]\nrnnlm_weight = 1.5\n", Path::new(".")),
        Err(CliError::BadConfig(_))
    ));
}

#[test]
fn sub_seeds_differ_per_stage_and_follow_the_run_seed() {
    let a = sub_seed(1, "train-am");
    let b = sub_seed(1, "rnnlm");
    assert_ne!(a, b);
    assert_ne!(a, sub_seed(2, "train-am"));
    assert_eq!(a, sub_seed(1, "train-am"));
}

#[test]
fn exit_codes_distinguish_config_and_missing_input() {
    assert_eq!(CliError::BadConfig("x".into()).exit_code(), 2);
    assert_eq!(
        CliError::BadConfigLine {
            line: 1,
            msg: "x".into()
        }
        .exit_code(),
        2
    );
    assert_eq!(
        CliError::MissingInput {
            what: "x".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound)
        }
        .exit_code(),
        3
    );
}
