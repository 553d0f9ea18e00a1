use descant_lm::{train_ngram, train_rnnlm, RnnlmConfig, Smoothing, TextCorpus};
use descant_nn::gradcheck::gradient_check;

fn corpus(lines: &[&str]) -> TextCorpus {
    TextCorpus::from_sentences(
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect(),
    )
    .unwrap()
}

/// Synthetic lyrics fixture with a strong bigram structure the recurrent
/// model can pick up quickly.
fn lyrics_train() -> TextCorpus {
    let mut lines = Vec::new();
    for _ in 0..30 {
        lines.push("THE SUN WILL RISE");
        lines.push("THE MOON WILL SHINE");
        lines.push("THE NIGHT FALLS SLOW");
        lines.push("THE SUN WILL SHINE");
    }
    corpus(&lines)
}

fn lyrics_held_out() -> TextCorpus {
    corpus(&[
        "THE SUN WILL SHINE",
        "THE MOON WILL RISE",
        "THE NIGHT FALLS SLOW",
    ])
}

#[test]
fn bptt_gradient_check_on_unrolled_window() {
    // T=4 window, tiny dims, checked against central differences
    let c = corpus(&["A B C A", "B C A B"]);
    let cfg = RnnlmConfig {
        hidden_dim: 5,
        epochs: 1,
        learning_rate: 0.0,
        bptt_len: 8,
        seed: 42,
        ..Default::default()
    };
    let model = train_rnnlm(&c, None, &cfg).unwrap();
    let targets = model.sentence_targets(&[
        "A".to_string(),
        "B".to_string(),
        "C".to_string(),
    ]); // 4 steps including </s>
    assert_eq!(targets.len(), 4);
    let state0 = vec![0.1, -0.2, 0.05, 0.3, -0.1];
    let x0 = model.params_flat();
    let (_, analytic, _) = model.window_loss_grad(&state0, &targets);
    let f = |p: &[f64]| {
        let mut m = model.clone();
        m.set_params_flat(p);
        m.window_loss_grad(&state0, &targets).0
    };
    let err = gradient_check(f, &x0, &analytic, 1e-5);
    assert!(err < 1e-4, "max rel error {err}");
}

#[test]
fn distribution_sums_to_one_for_random_states() {
    let model = train_rnnlm(&lyrics_train(), None, &RnnlmConfig {
        hidden_dim: 8,
        epochs: 1,
        ..Default::default()
    })
    .unwrap();
    let mut state = model.zero_state();
    for step in 0..20 {
        let p = model.distribution(&state);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "step {step}: {total}");
        assert!(p.iter().all(|&x| x > 0.0));
        let word = &model.vocab()[step % model.vocab().len()];
        state = model.score_step(&state, word).unwrap().1;
    }
}

#[test]
fn score_step_is_deterministic_and_additive() {
    let model = train_rnnlm(&lyrics_train(), None, &RnnlmConfig {
        hidden_dim: 8,
        epochs: 1,
        ..Default::default()
    })
    .unwrap();
    let state = model.zero_state();
    let (lp1, s1) = model.score_step(&state, "SUN").unwrap();
    let (lp2, s2) = model.score_step(&state, "SUN").unwrap();
    assert_eq!(lp1, lp2);
    assert_eq!(s1, s2);

    // sentence log-prob equals the sum of step scores ending with </s>
    let sent: Vec<String> = ["THE", "SUN", "WILL", "RISE"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut state = model.zero_state();
    let mut total = 0.0;
    for word in sent.iter().map(|s| s.as_str()).chain(["</s>"]) {
        let (lp, next) = model.score_step(&state, word).unwrap();
        total += lp;
        state = next;
    }
    assert!((total - model.sentence_logprob(&sent)).abs() < 1e-12);
}

#[test]
fn first_step_distribution_is_shared_across_sentences() {
    let model = train_rnnlm(&lyrics_train(), None, &RnnlmConfig {
        hidden_dim: 8,
        epochs: 1,
        ..Default::default()
    })
    .unwrap();
    // the zero state is the unique sentence-start state
    let (lp_a, _) = model.score_step(&model.zero_state(), "THE").unwrap();
    let p = model.distribution(&model.zero_state());
    let id = model.word_id("THE").unwrap() as usize;
    assert_eq!(lp_a, p[id].ln());
}

#[test]
fn trained_model_beats_unigram_on_held_out_lyrics() {
    let train = lyrics_train();
    let held = lyrics_held_out();
    let cfg = RnnlmConfig {
        hidden_dim: 16,
        epochs: 12,
        learning_rate: 0.1,
        bptt_len: 16,
        seed: 5,
    };
    let model = train_rnnlm(&train, Some(&held), &cfg).unwrap();
    assert_eq!(model.held_out_ppl.len(), cfg.epochs);
    let unigram = train_ngram(&train, 1, Smoothing::KneserNey { discount: 0.75 })
        .unwrap()
        .perplexity(&held)
        .unwrap();
    let rnn = *model.held_out_ppl.last().unwrap();
    assert!(rnn < unigram, "rnn {rnn} vs unigram {unigram}");
}
