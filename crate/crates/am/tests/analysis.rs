mod common;

use common::tiny_config;
use descant_am::{
    extract_profile, param_report, profile_to_csv, profile_to_svg, sort_heads, summarize,
    AcousticModel, AttentionProfile, HeadProfile, ModelConfig,
};
use descant_nn::{AttentionContext, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ctx(left: usize, right: usize, heads: usize) -> AttentionContext {
    AttentionContext {
        left,
        right,
        num_heads: heads,
        key_dim: 2,
        value_dim: 2,
    }
}

/// Hand-built weights: 1 batch item, 2 heads, 4 frames, window 3 (L=R=1).
/// Frames 1 and 2 have full context; frames 0 and 3 must be ignored.
#[test]
fn extract_profile_uses_only_full_context_frames() {
    let c = ctx(1, 1, 2);
    // head 0 rows (frames 0..4): only frames 1,2 matter
    let w = Tensor::<f64>::from_vec(
        &[1, 2, 4, 3],
        vec![
            // head 0
            0.0, 0.9, 0.1, // frame 0 (edge, ignored)
            0.2, 0.5, 0.3, // frame 1
            0.4, 0.5, 0.1, // frame 2
            0.6, 0.4, 0.0, // frame 3 (edge, ignored)
            // head 1
            0.0, 0.1, 0.9, // frame 0
            0.8, 0.1, 0.1, // frame 1
            0.6, 0.3, 0.1, // frame 2
            0.2, 0.8, 0.0, // frame 3
        ],
    )
    .unwrap();
    let profile = extract_profile(&[&w], &c).unwrap();
    // head 0: mean of (0.2,0.5,0.3) and (0.4,0.5,0.1)
    let h0 = &profile.heads[0].bins;
    assert!((h0[0] - 0.3).abs() < 1e-12);
    assert!((h0[1] - 0.5).abs() < 1e-12);
    assert!((h0[2] - 0.2).abs() < 1e-12);
    // head 1: mean of (0.8,0.1,0.1) and (0.6,0.3,0.1)
    let h1 = &profile.heads[1].bins;
    assert!((h1[0] - 0.7).abs() < 1e-12);
    assert!((h1[1] - 0.2).abs() < 1e-12);
    assert!((h1[2] - 0.1).abs() < 1e-12);
    // averaged rows still sum to one
    for h in &profile.heads {
        let s: f64 = h.bins.iter().sum();
        assert!((s - 1.0).abs() < 1e-3);
    }
}

#[test]
fn too_short_utterances_are_an_error() {
    let c = ctx(2, 2, 1);
    // 4 frames < window 5: nothing has full context
    let w = Tensor::<f64>::from_vec(&[1, 1, 4, 5], vec![0.2; 20]).unwrap();
    assert!(matches!(
        extract_profile(&[&w], &c),
        Err(descant_am::AmError::NoFullContext)
    ));
}

#[test]
fn sort_heads_orders_by_leftmost_bin_and_is_stable() {
    let mut profile = AttentionProfile {
        left: 1,
        right: 1,
        heads: vec![
            HeadProfile { head: 0, bins: vec![0.5, 0.3, 0.2] },
            HeadProfile { head: 1, bins: vec![0.1, 0.6, 0.3] },
            HeadProfile { head: 2, bins: vec![0.5, 0.1, 0.4] }, // ties head 0
            HeadProfile { head: 3, bins: vec![0.3, 0.3, 0.4] },
        ],
    };
    sort_heads(&mut profile);
    let order: Vec<usize> = profile.heads.iter().map(|h| h.head).collect();
    assert_eq!(order, vec![1, 3, 0, 2]);
}

/// Hand oracle for the summary: 2 heads over 3 bins.
/// means = ((0.2+0.6)/2, (0.3+0.3)/2, (0.5+0.1)/2) = (0.4, 0.3, 0.3)
/// median of (0.4, 0.3, 0.3) = 0.3
#[test]
fn summarize_matches_hand_computation() {
    let profile = AttentionProfile {
        left: 1,
        right: 1,
        heads: vec![
            HeadProfile { head: 0, bins: vec![0.2, 0.3, 0.5] },
            HeadProfile { head: 1, bins: vec![0.6, 0.3, 0.1] },
        ],
    };
    let s = summarize(&profile).unwrap();
    assert!((s.mean_per_bin[0] - 0.4).abs() < 1e-12);
    assert!((s.mean_per_bin[1] - 0.3).abs() < 1e-12);
    assert!((s.mean_per_bin[2] - 0.3).abs() < 1e-12);
    assert!((s.median - 0.3).abs() < 1e-12);
}

/// Profiles from a real model forward: rows must sum to 1 and the CSV and
/// SVG renderers must agree on the layout.
#[test]
fn profile_from_model_weights() {
    let cfg = tiny_config(true, 5);
    let mut model = AcousticModel::<f32>::new(&cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = Tensor::from_vec(
        &[2, 8, 6],
        (0..96).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
    )
    .unwrap();
    model.forward(&x, Mode::Eval).unwrap();
    let weights = model.last_attention_weights().unwrap();
    let actx = cfg.attention.as_ref().unwrap();
    let mut profile = extract_profile(&[weights], actx).unwrap();
    for h in &profile.heads {
        let s: f64 = h.bins.iter().sum();
        assert!((s - 1.0).abs() < 1e-3, "head {} sums to {s}", h.head);
    }
    sort_heads(&mut profile);
    let csv = profile_to_csv(&profile);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "head,-1,0,1");
    assert_eq!(lines.len(), 1 + actx.num_heads);
    let svg = profile_to_svg(&profile).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
    assert!(svg.contains("stroke-dasharray"));
    // one heatmap cell per head and bin
    assert_eq!(svg.matches("<rect").count(), actx.num_heads * actx.window());
}

#[test]
fn models_without_attention_report_the_absence() {
    let cfg = tiny_config(false, 5);
    let mut model = AcousticModel::<f32>::new(&cfg, 2).unwrap();
    let x = Tensor::from_vec(&[1, 4, 6], vec![0.3; 24]).unwrap();
    model.forward(&x, Mode::Eval).unwrap();
    assert!(matches!(
        model.last_attention_weights(),
        Err(descant_am::AmError::NoAttention)
    ));
}

#[test]
fn param_report_totals_match() {
    for cfg in [
        ModelConfig::full(2000, Some(15)),
        ModelConfig::desk(36, Some(4)),
        ModelConfig::desk(36, None),
    ] {
        let report = param_report(&cfg).unwrap();
        let total_line = report
            .lines()
            .find(|l| l.starts_with("total,"))
            .expect("total row");
        let total: usize = total_line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(total, cfg.param_count().unwrap());
        // the per-layer rows add up to the total
        let sum: usize = report
            .lines()
            .skip(1)
            .filter(|l| !l.starts_with("total,"))
            .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(sum, total);
    }
}
