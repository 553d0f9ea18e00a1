use crate::config::ModelConfig;
use crate::{AmError, Result};
use descant_nn::{AttentionContext, Scalar, Tensor};

/// Average attention weight per context offset for one head; `bins` has
/// length left + right + 1 and sums to 1 over full-context frames.
#[derive(Clone, Debug)]
pub struct HeadProfile {
    /// Head index in the model's own ordering.
    pub head: usize,
    pub bins: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AttentionProfile {
    pub left: usize,
    pub right: usize,
    pub heads: Vec<HeadProfile>,
}

/// Per-bin mean over heads plus the median of those bin means.
#[derive(Clone, Debug)]
pub struct AttentionSummary {
    pub mean_per_bin: Vec<f64>,
    pub median: f64,
}

/// Averages attention weights over every frame with a complete context
/// window (at least `left` frames before it and `right` after). Each entry
/// of `batches` is a weight tensor [B, H, T, left+right+1] as produced by
/// the attention layer; utterances shorter than the window contribute
/// nothing. Errors if no frame has full context.
pub fn extract_profile<F: Scalar>(
    batches: &[&Tensor<F>],
    ctx: &AttentionContext,
) -> Result<AttentionProfile> {
    let win = ctx.window();
    let heads = ctx.num_heads;
    let mut sums = vec![vec![0.0f64; win]; heads];
    let mut count = 0usize;
    for w in batches {
        let s = w.shape();
        if s.len() != 4 || s[1] != heads || s[3] != win {
            return Err(AmError::InvalidArg(format!(
                "expected weights [B,{heads},T,{win}], got {:?}",
                s
            )));
        }
        let (batch, time) = (s[0], s[2]);
        if time < ctx.left + ctx.right + 1 {
            continue;
        }
        for b in 0..batch {
            for t in ctx.left..time - ctx.right {
                for (h, sum) in sums.iter_mut().enumerate() {
                    let base = ((b * heads + h) * time + t) * win;
                    for (i, sv) in sum.iter_mut().enumerate() {
                        *sv += w.data()[base + i].f64();
                    }
                }
            }
            count += time - ctx.left - ctx.right;
        }
    }
    if count == 0 {
        return Err(AmError::NoFullContext);
    }
    let heads = sums
        .into_iter()
        .enumerate()
        .map(|(head, sum)| HeadProfile {
            head,
            bins: sum.into_iter().map(|v| v / count as f64).collect(),
        })
        .collect();
    Ok(AttentionProfile {
        left: ctx.left,
        right: ctx.right,
        heads,
    })
}

/// Orders heads by the weight they put on the leftmost (most distant past)
/// bin, ascending; equal weights keep their original relative order.
pub fn sort_heads(profile: &mut AttentionProfile) {
    profile
        .heads
        .sort_by(|a, b| a.bins[0].partial_cmp(&b.bins[0]).unwrap());
}

/// Mean weight per bin across heads, and the median of those bin means.
pub fn summarize(profile: &AttentionProfile) -> Result<AttentionSummary> {
    if profile.heads.is_empty() {
        return Err(AmError::EmptyInput("profile has no heads".into()));
    }
    let win = profile.left + profile.right + 1;
    let mut mean = vec![0.0f64; win];
    for h in &profile.heads {
        for (m, &v) in mean.iter_mut().zip(&h.bins) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= profile.heads.len() as f64;
    }
    let mut sorted = mean.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(AttentionSummary {
        mean_per_bin: mean,
        median,
    })
}

/// Per-layer and total parameter counts as a small text table.
pub fn param_report(config: &ModelConfig) -> Result<String> {
    config.validate()?;
    let mut out = String::from("layer,params\n");
    let din = config.feat_dim + config.embed_dim;
    out.push_str(&format!(
        "input_affine,{}\n",
        din * config.conv_height + config.conv_height
    ));
    let mut cin = 1usize;
    for (i, &cout) in config.conv_channels.iter().enumerate() {
        out.push_str(&format!("conv{},{}\n", i + 1, 9 * cin * cout + cout));
        cin = cout;
    }
    let k = config.tdnnf_offsets.len();
    let mut tin = config.tdnnf_input_dim()?;
    for i in 0..config.tdnnf_layers {
        let n = config.tdnnf_bottleneck * tin * k
            + config.tdnnf_bottleneck * config.tdnnf_hidden
            + config.tdnnf_hidden;
        out.push_str(&format!("tdnnf{},{}\n", i + 1, n));
        tin = config.tdnnf_hidden;
    }
    let mut out_in = config.tdnnf_hidden;
    if let Some(ctx) = &config.attention {
        let n = ctx.num_heads * config.tdnnf_hidden * (2 * ctx.key_dim + ctx.value_dim);
        out.push_str(&format!("attention,{n}\n"));
        out_in = ctx.num_heads * ctx.value_dim;
    }
    out.push_str(&format!(
        "output_affine,{}\n",
        out_in * config.num_states + config.num_states
    ));
    out.push_str(&format!("total,{}\n", config.param_count()?));
    Ok(out)
}

/// CSV with one row per head and one column per context offset -L..R.
pub fn profile_to_csv(profile: &AttentionProfile) -> String {
    let mut out = String::from("head");
    for off in -(profile.left as i64)..=(profile.right as i64) {
        out.push_str(&format!(",{off}"));
    }
    out.push('\n');
    for h in &profile.heads {
        out.push_str(&h.head.to_string());
        for v in &h.bins {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Two-panel SVG: a heatmap of the sorted per-head profiles and a line plot
/// of the head-averaged profile with a dashed median reference line.
pub fn profile_to_svg(profile: &AttentionProfile) -> Result<String> {
    let summary = summarize(profile)?;
    let win = profile.left + profile.right + 1;
    let heads = profile.heads.len();
    let cell = 14.0_f64;
    let left_pad = 50.0;
    let top_pad = 30.0;
    let heat_w = win as f64 * cell;
    let heat_h = heads as f64 * cell;
    let plot_h = 140.0;
    let gap = 50.0;
    let width = left_pad + heat_w + 20.0;
    let height = top_pad + heat_h + gap + plot_h + 40.0;
    let max_w = profile
        .heads
        .iter()
        .flat_map(|h| h.bins.iter().cloned())
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{left_pad}\" y=\"18\" font-size=\"12\">attention weight by context offset (heads sorted)</text>\n"
    ));
    for (row, h) in profile.heads.iter().enumerate() {
        for (col, &v) in h.bins.iter().enumerate() {
            let shade = (255.0 * (1.0 - v / max_w)).round() as u8;
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\"/>\n",
                left_pad + col as f64 * cell,
                top_pad + row as f64 * cell,
            ));
        }
        svg.push_str(&format!(
            "<text x=\"8\" y=\"{:.1}\" font-size=\"10\">h{}</text>\n",
            top_pad + row as f64 * cell + cell - 3.0,
            h.head
        ));
    }
    // offset axis labels under the heatmap
    for (col, off) in (-(profile.left as i64)..=(profile.right as i64)).enumerate() {
        if off % 5 == 0 {
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\">{off}</text>\n",
                left_pad + col as f64 * cell + 2.0,
                top_pad + heat_h + 12.0
            ));
        }
    }
    // line plot of the head-averaged profile
    let plot_top = top_pad + heat_h + gap;
    let max_m = summary
        .mean_per_bin
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let y_of = |v: f64| plot_top + plot_h - v / max_m * plot_h;
    let pts: Vec<String> = summary
        .mean_per_bin
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.1},{:.1}", left_pad + i as f64 * cell + cell / 2.0, y_of(v)))
        .collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>\n",
        pts.join(" ")
    ));
    let my = y_of(summary.median);
    svg.push_str(&format!(
        "<line x1=\"{left_pad}\" y1=\"{my:.1}\" x2=\"{:.1}\" y2=\"{my:.1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
        left_pad + heat_w
    ));
    svg.push_str(&format!(
        "<text x=\"{left_pad}\" y=\"{:.1}\" font-size=\"11\">mean weight per offset; dashed: median</text>\n",
        plot_top + plot_h + 24.0
    ));
    svg.push_str("</svg>\n");
    Ok(svg)
}
