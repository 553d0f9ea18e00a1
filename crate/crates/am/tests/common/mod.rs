use descant_am::ModelConfig;
use descant_nn::AttentionContext;

/// A deliberately tiny architecture so whole-model gradient checks and toy
/// training runs finish in seconds.
pub fn tiny_config(attention: bool, num_states: usize) -> ModelConfig {
    ModelConfig {
        feat_dim: 3,
        embed_dim: 3,
        conv_height: 8,
        conv_channels: vec![2, 3],
        pool_after: vec![2],
        tdnnf_layers: 2,
        tdnnf_hidden: 6,
        tdnnf_bottleneck: 3,
        tdnnf_offsets: vec![-1, 0, 1],
        attention: attention.then(|| AttentionContext {
            left: 1,
            right: 1,
            num_heads: 2,
            key_dim: 2,
            value_dim: 2,
        }),
        num_states,
    }
}
