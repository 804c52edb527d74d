//! Network construction for the three architectures and the two heads.

use rand_chacha::ChaCha8Rng;

use super::{HeadConfig, HeadKind, SignalCnnConfig, TextCnnConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, BatchNorm, Conv1d, Dense, Layer, Mode, Network};
use crate::tensor::Tensor2;
use crate::textfeat::EmbedConfig;

/// A headless network: the layer stack up to the last hidden layer.
#[derive(Debug)]
pub struct Trunk {
    pub layers: Vec<Layer>,
    pub out_dim: usize,
}

/// Multi-window text CNN: per window size h, a Conv1d(h, stride 1,
/// embed_dim → filters, ReLU) followed by top-4 average pooling; the pooled
/// values concatenate into two fully-connected hidden layers with their
/// dropout rates.
pub fn build_text_cnn(
    cfg: &TextCnnConfig,
    embed: &EmbedConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trunk> {
    if cfg.window_sizes.is_empty() {
        return Err(Error::InvalidConfig("window_sizes must be non-empty".into()));
    }
    for &h in &cfg.window_sizes {
        if h == 0 || h > embed.max_len {
            return Err(Error::InvalidConfig(format!(
                "window size {h} invalid for utterance length {}",
                embed.max_len
            )));
        }
    }
    if cfg.filters_per_size == 0 {
        return Err(Error::InvalidConfig("filters_per_size must be ≥ 1".into()));
    }
    let branches: Vec<Vec<Layer>> = cfg
        .window_sizes
        .iter()
        .map(|&h| {
            vec![
                Layer::Conv1d(Conv1d::glorot(
                    h,
                    1,
                    embed.dim,
                    cfg.filters_per_size,
                    Activation::Relu,
                    rng,
                )),
                Layer::MaxPoolTopK { k: 4 },
            ]
        })
        .collect();
    let pooled = cfg.window_sizes.len() * cfg.filters_per_size;
    let (fc0, fc1) = cfg.fc_dims;
    let layers = vec![
        Layer::Parallel(branches),
        Layer::Dense(Dense::glorot(pooled, fc0, rng)),
        Layer::Relu,
        Layer::Dropout { rate: cfg.dropout.0 },
        Layer::Dense(Dense::glorot(fc0, fc1, rng)),
        Layer::Relu,
        Layer::Dropout { rate: cfg.dropout.1 },
    ];
    Ok(Trunk {
        layers,
        out_dim: fc1,
    })
}

/// Minimum input length a block sequence needs to stay viable, assuming
/// every later pool can clamp to width 1.
fn min_required(blocks: &[Block]) -> usize {
    let mut need = 1usize;
    for b in blocks.iter().rev() {
        need = match *b {
            Block::Conv { width, stride } => (need - 1) * stride + width,
            Block::Pool => need,
        };
    }
    need
}

#[derive(Clone, Copy)]
enum Block {
    Conv { width: usize, stride: usize },
    Pool,
}

/// 17-convolution deep CNN over the time axis with the input channels of
/// the chosen encoding, global average pooling and three hidden layers.
/// Pool widths clamp at build time: each pool takes the largest width no
/// greater than the configured one that keeps the remaining stack viable
/// for the encoding's fixed input length. Convolutions use He-uniform
/// init — through seventeen ReLU layers Glorot scaling decays activations
/// to numerical noise.
pub fn build_signal_cnn(cfg: &SignalCnnConfig, rng: &mut ChaCha8Rng) -> Result<Trunk> {
    let stack = &cfg.conv_stack;
    if stack.conv_count() != 17 {
        return Err(Error::InvalidConfig(format!(
            "conv stack must have 17 convolutions, got {}",
            stack.conv_count()
        )));
    }
    let (in_len, in_channels) = cfg.input_kind.input_shape();

    // block plan for length tracing
    let mut blocks = Vec::new();
    blocks.push(Block::Conv {
        width: stack.head_width,
        stride: stack.head_stride,
    });
    blocks.push(Block::Pool);
    let n_stages = stack.stage_channels.len() - 1;
    for s in 0..n_stages {
        for _ in 0..stack.convs_per_stage {
            blocks.push(Block::Conv {
                width: stack.stage_conv_width,
                stride: 1,
            });
        }
        if s + 1 < n_stages {
            blocks.push(Block::Pool);
        }
    }
    if min_required(&blocks) > in_len {
        return Err(Error::InvalidConfig(format!(
            "input length {in_len} too short for the conv stack (needs {})",
            min_required(&blocks)
        )));
    }

    // resolve pool widths greedily front to back
    let mut layers = Vec::new();
    let mut len = in_len;
    let mut channels = in_channels;
    let mut bi = 0usize;
    let push_conv = |layers: &mut Vec<Layer>,
                     len: &mut usize,
                     channels: &mut usize,
                     width: usize,
                     stride: usize,
                     out_ch: usize,
                     rng: &mut ChaCha8Rng| {
        layers.push(Layer::Conv1d(Conv1d::he_uniform(
            width,
            stride,
            *channels,
            out_ch,
            Activation::Identity,
            rng,
        )));
        if stack.batch_norm {
            layers.push(Layer::BatchNorm(BatchNorm::new(out_ch)));
        }
        layers.push(Layer::Relu);
        *len = (*len - width) / stride + 1;
        *channels = out_ch;
    };

    push_conv(
        &mut layers,
        &mut len,
        &mut channels,
        stack.head_width,
        stack.head_stride,
        stack.stage_channels[0],
        rng,
    );
    bi += 1; // past head conv
    bi += 1; // its pool
    let w = resolve_pool(len, stack.pool_width, &blocks[bi..]);
    layers.push(Layer::MaxPool1d { width: w });
    len /= w;

    for s in 0..n_stages {
        let out_ch = stack.stage_channels[s + 1];
        for _ in 0..stack.convs_per_stage {
            push_conv(
                &mut layers,
                &mut len,
                &mut channels,
                stack.stage_conv_width,
                1,
                out_ch,
                rng,
            );
            bi += 1;
        }
        if s + 1 < n_stages {
            bi += 1;
            let w = resolve_pool(len, stack.pool_width, &blocks[bi..]);
            layers.push(Layer::MaxPool1d { width: w });
            len /= w;
        }
    }
    layers.push(Layer::GlobalAvgPool);

    let (fc0, fc1, fc2) = cfg.fc_dims;
    layers.push(Layer::Dense(Dense::glorot(channels, fc0, rng)));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(Dense::glorot(fc0, fc1, rng)));
    layers.push(Layer::Relu);
    layers.push(Layer::Dropout {
        rate: cfg.dropout_between_last_two,
    });
    layers.push(Layer::Dense(Dense::glorot(fc1, fc2, rng)));
    layers.push(Layer::Relu);

    Ok(Trunk {
        layers,
        out_dim: fc2,
    })
}

fn resolve_pool(len: usize, desired: usize, rest: &[Block]) -> usize {
    let need = min_required(rest);
    let mut w = desired.min(len).max(1);
    while w > 1 && len / w < need {
        w -= 1;
    }
    w
}

/// Joint fusion: both trunks' last hidden layers concatenate and pass
/// through one new hidden layer. The branches stay fully trainable.
pub fn build_joint(
    text: Trunk,
    signal: Trunk,
    fusion_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trunk> {
    if text.out_dim != signal.out_dim {
        return Err(Error::InvalidConfig(format!(
            "mismatched penultimate dims {} vs {}",
            text.out_dim, signal.out_dim
        )));
    }
    let concat = text.out_dim + signal.out_dim;
    let layers = vec![
        Layer::Pair {
            left: text.layers,
            right: signal.layers,
        },
        Layer::Dense(Dense::glorot(concat, fusion_dim, rng)),
        Layer::Relu,
    ];
    Ok(Trunk {
        layers,
        out_dim: fusion_dim,
    })
}

/// A prediction head ready to sit on a trunk of matching width.
#[derive(Debug)]
pub struct BuiltHead {
    pub layers: Vec<Layer>,
    pub in_dim: usize,
}

pub fn build_head(cfg: &HeadConfig, in_dim: usize, rng: &mut ChaCha8Rng) -> Result<BuiltHead> {
    cfg.validate()?;
    let layers = match cfg.kind {
        HeadKind::SoftmaxExpectation => vec![
            Layer::Dense(Dense::glorot(in_dim, cfg.wer_vector.len(), rng)),
            Layer::Softmax,
            Layer::WeightedSum {
                weights: cfg.wer_vector.clone(),
            },
        ],
        HeadKind::ReluScalar => vec![
            Layer::Dense(Dense::glorot(in_dim, 1, rng)),
            Layer::Relu,
        ],
    };
    Ok(BuiltHead { layers, in_dim })
}

/// Run a head on a hidden vector (eval mode).
pub fn predict_head(hidden: &[f64], head: &BuiltHead) -> Result<f64> {
    if hidden.len() != head.in_dim {
        return Err(Error::LayerShape {
            index: 0,
            msg: format!(
                "head expects {} inputs, got {}",
                head.in_dim,
                hidden.len()
            ),
        });
    }
    let net = Network::new(head.layers.clone());
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = net.forward(
        &crate::nn::NetInput::Single(Tensor2::row_vector(hidden.to_vec())),
        Mode::Eval,
        &mut rng,
    )?;
    Ok(f.output.data[0])
}

/// The softmax-expectation prediction on raw logits: softmax then dot with
/// the WER vector. Bounded by the vector's range and invariant to logit
/// shifts.
pub fn softmax_expectation(logits: &[f64], wer_vector: &[f64]) -> f64 {
    debug_assert_eq!(logits.len(), wer_vector.len());
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter()
        .zip(wer_vector)
        .map(|(e, v)| e / sum * v)
        .sum()
}

/// Attach a head to a trunk, producing a complete scalar-output network.
pub fn attach_head(trunk: Trunk, cfg: &HeadConfig, rng: &mut ChaCha8Rng) -> Result<Network> {
    let head = build_head(cfg, trunk.out_dim, rng)?;
    let mut layers = trunk.layers;
    layers.extend(head.layers);
    Ok(Network::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Profile, SignalKind};
    use crate::nn::NetInput;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn default_text_cnn_pools_1280_values() {
        let cfg = TextCnnConfig::default();
        let embed = EmbedConfig::default();
        let trunk = build_text_cnn(&cfg, &embed, &mut rng()).unwrap();
        match &trunk.layers[1] {
            Layer::Dense(d) => assert_eq!(d.in_dim, 1280), // 5 windows × 256 filters
            other => panic!("expected dense, got {other:?}"),
        }
        assert_eq!(trunk.out_dim, 128);
    }

    #[test]
    fn single_window_pools_filter_count() {
        let cfg = TextCnnConfig {
            window_sizes: vec![3],
            filters_per_size: 4,
            fc_dims: (8, 4),
            dropout: (0.2, 0.6),
        };
        let embed = EmbedConfig { max_len: 10, dim: 5 };
        let trunk = build_text_cnn(&cfg, &embed, &mut rng()).unwrap();
        match &trunk.layers[1] {
            Layer::Dense(d) => assert_eq!(d.in_dim, 4),
            other => panic!("expected dense, got {other:?}"),
        }
    }

    #[test]
    fn all_padding_input_is_finite() {
        let profile = Profile::Desk;
        let cfg = profile.text_cnn();
        let embed = profile.embed_config();
        let trunk = build_text_cnn(&cfg, &embed, &mut rng()).unwrap();
        let net = attach_head(trunk, &HeadConfig::softmax(), &mut rng()).unwrap();
        let zero = Tensor2::zeros(embed.max_len, embed.dim);
        let pred = net.predict_scalar(&NetInput::Single(zero)).unwrap();
        assert!(pred.is_finite());
        assert!((0.0..=150.0).contains(&pred));
    }

    #[test]
    fn oversized_window_is_rejected() {
        let cfg = TextCnnConfig {
            window_sizes: vec![1, 99],
            filters_per_size: 2,
            fc_dims: (4, 2),
            dropout: (0.0, 0.0),
        };
        let embed = EmbedConfig { max_len: 10, dim: 3 };
        assert!(build_text_cnn(&cfg, &embed, &mut rng()).is_err());
    }

    #[test]
    fn signal_cnn_has_17_convs_and_accepts_all_encodings() {
        let profile = Profile::Desk;
        for kind in [SignalKind::Raw, SignalKind::Mel, SignalKind::Mfcc] {
            let cfg = profile.signal_cnn(kind);
            assert_eq!(cfg.conv_stack.conv_count(), 17);
            let trunk = build_signal_cnn(&cfg, &mut rng()).unwrap();
            let conv_layers = trunk
                .layers
                .iter()
                .filter(|l| matches!(l, Layer::Conv1d(_)))
                .count();
            assert_eq!(conv_layers, 17);
            assert_eq!(trunk.out_dim, 32);
            // trunk consumes the encoding's fixed shape end to end
            let (rows, cols) = kind.input_shape();
            let net = Network::new(trunk.layers);
            let x = crate::nn::gradcheck::random_input(rows, cols, 1);
            let f = net
                .forward(&NetInput::Single(x), Mode::Eval, &mut rng())
                .unwrap();
            assert_eq!(f.output.shape(), (1, 32), "kind {kind:?}");
        }
    }

    #[test]
    fn joint_fusion_concatenates_both_hidden_layers() {
        let profile = Profile::Desk;
        let mut r = rng();
        let t = build_text_cnn(&profile.text_cnn(), &profile.embed_config(), &mut r).unwrap();
        let s = build_signal_cnn(&profile.signal_cnn(SignalKind::Raw), &mut r).unwrap();
        let joint = build_joint(t, s, 32, &mut r).unwrap();
        match &joint.layers[1] {
            Layer::Dense(d) => {
                assert_eq!(d.in_dim, 64); // 32 + 32
                assert_eq!(d.out_dim, 32);
            }
            other => panic!("expected dense, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_trunk_dims_error() {
        let mut r = rng();
        let a = Trunk { layers: vec![], out_dim: 128 };
        let b = Trunk { layers: vec![], out_dim: 32 };
        let e = build_joint(a, b, 64, &mut r).unwrap_err();
        assert!(e.to_string().contains("mismatched penultimate dims 128 vs 32"));
    }

    #[test]
    fn head_one_hot_class_zero_predicts_zero() {
        let cfg = HeadConfig::softmax();
        let mut head = build_head(&cfg, 2, &mut rng()).unwrap();
        // rig the dense layer: huge logit on class 0 regardless of input
        if let Layer::Dense(d) = &mut head.layers[0] {
            d.weight.fill(0.0);
            d.bias.fill(0.0);
            d.bias.data[0] = 1e4;
        }
        let p = predict_head(&[0.3, -0.4], &head).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn head_uniform_probabilities_predict_expectation() {
        let cfg = HeadConfig::softmax();
        let mut head = build_head(&cfg, 3, &mut rng()).unwrap();
        if let Layer::Dense(d) = &mut head.layers[0] {
            d.weight.fill(0.0);
            d.bias.fill(0.0);
        }
        let p = predict_head(&[1.0, 2.0, 3.0], &head).unwrap();
        assert_abs_diff_eq!(p, 400.0 / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn softmax_expectation_hand_values() {
        let v = [0.0, 25.0, 50.0, 75.0, 100.0, 150.0];
        // probs [0, 0.5, 0.5, 0, 0, 0] -> 37.5; build via large equal logits
        let big = 50.0;
        let p = softmax_expectation(&[-big, 0.0, 0.0, -big, -big, -big], &v);
        assert_abs_diff_eq!(p, 37.5, epsilon = 1e-6);
        let uniform = softmax_expectation(&[0.0; 6], &v);
        assert_abs_diff_eq!(uniform, 400.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn relu_head_is_nonnegative() {
        let cfg = HeadConfig::relu();
        let head = build_head(&cfg, 4, &mut rng()).unwrap();
        let mut r = rng();
        use rand::Rng;
        for _ in 0..100 {
            let hidden: Vec<f64> = (0..4).map(|_| r.gen_range(-10.0..10.0)).collect();
            let p = predict_head(&hidden, &head).unwrap();
            assert!(p >= 0.0);
        }
    }
}
