//! Predictor architectures and the training/selection protocol.
//!
//! Three model families share one engine: a multi-window text CNN over the
//! embedding matrix, a 17-convolution deep CNN over the signal (raw
//! waveform, mel-spectrogram or MFCC) ending in global average pooling,
//! and a joint model that concatenates both last hidden layers through a
//! fusion layer. Either of two heads finishes a network: a softmax over
//! six WER classes whose expectation against a fixed WER vector is the
//! prediction, or a single ReLU unit predicting WER directly. Training
//! minimizes MAE with Adadelta over shuffled mini-batches, runs several
//! independent restarts and keeps the restart with the lowest dev MAE.

mod build;
mod predict;
mod train;

pub use build::{
    attach_head, build_head, build_joint, build_signal_cnn, build_text_cnn, predict_head,
    softmax_expectation, BuiltHead, Trunk,
};
pub use predict::{predict_dataset, Featurizer};
pub use train::{train, EpochLog, RestartLog, TrainOutcome};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, AdadeltaConfig, Network};
use crate::textfeat::{EmbedConfig, EmbeddingTable};

/// Signal encoding fed to the deep CNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalKind {
    Raw,
    Mel,
    Mfcc,
}

impl SignalKind {
    pub fn input_shape(&self) -> (usize, usize) {
        match self {
            SignalKind::Raw => (crate::dsp::TARGET_SAMPLES, 1),
            SignalKind::Mel => (crate::dsp::N_FRAMES, crate::dsp::N_MELS),
            SignalKind::Mfcc => (crate::dsp::N_FRAMES, crate::dsp::N_MFCC),
        }
    }

    pub fn cache_key(&self) -> &'static str {
        match self {
            SignalKind::Raw => "raw",
            SignalKind::Mel => "mel",
            SignalKind::Mfcc => "mfcc",
        }
    }
}

/// What a model consumes per utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputSpec {
    Embed,
    Signal(SignalKind),
    Joint(SignalKind),
}

impl InputSpec {
    pub fn needs_text(&self) -> bool {
        matches!(self, InputSpec::Embed | InputSpec::Joint(_))
    }

    pub fn needs_audio(&self) -> bool {
        matches!(self, InputSpec::Signal(_) | InputSpec::Joint(_))
    }

    pub fn signal_kind(&self) -> Option<SignalKind> {
        match self {
            InputSpec::Signal(k) | InputSpec::Joint(k) => Some(*k),
            InputSpec::Embed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCnnConfig {
    pub window_sizes: Vec<usize>,
    pub filters_per_size: usize,
    pub fc_dims: (usize, usize),
    pub dropout: (f64, f64),
}

impl Default for TextCnnConfig {
    fn default() -> Self {
        TextCnnConfig {
            window_sizes: vec![1, 3, 5, 7, 9],
            filters_per_size: 256,
            fc_dims: (256, 128),
            dropout: (0.2, 0.6),
        }
    }
}

/// Shape of the 17-convolution stack: one strided head convolution and
/// four stages of narrow convolutions, max pooling after the head and the
/// first three stages, global average pooling at the end. BatchNorm+ReLU
/// follow every convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStackConfig {
    pub head_width: usize,
    pub head_stride: usize,
    /// channels of the head conv and the four stages
    pub stage_channels: Vec<usize>,
    pub convs_per_stage: usize,
    pub stage_conv_width: usize,
    pub pool_width: usize,
    pub batch_norm: bool,
}

impl Default for ConvStackConfig {
    fn default() -> Self {
        ConvStackConfig {
            head_width: 80,
            head_stride: 4,
            stage_channels: vec![64, 64, 128, 256, 512],
            convs_per_stage: 4,
            stage_conv_width: 3,
            pool_width: 4,
            batch_norm: true,
        }
    }
}

impl ConvStackConfig {
    pub fn conv_count(&self) -> usize {
        1 + (self.stage_channels.len().saturating_sub(1)) * self.convs_per_stage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCnnConfig {
    pub input_kind: SignalKind,
    pub conv_stack: ConvStackConfig,
    pub fc_dims: (usize, usize, usize),
    pub dropout_between_last_two: f64,
}

impl SignalCnnConfig {
    pub fn new(input_kind: SignalKind) -> Self {
        SignalCnnConfig {
            input_kind,
            conv_stack: ConvStackConfig::default(),
            fc_dims: (512, 256, 128),
            dropout_between_last_two: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    SoftmaxExpectation,
    ReluScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub wer_vector: Vec<f64>,
}

impl HeadConfig {
    pub fn softmax() -> Self {
        HeadConfig {
            kind: HeadKind::SoftmaxExpectation,
            wer_vector: vec![0.0, 25.0, 50.0, 75.0, 100.0, 150.0],
        }
    }

    pub fn relu() -> Self {
        HeadConfig {
            kind: HeadKind::ReluScalar,
            wer_vector: vec![0.0, 25.0, 50.0, 75.0, 100.0, 150.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == HeadKind::SoftmaxExpectation {
            if self.wer_vector.is_empty() {
                return Err(Error::InvalidConfig("wer_vector must be non-empty".into()));
            }
            if self.wer_vector.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidConfig(
                    "wer_vector must be non-decreasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Training targets are clipped to the head's representable range.
pub const TARGET_CLIP: (f64, f64) = (0.0, 150.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProtocol {
    pub epochs: usize,
    pub restarts: usize,
    pub dev_fraction: f64,
    pub seed: u64,
    pub adadelta: AdadeltaConfig,
}

impl Default for TrainProtocol {
    fn default() -> Self {
        TrainProtocol {
            epochs: 50,
            restarts: 10,
            dev_fraction: 0.1,
            seed: 0,
            adadelta: AdadeltaConfig::default(),
        }
    }
}

impl TrainProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("restarts must be ≥ 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be ≥ 1".into()));
        }
        self.adadelta.validate()
    }
}

/// Complete recipe for rebuilding a network: stored as the checkpoint's
/// architecture string and as a JSON sidecar so `predict` is
/// self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub input: InputSpec,
    pub embed: Option<EmbedConfig>,
    pub text: Option<TextCnnConfig>,
    pub signal: Option<SignalCnnConfig>,
    pub fusion_dim: Option<usize>,
    pub head: HeadConfig,
    /// Embedding table file, relative to the model directory.
    pub embed_file: Option<String>,
    pub init_seed: u64,
}

impl ModelDescriptor {
    /// Build the randomly initialized network this descriptor describes.
    pub fn build(&self, seed: u64) -> Result<Network> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trunk = match &self.input {
            InputSpec::Embed => {
                let text = self
                    .text
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("embed model lacks text config".into()))?;
                let embed = self
                    .embed
                    .ok_or_else(|| Error::InvalidConfig("embed model lacks embed config".into()))?;
                build_text_cnn(text, &embed, &mut rng)?
            }
            InputSpec::Signal(_) => {
                let signal = self.signal.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("signal model lacks signal config".into())
                })?;
                build_signal_cnn(signal, &mut rng)?
            }
            InputSpec::Joint(_) => {
                let text = self
                    .text
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("joint model lacks text config".into()))?;
                let embed = self
                    .embed
                    .ok_or_else(|| Error::InvalidConfig("joint model lacks embed config".into()))?;
                let signal = self.signal.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("joint model lacks signal config".into())
                })?;
                let t = build_text_cnn(text, &embed, &mut rng)?;
                let s = build_signal_cnn(signal, &mut rng)?;
                build_joint(t, s, self.fusion_dim.unwrap_or(128), &mut rng)?
            }
        };
        attach_head(trunk, &self.head, &mut rng)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Other(format!("descriptor: {e}")))
    }
}

/// Dimension profiles: the paper-scale geometry and a desk-scale variant
/// small enough for tests and CPU runs. Both keep the same topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn embed_config(&self) -> EmbedConfig {
        match self {
            Profile::Paper => EmbedConfig::default(), // 296 x 100
            Profile::Desk => EmbedConfig { max_len: 64, dim: 16 },
        }
    }

    pub fn text_cnn(&self) -> TextCnnConfig {
        match self {
            Profile::Paper => TextCnnConfig::default(),
            Profile::Desk => TextCnnConfig {
                window_sizes: vec![1, 3, 5],
                filters_per_size: 16,
                fc_dims: (64, 32),
                dropout: (0.2, 0.6),
            },
        }
    }

    pub fn signal_cnn(&self, kind: SignalKind) -> SignalCnnConfig {
        match self {
            Profile::Paper => SignalCnnConfig::new(kind),
            // Desk profile drops BatchNorm: normalizing each channel over
            // one utterance's time axis removes the per-utterance energy
            // level, the main signal cue at this scale.
            Profile::Desk => SignalCnnConfig {
                input_kind: kind,
                conv_stack: ConvStackConfig {
                    head_stride: 16,
                    stage_channels: vec![8, 8, 12, 16, 24],
                    batch_norm: false,
                    ..ConvStackConfig::default()
                },
                fc_dims: (64, 48, 32),
                dropout_between_last_two: 0.2,
            },
        }
    }

    pub fn fusion_dim(&self) -> usize {
        match self {
            Profile::Paper => 128,
            Profile::Desk => 32,
        }
    }

    pub fn protocol(&self, seed: u64) -> TrainProtocol {
        match self {
            Profile::Paper => TrainProtocol {
                seed,
                ..TrainProtocol::default()
            },
            // Small batches give Adadelta enough steps to pull the deep
            // signal branch in at desk scale; restarts with dev selection
            // cover the occasional bad basin.
            Profile::Desk => TrainProtocol {
                epochs: 16,
                restarts: 2,
                dev_fraction: 0.1,
                seed,
                adadelta: AdadeltaConfig {
                    batch_size: 4,
                    ..AdadeltaConfig::default()
                },
            },
        }
    }

    /// Descriptor for an input/head choice under this profile.
    pub fn descriptor(&self, input: InputSpec, head: HeadConfig, init_seed: u64) -> ModelDescriptor {
        let needs_text = input.needs_text();
        let signal_kind = input.signal_kind();
        ModelDescriptor {
            embed: needs_text.then(|| self.embed_config()),
            text: needs_text.then(|| self.text_cnn()),
            signal: signal_kind.map(|k| self.signal_cnn(k)),
            fusion_dim: matches!(input, InputSpec::Joint(_)).then(|| self.fusion_dim()),
            input,
            head,
            embed_file: None,
            init_seed,
        }
    }
}

const CHECKPOINT_FILE: &str = "checkpoint.bin";
const DESCRIPTOR_FILE: &str = "descriptor.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

/// Write a model directory: binary checkpoint plus the JSON descriptor.
/// The embedding table, when the model uses one, is saved alongside and
/// referenced from the descriptor.
pub fn save_model(
    dir: &Path,
    net: &Network,
    descriptor: &ModelDescriptor,
    table: Option<&EmbeddingTable>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut descriptor = descriptor.clone();
    if let Some(t) = table {
        t.save(&dir.join(EMBEDDINGS_FILE))?;
        descriptor.embed_file = Some(EMBEDDINGS_FILE.to_string());
    }
    let json = descriptor.to_json()?;
    std::fs::write(dir.join(DESCRIPTOR_FILE), &json)
        .map_err(|e| Error::io(dir.display().to_string(), e))?;
    save_checkpoint(net, &json, &dir.join(CHECKPOINT_FILE))
}

pub struct LoadedModel {
    pub network: Network,
    pub descriptor: ModelDescriptor,
    pub table: Option<EmbeddingTable>,
}

/// Rebuild a network from a model directory.
pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let ckpt = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    let descriptor: ModelDescriptor = serde_json::from_str(&ckpt.descriptor)
        .map_err(|e| Error::Checkpoint(format!("bad descriptor: {e}")))?;
    let mut network = descriptor.build(descriptor.init_seed)?;
    network.load_params(ckpt.params, ckpt.opt)?;
    let table = match &descriptor.embed_file {
        Some(f) => Some(crate::textfeat::load_embeddings(&dir.join(f))?.table),
        None => None,
    };
    Ok(LoadedModel {
        network,
        descriptor,
        table,
    })
}
