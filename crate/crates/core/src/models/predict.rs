//! Per-utterance input encoding and dataset prediction.

use std::path::PathBuf;

use super::{InputSpec, ModelDescriptor, SignalKind};
use crate::corpus::{Dataset, Utterance};
use crate::dsp;
use crate::error::{Error, Result};
use crate::nn::{NetInput, Network};
use crate::parallel::try_par_map;
use crate::scoring::PredictionRecord;
use crate::tensor::Tensor2;
use crate::textfeat::{embed_utterance, EmbedConfig, EmbeddingTable};

/// Turns utterances into network inputs for a given model. Mel/MFCC
/// tensors go through the on-disk feature cache when a cache directory is
/// configured.
pub struct Featurizer {
    pub input: InputSpec,
    pub embed_cfg: Option<EmbedConfig>,
    pub table: Option<EmbeddingTable>,
    pub cache_dir: Option<PathBuf>,
}

impl Featurizer {
    pub fn new(
        desc: &ModelDescriptor,
        table: Option<EmbeddingTable>,
        cache_dir: Option<PathBuf>,
    ) -> Result<Self> {
        if desc.input.needs_text() && table.is_none() {
            return Err(Error::InvalidConfig(
                "model consumes text but no embedding table was provided".into(),
            ));
        }
        Ok(Featurizer {
            input: desc.input,
            embed_cfg: desc.embed,
            table,
            cache_dir,
        })
    }

    pub fn encode(&self, u: &Utterance) -> Result<NetInput> {
        match self.input {
            InputSpec::Embed => Ok(NetInput::Single(self.text_tensor(u)?)),
            InputSpec::Signal(kind) => Ok(NetInput::Single(self.signal_tensor(u, kind)?)),
            InputSpec::Joint(kind) => Ok(NetInput::Pair(
                self.text_tensor(u)?,
                self.signal_tensor(u, kind)?,
            )),
        }
    }

    fn text_tensor(&self, u: &Utterance) -> Result<Tensor2> {
        let table = self.table.as_ref().expect("validated at construction");
        let cfg = self.embed_cfg.as_ref().ok_or_else(|| {
            Error::InvalidConfig("text model lacks an embed config".into())
        })?;
        let (t, _truncated) = embed_utterance(&u.hyp, table, cfg)?;
        Ok(t)
    }

    fn signal_tensor(&self, u: &Utterance, kind: SignalKind) -> Result<Tensor2> {
        let path = u.audio_path.as_ref().ok_or_else(|| Error::AudioRequired {
            id: u.id.clone(),
        })?;
        if kind != SignalKind::Raw {
            if let Some(dir) = &self.cache_dir {
                if let Some(t) = dsp::read_cached(dir, &u.id, kind.cache_key())? {
                    return Ok(t);
                }
            }
        }
        let buf = dsp::load_and_standardize(path)?;
        let t = match kind {
            SignalKind::Raw => dsp::raw_tensor(&buf)?,
            SignalKind::Mel => dsp::mel_spectrogram(&buf)?,
            SignalKind::Mfcc => dsp::mfcc(&buf)?,
        };
        if kind != SignalKind::Raw {
            if let Some(dir) = &self.cache_dir {
                dsp::write_cached(dir, &u.id, kind.cache_key(), &t)?;
            }
        }
        Ok(t)
    }
}

/// Predict every utterance of a dataset (eval mode, deterministic). Group
/// labels carry the utterance's style and show for aggregation.
pub fn predict_dataset(
    net: &Network,
    dataset: &Dataset,
    featurizer: &Featurizer,
) -> Result<Vec<PredictionRecord>> {
    try_par_map(&dataset.utterances, |u| {
        let input = featurizer.encode(u)?;
        let pred = net.predict_scalar(&input)?;
        let mut rec = PredictionRecord::new(u.id.clone(), u.reference_wer(), pred);
        rec.group.insert("style".into(), u.style.to_string());
        rec.group.insert("show".into(), u.show.clone());
        Ok(rec)
    })
}
