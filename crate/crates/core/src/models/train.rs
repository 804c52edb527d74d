//! Training protocol: shuffled mini-batches under MAE/Adadelta, several
//! independent restarts, selection by dev-set MAE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use super::{Featurizer, ModelDescriptor, TrainProtocol, TARGET_CLIP};
use crate::corpus::{split_train_dev, Dataset, Utterance};
use crate::error::{Error, Result};
use crate::nn::{adadelta_step, Mode, Network};
use crate::parallel::{par_map, par_map_range, pairwise_sum};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mae: f64,
    pub dev_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartLog {
    pub restart: usize,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
}

impl RestartLog {
    /// Selection metric: dev MAE after the final epoch.
    pub fn final_dev_mae(&self) -> f64 {
        self.epochs.last().map_or(f64::INFINITY, |e| e.dev_mae)
    }
}

pub struct TrainOutcome {
    pub network: Network,
    pub selected_restart: usize,
    pub logs: Vec<RestartLog>,
}

fn mix(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(b)
        .wrapping_mul(0xD1B54A32D192ED03)
}

/// Train `protocol.restarts` independent models (restart seeds derived as
/// seed + i) and return the one with the lowest dev MAE after the final
/// epoch, with the full per-epoch log of every restart. Restarts run in
/// parallel; results are bit-deterministic for a fixed (seed, data,
/// config) regardless of thread count.
pub fn train(
    desc: &ModelDescriptor,
    train_set: &Dataset,
    featurizer: &Featurizer,
    protocol: &TrainProtocol,
) -> Result<TrainOutcome> {
    protocol.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyRecords);
    }
    for u in train_set.iter() {
        if u.reference_wer().is_none() {
            return Err(Error::MissingReference { id: u.id.clone() });
        }
    }
    let (train_split, dev_split) =
        split_train_dev(train_set, protocol.dev_fraction, protocol.seed)?;
    if dev_split.is_empty() {
        return Err(Error::InvalidConfig(
            "dev split is empty; increase dev_fraction or dataset size".into(),
        ));
    }
    let train_items = with_targets(&train_split);
    let dev_items = with_targets(&dev_split);

    let results: Vec<Result<(Network, RestartLog)>> = par_map_range(protocol.restarts, |r| {
        run_restart(
            desc,
            &train_items,
            &dev_items,
            featurizer,
            protocol,
            r,
        )
    });
    let mut nets = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    for res in results {
        let (net, log) = res?;
        nets.push(net);
        logs.push(log);
    }
    let selected_restart = logs
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.final_dev_mae()
                .partial_cmp(&b.1.final_dev_mae())
                .unwrap()
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .expect("restarts >= 1");
    let network = nets.swap_remove(selected_restart);
    Ok(TrainOutcome {
        network,
        selected_restart,
        logs,
    })
}

fn with_targets(d: &Dataset) -> Vec<(&Utterance, f64)> {
    d.utterances
        .iter()
        .map(|u| {
            let wer = u.reference_wer().expect("checked upstream");
            (u, wer.clamp(TARGET_CLIP.0, TARGET_CLIP.1))
        })
        .collect()
}

fn run_restart(
    desc: &ModelDescriptor,
    train_items: &[(&Utterance, f64)],
    dev_items: &[(&Utterance, f64)],
    featurizer: &Featurizer,
    protocol: &TrainProtocol,
    restart: usize,
) -> Result<(Network, RestartLog)> {
    let seed = protocol.seed.wrapping_add(restart as u64);
    let mut net = desc.build(seed)?;
    let batch_size = protocol.adadelta.batch_size;
    let mut epochs = Vec::with_capacity(protocol.epochs);
    for epoch in 0..protocol.epochs {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut abs_err_sum = 0.0;
        for (batch_no, chunk) in order.chunks(batch_size).enumerate() {
            let b = chunk.len() as f64;
            let per_item: Vec<Result<(f64, Vec<Tensor2>)>> =
                par_map_range(chunk.len(), |j| {
                    let idx = chunk[j];
                    let (utt, target) = train_items[idx];
                    let input = featurizer.encode(utt)?;
                    let item_seed = mix(mix(seed, epoch as u64), (batch_no * batch_size + j) as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
                    let fwd = net.forward(&input, Mode::Train, &mut rng)?;
                    let pred = fwd.output.data[0];
                    let d = pred - target;
                    let gsign = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let grads = net.backward(&fwd, Tensor2::row_vector(vec![gsign / b]))?;
                    Ok((d.abs(), grads))
                });
            let mut batch_grads = net.zero_grads();
            for item in per_item {
                let (abs_err, grads) = item?;
                abs_err_sum += abs_err;
                for (acc, g) in batch_grads.iter_mut().zip(grads) {
                    for (a, v) in acc.data.iter_mut().zip(g.data) {
                        *a += v;
                    }
                }
            }
            adadelta_step(&mut net, &batch_grads, &protocol.adadelta)?;
        }
        let train_mae = abs_err_sum / train_items.len() as f64;
        let dev_mae = eval_mae(&net, dev_items, featurizer)?;
        epochs.push(EpochLog {
            epoch,
            train_mae,
            dev_mae,
        });
    }
    Ok((
        net,
        RestartLog {
            restart,
            seed,
            epochs,
        },
    ))
}

/// Eval-mode MAE over items with clipped targets.
pub(crate) fn eval_mae(
    net: &Network,
    items: &[(&Utterance, f64)],
    featurizer: &Featurizer,
) -> Result<f64> {
    let errs: Vec<Result<f64>> = par_map(items, |(u, target)| {
        let input = featurizer.encode(u)?;
        let pred = net.predict_scalar(&input)?;
        Ok((pred - target).abs())
    });
    let vals = errs.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&vals) / vals.len() as f64)
}
