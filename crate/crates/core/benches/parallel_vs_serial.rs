//! Parallel batch paths against hand-rolled sequential loops.
//!
//! Built with the default `parallel` feature, the first arm of each pair
//! uses the rayon-backed helpers; the `*serial*` arm always runs a plain
//! loop. Without the feature both arms are sequential, which turns the
//! pairs into a regression check for the fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use werpred_core::dsp::{mel_spectrogram, standardize, AudioBuffer};
use werpred_core::models::{Featurizer, HeadConfig, InputSpec, Profile, TrainProtocol};
use werpred_core::nn::AdadeltaConfig;
use werpred_core::parallel::{pairwise_sum, par_map};
use werpred_core::scoring::{kendall_tau_values, PredictionRecord};
use werpred_core::textfeat::EmbeddingTable;

fn buffers(n: usize) -> Vec<AudioBuffer> {
    (0..n)
        .map(|i| {
            let f = 200.0 + 37.0 * i as f64;
            let samples = (0..16_000)
                .map(|t| 0.4 * (2.0 * std::f64::consts::PI * f * t as f64 / 8000.0).sin())
                .collect();
            standardize(AudioBuffer {
                samples,
                sample_rate: 8000,
            })
        })
        .collect()
}

fn bench_batch_mel(c: &mut Criterion) {
    let bufs = buffers(8);
    let mut group = c.benchmark_group("batch_mel_x8");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let out = par_map(&bufs, |buf| mel_spectrogram(buf).unwrap());
            black_box(out.len())
        })
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            let out: Vec<_> = bufs.iter().map(|buf| mel_spectrogram(buf).unwrap()).collect();
            black_box(out.len())
        })
    });
    group.finish();
}

fn bench_train_epoch(c: &mut Criterion) {
    use werpred_core::corpus::{synth_corpus, synth_vocabulary, SynthConfig};
    let dir = std::env::temp_dir().join("werpred-bench-synth");
    let cfg = SynthConfig {
        n_utterances: 64,
        write_audio: false,
        seed: 1,
        ..SynthConfig::default()
    };
    let data = synth_corpus(&cfg, &dir).unwrap();
    let profile = Profile::Desk;
    let desc = profile.descriptor(InputSpec::Embed, HeadConfig::softmax(), 0);
    let table = EmbeddingTable::random(&synth_vocabulary(&cfg), profile.embed_config().dim, 2);
    let featurizer = Featurizer::new(&desc, Some(table), None).unwrap();
    let protocol = TrainProtocol {
        epochs: 1,
        restarts: 1,
        dev_fraction: 0.1,
        seed: 0,
        adadelta: AdadeltaConfig {
            batch_size: 16,
            ..AdadeltaConfig::default()
        },
    };

    let mut group = c.benchmark_group("text_cnn_train_epoch_x64");
    group.sample_size(10);
    // batch members go through par_map inside train(); the serial arm
    // steps the same items one by one
    group.bench_function("parallel_batch_members", |b| {
        b.iter(|| {
            let out = werpred_core::models::train(&desc, &data, &featurizer, &protocol).unwrap();
            black_box(out.selected_restart)
        })
    });
    group.bench_function("serial_items", |b| {
        use werpred_core::nn::{mae_loss, Mode};
        b.iter(|| {
            let mut net = desc.build(0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut count = 0usize;
            for u in data.iter() {
                let input = featurizer.encode(u).unwrap();
                let fwd = net.forward(&input, Mode::Train, &mut rng).unwrap();
                let target = u.reference_wer().unwrap();
                let (_, grad) = mae_loss(&[fwd.output.data[0]], &[target]).unwrap();
                let grads = net
                    .backward(&fwd, werpred_core::tensor::Tensor2::row_vector(grad))
                    .unwrap();
                werpred_core::nn::adadelta_step(&mut net, &grads, &protocol.adadelta).unwrap();
                count += 1;
            }
            black_box(count)
        })
    });
    group.finish();
    let _ = std::fs::remove_dir_all(&dir);
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 5000;
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x + rng.gen_range(-20.0..20.0)).collect();
    let recs: Vec<PredictionRecord> = xs
        .iter()
        .zip(&ys)
        .enumerate()
        .map(|(i, (x, y))| PredictionRecord::new(format!("u{i}"), Some(*x), *y))
        .collect();

    let mut group = c.benchmark_group("metrics_n5000");
    group.bench_function("kendall_tau", |b| {
        b.iter(|| black_box(kendall_tau_values(&xs, &ys).unwrap()))
    });
    group.bench_function("mae_pairwise", |b| {
        b.iter(|| black_box(werpred_core::scoring::mae(&recs).unwrap()))
    });
    group.finish();
}

fn bench_pairwise_sum(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1_000_000).map(|i| (i as f64 * 0.31).sin()).collect();
    let mut group = c.benchmark_group("sum_1m");
    group.bench_function("pairwise", |b| b.iter(|| black_box(pairwise_sum(&xs))));
    group.bench_function("serial_fold", |b| {
        b.iter(|| black_box(xs.iter().sum::<f64>()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_batch_mel,
    bench_train_epoch,
    bench_metrics,
    bench_pairwise_sum
);
criterion_main!(benches);
