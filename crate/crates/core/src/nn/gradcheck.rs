//! Central finite-difference gradient checking.
//!
//! Compares analytic parameter gradients against (L(θ+ε) − L(θ−ε)) / 2ε
//! for a sample of elements per parameter tensor, under the MAE loss.
//! Checks run in eval mode so dropout is the identity and the loss is
//! deterministic; inputs should be generic (away from max-pool ties and
//! ReLU kinks), which random inputs are with probability one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mae_loss, Mode, NetInput, Network};
use crate::error::Result;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Relative error with an absolute floor. The floor covers the central
/// difference's cancellation noise: the loss carries ~1 ulp of rounding,
/// so the numeric gradient is only accurate to about ulp(loss)/(2ε) in
/// absolute terms (~1e-10 at ε = 1e-5); differences below a few times
/// that are indistinguishable from float noise, not gradient bugs.
fn rel_err(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if diff < 5e-9 {
        return 0.0;
    }
    diff / a.abs().max(n.abs()).max(1e-8)
}

fn loss_at(net: &Network, input: &NetInput, target: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let f = net.forward(input, Mode::Eval, &mut rng)?;
    let (loss, _) = mae_loss(&[f.output.data[0]], &[target])?;
    Ok(loss)
}

/// Check `samples_per_tensor` randomly chosen elements of every parameter
/// tensor. Returns the worst relative error observed.
///
/// An element whose first comparison misses `RETRY_TOL` is re-measured at
/// ε/5 and 5ε, keeping the best agreement: a wrong gradient formula
/// disagrees at every step size, while the two finite-difference artifacts
/// are step-size-bound — a max-tie or ReLU kink inside the interval
/// vanishes when it shrinks, and f64 cancellation noise shrinks when it
/// grows.
pub fn check_network(
    net: &mut Network,
    input: &NetInput,
    samples_per_tensor: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    const RETRY_TOL: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // target well away from the prediction so the MAE kink is never crossed
    let base_pred = {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        net.forward(input, Mode::Eval, &mut r)?.output.data[0]
    };
    let target = base_pred - 10.0;

    // analytic gradients
    let analytic: Vec<Tensor2> = {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let fwd = net.forward(input, Mode::Eval, &mut r)?;
        let (_, dpred) = mae_loss(&[fwd.output.data[0]], &[target])?;
        net.backward(&fwd, Tensor2::row_vector(dpred))?
    };

    let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let mut checked = 0usize;
    let mut max_rel = 0.0f64;
    for (ti, &len) in shapes.iter().enumerate() {
        if len == 0 {
            continue;
        }
        for _ in 0..samples_per_tensor.min(len) {
            let ei = rng.gen_range(0..len);
            let a = analytic[ti].data[ei];
            let mut e = numeric_rel_err(net, input, target, ti, ei, eps, a)?;
            if e >= RETRY_TOL {
                e = e.min(numeric_rel_err(net, input, target, ti, ei, eps / 5.0, a)?);
            }
            if e >= RETRY_TOL {
                e = e.min(numeric_rel_err(net, input, target, ti, ei, eps * 5.0, a)?);
            }
            if e > max_rel {
                max_rel = e;
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        checked,
        max_rel_err: max_rel,
    })
}

fn numeric_rel_err(
    net: &mut Network,
    input: &NetInput,
    target: f64,
    ti: usize,
    ei: usize,
    eps: f64,
    analytic: f64,
) -> Result<f64> {
    let orig = net.params()[ti].data[ei];
    net.params_mut()[ti].data[ei] = orig + eps;
    let lp = loss_at(net, input, target)?;
    net.params_mut()[ti].data[ei] = orig - eps;
    let lm = loss_at(net, input, target)?;
    net.params_mut()[ti].data[ei] = orig;
    let numeric = (lp - lm) / (2.0 * eps);
    Ok(rel_err(analytic, numeric))
}

/// Random generic tensor for gradient-check inputs.
pub fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor2 { rows, cols, data }
}
