//! Adadelta update rule with per-parameter accumulators.

use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            epsilon: 1e-6,
            batch_size: 32,
        }
    }
}

impl AdadeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must be in (0,1), got {}", self.rho)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Running E[g²] and E[Δx²], one tensor per parameter, shapes mirroring
/// the parameter list.
#[derive(Debug, Clone)]
pub struct AdadeltaState {
    pub eg2: Vec<Tensor2>,
    pub edx2: Vec<Tensor2>,
}

impl AdadeltaState {
    pub fn zeros_like(params: &[&Tensor2]) -> Self {
        AdadeltaState {
            eg2: params.iter().map(|p| Tensor2::zeros(p.rows, p.cols)).collect(),
            edx2: params.iter().map(|p| Tensor2::zeros(p.rows, p.cols)).collect(),
        }
    }

    pub(crate) fn from_parts(eg2: Vec<Tensor2>, edx2: Vec<Tensor2>) -> Self {
        AdadeltaState { eg2, edx2 }
    }
}

/// One Adadelta step:
/// E[g²] ← ρE[g²] + (1−ρ)g²;
/// Δx = −(√(E[Δx²]+ε)/√(E[g²]+ε))·g;
/// E[Δx²] ← ρE[Δx²] + (1−ρ)Δx²;
/// x += Δx.
pub fn adadelta_step(net: &mut Network, grads: &[Tensor2], cfg: &AdadeltaConfig) -> Result<()> {
    cfg.validate()?;
    if net.opt.is_none() {
        let state = AdadeltaState::zeros_like(&net.params());
        net.opt = Some(state);
    }
    let mut state = net.opt.take().unwrap();
    {
        let params = net.params_mut();
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch {
                a: params.len(),
                b: grads.len(),
            });
        }
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Checkpoint(format!(
                    "gradient {i} shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let eg2 = &mut state.eg2[i];
            let edx2 = &mut state.edx2[i];
            for j in 0..p.data.len() {
                let gv = g.data[j];
                eg2.data[j] = cfg.rho * eg2.data[j] + (1.0 - cfg.rho) * gv * gv;
                let dx = -((edx2.data[j] + cfg.epsilon).sqrt()
                    / (eg2.data[j] + cfg.epsilon).sqrt())
                    * gv;
                edx2.data[j] = cfg.rho * edx2.data[j] + (1.0 - cfg.rho) * dx * dx;
                p.data[j] += dx;
            }
        }
    }
    net.opt = Some(state);
    Ok(())
}
