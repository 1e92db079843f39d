//! Central finite-difference check of the hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::network::{masked_loss, masked_loss_and_grad, Batch, Target};
use super::params::{Layout, ParameterSet};
use super::ModelConfig;
use crate::corpus::{TokenId, MASK, NUM_SPECIALS, UNK};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Groups whose gradient norm falls below this are compared on an absolute scale.
const NORM_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GroupError {
    pub name: String,
    pub analytic_norm: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub loss: f64,
    pub groups: Vec<GroupError>,
    pub max_relative_error: f64,
}

pub fn grad_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    grad_check_with_step(config, seed, DEFAULT_STEP)
}

/// Compares analytic gradients with central differences in f64.
///
/// Every tensor (including gains and biases) is drawn from N(0, 0.3²),
/// gains around one, so that no group sits at a degenerate point. Per
/// tensor the error is `‖a − n‖ / max(‖a‖, ‖n‖, 1e-4)`.
pub fn grad_check_with_step(config: &ModelConfig, seed: u64, step: f64) -> Result<GradCheckReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = Layout::new(config);
    let mut params = ParameterSet::<f64>::zeros(layout.clone());
    let normal = Normal::new(0.0, 0.3).expect("valid normal");
    for spec in &layout.tensors {
        let gain = spec.name.ends_with(".gamma");
        for x in &mut params.as_mut_slice()[spec.range()] {
            *x = normal.sample(&mut rng) + if gain { 1.0 } else { 0.0 };
        }
    }

    let seq_len = config.max_sequence_length;
    let sequences = 2;
    let v = config.vocab_size as TokenId;
    let mut ids: Vec<TokenId> = (0..sequences * seq_len)
        .map(|_| rng.random_range(NUM_SPECIALS as TokenId..v))
        .collect();
    let mut targets: Vec<Target> = Vec::new();
    for b in 0..sequences {
        for pos in [0, seq_len / 2] {
            let row = b * seq_len + pos;
            targets.push((row, ids[row]));
            ids[row] = MASK;
        }
        // One target predicted from an intact (unmasked) input.
        let row = b * seq_len + seq_len - 1;
        targets.push((row, if b == 0 { UNK } else { ids[row] }));
    }
    let batch = Batch { ids: &ids, seq_len };

    let mut grads = ParameterSet::zeros(layout.clone());
    let loss = masked_loss_and_grad(&params, config, batch, &targets, &mut grads);

    let mut groups = Vec::with_capacity(layout.tensors.len());
    for spec in &layout.tensors {
        let mut diff_sq = 0.0;
        let mut analytic_sq = 0.0;
        let mut numeric_sq = 0.0;
        for i in spec.range() {
            let original = params.as_slice()[i];
            params.as_mut_slice()[i] = original + step;
            let plus = masked_loss(&params, config, batch, &targets);
            params.as_mut_slice()[i] = original - step;
            let minus = masked_loss(&params, config, batch, &targets);
            params.as_mut_slice()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grads.as_slice()[i];
            diff_sq += (analytic - numeric).powi(2);
            analytic_sq += analytic * analytic;
            numeric_sq += numeric * numeric;
        }
        let denom = analytic_sq.sqrt().max(numeric_sq.sqrt()).max(NORM_FLOOR);
        groups.push(GroupError {
            name: spec.name.clone(),
            analytic_norm: analytic_sq.sqrt(),
            relative_error: diff_sq.sqrt() / denom,
        });
    }
    let max_relative_error = groups.iter().map(|g| g.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        step,
        loss,
        groups,
        max_relative_error,
    })
}
