//! Experience memory, TD-error computation, rank-based prioritization, and
//! per-iteration data selection.

use std::collections::VecDeque;

use crate::approximator::{eval_q, PolicyApprox, QApprox};
use crate::error::FpiError;
use crate::types::{DataMode, FpiConfig, GaitSample};

/// FIFO experience buffer with a fixed capacity. Sample order is stable
/// between prioritization passes; ties in the rank sort are broken by
/// insertion order.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    samples: VecDeque<GaitSample>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { samples: VecDeque::with_capacity(capacity), capacity }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &GaitSample> {
        self.samples.iter()
    }

    pub fn get(&self, index: usize) -> &GaitSample {
        &self.samples[index]
    }

    /// Append a sample, evicting the oldest one at capacity.
    pub fn push(&mut self, sample: GaitSample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
    }

    /// Recompute prioritization caches for all buffered samples from the
    /// given TD errors and return the normalized weights.
    pub fn assign_priorities(&mut self, td_errors: &[f64]) -> Vec<f64> {
        assert_eq!(td_errors.len(), self.samples.len(), "one TD error per buffered sample");
        let (ranks, weights) = rank_based_weights(td_errors);
        for (i, sample) in self.samples.iter_mut().enumerate() {
            sample.td_error = Some(td_errors[i]);
            sample.rank = Some(ranks[i]);
            sample.weight = weights[i];
        }
        weights
    }
}

/// TD error of one stored sample against the previous critic and the
/// current policy:
/// `δ = U(x, u) + Q̂⁻(x⁺, h(x⁺)) − Q̂⁻(x, u)`.
pub fn td_error(
    sample: &GaitSample,
    q_prev: &QApprox,
    policy: &PolicyApprox,
    stage_cost_aug: f64,
) -> f64 {
    let next_action = policy.act(&sample.next_state);
    stage_cost_aug + eval_q(q_prev, &sample.next_state, &next_action)
        - eval_q(q_prev, &sample.state, &sample.action)
}

/// Rank-based replay weights: samples sorted by |δ| descending get ranks
/// `ζ = 1, 2, …` (ties broken by insertion order), unnormalized weights
/// `1/ζ`, then normalized so the weights sum to one.
pub fn rank_based_weights(td_errors: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let n = td_errors.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        td_errors[b]
            .abs()
            .partial_cmp(&td_errors[a].abs())
            .expect("TD errors must be comparable")
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; n];
    for (position, &index) in order.iter().enumerate() {
        ranks[index] = position + 1;
    }
    let unnormalized: Vec<f64> = ranks.iter().map(|&zeta| 1.0 / zeta as f64).collect();
    let total: f64 = unnormalized.iter().sum();
    let weights = unnormalized.iter().map(|lambda| lambda / total).collect();
    (ranks, weights)
}

/// Replay weights for one policy iteration: unit weights at iteration zero
/// or with prioritization off, rank-based weights otherwise.
pub fn iteration_weights(config: &FpiConfig, iteration: usize, td_errors: &[f64]) -> Vec<f64> {
    if !config.prioritization || iteration == 0 {
        vec![1.0; td_errors.len()]
    } else {
        rank_based_weights(td_errors).1
    }
}

/// Select the buffer indices feeding one policy evaluation.
///
/// Batch mode returns exactly the `n_b` newest samples generated under the
/// current policy; sample reuse across policies is not allowed in this
/// mode. Incremental mode returns the entire buffer, mixed policies
/// included.
pub fn prepare_iteration_data(
    buffer: &ReplayBuffer,
    config: &FpiConfig,
    iteration: usize,
    n_b: usize,
) -> Result<Vec<usize>, FpiError> {
    match config.data_mode {
        DataMode::Batch => {
            let tag = iteration as u32;
            let fresh: Vec<usize> = (0..buffer.len())
                .filter(|&i| buffer.get(i).policy_tag == tag)
                .collect();
            if fresh.len() < n_b {
                return Err(FpiError::InsufficientData { have: fresh.len(), need: n_b });
            }
            Ok(fresh[fresh.len() - n_b..].to_vec())
        }
        DataMode::Incremental => {
            let need = config.n_b_initial;
            if buffer.len() < need {
                return Err(FpiError::InsufficientData { have: buffer.len(), need });
            }
            Ok((0..buffer.len()).collect())
        }
    }
}
