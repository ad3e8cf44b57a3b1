//! Queue evolution, arrivals, throughput gating and latency.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::scenario::{ArrivalModel, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueueState {
    /// Q_k^u, bits waiting at the UE.
    pub local: Vec<f64>,
    /// Q_k^e, bits waiting at the ES.
    pub remote: Vec<f64>,
    /// Q̂_k^u as seen by the ES for the next allocation.
    pub es_view: Vec<f64>,
    /// What the ES would infer from received data alone:
    /// max(0, Q_u(t) − τ_pay·R̃(t)) of the last step.
    pub inferred_local: Vec<f64>,
}

impl QueueState {
    pub fn empty(k: usize) -> Self {
        Self {
            local: vec![0.0; k],
            remote: vec![0.0; k],
            es_view: vec![0.0; k],
            inferred_local: vec![0.0; k],
        }
    }

    /// Q_k = Q_k^u + Q_k^e.
    pub fn total(&self, k: usize) -> f64 {
        self.local[k] + self.remote[k]
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.local.len()).map(|k| self.total(k)).collect()
    }
}

/// Bits per UE arriving during one slot of length `tau`.
pub fn draw_arrivals<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig, tau: f64) -> Vec<f64> {
    let mean = cfg.arrival_rate * tau;
    match cfg.arrivals {
        ArrivalModel::Deterministic => vec![mean; cfg.num_ues],
        ArrivalModel::Poisson => {
            if mean <= 0.0 {
                return vec![0.0; cfg.num_ues];
            }
            let dist = Poisson::new(mean).expect("positive finite mean");
            (0..cfg.num_ues).map(|_| dist.sample(rng)).collect()
        }
    }
}

/// R̃ = R if R ≤ C, else 0 (the whole payload is lost).
pub fn actual_throughput(rate: f64, capacity: f64) -> f64 {
    if rate > capacity {
        0.0
    } else {
        rate
    }
}

/// Per-UE bit movements of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFlows {
    /// Bits moved from the UE to the ES, min(Q_u, τ_pay·R̃).
    pub transferred: Vec<f64>,
    /// Bits computed at the ES, min(Q_e, τ_pay·f·J).
    pub processed: Vec<f64>,
}

/// Advance the local and remote queues by one slot.
pub fn step_queues(
    state: &QueueState,
    actual_rate: &[f64],
    cpu: &[f64],
    arrivals: &[f64],
    tau_pay: f64,
    cfg: &ScenarioConfig,
) -> (QueueState, StepFlows) {
    let k_n = state.local.len();
    let mut next = QueueState::empty(k_n);
    let mut flows = StepFlows {
        transferred: vec![0.0; k_n],
        processed: vec![0.0; k_n],
    };
    for k in 0..k_n {
        let served = tau_pay * actual_rate[k];
        let left = (state.local[k] - served).max(0.0);
        next.local[k] = left + arrivals[k];
        next.inferred_local[k] = left;
        let compute = tau_pay * cpu[k] * cfg.bits_per_cycle;
        flows.transferred[k] = state.local[k].min(served);
        flows.processed[k] = state.remote[k].min(compute);
        next.remote[k] = (state.remote[k] - compute).max(0.0) + flows.transferred[k];
        next.es_view[k] = next.local[k];
    }
    (next, flows)
}

/// L_k = Q_k/Ā_k; undefined without traffic.
pub fn latency(total_bits: f64, arrival_rate: f64) -> Option<f64> {
    (arrival_rate > 0.0).then(|| total_bits / arrival_rate)
}
