//! Event-triggered broadcast scheme and the distributed control law.
//!
//! Each agent broadcasts v_i = K_i x_i to its control-layer neighbours. Between
//! broadcasts the neighbours hold the last received value v̂_i. A broadcast fires
//! when the event function φ_i crosses zero; while communication is jammed the agent
//! falls back to periodic retries every `t_dos` seconds, and the first retry after
//! the jam clears goes through.

use crate::error::{Error, Result};
use crate::model::MasSystem;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Per-agent trigger tuning plus the shared decay rate and retry period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerParams {
    /// Absolute threshold budget κ_1i > 0 of each agent.
    pub kappa_1: Vec<f64>,
    /// Relative threshold budget κ_2i ≥ 0 of each agent.
    pub kappa_2: Vec<f64>,
    /// Decay rate σ > 0 of the absolute budget.
    pub sigma: f64,
    /// Retry period under jamming, t_dos > 0.
    pub t_dos: f64,
}

impl TriggerParams {
    pub fn validate(&self, n_agents: usize) -> Result<()> {
        if self.kappa_1.len() != n_agents || self.kappa_2.len() != n_agents {
            return Err(Error::DimensionMismatch(format!(
                "kappa_1/kappa_2 need one entry per agent ({n_agents})"
            )));
        }
        for (i, &k) in self.kappa_1.iter().enumerate() {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Validation(format!("kappa_1[{i}] must be positive (got {k})")));
            }
        }
        for (i, &k) in self.kappa_2.iter().enumerate() {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Validation(format!("kappa_2[{i}] must be nonnegative (got {k})")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation(format!("sigma must be positive (got {})", self.sigma)));
        }
        if !(self.t_dos > 0.0 && self.t_dos.is_finite()) {
            return Err(Error::Validation(format!("t_dos must be positive (got {})", self.t_dos)));
        }
        Ok(())
    }

    pub fn kappa_2_max(&self) -> f64 {
        self.kappa_2.iter().cloned().fold(0.0, f64::max)
    }
}

/// Event function φ_i = κ_1i e^{−σt} + κ_2i ‖x_i‖² − ‖e_vi‖²; the trigger fires at φ_i ≤ 0.
pub fn eval_phi(params: &TriggerParams, i: usize, t: f64, x_i_sq: f64, e_vi_sq: f64) -> f64 {
    params.kappa_1[i] * (-params.sigma * t).exp() + params.kappa_2[i] * x_i_sq - e_vi_sq
}

/// One agent's broadcast bookkeeping: the held value and the event/retry clock.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferState {
    /// Held broadcast value v̂_i = K_i x_i(t_k), frozen between successful broadcasts.
    pub v_hat: DVector<f64>,
    /// Time of the last successful broadcast.
    pub last_broadcast: f64,
    /// Time of the last attempt, successful or jammed. Retries pace off this clock.
    pub last_attempt: f64,
}

impl BufferState {
    /// State right after the mandatory broadcast at t = 0.
    pub fn initial(v0: DVector<f64>) -> Self {
        Self { v_hat: v0, last_broadcast: 0.0, last_attempt: 0.0 }
    }

    /// True while the agent is waiting to re-deliver a jammed broadcast.
    pub fn in_retry(&self) -> bool {
        self.last_attempt > self.last_broadcast
    }
}

/// Decision taken for one agent at one step boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastDecision {
    /// Keep holding the buffered value.
    Hold,
    /// Deliver a fresh value to the neighbours now.
    Broadcast,
    /// An attempt was made but jamming swallowed it; retry in t_dos.
    BlockedAttempt,
}

/// Relative slack on the retry-period comparison, absorbing the rounding error of
/// grid times like 1.9 − 1.6 so a retry lands on its scheduled step, not one later.
const RETRY_SLACK: f64 = 1e-9;

/// Decide agent i's action at time `t`. `phi` is the current event-function value;
/// it governs fresh triggers only — once an attempt has been jammed the retry clock
/// takes over until a delivery succeeds.
pub fn next_broadcast(
    params: &TriggerParams,
    buffer: &BufferState,
    t: f64,
    phi: f64,
    dos_active: bool,
) -> BroadcastDecision {
    let period = params.t_dos * (1.0 - RETRY_SLACK);
    if dos_active {
        // Periodic attempts paced from the most recent attempt; all jammed.
        if t - buffer.last_attempt >= period {
            BroadcastDecision::BlockedAttempt
        } else {
            BroadcastDecision::Hold
        }
    } else if buffer.in_retry() {
        // Jam is over; the pending retry goes through at its scheduled instant.
        if t - buffer.last_attempt >= period {
            BroadcastDecision::Broadcast
        } else {
            BroadcastDecision::Hold
        }
    } else if phi <= 0.0 {
        BroadcastDecision::Broadcast
    } else {
        BroadcastDecision::Hold
    }
}

/// Apply a decision to the buffer. `v_fresh` is K_i x_i(t).
pub fn apply_decision(
    buffer: &mut BufferState,
    decision: BroadcastDecision,
    t: f64,
    v_fresh: &DVector<f64>,
) {
    match decision {
        BroadcastDecision::Hold => {}
        BroadcastDecision::Broadcast => {
            buffer.v_hat.copy_from(v_fresh);
            buffer.last_broadcast = t;
            buffer.last_attempt = t;
        }
        BroadcastDecision::BlockedAttempt => {
            buffer.last_attempt = t;
        }
    }
}

/// Distributed control input u_i = Σ_j a^c_ij (v̂_i − v̂_j) + s^c_i v̂_i, assembled from
/// held neighbour values only.
pub fn control_input(sys: &MasSystem, i: usize, v_hats: &[DVector<f64>]) -> DVector<f64> {
    let n_u = sys.dims.n_u;
    let mut u = DVector::zeros(n_u);
    let row = sys.control_graph.weights.row(i);
    for (j, &w) in row.iter().enumerate() {
        if w != 0.0 {
            u.axpy(-w, &v_hats[j], 1.0);
            u.axpy(w, &v_hats[i], 1.0);
        }
    }
    u.axpy(sys.pinning[i], &v_hats[i], 1.0);
    u
}
