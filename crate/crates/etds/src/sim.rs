//! Fixed-step closed-loop simulator.
//!
//! The stacked agent state advances with classical fourth-order Runge–Kutta while the
//! control input is held constant across each step. All broadcast decisions happen at
//! step boundaries: the trigger is evaluated on the state at the start of the step,
//! buffer updates apply immediately, and the refreshed buffers shape the input used
//! over the step. Every agent delivers its initial value at t = 0.

use crate::dos::DoSSchedule;
use crate::error::{Error, Result};
use crate::model::{MasSystem, Nonlinearity};
use crate::synthesis::GainSet;
use crate::trigger::{
    apply_decision, control_input, eval_phi, next_broadcast, BroadcastDecision, BufferState,
    TriggerParams,
};
use nalgebra::DVector;
use serde::Serialize;

/// Trajectories are cut off once the state norm exceeds this multiple of the larger
/// of 1 and the initial norm; the run is then flagged as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e9;

/// One broadcast-layer event: a delivery or a jammed attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub agent: usize,
    pub kind: BroadcastDecision,
    /// Event-function value the decision saw (with an empty broadcast error for the
    /// mandatory deliveries at t = 0).
    pub phi: f64,
}

/// Complete record of one closed-loop run on the integration grid.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    /// Sample instants t_k = k·dt.
    pub times: Vec<f64>,
    /// Stacked agent states at each sample.
    pub states: Vec<DVector<f64>>,
    /// Stacked control inputs held over [t_k, t_{k+1}).
    pub controls: Vec<DVector<f64>>,
    /// Stacked buffer contents after the events at each sample.
    pub v_hats: Vec<DVector<f64>>,
    /// Broadcasts and jammed attempts, in time order.
    pub events: Vec<Event>,
    /// The attack schedule the run was driven by.
    pub schedule: DoSSchedule,
    /// Lyapunov value at each sample; empty until the certifier fills it.
    pub lyapunov: Vec<f64>,
    pub dt: f64,
    /// True when the state outran the divergence guard and the log was truncated.
    pub diverged: bool,
}

/// Reject step sizes too coarse to resolve the retry period or (when a chattering
/// bound is known) the smallest guaranteed inter-event gap.
pub fn validate_step_size(dt: f64, t_dos: f64, min_event_gap: Option<f64>) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidStep(format!("dt must be positive (got {dt})")));
    }
    if dt > t_dos / 4.0 {
        return Err(Error::InvalidStep(format!(
            "dt = {dt} must not exceed a quarter of the retry period t_dos = {t_dos}"
        )));
    }
    if let Some(gap) = min_event_gap {
        if dt > gap / 4.0 {
            return Err(Error::InvalidStep(format!(
                "dt = {dt} must not exceed a quarter of the guaranteed inter-event gap {gap:.6e}"
            )));
        }
    }
    Ok(())
}

/// Stacked drift at one integration stage: per agent, A_i x_i + B_u,i u_i + B_f,i f_i.
/// The nonlinearity is re-checked against its declared cone bound on every evaluation.
fn stacked_derivative(
    sys: &MasSystem,
    u_stack: &DVector<f64>,
    t: f64,
    x_stack: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = sys.n_agents();
    let (n_x, n_u) = (sys.dims.n_x, sys.dims.n_u);
    let xs: Vec<DVector<f64>> =
        (0..n).map(|i| x_stack.rows(i * n_x, n_x).into_owned()).collect();
    let mut dx = DVector::zeros(n * n_x);
    for i in 0..n {
        let ag = &sys.agents[i];
        let u_i = u_stack.rows(i * n_u, n_u);
        let mut dxi = &ag.a * &xs[i] + &ag.b_u * u_i;
        // A vanishing nonlinearity contributes nothing, whatever shape B_f has.
        if !matches!(ag.nonlinearity, Nonlinearity::Zero) {
            let pre = sys.interconnection_pre(i, &xs);
            let z = &ag.c_z * &pre;
            let f = ag.nonlinearity.eval(&z, t);
            let f_sq = f.norm_squared();
            if !f_sq.is_finite() {
                return Err(Error::NumericalFault(format!(
                    "agent {i}: nonlinearity produced a non-finite value at t = {t}"
                )));
            }
            let cap = ag.gamma_f * ag.gamma_cz * pre.norm_squared() * (1.0 + 1e-12) + 1e-300;
            if f_sq > cap {
                return Err(Error::Validation(format!(
                    "agent {i}: nonlinearity outran its declared cone bound at t = {t} \
                     (‖f‖² = {f_sq:.6e} > {cap:.6e})"
                )));
            }
            dxi += &ag.b_f * f;
        }
        dx.rows_mut(i * n_x, n_x).copy_from(&dxi);
    }
    Ok(dx)
}

/// One classical Runge–Kutta step of length `dt` with the input held at `u_stack`.
fn rk4_step(
    sys: &MasSystem,
    u_stack: &DVector<f64>,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let half = 0.5 * dt;
    let k1 = stacked_derivative(sys, u_stack, t, x)?;
    let k2 = stacked_derivative(sys, u_stack, t + half, &(x + &k1 * half))?;
    let k3 = stacked_derivative(sys, u_stack, t + half, &(x + &k2 * half))?;
    let k4 = stacked_derivative(sys, u_stack, t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Run the closed loop from `x0` to `t_end` on a grid of width `dt`.
///
/// A run whose state leaves the divergence guard is truncated and flagged rather than
/// failed: instability is a legitimate outcome the caller classifies against the
/// certificate.
pub fn simulate(
    sys: &MasSystem,
    gains: &GainSet,
    trig: &TriggerParams,
    schedule: &DoSSchedule,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<TrajectoryLog> {
    let n = sys.n_agents();
    let (n_x, n_u) = (sys.dims.n_x, sys.dims.n_u);
    trig.validate(n)?;
    if x0.len() != n * n_x {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} entries, expected {}",
            x0.len(),
            n * n_x
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Validation(format!("t_end must be positive (got {t_end})")));
    }
    validate_step_size(dt, trig.t_dos, None)?;
    let steps = (t_end / dt).round() as usize;
    if steps == 0 {
        return Err(Error::InvalidStep(format!("t_end = {t_end} is below one step of {dt}")));
    }

    let mut log = TrajectoryLog {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        v_hats: Vec::with_capacity(steps + 1),
        events: Vec::new(),
        schedule: schedule.clone(),
        lyapunov: Vec::new(),
        dt,
        diverged: false,
    };

    // Mandatory initial delivery: every buffer starts at K_i x_i(0).
    let mut buffers: Vec<BufferState> = (0..n)
        .map(|i| {
            let x_i = x0.rows(i * n_x, n_x).into_owned();
            BufferState::initial(&gains.k[i] * &x_i)
        })
        .collect();
    for (i, _) in buffers.iter().enumerate() {
        let x_i_sq = x0.rows(i * n_x, n_x).norm_squared();
        log.events.push(Event {
            time: 0.0,
            agent: i,
            kind: BroadcastDecision::Broadcast,
            phi: eval_phi(trig, i, 0.0, x_i_sq, 0.0),
        });
    }

    let guard = DIVERGENCE_FACTOR * x0.norm().max(1.0);
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let jammed = schedule.is_active(t);
        // Trigger pass on the state at the step start. Decisions are computed for
        // every agent before any buffer changes: a broadcast never sees a
        // same-instant neighbour update.
        if k > 0 {
            let mut decisions = Vec::with_capacity(n);
            for (i, buf) in buffers.iter().enumerate() {
                let x_i = x.rows(i * n_x, n_x);
                let e_v = &buf.v_hat - &gains.k[i] * x_i;
                let phi = eval_phi(trig, i, t, x_i.norm_squared(), e_v.norm_squared());
                decisions.push((next_broadcast(trig, buf, t, phi, jammed), phi));
            }
            for (i, (decision, phi)) in decisions.into_iter().enumerate() {
                if decision == BroadcastDecision::Hold {
                    continue;
                }
                let v_fresh = &gains.k[i] * x.rows(i * n_x, n_x);
                apply_decision(&mut buffers[i], decision, t, &v_fresh);
                log.events.push(Event { time: t, agent: i, kind: decision, phi });
            }
        }

        let v_now: Vec<DVector<f64>> = buffers.iter().map(|b| b.v_hat.clone()).collect();
        let mut u_stack = DVector::zeros(n * n_u);
        let mut v_stack = DVector::zeros(n * n_u);
        for i in 0..n {
            u_stack.rows_mut(i * n_u, n_u).copy_from(&control_input(sys, i, &v_now));
            v_stack.rows_mut(i * n_u, n_u).copy_from(&v_now[i]);
        }
        log.times.push(t);
        log.states.push(x.clone());
        log.controls.push(u_stack.clone());
        log.v_hats.push(v_stack);

        if k == steps {
            break;
        }
        let x_next = rk4_step(sys, &u_stack, t, &x, dt)?;
        if !x_next.iter().all(|v| v.is_finite()) || x_next.norm() > guard {
            log.diverged = true;
            break;
        }
        x = x_next;
    }
    Ok(log)
}
