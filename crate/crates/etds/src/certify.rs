//! Trajectory-level certification.
//!
//! Every analytical guarantee the design produces is re-checked numerically along a
//! simulated run: the Rayleigh sandwich of the Lyapunov function, the dissipation
//! inequality on each integration interval, the jam-free decay envelopes, the
//! per-attack growth allowance, the compound under-attack envelope, and the
//! chattering (minimum inter-event gap) bound. Discretization error is absorbed by
//! explicit tolerances that shrink with the step size.

use crate::error::{Error, Result};
use crate::linalg::{block_diag, spectral_norm};
use crate::model::{MasSystem, Nonlinearity};
use crate::sim::TrajectoryLog;
use crate::synthesis::{CertificateReport, GainSet};
use crate::trigger::{BroadcastDecision, TriggerParams};
use serde::Serialize;

/// Outcome of one certified inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Holds,
    Failed,
    /// The check's premise is absent in this scenario (wrong attack mode, missing
    /// constants, or an infeasible certificate); nothing is claimed.
    NotApplicable,
}

/// One certified inequality with its worst observed slack.
#[derive(Debug, Clone, Serialize)]
pub struct CertResult {
    pub name: String,
    pub status: CheckStatus,
    /// Smallest value of (allowed − observed) across the trajectory; negative means
    /// the bound was violated there. Absent when nothing was evaluated.
    pub worst_margin: Option<f64>,
    /// Instant of the worst margin.
    pub worst_time: Option<f64>,
    /// Largest tolerance granted anywhere during the check.
    pub tol: f64,
}

impl CertResult {
    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Failed
    }

    fn not_applicable(name: &str) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            worst_margin: None,
            worst_time: None,
            tol: 0.0,
        }
    }

    fn from_margins(name: &str, margins: &[(f64, f64)], tol: f64) -> Self {
        match margins.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
            None => Self {
                name: name.into(),
                status: CheckStatus::Holds,
                worst_margin: None,
                worst_time: None,
                tol,
            },
            Some(&(margin, time)) => Self {
                name: name.into(),
                status: if margin >= 0.0 { CheckStatus::Holds } else { CheckStatus::Failed },
                worst_margin: Some(margin),
                worst_time: Some(time),
                tol,
            },
        }
    }
}

/// Relative slack applied to every analytically exact envelope.
const ENVELOPE_RTOL: f64 = 1e-9;
/// Absolute floor protecting comparisons near zero.
const ENVELOPE_ATOL: f64 = 1e-12;
/// Safety factor on the midpoint-rule curvature estimate.
const MIDPOINT_SAFETY: f64 = 50.0;

/// V̄(t_k) = x_kᵀ P̄ x_k for every logged sample.
pub fn lyapunov_trajectory(log: &TrajectoryLog, gains: &GainSet) -> Vec<f64> {
    let p_bar = gains.p_bar();
    log.states.iter().map(|x| x.dot(&(&p_bar * x))).collect()
}

/// Rayleigh sandwich: λ_min(P̄)‖x‖² ≤ V̄ ≤ λ_max(P̄)‖x‖² at every sample.
pub fn check_rayleigh(log: &TrajectoryLog, v: &[f64], report: &CertificateReport) -> CertResult {
    let mut margins = Vec::with_capacity(2 * v.len());
    for (k, (&t, x)) in log.times.iter().zip(&log.states).enumerate() {
        let n2 = x.norm_squared();
        let tol = ENVELOPE_RTOL * report.p_max * n2 + ENVELOPE_ATOL;
        margins.push((v[k] - report.p_min * n2 + tol, t));
        margins.push((report.p_max * n2 - v[k] + tol, t));
    }
    CertResult::from_margins("lyapunov_rayleigh_sandwich", &margins, ENVELOPE_RTOL)
}

/// Dissipation inequality on every integration interval, discretized at midpoints:
///   (V_{k+1} − V_k)/dt ≤ −x_mᵀ Q̄_v x_m − (κ₂/a_e)‖x_m‖² + (1/a_e) Σ_i ‖v̂_i − K_i x_m,i‖²
/// with x_m the interval midpoint state and v̂ the buffers held over the interval.
/// The derivative and the midpoint substitution are both second-order accurate, so
/// the granted tolerance scales with dt² times logged amplitude and rate bounds.
pub fn check_dissipation(
    sys: &MasSystem,
    gains: &GainSet,
    report: &CertificateReport,
    log: &TrajectoryLog,
    v: &[f64],
) -> CertResult {
    let n = sys.n_agents();
    let (n_x, n_u) = (sys.dims.n_x, sys.dims.n_u);
    let dt = log.dt;
    let k_bar = gains.k_bar();

    // Closed-loop rate and quadratic-form scales for the curvature estimate.
    let a_norm = spectral_norm(&block_diag(
        &sys.agents.iter().map(|a| a.a.clone()).collect::<Vec<_>>(),
    ));
    let bu_norm = sys.agents.iter().map(|a| spectral_norm(&a.b_u)).fold(0.0f64, f64::max);
    let bf_norm = sys.agents.iter().map(|a| spectral_norm(&a.b_f)).fold(0.0f64, f64::max);
    let cone = sys
        .agents
        .iter()
        .map(|a| (a.gamma_f * a.gamma_cz).sqrt())
        .fold(0.0f64, f64::max);
    let aa_norm = spectral_norm(&sys.agent_graph.weights);
    let hc_norm = {
        let (hc, _) = crate::model::build_hc(&sys.control_graph, &sys.pinning)
            .expect("graphs validated at construction");
        spectral_norm(&hc)
    };
    let k_norm = spectral_norm(&k_bar);
    let t_rate = sys
        .agents
        .iter()
        .map(|a| match a.nonlinearity {
            Nonlinearity::Sinusoid { time_freq, .. } => time_freq.abs(),
            _ => 0.0,
        })
        .fold(0.0f64, f64::max);
    let rate = a_norm + bu_norm * hc_norm * k_norm + bf_norm * cone * aa_norm + t_rate;
    let q_norm = spectral_norm(&report.q_v_bar);
    let quad = report.p_max
        + q_norm
        + report.kappa_2_max / report.a_e
        + 2.0 * k_norm * k_norm / report.a_e;
    let prefactor = MIDPOINT_SAFETY * quad * (1.0 + rate).powi(3) / 24.0;

    let samples = log.times.len();
    let mut margins = Vec::with_capacity(samples.saturating_sub(1));
    let mut max_tol = 0.0f64;
    for k in 0..samples.saturating_sub(1) {
        let dv = (v[k + 1] - v[k]) / dt;
        let x_mid = (&log.states[k] + &log.states[k + 1]) * 0.5;
        let v_hat = &log.v_hats[k];
        let mut err_sq = 0.0;
        for i in 0..n {
            let e_vi = v_hat.rows(i * n_u, n_u) - &gains.k[i] * x_mid.rows(i * n_x, n_x);
            err_sq += e_vi.norm_squared();
        }
        let rhs = -x_mid.dot(&(&report.q_v_bar * &x_mid))
            - (report.kappa_2_max / report.a_e) * x_mid.norm_squared()
            + err_sq / report.a_e;
        let amp2 = log.states[k]
            .norm_squared()
            .max(log.states[k + 1].norm_squared())
            + log.controls[k].norm_squared()
            + v_hat.norm_squared();
        let tol = prefactor * amp2 * dt * dt + 1e-8;
        max_tol = max_tol.max(tol);
        let t_mid = log.times[k] + 0.5 * dt;
        margins.push((rhs + tol - dv, t_mid));
    }
    CertResult::from_margins("dissipation_rate_midpoint", &margins, max_tol)
}

/// Jam-free decay of the squared state norm: ‖x(t)‖² ≤ b₁ e^{−σt}.
pub fn check_state_envelope(
    log: &TrajectoryLog,
    report: &CertificateReport,
) -> CertResult {
    const NAME: &str = "state_envelope_jam_free";
    if !log.schedule.attacks.is_empty() || !report.qv_positive {
        return CertResult::not_applicable(NAME);
    }
    let margins: Vec<(f64, f64)> = log
        .times
        .iter()
        .zip(&log.states)
        .map(|(&t, x)| {
            let bound = report.b_1 * (-report.sigma * t).exp();
            (bound * (1.0 + ENVELOPE_RTOL) + ENVELOPE_ATOL - x.norm_squared(), t)
        })
        .collect();
    CertResult::from_margins(NAME, &margins, ENVELOPE_RTOL)
}

/// Jam-free decay of the Lyapunov function:
///   V̄(t) ≤ e^{−ρ_v t} V̄(0) + b₂ (e^{−σt} − e^{−ρ_v t}).
pub fn check_lyapunov_envelope(
    log: &TrajectoryLog,
    v: &[f64],
    report: &CertificateReport,
) -> CertResult {
    const NAME: &str = "lyapunov_envelope_jam_free";
    if !log.schedule.attacks.is_empty() || !report.qv_positive {
        return CertResult::not_applicable(NAME);
    }
    let v0 = v.first().copied().unwrap_or(0.0);
    let margins: Vec<(f64, f64)> = log
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let bound = (-report.rho_v * t).exp() * v0
                + report.b_2 * ((-report.sigma * t).exp() - (-report.rho_v * t).exp());
            (bound * (1.0 + ENVELOPE_RTOL) + ENVELOPE_ATOL - v[k], t)
        })
        .collect();
    CertResult::from_margins(NAME, &margins, ENVELOPE_RTOL)
}

/// Per-attack growth allowance: on each blocked window [h_n, h_n + τ_n + t_dos),
/// V̄(t) ≤ e^{ρ_dos (t − h_n)} V̄(h_n). The window anchor V̄(h_n) is interpolated
/// linearly between the bracketing samples.
pub fn check_jam_growth(
    log: &TrajectoryLog,
    v: &[f64],
    report: &CertificateReport,
) -> CertResult {
    const NAME: &str = "jam_growth_allowance";
    if log.schedule.attacks.is_empty() || !report.qv_positive {
        return CertResult::not_applicable(NAME);
    }
    let dt = log.dt;
    let last_t = match log.times.last() {
        Some(&t) => t,
        None => return CertResult::not_applicable(NAME),
    };
    let mut margins = Vec::new();
    for &(start, end) in &log.schedule.blocked_windows(report.t_dos) {
        if start > last_t {
            continue;
        }
        // Anchor value by linear interpolation at the attack onset.
        let idx = (start / dt).floor() as usize;
        let idx = idx.min(v.len() - 1);
        let v_h = if idx + 1 < v.len() {
            let frac = (start - log.times[idx]) / dt;
            v[idx] * (1.0 - frac) + v[idx + 1] * frac
        } else {
            v[idx]
        };
        for (k, &t) in log.times.iter().enumerate() {
            if t < start || t >= end {
                continue;
            }
            let bound = (report.rho_dos * (t - start)).exp() * v_h;
            margins.push((bound * (1.0 + ENVELOPE_RTOL) + ENVELOPE_ATOL - v[k], t));
        }
    }
    CertResult::from_margins(NAME, &margins, ENVELOPE_RTOL)
}

/// Compound under-attack envelope. With β = ρ_v − (ρ_v + ρ_dos)/τ* and
/// c = σ − β, every sample must satisfy
///   ‖x(t)‖² ≤ (1/λ_min(P̄)) [ λ_max(P̄) b_dos e^{−βt} ‖x(0)‖²
///             + b₂ b_dos e^{−βt} Σ_{h_m ≤ t} e^{−c h_m} + b₂ e^{−σt} ].
/// Claimed only when the attack obeys both declared features and the dwell
/// condition admits the retry period.
pub fn check_compound_envelope(
    log: &TrajectoryLog,
    report: &CertificateReport,
    features_ok: bool,
) -> CertResult {
    const NAME: &str = "compound_envelope_under_attack";
    if log.schedule.attacks.is_empty()
        || !report.qv_positive
        || !report.condition15_holds
        || !features_ok
    {
        return CertResult::not_applicable(NAME);
    }
    let beta = report.rho_v - (report.rho_v + report.rho_dos) / report.tau_star;
    let c = report.sigma - beta;
    let x0_sq = log.states.first().map(|x| x.norm_squared()).unwrap_or(0.0);
    let mut margins = Vec::with_capacity(log.times.len());
    for (k, &t) in log.times.iter().enumerate() {
        let onset_sum: f64 = log
            .schedule
            .attacks
            .iter()
            .take_while(|&&(h, _)| h <= t)
            .map(|&(h, _)| (-c * h).exp())
            .sum();
        let bound = (report.p_max * report.b_dos * (-beta * t).exp() * x0_sq
            + report.b_2 * report.b_dos * (-beta * t).exp() * onset_sum
            + report.b_2 * (-report.sigma * t).exp())
            / report.p_min;
        margins.push((
            bound * (1.0 + ENVELOPE_RTOL) + ENVELOPE_ATOL - log.states[k].norm_squared(),
            t,
        ));
    }
    CertResult::from_margins(NAME, &margins, ENVELOPE_RTOL)
}

/// Guaranteed minimum gap between an agent's consecutive deliveries while
/// communication is clear: (2/σ) ln(1 + σ √κ_1i / (2 b_4i)).
pub fn zeno_gap_bounds(report: &CertificateReport, trig: &TriggerParams) -> Vec<Option<f64>> {
    report
        .b_4
        .iter()
        .enumerate()
        .map(|(i, b4)| match b4 {
            Some(b) if *b > 0.0 => {
                Some((2.0 / report.sigma) * (1.0 + report.sigma * trig.kappa_1[i].sqrt() / (2.0 * b)).ln())
            }
            _ => None,
        })
        .collect()
}

/// Observed inter-delivery gaps against the guaranteed minimum. A gap counts only
/// when its whole interval avoids every blocked window, so retry-delayed deliveries
/// never dilute the statistic.
pub fn check_zeno_gaps(
    log: &TrajectoryLog,
    report: &CertificateReport,
    trig: &TriggerParams,
    n_agents: usize,
) -> CertResult {
    const NAME: &str = "minimum_event_gap";
    let bounds = zeno_gap_bounds(report, trig);
    if bounds.iter().all(Option::is_none) {
        return CertResult::not_applicable(NAME);
    }
    let windows = log.schedule.blocked_windows(report.t_dos);
    let clear = |a: f64, b: f64| windows.iter().all(|&(s, e)| b < s || a >= e);
    let mut margins = Vec::new();
    for i in 0..n_agents {
        let bound = match bounds[i] {
            Some(b) => b,
            None => continue,
        };
        let deliveries: Vec<f64> = log
            .events
            .iter()
            .filter(|e| e.agent == i && e.kind == BroadcastDecision::Broadcast)
            .map(|e| e.time)
            .collect();
        for pair in deliveries.windows(2) {
            if clear(pair[0], pair[1]) {
                let gap = pair[1] - pair[0];
                margins.push((gap - bound * (1.0 - ENVELOPE_RTOL), pair[0]));
            }
        }
    }
    CertResult::from_margins(NAME, &margins, ENVELOPE_RTOL)
}

/// Run every check on one trajectory, filling `log.lyapunov` along the way.
pub fn run_all(
    sys: &MasSystem,
    gains: &GainSet,
    report: &CertificateReport,
    trig: &TriggerParams,
    features_ok: bool,
    log: &mut TrajectoryLog,
) -> Result<Vec<CertResult>> {
    if log.times.is_empty() {
        return Err(Error::Validation("cannot certify an empty trajectory".into()));
    }
    let v = lyapunov_trajectory(log, gains);
    log.lyapunov = v.clone();
    Ok(vec![
        check_rayleigh(log, &v, report),
        check_dissipation(sys, gains, report, log, &v),
        check_state_envelope(log, report),
        check_lyapunov_envelope(log, &v, report),
        check_jam_growth(log, &v, report),
        check_compound_envelope(log, report, features_ok),
        check_zeno_gaps(log, report, trig, sys.n_agents()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dos::{verify_features, DoSSchedule, DosParams};
    use crate::model::{AgentDynamics, Dims, LayerGraph, MasSystem};
    use crate::sim::simulate;
    use crate::synthesis::{
        build_validation_matrix, compute_rates, synthesize_gains, DesignWeights, QvForm,
    };
    use nalgebra::{dmatrix, DMatrix, DVector};

    struct Fixture {
        sys: MasSystem,
        gains: GainSet,
        report: CertificateReport,
        trig: TriggerParams,
        schedule: DoSSchedule,
    }

    /// Scalar plant with a comfortable certificate; optionally one attack.
    fn scalar_fixture(a: f64, attacks: Vec<(f64, f64)>, horizon: f64) -> Fixture {
        let dos_params = DosParams { pi_f: 1.0, tau_f: 5.0, pi_d: 1.0, tau_d: 8.0 };
        scalar_fixture_with(a, attacks, horizon, dos_params)
    }

    fn scalar_fixture_with(
        a: f64,
        attacks: Vec<(f64, f64)>,
        horizon: f64,
        dos_params: DosParams,
    ) -> Fixture {
        let dims = Dims { n_x: 1, n_u: 1, n_f: 1, n_z: 1 };
        let agent = AgentDynamics {
            a: dmatrix![a],
            b_u: dmatrix![1.0],
            b_f: dmatrix![0.0],
            c_z: dmatrix![1.0],
            nonlinearity: Nonlinearity::Zero,
            gamma_f: 0.0,
            gamma_cz: 1.0,
        };
        let g = LayerGraph::new(DMatrix::zeros(1, 1)).unwrap();
        let sys = MasSystem::new(vec![agent], g.clone(), g, vec![1.0], dims).unwrap();
        let weights = DesignWeights {
            w_x: vec![dmatrix![1.0]],
            w_v: vec![dmatrix![1.0]],
            a_e: 0.5,
            a_f: 1.0,
        };
        let (hc, mu) = crate::model::build_hc(&sys.control_graph, &sys.pinning).unwrap();
        let gains = synthesize_gains(&sys, &weights, mu).unwrap();
        let (qv, _) =
            build_validation_matrix(&sys, &weights, &gains, &hc, mu, QvForm::GammaScalar).unwrap();
        let trig = TriggerParams {
            kappa_1: vec![0.01],
            kappa_2: vec![0.01],
            sigma: 0.1,
            t_dos: 0.1,
        };
        let x0 = DVector::from_vec(vec![1.0]);
        let report =
            compute_rates(&sys, &weights, &gains, &qv, &trig, &dos_params, &x0).unwrap();
        let schedule = DoSSchedule::new(dos_params, attacks, horizon).unwrap();
        Fixture { sys, gains, report, trig, schedule }
    }

    fn run(fx: &Fixture, dt: f64, t_end: f64) -> (TrajectoryLog, Vec<f64>) {
        let x0 = DVector::from_vec(vec![1.0]);
        let log = simulate(&fx.sys, &fx.gains, &fx.trig, &fx.schedule, &x0, dt, t_end).unwrap();
        let v = lyapunov_trajectory(&log, &fx.gains);
        (log, v)
    }

    #[test]
    fn rayleigh_sandwich_holds_on_scalar_run() {
        let fx = scalar_fixture(-0.5, vec![], 5.0);
        let (log, v) = run(&fx, 0.01, 5.0);
        let r = check_rayleigh(&log, &v, &fx.report);
        assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
    }

    #[test]
    fn dissipation_holds_on_jam_free_run() {
        let fx = scalar_fixture(-0.5, vec![], 5.0);
        let (log, v) = run(&fx, 0.01, 5.0);
        let r = check_dissipation(&fx.sys, &fx.gains, &fx.report, &log, &v);
        assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
    }

    #[test]
    fn dissipation_holds_through_a_jam() {
        let fx = scalar_fixture(-0.5, vec![(1.0, 0.5)], 5.0);
        let (log, v) = run(&fx, 0.01, 5.0);
        let r = check_dissipation(&fx.sys, &fx.gains, &fx.report, &log, &v);
        assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
    }

    #[test]
    fn dissipation_fails_for_an_overstated_rate() {
        // Claiming a much faster decay than the design provides must be caught.
        let fx = scalar_fixture(-0.5, vec![], 5.0);
        let (log, v) = run(&fx, 0.01, 5.0);
        let mut tampered = fx.report.clone();
        let dim = tampered.q_v_bar.nrows();
        tampered.q_v_bar =
            &tampered.q_v_bar + DMatrix::identity(dim, dim) * (50.0 * tampered.lambda_min_qv);
        let r = check_dissipation(&fx.sys, &fx.gains, &tampered, &log, &v);
        assert_eq!(r.status, CheckStatus::Failed, "{r:?}");
    }

    #[test]
    fn envelopes_hold_and_gate_on_attacks() {
        let fx = scalar_fixture(-0.5, vec![], 6.0);
        let (log, v) = run(&fx, 0.01, 6.0);
        let st = check_state_envelope(&log, &fx.report);
        let ly = check_lyapunov_envelope(&log, &v, &fx.report);
        assert_eq!(st.status, CheckStatus::Holds, "{st:?}");
        assert_eq!(ly.status, CheckStatus::Holds, "{ly:?}");

        let fx2 = scalar_fixture(-0.5, vec![(1.0, 0.5)], 6.0);
        let (log2, v2) = run(&fx2, 0.01, 6.0);
        assert_eq!(check_state_envelope(&log2, &fx2.report).status, CheckStatus::NotApplicable);
        assert_eq!(
            check_lyapunov_envelope(&log2, &v2, &fx2.report).status,
            CheckStatus::NotApplicable
        );
    }

    #[test]
    fn state_envelope_fails_when_b1_is_understated() {
        let fx = scalar_fixture(-0.5, vec![], 6.0);
        let (log, _) = run(&fx, 0.01, 6.0);
        let mut tampered = fx.report.clone();
        tampered.b_1 *= 1e-6;
        let r = check_state_envelope(&log, &tampered);
        assert_eq!(r.status, CheckStatus::Failed, "{r:?}");
    }

    #[test]
    fn jam_growth_holds_on_attacked_run() {
        let fx = scalar_fixture(-0.5, vec![(1.0, 0.5)], 5.0);
        let (log, v) = run(&fx, 0.01, 5.0);
        let r = check_jam_growth(&log, &v, &fx.report);
        assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
        assert_eq!(
            check_jam_growth(&log, &v, &fx.report).name,
            "jam_growth_allowance"
        );
        let fx2 = scalar_fixture(-0.5, vec![], 5.0);
        let (log2, v2) = run(&fx2, 0.01, 5.0);
        assert_eq!(check_jam_growth(&log2, &v2, &fx2.report).status, CheckStatus::NotApplicable);
    }

    #[test]
    fn jam_growth_fails_with_zeroed_rate_on_destabilizing_attack() {
        // Open-loop unstable plant: stale buffers let V grow during the jam, so a
        // zero growth allowance must be rejected.
        let fx = scalar_fixture(1.0, vec![(0.5, 2.0)], 5.0);
        let (log, v) = run(&fx, 0.01, 5.0);
        let genuine = check_jam_growth(&log, &v, &fx.report);
        assert_eq!(genuine.status, CheckStatus::Holds, "{genuine:?}");
        let mut tampered = fx.report.clone();
        tampered.rho_dos = 0.0;
        let r = check_jam_growth(&log, &v, &tampered);
        assert_eq!(r.status, CheckStatus::Failed, "{r:?}");
    }

    #[test]
    fn compound_envelope_gates_and_holds() {
        let fx = scalar_fixture(-0.5, vec![(1.0, 0.5)], 8.0);
        let features = verify_features(&fx.schedule).unwrap();
        assert!(features.ok());
        let (log, _) = run(&fx, 0.01, 8.0);
        let mut log = log;
        if fx.report.condition15_holds {
            let r = check_compound_envelope(&log, &fx.report, true);
            assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
        } else {
            let r = check_compound_envelope(&log, &fx.report, true);
            assert_eq!(r.status, CheckStatus::NotApplicable, "{r:?}");
        }
        // Declaring the features violated always withdraws the claim.
        let r = check_compound_envelope(&log, &fx.report, false);
        assert_eq!(r.status, CheckStatus::NotApplicable);
        // So does an empty attack schedule.
        log.schedule = DoSSchedule::empty(fx.schedule.params, 8.0).unwrap();
        let r = check_compound_envelope(&log, &fx.report, true);
        assert_eq!(r.status, CheckStatus::NotApplicable);
    }

    #[test]
    fn compound_envelope_holds_under_feasible_dwell() {
        // τ_d = 4 puts 1/τ* = 0.25 + 0.02 inside the admissible dwell interval for
        // this plant, so the under-attack envelope is actually claimed and checked.
        let dos_params = DosParams { pi_f: 1.0, tau_f: 5.0, pi_d: 1.0, tau_d: 4.0 };
        let fx = scalar_fixture_with(-0.5, vec![(1.0, 0.5)], 8.0, dos_params);
        assert!(fx.report.condition15_holds, "fixture must satisfy the dwell condition");
        let features = verify_features(&fx.schedule).unwrap();
        assert!(features.ok());
        let (log, _) = run(&fx, 0.01, 8.0);
        let r = check_compound_envelope(&log, &fx.report, true);
        assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
        assert!(r.worst_margin.unwrap() > 0.0);
    }

    #[test]
    fn zeno_bound_matches_hand_value_and_gaps_respect_it() {
        let fx = scalar_fixture(-0.5, vec![], 6.0);
        let bounds = zeno_gap_bounds(&fx.report, &fx.trig);
        let b4 = fx.report.b_4[0].expect("square gain must give a drift constant");
        let expect = (2.0 / 0.1) * (1.0 + 0.1 * 0.01f64.sqrt() / (2.0 * b4)).ln();
        let got = bounds[0].unwrap();
        assert!((got - expect).abs() < 1e-12, "bound = {got}, expect = {expect}");
        let (log, _) = run(&fx, 0.001, 6.0);
        let r = check_zeno_gaps(&log, &fx.report, &fx.trig, 1);
        assert_eq!(r.status, CheckStatus::Holds, "{r:?}");
    }

    #[test]
    fn zeno_check_is_withdrawn_without_drift_constants() {
        let fx = scalar_fixture(-0.5, vec![], 6.0);
        let mut tampered = fx.report.clone();
        tampered.b_4 = vec![None];
        let (log, _) = run(&fx, 0.01, 6.0);
        let r = check_zeno_gaps(&log, &tampered, &fx.trig, 1);
        assert_eq!(r.status, CheckStatus::NotApplicable);
    }

    #[test]
    fn run_all_produces_all_seven_checks() {
        let fx = scalar_fixture(-0.5, vec![(1.0, 0.5)], 6.0);
        let x0 = DVector::from_vec(vec![1.0]);
        let mut log =
            simulate(&fx.sys, &fx.gains, &fx.trig, &fx.schedule, &x0, 0.01, 6.0).unwrap();
        let features = verify_features(&fx.schedule).unwrap();
        let results =
            run_all(&fx.sys, &fx.gains, &fx.report, &fx.trig, features.ok(), &mut log).unwrap();
        assert_eq!(results.len(), 7);
        assert_eq!(log.lyapunov.len(), log.times.len());
        for r in &results {
            assert_ne!(r.status, CheckStatus::Failed, "{r:?}");
        }
    }
}
