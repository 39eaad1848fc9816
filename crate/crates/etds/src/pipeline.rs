//! End-to-end orchestration: synthesize gains, simulate the closed loop, certify
//! every guarantee along the trajectory, and write the artifact set.
//!
//! One run is deterministic and single-threaded; parameter sweeps fan points out
//! across threads since every input is immutable. All numeric output is written
//! with 17 significant digits so files round-trip exactly.

use crate::certify::{run_all, zeno_gap_bounds, CertResult, CheckStatus};
use crate::dos::{verify_features, DoSSchedule};
use crate::error::{Error, Result};
use crate::model::build_hc;
use crate::scenario::Scenario;
use crate::sim::{simulate, TrajectoryLog};
use crate::synthesis::{build_validation_matrix, compute_rates, synthesize_gains, CertificateReport};
use crate::trigger::BroadcastDecision;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Ratio of final to initial state norm below which a run counts as converged.
pub const CONVERGENCE_RATIO: f64 = 1e-3;

/// Everything a finished run reports. Every field is always present; quantities
/// that can be absent (no event pairs, no gap bound) use −1 as the explicit
/// "not observed" marker so the JSON schema never changes shape.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario_id: String,
    pub qv_positive: bool,
    pub condition15_holds: bool,
    pub features_ok: bool,
    pub diverged: bool,
    pub checks: Vec<CertResult>,
    pub all_checks_pass: bool,
    /// Smallest observed jam-free inter-delivery gap over all agents; −1 when no
    /// agent delivered twice clear of every blocked window.
    pub min_observed_gap: f64,
    /// Smallest guaranteed inter-delivery gap over agents with a bound; −1 when
    /// no agent has one.
    pub min_guaranteed_gap: f64,
    pub broadcasts_per_agent: Vec<usize>,
    pub blocked_attempts_per_agent: Vec<usize>,
    pub initial_state_norm: f64,
    pub final_state_norm: f64,
    pub converged: bool,
    pub wall_time_s: f64,
    pub report: CertificateReport,
    pub schedule: DoSSchedule,
}

/// A run's full in-memory artifact set.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub log: TrajectoryLog,
}

/// Smallest gap between an agent's consecutive deliveries whose whole interval is
/// clear of every blocked window.
pub fn min_jam_free_gap(log: &TrajectoryLog, t_dos: f64, n_agents: usize) -> Option<f64> {
    let windows = log.schedule.blocked_windows(t_dos);
    let clear = |a: f64, b: f64| windows.iter().all(|&(s, e)| b < s || a >= e);
    let mut min_gap: Option<f64> = None;
    for i in 0..n_agents {
        let deliveries: Vec<f64> = log
            .events
            .iter()
            .filter(|e| e.agent == i && e.kind == BroadcastDecision::Broadcast)
            .map(|e| e.time)
            .collect();
        for pair in deliveries.windows(2) {
            if clear(pair[0], pair[1]) {
                let gap = pair[1] - pair[0];
                min_gap = Some(min_gap.map_or(gap, |m: f64| m.min(gap)));
            }
        }
    }
    min_gap
}

/// Run one scenario end to end: synthesis, certificate constants, simulation, and
/// every trajectory check.
pub fn run_pipeline(sc: &Scenario) -> Result<RunOutput> {
    let start = std::time::Instant::now();
    let (hc, mu_c1) = build_hc(&sc.sys.control_graph, &sc.sys.pinning)?;
    let gains = synthesize_gains(&sc.sys, &sc.weights, mu_c1)?;
    let (qv_raw, _) = build_validation_matrix(&sc.sys, &sc.weights, &gains, &hc, mu_c1, sc.qv_form)?;
    let report = compute_rates(&sc.sys, &sc.weights, &gains, &qv_raw, &sc.trigger, &sc.dos_params, &sc.x0)?;
    let schedule = sc.schedule()?;
    let features = verify_features(&schedule)?;
    let mut log = simulate(&sc.sys, &gains, &sc.trigger, &schedule, &sc.x0, sc.dt, sc.t_end)?;
    let checks = run_all(&sc.sys, &gains, &report, &sc.trigger, features.ok(), &mut log)?;

    let n = sc.sys.n_agents();
    let mut broadcasts = vec![0usize; n];
    let mut blocked = vec![0usize; n];
    for e in &log.events {
        match e.kind {
            BroadcastDecision::Broadcast => broadcasts[e.agent] += 1,
            BroadcastDecision::BlockedAttempt => blocked[e.agent] += 1,
            BroadcastDecision::Hold => {}
        }
    }
    let initial_state_norm = sc.x0.norm();
    let final_state_norm = log.states.last().map(|x| x.norm()).unwrap_or(f64::NAN);
    let all_checks_pass = checks.iter().all(|c| c.status != CheckStatus::Failed);
    let min_guaranteed_gap = zeno_gap_bounds(&report, &sc.trigger)
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min);

    let summary = RunSummary {
        scenario_id: sc.id.clone(),
        qv_positive: report.qv_positive,
        condition15_holds: report.condition15_holds,
        features_ok: features.ok(),
        diverged: log.diverged,
        all_checks_pass,
        min_observed_gap: min_jam_free_gap(&log, report.t_dos, n).unwrap_or(-1.0),
        min_guaranteed_gap: if min_guaranteed_gap.is_finite() { min_guaranteed_gap } else { -1.0 },
        broadcasts_per_agent: broadcasts,
        blocked_attempts_per_agent: blocked,
        initial_state_norm,
        final_state_norm,
        converged: final_state_norm <= CONVERGENCE_RATIO * initial_state_norm,
        wall_time_s: start.elapsed().as_secs_f64(),
        checks,
        report,
        schedule: log.schedule.clone(),
    };
    Ok(RunOutput { summary, log })
}

/// Exit code for a failed pipeline: 2 for anything wrong with the inputs, 3 for a
/// numerical fault inside an accepted problem.
pub fn exit_code_for_error(e: &Error) -> i32 {
    match e {
        Error::NumericalFault(_)
        | Error::ConvergenceFailure(_)
        | Error::NotStable(_)
        | Error::Diverged(_)
        | Error::BoundUnavailable(_) => 3,
        _ => 2,
    }
}

/// Exit code for a finished run: 0 when every check holds or is inapplicable,
/// 1 when any check failed.
pub fn exit_code_for_summary(summary: &RunSummary) -> i32 {
    if summary.all_checks_pass { 0 } else { 1 }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render the trajectory as CSV: time, stacked states, stacked controls, V̄.
pub fn trajectory_csv(log: &TrajectoryLog, n_agents: usize, n_x: usize, n_u: usize) -> String {
    let mut out = String::new();
    out.push_str("time");
    for i in 1..=n_agents {
        for j in 1..=n_x {
            let _ = write!(out, ",x_{i}_{j}");
        }
    }
    for i in 1..=n_agents {
        for j in 1..=n_u {
            let _ = write!(out, ",u_{i}_{j}");
        }
    }
    out.push_str(",V\n");
    for k in 0..log.times.len() {
        out.push_str(&fmt_f64(log.times[k]));
        for v in log.states[k].iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        for v in log.controls[k].iter() {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push(',');
        out.push_str(&fmt_f64(log.lyapunov.get(k).copied().unwrap_or(f64::NAN)));
        out.push('\n');
    }
    out
}

/// Render the event log as one JSON object per line.
pub fn events_jsonl(log: &TrajectoryLog) -> Result<String> {
    let mut out = String::new();
    for e in &log.events {
        let line = serde_json::to_string(e)
            .map_err(|err| Error::Parse(format!("serializing event: {err}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Write trajectory.csv, events.jsonl, and summary.json into `dir`.
pub fn write_outputs(out: &RunOutput, sc: &Scenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (n, n_x, n_u) = (sc.sys.n_agents(), sc.sys.dims.n_x, sc.sys.dims.n_u);
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(&out.log, n, n_x, n_u))?;
    std::fs::write(dir.join("events.jsonl"), events_jsonl(&out.log)?)?;
    let summary = serde_json::to_string_pretty(&out.summary)
        .map_err(|e| Error::Parse(format!("serializing summary: {e}")))?;
    std::fs::write(dir.join("summary.json"), summary)?;
    Ok(())
}

/// A finite parameter grid: each key is a scenario field path, each value the list
/// of settings to try; points are the cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Keys in deterministic (sorted) order with ascending values.
    pub axes: Vec<(String, Vec<f64>)>,
}

/// Scenario fields a sweep may vary.
pub const SWEEP_KEYS: &[&str] = &[
    "sim.dt",
    "sim.t_end",
    "trigger.sigma",
    "trigger.t_dos",
    "trigger.kappa_1",
    "trigger.kappa_2",
    "design.a_e",
    "design.a_f",
    "dos.pi_f",
    "dos.tau_f",
    "dos.pi_d",
    "dos.tau_d",
];

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    grid: BTreeMap<String, Vec<f64>>,
}

/// Load a sweep grid file:
/// ```toml
/// [grid]
/// "dos.tau_d" = [4.0, 8.0]
/// "dos.tau_f" = [2.0, 5.0]
/// ```
pub fn load_grid(path: impl AsRef<Path>) -> Result<SweepGrid> {
    let src = std::fs::read_to_string(path.as_ref())?;
    grid_from_toml_str(&src)
}

/// Parse a sweep grid document.
pub fn grid_from_toml_str(src: &str) -> Result<SweepGrid> {
    let raw: RawGrid = toml::from_str(src).map_err(|e| Error::Parse(format!("grid file: {e}")))?;
    let mut axes = Vec::with_capacity(raw.grid.len());
    for (key, mut values) in raw.grid {
        if !SWEEP_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse(format!(
                "unsupported sweep key {key:?}; supported keys: {}",
                SWEEP_KEYS.join(", ")
            )));
        }
        if values.is_empty() {
            return Err(Error::Parse(format!("sweep key {key:?} has no values")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("sweep key {key:?} has a non-finite value")));
        }
        values.sort_by(f64::total_cmp);
        axes.push((key, values));
    }
    if axes.is_empty() {
        return Err(Error::Parse("grid must define at least one axis".into()));
    }
    Ok(SweepGrid { axes })
}

impl SweepGrid {
    /// All grid points in row-major (sorted) order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for (_, values) in &self.axes {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for &v in values {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}

/// Apply one sweep setting to a copy of the scenario.
pub fn apply_override(sc: &Scenario, key: &str, value: f64) -> Result<Scenario> {
    let mut sc = sc.clone();
    match key {
        "sim.dt" => sc.dt = value,
        "sim.t_end" => sc.t_end = value,
        "trigger.sigma" => sc.trigger.sigma = value,
        "trigger.t_dos" => sc.trigger.t_dos = value,
        "trigger.kappa_1" => sc.trigger.kappa_1.iter_mut().for_each(|k| *k = value),
        "trigger.kappa_2" => sc.trigger.kappa_2.iter_mut().for_each(|k| *k = value),
        "design.a_e" => sc.weights.a_e = value,
        "design.a_f" => sc.weights.a_f = value,
        "dos.pi_f" => sc.dos_params.pi_f = value,
        "dos.tau_f" => sc.dos_params.tau_f = value,
        "dos.pi_d" => sc.dos_params.pi_d = value,
        "dos.tau_d" => sc.dos_params.tau_d = value,
        other => {
            return Err(Error::Parse(format!(
                "unsupported sweep key {other:?}; supported keys: {}",
                SWEEP_KEYS.join(", ")
            )))
        }
    }
    Ok(sc)
}

/// One sweep point's outcome in the aggregate table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub coords: Vec<f64>,
    /// 0 all checks pass/N-A, 1 a check failed, 2 input error, 3 numerical fault.
    pub status: i32,
    pub qv_positive: bool,
    pub condition15_holds: bool,
    pub features_ok: bool,
    pub all_checks_pass: bool,
    pub converged: bool,
    pub diverged: bool,
    pub final_state_norm: f64,
}

/// Run every grid point (in parallel), write one summary per point plus an
/// aggregate CSV sorted by grid coordinates. Point failures become rows with a
/// nonzero status instead of aborting the sweep.
pub fn run_sweep(sc: &Scenario, grid: &SweepGrid, out_dir: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let points = grid.points();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(idx, coords)| {
            let point_dir = out_dir.join(format!("point_{idx:04}"));
            let outcome = (|| -> Result<RunOutput> {
                let mut point_sc = sc.clone();
                for ((key, _), &value) in grid.axes.iter().zip(coords.iter()) {
                    point_sc = apply_override(&point_sc, key, value)?;
                }
                let out = run_pipeline(&point_sc)?;
                std::fs::create_dir_all(&point_dir)?;
                let summary = serde_json::to_string_pretty(&out.summary)
                    .map_err(|e| Error::Parse(format!("serializing summary: {e}")))?;
                std::fs::write(point_dir.join("summary.json"), summary)?;
                Ok(out)
            })();
            match outcome {
                Ok(out) => SweepRow {
                    coords: coords.clone(),
                    status: exit_code_for_summary(&out.summary),
                    qv_positive: out.summary.qv_positive,
                    condition15_holds: out.summary.condition15_holds,
                    features_ok: out.summary.features_ok,
                    all_checks_pass: out.summary.all_checks_pass,
                    converged: out.summary.converged,
                    diverged: out.summary.diverged,
                    final_state_norm: out.summary.final_state_norm,
                },
                Err(e) => {
                    let _ = std::fs::create_dir_all(&point_dir);
                    let _ = std::fs::write(point_dir.join("error.txt"), e.to_string());
                    SweepRow {
                        coords: coords.clone(),
                        status: exit_code_for_error(&e),
                        qv_positive: false,
                        condition15_holds: false,
                        features_ok: false,
                        all_checks_pass: false,
                        converged: false,
                        diverged: false,
                        final_state_norm: f64::NAN,
                    }
                }
            }
        })
        .collect();

    // points() already enumerates coordinates in sorted row-major order.
    let mut csv = String::new();
    for (key, _) in &grid.axes {
        let _ = write!(csv, "{key},");
    }
    csv.push_str(
        "status,qv_positive,condition15_holds,features_ok,all_checks_pass,converged,diverged,final_state_norm\n",
    );
    for row in &rows {
        for c in &row.coords {
            let _ = write!(csv, "{},", fmt_f64(*c));
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.status,
            row.qv_positive,
            row.condition15_holds,
            row.features_ok,
            row.all_checks_pass,
            row.converged,
            row.diverged,
            fmt_f64(row.final_state_norm)
        );
    }
    std::fs::write(out_dir.join("aggregate.csv"), csv)?;
    Ok(rows)
}
