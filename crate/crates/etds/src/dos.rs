//! Denial-of-service attack schedules, their frequency/duration features and measures.
//!
//! An attack n occupies the half-open window H_n = {h_n} ∪ [h_n, h_n + τ_n); τ_n = 0
//! degenerates to an instantaneous pulse. Feature 1 limits how often attacks start,
//! Feature 2 limits the accumulated attack time, both as affine envelopes.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Affine feature envelopes declared for a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosParams {
    /// Chattering allowance of the frequency feature: n(τ,t) ≤ pi_f + (t−τ)/tau_f.
    pub pi_f: f64,
    /// Inverse attack-frequency slope (time per attack).
    pub tau_f: f64,
    /// Offset of the duration feature: |Ξ(τ,t)| ≤ pi_d + (t−τ)/tau_d.
    pub pi_d: f64,
    /// Duty-cycle divisor; must exceed 1 so attacks cannot cover all of time.
    pub tau_d: f64,
}

impl DosParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi_f >= 0.0 && self.pi_f.is_finite()) || !(self.pi_d >= 0.0 && self.pi_d.is_finite()) {
            return Err(Error::Validation("pi_f and pi_d must be finite and nonnegative".into()));
        }
        if !(self.tau_f > 0.0 && self.tau_f.is_finite()) {
            return Err(Error::Validation("tau_f must be positive".into()));
        }
        if !(self.tau_d > 1.0 && self.tau_d.is_finite()) {
            return Err(Error::Validation(format!(
                "tau_d must exceed 1 (got {}); otherwise attacks may cover all of time",
                self.tau_d
            )));
        }
        Ok(())
    }
}

/// A concrete attack schedule on [0, horizon]: sorted, pairwise-disjoint windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoSSchedule {
    pub params: DosParams,
    /// (onset h_n, duration τ_n ≥ 0), strictly increasing onsets, disjoint windows.
    pub attacks: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl DoSSchedule {
    pub fn new(params: DosParams, attacks: Vec<(f64, f64)>, horizon: f64) -> Result<Self> {
        params.validate()?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Validation("horizon must be positive".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        let mut prev_onset = f64::NEG_INFINITY;
        for &(h, tau) in &attacks {
            if !h.is_finite() || !tau.is_finite() || h < 0.0 || tau < 0.0 {
                return Err(Error::InvalidWindow(format!(
                    "attack ({h}, {tau}) must have finite nonnegative onset and duration"
                )));
            }
            if h <= prev_onset {
                return Err(Error::InvalidWindow("attack onsets must be strictly increasing".into()));
            }
            if h < prev_end {
                return Err(Error::InvalidWindow(format!(
                    "attack at {h} overlaps the previous window ending at {prev_end}"
                )));
            }
            if h > horizon {
                return Err(Error::InvalidWindow(format!(
                    "attack onset {h} lies beyond the horizon {horizon}"
                )));
            }
            prev_onset = h;
            prev_end = h + tau;
        }
        Ok(Self { params, attacks, horizon })
    }

    /// Empty schedule (no attacks) with the given feature envelope.
    pub fn empty(params: DosParams, horizon: f64) -> Result<Self> {
        Self::new(params, Vec::new(), horizon)
    }

    /// True when communication is jammed at time `t`. Pulses jam exactly their onset.
    pub fn is_active(&self, t: f64) -> bool {
        self.attacks
            .iter()
            .any(|&(h, tau)| t == h || (t >= h && t < h + tau))
    }

    /// Accumulated attack time |Ξ(τ,t)|, its complement |Θ(τ,t)| and the number of
    /// onsets inside [τ, t].
    pub fn xi_theta(&self, tau: f64, t: f64) -> Result<(f64, f64, usize)> {
        if !(tau.is_finite() && t.is_finite()) || tau < 0.0 || t < tau {
            return Err(Error::InvalidWindow(format!(
                "window ({tau}, {t}) must satisfy 0 <= tau <= t"
            )));
        }
        let mut xi = 0.0;
        let mut n = 0usize;
        for &(h, dur) in &self.attacks {
            if h >= tau && h <= t {
                n += 1;
            }
            let lo = h.max(tau);
            let hi = (h + dur).min(t);
            if hi > lo {
                xi += hi - lo;
            }
        }
        let theta = (t - tau) - xi;
        Ok((xi, theta, n))
    }

    /// Extended attack measure |Ξ̄(τ,t)|: every window grows a trailing `t_dos`
    /// reconnection tail, overlaps are merged, and the union is clipped to [τ, t].
    pub fn xi_bar(&self, t_dos: f64, tau: f64, t: f64) -> Result<f64> {
        if !(t_dos >= 0.0) {
            return Err(Error::Validation("t_dos must be nonnegative".into()));
        }
        if !(tau.is_finite() && t.is_finite()) || tau < 0.0 || t < tau {
            return Err(Error::InvalidWindow(format!(
                "window ({tau}, {t}) must satisfy 0 <= tau <= t"
            )));
        }
        let mut total = 0.0;
        let mut covered_to = f64::NEG_INFINITY;
        for &(h, dur) in &self.attacks {
            let start = h.max(covered_to);
            let end = h + dur + t_dos;
            if end > start {
                let lo = start.max(tau);
                let hi = end.min(t);
                if hi > lo {
                    total += hi - lo;
                }
                covered_to = covered_to.max(end);
            }
        }
        Ok(total)
    }

    /// Blocked windows [h_n, h_n + τ_n + t_dos) during which a fresh broadcast may be
    /// delayed: the attack itself plus the periodic-retry tail.
    pub fn blocked_windows(&self, t_dos: f64) -> Vec<(f64, f64)> {
        self.attacks
            .iter()
            .map(|&(h, dur)| (h, h + dur + t_dos))
            .collect()
    }

    /// Critical breakpoints where the feature envelopes can be tight.
    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0, self.horizon];
        for &(h, dur) in &self.attacks {
            pts.push(h);
            pts.push((h + dur).min(self.horizon));
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }
}

/// Result of checking both affine feature envelopes over all critical windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCheck {
    pub freq_ok: bool,
    pub dur_ok: bool,
    /// Smallest slack of Feature 1: min over windows of pi_f + (t−τ)/tau_f − n(τ,t).
    pub worst_freq_margin: f64,
    /// Smallest slack of Feature 2: min over windows of pi_d + (t−τ)/tau_d − |Ξ(τ,t)|.
    pub worst_dur_margin: f64,
}

impl FeatureCheck {
    pub fn ok(&self) -> bool {
        self.freq_ok && self.dur_ok
    }
}

/// Verify both features at every pair of critical breakpoints. Because n(τ,·) and
/// |Ξ(τ,·)| are piecewise linear with slopes only changing at window edges, checking
/// breakpoint pairs is exhaustive.
pub fn verify_features(schedule: &DoSSchedule) -> Result<FeatureCheck> {
    let pts = schedule.breakpoints();
    let p = schedule.params;
    let mut worst_freq = f64::INFINITY;
    let mut worst_dur = f64::INFINITY;
    for (a, &tau) in pts.iter().enumerate() {
        for &t in &pts[a..] {
            let (xi, _, n) = schedule.xi_theta(tau, t)?;
            let freq_margin = p.pi_f + (t - tau) / p.tau_f - n as f64;
            let dur_margin = p.pi_d + (t - tau) / p.tau_d - xi;
            worst_freq = worst_freq.min(freq_margin);
            worst_dur = worst_dur.min(dur_margin);
        }
    }
    Ok(FeatureCheck {
        freq_ok: worst_freq >= 0.0,
        dur_ok: worst_dur >= 0.0,
        worst_freq_margin: worst_freq,
        worst_dur_margin: worst_dur,
    })
}

/// Draw a feature-compliant schedule from a seeded stream. Candidate attacks are
/// proposed left to right and greedily rejected (duration halved, then skipped)
/// whenever they would break either feature envelope. `intensity` in [0, 1] scales
/// how much of the allowed budget the generator tries to use; 0 yields no attacks.
pub fn generate_schedule(
    params: DosParams,
    horizon: f64,
    seed: u64,
    intensity: f64,
) -> Result<DoSSchedule> {
    params.validate()?;
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::Validation(format!(
            "intensity must lie in [0, 1] (got {intensity})"
        )));
    }
    let mut schedule = DoSSchedule::empty(params, horizon)?;
    if intensity == 0.0 {
        return Ok(schedule);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Mean spacing aims at `intensity` of the frequency budget; durations aim at
    // `intensity` of the duty-cycle budget per window.
    let mean_gap = params.tau_f / intensity;
    let mut cursor = rng.gen_range(0.0..mean_gap);
    while cursor < horizon {
        let onset = cursor;
        let gap_to_next = mean_gap * rng.gen_range(0.5..1.5);
        let mut duration = (gap_to_next / params.tau_d) * intensity * rng.gen_range(0.25..1.0);
        let mut placed = false;
        for _ in 0..6 {
            let mut attacks = schedule.attacks.clone();
            attacks.push((onset, duration));
            if let Ok(candidate) = DoSSchedule::new(params, attacks, horizon) {
                if verify_features(&candidate)?.ok() {
                    schedule = candidate;
                    placed = true;
                    break;
                }
            }
            duration *= 0.5;
        }
        let _ = placed;
        cursor = onset + gap_to_next;
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DosParams {
        DosParams { pi_f: 2.0, tau_f: 1.0, pi_d: 1.0, tau_d: 2.0 }
    }

    fn single(h: f64, dur: f64) -> DoSSchedule {
        DoSSchedule::new(params(), vec![(h, dur)], 10.0).unwrap()
    }

    #[test]
    fn is_active_half_open_and_pulse() {
        let s = single(1.0, 0.5);
        assert!(s.is_active(1.0));
        assert!(s.is_active(1.25));
        assert!(!s.is_active(1.5));
        let pulse = single(2.0, 0.0);
        assert!(pulse.is_active(2.0));
        assert!(!pulse.is_active(2.0 - 1e-9));
        assert!(!pulse.is_active(2.0 + 1e-9));
    }

    #[test]
    fn xi_theta_basic_windows() {
        let s = single(1.0, 0.5);
        let (xi, theta, n) = s.xi_theta(0.0, 2.0).unwrap();
        assert_eq!((xi, theta, n), (0.5, 1.5, 1));
        // Window starting inside the attack: the onset is no longer counted.
        let (xi, theta, n) = s.xi_theta(1.25, 2.0).unwrap();
        assert_eq!((xi, theta, n), (0.25, 0.5, 0));
    }

    #[test]
    fn xi_theta_rejects_reversed_window() {
        let s = single(1.0, 0.5);
        assert!(matches!(s.xi_theta(2.0, 1.0), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn xi_bar_extends_by_t_dos() {
        let s = single(1.0, 0.5);
        let v = s.xi_bar(0.1, 0.0, 2.0).unwrap();
        assert!((v - 0.6).abs() < 1e-12, "xi_bar = {v}");
    }

    #[test]
    fn xi_bar_merges_overlapping_tails() {
        // Tail of the first window runs into the second window.
        let s = DoSSchedule::new(params(), vec![(1.0, 0.5), (1.6, 0.2)], 10.0).unwrap();
        let v = s.xi_bar(0.3, 0.0, 10.0).unwrap();
        // Union of [1.0, 1.8) and [1.6, 2.1) is [1.0, 2.1).
        assert!((v - 1.1).abs() < 1e-12, "xi_bar = {v}");
        // And never exceeds the additive bound |Ξ| + n · t_dos.
        let (xi, _, n) = s.xi_theta(0.0, 10.0).unwrap();
        assert!(v <= xi + n as f64 * 0.3 + 1e-12);
    }

    #[test]
    fn verify_features_flags_duration_violation() {
        let p = DosParams { pi_f: 2.0, tau_f: 1.0, pi_d: 0.0, tau_d: 2.0 };
        let s = DoSSchedule::new(p, vec![(0.0, 1.0), (1.5, 1.0)], 2.5).unwrap();
        let check = verify_features(&s).unwrap();
        assert!(check.freq_ok);
        assert!(!check.dur_ok);
        // |Ξ(0, 2.5)| = 2 against the envelope 0 + 2.5/2 = 1.25.
        assert!((check.worst_dur_margin - (1.25 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn verify_features_accepts_compliant_schedule() {
        let s = DoSSchedule::new(params(), vec![(1.0, 0.5), (4.0, 1.0)], 10.0).unwrap();
        let check = verify_features(&s).unwrap();
        assert!(check.ok(), "{check:?}");
        assert!(check.worst_freq_margin >= 0.0);
        assert!(check.worst_dur_margin >= 0.0);
    }

    #[test]
    fn schedule_rejects_overlap_and_disorder() {
        assert!(DoSSchedule::new(params(), vec![(1.0, 1.0), (1.5, 0.2)], 10.0).is_err());
        assert!(DoSSchedule::new(params(), vec![(2.0, 0.1), (1.0, 0.1)], 10.0).is_err());
        assert!(DoSSchedule::new(params(), vec![(11.0, 0.1)], 10.0).is_err());
        // Touching half-open windows are disjoint and fine.
        assert!(DoSSchedule::new(params(), vec![(1.0, 0.5), (1.5, 0.2)], 10.0).is_ok());
    }

    #[test]
    fn tau_d_at_most_one_is_rejected() {
        let p = DosParams { pi_f: 1.0, tau_f: 1.0, pi_d: 0.0, tau_d: 1.0 };
        assert!(matches!(p.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn generated_schedules_are_deterministic_and_compliant() {
        let p = params();
        for seed in 0..100u64 {
            let s = generate_schedule(p, 20.0, seed, 0.8).unwrap();
            let check = verify_features(&s).unwrap();
            assert!(check.ok(), "seed {seed}: {check:?}");
            let again = generate_schedule(p, 20.0, seed, 0.8).unwrap();
            assert_eq!(s, again, "seed {seed} not reproducible");
        }
    }

    #[test]
    fn zero_intensity_generates_nothing() {
        let s = generate_schedule(params(), 20.0, 7, 0.0).unwrap();
        assert!(s.attacks.is_empty());
    }

    #[test]
    fn xi_matches_grid_oracle() {
        let s = DoSSchedule::new(params(), vec![(0.7, 0.4), (3.0, 1.2), (6.5, 0.0)], 10.0).unwrap();
        let (tau, t) = (0.25, 8.75);
        let (xi, theta, _) = s.xi_theta(tau, t).unwrap();
        // Independent Riemann-sum oracle on a fine grid.
        let step = 1e-4;
        let mut acc = 0.0;
        let mut x = tau;
        while x < t {
            let mid = x + step / 2.0;
            if s.attacks.iter().any(|&(h, d)| mid >= h && mid < h + d) {
                acc += step;
            }
            x += step;
        }
        assert!((xi - acc).abs() < 2e-4, "xi = {xi}, oracle = {acc}");
        assert!((xi + theta - (t - tau)).abs() < 1e-12);
    }
}
