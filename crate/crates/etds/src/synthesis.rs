//! Control design: per-agent Riccati synthesis, the stacked validation matrix and
//! every rate/envelope constant the certifier consumes.
//!
//! Each agent solves the continuous algebraic Riccati equation
//!   A_iᵀP_i + P_iA_i + W_x,i − μ_c1² P_iB_u,iW_v,i⁻¹B_u,iᵀP_i = 0
//! by Kleinman–Newton iteration over direct Lyapunov solves, and takes the gain
//! K_i = −μ_c1 W_v,i⁻¹ B_u,iᵀ P_i.

use crate::error::{Error, Result};
use crate::linalg::{
    block_diag, frob_norm, invert, is_hurwitz, kron, require_positive_definite, solve_linear,
    spectral_norm, symmetric_eig_range, symmetrize,
};
use crate::model::MasSystem;
use crate::trigger::TriggerParams;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Frobenius tolerance for Lyapunov solves.
pub const LYAPUNOV_TOL: f64 = 1e-10;
/// Frobenius tolerance for the Riccati residual.
pub const CARE_TOL: f64 = 1e-9;
/// Iteration cap for Kleinman–Newton.
pub const CARE_MAX_ITERS: usize = 200;
/// λ_min threshold for positive-definiteness checks.
pub const PD_TOL: f64 = 1e-10;

/// Per-agent quadratic design weights plus the two Young's-inequality splitters.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignWeights {
    pub w_x: Vec<DMatrix<f64>>,
    pub w_v: Vec<DMatrix<f64>>,
    /// Splitter a_e > 0 trading the broadcast-error cross term.
    pub a_e: f64,
    /// Splitter a_f > 0 trading the nonlinearity cross term.
    pub a_f: f64,
}

impl DesignWeights {
    pub fn validate(&self, sys: &MasSystem) -> Result<()> {
        let n = sys.n_agents();
        if self.w_x.len() != n || self.w_v.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "need one W_x and W_v per agent ({n})"
            )));
        }
        for i in 0..n {
            if self.w_x[i].shape() != (sys.dims.n_x, sys.dims.n_x) {
                return Err(Error::DimensionMismatch(format!("W_x[{i}] has wrong shape")));
            }
            if self.w_v[i].shape() != (sys.dims.n_u, sys.dims.n_u) {
                return Err(Error::DimensionMismatch(format!("W_v[{i}] has wrong shape")));
            }
            require_positive_definite(&self.w_x[i], PD_TOL, &format!("W_x[{i}]"))?;
            require_positive_definite(&self.w_v[i], PD_TOL, &format!("W_v[{i}]"))?;
        }
        if !(self.a_e > 0.0 && self.a_e.is_finite()) || !(self.a_f > 0.0 && self.a_f.is_finite()) {
            return Err(Error::InvalidWeights("a_e and a_f must be positive".into()));
        }
        Ok(())
    }
}

/// Solve AᵀX + XA + Q = 0 for symmetric X by the direct n²-dimensional linear system.
/// Requires A Hurwitz; the unique solution is verified to residual ≤ 1e-10.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Lyapunov solve needs square A and matching Q".into()));
    }
    if !is_hurwitz(a, 0.0) {
        return Err(Error::NotStable("Lyapunov equation requires a Hurwitz coefficient matrix".into()));
    }
    // vec(AᵀX) + vec(XA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(X) in column-major vectorization.
    let id = DMatrix::identity(n, n);
    let at = a.transpose();
    let coeff = kron(&id, &at) + kron(&at, &id);
    let rhs = DVector::from_column_slice((-q).as_slice());
    let x_vec = solve_linear(coeff, rhs)?;
    let x = symmetrize(&DMatrix::from_column_slice(n, n, x_vec.as_slice()));
    let residual = frob_norm(&(a.transpose() * &x + &x * a + q));
    if residual > LYAPUNOV_TOL * (1.0 + frob_norm(q)) {
        return Err(Error::NumericalFault(format!(
            "Lyapunov residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(x)
}

/// Riccati residual ‖AᵀP + PA + W_x − μ² P B W_v⁻¹ Bᵀ P‖_F.
pub fn care_residual(
    a: &DMatrix<f64>,
    b_u: &DMatrix<f64>,
    w_x: &DMatrix<f64>,
    w_v_inv: &DMatrix<f64>,
    mu_c1: f64,
    p: &DMatrix<f64>,
) -> f64 {
    let gain_term = p * b_u * w_v_inv * b_u.transpose() * p * (mu_c1 * mu_c1);
    frob_norm(&(a.transpose() * p + p * a + w_x - gain_term))
}

/// Find K₀ with A − μB K₀ Hurwitz. Tries K₀ = 0, then the Gramian-based shift
/// K₀ = Bᵀ Z⁻¹/μ with (A+βI)Z + Z(A+βI)ᵀ = 2BBᵀ, then a geometric ladder of scalar
/// multiples of Bᵀ shifting the dynamics by γBBᵀ.
fn initial_stabilizing_gain(a: &DMatrix<f64>, b_u: &DMatrix<f64>, mu_c1: f64) -> Result<DMatrix<f64>> {
    let (n, m) = (a.nrows(), b_u.ncols());
    if is_hurwitz(a, 0.0) {
        return Ok(DMatrix::zeros(m, n));
    }
    let beta = frob_norm(a) + 0.5;
    let shifted = -(a.transpose() + DMatrix::identity(n, n) * beta);
    let bb2 = b_u * b_u.transpose() * 2.0;
    if let Ok(z) = solve_lyapunov(&shifted, &bb2) {
        if let Some(z_inv) = z.clone().try_inverse() {
            let k0 = (b_u.transpose() * &z_inv) / mu_c1;
            if is_hurwitz(&(a - b_u * &k0 * mu_c1), 0.0) {
                return Ok(k0);
            }
        }
    }
    let mut gamma = 1e-6;
    while gamma <= 1e8 {
        let k0 = b_u.transpose() * (gamma / mu_c1);
        if is_hurwitz(&(a - b_u * &k0 * mu_c1), 0.0) {
            return Ok(k0);
        }
        gamma *= 10.0;
    }
    Err(Error::NotStabilizable(
        "no stabilizing initial gain found; the pair (A, B_u) may not be stabilizable".into(),
    ))
}

/// Solve the design Riccati equation by Kleinman–Newton. Returns the stabilizing
/// solution together with its residual and the iteration count.
pub fn solve_care(
    a: &DMatrix<f64>,
    b_u: &DMatrix<f64>,
    w_x: &DMatrix<f64>,
    w_v: &DMatrix<f64>,
    mu_c1: f64,
) -> Result<(DMatrix<f64>, f64, usize)> {
    let n = a.nrows();
    if b_u.nrows() != n {
        return Err(Error::DimensionMismatch("A and B_u row counts differ".into()));
    }
    require_positive_definite(w_x, PD_TOL, "W_x")?;
    require_positive_definite(w_v, PD_TOL, "W_v")?;
    if !(mu_c1 > 0.0) {
        return Err(Error::Validation(format!("mu_c1 must be positive (got {mu_c1})")));
    }
    let w_v_inv = invert(w_v, "W_v")?;
    let mut k = initial_stabilizing_gain(a, b_u, mu_c1)?;
    let mut best_residual = f64::INFINITY;
    let mut stalled = 0usize;
    for iter in 1..=CARE_MAX_ITERS {
        let a_cl = a - b_u * &k * mu_c1;
        if !is_hurwitz(&a_cl, 0.0) {
            return Err(Error::ConvergenceFailure(format!(
                "closed loop left the stable region at iteration {iter}"
            )));
        }
        let q = w_x + k.transpose() * w_v * &k;
        let p = solve_lyapunov(&a_cl, &q)?;
        let residual = care_residual(a, b_u, w_x, &w_v_inv, mu_c1, &p);
        if residual <= CARE_TOL {
            let (p_min, _) = symmetric_eig_range(&p);
            if p_min <= PD_TOL {
                return Err(Error::NumericalFault(format!(
                    "Riccati solution is not positive definite (lambda_min = {p_min:.3e})"
                )));
            }
            return Ok((p, residual, iter));
        }
        if residual >= best_residual * 0.999999 {
            stalled += 1;
            if stalled >= 8 {
                return Err(Error::ConvergenceFailure(format!(
                    "Riccati residual stalled at {residual:.3e} after {iter} iterations"
                )));
            }
        } else {
            stalled = 0;
        }
        best_residual = best_residual.min(residual);
        k = &w_v_inv * b_u.transpose() * &p * mu_c1;
    }
    Err(Error::ConvergenceFailure(format!(
        "Riccati iteration exceeded {CARE_MAX_ITERS} iterations (best residual {best_residual:.3e})"
    )))
}

/// Broadcast gain K_i = −μ_c1 W_v,i⁻¹ B_u,iᵀ P_i.
pub fn compute_gain(
    p: &DMatrix<f64>,
    b_u: &DMatrix<f64>,
    w_v: &DMatrix<f64>,
    mu_c1: f64,
) -> Result<DMatrix<f64>> {
    let w_v_inv = invert(w_v, "W_v")?;
    Ok(-(&w_v_inv * b_u.transpose() * p) * mu_c1)
}

/// Synthesis output: per-agent certificates P_i, gains K_i and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub p: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub care_residual: Vec<f64>,
    pub care_iterations: Vec<usize>,
    pub warnings: Vec<String>,
}

impl GainSet {
    pub fn p_bar(&self) -> DMatrix<f64> {
        block_diag(&self.p)
    }

    pub fn k_bar(&self) -> DMatrix<f64> {
        block_diag(&self.k)
    }

    /// min_i λ_min(P_i) and max_i λ_max(P_i) — the Rayleigh bounds of P̄.
    pub fn p_eig_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.p {
            let (l, h) = symmetric_eig_range(p);
            lo = lo.min(l);
            hi = hi.max(h);
        }
        (lo, hi)
    }
}

/// Run the per-agent Riccati design for the whole system and verify the two
/// first-order design identities the certificate relies on.
pub fn synthesize_gains(sys: &MasSystem, weights: &DesignWeights, mu_c1: f64) -> Result<GainSet> {
    weights.validate(sys)?;
    let n = sys.n_agents();
    let mut p = Vec::with_capacity(n);
    let mut k = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut iters = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for i in 0..n {
        let ag = &sys.agents[i];
        if ag.b_u.iter().all(|&v| v == 0.0) {
            warnings.push(format!("agent {i}: zero input map; relying on open-loop stability"));
        }
        let (p_i, res, it) = solve_care(&ag.a, &ag.b_u, &weights.w_x[i], &weights.w_v[i], mu_c1)
            .map_err(|e| match e {
                Error::NotStabilizable(msg) => Error::NotStabilizable(format!("agent {i}: {msg}")),
                other => other,
            })?;
        let k_i = compute_gain(&p_i, &ag.b_u, &weights.w_v[i], mu_c1)?;
        p.push(p_i);
        k.push(k_i);
        residuals.push(res);
        iters.push(it);
    }
    let gains = GainSet { p, k, care_residual: residuals, care_iterations: iters, warnings };
    verify_design_identities(sys, weights, &gains, mu_c1)?;
    Ok(gains)
}

/// The two stacked first-order optimality identities:
///   xᵀW̄_x x + vᵀW̄_v v + V̄_xᵀ(Āx + μ_c1 B̄_u v) = 0 with v = K̄x, V̄_x = 2P̄x;
///   2W̄_vK̄ + 2μ_c1 B̄_uᵀP̄ = 0.
fn verify_design_identities(
    sys: &MasSystem,
    weights: &DesignWeights,
    gains: &GainSet,
    mu_c1: f64,
) -> Result<()> {
    let w_v_bar = block_diag(&weights.w_v);
    let b_u_bar = block_diag(&sys.agents.iter().map(|a| a.b_u.clone()).collect::<Vec<_>>());
    let k_bar = gains.k_bar();
    let p_bar = gains.p_bar();
    let grad = &w_v_bar * &k_bar * 2.0 + b_u_bar.transpose() * &p_bar * (2.0 * mu_c1);
    let grad_norm = frob_norm(&grad);
    if grad_norm > 1e-9 {
        return Err(Error::NumericalFault(format!(
            "stationarity identity violated: ‖2W̄_vK̄ + 2μ_c1B̄_uᵀP̄‖ = {grad_norm:.3e}"
        )));
    }
    let w_x_bar = block_diag(&weights.w_x);
    let a_bar = block_diag(&sys.agents.iter().map(|a| a.a.clone()).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(0xd5);
    let dim = sys.n_agents() * sys.dims.n_x;
    for _ in 0..32 {
        let x = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
        let v = &k_bar * &x;
        let vx = &p_bar * &x * 2.0;
        let drift = &a_bar * &x + &b_u_bar * &v * mu_c1;
        let value = x.dot(&(&w_x_bar * &x)) + v.dot(&(&w_v_bar * &v)) + vx.dot(&drift);
        if value.abs() > 1e-8 * (1.0 + x.norm_squared()) {
            return Err(Error::NumericalFault(format!(
                "dissipation identity violated: value = {value:.3e}"
            )));
        }
    }
    Ok(())
}

/// How the interconnection nonlinearity enters the validation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QvForm {
    /// Scalar cone bound: a_f · max_i(γ_f,i γ_cz,i) · (A_a ⊗ I)ᵀ(A_a ⊗ I).
    #[default]
    GammaScalar,
    /// Structured bound keeping C̄_z explicit: a_f (A_a ⊗ I)ᵀ C̄_zᵀ Γ_f C̄_z (A_a ⊗ I).
    CzExplicit,
}

/// Assemble the trigger-independent validation matrix
///   Q̄_v = W̄_x − a_f·Γ − (1/a_f)·P̄B̄_fB̄_fᵀP̄
///         + K̄ᵀ[W̄_v + 2W̄_vĒ_c − a_e·W̄_v((H_c²/μ_c1²)⊗I)W̄_v]K̄
/// (symmetrized) and report whether it is positive definite.
pub fn build_validation_matrix(
    sys: &MasSystem,
    weights: &DesignWeights,
    gains: &GainSet,
    hc: &DMatrix<f64>,
    mu_c1: f64,
    form: QvForm,
) -> Result<(DMatrix<f64>, bool)> {
    let n = sys.n_agents();
    let (n_x, n_u) = (sys.dims.n_x, sys.dims.n_u);
    let id_x = DMatrix::identity(n_x, n_x);
    let id_u = DMatrix::identity(n_u, n_u);

    let w_x_bar = block_diag(&weights.w_x);
    let w_v_bar = block_diag(&weights.w_v);
    let p_bar = gains.p_bar();
    let k_bar = gains.k_bar();
    let b_f_bar = block_diag(&sys.agents.iter().map(|a| a.b_f.clone()).collect::<Vec<_>>());

    let aa_kron = kron(&sys.agent_graph.weights, &id_x);
    let cone = match form {
        QvForm::GammaScalar => {
            let g = sys
                .agents
                .iter()
                .map(|a| a.gamma_f * a.gamma_cz)
                .fold(0.0f64, f64::max);
            aa_kron.transpose() * &aa_kron * g
        }
        QvForm::CzExplicit => {
            let cz_bar = block_diag(&sys.agents.iter().map(|a| a.c_z.clone()).collect::<Vec<_>>());
            let gamma_f = block_diag(
                &sys.agents
                    .iter()
                    .map(|a| DMatrix::identity(sys.dims.n_z, sys.dims.n_z) * a.gamma_f)
                    .collect::<Vec<_>>(),
            );
            aa_kron.transpose() * cz_bar.transpose() * gamma_f * cz_bar * aa_kron
        }
    };

    let e_c = kron(&(hc / mu_c1 - DMatrix::identity(n, n)), &id_u);
    let h_sq = kron(&((hc * hc) / (mu_c1 * mu_c1)), &id_u);
    let bracket =
        &w_v_bar + &w_v_bar * &e_c * 2.0 - &w_v_bar * &h_sq * &w_v_bar * weights.a_e;

    let q_v = &w_x_bar - cone * weights.a_f
        - (&p_bar * &b_f_bar * b_f_bar.transpose() * &p_bar) / weights.a_f
        + k_bar.transpose() * bracket * &k_bar;
    let q_v = symmetrize(&q_v);
    let (lambda_min, _) = symmetric_eig_range(&q_v);
    Ok((q_v, lambda_min > PD_TOL))
}

/// Everything trajectory-level certification needs, derived from one synthesis pass and
/// one scenario (trigger tuning, attack features, initial state).
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    /// Effective validation matrix used by the dissipation check: the assembled Q̄_v
    /// minus (κ₂/a_e)·I, so the certified decay rate already accounts for the
    /// relative trigger budget.
    #[serde(skip_serializing)]
    pub q_v_bar: DMatrix<f64>,
    pub lambda_min_qv: f64,
    pub qv_positive: bool,
    /// Decay rate ρ_v = λ_min(Q̄_v)/λ_max(P̄) of the jam-free Lyapunov envelope.
    pub rho_v: f64,
    /// Worst-case growth rate ρ_dos = 4·max_i λ_max(K_iᵀK_i)/(a_e·λ_min(P̄)) under jamming.
    pub rho_dos: f64,
    /// Effective dwell divisor: 1/τ* = 1/τ_d + t_dos/τ_f.
    pub tau_star: f64,
    /// Effective chattering offset π* = π_d + π_f·t_dos.
    pub pi_star: f64,
    /// Per-window growth allowance b_dos = exp((ρ_v + ρ_dos)·π*).
    pub b_dos: f64,
    pub b_1: f64,
    pub b_2: f64,
    /// Broadcast-error envelope constants; None when K_i is column-rank-deficient.
    pub b_3: Vec<Option<f64>>,
    /// Inter-event drift constants; None when any required b_3 is unavailable.
    pub b_4: Vec<Option<f64>>,
    /// Lower admissibility bound (ρ_v − σ)/(ρ_v + ρ_dos) on 1/τ*.
    pub condition15_lower: f64,
    /// Upper admissibility bound ρ_v/(ρ_v + ρ_dos) on 1/τ*.
    pub condition15_upper: f64,
    pub condition15_holds: bool,
    pub sigma: f64,
    pub a_e: f64,
    pub kappa_2_max: f64,
    pub t_dos: f64,
    /// Rayleigh bounds of P̄: min_i λ_min(P_i) and max_i λ_max(P_i).
    pub p_min: f64,
    pub p_max: f64,
}

/// Derive every certificate constant from the synthesis output and scenario data.
///
/// The assembled validation matrix is tightened by (κ₂/a_e)·I here, which is exactly
/// the amount the relative trigger budget feeds back into the dissipation inequality;
/// ρ_v is then λ_min of the tightened matrix over λ_max(P̄).
pub fn compute_rates(
    sys: &MasSystem,
    weights: &DesignWeights,
    gains: &GainSet,
    qv_raw: &DMatrix<f64>,
    trig: &TriggerParams,
    dos: &crate::dos::DosParams,
    x0: &DVector<f64>,
) -> Result<CertificateReport> {
    trig.validate(sys.n_agents())?;
    dos.validate()?;
    let n = sys.n_agents();
    let kappa_2_max = trig.kappa_2_max();
    let dim = qv_raw.nrows();
    let q_v_bar = qv_raw - DMatrix::identity(dim, dim) * (kappa_2_max / weights.a_e);
    let (lambda_min_qv, _) = symmetric_eig_range(&q_v_bar);
    let qv_positive = lambda_min_qv > PD_TOL;

    let (p_min, p_max) = gains.p_eig_range();
    let rho_v = lambda_min_qv / p_max;
    let k_gram_max = gains
        .k
        .iter()
        .map(|k| symmetric_eig_range(&(k.transpose() * k)).1)
        .fold(0.0f64, f64::max);
    let rho_dos = 4.0 * k_gram_max / (weights.a_e * p_min);

    // σ must undercut the certified decay rate — but only a feasible design claims
    // one. An indefinite validation matrix withdraws every σ-dependent constant
    // instead of rejecting the run, so infeasible designs can still be simulated
    // with their guarantees marked inapplicable.
    if qv_positive && rho_v <= trig.sigma {
        return Err(Error::InvalidSigma(format!(
            "sigma = {} must lie strictly below rho_v = {rho_v}",
            trig.sigma
        )));
    }

    let inv_tau_star = 1.0 / dos.tau_d + trig.t_dos / dos.tau_f;
    let tau_star = 1.0 / inv_tau_star;
    let pi_star = dos.pi_d + dos.pi_f * trig.t_dos;
    let b_dos = ((rho_v + rho_dos) * pi_star).exp();

    let kappa_1_sum: f64 = trig.kappa_1.iter().sum();
    let (b_1, b_2) = if qv_positive {
        (
            (p_max / p_min) * x0.norm_squared()
                + kappa_1_sum / (weights.a_e * p_min * (rho_v - trig.sigma)),
            kappa_1_sum / (weights.a_e * (rho_v - trig.sigma)),
        )
    } else {
        (f64::NAN, f64::NAN)
    };

    let b_3: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if !qv_positive {
                return None;
            }
            let gram = gains.k[i].transpose() * &gains.k[i];
            let (lo, hi) = symmetric_eig_range(&gram);
            if lo > 1e-14 * hi.max(1.0) {
                Some((trig.kappa_1[i] + b_1 * trig.kappa_2[i]) / lo)
            } else {
                None
            }
        })
        .collect();

    let a_a_norm = spectral_norm(&sys.agent_graph.weights);
    let b_4: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let ag = &sys.agents[i];
            let l_ii: f64 = sys.control_graph.weights.row(i).iter().sum();
            let s_i = sys.pinning[i];
            let bk = &ag.b_u * &gains.k[i];
            let bk_norm = spectral_norm(&bk);
            let a_e_i = &ag.a + &bk * (l_ii + s_i);
            let drift = (spectral_norm(&a_e_i)
                + l_ii * bk_norm
                + spectral_norm(&ag.b_f) * a_a_norm * (ag.gamma_f * ag.gamma_cz).sqrt())
                * b_1.sqrt();
            let mut neighbour_sum = 0.0;
            for j in 0..n {
                let w = sys.control_graph.weights[(i, j)];
                if w != 0.0 {
                    neighbour_sum += w * b_3[j]?.sqrt();
                }
            }
            let own = (l_ii + s_i) * b_3[i]?.sqrt();
            Some(drift + (neighbour_sum + own) * bk_norm)
        })
        .collect();

    let condition15_lower = (rho_v - trig.sigma) / (rho_v + rho_dos);
    let condition15_upper = rho_v / (rho_v + rho_dos);
    let condition15_holds =
        qv_positive && condition15_lower < inv_tau_star && inv_tau_star < condition15_upper;

    Ok(CertificateReport {
        q_v_bar,
        lambda_min_qv,
        qv_positive,
        rho_v,
        rho_dos,
        tau_star,
        pi_star,
        b_dos,
        b_1,
        b_2,
        b_3,
        b_4,
        condition15_lower,
        condition15_upper,
        condition15_holds,
        sigma: trig.sigma,
        a_e: weights.a_e,
        kappa_2_max,
        t_dos: trig.t_dos,
        p_min,
        p_max,
    })
}
