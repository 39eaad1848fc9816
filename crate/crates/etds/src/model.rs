//! Agent dynamics, layer graphs and the interconnected multiagent system.
//!
//! Every agent follows ẋ_i = A_i x_i + B_u,i u_i + B_f,i f_i(z_i, t), where the
//! interconnection signal z_i = C_z,i Σ_j a^a_ij x_j aggregates neighbour states on
//! the agent layer and the control input u_i is produced on a separate control layer.

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eig_range, spectral_norm};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Shared state/input/nonlinearity/interconnection dimensions across agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_f: usize,
    pub n_z: usize,
}

/// Catalog of interconnection nonlinearities, identified by name plus parameters.
///
/// Each entry acts elementwise on z (so n_f = n_z except for `zero`) and is globally
/// Lipschitz; `lipschitz()` returns the smallest constant g with ‖f(z,t)‖ ≤ g‖z‖.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// f ≡ 0.
    Zero,
    /// f_j = gain · tanh(z_j).
    Tanh { gain: f64 },
    /// f_j = clamp(gain · z_j, -limit, limit).
    Saturation { gain: f64, limit: f64 },
    /// f_j = gain · sin(freq · z_j) · cos(time_freq · t).
    Sinusoid { gain: f64, freq: f64, time_freq: f64 },
}

impl Nonlinearity {
    /// Evaluate f(z, t).
    pub fn eval(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        match *self {
            Nonlinearity::Zero => DVector::zeros(z.len()),
            Nonlinearity::Tanh { gain } => z.map(|v| gain * v.tanh()),
            Nonlinearity::Saturation { gain, limit } => z.map(|v| (gain * v).clamp(-limit, limit)),
            Nonlinearity::Sinusoid { gain, freq, time_freq } => {
                let carrier = (time_freq * t).cos();
                z.map(|v| gain * (freq * v).sin() * carrier)
            }
        }
    }

    /// Global Lipschitz constant of z ↦ f(z, t), uniform in t.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Tanh { gain } => gain.abs(),
            Nonlinearity::Saturation { gain, .. } => gain.abs(),
            Nonlinearity::Sinusoid { gain, freq, .. } => (gain * freq).abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match *self {
            Nonlinearity::Zero => true,
            Nonlinearity::Tanh { gain } => gain.is_finite(),
            Nonlinearity::Saturation { gain, limit } => gain.is_finite() && limit.is_finite() && limit >= 0.0,
            Nonlinearity::Sinusoid { gain, freq, time_freq } => {
                gain.is_finite() && freq.is_finite() && time_freq.is_finite()
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::Validation("nonlinearity parameters must be finite".into()))
        }
    }
}

/// One agent's plant: state map, input map, nonlinearity map and interconnection output.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDynamics {
    pub a: DMatrix<f64>,
    pub b_u: DMatrix<f64>,
    pub b_f: DMatrix<f64>,
    pub c_z: DMatrix<f64>,
    pub nonlinearity: Nonlinearity,
    /// Quadratic cone constant: ‖f(z,t)‖² ≤ gamma_f ‖z‖².
    pub gamma_f: f64,
    /// Interconnection output bound: λ_max(C_zᵀ C_z) ≤ gamma_cz.
    pub gamma_cz: f64,
}

impl AgentDynamics {
    fn validate(&self, dims: Dims, idx: usize) -> Result<()> {
        let shape_err = |what: &str, got: (usize, usize), want: (usize, usize)| {
            Err(Error::DimensionMismatch(format!(
                "agent {idx}: {what} is {}x{}, expected {}x{}",
                got.0, got.1, want.0, want.1
            )))
        };
        if self.a.shape() != (dims.n_x, dims.n_x) {
            return shape_err("A", self.a.shape(), (dims.n_x, dims.n_x));
        }
        if self.b_u.shape() != (dims.n_x, dims.n_u) {
            return shape_err("B_u", self.b_u.shape(), (dims.n_x, dims.n_u));
        }
        if self.b_f.shape() != (dims.n_x, dims.n_f) {
            return shape_err("B_f", self.b_f.shape(), (dims.n_x, dims.n_f));
        }
        if self.c_z.shape() != (dims.n_z, dims.n_x) {
            return shape_err("C_z", self.c_z.shape(), (dims.n_z, dims.n_x));
        }
        let all = self
            .a
            .iter()
            .chain(self.b_u.iter())
            .chain(self.b_f.iter())
            .chain(self.c_z.iter());
        for v in all {
            if !v.is_finite() {
                return Err(Error::Validation(format!("agent {idx}: non-finite matrix entry")));
            }
        }
        self.nonlinearity.validate()?;
        if !(self.gamma_f >= 0.0) || !(self.gamma_cz >= 0.0) {
            return Err(Error::Validation(format!(
                "agent {idx}: gamma_f and gamma_cz must be nonnegative"
            )));
        }
        // The declared cone constants must actually cover the catalog entry and C_z.
        let lip2 = self.nonlinearity.lipschitz().powi(2);
        if lip2 > self.gamma_f * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "agent {idx}: gamma_f = {} does not cover the nonlinearity's squared Lipschitz constant {}",
                self.gamma_f, lip2
            )));
        }
        let cz_gain = spectral_norm(&self.c_z).powi(2);
        if cz_gain > self.gamma_cz * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Validation(format!(
                "agent {idx}: gamma_cz = {} is below lambda_max(C_z' C_z) = {}",
                self.gamma_cz, cz_gain
            )));
        }
        if !matches!(self.nonlinearity, Nonlinearity::Zero) && dims.n_f != dims.n_z {
            return Err(Error::DimensionMismatch(format!(
                "agent {idx}: elementwise nonlinearity requires n_f = n_z (got {} and {})",
                dims.n_f, dims.n_z
            )));
        }
        Ok(())
    }
}

/// Weighted adjacency of one network layer: nonnegative entries, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub weights: DMatrix<f64>,
}

impl LayerGraph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::DimensionMismatch("adjacency matrix must be square".into()));
        }
        for i in 0..weights.nrows() {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("adjacency diagonal must be zero (node {i})")));
            }
            for j in 0..weights.ncols() {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Validation(format!(
                        "adjacency weight ({i},{j}) must be finite and nonnegative"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }
}

/// Graph Laplacian L = D − W with D the diagonal of row sums.
pub fn build_laplacian(graph: &LayerGraph) -> DMatrix<f64> {
    let n = graph.n();
    let mut l = -graph.weights.clone();
    for i in 0..n {
        let deg: f64 = graph.weights.row(i).iter().sum();
        l[(i, i)] = deg;
    }
    l
}

/// Control-layer coupling matrix H_c = L_c + diag(s) and its smallest eigenvalue μ_c1.
///
/// The stabilization design requires H_c symmetric positive definite, which holds
/// exactly when every connected component of the control graph contains a pinned node.
pub fn build_hc(control: &LayerGraph, pinning: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let n = control.n();
    if pinning.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "pinning vector has {} entries for {} agents",
            pinning.len(),
            n
        )));
    }
    for (i, &s) in pinning.iter().enumerate() {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::Validation(format!("pinning gain {i} must be finite and nonnegative")));
        }
    }
    let asym = (&control.weights - control.weights.transpose()).abs().max();
    if asym > 1e-12 {
        return Err(Error::InfeasibleTopology(
            "control-layer adjacency must be symmetric".into(),
        ));
    }
    let mut h = build_laplacian(control);
    for i in 0..n {
        h[(i, i)] += pinning[i];
    }
    let (mu_c1, _) = symmetric_eig_range(&h);
    if mu_c1 <= 1e-10 {
        return Err(Error::InfeasibleTopology(format!(
            "H_c is not positive definite (lambda_min = {mu_c1:.3e}); every component needs a pinned node"
        )));
    }
    Ok((h, mu_c1))
}

/// The interconnected multiagent system: N agents plus the two network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MasSystem {
    pub agents: Vec<AgentDynamics>,
    pub agent_graph: LayerGraph,
    pub control_graph: LayerGraph,
    /// Pinning gains s^c_i ≥ 0 on the control layer.
    pub pinning: Vec<f64>,
    pub dims: Dims,
}

impl MasSystem {
    pub fn new(
        agents: Vec<AgentDynamics>,
        agent_graph: LayerGraph,
        control_graph: LayerGraph,
        pinning: Vec<f64>,
        dims: Dims,
    ) -> Result<Self> {
        let n = agents.len();
        if n == 0 {
            return Err(Error::Validation("at least one agent is required".into()));
        }
        if dims.n_x == 0 || dims.n_u == 0 {
            return Err(Error::Validation("n_x and n_u must be positive".into()));
        }
        if agent_graph.n() != n || control_graph.n() != n || pinning.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "graph/pinning sizes must match the {n} agents"
            )));
        }
        for (i, ag) in agents.iter().enumerate() {
            ag.validate(dims, i)?;
        }
        Ok(Self { agents, agent_graph, control_graph, pinning, dims })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Pre-output aggregate Σ_j a^a_ij x_j feeding agent i's interconnection.
    pub fn interconnection_pre(&self, i: usize, states: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dims.n_x);
        for (j, xj) in states.iter().enumerate() {
            let w = self.agent_graph.weights[(i, j)];
            if w != 0.0 {
                acc.axpy(w, xj, 1.0);
            }
        }
        acc
    }

    /// Interconnection signal z_i = C_z,i Σ_j a^a_ij x_j.
    pub fn eval_interconnection(&self, i: usize, states: &[DVector<f64>]) -> DVector<f64> {
        &self.agents[i].c_z * self.interconnection_pre(i, states)
    }

    /// Right-hand side ẋ_i = A_i x_i + B_u,i u_i + B_f,i f_i(z_i, t).
    pub fn eval_agent_derivative(
        &self,
        i: usize,
        x_i: &DVector<f64>,
        u_i: &DVector<f64>,
        z_i: &DVector<f64>,
        t: f64,
    ) -> Result<DVector<f64>> {
        let ag = &self.agents[i];
        let mut dx = &ag.a * x_i;
        dx.gemv(1.0, &ag.b_u, u_i, 1.0);
        // A vanishing nonlinearity contributes nothing, whatever shape B_f has.
        if !matches!(ag.nonlinearity, Nonlinearity::Zero) {
            let f = ag.nonlinearity.eval(z_i, t);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFault(format!(
                    "agent {i}: nonlinearity produced a non-finite value at t = {t}"
                )));
            }
            dx.gemv(1.0, &ag.b_f, &f, 1.0);
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn path3() -> LayerGraph {
        LayerGraph::new(dmatrix![
            0.0, 1.0, 0.0;
            1.0, 0.0, 1.0;
            0.0, 1.0, 0.0
        ])
        .unwrap()
    }

    /// Independent construction: accumulate degrees entry by entry.
    fn laplacian_oracle(w: &DMatrix<f64>) -> DMatrix<f64> {
        let n = w.nrows();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut deg = 0.0;
            for j in 0..n {
                deg += w[(i, j)];
                if i != j {
                    l[(i, j)] = -w[(i, j)];
                }
            }
            l[(i, i)] = deg;
        }
        l
    }

    #[test]
    fn laplacian_single_node() {
        let g = LayerGraph::new(DMatrix::zeros(1, 1)).unwrap();
        let l = build_laplacian(&g);
        assert_eq!(l, DMatrix::zeros(1, 1));
    }

    #[test]
    fn laplacian_path_matches_oracle() {
        let g = path3();
        let l = build_laplacian(&g);
        let expect = dmatrix![
            1.0, -1.0, 0.0;
            -1.0, 2.0, -1.0;
            0.0, -1.0, 1.0
        ];
        assert_eq!(l, expect);
        assert_eq!(l, laplacian_oracle(&g.weights));
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = path3();
        let l = build_laplacian(&g);
        for i in 0..3 {
            let s: f64 = l.row(i).iter().sum();
            assert!(s.abs() <= 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn hc_two_agents_single_pin() {
        let g = LayerGraph::new(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let (h, mu) = build_hc(&g, &[1.0, 0.0]).unwrap();
        assert_eq!(h, dmatrix![2.0, -1.0; -1.0, 1.0]);
        let expect = (3.0 - 5.0f64.sqrt()) / 2.0;
        assert!((mu - expect).abs() < 1e-12, "mu_c1 = {mu}, want {expect}");
    }

    #[test]
    fn hc_rejects_unpinned_graph() {
        let g = LayerGraph::new(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let err = build_hc(&g, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTopology(_)), "got {err:?}");
    }

    #[test]
    fn hc_rejects_isolated_unpinned_component() {
        // Two disconnected nodes, only the first pinned.
        let g = LayerGraph::new(DMatrix::zeros(2, 2)).unwrap();
        let err = build_hc(&g, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTopology(_)));
    }

    fn two_agent_system(a12: f64) -> MasSystem {
        let dims = Dims { n_x: 2, n_u: 2, n_f: 2, n_z: 2 };
        let agent = AgentDynamics {
            a: DMatrix::zeros(2, 2),
            b_u: DMatrix::identity(2, 2),
            b_f: DMatrix::zeros(2, 2),
            c_z: DMatrix::identity(2, 2),
            nonlinearity: Nonlinearity::Zero,
            gamma_f: 0.0,
            gamma_cz: 1.0,
        };
        let agraph = LayerGraph::new(dmatrix![0.0, a12; a12, 0.0]).unwrap();
        let cgraph = LayerGraph::new(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        MasSystem::new(vec![agent.clone(), agent], agraph, cgraph, vec![1.0, 0.0], dims).unwrap()
    }

    #[test]
    fn interconnection_weights_neighbour_states() {
        let sys = two_agent_system(2.0);
        let x1 = DVector::from_vec(vec![0.0, 0.0]);
        let x2 = DVector::from_vec(vec![3.0, -1.0]);
        let z1 = sys.eval_interconnection(0, &[x1, x2.clone()]);
        assert_eq!(z1, &x2 * 2.0);
    }

    #[test]
    fn interconnection_zero_states_zero_signal() {
        let sys = two_agent_system(2.0);
        let zero = DVector::zeros(2);
        let z = sys.eval_interconnection(0, &[zero.clone(), zero.clone()]);
        assert_eq!(z, zero);
    }

    #[test]
    fn interconnection_is_linear() {
        let sys = two_agent_system(1.5);
        let x = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![-0.5, 0.25])];
        let y = vec![DVector::from_vec(vec![0.1, -3.0]), DVector::from_vec(vec![2.0, 1.0])];
        let (al, be) = (0.7, -1.3);
        let mixed: Vec<_> = x.iter().zip(&y).map(|(a, b)| a * al + b * be).collect();
        let lhs = sys.eval_interconnection(1, &mixed);
        let rhs = sys.eval_interconnection(1, &x) * al + sys.eval_interconnection(1, &y) * be;
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn derivative_scalar_sine_case() {
        let dims = Dims { n_x: 1, n_u: 1, n_f: 1, n_z: 1 };
        let agent = AgentDynamics {
            a: dmatrix![0.0],
            b_u: dmatrix![1.0],
            b_f: dmatrix![1.0],
            c_z: dmatrix![1.0],
            nonlinearity: Nonlinearity::Sinusoid { gain: 1.0, freq: 1.0, time_freq: 0.0 },
            gamma_f: 1.0,
            gamma_cz: 1.0,
        };
        let g = LayerGraph::new(DMatrix::zeros(1, 1)).unwrap();
        let sys =
            MasSystem::new(vec![agent], g.clone(), g, vec![1.0], dims).unwrap();
        let dx = sys
            .eval_agent_derivative(
                0,
                &DVector::from_vec(vec![7.0]),
                &DVector::from_vec(vec![3.0]),
                &DVector::from_vec(vec![std::f64::consts::FRAC_PI_2]),
                123.4,
            )
            .unwrap();
        assert!((dx[0] - 4.0).abs() < 1e-12, "dx = {}", dx[0]);
    }

    #[test]
    fn gamma_f_must_cover_catalog_entry() {
        let dims = Dims { n_x: 1, n_u: 1, n_f: 1, n_z: 1 };
        let agent = AgentDynamics {
            a: dmatrix![0.0],
            b_u: dmatrix![1.0],
            b_f: dmatrix![1.0],
            c_z: dmatrix![1.0],
            nonlinearity: Nonlinearity::Tanh { gain: 2.0 },
            gamma_f: 1.0, // needs at least 4
            gamma_cz: 1.0,
        };
        let g = LayerGraph::new(DMatrix::zeros(1, 1)).unwrap();
        let err = MasSystem::new(vec![agent], g.clone(), g, vec![1.0], dims).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn nonlinearity_bounds_hold_pointwise() {
        let entries = [
            Nonlinearity::Zero,
            Nonlinearity::Tanh { gain: 0.8 },
            Nonlinearity::Saturation { gain: 1.2, limit: 0.5 },
            Nonlinearity::Sinusoid { gain: 0.6, freq: 2.0, time_freq: 1.0 },
        ];
        for nl in entries {
            let lip = nl.lipschitz();
            for k in -20..=20 {
                let z = DVector::from_vec(vec![0.13 * k as f64, -0.07 * k as f64]);
                for t in [0.0, 0.37, 2.0] {
                    let f = nl.eval(&z, t);
                    assert!(
                        f.norm() <= lip * z.norm() + 1e-12,
                        "{nl:?} violates its Lipschitz bound"
                    );
                }
            }
        }
    }
}
