//! Scenario files: a single TOML document describing one experiment end to end.
//!
//! The format is versioned ("etds-scenario/1") and strict: unknown keys are
//! rejected so a typo cannot silently change an experiment. Matrices are written
//! as row-major arrays of rows. Optional sections get documented defaults:
//! isolated-but-pinned topology, identity design weights, zero nonlinearity, and
//! cone constants computed from the declared nonlinearity and output map.
//!
//! Every invariant is validated eagerly at load time so diagnostics point at the
//! offending field rather than at a later solver failure.

use crate::dos::{DoSSchedule, DosParams};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::model::{AgentDynamics, Dims, LayerGraph, MasSystem, Nonlinearity};
use crate::sim::validate_step_size;
use crate::synthesis::{DesignWeights, QvForm};
use crate::trigger::TriggerParams;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Schema tag every scenario file must carry.
pub const SCHEMA: &str = "etds-scenario/1";

/// A fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub sys: MasSystem,
    pub weights: DesignWeights,
    pub qv_form: QvForm,
    pub trigger: TriggerParams,
    pub dos_params: DosParams,
    /// (onset, duration) pairs; may be empty for jam-free runs.
    pub attacks: Vec<(f64, f64)>,
    pub x0: DVector<f64>,
    pub dt: f64,
    pub t_end: f64,
}

impl Scenario {
    /// Attack schedule over this scenario's horizon.
    pub fn schedule(&self) -> Result<DoSSchedule> {
        DoSSchedule::new(self.dos_params, self.attacks.clone(), self.t_end)
    }
}

/// Load and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let src = std::fs::read_to_string(path.as_ref())?;
    from_toml_str(&src)
}

/// Parse and validate a scenario document.
pub fn from_toml_str(src: &str) -> Result<Scenario> {
    let raw: RawScenario =
        toml::from_str(src).map_err(|e| Error::Parse(format!("scenario file: {e}")))?;
    raw.build()
}

/// Serialize a scenario back to its file form with every default materialized.
/// Loading the output reproduces the input scenario exactly.
pub fn to_toml_string(sc: &Scenario) -> Result<String> {
    let raw = RawScenario::from_scenario(sc);
    toml::to_string_pretty(&raw).map_err(|e| Error::Parse(format!("serializing scenario: {e}")))
}

/// Write a scenario file.
pub fn write_scenario(sc: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), to_toml_string(sc)?)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: String,
    id: String,
    sim: RawSim,
    trigger: RawTrigger,
    #[serde(default)]
    design: RawDesign,
    #[serde(default)]
    dos: RawDos,
    #[serde(default)]
    topology: Option<RawTopology>,
    agents: Vec<RawAgent>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: f64,
    t_end: f64,
    /// Stacked initial state, length n_agents · n_x.
    x0: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrigger {
    kappa_1: Vec<f64>,
    kappa_2: Vec<f64>,
    sigma: f64,
    t_dos: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDesign {
    a_e: f64,
    a_f: f64,
    qv_form: QvForm,
    /// Per-agent state weight matrices; identity when omitted.
    w_x: Option<Vec<Vec<Vec<f64>>>>,
    /// Per-agent input weight matrices; identity when omitted.
    w_v: Option<Vec<Vec<Vec<f64>>>>,
}

impl Default for RawDesign {
    fn default() -> Self {
        Self { a_e: 0.5, a_f: 1.0, qv_form: QvForm::default(), w_x: None, w_v: None }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawDos {
    pi_f: f64,
    tau_f: f64,
    pi_d: f64,
    tau_d: f64,
    /// (onset, duration) pairs.
    attacks: Vec<(f64, f64)>,
}

impl Default for RawDos {
    fn default() -> Self {
        Self { pi_f: 1.0, tau_f: 1.0, pi_d: 1.0, tau_d: 2.0, attacks: Vec::new() }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    agent_adjacency: Vec<Vec<f64>>,
    control_adjacency: Vec<Vec<f64>>,
    pinning: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    a: Vec<Vec<f64>>,
    b_u: Vec<Vec<f64>>,
    /// Defaults to a single zero column.
    #[serde(default)]
    b_f: Option<Vec<Vec<f64>>>,
    /// Defaults to a single zero row.
    #[serde(default)]
    c_z: Option<Vec<Vec<f64>>>,
    /// Defaults to the squared Lipschitz constant of the nonlinearity.
    #[serde(default)]
    gamma_f: Option<f64>,
    /// Defaults to the squared spectral norm of c_z.
    #[serde(default)]
    gamma_cz: Option<f64>,
    /// Defaults to the zero nonlinearity.
    #[serde(default)]
    nonlinearity: Option<Nonlinearity>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Validation(format!("{what}: matrix must be nonempty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation(format!("{what}: rows must all have length {ncols}")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl RawScenario {
    fn build(self) -> Result<Scenario> {
        if self.schema != SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema {:?}; this build reads {SCHEMA:?}",
                self.schema
            )));
        }
        if self.agents.is_empty() {
            return Err(Error::Validation("agents: at least one agent is required".into()));
        }
        let n = self.agents.len();

        let mut agents = Vec::with_capacity(n);
        for (i, raw) in self.agents.iter().enumerate() {
            let tag = |field: &str| format!("agents[{i}].{field}");
            let a = rows_to_matrix(&raw.a, &tag("a"))?;
            let n_x = a.nrows();
            let b_u = rows_to_matrix(&raw.b_u, &tag("b_u"))?;
            let b_f = match &raw.b_f {
                Some(rows) => rows_to_matrix(rows, &tag("b_f"))?,
                None => DMatrix::zeros(n_x, 1),
            };
            let c_z = match &raw.c_z {
                Some(rows) => rows_to_matrix(rows, &tag("c_z"))?,
                None => DMatrix::zeros(1, n_x),
            };
            let nonlinearity = raw.nonlinearity.clone().unwrap_or(Nonlinearity::Zero);
            let lip = nonlinearity.lipschitz();
            let gamma_f = raw.gamma_f.unwrap_or(lip * lip);
            let cz_norm = spectral_norm(&c_z);
            let gamma_cz = raw.gamma_cz.unwrap_or(cz_norm * cz_norm);
            agents.push(AgentDynamics { a, b_u, b_f, c_z, nonlinearity, gamma_f, gamma_cz });
        }
        let dims = Dims {
            n_x: agents[0].a.nrows(),
            n_u: agents[0].b_u.ncols(),
            n_f: agents[0].b_f.ncols(),
            n_z: agents[0].c_z.nrows(),
        };

        let (agent_graph, control_graph, pinning) = match &self.topology {
            Some(t) => (
                LayerGraph::new(rows_to_matrix(&t.agent_adjacency, "topology.agent_adjacency")?)?,
                LayerGraph::new(rows_to_matrix(
                    &t.control_adjacency,
                    "topology.control_adjacency",
                )?)?,
                t.pinning.clone(),
            ),
            None => (
                LayerGraph::new(DMatrix::zeros(n, n))?,
                LayerGraph::new(DMatrix::zeros(n, n))?,
                vec![1.0; n],
            ),
        };
        let sys = MasSystem::new(agents, agent_graph, control_graph, pinning, dims)?;

        let weight_list = |given: &Option<Vec<Vec<Vec<f64>>>>, dim: usize, what: &str| {
            match given {
                Some(list) => {
                    if list.len() != n {
                        return Err(Error::Validation(format!(
                            "design.{what}: expected {n} matrices, got {}",
                            list.len()
                        )));
                    }
                    list.iter()
                        .enumerate()
                        .map(|(i, rows)| rows_to_matrix(rows, &format!("design.{what}[{i}]")))
                        .collect::<Result<Vec<_>>>()
                }
                None => Ok(vec![DMatrix::identity(dim, dim); n]),
            }
        };
        let weights = DesignWeights {
            w_x: weight_list(&self.design.w_x, dims.n_x, "w_x")?,
            w_v: weight_list(&self.design.w_v, dims.n_u, "w_v")?,
            a_e: self.design.a_e,
            a_f: self.design.a_f,
        };
        weights.validate(&sys).map_err(|e| prefix("design", e))?;

        let trigger = TriggerParams {
            kappa_1: self.trigger.kappa_1.clone(),
            kappa_2: self.trigger.kappa_2.clone(),
            sigma: self.trigger.sigma,
            t_dos: self.trigger.t_dos,
        };
        trigger.validate(n).map_err(|e| prefix("trigger", e))?;

        let dos_params = DosParams {
            pi_f: self.dos.pi_f,
            tau_f: self.dos.tau_f,
            pi_d: self.dos.pi_d,
            tau_d: self.dos.tau_d,
        };
        dos_params.validate().map_err(|e| prefix("dos", e))?;

        if !(self.sim.t_end > 0.0 && self.sim.t_end.is_finite()) {
            return Err(Error::Validation(format!(
                "sim.t_end must be positive and finite (got {})",
                self.sim.t_end
            )));
        }
        // Validates onset ordering and window disjointness over the horizon.
        DoSSchedule::new(dos_params, self.dos.attacks.clone(), self.sim.t_end)
            .map_err(|e| prefix("dos.attacks", e))?;

        let want = n * dims.n_x;
        if self.sim.x0.len() != want {
            return Err(Error::Validation(format!(
                "sim.x0: expected {want} entries ({n} agents × {} states), got {}",
                dims.n_x,
                self.sim.x0.len()
            )));
        }
        if self.sim.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sim.x0: entries must be finite".into()));
        }
        validate_step_size(self.sim.dt, trigger.t_dos, None).map_err(|e| prefix("sim.dt", e))?;

        Ok(Scenario {
            id: self.id,
            sys,
            weights,
            qv_form: self.design.qv_form,
            trigger,
            dos_params,
            attacks: self.dos.attacks,
            x0: DVector::from_vec(self.sim.x0),
            dt: self.sim.dt,
            t_end: self.sim.t_end,
        })
    }

    fn from_scenario(sc: &Scenario) -> Self {
        RawScenario {
            schema: SCHEMA.to_string(),
            id: sc.id.clone(),
            sim: RawSim {
                dt: sc.dt,
                t_end: sc.t_end,
                x0: sc.x0.iter().copied().collect(),
            },
            trigger: RawTrigger {
                kappa_1: sc.trigger.kappa_1.clone(),
                kappa_2: sc.trigger.kappa_2.clone(),
                sigma: sc.trigger.sigma,
                t_dos: sc.trigger.t_dos,
            },
            design: RawDesign {
                a_e: sc.weights.a_e,
                a_f: sc.weights.a_f,
                qv_form: sc.qv_form,
                w_x: Some(sc.weights.w_x.iter().map(matrix_to_rows).collect()),
                w_v: Some(sc.weights.w_v.iter().map(matrix_to_rows).collect()),
            },
            dos: RawDos {
                pi_f: sc.dos_params.pi_f,
                tau_f: sc.dos_params.tau_f,
                pi_d: sc.dos_params.pi_d,
                tau_d: sc.dos_params.tau_d,
                attacks: sc.attacks.clone(),
            },
            topology: Some(RawTopology {
                agent_adjacency: matrix_to_rows(&sc.sys.agent_graph.weights),
                control_adjacency: matrix_to_rows(&sc.sys.control_graph.weights),
                pinning: sc.sys.pinning.clone(),
            }),
            agents: sc
                .sys
                .agents
                .iter()
                .map(|ag| RawAgent {
                    a: matrix_to_rows(&ag.a),
                    b_u: matrix_to_rows(&ag.b_u),
                    b_f: Some(matrix_to_rows(&ag.b_f)),
                    c_z: Some(matrix_to_rows(&ag.c_z)),
                    gamma_f: Some(ag.gamma_f),
                    gamma_cz: Some(ag.gamma_cz),
                    nonlinearity: Some(ag.nonlinearity.clone()),
                })
                .collect(),
        }
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Validation(msg) => Error::Validation(format!("{section}: {msg}")),
        Error::InvalidWeights(msg) => Error::InvalidWeights(format!("{section}: {msg}")),
        Error::InvalidStep(msg) => Error::InvalidStep(format!("{section}: {msg}")),
        other => other,
    }
}
