//! Event-triggered distributed stabilization of interconnected multiagent systems
//! under denial-of-service, with trajectory-level certification of the closed loop.
//!
//! The crate is organized as a pipeline: [`model`] describes the plant and its two
//! coupling graphs, [`synthesis`] designs per-agent gains and derives every
//! certificate constant, [`dos`] models and checks the attack signal, [`trigger`]
//! implements the broadcast logic, and the simulator and certifier replay a scenario
//! and verify each analytical bound along the trajectory.

pub mod certify;
pub mod dos;
pub mod error;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod scenario;
pub mod sim;
pub mod synthesis;
pub mod trigger;

pub use error::{Error, Result};
