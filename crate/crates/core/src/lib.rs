//! Multi-agent deep Q-learning over joint actions.
//!
//! Every agent owns a dueling Q-network whose outputs cover all joint actions,
//! so the networks together yield a Q-vector at each state. A selection
//! operator (Max, Nash or Maximin) turns that Q-vector into the joint action
//! used both for acting and for bootstrapping targets. Exact value iteration
//! over small enumerable environments provides the ground truth the learned
//! policies are checked against.

pub mod envs;
pub mod error;
pub mod gamesolve;
pub mod neural;
pub mod oracle;
pub mod replay;
pub mod trainer;

pub use error::{Error, Result};
pub use gamesolve::{JointAction, PayoffTensor, SelectorKind};
