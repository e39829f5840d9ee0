//! Stochastic distributed regularized splitting for composite convex
//! problems `min_x sum_i f_i(x) + g_i(x)`.
//!
//! Each agent holds a nonsmooth `f_i` (used through its prox) and a smooth
//! `g_i` (used through its gradient). The last agent acts as the server;
//! every iteration it takes one prox step, then a random subset of users
//! takes regularized prox steps while the rest keep their previous state.
//!
//! ```
//! use splitstoch::{problems, ParticipationPolicy, Solver, SolverConfig};
//!
//! let toy = problems::toy1d();
//! let config = SolverConfig::with_defaults(&toy.problem, 1.0, 0.5, ParticipationPolicy::full())
//!     .unwrap()
//!     .with_max_iters(500);
//! let out = Solver::new(&toy.problem, &config).unwrap().run(None).unwrap();
//! assert!((out.state.x[0] - 1.0).abs() < 1e-6);
//! ```

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod problems;
pub mod prox;
pub mod sampling;
pub mod solver;
pub mod types;

pub use error::{Error, Result, WindowKind};
pub use oracle::{AgentSpec, Hyperplane, LogisticBlock, Nonsmooth, ProxOracle, Smooth, SmoothOracle};
pub use sampling::{ParticipationPolicy, SampleDraw};
pub use solver::{RunOutput, Solver, StepReport, VirtualIterate};
pub use types::{
    validate_config, ErgodicAverages, IterateState, OptimalityCertificate, ProblemInstance, SolverConfig,
    TraceRecord, ValidationReport,
};
