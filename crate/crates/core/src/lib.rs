//! State-space electromagnetic transient (EMT) simulation of power systems
//! with a high-order differential transformation (DT) integrator.
//!
//! Every state of the network (inductor currents, capacitor voltages), the
//! voltage-behind-reactance synchronous machines and their governor and
//! exciter controls is expanded per step into a truncated Taylor series whose
//! coefficients are produced by the recurrences in [`dt_algebra`]. The series
//! is then evaluated at a step size well beyond what classical explicit
//! integrators tolerate. RK4, modified Euler and implicit trapezoidal
//! integrators share the same model and serve as references.
//!
//! Typical use:
//!
//! ```no_run
//! use dtemt::scenario::{self, Scenario};
//! use dtemt::solvers::{simulate, Method, SolverConfig};
//!
//! let config = scenario::shipped_two_area();
//! let Scenario { system, x0, .. } = Scenario::build(&config, 0.0).unwrap();
//! let run = simulate(&system, &x0, &SolverConfig::new(Method::Dt { order: 20 }, 1e-4, 0.0, 3.0)).unwrap();
//! println!("{} samples in {:.3} s", run.len(), run.wall_time);
//! ```

pub mod controls;
pub mod dt_algebra;
pub mod error;
pub mod machine;
pub mod network;
pub mod scenario;
pub mod solvers;
pub mod system;

pub use error::{Error, Result};

/// Three-phase quantity, phases a, b, c.
pub type Abc = [f64; 3];
