//! Numerical laboratory for stochastic inertial gradient dynamics with
//! viscous damping γ(t), implicit Hessian-driven damping β(t) and a
//! time-decaying diffusion term:
//!
//! ```text
//! dX = V dt
//! dV = −γ(t) V dt − ∇f(X + β(t) V) dt + σ(t, X + β(t) V) dW
//! ```
//!
//! The crate simulates these dynamics with Euler–Maruyama, builds and
//! verifies Lyapunov coefficient systems, and measures convergence rates
//! over seeded, thread-count-independent Monte Carlo ensembles.

pub mod error;
pub mod interp;
pub mod quad;
pub mod special;
pub mod rng;

pub mod schedules;
pub mod problems;
pub mod lyapunov;
pub mod dynamics;
pub mod montecarlo;
pub mod harness;

pub use error::{Error, Result};
pub use problems::{Objective, ProblemSpec};
pub use schedules::{
    DampingSchedule, DerivedQuantity, DiffusionSchedule, Evaluation, GeometricSchedule, ScheduleValue,
};
