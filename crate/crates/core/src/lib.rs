//! Tube-based predictive stability filter toolkit.
//!
//! The crate is organized around three stages:
//!
//! 1. **Offline design** ([`filter::design_filter`]): given discrete-time linear
//!    dynamics, quadratic stage costs, and polytopic state/input/disturbance
//!    bounds, compute the feedback gain, terminal cost, tightened constraint
//!    sequence, and robust invariant terminal set that make the online filter
//!    recursively feasible under any bounded disturbance.
//! 2. **Online filtering** ([`filter::FilterDesign::filter_step`]): at each
//!    step, project a proposed input onto the set of inputs that keep the
//!    system inside its constraints and decrease an implicit Lyapunov
//!    function, then advance a warmstart sequence that stays feasible by
//!    construction.
//! 3. **Simulation and reporting** ([`sim`], [`report`]): run the filtered
//!    loop against the design model or a nonlinear vehicle plant, log
//!    per-step traces, and render summary plots.
//!
//! Numerical building blocks (polytope algebra with support-function queries,
//! Riccati/Lyapunov solvers, a dense LP simplex, and an interior-point QCQP
//! solver) are self-contained; there are no external solver dependencies.

pub mod config;
pub mod control_math;
pub mod filter;
pub mod plant;
pub mod polytope;
pub mod report;
pub mod sim;
pub mod solver;
