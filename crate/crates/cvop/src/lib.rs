//! Learns inner and outer approximations of the weakly efficient frontier of
//! convex vector optimization problems by jointly training a primal-feasible
//! and a dual-feasible neural network against a KKT-residual loss, and
//! reports a certified per-scalarization error bound ε(w).

pub mod io;
pub mod linalg;
pub mod cli;
pub mod diagnostics;
pub mod frontier;
pub mod network;
pub mod problem;
pub mod training;
