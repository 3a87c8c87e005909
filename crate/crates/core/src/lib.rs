//! Desk-scale benchmark for memory-dependent manipulation: a deterministic
//! 2.5-D tabletop simulator, six tasks whose later phases depend on earlier
//! observations, scripted oracle solvers, a token scratchpad, dataset
//! encoders, small from-scratch policies, and a closed-loop eval harness.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod grammar;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod recurrent;
pub mod rng;
pub mod scratchpad;
pub mod sim;
pub mod task;
pub mod train;
pub mod transformer;
pub mod vocab;
