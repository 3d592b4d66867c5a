//! Simulation and numerical verification for α-delayed Yule processes.
//!
//! A particle at height `k` of the binary tree lives for `α^-k T_v`, with
//! `{T_v}` i.i.d. Exp(1) and shared across all `α`. The crate provides the
//! exact state types ([`tree`]), an event-driven simulator ([`engine`]),
//! samplers and closed forms for the gauge martingale limits ([`limits`],
//! [`analytic`]), the generator and its quotient chain ([`generator`]), the
//! statistical tests used to check all of these ([`stats`]), and the
//! acceptance suite ([`verify`]).

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod engine;
pub mod error;
pub mod field;
pub mod generator;
pub mod io;
pub mod limits;
pub mod numeric;
pub mod stats;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use tree::{EvolutionarySequence, EvolutionarySet, GaugeParams, Vertex, DEPTH_MAX};
