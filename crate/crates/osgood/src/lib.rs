//! Flows on the flat torus with Osgood-continuous velocity fields and
//! lower bounds for the topological entropy of their time-one maps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod entropy;
pub mod fields;
pub mod flow;
pub mod moduli;
pub mod pipeline;
pub mod torus;
