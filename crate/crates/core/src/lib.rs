#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod error;
pub mod fitness;
pub mod ga;
pub mod lattice;
pub mod neutronics;
pub mod policy;
pub mod record;
pub mod symgen;

pub use error::Error;
