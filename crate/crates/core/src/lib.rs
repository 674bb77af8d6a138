#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::manual_is_multiple_of,
    clippy::type_complexity
)]

pub mod autodiff;
pub mod error;
pub mod fock;
pub mod gkp;
pub mod lindblad;

pub use error::{Error, Result};
pub mod cli;
pub mod evaluation;
pub mod grape;
pub mod policies;
pub mod sbs;
